//! Quantitative checks: the stationary mean-field identity, the Volterra
//! equation for the cluster moment generating function, stationary tail
//! estimates, the resolvent bound on the total variation after time `t`, and
//! Monte Carlo of the dominating forest.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::intensity::{self, Modulus, RateMap};
use crate::kernels::Kernel;
use crate::noise::CanonicalNoise;
use crate::quad;
use crate::samplers::{SimConfig, Thinner};
use crate::state::{ImpulseState, InitialCondition};
use crate::stats;

/// Largest grid accepted by the grid-based routines.
pub const MAX_GRID_LEN: usize = 1 << 24;

/// Cell averages of a function on `[kΔ, (k+1)Δ)`, `k < len`, zero beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub step: f64,
    pub values: Vec<f64>,
}

fn check_grid(step: f64, len: usize) -> Result<()> {
    if !(step.is_finite() && step > 0.0) {
        return Err(HawkesError::param("grid.step", "must be finite and positive"));
    }
    if len == 0 || len > MAX_GRID_LEN {
        return Err(HawkesError::param("grid.len", format!("must lie in 1..={MAX_GRID_LEN}")));
    }
    Ok(())
}

impl GridFunction {
    pub fn new(step: f64, values: Vec<f64>) -> Result<Self> {
        check_grid(step, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HawkesError::Numerical("grid values must be finite".into()));
        }
        Ok(GridFunction { step, values })
    }

    pub fn zeros(step: f64, len: usize) -> Result<Self> {
        GridFunction::new(step, vec![0.0; len])
    }

    /// Exact cell averages from a tail integral `T(s) = ∫_s^∞ f`.
    pub fn from_tail(tail: impl Fn(f64) -> f64, step: f64, len: usize) -> Result<Self> {
        check_grid(step, len)?;
        let mut prev = tail(0.0);
        let values = (0..len)
            .map(|k| {
                let next = tail((k + 1) as f64 * step);
                let v = ((prev - next) / step).max(0.0);
                prev = next;
                v
            })
            .collect();
        GridFunction::new(step, values)
    }

    /// Cell averages by adaptive quadrature on every cell.
    pub fn from_fn(f: impl Fn(f64) -> f64, step: f64, len: usize, breaks: &[f64]) -> Result<Self> {
        check_grid(step, len)?;
        let values = (0..len)
            .map(|k| {
                let (a, b) = (k as f64 * step, (k + 1) as f64 * step);
                quad::integrate_with_breaks(&f, a, b, breaks, 1e-14) / step
            })
            .collect();
        GridFunction::new(step, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.step * self.values.iter().sum::<f64>()
    }

    /// `Δ Σ_{i ≥ k} v_i`.
    pub fn tail_from(&self, k: usize) -> f64 {
        self.step * self.values.iter().skip(k).sum::<f64>()
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        GridFunction {
            step: self.step,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

/// Full linear convolution of two sequences by FFT.
fn fft_convolve(planner: &mut FftPlanner<f64>, a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = (a.len() + b.len()).next_power_of_two();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fa: Vec<Complex<f64>> = a.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fa.resize(n, Complex::new(0.0, 0.0));
    let mut fb: Vec<Complex<f64>> = b.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fb.resize(n, Complex::new(0.0, 0.0));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa.iter().take(a.len() + b.len() - 1).map(|c| c.re * scale).collect()
}

/// Cell-average convolution `c_k = Δ[½ Σ_{i+j=k} f_i g_j + ½ Σ_{i+j=k−1} f_i g_j]`,
/// truncated to the length of `g`. Without truncation it multiplies masses exactly.
pub fn convolve(planner: &mut FftPlanner<f64>, f: &GridFunction, g: &GridFunction) -> GridFunction {
    let raw = fft_convolve(planner, &f.values, &g.values);
    let m = g.len();
    let values = (0..m)
        .map(|k| {
            let here = raw.get(k).copied().unwrap_or(0.0);
            let before = if k > 0 { raw[k - 1] } else { 0.0 };
            // FFT round-off can leave tiny negative values
            (0.5 * f.step * (here + before)).max(0.0)
        })
        .collect();
    GridFunction { step: g.step, values }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeumannSeries {
    /// `r = Σ_n B̃ⁿ h̃^{*n} * g̃` on the grid.
    pub r: GridFunction,
    pub terms: usize,
}

/// Stop once a term carries less than this fraction of the accumulated mass.
pub const NEUMANN_TOL: f64 = 1e-12;

/// Resolvent series by iterated FFT convolution.
pub fn neumann_series(g: &GridFunction, h: &GridFunction, b_tilde: f64) -> Result<NeumannSeries> {
    if !(b_tilde < 1.0) {
        return Err(HawkesError::Supercritical(format!("B̃ = {b_tilde} ≥ 1: the resolvent series diverges")));
    }
    if g.step != h.step {
        return Err(HawkesError::param("grid", "g̃ and h̃ must share the grid step"));
    }
    let mut planner = FftPlanner::new();
    let mut acc = g.clone();
    let mut term = g.clone();
    let mut terms = 1;
    while b_tilde > 0.0 && term.mass() > 0.0 {
        term = convolve(&mut planner, h, &term).scaled(b_tilde);
        for (a, t) in acc.values.iter_mut().zip(&term.values) {
            *a += t;
        }
        terms += 1;
        if term.mass() < NEUMANN_TOL * acc.mass() || terms > 100_000 {
            break;
        }
    }
    Ok(NeumannSeries { r: acc, terms })
}

/// Forward solution of `r = g̃ + B̃ (h̃ ⋆ r)` with the same discrete convolution,
/// solving the diagonal term implicitly.
pub fn renewal_direct(g: &GridFunction, h: &GridFunction, b_tilde: f64) -> Result<GridFunction> {
    if g.step != h.step {
        return Err(HawkesError::param("grid", "g̃ and h̃ must share the grid step"));
    }
    let m = g.len();
    let d = g.step;
    let hv = |i: usize| h.values.get(i).copied().unwrap_or(0.0);
    let diag = 1.0 - 0.5 * b_tilde * d * hv(0);
    let mut r = vec![0.0; m];
    for k in 0..m {
        let mut s = 0.0;
        for (j, rj) in r.iter().enumerate().take(k) {
            s += 0.5 * hv(k - j) * rj;
        }
        for (j, rj) in r.iter().enumerate().take(k) {
            s += 0.5 * hv(k - 1 - j) * rj;
        }
        r[k] = (g.values[k] + b_tilde * d * s) / diag;
    }
    GridFunction::new(d, r)
}

/// Grids and constants entering the total-variation bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedSetup {
    /// Envelope slope `B`.
    pub b: f64,
    /// `B̃ = B ∫ φ(h)`
    pub b_tilde: f64,
    /// `φ(g₀)` on the grid.
    pub g_tilde: GridFunction,
    /// `φ(h) / ∫ φ(h)` on the grid (unit mass on the half-line).
    pub h_tilde: GridFunction,
    /// `∫₀^∞ φ(g₀)`
    pub g_tilde_mass: f64,
}

pub fn speed_setup(
    lambda: &RateMap,
    phi: &Modulus,
    kernel: &Kernel,
    g0: &InitialCondition,
    step: f64,
    len: usize,
) -> Result<SpeedSetup> {
    check_grid(step, len)?;
    let b = lambda.envelope().b;
    let speed = intensity::SpeedKernel::new(kernel, phi)?;
    let b_tilde = b * speed.phi_mass();
    let g_tilde_mass = intensity::integral_of_modulus(phi, |t| g0.at(t), g0.mass(), &g0.breakpoints())
        .value()
        .ok_or_else(|| HawkesError::Domain("∫φ(g₀) diverges".into()))?;
    let (g_tilde, h_tilde) = match phi.lipschitz_constant() {
        Some(l) => (
            GridFunction::from_tail(|s| l * g0.tail(s), step, len)?,
            GridFunction::from_tail(|s| kernel.tail(s) / kernel.mass(), step, len)?,
        ),
        None => (
            GridFunction::from_fn(|t| phi.at(g0.at(t)), step, len, &g0.breakpoints())?,
            GridFunction::from_fn(|t| speed.at(t), step, len, &kernel.breakpoints())?,
        ),
    };
    Ok(SpeedSetup {
        b,
        b_tilde,
        g_tilde,
        h_tilde,
        g_tilde_mass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvBound {
    pub b: f64,
    pub b_tilde: f64,
    pub series: NeumannSeries,
    /// `‖g̃‖₁ / (1 − B̃)`: total mass of the resolvent applied to `g̃`.
    pub total_mass: f64,
}

impl TvBound {
    pub fn step(&self) -> f64 {
        self.series.r.step
    }

    /// `B ∫_t^∞ r`, read at the grid node at or below `t`; the mass beyond the
    /// grid is taken from the exact total.
    pub fn at(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(HawkesError::Domain(format!("bound requested at t={t} < 0")));
        }
        let k = (t / self.step()).floor() as usize;
        if k > self.series.r.len() {
            return Err(HawkesError::param(
                "grid.len",
                format!("grid ends at {} before t={t}", self.step() * self.series.r.len() as f64),
            ));
        }
        let head = self.step() * self.series.r.values[..k].iter().sum::<f64>();
        Ok(self.b * (self.total_mass - head).max(0.0))
    }

    /// Bound at every grid node.
    pub fn curve(&self) -> Vec<(f64, f64)> {
        let d = self.step();
        let mut head = 0.0;
        let mut out = Vec::with_capacity(self.series.r.len() + 1);
        for (k, v) in self.series.r.values.iter().enumerate() {
            out.push((k as f64 * d, self.b * (self.total_mass - head).max(0.0)));
            head += d * v;
        }
        out
    }
}

pub fn tv_bound(setup: &SpeedSetup) -> Result<TvBound> {
    let series = neumann_series(&setup.g_tilde, &setup.h_tilde, setup.b_tilde)?;
    Ok(TvBound {
        b: setup.b,
        b_tilde: setup.b_tilde,
        series,
        total_mass: setup.g_tilde_mass / (1.0 - setup.b_tilde),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRatio {
    /// `(t, bound(t), ∫_{t/2}^∞ φ(g₀), ∫_{t/2}^∞ φ(h))`
    pub samples: Vec<(f64, f64, f64, f64)>,
    /// Supremum over the largest decade of `bound / (g-tail + h-tail)`.
    pub last_decade_sup: f64,
}

/// Ratio of the bound to `∫_{t/2}^∞ (φ(g₀) + φ(h))`, on the largest decade of
/// the grid.
pub fn tail_ratio(bound: &TvBound, phi: &Modulus, kernel: &Kernel, g0: &InitialCondition) -> Result<TailRatio> {
    let t_end = bound.step() * bound.series.r.len() as f64;
    let mut samples = Vec::new();
    let mut sup: f64 = 0.0;
    for i in 0..=16 {
        let t = t_end / 10.0 * 10f64.powf(i as f64 / 16.0);
        let b = bound.at(t)?;
        let gt = intensity::integral_of_modulus(phi, |s| g0.at(s + t / 2.0), g0.tail(t / 2.0), &[]).as_f64();
        let ht = intensity::integral_of_modulus(phi, |s| kernel.at(s + t / 2.0), kernel.tail(t / 2.0), &[]).as_f64();
        let denom = gt + ht;
        if denom > 0.0 {
            sup = sup.max(b / denom);
        } else if b > 0.0 {
            sup = f64::INFINITY;
        }
        samples.push((t, b, gt, ht));
    }
    Ok(TailRatio {
        samples,
        last_decade_sup: sup,
    })
}

/// Sampler for the normalized density `f / ∫f` given its tail integral.
#[derive(Debug, Clone)]
enum AgeSampler {
    Kernel(Kernel),
    Initial(InitialCondition),
    /// `(s, T(s))` with `T` decreasing, inverted by interpolation.
    Table(Vec<(f64, f64)>),
}

impl AgeSampler {
    fn table(tail: impl Fn(f64) -> f64) -> Self {
        let mut rows = vec![(0.0, tail(0.0))];
        let mut s = 1e-4;
        while s < 1e9 {
            rows.push((s, tail(s)));
            s *= 1.01;
        }
        AgeSampler::Table(rows)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            AgeSampler::Kernel(k) => k.sample_age(rng),
            AgeSampler::Initial(g) => g.inverse_tail((1.0 - rng.random::<f64>()) * g.mass()),
            AgeSampler::Table(rows) => {
                let y = (1.0 - rng.random::<f64>()) * rows[0].1;
                let i = rows.partition_point(|r| r.1 > y);
                if i == 0 {
                    return 0.0;
                }
                if i >= rows.len() {
                    return rows[rows.len() - 1].0;
                }
                let (s0, t0) = rows[i - 1];
                let (s1, t1) = rows[i];
                if t0 == t1 {
                    s1
                } else {
                    s0 + (t0 - y) / (t0 - t1) * (s1 - s0)
                }
            }
        }
    }
}

/// The dominating forest: roots at rate `B φ(g₀(t))`, each point with
/// Poisson(`B̃`) children at ages drawn from `h̃`.
#[derive(Debug, Clone)]
pub struct DominatingForest {
    root_mean: f64,
    b_tilde: f64,
    roots: AgeSampler,
    ages: AgeSampler,
    max_nodes: usize,
}

impl DominatingForest {
    pub fn new(b: f64, phi: &Modulus, kernel: &Kernel, g0: &InitialCondition) -> Result<Self> {
        let speed = intensity::SpeedKernel::new(kernel, phi)?;
        let b_tilde = b * speed.phi_mass();
        if !(b_tilde < 1.0) {
            return Err(HawkesError::Supercritical(format!("B̃ = {b_tilde} ≥ 1")));
        }
        let g_mass = intensity::integral_of_modulus(phi, |t| g0.at(t), g0.mass(), &g0.breakpoints())
            .value()
            .ok_or_else(|| HawkesError::Domain("∫φ(g₀) diverges".into()))?;
        let (roots, ages) = match phi.lipschitz_constant() {
            Some(_) => (AgeSampler::Initial(g0.clone()), AgeSampler::Kernel(kernel.clone())),
            None => {
                let phi_g = phi.clone();
                let g = g0.clone();
                let root_table = AgeSampler::table(move |s| {
                    intensity::integral_of_modulus(&phi_g, |t| g.at(t + s), g.tail(s), &[]).as_f64()
                });
                let sk = speed.clone();
                (root_table, AgeSampler::table(move |s| sk.tail(s)))
            }
        };
        Ok(DominatingForest {
            root_mean: b * g_mass,
            b_tilde,
            roots,
            ages,
            max_nodes: 10_000_000,
        })
    }

    pub fn b_tilde(&self) -> f64 {
        self.b_tilde
    }

    /// Expected number of points, `B‖φ(g₀)‖₁ / (1 − B̃)`.
    pub fn expected_size(&self) -> f64 {
        self.root_mean / (1.0 - self.b_tilde)
    }

    /// Last point `L_D` of one forest.
    pub fn sample_last<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Option<f64>> {
        let n_roots = poisson(self.root_mean, rng);
        let mut frontier: Vec<f64> = (0..n_roots).map(|_| self.roots.sample(rng)).collect();
        let mut last: Option<f64> = None;
        let mut count = 0usize;
        while let Some(t) = frontier.pop() {
            count += 1;
            if count > self.max_nodes {
                return Err(HawkesError::TooManyEvents {
                    cap: self.max_nodes,
                    time: t,
                });
            }
            last = Some(last.map_or(t, |l: f64| l.max(t)));
            for _ in 0..poisson(self.b_tilde, rng) {
                frontier.push(t + self.ages.sample(rng));
            }
        }
        Ok(last)
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map_or(0, |d| d.sample(rng) as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub replicas: usize,
    /// `(t, P̂[L > t], σ)`
    pub points: Vec<(f64, f64, f64)>,
}

impl SurvivalCurve {
    pub fn from_lasts(lasts: &[Option<f64>], ts: &[f64]) -> Self {
        let n = lasts.len();
        let points = ts
            .iter()
            .map(|&t| {
                let k = lasts.iter().filter(|l| l.is_some_and(|x| x > t)).count();
                let p = k as f64 / n as f64;
                (t, p, stats::binomial_sigma(p, n))
            })
            .collect();
        SurvivalCurve { replicas: n, points }
    }
}

/// Empirical survival of `L_D` over `replicas` independent forests.
pub fn dominating_tree_mc(forest: &DominatingForest, replicas: usize, ts: &[f64], seed: u64) -> Result<SurvivalCurve> {
    let lasts: Vec<Option<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| forest.sample_last(&mut CanonicalNoise::new(seed, r as u64).aux_rng(3)))
        .collect::<Result<_>>()?;
    Ok(SurvivalCurve::from_lasts(&lasts, ts))
}

/// Point values `Λ_θ(kΔ)` and the total `Λ_θ = A ∫ (e^{Λ_θ(s)} − 1) ds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTheta {
    pub theta: f64,
    pub step: f64,
    pub values: Vec<f64>,
    pub total: f64,
    /// Grid time where the solution overflowed, if it did.
    pub diverged_at: Option<f64>,
}

impl LambdaTheta {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Above this value of `Λ_θ(t)` the solution is declared divergent.
pub const LAMBDA_OVERFLOW: f64 = 50.0;

/// Trapezoid time stepping of
/// `Λ_θ(t) = θ h(t) + B ∫₀^t (e^{Λ_θ(t−s)} − 1) h(s) ds`,
/// with the implicit diagonal term resolved by fixed-point iteration.
pub fn solve_lambda_theta(kernel: &Kernel, a: f64, b: f64, theta: f64, step: f64, len: usize) -> Result<LambdaTheta> {
    check_grid(step, len)?;
    if !(0.0..1.0).contains(&b) {
        return Err(HawkesError::Supercritical(format!("B = {b} must lie in [0, 1)")));
    }
    if !(theta >= 0.0) {
        return Err(HawkesError::param("theta", "must be non-negative"));
    }
    let h: Vec<f64> = (0..len).map(|k| kernel.at(k as f64 * step)).collect();
    let mut lam: Vec<f64> = Vec::with_capacity(len);
    // e^{Λ_j} − 1, kept alongside to avoid recomputation
    let mut em1: Vec<f64> = Vec::with_capacity(len);
    let mut diverged_at = None;
    lam.push(theta * h[0]);
    em1.push(lam[0].exp_m1());
    for k in 1..len {
        let mut s = 0.5 * em1[0] * h[k];
        for j in 1..k {
            s += em1[k - j] * h[j];
        }
        let c = theta * h[k] + b * step * s;
        let w = 0.5 * b * step * h[0];
        let mut x = c.max(lam[k - 1].min(c + 1.0));
        let mut ok = false;
        for _ in 0..500 {
            let nx = c + w * x.exp_m1();
            if !nx.is_finite() || nx > LAMBDA_OVERFLOW {
                break;
            }
            if (nx - x).abs() <= 1e-12 * nx.abs().max(1e-300) || nx == x {
                x = nx;
                ok = true;
                break;
            }
            x = nx;
        }
        if !ok {
            diverged_at = Some(k as f64 * step);
            break;
        }
        lam.push(x);
        em1.push(x.exp_m1());
    }
    let n = em1.len();
    let total = if diverged_at.is_some() {
        f64::INFINITY
    } else {
        a * step * (em1.iter().sum::<f64>() - 0.5 * em1[0] - 0.5 * em1[n - 1])
    };
    Ok(LambdaTheta {
        theta,
        step,
        values: lam,
        total,
        diverged_at,
    })
}

/// Per-replica stationary statistics gathered on a fixed sampling grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaStats {
    /// Mean of `g_t(s)` over sample times, per `s`.
    pub mean_g: Vec<f64>,
    /// Mean of `λ(z_t)` over sample times.
    pub mean_rate: f64,
    /// Events per unit time in the first and second half of the window.
    pub rate_halves: (f64, f64),
    pub loads: Vec<f64>,
}

/// Run one replica through `burn_in`, then sample the state every `every`
/// time units over `window`.
pub fn stationary_replica(
    cfg: &SimConfig,
    burn_in: f64,
    window: f64,
    every: f64,
    s_grid: &[f64],
    noise: &CanonicalNoise,
) -> Result<ReplicaStats> {
    let mut c = cfg.clone();
    c.horizon = burn_in + window;
    let mut th = Thinner::new(&c, noise.field(0))?;
    th.run_until(c.horizon)?;
    let events = th.stream().times();
    let mut st = ImpulseState::new(cfg.kernel.clone(), cfg.initial.clone());
    let mut k = 0;
    let n_samples = (window / every).floor() as usize;
    let mut sum_g = vec![0.0; s_grid.len()];
    let mut sum_rate = 0.0;
    let mut loads = Vec::with_capacity(n_samples);
    for i in 1..=n_samples {
        let t = burn_in + i as f64 * every;
        while k < events.len() && events[k] <= t {
            st.advance_to(events[k]);
            st.jump();
            k += 1;
        }
        st.advance_to(t);
        for (acc, &s) in sum_g.iter_mut().zip(s_grid) {
            *acc += st.evaluate(s);
        }
        let z = st.load();
        loads.push(z);
        sum_rate += cfg.intensity.rate_at(z, t);
    }
    let n = n_samples as f64;
    let mid = burn_in + 0.5 * window;
    let first = events.iter().filter(|&&t| t > burn_in && t <= mid).count() as f64;
    let second = events.iter().filter(|&&t| t > mid).count() as f64;
    Ok(ReplicaStats {
        mean_g: sum_g.iter().map(|x| x / n).collect(),
        mean_rate: sum_rate / n,
        rate_halves: (first / (0.5 * window), second / (0.5 * window)),
        loads,
    })
}

/// Replica statistics in replica order (replica `r` reads stream `r`).
pub fn stationary_runs(
    cfg: &SimConfig,
    burn_in: f64,
    window: f64,
    every: f64,
    s_grid: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<ReplicaStats>> {
    (0..replicas)
        .into_par_iter()
        .map(|r| stationary_replica(cfg, burn_in, window, every, s_grid, &CanonicalNoise::new(seed, r as u64)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldRow {
    pub s: f64,
    pub mean_g: f64,
    /// `Ê[λ(z)] · H(s)`
    pub predicted: f64,
    pub rel_err: f64,
    /// Standard error of the per-replica difference.
    pub sem: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldReport {
    pub rows: Vec<MeanFieldRow>,
    pub max_rel_err: f64,
    /// Long-run event rate over the sampling window.
    pub event_rate: f64,
    pub event_rate_sem: f64,
    pub mean_intensity: f64,
    /// First-half versus second-half event rates differ by more than 3σ.
    pub drift_flag: bool,
}

impl MeanFieldReport {
    /// Every row within `k` standard errors and below `rel_tol`.
    pub fn consistent(&self, rel_tol: f64, k: f64) -> bool {
        self.rows
            .iter()
            .all(|r| r.rel_err < rel_tol && (r.mean_g - r.predicted).abs() <= k * r.sem)
    }
}

/// `E_μ[g(s)] = E_μ[λ(g(0))] H(s)` on a grid of `s`, by Monte Carlo.
pub fn mean_field_check(runs: &[ReplicaStats], s_grid: &[f64], kernel: &Kernel) -> MeanFieldReport {
    let n = runs.len();
    let rates: Vec<f64> = runs.iter().map(|r| r.mean_rate).collect();
    let mean_rate = stats::summarize(&rates).mean;
    let rows: Vec<MeanFieldRow> = s_grid
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let hs = kernel.tail(s);
            let g: Vec<f64> = runs.iter().map(|r| r.mean_g[i]).collect();
            let diff: Vec<f64> = runs.iter().map(|r| r.mean_g[i] - r.mean_rate * hs).collect();
            let mean_g = stats::summarize(&g).mean;
            let predicted = mean_rate * hs;
            MeanFieldRow {
                s,
                mean_g,
                predicted,
                rel_err: (mean_g - predicted).abs() / predicted,
                sem: stats::summarize(&diff).sem,
            }
        })
        .collect();
    let events: Vec<f64> = runs.iter().map(|r| 0.5 * (r.rate_halves.0 + r.rate_halves.1)).collect();
    let ev = stats::summarize(&events);
    let first = stats::summarize(&runs.iter().map(|r| r.rate_halves.0).collect::<Vec<_>>());
    let second = stats::summarize(&runs.iter().map(|r| r.rate_halves.1).collect::<Vec<_>>());
    let drift_flag = n > 1 && (first.mean - second.mean).abs() > 3.0 * (first.sem.powi(2) + second.sem.powi(2)).sqrt();
    MeanFieldReport {
        max_rel_err: rows.iter().map(|r| r.rel_err).fold(0.0, f64::max),
        rows,
        event_rate: ev.mean,
        event_rate_sem: ev.sem,
        mean_intensity: mean_rate,
        drift_flag,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgfEstimate {
    pub theta: f64,
    /// `exp(Λ_θ)` from the Volterra solver.
    pub predicted: f64,
    pub empirical: f64,
    pub sem: f64,
}

impl MgfEstimate {
    /// The prediction lies in the empirical confidence interval `± z·sem`.
    pub fn within(&self, z: f64) -> bool {
        (self.predicted - self.empirical).abs() <= z * self.sem
    }
}

/// Empirical `E[e^{θ z}]` per replica, compared with `exp(Λ_θ)`.
pub fn mgf_check(runs: &[ReplicaStats], solution: &LambdaTheta) -> MgfEstimate {
    let per: Vec<f64> = runs
        .iter()
        .map(|r| r.loads.iter().map(|z| (solution.theta * z).exp()).sum::<f64>() / r.loads.len() as f64)
        .collect();
    let s = stats::summarize(&per);
    MgfEstimate {
        theta: solution.theta,
        predicted: solution.total.exp(),
        empirical: s.mean,
        sem: s.sem,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub samples: usize,
    /// Fitted decay rate of `log ν[z, ∞)` over the upper range.
    pub slope: f64,
    pub fit_range: (f64, f64),
    pub low_power: bool,
    /// Histogram `(left edge, density)`.
    pub density: Vec<(f64, f64)>,
    pub bin_width: f64,
    /// Smallest `c′` with `ψ̂(z) ≤ c′ λ(z) ν̂[z + h(0), ∞)` over bins with
    /// enough tail samples.
    pub density_constant: f64,
    /// `Ê[e^{θ̂ z}]` at half the fitted slope.
    pub half_slope_mgf: f64,
}

/// Fit the exponential tail of stationary loads and check the local density bound.
pub fn tail_estimate(loads: &[f64], lambda: &RateMap, kernel: &Kernel, bin_width: Option<f64>) -> Result<TailReport> {
    if loads.len() < 10 {
        return Err(HawkesError::Precondition("need at least 10 stationary samples".into()));
    }
    let mut z = loads.to_vec();
    z.sort_by(|a, b| a.total_cmp(b));
    let n = z.len();
    let q = |p: f64| z[((p * (n - 1) as f64).round() as usize).min(n - 1)];
    let (lo, hi) = (q(0.9), q(0.999));
    let beyond = z.iter().filter(|&&x| x >= lo).count();
    // least squares of ln S(z) on z for order statistics in [lo, hi]
    let pts: Vec<(f64, f64)> = z
        .iter()
        .enumerate()
        .filter(|(_, &x)| x >= lo && x <= hi)
        .map(|(i, &x)| (x, ((n - i) as f64 / n as f64).ln()))
        .collect();
    let m = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / m,
        pts.iter().map(|p| p.1).sum::<f64>() / m,
    );
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { -sxy / sxx } else { f64::NAN };

    let width = bin_width.unwrap_or_else(|| {
        let iqr = q(0.75) - q(0.25);
        let fd = 2.0 * iqr / (n as f64).cbrt();
        if fd > 0.0 {
            fd
        } else {
            (z[n - 1] - z[0]).max(1e-9) / 50.0
        }
    });
    let z0 = z[0];
    let bins = (((z[n - 1] - z0) / width).floor() as usize) + 1;
    let mut counts = vec![0usize; bins];
    for &x in &z {
        counts[(((x - z0) / width).floor() as usize).min(bins - 1)] += 1;
    }
    let density: Vec<(f64, f64)> = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (z0 + i as f64 * width, c as f64 / (n as f64 * width)))
        .collect();
    let jump = kernel.at(0.0);
    let mut c_prime: f64 = 0.0;
    for (edge, psi) in &density {
        if *psi == 0.0 {
            continue;
        }
        let mid = edge + 0.5 * width;
        let cut = mid + jump;
        let tail_count = n - z.partition_point(|&x| x < cut);
        if tail_count < 10 {
            continue;
        }
        let nu = tail_count as f64 / n as f64;
        let rate = lambda.at(mid.max(0.0));
        if rate > 0.0 {
            c_prime = c_prime.max(psi / (rate * nu));
        }
    }
    let half = 0.5 * slope;
    let half_slope_mgf = if half.is_finite() {
        z.iter().map(|x| (half * x).exp()).sum::<f64>() / n as f64
    } else {
        f64::NAN
    };
    Ok(TailReport {
        samples: n,
        slope,
        fit_range: (lo, hi),
        low_power: beyond < 100,
        density,
        bin_width: width,
        density_constant: c_prime,
        half_slope_mgf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::IntensityFn;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn exp_setup(b: f64, g_scale: f64, step: f64, len: usize) -> SpeedSetup {
        let g0 = InitialCondition::function(Kernel::exponential(1.0).unwrap().with_scale(g_scale).unwrap());
        speed_setup(
            &RateMap::linear(1.0, b).unwrap(),
            &Modulus::lipschitz(1.0).unwrap(),
            &Kernel::exponential(1.0).unwrap(),
            &g0,
            step,
            len,
        )
        .unwrap()
    }

    #[test]
    fn convolution_multiplies_mass() {
        let f = GridFunction::new(0.1, vec![1.0, 2.0, 0.5]).unwrap();
        let g = GridFunction::new(0.1, vec![0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let c = convolve(&mut FftPlanner::new(), &f, &g);
        assert_abs_diff_eq!(c.mass(), f.mass() * g.mass(), epsilon = 1e-15);
    }

    #[test]
    fn zero_forcing_gives_zero_bound() {
        let mut s = exp_setup(0.5, 1.0, 0.01, 1000);
        s.g_tilde = GridFunction::zeros(0.01, 1000).unwrap();
        s.g_tilde_mass = 0.0;
        let b = tv_bound(&s).unwrap();
        assert!(b.curve().iter().all(|p| p.1 == 0.0));
    }

    #[test]
    fn no_branching_bound_is_forcing_tail() {
        let mut s = exp_setup(0.5, 1.0, 0.01, 2000);
        s.b_tilde = 0.0;
        let b = tv_bound(&s).unwrap();
        for t in [0.0, 0.5, 3.0, 10.0] {
            // B ∫_t^∞ e^{-s} ds
            assert_abs_diff_eq!(b.at(t).unwrap(), 0.5 * (-t).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn total_mass_identity() {
        let s = exp_setup(0.5, 1.0, 0.01, 8000);
        let b = tv_bound(&s).unwrap();
        let grid_mass = b.series.r.mass();
        let want = s.g_tilde.mass() / (1.0 - s.b_tilde);
        assert!((grid_mass - want).abs() <= 1e-8 * want, "{grid_mass} {want}");
    }

    #[test]
    fn neumann_matches_direct_renewal() {
        let s = exp_setup(0.6, 2.0, 0.02, 1500);
        let n = neumann_series(&s.g_tilde, &s.h_tilde, s.b_tilde).unwrap();
        let d = renewal_direct(&s.g_tilde, &s.h_tilde, s.b_tilde).unwrap();
        let scale = d.values.iter().copied().fold(0.0, f64::max);
        for (x, y) in n.r.values.iter().zip(&d.values) {
            assert!((x - y).abs() <= 1e-10 * scale, "{x} {y}");
        }
    }

    #[test]
    fn bound_is_non_increasing_and_grid_checked() {
        let s = exp_setup(0.5, 1.0, 0.01, 1000);
        let b = tv_bound(&s).unwrap();
        let c = b.curve();
        assert!(c.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!(b.at(20.0).is_err());
        let mut sup = s.clone();
        sup.b_tilde = 1.0;
        assert!(matches!(tv_bound(&sup), Err(HawkesError::Supercritical(_))));
    }

    #[test]
    fn lambda_theta_trivial_cases() {
        let k = Kernel::exponential(1.0).unwrap();
        let z = solve_lambda_theta(&k, 1.0, 0.5, 0.0, 0.01, 1000).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
        assert_eq!(z.total, 0.0);
        let p = solve_lambda_theta(&k, 1.0, 0.0, 0.3, 0.01, 1000).unwrap();
        for (i, v) in p.values.iter().enumerate() {
            assert_eq!(*v, 0.3 * k.at(i as f64 * 0.01));
        }
    }

    #[test]
    fn lambda_theta_decays() {
        let k = Kernel::exponential(1.0).unwrap();
        let s = solve_lambda_theta(&k, 1.0, 0.5, 0.1, 0.01, 8000).unwrap();
        assert!(!s.diverged());
        let last = s.values[7000..].iter().copied().fold(0.0, f64::max);
        assert!(last < 1e-3);
        // large θ blows up
        let d = solve_lambda_theta(&k, 1.0, 0.9, 40.0, 0.01, 2000).unwrap();
        assert!(d.diverged());
    }

    #[test]
    fn mean_field_poisson_case() {
        let cfg = SimConfig::new(
            Kernel::exponential(1.0).unwrap(),
            IntensityFn::linear(1.0, 0.0).unwrap(),
            InitialCondition::Zero,
            1.0,
        );
        let s = [0.0, 1.0];
        let runs = stationary_runs(&cfg, 20.0, 200.0, 0.5, &s, 100, 1).unwrap();
        let r = mean_field_check(&runs, &s, &cfg.kernel);
        assert!(r.max_rel_err < 0.05, "{r:?}");
        assert!(!r.drift_flag);
    }

    #[test]
    fn tail_report_histogram_is_normalized() {
        let cfg = SimConfig::new(
            Kernel::exponential(1.0).unwrap(),
            IntensityFn::linear(1.0, 0.0).unwrap(),
            InitialCondition::Zero,
            1.0,
        );
        let runs = stationary_runs(&cfg, 20.0, 500.0, 0.5, &[], 20, 2).unwrap();
        let loads: Vec<f64> = runs.iter().flat_map(|r| r.loads.iter().copied()).collect();
        let rep = tail_estimate(&loads, cfg.intensity.lambda(), &cfg.kernel, None).unwrap();
        let mass: f64 = rep.density.iter().map(|d| d.1 * rep.bin_width).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert!(rep.slope > 0.0);
        assert!(rep.half_slope_mgf.is_finite());
    }

    #[test]
    fn empty_forest() {
        let f = DominatingForest::new(
            0.5,
            &Modulus::lipschitz(1.0).unwrap(),
            &Kernel::exponential(1.0).unwrap(),
            &InitialCondition::Zero,
        )
        .unwrap();
        let c = dominating_tree_mc(&f, 100, &[0.0, 1.0], 0).unwrap();
        assert!(c.points.iter().all(|p| p.1 == 0.0));
    }

    proptest! {
        #[test]
        fn larger_forcing_never_lowers_bound(c in 1.0f64..3.0, t in 0.0f64..9.0) {
            let lo = tv_bound(&exp_setup(0.5, 1.0, 0.02, 500)).unwrap();
            let hi = tv_bound(&exp_setup(0.5, c, 0.02, 500)).unwrap();
            prop_assert!(hi.at(t).unwrap() >= lo.at(t).unwrap());
        }
    }
}
