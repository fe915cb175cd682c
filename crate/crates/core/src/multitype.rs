//! Multi-type processes: an event of type `i` adds `h_ij` to the load
//! coordinate `z_ij`, and events of type `e` arrive at rate `λ_e(z)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::intensity::RateMap;
use crate::kernels::Kernel;
use crate::noise::{CanonicalNoise, PlanarField};
use crate::samplers::DEFAULT_MAX_EVENTS;
use crate::state::{EventMark, EventStream, ImpulseState, InitialCondition};

/// Rate of one type as a function of the `d × d` load matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TypedRate {
    /// `c + Σ k_ij z_ij`; its own envelope.
    Affine { c: f64, k: Vec<Vec<f64>> },
    /// `λ(Σ w_ij z_ij)` for a single-type map with certified envelope `(A, B)`,
    /// giving the envelope `A + Σ B w_ij z_ij`.
    Composite { rate: RateMap, weights: Vec<Vec<f64>> },
}

fn check_square(name: &str, m: &[Vec<f64>], d: usize) -> Result<()> {
    if m.len() != d || m.iter().any(|r| r.len() != d) {
        return Err(HawkesError::param(name, format!("must be a {d}×{d} matrix")));
    }
    if m.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(HawkesError::param(name, "entries must be finite and non-negative"));
    }
    Ok(())
}

/// `Σ w_ij z_ij`, accumulated from `0.0` in row-major order.
fn weighted(w: &[Vec<f64>], z: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for (wr, zr) in w.iter().zip(z) {
        for (a, b) in wr.iter().zip(zr) {
            s += a * b;
        }
    }
    s
}

impl TypedRate {
    fn validate(&self, d: usize) -> Result<()> {
        match self {
            TypedRate::Affine { c, k } => {
                if !(c.is_finite() && *c >= 0.0) {
                    return Err(HawkesError::param("lambdas.c", "must be finite and non-negative"));
                }
                check_square("lambdas.k", k, d)
            }
            TypedRate::Composite { rate, weights } => {
                if !rate.is_monotone() {
                    return Err(HawkesError::Precondition("composite type rates need a monotone map".into()));
                }
                check_square("lambdas.weights", weights, d)
            }
        }
    }

    pub fn at(&self, z: &[Vec<f64>]) -> f64 {
        match self {
            TypedRate::Affine { c, k } => c + weighted(k, z),
            TypedRate::Composite { rate, weights } => rate.at(weighted(weights, z)),
        }
    }

    /// Upper bound on the rate while every coordinate stays below `z`.
    fn bound(&self, z: &[Vec<f64>]) -> f64 {
        match self {
            TypedRate::Affine { .. } => self.at(z),
            TypedRate::Composite { rate, weights } => rate.sup_up_to(weighted(weights, z)),
        }
    }

    /// Envelope `(c_e, k^e)`.
    pub fn envelope(&self) -> (f64, Vec<Vec<f64>>) {
        match self {
            TypedRate::Affine { c, k } => (*c, k.clone()),
            TypedRate::Composite { rate, weights } => {
                let e = rate.envelope();
                (e.a, weights.iter().map(|r| r.iter().map(|w| e.b * w).collect()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiTypeModel {
    pub d: usize,
    /// `kernels[i][j] = h_ij`
    pub kernels: Vec<Vec<Kernel>>,
    /// `lambdas[e] = λ_e`
    pub lambdas: Vec<TypedRate>,
    /// `init[i][j] = g_ij`; all zero when omitted.
    #[serde(default)]
    pub init: Option<Vec<Vec<InitialCondition>>>,
    /// Rescale every kernel to mass `1/d`.
    #[serde(default)]
    pub normalize: bool,
    /// Simulate even when the stability check fails.
    #[serde(default)]
    pub allow_unstable: bool,
}

impl MultiTypeModel {
    pub fn new(kernels: Vec<Vec<Kernel>>, lambdas: Vec<TypedRate>, init: Option<Vec<Vec<InitialCondition>>>) -> Result<Self> {
        let m = MultiTypeModel {
            d: lambdas.len(),
            kernels,
            lambdas,
            init,
            normalize: false,
            allow_unstable: false,
        };
        m.validate()?;
        Ok(m)
    }

    /// The single-type model `λ`, `h`, `g₀` embedded with `d = 1`.
    pub fn embed(rate: RateMap, kernel: Kernel, initial: InitialCondition) -> Result<Self> {
        MultiTypeModel::new(
            vec![vec![kernel]],
            vec![TypedRate::Composite {
                rate,
                weights: vec![vec![1.0]],
            }],
            Some(vec![vec![initial]]),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        if d == 0 || d > u16::MAX as usize {
            return Err(HawkesError::param("multitype.d", "must be positive"));
        }
        if self.lambdas.len() != d {
            return Err(HawkesError::param("multitype.lambdas", format!("expected {d} rates")));
        }
        if self.kernels.len() != d || self.kernels.iter().any(|r| r.len() != d) {
            return Err(HawkesError::param("multitype.kernels", format!("must be a {d}×{d} matrix")));
        }
        if let Some(g) = &self.init {
            if g.len() != d || g.iter().any(|r| r.len() != d) {
                return Err(HawkesError::param("multitype.init", format!("must be a {d}×{d} matrix")));
            }
            for g in g.iter().flatten() {
                g.validate()?;
            }
        }
        for l in &self.lambdas {
            l.validate(d)?;
        }
        Ok(())
    }

    /// Kernels after the optional `1/d` normalization.
    pub fn effective_kernels(&self) -> Result<Vec<Vec<Kernel>>> {
        if !self.normalize {
            return Ok(self.kernels.clone());
        }
        let target = 1.0 / self.d as f64;
        self.kernels
            .iter()
            .map(|row| {
                row.iter()
                    .map(|k| {
                        let m = k.mass();
                        if m > 0.0 {
                            k.with_scale(k.scale() * target / m)
                        } else {
                            Ok(k.clone())
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn initial(&self, i: usize, j: usize) -> InitialCondition {
        self.init.as_ref().map_or(InitialCondition::Zero, |g| g[i][j].clone())
    }

    /// `m_{i,e} = Σ_j k^e_ij`.
    pub fn stability_matrix(&self) -> Vec<Vec<f64>> {
        let d = self.d;
        let env: Vec<Vec<Vec<f64>>> = self.lambdas.iter().map(|l| l.envelope().1).collect();
        (0..d)
            .map(|i| (0..d).map(|e| env[e][i].iter().sum()).collect())
            .collect()
    }

    /// Expected type-`e` children of a type-`i` event under the envelope,
    /// `Σ_j k^e_ij ‖h_ij‖₁`.
    pub fn branching_matrix(&self) -> Result<Vec<Vec<f64>>> {
        let d = self.d;
        let h = self.effective_kernels()?;
        let env: Vec<Vec<Vec<f64>>> = self.lambdas.iter().map(|l| l.envelope().1).collect();
        Ok((0..d)
            .map(|i| (0..d).map(|e| (0..d).map(|j| env[e][i][j] * h[i][j].mass()).sum()).collect())
            .collect())
    }
}

/// `z_ij(t) = g_ij(t) + Σ_{τ ∈ S_i, τ ≤ t} h_ij(t − τ)` assembled from a typed history.
pub fn load_matrix(m: &MultiTypeModel, events: &EventStream, t: f64) -> Result<Vec<Vec<f64>>> {
    let h = m.effective_kernels()?;
    let d = m.d;
    let mut z: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| m.initial(i, j).at(t)).collect()).collect();
    for (&tau, mark) in events.times().iter().zip(events.marks()) {
        if tau > t {
            break;
        }
        let i = mark.kind as usize;
        if i >= d {
            return Err(HawkesError::param("type", format!("event type {i} out of range 0..{d}")));
        }
        for j in 0..d {
            z[i][j] += h[i][j].at(t - tau);
        }
    }
    Ok(z)
}

/// `λ_e(z(t))`.
pub fn typed_rate(m: &MultiTypeModel, events: &EventStream, e: usize, t: f64) -> Result<f64> {
    if e >= m.d {
        return Err(HawkesError::param("type", format!("type {e} out of range 0..{}", m.d)));
    }
    Ok(m.lambdas[e].at(&load_matrix(m, events, t)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub matrix: Vec<Vec<f64>>,
    pub radius: f64,
    /// `false` when power iteration did not converge and `radius` is a
    /// Gershgorin upper bound.
    pub converged: bool,
    pub iterations: usize,
    pub stable: bool,
}

impl SpectralReport {
    pub fn verdict(&self) -> &'static str {
        match (self.converged, self.stable) {
            (true, true) => "stable",
            (true, false) => "unstable",
            (false, true) => "bounded-only",
            (false, false) => "inconclusive",
        }
    }
}

pub const SPECTRAL_TOL: f64 = 1e-12;
const POWER_ITER_CAP: usize = 200_000;

/// Perron root of a non-negative matrix by power iteration on `M + I`, with
/// Collatz–Wielandt bounds as the stopping rule.
pub fn spectral_radius(matrix: &[Vec<f64>]) -> Result<SpectralReport> {
    let d = matrix.len();
    if d == 0 || matrix.iter().any(|r| r.len() != d) {
        return Err(HawkesError::param("matrix", "must be square and non-empty"));
    }
    if matrix.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(HawkesError::param("matrix", "entries must be finite and non-negative"));
    }
    let row_max = matrix.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max);
    let col_max = (0..d).map(|j| matrix.iter().map(|r| r[j]).sum::<f64>()).fold(0.0, f64::max);
    let diag_max = (0..d).map(|i| matrix[i][i]).fold(0.0, f64::max);

    let mut rng = CanonicalNoise::new(0, 0).aux_rng(u64::MAX);
    let mut x = vec![1.0; d];
    let mut result = None;
    let mut iterations = 0;
    'outer: for restart in 0..4 {
        if restart > 0 {
            x = (0..d).map(|_| 0.5 + rng.random::<f64>()).collect();
        }
        for _ in 0..POWER_ITER_CAP / 4 {
            iterations += 1;
            let y: Vec<f64> = (0..d)
                .map(|i| x[i] + matrix[i].iter().zip(&x).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for i in 0..d {
                let r = y[i] / x[i] - 1.0;
                lo = lo.min(r);
                hi = hi.max(r);
            }
            let norm = y.iter().copied().fold(0.0, f64::max);
            x = y.iter().map(|v| v / norm).collect();
            if hi - lo <= SPECTRAL_TOL * hi.max(1.0) {
                result = Some(0.5 * (lo + hi).max(0.0));
                break 'outer;
            }
        }
    }
    let (radius, converged) = match result {
        Some(r) => (r, true),
        None => (row_max.min(col_max), false),
    };
    let slack = 1e-9 * row_max.max(1.0);
    if converged && !(radius >= diag_max - slack && radius <= row_max + slack) {
        return Err(HawkesError::Numerical(format!(
            "spectral radius {radius} outside [{diag_max}, {row_max}]"
        )));
    }
    Ok(SpectralReport {
        matrix: matrix.to_vec(),
        radius,
        converged,
        iterations,
        stable: radius < 1.0,
    })
}

pub fn stability(m: &MultiTypeModel) -> Result<SpectralReport> {
    spectral_radius(&m.stability_matrix())
}

/// Exact multi-type sample on `[0, horizon]`: type `e` thins the field of
/// layer `e`, and the earliest candidate over all types is examined first.
pub fn simulate_multitype(m: &MultiTypeModel, horizon: f64, noise: &CanonicalNoise) -> Result<EventStream> {
    simulate_multitype_capped(m, horizon, noise, DEFAULT_MAX_EVENTS)
}

pub fn simulate_multitype_capped(
    m: &MultiTypeModel,
    horizon: f64,
    noise: &CanonicalNoise,
    max_events: usize,
) -> Result<EventStream> {
    m.validate()?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(HawkesError::param("horizon", "must be finite and positive"));
    }
    let d = m.d;
    let h = m.effective_kernels()?;
    for (i, row) in h.iter().enumerate() {
        for (j, k) in row.iter().enumerate() {
            if !(k.is_non_increasing() && m.initial(i, j).is_non_increasing()) {
                return Err(HawkesError::Precondition(format!(
                    "thinning needs non-increasing kernel and initial condition at ({i}, {j})"
                )));
            }
        }
    }
    if !m.allow_unstable {
        let s = stability(m)?;
        if !s.stable {
            return Err(HawkesError::Supercritical(format!(
                "spectral radius {} ≥ 1 (set allow_unstable to override)",
                s.radius
            )));
        }
    }
    let mut states: Vec<Vec<ImpulseState>> = (0..d)
        .map(|i| (0..d).map(|j| ImpulseState::new(h[i][j].clone(), m.initial(i, j))).collect())
        .collect();
    let mut fields: Vec<PlanarField> = (0..d).map(|e| noise.field(e as u64)).collect();
    let mut stream = EventStream::new();
    let mut now = 0.0;
    let loads = |states: &[Vec<ImpulseState>]| -> Vec<Vec<f64>> {
        states.iter().map(|r| r.iter().map(|s| s.load()).collect()).collect()
    };
    loop {
        let z = loads(&states);
        let levels: Vec<f64> = m.lambdas.iter().map(|l| l.bound(&z)).collect();
        let mut best: Option<(usize, f64, f64)> = None;
        for (e, f) in fields.iter_mut().enumerate() {
            if let Some(p) = f.next_after(now, levels[e]).filter(|p| p.t <= horizon) {
                if best.is_none_or(|b| p.t < b.1) {
                    best = Some((e, p.t, p.u));
                }
            }
        }
        let Some((e, t, u)) = best else {
            return Ok(stream);
        };
        now = t;
        for s in states.iter_mut().flatten() {
            s.advance_to(t);
        }
        let rate = m.lambdas[e].at(&loads(&states));
        if rate > levels[e] * (1.0 + crate::intensity::ENVELOPE_SLACK) {
            return Err(HawkesError::EnvelopeViolation {
                time: t,
                rate,
                envelope: levels[e],
            });
        }
        if u < rate {
            if stream.len() >= max_events {
                return Err(HawkesError::TooManyEvents { cap: max_events, time: t });
            }
            for s in states[e].iter_mut() {
                s.jump();
            }
            stream.push(
                t,
                EventMark {
                    kind: e as u16,
                    ..EventMark::default()
                },
            )?;
        }
    }
}

/// Events per type.
pub fn type_counts(events: &EventStream, d: usize) -> Vec<u64> {
    let mut c = vec![0; d];
    for mk in events.marks() {
        if let Some(x) = c.get_mut(mk.kind as usize) {
            *x += 1;
        }
    }
    c
}
