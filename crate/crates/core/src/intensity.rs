//! The rate map `λ`, its affine envelope `A + B z`, the modulus of
//! continuity `φ`, the bounded periodic modulators `p(t)`, `q(t)`, and the
//! checks for the existence, modulus and speed-of-convergence hypotheses.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{HawkesError, Result};
use crate::kernels::{self, Kernel, Verdict};
use crate::quad::{self, Integral};
use crate::state::InitialCondition;
use crate::strict;

/// Slack allowed when comparing a rate against its certified envelope.
pub const ENVELOPE_SLACK: f64 = 1e-12;

/// Geometric test grid on `[1e-6, 1e6]` with `nodes` points, plus zero.
pub fn geometric_grid(nodes: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(nodes + 1);
    g.push(0.0);
    let (l0, l1) = (lo.ln(), hi.ln());
    for i in 0..nodes {
        let f = i as f64 / (nodes - 1) as f64;
        g.push((l0 + f * (l1 - l0)).exp());
    }
    g
}

const GRID_NODES: usize = 1000;
const GRID_LO: f64 = 1e-6;
const GRID_HI: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub enum RateFamily {
    /// `a + b z`
    Linear { a: f64, b: f64 },
    /// `min(base + slope·√z, cap)`
    SqrtCap { base: f64, slope: f64, cap: Option<f64> },
    /// `levels[k]` on `[jumps[k-1], jumps[k])`; `levels.len() == jumps.len() + 1`.
    PiecewiseStep { jumps: Vec<f64>, levels: Vec<f64> },
    /// Linear interpolation on `grid` (starting at 0), constant past the last node.
    Custom { grid: Vec<f64>, values: Vec<f64> },
}

/// `λ(z) ≤ a + b z` for every `z ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub a: f64,
    pub b: f64,
}

impl Envelope {
    pub fn at(&self, z: f64) -> f64 {
        self.a + self.b * z
    }

    pub fn is_subcritical(&self) -> bool {
        self.b < 1.0
    }
}

/// The map `λ` with a certified affine envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RateRepr", into = "RateRepr")]
pub struct RateMap {
    family: RateFamily,
    envelope: Envelope,
}

impl RateMap {
    /// Builds the map and certifies `envelope` (defaulted for the families
    /// where an obvious one exists).
    pub fn new(family: RateFamily, envelope: Option<Envelope>) -> Result<Self> {
        validate_family(&family)?;
        let envelope = match envelope {
            Some(e) => e,
            None => default_envelope(&family)?,
        };
        if !(envelope.a.is_finite() && envelope.a >= 0.0 && envelope.b.is_finite() && envelope.b >= 0.0) {
            return Err(HawkesError::param("envelope", "A and B must be finite and non-negative"));
        }
        let map = RateMap { family, envelope };
        let report = map.envelope_report();
        if !report.holds {
            return Err(HawkesError::param(
                "envelope",
                format!(
                    "λ(z) exceeds {} + {}·z (worst slack {:.3e})",
                    envelope.a, envelope.b, report.min_slack
                ),
            ));
        }
        Ok(map)
    }

    pub fn linear(a: f64, b: f64) -> Result<Self> {
        RateMap::new(RateFamily::Linear { a, b }, None)
    }

    pub fn family(&self) -> &RateFamily {
        &self.family
    }

    pub fn envelope(&self) -> Envelope {
        self.envelope
    }

    /// `λ(z)`; callers guarantee `z ≥ 0`.
    #[inline]
    pub fn at(&self, z: f64) -> f64 {
        match &self.family {
            RateFamily::Linear { a, b } => a + b * z,
            RateFamily::SqrtCap { base, slope, cap } => {
                let v = base + slope * z.max(0.0).sqrt();
                match cap {
                    Some(c) => v.min(*c),
                    None => v,
                }
            }
            RateFamily::PiecewiseStep { jumps, levels } => levels[jumps.partition_point(|&j| j <= z)],
            RateFamily::Custom { grid, values } => {
                let last = grid.len() - 1;
                if z >= grid[last] {
                    values[last]
                } else {
                    kernels::interp(grid, values, z)
                }
            }
        }
    }

    /// `λ₀(z) = λ(z) − λ(0)`.
    pub fn excess(&self, z: f64) -> f64 {
        self.at(z) - self.at(0.0)
    }

    /// `sup_{0 ≤ y ≤ z} λ(y)`.
    pub fn sup_up_to(&self, z: f64) -> f64 {
        match &self.family {
            RateFamily::Custom { grid, values } => grid
                .iter()
                .zip(values)
                .take_while(|(x, _)| **x <= z)
                .map(|(_, v)| *v)
                .fold(self.at(z), f64::max),
            _ => self.at(z),
        }
    }

    pub fn is_monotone(&self) -> bool {
        match &self.family {
            RateFamily::Custom { values, .. } => values.windows(2).all(|w| w[1] >= w[0]),
            _ => true,
        }
    }

    /// Points where `λ` jumps or has a kink.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.family {
            RateFamily::PiecewiseStep { jumps, .. } => jumps.clone(),
            RateFamily::Custom { grid, .. } => grid.clone(),
            RateFamily::SqrtCap { base, slope, cap: Some(c) } if *slope > 0.0 && c > base => {
                vec![((c - base) / slope).powi(2)]
            }
            _ => Vec::new(),
        }
    }

    fn envelope_report(&self) -> EnvelopeCheck {
        let env = self.envelope;
        let mut zs = geometric_grid(GRID_NODES, GRID_LO, GRID_HI);
        zs.extend(self.breakpoints());
        let min_slack = zs
            .iter()
            .map(|&z| env.at(z) - self.at(z))
            .fold(f64::INFINITY, f64::min);
        let grid_ok = min_slack >= -ENVELOPE_SLACK;
        let analytic = match &self.family {
            RateFamily::Linear { a, b } => Some(*a <= env.a + ENVELOPE_SLACK && *b <= env.b),
            RateFamily::SqrtCap { base, slope, cap } => {
                let sqrt_ok = if env.b > 0.0 {
                    base + slope * slope / (4.0 * env.b) <= env.a + ENVELOPE_SLACK
                } else {
                    *slope == 0.0 && *base <= env.a + ENVELOPE_SLACK
                };
                let cap_ok = cap.is_some_and(|c| c <= env.a + ENVELOPE_SLACK);
                Some(sqrt_ok || cap_ok)
            }
            // piecewise constant / linear against an affine bound: checking the
            // nodes (and the flat extension) is exact
            RateFamily::PiecewiseStep { jumps, levels } => Some(
                std::iter::once(0.0)
                    .chain(jumps.iter().copied())
                    .zip(levels)
                    .all(|(z, l)| *l <= env.at(z) + ENVELOPE_SLACK),
            ),
            RateFamily::Custom { grid, values } => {
                Some(grid.iter().zip(values).all(|(z, v)| *v <= env.at(*z) + ENVELOPE_SLACK))
            }
        };
        match analytic {
            Some(ok) => EnvelopeCheck {
                holds: ok,
                min_slack,
                verdict: Verdict::Certified,
            },
            None => EnvelopeCheck {
                holds: grid_ok,
                min_slack,
                verdict: Verdict::Numerical,
            },
        }
    }

    /// Existence hypothesis: `λ ≤ A + B z`, and whether `B < 1`.
    pub fn check_hyp1(&self) -> Hyp1Report {
        let r = self.envelope_report();
        Hyp1Report {
            holds: r.holds,
            a: self.envelope.a,
            b: self.envelope.b,
            subcritical: self.envelope.is_subcritical(),
            min_slack: r.min_slack,
            verdict: r.verdict,
        }
    }
}

struct EnvelopeCheck {
    holds: bool,
    min_slack: f64,
    verdict: Verdict,
}

fn validate_family(f: &RateFamily) -> Result<()> {
    let nn = |name: &str, v: f64| {
        if v.is_finite() && v >= 0.0 {
            Ok(())
        } else {
            Err(HawkesError::param(name, format!("must be finite and non-negative, got {v}")))
        }
    };
    match f {
        RateFamily::Linear { a, b } => {
            nn("a", *a)?;
            nn("b", *b)
        }
        RateFamily::SqrtCap { base, slope, cap } => {
            nn("base", *base)?;
            nn("slope", *slope)?;
            if let Some(c) = cap {
                nn("cap", *c)?;
            }
            Ok(())
        }
        RateFamily::PiecewiseStep { jumps, levels } => {
            if levels.len() != jumps.len() + 1 {
                return Err(HawkesError::param("levels", "need exactly one more level than jump points"));
            }
            if jumps.windows(2).any(|w| !(w[1] > w[0])) || jumps.iter().any(|j| !(j.is_finite() && *j > 0.0)) {
                return Err(HawkesError::param("jumps", "must be positive, finite and strictly increasing"));
            }
            for (i, l) in levels.iter().enumerate() {
                nn(&format!("levels[{i}]"), *l)?;
            }
            if levels.windows(2).any(|w| w[1] < w[0]) {
                return Err(HawkesError::param("levels", "must be non-decreasing"));
            }
            Ok(())
        }
        RateFamily::Custom { grid, values } => kernels::validate_table(grid, values),
    }
}

fn default_envelope(f: &RateFamily) -> Result<Envelope> {
    match f {
        RateFamily::Linear { a, b } => Ok(Envelope { a: *a, b: *b }),
        RateFamily::SqrtCap { cap: Some(c), .. } => Ok(Envelope { a: *c, b: 0.0 }),
        RateFamily::SqrtCap { cap: None, .. } => Err(HawkesError::param(
            "envelope",
            "an uncapped square-root rate needs an explicit envelope [A, B]",
        )),
        RateFamily::PiecewiseStep { levels, .. } => Ok(Envelope {
            a: *levels.last().unwrap(),
            b: 0.0,
        }),
        RateFamily::Custom { values, .. } => Ok(Envelope {
            a: values.iter().copied().fold(0.0, f64::max),
            b: 0.0,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyp1Report {
    pub holds: bool,
    pub a: f64,
    pub b: f64,
    pub subcritical: bool,
    pub min_slack: f64,
    pub verdict: Verdict,
}

/// Bounded stationary signal added inside (`p`) or outside (`q`) of `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Modulator {
    Constant { value: f64 },
    /// `mean + amplitude · sin(2π t / period + phase)`
    Sine {
        mean: f64,
        amplitude: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `high` on the first `duty` fraction of each period, `low` otherwise.
    Square { low: f64, high: f64, period: f64, duty: f64 },
}

impl Modulator {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Modulator::Constant { value } => value.is_finite() && value >= 0.0,
            Modulator::Sine {
                mean,
                amplitude,
                period,
                phase,
            } => {
                amplitude >= 0.0 && mean >= amplitude && mean.is_finite() && period > 0.0 && phase.is_finite()
            }
            Modulator::Square { low, high, period, duty } => {
                low >= 0.0 && high >= 0.0 && high.is_finite() && period > 0.0 && duty > 0.0 && duty < 1.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(HawkesError::param("modulator", format!("invalid or possibly negative signal {self:?}")))
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Modulator::Constant { value } => value,
            Modulator::Sine {
                mean,
                amplitude,
                period,
                phase,
            } => (mean + amplitude * (std::f64::consts::TAU * t / period + phase).sin()).max(0.0),
            Modulator::Square { low, high, period, duty } => {
                if (t / period).fract() < duty {
                    high
                } else {
                    low
                }
            }
        }
    }

    /// `sup_t` of the signal.
    pub fn bound(&self) -> f64 {
        match *self {
            Modulator::Constant { value } => value,
            Modulator::Sine { mean, amplitude, .. } => mean + amplitude,
            Modulator::Square { low, high, .. } => low.max(high),
        }
    }

    pub fn period(&self) -> Option<f64> {
        match *self {
            Modulator::Constant { .. } => None,
            Modulator::Sine { period, .. } | Modulator::Square { period, .. } => Some(period),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modulators {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Modulator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Modulator>,
}

/// The full rate `λ(z + p(t)) + q(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityFn {
    lambda: RateMap,
    modulators: Modulators,
}

impl IntensityFn {
    pub fn new(lambda: RateMap, modulators: Modulators) -> Result<Self> {
        if let Some(p) = &modulators.p {
            p.validate()?;
        }
        if let Some(q) = &modulators.q {
            q.validate()?;
        }
        Ok(IntensityFn { lambda, modulators })
    }

    pub fn plain(lambda: RateMap) -> Self {
        IntensityFn {
            lambda,
            modulators: Modulators::default(),
        }
    }

    pub fn linear(a: f64, b: f64) -> Result<Self> {
        Ok(IntensityFn::plain(RateMap::linear(a, b)?))
    }

    pub fn lambda(&self) -> &RateMap {
        &self.lambda
    }

    pub fn modulators(&self) -> &Modulators {
        &self.modulators
    }

    pub fn envelope(&self) -> Envelope {
        self.lambda.envelope
    }

    pub fn has_modulators(&self) -> bool {
        self.modulators.p.is_some() || self.modulators.q.is_some()
    }

    #[inline]
    pub fn p_at(&self, t: f64) -> f64 {
        self.modulators.p.as_ref().map_or(0.0, |m| m.at(t))
    }

    #[inline]
    pub fn q_at(&self, t: f64) -> f64 {
        self.modulators.q.as_ref().map_or(0.0, |m| m.at(t))
    }

    /// `λ(z + p(t)) + q(t)`.
    pub fn rate(&self, z: f64, t: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return Err(HawkesError::Domain(format!("rate evaluated at z={z} < 0")));
        }
        if !(t >= 0.0) {
            return Err(HawkesError::Domain(format!("rate evaluated at t={t} < 0")));
        }
        Ok(self.rate_at(z, t))
    }

    #[inline]
    pub fn rate_at(&self, z: f64, t: f64) -> f64 {
        self.lambda.at(z + self.p_at(t)) + self.q_at(t)
    }

    /// Upper bound on the rate at any time while the load stays below `z_max`.
    pub fn bound_for_load(&self, z_max: f64) -> f64 {
        let p = self.modulators.p.as_ref().map_or(0.0, |m| m.bound());
        let q = self.modulators.q.as_ref().map_or(0.0, |m| m.bound());
        self.lambda.sup_up_to(z_max + p) + q
    }
}

/// Concave non-decreasing modulus of continuity with `φ(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModulusRepr", into = "ModulusRepr")]
pub enum Modulus {
    /// `L·x`
    Lipschitz { constant: f64 },
    /// `c·x^α`, `α ∈ (0, 1]`
    PowerConcave { alpha: f64, coefficient: f64 },
    /// Linear interpolation, extended past the last node with the last slope.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

impl Modulus {
    pub fn new(m: Modulus) -> Result<Self> {
        match &m {
            Modulus::Lipschitz { constant } => {
                if !(constant.is_finite() && *constant >= 0.0) {
                    return Err(HawkesError::param("constant", "must be finite and non-negative"));
                }
            }
            Modulus::PowerConcave { alpha, coefficient } => {
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(HawkesError::param("alpha", "must lie in (0, 1]"));
                }
                if !(coefficient.is_finite() && *coefficient >= 0.0) {
                    return Err(HawkesError::param("coefficient", "must be finite and non-negative"));
                }
            }
            Modulus::Tabulated { grid, values } => {
                kernels::validate_table(grid, values)?;
                if values[0] != 0.0 {
                    return Err(HawkesError::param("values", "φ(0) must be 0"));
                }
            }
        }
        let r = m.shape_report();
        if !(r.non_decreasing && r.concave) {
            return Err(HawkesError::param("phi", "modulus must be non-decreasing and concave"));
        }
        Ok(m)
    }

    pub fn lipschitz(constant: f64) -> Result<Self> {
        Modulus::new(Modulus::Lipschitz { constant })
    }

    pub fn power(alpha: f64, coefficient: f64) -> Result<Self> {
        Modulus::new(Modulus::PowerConcave { alpha, coefficient })
    }

    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            Modulus::Lipschitz { constant } => constant * x,
            Modulus::PowerConcave { alpha, coefficient } => coefficient * x.powf(*alpha),
            Modulus::Tabulated { grid, values } => {
                let last = grid.len() - 1;
                if x > grid[last] {
                    let slope = (values[last] - values[last - 1]) / (grid[last] - grid[last - 1]);
                    values[last] + slope * (x - grid[last])
                } else {
                    kernels::interp(grid, values, x)
                }
            }
        }
    }

    pub fn lipschitz_constant(&self) -> Option<f64> {
        match self {
            Modulus::Lipschitz { constant } => Some(*constant),
            _ => None,
        }
    }

    /// Monotonicity, concavity and `φ(0) = 0` on a geometric grid.
    pub fn shape_report(&self) -> ModulusShape {
        let xs: Vec<f64> = match self {
            Modulus::Tabulated { grid, .. } => {
                let mut g = grid.clone();
                let last = *g.last().unwrap();
                g.push(2.0 * last + 1.0);
                g
            }
            _ => geometric_grid(400, 1e-6, 1e6),
        };
        let vals: Vec<f64> = xs.iter().map(|&x| self.at(x)).collect();
        let non_decreasing = vals.windows(2).all(|w| w[1] >= w[0]);
        let slopes: Vec<f64> = xs
            .windows(2)
            .zip(vals.windows(2))
            .map(|(x, v)| (v[1] - v[0]) / (x[1] - x[0]))
            .collect();
        let concave = slopes
            .windows(2)
            .all(|s| s[1] <= s[0] * (1.0 + 1e-9) + 1e-12);
        ModulusShape {
            zero_at_origin: self.at(0.0) == 0.0,
            non_decreasing,
            concave,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusShape {
    pub zero_at_origin: bool,
    pub non_decreasing: bool,
    pub concave: bool,
}

/// `sup_x (λ(x+s) − λ(x)) ≤ factor · φ(s)` on a 2-D grid (analytic for linear
/// λ against a Lipschitz modulus).
fn modulus_dominates(lambda: &RateMap, phi: &Modulus, factor: f64) -> (bool, Verdict) {
    if let (RateFamily::Linear { b, .. }, Modulus::Lipschitz { constant }) = (&lambda.family, phi) {
        return (*b <= factor * constant * (1.0 + 1e-12), Verdict::Certified);
    }
    let ss = geometric_grid(200, 1e-6, 1e6);
    let mut xs = geometric_grid(200, 1e-6, 1e6);
    let bps = lambda.breakpoints();
    xs.extend(bps.iter().copied());
    for &s in ss.iter().skip(1) {
        let bound = factor * phi.at(s) + 1e-12;
        let worst_grid = xs.iter().map(|&x| lambda.at(x + s) - lambda.at(x)).fold(f64::MIN, f64::max);
        // the increment over a window of width s is largest when the window's
        // right end sits on a jump or kink
        let worst_bp = bps
            .iter()
            .filter(|&&c| c >= s)
            .map(|&c| lambda.at(c) - lambda.at(c - s))
            .fold(f64::MIN, f64::max);
        if worst_grid.max(worst_bp) > bound {
            return (false, Verdict::Numerical);
        }
    }
    (true, Verdict::Numerical)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyp2Report {
    pub modulus_valid: bool,
    /// `C = ∫₀^∞ φ(H(s)) ds`
    pub c: Integral,
    pub verdict: Verdict,
}

impl Hyp2Report {
    pub fn holds(&self) -> bool {
        self.modulus_valid && self.c.is_finite()
    }
}

/// Modulus hypothesis: monotone `λ`, `φ` bounds the increments of `λ`, and
/// `∫ φ(H) < ∞`.
pub fn check_hyp2(lambda: &RateMap, phi: &Modulus, kernel: &Kernel) -> Result<Hyp2Report> {
    if !lambda.is_monotone() {
        return Err(HawkesError::Precondition("the modulus hypothesis requires a non-decreasing λ".into()));
    }
    let (modulus_valid, v1) = modulus_dominates(lambda, phi, 1.0);
    let (c, v2) = match phi {
        // ∫ H = ∫ t h(t) dt
        Modulus::Lipschitz { constant } => (
            match kernel.first_moment() {
                Integral::Finite(m) => Integral::Finite(constant * m),
                Integral::Infinite if *constant == 0.0 => Integral::Finite(0.0),
                Integral::Infinite => Integral::Infinite,
            },
            Verdict::Certified,
        ),
        _ => (
            quad::integrate_half_line(|s| phi.at(kernel.tail(s)), 0.0, &kernel.breakpoints(), 1e-11),
            Verdict::Numerical,
        ),
    };
    let verdict = if v1 == Verdict::Certified && v2 == Verdict::Certified {
        Verdict::Certified
    } else {
        Verdict::Numerical
    };
    Ok(Hyp2Report {
        modulus_valid,
        c,
        verdict,
    })
}

/// `∫₀^∞ φ(f(t)) dt` for a kernel-shaped profile.
pub fn integral_of_modulus(phi: &Modulus, f: impl Fn(f64) -> f64, mass: f64, breaks: &[f64]) -> Integral {
    match phi {
        Modulus::Lipschitz { constant } => Integral::Finite(constant * mass),
        _ => quad::integrate_half_line(|t| phi.at(f(t)), 0.0, breaks, 1e-11),
    }
}

/// Tail of the normalized speed kernel `h̃ = B φ(h) / B̃`.
#[derive(Debug, Clone)]
pub struct SpeedKernel {
    kernel: Kernel,
    phi: Modulus,
    /// `∫ φ(h)`
    phi_mass: f64,
}

impl SpeedKernel {
    pub fn new(kernel: &Kernel, phi: &Modulus) -> Result<Self> {
        let mass = integral_of_modulus(phi, |t| kernel.at(t), kernel.mass(), &kernel.breakpoints());
        match mass {
            Integral::Finite(m) if m > 0.0 => Ok(SpeedKernel {
                kernel: kernel.clone(),
                phi: phi.clone(),
                phi_mass: m,
            }),
            Integral::Finite(_) => Err(HawkesError::Domain("∫φ(h) = 0: the speed kernel is degenerate".into())),
            Integral::Infinite => Err(HawkesError::Domain("∫φ(h) diverges".into())),
        }
    }

    /// `∫ φ(h)`.
    pub fn phi_mass(&self) -> f64 {
        self.phi_mass
    }

    /// `h̃(t)`
    pub fn at(&self, t: f64) -> f64 {
        self.phi.at(self.kernel.at(t)) / self.phi_mass
    }

    /// `∫_t^∞ h̃`
    pub fn tail(&self, t: f64) -> f64 {
        match self.phi {
            Modulus::Lipschitz { .. } => self.kernel.tail(t) / self.kernel.mass(),
            _ => quad::integrate_half_line(|x| self.phi.at(self.kernel.at(x)), t.max(0.0), &self.kernel.breakpoints(), 1e-13)
                .as_f64()
                / self.phi_mass,
        }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn modulus(&self) -> &Modulus {
        &self.phi
    }
}

/// Outcome of the numerical `C₄` stabilization diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C4Estimate {
    /// Running supremum of the ratio over the largest decade of `t`.
    pub last_decade_sup: f64,
    pub previous_decade_sup: f64,
    /// `(max − min) / max` of the ratio over the largest decade.
    pub last_decade_oscillation: f64,
    pub stabilized: bool,
    /// The tail of `h̃` vanished inside the probed range (compact support).
    pub tail_vanishes: bool,
    pub t_max: f64,
    pub samples: Vec<(f64, f64)>,
}

/// Ratio `Σ_{n≥1} B̃ⁿ n H̃(t/2n) / H̃(t)` with the series cut at `B̃ⁿ n < 1e-12`.
pub fn c4_ratio(speed: &SpeedKernel, b_tilde: f64, t: f64) -> f64 {
    let denom = speed.tail(t);
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    let mut num = 0.0;
    let mut n = 1usize;
    loop {
        let w = b_tilde.powi(n as i32) * n as f64;
        if w < 1e-12 || n > 100_000 {
            break;
        }
        num += w * speed.tail(t / (2.0 * n as f64));
        n += 1;
    }
    num / denom
}

/// Relative growth of the decade supremum tolerated before the diagnostic
/// reports non-stabilization.
pub const C4_GROWTH_TOL: f64 = 0.05;

pub fn estimate_c4(speed: &SpeedKernel, b_tilde: f64, t_max: f64) -> C4Estimate {
    const PER_DECADE: usize = 16;
    let decades = t_max.log10().ceil().max(2.0) as usize;
    let mut samples = Vec::with_capacity(decades * PER_DECADE + 1);
    let mut tail_vanishes = false;
    for i in 0..=decades * PER_DECADE {
        let t = 10f64.powf(i as f64 / PER_DECADE as f64);
        let r = c4_ratio(speed, b_tilde, t);
        if !r.is_finite() {
            tail_vanishes = true;
            samples.push((t, r));
            break;
        }
        samples.push((t, r));
    }
    let n = samples.len();
    let last: Vec<f64> = samples[n.saturating_sub(PER_DECADE + 1)..].iter().map(|p| p.1).collect();
    let prev: Vec<f64> = samples[n.saturating_sub(2 * PER_DECADE + 1)..n.saturating_sub(PER_DECADE)]
        .iter()
        .map(|p| p.1)
        .collect();
    let last_sup = last.iter().copied().fold(f64::MIN, f64::max);
    let last_min = last.iter().copied().fold(f64::MAX, f64::min);
    let prev_sup = prev.iter().copied().fold(f64::MIN, f64::max);
    let stabilized = !tail_vanishes && last_sup.is_finite() && last_sup <= prev_sup * (1.0 + C4_GROWTH_TOL);
    C4Estimate {
        last_decade_sup: last_sup,
        previous_decade_sup: prev_sup,
        last_decade_oscillation: if last_sup > 0.0 { (last_sup - last_min) / last_sup } else { 0.0 },
        stabilized,
        tail_vanishes,
        t_max: samples.last().map_or(0.0, |p| p.0),
        samples,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyp4Report {
    /// `B̃ = B ∫ φ(h)`
    pub b_tilde: f64,
    pub subcritical_tilde: bool,
    /// `sup_x(λ(x+s) − λ(x)) ≤ B φ(s)`, the form under which the dominating
    /// forest has rates `B φ(g₀)` and `B φ(h)`.
    pub scaled_modulus_valid: bool,
    pub c4: Option<C4Estimate>,
    /// `∫ φ(g₀)`
    pub g_tilde_mass: Integral,
    pub g_tilde_integrable: bool,
    pub verdict: Verdict,
}

impl Hyp4Report {
    pub fn holds(&self) -> bool {
        self.subcritical_tilde && self.g_tilde_integrable && self.c4.as_ref().is_some_and(|c| c.stabilized)
    }
}

/// Default upper end of the `t` range probed by the `C₄` diagnostic.
pub const C4_T_MAX: f64 = 1e8;

/// Speed-of-convergence hypothesis.
pub fn check_hyp4(lambda: &RateMap, phi: &Modulus, kernel: &Kernel, g0: &InitialCondition) -> Result<Hyp4Report> {
    let b = lambda.envelope().b;
    let phi_h = integral_of_modulus(phi, |t| kernel.at(t), kernel.mass(), &kernel.breakpoints());
    let b_tilde = match phi_h {
        Integral::Finite(m) => b * m,
        Integral::Infinite => f64::INFINITY,
    };
    let subcritical_tilde = b_tilde < 1.0;
    let c4 = if subcritical_tilde && b_tilde > 0.0 {
        SpeedKernel::new(kernel, phi).ok().map(|sk| estimate_c4(&sk, b_tilde, C4_T_MAX))
    } else if b_tilde == 0.0 {
        Some(C4Estimate {
            last_decade_sup: 0.0,
            previous_decade_sup: 0.0,
            last_decade_oscillation: 0.0,
            stabilized: true,
            tail_vanishes: false,
            t_max: 0.0,
            samples: Vec::new(),
        })
    } else {
        None
    };
    let g_tilde_mass = integral_of_modulus(phi, |t| g0.at(t), g0.mass(), &g0.breakpoints());
    let (scaled_modulus_valid, v) = modulus_dominates(lambda, phi, b);
    Ok(Hyp4Report {
        b_tilde,
        subcritical_tilde,
        scaled_modulus_valid,
        c4,
        g_tilde_integrable: g_tilde_mass.is_finite(),
        g_tilde_mass,
        verdict: if v == Verdict::Certified && phi.lipschitz_constant().is_some() {
            // C₄ itself is only ever estimated
            Verdict::Numerical
        } else {
            Verdict::Numerical
        },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateRepr {
    family: String,
    #[serde(default)]
    params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    envelope: Option<[f64; 2]>,
}

#[derive(Deserialize)]
struct LinearParams {
    a: f64,
    b: f64,
}

#[derive(Deserialize)]
struct SqrtParams {
    base: f64,
    slope: f64,
    #[serde(default)]
    cap: Option<f64>,
}

#[derive(Deserialize)]
struct StepParams {
    jumps: Vec<f64>,
    levels: Vec<f64>,
}

#[derive(Deserialize)]
struct TableParams {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RateRepr> for RateMap {
    type Error = HawkesError;

    fn try_from(r: RateRepr) -> Result<Self> {
        let family = match r.family.as_str() {
            "linear" => {
                let p: LinearParams = strict::from_value(&r.params, "params")?;
                RateFamily::Linear { a: p.a, b: p.b }
            }
            "sqrt_cap" => {
                let p: SqrtParams = strict::from_value(&r.params, "params")?;
                RateFamily::SqrtCap {
                    base: p.base,
                    slope: p.slope,
                    cap: p.cap,
                }
            }
            "piecewise_step" => {
                let p: StepParams = strict::from_value(&r.params, "params")?;
                RateFamily::PiecewiseStep {
                    jumps: p.jumps,
                    levels: p.levels,
                }
            }
            "custom" => {
                let p: TableParams = strict::from_value(&r.params, "params")?;
                RateFamily::Custom {
                    grid: p.grid,
                    values: p.values,
                }
            }
            other => return Err(HawkesError::Config(format!("unknown lambda family `{other}`"))),
        };
        RateMap::new(family, r.envelope.map(|[a, b]| Envelope { a, b }))
    }
}

impl From<RateMap> for RateRepr {
    fn from(m: RateMap) -> Self {
        let (family, params) = match m.family {
            RateFamily::Linear { a, b } => ("linear", serde_json::json!({"a": a, "b": b})),
            RateFamily::SqrtCap { base, slope, cap } => (
                "sqrt_cap",
                match cap {
                    Some(c) => serde_json::json!({"base": base, "slope": slope, "cap": c}),
                    None => serde_json::json!({"base": base, "slope": slope}),
                },
            ),
            RateFamily::PiecewiseStep { jumps, levels } => {
                ("piecewise_step", serde_json::json!({"jumps": jumps, "levels": levels}))
            }
            RateFamily::Custom { grid, values } => ("custom", serde_json::json!({"grid": grid, "values": values})),
        };
        RateRepr {
            family: family.to_string(),
            params,
            envelope: Some([m.envelope.a, m.envelope.b]),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModulusRepr {
    family: String,
    #[serde(default)]
    params: Value,
}

#[derive(Deserialize)]
struct LipschitzParams {
    constant: f64,
}

#[derive(Deserialize)]
struct PowerParams {
    alpha: f64,
    coefficient: f64,
}

impl TryFrom<ModulusRepr> for Modulus {
    type Error = HawkesError;

    fn try_from(r: ModulusRepr) -> Result<Self> {
        let m = match r.family.as_str() {
            "lipschitz" => {
                let p: LipschitzParams = strict::from_value(&r.params, "params")?;
                Modulus::Lipschitz { constant: p.constant }
            }
            "power_concave" => {
                let p: PowerParams = strict::from_value(&r.params, "params")?;
                Modulus::PowerConcave {
                    alpha: p.alpha,
                    coefficient: p.coefficient,
                }
            }
            "tabulated" => {
                let p: TableParams = strict::from_value(&r.params, "params")?;
                Modulus::Tabulated {
                    grid: p.grid,
                    values: p.values,
                }
            }
            other => return Err(HawkesError::Config(format!("unknown phi family `{other}`"))),
        };
        Modulus::new(m)
    }
}

impl From<Modulus> for ModulusRepr {
    fn from(m: Modulus) -> Self {
        let (family, params) = match m {
            Modulus::Lipschitz { constant } => ("lipschitz", serde_json::json!({ "constant": constant })),
            Modulus::PowerConcave { alpha, coefficient } => (
                "power_concave",
                serde_json::json!({"alpha": alpha, "coefficient": coefficient}),
            ),
            Modulus::Tabulated { grid, values } => ("tabulated", serde_json::json!({"grid": grid, "values": values})),
        };
        ModulusRepr {
            family: family.to_string(),
            params,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn rate_examples() {
        let f = IntensityFn::linear(1.0, 0.5).unwrap();
        assert_eq!(f.rate(2.0, 0.0).unwrap(), 2.0);
        let f = IntensityFn::linear(1.0, 1.0).unwrap();
        assert_eq!(f.rate(0.0, 3.0).unwrap(), 1.0);
        let f = IntensityFn::new(
            RateMap::linear(2.0, 3.0).unwrap(),
            Modulators {
                p: None,
                q: Some(Modulator::Constant { value: 1.0 }),
            },
        )
        .unwrap();
        assert_eq!(f.rate(1.0, 7.0).unwrap(), 6.0);
        assert!(matches!(f.rate(-1.0, 0.0), Err(HawkesError::Domain(_))));
    }

    #[test]
    fn hyp1_examples() {
        let r = RateMap::linear(1.0, 0.5).unwrap().check_hyp1();
        assert!(r.holds && r.subcritical && r.b == 0.5);
        let r = RateMap::linear(1.0, 1.5).unwrap().check_hyp1();
        assert!(r.holds && !r.subcritical);

        let sqrt = RateMap::new(
            RateFamily::SqrtCap {
                base: 1.0,
                slope: 1.0,
                cap: None,
            },
            Some(Envelope { a: 1.25, b: 1.0 }),
        )
        .unwrap();
        assert!(sqrt.check_hyp1().holds);
        // oracle: grid minimisation of A + Bz − λ(z)
        let min = (0..200_000)
            .map(|i| i as f64 * 1e-4)
            .map(|z| 1.25 + z - (1.0 + z.sqrt()))
            .fold(f64::MAX, f64::min);
        assert!((-1e-12..1e-8).contains(&min));

        // an envelope that is too tight is rejected at construction
        assert!(RateMap::new(
            RateFamily::SqrtCap {
                base: 1.0,
                slope: 1.0,
                cap: None
            },
            Some(Envelope { a: 1.2, b: 1.0 })
        )
        .is_err());
    }

    #[test]
    fn hyp2_examples() {
        let lam = RateMap::linear(0.0, 1.0).unwrap();
        let id = Modulus::lipschitz(1.0).unwrap();

        let e = Kernel::exponential(1.0).unwrap();
        let r = check_hyp2(&lam, &id, &e).unwrap();
        assert!(r.modulus_valid);
        // oracle: quadrature of φ(H(s)) = e^{-s}
        let q = quad::integrate_half_line(|s| e.tail(s), 0.0, &[], 1e-12).value().unwrap();
        assert_abs_diff_eq!(r.c.value().unwrap(), q, epsilon = 1e-9);
        assert_abs_diff_eq!(r.c.value().unwrap(), 1.0, epsilon = 1e-12);

        let p2 = Kernel::power_law(2.0).unwrap();
        let r = check_hyp2(&lam, &id, &p2).unwrap();
        let q = quad::integrate_half_line(|s| p2.tail(s), 0.0, &[], 1e-12).value().unwrap();
        assert_abs_diff_eq!(r.c.value().unwrap(), q, epsilon = 1e-8);
        assert_abs_diff_eq!(r.c.value().unwrap(), 1.0, epsilon = 1e-12);

        let sqrt_phi = Modulus::power(0.5, 1.0).unwrap();
        let p1 = Kernel::power_law(1.0).unwrap();
        let r = check_hyp2(&lam, &sqrt_phi, &p1).unwrap();
        assert_eq!(r.c, Integral::Infinite);

        let wiggly = RateMap::new(
            RateFamily::Custom {
                grid: vec![0.0, 1.0, 2.0],
                values: vec![1.0, 2.0, 1.5],
            },
            None,
        )
        .unwrap();
        assert!(matches!(check_hyp2(&wiggly, &id, &e), Err(HawkesError::Precondition(_))));
    }

    #[test]
    fn modulus_of_step_rate() {
        let step = RateMap::new(
            RateFamily::PiecewiseStep {
                jumps: vec![1.0, 3.0],
                levels: vec![1.0, 1.2, 1.5],
            },
            None,
        )
        .unwrap();
        // a jump of 0.3 cannot be bounded by a modulus vanishing at 0
        let (ok, _) = modulus_dominates(&step, &Modulus::lipschitz(1.0).unwrap(), 1.0);
        assert!(!ok);
    }

    #[test]
    fn hyp4_examples() {
        let lam = RateMap::linear(1.0, 0.5).unwrap();
        let id = Modulus::lipschitz(1.0).unwrap();
        let g0 = InitialCondition::Zero;
        for k in [Kernel::exponential(1.0).unwrap(), Kernel::power_law(2.0).unwrap()] {
            let r = check_hyp4(&lam, &id, &k, &g0).unwrap();
            assert_abs_diff_eq!(r.b_tilde, 0.5, epsilon = 1e-15);
            assert!(r.subcritical_tilde);
        }
        let r = check_hyp4(&lam, &id, &Kernel::power_law(2.0).unwrap(), &g0).unwrap();
        let c4 = r.c4.as_ref().unwrap();
        assert!(c4.stabilized, "{c4:?}");
        assert!(c4.last_decade_sup.is_finite());
        assert!(r.holds());
    }

    #[test]
    fn c4_ratio_matches_direct_series() {
        // oracle: the series written out with closed-form power-law tails
        let sk = SpeedKernel::new(&Kernel::power_law(2.0).unwrap(), &Modulus::lipschitz(1.0).unwrap()).unwrap();
        let t: f64 = 1000.0;
        let mut num = 0.0;
        for n in 1..200 {
            num += 0.5f64.powi(n) * n as f64 * (1.0 + t / (2.0 * n as f64)).powi(-2);
        }
        let direct = num / (1.0 + t).powi(-2);
        assert_abs_diff_eq!(c4_ratio(&sk, 0.5, t), direct, epsilon = 1e-8 * direct);
    }

    #[test]
    fn modulus_shapes() {
        assert!(Modulus::new(Modulus::Tabulated {
            grid: vec![0.0, 1.0, 2.0],
            values: vec![0.0, 1.0, 3.0]
        })
        .is_err());
        let t = Modulus::new(Modulus::Tabulated {
            grid: vec![0.0, 1.0, 2.0],
            values: vec![0.0, 1.0, 1.5],
        })
        .unwrap();
        assert_eq!(t.at(4.0), 2.5);
        assert!(Modulus::power(1.5, 1.0).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let m = RateMap::new(
            RateFamily::PiecewiseStep {
                jumps: vec![1.0],
                levels: vec![1.0, 2.0],
            },
            Some(Envelope { a: 2.0, b: 0.0 }),
        )
        .unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<RateMap>(&s).unwrap(), m);
        let phi = Modulus::power(0.5, 2.0).unwrap();
        let s = serde_json::to_string(&phi).unwrap();
        assert_eq!(serde_json::from_str::<Modulus>(&s).unwrap(), phi);
    }

    proptest! {
        #[test]
        fn monotone_rates_are_non_decreasing(a in 0.0f64..5.0, b in 0.0f64..3.0, slope in 0.0f64..3.0) {
            let maps = [
                RateMap::linear(a, b).unwrap(),
                RateMap::new(RateFamily::SqrtCap { base: a, slope, cap: Some(a + 2.0) }, None).unwrap(),
            ];
            for m in maps {
                let mut prev = m.at(0.0);
                for i in 1..2000 {
                    let v = m.at(i as f64 * 0.01);
                    prop_assert!(v >= prev);
                    prev = v;
                }
            }
        }

        #[test]
        fn lipschitz_increment_is_exact(b in 0.0f64..2.0, extra in 0.0f64..1.0, x in 0.0f64..100.0, s in 0.0f64..100.0) {
            let m = RateMap::linear(1.0, b).unwrap();
            let phi = Modulus::lipschitz(b + extra).unwrap();
            prop_assert!(modulus_dominates(&m, &phi, 1.0).0);
            let inc = m.at(x + s) - m.at(x);
            prop_assert!((inc - b * s).abs() <= 1e-12 * (1.0 + b * (x + s)));
        }

        #[test]
        fn modulus_scaling_and_subadditivity(alpha in 0.05f64..1.0, c in 0.0f64..5.0, x in 0.0f64..100.0, y in 0.0f64..100.0, k in 0.0f64..10.0) {
            let phi = Modulus::power(alpha, c).unwrap();
            prop_assert!(phi.at(x + y) <= phi.at(x) + phi.at(y) + 1e-12);
            prop_assert!(phi.at(k * x) <= k.max(1.0) * phi.at(x) * (1.0 + 1e-12) + 1e-12);
        }
    }
}
