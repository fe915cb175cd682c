//! Shared-randomness coupling of two processes, pathwise domination checks,
//! overlap estimates and the regeneration (recurrence) scheme.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::intensity::{self, Modulus, RateMap};
use crate::kernels::Kernel;
use crate::noise::CanonicalNoise;
use crate::quad::{self, Integral};
use crate::samplers::{simulate_thinning, SimConfig, Thinner};
use crate::state::{discrepancy_after, Discrepancy, EventStream, ImpulseState, InitialCondition};
use crate::stats;

/// Two trajectories driven by the same planar field.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingRecord {
    pub noise: CanonicalNoise,
    pub stream_a: EventStream,
    pub stream_b: EventStream,
    /// Symmetric difference `ΔS` on `[0, horizon]`.
    pub delta: Discrepancy,
}

impl CouplingRecord {
    /// `L`: the last discrepancy time.
    pub fn last_discrepancy(&self) -> Option<f64> {
        self.delta.last
    }

    pub fn coupled(&self) -> bool {
        self.delta.delta_count == 0
    }

    /// Times of `ΔS`.
    pub fn delta_times(&self) -> Vec<f64> {
        sym_diff(self.stream_a.times(), self.stream_b.times())
    }
}

fn sym_diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(&x), Some(&y)) if x < y => {
                out.push(x);
                i += 1;
            }
            (Some(&x), None) => {
                out.push(x);
                i += 1;
            }
            (_, Some(&y)) => {
                out.push(y);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

/// Run both legs on the field of `noise`.
pub fn couple(cfg_a: &SimConfig, cfg_b: &SimConfig, noise: &CanonicalNoise) -> Result<CouplingRecord> {
    if cfg_a.horizon != cfg_b.horizon {
        return Err(HawkesError::param("horizon", "coupled legs must share the horizon"));
    }
    let stream_a = simulate_thinning(cfg_a, noise)?;
    let stream_b = simulate_thinning(cfg_b, noise)?;
    let delta = discrepancy_after(stream_a.times(), stream_b.times(), 0.0);
    Ok(CouplingRecord {
        noise: *noise,
        stream_a,
        stream_b,
        delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominationCheck {
    pub holds: bool,
    pub violation_time: Option<f64>,
}

fn grid_points(horizon: f64, extra: &[f64]) -> Vec<f64> {
    let mut g = intensity::geometric_grid(1000, 1e-6, 1e6);
    g.extend((0..=10_000).map(|i| horizon * i as f64 / 10_000.0));
    g.extend(extra.iter().copied().filter(|x| *x >= 0.0));
    g.sort_by(|x, y| x.total_cmp(y));
    g.dedup();
    g
}

/// Grid check of the ordering hypotheses: `h_a ≤ h_b`, `g_a ≤ g_b`,
/// `λ_a(x) ≤ λ_b(y)` for `x ≤ y`, and ordered modulators.
pub fn check_ordering(a: &SimConfig, b: &SimConfig) -> Result<()> {
    let mut breaks = a.kernel.breakpoints();
    breaks.extend(b.kernel.breakpoints());
    breaks.extend(a.initial.breakpoints());
    breaks.extend(b.initial.breakpoints());
    // just left of each jump as well
    let lefts: Vec<f64> = breaks.iter().map(|x| x * (1.0 - 1e-12)).collect();
    breaks.extend(lefts);
    let ts = grid_points(a.horizon.max(b.horizon), &breaks);
    for &t in &ts {
        if a.kernel.at(t) > b.kernel.at(t) {
            return Err(HawkesError::Precondition(format!("kernel ordering fails at t={t}")));
        }
        if a.initial.at(t) > b.initial.at(t) {
            return Err(HawkesError::Precondition(format!("initial-condition ordering fails at t={t}")));
        }
        if a.intensity.p_at(t) > b.intensity.p_at(t) || a.intensity.q_at(t) > b.intensity.q_at(t) {
            return Err(HawkesError::Precondition(format!("modulator ordering fails at t={t}")));
        }
    }
    let (la, lb) = (a.intensity.lambda(), b.intensity.lambda());
    let mut zs = intensity::geometric_grid(1000, 1e-6, 1e6);
    zs.extend(la.breakpoints());
    zs.extend(lb.breakpoints());
    for &y in &zs {
        if la.sup_up_to(y) > lb.at(y) {
            return Err(HawkesError::Precondition(format!("rate ordering fails at z={y}")));
        }
    }
    Ok(())
}

fn rates_at(cfg: &SimConfig, events: &[f64], times: &[f64]) -> Vec<f64> {
    let mut st = ImpulseState::new(cfg.kernel.clone(), cfg.initial.clone());
    let mut k = 0;
    times
        .iter()
        .map(|&t| {
            while k < events.len() && events[k] < t {
                st.advance_to(events[k]);
                st.jump();
                k += 1;
            }
            st.advance_to(t);
            cfg.intensity.rate_at(st.load(), t)
        })
        .collect()
}

/// `stream_a ⊆ stream_b` and `λ_a(z_a(t−)) ≤ λ_b(z_b(t−))` at every event time.
pub fn verify_domination(rec: &CouplingRecord, a: &SimConfig, b: &SimConfig) -> DominationCheck {
    let (ta, tb) = (rec.stream_a.times(), rec.stream_b.times());
    let mut all: Vec<f64> = ta.iter().chain(tb).copied().collect();
    all.sort_by(|x, y| x.total_cmp(y));
    all.dedup();
    let extra_a: Vec<f64> = sym_diff(ta, tb)
        .into_iter()
        .filter(|t| ta.binary_search_by(|x| x.total_cmp(t)).is_ok())
        .collect();
    let ra = rates_at(a, ta, &all);
    let rb = rates_at(b, tb, &all);
    let first_rate = all
        .iter()
        .zip(ra.iter().zip(&rb))
        .find(|(_, (x, y))| x > y)
        .map(|(t, _)| *t);
    let violation_time = match (extra_a.first(), first_rate) {
        (Some(&x), Some(y)) => Some(x.min(y)),
        (x, y) => x.copied().or(y),
    };
    DominationCheck {
        holds: violation_time.is_none(),
        violation_time,
    }
}

/// `∫₀^∞ φ(f)`.
pub fn modulus_mass(phi: &Modulus, f: &InitialCondition) -> Integral {
    intensity::integral_of_modulus(phi, |t| f.at(t), f.mass(), &f.breakpoints())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub replicas: usize,
    pub coupled: usize,
    pub empirical_overlap: f64,
    pub sigma: f64,
    /// `∫ φ(f)`
    pub phi_mass: f64,
    /// `exp(−∫ φ(f))`
    pub jensen_lower_bound: f64,
}

impl OverlapReport {
    /// Empirical overlap is at least the bound minus `k` binomial standard errors.
    pub fn consistent(&self, k: f64) -> bool {
        self.empirical_overlap >= self.jensen_lower_bound - k * self.sigma.max(stats::binomial_sigma(
            self.jensen_lower_bound,
            self.replicas,
        ))
    }
}

/// Couple a start from `f` against a start from rest on `replicas` fields.
pub fn overlap_estimate(
    f: &InitialCondition,
    base: &SimConfig,
    phi: &Modulus,
    replicas: usize,
    seed: u64,
) -> Result<OverlapReport> {
    let phi_mass = modulus_mass(phi, f)
        .value()
        .ok_or_else(|| HawkesError::Domain("∫φ(f) diverges; the overlap bound is vacuous".into()))?;
    let mut cfg_f = base.clone();
    cfg_f.initial = f.clone();
    let mut cfg_0 = base.clone();
    cfg_0.initial = InitialCondition::Zero;
    let flags: Vec<bool> = (0..replicas)
        .into_par_iter()
        .map(|r| couple(&cfg_f, &cfg_0, &CanonicalNoise::new(seed, r as u64)).map(|c| c.coupled()))
        .collect::<Result<_>>()?;
    let coupled = flags.iter().filter(|&&c| c).count();
    let p = coupled as f64 / replicas as f64;
    Ok(OverlapReport {
        replicas,
        coupled,
        empirical_overlap: p,
        sigma: stats::binomial_sigma(p, replicas),
        phi_mass,
        jensen_lower_bound: (-phi_mass).exp(),
    })
}

/// Initial condition obtained by running from rest for `burn_in` and keeping
/// the history as a pre-history (a stand-in for a draw from the stationary law).
pub fn burn_in_initial(cfg: &SimConfig, burn_in: f64, noise: &CanonicalNoise) -> Result<InitialCondition> {
    let mut c = cfg.clone();
    c.horizon = burn_in;
    c.initial = InitialCondition::Zero;
    let mut th = Thinner::new(&c, noise.field(1 << 32))?;
    th.run_until(burn_in)?;
    let times = th.stream().times().iter().map(|t| t - burn_in).collect();
    InitialCondition::pre_history(cfg.kernel.clone(), times)
}

/// `K = max(A/(1−B), 1) · ∫ φ(H)` with `A, B` the envelope of `λ`.
pub fn threshold_k(lambda: &RateMap, phi: &Modulus, kernel: &Kernel) -> Result<f64> {
    let env = lambda.envelope();
    if !env.is_subcritical() {
        return Err(HawkesError::Supercritical(format!("envelope slope B = {} ≥ 1", env.b)));
    }
    let c = intensity::check_hyp2(lambda, phi, kernel)?
        .c
        .value()
        .ok_or_else(|| HawkesError::Domain("∫φ(H) diverges".into()))?;
    Ok((env.a / (1.0 - env.b)).max(1.0) * c)
}

/// Tabulated `a ↦ ∫₀^∞ φ(f(a+u)) du` on a geometric grid, read at the lower node.
#[derive(Debug, Clone)]
pub struct ShiftedModulusTable {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl ShiftedModulusTable {
    pub fn new(f: impl Fn(f64) -> f64, tail: impl Fn(f64) -> f64, phi: &Modulus, breaks: &[f64], a_max: f64) -> Self {
        let mut nodes = vec![0.0];
        let mut a = 1e-3;
        while a < a_max {
            nodes.push(a);
            a *= 1.02;
        }
        nodes.push(a);
        let values = nodes
            .iter()
            .map(|&a| match phi.lipschitz_constant() {
                Some(l) => l * tail(a),
                None => {
                    let shifted: Vec<f64> = breaks.iter().map(|b| b - a).filter(|x| *x > 0.0).collect();
                    quad::integrate_half_line(|u| phi.at(f(a + u)), 0.0, &shifted, 1e-12).as_f64()
                }
            })
            .collect();
        ShiftedModulusTable { nodes, values }
    }

    /// Upper bound on the value at `a ≥ 0` (the function is non-increasing).
    pub fn at(&self, a: f64) -> f64 {
        let i = self.nodes.partition_point(|&x| x <= a).saturating_sub(1);
        self.values[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecurrenceOutcome {
    CoupledForever,
    ExhaustedBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    /// Entry time into the class `∫ φ(g) ≤ K` (upper-bounded).
    pub entry: f64,
    /// First decoupling from the leg restarted from rest, if any before the horizon.
    pub decoupling: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceLog {
    pub attempts: Vec<Attempt>,
    pub outcome: RecurrenceOutcome,
    pub threshold: f64,
    pub horizon: f64,
}

/// Fraction of the horizon after which a successful final attempt no longer
/// counts as coupled for good.
pub const COUPLED_CHECK_FRACTION: f64 = 0.8;

struct MainLeg {
    thinner: Thinner,
    horizon: f64,
    finished: bool,
}

impl MainLeg {
    /// Event `idx` of the main leg, simulating as needed.
    fn event(&mut self, idx: usize) -> Result<Option<f64>> {
        while self.thinner.stream().len() <= idx {
            if self.finished || self.thinner.step(self.horizon)?.is_none() {
                self.finished = true;
                return Ok(None);
            }
        }
        Ok(Some(self.thinner.stream().times()[idx]))
    }
}

/// Alternate between waiting for the load to enter `{∫ φ(g) ≤ K}` and coupling
/// against a leg restarted from rest, until a coupling survives to the horizon.
pub fn recurrence_run(
    cfg: &SimConfig,
    phi: &Modulus,
    threshold: f64,
    max_attempts: usize,
    noise: &CanonicalNoise,
) -> Result<RecurrenceLog> {
    let horizon = cfg.horizon;
    let kernel = cfg.kernel.clone();
    let g0 = cfg.initial.clone();
    let h_table = ShiftedModulusTable::new(|t| kernel.at(t), |a| kernel.tail(a), phi, &kernel.breakpoints(), horizon + 1.0);
    let g_table = ShiftedModulusTable::new(|t| g0.at(t), |a| g0.tail(a), phi, &g0.breakpoints(), horizon + 1.0);
    let mut main = MainLeg {
        thinner: Thinner::new(cfg, noise.field(0))?,
        horizon,
        finished: false,
    };
    // J(t) bound from events strictly before `t` (and at `t` when `inclusive`)
    let j_bound = |events: &[f64], t: f64, inclusive: bool| -> f64 {
        let mut j = if g0.is_zero() { 0.0 } else { g_table.at(t) };
        for &tau in events {
            if tau < t || (inclusive && tau == t) {
                j += h_table.at(t - tau);
            }
        }
        j
    };
    let mut attempts = Vec::new();
    let mut from = 0.0;
    let mut next_idx = 0usize;
    while attempts.len() < max_attempts {
        // seek the entry time
        let entry = loop {
            let next = main.event(next_idx)?;
            let end = next.unwrap_or(horizon);
            let events = main.thinner.stream().times();
            if j_bound(events, from, true) <= threshold {
                break Some(from);
            }
            if j_bound(events, end, false) <= threshold {
                let (mut lo, mut hi) = (from, end);
                while hi - lo > 1e-9 * hi.max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if j_bound(events, mid, false) <= threshold {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                break Some(hi);
            }
            match next {
                Some(t) => {
                    from = t;
                    next_idx += 1;
                }
                None => break None,
            }
        };
        let Some(entry) = entry else { break };
        // couple against a leg started from rest at `entry`
        let mut fresh = Thinner::from_rest_at(cfg, noise.field(0), entry)?;
        let mut mi = main.thinner.stream().times().partition_point(|&t| t <= entry);
        let mut fresh_next = fresh.step(horizon)?;
        let decoupling = loop {
            let m = main.event(mi)?;
            match (m, fresh_next) {
                (None, None) => break None,
                (Some(x), Some(y)) if x == y => {
                    mi += 1;
                    fresh_next = fresh.step(horizon)?;
                }
                (Some(x), Some(y)) => break Some(x.min(y)),
                (Some(x), None) => break Some(x),
                (None, Some(y)) => break Some(y),
            }
        };
        attempts.push(Attempt { entry, decoupling });
        match decoupling {
            None => {
                let outcome = if entry <= COUPLED_CHECK_FRACTION * horizon {
                    RecurrenceOutcome::CoupledForever
                } else {
                    RecurrenceOutcome::ExhaustedBudget
                };
                return Ok(RecurrenceLog {
                    attempts,
                    outcome,
                    threshold,
                    horizon,
                });
            }
            Some(u) => {
                from = u;
                let times = main.thinner.stream().times();
                next_idx = times.partition_point(|&t| t <= u);
            }
        }
    }
    Ok(RecurrenceLog {
        attempts,
        outcome: RecurrenceOutcome::ExhaustedBudget,
        threshold,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::IntensityFn;

    fn cfg(a: f64, b: f64, g0: InitialCondition, horizon: f64) -> SimConfig {
        SimConfig::new(Kernel::exponential(1.0).unwrap(), IntensityFn::linear(a, b).unwrap(), g0, horizon)
    }

    #[test]
    fn identical_legs_agree() {
        let c = cfg(1.0, 0.5, InitialCondition::Zero, 50.0);
        let rec = couple(&c, &c, &CanonicalNoise::new(1, 1)).unwrap();
        assert!(rec.coupled());
        assert_eq!(rec.last_discrepancy(), None);
        assert!(verify_domination(&rec, &c, &c).holds);
    }

    #[test]
    fn ordered_pair_is_nested() {
        let a = cfg(1.0, 0.4, InitialCondition::Zero, 50.0);
        let b = cfg(1.2, 0.5, InitialCondition::function(Kernel::exponential(2.0).unwrap()), 50.0);
        check_ordering(&a, &b).unwrap();
        for s in 0..200 {
            let rec = couple(&a, &b, &CanonicalNoise::new(2, s)).unwrap();
            assert!(verify_domination(&rec, &a, &b).holds);
            // ΔS = S_b \ S_a
            let only_b: Vec<f64> = rec
                .stream_b
                .times()
                .iter()
                .copied()
                .filter(|t| !rec.stream_a.times().contains(t))
                .collect();
            assert_eq!(rec.delta_times(), only_b);
        }
    }

    #[test]
    fn broken_ordering_is_refused() {
        let a = SimConfig::new(
            Kernel::exponential(2.0).unwrap(),
            IntensityFn::linear(1.0, 0.4).unwrap(),
            InitialCondition::Zero,
            10.0,
        );
        let b = cfg(1.0, 0.5, InitialCondition::Zero, 10.0);
        assert!(matches!(check_ordering(&a, &b), Err(HawkesError::Precondition(_))));
    }

    #[test]
    fn overlap_of_zero_start_is_one() {
        let c = cfg(1.0, 0.5, InitialCondition::Zero, 20.0);
        let phi = Modulus::lipschitz(0.5).unwrap();
        let r = overlap_estimate(&InitialCondition::Zero, &c, &phi, 50, 0).unwrap();
        assert_eq!(r.empirical_overlap, 1.0);
        assert_eq!(r.jensen_lower_bound, 1.0);
        let f = InitialCondition::function(Kernel::exponential(1.0).unwrap());
        let m1 = modulus_mass(&phi, &f).value().unwrap();
        let m2 = modulus_mass(&phi, &f.scaled(2.0).unwrap()).value().unwrap();
        assert!(m2 > m1);
    }

    #[test]
    fn threshold_for_linear_model() {
        let k = threshold_k(
            &RateMap::linear(1.0, 0.5).unwrap(),
            &Modulus::lipschitz(1.0).unwrap(),
            &Kernel::exponential(1.0).unwrap(),
        )
        .unwrap();
        assert!((k - 2.0).abs() < 1e-12);
    }

    #[test]
    fn recurrence_from_rest_enters_immediately() {
        let c = cfg(1.0, 0.5, InitialCondition::Zero, 100.0);
        let phi = Modulus::lipschitz(1.0).unwrap();
        let log = recurrence_run(&c, &phi, 2.0, 50, &CanonicalNoise::new(0, 0)).unwrap();
        assert_eq!(log.attempts[0].entry, 0.0);
        // starting from rest the first attempt is the process against itself
        assert_eq!(log.attempts[0].decoupling, None);
        assert_eq!(log.outcome, RecurrenceOutcome::CoupledForever);
    }

    #[test]
    fn recurrence_attempts_interleave() {
        let g0 = InitialCondition::function(Kernel::exponential(1.0).unwrap().with_scale(6.0).unwrap());
        let c = cfg(1.0, 0.5, g0, 200.0);
        let phi = Modulus::lipschitz(1.0).unwrap();
        for s in 0..20 {
            let log = recurrence_run(&c, &phi, 2.0, 100, &CanonicalNoise::new(5, s)).unwrap();
            assert!(log.attempts[0].entry > 0.0);
            let mut prev = 0.0;
            for a in &log.attempts {
                assert!(a.entry >= prev);
                if let Some(u) = a.decoupling {
                    assert!(u > a.entry);
                    prev = u;
                }
            }
        }
    }
}
