//! The Markov state of the process: the impulse function
//! `g_t(s) = g₀(t+s) + Σ_{τ ≤ t} h(t+s−τ)`, the event stream it is built from,
//! and the distances used to compare states and trajectories.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::kernels::{Kernel, KernelFamily};
use crate::quad;

/// The initial impulse function `g₀`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    #[default]
    Zero,
    /// A kernel-shaped profile (any family, any scale).
    Function { profile: Kernel },
    /// `g₀(t) = Σ_{τ ∈ times} h(t − τ)` for a pre-history with `τ ≤ 0`.
    PreHistory { kernel: Kernel, times: Vec<f64> },
}

impl InitialCondition {
    pub fn function(profile: Kernel) -> Self {
        InitialCondition::Function { profile }
    }

    pub fn pre_history(kernel: Kernel, times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !(t.is_finite() && *t <= 0.0)) {
            return Err(HawkesError::param("times", "pre-history points must be finite and ≤ 0"));
        }
        Ok(InitialCondition::PreHistory { kernel, times })
    }

    pub fn validate(&self) -> Result<()> {
        if let InitialCondition::PreHistory { times, .. } = self {
            if times.iter().any(|t| !(t.is_finite() && *t <= 0.0)) {
                return Err(HawkesError::param("initial.times", "pre-history points must be finite and ≤ 0"));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            InitialCondition::Zero => true,
            InitialCondition::Function { profile } => profile.scale() == 0.0,
            InitialCondition::PreHistory { kernel, times } => times.is_empty() || kernel.scale() == 0.0,
        }
    }

    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        match self {
            InitialCondition::Zero => 0.0,
            InitialCondition::Function { profile } => profile.at(t),
            InitialCondition::PreHistory { kernel, times } => times.iter().map(|&tau| kernel.at(t - tau)).sum(),
        }
    }

    /// `∫_s^∞ g₀`.
    pub fn tail(&self, s: f64) -> f64 {
        match self {
            InitialCondition::Zero => 0.0,
            InitialCondition::Function { profile } => profile.tail(s),
            InitialCondition::PreHistory { kernel, times } => times.iter().map(|&tau| kernel.tail(s - tau)).sum(),
        }
    }

    pub fn mass(&self) -> f64 {
        self.tail(0.0)
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            InitialCondition::Zero => Vec::new(),
            InitialCondition::Function { profile } => profile.breakpoints(),
            InitialCondition::PreHistory { kernel, times } => {
                let mut b: Vec<f64> = times
                    .iter()
                    .flat_map(|&tau| kernel.breakpoints().into_iter().map(move |x| x + tau))
                    .filter(|&x| x > 0.0)
                    .collect();
                b.sort_by(|x, y| x.total_cmp(y));
                b.dedup();
                b
            }
        }
    }

    pub fn is_non_increasing(&self) -> bool {
        match self {
            InitialCondition::Zero => true,
            InitialCondition::Function { profile } => profile.is_non_increasing(),
            InitialCondition::PreHistory { kernel, .. } => kernel.is_non_increasing(),
        }
    }

    /// `sup_{t ∈ [a, b]} g₀(t)` (an upper bound for pre-histories).
    pub fn sup_on(&self, a: f64, b: f64) -> f64 {
        match self {
            InitialCondition::Zero => 0.0,
            InitialCondition::Function { profile } => profile.sup_on(a, b),
            InitialCondition::PreHistory { kernel, times } => {
                times.iter().map(|&tau| kernel.sup_on(a - tau, b - tau)).sum()
            }
        }
    }

    /// Smallest `s ≥ 0` with `∫_s^∞ g₀ ≤ y`.
    pub fn inverse_tail(&self, y: f64) -> f64 {
        if let InitialCondition::Function { profile } = self {
            return profile.inverse_tail(y);
        }
        if y >= self.mass() {
            return 0.0;
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        while self.tail(hi) > y {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.tail(mid) > y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        hi
    }

    /// Same profile multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Ok(match self {
            InitialCondition::Zero => InitialCondition::Zero,
            InitialCondition::Function { profile } => InitialCondition::Function {
                profile: profile.with_scale(profile.scale() * c)?,
            },
            InitialCondition::PreHistory { kernel, times } => InitialCondition::PreHistory {
                kernel: kernel.with_scale(kernel.scale() * c)?,
                times: times.clone(),
            },
        })
    }
}

/// Cause of an event: the baseline / initial condition, or an earlier event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parent {
    Root,
    Event(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventMark {
    pub parent: Option<Parent>,
    pub generation: Option<u32>,
    pub kind: u16,
}

/// Strictly increasing event times with per-event marks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    times: Vec<f64>,
    marks: Vec<EventMark>,
}

impl EventStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        let mut s = EventStream::new();
        for t in times {
            s.push(t, EventMark::default())?;
        }
        Ok(s)
    }

    pub fn push(&mut self, time: f64, mark: EventMark) -> Result<usize> {
        if !(time.is_finite() && time >= 0.0) {
            return Err(HawkesError::Domain(format!("event time {time} is not a finite non-negative real")));
        }
        if let Some(&last) = self.times.last() {
            if time <= last {
                return Err(HawkesError::Domain(format!("event time {time} does not exceed previous {last}")));
            }
        }
        let idx = self.times.len();
        self.check_mark(idx, &mark)?;
        self.times.push(time);
        self.marks.push(mark);
        Ok(idx)
    }

    fn check_mark(&self, idx: usize, mark: &EventMark) -> Result<()> {
        match mark.parent {
            Some(Parent::Event(p)) => {
                if p >= idx {
                    return Err(HawkesError::Domain(format!("event {idx} names a later parent {p}")));
                }
                if let (Some(gc), Some(gp)) = (mark.generation, self.marks[p].generation) {
                    if gc != gp + 1 {
                        return Err(HawkesError::Domain(format!(
                            "event {idx} has generation {gc}, parent {p} has {gp}"
                        )));
                    }
                }
            }
            Some(Parent::Root) if mark.generation.is_some_and(|g| g != 0) => {
                return Err(HawkesError::Domain(format!("root event {idx} must have generation 0")));
            }
            _ => {}
        }
        Ok(())
    }

    /// Replace the marks; they are checked against the stream invariants.
    pub fn set_marks(&mut self, marks: Vec<EventMark>) -> Result<()> {
        if marks.len() != self.times.len() {
            return Err(HawkesError::Domain("mark count differs from event count".into()));
        }
        let old = std::mem::replace(&mut self.marks, marks);
        for i in 0..self.times.len() {
            let m = self.marks[i];
            if let Err(e) = self.check_mark(i, &m) {
                self.marks = old;
                return Err(e);
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn marks(&self) -> &[EventMark] {
        &self.marks
    }

    /// `N_t`: number of events at or before `t`.
    pub fn count_until(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x <= t)
    }

    /// Events with `generation == g`, for marked streams.
    pub fn generation_histogram(&self) -> Vec<usize> {
        let mut h = Vec::new();
        for m in &self.marks {
            if let Some(g) = m.generation {
                let g = g as usize;
                if h.len() <= g {
                    h.resize(g + 1, 0);
                }
                h[g] += 1;
            }
        }
        h
    }

    /// CSV rows `time,parent,generation,type`, floats with 17 significant digits.
    pub fn write_csv_rows(&self, out: &mut String, replica: Option<usize>) {
        for (t, m) in self.times.iter().zip(&self.marks) {
            if let Some(r) = replica {
                let _ = write!(out, "{r},");
            }
            let parent = match m.parent {
                None => String::new(),
                Some(Parent::Root) => "root".into(),
                Some(Parent::Event(i)) => i.to_string(),
            };
            let generation = m.generation.map(|g| g.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{parent},{generation},{}", fmt_f64(*t), m.kind);
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("time,parent,generation,type\n");
        self.write_csv_rows(&mut s, None);
        s
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Round-trip-safe decimal with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ExpCache {
    rate: f64,
    amplitude: f64,
    /// `Σ e^{-rate (now - τ)}` over recorded events.
    acc: f64,
}

/// The impulse function `g_t` at the current time `now`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseState {
    base: InitialCondition,
    kernel: Kernel,
    events: Vec<f64>,
    now: f64,
    fast: Option<ExpCache>,
}

impl ImpulseState {
    pub fn new(kernel: Kernel, base: InitialCondition) -> Self {
        Self::at_time(kernel, base, 0.0)
    }

    pub fn at_time(kernel: Kernel, base: InitialCondition, now: f64) -> Self {
        let fast = match kernel.family() {
            KernelFamily::Exponential { rate } => Some(ExpCache {
                rate: *rate,
                amplitude: kernel.scale() * rate,
                acc: 0.0,
            }),
            _ => None,
        };
        ImpulseState {
            base,
            kernel,
            events: Vec::new(),
            now,
            fast,
        }
    }

    /// Build the state at `now` from an event history (events `≤ now` count).
    pub fn from_history(kernel: Kernel, base: InitialCondition, events: &[f64], now: f64) -> Self {
        let mut st = ImpulseState::new(kernel, base);
        for &t in events.iter().filter(|&&t| t <= now) {
            st.advance_to(t);
            st.jump();
        }
        st.advance_to(now);
        st
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn events(&self) -> &[f64] {
        &self.events
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn base(&self) -> &InitialCondition {
        &self.base
    }

    /// `g_now(s)`.
    #[inline]
    pub fn evaluate(&self, s: f64) -> f64 {
        self.base.at(self.now + s) + self.excited(s)
    }

    /// `g*_now(s)`: the part of `g_now(s)` due to recorded events.
    #[inline]
    pub fn excited(&self, s: f64) -> f64 {
        match &self.fast {
            Some(c) => c.amplitude * c.acc * (-c.rate * s).exp(),
            None => self.excited_direct(s),
        }
    }

    /// `g*_now(s)` by direct summation, bypassing the exponential fast path.
    pub fn excited_direct(&self, s: f64) -> f64 {
        let t = self.now + s;
        self.events.iter().map(|&tau| self.kernel.at(t - tau)).sum()
    }

    pub fn evaluate_direct(&self, s: f64) -> f64 {
        self.base.at(self.now + s) + self.excited_direct(s)
    }

    /// `z_now = g_now(0)`.
    #[inline]
    pub fn load(&self) -> f64 {
        self.evaluate(0.0)
    }

    /// Translate by `delta > 0`.
    pub fn advance(&mut self, delta: f64) -> Result<()> {
        if !(delta > 0.0) {
            return Err(HawkesError::Domain(format!("advance by {delta}: step must be positive")));
        }
        self.advance_to(self.now + delta);
        Ok(())
    }

    /// Move to time `t ≥ now` (no-op when `t ≤ now`).
    #[inline]
    pub fn advance_to(&mut self, t: f64) {
        if t <= self.now {
            return;
        }
        if let Some(c) = &mut self.fast {
            c.acc *= (-c.rate * (t - self.now)).exp();
        }
        self.now = t;
    }

    /// Record an event at `now`.
    #[inline]
    pub fn jump(&mut self) {
        self.events.push(self.now);
        if let Some(c) = &mut self.fast {
            c.acc += 1.0;
        }
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            base: self.base.clone(),
            kernel: self.kernel.clone(),
            events: self.events.clone(),
            now: self.now,
        }
    }

    pub fn from_snapshot(s: &StateSnapshot) -> Self {
        ImpulseState::from_history(s.kernel.clone(), s.base.clone(), &s.events, s.now)
    }
}

/// JSON form of an [`ImpulseState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSnapshot {
    pub base: InitialCondition,
    pub kernel: Kernel,
    pub events: Vec<f64>,
    pub now: f64,
}

/// Default depth of the `d_X` series.
pub const DX_DEPTH: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DxDistance {
    pub value: f64,
    /// Upper bound on the omitted terms, `2^{-n_max}`.
    pub remainder: f64,
}

/// Local-`L¹` distance `Σ_{n=1}^{n_max} 2^{-n} I_n/(1+I_n)` with
/// `I_n = ∫₀ⁿ |g − f|`.
pub fn metric_dx(g: impl Fn(f64) -> f64, f: impl Fn(f64) -> f64, n_max: usize, breaks: &[f64]) -> DxDistance {
    let mut cumulative = 0.0;
    let mut value = 0.0;
    for n in 1..=n_max {
        let lo = (n - 1) as f64;
        cumulative += quad::integrate_with_breaks(|s| (g(s) - f(s)).abs(), lo, n as f64, breaks, 1e-12);
        value += 0.5f64.powi(n as i32) * cumulative / (1.0 + cumulative);
    }
    DxDistance {
        value,
        remainder: 0.5f64.powi(n_max as i32),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub delta_count: usize,
    pub last: Option<f64>,
    /// First symmetric-difference time after the cut.
    pub first: Option<f64>,
}

/// Symmetric difference of two streams restricted to times `> after`.
pub fn discrepancy_after(a: &[f64], b: &[f64], after: f64) -> Discrepancy {
    let (mut i, mut j) = (a.partition_point(|&t| t <= after), b.partition_point(|&t| t <= after));
    let mut d = Discrepancy {
        delta_count: 0,
        last: None,
        first: None,
    };
    let record = |t: f64, d: &mut Discrepancy| {
        d.delta_count += 1;
        d.last = Some(t);
        d.first.get_or_insert(t);
    };
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(&x), Some(&y)) if x < y => {
                record(x, &mut d);
                i += 1;
            }
            (Some(_), Some(&y)) => {
                record(y, &mut d);
                j += 1;
            }
            (Some(&x), None) => {
                record(x, &mut d);
                i += 1;
            }
            (None, Some(&y)) => {
                record(y, &mut d);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exp1() -> Kernel {
        Kernel::exponential(1.0).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        // g₀ tabulated from 1/(1+t)^2 at integer nodes: g₀(3) = 1/16
        let grid: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let values: Vec<f64> = grid.iter().map(|t| (1.0 + t).powi(-2)).collect();
        let g0 = InitialCondition::function(Kernel::tabulated(grid, values).unwrap());
        let mut st = ImpulseState::new(exp1(), g0);
        st.advance(1.0).unwrap();
        assert_eq!(st.evaluate(2.0), 0.0625);

        let st = ImpulseState::from_history(exp1(), InitialCondition::Zero, &[0.0], 1.0);
        assert_abs_diff_eq!(st.evaluate(0.0), (-1.0f64).exp(), epsilon = 1e-15);

        let st = ImpulseState::from_history(exp1(), InitialCondition::Zero, &[0.0, 0.5], 1.0);
        let want = (-2.0f64).exp() + (-1.5f64).exp();
        assert_abs_diff_eq!(st.evaluate(1.0), want, epsilon = 1e-15);
        assert_abs_diff_eq!(st.evaluate_direct(1.0), want, epsilon = 1e-15);
    }

    #[test]
    fn advance_and_jump() {
        let k = Kernel::power_law(2.0).unwrap();
        let g0 = InitialCondition::function(exp1());
        let mut st = ImpulseState::new(k.clone(), g0.clone());
        let before = st.evaluate(1.5);
        st.advance(1.5).unwrap();
        assert_eq!(st.evaluate(0.0), before);

        let mut a = ImpulseState::new(k.clone(), g0.clone());
        a.advance(0.3).unwrap();
        a.advance(0.7).unwrap();
        let mut b = ImpulseState::new(k.clone(), g0.clone());
        b.advance(1.0).unwrap();
        for s in [0.0, 0.4, 3.0] {
            assert_abs_diff_eq!(a.evaluate(s), b.evaluate(s), epsilon = 1e-15);
        }

        let z = a.load();
        a.jump();
        assert_abs_diff_eq!(a.load() - z, k.at(0.0), epsilon = 1e-15);
        assert_eq!(a.events().len(), 1);
        let e2 = a.evaluate(2.0);
        let base = a.base().at(a.now() + 2.0);
        a.advance(1.0).unwrap();
        assert_abs_diff_eq!(a.evaluate(2.0) - a.base().at(a.now() + 2.0), k.at(3.0), epsilon = 1e-15);
        assert!(e2 > base);
        assert!(a.advance(0.0).is_err());
    }

    #[test]
    fn fast_path_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..100_000 / 50 {
            let rate = rng.random_range(0.1..5.0);
            let k = Kernel::exponential(rate).unwrap().with_scale(rng.random_range(0.1..2.0)).unwrap();
            let mut st = ImpulseState::new(k, InitialCondition::Zero);
            for _ in 0..50 {
                st.advance(rng.random_range(1e-6..2.0)).unwrap();
                if rng.random::<bool>() {
                    st.jump();
                }
                let s = rng.random_range(0.0..3.0);
                let (f, d) = (st.evaluate(s), st.evaluate_direct(s));
                if d > 1e-280 {
                    worst = worst.max((f - d).abs() / d);
                }
            }
        }
        assert!(worst <= 1e-10, "{worst}");
    }

    #[test]
    fn dx_examples() {
        let g = |s: f64| (-s).exp();
        assert_eq!(metric_dx(g, g, DX_DEPTH, &[]).value, 0.0);
        let d = metric_dx(|s| 1.0 + (-s).exp(), g, 20, &[]);
        let want: f64 = (1..=20).map(|n| 0.5f64.powi(n) * n as f64 / (1.0 + n as f64)).sum();
        assert_abs_diff_eq!(d.value, want, epsilon = 1e-12);
        // the full series sums to 2 - 2 ln 2
        assert_abs_diff_eq!(d.value, 2.0 - 2.0 * 2f64.ln(), epsilon = d.remainder);
        assert_eq!(d.remainder, 0.5f64.powi(20));
    }

    #[test]
    fn discrepancy_examples() {
        let a = [1.0, 2.0];
        let d = discrepancy_after(&a, &a, 0.0);
        assert_eq!((d.delta_count, d.last), (0, None));
        let d = discrepancy_after(&[1.0, 2.0], &[1.0], 0.0);
        assert_eq!((d.delta_count, d.last), (1, Some(2.0)));
        let d = discrepancy_after(&[1.0, 2.0, 5.0], &[1.0, 3.0, 5.0], 2.5);
        assert_eq!((d.delta_count, d.last), (1, Some(3.0)));
    }

    #[test]
    fn stream_invariants() {
        let mut s = EventStream::new();
        s.push(1.0, EventMark { parent: Some(Parent::Root), generation: Some(0), kind: 0 }).unwrap();
        assert!(s.push(1.0, EventMark::default()).is_err());
        assert!(s
            .push(2.0, EventMark { parent: Some(Parent::Event(0)), generation: Some(2), kind: 0 })
            .is_err());
        s.push(2.0, EventMark { parent: Some(Parent::Event(0)), generation: Some(1), kind: 0 }).unwrap();
        assert!(s.push(3.0, EventMark { parent: Some(Parent::Event(5)), generation: None, kind: 0 }).is_err());
        let csv = s.to_csv();
        assert!(csv.starts_with("time,parent,generation,type\n1.0000000000000000e0,root,0,0\n"));
        let back: f64 = csv.lines().nth(2).unwrap().split(',').next().unwrap().parse().unwrap();
        assert_eq!(back, 2.0);
    }

    #[test]
    fn snapshot_round_trip() {
        let st = ImpulseState::from_history(Kernel::power_law(2.0).unwrap(), InitialCondition::Zero, &[0.1, 0.7], 2.0);
        let json = serde_json::to_string(&st.snapshot()).unwrap();
        let back = ImpulseState::from_snapshot(&serde_json::from_str(&json).unwrap());
        assert_eq!(back, st);
    }

    #[test]
    fn pre_history_matches_direct_sum() {
        let k = Kernel::power_law(2.0).unwrap();
        let g0 = InitialCondition::pre_history(k.clone(), vec![-3.0, -0.5]).unwrap();
        assert_abs_diff_eq!(g0.at(1.0), k.at(4.0) + k.at(1.5), epsilon = 1e-15);
        assert_abs_diff_eq!(g0.mass(), k.tail(3.0) + k.tail(0.5), epsilon = 1e-15);
        assert!(InitialCondition::pre_history(k, vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn dx_is_symmetric(a in prop::collection::vec(0.0f64..3.0, 4), b in prop::collection::vec(0.0f64..3.0, 4)) {
            let grid = vec![0.0, 1.0, 2.0, 3.0];
            let f = Kernel::tabulated(grid.clone(), a).unwrap();
            let g = Kernel::tabulated(grid.clone(), b).unwrap();
            let d1 = metric_dx(|s| f.at(s), |s| g.at(s), 10, &grid).value;
            let d2 = metric_dx(|s| g.at(s), |s| f.at(s), 10, &grid).value;
            prop_assert!((d1 - d2).abs() <= 1e-14);
        }

        #[test]
        fn excited_part_is_event_sum(events in prop::collection::vec(0.0f64..5.0, 0..20), s in 0.0f64..4.0) {
            let mut ev = events.clone();
            ev.sort_by(|x, y| x.total_cmp(y));
            let k = Kernel::power_law(1.5).unwrap();
            let g0 = InitialCondition::function(exp1());
            let st = ImpulseState::from_history(k.clone(), g0.clone(), &ev, 5.0);
            let direct: f64 = ev.iter().map(|&t| k.at(5.0 + s - t)).sum();
            prop_assert!((st.evaluate(s) - g0.at(5.0 + s) - direct).abs() <= 1e-12);
        }

        #[test]
        fn non_increasing_between_events(events in prop::collection::vec(0.0f64..5.0, 0..20)) {
            let mut ev = events.clone();
            ev.sort_by(|x, y| x.total_cmp(y));
            let st = ImpulseState::from_history(Kernel::power_law(2.0).unwrap(), InitialCondition::function(exp1()), &ev, 5.0);
            let mut prev = st.evaluate(0.0);
            for i in 1..200 {
                let v = st.evaluate(i as f64 * 0.05);
                prop_assert!(v <= prev);
                prev = v;
            }
        }
    }
}
