//! Exact samplers: thinning of the canonical planar field, the cluster
//! (immigration–branching) construction for affine rates, and randomized
//! parent attribution.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::intensity::{IntensityFn, RateFamily};
use crate::kernels::Kernel;
use crate::noise::{CanonicalNoise, PlanarField};
use crate::state::{EventMark, EventStream, ImpulseState, InitialCondition, Parent};

/// How the thinning sampler bounds the rate ahead of the current time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvelopePolicy {
    /// The rate at the current load, valid while the load can only decay
    /// (non-increasing kernel and initial condition).
    #[default]
    Natural,
    /// Exact supremum of the load over windows of the given length.
    Lookahead { window: f64 },
    /// A user-supplied constant bound.
    Fixed { level: f64 },
}

pub const DEFAULT_MAX_EVENTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub kernel: Kernel,
    pub intensity: IntensityFn,
    pub initial: InitialCondition,
    pub max_events: usize,
    pub envelope: EnvelopePolicy,
}

impl SimConfig {
    pub fn new(kernel: Kernel, intensity: IntensityFn, initial: InitialCondition, horizon: f64) -> Self {
        SimConfig {
            horizon,
            kernel,
            intensity,
            initial,
            max_events: DEFAULT_MAX_EVENTS,
            envelope: EnvelopePolicy::Natural,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(HawkesError::param("horizon", "must be finite and positive"));
        }
        if self.max_events == 0 {
            return Err(HawkesError::param("max_events", "must be positive"));
        }
        self.initial.validate()?;
        match self.envelope {
            EnvelopePolicy::Natural => {
                if !(self.kernel.is_non_increasing() && self.initial.is_non_increasing()) {
                    return Err(HawkesError::Precondition(
                        "the natural envelope needs a non-increasing kernel and initial condition; \
                         use a lookahead or fixed envelope"
                            .into(),
                    ));
                }
            }
            EnvelopePolicy::Lookahead { window } => {
                if !(window.is_finite() && window > 0.0) {
                    return Err(HawkesError::param("envelope.window", "must be finite and positive"));
                }
            }
            EnvelopePolicy::Fixed { level } => {
                if !(level.is_finite() && level >= 0.0) {
                    return Err(HawkesError::param("envelope.level", "must be finite and non-negative"));
                }
            }
        }
        Ok(())
    }
}

/// Relative slack before a rate above the envelope counts as a violation.
const VIOLATION_SLACK: f64 = 1e-12;

/// Incremental thinning simulation reading one planar field.
#[derive(Debug, Clone)]
pub struct Thinner {
    intensity: IntensityFn,
    policy: EnvelopePolicy,
    state: ImpulseState,
    field: PlanarField,
    stream: EventStream,
    max_events: usize,
    kind: u16,
}

impl Thinner {
    pub fn new(cfg: &SimConfig, field: PlanarField) -> Result<Self> {
        cfg.validate()?;
        Ok(Self::build(cfg, field, cfg.initial.clone(), 0.0))
    }

    /// A leg started from rest (`g = 0`) at clock time `start`.
    pub fn from_rest_at(cfg: &SimConfig, field: PlanarField, start: f64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self::build(cfg, field, InitialCondition::Zero, start))
    }

    fn build(cfg: &SimConfig, field: PlanarField, initial: InitialCondition, start: f64) -> Self {
        Thinner {
            intensity: cfg.intensity.clone(),
            policy: cfg.envelope,
            state: ImpulseState::at_time(cfg.kernel.clone(), initial, start),
            field,
            stream: EventStream::new(),
            max_events: cfg.max_events,
            kind: 0,
        }
    }

    pub fn with_kind(mut self, kind: u16) -> Self {
        self.kind = kind;
        self
    }

    pub fn now(&self) -> f64 {
        self.state.now()
    }

    pub fn state(&self) -> &ImpulseState {
        &self.state
    }

    pub fn stream(&self) -> &EventStream {
        &self.stream
    }

    pub fn into_stream(self) -> EventStream {
        self.stream
    }

    fn envelope(&self) -> (f64, f64) {
        let t = self.state.now();
        match self.policy {
            EnvelopePolicy::Natural => (self.intensity.bound_for_load(self.state.load()), f64::INFINITY),
            EnvelopePolicy::Lookahead { window } => {
                let end = t + window;
                let kernel = self.state.kernel();
                let load = self.state.base().sup_on(t, end)
                    + self
                        .state
                        .events()
                        .iter()
                        .map(|&tau| kernel.sup_on(t - tau, end - tau))
                        .sum::<f64>();
                (self.intensity.bound_for_load(load), end)
            }
            EnvelopePolicy::Fixed { level } => (level, f64::INFINITY),
        }
    }

    /// Next accepted event no later than `limit`; on `None` the clock stands at `limit`.
    pub fn step(&mut self, limit: f64) -> Result<Option<f64>> {
        loop {
            let t = self.state.now();
            if t >= limit {
                return Ok(None);
            }
            let (level, window_end) = self.envelope();
            let stop = window_end.min(limit);
            let candidate = self.field.next_after(t, level).filter(|p| p.t <= stop);
            let Some(p) = candidate else {
                self.state.advance_to(stop);
                if stop >= limit {
                    return Ok(None);
                }
                continue;
            };
            self.state.advance_to(p.t);
            let rate = self.intensity.rate_at(self.state.load(), p.t);
            if rate > level * (1.0 + VIOLATION_SLACK) {
                return Err(HawkesError::EnvelopeViolation {
                    time: p.t,
                    rate,
                    envelope: level,
                });
            }
            if p.u < rate {
                if self.stream.len() >= self.max_events {
                    return Err(HawkesError::TooManyEvents {
                        cap: self.max_events,
                        time: p.t,
                    });
                }
                self.state.jump();
                self.stream.push(
                    p.t,
                    EventMark {
                        kind: self.kind,
                        ..EventMark::default()
                    },
                )?;
                return Ok(Some(p.t));
            }
        }
    }

    pub fn run_until(&mut self, limit: f64) -> Result<()> {
        while self.step(limit)?.is_some() {}
        Ok(())
    }
}

/// Exact sample on `[0, horizon]` by thinning the field of layer 0.
pub fn simulate_thinning(cfg: &SimConfig, noise: &CanonicalNoise) -> Result<EventStream> {
    let mut th = Thinner::new(cfg, noise.field(0))?;
    th.run_until(cfg.horizon)?;
    Ok(th.into_stream())
}

/// Offspring mean `B·‖h‖₁` and baseline `A` of an affine model, refusing
/// anything else.
pub fn affine_parameters(cfg: &SimConfig) -> Result<(f64, f64)> {
    let RateFamily::Linear { a, b } = *cfg.intensity.lambda().family() else {
        return Err(HawkesError::Unsupported("the cluster sampler needs an affine rate A + Bz".into()));
    };
    if cfg.intensity.has_modulators() {
        return Err(HawkesError::Unsupported("the cluster sampler does not support modulators".into()));
    }
    let mean = b * cfg.kernel.mass();
    if mean >= 1.0 {
        return Err(HawkesError::Supercritical(format!(
            "offspring mean B·‖h‖₁ = {mean} ≥ 1: cluster sizes are not finite"
        )));
    }
    Ok((a, b))
}

/// One individual of a cluster forest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestNode {
    pub time: f64,
    pub parent: Option<usize>,
    pub generation: u32,
    pub children: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Forest {
    pub nodes: Vec<ForestNode>,
}

impl Forest {
    /// Ages `child − parent` over all parent–child pairs.
    pub fn parent_ages(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter_map(|n| n.parent.map(|p| n.time - self.nodes[p].time))
            .collect()
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map_or(0, |d| d.sample(rng) as u64)
}

/// Draw roots on `[0, horizon]` at rate `A + B·g₀(t)`.
fn draw_roots<R: Rng + ?Sized>(a: f64, b: f64, g0: &InitialCondition, horizon: f64, rng: &mut R) -> Vec<f64> {
    let mut roots = Vec::new();
    for _ in 0..poisson(a * horizon, rng) {
        roots.push(horizon * rng.random::<f64>());
    }
    let (hi, lo) = (g0.tail(0.0), g0.tail(horizon));
    for _ in 0..poisson(b * (hi - lo), rng) {
        let y = lo + (1.0 - rng.random::<f64>()) * (hi - lo);
        roots.push(g0.inverse_tail(y).min(horizon));
    }
    roots
}

/// Branching forest for `A + Bz`. With `truncate`, individuals born after the
/// horizon are discarded (together with their descendants); otherwise every
/// tree is grown to extinction.
pub fn simulate_forest(cfg: &SimConfig, noise: &CanonicalNoise, truncate: bool) -> Result<Forest> {
    cfg.validate()?;
    let (a, b) = affine_parameters(cfg)?;
    let mut rng = noise.aux_rng(1);
    let offspring_mean = b * cfg.kernel.mass();
    let mut nodes: Vec<ForestNode> = draw_roots(a, b, &cfg.initial, cfg.horizon, &mut rng)
        .into_iter()
        .map(|time| ForestNode {
            time,
            parent: None,
            generation: 0,
            children: 0,
        })
        .collect();
    let mut next = 0;
    while next < nodes.len() {
        let n_children = poisson(offspring_mean, &mut rng);
        nodes[next].children = n_children as u32;
        for _ in 0..n_children {
            let time = nodes[next].time + cfg.kernel.sample_age(&mut rng);
            if truncate && time > cfg.horizon {
                continue;
            }
            if nodes.len() >= cfg.max_events {
                return Err(HawkesError::TooManyEvents {
                    cap: cfg.max_events,
                    time,
                });
            }
            nodes.push(ForestNode {
                time,
                parent: Some(next),
                generation: nodes[next].generation + 1,
                children: 0,
            });
        }
        next += 1;
    }
    Ok(Forest { nodes })
}

/// Exact sample on `[0, horizon]` of an affine model by the cluster construction,
/// with parent and generation marks.
pub fn simulate_cluster(cfg: &SimConfig, noise: &CanonicalNoise) -> Result<EventStream> {
    let forest = simulate_forest(cfg, noise, true)?;
    let mut order: Vec<usize> = (0..forest.nodes.len()).collect();
    order.sort_by(|&i, &j| forest.nodes[i].time.total_cmp(&forest.nodes[j].time));
    let mut position = vec![0usize; order.len()];
    for (pos, &i) in order.iter().enumerate() {
        position[i] = pos;
    }
    let mut stream = EventStream::new();
    for &i in &order {
        let n = forest.nodes[i];
        stream.push(
            n.time,
            EventMark {
                parent: Some(n.parent.map_or(Parent::Root, |p| Parent::Event(position[p]))),
                generation: Some(n.generation),
                kind: 0,
            },
        )?;
    }
    Ok(stream)
}

/// Tolerance on the parent probability vector before renormalization.
pub const ATTRIBUTION_TOL: f64 = 1e-12;

/// Parent probabilities of event `i`: `(root, per earlier event)`.
pub fn parent_probabilities(
    times: &[f64],
    i: usize,
    kernel: &Kernel,
    intensity: &IntensityFn,
    initial: &InitialCondition,
) -> Result<(f64, Vec<f64>)> {
    let t = times[i];
    let contributions: Vec<f64> = times[..i].iter().map(|&tau| kernel.at(t - tau)).collect();
    let g = initial.at(t);
    let z = g + contributions.iter().sum::<f64>();
    let (p, q) = (intensity.p_at(t), intensity.q_at(t));
    let shifted = z + p;
    if shifted <= 0.0 {
        return Ok((1.0, vec![0.0; i]));
    }
    let lambda = intensity.lambda();
    let total = lambda.at(shifted) + q;
    if !(total > 0.0) {
        return Err(HawkesError::Numerical(format!("event at {t} has zero rate")));
    }
    let excess = lambda.excess(shifted);
    let root = (lambda.at(0.0) + q + excess * (g + p) / shifted) / total;
    let mut probs: Vec<f64> = contributions.iter().map(|c| excess * c / shifted / total).collect();
    let sum = root + probs.iter().sum::<f64>();
    let residual = (sum - 1.0).abs();
    if residual > ATTRIBUTION_TOL {
        return Err(HawkesError::Numerical(format!(
            "parent probabilities of event {i} sum to {sum} (residual {residual:.3e})"
        )));
    }
    probs.iter_mut().for_each(|x| *x /= sum);
    Ok((root / sum, probs))
}

/// Attach randomized parent and generation marks to every event.
pub fn attribute_parents(events: &EventStream, cfg: &SimConfig, noise: &CanonicalNoise) -> Result<EventStream> {
    let mut rng = noise.aux_rng(2);
    let times = events.times();
    let mut marks: Vec<EventMark> = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let (root, probs) = parent_probabilities(times, i, &cfg.kernel, &cfg.intensity, &cfg.initial)?;
        let mut u = rng.random::<f64>() - root;
        let mut parent = Parent::Root;
        if u >= 0.0 {
            // fall back to the last positive weight if rounding leaves u ≥ Σ probs
            parent = probs
                .iter()
                .rposition(|&w| w > 0.0)
                .map_or(Parent::Root, Parent::Event);
            for (j, w) in probs.iter().enumerate() {
                u -= w;
                if u < 0.0 {
                    parent = Parent::Event(j);
                    break;
                }
            }
        }
        let generation = match parent {
            Parent::Root => 0,
            Parent::Event(j) => marks[j].generation.unwrap_or(0) + 1,
        };
        marks.push(EventMark {
            parent: Some(parent),
            generation: Some(generation),
            kind: events.marks()[i].kind,
        });
    }
    let mut out = events.clone();
    out.set_marks(marks)?;
    Ok(out)
}
