//! Orchestration behind the command-line subcommands. Each run returns the
//! artifact text and a JSON summary; writing files is left to the caller.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis;
use crate::config::{LoadedConfig, SamplerKind};
use crate::coupling;
use crate::error::{HawkesError, Result};
use crate::intensity;
use crate::multitype;
use crate::noise::CanonicalNoise;
use crate::output::csv_preamble;
use crate::samplers::{self, simulate_cluster, simulate_thinning};
use crate::state::{fmt_f64, EventStream, InitialCondition};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Cluster,
    Attribute,
    Couple,
    TvBound,
    Mgf,
    MeanField,
    Tails,
    Check,
    Multitype,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Cluster => "cluster",
            Command::Attribute => "attribute",
            Command::Couple => "couple",
            Command::TvBound => "tvbound",
            Command::Mgf => "mgf",
            Command::MeanField => "meanfield",
            Command::Tails => "tails",
            Command::Check => "check",
            Command::Multitype => "multitype",
        }
    }

    /// Default artifact file name.
    pub fn default_file(self) -> String {
        match self {
            Command::Simulate | Command::Cluster | Command::Attribute | Command::Multitype => "events.csv".into(),
            Command::Tails | Command::Check => format!("{}.json", self.name()),
            _ => format!("{}.csv", self.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub body: String,
    pub summary: Value,
}

fn replicas<T: Send>(n: usize, seed: u64, f: impl Fn(&CanonicalNoise) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..n)
        .into_par_iter()
        .map(|r| f(&CanonicalNoise::new(seed, r as u64)))
        .collect()
}

fn events_csv(header: &str, streams: &[EventStream]) -> String {
    let mut s = String::from(header);
    s.push_str("replica,time,parent,generation,type\n");
    for (r, ev) in streams.iter().enumerate() {
        ev.write_csv_rows(&mut s, Some(r));
    }
    s
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn report_or_error<T: Serialize>(r: Result<T>) -> Value {
    match r {
        Ok(v) => to_json(&v),
        Err(e) => json!({ "error": { "kind": e.kind(), "message": e.to_string() } }),
    }
}

/// Run `cmd` against a validated config.
pub fn run(cmd: Command, loaded: &LoadedConfig) -> Result<Artifact> {
    let cfg = &loaded.config;
    let sim = cfg.sim_config()?;
    let seed = cfg.run.seed;
    let n = cfg.run.replicas;
    let a = &cfg.analysis;
    let header = csv_preamble(&loaded.hash, seed);
    let base = json!({ "command": cmd.name(), "config_hash": loaded.hash, "seed": seed });
    let with = |extra: Value| {
        let mut b = base.clone();
        if let (Value::Object(m), Value::Object(x)) = (&mut b, extra) {
            m.extend(x);
        }
        b
    };
    match cmd {
        Command::Simulate | Command::Cluster => {
            let cluster = cmd == Command::Cluster || cfg.run.sampler == SamplerKind::Cluster;
            let streams = replicas(n, seed, |noise| {
                if cluster {
                    simulate_cluster(&sim, noise)
                } else {
                    simulate_thinning(&sim, noise)
                }
            })?;
            let total: usize = streams.iter().map(|s| s.len()).sum();
            Ok(Artifact {
                body: events_csv(&header, &streams),
                summary: with(json!({
                    "sampler": if cluster { "cluster" } else { "thinning" },
                    "replicas": n,
                    "events": total,
                    "mean_count": total as f64 / n as f64,
                })),
            })
        }
        Command::Attribute => {
            let streams = replicas(n, seed, |noise| {
                let ev = simulate_thinning(&sim, noise)?;
                samplers::attribute_parents(&ev, &sim, noise)
            })?;
            let mut hist: Vec<usize> = Vec::new();
            for s in &streams {
                for (g, c) in s.generation_histogram().into_iter().enumerate() {
                    if hist.len() <= g {
                        hist.resize(g + 1, 0);
                    }
                    hist[g] += c;
                }
            }
            Ok(Artifact {
                body: events_csv(&header, &streams),
                summary: with(json!({ "replicas": n, "generation_histogram": hist })),
            })
        }
        Command::Couple => {
            let f = a
                .perturbation
                .clone()
                .ok_or_else(|| HawkesError::Config("couple needs analysis.perturbation".into()))?;
            let mut cfg_f = sim.clone();
            cfg_f.initial = f.clone();
            let mut cfg_0 = sim.clone();
            cfg_0.initial = InitialCondition::Zero;
            let lasts = replicas(n, seed, |noise| {
                coupling::couple(&cfg_f, &cfg_0, noise).map(|r| r.last_discrepancy())
            })?;
            let curve = analysis::SurvivalCurve::from_lasts(&lasts, &a.t_grid);
            let mut body = header;
            body.push_str("t,survival,sigma\n");
            for (t, p, s) in &curve.points {
                let _ = writeln!(body, "{},{},{}", fmt_f64(*t), fmt_f64(*p), fmt_f64(*s));
            }
            let coupled = lasts.iter().filter(|l| l.is_none()).count();
            let phi_mass = coupling::modulus_mass(&cfg.modulus(), &f).as_f64();
            Ok(Artifact {
                body,
                summary: with(json!({
                    "replicas": n,
                    "coupled": coupled,
                    "overlap": coupled as f64 / n as f64,
                    "overlap_sigma": stats::binomial_sigma(coupled as f64 / n as f64, n),
                    "phi_mass": phi_mass,
                    "jensen_lower_bound": (-phi_mass).exp(),
                })),
            })
        }
        Command::TvBound => {
            let g = a.perturbation.clone().unwrap_or_else(|| cfg.model.initial.clone());
            let phi = cfg.modulus();
            let setup = analysis::speed_setup(&cfg.model.rate, &phi, &cfg.model.kernel, &g, a.grid_step, a.grid_len)?;
            let bound = analysis::tv_bound(&setup)?;
            let ratio = analysis::tail_ratio(&bound, &phi, &cfg.model.kernel, &g)?;
            let mut body = header;
            body.push_str("t,bound\n");
            for (t, b) in bound.curve() {
                let _ = writeln!(body, "{},{}", fmt_f64(t), fmt_f64(b));
            }
            let at: Vec<Value> = a
                .t_grid
                .iter()
                .map(|&t| json!({ "t": t, "bound": bound.at(t).ok() }))
                .collect();
            Ok(Artifact {
                body,
                summary: with(json!({
                    "b_tilde": bound.b_tilde,
                    "total_mass": bound.total_mass,
                    "terms": bound.series.terms,
                    "at": at,
                    "tail_ratio_last_decade": ratio.last_decade_sup,
                })),
            })
        }
        Command::Mgf => {
            let (base_rate, slope) = samplers::affine_parameters(&sim)?;
            let runs = analysis::stationary_runs(&sim, a.burn_in, a.window, a.sample_every, &[], n, seed)?;
            let mut body = header;
            body.push_str("theta,lambda_theta,predicted,empirical,sem,diverged\n");
            let mut rows = Vec::new();
            for &theta in &a.thetas {
                let sol = analysis::solve_lambda_theta(&cfg.model.kernel, base_rate, slope, theta, a.grid_step, a.grid_len)?;
                let est = analysis::mgf_check(&runs, &sol);
                let _ = writeln!(
                    body,
                    "{},{},{},{},{},{}",
                    fmt_f64(theta),
                    fmt_f64(sol.total),
                    fmt_f64(est.predicted),
                    fmt_f64(est.empirical),
                    fmt_f64(est.sem),
                    sol.diverged()
                );
                rows.push(json!({ "theta": theta, "within_95": est.within(1.96), "diverged": sol.diverged() }));
            }
            Ok(Artifact {
                body,
                summary: with(json!({ "replicas": n, "thetas": rows })),
            })
        }
        Command::MeanField => {
            let runs = analysis::stationary_runs(&sim, a.burn_in, a.window, a.sample_every, &a.s_grid, n, seed)?;
            let rep = analysis::mean_field_check(&runs, &a.s_grid, &cfg.model.kernel);
            let mut body = header;
            body.push_str("s,mean_g,predicted,rel_err,sem\n");
            for r in &rep.rows {
                let _ = writeln!(
                    body,
                    "{},{},{},{},{}",
                    fmt_f64(r.s),
                    fmt_f64(r.mean_g),
                    fmt_f64(r.predicted),
                    fmt_f64(r.rel_err),
                    fmt_f64(r.sem)
                );
            }
            Ok(Artifact {
                body,
                summary: with(json!({
                    "replicas": n,
                    "max_rel_err": rep.max_rel_err,
                    "event_rate": rep.event_rate,
                    "event_rate_sem": rep.event_rate_sem,
                    "drift_flag": rep.drift_flag,
                })),
            })
        }
        Command::Tails => {
            let runs = analysis::stationary_runs(&sim, a.burn_in, a.window, a.sample_every, &[], n, seed)?;
            let loads: Vec<f64> = runs.iter().flat_map(|r| r.loads.iter().copied()).collect();
            let rep = analysis::tail_estimate(&loads, &cfg.model.rate, &cfg.model.kernel, a.bin_width)?;
            let doc = with(json!({ "report": to_json(&rep) }));
            Ok(Artifact {
                body: serde_json::to_string_pretty(&doc)? + "\n",
                summary: with(json!({ "slope": rep.slope, "low_power": rep.low_power, "density_constant": rep.density_constant })),
            })
        }
        Command::Check => {
            let phi = cfg.modulus();
            let k = &cfg.model.kernel;
            let doc = with(json!({
                "hyp1": to_json(&cfg.model.rate.check_hyp1()),
                "hyp2": report_or_error(intensity::check_hyp2(&cfg.model.rate, &phi, k)),
                "hyp3": to_json(&k.check_hypothesis3()),
                "hyp4": report_or_error(intensity::check_hyp4(&cfg.model.rate, &phi, k, &cfg.model.initial)),
                "multitype": cfg.model.multitype.as_ref().map(|m| report_or_error(multitype::stability(m))),
            }));
            Ok(Artifact {
                body: serde_json::to_string_pretty(&doc)? + "\n",
                summary: base,
            })
        }
        Command::Multitype => {
            let m = cfg
                .model
                .multitype
                .as_ref()
                .ok_or_else(|| HawkesError::Config("multitype needs model.multitype".into()))?;
            let stab = multitype::stability(m)?;
            let streams = replicas(n, seed, |noise| multitype::simulate_multitype(m, cfg.run.horizon, noise))?;
            let mut counts = vec![0u64; m.d];
            for s in &streams {
                for (c, x) in counts.iter_mut().zip(multitype::type_counts(s, m.d)) {
                    *c += x;
                }
            }
            Ok(Artifact {
                body: events_csv(&header, &streams),
                summary: with(json!({
                    "replicas": n,
                    "spectral_radius": stab.radius,
                    "verdict": stab.verdict(),
                    "type_counts": counts,
                })),
            })
        }
    }
}
