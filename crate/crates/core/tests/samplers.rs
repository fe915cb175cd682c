use hawkes_core::noise::CanonicalNoise;
use hawkes_core::samplers::{attribute_parents, simulate_cluster, simulate_thinning, SimConfig};
use hawkes_core::{stats, IntensityFn, InitialCondition, Kernel};

fn cfg() -> SimConfig {
    SimConfig::new(
        Kernel::exponential(1.0).unwrap(),
        IntensityFn::linear(1.0, 0.5).unwrap(),
        InitialCondition::function(Kernel::exponential(2.0).unwrap()),
        15.0,
    )
}

/// Generations of attributed thinning output follow the same law as the
/// generations recorded by the cluster sampler.
#[test]
fn attributed_generations_match_cluster() {
    let c = cfg();
    let mut attributed = Vec::new();
    let mut clustered = Vec::new();
    for r in 0..3000 {
        let z = CanonicalNoise::new(77, r);
        let ev = simulate_thinning(&c, &z).unwrap();
        let at = attribute_parents(&ev, &c, &z).unwrap();
        attributed.extend(at.marks().iter().map(|m| m.generation.unwrap() as u64));
        let cl = simulate_cluster(&c, &CanonicalNoise::new(78, r)).unwrap();
        clustered.extend(cl.marks().iter().map(|m| m.generation.unwrap() as u64));
    }
    let t = stats::chi2_two_sample(&attributed, &clustered);
    assert!(t.passes(0.001), "{t:?}");
}

#[test]
fn simulation_is_reproducible() {
    let c = cfg();
    let z = CanonicalNoise::new(5, 9);
    assert_eq!(simulate_thinning(&c, &z).unwrap(), simulate_thinning(&c, &z).unwrap());
    assert_eq!(simulate_cluster(&c, &z).unwrap(), simulate_cluster(&c, &z).unwrap());
}
