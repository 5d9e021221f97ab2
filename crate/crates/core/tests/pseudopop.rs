use aggrex_core::data::Dataset;
use aggrex_core::models::{ModelConfig, Source};
use aggrex_core::pseudopop::{
    read_samples, simulate_to_vec, write_samples, ExposureSample, Population, Posterior, ScenarioConfig, SimulationError,
};
use aggrex_core::sampler::DrawSet;
use aggrex_core::synth::{generate, truth_draws, GeneratorConfig};

fn setup() -> (Dataset, Vec<DrawSet>) {
    let (data, truth) = generate(&GeneratorConfig::default(), 21).unwrap();
    let sets = truth_draws(&truth, &data, &ModelConfig::default()).unwrap();
    (data, sets)
}

fn scenario(iterations: usize, total: u64) -> ScenarioConfig {
    ScenarioConfig { iterations: Some(iterations), population_total: total, ..ScenarioConfig::default() }
}

fn run(data: &Dataset, sets: &[DrawSet], sc: &ScenarioConfig, seed: u64) -> Vec<ExposureSample> {
    let pop = Population::from_dataset(data, &ModelConfig::default());
    simulate_to_vec(&Posterior::new(sets.to_vec()), &pop, sc, seed).unwrap().0
}

#[test]
fn samples_are_complete_nonnegative_and_add_up() {
    let (data, sets) = setup();
    let sc = scenario(3, 700);
    let pop = Population::from_dataset(&data, &ModelConfig::default());
    let (s, report) = simulate_to_vec(&Posterior::new(sets), &pop, &sc, 5).unwrap();
    assert_eq!(s.len(), 3 * 700);
    assert_eq!(report.samples, 2100);
    assert_eq!(report.allocation.iter().sum::<u64>(), 700);
    for j in 0..3 {
        for (d, &n) in report.allocation.iter().enumerate() {
            assert_eq!(s.iter().filter(|x| x.iteration == j && x.stratum == d).count() as u64, n);
        }
    }
    // (iteration, stratum) order
    assert!(s.windows(2).all(|w| (w[0].iteration, w[0].stratum) <= (w[1].iteration, w[1].stratum)));
    for x in &s {
        let parts = [x.food, x.supplements, x.medicines, x.pcp];
        assert!(parts.iter().all(|v| *v >= 0.0 && v.is_finite()));
        let sum: f64 = parts.iter().sum();
        assert!((x.aggregated - sum).abs() <= 1e-12 * sum.max(f64::MIN_POSITIVE));
    }
}

#[test]
fn same_seed_same_stream_and_thread_count_does_not_matter() {
    let (data, sets) = setup();
    let sc = scenario(5, 300);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| run(&data, &sets, &sc, 9));
    let b = three.install(|| run(&data, &sets, &sc, 9));
    assert_eq!(a, b);
    assert_ne!(a, run(&data, &sets, &sc, 10));
}

#[test]
fn post_ban_is_nested_in_pre_ban() {
    let (data, sets) = setup();
    let pre = run(&data, &sets, &scenario(2, 2000), 3);
    let post = run(&data, &sets, &ScenarioConfig { preset: aggrex_core::pseudopop::Preset::PostBan, ..scenario(2, 2000) }, 3);
    for (a, b) in pre.iter().zip(&post) {
        assert_eq!((b.food, b.supplements), (0.0, 0.0));
        assert_eq!((a.medicines, a.pcp), (b.medicines, b.pcp));
        assert!(b.aggregated <= a.aggregated);
    }
}

#[test]
fn adding_a_source_never_lowers_anyone() {
    let (data, sets) = setup();
    let base = scenario(2, 500);
    let mut prev: Option<Vec<ExposureSample>> = None;
    let mut enabled = Vec::new();
    for s in [Source::Pcp, Source::Medicines, Source::Supplements, Source::Food] {
        enabled.push(s);
        let cur = run(&data, &sets, &ScenarioConfig { sources: Some(enabled.clone()), ..base.clone() }, 4);
        if let Some(p) = &prev {
            assert!(p.iter().zip(&cur).all(|(a, b)| b.aggregated >= a.aggregated));
        }
        prev = Some(cur);
    }
}

#[test]
fn market_off_dominates_individually() {
    let (data, sets) = setup();
    let on = run(&data, &sets, &scenario(2, 1000), 6);
    let off = run(&data, &sets, &ScenarioConfig { market_presence: false, ..scenario(2, 1000) }, 6);
    for (a, b) in on.iter().zip(&off) {
        assert!(b.food >= a.food && b.supplements >= a.supplements && b.pcp >= a.pcp);
        assert_eq!(a.medicines, b.medicines);
    }
    let mean = |v: &[ExposureSample]| v.iter().map(|x| x.aggregated).sum::<f64>() / v.len() as f64;
    assert!(mean(&off) > mean(&on));
}

#[test]
fn nano_fraction_scales_the_additive_sources() {
    let (data, sets) = setup();
    let plain = run(&data, &sets, &scenario(1, 1000), 8);
    let nano = run(&data, &sets, &ScenarioConfig { nano: true, ..scenario(1, 1000) }, 8);
    for (a, b) in plain.iter().zip(&nano) {
        assert_eq!(a.pcp, b.pcp);
        for (x, y) in [(a.food, b.food), (a.supplements, b.supplements), (a.medicines, b.medicines)] {
            if x > 0.0 {
                let f = y / x;
                assert!((0.03..0.41).contains(&f), "{f}");
            }
        }
    }
}

#[test]
fn sample_file_round_trip() {
    let (data, sets) = setup();
    let s = run(&data, &sets, &scenario(2, 200), 7);
    let mut buf = Vec::new();
    write_samples(&mut buf, &data.strata, &s).unwrap();
    let table = read_samples(buf.as_slice()).unwrap();
    assert_eq!(table.samples.len(), s.len());
    for (a, b) in s.iter().zip(&table.samples) {
        assert_eq!(a.iteration, b.iteration);
        assert_eq!(table.strata[b.stratum], data.strata.strata()[a.stratum].key);
        assert_eq!((a.food, a.supplements, a.medicines, a.pcp, a.aggregated), (b.food, b.supplements, b.medicines, b.pcp, b.aggregated));
    }
    assert!(read_samples("a,b\n1,2\n".as_bytes()).is_err());
}

#[test]
fn missing_inputs_are_reported() {
    let (data, sets) = setup();
    let pop = Population::from_dataset(&data, &ModelConfig::default());
    let without: Vec<DrawSet> = sets.iter().filter(|s| s.name() != "market_pcp").cloned().collect();
    let err = simulate_to_vec(&Posterior::new(without.clone()), &pop, &scenario(1, 100), 1).unwrap_err();
    assert!(matches!(err, SimulationError::MissingModel(ref m) if m == "market_pcp"), "{err}");
    // not needed once the market factor is off
    let sc = ScenarioConfig { market_presence: false, ..scenario(1, 100) };
    assert!(simulate_to_vec(&Posterior::new(without), &pop, &sc, 1).is_ok());

    let mut sc = scenario(1, 100);
    sc.retention.remove("toothpaste");
    assert!(matches!(
        simulate_to_vec(&Posterior::new(sets.clone()), &pop, &sc, 1),
        Err(SimulationError::MissingRetention(_))
    ));

    let mut empty = pop.clone();
    empty.pools.supplements.concentrations.clear();
    assert!(matches!(
        simulate_to_vec(&Posterior::new(sets.clone()), &empty, &scenario(1, 100), 1),
        Err(SimulationError::EmptyPool(_))
    ));
    let few = scenario(1, 2);
    assert!(matches!(
        simulate_to_vec(&Posterior::new(sets), &pop, &few, 1),
        Err(SimulationError::TooFewIndividuals { .. })
    ));
}
