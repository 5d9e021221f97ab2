//! The subcommands. Each returns the manifest it wrote.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use aggrex_core::data::Dataset;
use aggrex_core::models::{build_graphs, ModelConfig, ModelError};
use aggrex_core::pseudopop::{
    read_samples, simulate_population, Population, Posterior, SampleWriter, ScenarioConfig, SimulationError,
};
use aggrex_core::sampler::{self, DrawSet, SamplerConfig, SamplerError};
use aggrex_core::summaries::{self, GroupKey, SummaryError};
use aggrex_core::synth::{generate, truth_draws, GeneratorConfig};

use crate::args::{FitArgs, OracleArgs, SimulateArgs, SummarizeArgs, SynthArgs};
use crate::manifest::{InputHash, RunManifest};
use crate::{oracle, CliError};

pub const SAMPLES_FILE: &str = "exposure_samples.csv";
pub const FIT_RECORD: &str = "fit.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.txt";
pub const TRUTH_FILE: &str = "truth.json";
pub const TRUTH_DRAWS_DIR: &str = "truth_draws";

/// Contents of a `fit` configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub model: ModelConfig,
    pub sampler: SamplerConfig,
}

/// Written next to the draws so `simulate` can find the data they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    /// Dataset directory, relative to the draws directory when not absolute.
    pub data: String,
    pub model: ModelConfig,
}

fn output(e: impl std::fmt::Display) -> CliError {
    CliError::Output(e.to_string())
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    Dataset::load(dir).map_err(|e| CliError::Data(e.to_string()))
}

/// Every file of `dir` except the manifest, sorted by name.
fn files_in(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(output)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != crate::manifest::MANIFEST_FILE))
        .collect();
    v.sort();
    Ok(v)
}

fn hash_dataset(h: &mut InputHash, dir: &Path) -> Result<(), CliError> {
    for f in Dataset::files(dir) {
        let name = f.file_name().unwrap_or_default().to_string_lossy().into_owned();
        h.file(&format!("data/{name}"), &f).map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?;
    }
    Ok(())
}

fn model_error(e: ModelError) -> CliError {
    match e {
        ModelError::InvalidConfig(m) => CliError::Config(m),
        other => CliError::Data(other.to_string()),
    }
}

fn sampler_error(e: SamplerError) -> CliError {
    match e {
        SamplerError::InvalidConfig(m) => CliError::Config(m),
        other => CliError::Sampler(other.to_string()),
    }
}

pub fn fit(args: &FitArgs) -> Result<RunManifest, CliError> {
    let mut cfg: FitConfig = match &args.model_config {
        Some(p) => read_toml(p)?,
        None => FitConfig::default(),
    };
    let s = &mut cfg.sampler;
    s.chains = args.chains.unwrap_or(s.chains);
    s.warmup_iters = args.warmup.unwrap_or(s.warmup_iters);
    s.sampling_iters = args.samples.unwrap_or(s.sampling_iters);
    s.seed = args.seed.unwrap_or(s.seed);
    cfg.model.validate().map_err(model_error)?;
    cfg.sampler.validate().map_err(sampler_error)?;

    let mut manifest = RunManifest::new("fit", Some(cfg.sampler.seed));
    let t = Instant::now();
    let data = load_dataset(&args.data)?;
    let graphs = build_graphs(&data, &cfg.model).map_err(model_error)?;
    manifest.timings.insert("load".into(), t.elapsed().as_secs_f64());

    let mut h = InputHash::default();
    hash_dataset(&mut h, &args.data)?;
    h.setting("config", toml::to_string(&cfg).map_err(|e| CliError::Config(e.to_string()))?);
    manifest.config_hash = h.finish();

    fs::create_dir_all(&args.out_dir).map_err(output)?;
    let mut report = String::new();
    let mut failed = Vec::new();
    for (i, g) in graphs.iter().enumerate() {
        let t = Instant::now();
        let sc = SamplerConfig { seed: cfg.sampler.seed.wrapping_add(i as u64), ..cfg.sampler.clone() };
        let set = sampler::run(g, &sc).map_err(sampler_error)?;
        manifest.timings.insert(format!("fit.{}", g.name), t.elapsed().as_secs_f64());
        let div: usize = set.meta.chain_stats.iter().map(|c| c.divergences).sum();
        manifest.divergence_count += div as u64;
        match &set.meta.diagnostics {
            Some(d) => {
                println!(
                    "{:<22} max R-hat {:.4}  min bulk ESS {:>7.0}  divergences {:>4}  {}",
                    g.name,
                    d.max_rhat(),
                    d.min_ess(),
                    div,
                    if d.passed { "ok" } else { "FAILED" }
                );
                report.push_str(&format!("== {} ==\n{}\n", g.name, d.render()));
                if !d.passed {
                    failed.push(format!("{} ({})", g.name, d.failures().map(|p| p.name.as_str()).take(5).collect::<Vec<_>>().join(", ")));
                }
            }
            None => println!("{:<22} diagnostics skipped (need 2 chains of 4 draws)", g.name),
        }
        set.save(&args.out_dir).map_err(output)?;
    }
    fs::write(args.out_dir.join(DIAGNOSTICS_FILE), report).map_err(output)?;
    let data_path = fs::canonicalize(&args.data).unwrap_or_else(|_| args.data.clone());
    let record = FitRecord { data: data_path.to_string_lossy().into_owned(), model: cfg.model.clone() };
    fs::write(args.out_dir.join(FIT_RECORD), serde_json::to_string_pretty(&record).map_err(output)? + "\n").map_err(output)?;
    manifest.add_outputs(&files_in(&args.out_dir)?).map_err(output)?;
    manifest.write(&args.out_dir).map_err(output)?;
    if !failed.is_empty() {
        return Err(CliError::Diagnostics(format!("thresholds not met: {}", failed.join("; "))));
    }
    Ok(manifest)
}

fn simulation_error(e: SimulationError) -> CliError {
    use SimulationError::*;
    match e {
        InvalidScenario(_) | MissingRetention(_) | TooFewIndividuals { .. } => CliError::Config(e.to_string()),
        EmptyPopulation | MissingModel(_) | MissingBlock { .. } | MissingConstants { .. } | EmptyPool(_) | Format(_) => {
            CliError::Data(e.to_string())
        }
        Io(_) | Csv(_) => CliError::Output(e.to_string()),
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<RunManifest, CliError> {
    let mut scenario: ScenarioConfig = match &args.scenario {
        Some(p) => read_toml(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(n) = args.population {
        scenario.population_total = n;
    }
    scenario.validate().map_err(simulation_error)?;
    let seed = args.seed.or(scenario.seed).unwrap_or(1);
    let mut manifest = RunManifest::new("simulate", Some(seed));

    let t = Instant::now();
    let sets = DrawSet::load_dir(&args.draws).map_err(|e| CliError::Data(format!("{}: {e}", args.draws.display())))?;
    if sets.is_empty() {
        return Err(CliError::Data(format!("no draw files in {}", args.draws.display())));
    }
    let record: Option<FitRecord> = fs::read_to_string(args.draws.join(FIT_RECORD))
        .ok()
        .map(|s| serde_json::from_str(&s).map_err(|e| CliError::Data(format!("{FIT_RECORD}: {e}"))))
        .transpose()?;
    let data_dir = match (&args.data, &scenario.data, &record) {
        (Some(d), _, _) => d.clone(),
        (None, Some(d), _) => resolve(args.scenario.as_deref().and_then(Path::parent).unwrap_or(Path::new(".")), d),
        (None, None, Some(r)) => resolve(&args.draws, &r.data),
        _ => return Err(CliError::Config("no dataset: pass --data or set `data` in the scenario".into())),
    };
    let model = record.map(|r| r.model).unwrap_or_default();
    let data = load_dataset(&data_dir)?;
    manifest.timings.insert("load".into(), t.elapsed().as_secs_f64());

    let mut h = InputHash::default();
    hash_dataset(&mut h, &data_dir)?;
    h.dir("draws", &args.draws).map_err(|e| CliError::Data(e.to_string()))?;
    h.setting("scenario", toml::to_string(&scenario).map_err(|e| CliError::Config(e.to_string()))?);
    h.setting("seed", seed);
    manifest.config_hash = h.finish();

    let posterior = Posterior::new(sets);
    let population = Population::from_dataset(&data, &model);
    fs::create_dir_all(&args.out_dir).map_err(output)?;
    let path = args.out_dir.join(SAMPLES_FILE);
    let t = Instant::now();
    let mut writer = SampleWriter::new(BufWriter::new(File::create(&path).map_err(output)?), &population.strata)
        .map_err(simulation_error)?;
    let report = simulate_population(&posterior, &population, &scenario, seed, |s| writer.write(s)).map_err(simulation_error)?;
    writer.finish().map_err(simulation_error)?;
    manifest.timings.insert("simulate".into(), t.elapsed().as_secs_f64());
    manifest.clamp_count = report.clamp_events;
    manifest.degenerate_pert_count = report.degenerate_pert;
    println!(
        "{} pseudo-populations x {} individuals; {} clamped back-transforms, {} degenerate PERT draws",
        report.iterations, scenario.population_total, report.clamp_events, report.degenerate_pert
    );
    manifest.add_outputs(&[path]).map_err(output)?;
    manifest.write(&args.out_dir).map_err(output)?;
    Ok(manifest)
}

fn parse_probes(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| {
            let v: f64 = x.trim().parse().map_err(|_| CliError::Config(format!("probe {x:?} is not a number")))?;
            if v > 0.0 && v < 1.0 {
                Ok(v)
            } else {
                Err(CliError::Config(format!("probe {v} outside (0, 1)")))
            }
        })
        .collect()
}

fn summary_error(e: SummaryError) -> CliError {
    match e {
        SummaryError::UnknownGroupKey(_) | SummaryError::InvalidProbe(_) | SummaryError::InvalidLevel(_) | SummaryError::UnsortedGrid => {
            CliError::Config(e.to_string())
        }
        SummaryError::TooFewIterations(_) | SummaryError::ZeroAggregate(_) => CliError::Data(e.to_string()),
        SummaryError::Io(_) | SummaryError::Csv(_) => CliError::Output(e.to_string()),
    }
}

pub fn summarize(args: &SummarizeArgs) -> Result<RunManifest, CliError> {
    let probes = parse_probes(&args.probes)?;
    if probes.is_empty() {
        return Err(CliError::Config("no probes given".into()));
    }
    if !(args.ci > 0.0 && args.ci < 1.0) {
        return Err(CliError::Config(format!("--ci {} outside (0, 1)", args.ci)));
    }
    let group_by: Vec<GroupKey> = args
        .group_by
        .split(',')
        .filter(|x| !x.trim().is_empty())
        .map(GroupKey::parse)
        .collect::<Result<_, _>>()
        .map_err(summary_error)?;
    if args.grid_points < 2 {
        return Err(CliError::Config("--grid-points must be at least 2".into()));
    }
    let mut manifest = RunManifest::new("summarize", None);
    let t = Instant::now();
    let file = File::open(&args.samples).map_err(|e| CliError::Data(format!("{}: {e}", args.samples.display())))?;
    let table = read_samples(std::io::BufReader::new(file)).map_err(|e| CliError::Data(format!("{}: {e}", args.samples.display())))?;
    if table.samples.is_empty() {
        return Err(CliError::Data(format!("{} holds no samples", args.samples.display())));
    }
    let mut h = InputHash::default();
    h.file("samples", &args.samples).map_err(|e| CliError::Data(e.to_string()))?;
    h.setting("probes", format!("{probes:?}"));
    h.setting("ci", args.ci);
    h.setting("group_by", &args.group_by);
    h.setting("pooled", args.pooled);
    h.setting("grid_points", args.grid_points);
    manifest.config_hash = h.finish();

    let quantiles = if args.pooled {
        summaries::pooled_quantiles(&table.samples, &probes)
    } else {
        summaries::population_quantiles(&table.samples, &probes, args.ci)
    }
    .map_err(summary_error)?;
    let cells = summaries::stratum_table(&table, &group_by, true, &probes, args.ci).map_err(summary_error)?;
    let shares = summaries::source_contributions(&table.samples, args.ci).map_err(summary_error)?;
    let grid = summaries::default_grid(&table.samples, args.grid_points);
    let ecdf = summaries::ecdf_band(&table.samples, &grid, args.ci).map_err(summary_error)?;
    manifest.timings.insert("summarize".into(), t.elapsed().as_secs_f64());

    fs::create_dir_all(&args.out_dir).map_err(output)?;
    let create = |name: &str| -> Result<(PathBuf, File), CliError> {
        let p = args.out_dir.join(name);
        let f = File::create(&p).map_err(output)?;
        Ok((p, f))
    };
    let (p1, f) = create("summaries.csv")?;
    summaries::write_quantiles(f, &quantiles).map_err(summary_error)?;
    let (p2, f) = create("stratum_table.csv")?;
    summaries::write_stratum_table(f, &cells).map_err(summary_error)?;
    let (p3, f) = create("contributions.csv")?;
    summaries::write_contributions(f, &shares).map_err(summary_error)?;
    let (p4, f) = create("ecdf.csv")?;
    summaries::write_ecdf(f, &ecdf).map_err(summary_error)?;
    for q in &quantiles {
        println!("P{:<5} {:.4e} ({:.4e} - {:.4e})", q.probe * 100.0, q.posterior_median, q.ci_low, q.ci_high);
    }
    manifest.add_outputs(&[p1, p2, p3, p4]).map_err(output)?;
    manifest.write(&args.out_dir).map_err(output)?;
    Ok(manifest)
}

pub fn synth(args: &SynthArgs) -> Result<RunManifest, CliError> {
    let cfg: GeneratorConfig = match &args.truth {
        Some(p) => read_toml(p)?,
        None => GeneratorConfig::default(),
    };
    let mut manifest = RunManifest::new("synth", Some(args.seed));
    let mut h = InputHash::default();
    h.setting("generator", toml::to_string(&cfg).map_err(|e| CliError::Config(e.to_string()))?);
    h.setting("seed", args.seed);
    manifest.config_hash = h.finish();

    let t = Instant::now();
    let (data, truth) = generate(&cfg, args.seed).map_err(|e| CliError::Config(e.to_string()))?;
    fs::create_dir_all(&args.out_dir).map_err(output)?;
    data.save(&args.out_dir).map_err(output)?;
    let truth_path = args.out_dir.join(TRUTH_FILE);
    fs::write(&truth_path, serde_json::to_string_pretty(&truth).map_err(output)? + "\n").map_err(output)?;
    let model = ModelConfig::default();
    let draws_dir = args.out_dir.join(TRUTH_DRAWS_DIR);
    fs::create_dir_all(&draws_dir).map_err(output)?;
    for set in truth_draws(&truth, &data, &model).map_err(|e| CliError::Config(e.to_string()))? {
        set.save(&draws_dir).map_err(output)?;
    }
    let record = FitRecord { data: "..".into(), model };
    fs::write(draws_dir.join(FIT_RECORD), serde_json::to_string_pretty(&record).map_err(output)? + "\n").map_err(output)?;
    manifest.timings.insert("generate".into(), t.elapsed().as_secs_f64());
    let mut outs = Dataset::files(&args.out_dir);
    outs.push(truth_path);
    manifest.add_outputs(&outs).map_err(output)?;
    manifest.write(&args.out_dir).map_err(output)?;
    Ok(manifest)
}

pub fn oracle(args: &OracleArgs) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(&args.truth).map_err(|e| CliError::Config(format!("{}: {e}", args.truth.display())))?;
    let truth: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.truth.display())))?;
    let scenario: toml::Table = match &args.scenario {
        Some(p) => read_toml(p)?,
        None => toml::Table::new(),
    };
    let mut manifest = RunManifest::new("oracle", Some(args.seed));
    let mut h = InputHash::default();
    h.file("truth", &args.truth).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(p) = &args.scenario {
        h.file("scenario", p).map_err(|e| CliError::Config(e.to_string()))?;
    }
    h.setting("seed", args.seed);
    manifest.config_hash = h.finish();
    let t = Instant::now();
    let out = oracle::run(&truth, &scenario, args.seed).map_err(CliError::Config)?;
    manifest.timings.insert("oracle".into(), t.elapsed().as_secs_f64());
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(output)?;
    }
    fs::write(&args.out, out.to_csv()).map_err(output)?;
    for r in &out.rows {
        println!("P{:<5} {:.6e} (se {:.2e})", r.probe * 100.0, r.value, r.mc_se);
    }
    manifest.add_outputs(std::slice::from_ref(&args.out)).map_err(output)?;
    let mpath = args.out.with_extension("manifest.json");
    fs::write(&mpath, serde_json::to_string_pretty(&manifest).map_err(output)? + "\n").map_err(output)?;
    Ok(manifest)
}
