use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aggrex::manifest::RunManifest;
use clap::CommandFactory;

fn aggrex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aggrex")).args(args).env_remove("AGGREX_THREADS").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, seed: u64) -> PathBuf {
    let data = dir.join("data");
    let o = aggrex(&["synth", "--seed", &seed.to_string(), "--out-dir", p(&data)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    data
}

fn simulate(data: &Path, scenario: &str, out: &Path, seed: u64) -> Output {
    let file = out.with_extension("toml");
    fs::write(&file, scenario).unwrap();
    aggrex(&[
        "simulate",
        "--draws",
        p(&data.join("truth_draws")),
        "--scenario",
        p(&file),
        "--seed",
        &seed.to_string(),
        "--out-dir",
        p(out),
    ])
}

fn column_sums(file: &Path) -> Vec<f64> {
    let text = fs::read_to_string(file).unwrap();
    let mut sums = vec![0.0; 5];
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        for (i, v) in f[4..].iter().enumerate() {
            sums[i] += v.parse::<f64>().unwrap();
        }
    }
    sums
}

#[test]
fn every_flag_is_documented() {
    let cli = aggrex::Cli::command();
    let mut seen = 0;
    for arg in cli.get_arguments() {
        assert!(arg.get_help().is_some(), "--{} has no help", arg.get_id());
    }
    for sub in cli.get_subcommands() {
        assert!(sub.get_about().is_some(), "{} has no description", sub.get_name());
        let help = String::from_utf8(aggrex(&[sub.get_name(), "--help"]).stdout).unwrap();
        for arg in sub.get_arguments() {
            if arg.get_id() == "help" {
                continue;
            }
            assert!(arg.get_help().is_some(), "{} --{} has no help", sub.get_name(), arg.get_id());
            let flag = format!("--{}", arg.get_long().unwrap());
            assert!(help.contains(&flag), "{} help lacks {flag}", sub.get_name());
            seen += 1;
        }
    }
    assert!(seen > 20);
}

#[test]
fn documented_flags_exist() {
    let cli = aggrex::Cli::command();
    let expected: [(&str, &[&str]); 5] = [
        ("fit", &["data", "model-config", "chains", "warmup", "samples", "seed", "out-dir"]),
        ("simulate", &["draws", "scenario", "seed", "population", "out-dir"]),
        ("summarize", &["samples", "probes", "ci", "group-by", "out-dir"]),
        ("synth", &["truth", "seed", "out-dir"]),
        ("oracle", &["truth", "scenario", "seed", "out"]),
    ];
    for (name, flags) in expected {
        let sub = cli.find_subcommand(name).unwrap();
        let longs: Vec<&str> = sub.get_arguments().filter_map(|a| a.get_long()).collect();
        for f in flags {
            assert!(longs.contains(f), "{name} lacks --{f}");
        }
    }
    let threads = cli.get_arguments().find(|a| a.get_long() == Some("threads")).unwrap();
    assert_eq!(threads.get_env().unwrap(), "AGGREX_THREADS");
}

#[test]
fn synth_bundle_follows_its_contract() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), 1);
    for f in ["strata.csv", "survey.csv", "truth.json", "manifest.json", "truth_draws/food.draws.csv", "truth_draws/fit.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let survey = fs::read_to_string(a.join("survey.csv")).unwrap();
    let food_rows = survey.lines().filter(|l| l.contains(",food_")).count();
    assert!(food_rows > 0 && food_rows <= 400 * 2 * 3, "{food_rows}");
    let mut people = std::collections::BTreeMap::new();
    for l in survey.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        people.insert(f[0].to_string(), f[5].is_empty());
    }
    let missing = people.values().filter(|m| **m).count() as f64 / people.len() as f64;
    assert!((missing - 0.10).abs() <= 0.02, "{missing}");
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["food"]["lambda"], 0.3);

    let other = tempfile::tempdir().unwrap();
    let b = synth(other.path(), 2);
    let head = |d: &Path| fs::read_to_string(d.join("survey.csv")).unwrap().lines().next().unwrap().to_string();
    assert_eq!(head(&a), head(&b));
    assert_ne!(fs::read(a.join("survey.csv")).unwrap(), fs::read(b.join("survey.csv")).unwrap());

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "n_individuals = 10\nunknown_key = 1\n").unwrap();
    let o = aggrex(&["synth", "--truth", p(&bad), "--out-dir", p(&dir.path().join("x"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn simulate_presets_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 3);
    let pre = dir.path().join("pre");
    let o = simulate(&data, "iterations = 3\npopulation_total = 400\n", &pre, 11);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sums = column_sums(&pre.join("exposure_samples.csv"));
    assert!(sums[..4].iter().all(|s| *s > 0.0), "{sums:?}");

    let post = dir.path().join("post");
    let o = simulate(&data, "preset = \"post_ban\"\niterations = 3\npopulation_total = 400\n", &post, 11);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sums = column_sums(&post.join("exposure_samples.csv"));
    assert_eq!((sums[0], sums[1]), (0.0, 0.0));
    assert!(sums[2] > 0.0 && sums[3] > 0.0);

    let again = dir.path().join("again");
    simulate(&data, "iterations = 3\npopulation_total = 400\n", &again, 11);
    let f = |d: &Path| fs::read(d.join("exposure_samples.csv")).unwrap();
    assert_eq!(f(&pre), f(&again));
    let (m1, m2) = (RunManifest::read(&pre).unwrap(), RunManifest::read(&again).unwrap());
    assert_eq!(m1.outputs, m2.outputs);
    assert_eq!(m1.config_hash, m2.config_hash);
    assert!(m1.clamp_count > 0);
    assert_eq!(m1.seed, Some(11));
}

#[test]
fn simulate_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 4);
    let o = simulate(&data, "populaton_total = 5\n", &dir.path().join("typo"), 1);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = simulate(&data, "population_total = 0\n", &dir.path().join("zero"), 1);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let draws = dir.path().join("partial");
    fs::create_dir_all(&draws).unwrap();
    for e in fs::read_dir(data.join("truth_draws")).unwrap() {
        let e = e.unwrap();
        let name = e.file_name().into_string().unwrap();
        if !name.starts_with("medicines") {
            fs::copy(e.path(), draws.join(&name)).unwrap();
        }
    }
    let o = aggrex(&["simulate", "--draws", p(&draws), "--data", p(&data), "--out-dir", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("medicines"), "{}", stderr(&o));
    let o = aggrex(&["simulate", "--draws", p(&dir.path().join("nowhere")), "--out-dir", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn summarize_outputs_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 5);
    let sim = dir.path().join("sim");
    assert_eq!(code(&simulate(&data, "iterations = 4\npopulation_total = 300\n", &sim, 2)), 0);
    let samples = sim.join("exposure_samples.csv");
    let out = dir.path().join("sum");
    let o = aggrex(&["summarize", "--samples", p(&samples), "--probes", "0.5,0.95", "--out-dir", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let overall = fs::read_to_string(out.join("summaries.csv")).unwrap();
    assert_eq!(overall.lines().count(), 3);
    let table = fs::read_to_string(out.join("stratum_table.csv")).unwrap();
    let mut groups = std::collections::BTreeMap::new();
    for l in table.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        *groups.entry((f[0].to_string(), f[1].to_string(), f[2].to_string())).or_insert(0) += 1;
    }
    assert!(groups.values().all(|n| *n == 2), "{groups:?}");
    assert!(groups.contains_key(&("all".into(), "all".into(), "aggregated".into())));
    for f in ["contributions.csv", "ecdf.csv", "manifest.json"] {
        assert!(out.join(f).exists());
    }

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let o = aggrex(&["summarize", "--samples", p(&empty), "--out-dir", p(&out)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let header_only = dir.path().join("header.csv");
    fs::write(&header_only, aggrex_core::pseudopop::SAMPLE_COLUMNS.join(",") + "\n").unwrap();
    assert_eq!(code(&aggrex(&["summarize", "--samples", p(&header_only), "--out-dir", p(&out)])), 3);
    assert_eq!(code(&aggrex(&["summarize", "--samples", p(&samples), "--probes", "1.5", "--out-dir", p(&out)])), 2);
    assert_eq!(code(&aggrex(&["summarize", "--samples", p(&samples), "--group-by", "region", "--out-dir", p(&out)])), 2);
}

/// Reference tables from the first verified run of this pipeline.
#[test]
fn summaries_match_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 1);
    let sim = dir.path().join("sim");
    assert_eq!(code(&simulate(&data, "iterations = 20\npopulation_total = 500\n", &sim, 1)), 0);
    let out = dir.path().join("sum");
    let o = aggrex(&["summarize", "--samples", p(&sim.join("exposure_samples.csv")), "--grid-points", "25", "--out-dir", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for f in ["summaries.csv", "stratum_table.csv", "contributions.csv", "ecdf.csv"] {
        let got = fs::read(out.join(f)).unwrap();
        if std::env::var_os("AGGREX_BLESS").is_some() {
            fs::create_dir_all(&golden).unwrap();
            fs::write(golden.join(f), &got).unwrap();
        }
        assert_eq!(got, fs::read(golden.join(f)).unwrap(), "{f} differs from the golden copy");
    }
}

#[test]
fn fit_errors_and_diagnostic_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 6);

    let cfg = dir.path().join("fit.toml");
    fs::write(&cfg, "[sampler]\nmax_tree_depth = 0\n").unwrap();
    let o = aggrex(&["fit", "--data", p(&data), "--model-config", p(&cfg), "--out-dir", p(&dir.path().join("f"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    fs::write(&cfg, "[sampler]\nchians = 2\n").unwrap();
    let o = aggrex(&["fit", "--data", p(&data), "--model-config", p(&cfg), "--out-dir", p(&dir.path().join("f"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let broken = dir.path().join("broken");
    fs::create_dir_all(&broken).unwrap();
    for e in fs::read_dir(&data).unwrap() {
        let e = e.unwrap();
        if e.path().is_file() {
            fs::copy(e.path(), broken.join(e.file_name())).unwrap();
        }
    }
    let strata = fs::read_to_string(broken.join("strata.csv")).unwrap().replacen("count", "people", 1);
    fs::write(broken.join("strata.csv"), strata).unwrap();
    let o = aggrex(&["fit", "--data", p(&broken), "--out-dir", p(&dir.path().join("f"))]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("strata.csv") && stderr(&o).contains("count"), "{}", stderr(&o));

    // far too few draws for the effective sample size thresholds
    let out = dir.path().join("tiny");
    let o = aggrex(&["fit", "--data", p(&data), "--chains", "2", "--warmup", "30", "--samples", "20", "--out-dir", p(&out)]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    let m = RunManifest::read(&out).unwrap();
    assert_eq!(m.command, "fit");
    assert!(m.outputs.contains_key("food.draws.csv") && m.outputs.contains_key("diagnostics.txt"));
    // draws from a failed fit still simulate
    let o = aggrex(&["simulate", "--draws", p(&out), "--population", "200", "--out-dir", p(&dir.path().join("s"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn oracle_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 7);
    let sc = dir.path().join("sc.toml");
    fs::write(&sc, "iterations = 3\npopulation_total = 200\n").unwrap();
    let run = |out: &Path| aggrex(&["oracle", "--truth", p(&data.join("truth.json")), "--scenario", p(&sc), "--seed", "3", "--out", p(out)]);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert_eq!(code(&run(&a)), 0);
    assert_eq!(code(&run(&b)), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 4);
    assert!(dir.path().join("a.manifest.json").exists());
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{}").unwrap();
    assert_eq!(code(&aggrex(&["oracle", "--truth", p(&bad), "--out", p(&dir.path().join("c.csv"))])), 2);
}

#[test]
fn zero_threads_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = aggrex(&["--threads", "0", "synth", "--out-dir", p(dir.path())]);
    assert_eq!(code(&o), 2);
}
