//! Reference Monte Carlo of the pseudo-population under the true
//! parameters of a synthetic dataset. Deliberately a single straight-line
//! pass with its own parsing, random streams, variate generators and
//! apportionment: nothing here calls the simulator library, so agreement
//! with it is evidence rather than tautology.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde_json::Value;

pub const PROBES: [f64; 3] = [0.05, 0.5, 0.95];

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub probe: f64,
    /// Mean over batches of the within-batch quantile.
    pub value: f64,
    /// Standard error of that mean.
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    pub rows: Vec<OracleRow>,
    pub batches: usize,
    pub batch_size: usize,
}

impl OracleOutput {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("probe,value,mc_se,batches,batch_size\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{},{}\n", r.probe, r.value, r.mc_se, self.batches, self.batch_size));
        }
        s
    }
}

fn num(v: &Value, path: &str) -> Result<f64, String> {
    v.as_f64().ok_or_else(|| format!("truth: {path} is not a number"))
}

fn nums(v: &Value, path: &str) -> Result<Vec<f64>, String> {
    v.as_array().ok_or_else(|| format!("truth: {path} is not a list"))?.iter().map(|x| num(x, path)).collect()
}

fn strs(v: &Value, path: &str) -> Result<Vec<String>, String> {
    v.as_array()
        .ok_or_else(|| format!("truth: {path} is not a list"))?
        .iter()
        .map(|x| x.as_str().map(String::from).ok_or_else(|| format!("truth: {path} holds a non-string")))
        .collect()
}

/// Sum of the level effects of `lv` (age, gender, region indices).
fn effect(e: &Value, lv: [usize; 3]) -> Result<f64, String> {
    let mut s = 0.0;
    for (name, i) in ["age_group", "gender", "region"].iter().zip(lv) {
        s += num(&e[*name][i], name)?;
    }
    Ok(s)
}

fn inv_boxcox(f: f64, lambda: f64) -> f64 {
    if lambda.abs() < 1e-8 {
        return f.exp();
    }
    let b = lambda * f + 1.0;
    if b > 0.0 {
        b.powf(1.0 / lambda)
    } else {
        0.0
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// PERT(0, mode, 1) as Beta(1 + 4 mode, 1 + 4 (1 - mode)).
fn pert(rng: &mut ChaCha8Rng, mode: f64) -> f64 {
    if mode <= 0.0 {
        return 0.0;
    }
    if mode >= 1.0 {
        return 1.0;
    }
    Beta::new(1.0 + 4.0 * mode, 5.0 - 4.0 * mode).unwrap().sample(rng)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let i = h.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (h - i as f64) * (sorted[j] - sorted[i])
}

/// Upper bound of an age band label such as "3-9" or "65+".
fn band_top(label: &str) -> Option<u32> {
    label.split_once('-').and_then(|(_, hi)| hi.trim().parse().ok())
}

struct Knobs {
    food: bool,
    supplements: bool,
    medicines: bool,
    pcp: bool,
    market: bool,
    nano: Option<(f64, f64)>,
    retention: BTreeMap<String, (f64, bool)>,
    child: (f64, f64),
    cutoff: u32,
    total: u64,
    scale: [f64; 4],
    draws: usize,
    batches: usize,
}

fn knobs(t: &toml::Table) -> Result<Knobs, String> {
    let f = |k: &str, d: f64| t.get(k).and_then(|v| v.as_float().or(v.as_integer().map(|i| i as f64))).unwrap_or(d);
    let b = |k: &str, d: bool| t.get(k).and_then(|v| v.as_bool()).unwrap_or(d);
    let pair = |k: &str, d: (f64, f64)| -> (f64, f64) {
        match t.get(k).and_then(|v| v.as_array()) {
            Some(a) if a.len() == 2 => {
                let g = |v: &toml::Value| v.as_float().or(v.as_integer().map(|i| i as f64)).unwrap_or(f64::NAN);
                (g(&a[0]), g(&a[1]))
            }
            _ => d,
        }
    };
    let preset = t.get("preset").and_then(|v| v.as_str()).unwrap_or("pre_ban");
    let mut on: Vec<String> = match preset {
        "pre_ban" => vec!["food", "supplements", "medicines", "pcp"],
        "post_ban" => vec!["medicines", "pcp"],
        other => return Err(format!("unknown preset {other}")),
    }
    .into_iter()
    .map(String::from)
    .collect();
    if let Some(list) = t.get("sources").and_then(|v| v.as_array()) {
        on = list.iter().filter_map(|v| v.as_str().map(String::from)).collect();
    }
    let mut retention = BTreeMap::new();
    retention.insert("lip_balm".to_string(), (1.0, false));
    retention.insert("toothpaste".to_string(), (0.05, true));
    if let Some(r) = t.get("retention").and_then(|v| v.as_table()) {
        retention.clear();
        for (k, v) in r {
            let c = v.get("constant").and_then(|x| x.as_float().or(x.as_integer().map(|i| i as f64))).unwrap_or(1.0);
            let u = v.get("child_uniform").and_then(|x| x.as_bool()).unwrap_or(false);
            retention.insert(k.clone(), (c, u));
        }
    }
    let mut scale = [1e-3, 1e-3, 1e-6, 1e-6];
    if let Some(u) = t.get("unit_scale").and_then(|v| v.as_table()) {
        for (i, k) in ["food", "supplements", "medicines", "pcp"].iter().enumerate() {
            if let Some(x) = u.get(*k).and_then(|x| x.as_float()) {
                scale[i] = x;
            }
        }
    }
    let has = |s: &str| on.iter().any(|x| x == s);
    Ok(Knobs {
        food: has("food"),
        supplements: has("supplements"),
        medicines: has("medicines"),
        pcp: has("pcp"),
        market: b("market_presence", true),
        nano: b("nano", false).then(|| pair("nano_range", (0.03, 0.41))),
        retention,
        child: pair("child_retention_range", (0.26, 0.67)),
        cutoff: f("child_age_cutoff", 12.0) as u32,
        total: f("population_total", 100_000.0) as u64,
        scale,
        draws: f("food_amount_draws", 100.0) as usize,
        batches: f("iterations", 50.0) as usize,
    })
}

/// Largest remainders with lowest-index ties and at least one person per
/// populated stratum, taken from the stratum furthest above its quota.
pub fn apportion(counts: &[u64], total: u64) -> Vec<u64> {
    let pop: u64 = counts.iter().sum();
    let quota: Vec<(u64, u64)> = counts.iter().map(|&c| ((c * total) / pop, (c * total) % pop)).collect();
    let mut n: Vec<u64> = quota.iter().map(|q| q.0).collect();
    let mut left = total - n.iter().sum::<u64>();
    let mut taken = vec![false; counts.len()];
    while left > 0 {
        let mut best = usize::MAX;
        for i in 0..counts.len() {
            if !taken[i] && (best == usize::MAX || quota[i].1 > quota[best].1) {
                best = i;
            }
        }
        taken[best] = true;
        n[best] += 1;
        left -= 1;
    }
    for i in 0..counts.len() {
        if counts[i] > 0 && n[i] == 0 {
            let mut donor = usize::MAX;
            let mut excess = i128::MIN;
            for k in 0..counts.len() {
                let e = n[k] as i128 * pop as i128 - counts[k] as i128 * total as i128;
                if n[k] > 1 && e > excess {
                    excess = e;
                    donor = k;
                }
            }
            n[donor] -= 1;
            n[i] = 1;
        }
    }
    n
}

/// Runs the reference simulation. `truth` is the synthetic generator's truth
/// file and `scenario` a scenario file (only the simulation knobs are read).
pub fn run(truth: &Value, scenario: &toml::Table, seed: u64) -> Result<OracleOutput, String> {
    let k = knobs(scenario)?;
    if k.batches < 2 || k.total < 1 {
        return Err("oracle needs at least 2 iterations and 1 individual".into());
    }
    let ages = strs(&truth["age_groups"], "age_groups")?;
    let genders = strs(&truth["genders"], "genders")?;
    let regions = strs(&truth["regions"], "regions")?;
    let strata = truth["strata"].as_array().ok_or("truth: strata missing")?;
    let mut levels = Vec::new();
    let mut counts = Vec::new();
    for s in strata {
        let find = |list: &[String], key: &str| list.iter().position(|x| Some(x.as_str()) == s[key].as_str());
        let lv = [find(&ages, "age_group"), find(&genders, "gender"), find(&regions, "region")];
        let [Some(a), Some(g), Some(r)] = lv else { return Err("truth: stratum with unknown level".into()) };
        levels.push([a, g, r]);
        counts.push(s["count"].as_u64().ok_or("truth: stratum count")?);
    }
    let alloc = apportion(&counts, k.total);

    let food = &truth["food"];
    let eta0 = nums(&food["eta0"], "food.eta0")?;
    let gamma0 = nums(&food["gamma0"], "food.gamma0")?;
    let lam_f = num(&food["lambda"], "food.lambda")?;
    let sig_f = num(&food["sigma_amount"], "food.sigma_amount")?;
    let sd = nums(&food["subject_sd"], "food.subject_sd")?;
    let rho = num(&food["subject_corr"], "food.subject_corr")?;
    let food_pi = nums(&food["market_pi"], "food.market_pi")?;
    let food_conc = nums(&food["concentration_median"], "food.concentration_median")?;

    let supp = &truth["supplements"];
    let alpha0 = num(&supp["alpha0"], "alpha0")?;
    let sig_tau = num(&supp["sigma_tau"], "sigma_tau")?;
    let rho0 = nums(&supp["rho0"], "rho0")?;
    let sig_s = nums(&supp["sigma_amount"], "supplements.sigma_amount")?;
    let theta = nums(&supp["theta"], "theta")?;
    let supp_pi = num(&supp["market_pi"], "supplements.market_pi")?;
    let supp_conc = nums(&supp["concentrations"], "supplements.concentrations")?;
    let mut all_counts = Vec::new();
    let mut by_label: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    if let Some(m) = supp["counts"].as_object() {
        for (label, v) in m {
            let c: Vec<u64> = v.as_array().into_iter().flatten().filter_map(|x| x.as_u64()).collect();
            all_counts.extend(&c);
            by_label.insert(label.clone(), c);
        }
    }
    let components = WeightedIndex::new(&theta).map_err(|e| format!("theta: {e}"))?;

    let med = &truth["medicines"];
    let psi0 = num(&med["psi0"], "psi0")?;
    let phi0 = num(&med["phi0"], "phi0")?;
    let lam_m = num(&med["lambda"], "medicines.lambda")?;
    let sig_m = num(&med["sigma_amount"], "medicines.sigma_amount")?;

    let pcp = &truth["pcp"];
    let pcp_cats = strs(&pcp["categories"], "pcp.categories")?;
    let pcp_pi = nums(&pcp["market_pi"], "pcp.market_pi")?;
    let pcp_conc: Vec<Vec<f64>> =
        pcp["concentrations"].as_array().ok_or("pcp.concentrations")?.iter().map(|v| nums(v, "pcp.concentrations")).collect::<Result<_, _>>()?;
    let constants = pcp["constants"].as_array().ok_or("pcp.constants")?;

    if k.supplements && (supp_conc.is_empty() || all_counts.is_empty()) {
        return Err("supplement pools are empty".into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_batch: Vec<Vec<f64>> = vec![Vec::new(); PROBES.len()];
    for _ in 0..k.batches {
        let mut values = Vec::with_capacity(k.total as usize);
        for (d, &n) in alloc.iter().enumerate() {
            let lv = levels[d];
            let age = &ages[lv[0]];
            let child = band_top(age).is_some_and(|hi| hi <= k.cutoff);
            let label = format!("{age}|{}|{}", genders[lv[1]], regions[lv[2]]);
            let pool = by_label.get(&label).filter(|c| !c.is_empty()).unwrap_or(&all_counts);
            for _ in 0..n {
                let mut food_x = 0.0;
                if k.food {
                    for g in 0..eta0.len() {
                        let (z1, z2) = (normal(&mut rng), normal(&mut rng));
                        let ups = sd[0] * z1;
                        let nu = sd[1] * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);
                        let mu = gamma0[g] + effect(&food["gamma_effects"][g], lv)? + nu;
                        let mut sum = 0.0;
                        for _ in 0..k.draws {
                            sum += inv_boxcox(mu + sig_f * normal(&mut rng), lam_f);
                        }
                        let amount = sum / k.draws as f64;
                        let freq = logistic(eta0[g] + effect(&food["eta_effects"][g], lv)? + ups);
                        let m = if k.market { pert(&mut rng, food_pi[g]) } else { 1.0 };
                        food_x += amount * freq * food_conc[g] * m * k.scale[0];
                    }
                }
                let mut supp_x = 0.0;
                if k.supplements {
                    let z = components.sample(&mut rng);
                    let amount = (rho0[z] + effect(&supp["rho_effects"], lv)? + sig_s[z] * normal(&mut rng)).exp();
                    let freq = logistic(alpha0 + effect(&supp["alpha_effects"], lv)? + sig_tau * normal(&mut rng));
                    let r = pool[rng.random_range(0..pool.len())];
                    let conc = if r == 0 {
                        0.0
                    } else {
                        (0..r).map(|_| supp_conc[rng.random_range(0..supp_conc.len())]).sum::<f64>() / r as f64
                    };
                    let m = if k.market { pert(&mut rng, supp_pi) } else { 1.0 };
                    supp_x = amount * freq * conc * m * k.scale[1];
                }
                let mut med_x = 0.0;
                if k.medicines {
                    let y = inv_boxcox(phi0 + effect(&med["phi_effects"], lv)? + sig_m * normal(&mut rng), lam_m);
                    let freq = pert(&mut rng, logistic(psi0 + effect(&med["psi_effects"], lv)?));
                    med_x = y * freq * k.scale[2];
                }
                let mut pcp_x = 0.0;
                if k.pcp {
                    for (c, cat) in pcp_cats.iter().enumerate() {
                        let row = constants
                            .iter()
                            .find(|r| r["category"] == *cat && r["age_group"] == *age && r["gender"] == genders[lv[1]].as_str())
                            .ok_or_else(|| format!("no constants for {cat} {label}"))?;
                        let (constant, child_uniform) = *k.retention.get(cat).ok_or_else(|| format!("no retention for {cat}"))?;
                        let e = if child_uniform && child { k.child.0 + (k.child.1 - k.child.0) * rng.random::<f64>() } else { constant };
                        let amount = num(&row["median_amount"], "median_amount")? * e;
                        let freq = pert(&mut rng, num(&row["usage_probability"], "usage_probability")?);
                        let conc = pcp_conc[c][rng.random_range(0..pcp_conc[c].len())];
                        let m = if k.market { pert(&mut rng, pcp_pi[c]) } else { 1.0 };
                        pcp_x += amount * freq * conc * m * k.scale[3];
                    }
                }
                if let Some((lo, hi)) = k.nano {
                    let f = lo + (hi - lo) * rng.random::<f64>();
                    food_x *= f;
                    supp_x *= f;
                    med_x *= f;
                }
                values.push(food_x + supp_x + med_x + pcp_x);
            }
        }
        values.sort_by(f64::total_cmp);
        for (i, &p) in PROBES.iter().enumerate() {
            per_batch[i].push(type7(&values, p));
        }
    }
    let rows = PROBES
        .iter()
        .zip(per_batch)
        .map(|(&probe, q)| {
            let n = q.len() as f64;
            let mean = q.iter().sum::<f64>() / n;
            let var = q.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            OracleRow { probe, value: mean, mc_se: (var / n).sqrt() }
        })
        .collect();
    Ok(OracleOutput { rows, batches: k.batches, batch_size: k.total as usize })
}
