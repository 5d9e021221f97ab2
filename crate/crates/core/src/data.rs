//! Domain types and CSV dataset schemas.
//!
//! Every file is UTF-8 CSV with a header row, `.` as decimal separator and an
//! empty field meaning "missing". Amounts are grams, concentrations mg/kg and
//! body weights kg. Loaded values are immutable and can be shared freely.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}: missing required column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file}, row {row}: {message}")]
    Parse { file: String, row: usize, message: String },
    #[error("{file}: table is empty")]
    EmptyTable { file: String },
    #[error("duplicate stratum ({0})")]
    DuplicateStratum(StratumKey),
    #[error("{file}, row {row}: negative population count {count}")]
    NegativeCount { file: String, row: usize, count: i64 },
    #[error("unknown category path {0:?}")]
    UnknownCategory(Vec<String>),
    #[error("category path {0:?} matches more than one node")]
    AmbiguousPath(Vec<String>),
    #[error("invalid category tree: {0}")]
    InvalidTree(String),
    #[error("{file}, row {row}: category code `{code}` has no mapping for scheme `{scheme}`")]
    UnmappedCategory { file: String, row: usize, scheme: String, code: String },
    #[error("{file}: {message}")]
    Inconsistent { file: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn parse_err(file: &str, row: usize, message: impl Into<String>) -> DataError {
    DataError::Parse { file: file.to_string(), row, message: message.into() }
}

/// Age band such as `3-9` or `65+`, in completed years.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AgeGroup {
    label: String,
    low: u32,
    high: Option<u32>,
}

impl AgeGroup {
    pub fn parse(label: &str) -> Result<Self, String> {
        let trimmed = label.trim();
        let normalized = trimmed.replace('\u{2013}', "-");
        let bad = || format!("age group `{trimmed}` is not of the form `lo-hi` or `lo+`");
        if let Some(low) = normalized.strip_suffix('+') {
            let low = low.trim().parse::<u32>().map_err(|_| bad())?;
            return Ok(Self { label: trimmed.to_string(), low, high: None });
        }
        let (low, high) = normalized.split_once('-').ok_or_else(bad)?;
        let low = low.trim().parse::<u32>().map_err(|_| bad())?;
        let high = high.trim().parse::<u32>().map_err(|_| bad())?;
        if high < low {
            return Err(format!("age group `{trimmed}` has upper bound below lower bound"));
        }
        Ok(Self { label: trimmed.to_string(), low, high: Some(high) })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn low(&self) -> u32 {
        self.low
    }

    /// Upper bound in completed years; `None` for open bands like `65+`.
    pub fn high(&self) -> Option<u32> {
        self.high
    }

    /// True when every age in the band is at most `cutoff` years.
    pub fn at_most(&self, cutoff: u32) -> bool {
        matches!(self.high, Some(h) if h <= cutoff)
    }
}

impl Ord for AgeGroup {
    fn cmp(&self, other: &Self) -> Ordering {
        let hi = |h: Option<u32>| h.unwrap_or(u32::MAX);
        (self.low, hi(self.high), &self.label).cmp(&(other.low, hi(other.high), &other.label))
    }
}

impl PartialOrd for AgeGroup {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" => Ok(Gender::Female),
            "m" | "male" => Ok(Gender::Male),
            other => Err(format!("unknown gender `{other}`")),
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Gender::Female => "F",
            Gender::Male => "M",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// The three post-stratification variables of a person or a census cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StratumKey {
    pub age_group: AgeGroup,
    pub gender: Gender,
    pub region: String,
}

impl StratumKey {
    pub fn parse(age: &str, gender: &str, region: &str) -> Result<Self, String> {
        let region = region.trim();
        if region.is_empty() {
            return Err("empty region".into());
        }
        Ok(Self {
            age_group: AgeGroup::parse(age)?,
            gender: Gender::parse(gender)?,
            region: region.to_string(),
        })
    }

    /// Level label of one of the individual-level predictors.
    pub fn level(&self, predictor: Predictor) -> String {
        match predictor {
            Predictor::AgeGroup => self.age_group.label().to_string(),
            Predictor::Gender => self.gender.code().to_string(),
            Predictor::Region => self.region.clone(),
        }
    }
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {}, {}", self.age_group, self.gender, self.region)
    }
}

/// Individual-level predictor; the post-stratification variables double as
/// regression covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    AgeGroup,
    Gender,
    Region,
}

impl Predictor {
    pub fn name(self) -> &'static str {
        match self {
            Predictor::AgeGroup => "age_group",
            Predictor::Gender => "gender",
            Predictor::Region => "region",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "age_group" | "age" => Some(Predictor::AgeGroup),
            "gender" => Some(Predictor::Gender),
            "region" => Some(Predictor::Region),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stratum {
    pub key: StratumKey,
    pub population_count: u64,
}

/// Census cells sorted by (age group, gender, region).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumTable {
    strata: Vec<Stratum>,
}

impl StratumTable {
    pub fn new(mut strata: Vec<Stratum>) -> Result<Self, DataError> {
        if strata.is_empty() {
            return Err(DataError::EmptyTable { file: "strata".into() });
        }
        strata.sort_by(|a, b| a.key.cmp(&b.key));
        for pair in strata.windows(2) {
            if pair[0].key == pair[1].key {
                return Err(DataError::DuplicateStratum(pair[0].key.clone()));
            }
        }
        Ok(Self { strata })
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    pub fn total_population(&self) -> u64 {
        self.strata.iter().map(|s| s.population_count).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Stratum> {
        self.strata.iter()
    }
}

/// Node of the product category hierarchy (e.g. chewing gum > confectionery > food).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryNode {
    pub id: String,
    pub parent: Option<String>,
    pub level: u32,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryTree {
    nodes: Vec<CategoryNode>,
    index: HashMap<String, usize>,
}

impl CategoryTree {
    pub fn new(nodes: Vec<CategoryNode>) -> Result<Self, DataError> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.id.clone(), i).is_some() {
                return Err(DataError::InvalidTree(format!("duplicate id `{}`", node.id)));
            }
        }
        for node in &nodes {
            match &node.parent {
                None if node.level != 1 => {
                    return Err(DataError::InvalidTree(format!(
                        "root `{}` must have level 1, found {}",
                        node.id, node.level
                    )))
                }
                None => {}
                Some(p) => {
                    let parent = index.get(p).map(|&i| &nodes[i]).ok_or_else(|| {
                        DataError::InvalidTree(format!("`{}` has unknown parent `{p}`", node.id))
                    })?;
                    if node.level != parent.level + 1 {
                        return Err(DataError::InvalidTree(format!(
                            "`{}` has level {} but its parent `{}` has level {}",
                            node.id, node.level, parent.id, parent.level
                        )));
                    }
                }
            }
        }
        // levels strictly increase along parent links, so every path terminates
        Ok(Self { nodes, index })
    }

    pub fn nodes(&self) -> &[CategoryNode] {
        &self.nodes
    }

    pub fn get(&self, id: &str) -> Option<&CategoryNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn children<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a CategoryNode> + 'a {
        self.nodes.iter().filter(move |n| n.parent.as_deref() == Some(id))
    }

    pub fn is_leaf(&self, id: &str) -> bool {
        self.children(id).next().is_none()
    }

    /// Path from the root down to `id`, inclusive.
    pub fn ancestry(&self, id: &str) -> Vec<&CategoryNode> {
        let mut path = Vec::new();
        let mut cur = self.get(id);
        while let Some(node) = cur {
            path.push(node);
            cur = node.parent.as_deref().and_then(|p| self.get(p));
        }
        path.reverse();
        path
    }

    /// True when `ancestor` lies on the path from the root to `id` (or equals it).
    pub fn is_within(&self, id: &str, ancestor: &str) -> bool {
        self.ancestry(id).iter().any(|n| n.id == ancestor)
    }

    /// Looks a node up by its label path from a root, e.g. `["food", "confectionery"]`.
    pub fn resolve(&self, path: &[&str]) -> Result<&CategoryNode, DataError> {
        let owned = || path.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        if path.is_empty() {
            return Err(DataError::UnknownCategory(owned()));
        }
        let mut frontier: Vec<&CategoryNode> =
            self.nodes.iter().filter(|n| n.parent.is_none() && n.label == path[0]).collect();
        for label in &path[1..] {
            if frontier.len() > 1 {
                return Err(DataError::AmbiguousPath(owned()));
            }
            let Some(cur) = frontier.first() else { break };
            frontier = self.children(&cur.id).filter(|n| n.label == *label).collect();
        }
        match frontier.len() {
            0 => Err(DataError::UnknownCategory(owned())),
            1 => Ok(frontier[0]),
            _ => Err(DataError::AmbiguousPath(owned())),
        }
    }
}

/// `resolve_category` entry point.
pub fn resolve_category<'a>(
    path: &[&str],
    tree: &'a CategoryTree,
) -> Result<&'a CategoryNode, DataError> {
    tree.resolve(path)
}

/// Links category codes of external classification schemes to tree nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryMap {
    entries: BTreeMap<(String, String), String>,
}

impl CategoryMap {
    pub fn insert(&mut self, scheme: &str, code: &str, category_id: &str) {
        self.entries.insert((scheme.to_string(), code.to_string()), category_id.to_string());
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.entries.iter().map(|((s, c), id)| (s.as_str(), c.as_str(), id.as_str()))
    }

    /// Maps `code` for `scheme`; codes that already are tree ids pass through.
    pub fn resolve(&self, tree: &CategoryTree, scheme: &str, code: &str) -> Option<String> {
        if let Some(id) = self.entries.get(&(scheme.to_string(), code.to_string())) {
            return Some(id.clone());
        }
        tree.contains(code).then(|| code.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyObservation {
    pub individual_id: String,
    pub day: u8,
    pub category: String,
    pub consumed: bool,
    pub amount: Option<f64>,
    pub body_weight: Option<f64>,
    pub demographics: StratumKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductObservation {
    pub product_id: String,
    pub category: String,
    pub contains_chemical: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationObservation {
    pub product_id: String,
    pub category: String,
    pub value: f64,
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedicineUseObservation {
    pub individual_id: String,
    pub regular_user: bool,
    pub units_per_day: u32,
    pub body_weight: Option<f64>,
    pub demographics: StratumKey,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcpConstant {
    pub category: String,
    pub age_group: AgeGroup,
    pub gender: Gender,
    pub usage_probability: f64,
    pub median_daily_amount_per_bw: f64,
}

/// Personal-care usage constants keyed by (category, age group, gender).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PcpConstants {
    rows: Vec<PcpConstant>,
}

impl PcpConstants {
    pub fn new(rows: Vec<PcpConstant>) -> Self {
        Self { rows }
    }

    pub fn rows(&self) -> &[PcpConstant] {
        &self.rows
    }

    pub fn categories(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.rows.iter().map(|r| r.category.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn lookup(&self, category: &str, age: &AgeGroup, gender: Gender) -> Option<&PcpConstant> {
        self.rows
            .iter()
            .find(|r| r.category == category && &r.age_group == age && r.gender == gender)
    }
}

/// One observed person-day count of dietary supplements taken, with the
/// person's stratum. Feeds the empirical count pool of the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplementCount {
    pub demographics: StratumKey,
    pub count: u32,
}

// ---------------------------------------------------------------------------
// CSV plumbing

struct Table {
    file: String,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read<R: Read>(file: &str, reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| parse_err(file, 1, e.to_string()))?
            .iter()
            .map(|h| h.trim_start_matches('\u{feff}').to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            rows.push(rec.map_err(|e| parse_err(file, i + 2, e.to_string()))?);
        }
        Ok(Self { file: file.to_string(), headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize, DataError> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| DataError::MissingColumn {
            file: self.file.clone(),
            column: name.to_string(),
        })
    }

    fn columns<const N: usize>(&self, names: [&str; N]) -> Result<[usize; N], DataError> {
        let mut out = [0; N];
        for (slot, name) in out.iter_mut().zip(names) {
            *slot = self.column(name)?;
        }
        Ok(out)
    }

    /// Data rows with their 1-based file line numbers (header is line 1).
    fn records(&self) -> impl Iterator<Item = (usize, &csv::StringRecord)> {
        self.rows.iter().enumerate().map(|(i, r)| (i + 2, r))
    }

    fn err(&self, row: usize, message: impl Into<String>) -> DataError {
        parse_err(&self.file, row, message)
    }
}

fn field<'a>(rec: &'a csv::StringRecord, col: usize) -> &'a str {
    rec.get(col).unwrap_or("")
}

fn opt_f64(t: &Table, row: usize, s: &str, name: &str) -> Result<Option<f64>, DataError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| t.err(row, format!("`{name}` value `{s}` is not a number")))
}

fn req_f64(t: &Table, row: usize, s: &str, name: &str) -> Result<f64, DataError> {
    opt_f64(t, row, s, name)?.ok_or_else(|| t.err(row, format!("`{name}` is required")))
}

fn parse_bool(t: &Table, row: usize, s: &str, name: &str) -> Result<bool, DataError> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Ok(true),
        "0" | "false" | "no" | "n" => Ok(false),
        _ => Err(t.err(row, format!("`{name}` value `{s}` is not a boolean"))),
    }
}

fn positive_weight(t: &Table, row: usize, s: &str) -> Result<Option<f64>, DataError> {
    let w = opt_f64(t, row, s, "body_weight_kg")?;
    match w {
        Some(v) if !(v > 0.0 && v.is_finite()) => {
            Err(t.err(row, format!("body weight must be positive, got {v}")))
        }
        _ => Ok(w),
    }
}

fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })
}

/// Reads `strata.csv` (age_group,gender,region,count).
pub fn load_stratum_table<R: Read>(reader: R) -> Result<StratumTable, DataError> {
    let t = Table::read("strata.csv", reader)?;
    let [age, gender, region, count] = t.columns(["age_group", "gender", "region", "count"])?;
    if t.rows.is_empty() {
        return Err(DataError::EmptyTable { file: t.file.clone() });
    }
    let mut strata = Vec::with_capacity(t.rows.len());
    for (row, rec) in t.records() {
        let key = StratumKey::parse(field(rec, age), field(rec, gender), field(rec, region))
            .map_err(|m| t.err(row, m))?;
        let raw = field(rec, count);
        let n: i64 = raw.parse().map_err(|_| t.err(row, format!("count `{raw}` is not an integer")))?;
        if n < 0 {
            return Err(DataError::NegativeCount { file: t.file.clone(), row, count: n });
        }
        strata.push(Stratum { key, population_count: n as u64 });
    }
    StratumTable::new(strata).map_err(|e| match e {
        DataError::EmptyTable { .. } => DataError::EmptyTable { file: t.file.clone() },
        other => other,
    })
}

pub fn load_category_tree<R: Read>(reader: R) -> Result<CategoryTree, DataError> {
    let t = Table::read("category_tree.csv", reader)?;
    let [id, parent, level, label] = t.columns(["id", "parent_id", "level", "label"])?;
    let mut nodes = Vec::with_capacity(t.rows.len());
    for (row, rec) in t.records() {
        let lv = field(rec, level);
        let level: u32 = lv.parse().map_err(|_| t.err(row, format!("level `{lv}` is not an integer")))?;
        if level == 0 {
            return Err(t.err(row, "level must be at least 1"));
        }
        let parent = field(rec, parent);
        nodes.push(CategoryNode {
            id: field(rec, id).to_string(),
            parent: (!parent.is_empty()).then(|| parent.to_string()),
            level,
            label: field(rec, label).to_string(),
        });
    }
    if nodes.is_empty() {
        return Err(DataError::EmptyTable { file: t.file });
    }
    CategoryTree::new(nodes)
}

pub fn load_category_map<R: Read>(reader: R, tree: &CategoryTree) -> Result<CategoryMap, DataError> {
    let t = Table::read("category_map.csv", reader)?;
    let [scheme, code, cat] = t.columns(["scheme", "code", "category_id"])?;
    let mut map = CategoryMap::default();
    for (row, rec) in t.records() {
        let id = field(rec, cat);
        if !tree.contains(id) {
            return Err(t.err(row, format!("category_id `{id}` is not in the category tree")));
        }
        map.insert(field(rec, scheme), field(rec, code), id);
    }
    Ok(map)
}

struct CategoryResolver<'a> {
    tree: &'a CategoryTree,
    map: &'a CategoryMap,
    scheme: &'a str,
}

impl CategoryResolver<'_> {
    fn resolve(&self, t: &Table, row: usize, code: &str) -> Result<String, DataError> {
        self.map.resolve(self.tree, self.scheme, code).ok_or_else(|| DataError::UnmappedCategory {
            file: t.file.clone(),
            row,
            scheme: self.scheme.to_string(),
            code: code.to_string(),
        })
    }
}

pub fn load_survey<R: Read>(
    reader: R,
    tree: &CategoryTree,
    map: &CategoryMap,
) -> Result<Vec<SurveyObservation>, DataError> {
    let t = Table::read("survey.csv", reader)?;
    let [id, day, category, consumed, amount, weight, age, gender, region] = t.columns([
        "individual_id",
        "day",
        "category",
        "consumed",
        "amount_g",
        "body_weight_kg",
        "age_group",
        "gender",
        "region",
    ])?;
    let resolver = CategoryResolver { tree, map, scheme: "survey" };
    let mut out = Vec::with_capacity(t.rows.len());
    for (row, rec) in t.records() {
        let d = field(rec, day);
        let day: u8 = match d {
            "1" => 1,
            "2" => 2,
            _ => return Err(t.err(row, format!("day must be 1 or 2, got `{d}`"))),
        };
        let consumed = parse_bool(&t, row, field(rec, consumed), "consumed")?;
        let amount = opt_f64(&t, row, field(rec, amount), "amount_g")?;
        match (consumed, amount) {
            (false, Some(_)) => return Err(t.err(row, "amount present although consumed is false")),
            (true, None) => return Err(t.err(row, "amount missing although consumed is true")),
            (true, Some(a)) if !(a > 0.0 && a.is_finite()) => {
                return Err(t.err(row, format!("amount must be positive, got {a}")))
            }
            _ => {}
        }
        out.push(SurveyObservation {
            individual_id: field(rec, id).to_string(),
            day,
            category: resolver.resolve(&t, row, field(rec, category))?,
            consumed,
            amount,
            body_weight: positive_weight(&t, row, field(rec, weight))?,
            demographics: StratumKey::parse(field(rec, age), field(rec, gender), field(rec, region))
                .map_err(|m| t.err(row, m))?,
        });
    }
    check_individuals(&t.file, out.iter().map(|o| (&o.individual_id, o.body_weight, &o.demographics)))?;
    Ok(out)
}

fn check_individuals<'a>(
    file: &str,
    rows: impl Iterator<Item = (&'a String, Option<f64>, &'a StratumKey)>,
) -> Result<(), DataError> {
    let mut seen: HashMap<&str, (Option<f64>, &StratumKey)> = HashMap::new();
    for (id, w, demo) in rows {
        match seen.get(id.as_str()) {
            Some((w0, d0)) if *w0 != w || *d0 != demo => {
                return Err(DataError::Inconsistent {
                    file: file.to_string(),
                    message: format!("individual `{id}` has conflicting body weight or demographics"),
                })
            }
            Some(_) => {}
            None => {
                seen.insert(id, (w, demo));
            }
        }
    }
    Ok(())
}

pub fn load_products<R: Read>(
    reader: R,
    tree: &CategoryTree,
    map: &CategoryMap,
) -> Result<Vec<ProductObservation>, DataError> {
    let t = Table::read("products.csv", reader)?;
    let [id, category, contains] = t.columns(["product_id", "category", "contains_chemical"])?;
    let resolver = CategoryResolver { tree, map, scheme: "products" };
    t.records()
        .map(|(row, rec)| {
            Ok(ProductObservation {
                product_id: field(rec, id).to_string(),
                category: resolver.resolve(&t, row, field(rec, category))?,
                contains_chemical: parse_bool(&t, row, field(rec, contains), "contains_chemical")?,
            })
        })
        .collect()
}

pub fn load_concentrations<R: Read>(
    reader: R,
    tree: &CategoryTree,
    map: &CategoryMap,
) -> Result<Vec<ConcentrationObservation>, DataError> {
    let t = Table::read("concentrations.csv", reader)?;
    let [id, category, value, se] =
        t.columns(["product_id", "category", "value_mg_per_kg", "std_error_mg_per_kg"])?;
    let resolver = CategoryResolver { tree, map, scheme: "concentrations" };
    t.records()
        .map(|(row, rec)| {
            let v = req_f64(&t, row, field(rec, value), "value_mg_per_kg")?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(t.err(row, format!("concentration must be positive, got {v}")));
            }
            let s = opt_f64(&t, row, field(rec, se), "std_error_mg_per_kg")?;
            if matches!(s, Some(s) if !(s >= 0.0 && s.is_finite())) {
                return Err(t.err(row, "standard error must be nonnegative"));
            }
            Ok(ConcentrationObservation {
                product_id: field(rec, id).to_string(),
                category: resolver.resolve(&t, row, field(rec, category))?,
                value: v,
                std_error: s,
            })
        })
        .collect()
}

pub fn load_medicines<R: Read>(reader: R) -> Result<Vec<MedicineUseObservation>, DataError> {
    let t = Table::read("medicines.csv", reader)?;
    let [id, regular, units, weight, age, gender, region] = t.columns([
        "individual_id",
        "regular_user",
        "units_per_day",
        "body_weight_kg",
        "age_group",
        "gender",
        "region",
    ])?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (row, rec) in t.records() {
        let regular_user = parse_bool(&t, row, field(rec, regular), "regular_user")?;
        let u = field(rec, units);
        let units_per_day: u32 = if u.is_empty() {
            0
        } else {
            u.parse().map_err(|_| t.err(row, format!("units_per_day `{u}` is not a nonnegative integer")))?
        };
        if !regular_user && units_per_day != 0 {
            return Err(t.err(row, "units_per_day must be 0 for non-regular users"));
        }
        out.push(MedicineUseObservation {
            individual_id: field(rec, id).to_string(),
            regular_user,
            units_per_day,
            body_weight: positive_weight(&t, row, field(rec, weight))?,
            demographics: StratumKey::parse(field(rec, age), field(rec, gender), field(rec, region))
                .map_err(|m| t.err(row, m))?,
        });
    }
    Ok(out)
}

pub fn load_pcp_constants<R: Read>(
    reader: R,
    tree: &CategoryTree,
    map: &CategoryMap,
) -> Result<PcpConstants, DataError> {
    let t = Table::read("pcp_constants.csv", reader)?;
    let [category, age, gender, prob, amount] = t.columns([
        "category",
        "age_group",
        "gender",
        "usage_probability",
        "median_amount_g_per_kg_day",
    ])?;
    let resolver = CategoryResolver { tree, map, scheme: "pcp_constants" };
    let mut rows = Vec::with_capacity(t.rows.len());
    for (row, rec) in t.records() {
        let p = req_f64(&t, row, field(rec, prob), "usage_probability")?;
        if !(0.0..=1.0).contains(&p) {
            return Err(t.err(row, format!("usage_probability {p} outside [0, 1]")));
        }
        let a = req_f64(&t, row, field(rec, amount), "median_amount_g_per_kg_day")?;
        if !(a >= 0.0 && a.is_finite()) {
            return Err(t.err(row, format!("median amount must be nonnegative, got {a}")));
        }
        rows.push(PcpConstant {
            category: resolver.resolve(&t, row, field(rec, category))?,
            age_group: AgeGroup::parse(field(rec, age)).map_err(|m| t.err(row, m))?,
            gender: Gender::parse(field(rec, gender)).map_err(|m| t.err(row, m))?,
            usage_probability: p,
            median_daily_amount_per_bw: a,
        });
    }
    Ok(PcpConstants::new(rows))
}

pub fn load_supplement_counts<R: Read>(reader: R) -> Result<Vec<SupplementCount>, DataError> {
    let t = Table::read("supplement_counts.csv", reader)?;
    let [age, gender, region, count] = t.columns(["age_group", "gender", "region", "count"])?;
    t.records()
        .map(|(row, rec)| {
            let c = field(rec, count);
            Ok(SupplementCount {
                demographics: StratumKey::parse(field(rec, age), field(rec, gender), field(rec, region))
                    .map_err(|m| t.err(row, m))?,
                count: c.parse().map_err(|_| t.err(row, format!("count `{c}` is not a nonnegative integer")))?,
            })
        })
        .collect()
}

/// All input tables of one study.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub strata: StratumTable,
    pub tree: CategoryTree,
    pub category_map: CategoryMap,
    pub survey: Vec<SurveyObservation>,
    pub products: Vec<ProductObservation>,
    pub concentrations: Vec<ConcentrationObservation>,
    pub medicines: Vec<MedicineUseObservation>,
    pub pcp_constants: PcpConstants,
    pub supplement_counts: Vec<SupplementCount>,
}

pub const STRATA_FILE: &str = "strata.csv";
pub const SURVEY_FILE: &str = "survey.csv";
pub const PRODUCTS_FILE: &str = "products.csv";
pub const CONCENTRATIONS_FILE: &str = "concentrations.csv";
pub const MEDICINES_FILE: &str = "medicines.csv";
pub const PCP_FILE: &str = "pcp_constants.csv";
pub const TREE_FILE: &str = "category_tree.csv";
pub const MAP_FILE: &str = "category_map.csv";
pub const SUPPLEMENT_COUNTS_FILE: &str = "supplement_counts.csv";

impl Dataset {
    /// Loads every table from `dir`. `category_map.csv` and
    /// `supplement_counts.csv` are optional; everything else is required.
    pub fn load(dir: &Path) -> Result<Self, DataError> {
        let tree = load_category_tree(open(&dir.join(TREE_FILE))?)?;
        let map_path = dir.join(MAP_FILE);
        let category_map =
            if map_path.exists() { load_category_map(open(&map_path)?, &tree)? } else { CategoryMap::default() };
        let counts_path = dir.join(SUPPLEMENT_COUNTS_FILE);
        let supplement_counts =
            if counts_path.exists() { load_supplement_counts(open(&counts_path)?)? } else { Vec::new() };
        Ok(Self {
            strata: load_stratum_table(open(&dir.join(STRATA_FILE))?)?,
            survey: load_survey(open(&dir.join(SURVEY_FILE))?, &tree, &category_map)?,
            products: load_products(open(&dir.join(PRODUCTS_FILE))?, &tree, &category_map)?,
            concentrations: load_concentrations(open(&dir.join(CONCENTRATIONS_FILE))?, &tree, &category_map)?,
            medicines: load_medicines(open(&dir.join(MEDICINES_FILE))?)?,
            pcp_constants: load_pcp_constants(open(&dir.join(PCP_FILE))?, &tree, &category_map)?,
            supplement_counts,
            tree,
            category_map,
        })
    }

    /// Writes every table to `dir` in the canonical schemas.
    pub fn save(&self, dir: &Path) -> Result<(), DataError> {
        let create = |name: &str| {
            let path = dir.join(name);
            File::create(&path).map_err(|source| DataError::Io { path: path.display().to_string(), source })
        };
        write_stratum_table(&self.strata, create(STRATA_FILE)?)?;
        write_category_tree(&self.tree, create(TREE_FILE)?)?;
        write_category_map(&self.category_map, create(MAP_FILE)?)?;
        write_survey(&self.survey, create(SURVEY_FILE)?)?;
        write_products(&self.products, create(PRODUCTS_FILE)?)?;
        write_concentrations(&self.concentrations, create(CONCENTRATIONS_FILE)?)?;
        write_medicines(&self.medicines, create(MEDICINES_FILE)?)?;
        write_pcp_constants(&self.pcp_constants, create(PCP_FILE)?)?;
        write_supplement_counts(&self.supplement_counts, create(SUPPLEMENT_COUNTS_FILE)?)?;
        Ok(())
    }

    /// Every file the dataset is read from, in a fixed order (for hashing).
    pub fn files(dir: &Path) -> Vec<std::path::PathBuf> {
        [
            STRATA_FILE,
            TREE_FILE,
            MAP_FILE,
            SURVEY_FILE,
            PRODUCTS_FILE,
            CONCENTRATIONS_FILE,
            MEDICINES_FILE,
            PCP_FILE,
            SUPPLEMENT_COUNTS_FILE,
        ]
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| p.exists())
        .collect()
    }
}

fn write_err(file: &str, e: impl fmt::Display) -> DataError {
    DataError::Io { path: file.to_string(), source: std::io::Error::other(e.to_string()) }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_rows<W: Write>(file: &str, w: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header).map_err(|e| write_err(file, e))?;
    for r in rows {
        wtr.write_record(&r).map_err(|e| write_err(file, e))?;
    }
    wtr.flush().map_err(|e| write_err(file, e))
}

pub fn write_stratum_table<W: Write>(table: &StratumTable, w: W) -> Result<(), DataError> {
    write_rows(
        STRATA_FILE,
        w,
        &["age_group", "gender", "region", "count"],
        table.iter().map(|s| {
            vec![
                s.key.age_group.label().to_string(),
                s.key.gender.code().to_string(),
                s.key.region.clone(),
                s.population_count.to_string(),
            ]
        }),
    )
}

pub fn write_category_tree<W: Write>(tree: &CategoryTree, w: W) -> Result<(), DataError> {
    write_rows(
        TREE_FILE,
        w,
        &["id", "parent_id", "level", "label"],
        tree.nodes().iter().map(|n| {
            vec![n.id.clone(), n.parent.clone().unwrap_or_default(), n.level.to_string(), n.label.clone()]
        }),
    )
}

pub fn write_category_map<W: Write>(map: &CategoryMap, w: W) -> Result<(), DataError> {
    write_rows(
        MAP_FILE,
        w,
        &["scheme", "code", "category_id"],
        map.entries().map(|(s, c, id)| vec![s.to_string(), c.to_string(), id.to_string()]),
    )
}

pub fn write_survey<W: Write>(rows: &[SurveyObservation], w: W) -> Result<(), DataError> {
    write_rows(
        SURVEY_FILE,
        w,
        &["individual_id", "day", "category", "consumed", "amount_g", "body_weight_kg", "age_group", "gender", "region"],
        rows.iter().map(|o| {
            vec![
                o.individual_id.clone(),
                o.day.to_string(),
                o.category.clone(),
                o.consumed.to_string(),
                fmt_opt(o.amount),
                fmt_opt(o.body_weight),
                o.demographics.age_group.label().to_string(),
                o.demographics.gender.code().to_string(),
                o.demographics.region.clone(),
            ]
        }),
    )
}

pub fn write_products<W: Write>(rows: &[ProductObservation], w: W) -> Result<(), DataError> {
    write_rows(
        PRODUCTS_FILE,
        w,
        &["product_id", "category", "contains_chemical"],
        rows.iter().map(|p| vec![p.product_id.clone(), p.category.clone(), p.contains_chemical.to_string()]),
    )
}

pub fn write_concentrations<W: Write>(rows: &[ConcentrationObservation], w: W) -> Result<(), DataError> {
    write_rows(
        CONCENTRATIONS_FILE,
        w,
        &["product_id", "category", "value_mg_per_kg", "std_error_mg_per_kg"],
        rows.iter().map(|c| vec![c.product_id.clone(), c.category.clone(), c.value.to_string(), fmt_opt(c.std_error)]),
    )
}

pub fn write_medicines<W: Write>(rows: &[MedicineUseObservation], w: W) -> Result<(), DataError> {
    write_rows(
        MEDICINES_FILE,
        w,
        &["individual_id", "regular_user", "units_per_day", "body_weight_kg", "age_group", "gender", "region"],
        rows.iter().map(|m| {
            vec![
                m.individual_id.clone(),
                m.regular_user.to_string(),
                m.units_per_day.to_string(),
                fmt_opt(m.body_weight),
                m.demographics.age_group.label().to_string(),
                m.demographics.gender.code().to_string(),
                m.demographics.region.clone(),
            ]
        }),
    )
}

pub fn write_pcp_constants<W: Write>(c: &PcpConstants, w: W) -> Result<(), DataError> {
    write_rows(
        PCP_FILE,
        w,
        &["category", "age_group", "gender", "usage_probability", "median_amount_g_per_kg_day"],
        c.rows().iter().map(|r| {
            vec![
                r.category.clone(),
                r.age_group.label().to_string(),
                r.gender.code().to_string(),
                r.usage_probability.to_string(),
                r.median_daily_amount_per_bw.to_string(),
            ]
        }),
    )
}

pub fn write_supplement_counts<W: Write>(rows: &[SupplementCount], w: W) -> Result<(), DataError> {
    write_rows(
        SUPPLEMENT_COUNTS_FILE,
        w,
        &["age_group", "gender", "region", "count"],
        rows.iter().map(|r| {
            vec![
                r.demographics.age_group.label().to_string(),
                r.demographics.gender.code().to_string(),
                r.demographics.region.clone(),
                r.count.to_string(),
            ]
        }),
    )
}
