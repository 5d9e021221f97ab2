//! Posterior draws on the constrained scale, with the block inventory needed
//! to read parameters back by name, and their CSV/JSON form on disk.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::diagnostics::{summarize_column, DiagnosticsReport, Thresholds};
use super::SamplerError;
use crate::models::{Layout, Source};
use crate::transforms::Constraint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub constraint: Constraint,
    /// First column of the block.
    pub offset: usize,
    pub len: usize,
}

impl BlockMeta {
    /// Whether entry `k` of the block is fixed by its constraint.
    pub fn structural(&self, k: usize) -> bool {
        match self.constraint {
            Constraint::CorrelationCholesky => {
                let n = self.shape.len();
                let dim = self.shape[n - 1];
                let within = k % (dim * dim);
                let (i, j) = (within / dim, within % dim);
                j > i || (i == 0 && j == 0)
            }
            Constraint::Simplex => *self.shape.last().unwrap_or(&1) == 1,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub mean_accept: f64,
    pub mean_tree_depth: f64,
    pub max_depth_hits: usize,
    pub n_leapfrog: usize,
}

/// Everything except the draws themselves; stored as JSON next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawMeta {
    pub name: String,
    pub source: Source,
    pub blocks: Vec<BlockMeta>,
    pub labels: BTreeMap<String, Vec<String>>,
    pub chains: usize,
    pub draws: usize,
    pub chain_stats: Vec<ChainStats>,
    pub diagnostics: Option<DiagnosticsReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawSet {
    pub meta: DrawMeta,
    pub columns: Vec<String>,
    /// `[chain][draw][column]`, row-major.
    values: Vec<f64>,
}

impl DrawSet {
    pub fn new(
        name: impl Into<String>,
        source: Source,
        layout: &Layout,
        labels: BTreeMap<String, Vec<String>>,
        chains: usize,
        draws: usize,
        values: Vec<f64>,
    ) -> Self {
        let blocks = layout
            .blocks()
            .iter()
            .map(|b| BlockMeta {
                name: b.name.clone(),
                shape: b.shape.clone(),
                constraint: b.constraint,
                offset: b.constrained_offset,
                len: b.len,
            })
            .collect();
        assert_eq!(values.len(), chains * draws * layout.dim(), "draw matrix shape");
        Self {
            meta: DrawMeta {
                name: name.into(),
                source,
                blocks,
                labels,
                chains,
                draws,
                chain_stats: vec![ChainStats::default(); chains],
                diagnostics: None,
            },
            columns: layout.column_names(),
            values,
        }
    }

    /// A single-draw set holding `x`, e.g. known true parameters.
    pub fn from_point(
        name: impl Into<String>,
        source: Source,
        layout: &Layout,
        labels: BTreeMap<String, Vec<String>>,
        x: Vec<f64>,
    ) -> Self {
        Self::new(name, source, layout, labels, 1, 1, x)
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// Total retained draws over all chains.
    pub fn len(&self) -> usize {
        self.meta.chains * self.meta.draws
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Draw `j` of the pooled sequence (chain-major).
    pub fn draw(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.values[j * d..(j + 1) * d]
    }

    pub fn block(&self, name: &str) -> Option<&BlockMeta> {
        self.meta.blocks.iter().find(|b| b.name == name)
    }

    /// Values of block `name` in draw `j`.
    pub fn get(&self, j: usize, name: &str) -> Option<&[f64]> {
        let b = self.block(name)?;
        Some(&self.draw(j)[b.offset..b.offset + b.len])
    }

    pub fn labels(&self, key: &str) -> Option<&[String]> {
        self.meta.labels.get(key).map(Vec::as_slice)
    }

    /// One column split by chain.
    pub fn column_by_chain(&self, col: usize) -> Vec<Vec<f64>> {
        let (d, n) = (self.dim(), self.meta.draws);
        (0..self.meta.chains)
            .map(|c| (0..n).map(|i| self.values[(c * n + i) * d + col]).collect())
            .collect()
    }

    pub fn diagnose(&self, thresholds: Thresholds) -> Result<DiagnosticsReport, SamplerError> {
        let (chains, draws) = (self.meta.chains, self.meta.draws);
        if chains < 2 || draws < 4 {
            return Err(SamplerError::TooFewDraws { chains, draws });
        }
        let mut structural = vec![false; self.dim()];
        for b in &self.meta.blocks {
            for k in 0..b.len {
                structural[b.offset + k] = b.structural(k);
            }
        }
        let params: Vec<_> = (0..self.dim())
            .map(|c| {
                let by_chain = self.column_by_chain(c);
                let refs: Vec<&[f64]> = by_chain.iter().map(Vec::as_slice).collect();
                summarize_column(&self.columns[c], &refs, structural[c])
            })
            .collect();
        let passed = params.iter().all(|p| p.passes(&thresholds, chains));
        Ok(DiagnosticsReport {
            params,
            thresholds,
            chains,
            draws,
            divergences: self.meta.chain_stats.iter().map(|s| s.divergences).collect(),
            passed,
        })
    }

    pub fn csv_path(dir: &Path, name: &str) -> PathBuf {
        dir.join(format!("{name}.draws.csv"))
    }

    pub fn meta_path(dir: &Path, name: &str) -> PathBuf {
        dir.join(format!("{name}.meta.json"))
    }

    pub fn save(&self, dir: &Path) -> Result<(), SamplerError> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(Self::csv_path(dir, self.name()))?));
        let mut header = vec!["chain".to_string(), "draw".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        let n = self.meta.draws;
        for j in 0..self.len() {
            let mut row = vec![(j / n + 1).to_string(), (j % n + 1).to_string()];
            row.extend(self.draw(j).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        let mut f = BufWriter::new(File::create(Self::meta_path(dir, self.name()))?);
        serde_json::to_writer_pretty(&mut f, &self.meta)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(dir: &Path, name: &str) -> Result<Self, SamplerError> {
        let meta: DrawMeta = serde_json::from_reader(BufReader::new(File::open(Self::meta_path(dir, name))?))?;
        let mut r = csv::Reader::from_reader(BufReader::new(File::open(Self::csv_path(dir, name))?));
        let header = r.headers()?.clone();
        let columns: Vec<String> = header.iter().skip(2).map(String::from).collect();
        let dim: usize = meta.blocks.iter().map(|b| b.len).sum();
        if columns.len() != dim || header.len() < 2 {
            return Err(SamplerError::Format(format!(
                "{name}: {} columns in the draws file, {dim} in the block inventory",
                columns.len()
            )));
        }
        let mut values = Vec::with_capacity(meta.chains * meta.draws * dim);
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec?;
            for f in rec.iter().skip(2) {
                values.push(
                    f.parse::<f64>().map_err(|_| SamplerError::Format(format!("{name}: bad number {f:?}")))?,
                );
            }
            rows += 1;
        }
        if rows != meta.chains * meta.draws {
            return Err(SamplerError::Format(format!(
                "{name}: {rows} rows, expected {} chains x {} draws",
                meta.chains, meta.draws
            )));
        }
        Ok(Self { meta, columns, values })
    }

    /// Every draw set in `dir`, sorted by name.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>, SamplerError> {
        let mut names = Vec::new();
        for e in std::fs::read_dir(dir)? {
            let file = e?.file_name().to_string_lossy().into_owned();
            if let Some(n) = file.strip_suffix(".meta.json") {
                names.push(n.to_string());
            }
        }
        names.sort();
        names.iter().map(|n| Self::load(dir, n)).collect()
    }
}
