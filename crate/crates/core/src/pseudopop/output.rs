//! The exposure sample file: one row per pseudo-individual.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{ExposureSample, SimulationError};
use crate::data::{StratumKey, StratumTable};

pub const SAMPLE_COLUMNS: [&str; 9] =
    ["iteration", "stratum_age", "stratum_gender", "stratum_region", "food", "supplements", "medicines", "pcp", "aggregated"];

/// Streams samples to CSV. Values are written in shortest round-trip form.
pub struct SampleWriter<'a, W: Write> {
    csv: csv::Writer<W>,
    strata: &'a StratumTable,
}

impl<'a, W: Write> SampleWriter<'a, W> {
    pub fn new(writer: W, strata: &'a StratumTable) -> Result<Self, SimulationError> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(SAMPLE_COLUMNS)?;
        Ok(Self { csv, strata })
    }

    pub fn write(&mut self, s: &ExposureSample) -> Result<(), SimulationError> {
        let k = &self.strata.strata()[s.stratum].key;
        self.csv.write_record([
            s.iteration.to_string(),
            k.age_group.label().to_string(),
            k.gender.code().to_string(),
            k.region.clone(),
            s.food.to_string(),
            s.supplements.to_string(),
            s.medicines.to_string(),
            s.pcp.to_string(),
            s.aggregated.to_string(),
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), SimulationError> {
        self.csv.flush()?;
        Ok(())
    }
}

/// Writes a whole sample vector.
pub fn write_samples<W: Write>(writer: W, strata: &StratumTable, samples: &[ExposureSample]) -> Result<(), SimulationError> {
    let mut w = SampleWriter::new(writer, strata)?;
    for s in samples {
        w.write(s)?;
    }
    w.finish()
}

/// Samples read back from a file, with the strata in order of first
/// appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleTable {
    pub strata: Vec<StratumKey>,
    pub samples: Vec<ExposureSample>,
}

pub fn read_samples<R: Read>(reader: R) -> Result<SampleTable, SimulationError> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != SAMPLE_COLUMNS {
        return Err(SimulationError::Format(format!("expected columns {}", SAMPLE_COLUMNS.join(","))));
    }
    let mut table = SampleTable::default();
    let mut index: BTreeMap<StratumKey, usize> = BTreeMap::new();
    for (line, rec) in csv.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| SimulationError::Format(format!("row {}: {m}", line + 2));
        let key = StratumKey::parse(&rec[1], &rec[2], &rec[3]).map_err(bad)?;
        let next = index.len();
        let stratum = *index.entry(key.clone()).or_insert_with(|| {
            table.strata.push(key);
            next
        });
        let num = |i: usize| -> Result<f64, SimulationError> {
            let v: f64 = rec[i].trim().parse().map_err(|_| bad(format!("{} is not a number", SAMPLE_COLUMNS[i])))?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(format!("{} must be finite and nonnegative", SAMPLE_COLUMNS[i])));
            }
            Ok(v)
        };
        table.samples.push(ExposureSample {
            iteration: rec[0].trim().parse().map_err(|_| bad("iteration is not an integer".into()))?,
            stratum,
            food: num(4)?,
            supplements: num(5)?,
            medicines: num(6)?,
            pcp: num(7)?,
            aggregated: num(8)?,
        });
    }
    Ok(table)
}
