//! Sample files: CSV with header `population_id,column_index,value`.
//!
//! Populations appear in order of first occurrence; the first is the target.
//! Within a population rows are ordered by `column_index`. The sample is
//! column-aligned when every population has the same set of indices.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Result, WleError};
use crate::model::{MultiSample, PopulationSample};

pub const SAMPLE_HEADER: [&str; 3] = ["population_id", "column_index", "value"];

pub fn read_samples(path: impl AsRef<Path>) -> Result<MultiSample> {
    let path = path.as_ref();
    let at = |line: usize| format!("{}:{line}", path.display());
    let file = std::fs::File::open(path).map_err(|e| WleError::ingest(path.display().to_string(), e.to_string()))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| WleError::ingest(at(1), e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != SAMPLE_HEADER {
        return Err(WleError::ingest(at(1), format!("expected header {}", SAMPLE_HEADER.join(","))));
    }

    let mut order: Vec<String> = Vec::new();
    let mut pops: BTreeMap<String, BTreeMap<u64, f64>> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let loc = at(i + 2);
        let rec = rec.map_err(|e| WleError::ingest(&loc, e.to_string()))?;
        if rec.len() != 3 {
            return Err(WleError::ingest(&loc, format!("expected 3 fields, found {}", rec.len())));
        }
        let id = rec[0].to_string();
        let col: u64 = rec[1]
            .parse()
            .map_err(|_| WleError::ingest(&loc, format!("cannot parse column_index from {:?}", &rec[1])))?;
        let value: f64 = rec[2]
            .parse()
            .map_err(|_| WleError::ingest(&loc, format!("cannot parse value from {:?}", &rec[2])))?;
        if !value.is_finite() {
            return Err(WleError::ingest(&loc, "non-finite value"));
        }
        let entry = pops.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            BTreeMap::new()
        });
        if entry.insert(col, value).is_some() {
            return Err(WleError::ingest(&loc, format!("duplicate (population {id}, column {col})")));
        }
    }
    if order.is_empty() {
        return Err(WleError::ingest(path.display().to_string(), "no observations"));
    }
    let index_sets: BTreeSet<Vec<u64>> = pops.values().map(|m| m.keys().copied().collect()).collect();
    let populations = order
        .iter()
        .map(|id| PopulationSample::new(id.clone(), pops[id].values().copied().collect()))
        .collect::<Result<Vec<_>>>()?;
    if index_sets.len() == 1 {
        MultiSample::aligned(populations)
    } else {
        MultiSample::unaligned(populations)
    }
}

/// Inverse of [`read_samples`]; column indices start at 1.
pub fn write_samples(ms: &MultiSample) -> String {
    let mut out = SAMPLE_HEADER.join(",");
    out.push('\n');
    for p in ms.populations() {
        for (j, v) in p.values().iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", p.id(), j + 1, v));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn round_trip() {
        let ms = MultiSample::from_vecs(vec![vec![0.5, -1.25, 3.0], vec![1e-3, 2.0, 7.0]], true).unwrap();
        let f = file(&write_samples(&ms));
        let back = read_samples(f.path()).unwrap();
        assert_eq!(back, ms);
    }

    #[test]
    fn order_alignment_and_sorting() {
        let f = file("population_id,column_index,value\nb,2,4\nb,1,3\na,1,1\na,2,2\n");
        let ms = read_samples(f.path()).unwrap();
        assert_eq!(ms.target().id(), "b");
        assert_eq!(ms.target().values(), &[3.0, 4.0]);
        assert!(ms.is_aligned());

        let f = file("population_id,column_index,value\na,1,1\na,2,2\nb,1,3\n");
        assert!(!read_samples(f.path()).unwrap().is_aligned());
    }

    #[test]
    fn bad_files() {
        for body in [
            "pop,col,value\na,1,1\n",
            "population_id,column_index,value\na,1,x\n",
            "population_id,column_index,value\na,1,1\na,1,2\n",
            "population_id,column_index,value\n",
        ] {
            assert!(matches!(read_samples(file(body).path()), Err(WleError::Ingest { .. })), "{body}");
        }
        assert!(matches!(read_samples("/no/such/file.csv"), Err(WleError::Ingest { .. })));
    }
}
