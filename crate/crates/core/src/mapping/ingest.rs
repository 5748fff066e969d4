use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MappingDataset, Region, DEFAULT_WEEKS_PER_YEAR};
use crate::error::{Result, WleError};

/// One daily count before weekly aggregation. Days are numbered from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyCount {
    pub region: String,
    pub year: u32,
    pub day: u32,
    pub count: u64,
}

/// Sums days `7(w−1)+1 ..= 7w` into week `w`; days past `7 · weeks_per_year`
/// are dropped. Every region-year with any daily record gets all weeks,
/// zero-filled.
pub fn weekly_aggregate(regions: Vec<Region>, daily: &[DailyCount], weeks_per_year: u32) -> Result<MappingDataset> {
    let mut ds = MappingDataset::new(regions, weeks_per_year)?;
    let mut weekly: BTreeMap<(String, u32), Vec<u64>> = BTreeMap::new();
    for d in daily {
        if d.day == 0 {
            return Err(WleError::InvalidInput(format!("day index 0 for region {}", d.region)));
        }
        let series = weekly
            .entry((d.region.clone(), d.year))
            .or_insert_with(|| vec![0; weeks_per_year as usize]);
        let week = (d.day - 1) / 7;
        if week < weeks_per_year {
            series[week as usize] += d.count;
        }
    }
    for ((region, year), series) in weekly {
        for (w, c) in series.into_iter().enumerate() {
            ds.insert(&region, year, w as u32 + 1, c)?;
        }
    }
    Ok(ds)
}

#[derive(Clone, Copy, PartialEq)]
enum Layout {
    Weekly,
    Daily,
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, loc: &str) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("").trim();
    raw.parse()
        .map_err(|_| WleError::ingest(loc, format!("cannot parse {name} from {raw:?}")))
}

/// Reads a count CSV with header
/// `region_id,longitude,latitude,year,week,count` or
/// `region_id,longitude,latitude,year,day,count` (aggregated to weeks).
pub fn ingest_counts(path: impl AsRef<Path>, weeks_per_year: Option<u32>) -> Result<MappingDataset> {
    let path = path.as_ref();
    let weeks_per_year = weeks_per_year.unwrap_or(DEFAULT_WEEKS_PER_YEAR);
    let file = std::fs::File::open(path).map_err(|e| WleError::ingest(path.display().to_string(), e.to_string()))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| WleError::ingest(path.display().to_string(), e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    let layout = match names.as_slice() {
        ["region_id", "longitude", "latitude", "year", "week", "count"] => Layout::Weekly,
        ["region_id", "longitude", "latitude", "year", "day", "count"] => Layout::Daily,
        _ => {
            return Err(WleError::ingest(
                format!("{}:1", path.display()),
                format!("unexpected header {names:?}"),
            ))
        }
    };

    let mut regions: BTreeMap<String, Region> = BTreeMap::new();
    let mut rows: Vec<(String, u32, u32, u64)> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, rec) in reader.records().enumerate() {
        let loc = format!("{}:{}", path.display(), i + 2);
        let rec = rec.map_err(|e| WleError::ingest(&loc, e.to_string()))?;
        if rec.len() != 6 {
            return Err(WleError::ingest(&loc, format!("expected 6 fields, found {}", rec.len())));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(WleError::ingest(&loc, "empty region_id"));
        }
        let lon: f64 = parse_field(&rec, 1, "longitude", &loc)?;
        let lat: f64 = parse_field(&rec, 2, "latitude", &loc)?;
        let year: u32 = parse_field(&rec, 3, "year", &loc)?;
        let index: u32 = parse_field(&rec, 4, if layout == Layout::Weekly { "week" } else { "day" }, &loc)?;
        let count: i64 = parse_field(&rec, 5, "count", &loc)?;
        if count < 0 {
            return Err(WleError::ingest(&loc, format!("negative count {count}")));
        }
        if !(lon.is_finite() && lat.is_finite()) {
            return Err(WleError::ingest(&loc, "non-finite coordinates"));
        }
        match regions.get(&id) {
            Some(r) if r.longitude != lon || r.latitude != lat => {
                return Err(WleError::ingest(&loc, format!("inconsistent coordinates for region {id}")));
            }
            Some(_) => {}
            None => {
                regions.insert(id.clone(), Region::new(id.clone(), lon, lat));
            }
        }
        if !seen.insert((id.clone(), year, index)) {
            return Err(WleError::ingest(&loc, format!("duplicate key ({id}, {year}, {index})")));
        }
        if layout == Layout::Weekly && (index == 0 || index > weeks_per_year) {
            return Err(WleError::ingest(&loc, format!("week {index} outside 1..={weeks_per_year}")));
        }
        if layout == Layout::Daily && index == 0 {
            return Err(WleError::ingest(&loc, "day index 0"));
        }
        rows.push((id, year, index, count as u64));
    }

    let regions: Vec<Region> = regions.into_values().collect();
    match layout {
        Layout::Weekly => {
            let mut ds = MappingDataset::new(regions, weeks_per_year)?;
            for (id, year, week, count) in rows {
                ds.insert(&id, year, week, count)?;
            }
            Ok(ds)
        }
        Layout::Daily => {
            let daily: Vec<DailyCount> = rows
                .into_iter()
                .map(|(region, year, day, count)| DailyCount {
                    region,
                    year,
                    day,
                    count,
                })
                .collect();
            weekly_aggregate(regions, &daily, weeks_per_year)
        }
    }
}
