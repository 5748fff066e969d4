use std::collections::BTreeSet;

use super::MappingDataset;
use crate::error::Result;

/// One-dimensional k-means with two clusters, initialized at the minimum and
/// maximum and iterated to a fixed point. Returns the cluster label (0 or 1)
/// of every value and the two centroids; ties go to cluster 0.
pub fn kmeans_two(values: &[f64]) -> (Vec<usize>, [f64; 2]) {
    if values.is_empty() {
        return (Vec::new(), [0.0, 0.0]);
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut centroids = [lo, hi];
    let mut labels = vec![usize::MAX; values.len()];
    loop {
        let next: Vec<usize> = values
            .iter()
            .map(|&v| usize::from((v - centroids[1]).abs() < (v - centroids[0]).abs()))
            .collect();
        if next == labels {
            break;
        }
        labels = next;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<f64> = values.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(v, _)| *v).collect();
            if !members.is_empty() {
                *centroid = members.iter().sum::<f64>() / members.len() as f64;
            }
        }
    }
    (labels, centroids)
}

/// Weeks in the smaller k-means cluster of one region-year, provided that
/// cluster holds at most `⌈W/4⌉` weeks and has the higher centroid.
pub fn flag_outlier_weeks(ds: &MappingDataset, region: &str, year: u32) -> Result<BTreeSet<u32>> {
    let counts: Vec<f64> = ds.weekly_counts(region, year)?.into_iter().map(|c| c as f64).collect();
    Ok(flag_high_cluster(&counts))
}

pub(crate) fn flag_high_cluster(counts: &[f64]) -> BTreeSet<u32> {
    let (labels, centroids) = kmeans_two(counts);
    let high_size = labels.iter().filter(|&&l| l == 1).count();
    let low_size = labels.len() - high_size;
    let guard = labels.len().div_ceil(4);
    if high_size == 0 || high_size >= low_size || high_size > guard || centroids[1] <= centroids[0] {
        return BTreeSet::new();
    }
    labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == 1)
        .map(|(j, _)| j as u32 + 1)
        .collect()
}
