//! Population-level aggregates of evaluation records.

use std::ops::RangeInclusive;

use reconsal_core::metrics::{aggregate_histogram, binned_frequencies, DistanceStats, Population};
use serde::Serialize;

use crate::eval::EvalRecord;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinFrequency {
    pub lo: usize,
    pub hi: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KSummary {
    pub k: usize,
    /// `histogram[v]` = images with agreement `v`.
    pub histogram: Vec<usize>,
    pub mode: Option<usize>,
    /// Minority/majority agreement bins.
    pub bins: Vec<BinFrequency>,
    pub mean_max_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PopulationSummary {
    #[serde(serialize_with = "population_name")]
    pub population: Population,
    pub count: usize,
    pub mean_recon_loss: f64,
    pub mean_mse_saliency: f64,
    pub mean_mse_sq_saliency: f64,
    pub per_k: Vec<KSummary>,
}

impl PopulationSummary {
    pub fn for_k(&self, k: usize) -> Option<&KSummary> {
        self.per_k.iter().find(|s| s.k == k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub total_records: usize,
    pub k_values: Vec<usize>,
    pub populations: Vec<PopulationSummary>,
}

impl Summary {
    pub fn population(&self, p: Population) -> &PopulationSummary {
        self.populations
            .iter()
            .find(|s| s.population == p)
            .expect("summary covers both populations")
    }
}

/// `[0, ⌊k/2⌋]` and `[⌊k/2⌋ + 1, k]`: at most half vs. a majority of the
/// top-K pixels shared.
pub fn majority_bins(k: usize) -> Vec<RangeInclusive<usize>> {
    vec![0..=k / 2, k / 2 + 1..=k]
}

fn population_name<S: serde::Serializer>(p: &Population, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(p.as_str())
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

pub fn summarize(records: &[EvalRecord], k_values: &[usize]) -> Summary {
    let populations = Population::ALL
        .iter()
        .map(|&pop| {
            let rows: Vec<&EvalRecord> = records.iter().filter(|r| r.population == pop).collect();
            let per_k = k_values
                .iter()
                .enumerate()
                .map(|(ki, &k)| {
                    let agreements: Vec<usize> = rows.iter().map(|r| r.agreements[ki]).collect();
                    let hist = aggregate_histogram(&agreements, k, pop)
                        .expect("records are validated against k on construction");
                    let bins = majority_bins(k);
                    let fractions = binned_frequencies(&hist, &bins).expect("majority bins partition 0..=k");
                    let distances = DistanceStats::new(rows.iter().map(|r| r.max_distances[ki]).collect());
                    KSummary {
                        k,
                        mode: hist.mode(),
                        bins: bins
                            .iter()
                            .zip(fractions)
                            .map(|(b, fraction)| BinFrequency { lo: *b.start(), hi: *b.end(), fraction })
                            .collect(),
                        histogram: hist.counts,
                        mean_max_distance: distances.mean,
                    }
                })
                .collect();
            PopulationSummary {
                population: pop,
                count: rows.len(),
                mean_recon_loss: mean(rows.iter().map(|r| r.recon_loss)),
                mean_mse_saliency: mean(rows.iter().map(|r| r.mse_saliency)),
                mean_mse_sq_saliency: mean(rows.iter().map(|r| r.mse_sq_saliency)),
                per_k,
            }
        })
        .collect();
    Summary {
        total_records: records.len(),
        k_values: k_values.to_vec(),
        populations,
    }
}
