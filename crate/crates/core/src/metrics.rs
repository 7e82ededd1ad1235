//! Map correspondence metrics: top-K agreement, maximum distance to best
//! match, map MSE, and the histogram/bin aggregations over a population.

use std::collections::HashSet;
use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::saliency::{NormalizedMap, PixelMap};

/// Whether an image belongs to the training (normal) classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Population {
    Normal,
    Novel,
}

impl Population {
    pub const ALL: [Population; 2] = [Population::Normal, Population::Novel];

    pub fn as_str(self) -> &'static str {
        match self {
            Population::Normal => "normal",
            Population::Novel => "novel",
        }
    }
}

impl fmt::Display for Population {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Population {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Population::Normal),
            "novel" => Ok(Population::Novel),
            other => Err(Error::Data(format!("unknown population {other:?}"))),
        }
    }
}

/// `(row, col)` pixel coordinate.
pub type Pixel = (usize, usize);

/// The K highest pixels of a map, highest first.
///
/// Ranking is by value descending, then row-major index ascending, so equal
/// values resolve toward the top-left.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopKSet {
    k: usize,
    coords: Vec<Pixel>,
}

impl TopKSet {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn coords(&self) -> &[Pixel] {
        &self.coords
    }
}

pub fn top_k_select(map: &PixelMap, k: usize) -> Result<TopKSet> {
    if k == 0 || k > map.len() {
        return Err(Error::Contract(format!(
            "k = {k} outside 1..={} for a {}x{} map",
            map.len(),
            map.height(),
            map.width()
        )));
    }
    let values = map.values();
    let rank = |&a: &usize, &b: &usize| values[b].total_cmp(&values[a]).then(a.cmp(&b));
    let mut idx: Vec<usize> = (0..values.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, rank);
        idx.truncate(k);
    }
    idx.sort_unstable_by(rank);
    let width = map.width();
    Ok(TopKSet {
        k,
        coords: idx.into_iter().map(|i| (i / width, i % width)).collect(),
    })
}

fn check_k(a: &TopKSet, b: &TopKSet) -> Result<()> {
    if a.k != b.k {
        return Err(Error::Contract(format!("top-K sets differ in k: {} vs {}", a.k, b.k)));
    }
    Ok(())
}

/// Number of pixels the two sets share.
pub fn top_k_agreement(a: &TopKSet, b: &TopKSet) -> Result<usize> {
    check_k(a, b)?;
    let other: HashSet<Pixel> = b.coords.iter().copied().collect();
    Ok(a.coords.iter().filter(|p| other.contains(p)).count())
}

/// `max_{p ∈ reference} min_{q ∈ other} ‖p − q‖₂` in pixel units.
///
/// Asymmetric: callers pass the saliency set as `reference`.
pub fn max_distance_best_match(reference: &TopKSet, other: &TopKSet) -> Result<f64> {
    if reference.coords.is_empty() || other.coords.is_empty() {
        return Err(Error::Contract("distance to best match needs nonempty sets".into()));
    }
    let sq = |(r0, c0): Pixel, (r1, c1): Pixel| {
        let dr = r0.abs_diff(r1);
        let dc = c0.abs_diff(c1);
        dr * dr + dc * dc
    };
    let worst = reference
        .coords
        .iter()
        .map(|&p| other.coords.iter().map(|&q| sq(p, q)).min().expect("nonempty"))
        .max()
        .expect("nonempty");
    Ok((worst as f64).sqrt())
}

/// Mean squared difference of two equally sized maps.
pub fn map_mse(a: &NormalizedMap, b: &NormalizedMap) -> Result<f64> {
    let (a, b) = (a.map(), b.map());
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::Contract(format!(
            "map sizes differ: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let sum: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// Frequency of each agreement value `0..=k` over a population.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgreementHistogram {
    pub k: usize,
    pub population: Population,
    /// `counts[v]` images had agreement `v`.
    pub counts: Vec<usize>,
}

impl AgreementHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Most frequent agreement value; the smallest one on ties.
    pub fn mode(&self) -> Option<usize> {
        let max = *self.counts.iter().max()?;
        (max > 0).then(|| self.counts.iter().position(|&c| c == max).expect("max exists"))
    }

    pub fn frequency(&self, value: usize) -> f64 {
        match self.total() {
            0 => 0.0,
            total => self.counts.get(value).copied().unwrap_or(0) as f64 / total as f64,
        }
    }
}

pub fn aggregate_histogram(
    agreements: &[usize],
    k: usize,
    population: Population,
) -> Result<AgreementHistogram> {
    let mut counts = vec![0; k + 1];
    for &a in agreements {
        *counts
            .get_mut(a)
            .ok_or_else(|| Error::Contract(format!("agreement {a} exceeds k = {k}")))? += 1;
    }
    Ok(AgreementHistogram { k, population, counts })
}

/// Fraction of the population in each bin. Bins must partition `0..=k` in
/// ascending order. An empty histogram yields all-zero fractions.
pub fn binned_frequencies(hist: &AgreementHistogram, bins: &[RangeInclusive<usize>]) -> Result<Vec<f64>> {
    let mut next = 0;
    for bin in bins {
        if *bin.start() != next || bin.end() < bin.start() {
            return Err(Error::Contract(format!(
                "bins {bins:?} do not partition 0..={}",
                hist.k
            )));
        }
        next = bin.end() + 1;
    }
    if next != hist.k + 1 {
        return Err(Error::Contract(format!(
            "bins {bins:?} do not partition 0..={}",
            hist.k
        )));
    }
    let total = hist.total();
    Ok(bins
        .iter()
        .map(|bin| {
            let count: usize = hist.counts[bin.clone()].iter().sum();
            if total == 0 {
                0.0
            } else {
                count as f64 / total as f64
            }
        })
        .collect())
}

/// Per-image maximum distances and their mean (NaN when empty).
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceStats {
    pub distances: Vec<f64>,
    pub mean: f64,
}

impl DistanceStats {
    pub fn new(distances: Vec<f64>) -> Self {
        let mean = distances.iter().sum::<f64>() / distances.len() as f64;
        Self { distances, mean }
    }
}
