//! Per-image evaluation and the `eval.csv` schema.
//!
//! Columns, in order:
//!
//! ```text
//! index,label,population,recon_loss,agree_k{K}...,maxdist_k{K}...,mse_saliency,mse_sq_saliency
//! ```
//!
//! with one `agree_k`/`maxdist_k` column per evaluated K (default 5 and 10).
//! Reals are written in shortest round-trip form.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use reconsal_core::autoencoder::{reconstruction_loss, reconstruction_map, AutoencoderModel};
use reconsal_core::dataset::LabeledImageSet;
use reconsal_core::metrics::{map_mse, max_distance_best_match, top_k_agreement, top_k_select, Population};
use reconsal_core::saliency::{saliency_with_reconstruction, scale_unit_max, square_map, PixelMap};
use reconsal_core::Tensor;

/// Metric results for one test image.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub index: usize,
    pub label: u8,
    pub population: Population,
    pub recon_loss: f64,
    /// One entry per K, in the order of the run's K list.
    pub agreements: Vec<usize>,
    /// Saliency set as reference, one entry per K.
    pub max_distances: Vec<f64>,
    pub mse_saliency: f64,
    pub mse_sq_saliency: f64,
}

/// Maps derived from one image.
pub struct ImageMaps {
    pub reconstruction: Tensor,
    pub recon_error: PixelMap,
    pub saliency: PixelMap,
}

pub fn image_maps(model: &AutoencoderModel, x: &Tensor) -> reconsal_core::Result<ImageMaps> {
    let (saliency, reconstruction) = saliency_with_reconstruction(model, x)?;
    let recon_error = reconstruction_map(x, &reconstruction)?;
    Ok(ImageMaps { reconstruction, recon_error, saliency })
}

pub fn evaluate_image(
    model: &AutoencoderModel,
    x: &Tensor,
    index: usize,
    label: u8,
    population: Population,
    k_values: &[usize],
) -> reconsal_core::Result<EvalRecord> {
    let maps = image_maps(model, x)?;
    let mut agreements = Vec::with_capacity(k_values.len());
    let mut max_distances = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let sal = top_k_select(&maps.saliency, k)?;
        let rec = top_k_select(&maps.recon_error, k)?;
        agreements.push(top_k_agreement(&sal, &rec)?);
        max_distances.push(max_distance_best_match(&sal, &rec)?);
    }
    let recon_scaled = scale_unit_max(&maps.recon_error);
    let sal_scaled = scale_unit_max(&maps.saliency);
    Ok(EvalRecord {
        index,
        label,
        population,
        recon_loss: reconstruction_loss(&maps.recon_error),
        agreements,
        max_distances,
        mse_saliency: map_mse(&sal_scaled, &recon_scaled)?,
        mse_sq_saliency: map_mse(&square_map(&sal_scaled), &recon_scaled)?,
    })
}

/// Evaluates every image whose label is in one of the class sets, fanning
/// out over `workers` threads. Records come back in index order.
pub fn evaluate_set(
    model: &AutoencoderModel,
    data: &LabeledImageSet,
    normal: &BTreeSet<u8>,
    novel: &BTreeSet<u8>,
    k_values: &[usize],
    workers: usize,
) -> Result<Vec<EvalRecord>> {
    let jobs: Vec<(usize, Population)> = data
        .labels()
        .iter()
        .enumerate()
        .filter_map(|(i, l)| {
            if normal.contains(l) {
                Some((i, Population::Normal))
            } else if novel.contains(l) {
                Some((i, Population::Novel))
            } else {
                None
            }
        })
        .collect();
    let workers = workers.clamp(1, jobs.len().max(1));
    let run = |slice: &[(usize, Population)]| -> reconsal_core::Result<Vec<EvalRecord>> {
        slice
            .iter()
            .map(|&(i, pop)| evaluate_image(model, &data.image(i)?, i, data.labels()[i], pop, k_values))
            .collect()
    };
    let chunk = jobs.len().div_ceil(workers).max(1);
    let parts: Vec<reconsal_core::Result<Vec<EvalRecord>>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs.chunks(chunk).map(|c| s.spawn(move || run(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    let mut records = Vec::with_capacity(jobs.len());
    for part in parts {
        records.extend(part?);
    }
    Ok(records)
}

pub fn csv_header(k_values: &[usize]) -> String {
    let mut cols = vec!["index".to_string(), "label".into(), "population".into(), "recon_loss".into()];
    cols.extend(k_values.iter().map(|k| format!("agree_k{k}")));
    cols.extend(k_values.iter().map(|k| format!("maxdist_k{k}")));
    cols.push("mse_saliency".into());
    cols.push("mse_sq_saliency".into());
    cols.join(",")
}

pub fn write_csv(records: &[EvalRecord], k_values: &[usize]) -> String {
    let mut out = csv_header(k_values);
    out.push('\n');
    for r in records {
        write!(out, "{},{},{},{}", r.index, r.label, r.population, r.recon_loss).unwrap();
        for a in &r.agreements {
            write!(out, ",{a}").unwrap();
        }
        for d in &r.max_distances {
            write!(out, ",{d}").unwrap();
        }
        writeln!(out, ",{},{}", r.mse_saliency, r.mse_sq_saliency).unwrap();
    }
    out
}

/// Parses `eval.csv` text, returning the K list from the header and the
/// records. Errors carry the 1-based line number.
pub fn read_csv(text: &str) -> Result<(Vec<usize>, Vec<EvalRecord>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        bail!("line 1: missing CSV header");
    };
    let k_values = header_k_values(header).context("line 1")?;
    let width = 6 + 2 * k_values.len();
    let mut records = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            bail!("line {line_no}: expected {width} fields, found {}", fields.len());
        }
        let parse = || -> Result<EvalRecord> {
            let nk = k_values.len();
            let label: u8 = fields[1].parse()?;
            if label > 9 {
                bail!("label {label} is not a digit");
            }
            let agreements = fields[4..4 + nk]
                .iter()
                .map(|f| f.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()?;
            for (&a, &k) in agreements.iter().zip(&k_values) {
                if a > k {
                    bail!("agreement {a} exceeds k = {k}");
                }
            }
            Ok(EvalRecord {
                index: fields[0].parse()?,
                label,
                population: fields[2].parse()?,
                recon_loss: fields[3].parse()?,
                agreements,
                max_distances: fields[4 + nk..4 + 2 * nk]
                    .iter()
                    .map(|f| f.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()?,
                mse_saliency: fields[4 + 2 * nk].parse()?,
                mse_sq_saliency: fields[5 + 2 * nk].parse()?,
            })
        };
        records.push(parse().with_context(|| format!("line {line_no}"))?);
    }
    Ok((k_values, records))
}

fn header_k_values(header: &str) -> Result<Vec<usize>> {
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let ks: Vec<usize> = cols
        .iter()
        .filter_map(|c| c.strip_prefix("agree_k"))
        .map(|k| k.parse::<usize>())
        .collect::<Result<_, _>>()
        .context("bad agree_k column")?;
    if ks.is_empty() || header != csv_header(&ks) {
        bail!("unexpected CSV header {header:?}");
    }
    Ok(ks)
}
