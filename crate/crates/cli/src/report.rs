//! Markdown report built from `eval.csv` alone.

use std::fmt::Write as _;

use reconsal_core::metrics::Population;

use crate::summary::{PopulationSummary, Summary};

/// Published reference values, `(normal, novel)`.
pub mod reference {
    /// Fraction of images per agreement bin, `[minority, majority]`.
    pub const BINS_K5: [(f64, f64); 2] = [(0.74, 0.81), (0.26, 0.19)];
    pub const BINS_K10: [(f64, f64); 2] = [(0.81, 0.92), (0.19, 0.08)];
    /// Most frequent top-10 agreement.
    pub const MODE_K10: (usize, usize) = (4, 2);
    pub const MEAN_MAX_DISTANCE_K5: (f64, f64) = (8.28, 9.25);
    pub const MEAN_MAX_DISTANCE_K10: (f64, f64) = (8.14, 8.90);
    pub const MSE_SALIENCY: (f64, f64) = (0.0303, 0.0305);
    pub const MSE_SQ_SALIENCY: (f64, f64) = (0.0071, 0.0072);
}

fn pick<T: Copy>(pair: (T, T), pop: Population) -> T {
    match pop {
        Population::Normal => pair.0,
        Population::Novel => pair.1,
    }
}

fn fmt_num(v: f64, digits: usize) -> String {
    if v.is_finite() {
        format!("{v:.digits$}")
    } else {
        "n/a".into()
    }
}

fn published_bins(k: usize) -> Option<[(f64, f64); 2]> {
    match k {
        5 => Some(reference::BINS_K5),
        10 => Some(reference::BINS_K10),
        _ => None,
    }
}

fn published_distance(k: usize) -> Option<(f64, f64)> {
    match k {
        5 => Some(reference::MEAN_MAX_DISTANCE_K5),
        10 => Some(reference::MEAN_MAX_DISTANCE_K10),
        _ => None,
    }
}

pub fn render_markdown(summary: &Summary) -> String {
    let mut out = String::from("# Reconstruction error vs. saliency: evaluation report\n\n");
    if summary.total_records == 0 {
        out.push_str("_No records: the evaluation CSV is empty._\n");
        return out;
    }
    let pops = [summary.population(Population::Normal), summary.population(Population::Novel)];

    out.push_str("## Populations\n\n| Population | Images | Mean reconstruction loss |\n|---|---|---|\n");
    for p in pops {
        writeln!(out, "| {} | {} | {} |", p.population, p.count, fmt_num(p.mean_recon_loss, 5)).unwrap();
    }

    out.push_str("\n## Top-K agreement frequencies\n\n");
    out.push_str("| K | Agreement | Normal | Novel | Published normal | Published novel |\n|---|---|---|---|---|---|\n");
    for &k in &summary.k_values {
        for (bi, bin) in pops[0].for_k(k).expect("k summarized").bins.iter().enumerate() {
            let novel = pops[1].for_k(k).expect("k summarized").bins[bi].fraction;
            let (pn, pv) = published_bins(k)
                .map(|b| (fmt_num(b[bi].0, 2), fmt_num(b[bi].1, 2)))
                .unwrap_or(("–".into(), "–".into()));
            writeln!(
                out,
                "| {k} | {}-{} | {} | {} | {pn} | {pv} |",
                bin.lo,
                bin.hi,
                fmt_num(bin.fraction, 2),
                fmt_num(novel, 2)
            )
            .unwrap();
        }
    }

    for &k in &summary.k_values {
        writeln!(out, "\n## Top-{k} agreement histogram\n").unwrap();
        out.push_str("| Agreement | Normal | Novel |\n|---|---|---|\n");
        let (hn, hv) = (&pops[0].for_k(k).unwrap().histogram, &pops[1].for_k(k).unwrap().histogram);
        for v in 0..=k {
            writeln!(out, "| {v} | {} | {} |", hn[v], hv[v]).unwrap();
        }
        let mode = |p: &PopulationSummary| {
            p.for_k(k).unwrap().mode.map_or("n/a".to_string(), |m| m.to_string())
        };
        write!(out, "\nMode: normal {}, novel {}", mode(pops[0]), mode(pops[1])).unwrap();
        if k == 10 {
            let (pn, pv) = reference::MODE_K10;
            write!(out, " (published: normal {pn}, novel {pv})").unwrap();
        }
        out.push('\n');
    }

    out.push_str("\n## Mean maximum distance to best match (pixels)\n\n");
    out.push_str("| K | Normal | Novel | Published normal | Published novel |\n|---|---|---|---|---|\n");
    for &k in &summary.k_values {
        let d = |p: &PopulationSummary| fmt_num(p.for_k(k).unwrap().mean_max_distance, 2);
        let (pn, pv) = published_distance(k)
            .map(|(a, b)| (fmt_num(a, 2), fmt_num(b, 2)))
            .unwrap_or(("–".into(), "–".into()));
        writeln!(out, "| {k} | {} | {} | {pn} | {pv} |", d(pops[0]), d(pops[1])).unwrap();
    }

    out.push_str("\n## Mean MSE to the scaled reconstruction error map\n\n");
    out.push_str("| Population | Scaled saliency | Squared scaled saliency | Published saliency | Published squared |\n|---|---|---|---|---|\n");
    for p in pops {
        writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            p.population,
            fmt_num(p.mean_mse_saliency, 4),
            fmt_num(p.mean_mse_sq_saliency, 4),
            fmt_num(pick(reference::MSE_SALIENCY, p.population), 4),
            fmt_num(pick(reference::MSE_SQ_SALIENCY, p.population), 4),
        )
        .unwrap();
    }
    out
}
