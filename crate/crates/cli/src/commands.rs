//! Subcommand implementations. Each reads a [`RunConfig`] and writes its
//! artifacts under the run's output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use reconsal_core::autoencoder::{select_learning_rate, EpochStats, LearningRateSearch};
use reconsal_core::dataset::{split_by_novelty, train_val_split};
use reconsal_core::{AutoencoderModel, LabeledImageSet};
use serde::Serialize;

use crate::config::RunConfig;
use crate::eval::{evaluate_set, image_maps, read_csv, write_csv};
use crate::render::map_grid;
use crate::report::render_markdown;
use crate::summary::summarize;

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_test_set(config: &RunConfig) -> Result<LabeledImageSet> {
    config.check_paths(&[&config.test_images, &config.test_labels])?;
    Ok(LabeledImageSet::read_idx(&config.test_images, &config.test_labels)?)
}

fn load_model(config: &RunConfig, checkpoint: Option<&Path>) -> Result<AutoencoderModel> {
    let path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| config.checkpoint_path());
    let model = AutoencoderModel::load(&path).with_context(|| format!("loading {}", path.display()))?;
    model
        .check_architecture(&config.autoencoder_config())
        .with_context(|| format!("checkpoint {} does not match the configured model", path.display()))?;
    Ok(model)
}

#[derive(Serialize)]
struct CandidateSummary {
    learning_rate: f64,
    initial_val_loss: f64,
    final_train_loss: Option<f64>,
    final_val_loss: f64,
}

#[derive(Serialize)]
struct TrainSummary {
    selected_learning_rate: f64,
    train_images: usize,
    val_images: usize,
    parameter_count: usize,
    epochs: usize,
    batch_size: usize,
    momentum: f64,
    seed: u64,
    candidates: Vec<CandidateSummary>,
}

/// `learning_rate,epoch,train_loss,val_loss`; epoch 0 holds the validation
/// loss before training and an empty train loss.
pub fn train_report_csv(search: &LearningRateSearch) -> String {
    let mut out = String::from("learning_rate,epoch,train_loss,val_loss\n");
    for r in &search.reports {
        writeln!(out, "{},0,,{}", r.learning_rate, r.initial_val_loss).unwrap();
        for (e, (t, v)) in r.train_losses.iter().zip(&r.val_losses).enumerate() {
            writeln!(out, "{},{},{t},{v}", r.learning_rate, e + 1).unwrap();
        }
    }
    out
}

/// Splits the training file into train/validation (before restricting to the
/// normal classes), trains one model per candidate learning rate and saves
/// the best one.
pub fn cmd_train(config: &RunConfig) -> Result<PathBuf> {
    config.check_paths(&[&config.train_images, &config.train_labels])?;
    let all = LabeledImageSet::read_idx(&config.train_images, &config.train_labels)?;
    let split = config.split_config();
    let (train_all, val_all) = train_val_split(&all, &split)?;
    let (train, _) = split_by_novelty(&train_all, &split)?;
    let (val, _) = split_by_novelty(&val_all, &split)?;
    eprintln!("training on {} normal images, validating on {}", train.len(), val.len());

    let model_config = config.autoencoder_config();
    let log = |s: &EpochStats| {
        eprintln!(
            "lr {:<6} epoch {:>3}  train {:.6}  val {:.6}",
            s.learning_rate, s.epoch, s.train_loss, s.val_loss
        )
    };
    let (model, search) =
        select_learning_rate(&model_config, &config.learning_rates, &train, &val, &config.train_config(), log)?;
    eprintln!("selected learning rate {}", search.selected);

    let ckpt = config.checkpoint_path();
    write_file(&ckpt, model.to_checkpoint_bytes())?;
    write_file(&config.output_dir.join("train_report.csv"), train_report_csv(&search))?;
    let summary = TrainSummary {
        selected_learning_rate: search.selected,
        train_images: train.len(),
        val_images: val.len(),
        parameter_count: model.parameter_count(),
        epochs: config.epochs,
        batch_size: config.batch_size,
        momentum: config.momentum,
        seed: config.seed,
        candidates: search
            .reports
            .iter()
            .map(|r| CandidateSummary {
                learning_rate: r.learning_rate,
                initial_val_loss: r.initial_val_loss,
                final_train_loss: r.train_losses.last().copied(),
                final_val_loss: r.final_val_loss(),
            })
            .collect(),
    };
    write_file(
        &config.output_dir.join("train_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(ckpt)
}

/// Evaluates every normal and novel test image, writing `eval.csv` and
/// `summary.json`.
pub fn cmd_eval(config: &RunConfig, checkpoint: Option<&Path>) -> Result<PathBuf> {
    let model = load_model(config, checkpoint)?;
    let test = load_test_set(config)?;
    let records = evaluate_set(
        &model,
        &test,
        &config.normal_classes,
        &config.novel_classes,
        &config.k_values,
        config.workers,
    )?;
    eprintln!("evaluated {} test images", records.len());
    let csv = config.eval_csv_path();
    write_file(&csv, write_csv(&records, &config.k_values))?;
    let summary = summarize(&records, &config.k_values);
    write_file(&config.output_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(csv)
}

pub fn map_file_name(index: usize) -> String {
    format!("maps_{index:05}.pgm")
}

/// Writes one five-panel PGM per requested test-set index into `out_dir`.
pub fn cmd_render_maps(
    config: &RunConfig,
    checkpoint: Option<&Path>,
    indices: &[usize],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if indices.is_empty() {
        bail!("no indices to render");
    }
    let model = load_model(config, checkpoint)?;
    let test = load_test_set(config)?;
    let mut written = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= test.len() {
            bail!("index {i} out of range for a test set of {} images", test.len());
        }
        let x = test.image(i)?;
        let maps = image_maps(&model, &x)?;
        let path = out_dir.join(map_file_name(i));
        write_file(&path, map_grid(x.data(), &maps).to_pgm())?;
        written.push(path);
    }
    Ok(written)
}

/// Builds the Markdown report from an evaluation CSV.
pub fn cmd_report(csv: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(csv).with_context(|| format!("reading {}", csv.display()))?;
    // An empty file still yields a report, with a "no records" notice.
    let (k_values, records) = if text.trim().is_empty() {
        (Vec::new(), Vec::new())
    } else {
        read_csv(&text).with_context(|| csv.display().to_string())?
    };
    write_file(out, render_markdown(&summarize(&records, &k_values)))
}
