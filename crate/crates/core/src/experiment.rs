//! Experiment orchestration behind the command line tool.
//!
//! An output directory holds one subdirectory per scheme (`type1`, `type2`,
//! or `<architecture>-n<bits>-b<B>` for networks), each with a report file
//! and the artifacts needed to recompute it: PMIs, Type II reports,
//! checkpoints. Datasets live in the configured data directory, which
//! defaults to the output directory itself.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, FeedbackMode};
use crate::dataset::{self, WrittenSplit};
use crate::eigen::EigenTarget;
use crate::error::{ensure, Error, Result};
use crate::linalg::CMatrix;
use crate::metrics::{cosine_similarity, stacked_cosine_similarity};
use crate::nn::checkpoint::{load_checkpoint_for, save_checkpoint};
use crate::nn::complexity::count_params_flops;
use crate::nn::model::{build_model, QuantBehavior};
use crate::nn::spec::ModelSpec;
use crate::nn::train::{evaluate, evaluate_with, train_with_progress, EpochRecord, TrainSet};
use crate::quant::QuantizerSpec;
use crate::report::{write_rows, ReportRow};
use crate::type1::{overhead_type1, Type1Codebook, Type1Pmi};
use crate::type2::{Type2Codebook, Type2Report};

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Run directory name of a network.
pub fn scheme_name(spec: &ModelSpec) -> String {
    format!(
        "{}-n{}-b{}",
        spec.architecture,
        spec.feedback_bits(),
        spec.quantizer.bits_per_element()
    )
}

pub fn gen(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<WrittenSplit>> {
    dataset::generate(&cfg.scene, cfg.count, &cfg.data_dir(out))
}

fn load(cfg: &ExperimentConfig, out: &Path, split: &str) -> Result<Vec<EigenTarget>> {
    let targets = dataset::load_split(&cfg.data_dir(out), split, &cfg.scene)?;
    ensure!(!targets.is_empty(), Contract, "the {split} split is empty");
    Ok(targets)
}

/// Type I on every subband column: per-sample PMIs and similarities go to
/// `type1/pmi.csv`.
pub fn eval_type1(cfg: &ExperimentConfig, out: &Path) -> Result<ReportRow> {
    cfg.expect_mode(FeedbackMode::Type1)?;
    let start = Instant::now();
    let test = load(cfg, out, "test")?;
    let book = Type1Codebook::new(cfg.scene.array)?;
    let per_sample = test
        .par_iter()
        .map(|t| {
            let pmis = t
                .v
                .columns()
                .iter()
                .map(|c| book.encode(c).map(|(p, _)| p))
                .collect::<Result<Vec<_>>>()?;
            let rho = type1_similarity(&book, &t.v, &pmis)?;
            Ok((pmis, rho))
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = out.join("type1");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("pmi.csv");
    let mut f = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(f, "sample,subband,flat_index,theta1,theta2,phi_index,rho").map_err(io)?;
    for (i, (pmis, rho)) in per_sample.iter().enumerate() {
        for (s, p) in pmis.iter().enumerate() {
            writeln!(f, "{i},{s},{},{},{},{},{rho}", p.flat_index, p.theta1, p.theta2, p.phi_index).map_err(io)?;
        }
    }
    f.flush().map_err(io)?;
    let rhos: Vec<f64> = per_sample.iter().map(|p| p.1).collect();
    let row = ReportRow {
        scheme: "type1".into(),
        n_bits: (overhead_type1(&cfg.scene.array) as usize * cfg.scene.n_subbands) as f64,
        rho: Some(mean(&rhos)),
        params: None,
        flops: None,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    write_rows(&dir, std::slice::from_ref(&row), cfg.report_format)?;
    Ok(row)
}

/// Mean over subbands of the similarity between `v` and the decoded PMIs.
pub fn type1_similarity(book: &Type1Codebook, v: &CMatrix, pmis: &[Type1Pmi]) -> Result<f64> {
    let cols = pmis.iter().map(|p| book.decode(p)).collect::<Result<Vec<_>>>()?;
    let total = cols
        .iter()
        .enumerate()
        .map(|(s, c)| cosine_similarity(&v.column(s), c))
        .sum::<Result<f64>>()?;
    Ok(total / cols.len() as f64)
}

/// Type II reports go to `type2/reports.jsonl`, one per test sample.
pub fn eval_type2(cfg: &ExperimentConfig, out: &Path) -> Result<ReportRow> {
    cfg.expect_mode(FeedbackMode::Type2)?;
    let start = Instant::now();
    let test = load(cfg, out, "test")?;
    let book = Type2Codebook::new(cfg.scene.array, cfg.type2)?;
    let per_sample = test
        .par_iter()
        .map(|t| {
            let report = book.encode(&t.v)?;
            let rho = stacked_cosine_similarity(&t.v, &book.decode(&report)?)?.rho;
            Ok((report, rho))
        })
        .collect::<Result<Vec<(Type2Report, f64)>>>()?;
    let dir = out.join("type2");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("reports.jsonl");
    let mut f = create(&path)?;
    let io = |e| Error::io(&path, e);
    for (report, _) in &per_sample {
        serde_json::to_writer(&mut f, report).expect("report serializes");
        writeln!(f).map_err(io)?;
    }
    f.flush().map_err(io)?;
    let bits: Vec<f64> = per_sample.iter().map(|(r, _)| book.overhead(r) as f64).collect();
    let rhos: Vec<f64> = per_sample.iter().map(|p| p.1).collect();
    let row = ReportRow {
        scheme: "type2".into(),
        n_bits: mean(&bits),
        rho: Some(mean(&rhos)),
        params: None,
        flops: None,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    write_rows(&dir, std::slice::from_ref(&row), cfg.report_format)?;
    Ok(row)
}

/// Written next to each checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub scheme: String,
    pub spec: ModelSpec,
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub untrained_val_rho: f64,
    pub best_val_rho: f64,
    pub history_sha256: String,
    pub train_seconds: f64,
}

pub fn train(
    cfg: &ExperimentConfig,
    out: &Path,
    on_epoch: &mut dyn FnMut(&str, &EpochRecord),
) -> Result<Vec<TrainSummary>> {
    cfg.expect_mode(FeedbackMode::Nn)?;
    let specs = cfg.model_specs()?;
    let train_targets = load(cfg, out, "train")?;
    let val_targets = load(cfg, out, "val")?;
    let arch = specs[0].architecture;
    let train_set = TrainSet::<f32>::from_targets(arch, &train_targets)?;
    let val_set = TrainSet::<f32>::from_targets(arch, &val_targets)?;
    let mut summaries = Vec::new();
    for spec in specs {
        let start = Instant::now();
        let scheme = scheme_name(&spec);
        let mut model = build_model::<f32>(&spec, cfg.seed)?;
        let untrained = mean(&evaluate(&model, &val_set)?);
        let history = train_with_progress(&mut model, &train_set, &val_set, &cfg.train, &mut |r| on_epoch(&scheme, r))?;
        let best_val_rho = mean(&evaluate(&model, &val_set)?);
        let dir = out.join(&scheme);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_checkpoint(&dir.join("model.ckpt"), &model)?;
        write_text(&dir.join("history.csv"), &history.to_csv())?;
        let summary = TrainSummary {
            scheme,
            spec,
            seed: cfg.seed,
            epochs: cfg.train.epochs,
            best_epoch: history.best_epoch,
            untrained_val_rho: untrained,
            best_val_rho,
            history_sha256: history.digest(),
            train_seconds: start.elapsed().as_secs_f64(),
        };
        write_text(
            &dir.join("train.json"),
            &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
        )?;
        summaries.push(summary);
    }
    Ok(summaries)
}

/// Written next to each network report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub scheme: String,
    pub feedback_bits: usize,
    pub quantization: String,
    pub test_samples: usize,
    pub rho: f64,
    pub eval_seconds: f64,
}

fn read_train_seconds(dir: &Path) -> f64 {
    std::fs::read_to_string(dir.join("train.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<TrainSummary>(&t).ok())
        .map_or(0.0, |s| s.train_seconds)
}

/// Evaluates the checkpoints written by [`train`] on the test split. The
/// row's `wall_seconds` is training plus evaluation time.
pub fn eval_nn(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ReportRow>> {
    cfg.expect_mode(FeedbackMode::Nn)?;
    let specs = cfg.model_specs()?;
    let test = load(cfg, out, "test")?;
    let test_set = TrainSet::<f32>::from_targets(specs[0].architecture, &test)?;
    let mut rows = Vec::new();
    for spec in specs {
        let start = Instant::now();
        let scheme = scheme_name(&spec);
        let dir = out.join(&scheme);
        let model = load_checkpoint_for(&dir.join("model.ckpt"), &spec)?;
        let stochastic = cfg.eval.stochastic && spec.quantizer == QuantizerSpec::Binarize;
        let quant = if stochastic {
            QuantBehavior::Stochastic
        } else {
            QuantBehavior::Deterministic
        };
        let rhos = evaluate_with(&model, &test_set, quant, cfg.seed)?;
        let rho = mean(&rhos);
        let path = dir.join("per_sample.csv");
        let mut f = create(&path)?;
        let io = |e| Error::io(&path, e);
        writeln!(f, "sample,rho").map_err(io)?;
        for (i, r) in rhos.iter().enumerate() {
            writeln!(f, "{i},{r}").map_err(io)?;
        }
        f.flush().map_err(io)?;
        let c = count_params_flops(&spec)?;
        let eval_seconds = start.elapsed().as_secs_f64();
        let summary = EvalSummary {
            scheme: scheme.clone(),
            feedback_bits: spec.feedback_bits(),
            quantization: if stochastic { "stochastic" } else { "deterministic" }.into(),
            test_samples: rhos.len(),
            rho,
            eval_seconds,
        };
        write_text(
            &dir.join("eval.json"),
            &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
        )?;
        let row = ReportRow {
            scheme,
            n_bits: spec.feedback_bits() as f64,
            rho: Some(rho),
            params: Some(c.params),
            flops: Some(c.flops),
            wall_seconds: read_train_seconds(&dir) + eval_seconds,
        };
        write_rows(&dir, std::slice::from_ref(&row), cfg.report_format)?;
        rows.push(row);
    }
    Ok(rows)
}

/// Parameter and FLOP counts of the configured networks; no data needed.
pub fn complexity(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    cfg.model_specs()?
        .iter()
        .map(|spec| {
            let start = Instant::now();
            let c = count_params_flops(spec)?;
            Ok(ReportRow {
                scheme: scheme_name(spec),
                n_bits: spec.feedback_bits() as f64,
                rho: None,
                params: Some(c.params),
                flops: Some(c.flops),
                wall_seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Consolidates run directories (all reporting subdirectories of `out` when
/// none are given) into `out/report.*`.
pub fn report(cfg_format: crate::config::ReportFormat, runs: &[PathBuf], out: &Path) -> Result<Vec<ReportRow>> {
    let runs = if runs.is_empty() {
        crate::report::discover_runs(out)?
    } else {
        runs.to_vec()
    };
    ensure!(!runs.is_empty(), Config, "no runs found under {}", out.display());
    let rows = crate::report::consolidate(&runs)?;
    write_rows(out, &rows, cfg_format)?;
    Ok(rows)
}
