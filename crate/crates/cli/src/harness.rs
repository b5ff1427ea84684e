//! Experiment orchestration: a config names a manifest and a list of
//! conditions (capture rate, augmentation policy, background treatment);
//! each condition runs `repeats` times with derived seeds. Results persist
//! one JSON file per (condition, run) under `out_dir/runs/`, so an
//! interrupted matrix resumes without recomputing finished cells.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use signbench_core::augment::{choose_background, composite, AugmentationPolicy};
use signbench_core::dataset::{
    split_frames, subsample_manifest, validate_structure, Manifest, SplitMode, SplitTag,
};
use signbench_core::image::resize_bilinear;
use signbench_core::nn::{
    build_model, evaluate, frames_with_tag, train, DataSplit, EpochStats, ModelConfig, ModelKind,
    TrainConfig,
};
use signbench_core::rng::stable_hash64;
use signbench_core::stats::{mean_and_sd, RunGroup, TestReport};
use signbench_core::RngState;

use crate::error::{io_at, BenchError, Result};
use crate::stats_io::run_test;
use crate::{image_io, manifest_io, render};

/// What the frames are composited onto. `Original` leaves them alone;
/// `Composited` swaps in a manifest produced by `prepare_backgrounds`
/// (path relative to the experiment config file).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Background {
    #[default]
    Original,
    Composited { manifest: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    /// Capture rate to subsample to; absent keeps the native rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<u32>,
    /// Training-time augmentation; absent trains on frames as they are.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<AugmentationPolicy>,
    #[serde(default)]
    pub background: Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub fraction: f64,
    pub mode: SplitMode,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { fraction: 0.8, mode: SplitMode::default() }
    }
}

fn default_repeats() -> u32 {
    3
}

fn default_kind() -> ModelKind {
    ModelKind::Multi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Relative to the config file's directory.
    pub manifest_path: String,
    pub conditions: Vec<Condition>,
    #[serde(default = "default_repeats")]
    pub repeats: u32,
    /// Base seed; each cell derives its own, see `run_seed`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_kind")]
    pub kind: ModelKind,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub split: SplitSpec,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(ExperimentConfig, PathBuf)> {
        let bytes = fs::read(path).map_err(io_at(path))?;
        let config: ExperimentConfig = serde_json::from_slice(&bytes)
            .map_err(|e| BenchError::Format { path: path.to_path_buf(), detail: e.to_string() })?;
        config.validate()?;
        Ok((config, manifest_io::manifest_dir(path)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.conditions.is_empty() {
            return Err(BenchError::Config("experiment needs at least one condition".into()));
        }
        if self.repeats == 0 {
            return Err(BenchError::Config("repeats must be at least 1".into()));
        }
        let mut stems: Vec<(String, &str)> = Vec::new();
        for cond in &self.conditions {
            if let Some(policy) = &cond.policy {
                policy.validate()?;
            }
            let stem = sanitize(&cond.name);
            if let Some((_, earlier)) = stems.iter().find(|(s, _)| *s == stem) {
                return Err(BenchError::Config(if *earlier == cond.name {
                    format!("duplicate condition name \"{}\"", cond.name)
                } else {
                    format!(
                        "condition names \"{}\" and \"{}\" collide as file stem \"{stem}\"",
                        earlier, cond.name
                    )
                }));
            }
            stems.push((stem, &cond.name));
        }
        if !(self.split.fraction > 0.0 && self.split.fraction < 1.0) {
            return Err(BenchError::Config(format!(
                "split fraction must be strictly between 0 and 1, got {}",
                self.split.fraction
            )));
        }
        self.train.validate()?;
        Ok(())
    }
}

/// One completed training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub condition: String,
    pub run_index: u32,
    pub test_accuracy: f64,
    /// Absent when the manifest has no validation-tagged frames.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_accuracy: Option<f64>,
    /// Relative to the experiment's out_dir.
    pub history_path: String,
    /// `confusion[true][predicted]` on the test split.
    pub confusion: Vec<Vec<u64>>,
}

/// Persisted state of one (condition, run) cell. Failures are recorded so a
/// broken cell never aborts the rest of the matrix; resuming retries them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunRecord {
    Completed(RunResult),
    Failed { condition: String, run_index: u32, error: String },
}

/// Condition names become file stems; anything outside [A-Za-z0-9._-] maps
/// to '-'. Collisions are rejected by `ExperimentConfig::validate`.
pub fn sanitize(name: &str) -> String {
    let stem: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '-' })
        .collect();
    if stem.is_empty() {
        "condition".into()
    } else {
        stem
    }
}

/// Seed for one cell of the matrix, independently reproducible.
pub fn run_seed(base: u64, condition: &str, run_index: u32) -> u64 {
    base ^ stable_hash64(condition, &[run_index as u64])
}

fn run_file(out_dir: &Path, condition: &str, run_index: u32) -> PathBuf {
    out_dir.join("runs").join(format!("{}_{run_index}.json", sanitize(condition)))
}

fn history_rel(condition: &str, run_index: u32) -> String {
    format!("histories/{}_{run_index}.csv", sanitize(condition))
}

/// History CSV, one row per epoch.
pub fn write_history(path: &Path, history: &[EpochStats]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_at(parent))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| BenchError::Format {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let as_format_err =
        |e: csv::Error| BenchError::Format { path: path.to_path_buf(), detail: e.to_string() };
    w.write_record(["epoch", "phase", "train_loss", "train_acc", "test_acc"])
        .map_err(as_format_err)?;
    for row in history {
        w.write_record([
            row.epoch.to_string(),
            row.phase.as_str().to_string(),
            row.train_loss.to_string(),
            row.train_acc.to_string(),
            row.test_acc.to_string(),
        ])
        .map_err(as_format_err)?;
    }
    w.flush().map_err(io_at(path))?;
    Ok(())
}

fn write_record(path: &Path, record: &RunRecord) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_at(parent))?;
    }
    let mut text = serde_json::to_string_pretty(record)
        .map_err(|e| BenchError::Format { path: path.to_path_buf(), detail: e.to_string() })?;
    text.push('\n');
    fs::write(path, text).map_err(io_at(path))
}

/// The manifest a condition trains on: background swap first, then rate
/// subsampling. Returns the manifest together with the directory its
/// relative paths resolve against.
fn condition_manifest(
    base_manifest: &Manifest,
    base_dir: &Path,
    config_dir: &Path,
    cond: &Condition,
) -> Result<(Manifest, PathBuf)> {
    let (mut manifest, dir) = match &cond.background {
        Background::Original => (base_manifest.clone(), base_dir.to_path_buf()),
        Background::Composited { manifest } => {
            let path = config_dir.join(manifest);
            (manifest_io::load_manifest(&path)?, manifest_io::manifest_dir(&path))
        }
    };
    if let Some(fps) = cond.fps {
        manifest = subsample_manifest(&manifest, fps)?;
    }
    Ok((manifest, dir))
}

fn run_cell(
    base_manifest: &Manifest,
    base_dir: &Path,
    config_dir: &Path,
    config: &ExperimentConfig,
    cond: &Condition,
    run_index: u32,
    out_dir: &Path,
) -> Result<RunResult> {
    let (mut manifest, data_dir) =
        condition_manifest(base_manifest, base_dir, config_dir, cond)?;
    let seed = run_seed(config.seed, &cond.name, run_index);
    split_frames(&mut manifest, config.split.fraction, seed, config.split.mode)?;

    let provider = manifest_io::DiskProvider::new(&data_dir);
    let split = DataSplit::from_manifest(&manifest);
    let validation = frames_with_tag(&manifest, SplitTag::Validation);

    let mut model = build_model::<f32>(config.kind, &config.model, seed)?;
    let train_config = TrainConfig { seed, ..config.train.clone() };
    let history = train(&mut model, &split, &provider, cond.policy.as_ref(), &train_config)?;

    let test_eval = evaluate(&model, &split.test, &provider)?;
    let validation_accuracy = if validation.is_empty() {
        None
    } else {
        Some(evaluate(&model, &validation, &provider)?.accuracy)
    };

    let history_path = history_rel(&cond.name, run_index);
    write_history(&out_dir.join(&history_path), &history)?;

    Ok(RunResult {
        condition: cond.name.clone(),
        run_index,
        test_accuracy: test_eval.accuracy,
        validation_accuracy,
        history_path,
        confusion: test_eval.confusion,
    })
}

/// Runs the full matrix, reusing completed cells found under
/// `out_dir/runs/`. A cell that fails is recorded as `Failed` and the
/// matrix continues. Records come back in (condition, run) order.
pub fn run_experiment(
    config: &ExperimentConfig,
    config_dir: &Path,
    out_dir: &Path,
) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let manifest_path = config_dir.join(&config.manifest_path);
    let base_manifest = manifest_io::load_manifest(&manifest_path)?;
    let base_dir = manifest_io::manifest_dir(&manifest_path);

    let structural = validate_structure(&base_manifest);
    if !structural.is_empty() {
        return Err(BenchError::Config(format!(
            "manifest {} fails validation: {} (and {} more)",
            manifest_path.display(),
            structural[0],
            structural.len() - 1
        )));
    }
    fs::create_dir_all(out_dir.join("runs")).map_err(io_at(out_dir))?;

    let mut records = Vec::new();
    for cond in &config.conditions {
        for run_index in 0..config.repeats {
            let cell = run_file(out_dir, &cond.name, run_index);
            if let Ok(bytes) = fs::read(&cell) {
                if let Ok(record @ RunRecord::Completed(_)) = serde_json::from_slice(&bytes) {
                    eprintln!("[experiment] {} run {run_index}: reusing", cond.name);
                    records.push(record);
                    continue;
                }
            }
            eprintln!("[experiment] {} run {run_index}: training", cond.name);
            let record = match run_cell(
                &base_manifest,
                &base_dir,
                config_dir,
                config,
                cond,
                run_index,
                out_dir,
            ) {
                Ok(result) => RunRecord::Completed(result),
                Err(e) => RunRecord::Failed {
                    condition: cond.name.clone(),
                    run_index,
                    error: e.to_string(),
                },
            };
            write_record(&cell, &record)?;
            records.push(record);
        }
    }
    Ok(records)
}

/// Reads every persisted record under `out_dir/runs/`, in (condition, run)
/// order when `config` is given, otherwise in file-name order.
pub fn load_records(out_dir: &Path, config: Option<&ExperimentConfig>) -> Result<Vec<RunRecord>> {
    let runs_dir = out_dir.join("runs");
    let mut by_name: Vec<(String, RunRecord)> = Vec::new();
    let entries = fs::read_dir(&runs_dir).map_err(io_at(&runs_dir))?;
    for entry in entries {
        let entry = entry.map_err(io_at(&runs_dir))?;
        let path = entry.path();
        if path.extension().map_or(true, |e| e != "json") {
            continue;
        }
        let bytes = fs::read(&path).map_err(io_at(&path))?;
        let record = serde_json::from_slice(&bytes)
            .map_err(|e| BenchError::Format { path: path.clone(), detail: e.to_string() })?;
        by_name.push((entry.file_name().to_string_lossy().into_owned(), record));
    }
    if let Some(config) = config {
        let key = |r: &RunRecord| match r {
            RunRecord::Completed(res) => (res.condition.clone(), res.run_index),
            RunRecord::Failed { condition, run_index, .. } => (condition.clone(), *run_index),
        };
        let order: Vec<(String, u32)> = config
            .conditions
            .iter()
            .flat_map(|c| (0..config.repeats).map(move |r| (c.name.clone(), r)))
            .collect();
        by_name.sort_by_key(|(_, r)| {
            order.iter().position(|k| *k == key(r)).unwrap_or(usize::MAX)
        });
    } else {
        by_name.sort_by(|a, b| a.0.cmp(&b.0));
    }
    Ok(by_name.into_iter().map(|(_, r)| r).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccuracyColumn {
    Test,
    Validation,
}

impl AccuracyColumn {
    pub fn as_str(self) -> &'static str {
        match self {
            AccuracyColumn::Test => "test",
            AccuracyColumn::Validation => "validation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub condition: String,
    pub runs: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Comparison over one accuracy column: per-condition summaries plus the
/// significance test (ANOVA for three or more conditions, pooled t-test for
/// exactly two).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnComparison {
    pub column: String,
    pub groups: Vec<GroupSummary>,
    pub report: TestReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub test: ColumnComparison,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ColumnComparison>,
}

fn completed(records: &[RunRecord]) -> Vec<&RunResult> {
    records
        .iter()
        .filter_map(|r| match r {
            RunRecord::Completed(res) => Some(res),
            RunRecord::Failed { .. } => None,
        })
        .collect()
}

/// Groups the chosen column per condition, first-seen order.
fn column_groups(results: &[&RunResult], column: AccuracyColumn) -> Vec<RunGroup> {
    let mut groups: Vec<RunGroup> = Vec::new();
    for res in results {
        let value = match column {
            AccuracyColumn::Test => Some(res.test_accuracy),
            AccuracyColumn::Validation => res.validation_accuracy,
        };
        let Some(value) = value else { continue };
        match groups.iter_mut().find(|g| g.name == res.condition) {
            Some(g) => g.accuracies.push(value),
            None => groups.push(RunGroup::new(res.condition.clone(), vec![value])),
        }
    }
    groups
}

pub fn compare(results: &[&RunResult], column: AccuracyColumn) -> Result<ColumnComparison> {
    let groups = column_groups(results, column);
    if groups.len() < 2 {
        return Err(BenchError::Config(format!(
            "comparison on the {} column needs at least 2 conditions, found {}",
            column.as_str(),
            groups.len()
        )));
    }
    for g in &groups {
        if g.accuracies.len() < 2 {
            return Err(BenchError::TooFewRuns {
                condition: g.name.clone(),
                got: g.accuracies.len(),
            });
        }
    }
    let report = run_test(&groups)?;
    let summaries = groups
        .iter()
        .map(|g| {
            let (mean, sd) = mean_and_sd(&g.accuracies).expect("group size checked above");
            GroupSummary { condition: g.name.clone(), runs: g.accuracies.len(), mean, sd }
        })
        .collect();
    Ok(ColumnComparison { column: column.as_str().into(), groups: summaries, report })
}

/// Both columns at once. The validation column is omitted when no run
/// recorded one; a partially recorded column is still an error.
pub fn full_comparison(results: &[&RunResult]) -> Result<ComparisonReport> {
    let test = compare(results, AccuracyColumn::Test)?;
    let validation = if results.iter().all(|r| r.validation_accuracy.is_none()) {
        None
    } else {
        Some(compare(results, AccuracyColumn::Validation)?)
    };
    Ok(ComparisonReport { test, validation })
}

fn fmt_test_line(report: &TestReport) -> String {
    let kind = match report.kind {
        signbench_core::stats::TestKind::Anova => "ANOVA",
        signbench_core::stats::TestKind::TTest => "pooled t-test",
    };
    let df = match report.df2 {
        Some(df2) => format!("df = ({}, {})", report.df1, df2),
        None => format!("df = {}", report.df1),
    };
    let degenerate = if report.degenerate { ", degenerate (zero within-group variance)" } else { "" };
    format!(
        "{kind}: statistic = {:.6}, {df}, p = {:.6}{degenerate}",
        report.statistic, report.p_value
    )
}

/// Writes results.csv, per-run confusion CSVs and PGM heatmaps,
/// comparison.json (when a comparison is possible), and summary.md.
/// Returns the comparison when one was written.
pub fn emit_report(records: &[RunRecord], out_dir: &Path) -> Result<Option<ComparisonReport>> {
    fs::create_dir_all(out_dir).map_err(io_at(out_dir))?;
    let results = completed(records);

    let csv_path = out_dir.join("results.csv");
    let as_format_err =
        |e: csv::Error| BenchError::Format { path: csv_path.clone(), detail: e.to_string() };
    let mut w = csv::Writer::from_path(&csv_path).map_err(as_format_err)?;
    w.write_record(["condition", "run", "test_accuracy", "validation_accuracy"])
        .map_err(as_format_err)?;
    for res in &results {
        w.write_record([
            res.condition.clone(),
            res.run_index.to_string(),
            res.test_accuracy.to_string(),
            res.validation_accuracy.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(as_format_err)?;
    }
    w.flush().map_err(io_at(&csv_path))?;

    for res in &results {
        let stem = format!("{}_{}", sanitize(&res.condition), res.run_index);
        let dir = out_dir.join("confusion");
        fs::create_dir_all(&dir).map_err(io_at(&dir))?;
        let csv_out = dir.join(format!("{stem}.csv"));
        fs::write(&csv_out, render::confusion_to_csv(&res.confusion)).map_err(io_at(&csv_out))?;
        image_io::write_mask(
            &dir.join(format!("{stem}.pgm")),
            &render::confusion_heatmap(&res.confusion)?,
        )?;
    }

    let comparison = if results.is_empty() { None } else { full_comparison(&results).ok() };
    if let Some(report) = &comparison {
        let json_path = out_dir.join("comparison.json");
        let mut text = serde_json::to_string_pretty(report).map_err(|e| BenchError::Format {
            path: json_path.clone(),
            detail: e.to_string(),
        })?;
        text.push('\n');
        fs::write(&json_path, text).map_err(io_at(&json_path))?;
    }

    let mut md = String::from("# Experiment report\n\n");
    if results.is_empty() {
        md.push_str("No completed runs.\n");
    } else {
        md.push_str("| Condition | Runs | Test set | Validation set |\n");
        md.push_str("| --- | --- | --- | --- |\n");
        for g in column_groups(&results, AccuracyColumn::Test) {
            let test_cell = match mean_and_sd(&g.accuracies) {
                Ok((m, s)) => format!("{m:.4} ± {s:.4}"),
                Err(_) => format!("{:.4}", g.accuracies[0]),
            };
            let val: Vec<f64> = results
                .iter()
                .filter(|r| r.condition == g.name)
                .filter_map(|r| r.validation_accuracy)
                .collect();
            let val_cell = match val.len() {
                0 => "—".to_string(),
                1 => format!("{:.4}", val[0]),
                _ => {
                    let (m, s) = mean_and_sd(&val).expect("len >= 2");
                    format!("{m:.4} ± {s:.4}")
                }
            };
            md.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                g.name,
                g.accuracies.len(),
                test_cell,
                val_cell
            ));
        }
        md.push('\n');
        match &comparison {
            Some(report) => {
                md.push_str(&format!("Test column — {}\n", fmt_test_line(&report.test.report)));
                if let Some(validation) = &report.validation {
                    md.push_str(&format!(
                        "Validation column — {}\n",
                        fmt_test_line(&validation.report)
                    ));
                }
            }
            None => md.push_str("No comparison: need at least 2 conditions with 2 runs each.\n"),
        }
    }
    let failures: Vec<&RunRecord> =
        records.iter().filter(|r| matches!(r, RunRecord::Failed { .. })).collect();
    if !failures.is_empty() {
        md.push_str("\n## Failed runs\n\n");
        for record in failures {
            if let RunRecord::Failed { condition, run_index, error } = record {
                md.push_str(&format!("- {condition} run {run_index}: {error}\n"));
            }
        }
    }
    let md_path = out_dir.join("summary.md");
    fs::write(&md_path, md).map_err(io_at(&md_path))?;

    Ok(comparison)
}

/// Replaces every frame's background with a pool image chosen by seeded
/// draw, compositing through the frame's mask. Masks are copied so the new
/// manifest under `out_dir` is self-contained. Backgrounds are resized to
/// the frame when dimensions differ. Returns the new manifest path.
pub fn prepare_backgrounds(
    manifest_path: &Path,
    pool_dir: &Path,
    seed: u64,
    out_dir: &Path,
) -> Result<PathBuf> {
    let manifest = manifest_io::load_manifest(manifest_path)?;
    let base = manifest_io::manifest_dir(manifest_path);

    for (_, _, frame) in manifest.frames() {
        if frame.mask.is_none() {
            return Err(BenchError::MissingMask { image: frame.image.clone() });
        }
    }

    let mut pool_paths: Vec<PathBuf> = fs::read_dir(pool_dir)
        .map_err(io_at(pool_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")))
        .collect();
    pool_paths.sort();
    if pool_paths.is_empty() {
        return Err(BenchError::Config(format!(
            "background pool {} contains no .ppm files",
            pool_dir.display()
        )));
    }
    let pool: Vec<_> = pool_paths.iter().map(|p| image_io::read_image(p)).collect::<Result<_>>()?;

    let mut rng = RngState::new(seed);
    let mut out_manifest = manifest.clone();
    for clip in &mut out_manifest.clips {
        for frame in &mut clip.frames {
            let fg = image_io::read_image(&base.join(&frame.image))?;
            let mask_rel = frame.mask.as_ref().expect("checked above");
            let mask = image_io::read_mask(&base.join(mask_rel))?;
            let chosen = choose_background(&pool, &mut rng)?;
            let composited = if (chosen.width(), chosen.height()) != (fg.width(), fg.height()) {
                composite(&fg, &mask, &resize_bilinear(chosen, fg.width(), fg.height())?)?
            } else {
                composite(&fg, &mask, chosen)?
            };

            let image_rel = format!("frames/{}", frame.image);
            let new_mask_rel = format!("masks/{}", mask_rel);
            image_io::write_image(&out_dir.join(&image_rel), &composited)?;
            image_io::write_mask(&out_dir.join(&new_mask_rel), &mask)?;
            frame.image = image_rel;
            frame.mask = Some(new_mask_rel);
        }
    }
    let out_path = out_dir.join("manifest.json");
    manifest_io::save_manifest(&out_path, &out_manifest)?;
    Ok(out_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use signbench_core::Mask;

    fn result(cond: &str, run: u32, test: f64, val: Option<f64>) -> RunRecord {
        RunRecord::Completed(RunResult {
            condition: cond.into(),
            run_index: run,
            test_accuracy: test,
            validation_accuracy: val,
            history_path: format!("histories/{cond}_{run}.csv"),
            confusion: vec![vec![2, 0], vec![0, 2]],
        })
    }

    #[test]
    fn seeds_are_distinct_across_the_matrix() {
        let mut seen = std::collections::BTreeSet::new();
        for cond in ["a", "b", "c"] {
            for run in 0..3 {
                assert!(seen.insert(run_seed(9, cond, run)), "{cond}/{run} collided");
            }
        }
    }

    #[test]
    fn sanitize_keeps_safe_chars_only() {
        assert_eq!(sanitize("zoom 0.1 + flip/rot"), "zoom-0.1---flip-rot");
        assert_eq!(sanitize(""), "condition");
    }

    #[test]
    fn colliding_condition_stems_are_rejected() {
        let mut config = ExperimentConfig {
            manifest_path: "m.json".into(),
            conditions: vec![
                Condition {
                    name: "a b".into(),
                    fps: None,
                    policy: None,
                    background: Background::Original,
                },
                Condition {
                    name: "a/b".into(),
                    fps: None,
                    policy: None,
                    background: Background::Original,
                },
            ],
            repeats: 1,
            seed: 0,
            kind: ModelKind::Single,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            split: SplitSpec::default(),
        };
        assert!(matches!(config.validate(), Err(BenchError::Config(_))));
        config.conditions[1].name = "b".into();
        config.validate().unwrap();
    }

    #[test]
    fn two_conditions_compare_with_a_t_test() {
        let records = vec![
            result("a", 0, 0.9, Some(0.8)),
            result("a", 1, 0.92, Some(0.81)),
            result("b", 0, 0.7, Some(0.6)),
            result("b", 1, 0.72, Some(0.59)),
        ];
        let report = full_comparison(&completed(&records)).unwrap();
        assert_eq!(report.test.report.kind, signbench_core::stats::TestKind::TTest);
        assert_eq!(report.test.groups.len(), 2);
        let validation = report.validation.unwrap();
        assert_eq!(validation.groups[0].runs, 2);
    }

    #[test]
    fn three_identical_conditions_give_f_zero_p_one() {
        let mut records = Vec::new();
        for cond in ["a", "b", "c"] {
            for run in 0..2 {
                records.push(result(cond, run, if run == 0 { 0.5 } else { 0.7 }, None));
            }
        }
        let report = full_comparison(&completed(&records)).unwrap();
        assert_eq!(report.test.report.kind, signbench_core::stats::TestKind::Anova);
        assert_eq!(report.test.report.statistic, 0.0);
        assert_eq!(report.test.report.p_value, 1.0);
        assert!(report.validation.is_none());
    }

    #[test]
    fn single_run_condition_is_too_few() {
        let records = vec![
            result("a", 0, 0.9, None),
            result("a", 1, 0.91, None),
            result("b", 0, 0.7, None),
        ];
        match compare(&completed(&records), AccuracyColumn::Test) {
            Err(BenchError::TooFewRuns { condition, got: 1 }) => assert_eq!(condition, "b"),
            other => panic!("expected TooFewRuns, got {other:?}"),
        }
    }

    #[test]
    fn empty_records_emit_header_only_csv_and_no_comparison() {
        let dir = tempfile::tempdir().unwrap();
        let comparison = emit_report(&[], dir.path()).unwrap();
        assert!(comparison.is_none());
        let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(csv.trim(), "condition,run,test_accuracy,validation_accuracy");
        assert!(!dir.path().join("comparison.json").exists());
        assert!(dir.path().join("summary.md").exists());
    }

    #[test]
    fn report_artifacts_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            result("a", 0, 0.9, None),
            result("a", 1, 0.95, None),
            result("b", 0, 0.7, None),
            result("b", 1, 0.75, None),
        ];
        let comparison = emit_report(&records, dir.path()).unwrap().unwrap();
        let parsed: ComparisonReport = serde_json::from_slice(
            &std::fs::read(dir.path().join("comparison.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(parsed, comparison);
        assert!(dir.path().join("confusion/a_0.csv").exists());
        assert!(dir.path().join("confusion/b_1.pgm").exists());
        let summary = std::fs::read_to_string(dir.path().join("summary.md")).unwrap();
        assert!(summary.contains("| a | 2 | 0.9250 ± 0.0354 | — |"), "{summary}");
    }

    #[test]
    fn failed_runs_are_listed_not_compared() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            result("a", 0, 0.9, None),
            result("a", 1, 0.95, None),
            RunRecord::Failed {
                condition: "b".into(),
                run_index: 0,
                error: "provider: no such file".into(),
            },
            result("b", 0, 0.7, None),
            result("b", 1, 0.75, None),
        ];
        emit_report(&records, dir.path()).unwrap();
        let summary = std::fs::read_to_string(dir.path().join("summary.md")).unwrap();
        assert!(summary.contains("## Failed runs"));
        assert!(summary.contains("- b run 0: provider: no such file"));
    }

    #[test]
    fn prepare_backgrounds_requires_masks() {
        let dir = tempfile::tempdir().unwrap();
        let data = crate::synth::solid_colors(
            8,
            &[(SplitTag::Train, 1)],
            3,
        );
        let manifest_path = data.write(&dir.path().join("src")).unwrap();
        let pool_dir = dir.path().join("pool");
        std::fs::create_dir_all(&pool_dir).unwrap();
        image_io::write_image(
            &pool_dir.join("white.ppm"),
            &signbench_core::Image::filled(8, 8, [255; 3]).unwrap(),
        )
        .unwrap();
        match prepare_backgrounds(&manifest_path, &pool_dir, 1, &dir.path().join("out")) {
            Err(BenchError::MissingMask { .. }) => {}
            other => panic!("expected MissingMask, got {other:?}"),
        }
    }

    #[test]
    fn prepare_backgrounds_composites_against_the_pool() {
        let dir = tempfile::tempdir().unwrap();
        let mut data = crate::synth::solid_colors(8, &[(SplitTag::Train, 1)], 3);
        // Mask: left half person (opaque), right half background.
        let mut mask_data = vec![0u8; 64];
        for y in 0..8 {
            for x in 0..4 {
                mask_data[y * 8 + x] = 255;
            }
        }
        let mask = Mask::new(8, 8, mask_data).unwrap();
        for clip in &mut data.manifest.clips {
            for frame in &mut clip.frames {
                let rel = frame.image.replace("frames/", "masks/").replace(".ppm", ".pgm");
                data.masks.insert(rel.clone(), mask.clone());
                frame.mask = Some(rel);
            }
        }
        let manifest_path = data.write(&dir.path().join("src")).unwrap();
        let pool_dir = dir.path().join("pool");
        image_io::write_image(
            &pool_dir.join("white.ppm"),
            &signbench_core::Image::filled(8, 8, [255; 3]).unwrap(),
        )
        .unwrap();

        let out = prepare_backgrounds(&manifest_path, &pool_dir, 1, &dir.path().join("out"))
            .unwrap();
        let out_manifest = manifest_io::load_manifest(&out).unwrap();
        let out_base = manifest_io::manifest_dir(&out);
        for (_, _, frame) in out_manifest.frames() {
            let img = image_io::read_image(&out_base.join(&frame.image)).unwrap();
            for y in 0..8 {
                assert_eq!(img.pixel(6, y), [255, 255, 255], "background half replaced");
                assert_ne!(img.pixel(1, y), [255, 255, 255], "person half kept");
            }
        }
        // Deterministic: running again into a fresh directory matches byte-wise.
        let out2 = prepare_backgrounds(&manifest_path, &pool_dir, 1, &dir.path().join("out2"))
            .unwrap();
        let a = std::fs::read(&out).unwrap();
        let b = std::fs::read(&out2).unwrap();
        assert_eq!(a, b);
    }
}
