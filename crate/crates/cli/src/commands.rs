//! Subcommand implementations. Each writes its artifacts under an output
//! directory; none of them record timestamps or depend on worker count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use periocular_core::eval::{compute_det, DetCurve, DetSummary, Protocol, ScoreSet};
use periocular_core::fusion::{folds_by_user_parity, mean_rule, two_fold_fusion};
use periocular_core::io::save_gray_png;
use periocular_core::metrics::Metric;
use periocular_core::sift;
use periocular_neural::{layer_sweep, write_sweep_csv};
use serde::Serialize;

use crate::cache::Cache;
use crate::config::{ExperimentConfig, ExtractorSpec, FoldRule, System};
use crate::error::{CliError, Result, StageExt};
use crate::manifest::{ingest_manifest, Manifest, SkippedRecord};
use crate::pipeline::{
    extract_features, preprocess, score_system, Features, ImageFailure, NeuralContext, Preprocessed,
};
use crate::report::{self, file_stem, score_path, write_systems, SummaryRow};

pub const CACHE_DIR: &str = "cache";

/// Inputs shared by every pipeline subcommand.
pub struct Context {
    pub manifest: Manifest,
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub cache: Cache,
}

impl Context {
    /// `out` overrides the config's output directory.
    pub fn load(manifest: &Path, config: Option<&Path>, out: Option<&Path>) -> Result<Self> {
        let config = match config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let out = out
            .map(Path::to_path_buf)
            .or_else(|| config.out.clone())
            .ok_or_else(|| {
                CliError::Usage("no output directory (--out or `out` in the config)".into())
            })?;
        let manifest = ingest_manifest(manifest)?;
        std::fs::create_dir_all(&out).stage("output")?;
        let cache = Cache::new(out.join(CACHE_DIR));
        Ok(Context {
            manifest,
            config,
            out,
            cache,
        })
    }

    fn neural(&self, pre: &Preprocessed) -> Result<NeuralContext> {
        let n = self
            .config
            .neural
            .as_ref()
            .ok_or_else(|| CliError::Usage("no [neural] model configured".into()))?;
        NeuralContext::new(&n.model, pre)
    }

    fn dir(&self, name: &str) -> Result<PathBuf> {
        let d = self.out.join(name);
        std::fs::create_dir_all(&d).stage("output")?;
        Ok(d)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::internal("output", e))?;
    text.push('\n');
    std::fs::write(path, text).stage("output")
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> periocular_core::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::internal("output", e))?;
    std::fs::write(path, buf).stage("output")
}

/// Writes `ROI PNGs` to `<out>/roi` and returns the preprocessed set.
pub fn cmd_preprocess(ctx: &Context) -> Result<Preprocessed> {
    let pre = preprocess(&ctx.manifest, &ctx.config, &ctx.cache)?;
    let dir = ctx.dir("roi")?;
    for item in &pre.items {
        let path = dir.join(format!("{}.png", image_stem(item.image_id())));
        save_gray_png(&item.roi.map(|v| v.clamp(0.0, 1.0)), &path)
            .map_err(|e| CliError::internal("preprocess", e))?;
    }
    Ok(pre)
}

/// Flat file name for an image path.
pub fn image_stem(image_id: &str) -> String {
    let stem = image_id.rsplit_once('.').map_or(image_id, |(s, _)| s);
    stem.replace(['/', '\\', ':'], "_")
}

/// Features of one extractor under `<out>/features/<extractor>/`.
pub fn cmd_extract(ctx: &Context, spec: &ExtractorSpec) -> Result<usize> {
    let pre = preprocess(&ctx.manifest, &ctx.config, &ctx.cache)?;
    let neural = match spec {
        ExtractorSpec::Neural(_) => Some(ctx.neural(&pre)?),
        _ => None,
    };
    let features = extract_features(&pre, spec, &ctx.config, &ctx.cache, neural.as_ref())?;
    let dir = ctx.dir("features")?.join(file_stem(&spec.to_string()));
    std::fs::create_dir_all(&dir).stage("output")?;
    match &features {
        Features::Vectors(v) => {
            for (item, fv) in pre.items.iter().zip(v) {
                let path = dir.join(format!("{}.bin", image_stem(item.image_id())));
                std::fs::write(path, fv.encode(item.image_id())).stage("output")?;
            }
        }
        Features::Keypoints(k) => {
            for (item, set) in pre.items.iter().zip(k) {
                let path = dir.join(format!("{}.jsonl", image_stem(item.image_id())));
                write_with(&path, |buf| sift::write_jsonl(&set.keypoints, buf))?;
            }
        }
    }
    Ok(features.len())
}

#[derive(Debug, Clone, Serialize)]
struct DetFile<'a> {
    system: &'a str,
    #[serde(flatten)]
    summary: DetSummary,
    frr_at_far: &'a [(f64, f64)],
}

/// Writes `scores/<stem>.csv`, `det/<stem>.csv` and `det/<stem>.json`.
pub fn emit_scores(out: &Path, scores: &ScoreSet) -> Result<DetCurve> {
    let det = compute_det(scores).stage("evaluate")?;
    let stem = file_stem(&scores.comparator_id);
    std::fs::create_dir_all(out.join(report::SCORES_DIR)).stage("output")?;
    std::fs::create_dir_all(out.join("det")).stage("output")?;
    write_with(&score_path(out, &scores.comparator_id), |b| {
        scores.write_csv(b)
    })?;
    write_with(&out.join("det").join(format!("{stem}.csv")), |b| {
        det.write_csv(b)
    })?;
    write_json(
        &out.join("det").join(format!("{stem}.json")),
        &DetFile {
            system: &scores.comparator_id,
            summary: det.summary(),
            frr_at_far: &det.frr_at_far,
        },
    )?;
    Ok(det)
}

/// Scores the given systems, sharing preprocessing and features.
fn score_systems(
    ctx: &Context,
    pre: &Preprocessed,
    protocol: &Protocol,
    systems: &[System],
) -> Result<Vec<ScoreSet>> {
    let needs_neural = systems
        .iter()
        .any(|s| matches!(s.extractor, ExtractorSpec::Neural(_)));
    let neural = if needs_neural {
        Some(ctx.neural(pre)?)
    } else {
        None
    };
    let ids: Vec<&str> = pre.items.iter().map(|i| i.image_id()).collect();
    let trials = protocol.trials.trials();
    let mut features: BTreeMap<ExtractorSpec, Features> = BTreeMap::new();
    let mut out = Vec::with_capacity(systems.len());
    for system in systems {
        if !features.contains_key(&system.extractor) {
            log::info!("extracting {}", system.extractor);
            let f = extract_features(
                pre,
                &system.extractor,
                &ctx.config,
                &ctx.cache,
                neural.as_ref(),
            )?;
            features.insert(system.extractor.clone(), f);
        }
        log::info!("scoring {}", system.id());
        out.push(score_system(
            system,
            &ids,
            &features[&system.extractor],
            &trials,
            &ctx.config,
        )?);
    }
    Ok(out)
}

/// One system selected on the command line.
pub fn cmd_score(ctx: &Context, system: &System) -> Result<DetCurve> {
    let pre = preprocess(&ctx.manifest, &ctx.config, &ctx.cache)?;
    let protocol = pre.protocol()?;
    let scores = score_systems(ctx, &pre, &protocol, std::slice::from_ref(system))?;
    emit_scores(&ctx.out, &scores[0])
}

/// EER of every layer of the configured network; writes `sweep.csv`.
pub fn cmd_sweep(ctx: &Context, metrics: &[Metric]) -> Result<()> {
    let pre = preprocess(&ctx.manifest, &ctx.config, &ctx.cache)?;
    sweep(ctx, &pre, metrics)
}

fn sweep(ctx: &Context, pre: &Preprocessed, metrics: &[Metric]) -> Result<()> {
    let n = ctx.neural(pre)?;
    let dataset: Vec<_> = pre
        .items
        .iter()
        .map(|i| (i.roi.clone(), i.record.sample_info()))
        .collect();
    let rows = layer_sweep(&n.net, &dataset, metrics).stage("sweep")?;
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf).stage("sweep")?;
    std::fs::write(ctx.out.join("sweep.csv"), buf).stage("output")
}

/// Two-fold fusion of score sets over the same trials. Writes the fused
/// scores and the two fold models; returns the fused set.
pub fn fuse(
    out: &Path,
    sets: &[ScoreSet],
    protocol: &Protocol,
    rule: FoldRule,
    label: &str,
) -> Result<ScoreSet> {
    let users = protocol.user_index();
    let folds = match rule {
        FoldRule::UserParity => {
            folds_by_user_parity(&sets[0], |id| users.get(id).copied()).stage("fusion")?
        }
    };
    let fusion = two_fold_fusion(sets, &folds).stage("fusion")?;
    let dir = out.join("fusion");
    std::fs::create_dir_all(&dir).stage("output")?;
    for (k, model) in fusion.models.iter().enumerate() {
        let mut text = model.to_json();
        text.push('\n');
        std::fs::write(
            dir.join(format!("{}.fold{}.json", file_stem(label), k + 1)),
            text,
        )
        .stage("output")?;
    }
    let mut fused = fusion.fused;
    fused.comparator_id = label.to_owned();
    emit_scores(out, &fused)?;
    Ok(fused)
}

/// Fusion of existing score files (the `fuse` subcommand).
pub fn cmd_fuse(ctx: &Context, members: &[String], label: &str) -> Result<ScoreSet> {
    let sets = members
        .iter()
        .map(|m| report::read_scores(&score_path(&ctx.out, m)))
        .collect::<Result<Vec<_>>>()?;
    let protocol = periocular_core::eval::build_trials(&ctx.manifest.samples());
    fuse(&ctx.out, &sets, &protocol, ctx.config.folds, label)
}

#[derive(Debug, Serialize)]
struct RunReport<'a> {
    manifest_records: usize,
    skipped_records: &'a [SkippedRecord],
    failed_images: &'a [ImageFailure],
    users: usize,
    users_left_out: usize,
    genuine_trials: usize,
    impostor_trials: usize,
    target_radius: &'a BTreeMap<String, f64>,
    systems: &'a [String],
    seed: Option<u64>,
    config: &'a ExperimentConfig,
}

/// Every configured experiment, the optional sweep and fusion, then the
/// summary table.
pub fn cmd_run(ctx: &Context, seed: Option<u64>) -> Result<Vec<SummaryRow>> {
    let cfg = &ctx.config;
    let pre = preprocess(&ctx.manifest, cfg, &ctx.cache)?;
    let protocol = pre.protocol()?;
    let systems = cfg.systems()?;
    let sets = score_systems(ctx, &pre, &protocol, &systems)?;
    let mut rows: Vec<String> = Vec::new();
    for s in &sets {
        emit_scores(&ctx.out, s)?;
        rows.push(s.comparator_id.clone());
    }

    if let Some(n) = cfg.neural.as_ref().filter(|n| n.sweep) {
        log::info!("layer sweep");
        sweep(ctx, &pre, &n.sweep_metrics)?;
    }

    let members = cfg.fusion_members()?;
    if !members.is_empty() {
        let chosen: Vec<ScoreSet> = members
            .iter()
            .map(|m| {
                sets.iter()
                    .find(|s| &s.comparator_id == m)
                    .cloned()
                    .expect("validated member")
            })
            .collect();
        let fused = fuse(&ctx.out, &chosen, &protocol, cfg.folds, &cfg.fusion_label())?;
        rows.push(fused.comparator_id);
        if cfg.mean_rule_baseline {
            let mut mean = mean_rule(&chosen).stage("fusion")?;
            mean.comparator_id = cfg.mean_label();
            emit_scores(&ctx.out, &mean)?;
            rows.push(mean.comparator_id);
        }
    }

    write_systems(&ctx.out, &rows)?;
    write_json(
        &ctx.out.join("run_report.json"),
        &RunReport {
            manifest_records: ctx.manifest.records.len(),
            skipped_records: &ctx.manifest.skipped,
            failed_images: &pre.failures,
            users: protocol.users.len(),
            users_left_out: protocol.skipped_users.len(),
            genuine_trials: protocol.trials.genuine.len(),
            impostor_trials: protocol.trials.impostor.len(),
            target_radius: &pre.target_radius,
            systems: &rows,
            seed,
            config: cfg,
        },
    )?;
    report::write_report(&ctx.out)
}
