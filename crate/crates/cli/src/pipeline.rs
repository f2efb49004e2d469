//! Image preprocessing, feature extraction and trial scoring for configured
//! systems. Parallel stages collect results in input order, so outputs do not
//! depend on the worker count.

use std::collections::BTreeMap;
use std::path::Path;

use periocular_core::descriptors::{hog_descriptor, lbp_descriptor};
use periocular_core::eval::{
    build_trials, compute_det, score_trials, DetCurve, Protocol, SampleInfo, ScoreSet, Trial,
};
use periocular_core::features::FeatureVector;
use periocular_core::imageproc::{
    clahe, mask_iris, mean_subtract, normalize_and_crop, resize_bicubic, to_grayscale,
};
use periocular_core::io::{decode_mean, decode_rgb, encode_mean};
use periocular_core::sift::{self, KeypointSet};
use periocular_core::GrayImage;
use periocular_neural::{load_network, NetworkHandle};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{key_of, sha256_hex, Cache};
use crate::config::{ExperimentConfig, ExtractorSpec, System};
use crate::error::{CliError, Result, StageExt};
use crate::manifest::{Manifest, ManifestRecord};

/// Share of failing images above which a run aborts.
pub const MAX_FAILED_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFailure {
    pub image_id: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct RoiItem {
    pub record: ManifestRecord,
    pub roi: GrayImage,
    /// Cache key of the ROI; derived artifacts extend it.
    pub key: String,
}

impl RoiItem {
    pub fn image_id(&self) -> &str {
        &self.record.image_path
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub items: Vec<RoiItem>,
    pub failures: Vec<ImageFailure>,
    pub target_radius: BTreeMap<String, f64>,
}

impl Preprocessed {
    pub fn samples(&self) -> Vec<SampleInfo> {
        self.items.iter().map(|i| i.record.sample_info()).collect()
    }

    pub fn protocol(&self) -> Result<Protocol> {
        let p = build_trials(&self.samples());
        for u in &p.skipped_users {
            log::warn!("user {u} has fewer than two images; left out of the protocol");
        }
        if p.users.len() < 2 {
            return Err(CliError::data(
                "protocol",
                format!(
                    "need at least 2 users with 2 images, found {}",
                    p.users.len()
                ),
            ));
        }
        Ok(p)
    }
}

pub fn distance_key(d: f64) -> String {
    format!("{d}")
}

/// Configured target radius per distance group, falling back to the mean
/// annotated sclera radius of the group.
pub fn target_radii(manifest: &Manifest, cfg: &ExperimentConfig) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in &manifest.records {
        let e = sums.entry(distance_key(r.distance_m)).or_default();
        e.0 += r.sclera_r;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (s, n))| {
            let t = cfg
                .preprocess
                .target_radius
                .get(&k)
                .copied()
                .unwrap_or(s / n as f64);
            (k, t)
        })
        .collect()
}

#[derive(Serialize)]
struct RoiParams<'a> {
    annotation: &'a periocular_core::EyeAnnotation,
    target_radius: f64,
    clahe: &'a periocular_core::imageproc::ClaheParams,
    mask_iris: bool,
}

/// Grayscale, sclera normalisation and crop, CLAHE, iris mask. The result is
/// rounded to `f32` precision, the precision of the cache.
pub fn preprocess_image(
    bytes: &[u8],
    rec: &ManifestRecord,
    target_radius: f64,
    cfg: &ExperimentConfig,
) -> periocular_core::Result<GrayImage> {
    let ann = rec.annotation();
    let gray = to_grayscale(&decode_rgb(bytes)?)?;
    let roi = normalize_and_crop(&gray, &ann, target_radius)?;
    let enhanced = clahe(roi.image(), &cfg.preprocess.clahe);
    let mut roi = roi.with_image(enhanced)?;
    if cfg.preprocess.mask_iris {
        roi = mask_iris(&roi, &ann);
    }
    Ok(roi.into_image().map(|v| v as f32 as f64))
}

fn preprocess_record(
    manifest: &Manifest,
    rec: &ManifestRecord,
    target: f64,
    cfg: &ExperimentConfig,
    cache: &Cache,
) -> std::result::Result<RoiItem, String> {
    let path = manifest.image_path(rec);
    let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let params = RoiParams {
        annotation: &rec.annotation(),
        target_radius: target,
        clahe: &cfg.preprocess.clahe,
        mask_iris: cfg.preprocess.mask_iris,
    };
    let key = key_of(&["roi", &sha256_hex(&bytes)], &params);
    if let Some(hit) = cache
        .get("roi", &key, "bin")
        .and_then(|b| decode_mean(&b).ok())
    {
        return Ok(RoiItem {
            record: rec.clone(),
            roi: hit,
            key,
        });
    }
    let roi = preprocess_image(&bytes, rec, target, cfg).map_err(|e| e.to_string())?;
    cache
        .put("roi", &key, "bin", &encode_mean(&roi))
        .map_err(|e| e.to_string())?;
    Ok(RoiItem {
        record: rec.clone(),
        roi,
        key,
    })
}

pub fn preprocess(
    manifest: &Manifest,
    cfg: &ExperimentConfig,
    cache: &Cache,
) -> Result<Preprocessed> {
    let targets = target_radii(manifest, cfg);
    let results: Vec<std::result::Result<RoiItem, String>> = manifest
        .records
        .par_iter()
        .map(|rec| {
            preprocess_record(
                manifest,
                rec,
                targets[&distance_key(rec.distance_m)],
                cfg,
                cache,
            )
        })
        .collect();
    let mut items = Vec::new();
    let mut failures = Vec::new();
    for (rec, r) in manifest.records.iter().zip(results) {
        match r {
            Ok(item) => items.push(item),
            Err(error) => {
                log::warn!("{}: {error}", rec.image_path);
                failures.push(ImageFailure {
                    image_id: rec.image_path.clone(),
                    error,
                });
            }
        }
    }
    let total = manifest.records.len();
    if total == 0 {
        return Err(CliError::data(
            "preprocess",
            "manifest has no usable records",
        ));
    }
    if failures.len() as f64 > MAX_FAILED_FRACTION * total as f64 {
        let lines: Vec<String> = failures
            .iter()
            .map(|f| format!("{}: {}", f.image_id, f.error))
            .collect();
        return Err(CliError::data(
            "preprocess",
            format!(
                "{} of {total} images failed (limit 5%):\n{}",
                failures.len(),
                lines.join("\n")
            ),
        ));
    }
    Ok(Preprocessed {
        items,
        failures,
        target_radius: targets,
    })
}

/// Network plus the dataset-level inputs it needs: ROIs resized to the
/// network input and reduced by their pixel-wise mean.
pub struct NeuralContext {
    pub net: NetworkHandle,
    pub model_hash: String,
    pub mean: GrayImage,
    pub inputs: Vec<GrayImage>,
}

impl NeuralContext {
    pub fn new(model: &Path, pre: &Preprocessed) -> Result<Self> {
        let bytes = std::fs::read(model)
            .map_err(|e| CliError::data("neural", format!("{}: {e}", model.display())))?;
        let net = load_network(model).stage("neural")?;
        let resized = pre
            .items
            .par_iter()
            .map(|i| resize_bicubic(&i.roi, net.input_width, net.input_height))
            .collect::<periocular_core::Result<Vec<_>>>()
            .stage("neural")?;
        let (inputs, mean) = mean_subtract(&resized).stage("neural")?;
        Ok(NeuralContext {
            net,
            model_hash: sha256_hex(&bytes),
            mean,
            inputs,
        })
    }
}

#[derive(Debug, Clone)]
pub enum Features {
    Vectors(Vec<FeatureVector>),
    Keypoints(Vec<KeypointSet>),
}

impl Features {
    pub fn len(&self) -> usize {
        match self {
            Features::Vectors(v) => v.len(),
            Features::Keypoints(k) => k.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn vector_feature(
    item: &RoiItem,
    spec: &ExtractorSpec,
    extra: &str,
    cache: &Cache,
    compute: impl FnOnce() -> Result<FeatureVector>,
) -> Result<FeatureVector> {
    let key = key_of(&["feature", &item.key, &spec.to_string(), extra], &());
    if let Some(hit) = cache.get("features", &key, "bin") {
        if let Ok((fv, _)) = FeatureVector::decode(&hit) {
            return Ok(fv);
        }
    }
    let fv = compute()?;
    cache.put("features", &key, "bin", &fv.encode(item.image_id()))?;
    Ok(fv)
}

fn sift_feature(item: &RoiItem, cfg: &ExperimentConfig, cache: &Cache) -> Result<KeypointSet> {
    let key = key_of(&["sift", &item.key], &cfg.sift);
    let (width, height) = (item.roi.width(), item.roi.height());
    if let Some(hit) = cache.get("features", &key, "jsonl") {
        if let Ok(keypoints) = sift::read_jsonl(&hit[..]) {
            return Ok(KeypointSet {
                width,
                height,
                keypoints,
            });
        }
    }
    let keypoints = sift::detect_keypoints_with(&item.roi, &cfg.sift).stage("extract")?;
    let mut buf = Vec::new();
    sift::write_jsonl(&keypoints, &mut buf).stage("extract")?;
    cache.put("features", &key, "jsonl", &buf)?;
    Ok(KeypointSet {
        width,
        height,
        keypoints,
    })
}

pub fn extract_features(
    pre: &Preprocessed,
    spec: &ExtractorSpec,
    cfg: &ExperimentConfig,
    cache: &Cache,
    neural: Option<&NeuralContext>,
) -> Result<Features> {
    match spec {
        ExtractorSpec::Sift => pre
            .items
            .par_iter()
            .map(|item| sift_feature(item, cfg, cache))
            .collect::<Result<Vec<_>>>()
            .map(Features::Keypoints),
        ExtractorSpec::Lbp | ExtractorSpec::Hog => pre
            .items
            .par_iter()
            .map(|item| {
                vector_feature(item, spec, "", cache, || {
                    let f = if *spec == ExtractorSpec::Lbp {
                        lbp_descriptor
                    } else {
                        hog_descriptor
                    };
                    f(&item.roi).stage("extract")
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Features::Vectors),
        ExtractorSpec::Neural(layer) => {
            let ctx =
                neural.ok_or_else(|| CliError::Usage("neural extractor needs a model".into()))?;
            if ctx.net.layer_index(layer).is_none() {
                return Err(CliError::Usage(format!(
                    "unknown layer {layer:?}; the model exposes: {}",
                    ctx.net.layer_names.join(", ")
                )));
            }
            let extra = format!("{}|{}", ctx.model_hash, sha256_hex(&encode_mean(&ctx.mean)));
            pre.items
                .par_iter()
                .zip(&ctx.inputs)
                .map(|(item, input)| {
                    vector_feature(item, spec, &extra, cache, || {
                        let act = ctx.net.extract(input, layer).stage("extract")?;
                        Ok(FeatureVector::neural(act.values, layer.clone()))
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(Features::Vectors)
        }
    }
}

/// Scores every trial for one system. SIFT scores are match counts.
pub fn score_system(
    system: &System,
    ids: &[&str],
    features: &Features,
    trials: &[Trial],
    cfg: &ExperimentConfig,
) -> Result<ScoreSet> {
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let id = system.id();
    let scores = match (features, system.metric) {
        (Features::Keypoints(sets), _) => score_trials(trials, &id, |e, p| {
            Ok(
                sift::match_constrained(&sets[index[e]], &sets[index[p]], &cfg.matcher).score()
                    as f64,
            )
        }),
        (Features::Vectors(v), Some(metric)) => {
            let signed = matches!(system.extractor, ExtractorSpec::Neural(_));
            score_trials(trials, &id, |e, p| {
                let (a, b) = (&v[index[e]].values, &v[index[p]].values);
                if signed {
                    metric.compare_signed(a, b)
                } else {
                    metric.compare(a, b)
                }
            })
        }
        (Features::Vectors(_), None) => {
            return Err(CliError::internal("score", format!("{id} has no metric")))
        }
    };
    scores.stage("score")
}

/// Full pipeline for one system: preprocessing, extraction, protocol,
/// scoring and DET.
pub fn run_experiment(
    manifest: &Manifest,
    cfg: &ExperimentConfig,
    system: &System,
    cache: &Cache,
) -> Result<(ScoreSet, DetCurve)> {
    let pre = preprocess(manifest, cfg, cache)?;
    let protocol = pre.protocol()?;
    let neural = match (&system.extractor, &cfg.neural) {
        (ExtractorSpec::Neural(_), Some(n)) => Some(NeuralContext::new(&n.model, &pre)?),
        _ => None,
    };
    let features = extract_features(&pre, &system.extractor, cfg, cache, neural.as_ref())?;
    let ids: Vec<&str> = pre.items.iter().map(RoiItem::image_id).collect();
    let scores = score_system(system, &ids, &features, &protocol.trials.trials(), cfg)?;
    let det = compute_det(&scores).stage("evaluate")?;
    Ok((scores, det))
}
