use std::collections::BTreeMap;
use std::io::Write;

use periocular_core::eval::{build_trials, compute_det, score_trials, SampleInfo};
use periocular_core::imageproc::{mean_subtract, resize_bicubic};
use periocular_core::metrics::Metric;
use periocular_core::GrayImage;
use rayon::prelude::*;

use crate::error::{NeuralError, Result};
use crate::network::NetworkHandle;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub layer: String,
    pub metric: Metric,
    pub eer_percent: f64,
}

/// Resizes every image to the network input and subtracts the dataset mean.
pub fn prepare_inputs(net: &NetworkHandle, imgs: &[GrayImage]) -> Result<Vec<GrayImage>> {
    let resized = imgs
        .par_iter()
        .map(|img| resize_bicubic(img, net.input_width, net.input_height))
        .collect::<periocular_core::Result<Vec<_>>>()?;
    Ok(mean_subtract(&resized)?.0)
}

/// EER of every (layer, metric) combination under the verification protocol.
/// Rows follow layer order, then the order of `metrics`. χ² is evaluated with
/// absolute values in the denominator because activations may be negative.
pub fn layer_sweep(
    net: &NetworkHandle,
    dataset: &[(GrayImage, SampleInfo)],
    metrics: &[Metric],
) -> Result<Vec<SweepRow>> {
    let samples: Vec<SampleInfo> = dataset.iter().map(|(_, s)| s.clone()).collect();
    let protocol = build_trials(&samples);
    if protocol.users.len() < 2 {
        return Err(NeuralError::InvalidInput(format!(
            "need at least 2 users with 2 images each, found {}",
            protocol.users.len()
        )));
    }
    let imgs: Vec<GrayImage> = dataset.iter().map(|(img, _)| img.clone()).collect();
    let inputs = prepare_inputs(net, &imgs)?;
    let activations = inputs
        .par_iter()
        .map(|img| net.extract_all(img))
        .collect::<Result<Vec<_>>>()?;

    let index: BTreeMap<&str, usize> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.image_id.as_str(), i))
        .collect();
    if index.len() != samples.len() {
        return Err(NeuralError::InvalidInput("duplicate image ids".into()));
    }
    let trials = protocol.trials.trials();

    let mut rows = Vec::new();
    for (li, layer) in net.layer_names.iter().enumerate() {
        for &metric in metrics {
            let comparator = format!("{}:{layer}/{metric}", net.model_id);
            let scores = score_trials(&trials, &comparator, |e, p| {
                metric.compare_signed(
                    &activations[index[e]][li].values,
                    &activations[index[p]][li].values,
                )
            })?;
            let det = compute_det(&scores)?;
            rows.push(SweepRow {
                layer: layer.clone(),
                metric,
                eer_percent: 100.0 * det.eer,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["layer", "metric", "eer_percent"])?;
    for r in rows {
        wr.write_record([
            r.layer.clone(),
            r.metric.to_string(),
            format!("{:.4}", r.eer_percent),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
