use std::fmt;
use std::path::Path;
use std::sync::Arc;

use periocular_core::GrayImage;
use tract_onnx::prelude::*;
use tract_onnx::tract_hir::infer::Factoid;

use crate::error::{NeuralError, Result};

/// A loaded network with every intermediate tensor wired out as an output.
/// Immutable after loading; forward passes may run from several threads.
#[derive(Clone)]
pub struct NetworkHandle {
    pub model_id: String,
    pub input_width: usize,
    pub input_height: usize,
    pub input_channels: usize,
    /// Capturable tensors in evaluation order.
    pub layer_names: Vec<String>,
    plan: Arc<TypedSimplePlan>,
}

impl fmt::Debug for NetworkHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NetworkHandle")
            .field("model_id", &self.model_id)
            .field(
                "input",
                &(self.input_channels, self.input_height, self.input_width),
            )
            .field("layer_names", &self.layer_names)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivation {
    pub layer_name: String,
    /// Row-major flattening of the tensor.
    pub values: Vec<f32>,
    pub original_shape: Vec<usize>,
}

fn load_err(e: impl fmt::Display) -> NeuralError {
    NeuralError::ModelLoad(format!("{e:#}"))
}

fn infer_err(e: impl fmt::Display) -> NeuralError {
    NeuralError::Inference(format!("{e:#}"))
}

pub fn load_network(path: &Path) -> Result<NetworkHandle> {
    let bytes = std::fs::read(path).map_err(|e| load_err(format!("{}: {e}", path.display())))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_owned());
    load_network_bytes(&bytes, &id)
}

pub fn load_network_bytes(bytes: &[u8], model_id: &str) -> Result<NetworkHandle> {
    let mut model = onnx().model_for_read(&mut &bytes[..]).map_err(load_err)?;

    for node in model.nodes() {
        let name = node.op.name();
        if let Some(op) = name
            .strip_prefix("Unimplemented(")
            .and_then(|s| s.strip_suffix(')'))
        {
            return Err(NeuralError::UnsupportedOp {
                op: op.to_owned(),
                node: node.name.clone(),
            });
        }
    }
    if model.inputs.len() != 1 {
        return Err(load_err(format!(
            "expected one graph input, found {}",
            model.inputs.len()
        )));
    }

    let (channels, height, width) = input_geometry(model.input_fact(0).map_err(load_err)?)?;
    model
        .set_input_fact(
            0,
            InferenceFact::dt_shape(f32::datum_type(), tvec!(1, channels, height, width)),
        )
        .map_err(load_err)?;

    let mut layer_names = Vec::new();
    let mut outlets = Vec::new();
    for id in model.eval_order().map_err(load_err)? {
        let node = &model.nodes()[id];
        if node.inputs.is_empty() || node.op.name() == "Const" {
            continue;
        }
        for slot in 0..node.outputs.len() {
            let outlet = OutletId::new(id, slot);
            let label = model
                .outlet_label(outlet)
                .map(str::to_owned)
                .unwrap_or_else(|| node.name.clone());
            layer_names.push(label);
            outlets.push(outlet);
        }
    }
    if layer_names.is_empty() {
        return Err(load_err("graph has no capturable tensors"));
    }
    model.select_output_outlets(&outlets).map_err(load_err)?;
    let plan = model
        .into_optimized()
        .and_then(|m| m.into_runnable())
        .map_err(load_err)?;

    Ok(NetworkHandle {
        model_id: model_id.to_owned(),
        input_width: width,
        input_height: height,
        input_channels: channels,
        layer_names,
        plan,
    })
}

/// (channels, height, width) of a `[N, C, H, W]` input; a symbolic batch
/// dimension is fixed to 1.
fn input_geometry(fact: &InferenceFact) -> Result<(usize, usize, usize)> {
    let dims: Vec<Option<i64>> = fact
        .shape
        .dims()
        .map(|d| d.concretize().and_then(|d| d.to_i64().ok()))
        .collect();
    if dims.len() != 4 {
        return Err(load_err(format!(
            "input must be [N, C, H, W], got rank {}",
            dims.len()
        )));
    }
    match dims[1..] {
        [Some(c), Some(h), Some(w)] if c > 0 && h > 0 && w > 0 => {
            Ok((c as usize, h as usize, w as usize))
        }
        _ => Err(load_err(format!(
            "input geometry must be static, got {dims:?}"
        ))),
    }
}

impl NetworkHandle {
    pub fn layer_index(&self, layer: &str) -> Option<usize> {
        self.layer_names.iter().position(|l| l == layer)
    }

    fn input_tensor(&self, img: &GrayImage) -> Result<Tensor> {
        if img.width() != self.input_width || img.height() != self.input_height {
            return Err(NeuralError::InvalidInput(format!(
                "image is {}x{}, network expects {}x{}",
                img.width(),
                img.height(),
                self.input_width,
                self.input_height
            )));
        }
        let plane: Vec<f32> = img.data().iter().map(|&v| v as f32).collect();
        let mut data = Vec::with_capacity(plane.len() * self.input_channels);
        for _ in 0..self.input_channels {
            data.extend_from_slice(&plane);
        }
        Tensor::from_shape(
            &[1, self.input_channels, self.input_height, self.input_width],
            &data,
        )
        .map_err(infer_err)
    }

    /// One forward pass capturing every layer, in `layer_names` order.
    pub fn extract_all(&self, img: &GrayImage) -> Result<Vec<LayerActivation>> {
        let input = self.input_tensor(img)?;
        let outputs = self
            .plan
            .run(tvec!(input.into_tvalue()))
            .map_err(infer_err)?;
        outputs
            .iter()
            .zip(&self.layer_names)
            .map(|(t, name)| to_activation(t, name))
            .collect()
    }

    pub fn extract(&self, img: &GrayImage, layer: &str) -> Result<LayerActivation> {
        let ix = self
            .layer_index(layer)
            .ok_or_else(|| NeuralError::InvalidLayer(layer.to_owned()))?;
        let input = self.input_tensor(img)?;
        let outputs = self
            .plan
            .run(tvec!(input.into_tvalue()))
            .map_err(infer_err)?;
        to_activation(&outputs[ix], layer)
    }
}

fn to_activation(t: &TValue, name: &str) -> Result<LayerActivation> {
    let t = t.cast_to::<f32>().map_err(infer_err)?;
    let view = t.to_plain_array_view::<f32>().map_err(infer_err)?;
    let values: Vec<f32> = view.iter().copied().collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(NeuralError::Inference(format!(
            "layer {name}: non-finite value at {i}"
        )));
    }
    Ok(LayerActivation {
        layer_name: name.to_owned(),
        values,
        original_shape: t.shape().to_vec(),
    })
}

/// `img` must already match the network input size (see
/// `periocular_core::imageproc::resize_bicubic`).
pub fn extract_activation(
    net: &NetworkHandle,
    img: &GrayImage,
    layer: &str,
) -> Result<LayerActivation> {
    net.extract(img, layer)
}
