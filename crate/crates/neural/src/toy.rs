//! In-memory construction of small ONNX graphs, used as the bundled test
//! network and as a fixture for hand-computable models.

use prost::Message;
use tract_onnx::pb::attribute_proto::AttributeType;
use tract_onnx::pb::tensor_proto::DataType;
use tract_onnx::pb::tensor_shape_proto::{dimension, Dimension};
use tract_onnx::pb::type_proto::{Tensor as TensorType, Value};
use tract_onnx::pb::{
    AttributeProto, GraphProto, ModelProto, NodeProto, OperatorSetIdProto, TensorProto,
    TensorShapeProto, TypeProto, ValueInfoProto,
};

pub const TOY_INPUT_SIDE: usize = 32;
pub const TOY_LAYERS: [&str; 6] = ["conv1", "relu1", "pool1", "conv2", "relu2", "gap"];

fn value_info(name: &str, shape: &[i64]) -> ValueInfoProto {
    ValueInfoProto {
        name: name.to_owned(),
        r#type: Some(TypeProto {
            value: Some(Value::TensorType(TensorType {
                elem_type: DataType::Float as i32,
                shape: Some(TensorShapeProto {
                    dim: shape
                        .iter()
                        .map(|&d| Dimension {
                            value: Some(dimension::Value::DimValue(d)),
                            ..Default::default()
                        })
                        .collect(),
                }),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn ints(name: &str, v: &[i64]) -> AttributeProto {
    AttributeProto {
        name: name.to_owned(),
        r#type: AttributeType::Ints as i32,
        ints: v.to_vec(),
        ..Default::default()
    }
}

/// Sequential graph builder; each added node consumes the previous node's
/// output and names its own output after the node.
pub struct GraphBuilder {
    input: String,
    input_shape: Vec<i64>,
    last: String,
    nodes: Vec<NodeProto>,
    initializers: Vec<TensorProto>,
}

impl GraphBuilder {
    /// Input of shape `[1, channels, height, width]`.
    pub fn new(input: &str, channels: usize, height: usize, width: usize) -> Self {
        GraphBuilder {
            input: input.to_owned(),
            input_shape: vec![1, channels as i64, height as i64, width as i64],
            last: input.to_owned(),
            nodes: Vec::new(),
            initializers: Vec::new(),
        }
    }

    fn push(
        &mut self,
        name: &str,
        op: &str,
        extra_inputs: Vec<String>,
        attribute: Vec<AttributeProto>,
    ) -> &mut Self {
        let mut input = vec![self.last.clone()];
        input.extend(extra_inputs);
        self.nodes.push(NodeProto {
            input,
            output: vec![name.to_owned()],
            name: name.to_owned(),
            op_type: op.to_owned(),
            attribute,
            ..Default::default()
        });
        self.last = name.to_owned();
        self
    }

    fn initializer(&mut self, name: String, dims: Vec<i64>, values: Vec<f32>) -> String {
        self.initializers.push(TensorProto {
            name: name.clone(),
            dims,
            data_type: DataType::Float as i32,
            float_data: values,
            ..Default::default()
        });
        name
    }

    /// Square convolution with stride 1. `weights` is `[out, in, k, k]`
    /// row-major.
    pub fn conv(
        &mut self,
        name: &str,
        weights: Vec<f32>,
        shape: [usize; 4],
        bias: Option<Vec<f32>>,
        pad: usize,
    ) -> &mut Self {
        assert_eq!(weights.len(), shape.iter().product::<usize>());
        let w = self.initializer(
            format!("{name}.weight"),
            shape.iter().map(|&d| d as i64).collect(),
            weights,
        );
        let mut extra = vec![w];
        if let Some(b) = bias {
            assert_eq!(b.len(), shape[0]);
            extra.push(self.initializer(format!("{name}.bias"), vec![shape[0] as i64], b));
        }
        let k = shape[2] as i64;
        let p = pad as i64;
        self.push(
            name,
            "Conv",
            extra,
            vec![
                ints("kernel_shape", &[k, k]),
                ints("pads", &[p, p, p, p]),
                ints("strides", &[1, 1]),
            ],
        )
    }

    pub fn relu(&mut self, name: &str) -> &mut Self {
        self.push(name, "Relu", vec![], vec![])
    }

    pub fn max_pool(&mut self, name: &str, k: usize) -> &mut Self {
        let k = k as i64;
        self.push(
            name,
            "MaxPool",
            vec![],
            vec![ints("kernel_shape", &[k, k]), ints("strides", &[k, k])],
        )
    }

    pub fn global_average_pool(&mut self, name: &str) -> &mut Self {
        self.push(name, "GlobalAveragePool", vec![], vec![])
    }

    /// Adds a node of arbitrary type, e.g. to exercise unsupported operators.
    pub fn op(&mut self, name: &str, op_type: &str) -> &mut Self {
        self.push(name, op_type, vec![], vec![])
    }

    pub fn build(&self) -> Vec<u8> {
        let model = ModelProto {
            ir_version: 7,
            opset_import: vec![OperatorSetIdProto {
                domain: String::new(),
                version: 13,
            }],
            producer_name: "periocular-toy".to_owned(),
            graph: Some(GraphProto {
                node: self.nodes.clone(),
                name: "toy".to_owned(),
                initializer: self.initializers.clone(),
                input: vec![value_info(&self.input, &self.input_shape)],
                output: vec![ValueInfoProto {
                    name: self.last.clone(),
                    ..Default::default()
                }],
                ..Default::default()
            }),
            ..Default::default()
        };
        model.encode_to_vec()
    }
}

/// Deterministic weights in [-scale, scale].
fn weights(n: usize, seed: u32, scale: f32) -> Vec<f32> {
    (0..n)
        .map(|i| {
            let h = (i as u32)
                .wrapping_mul(2_654_435_761)
                .wrapping_add(seed.wrapping_mul(40_503))
                >> 8;
            (h % 2001) as f32 / 1000.0 * scale - scale
        })
        .collect()
}

/// Six-layer network on a 3x32x32 input: conv, relu, max-pool, conv, relu,
/// global average pool.
pub fn toy_model() -> Vec<u8> {
    let s = TOY_INPUT_SIDE;
    GraphBuilder::new("input", 3, s, s)
        .conv(
            "conv1",
            weights(4 * 3 * 9, 1, 0.3),
            [4, 3, 3, 3],
            Some(weights(4, 2, 0.05)),
            1,
        )
        .relu("relu1")
        .max_pool("pool1", 2)
        .conv(
            "conv2",
            weights(8 * 4 * 9, 3, 0.3),
            [8, 4, 3, 3],
            Some(weights(8, 4, 0.05)),
            1,
        )
        .relu("relu2")
        .global_average_pool("gap")
        .build()
}

/// One bias-free 3x3 convolution without padding on a single-channel input.
pub fn single_conv_model(kernel: [f32; 9], height: usize, width: usize) -> Vec<u8> {
    GraphBuilder::new("input", 1, height, width)
        .conv("conv", kernel.to_vec(), [1, 1, 3, 3], None, 0)
        .build()
}
