//! Model builders, feature encodings, prediction, and checkpoints.
//!
//! The temporal classifier stacks three residual blocks (64, 128, 128
//! filters; per-block kernels 8/5/3) over the 24x5 role matrix, followed by
//! global average pooling, a dense head, and softmax. Shortcuts carry a 1x1
//! convolution plus batch norm where the channel count changes and batch
//! norm alone where it does not. The histogram baseline is a small MLP.

use std::fs;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{TaskSample, MAX_MINUTES, MAX_STUDENTS, NUM_ROLES};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Conv1d, Dense, Mode, NetNode, Network, Op, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Which encoding of a task sample a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    TemporalB2,
    Histogram,
}

/// Cell encoding for the temporal matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Cells fed as raw role integers 0-7; 5 input channels.
    RawInteger,
    /// Per-role indicator channels, 7 per student; 35 input channels.
    OneHotRoles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub feature_kind: FeatureKind,
    pub encoding: Encoding,
    pub num_classes: usize,
    pub init_seed: u64,
    pub version: u32,
}

/// A built model: spec plus runnable layer graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub net: Network,
}

struct Builder {
    nodes: Vec<NetNode>,
    rng: ChaCha8Rng,
}

impl Builder {
    fn new(seed: u64) -> Builder {
        Builder {
            nodes: vec![NetNode {
                op: Op::Input,
                inputs: vec![],
            }],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn push(&mut self, op: Op, inputs: Vec<usize>) -> usize {
        self.nodes.push(NetNode { op, inputs });
        self.nodes.len() - 1
    }

    fn glorot(&mut self, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = (0..numel)
            .map(|_| self.rng.random_range(-limit..limit))
            .collect();
        Tensor::from_vec(shape, data).expect("shape/data agree")
    }

    fn conv(&mut self, input: usize, kernel: usize, in_ch: usize, out_ch: usize) -> usize {
        let weight = self.glorot(&[kernel, in_ch, out_ch], kernel * in_ch, kernel * out_ch);
        let conv = Conv1d::new(kernel, in_ch, out_ch, weight, Tensor::zeros(&[out_ch]));
        self.push(Op::Conv(conv), vec![input])
    }

    fn bn(&mut self, input: usize, channels: usize) -> usize {
        self.push(Op::Bn(BatchNorm::new(channels)), vec![input])
    }

    fn relu(&mut self, input: usize) -> usize {
        self.push(Op::Relu, vec![input])
    }

    fn dense(&mut self, input: usize, in_dim: usize, out_dim: usize) -> usize {
        let weight = self.glorot(&[in_dim, out_dim], in_dim, out_dim);
        let dense = Dense::new(in_dim, out_dim, weight, Tensor::zeros(&[out_dim]));
        self.push(Op::Dense(dense), vec![input])
    }

    /// One residual block: conv(8)-BN-ReLU, conv(5)-BN-ReLU, conv(3)-BN on
    /// the main path; 1x1 conv + BN shortcut when channels change, BN-only
    /// otherwise; elementwise add then ReLU.
    fn residual_block(&mut self, input: usize, in_ch: usize, out_ch: usize) -> usize {
        let c1 = self.conv(input, 8, in_ch, out_ch);
        let b1 = self.bn(c1, out_ch);
        let r1 = self.relu(b1);
        let c2 = self.conv(r1, 5, out_ch, out_ch);
        let b2 = self.bn(c2, out_ch);
        let r2 = self.relu(b2);
        let c3 = self.conv(r2, 3, out_ch, out_ch);
        let b3 = self.bn(c3, out_ch);
        let shortcut = if in_ch != out_ch {
            let sc = self.conv(input, 1, in_ch, out_ch);
            self.bn(sc, out_ch)
        } else {
            self.bn(input, out_ch)
        };
        let add = self.push(Op::Add, vec![b3, shortcut]);
        self.relu(add)
    }
}

/// Number of input channels for a temporal encoding.
pub fn temporal_channels(encoding: Encoding) -> usize {
    match encoding {
        Encoding::RawInteger => MAX_STUDENTS,
        Encoding::OneHotRoles => MAX_STUDENTS * NUM_ROLES,
    }
}

/// Builds the temporal residual classifier.
pub fn build_resnet_b2(num_classes: usize, encoding: Encoding, seed: u64) -> Model {
    assert!(num_classes >= 2);
    let in_ch = temporal_channels(encoding);
    let mut b = Builder::new(seed);
    let block1 = b.residual_block(0, in_ch, 64);
    let block2 = b.residual_block(block1, 64, 128);
    let block3 = b.residual_block(block2, 128, 128);
    let gap = b.push(Op::Gap, vec![block3]);
    let logits = b.dense(gap, 128, num_classes);
    let output = b.push(Op::Softmax, vec![logits]);
    Model {
        spec: ModelSpec {
            feature_kind: FeatureKind::TemporalB2,
            encoding,
            num_classes,
            init_seed: seed,
            version: CHECKPOINT_VERSION,
        },
        net: Network::new(b.nodes, logits, output, Some(block3)),
    }
}

/// Builds the histogram MLP baseline: 7 -> 64 -> 64 -> classes.
pub fn build_mlp_hist(num_classes: usize, seed: u64) -> Model {
    let mut b = Builder::new(seed);
    let d1 = b.dense(0, NUM_ROLES, 64);
    let r1 = b.relu(d1);
    let d2 = b.dense(r1, 64, 64);
    let r2 = b.relu(d2);
    let logits = b.dense(r2, 64, num_classes);
    let output = b.push(Op::Softmax, vec![logits]);
    Model {
        spec: ModelSpec {
            feature_kind: FeatureKind::Histogram,
            encoding: Encoding::RawInteger,
            num_classes,
            init_seed: seed,
            version: CHECKPOINT_VERSION,
        },
        net: Network::new(b.nodes, logits, output, None),
    }
}

/// Learnable parameter count (running statistics excluded).
pub fn count_parameters(model: &Model) -> usize {
    model.net.param_count()
}

/// Encodes one sample into the feature tensor a model consumes (unbatched).
pub fn featurize(sample: &TaskSample, kind: FeatureKind, encoding: Encoding) -> Tensor {
    match kind {
        FeatureKind::TemporalB2 => {
            let channels = temporal_channels(encoding);
            let mut data = vec![0.0; MAX_MINUTES * channels];
            for minute in 0..MAX_MINUTES {
                for student in 0..MAX_STUDENTS {
                    let value = sample.matrix.cells()[minute][student];
                    match encoding {
                        Encoding::RawInteger => {
                            data[minute * channels + student] = value as f64;
                        }
                        Encoding::OneHotRoles => {
                            if value != 0 {
                                let ch = student * NUM_ROLES + (value as usize - 1);
                                data[minute * channels + ch] = 1.0;
                            }
                        }
                    }
                }
            }
            Tensor::from_vec(&[MAX_MINUTES, channels], data).expect("fixed shape")
        }
        FeatureKind::Histogram => {
            Tensor::from_vec(&[NUM_ROLES], sample.histogram.bins().to_vec()).expect("fixed shape")
        }
    }
}

/// Stacks per-sample features into one batch tensor.
pub fn batch_features(features: &[Tensor]) -> Tensor {
    assert!(!features.is_empty());
    let per = features[0].shape().to_vec();
    let mut shape = vec![features.len()];
    shape.extend_from_slice(&per);
    let width: usize = per.iter().product();
    let mut data = Vec::with_capacity(features.len() * width);
    for f in features {
        debug_assert_eq!(f.shape(), per.as_slice());
        data.extend_from_slice(f.data());
    }
    Tensor::from_vec(&shape, data).expect("stacked shape")
}

/// Runs one sample through the model in inference mode.
pub fn predict_proba(model: &mut Model, sample: &TaskSample) -> Result<Vec<f64>> {
    let features = featurize(sample, model.spec.feature_kind, model.spec.encoding);
    predict_proba_features(model, &features)
}

/// Same as [`predict_proba`] for an already-encoded feature tensor.
pub fn predict_proba_features(model: &mut Model, features: &Tensor) -> Result<Vec<f64>> {
    let batch = batch_features(std::slice::from_ref(features));
    let out = model.net.forward(&batch, Mode::Infer)?;
    Ok(out.data().to_vec())
}

impl Model {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Model> {
        let mut model: Model = serde_json::from_str(text)?;
        if model.spec.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {} not supported (expected {})",
                model.spec.version, CHECKPOINT_VERSION
            )));
        }
        model.net.reset_runtime_state();
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = self.to_json()?;
        fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Model> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Model::from_json(&text)
    }
}
