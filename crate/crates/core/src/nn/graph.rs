//! Static layer graph with forward and reverse passes.
//!
//! Nodes are stored in topological order (every edge points backward), so
//! forward is a single sweep and backpropagation is the reverse sweep.
//! Residual wiring falls out of nodes with two inputs; gradient fan-in at a
//! shared producer accumulates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{
    add_forward, gap_backward, gap_forward, relu_backward, relu_forward, softmax_backward,
    softmax_forward, BatchNorm, Conv1d, Dense, Mode, Param,
};
use crate::nn::tensor::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Op {
    Input,
    Conv(Conv1d),
    Bn(BatchNorm),
    Relu,
    Dense(Dense),
    Gap,
    Add,
    Softmax,
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Conv(_) => "conv1d",
            Op::Bn(_) => "batch_norm",
            Op::Relu => "relu",
            Op::Dense(_) => "dense",
            Op::Gap => "gap",
            Op::Add => "add",
            Op::Softmax => "softmax",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetNode {
    pub op: Op,
    pub inputs: Vec<usize>,
}

/// A runnable layer graph. `logits` indexes the pre-softmax node, `output`
/// the softmax node, and `cam` the deepest spatially resolved feature map
/// (absent for flat feed-forward stacks).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Network {
    nodes: Vec<NetNode>,
    pub logits: usize,
    pub output: usize,
    pub cam: Option<usize>,
    #[serde(skip)]
    acts: Vec<Tensor>,
    #[serde(skip)]
    node_grads: Vec<Option<Tensor>>,
}

impl Network {
    pub fn new(nodes: Vec<NetNode>, logits: usize, output: usize, cam: Option<usize>) -> Network {
        debug_assert!(matches!(nodes.first().map(|n| &n.op), Some(Op::Input)));
        debug_assert!(nodes
            .iter()
            .enumerate()
            .all(|(i, n)| n.inputs.iter().all(|&p| p < i)));
        Network {
            nodes,
            logits,
            output,
            cam,
            acts: Vec::new(),
            node_grads: Vec::new(),
        }
    }

    pub fn nodes(&self) -> &[NetNode] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Runs the graph on a batch; returns the output-node activation.
    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<&Tensor> {
        self.acts.clear();
        self.acts.resize(self.nodes.len(), Tensor::default());
        self.node_grads.clear();
        self.acts[0] = input.clone();
        for id in 1..self.nodes.len() {
            let (done, rest) = self.acts.split_at_mut(id);
            let node = &mut self.nodes[id];
            let out = match &mut node.op {
                Op::Input => {
                    return Err(Error::Model("input op may only be node 0".into()));
                }
                Op::Conv(conv) => conv.forward(&done[node.inputs[0]])?,
                Op::Bn(bn) => bn.forward(&done[node.inputs[0]], mode)?,
                Op::Relu => relu_forward(&done[node.inputs[0]]),
                Op::Dense(dense) => dense.forward(&done[node.inputs[0]])?,
                Op::Gap => gap_forward(&done[node.inputs[0]])?,
                Op::Add => add_forward(&done[node.inputs[0]], &done[node.inputs[1]])?,
                Op::Softmax => softmax_forward(&done[node.inputs[0]]),
            };
            rest[0] = out;
        }
        Ok(&self.acts[self.output])
    }

    /// Activation of `node` from the last forward pass.
    pub fn activation(&self, node: usize) -> &Tensor {
        &self.acts[node]
    }

    /// Backpropagates `seed` (the loss gradient with respect to the output of
    /// `start`) down to the input, accumulating parameter gradients.
    ///
    /// Per-node output gradients stay readable via [`Network::node_grad`]
    /// until the next forward pass.
    pub fn backward_from(&mut self, start: usize, seed: &Tensor) -> Result<()> {
        if self.acts.len() != self.nodes.len() {
            return Err(Error::Model("backward called before forward".into()));
        }
        if seed.shape() != self.acts[start].shape() {
            return Err(Error::Shape(format!(
                "seed gradient shape {:?} does not match activation {:?}",
                seed.shape(),
                self.acts[start].shape()
            )));
        }
        self.node_grads.clear();
        self.node_grads.resize(self.nodes.len(), None);
        self.node_grads[start] = Some(seed.clone());

        for id in (1..=start).rev() {
            let Some(d_out) = self.node_grads[id].take() else {
                continue;
            };
            let node = &mut self.nodes[id];
            match &mut node.op {
                Op::Input => unreachable!("input is node 0"),
                Op::Conv(conv) => {
                    let d_in = conv.backward(&self.acts[node.inputs[0]], &d_out);
                    accumulate(&mut self.node_grads[node.inputs[0]], d_in);
                }
                Op::Bn(bn) => {
                    let d_in = bn.backward(&self.acts[node.inputs[0]], &d_out);
                    accumulate(&mut self.node_grads[node.inputs[0]], d_in);
                }
                Op::Relu => {
                    let d_in = relu_backward(&self.acts[id], &d_out);
                    accumulate(&mut self.node_grads[node.inputs[0]], d_in);
                }
                Op::Dense(dense) => {
                    let d_in = dense.backward(&self.acts[node.inputs[0]], &d_out);
                    accumulate(&mut self.node_grads[node.inputs[0]], d_in);
                }
                Op::Gap => {
                    let d_in = gap_backward(self.acts[node.inputs[0]].shape(), &d_out);
                    accumulate(&mut self.node_grads[node.inputs[0]], d_in);
                }
                Op::Add => {
                    accumulate(&mut self.node_grads[node.inputs[0]], d_out.clone());
                    accumulate(&mut self.node_grads[node.inputs[1]], d_out.clone());
                }
                Op::Softmax => {
                    let d_in = softmax_backward(&self.acts[id], &d_out);
                    accumulate(&mut self.node_grads[node.inputs[0]], d_in);
                }
            }
            self.node_grads[id] = Some(d_out);
        }
        Ok(())
    }

    /// Gradient of the seeded objective with respect to `node`'s output.
    pub fn node_grad(&self, node: usize) -> Option<&Tensor> {
        self.node_grads.get(node).and_then(|g| g.as_ref())
    }

    /// Mutable views of every learnable parameter, in stable graph order.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for node in &mut self.nodes {
            match &mut node.op {
                Op::Conv(conv) => {
                    out.push(&mut conv.weight);
                    out.push(&mut conv.bias);
                }
                Op::Bn(bn) => {
                    out.push(&mut bn.gamma);
                    out.push(&mut bn.beta);
                }
                Op::Dense(dense) => {
                    out.push(&mut dense.weight);
                    out.push(&mut dense.bias);
                }
                _ => {}
            }
        }
        out
    }

    /// Learnable parameter count; running statistics are not learnable.
    pub fn param_count(&self) -> usize {
        let mut count = 0;
        for node in &self.nodes {
            match &node.op {
                Op::Conv(conv) => count += conv.weight.value.numel() + conv.bias.value.numel(),
                Op::Bn(bn) => count += bn.gamma.value.numel() + bn.beta.value.numel(),
                Op::Dense(dense) => count += dense.weight.value.numel() + dense.bias.value.numel(),
                _ => {}
            }
        }
        count
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Snapshot of all learnable values plus batch-norm running statistics.
    pub fn state_snapshot(&self) -> Vec<Tensor> {
        let mut state = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Conv(conv) => {
                    state.push(conv.weight.value.clone());
                    state.push(conv.bias.value.clone());
                }
                Op::Bn(bn) => {
                    state.push(bn.gamma.value.clone());
                    state.push(bn.beta.value.clone());
                    state.push(bn.running_mean.clone());
                    state.push(bn.running_var.clone());
                }
                Op::Dense(dense) => {
                    state.push(dense.weight.value.clone());
                    state.push(dense.bias.value.clone());
                }
                _ => {}
            }
        }
        state
    }

    pub fn restore_snapshot(&mut self, state: &[Tensor]) {
        let mut it = state.iter();
        let mut next = || it.next().expect("snapshot arity mismatch").clone();
        for node in &mut self.nodes {
            match &mut node.op {
                Op::Conv(conv) => {
                    conv.weight.value = next();
                    conv.bias.value = next();
                }
                Op::Bn(bn) => {
                    bn.gamma.value = next();
                    bn.beta.value = next();
                    bn.running_mean = next();
                    bn.running_var = next();
                }
                Op::Dense(dense) => {
                    dense.weight.value = next();
                    dense.bias.value = next();
                }
                _ => {}
            }
        }
    }

    /// Rebuilds gradient buffers and clears caches after deserialization.
    pub fn reset_runtime_state(&mut self) {
        for node in &mut self.nodes {
            match &mut node.op {
                Op::Conv(conv) => conv.reset_runtime_state(),
                Op::Bn(bn) => bn.reset_runtime_state(),
                Op::Dense(dense) => dense.reset_runtime_state(),
                _ => {}
            }
        }
        self.acts.clear();
        self.node_grads.clear();
    }

    /// True if any node is a convolution.
    pub fn has_conv(&self) -> bool {
        self.nodes.iter().any(|n| matches!(n.op, Op::Conv(_)))
    }
}

fn accumulate(slot: &mut Option<Tensor>, grad: Tensor) {
    match slot {
        None => *slot = Some(grad),
        Some(existing) => existing.add_assign(&grad),
    }
}
