use super::conv::{self, ConvSpec};
use super::float::Float;
use super::norm;
use super::ops::{self, Activation, BinaryKind, PoolKind, ReduceKind};
use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T> {
    Leaf,
    Binary {
        kind: BinaryKind,
        a: Var,
        b: Var,
        /// Index into `b` for every element of `a`; `None` when shapes match.
        bmap: Option<Vec<usize>>,
    },
    BinaryScalar {
        kind: BinaryKind,
        a: Var,
        s: T,
    },
    Act {
        input: Var,
        kind: Activation,
    },
    Pool {
        input: Var,
        kind: PoolKind,
        argmax: Vec<u32>,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Reduce {
        input: Var,
        kind: ReduceKind,
    },
    Pad2d {
        input: Var,
        pads: [usize; 4],
    },
    PadReplicate {
        input: Var,
        pads: [usize; 4],
    },
    Upsample {
        input: Var,
        scale: usize,
    },
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        spec: ConvSpec,
    },
    ConvTranspose2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        spec: ConvSpec,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        inv_std: Vec<T>,
        training: bool,
    },
}

pub(crate) struct Node<T> {
    pub value: Tensor<T>,
    pub op: Op<T>,
    pub requires_grad: bool,
}

/// Records operations and replays them in reverse to compute gradients.
///
/// A tape and the values on it belong to one thread; independent tapes may
/// run concurrently.
pub struct Tape<T> {
    pub(crate) nodes: Vec<Node<T>>,
    branches: Option<BranchLog>,
}

/// Running hash of every piecewise branch taken (activation sides, clamps,
/// |x| signs, argmax winners).
#[derive(Clone, Debug)]
struct BranchLog {
    hash: u64,
}

impl BranchLog {
    fn push(&mut self, word: u64) {
        // FNV-1a over 64-bit words.
        self.hash = (self.hash ^ word).wrapping_mul(0x0000_0100_0000_01b3);
    }
}

impl<T: Float> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Lazily allocated per-node gradient buffers handed to backward rules.
pub(crate) struct GradSink<'a, T> {
    grads: &'a mut [Option<Vec<T>>],
    nodes: &'a [Node<T>],
}

impl<T: Float> GradSink<'_, T> {
    /// Gradient buffer for `v`, or `None` when `v` does not need one.
    pub fn slot(&mut self, v: Var) -> Option<&mut [T]> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let n = node.value.numel();
        Some(self.grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    pub fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            branches: None,
        }
    }

    /// A tape that also fingerprints the branch taken at every kink, so two
    /// evaluations can be compared for lying on the same smooth piece.
    pub fn with_branch_tracking() -> Self {
        Tape {
            nodes: Vec::new(),
            branches: Some(BranchLog {
                hash: 0xcbf2_9ce4_8422_2325,
            }),
        }
    }

    /// Fingerprint of the branches taken so far; `None` unless tracking.
    pub fn branch_signature(&self) -> Option<u64> {
        self.branches.as_ref().map(|b| b.hash)
    }

    pub(crate) fn tracks_branches(&self) -> bool {
        self.branches.is_some()
    }

    /// Folds one branch indicator per element into the fingerprint.
    pub(crate) fn note_branches(&mut self, bits: impl Iterator<Item = u64>) {
        if let Some(log) = &mut self.branches {
            log.push(u64::MAX);
            let mut word = 0u64;
            let mut n = 0;
            for b in bits {
                word = (word << 2) | (b & 3);
                n += 1;
                if n == 32 {
                    log.push(word);
                    word = 0;
                    n = 0;
                }
            }
            log.push(word);
        }
    }

    /// Folds arbitrary per-element branch labels into the fingerprint.
    pub(crate) fn note_words(&mut self, words: impl Iterator<Item = u64>) {
        if let Some(log) = &mut self.branches {
            log.push(u64::MAX - 1);
            words.for_each(|w| log.push(w));
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf; it takes part in differentiation iff
    /// `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let requires_grad = tensor.requires_grad();
        self.nodes.push(Node {
            value: tensor,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a non-differentiable leaf.
    pub fn constant(&mut self, mut tensor: Tensor<T>) -> Var {
        tensor.set_requires_grad(false);
        self.leaf(tensor)
    }

    /// A constant copy of `v`: gradients do not flow back through it.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.nodes[v.0].value.detached();
        self.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.value.clear_grad();
        }
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::Contract(format!("{v:?} does not belong to this tape")))
        }
    }

    /// Back-propagates from a scalar `loss`, accumulating into every
    /// reachable `requires_grad` leaf. Repeated calls keep accumulating.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(loss)?;
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(shape_err!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            ));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);
        {
            let nodes = &self.nodes[..=loss.0];
            for i in (0..=loss.0).rev() {
                let node = &nodes[i];
                if matches!(node.op, Op::Leaf) || !node.requires_grad {
                    continue;
                }
                let Some(g) = grads[i].take() else { continue };
                let mut sink = GradSink {
                    grads: &mut grads,
                    nodes,
                };
                backward_node(nodes, node, &g, &mut sink);
            }
        }
        for (i, g) in grads.into_iter().enumerate() {
            if let Some(g) = g {
                let node = &mut self.nodes[i];
                if matches!(node.op, Op::Leaf) && node.requires_grad {
                    node.value.accumulate_grad(&g)?;
                }
            }
        }
        Ok(())
    }
}

fn backward_node<T: Float>(nodes: &[Node<T>], node: &Node<T>, g: &[T], sink: &mut GradSink<'_, T>) {
    let val = |v: Var| &nodes[v.0].value;
    match &node.op {
        Op::Leaf => {}
        Op::Binary { kind, a, b, bmap } => {
            ops::binary_backward(*kind, val(*a), val(*b), *a, *b, bmap.as_deref(), g, sink)
        }
        Op::BinaryScalar { kind, a, s } => ops::scalar_backward(*kind, val(*a), *a, *s, g, sink),
        Op::Act { input, kind } => ops::act_backward(*kind, val(*input), &node.value, *input, g, sink),
        Op::Pool { input, kind, argmax } => ops::pool_backward(*kind, val(*input), *input, argmax, g, sink),
        Op::Concat { inputs, axis } => {
            let shapes: Vec<&[usize]> = inputs.iter().map(|v| val(*v).shape()).collect();
            ops::concat_backward(inputs, &shapes, *axis, g, sink)
        }
        Op::Reduce { input, kind } => ops::reduce_backward(*kind, val(*input), *input, g, sink),
        Op::Pad2d { input, pads } => ops::pad_backward(val(*input), *input, *pads, g, sink),
        Op::PadReplicate { input, pads } => ops::pad_replicate_backward(val(*input), *input, *pads, g, sink),
        Op::Upsample { input, scale } => ops::upsample_backward(val(*input), *input, *scale, g, sink),
        Op::Conv2d {
            input,
            weight,
            bias,
            spec,
        } => conv::conv2d_backward(val(*input), val(*weight), *input, *weight, *bias, *spec, g, sink),
        Op::ConvTranspose2d {
            input,
            weight,
            bias,
            spec,
        } => conv::conv_transpose2d_backward(
            val(*input),
            val(*weight),
            *input,
            *weight,
            *bias,
            *spec,
            &node.value,
            g,
            sink,
        ),
        Op::BatchNorm {
            input,
            gamma,
            beta,
            mean,
            inv_std,
            training,
        } => norm::batch_norm_backward(
            val(*input),
            val(*gamma),
            *input,
            *gamma,
            *beta,
            mean,
            inv_std,
            *training,
            g,
            sink,
        ),
    }
}
