//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Every op appends a node holding its value and, when any input needs a
//! gradient, a backward closure mapping the output gradient to input
//! gradients. `Graph::backward` replays the nodes in reverse.

use std::collections::HashMap;

use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Arguments handed to a backward closure.
pub struct BackwardCtx<'a> {
    pub grad: &'a Tensor,
    pub inputs: Vec<&'a Tensor>,
    pub output: &'a Tensor,
}

pub type BackwardFn = Box<dyn Fn(&BackwardCtx<'_>) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    inputs: Vec<Var>,
    backward: Option<BackwardFn>,
    needs_grad: bool,
}

enum Params<'p> {
    Mut(&'p mut ParamStore),
    Shared(&'p ParamStore),
}

/// Whether normalization layers use batch statistics and update running ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub struct Graph<'p> {
    nodes: Vec<Node>,
    params: Params<'p>,
    param_vars: HashMap<ParamId, Var>,
    mode: Mode,
    record: bool,
}

impl<'p> Graph<'p> {
    /// Training graph: batch statistics, running-stat updates, gradients recorded.
    pub fn train(params: &'p mut ParamStore) -> Self {
        Graph { nodes: Vec::new(), params: Params::Mut(params), param_vars: HashMap::new(), mode: Mode::Train, record: true }
    }

    /// Inference graph over read-only parameters. Nothing is recorded for backward.
    pub fn eval(params: &'p ParamStore) -> Self {
        Graph { nodes: Vec::new(), params: Params::Shared(params), param_vars: HashMap::new(), mode: Mode::Eval, record: false }
    }

    /// Eval-mode statistics but with gradients recorded (for gradient checks of eval paths).
    pub fn eval_with_grad(params: &'p ParamStore) -> Self {
        Graph { nodes: Vec::new(), params: Params::Shared(params), param_vars: HashMap::new(), mode: Mode::Eval, record: true }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn params(&self) -> &ParamStore {
        match &self.params {
            Params::Mut(p) => p,
            Params::Shared(p) => p,
        }
    }

    /// Mutable parameter access; only available on training graphs.
    pub fn params_mut(&mut self) -> Option<&mut ParamStore> {
        match &mut self.params {
            Params::Mut(p) => Some(p),
            Params::Shared(_) => None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Vec::new(), None, false)
    }

    /// An input leaf whose gradient is tracked.
    pub fn input(&mut self, t: Tensor) -> Var {
        let needs = self.record;
        self.push(t, Vec::new(), None, needs)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let entry = self.params().entry(id);
        let needs = self.record && entry.kind.trainable();
        let value = entry.value.clone();
        let v = self.push(value, Vec::new(), None, needs);
        self.param_vars.insert(id, v);
        v
    }

    /// Appends an op node. `backward` receives the output gradient and must
    /// return one entry per input (None where no gradient is produced).
    pub fn op(&mut self, inputs: &[Var], value: Tensor, backward: BackwardFn) -> Var {
        let needs = self.record && inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        let bw = if needs { Some(backward) } else { None };
        self.push(value, inputs.to_vec(), bw, needs)
    }

    fn push(&mut self, value: Tensor, inputs: Vec<Var>, backward: Option<BackwardFn>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, inputs, backward, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).numel(), 1, "backward needs a scalar output");
        let seed = Tensor::full(self.value(loss).shape(), 1.0);
        self.backward_with(loss, seed)
    }

    /// Reverse pass seeded with an explicit output gradient.
    pub fn backward_with(&self, out: Var, seed: Tensor) -> Gradients {
        assert_eq!(seed.shape(), self.value(out).shape(), "seed gradient shape mismatch");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            let Some(bw) = &node.backward else { continue };
            let Some(g) = grads[i].take() else { continue };
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let ctx = BackwardCtx { grad: &g, inputs, output: &node.value };
            let in_grads = bw(&ctx);
            debug_assert_eq!(in_grads.len(), node.inputs.len());
            for (v, ig) in node.inputs.iter().zip(in_grads) {
                let Some(ig) = ig else { continue };
                if !self.nodes[v.0].needs_grad {
                    continue;
                }
                debug_assert_eq!(ig.shape(), self.nodes[v.0].value.shape(), "gradient shape for node {}", v.0);
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&ig),
                    slot @ None => *slot = Some(ig),
                }
            }
            // interior gradients are dropped once propagated; only leaves are kept
        }
        let params = self.param_vars.iter().map(|(&id, &v)| (id, v)).collect();
        Gradients { grads, params }
    }
}

/// Result of a reverse pass. Holds gradients of leaf nodes (inputs and parameters).
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: HashMap<ParamId, Var>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id).and_then(|&v| self.wrt(v))
    }

    /// Moves parameter gradients out, keyed by parameter id.
    pub fn into_param_grads(mut self) -> HashMap<ParamId, Tensor> {
        let mut out = HashMap::new();
        for (id, v) in std::mem::take(&mut self.params) {
            if let Some(g) = self.grads[v.0].take() {
                out.insert(id, g);
            }
        }
        out
    }
}
