//! Tape-based reverse-mode differentiation.
//!
//! Every op appends a node holding its forward value and a closure mapping
//! the output gradient to input gradients. Nodes are appended in evaluation
//! order, so walking the tape backwards visits them in reverse topological
//! order.

use std::borrow::Cow;
use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::{Scalar, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a backward rule sees when it runs.
pub struct BackwardCtx<'a, T> {
    /// Gradient of the loss with respect to this node's output.
    pub grad: &'a [T],
    pub output: &'a Tensor<T>,
    pub inputs: Vec<&'a Tensor<T>>,
    /// Whether each input needs a gradient; rules may return `None` otherwise.
    pub needs: Vec<bool>,
}

pub type BackwardFn<T> = Box<dyn Fn(&BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>>>;

struct Node<'s, T: Scalar> {
    name: &'static str,
    value: Cow<'s, Tensor<T>>,
    parents: Vec<Var>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

pub struct Graph<'s, T: Scalar> {
    nodes: Vec<Node<'s, T>>,
    store: Option<&'s ParamStore<T>>,
    bound: HashMap<ParamId, Var>,
    rng: Option<ChaCha8Rng>,
    grads: Vec<Option<Vec<T>>>,
    fault: Option<String>,
    branches: Option<u64>,
}

impl<'s, T: Scalar> Graph<'s, T> {
    /// A graph whose parameters are read (without copying) from `store`.
    pub fn new(store: &'s ParamStore<T>) -> Self {
        Self {
            nodes: Vec::new(),
            store: Some(store),
            bound: HashMap::new(),
            rng: None,
            grads: Vec::new(),
            fault: None,
            branches: None,
        }
    }

    /// A graph with no parameter store, for plain tensor computations.
    pub fn detached() -> Self {
        Self {
            nodes: Vec::new(),
            store: None,
            bound: HashMap::new(),
            rng: None,
            grads: Vec::new(),
            fault: None,
            branches: None,
        }
    }

    /// Switches to training mode; dropout masks are drawn from a generator
    /// seeded with `seed`.
    pub fn training(mut self, seed: u64) -> Self {
        self.rng = Some(ChaCha8Rng::seed_from_u64(seed));
        self
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub(crate) fn rng_mut(&mut self) -> Option<&mut ChaCha8Rng> {
        self.rng.as_mut()
    }

    /// Test hook: negates every gradient produced by ops named `op`.
    pub fn inject_sign_fault(&mut self, op: &str) {
        self.fault = Some(op.to_string());
    }

    /// Starts hashing every piecewise decision (activation sign, max-pool
    /// argmax, loss clamping) so two evaluations can be compared for lying on
    /// the same smooth piece.
    pub fn track_branches(mut self) -> Self {
        self.branches = Some(0xcbf2_9ce4_8422_2325);
        self
    }

    pub fn branch_signature(&self) -> Option<u64> {
        self.branches
    }

    pub(crate) fn note_branches(&mut self, decisions: impl IntoIterator<Item = u64>) {
        if let Some(h) = &mut self.branches {
            for d in decisions {
                *h = (*h ^ d).wrapping_mul(0x0100_0000_01b3);
            }
        }
    }

    pub(crate) fn tracking_branches(&self) -> bool {
        self.branches.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf; it is differentiated iff `tensor.requires_grad()`.
    pub fn input(&mut self, tensor: Tensor<T>) -> Var {
        let requires_grad = tensor.requires_grad();
        self.push_leaf("input", Cow::Owned(tensor), requires_grad)
    }

    /// Adds a leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.push_leaf("constant", Cow::Owned(tensor), false)
    }

    /// Binds a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        if let Some(&v) = self.bound.get(&id) {
            return Ok(v);
        }
        let store = self
            .store
            .ok_or_else(|| invalid("graph has no parameter store"))?;
        if id.index() >= store.len() {
            return Err(invalid(format!("parameter id {} out of range", id.index())));
        }
        let v = self.push_leaf("param", Cow::Borrowed(store.value(id)), true);
        self.bound.insert(id, v);
        Ok(v)
    }

    fn push_leaf(&mut self, name: &'static str, value: Cow<'s, Tensor<T>>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            name,
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Appends an op node. The backward rule is dropped when no parent needs
    /// a gradient.
    pub fn record(
        &mut self,
        name: &'static str,
        value: Tensor<T>,
        parents: &[Var],
        backward: impl Fn(&BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> + 'static,
    ) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            name,
            value: Cow::Owned(value),
            parents: parents.to_vec(),
            backward: if requires_grad { Some(Box::new(backward)) } else { None },
            requires_grad,
        });
        Var(self.nodes.len() - 1)
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

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].name
    }

    /// Reverse sweep from a scalar `loss`, accumulating gradients on every
    /// node that requires one.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(invalid(format!(
                "backward requires a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if let Some(rule) = &node.backward {
                let ctx = BackwardCtx {
                    grad: &g,
                    output: &node.value,
                    inputs: node.parents.iter().map(|p| &*self.nodes[p.0].value).collect(),
                    needs: node.parents.iter().map(|p| self.nodes[p.0].requires_grad).collect(),
                };
                let mut pgrads = rule(&ctx);
                if pgrads.len() != node.parents.len() {
                    return Err(Error::Internal(format!(
                        "{} returned {} gradients for {} inputs",
                        node.name,
                        pgrads.len(),
                        node.parents.len()
                    )));
                }
                if self.fault.as_deref() == Some(node.name) {
                    for pg in pgrads.iter_mut().flatten() {
                        pg.iter_mut().for_each(|x| *x = -*x);
                    }
                }
                for (p, pg) in node.parents.iter().zip(pgrads) {
                    let Some(pg) = pg else { continue };
                    if !self.nodes[p.0].requires_grad {
                        continue;
                    }
                    if pg.len() != self.nodes[p.0].value.numel() {
                        return Err(Error::Internal(format!(
                            "{} produced a gradient of {} elements for an input of {}",
                            node.name,
                            pg.len(),
                            self.nodes[p.0].value.numel()
                        )));
                    }
                    match &mut self.grads[p.0] {
                        Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &x)| *a += x),
                        slot @ None => *slot = Some(pg),
                    }
                }
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for every parameter bound on this graph; parameters off the
    /// loss path get zeros.
    pub fn param_grads(&self) -> Vec<(ParamId, Vec<T>)> {
        let mut out: Vec<_> = self
            .bound
            .iter()
            .map(|(&id, &v)| {
                let g = self
                    .grad(v)
                    .map(<[T]>::to_vec)
                    .unwrap_or_else(|| vec![T::zero(); self.value(v).numel()]);
                (id, g)
            })
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

impl<T: Scalar> ParamStore<T> {
    /// Replaces every parameter's gradient with the supplied ones; parameters
    /// missing from `grads` receive zeros.
    pub fn set_grads(&mut self, grads: Vec<(ParamId, Vec<T>)>) -> Result<()> {
        for p in self.iter_mut() {
            p.value.zero_grad();
            let zeros = vec![T::zero(); p.value.numel()];
            p.value.accumulate_grad(&zeros)?;
        }
        for (id, g) in grads {
            self.value_mut(id).accumulate_grad(&g)?;
        }
        Ok(())
    }
}
