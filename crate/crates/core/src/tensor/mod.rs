//! N-dimensional tensors with reverse-mode differentiation.
//!
//! Every operation records its parents and a backward closure when any input
//! requires a gradient. The tape is the graph itself and is rebuilt on every
//! forward pass; `backward` walks it once in reverse topological order.

mod gradcheck;
mod nn;
mod ops;

use std::cell::{Cell, RefCell};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use crate::rng::Rng;
use crate::scalar::Scalar;

pub use gradcheck::{finite_difference_check, GradCheck};
pub use nn::{causal_conv3d, rms_normalize, Conv3dSpec};

/// Backward closure: `(upstream grad, output data, parents) -> grad per parent`.
pub(crate) type BackwardFn<S> = Box<dyn Fn(&[S], &[S], &[Tensor<S>]) -> Vec<Option<Vec<S>>>>;

struct Node<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<S>>>,
    parents: Vec<Tensor<S>>,
    backward: Option<BackwardFn<S>>,
}

pub struct Tensor<S: Scalar = f32>(Rc<Node<S>>);

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<S: Scalar> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head: Vec<S> = self.data().iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("head", &head)
            .finish()
    }
}

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` without recording any backward graph.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let out = f();
    GRAD_ENABLED.with(|g| g.set(prev));
    out
}

fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<S: Scalar> Tensor<S> {
    fn leaf(shape: Vec<usize>, data: Vec<S>, requires_grad: bool) -> Self {
        assert_eq!(
            numel(&shape),
            data.len(),
            "shape {shape:?} does not match {} elements",
            data.len()
        );
        assert!(shape.iter().all(|&d| d > 0), "zero extent in shape {shape:?}");
        Tensor(Rc::new(Node {
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            parents: Vec::new(),
            backward: None,
        }))
    }

    /// Constant tensor (no gradient tracked).
    pub fn new(shape: &[usize], data: Vec<S>) -> Self {
        Self::leaf(shape.to_vec(), data, false)
    }

    /// Trainable leaf.
    pub fn param(shape: &[usize], data: Vec<S>) -> Self {
        Self::leaf(shape.to_vec(), data, true)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn full(shape: &[usize], v: S) -> Self {
        Self::new(shape, vec![v; numel(shape)])
    }

    pub fn scalar(v: S) -> Self {
        Self::new(&[1], vec![v])
    }

    pub fn randn(shape: &[usize], rng: &mut Rng) -> Self {
        Self::new(shape, rng.normal_vec(numel(shape)))
    }

    /// Result of an operation. Records the backward closure only when gradients
    /// are enabled and some parent needs one.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<S>,
        parents: Vec<Tensor<S>>,
        backward: BackwardFn<S>,
    ) -> Self {
        let track = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if !track {
            return Self::leaf(shape, data, false);
        }
        assert_eq!(numel(&shape), data.len());
        Tensor(Rc::new(Node {
            shape,
            data,
            requires_grad: true,
            grad: RefCell::new(None),
            parents,
            backward: Some(backward),
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.0.shape[axis]
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<S> {
        self.0.data.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> S {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    pub fn grad(&self) -> Option<Vec<S>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::new(self.shape(), self.to_vec())
    }

    /// Same values as a fresh trainable leaf.
    pub fn detach_param(&self) -> Self {
        Self::param(self.shape(), self.to_vec())
    }

    pub fn same_handle(&self, other: &Tensor<S>) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    fn key(&self) -> *const Node<S> {
        Rc::as_ptr(&self.0)
    }

    /// Back-propagates from a single-element tensor, accumulating into `grad`
    /// of every tensor on the path that requires one.
    pub fn backward(&self) {
        assert_eq!(self.numel(), 1, "backward() needs a scalar output");
        self.backward_with(vec![S::one()]);
    }

    pub fn backward_with(&self, seed: Vec<S>) {
        assert_eq!(seed.len(), self.numel());
        if !self.requires_grad() {
            return;
        }
        let order = self.topo_order();
        let mut pending: HashMap<*const Node<S>, Vec<S>> = HashMap::new();
        pending.insert(self.key(), seed);
        for node in order.iter().rev() {
            let Some(g) = pending.remove(&node.key()) else {
                continue;
            };
            if let Some(bw) = &node.0.backward {
                let grads = bw(&g, &node.0.data, &node.0.parents);
                debug_assert_eq!(grads.len(), node.0.parents.len());
                for (parent, pg) in node.0.parents.iter().zip(grads) {
                    let Some(pg) = pg else { continue };
                    if !parent.requires_grad() {
                        continue;
                    }
                    debug_assert_eq!(pg.len(), parent.numel());
                    match pending.get_mut(&parent.key()) {
                        Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a = *a + *b),
                        None => {
                            pending.insert(parent.key(), pg);
                        }
                    }
                }
            }
            let mut slot = node.0.grad.borrow_mut();
            match slot.as_mut() {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a = *a + *b),
                None => *slot = Some(g),
            }
        }
    }

    fn topo_order(&self) -> Vec<Tensor<S>> {
        let mut order = Vec::new();
        let mut seen: HashSet<*const Node<S>> = HashSet::new();
        // iterative post-order DFS
        let mut stack: Vec<(Tensor<S>, usize)> = vec![(self.clone(), 0)];
        seen.insert(self.key());
        while let Some((node, child)) = stack.pop() {
            if child < node.0.parents.len() {
                let next = node.0.parents[child].clone();
                stack.push((node, child + 1));
                if next.requires_grad() && seen.insert(next.key()) {
                    stack.push((next, 0));
                }
            } else {
                order.push(node);
            }
        }
        order
    }
}

impl<S: Scalar> Drop for Node<S> {
    fn drop(&mut self) {
        // Unlink long parent chains iteratively to keep drop off the call stack.
        let mut stack: Vec<Tensor<S>> = std::mem::take(&mut self.parents);
        while let Some(t) = stack.pop() {
            if let Ok(mut node) = Rc::try_unwrap(t.0) {
                stack.append(&mut node.parents);
            }
        }
    }
}
