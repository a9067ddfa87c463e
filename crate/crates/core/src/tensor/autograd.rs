//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every op appends one node holding its forward value, the ids of its inputs and a
//! closure mapping the output gradient to input gradients. Node ids are assigned in
//! execution order, so a reverse sweep over ids is a valid topological traversal and
//! visits every node once. Gradients reaching the same node from several consumers are
//! summed.

use std::cell::{Cell, Ref, RefCell};
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Maps the output gradient to one gradient per parent. `needs[i]` tells whether parent
/// `i` wants a gradient at all; entries for parents that do not may be `None`.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    value: Rc<Tensor<T>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
    consumed: Cell<bool>,
    stochastic: Cell<bool>,
}

pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<T> Copy for Var<'_, T> {}

impl<T> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}", self.id)
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        Rc::clone(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()), consumed: Cell::new(false), stochastic: Cell::new(false) }
    }

    /// Trainable leaf.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(Rc::new(value), Vec::new(), None, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(Rc::new(value), Vec::new(), None, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True once any op drew randomness from a stateful source.
    pub fn is_stochastic(&self) -> bool {
        self.stochastic.get()
    }

    pub(crate) fn mark_stochastic(&self) {
        self.stochastic.set(true);
    }

    /// Drop every recorded node so the tape can be reused for another step.
    pub fn reset(&mut self) {
        self.nodes.get_mut().clear();
        self.consumed.set(false);
        self.stochastic.set(false);
    }

    pub(crate) fn push_op<'t>(
        &'t self,
        value: Tensor<T>,
        parents: &[Var<'t, T>],
        backward: BackwardFn<T>,
    ) -> Var<'t, T> {
        let ids: Vec<usize> = parents.iter().map(|p| p.id).collect();
        let requires_grad = {
            let nodes = self.nodes.borrow();
            ids.iter().any(|&i| nodes[i].requires_grad)
        };
        let backward = requires_grad.then_some(backward);
        self.push(Rc::new(value), ids, backward, requires_grad)
    }

    fn push(
        &self,
        value: Rc<Tensor<T>>,
        parents: Vec<usize>,
        backward: Option<BackwardFn<T>>,
        requires_grad: bool,
    ) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { value, parents, backward, requires_grad });
        Var { tape: self, id }
    }

    pub(crate) fn owns(&self, var: &Var<'_, T>) -> bool {
        std::ptr::eq(self, var.tape)
    }

    /// Propagate d(loss)/d(node) back to every trainable leaf.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        if !self.owns(&loss) {
            return Err(Error::Autograd("loss was recorded on a different tape".into()));
        }
        if self.consumed.get() {
            return Err(Error::Autograd("backward already ran on this tape; reset it first".into()));
        }
        let nodes: Ref<'_, Vec<Node<T>>> = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::Autograd(format!(
                "loss must be a scalar, got shape {:?}",
                root.value.shape()
            )));
        }
        if !root.requires_grad {
            return Err(Error::Autograd("loss is detached from every trainable input".into()));
        }
        self.consumed.set(true);

        let mut pending: Vec<Option<Tensor<T>>> = (0..=loss.id).map(|_| None).collect();
        let mut leaves: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        pending[loss.id] = Some(Tensor::ones(root.value.shape()));

        for id in (0..=loss.id).rev() {
            let Some(grad) = pending[id].take() else { continue };
            let node = &nodes[id];
            match &node.backward {
                None => {
                    if node.requires_grad {
                        leaves[id] = Some(grad);
                    }
                }
                Some(rule) => {
                    let needs: Vec<bool> = node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
                    let contributions = rule(&grad, &needs);
                    debug_assert_eq!(contributions.len(), node.parents.len());
                    for ((&parent, contribution), &need) in
                        node.parents.iter().zip(contributions).zip(&needs)
                    {
                        let Some(c) = contribution else { continue };
                        if !need {
                            continue;
                        }
                        match &mut pending[parent] {
                            Some(acc) => acc.add_assign(&c),
                            slot @ None => *slot = Some(c),
                        }
                    }
                }
            }
        }
        let requires: Vec<bool> = nodes.iter().map(|n| n.requires_grad && n.backward.is_none()).collect();
        let shapes: Vec<Vec<usize>> = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads: leaves, requires, shapes })
    }
}

/// Gradients of the loss with respect to the trainable leaves of one tape.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    requires: Vec<bool>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for a trainable leaf; zeros when the loss does not reach it.
    pub fn wrt(&self, var: Var<'_, T>) -> Option<Tensor<T>> {
        if !*self.requires.get(var.id)? {
            return None;
        }
        Some(match &self.grads[var.id] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.id]),
        })
    }

    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(var.id)?.as_ref()
    }

    pub fn take(&mut self, var: Var<'_, T>) -> Option<Tensor<T>> {
        if !*self.requires.get(var.id)? {
            return None;
        }
        Some(self.grads[var.id].take().unwrap_or_else(|| Tensor::zeros(&self.shapes[var.id])))
    }
}
