//! Reverse-mode differentiation tape.
//!
//! Ops record their forward value plus a backward rule onto a [`Tape`];
//! replaying the rules in reverse recorded order accumulates gradients for
//! every `requires_grad` node reachable from a scalar loss. A tape is
//! confined to one logical thread; distinct tapes are independent.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{CoreError, Result};
use crate::numerics::tensor::Tensor;

/// Backward rule: given the gradient of this node's output, push gradient
/// contributions `(parent_index, grad)` into the sink.
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &mut dyn FnMut(usize, Tensor))>;

pub(crate) struct Node {
    pub value: Tensor,
    pub grad: Option<Tensor>,
    pub requires_grad: bool,
    pub backward: Option<BackwardFn>,
}

#[derive(Default)]
pub(crate) struct TapeInner {
    pub nodes: Vec<Node>,
}

/// Recording tape. Cloning is shallow; clones share the same op list.
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

/// Handle to a value recorded on a tape.
#[derive(Clone)]
pub struct Var {
    pub(crate) tape: Tape,
    pub(crate) index: usize,
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("index", &self.index)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a leaf value. Gradients are accumulated for it when
    /// `requires_grad` is set.
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Node {
            value,
            grad: None,
            requires_grad,
            backward: None,
        })
    }

    /// Records a constant; no gradient flows into it.
    pub fn constant(&self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub(crate) fn push(&self, node: Node) -> Var {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(node);
        Var {
            tape: self.clone(),
            index: inner.nodes.len() - 1,
        }
    }

    pub(crate) fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub(crate) fn value_of(&self, index: usize) -> Tensor {
        self.inner.borrow().nodes[index].value.clone()
    }

    pub(crate) fn with_value<R>(&self, index: usize, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.inner.borrow().nodes[index].value)
    }

    pub(crate) fn requires_grad_of(&self, index: usize) -> bool {
        self.inner.borrow().nodes[index].requires_grad
    }

    /// Runs the backward pass from a scalar loss node, storing gradients on
    /// every `requires_grad` node reachable from it. Gradients from a prior
    /// backward call on the same tape are replaced, not accumulated.
    pub fn backward(&self, loss: &Var) -> Result<()> {
        if !self.same_tape(&loss.tape) {
            return Err(CoreError::structure("backward: loss from a different tape"));
        }
        let seed = {
            let inner = self.inner.borrow();
            let node = &inner.nodes[loss.index];
            if node.value.numel() != 1 {
                return Err(CoreError::structure(format!(
                    "backward requires a scalar loss, got shape {:?}",
                    node.value.shape()
                )));
            }
            Tensor::filled(node.value.shape(), 1.0)
        };

        let mut grads: Vec<Option<Tensor>> = vec![None; loss.index + 1];
        grads[loss.index] = Some(seed);
        let mut finished: Vec<(usize, Tensor)> = Vec::new();
        {
            let inner = self.inner.borrow();
            for i in (0..=loss.index).rev() {
                let Some(grad) = grads[i].take() else {
                    continue;
                };
                if let Some(bw) = &inner.nodes[i].backward {
                    bw(&grad, &mut |parent, contrib| {
                        debug_assert!(parent < i, "backward rule must point at earlier nodes");
                        if !inner.nodes[parent].requires_grad {
                            return;
                        }
                        match &mut grads[parent] {
                            Some(existing) => existing.add_assign(&contrib),
                            slot @ None => *slot = Some(contrib),
                        }
                    });
                }
                if inner.nodes[i].requires_grad {
                    finished.push((i, grad));
                }
            }
        }
        let mut inner = self.inner.borrow_mut();
        for node in inner.nodes.iter_mut() {
            node.grad = None;
        }
        for (i, grad) in finished {
            inner.nodes[i].grad = Some(grad);
        }
        Ok(())
    }
}

impl Var {
    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.index)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape
            .with_value(self.index, |v| v.shape().to_vec())
    }

    pub fn item(&self) -> Result<f64> {
        self.tape.with_value(self.index, |v| v.item())
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad_of(self.index)
    }

    /// Gradient stored by the most recent backward pass, if any.
    pub fn grad(&self) -> Option<Tensor> {
        self.tape.inner.borrow().nodes[self.index].grad.clone()
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub(crate) fn check_same_tape(&self, other: &Var, op: &'static str) -> Result<()> {
        if self.tape.same_tape(&other.tape) {
            Ok(())
        } else {
            Err(CoreError::structure(format!(
                "{op}: operands recorded on different tapes"
            )))
        }
    }
}
