use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;

use super::ops::Op;
use super::{Tensor, TensorError};

pub(crate) struct Node {
    pub value: Rc<Tensor>,
    pub op: Op,
    pub requires_grad: bool,
}

/// Records operations in execution order so they can be replayed backwards.
///
/// A tape is single-use: after [`Tape::backward`] it rejects a second pass
/// until [`Tape::reset`] clears it. Node ids are positions in the record, so
/// every operation's inputs precede it.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    grads: RefCell<Vec<Option<Vec<f64>>>>,
    backward_done: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.shape()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a leaf. It participates in differentiation iff
    /// `tensor.requires_grad()`.
    pub fn leaf(&self, tensor: &Tensor) -> Var<'_> {
        let requires_grad = tensor.requires_grad();
        self.push_node(tensor.detached(), Op::Leaf, requires_grad)
    }

    /// Registers a differentiable leaf regardless of the tensor's flag.
    pub fn param(&self, tensor: &Tensor) -> Var<'_> {
        self.push_node(tensor.detached(), Op::Leaf, true)
    }

    /// Registers a non-differentiable input.
    pub fn constant(&self, tensor: Tensor) -> Var<'_> {
        self.push_node(tensor.detached(), Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    /// Clears every recorded node and gradient so the tape can be reused.
    pub fn reset(&self) {
        self.nodes.borrow_mut().clear();
        self.grads.borrow_mut().clear();
        self.backward_done.set(false);
    }

    pub(crate) fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            op.inputs().iter().any(|&i| nodes[i].requires_grad)
        };
        self.push_node(value, op, requires_grad)
    }

    fn push_node(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), op, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    pub(crate) fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    pub(crate) fn owns(&self, var: &Var<'_>) -> bool {
        std::ptr::eq(self, var.tape)
    }

    /// Propagates d(loss)/d(node) back to every differentiable leaf.
    ///
    /// Leaves registered with `requires_grad` that the loss does not depend on
    /// receive an all-zero gradient.
    pub fn backward(&self, loss: Var<'_>) -> Result<(), TensorError> {
        if !self.owns(&loss) {
            return Err(TensorError::ForeignVar);
        }
        if self.backward_done.get() {
            return Err(TensorError::BackwardAlreadyRun);
        }
        let nodes = self.nodes.borrow();
        let loss_node = &nodes[loss.id];
        if loss_node.value.numel() != 1 {
            return Err(TensorError::NotScalar(loss_node.value.shape().to_vec()));
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                grads[id] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            for (input, contribution) in node.op.backward(&g, &nodes, &node.value) {
                if !nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, c)| *a += c),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        for (id, node) in nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad && grads[id].is_none() {
                grads[id] = Some(vec![0.0; node.value.numel()]);
            }
        }
        *self.grads.borrow_mut() = grads;
        self.backward_done.set(true);
        Ok(())
    }

    pub(crate) fn grad_of(&self, id: usize) -> Option<Vec<f64>> {
        self.grads.borrow().get(id).cloned().flatten()
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    /// Gradient accumulated by the last backward pass, for leaves that
    /// require one.
    pub fn grad(&self) -> Option<Tensor> {
        let g = self.tape.grad_of(self.id)?;
        let mut t = Tensor::new(self.shape(), g).ok()?;
        t.set_requires_grad(false);
        Some(t)
    }
}
