use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};

use super::{Scalar, TensorData};

/// Backward rule of one recorded operation.
pub trait GradFn<T: Scalar> {
    fn name(&self) -> &'static str;

    /// Maps the gradient of the output to one gradient per parent. Entries for
    /// parents that do not require a gradient may be `None`.
    fn backward(
        &self,
        grad_out: &[T],
        output: &TensorData<T>,
        parents: &[Tensor<T>],
    ) -> Vec<Option<Vec<T>>>;
}

struct Node<T: Scalar> {
    parents: Vec<Tensor<T>>,
    grad_fn: Box<dyn GradFn<T>>,
}

struct Inner<T: Scalar> {
    value: TensorData<T>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<T>>>,
    node: RefCell<Option<Node<T>>>,
    consumed: Cell<bool>,
}

/// Reference-counted handle to a value in an autodiff graph.
///
/// Cloning is cheap and shares the node. A graph is confined to the thread
/// that built it; run independent forward passes on separate threads.
pub struct Tensor<T: Scalar = f32>(Rc<Inner<T>>);

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = self.0.node.borrow().as_ref().map(|n| n.grad_fn.name());
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &op)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    fn wrap(value: TensorData<T>, requires_grad: bool, node: Option<Node<T>>) -> Self {
        Tensor(Rc::new(Inner {
            value,
            requires_grad,
            grad: RefCell::new(None),
            node: RefCell::new(node),
            consumed: Cell::new(false),
        }))
    }

    /// A value that never receives a gradient.
    pub fn constant(value: TensorData<T>) -> Self {
        Self::wrap(value, false, None)
    }

    /// A leaf that collects gradients during [`Tensor::backward`].
    pub fn leaf(value: TensorData<T>) -> Self {
        Self::wrap(value, true, None)
    }

    /// Records the result of an operation. The node is dropped (and the result
    /// becomes a constant) when no parent requires a gradient.
    pub fn from_op(
        value: TensorData<T>,
        parents: Vec<Tensor<T>>,
        grad_fn: impl GradFn<T> + 'static,
    ) -> Self {
        if parents.iter().any(Tensor::requires_grad) {
            let node = Node { parents, grad_fn: Box::new(grad_fn) };
            Self::wrap(value, true, Some(node))
        } else {
            Self::constant(value)
        }
    }

    pub fn value(&self) -> &TensorData<T> {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn data(&self) -> &[T] {
        self.0.value.data()
    }

    pub fn numel(&self) -> usize {
        self.0.value.numel()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.borrow().is_none() && !self.0.consumed.get()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        match self.data() {
            [v] => Ok(*v),
            _ => Err(Error::ContractViolation(format!(
                "item() on a tensor of shape {:?}",
                self.shape()
            ))),
        }
    }

    pub fn grad(&self) -> Option<TensorData<T>> {
        let grad = self.0.grad.borrow();
        grad.as_ref()
            .map(|g| TensorData::new(self.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    pub fn zero_grad(&self) {
        self.0.grad.borrow_mut().take();
    }

    /// A constant copy of this value, cut off from the graph.
    pub fn detach(&self) -> Self {
        Self::constant(self.0.value.clone())
    }

    fn accumulate(&self, g: Vec<T>) {
        debug_assert_eq!(g.len(), self.numel());
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g),
        }
    }

    fn key(&self) -> *const Inner<T> {
        Rc::as_ptr(&self.0)
    }

    /// Parents-before-children order of every gradient-carrying tensor reachable from `self`.
    fn topological_order(&self) -> Result<Vec<Tensor<T>>> {
        let mut visited = HashSet::new();
        let mut order = Vec::new();
        let mut stack = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.key()) {
                continue;
            }
            if t.0.consumed.get() {
                return Err(Error::State(
                    "graph was already consumed by an earlier backward pass".into(),
                ));
            }
            let node = t.0.node.borrow();
            let parents: Vec<Tensor<T>> = node
                .as_ref()
                .map(|n| n.parents.iter().filter(|p| p.requires_grad()).cloned().collect())
                .unwrap_or_default();
            drop(node);
            stack.push((t, true));
            for p in parents.into_iter().rev() {
                if !visited.contains(&p.key()) {
                    stack.push((p, false));
                }
            }
        }
        Ok(order)
    }

    /// Reverse-mode pass from a scalar loss. Populates `grad` on every reachable
    /// tensor that requires one, then releases the graph; calling it again on
    /// the same graph is a state error.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::ContractViolation(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(Error::ContractViolation(
                "loss does not depend on any tensor that requires a gradient".into(),
            ));
        }
        let order = self.topological_order()?;
        self.accumulate(vec![T::one()]);

        for t in order.iter().rev() {
            let node = t.0.node.borrow();
            let Some(node) = node.as_ref() else { continue };
            let grad = t.0.grad.borrow();
            let Some(grad) = grad.as_ref() else { continue };
            let grads = node.grad_fn.backward(grad, &t.0.value, &node.parents);
            debug_assert_eq!(grads.len(), node.parents.len(), "{}", node.grad_fn.name());
            for (parent, g) in node.parents.iter().zip(grads) {
                if let Some(g) = g.filter(|_| parent.requires_grad()) {
                    parent.accumulate(g);
                }
            }
        }

        for t in &order {
            if t.0.node.borrow_mut().take().is_some() {
                t.0.consumed.set(true);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ops;

    #[test]
    fn sum_gives_unit_gradient() {
        let x = Tensor::leaf(TensorData::<f64>::from_fn([2, 3], |i| i as f64));
        ops::sum(&x).backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn second_backward_is_state_error() {
        let x = Tensor::leaf(TensorData::<f32>::filled([2], 1.0));
        let loss = ops::sum(&ops::relu(&x));
        loss.backward().unwrap();
        assert!(matches!(loss.backward(), Err(Error::State(_))));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let x = Tensor::leaf(TensorData::<f32>::filled([2], 1.0));
        let y = ops::relu(&x);
        assert!(matches!(y.backward(), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn constant_inputs_build_no_graph() {
        let x = Tensor::constant(TensorData::<f32>::filled([3], 2.0));
        let y = ops::relu(&x);
        assert!(!y.requires_grad());
        assert!(y.is_leaf());
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // loss = sum(x * x) → grad 2x
        let x = Tensor::leaf(TensorData::<f64>::new([3], vec![1.0, -2.0, 3.0]).unwrap());
        let loss = ops::sum(&ops::mul(&x, &x).unwrap());
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn diamond_graph_visits_each_node_once() {
        let x = Tensor::leaf(TensorData::<f64>::new([2], vec![0.5, -1.5]).unwrap());
        let a = ops::sigmoid(&x);
        let b = ops::add(&a, &a).unwrap();
        let c = ops::mul(&b, &a).unwrap();
        ops::sum(&c).backward().unwrap();
        // c = 2 s², dc/dx = 4 s · s(1 - s)
        for (g, &xv) in x.grad().unwrap().data().iter().zip(&[0.5f64, -1.5]) {
            let s = 1.0 / (1.0 + (-xv).exp());
            assert!((g - 4.0 * s * s * (1.0 - s)).abs() < 1e-12);
        }
    }
}
