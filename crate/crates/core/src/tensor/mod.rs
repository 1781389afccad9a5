//! Dense tensors with reverse-mode automatic differentiation.
//!
//! Every differentiable operation the model needs lives here. Tensors are
//! reference-counted handles onto tape nodes; each op records the backward
//! closure needed to push gradients to its parents. `backward` on a scalar
//! loss walks the recorded graph in reverse topological order.
//!
//! Default training precision is `f32`; the same code instantiates at `f64`
//! for tight finite-difference oracles.

mod adam;
pub mod gradcheck;
mod ops;
pub(crate) mod raw;

pub use adam::{adam_step, AdamState};

use std::cell::RefCell;
use std::collections::HashSet;
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::rc::Rc;

use crate::error::{Error, Result};

/// Floating-point element type for tensors.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + num_traits::ToPrimitive + Debug + Display + Sum + 'static
{
    fn from_f64_(v: f64) -> Self {
        num_traits::FromPrimitive::from_f64(v).unwrap()
    }
    fn to_f64_(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

type BackwardFn<T> = Box<dyn Fn(&[T]) -> Vec<Vec<T>>>;

struct Node<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
    parents: Vec<Tensor<T>>,
    backward: Option<BackwardFn<T>>,
}

/// A dense row-major tensor participating in the gradient tape.
#[derive(Clone)]
pub struct Tensor<T: Scalar> {
    node: Rc<RefCell<Node<T>>>,
}

impl<T: Scalar> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = self.node.borrow();
        f.debug_struct("Tensor")
            .field("shape", &n.shape)
            .field("requires_grad", &n.requires_grad)
            .finish()
    }
}

fn check_finite<T: Scalar>(data: &[T], what: &str) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} produced NaN/Inf")));
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    fn from_node(node: Node<T>) -> Self {
        Tensor { node: Rc::new(RefCell::new(node)) }
    }

    /// Constant tensor (no gradient).
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        check_finite(&data, "tensor construction")?;
        Ok(Self::from_node(Node {
            shape: shape.to_vec(),
            data,
            grad: None,
            requires_grad: false,
            parents: vec![],
            backward: None,
        }))
    }

    /// Trainable parameter: gradients accumulate in `grad`.
    pub fn param(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let t = Self::from_vec(shape, data)?;
        {
            let mut n = t.node.borrow_mut();
            n.requires_grad = true;
            let len = n.data.len();
            n.grad = Some(vec![T::zero(); len]);
        }
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self::from_vec(shape, vec![T::zero(); numel]).unwrap()
    }

    pub fn scalar(v: T) -> Result<Self> {
        Self::from_vec(&[1], vec![v])
    }

    pub fn shape(&self) -> Vec<usize> {
        self.node.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.node.borrow().data.len()
    }

    pub fn data(&self) -> Vec<T> {
        self.node.borrow().data.clone()
    }

    /// Overwrite the values in place (optimizer updates, perturbations).
    pub fn set_data(&self, data: Vec<T>) -> Result<()> {
        let mut n = self.node.borrow_mut();
        if data.len() != n.data.len() {
            return Err(Error::Dimension(format!(
                "set_data length {} != tensor numel {}",
                data.len(),
                n.data.len()
            )));
        }
        n.data = data;
        Ok(())
    }

    pub fn requires_grad(&self) -> bool {
        self.node.borrow().requires_grad
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.node.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        let mut n = self.node.borrow_mut();
        if n.requires_grad {
            let len = n.data.len();
            n.grad = Some(vec![T::zero(); len]);
        }
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<T> {
        let n = self.node.borrow();
        if n.data.len() != 1 {
            return Err(Error::Dimension(format!(
                "item() on tensor of shape {:?}",
                n.shape
            )));
        }
        Ok(n.data[0])
    }

    /// Interpret as a 2-D matrix.
    pub(crate) fn dims2(&self) -> Result<(usize, usize)> {
        let n = self.node.borrow();
        match n.shape.len() {
            2 => Ok((n.shape[0], n.shape[1])),
            1 => Ok((1, n.shape[0])),
            _ => Err(Error::Dimension(format!(
                "expected 2-D tensor, got shape {:?}",
                n.shape
            ))),
        }
    }

    /// Record the result of an op on the tape.
    pub(crate) fn make_op(
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: impl Fn(&[T]) -> Vec<Vec<T>> + 'static,
        what: &str,
    ) -> Result<Self> {
        check_finite(&data, what)?;
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if !requires_grad {
            return Self::from_vec(&shape, data);
        }
        Ok(Self::from_node(Node {
            shape,
            data,
            grad: None,
            requires_grad: true,
            parents,
            backward: Some(Box::new(backward)),
        }))
    }

    fn accumulate_grad(&self, g: &[T]) {
        let mut n = self.node.borrow_mut();
        if !n.requires_grad {
            return;
        }
        let len = n.data.len();
        let buf = n.grad.get_or_insert_with(|| vec![T::zero(); len]);
        debug_assert_eq!(buf.len(), g.len());
        for (b, &v) in buf.iter_mut().zip(g) {
            *b = *b + v;
        }
    }

    /// Reverse-mode gradient of a scalar loss. Gradients accumulate; call
    /// `zero_grad` on parameters between steps.
    pub fn backward(&self) -> Result<()> {
        {
            let n = self.node.borrow();
            if n.data.len() != 1 {
                return Err(Error::Usage(format!(
                    "backward requires a scalar, got shape {:?}",
                    n.shape
                )));
            }
            if n.backward.is_none() {
                return Err(Error::Usage(
                    "backward on a tensor with no recorded computation".into(),
                ));
            }
        }

        // Post-order DFS over parents, then replay in reverse.
        let mut topo: Vec<Tensor<T>> = Vec::new();
        let mut visited: HashSet<*const Node<T>> = HashSet::new();
        let mut stack: Vec<(Tensor<T>, usize)> = vec![(self.clone(), 0)];
        visited.insert(Rc::as_ptr(&self.node) as *const _);
        while let Some((t, idx)) = stack.pop() {
            let next = {
                let n = t.node.borrow();
                n.parents.get(idx).cloned()
            };
            match next {
                Some(p) => {
                    stack.push((t, idx + 1));
                    let key = Rc::as_ptr(&p.node) as *const _;
                    if visited.insert(key) {
                        stack.push((p, 0));
                    }
                }
                None => topo.push(t),
            }
        }

        self.accumulate_grad(&[T::one()]);

        for t in topo.iter().rev() {
            let (grad, parents, parent_grads) = {
                let n = t.node.borrow();
                let grad = match &n.grad {
                    Some(g) => g.clone(),
                    None => continue,
                };
                let f = match &n.backward {
                    Some(f) => f,
                    None => continue,
                };
                let pg = f(&grad);
                (grad, n.parents.clone(), pg)
            };
            let _ = grad;
            debug_assert_eq!(parents.len(), parent_grads.len());
            for (p, g) in parents.iter().zip(parent_grads.iter()) {
                p.accumulate_grad(g);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_data_length_checked() {
        assert!(Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn non_finite_input_rejected() {
        let err = Tensor::<f64>::from_vec(&[2], vec![1.0, f64::NAN]);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn backward_without_tape_is_usage_error() {
        let t = Tensor::<f64>::param(&[1], vec![2.0]).unwrap();
        assert!(matches!(t.backward(), Err(Error::Usage(_))));
    }

    #[test]
    fn sum_of_squares_gradient() {
        // loss = sum(x^2) -> grad = 2x
        let x = Tensor::<f64>::param(&[4], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let sq = x.mul(&x).unwrap();
        let loss = sq.sum_all().unwrap();
        loss.backward().unwrap();
        let g = x.grad().unwrap();
        for (gi, xi) in g.iter().zip(x.data()) {
            assert!((gi - 2.0 * xi).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_backward_accumulates() {
        let x = Tensor::<f64>::param(&[2], vec![1.0, 2.0]).unwrap();
        for pass in 1..=3u32 {
            let loss = x.mul(&x).unwrap().sum_all().unwrap();
            loss.backward().unwrap();
            let g = x.grad().unwrap();
            assert!((g[0] - 2.0 * pass as f64).abs() < 1e-12);
        }
    }
}
