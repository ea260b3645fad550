//! Reverse-mode autodiff over a dynamically recorded graph.
//!
//! Every op returns a [`Var`] holding its value and, when any input needs a
//! gradient, a closure mapping the output gradient to input gradients.
//! Leaves created with `requires_grad` accumulate gradients across backward
//! passes until cleared; intermediate gradients live only for one pass.

use std::cell::{Cell, Ref, RefCell, RefMut};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use super::{Real, Tensor};
use crate::error::{Error, Result};

pub type BackwardFn<T> = Box<dyn Fn(&Tensor<T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T: Real> {
    value: RefCell<Tensor<T>>,
    grad: RefCell<Option<Tensor<T>>>,
    requires_grad: bool,
    parents: Vec<Var<T>>,
    backward: Option<BackwardFn<T>>,
}

/// Handle to a node of the autodiff graph. Cloning is cheap.
pub struct Var<T: Real = f32>(Rc<Node<T>>);

impl<T: Real> Clone for Var<T> {
    fn clone(&self) -> Self {
        Var(Rc::clone(&self.0))
    }
}

impl<T: Real> fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

thread_local! {
    static GRAD_DISABLED: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` without recording backward closures.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = GRAD_DISABLED.with(|g| g.replace(true));
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_DISABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(prev);
    f()
}

fn grad_enabled() -> bool {
    !GRAD_DISABLED.with(|g| g.get())
}

impl<T: Real> Var<T> {
    fn make(
        value: Tensor<T>,
        requires_grad: bool,
        parents: Vec<Var<T>>,
        backward: Option<BackwardFn<T>>,
    ) -> Self {
        Var(Rc::new(Node {
            value: RefCell::new(value),
            grad: RefCell::new(None),
            requires_grad,
            parents,
            backward,
        }))
    }

    /// A constant input; never receives a gradient.
    pub fn constant(value: Tensor<T>) -> Self {
        Self::make(value, false, Vec::new(), None)
    }

    /// A trainable leaf.
    pub fn leaf(value: Tensor<T>) -> Self {
        Self::make(value, true, Vec::new(), None)
    }

    /// Records an op result. The closure receives the output gradient and
    /// returns one optional gradient per parent, in order.
    pub fn from_op(
        value: Tensor<T>,
        parents: &[&Var<T>],
        backward: impl Fn(&Tensor<T>) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Self {
        let needs = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if needs {
            let parents = parents.iter().map(|&p| p.clone()).collect();
            Self::make(value, true, parents, Some(Box::new(backward)))
        } else {
            Self::constant(value)
        }
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn value(&self) -> Ref<'_, Tensor<T>> {
        self.0.value.borrow()
    }

    pub fn value_mut(&self) -> RefMut<'_, Tensor<T>> {
        self.0.value.borrow_mut()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.value.borrow().shape().to_vec()
    }

    pub fn grad(&self) -> Option<Tensor<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn grad_ref(&self) -> Ref<'_, Option<Tensor<T>>> {
        self.0.grad.borrow()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    pub fn item(&self) -> T {
        self.0.value.borrow().item()
    }

    /// Same node identity.
    pub fn ptr_eq(&self, other: &Var<T>) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    fn key(&self) -> *const Node<T> {
        Rc::as_ptr(&self.0)
    }

    /// Nodes reachable from `self` that take part in differentiation, parents
    /// before children.
    fn topo_order(&self) -> Vec<Var<T>> {
        let mut order = Vec::new();
        let mut seen: HashSet<*const Node<T>> = HashSet::new();
        let mut stack: Vec<(Var<T>, bool)> = vec![(self.clone(), false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                order.push(v);
                continue;
            }
            if !seen.insert(v.key()) {
                continue;
            }
            stack.push((v.clone(), true));
            for p in &v.0.parents {
                if p.requires_grad() && !seen.contains(&p.key()) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }

    /// Accumulates d(self)/d(leaf) into every trainable leaf reachable from
    /// `self`. `self` must hold a single value.
    pub fn backward(&self) -> Result<()> {
        let numel = self.value().numel();
        if numel != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        let mut grads: HashMap<*const Node<T>, Tensor<T>> = HashMap::new();
        grads.insert(self.key(), Tensor::full(&self.shape(), T::one()));
        for node in order.iter().rev() {
            let Some(g) = grads.remove(&node.key()) else {
                continue;
            };
            match &node.0.backward {
                Some(bw) => {
                    let parent_grads = bw(&g);
                    debug_assert_eq!(parent_grads.len(), node.0.parents.len());
                    for (p, pg) in node.0.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        match grads.get_mut(&p.key()) {
                            Some(acc) => acc.add_assign(&pg),
                            None => {
                                grads.insert(p.key(), pg);
                            }
                        }
                    }
                }
                None => {
                    let mut slot = node.0.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => acc.add_assign(&g),
                        None => *slot = Some(g),
                    }
                }
            }
        }
        Ok(())
    }
}
