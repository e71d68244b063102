use std::cell::{Ref, RefCell, RefMut};
use std::collections::HashSet;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::rc::Rc;

/// Scalar element type for tensors: `f32` for training, `f64` for gradient
/// checking. Not sealed, but nothing else is expected to implement it.
pub trait Real:
    Copy
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Default
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn maximum(self, other: Self) -> Self;
    fn is_finite(self) -> bool;
    fn mul_add(self, a: Self, b: Self) -> Self;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn exp(self) -> Self {
                self.exp()
            }
            fn ln(self) -> Self {
                self.ln()
            }
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            fn tanh(self) -> Self {
                self.tanh()
            }
            fn abs(self) -> Self {
                self.abs()
            }
            fn maximum(self, other: Self) -> Self {
                self.max(other)
            }
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            fn mul_add(self, a: Self, b: Self) -> Self {
                <$t>::mul_add(self, a, b)
            }
        }
    };
}
impl_real!(f32);
impl_real!(f64);

// (out_grad, out_data, parents) -> accumulate into each parent's grad.
type BackwardFn<E> = Box<dyn Fn(&[E], &[E], &[Tensor<E>])>;

pub(crate) struct Inner<E: Real> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<E>>,
    grad: RefCell<Option<Vec<E>>>,
    needs_grad: bool,
    parents: Vec<Tensor<E>>,
    backward: Option<BackwardFn<E>>,
}

thread_local! {
    static NEXT_ID: std::cell::Cell<u64> = const { std::cell::Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// A node in the computation graph. Cloning is cheap (shared `Rc`); the
/// graph is single-threaded by design.
pub struct Tensor<E: Real>(Rc<Inner<E>>);

impl<E: Real> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<E: Real> fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.0.id)
            .field("shape", &self.0.shape)
            .field("needs_grad", &self.0.needs_grad)
            .finish()
    }
}

impl<E: Real> Tensor<E> {
    /// A constant (non-trainable) tensor.
    pub fn constant(shape: Vec<usize>, data: Vec<E>) -> Self {
        Self::build(shape, data, false, Vec::new(), None)
    }

    /// A trainable leaf tensor.
    pub fn param(shape: Vec<usize>, data: Vec<E>) -> Self {
        Self::build(shape, data, true, Vec::new(), None)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::constant(shape, vec![E::ZERO; n])
    }

    pub fn scalar(v: E) -> Self {
        Self::constant(vec![1], vec![v])
    }

    /// A new graph node computed from `parents`. `backward` receives the
    /// output gradient, the output data, and the parents, and must
    /// accumulate into each parent's gradient buffer (scoping each
    /// `grad_mut` borrow separately, since parents may repeat).
    pub fn from_op(
        shape: Vec<usize>,
        data: Vec<E>,
        parents: Vec<Tensor<E>>,
        backward: impl Fn(&[E], &[E], &[Tensor<E>]) + 'static,
    ) -> Self {
        let needs_grad = parents.iter().any(|p| p.0.needs_grad);
        if needs_grad {
            Self::build(shape, data, true, parents, Some(Box::new(backward)))
        } else {
            Self::build(shape, data, false, Vec::new(), None)
        }
    }

    fn build(
        shape: Vec<usize>,
        data: Vec<E>,
        needs_grad: bool,
        parents: Vec<Tensor<E>>,
        backward: Option<BackwardFn<E>>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor(Rc::new(Inner {
            id: next_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            needs_grad,
            parents,
            backward,
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn len(&self) -> usize {
        self.0.data.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows of a 2-D tensor (or 1 for vectors).
    pub fn rows(&self) -> usize {
        if self.0.shape.len() >= 2 {
            self.0.shape[0]
        } else {
            1
        }
    }

    /// Columns of a 2-D tensor (or its length for vectors).
    pub fn cols(&self) -> usize {
        match self.0.shape.len() {
            0 => 1,
            1 => self.0.shape[0],
            _ => self.0.shape[1..].iter().product(),
        }
    }

    pub fn needs_grad(&self) -> bool {
        self.0.needs_grad
    }

    pub fn data(&self) -> Ref<'_, [E]> {
        Ref::map(self.0.data.borrow(), |v| v.as_slice())
    }

    /// Cloned values, for tests and serialization.
    pub fn to_vec(&self) -> Vec<E> {
        self.0.data.borrow().clone()
    }

    pub fn item(&self) -> E {
        let d = self.0.data.borrow();
        debug_assert_eq!(d.len(), 1, "item() on non-scalar");
        d[0]
    }

    /// Overwrites the values in place (used by the optimizer and by
    /// finite-difference probing). Length must match.
    pub fn set_data(&self, values: &[E]) {
        let mut d = self.0.data.borrow_mut();
        assert_eq!(d.len(), values.len());
        d.copy_from_slice(values);
    }

    /// Mutable view of the values (optimizer update path).
    pub fn data_mut(&self) -> RefMut<'_, Vec<E>> {
        self.0.data.borrow_mut()
    }

    /// The accumulated gradient, if any has been propagated.
    pub fn grad(&self) -> Option<Vec<E>> {
        self.0.grad.borrow().clone()
    }

    /// Zero-initialized gradient buffer for accumulation. Scope the borrow:
    /// take it, add, and drop before touching another tensor's gradient.
    pub fn grad_mut(&self) -> RefMut<'_, Vec<E>> {
        let mut slot = self.0.grad.borrow_mut();
        if slot.is_none() {
            *slot = Some(vec![E::ZERO; self.len()]);
        }
        RefMut::map(slot, |o| o.as_mut().unwrap())
    }

    pub fn clear_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Reverse-mode sweep from this tensor (typically the scalar loss),
    /// seeding its gradient with ones and accumulating into every
    /// reachable tensor that needs gradients.
    pub fn backward(&self) {
        // Reachable subgraph, then reverse creation order: every op's
        // output id is greater than its parents' ids, so descending id is
        // a valid reverse-topological order.
        let mut nodes: Vec<Tensor<E>> = Vec::new();
        let mut seen: HashSet<u64> = HashSet::new();
        let mut stack: Vec<Tensor<E>> = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !t.0.needs_grad || !seen.insert(t.0.id) {
                continue;
            }
            for p in &t.0.parents {
                stack.push(p.clone());
            }
            nodes.push(t);
        }
        nodes.sort_by(|a, b| b.0.id.cmp(&a.0.id));

        {
            let mut g = self.grad_mut();
            for v in g.iter_mut() {
                *v = E::ONE;
            }
        }

        for node in &nodes {
            let Some(backward) = &node.0.backward else { continue };
            // Clone so no borrow is held while the closure writes parents.
            let grad = match node.0.grad.borrow().as_ref() {
                Some(g) => g.clone(),
                None => continue,
            };
            let data = node.0.data.borrow().clone();
            backward(&grad, &data, &node.0.parents);
        }
    }

    // ---- elementwise and reduction ops ----

    fn assert_same_shape(&self, other: &Tensor<E>, op: &str) {
        assert_eq!(self.shape(), other.shape(), "{op}: shape mismatch");
    }

    pub fn add(&self, other: &Tensor<E>) -> Tensor<E> {
        self.assert_same_shape(other, "add");
        let data = self.data().iter().zip(other.data().iter()).map(|(&a, &b)| a + b).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone(), other.clone()], |g, _, ps| {
            if ps[0].needs_grad() {
                let mut da = ps[0].grad_mut();
                for (d, &gi) in da.iter_mut().zip(g) {
                    *d += gi;
                }
            }
            if ps[1].needs_grad() {
                let mut db = ps[1].grad_mut();
                for (d, &gi) in db.iter_mut().zip(g) {
                    *d += gi;
                }
            }
        })
    }

    pub fn sub(&self, other: &Tensor<E>) -> Tensor<E> {
        self.assert_same_shape(other, "sub");
        let data = self.data().iter().zip(other.data().iter()).map(|(&a, &b)| a - b).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone(), other.clone()], |g, _, ps| {
            if ps[0].needs_grad() {
                let mut da = ps[0].grad_mut();
                for (d, &gi) in da.iter_mut().zip(g) {
                    *d += gi;
                }
            }
            if ps[1].needs_grad() {
                let mut db = ps[1].grad_mut();
                for (d, &gi) in db.iter_mut().zip(g) {
                    *d -= gi;
                }
            }
        })
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor<E>) -> Tensor<E> {
        self.assert_same_shape(other, "mul");
        let data = self.data().iter().zip(other.data().iter()).map(|(&a, &b)| a * b).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone(), other.clone()], |g, _, ps| {
            if ps[0].needs_grad() {
                let b = ps[1].to_vec();
                let mut da = ps[0].grad_mut();
                for i in 0..g.len() {
                    da[i] += g[i] * b[i];
                }
            }
            if ps[1].needs_grad() {
                let a = ps[0].to_vec();
                let mut db = ps[1].grad_mut();
                for i in 0..g.len() {
                    db[i] += g[i] * a[i];
                }
            }
        })
    }

    pub fn scale(&self, factor: f64) -> Tensor<E> {
        let c = E::from_f64(factor);
        let data = self.data().iter().map(|&a| a * c).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], move |g, _, ps| {
            let mut da = ps[0].grad_mut();
            for (d, &gi) in da.iter_mut().zip(g) {
                *d += gi * c;
            }
        })
    }

    pub fn relu(&self) -> Tensor<E> {
        let data = self.data().iter().map(|&a| a.maximum(E::ZERO)).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], |g, _, ps| {
            let x = ps[0].to_vec();
            let mut da = ps[0].grad_mut();
            for i in 0..g.len() {
                if x[i] > E::ZERO {
                    da[i] += g[i];
                }
            }
        })
    }

    pub fn tanh(&self) -> Tensor<E> {
        let data: Vec<E> = self.data().iter().map(|&a| a.tanh()).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], |g, out, ps| {
            let mut da = ps[0].grad_mut();
            for i in 0..g.len() {
                da[i] += g[i] * (E::ONE - out[i] * out[i]);
            }
        })
    }

    pub fn sum(&self) -> Tensor<E> {
        let mut acc = E::ZERO;
        for &v in self.data().iter() {
            acc += v;
        }
        Tensor::from_op(vec![1], vec![acc], vec![self.clone()], |g, _, ps| {
            let mut da = ps[0].grad_mut();
            for d in da.iter_mut() {
                *d += g[0];
            }
        })
    }

    pub fn mean(&self) -> Tensor<E> {
        let n = self.len();
        assert!(n > 0, "mean of empty tensor");
        let inv = E::from_f64(1.0 / n as f64);
        let mut acc = E::ZERO;
        for &v in self.data().iter() {
            acc += v;
        }
        Tensor::from_op(vec![1], vec![acc * inv], vec![self.clone()], move |g, _, ps| {
            let mut da = ps[0].grad_mut();
            for d in da.iter_mut() {
                *d += g[0] * inv;
            }
        })
    }

    /// Mean squared error between two same-shape tensors, as a scalar node.
    pub fn mse(&self, target: &Tensor<E>) -> Tensor<E> {
        self.assert_same_shape(target, "mse");
        let n = self.len();
        assert!(n > 0, "mse of empty tensors");
        let inv = E::from_f64(1.0 / n as f64);
        let mut acc = E::ZERO;
        for (&a, &b) in self.data().iter().zip(target.data().iter()) {
            let d = a - b;
            acc += d * d;
        }
        let two = E::from_f64(2.0);
        Tensor::from_op(
            vec![1],
            vec![acc * inv],
            vec![self.clone(), target.clone()],
            move |g, _, ps| {
                let scale = g[0] * two * inv;
                if ps[0].needs_grad() {
                    let a = ps[0].to_vec();
                    let b = ps[1].to_vec();
                    let mut da = ps[0].grad_mut();
                    for i in 0..a.len() {
                        da[i] += scale * (a[i] - b[i]);
                    }
                }
                if ps[1].needs_grad() {
                    let a = ps[0].to_vec();
                    let b = ps[1].to_vec();
                    let mut db = ps[1].grad_mut();
                    for i in 0..a.len() {
                        db[i] -= scale * (a[i] - b[i]);
                    }
                }
            },
        )
    }
}
