//! A trainable parameter array with its gradient and Adagrad accumulator.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub acc: Vec<f64>,
}

impl Param {
    pub fn new(value: Vec<f64>, init_acc: f64) -> Self {
        let n = value.len();
        Param {
            value,
            grad: vec![0.0; n],
            acc: vec![init_acc; n],
        }
    }

    pub fn zeros(n: usize, init_acc: f64) -> Self {
        Param::new(vec![0.0; n], init_acc)
    }

    pub fn constant(n: usize, v: f64, init_acc: f64) -> Self {
        Param::new(vec![v; n], init_acc)
    }

    /// Uniform init on `[-bound, +bound]`.
    pub fn uniform<R: Rng>(n: usize, bound: f64, init_acc: f64, rng: &mut R) -> Self {
        let value = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        Param::new(value, init_acc)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}
