use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Exact (erf-based) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

impl Graph<'_> {
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.op(&[a, b], out, Box::new(|c| vec![Some(c.grad.clone()), Some(c.grad.clone())]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.op(&[a, b], out, Box::new(|c| vec![Some(c.grad.clone()), Some(c.grad.map(|g| -g))]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.op(
            &[a, b],
            out,
            Box::new(|c| {
                vec![Some(c.grad.zip_map(c.inputs[1], |g, y| g * y)), Some(c.grad.zip_map(c.inputs[0], |g, x| g * x))]
            }),
        )
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.op(&[a], out, Box::new(move |c| vec![Some(c.grad.map(|g| g * s))]))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x + s);
        self.op(&[a], out, Box::new(|c| vec![Some(c.grad.clone())]))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.op(
            &[a],
            out,
            Box::new(|c| vec![Some(c.grad.zip_map(c.inputs[0], |g, x| if x > 0.0 { g } else { 0.0 }))]),
        )
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        self.op(&[a], out, Box::new(|c| vec![Some(c.grad.zip_map(c.inputs[0], |g, x| g * gelu_grad(x)))]))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.op(
            &[a],
            out,
            Box::new(|c| {
                let g = c.grad.item();
                vec![Some(Tensor::full(c.inputs[0].shape(), g))]
            }),
        )
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// `sum(a * w)` for a fixed weight tensor (a random projection loss).
    pub fn dot_const(&mut self, a: Var, w: &Tensor) -> Var {
        let w = w.clone();
        let out = Tensor::scalar(self.value(a).data().iter().zip(w.data()).map(|(x, y)| x * y).sum());
        self.op(&[a], out, Box::new(move |c| vec![Some(w.map(|v| v * c.grad.item()))]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_known_values() {
        assert_eq!(gelu(0.0), 0.0);
        // GELU(1) = 0.5 * (1 + erf(1/sqrt 2)) = Phi(1)
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        let h = 1e-6;
        for &x in &[-2.0, -0.3, 0.0, 0.7, 3.0] {
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
