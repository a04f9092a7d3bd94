use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

impl Graph<'_> {
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let out = self.value(a).clone().reshape(shape);
        self.op(
            &[a],
            out,
            Box::new(|c| {
                let s = c.inputs[0].shape().to_vec();
                vec![Some(c.grad.clone().reshape(&s))]
            }),
        )
    }

    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Var {
        let out = self.value(a).permute(perm);
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        self.op(&[a], out, Box::new(move |c| vec![Some(c.grad.permute(&inverse))]))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        let vals: Vec<&Tensor> = parts.iter().map(|&v| self.value(v)).collect();
        let sizes: Vec<usize> = vals.iter().map(|t| t.dim(axis)).collect();
        let out = Tensor::concat(&vals, axis);
        self.op(
            parts,
            out,
            Box::new(move |c| {
                let mut start = 0;
                sizes
                    .iter()
                    .map(|&len| {
                        let g = c.grad.narrow(axis, start, len);
                        start += len;
                        Some(g)
                    })
                    .collect()
            }),
        )
    }

    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Var {
        let out = self.value(a).narrow(axis, start, len);
        self.op(
            &[a],
            out,
            Box::new(move |c| {
                let full = c.inputs[0].dim(axis);
                let mut pieces = Vec::new();
                let before;
                let after;
                let mut zs = c.grad.shape().to_vec();
                if start > 0 {
                    zs[axis] = start;
                    before = Tensor::zeros(&zs);
                    pieces.push(&before);
                }
                pieces.push(c.grad);
                if start + len < full {
                    zs[axis] = full - start - len;
                    after = Tensor::zeros(&zs);
                    pieces.push(&after);
                }
                vec![Some(Tensor::concat(&pieces, axis))]
            }),
        )
    }
}
