use crate::gemm::{gemm, MatRef};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Batched product of `(B,M,K)` and `(B,K,N)`, each operand optionally
/// read transposed (`(B,K,M)` / `(B,N,K)` storage).
pub fn bmm_forward(a: &Tensor, b: &Tensor, ta: bool, tb: bool) -> Tensor {
    let (sa, sb) = (a.shape(), b.shape());
    assert_eq!(sa.len(), 3, "bmm lhs must be rank 3");
    assert_eq!(sb.len(), 3, "bmm rhs must be rank 3");
    assert_eq!(sa[0], sb[0], "bmm batch mismatch");
    let (m, k) = if ta { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
    let (k2, n) = if tb { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
    assert_eq!(k, k2, "bmm inner dimension mismatch: {sa:?} x {sb:?}");
    let batch = sa[0];
    let mut out = vec![0.0; batch * m * n];
    for i in 0..batch {
        let ad = &a.data()[i * m * k..(i + 1) * m * k];
        let bd = &b.data()[i * k * n..(i + 1) * k * n];
        let av = if ta { MatRef::t(ad, m, k) } else { MatRef::new(ad, m, k) };
        let bv = if tb { MatRef::t(bd, k, n) } else { MatRef::new(bd, k, n) };
        gemm(1.0, av, bv, 0.0, &mut out[i * m * n..(i + 1) * m * n]);
    }
    Tensor::new(&[batch, m, n], out)
}

impl Graph<'_> {
    /// `op(a) @ op(b)` per batch, where `op` optionally transposes the last two axes.
    pub fn bmm(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let out = bmm_forward(self.value(a), self.value(b), ta, tb);
        self.op(
            &[a, b],
            out,
            Box::new(move |c| {
                let (a, b, g) = (c.inputs[0], c.inputs[1], c.grad);
                // C = A B:  dA = G B^T, dB = A^T G, adjusted for stored transposes.
                let ga = if ta { bmm_forward(b, g, tb, true) } else { bmm_forward(g, b, false, !tb) };
                let gb = if tb { bmm_forward(g, a, true, ta) } else { bmm_forward(a, g, !ta, false) };
                vec![Some(ga), Some(gb)]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bmm_gradients_for_all_transpose_combinations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let ash = if ta { [2, 4, 3] } else { [2, 3, 4] };
            let bsh = if tb { [2, 5, 4] } else { [2, 4, 5] };
            let a = Tensor::randn(&ash, &mut rng);
            let b = Tensor::randn(&bsh, &mut rng);
            let w = Tensor::randn(&[2, 3, 5], &mut rng);
            let store = ParamStore::new();
            let mut g = Graph::eval_with_grad(&store);
            let av = g.input(a.clone());
            let bv = g.input(b.clone());
            let y = g.bmm(av, bv, ta, tb);
            let l = g.dot_const(y, &w);
            let grads = g.backward(l);
            let f = |a: &Tensor, b: &Tensor| -> f64 {
                bmm_forward(a, b, ta, tb).data().iter().zip(w.data()).map(|(p, q)| p * q).sum()
            };
            let h = 1e-6;
            for i in 0..a.numel() {
                let mut ap = a.clone();
                ap.data_mut()[i] += h;
                let mut am = a.clone();
                am.data_mut()[i] -= h;
                let fd = (f(&ap, &b) - f(&am, &b)) / (2.0 * h);
                assert!((fd - grads.wrt(av).unwrap().data()[i]).abs() < 1e-6);
            }
            for i in 0..b.numel() {
                let mut bp = b.clone();
                bp.data_mut()[i] += h;
                let mut bm = b.clone();
                bm.data_mut()[i] -= h;
                let fd = (f(&a, &bp) - f(&a, &bm)) / (2.0 * h);
                assert!((fd - grads.wrt(bv).unwrap().data()[i]).abs() < 1e-6);
            }
        }
    }
}
