//! The joint metric-learning objective: batch-all triplet loss on the
//! per-part embeddings plus part-wise softmax cross-entropy on the logits.

use cvvnet_autograd::{Graph, Tensor, Var};

use crate::error::{Result, TrainError};

/// Weights of the two loss terms and the triplet margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 1.0, beta: 1.0, margin: 0.2 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha >= 0.0 && self.beta >= 0.0 && self.margin >= 0.0 && self.alpha + self.beta > 0.0;
        if ok && self.alpha.is_finite() && self.beta.is_finite() && self.margin.is_finite() {
            Ok(())
        } else {
            Err(TrainError::InvalidConfig(format!(
                "loss weights need alpha, beta, margin >= 0 and alpha + beta > 0, got {self:?}"
            )))
        }
    }
}

/// Triplet bookkeeping for one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TripletStats {
    /// Number of (anchor, positive, negative) index triples.
    pub valid: usize,
    /// Triples whose hinge is strictly positive; the loss averages over these.
    pub active: usize,
}

impl TripletStats {
    /// Set when the loss was reported as zero because no triplet contributed.
    pub fn no_valid_triplets(&self) -> bool {
        self.active == 0
    }
}

/// Per-part Euclidean distances of a `(B, P, D)` batch, laid out `[i][j][p]`.
pub fn part_distances(feats: &Tensor) -> Vec<f64> {
    let (b, p, d) = (feats.dim(0), feats.dim(1), feats.dim(2));
    let f = feats.data();
    let mut out = vec![0.0; b * b * p];
    for i in 0..b {
        for j in (i + 1)..b {
            for part in 0..p {
                let fi = &f[(i * p + part) * d..(i * p + part + 1) * d];
                let fj = &f[(j * p + part) * d..(j * p + part + 1) * d];
                let dist = fi.iter().zip(fj).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                out[(i * b + j) * p + part] = dist;
                out[(j * b + i) * p + part] = dist;
            }
        }
    }
    out
}

fn check_triplet_inputs(feats: &Tensor, labels: &[usize]) {
    assert_eq!(feats.rank(), 3, "triplet features must be (B, P, D)");
    assert_eq!(feats.dim(0), labels.len(), "one label per batch row");
}

/// Loss value, per-pair coefficients of dL/d dist(i, j), and stats.
fn triplet_terms(feats: &Tensor, labels: &[usize], margin: f64) -> (f64, Vec<f64>, TripletStats, Vec<f64>) {
    let (b, p) = (feats.dim(0), feats.dim(1));
    let pd = part_distances(feats);
    let dist: Vec<f64> = pd.chunks(p).map(|c| c.iter().sum::<f64>() / p as f64).collect();
    let mut stats = TripletStats::default();
    let mut active = Vec::new();
    let mut total = 0.0;
    for a in 0..b {
        for pos in 0..b {
            if pos == a || labels[pos] != labels[a] {
                continue;
            }
            for neg in 0..b {
                if labels[neg] == labels[a] {
                    continue;
                }
                stats.valid += 1;
                let h = dist[a * b + pos] - dist[a * b + neg] + margin;
                if h > 0.0 {
                    total += h;
                    active.push((a, pos, neg));
                }
            }
        }
    }
    stats.active = active.len();
    let mut coef = vec![0.0; b * b];
    if active.is_empty() {
        return (0.0, coef, stats, pd);
    }
    let n = active.len() as f64;
    for (a, pos, neg) in active {
        coef[a * b + pos] += 1.0 / n;
        coef[a * b + neg] -= 1.0 / n;
    }
    (total / n, coef, stats, pd)
}

/// Batch-all triplet loss on `(B, P, D)` features.
///
/// The distance between two samples is the Euclidean distance per part,
/// averaged over parts. The loss is the mean of `max(0, d(a,p) - d(a,n) + margin)`
/// over the triplets where that hinge is positive; when there is none the
/// loss is zero and [`TripletStats::no_valid_triplets`] is set.
pub fn triplet_loss(g: &mut Graph, feats: Var, labels: &[usize], margin: f64) -> (Var, TripletStats) {
    let x = g.value(feats);
    check_triplet_inputs(x, labels);
    let (value, coef, stats, pd) = triplet_terms(x, labels, margin);
    let var = g.op(
        &[feats],
        Tensor::scalar(value),
        Box::new(move |c| {
            let f = c.inputs[0];
            let (b, p, d) = (f.dim(0), f.dim(1), f.dim(2));
            let up = c.grad.item();
            let fd = f.data();
            let mut gx = vec![0.0; f.numel()];
            for i in 0..b {
                for j in 0..b {
                    let w = coef[i * b + j];
                    if w == 0.0 {
                        continue;
                    }
                    for part in 0..p {
                        let dist = pd[(i * b + j) * p + part];
                        // the Euclidean norm has zero subgradient at coincident points
                        if dist == 0.0 {
                            continue;
                        }
                        let s = up * w / (p as f64 * dist);
                        let ri = (i * p + part) * d;
                        let rj = (j * p + part) * d;
                        for e in 0..d {
                            let diff = s * (fd[ri + e] - fd[rj + e]);
                            gx[ri + e] += diff;
                            gx[rj + e] -= diff;
                        }
                    }
                }
            }
            vec![Some(Tensor::new(f.shape(), gx))]
        }),
    );
    (var, stats)
}

/// Plain-tensor triplet loss, identical in value to [`triplet_loss`].
pub fn triplet_loss_value(feats: &Tensor, labels: &[usize], margin: f64) -> (f64, TripletStats) {
    check_triplet_inputs(feats, labels);
    let (v, _, s, _) = triplet_terms(feats, labels, margin);
    (v, s)
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= classes) {
        Some(&label) => Err(TrainError::LabelOutOfRange { label, num_classes: classes }),
        None => Ok(()),
    }
}

/// Softmax cross-entropy of `(B, P, K)` logits, averaged over parts and batch.
pub fn ce_loss(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    let z = g.value(logits);
    assert_eq!(z.rank(), 3, "logits must be (B, P, K)");
    assert_eq!(z.dim(0), labels.len(), "one label per batch row");
    let (b, p, k) = (z.dim(0), z.dim(1), z.dim(2));
    check_labels(labels, k)?;
    let rows = (b * p) as f64;
    let mut probs = vec![0.0; z.numel()];
    let mut total = 0.0;
    for (r, row) in z.data().chunks(k).enumerate() {
        let label = labels[r / p];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - mx).exp()).sum();
        total += mx + sum.ln() - row[label];
        for (q, v) in probs[r * k..(r + 1) * k].iter_mut().zip(row) {
            *q = (v - mx).exp() / sum;
        }
    }
    let labels = labels.to_vec();
    Ok(g.op(
        &[logits],
        Tensor::scalar(total / rows),
        Box::new(move |c| {
            let s = c.grad.item() / rows;
            let mut gz: Vec<f64> = probs.iter().map(|q| q * s).collect();
            for r in 0..b * p {
                gz[r * k + labels[r / p]] -= s;
            }
            vec![Some(Tensor::new(&[b, p, k], gz))]
        }),
    ))
}

/// Raw terms of one evaluation of the joint objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub triplet: f64,
    pub ce: f64,
    pub total: f64,
    pub triplets: TripletStats,
}

/// `alpha * triplet + beta * ce`, with both raw terms reported.
pub fn total_loss(
    g: &mut Graph,
    feats: Var,
    logits: Var,
    labels: &[usize],
    w: &LossWeights,
) -> Result<(Var, LossReport)> {
    let (tri, triplets) = triplet_loss(g, feats, labels, w.margin);
    let ce = ce_loss(g, logits, labels)?;
    let a = g.scale(tri, w.alpha);
    let b = g.scale(ce, w.beta);
    let total = g.add(a, b);
    let report = LossReport {
        triplet: g.value(tri).item(),
        ce: g.value(ce).item(),
        total: g.value(total).item(),
        triplets,
    };
    Ok((total, report))
}
