//! Inference-mode embedding of whole sequences.

use cvvnet_autograd::{Graph, Tensor};
use cvvnet_model::CvvNet;

use crate::data::SequenceData;
use crate::error::Result;

/// Which head output serves as the retrieval feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbeddingKind {
    /// Part embeddings before the BNNeck normalization.
    #[default]
    PreNeck,
    /// The batch-normalized embedding.
    Normalized,
}

impl std::str::FromStr for EmbeddingKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pre-neck" | "preneck" => Ok(EmbeddingKind::PreNeck),
            "normalized" => Ok(EmbeddingKind::Normalized),
            _ => Err(format!("unknown embedding kind {s:?} (expected pre-neck or normalized)")),
        }
    }
}

/// Embeds each sequence over all of its frames, returning one `(P, D)`
/// tensor per sequence. Sequences of equal length are batched together,
/// up to `batch` at a time; results do not depend on the batching since
/// inference uses running normalization statistics.
pub fn embed_sequences(model: &CvvNet, seqs: &[SequenceData], kind: EmbeddingKind, batch: usize) -> Result<Vec<Tensor>> {
    let mut out: Vec<Option<Tensor>> = vec![None; seqs.len()];
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    order.sort_by_key(|&i| seqs[i].n_frames);
    for group in order.chunk_by(|&a, &b| seqs[a].n_frames == seqs[b].n_frames) {
        for chunk in group.chunks(batch.max(1)) {
            let first = &seqs[chunk[0]];
            let (t, h, w) = (first.n_frames, first.height, first.width);
            let mut values = Vec::with_capacity(chunk.len() * t * h * w);
            for &i in chunk {
                values.extend_from_slice(&seqs[i].frames);
            }
            let mut g = Graph::eval(&model.store);
            let x = g.input(Tensor::new(&[chunk.len(), 1, t, h, w], values));
            let fwd = model.net.forward(&mut g, x, None)?;
            let var = match kind {
                EmbeddingKind::PreNeck => fwd.embedding,
                EmbeddingKind::Normalized => fwd.normalized,
            };
            let e = g.value(var);
            let (p, d) = (e.dim(1), e.dim(2));
            for (row, &i) in chunk.iter().enumerate() {
                out[i] = Some(Tensor::new(&[p, d], e.data()[row * p * d..(row + 1) * p * d].to_vec()));
            }
        }
    }
    Ok(out.into_iter().map(|t| t.expect("every sequence embedded")).collect())
}
