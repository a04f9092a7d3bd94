use cvvnet_core::{Condition, ViewGroup};

/// One embedded sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    /// Row-major `(parts, dim)` embedding.
    pub embedding: Vec<f64>,
    pub parts: usize,
    pub dim: usize,
    pub identity: u64,
    pub view_group: Option<ViewGroup>,
    pub condition: Option<Condition>,
    pub sequence_id: String,
}

impl EvalRecord {
    pub fn new(
        embedding: Vec<f64>,
        parts: usize,
        dim: usize,
        identity: u64,
        view_group: Option<ViewGroup>,
        condition: Option<Condition>,
        sequence_id: impl Into<String>,
    ) -> Self {
        assert_eq!(embedding.len(), parts * dim, "embedding length must be parts * dim");
        EvalRecord { embedding, parts, dim, identity, view_group, condition, sequence_id: sequence_id.into() }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.parts, self.dim)
    }

    pub fn part(&self, p: usize) -> &[f64] {
        &self.embedding[p * self.dim..(p + 1) * self.dim]
    }
}
