//! Multi-scale attention gated aggregation over clip features `(B, C, T, H, W)`.

use std::fmt;
use std::str::FromStr;

use cvvnet_autograd::{Graph, ParamStore, Var};
use rand::Rng;

use crate::error::{expect_shape, ModelError, Result};
use crate::hlfe::{Hlfe, HlfeConfig};
use crate::layers::Conv;
use crate::p3d::P3dBlock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    Dga,
    Add,
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extractor {
    Hlfe,
    P3d,
}

impl Aggregator {
    pub const ALL: [Aggregator; 3] = [Aggregator::Add, Aggregator::Concat, Aggregator::Dga];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregator::Dga => "dga",
            Aggregator::Add => "add",
            Aggregator::Concat => "concat",
        }
    }
}

impl Extractor {
    pub const ALL: [Extractor; 2] = [Extractor::P3d, Extractor::Hlfe];

    pub fn as_str(self) -> &'static str {
        match self {
            Extractor::Hlfe => "hlfe",
            Extractor::P3d => "p3d",
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Extractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregator {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dga" => Ok(Aggregator::Dga),
            "add" => Ok(Aggregator::Add),
            "concat" => Ok(Aggregator::Concat),
            _ => Err(ModelError::InvalidConfig(format!("unknown aggregator {s:?}"))),
        }
    }
}

impl FromStr for Extractor {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hlfe" => Ok(Extractor::Hlfe),
            "p3d" => Ok(Extractor::P3d),
            _ => Err(ModelError::InvalidConfig(format!("unknown extractor {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum FeatureExtractor {
    Hlfe(Hlfe),
    P3d(P3dBlock),
}

impl FeatureExtractor {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        match self {
            FeatureExtractor::Hlfe(h) => h.forward_over_time(g, x),
            FeatureExtractor::P3d(p) => p.forward(g, x),
        }
    }
}

#[derive(Debug, Clone)]
pub enum AggregatorParams {
    /// Gate `wg`, value projection `wv` and output projection `wp`.
    Dga { wg: Conv, wv: Conv, wp: Conv },
    Add,
    Concat { fuse: Conv },
}

#[derive(Debug, Clone)]
pub struct Msaga {
    pub channels: usize,
    pub extractor: FeatureExtractor,
    pub aggregator: AggregatorParams,
}

impl Msaga {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        hlfe: HlfeConfig,
        extractor: Extractor,
        aggregator: Aggregator,
    ) -> Self {
        let c = hlfe.channels;
        let ext = match extractor {
            Extractor::Hlfe => FeatureExtractor::Hlfe(Hlfe::new(store, rng, &format!("{prefix}.hlfe"), hlfe)),
            Extractor::P3d => FeatureExtractor::P3d(P3dBlock::new(store, rng, &format!("{prefix}.p3d"), c, c, 1)),
        };
        let agg = match aggregator {
            Aggregator::Dga => AggregatorParams::Dga {
                wg: Conv::pointwise(store, rng, &format!("{prefix}.wg"), c, c),
                wv: Conv::pointwise(store, rng, &format!("{prefix}.wv_dga"), c, c),
                wp: Conv::pointwise(store, rng, &format!("{prefix}.wp"), c, c),
            },
            Aggregator::Add => AggregatorParams::Add,
            Aggregator::Concat => AggregatorParams::Concat { fuse: Conv::pointwise(store, rng, &format!("{prefix}.fuse"), 2 * c, c) },
        };
        Msaga { channels: c, extractor: ext, aggregator: agg }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let v_hl = self.extractor_forward(g, x)?;
        Ok(self.aggregate(g, x, v_hl))
    }

    pub fn extractor_forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        expect_shape("msaga input", g.shape(x), &[None, Some(self.channels), None, None, None])?;
        self.extractor.forward(g, x)
    }

    /// Combines the block input with an already computed extractor output.
    pub fn aggregate(&self, g: &mut Graph, x: Var, extracted: Var) -> Var {
        match &self.aggregator {
            AggregatorParams::Dga { wg, wv, wp } => {
                let gate = wg.forward(g, x);
                let gate = g.relu(gate);
                let value = wv.forward(g, extracted);
                let value = g.relu(value);
                let gated = g.mul(gate, value);
                wp.forward(g, gated)
            }
            AggregatorParams::Add => g.add(x, extracted),
            AggregatorParams::Concat { fuse } => {
                let cat = g.concat(&[x, extracted], 1);
                fuse.forward(g, cat)
            }
        }
    }
}
