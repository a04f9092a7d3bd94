//! The full network: stem, P3D stages with MSAGA blocks inserted at
//! configured slots, temporal max pooling and the part-based heads.

use cvvnet_autograd::{ConvSpec, Graph, ParamStore, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{expect_shape, ModelError, Result};
use crate::heads::{hpp, hpp_parts, temporal_max_pool, BnNeck, PartFc};
use crate::hlfe::HlfeConfig;
use crate::kv::{join_list, KvMap};
use crate::layers::Conv;
use crate::msaga::{Aggregator, Extractor, Msaga};
use crate::p3d::P3dBlock;

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneConfig {
    pub in_channels: usize,
    /// `(height, width)` of the input frames.
    pub input_size: (usize, usize),
    pub stage_channels: Vec<usize>,
    pub blocks_per_stage: Vec<usize>,
    /// Spatial stride of the first block of each stage.
    pub stage_strides: Vec<usize>,
    /// `(stage, block)` slots, zero-based; the MSAGA block follows that P3D block.
    pub msaga_positions: Vec<(usize, usize)>,
    pub hpp_bins: Vec<usize>,
    pub embed_dim: usize,
    pub num_classes: usize,
    pub aggregator: Aggregator,
    pub extractor: Extractor,
    pub n_heads: usize,
    pub kv_stride: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl BackboneConfig {
    /// Small two-stage network for CPU experiments.
    pub fn toy() -> Self {
        BackboneConfig {
            in_channels: 1,
            input_size: (64, 44),
            stage_channels: vec![16, 32],
            blocks_per_stage: vec![1, 2],
            stage_strides: vec![1, 2],
            msaga_positions: vec![(1, 0)],
            hpp_bins: vec![1, 2, 4],
            embed_dim: 32,
            num_classes: 16,
            aggregator: Aggregator::Dga,
            extractor: Extractor::Hlfe,
            n_heads: 8,
            kv_stride: 2,
        }
    }

    /// Four-stage layout in the style of DeepGaitV2, with MSAGA after the
    /// first, third and fifth block of stage two and 16 flat strips.
    pub fn full_scale() -> Self {
        BackboneConfig {
            in_channels: 1,
            input_size: (64, 44),
            stage_channels: vec![64, 128, 256, 512],
            blocks_per_stage: vec![1, 5, 4, 1],
            stage_strides: vec![1, 2, 2, 1],
            msaga_positions: vec![(1, 0), (1, 2), (1, 4)],
            hpp_bins: vec![16],
            embed_dim: 256,
            num_classes: 74,
            aggregator: Aggregator::Dga,
            extractor: Extractor::Hlfe,
            n_heads: 8,
            kv_stride: 2,
        }
    }

    pub fn num_parts(&self) -> usize {
        self.hpp_bins.iter().sum()
    }

    /// Spatial size after every stage, starting from `input_size`.
    pub fn stage_sizes(&self) -> Vec<(usize, usize)> {
        let (mut h, mut w) = self.input_size;
        self.stage_strides
            .iter()
            .map(|&s| {
                h = h.div_ceil(s);
                w = w.div_ceil(s);
                (h, w)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        let n = self.stage_channels.len();
        if n == 0 {
            return bad("at least one stage is required".into());
        }
        if self.blocks_per_stage.len() != n || self.stage_strides.len() != n {
            return bad("stage_channels, blocks_per_stage and stage_strides must have equal length".into());
        }
        if self.in_channels == 0 || self.embed_dim == 0 || self.num_classes == 0 {
            return bad("in_channels, embed_dim and num_classes must be positive".into());
        }
        if self.input_size.0 == 0 || self.input_size.1 == 0 {
            return bad("input_size must be positive".into());
        }
        if self.stage_channels.contains(&0) || self.stage_strides.contains(&0) || self.blocks_per_stage.contains(&0) {
            return bad("stage widths, strides and depths must be positive".into());
        }
        if self.stage_channels.windows(2).any(|w| w[1] < w[0]) {
            return bad("stage_channels must be nondecreasing".into());
        }
        let sizes = self.stage_sizes();
        for (i, &(stage, block)) in self.msaga_positions.iter().enumerate() {
            if stage >= n || block >= self.blocks_per_stage[stage] {
                return bad(format!("msaga position ({stage},{block}) is not an existing block slot"));
            }
            if self.msaga_positions[..i].contains(&(stage, block)) {
                return bad(format!("msaga position ({stage},{block}) is listed twice"));
            }
            if self.extractor == Extractor::Hlfe {
                HlfeConfig::new(self.stage_channels[stage], self.n_heads, self.kv_stride)?;
                let (h, w) = sizes[stage];
                if h % self.kv_stride != 0 || w % self.kv_stride != 0 {
                    return Err(ModelError::IndivisibleSpatial { h, w, stride: self.kv_stride });
                }
            }
        }
        hpp_parts(sizes[n - 1].0, &self.hpp_bins)?;
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        m.set("in_channels", self.in_channels);
        m.set("input_size", format!("{}x{}", self.input_size.0, self.input_size.1));
        m.set("stage_channels", join_list(&self.stage_channels));
        m.set("blocks_per_stage", join_list(&self.blocks_per_stage));
        m.set("stage_strides", join_list(&self.stage_strides));
        let pos: Vec<String> = self.msaga_positions.iter().map(|(s, b)| format!("{s}:{b}")).collect();
        m.set("msaga_positions", pos.join(","));
        m.set("hpp_bins", join_list(&self.hpp_bins));
        m.set("embed_dim", self.embed_dim);
        m.set("num_classes", self.num_classes);
        m.set("aggregator", self.aggregator);
        m.set("extractor", self.extractor);
        m.set("n_heads", self.n_heads);
        m.set("kv_stride", self.kv_stride);
        m
    }

    /// Reads a configuration; keys that are absent keep their toy defaults.
    pub fn from_kv(m: &KvMap) -> Result<Self> {
        let d = BackboneConfig::toy();
        let list_or = |key: &str, default: &Vec<usize>| -> Result<Vec<usize>> {
            if m.contains(key) {
                m.list(key)
            } else {
                Ok(default.clone())
            }
        };
        let input_size = match m.get("input_size") {
            Some(raw) => {
                let (h, w) = raw
                    .split_once('x')
                    .ok_or_else(|| ModelError::InvalidConfig(format!("input_size must be HxW, got {raw:?}")))?;
                let p = |v: &str| v.trim().parse::<usize>().map_err(|_| ModelError::InvalidConfig(format!("bad input_size {raw:?}")));
                (p(h)?, p(w)?)
            }
            None => d.input_size,
        };
        let msaga_positions = match m.get("msaga_positions") {
            Some("") => Vec::new(),
            Some(raw) => raw
                .split(',')
                .map(|item| {
                    let err = || ModelError::InvalidConfig(format!("bad msaga position {item:?}"));
                    let (s, b) = item.trim().split_once(':').ok_or_else(err)?;
                    Ok((s.parse().map_err(|_| err())?, b.parse().map_err(|_| err())?))
                })
                .collect::<Result<Vec<_>>>()?,
            None => d.msaga_positions.clone(),
        };
        let cfg = BackboneConfig {
            in_channels: m.parsed_or("in_channels", d.in_channels)?,
            input_size,
            stage_channels: list_or("stage_channels", &d.stage_channels)?,
            blocks_per_stage: list_or("blocks_per_stage", &d.blocks_per_stage)?,
            stage_strides: list_or("stage_strides", &d.stage_strides)?,
            msaga_positions,
            hpp_bins: list_or("hpp_bins", &d.hpp_bins)?,
            embed_dim: m.parsed_or("embed_dim", d.embed_dim)?,
            num_classes: m.parsed_or("num_classes", d.num_classes)?,
            aggregator: m.parsed_or("aggregator", d.aggregator)?,
            extractor: m.parsed_or("extractor", d.extractor)?,
            n_heads: m.parsed_or("n_heads", d.n_heads)?,
            kv_stride: m.parsed_or("kv_stride", d.kv_stride)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub enum StageBlock {
    P3d { name: String, block: P3dBlock },
    Msaga { name: String, block: Msaga },
}

impl StageBlock {
    pub fn name(&self) -> &str {
        match self {
            StageBlock::P3d { name, .. } | StageBlock::Msaga { name, .. } => name,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        match self {
            StageBlock::P3d { block, .. } => block.forward(g, x),
            StageBlock::Msaga { block, .. } => block.forward(g, x),
        }
    }
}

pub struct ForwardOutput {
    /// `(B, P, embed_dim)` part features before the BNNeck; the retrieval embedding.
    pub embedding: Var,
    /// Batch-normalised embedding, `(B, P, embed_dim)`.
    pub normalized: Var,
    pub logits: Var,
}

/// Named intermediate activations recorded during a forward pass.
pub type Captures = Vec<(String, Var)>;

#[derive(Debug, Clone)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub stem: Conv,
    pub blocks: Vec<StageBlock>,
    pub part_fc: PartFc,
    pub neck: BnNeck,
}

impl Backbone {
    pub fn new<R: Rng + ?Sized>(config: BackboneConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c0 = config.stage_channels[0];
        let stem = Conv::new(store, rng, "stem", config.in_channels, c0, [3, 3, 3], ConvSpec::same([3, 3, 3]), true)
            .with_replicate_time();
        let mut blocks = Vec::new();
        let mut cin = c0;
        let mut msaga_count = 0;
        for (si, &cout) in config.stage_channels.iter().enumerate() {
            for bi in 0..config.blocks_per_stage[si] {
                let stride = if bi == 0 { config.stage_strides[si] } else { 1 };
                let name = format!("s{}.b{}", si + 1, bi + 1);
                let block = P3dBlock::new(store, rng, &name, cin, cout, stride);
                blocks.push(StageBlock::P3d { name, block });
                cin = cout;
                if config.msaga_positions.contains(&(si, bi)) {
                    msaga_count += 1;
                    let name = format!("msaga.{msaga_count}");
                    let hc = HlfeConfig { channels: cout, n_heads: config.n_heads, kv_stride: config.kv_stride };
                    let block = Msaga::new(store, rng, &name, hc, config.extractor, config.aggregator);
                    blocks.push(StageBlock::Msaga { name, block });
                }
            }
        }
        let parts = config.num_parts();
        let part_fc = PartFc::new(store, rng, "part_fc", parts, cin, config.embed_dim);
        let neck = BnNeck::new(store, rng, "bnneck", parts, config.embed_dim, config.num_classes);
        Ok(Backbone { config, stem, blocks, part_fc, neck })
    }

    /// Names accepted by [`Backbone::forward`] captures, in execution order.
    pub fn capture_names(&self) -> Vec<String> {
        let mut names = vec!["stem".to_string()];
        names.extend(self.blocks.iter().map(|b| b.name().to_string()));
        names.push("tmax".into());
        names
    }

    /// Stem: 3x3x3 convolution with bias, then ReLU. Time is padded by
    /// edge replication, space by zeros.
    pub fn stem_forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (h, w) = self.config.input_size;
        expect_shape("clip input", g.shape(x), &[None, Some(self.config.in_channels), None, Some(h), Some(w)])?;
        let y = self.stem.forward(g, x);
        Ok(g.relu(y))
    }

    /// Runs the network on `(B, in_channels, T, H, W)`. When `captures` is
    /// given, every stage output is recorded under its name.
    pub fn forward(&self, g: &mut Graph, x: Var, mut captures: Option<&mut Captures>) -> Result<ForwardOutput> {
        let mut record = |name: &str, v: Var| {
            if let Some(c) = captures.as_deref_mut() {
                c.push((name.to_string(), v));
            }
        };
        let mut y = self.stem_forward(g, x)?;
        record("stem", y);
        for block in &self.blocks {
            y = block.forward(g, y)?;
            record(block.name(), y);
        }
        let pooled = temporal_max_pool(g, y)?;
        record("tmax", pooled);
        let parts = hpp(g, pooled, &self.config.hpp_bins)?;
        let embedding = self.part_fc.forward(g, parts)?;
        let neck = self.neck.forward(g, embedding)?;
        Ok(ForwardOutput { embedding: neck.triplet_feats, normalized: neck.normalized, logits: neck.logits })
    }
}

/// A backbone together with its parameters and the seed that produced them.
#[derive(Debug, Clone)]
pub struct CvvNet {
    pub net: Backbone,
    pub store: ParamStore,
    pub seed: u64,
}

impl CvvNet {
    pub fn init(config: BackboneConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Backbone::new(config, &mut store, &mut rng)?;
        Ok(CvvNet { net, store, seed })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.net.config
    }
}
