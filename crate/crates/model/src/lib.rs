//! CVVNet model components: the HLFE frequency extractor, the MSAGA gated
//! aggregation block, P3D residual blocks and the part-based backbone.

pub mod archive;
pub mod backbone;
pub mod error;
pub mod heads;
pub mod hlfe;
pub mod kv;
pub mod layers;
pub mod msaga;
pub mod p3d;

pub use archive::{load_model, save_model, MODEL_MANIFEST, MODEL_TENSORS};
pub use backbone::{Backbone, BackboneConfig, Captures, CvvNet, ForwardOutput, StageBlock};
pub use error::{ModelError, Result};
pub use hlfe::{Hlfe, HlfeConfig};
pub use kv::KvMap;
pub use msaga::{Aggregator, Extractor, Msaga};
pub use p3d::P3dBlock;
