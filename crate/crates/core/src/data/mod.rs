//! Image tensors, file IO, the 4x downsampling operator, dataset manifests
//! and the procedural target-domain corpora.

pub(crate) mod corpus;
mod image;
mod io;
mod manifest;

pub use corpus::{make_domain_corpus, make_pool_from_dir, render_domain_image, DomainKind};
pub use image::{downsample_4x, ImageTensor, LabeledPair};
pub use io::{load_image, save_image, write_atomic, RAW_MAGIC};
pub use manifest::{split_manifest, DatasetManifest, ManifestEntry, Split};
