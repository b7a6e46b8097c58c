//! Image I/O, paired-dataset ingestion, batch inference and the
//! checkpoint container.

mod checkpoint;
mod dataset;
mod enhance;
mod io;

pub use checkpoint::{AnyTensor, Checkpoint, FORMAT_VERSION, MAGIC};
pub use dataset::{ingest_dataset, list_images, Dataset, PairedSample};
pub use enhance::{enhance_dir, enhance_image, load_dir, EnhanceSummary};
pub use io::{denormalize, load_image, normalize, resize, save_image, tensor_to_image};
