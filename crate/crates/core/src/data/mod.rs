//! Image datasets: directory indexing, decoding, preprocessing, batching and
//! a synthetic corpus generator.

mod batch;
mod dataset;
mod image;
mod synth;

pub use self::batch::{BatchIterator, Batches, LoadedDataset};
pub use self::dataset::{
    load_splits, scan_dataset, stratified_split, DatasetIndex, Sample, Split, IMAGE_EXTENSIONS,
};
pub use self::image::{
    convert_channels, decode_image, encode_image, load_image, preprocess, preprocess_in_place,
    resize_bilinear, PreprocessMode, STD_FLOOR,
};
pub use self::synth::{clean_image, noisy_image, synth_dataset, SynthSpec, NOISE_SIGMA, SYNTH_CLASSES};
