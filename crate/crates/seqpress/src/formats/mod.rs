pub mod dataset;
pub mod tables;
pub mod waveform;

pub use dataset::{read_dataset, read_synth_truth, write_dataset, write_synth_dataset, Manifest, ManifestEntry, SynthTruth};
pub use tables::{read_bp_csv, read_feature_csv, read_json, write_bp_csv, write_feature_csv, write_json};
pub use waveform::{decode_sqpw, encode_sqpw, read_waveform, write_sqpw, write_waveform_csv};
