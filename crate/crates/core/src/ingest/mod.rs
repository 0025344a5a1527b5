//! EDF/EDF+ recordings, hypnograms and 30 s epoch segmentation.

pub mod edf;
pub mod epochs;
pub mod hypnogram;

pub use edf::{parse_edf, scaling_for, write_edf, Channel, Recording, Scaling, StartTime};
pub use epochs::{segment_epochs, truncate_wake, LabeledEpoch, Segmentation, EPOCH_SECONDS};
pub use hypnogram::{parse_hypnogram, Hypnogram, HypnogramEntry, StageLabel};
