//! Implicit CSI feedback for massive MIMO.
//!
//! The crate covers the whole feedback chain at desk scale: synthetic
//! multipath channels ([`channel`]), eigenvector ground truth and spectral
//! entropy ([`eigen`]), the Type I and Type II codebook baselines ([`type1`],
//! [`type2`]), feedback quantizers ([`quant`]), a small from-scratch neural
//! engine for the learned encoders and decoders ([`nn`]), and the persistence
//! and experiment plumbing behind the command line tool ([`dataset`],
//! [`config`], [`experiment`], [`report`]).

pub mod beams;
pub mod channel;
pub mod config;
pub mod dataset;
pub mod eigen;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod quant;
pub mod report;
pub mod rng;
pub mod type1;
pub mod type2;

pub use beams::{ArrayConfig, BeamGrid};
pub use channel::{ChannelSample, SceneConfig};
pub use config::{ExperimentConfig, FeedbackMode, ReportFormat};
pub use dataset::{DatasetFile, DatasetHeader, DatasetKind};
pub use eigen::{EigenMode, EigenTarget};
pub use error::{Error, Result};
pub use linalg::{CMatrix, C64};
pub use metrics::SimilarityReport;
pub use nn::{Architecture, ModelSpec, TrainConfig};
pub use quant::QuantizerSpec;
pub use report::ReportRow;
pub use type1::{Type1Codebook, Type1Pmi};
pub use type2::{PhaseMode, Type2Codebook, Type2Config, Type2Report};
