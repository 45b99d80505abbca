use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("column '{0}' not found in the input header")]
    MissingColumn(String),

    #[error("no valid trip rows in input ({skipped} rows skipped)")]
    NoValidRows { skipped: usize },

    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    BadCoordinate { lat: f64, lon: f64 },

    #[error("grid cell size must be positive, got {0}")]
    BadCellSize(f64),

    #[error("bounding box has zero area")]
    DegenerateBox,

    #[error("malformed matrix file: {0}")]
    BadMatrix(String),

    #[error("{0}")]
    BadParam(String),

    #[error("trip {0} has zero solo distance or time under this metric")]
    ZeroSoloLeg(u64),

    #[error("invalid stop sequence: {0}")]
    BadSequence(String),

    #[error("{requested} users exceeds the supported bound of {limit}")]
    TooManyUsers { requested: usize, limit: usize },

    #[error("merged plan must serve the disjoint union of both user sets")]
    OverlappingUsers,

    #[error("day profit is not finite")]
    NonFiniteProfit,

    #[error("need at least {need} days to initialize {need} arms, got {got}")]
    TooFewDays { need: u64, got: u64 },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
