use alloc::boxed::Box;
use alloc::string::String;

use crate::scenario::BandId;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A configuration value violates one of its invariants.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("insufficient transmitters: {available} bands available, {required} required")]
    InsufficientTransmitters { available: usize, required: usize },

    #[error("not enough range observations: got {got}, need at least {need}")]
    NotEnoughObservations { got: usize, need: usize },

    #[error("band {0} missing from sweep moments")]
    MissingBand(BandId),

    #[error("no position for transmitter {0}")]
    UnknownTransmitter(BandId),

    #[error("degenerate geometry")]
    DegenerateGeometry,

    #[error("singular innovation")]
    SingularInnovation,

    #[error("no calibration residuals")]
    NoCalibrationResiduals,

    /// The shared radio was asked to sweep and jam in the same tick, or to
    /// position without a sweep.
    #[error("radio contract violation: {0}")]
    RadioContract(&'static str),

    #[error(
        "empty feasible region: nearest miss js_threshold_db={nearest_threshold_db}, \
         sat_loss_slope={nearest_slope} violates {violated_cells} cell(s)"
    )]
    InfeasiblePattern {
        nearest_threshold_db: f64,
        nearest_slope: f64,
        violated_cells: usize,
    },

    #[error("step {step}: {source}")]
    AtStep { step: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}
