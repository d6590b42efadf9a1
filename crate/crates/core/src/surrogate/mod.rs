//! Residual MLP surrogate mapping grid inputs and topology to currents.

pub mod checkpoint;
pub mod codec;
pub mod model;
pub mod train;

pub use codec::FeatureCodec;
pub use model::{Architecture, Linear, ModelParams, Variant};
pub use train::{train, train_params, TrainConfig, TrainOutcome};

use crate::dataset::ScenarioRecord;
use crate::error::{Error, Result};

/// A trained network together with the normalization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub codec: FeatureCodec,
    pub params: ModelParams,
}

impl Surrogate {
    pub fn new(codec: FeatureCodec, params: ModelParams) -> Result<Self> {
        let arch = params.arch;
        if arch.n_in != codec.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "model input vs codec",
                expected: codec.input_dim(),
                found: arch.n_in,
            });
        }
        if arch.n_out != codec.output_dim()
            || arch.n_out != 2 * codec.shape.n_branch + codec.shape.n_bus
        {
            return Err(Error::DimensionMismatch {
                what: "model output vs codec",
                expected: codec.output_dim(),
                found: arch.n_out,
            });
        }
        Ok(Surrogate { codec, params })
    }

    /// Predicted currents in per-unit: origin ends, extremity ends, injections.
    pub fn predict(&self, record: &ScenarioRecord) -> Result<Vec<f64>> {
        let x = self.codec.encode_input(record)?;
        Ok(self.codec.decode_output(&self.params.forward(&x)?))
    }
}
