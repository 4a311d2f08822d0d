use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubit::Bloch;

/// One fine-grained sample of a trajectory between readouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: f64,
    pub bloch: Bloch,
}

/// Selective measurement output: the readout record and the conditioned
/// state after each readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<Bloch>,
    pub readouts: Vec<f64>,
    pub seed: u64,
    /// Unitary interpolation between pulses, starting at t = 0. Empty for
    /// continuous records and for pulsed runs without sub-sampling.
    pub path: Vec<PathPoint>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn z_series(&self) -> Vec<(f64, f64)> {
        self.times.iter().zip(&self.states).map(|(&t, b)| (t, b.z)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if self.states.len() != n || self.readouts.len() != n {
            return Err(Error::ContractViolation(format!(
                "record lengths differ: {} times, {} states, {} readouts",
                n,
                self.states.len(),
                self.readouts.len()
            )));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::ContractViolation("record times not strictly increasing".into()));
        }
        if self.path.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::ContractViolation("path times not strictly increasing".into()));
        }
        Ok(())
    }

    pub fn validate_binary(&self) -> Result<()> {
        self.validate()?;
        if self.readouts.iter().any(|&r| r != 0.0 && r != 1.0) {
            return Err(Error::ContractViolation("pulsed readouts must be 0 or 1".into()));
        }
        Ok(())
    }
}
