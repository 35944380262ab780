//! Model files: a versioned JSON record of the circuit, its angles and free-form
//! training metadata.
//!
//! ```json
//! {
//!   "format": "qcert-checkpoint",
//!   "version": 1,
//!   "spec": { "n_qubits": 4, "n_layers": 2, "rotation": "ry",
//!             "entangler": [{"control": 0, "target": 1}, ...], "n_classes": 2 },
//!   "theta": [0.1, -2.3, ...],
//!   "metadata": { ... }
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitSpec, Params};
use crate::error::{Error, Result};

pub const FORMAT: &str = "qcert-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: CircuitSpec,
    pub theta: Params,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn new(spec: CircuitSpec, theta: Params, metadata: serde_json::Value) -> Result<Self> {
        let ck = Self {
            format: FORMAT.to_string(),
            version: VERSION,
            spec,
            theta,
            metadata,
        };
        ck.validate()?;
        Ok(ck)
    }

    fn validate(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::usage(format!("not a model file (format '{}')", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::usage(format!(
                "unsupported model file version {} (expected {VERSION})",
                self.version
            )));
        }
        self.spec.validate()?;
        Params::new(&self.spec, self.theta.as_slice().to_vec())?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text)?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
