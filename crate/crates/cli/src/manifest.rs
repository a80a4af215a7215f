//! Text formats: the basis manifest and element lists, both TOML.
//!
//! ```toml
//! schema_version = "1"
//! dim = 4
//! axes = 2
//! backend = "rotation"
//! angles = [[0.1, 0.2], [0.3, -0.4]]   # dim/2 per axis
//! seed = 7
//! ```
//!
//! Dense manifests carry `matrices`, one row-major `dim * dim` list per axis.
//! When the parameter list is omitted it is drawn from `seed`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use axiscomp_core::{sample, AxisBasis, BlockRotation, DenseTransform, Element, Transform};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Rotation,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: String,
    pub dim: usize,
    pub axes: usize,
    pub backend: Backend,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub seed: u64,
}

impl Manifest {
    pub fn rotation(angles: Vec<Vec<f64>>, seed: u64) -> CliResult<Self> {
        let m = Self {
            schema_version: SCHEMA_VERSION.into(),
            dim: angles.first().map_or(0, |a| 2 * a.len()),
            axes: angles.len(),
            backend: Backend::Rotation,
            angles: Some(angles),
            matrices: None,
            seed,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn dense(dim: usize, matrices: Vec<Vec<f64>>, seed: u64) -> CliResult<Self> {
        let m = Self {
            schema_version: SCHEMA_VERSION.into(),
            dim,
            axes: matrices.len(),
            backend: Backend::Dense,
            angles: None,
            matrices: Some(matrices),
            seed,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let m: Self =
            toml::from_str(text).map_err(|e| CliError::usage(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::format(path, e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::usage(format!("manifest: {msg}")));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unrecognized schema_version {:?}",
                self.schema_version
            ));
        }
        if self.seed > i64::MAX as u64 {
            return bad(format!(
                "seed {} does not fit a signed 64-bit integer",
                self.seed
            ));
        }
        if self.dim == 0 || self.axes == 0 {
            return bad("dim and axes must be positive".into());
        }
        match self.backend {
            Backend::Rotation => {
                if !self.dim.is_multiple_of(2) {
                    return bad(format!(
                        "rotation backend needs an even dim, got {}",
                        self.dim
                    ));
                }
                if self.matrices.is_some() {
                    return bad("rotation backend takes angles, not matrices".into());
                }
                if let Some(a) = &self.angles {
                    if a.len() != self.axes || a.iter().any(|v| v.len() != self.dim / 2) {
                        return bad(format!(
                            "expected {} angle lists of length {}",
                            self.axes,
                            self.dim / 2
                        ));
                    }
                }
            }
            Backend::Dense => {
                if self.angles.is_some() {
                    return bad("dense backend takes matrices, not angles".into());
                }
                if let Some(m) = &self.matrices {
                    if m.len() != self.axes || m.iter().any(|v| v.len() != self.dim * self.dim) {
                        return bad(format!(
                            "expected {} matrices of {} entries",
                            self.axes,
                            self.dim * self.dim
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Per-axis transforms; missing parameters are drawn from `seed`.
    pub fn transforms(&self) -> CliResult<Vec<Transform>> {
        let mut rng = sample::rng(self.seed);
        (0..self.axes)
            .map(|axis| -> CliResult<Transform> {
                Ok(match self.backend {
                    Backend::Rotation => match &self.angles {
                        Some(a) => BlockRotation::from_angles(a[axis].clone())?.into(),
                        None => sample::rotation(&mut rng, self.dim / 2).into(),
                    },
                    Backend::Dense => match &self.matrices {
                        Some(m) => DenseTransform::new(self.dim, &m[axis])?.into(),
                        None => sample::dense(&mut rng, self.dim, 0.3).into(),
                    },
                })
            })
            .collect()
    }

    pub fn basis(&self) -> CliResult<Arc<AxisBasis>> {
        Ok(AxisBasis::shared(self.transforms()?)?)
    }

    pub fn rotations(&self) -> CliResult<Vec<BlockRotation>> {
        self.transforms()?
            .into_iter()
            .map(|t| match t {
                Transform::Rotation(r) => Ok(r),
                Transform::Dense(_) => {
                    Err(CliError::usage("this command needs the rotation backend"))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementEntry {
    pub content: Vec<f64>,
    pub powers: Vec<i64>,
}

/// `[[element]]` tables, each with `content` and `powers`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementsFile {
    #[serde(default)]
    pub element: Vec<ElementEntry>,
}

impl ElementsFile {
    pub fn from_elements(elements: &[Element]) -> Self {
        Self {
            element: elements
                .iter()
                .map(|e| ElementEntry {
                    content: e.content().to_vec(),
                    powers: e.powers().to_vec(),
                })
                .collect(),
        }
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("elements: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::format(path, e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("elements serialize")
    }

    pub fn elements(&self, basis: &Arc<AxisBasis>) -> CliResult<Vec<Element>> {
        self.element
            .iter()
            .map(|e| Ok(Element::new(e.content.clone(), e.powers.clone(), basis)?))
            .collect()
    }
}
