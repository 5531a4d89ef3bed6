//! File formats: TOML model and scenario files, JSON controller and
//! explicit-table artifacts. Matrices are stored as arrays of rows.

pub mod rows {
    //! Serde adapter storing a matrix as `[[row0...], [row1...], ...]`.

    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    use crate::numerics::Matrix;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        to_matrix(&rows).map_err(D::Error::custom)
    }

    pub fn to_matrix(rows: &[Vec<f64>]) -> Result<Matrix, String> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("matrix rows have unequal lengths".into());
        }
        Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}

pub mod column {
    //! Serde adapter storing a vector as a flat array.

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::numerics::Vector;

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::mpc::{ExplicitController, MpcOptions};
use crate::numerics::Matrix;
use crate::plant::{default_thresholds, ConstraintSet, PwaModel};
use crate::synthesis::{TerminalDesign, Weights};

pub const CONTROLLER_FORMAT: &str = "pwampc-controller/1";
pub const TABLE_FORMAT: &str = "pwampc-table/1";

/// SHA-256 (hex) of the compact JSON encoding of `value`.
pub fn hash_json<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value).map_err(|e| Error::Format(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// On-disk model description (TOML). Thresholds are derived from the
/// inner mode when omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default = "default_ts")]
    pub ts: f64,
    pub f_cp: f64,
    pub f_cn: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_n: Option<f64>,
    #[serde(with = "rows")]
    pub a_outer: Matrix,
    #[serde(with = "rows")]
    pub b_outer: Matrix,
    #[serde(with = "rows")]
    pub a_inner: Matrix,
    #[serde(with = "rows")]
    pub b_inner: Matrix,
    #[serde(default = "default_c", with = "rows")]
    pub c: Matrix,
    #[serde(default)]
    pub constraints: ConstraintSet,
}

fn default_ts() -> f64 {
    1e-3
}

fn default_c() -> Matrix {
    crate::numerics::from_rows(&[&[1.0, 0.0]])
}

impl From<&PwaModel> for ModelFile {
    fn from(m: &PwaModel) -> Self {
        Self {
            ts: m.ts,
            f_cp: m.f_cp,
            f_cn: m.f_cn,
            v_p: Some(m.v_p),
            v_n: Some(m.v_n),
            a_outer: m.a_outer.clone(),
            b_outer: m.b_outer.clone(),
            a_inner: m.a_inner.clone(),
            b_inner: m.b_inner.clone(),
            c: m.c.clone(),
            constraints: m.constraints,
        }
    }
}

impl ModelFile {
    pub fn into_model(self) -> Result<PwaModel> {
        let shapes = [
            (&self.a_outer, (2, 2), "a_outer"),
            (&self.b_outer, (2, 1), "b_outer"),
            (&self.a_inner, (2, 2), "a_inner"),
            (&self.b_inner, (2, 1), "b_inner"),
            (&self.c, (1, 2), "c"),
        ];
        for (m, shape, name) in shapes {
            if m.shape() != shape {
                return Err(Error::Dimension(format!(
                    "{name} must be {}x{}, got {}x{}",
                    shape.0,
                    shape.1,
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        let (vp, vn) = default_thresholds(&self.a_inner, &self.b_inner, self.f_cp, self.f_cn);
        let m = PwaModel {
            v_p: self.v_p.unwrap_or(vp),
            v_n: self.v_n.unwrap_or(vn),
            a_outer: self.a_outer,
            b_outer: self.b_outer,
            a_inner: self.a_inner,
            b_inner: self.b_inner,
            c: self.c,
            f_cp: self.f_cp,
            f_cn: self.f_cn,
            ts: self.ts,
            constraints: self.constraints,
        };
        m.validate()?;
        Ok(m)
    }
}

pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Format(e.to_string()))
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn load_model(text: &str) -> Result<PwaModel> {
    parse_toml::<ModelFile>(text)?.into_model()
}

pub fn model_to_toml(model: &PwaModel) -> Result<String> {
    to_toml(&ModelFile::from(model))
}

/// Synthesized controller: prediction model, tuning and terminal ingredients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerArtifact {
    pub format: String,
    pub model_hash: String,
    pub model: ModelFile,
    pub weights: Weights,
    pub mpc: MpcOptions,
    pub terminal: TerminalDesign,
    pub tolerances: Tolerances,
}

impl ControllerArtifact {
    pub fn new(model: &PwaModel, weights: Weights, mpc: MpcOptions, terminal: TerminalDesign) -> Result<Self> {
        let model = ModelFile::from(model);
        Ok(Self {
            format: CONTROLLER_FORMAT.into(),
            model_hash: hash_json(&model)?,
            model,
            weights,
            mpc,
            terminal,
            tolerances: Tolerances::default(),
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let a: Self = parse_json(text)?;
        if a.format != CONTROLLER_FORMAT {
            return Err(Error::Format(format!("unsupported controller format '{}'", a.format)));
        }
        if hash_json(&a.model)? != a.model_hash {
            return Err(Error::Format("controller model hash mismatch".into()));
        }
        Ok(a)
    }

    pub fn mpc_config(&self) -> Result<crate::mpc::MpcConfig> {
        Ok(crate::mpc::MpcConfig {
            options: self.mpc.clone(),
            weights: self.weights.clone(),
            model: self.model.clone().into_model()?,
            terminal: self.terminal.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableArtifact {
    pub format: String,
    pub controller_hash: String,
    pub region_count: usize,
    pub table: ExplicitController,
}

impl TableArtifact {
    pub fn new(controller: &ControllerArtifact, table: ExplicitController) -> Result<Self> {
        Ok(Self {
            format: TABLE_FORMAT.into(),
            controller_hash: hash_json(controller)?,
            region_count: table.regions.len(),
            table,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let a: Self = parse_json(text)?;
        if a.format != TABLE_FORMAT {
            return Err(Error::Format(format!("unsupported table format '{}'", a.format)));
        }
        Ok(a)
    }
}
