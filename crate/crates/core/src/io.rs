//! JSON interchange for matrices, states and channels.
//!
//! Matrices are row-major arrays of `[re, im]` pairs. Channel files carry
//! `dim` explicitly, so their matrices are flat; report matrices carry
//! their own shape.

use serde::{Deserialize, Serialize};

use crate::channels::{DensityMatrix, Dynamics, LindbladGenerator, QuantumChannel, System, TimeKind};
use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix};
use crate::tolerance::Tolerances;

pub type Pair = [f64; 2];

pub fn to_pairs(m: &CMatrix) -> Vec<Pair> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            out.push([z.re, z.im]);
        }
    }
    out
}

pub fn from_pairs(pairs: &[Pair], rows: usize, cols: usize, what: &str) -> Result<CMatrix> {
    if pairs.len() != rows * cols {
        return Err(Error::Parse(format!(
            "{what}: expected {} [re, im] pairs for a {rows}×{cols} matrix, got {}",
            rows * cols,
            pairs.len()
        )));
    }
    if let Some(k) = pairs.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Parse(format!("{what}: entry {k} is not finite")));
    }
    Ok(CMatrix::from_fn(rows, cols, |r, c| {
        let p = pairs[r * cols + c];
        c64(p[0], p[1])
    }))
}

/// A matrix with explicit shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Pair>,
}

impl From<&CMatrix> for MatrixJson {
    fn from(m: &CMatrix) -> Self {
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            data: to_pairs(m),
        }
    }
}

impl MatrixJson {
    pub fn to_matrix(&self, what: &str) -> Result<CMatrix> {
        from_pairs(&self.data, self.rows, self.cols, what)
    }
}

/// `#[serde(with = "crate::io::cmatrix")]` adapter.
pub mod cmatrix {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMatrix, D::Error> {
        let j = MatrixJson::deserialize(d)?;
        j.to_matrix("matrix").map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with = "crate::io::complex")]` adapter: `[re, im]`.
pub mod complex {
    use super::*;
    use crate::linalg::C64;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<C64, D::Error> {
        let [re, im] = Pair::deserialize(d)?;
        Ok(c64(re, im))
    }
}

/// `#[serde(with = "crate::io::cmatrix_vec")]` adapter.
pub mod cmatrix_vec {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ms: &[CMatrix], s: S) -> std::result::Result<S::Ok, S::Error> {
        let js: Vec<MatrixJson> = ms.iter().map(MatrixJson::from).collect();
        js.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<CMatrix>, D::Error> {
        let js = Vec::<MatrixJson>::deserialize(d)?;
        js.iter()
            .map(|j| j.to_matrix("matrix").map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Density matrices serialize as their matrix and are re-validated on load.
pub mod density {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &DensityMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from(d.matrix()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DensityMatrix, D::Error> {
        let m = MatrixJson::deserialize(d)?
            .to_matrix("state")
            .map_err(serde::de::Error::custom)?;
        DensityMatrix::new(m, &Tolerances::default()).map_err(serde::de::Error::custom)
    }
}

pub mod density_vec {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ds: &[DensityMatrix], s: S) -> std::result::Result<S::Ok, S::Error> {
        let js: Vec<MatrixJson> = ds.iter().map(|d| MatrixJson::from(d.matrix())).collect();
        js.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<DensityMatrix>, D::Error> {
        let js = Vec::<MatrixJson>::deserialize(d)?;
        js.iter()
            .map(|j| {
                let m = j.to_matrix("state").map_err(serde::de::Error::custom)?;
                DensityMatrix::new(m, &Tolerances::default()).map_err(serde::de::Error::custom)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Repr {
    Kraus,
    Superop,
    Choi,
    Lindblad,
}

/// The channel interchange format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelJson {
    pub dim: usize,
    pub time: TimeKind,
    pub repr: Repr,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matrices: Vec<Vec<Pair>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<Vec<Pair>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<Vec<Vec<Pair>>>,
}

// serde_json messages end with "at line L column C".
fn json_error(e: serde_json::Error) -> Error {
    Error::Parse(e.to_string())
}

pub fn parse_channel_json(text: &str) -> Result<ChannelJson> {
    serde_json::from_str(text).map_err(json_error)
}

pub fn parse_channel(text: &str, tol: &Tolerances) -> Result<System> {
    channel_from_json(&parse_channel_json(text)?, tol)
}

pub fn channel_from_json(j: &ChannelJson, tol: &Tolerances) -> Result<System> {
    let n = j.dim;
    if n == 0 {
        return Err(Error::Parse("dim must be at least 1".into()));
    }
    let flat = |pairs: &[Pair], rows: usize, what: String| from_pairs(pairs, rows, rows, &what);
    match (j.repr, j.time) {
        (Repr::Lindblad, TimeKind::Continuous) => {
            let h = match &j.hamiltonian {
                Some(h) => flat(h, n, "hamiltonian".into())?,
                None => CMatrix::zeros(n, n),
            };
            let jumps = j
                .jumps
                .as_deref()
                .unwrap_or(&[])
                .iter()
                .enumerate()
                .map(|(k, p)| flat(p, n, format!("jumps[{k}]")))
                .collect::<Result<Vec<_>>>()?;
            Ok(LindbladGenerator::new(h, jumps, tol)?.into())
        }
        (Repr::Superop, TimeKind::Continuous) => {
            let [m] = j.matrices.as_slice() else {
                return Err(Error::Parse("superop generator needs exactly one matrix".into()));
            };
            Ok(LindbladGenerator::from_superop(flat(m, n * n, "matrices[0]".into())?)?.into())
        }
        (Repr::Lindblad, TimeKind::Discrete) | (_, TimeKind::Continuous) => Err(Error::Parse(format!(
            "representation {:?} is not valid for {:?} time",
            j.repr, j.time
        ))),
        (Repr::Kraus, TimeKind::Discrete) => {
            let kraus = j
                .matrices
                .iter()
                .enumerate()
                .map(|(k, p)| flat(p, n, format!("matrices[{k}]")))
                .collect::<Result<Vec<_>>>()?;
            Ok(QuantumChannel::from_kraus(kraus)?.into())
        }
        (repr @ (Repr::Superop | Repr::Choi), TimeKind::Discrete) => {
            let [m] = j.matrices.as_slice() else {
                return Err(Error::Parse(format!("{repr:?} needs exactly one matrix")));
            };
            let m = flat(m, n * n, "matrices[0]".into())?;
            Ok(match repr {
                Repr::Superop => QuantumChannel::from_superop(m)?,
                _ => QuantumChannel::from_choi(&m)?,
            }
            .into())
        }
    }
}

/// Canonical JSON form: Kraus when available, else the superoperator;
/// explicit generators as Lindblad data.
pub fn channel_to_json(system: &System) -> ChannelJson {
    let n = system.dim();
    match system {
        System::Channel(c) if !c.kraus().is_empty() => ChannelJson {
            dim: n,
            time: TimeKind::Discrete,
            repr: Repr::Kraus,
            matrices: c.kraus().iter().map(to_pairs).collect(),
            hamiltonian: None,
            jumps: None,
        },
        System::Generator(g) if g.has_explicit_form() => ChannelJson {
            dim: n,
            time: TimeKind::Continuous,
            repr: Repr::Lindblad,
            matrices: vec![],
            hamiltonian: g.hamiltonian().map(to_pairs),
            jumps: Some(g.jumps().iter().map(to_pairs).collect()),
        },
        _ => ChannelJson {
            dim: n,
            time: system.time_kind(),
            repr: Repr::Superop,
            matrices: vec![to_pairs(system.superop())],
            hamiltonian: None,
            jumps: None,
        },
    }
}

/// A state file: `{"dim": N, "matrix": [[re, im], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateJson {
    pub dim: usize,
    pub matrix: Vec<Pair>,
}

pub fn parse_state(text: &str, tol: &Tolerances) -> Result<DensityMatrix> {
    let j: StateJson = serde_json::from_str(text).map_err(json_error)?;
    let m = from_pairs(&j.matrix, j.dim, j.dim, "matrix")?;
    DensityMatrix::new(m, tol)
}

pub fn state_to_json(rho: &DensityMatrix) -> StateJson {
    StateJson {
        dim: rho.dim(),
        matrix: to_pairs(rho.matrix()),
    }
}
