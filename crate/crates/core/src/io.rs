//! JSON document formats: systems, trajectories, noise bounds, and
//! certificates. Matrices are row-major nested arrays; vectors are flat
//! arrays.

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use crate::certificates::{StabilizationCertificate, VerificationReport};
use crate::data::{NoiseBound, TrajectoryData};
use crate::error::{Error, Result};
use crate::lti::LinearSystem;

pub fn matrix_to_json(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!(m[(i, j)])).collect()))
            .collect(),
    )
}

pub fn matrix_from_json(v: &Value, what: &str) -> Result<DMatrix<f64>> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::InvalidParameter(format!("{what}: expected an array of rows")))?;
    if rows.is_empty() {
        return Err(Error::InvalidParameter(format!("{what}: empty matrix")));
    }
    // A flat numeric array is accepted as a single row.
    if rows[0].is_number() {
        let row = numbers(rows, what)?;
        return Ok(DMatrix::from_row_slice(1, row.len(), &row));
    }
    let ncols = rows[0].as_array().map(|r| r.len()).unwrap_or(0);
    let mut data = Vec::with_capacity(rows.len() * ncols);
    for r in rows {
        let r = r
            .as_array()
            .ok_or_else(|| Error::InvalidParameter(format!("{what}: ragged rows")))?;
        if r.len() != ncols {
            return Err(Error::InvalidParameter(format!("{what}: ragged rows")));
        }
        data.extend(numbers(r, what)?);
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &data))
}

pub fn vector_to_json(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|x| json!(x)).collect())
}

pub fn vector_from_json(v: &Value, what: &str) -> Result<DVector<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::InvalidParameter(format!("{what}: expected an array")))?;
    // accept a column written as nested single-element rows
    if !arr.is_empty() && arr[0].is_array() {
        let m = matrix_from_json(v, what)?;
        if m.ncols() != 1 {
            return Err(Error::InvalidParameter(format!("{what}: expected a column")));
        }
        return Ok(DVector::from_column_slice(m.column(0).as_slice()));
    }
    Ok(DVector::from_vec(numbers(arr, what)?))
}

fn numbers(arr: &[Value], what: &str) -> Result<Vec<f64>> {
    arr.iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| Error::InvalidParameter(format!("{what}: non-numeric entry")))
        })
        .collect()
}

/// A combined document holding any of: system matrices, trajectory
/// data, realized noise, and a noise bound.
#[derive(Debug, Clone, Default)]
pub struct Document {
    pub system: Option<LinearSystem>,
    pub b: Option<DVector<f64>>,
    pub trajectory: Option<TrajectoryData>,
    pub noise_bound: Option<NoiseBound>,
}

impl Document {
    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::InvalidParameter("document must be a JSON object".into()))?;
        let b = match obj.get("B") {
            Some(bv) => Some(vector_from_json(bv, "B")?),
            None => None,
        };
        let system = match (obj.get("A"), &b) {
            (Some(av), Some(b)) => {
                Some(LinearSystem::new(matrix_from_json(av, "A")?, b.clone())?)
            }
            (Some(_), None) => {
                return Err(Error::InvalidParameter("document has A but no B".into()))
            }
            _ => None,
        };
        let trajectory = match (obj.get("X_minus"), obj.get("U"), obj.get("X_plus")) {
            (Some(xm), Some(u), Some(xp)) => {
                let x_minus = matrix_from_json(xm, "X_minus")?;
                let u = matrix_from_json(u, "U")?;
                let x_plus = matrix_from_json(xp, "X_plus")?;
                Some(match obj.get("W") {
                    Some(w) => TrajectoryData::with_noise(
                        x_minus,
                        u,
                        x_plus,
                        matrix_from_json(w, "W")?,
                    )?,
                    None => TrajectoryData::new(x_minus, u, x_plus)?,
                })
            }
            (None, None, None) => None,
            _ => {
                return Err(Error::InvalidParameter(
                    "trajectory requires all of X_minus, U, X_plus".into(),
                ))
            }
        };
        let noise_bound = match obj.get("noise_bound") {
            Some(nb) => Some(noise_bound_from_json(nb, trajectory.as_ref())?),
            None => None,
        };
        Ok(Document { system, b, trajectory, noise_bound })
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        if let Some(sys) = &self.system {
            obj.insert("A".into(), matrix_to_json(sys.a()));
        }
        if let Some(b) = &self.b {
            obj.insert("B".into(), vector_to_json(b));
        }
        if let Some(t) = &self.trajectory {
            obj.insert("X_minus".into(), matrix_to_json(t.x_minus()));
            obj.insert("U".into(), matrix_to_json(t.u()));
            obj.insert("X_plus".into(), matrix_to_json(t.x_plus()));
            if let Some(w) = t.noise() {
                obj.insert("W".into(), matrix_to_json(w));
            }
        }
        if let Some(nb) = &self.noise_bound {
            obj.insert("noise_bound".into(), noise_bound_to_json(nb));
        }
        Value::Object(obj)
    }

    /// The input vector, from either the explicit B or the system.
    pub fn input_vector(&self) -> Result<DVector<f64>> {
        self.b
            .clone()
            .ok_or_else(|| Error::InvalidParameter("document has no input vector B".into()))
    }
}

/// Full form {"Phi11", "Phi12", "Phi22"} or the energy-ball shorthand
/// {"ball_squared_radius": omega_max, "T": horizon}.
pub fn noise_bound_from_json(v: &Value, data: Option<&TrajectoryData>) -> Result<NoiseBound> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::InvalidParameter("noise bound must be a JSON object".into()))?;
    if let Some(omega) = obj.get("ball_squared_radius") {
        let omega = omega
            .as_f64()
            .ok_or_else(|| Error::InvalidParameter("ball_squared_radius must be a number".into()))?;
        let t = match obj.get("T") {
            Some(t) => t
                .as_u64()
                .ok_or_else(|| Error::InvalidParameter("T must be a positive integer".into()))?
                as usize,
            None => data
                .map(|d| d.horizon())
                .ok_or_else(|| Error::InvalidParameter("shorthand noise bound needs T".into()))?,
        };
        let n = data
            .map(|d| d.dim())
            .ok_or_else(|| Error::InvalidParameter("shorthand noise bound needs data".into()))?;
        return NoiseBound::energy_ball(n, t, omega);
    }
    let phi11 = matrix_from_json(
        obj.get("Phi11")
            .ok_or_else(|| Error::InvalidParameter("noise bound missing Phi11".into()))?,
        "Phi11",
    )?;
    let phi12 = matrix_from_json(
        obj.get("Phi12")
            .ok_or_else(|| Error::InvalidParameter("noise bound missing Phi12".into()))?,
        "Phi12",
    )?;
    let phi22 = matrix_from_json(
        obj.get("Phi22")
            .ok_or_else(|| Error::InvalidParameter("noise bound missing Phi22".into()))?,
        "Phi22",
    )?;
    NoiseBound::new(phi11, phi12, phi22)
}

pub fn noise_bound_to_json(nb: &NoiseBound) -> Value {
    json!({
        "Phi11": matrix_to_json(nb.phi11()),
        "Phi12": matrix_to_json(nb.phi12()),
        "Phi22": matrix_to_json(nb.phi22()),
    })
}

pub fn certificate_to_json(
    cert: &StabilizationCertificate,
    verification: Option<&VerificationReport>,
) -> Value {
    json!({
        "K": matrix_to_json(&cert.k),
        "Y": matrix_to_json(&cert.y),
        "X": matrix_to_json(&cert.x),
        "delta": cert.delta,
        "rho": cert.rho,
        "alpha": cert.alpha,
        "beta": cert.beta,
        "status": "feasible",
        "slater": cert.slater_ok,
        "verification": verification.map(|r| serde_json::to_value(r).unwrap_or(Value::Null)),
    })
}

/// Reads back the fields of a certificate document needed for
/// re-verification.
pub fn certificate_from_json(v: &Value) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::InvalidParameter("certificate must be a JSON object".into()))?;
    let k = matrix_from_json(
        obj.get("K").ok_or_else(|| Error::InvalidParameter("certificate missing K".into()))?,
        "K",
    )?;
    let y = matrix_from_json(
        obj.get("Y").ok_or_else(|| Error::InvalidParameter("certificate missing Y".into()))?,
        "Y",
    )?;
    let delta = obj
        .get("delta")
        .and_then(|d| d.as_f64())
        .ok_or_else(|| Error::InvalidParameter("certificate missing delta".into()))?;
    Ok((k, y, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn matrix_roundtrip() {
        let m = dmatrix![1.0, 2.5; -3.0, 1e-17];
        let j = matrix_to_json(&m);
        let back = matrix_from_json(&j, "m").unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn vector_accepts_flat_and_column() {
        let flat = serde_json::json!([1.0, 2.0]);
        let col = serde_json::json!([[1.0], [2.0]]);
        assert_eq!(vector_from_json(&flat, "v").unwrap(), vector_from_json(&col, "v").unwrap());
    }

    #[test]
    fn document_roundtrip_with_bound() {
        let j = serde_json::json!({
            "A": [[0.5, 0.0], [0.1, 0.2]],
            "B": [1.0, 0.0],
            "X_minus": [[1.0, 2.0], [0.0, 1.0]],
            "U": [[0.5, -0.5]],
            "X_plus": [[0.5, 1.0], [0.1, 0.4]],
            "noise_bound": {"ball_squared_radius": 0.1, "T": 2},
        });
        let doc = Document::from_json(&j).unwrap();
        assert!(doc.system.is_some());
        let nb = doc.noise_bound.as_ref().unwrap();
        assert_eq!(nb.phi11()[(0, 0)], 2.0 * 0.1);
        let back = Document::from_json(&doc.to_json()).unwrap();
        assert_eq!(back.trajectory.unwrap(), doc.trajectory.unwrap());
    }

    #[test]
    fn rejects_partial_trajectory() {
        let j = serde_json::json!({"X_minus": [[1.0]], "U": [[1.0]]});
        assert!(Document::from_json(&j).is_err());
    }

    #[test]
    fn rejects_ragged_matrix() {
        let j = serde_json::json!([[1.0, 2.0], [3.0]]);
        assert!(matrix_from_json(&j, "m").is_err());
    }
}
