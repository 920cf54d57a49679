//! Unit-norm embedding vectors and cosine similarity.
//!
//! Values are kept as `f32` at rest. Every reduction (norms, dot products)
//! accumulates in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the L2 norm of a stored vector.
pub const NORM_TOLERANCE: f64 = 1e-4;

/// A dense unit-norm vector: an encoded image or an encoded label prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// Scales `raw` onto the unit sphere.
    pub fn normalize(raw: &[f64]) -> Result<Self> {
        let norm = l2_norm(raw.iter().copied())?;
        Ok(Self {
            values: raw.iter().map(|&x| (x / norm) as f32).collect(),
        })
    }

    pub fn normalize_f32(raw: &[f32]) -> Result<Self> {
        let norm = l2_norm(raw.iter().map(|&x| f64::from(x)))?;
        Ok(Self {
            values: raw.iter().map(|&x| (f64::from(x) / norm) as f32).collect(),
        })
    }

    /// Wraps values that are already unit-norm, checking the norm within
    /// [`NORM_TOLERANCE`].
    pub fn from_unit(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let norm = sum_squares(values.iter().map(|&x| f64::from(x))).sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NormViolation {
                key: String::new(),
                norm,
            });
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        sum_squares(self.values.iter().map(|&x| f64::from(x))).sqrt()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&x| f64::from(x)).collect()
    }
}

impl TryFrom<Vec<f32>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f32>) -> Result<Self> {
        Self::from_unit(values)
    }
}

impl From<EmbeddingVector> for Vec<f32> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

fn sum_squares(values: impl Iterator<Item = f64>) -> f64 {
    values.map(|x| x * x).sum()
}

fn l2_norm(values: impl Iterator<Item = f64> + Clone) -> Result<f64> {
    let mut any = false;
    for x in values.clone() {
        if !x.is_finite() {
            return Err(Error::NonFinite);
        }
        any = true;
    }
    if !any {
        return Err(Error::EmptyInput);
    }
    // Rescale by the largest magnitude so tiny inputs don't underflow.
    let scale = values.clone().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_normal() {
        return Err(Error::ZeroVector);
    }
    let norm = sum_squares(values.map(|x| x / scale)).sqrt() * scale;
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(norm)
}

/// Cosine similarity with a flag telling whether clamping to `[-1, 1]`
/// changed the raw dot product.
pub fn cosine_checked(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<(f64, bool)> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let dot: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    let clamped = dot.clamp(-1.0, 1.0);
    Ok((clamped, clamped != dot))
}

/// Dot product of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    cosine_checked(a, b).map(|(c, _)| c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normalize_examples() {
        let v = EmbeddingVector::normalize(&[3.0, 4.0]).unwrap();
        assert_eq!(v.values(), &[0.6, 0.8]);
        let v = EmbeddingVector::normalize(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(v.values(), &[1.0, 0.0, 0.0]);
        let v = EmbeddingVector::normalize(&[1.0, 1.0]).unwrap();
        for &x in v.values() {
            assert!(close(f64::from(x), 0.707_106_781_186_547_5, 1e-6));
        }
    }

    #[test]
    fn normalize_errors() {
        assert!(matches!(
            EmbeddingVector::normalize(&[0.0, 0.0]),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            EmbeddingVector::normalize(&[1.0, f64::NAN]),
            Err(Error::NonFinite)
        ));
        assert!(matches!(
            EmbeddingVector::normalize(&[f64::INFINITY]),
            Err(Error::NonFinite)
        ));
        assert!(matches!(EmbeddingVector::normalize(&[]), Err(Error::EmptyInput)));
        // Subnormal-only input cannot be rescaled reliably.
        assert!(matches!(
            EmbeddingVector::normalize(&[f64::MIN_POSITIVE / 4.0]),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn tiny_inputs_are_rescaled() {
        let v = EmbeddingVector::normalize(&[3e-300, 4e-300]).unwrap();
        assert_eq!(v.values(), &[0.6, 0.8]);
    }

    #[test]
    fn cosine_examples() {
        let u = EmbeddingVector::normalize(&[0.3, -0.2, 0.9]).unwrap();
        assert!(close(cosine(&u, &u).unwrap(), 1.0, 1e-6));
        let x = EmbeddingVector::normalize(&[1.0, 0.0]).unwrap();
        let y = EmbeddingVector::normalize(&[0.0, 1.0]).unwrap();
        assert_eq!(cosine(&x, &y).unwrap(), 0.0);
        let a = EmbeddingVector::normalize(&[0.6, 0.8]).unwrap();
        let b = EmbeddingVector::normalize(&[0.8, 0.6]).unwrap();
        assert!(close(cosine(&a, &b).unwrap(), 0.96, 1e-6));
    }

    #[test]
    fn cosine_dim_mismatch() {
        let a = EmbeddingVector::normalize(&[1.0, 0.0]).unwrap();
        let b = EmbeddingVector::normalize(&[1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            cosine(&a, &b),
            Err(Error::DimMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn from_unit_rejects_off_sphere() {
        assert!(matches!(
            EmbeddingVector::from_unit(vec![0.5, 0.5]),
            Err(Error::NormViolation { .. })
        ));
        assert!(EmbeddingVector::from_unit(vec![0.6, 0.8]).is_ok());
    }

    fn raw_vec() -> impl Strategy<Value = Vec<f64>> {
        (1usize..64)
            .prop_flat_map(|n| proptest::collection::vec(-10.0f64..10.0, n))
            .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn normalize_gives_unit_norm(raw in raw_vec()) {
            let v = EmbeddingVector::normalize(&raw).unwrap();
            prop_assert!((v.norm() - 1.0).abs() < 1e-6);
        }

        #[test]
        fn normalize_is_idempotent(raw in raw_vec()) {
            let once = EmbeddingVector::normalize(&raw).unwrap();
            let twice = EmbeddingVector::normalize_f32(once.values()).unwrap();
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }

        #[test]
        fn cosine_is_symmetric(
            pair in (1usize..48).prop_flat_map(|n| (
                proptest::collection::vec(-1.0f64..1.0, n),
                proptest::collection::vec(-1.0f64..1.0, n),
            )).prop_filter("nonzero", |(a, b)| a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3))
        ) {
            let a = EmbeddingVector::normalize(&pair.0).unwrap();
            let b = EmbeddingVector::normalize(&pair.1).unwrap();
            let ab = cosine(&a, &b).unwrap();
            prop_assert_eq!(ab, cosine(&b, &a).unwrap());
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }
}
