use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A unit-norm vector in the shared text/image embedding space.
///
/// Stored as `f32`; reductions accumulate in `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Wraps values already known to be unit-norm (e.g. read back from an index file).
    pub fn from_unit(values: Vec<f32>) -> Self {
        Embedding(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }

    /// Standard basis vector `e_i` of `R^dim`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0f32; dim];
        v[i] = 1.0;
        Embedding(v)
    }
}

/// Scale `v` to unit Euclidean norm.
pub fn l2_normalize(v: &[f32]) -> Result<Embedding> {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateEmbedding);
    }
    Ok(Embedding(v.iter().map(|&x| (x as f64 / norm) as f32).collect()))
}

/// Accept a received vector as is when it is already unit-norm within
/// `1e-6`, so that relaying an embedding does not perturb its bits;
/// otherwise normalize it.
pub fn accept_unit(v: Vec<f32>) -> Result<Embedding> {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if (norm - 1.0).abs() <= 1e-6 && v.iter().all(|x| x.is_finite()) {
        return Ok(Embedding(v));
    }
    l2_normalize(&v)
}

/// Same as [`l2_normalize`] for `f64` input.
pub fn l2_normalize_f64(v: &[f64]) -> Result<Embedding> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateEmbedding);
    }
    Ok(Embedding(v.iter().map(|x| (x / norm) as f32).collect()))
}

/// Dot product accumulated in `f64`, clamped to `[-1, 1]`.
#[inline]
pub fn dot_clamped(a: &[f32], b: &[f32]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    s.clamp(-1.0, 1.0)
}

/// Cosine similarity of two unit embeddings.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(dot_clamped(&a.0, &b.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f32], b: &[f32]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-7)
    }

    #[test]
    fn accept_unit_keeps_unit_vectors_bit_exact() {
        let v = l2_normalize(&[0.3, -1.7, 2.2, 0.01]).unwrap().into_vec();
        assert_eq!(accept_unit(v.clone()).unwrap().into_vec(), v);
        assert_eq!(accept_unit(vec![3.0, 4.0]).unwrap().as_slice(), &[0.6, 0.8]);
        assert!(accept_unit(vec![0.0, 0.0]).is_err());
        assert!(accept_unit(vec![f32::NAN, 1.0]).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert!(close(l2_normalize(&[3.0, 4.0]).unwrap().as_slice(), &[0.6, 0.8]));
        assert!(close(
            l2_normalize(&[0.0, 0.0, 5.0]).unwrap().as_slice(),
            &[0.0, 0.0, 1.0]
        ));
        let inv_sqrt2 = std::f32::consts::FRAC_1_SQRT_2;
        assert!(close(
            l2_normalize(&[1.0, 1.0]).unwrap().as_slice(),
            &[inv_sqrt2, inv_sqrt2]
        ));
    }

    #[test]
    fn zero_vector_is_degenerate() {
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::DegenerateEmbedding)));
        assert!(matches!(l2_normalize(&[]), Err(Error::DegenerateEmbedding)));
    }

    #[test]
    fn cosine_examples() {
        let a = l2_normalize(&[1.0, 0.0]).unwrap();
        let b = l2_normalize(&[0.0, 1.0]).unwrap();
        let c = l2_normalize(&[0.6, 0.8]).unwrap();
        assert_eq!(cosine(&a, &a).unwrap(), 1.0);
        assert_eq!(cosine(&a, &b).unwrap(), 0.0);
        assert!((cosine(&a, &c).unwrap() - 0.6).abs() < 1e-7);
    }

    #[test]
    fn cosine_dimension_mismatch() {
        let a = Embedding::basis(2, 0);
        let b = Embedding::basis(3, 0);
        assert!(matches!(
            cosine(&a, &b),
            Err(Error::DimensionMismatch { expected: 2, actual: 3 })
        ));
    }

    fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-100.0f32..100.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn normalized_has_unit_norm(v in nonzero_vec(24)) {
            let e = l2_normalize(&v).unwrap();
            prop_assert!((e.norm() - 1.0).abs() <= 1e-6);
        }

        #[test]
        fn cosine_is_symmetric(a in nonzero_vec(16), b in nonzero_vec(16)) {
            let (a, b) = (l2_normalize(&a).unwrap(), l2_normalize(&b).unwrap());
            let (ab, ba) = (cosine(&a, &b).unwrap(), cosine(&b, &a).unwrap());
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn cosine_is_scale_invariant(v in nonzero_vec(8), w in nonzero_vec(8), c in 0.01f32..100.0) {
            let scaled: Vec<f32> = v.iter().map(|x| x * c).collect();
            let w = l2_normalize(&w).unwrap();
            let lhs = cosine(&l2_normalize(&scaled).unwrap(), &w).unwrap();
            let rhs = cosine(&l2_normalize(&v).unwrap(), &w).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-6);
        }
    }
}
