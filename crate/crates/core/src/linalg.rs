//! Flat-vector numerical kernel.
//!
//! Every defense operates on flattened parameter vectors. This module holds
//! the vector newtype plus the few geometric primitives the aggregation rules
//! are built from: max-abs normalization, cosine distance, centroid and the
//! dispersion statistic (population variance of centroid cosine distances).

use std::fmt;
use std::ops::Index;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat sequence of finite model coordinates.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Wrap `values`, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(ParamVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `self - other`, element-wise.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        check_dims(self.dim(), other.dim())?;
        ParamVector::new(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self + scale * other`, element-wise.
    pub fn add_scaled(&self, other: &ParamVector, scale: f64) -> Result<ParamVector> {
        check_dims(self.dim(), other.dim())?;
        ParamVector::new(self.0.iter().zip(&other.0).map(|(a, b)| a + scale * b).collect())
    }

    pub fn scale(&self, factor: f64) -> Result<ParamVector> {
        ParamVector::new(self.0.iter().map(|v| v * factor).collect())
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Debug for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ParamVector::new(values)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(v: ParamVector) -> Vec<f64> {
        v.0
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Per-gradient normalization applied before scaling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormStrategy {
    /// Divide by the largest absolute coordinate; entries land in [-1, 1].
    #[default]
    MaxAbs,
    /// Divide by the Euclidean norm.
    L2,
}

impl FromStr for NormStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maxabs" => Ok(NormStrategy::MaxAbs),
            "l2" => Ok(NormStrategy::L2),
            other => Err(Error::config(format!(
                "unknown normalization `{other}` (expected maxabs or l2)"
            ))),
        }
    }
}

impl fmt::Display for NormStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormStrategy::MaxAbs => "maxabs",
            NormStrategy::L2 => "l2",
        })
    }
}

/// Max-abs normalization: `v / max_j |v_j|`.
pub fn normalize(v: &ParamVector) -> Result<ParamVector> {
    normalize_with(v, NormStrategy::MaxAbs)
}

pub fn normalize_with(v: &ParamVector, strategy: NormStrategy) -> Result<ParamVector> {
    let denom = match strategy {
        NormStrategy::MaxAbs => v.max_abs(),
        NormStrategy::L2 => v.l2_norm(),
    };
    if denom == 0.0 {
        return Err(Error::ZeroVector("cannot normalize an all-zero vector"));
    }
    ParamVector::new(v.iter().map(|x| x / denom).collect())
}

/// `1 - <a,b> / (|a| |b|)`, clamped into [0, 2].
pub fn cosine_distance(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let na2 = dot(a.as_slice(), a.as_slice());
    let nb2 = dot(b.as_slice(), b.as_slice());
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(Error::ZeroVector("cosine distance of a zero-norm vector"));
    }
    // one square root keeps cos(v, v) exactly 1
    let cos = dot(a.as_slice(), b.as_slice()) / (na2 * nb2).sqrt();
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

/// Element-wise arithmetic mean, summed in input order.
pub fn mean_vector<'a, I>(vs: I) -> Result<ParamVector>
where
    I: IntoIterator<Item = &'a ParamVector>,
{
    let mut iter = vs.into_iter();
    let first = iter.next().ok_or(Error::EmptySet("mean of no vectors"))?;
    let mut acc = first.as_slice().to_vec();
    let mut count = 1usize;
    for v in iter {
        check_dims(acc.len(), v.dim())?;
        for (a, x) in acc.iter_mut().zip(v.iter()) {
            *a += x;
        }
        count += 1;
    }
    let n = count as f64;
    for a in &mut acc {
        *a /= n;
    }
    ParamVector::new(acc)
}

/// Population variance (divides by the count).
pub fn scalar_variance(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptySet("variance of no values"));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    Ok(xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n)
}

/// Variance of the cosine distances from each vector to the set's centroid.
///
/// Requires at least two vectors. A zero centroid is reported as
/// [`Error::DegenerateCentroid`]; callers that need a value use
/// [`DEGENERATE_DISPERSION`].
pub fn dispersion(vs: &[ParamVector]) -> Result<f64> {
    if vs.len() < 2 {
        return Err(Error::EmptySet("dispersion needs at least two vectors"));
    }
    let centroid = mean_vector(vs)?;
    if centroid.is_zero() {
        return Err(Error::DegenerateCentroid);
    }
    let distances = vs
        .iter()
        .map(|v| cosine_distance(v, &centroid))
        .collect::<Result<Vec<_>>>()?;
    scalar_variance(&distances)
}

/// Dispersion assigned to a round whose centroid vanishes.
pub const DEGENERATE_DISPERSION: f64 = f64::MAX;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            ParamVector::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite(1))
        ));
        assert!(ParamVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&pv(&[2.0, -4.0, 1.0])).unwrap(), pv(&[0.5, -1.0, 0.25]));
        assert_eq!(normalize(&pv(&[1.0])).unwrap(), pv(&[1.0]));
        assert!(matches!(normalize(&pv(&[0.0, 0.0])), Err(Error::ZeroVector(_))));
    }

    #[test]
    fn l2_normalization_has_unit_norm() {
        let n = normalize_with(&pv(&[3.0, 4.0]), NormStrategy::L2).unwrap();
        assert_eq!(n, pv(&[0.6, 0.8]));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_distance(&pv(&[1.0, 1.0]), &pv(&[1.0, 1.0])).unwrap(), 0.0);
        assert_eq!(cosine_distance(&pv(&[1.0, 0.0]), &pv(&[-1.0, 0.0])).unwrap(), 2.0);
        assert_eq!(cosine_distance(&pv(&[1.0, 0.0]), &pv(&[0.0, 1.0])).unwrap(), 1.0);
        assert!(matches!(
            cosine_distance(&pv(&[0.0, 0.0]), &pv(&[0.0, 1.0])),
            Err(Error::ZeroVector(_))
        ));
        assert!(matches!(
            cosine_distance(&pv(&[1.0]), &pv(&[0.0, 1.0])),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn mean_examples() {
        assert_eq!(
            mean_vector(&[pv(&[1.0, 1.0]), pv(&[3.0, 3.0])]).unwrap(),
            pv(&[2.0, 2.0])
        );
        assert_eq!(mean_vector(&[pv(&[5.0, -5.0])]).unwrap(), pv(&[5.0, -5.0]));
        let sym = [pv(&[1.0, 0.0]), pv(&[0.0, 1.0]), pv(&[-1.0, 0.0]), pv(&[0.0, -1.0])];
        assert_eq!(mean_vector(&sym).unwrap(), pv(&[0.0, 0.0]));
        assert!(matches!(
            mean_vector(std::iter::empty::<&ParamVector>()),
            Err(Error::EmptySet(_))
        ));
    }

    #[test]
    fn variance_examples() {
        assert_eq!(scalar_variance(&[3.0]).unwrap(), 0.0);
        assert_eq!(scalar_variance(&[0.0, 2.0]).unwrap(), 1.0);
        assert_eq!(scalar_variance(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 1.25);
        assert!(scalar_variance(&[]).is_err());
    }

    #[test]
    fn dispersion_of_identical_vectors_is_zero() {
        let v = pv(&[0.3, -1.0, 0.7]);
        assert!(dispersion(&vec![v; 5]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn dispersion_three_vector_oracle() {
        // Centroid of {[1,0],[1,0],[0,1]} is [2/3, 1/3]. Distances evaluated
        // by hand: 1 - 2/sqrt(5) twice and 1 - 1/sqrt(5) once.
        let s5 = 5.0_f64.sqrt();
        let d = [1.0 - 2.0 / s5, 1.0 - 2.0 / s5, 1.0 - 1.0 / s5];
        let mean = (d[0] + d[1] + d[2]) / 3.0;
        let expected = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
        // closed form: 2/45
        assert!((expected - 2.0 / 45.0).abs() < 1e-15);
        let got = dispersion(&[pv(&[1.0, 0.0]), pv(&[1.0, 0.0]), pv(&[0.0, 1.0])]).unwrap();
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn dispersion_errors() {
        assert!(matches!(dispersion(&[pv(&[1.0])]), Err(Error::EmptySet(_))));
        assert!(matches!(
            dispersion(&[pv(&[1.0, 0.0]), pv(&[-1.0, 0.0])]),
            Err(Error::DegenerateCentroid)
        ));
    }

    fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn normalize_scale_sign_idempotence(v in nonzero_vec(6), c in 0.01f64..100.0) {
            let v = pv(&v);
            let n = normalize(&v).unwrap();
            prop_assert!(n.iter().all(|x| (-1.0..=1.0).contains(x)));
            prop_assert!(n.iter().any(|x| x.abs() == 1.0));
            let nc = normalize(&v.scale(c).unwrap()).unwrap();
            for (a, b) in n.iter().zip(nc.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let neg = normalize(&v.scale(-1.0).unwrap()).unwrap();
            for (a, b) in n.iter().zip(neg.iter()) {
                prop_assert_eq!(*a, -*b);
            }
            prop_assert_eq!(normalize(&n).unwrap(), n);
        }

        #[test]
        fn cosine_laws(a in nonzero_vec(5), b in nonzero_vec(5), c in 0.01f64..100.0) {
            let (a, b) = (pv(&a), pv(&b));
            let dab = cosine_distance(&a, &b).unwrap();
            prop_assert!((0.0..=2.0).contains(&dab));
            prop_assert_eq!(dab, cosine_distance(&b, &a).unwrap());
            prop_assert!(cosine_distance(&a, &a).unwrap() < 1e-12);
            let scaled = cosine_distance(&a.scale(c).unwrap(), &b).unwrap();
            prop_assert!((scaled - dab).abs() < 1e-12);
        }

        #[test]
        fn dispersion_common_scale_and_permutation(
            vs in prop::collection::vec(nonzero_vec(4), 2..7),
            c in 0.1f64..10.0,
            rot in 0usize..7,
        ) {
            let vs: Vec<ParamVector> = vs.iter().map(|v| pv(v)).collect();
            let centroid = mean_vector(&vs).unwrap();
            prop_assume!(centroid.l2_norm() > 0.5);
            let base = dispersion(&vs).unwrap();
            let mut permuted = vs.clone();
            permuted.rotate_left(rot % vs.len());
            prop_assert!((dispersion(&permuted).unwrap() - base).abs() < 1e-12);
            let scaled: Vec<_> = vs.iter().map(|v| v.scale(c).unwrap()).collect();
            prop_assert!((dispersion(&scaled).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn parallel_vectors_have_zero_dispersion(
            v in nonzero_vec(5),
            scales in prop::collection::vec(0.1f64..10.0, 2..8),
        ) {
            let v = pv(&v);
            let vs: Vec<_> = scales.iter().map(|s| v.scale(*s).unwrap()).collect();
            prop_assert!(dispersion(&vs).unwrap().abs() < 1e-12);
        }
    }
}
