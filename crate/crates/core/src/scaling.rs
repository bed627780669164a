//! Fixed clinical-anchor scaling of the raw biomarkers.
//!
//! Every rule is affine and unclamped: values outside the normative range
//! map outside `[0, 1]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustics::FeatureVector;
use crate::real::Real;

/// Mean English articulation rate, syllables per second.
pub const ARTICULATION_REFERENCE: f64 = 6.19;
/// Upper bound of casual conversational pace, words per minute.
pub const SPEAKING_RATE_REFERENCE: f64 = 150.0;
pub const JITTER_MIN: f64 = 0.00106;
pub const JITTER_MAX: f64 = 0.02312;
/// Upper bound of normal shimmer, as a fraction.
pub const SHIMMER_MAX: f64 = 0.05;
pub const F0_MIN_HZ: f64 = 75.0;
pub const F0_MAX_HZ: f64 = 300.0;
pub const F1_MIN_HZ: f64 = 200.0;
pub const F1_MAX_HZ: f64 = 1000.0;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("non-finite input in feature {index}")]
pub struct NonFiniteInput {
    pub index: usize,
}

/// Scaled biomarkers in wire order
/// `(ar, sr, jitter, shimmer, f0_mean, f0_sd, f1_var)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScaledFeatureVector<T = f64>(pub [T; 7]);

impl<T: Real> ScaledFeatureVector<T> {
    pub fn values(&self) -> &[T; 7] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// `(offset, divisor)` of each rule: `scaled = (raw - offset) / divisor`.
fn rules<T: Real>() -> [(T, T); 7] {
    [
        (
            T::lit(ARTICULATION_REFERENCE),
            T::lit(ARTICULATION_REFERENCE),
        ),
        (T::zero(), T::lit(SPEAKING_RATE_REFERENCE)),
        (T::lit(JITTER_MIN), T::lit(JITTER_MAX) - T::lit(JITTER_MIN)),
        (T::zero(), T::lit(SHIMMER_MAX)),
        (T::lit(F0_MIN_HZ), T::lit(F0_MAX_HZ) - T::lit(F0_MIN_HZ)),
        (T::zero(), T::lit(F0_MAX_HZ) - T::lit(F0_MIN_HZ)),
        // offsets a variance by a frequency bound, as the anchors prescribe
        (T::lit(F1_MIN_HZ), T::lit(F1_MAX_HZ) - T::lit(F1_MIN_HZ)),
    ]
}

pub fn scale<T: Real>(raw: &FeatureVector<T>) -> Result<ScaledFeatureVector<T>, NonFiniteInput> {
    let values = raw.to_array();
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(NonFiniteInput { index });
    }
    let rules = rules::<T>();
    let mut out = [T::zero(); 7];
    for ((o, &v), &(offset, divisor)) in out.iter_mut().zip(&values).zip(&rules) {
        *o = (v - offset) / divisor;
    }
    Ok(ScaledFeatureVector(out))
}

/// Inverse of [`scale`].
pub fn unscale<T: Real>(scaled: &ScaledFeatureVector<T>) -> FeatureVector<T> {
    let rules = rules::<T>();
    let mut out = [T::zero(); 7];
    for ((o, &v), &(offset, divisor)) in out.iter_mut().zip(&scaled.0).zip(&rules) {
        *o = v * divisor + offset;
    }
    FeatureVector::from_array(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base() -> FeatureVector<f64> {
        FeatureVector {
            articulation_rate: 6.19,
            speaking_rate: 150.0,
            jitter: 0.00106,
            shimmer: 0.05,
            f0_mean: 75.0,
            f0_sd: 0.0,
            f1_variance: 200.0,
        }
    }

    #[test]
    fn anchor_points() {
        let s = scale(&base()).unwrap().0;
        assert_eq!(s, [0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);

        let upper = FeatureVector {
            jitter: 0.02312,
            f0_mean: 300.0,
            f1_variance: 1000.0,
            ..base()
        };
        let s = scale(&upper).unwrap().0;
        assert!((s[2] - 1.0).abs() < 1e-12);
        assert_eq!(s[4], 1.0);
        assert_eq!(s[6], 1.0);
    }

    #[test]
    fn half_reference_articulation() {
        let v = FeatureVector {
            articulation_rate: 3.095,
            ..base()
        };
        assert!((scale(&v).unwrap().0[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_is_not_clamped() {
        let v = FeatureVector {
            f0_mean: 400.0,
            shimmer: 0.2,
            ..base()
        };
        let s = scale(&v).unwrap().0;
        assert!(s[4] > 1.0);
        assert!((s[3] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_rejected() {
        let v = FeatureVector {
            jitter: f64::NAN,
            ..base()
        };
        assert_eq!(scale(&v), Err(NonFiniteInput { index: 2 }));
    }

    #[test]
    fn f32_scaling() {
        let v = FeatureVector::<f32> {
            articulation_rate: 6.19,
            speaking_rate: 75.0,
            jitter: 0.00106,
            shimmer: 0.025,
            f0_mean: 187.5,
            f0_sd: 22.5,
            f1_variance: 600.0,
        };
        let s = scale(&v).unwrap().0;
        let expect = [0.0f32, 0.5, 0.0, 0.5, 0.5, 0.1, 0.5];
        for (a, b) in s.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    fn finite() -> impl Strategy<Value = f64> {
        -1.0e6..1.0e6f64
    }

    proptest! {
        #[test]
        fn inverse_round_trips(v in proptest::array::uniform7(finite())) {
            let raw = FeatureVector::from_array(v);
            let back = unscale(&scale(&raw).unwrap()).to_array();
            for (a, b) in back.iter().zip(&v) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn each_rule_is_strictly_increasing(
            v in proptest::array::uniform7(finite()),
            idx in 0usize..7,
            bump in 1.0e-3..1.0e3f64,
        ) {
            let lo = FeatureVector::from_array(v);
            let mut hi_arr = v;
            hi_arr[idx] += bump;
            let (a, b) = (scale(&lo).unwrap().0, scale(&FeatureVector::from_array(hi_arr)).unwrap().0);
            prop_assert!(b[idx] > a[idx]);
            prop_assert_eq!(scale(&lo).unwrap(), scale(&lo).unwrap());
        }
    }
}
