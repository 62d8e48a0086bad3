use crate::gradcore::ParamVector;
use crate::scalar::Scalar;

/// Projects `delta` onto the l2 ball of radius `c`.
pub fn clip<T: Scalar>(delta: &ParamVector<T>, c: T) -> ParamVector<T> {
    clip_with_flag(delta, c).0
}

/// As [`clip`], also reporting whether the delta was rescaled.
pub fn clip_with_flag<T: Scalar>(delta: &ParamVector<T>, c: T) -> (ParamVector<T>, bool) {
    let norm = delta.norm();
    if norm <= c {
        return (delta.clone(), false);
    }
    let mut factor = c / norm;
    let mut out = delta.scaled(factor);
    // rounding can leave the result a few ulps outside the ball
    let shrink = T::one() - T::lit(4.0) * T::epsilon();
    while out.norm() > c {
        factor = factor * shrink;
        out = delta.scaled(factor);
    }
    (out, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::Layout;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn pv(v: Vec<f64>) -> ParamVector<f64> {
        ParamVector::from_vec(Arc::new(Layout::from_blocks([("x", vec![v.len()])])), v).unwrap()
    }

    #[test]
    fn scales_down_to_threshold() {
        let (y, hit) = clip_with_flag(&pv(vec![6.0, 8.0]), 5.0);
        assert!(hit);
        assert_eq!(y.as_slice(), &[3.0, 4.0]);
        assert_eq!(y.norm(), 5.0);
    }

    #[test]
    fn inside_ball_is_unchanged() {
        let x = pv(vec![1.8, 2.4]);
        let (y, hit) = clip_with_flag(&x, 5.0);
        assert!(!hit);
        assert_eq!(y, x);
        assert_eq!(clip(&pv(vec![0.0; 4]), 1.0), pv(vec![0.0; 4]));
    }

    #[test]
    fn generic_over_f32() {
        let x =
            ParamVector::<f32>::from_vec(Arc::new(Layout::from_blocks([("x", vec![2])])), vec![30.0, 40.0]).unwrap();
        assert!(clip(&x, 1.0f32).norm() <= 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn never_exceeds_threshold(
            v in prop::collection::vec(-1e3f64..1e3, 1..40),
            c in 1e-3f64..50.0,
        ) {
            let x = pv(v);
            let y = clip(&x, c);
            prop_assert!(y.norm() <= c);
            if x.norm() <= c {
                prop_assert_eq!(y, x);
            }
        }
    }
}
