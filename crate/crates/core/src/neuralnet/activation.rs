//! Branch-free `exp`, `sigmoid` and `tanh` over slices, written so the loops
//! vectorize. Relative error of `exp` is within a few ulp on `[-708, 708]`.

const LOG2E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
/// 1.5 · 2⁵²: adding it rounds to an integer kept in the low mantissa bits.
const SHIFTER: f64 = 6_755_399_441_055_744.0;

// 1/k! for k = 12 down to 2
const INV_FACT: [f64; 11] = [
    1.0 / 479_001_600.0,
    1.0 / 39_916_800.0,
    1.0 / 3_628_800.0,
    1.0 / 362_880.0,
    1.0 / 40_320.0,
    1.0 / 5_040.0,
    1.0 / 720.0,
    1.0 / 120.0,
    1.0 / 24.0,
    1.0 / 6.0,
    0.5,
];

#[inline(always)]
pub(crate) fn exp(x: f64) -> f64 {
    let x = x.clamp(-708.0, 708.0);
    let shifted = x * LOG2E + SHIFTER;
    let n = shifted - SHIFTER;
    let r = x - n * LN2_HI - n * LN2_LO;
    let mut p = INV_FACT[0];
    for c in &INV_FACT[1..] {
        p = p * r + c;
    }
    p = p * r + 1.0;
    p = p * r + 1.0;
    let k = shifted.to_bits().wrapping_sub(SHIFTER.to_bits());
    let scale = f64::from_bits(k.wrapping_add(1023) << 52);
    p * scale
}

#[inline(always)]
pub(crate) fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + exp(-v))
}

#[inline(always)]
pub(crate) fn tanh(v: f64) -> f64 {
    let e = exp(-2.0 * v.abs());
    ((1.0 - e) / (1.0 + e)).copysign(v)
}

/// Runs `$body` compiled for AVX-512 or AVX2 when the CPU has them. FMA
/// stays off and every kernel reduces in a fixed order, so all paths give
/// identical results.
macro_rules! dispatch {
    ($(#[$meta:meta])* $name:ident ($($arg:ident : $ty:ty),*) $body:block) => {
        $(#[$meta])*
        pub(crate) fn $name($($arg: $ty),*) {
            #[cfg(target_arch = "x86_64")]
            {
                #[target_feature(enable = "avx512f")]
                unsafe fn wide512($($arg: $ty),*) $body
                #[target_feature(enable = "avx2")]
                unsafe fn wide256($($arg: $ty),*) $body
                if std::is_x86_feature_detected!("avx512f") {
                    // SAFETY: the feature was detected at runtime.
                    return unsafe { wide512($($arg),*) };
                }
                if std::is_x86_feature_detected!("avx2") {
                    // SAFETY: as above.
                    return unsafe { wide256($($arg),*) };
                }
            }
            $body
        }
    };
}
pub(crate) use dispatch;

dispatch!(sigmoid_in_place(xs: &mut [f64]) {
    for v in xs {
        *v = sigmoid(*v);
    }
});

dispatch!(tanh_in_place(xs: &mut [f64]) {
    for v in xs {
        *v = tanh(*v);
    }
});

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exp_edges() {
        assert_eq!(exp(0.0), 1.0);
        assert!(exp(-1e9) > 0.0 && exp(-1e9) < 1e-300);
        assert!(exp(1e9).is_finite());
        assert_eq!(sigmoid(1e9), 1.0);
        assert_eq!(tanh(-1e9), -1.0);
        assert_eq!(tanh(0.0), 0.0);
    }

    proptest! {
        #[test]
        fn exp_matches_std(x in -700.0f64..700.0) {
            let want = x.exp();
            prop_assert!(((exp(x) - want) / want).abs() < 4e-16);
        }

        #[test]
        fn activations_match_std(x in -40.0f64..40.0) {
            let s = 1.0 / (1.0 + (-x).exp());
            prop_assert!((sigmoid(x) - s).abs() < 1e-15);
            prop_assert!((tanh(x) - x.tanh()).abs() < 1e-15);
        }
    }
}
