//! Sigmoid approximations in real and fixed-point form.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ring::{FixedPointConfig, RingMatrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmoidVariant {
    /// `0.5 + 0.25 x`, unbounded.
    Taylor1,
    /// `0.5 + slope * x` clamped to 0 below `-bound` and 1 above `bound`.
    SegmentedTaylor {
        slope: f64,
        bound: f64,
    },
    /// Quadratic halves `0.5 (1 - |x|/bound)^2` mirrored around 0.5.
    SegmentedNonlinear {
        bound: f64,
    },
    /// `0.5 x / (1 + |x|) + 0.5`
    Reciprocal,
    /// `0.5 x / sqrt(1 + x^2) + 0.5`
    Sqrt,
    Exact,
}

impl SigmoidVariant {
    pub const SEGMENTED_TAYLOR: Self = SigmoidVariant::SegmentedTaylor { slope: 0.125, bound: 4.0 };
    pub const SEGMENTED_NONLINEAR: Self = SigmoidVariant::SegmentedNonlinear { bound: 4.0 };

    /// The five approximations, in benchmark order.
    pub fn approximations() -> [SigmoidVariant; 5] {
        [
            SigmoidVariant::Taylor1,
            Self::SEGMENTED_TAYLOR,
            Self::SEGMENTED_NONLINEAR,
            SigmoidVariant::Reciprocal,
            SigmoidVariant::Sqrt,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            SigmoidVariant::Taylor1 => "taylor1",
            SigmoidVariant::SegmentedTaylor { .. } => "segmented_taylor",
            SigmoidVariant::SegmentedNonlinear { .. } => "segmented_nonlinear",
            SigmoidVariant::Reciprocal => "reciprocal",
            SigmoidVariant::Sqrt => "sqrt",
            SigmoidVariant::Exact => "exact",
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, SigmoidVariant::Taylor1)
    }
}

impl fmt::Display for SigmoidVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SigmoidVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "taylor1" => SigmoidVariant::Taylor1,
            "segmented_taylor" => Self::SEGMENTED_TAYLOR,
            "segmented_nonlinear" => Self::SEGMENTED_NONLINEAR,
            "reciprocal" => SigmoidVariant::Reciprocal,
            "sqrt" => SigmoidVariant::Sqrt,
            "exact" => SigmoidVariant::Exact,
            _ => return Err(Error::Config(format!("unknown sigmoid variant {s:?}"))),
        })
    }
}

pub fn sigmoid_eval(v: SigmoidVariant, x: f64) -> f64 {
    match v {
        SigmoidVariant::Taylor1 => 0.5 + 0.25 * x,
        SigmoidVariant::SegmentedTaylor { slope, bound } => {
            if x < -bound {
                0.0
            } else if x > bound {
                1.0
            } else {
                0.5 + slope * x
            }
        }
        SigmoidVariant::SegmentedNonlinear { bound } => {
            if x <= -bound {
                0.0
            } else if x > bound {
                1.0
            } else {
                let q = 0.5 * (1.0 - x.abs() / bound).powi(2);
                if x <= 0.0 {
                    q
                } else {
                    1.0 - q
                }
            }
        }
        SigmoidVariant::Reciprocal => 0.5 * (x / (1.0 + x.abs())) + 0.5,
        SigmoidVariant::Sqrt => 0.5 * (x / (1.0 + x * x).sqrt()) + 0.5,
        SigmoidVariant::Exact => 1.0 / (1.0 + (-x).exp()),
    }
}

// Working precision of the fixed-point routines.
const W: u32 = 40;
// |x| beyond this saturates the reciprocal and square-root forms to within 2^-21.
const CLAMP_LOG2: u32 = 20;

fn to_w(raw: i64, f: u32) -> i128 {
    if f <= W {
        (raw as i128) << (W - f)
    } else {
        (raw as i128) >> (f - W)
    }
}

fn const_w(v: f64) -> i128 {
    (v * (1u64 << W) as f64).round() as i128
}

fn mul_w(a: i128, b: i128) -> i128 {
    (a * b) >> W
}

// 1/d for d >= 1, all at scale 2^W.
fn recip_w(d: i128) -> i128 {
    let s = (128 - d.leading_zeros()) as i32 - W as i32;
    let dn = if s >= 0 { d >> s } else { d << -s };
    let one = 1i128 << W;
    let mut r = const_w(48.0 / 17.0) - mul_w(const_w(32.0 / 17.0), dn);
    for _ in 0..5 {
        r = mul_w(r, 2 * one - mul_w(dn, r));
    }
    if s >= 0 {
        r >> s
    } else {
        r << -s
    }
}

// 1/sqrt(d) for d >= 1, all at scale 2^W.
fn rsqrt_w(d: i128) -> i128 {
    let bits = (128 - d.leading_zeros()) as i32 - W as i32;
    let s = (bits + 1) / 2;
    let dn = d >> (2 * s);
    let one = 1i128 << W;
    let mut r = one;
    for _ in 0..8 {
        r = mul_w(r, 3 * one - mul_w(dn, mul_w(r, r))) >> 1;
    }
    r >> s
}

fn eval_w(v: SigmoidVariant, x: i128) -> Result<i128> {
    let one = 1i128 << W;
    let half = one >> 1;
    let clamp = one << CLAMP_LOG2;
    Ok(match v {
        SigmoidVariant::Taylor1 => half + (x >> 2),
        SigmoidVariant::SegmentedTaylor { slope, bound } => {
            let b = const_w(bound);
            if x < -b {
                0
            } else if x > b {
                one
            } else {
                half + mul_w(x, const_w(slope))
            }
        }
        SigmoidVariant::SegmentedNonlinear { bound } => {
            let b = const_w(bound);
            if x <= -b {
                0
            } else if x > b {
                one
            } else {
                let t = one - mul_w(x.abs(), const_w(1.0 / bound));
                let q = mul_w(t, t) >> 1;
                if x <= 0 {
                    q
                } else {
                    one - q
                }
            }
        }
        SigmoidVariant::Reciprocal => {
            let x = x.clamp(-clamp, clamp);
            half + (mul_w(x, recip_w(one + x.abs())) >> 1)
        }
        SigmoidVariant::Sqrt => {
            let x = x.clamp(-clamp, clamp);
            half + (mul_w(x, rsqrt_w(one + mul_w(x, x))) >> 1)
        }
        SigmoidVariant::Exact => return Err(Error::Unsupported("exact sigmoid has no fixed-point form".into())),
    })
}

/// Element-wise fixed-point evaluation on public values.
pub fn sigmoid_eval_fixed(v: SigmoidVariant, x: &RingMatrix, cfg: &FixedPointConfig) -> Result<RingMatrix> {
    cfg.validate()?;
    let ring = cfg.ring();
    let f = cfg.frac;
    let hi = 1i128 << (ring.bits() - 1);
    let mut out = Vec::with_capacity(x.len());
    for &word in x.data() {
        let y = eval_w(v, to_w(ring.to_signed(word), f))?;
        let raw = if f < W { (y + (1i128 << (W - f - 1))) >> (W - f) } else { y << (f - W) };
        if raw >= hi || raw < -hi {
            return Err(Error::OutOfRange { value: raw as f64 / cfg.scale(), limit: cfg.limit() });
        }
        out.push(ring.from_signed(raw as i64));
    }
    RingMatrix::from_vec(ring, x.rows(), x.cols(), out)
}

/// 1000 evenly spaced points on [-10, 10].
pub fn benchmark_grid() -> Vec<f64> {
    let n = 1000;
    (0..n).map(|i| -10.0 + 20.0 * i as f64 / (n - 1) as f64).collect()
}

/// Mean absolute error against the exact sigmoid over the benchmark grid.
pub fn approx_error(v: SigmoidVariant) -> f64 {
    let grid = benchmark_grid();
    grid.iter().map(|&x| (sigmoid_eval(v, x) - sigmoid_eval(SigmoidVariant::Exact, x)).abs()).sum::<f64>()
        / grid.len() as f64
}

/// Same as `approx_error` with the fixed-point form on encoded grid points.
pub fn approx_error_fixed(v: SigmoidVariant, cfg: &FixedPointConfig) -> Result<f64> {
    let grid = benchmark_grid();
    let x = RingMatrix::encode(1, grid.len(), &grid, cfg)?;
    let y = sigmoid_eval_fixed(v, &x, cfg)?.decode(cfg);
    Ok(grid.iter().zip(&y).map(|(&x, &y)| (y - sigmoid_eval(SigmoidVariant::Exact, x)).abs()).sum::<f64>()
        / grid.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> FixedPointConfig {
        FixedPointConfig::default()
    }

    #[test]
    fn point_values() {
        assert_eq!(sigmoid_eval(SigmoidVariant::Exact, 0.0), 0.5);
        assert_eq!(sigmoid_eval(SigmoidVariant::Taylor1, 2.0), 1.0);
        assert_eq!(sigmoid_eval(SigmoidVariant::Reciprocal, 1.0), 0.75);
        assert_eq!(sigmoid_eval(SigmoidVariant::SEGMENTED_TAYLOR, 4.0), 1.0);
        assert_eq!(sigmoid_eval(SigmoidVariant::SEGMENTED_TAYLOR, 3.999999), 0.5 + 0.125 * 3.999999);
        assert_eq!(sigmoid_eval(SigmoidVariant::SEGMENTED_TAYLOR, -4.5), 0.0);
        assert_eq!(sigmoid_eval(SigmoidVariant::SEGMENTED_NONLINEAR, 0.0), 0.5);
        assert_eq!(sigmoid_eval(SigmoidVariant::SEGMENTED_NONLINEAR, -4.0), 0.0);
        assert_eq!(sigmoid_eval(SigmoidVariant::SEGMENTED_NONLINEAR, 4.0), 1.0);
    }

    #[test]
    fn fixed_point_values() {
        let c = cfg();
        let x = RingMatrix::encode(1, 2, &[0.0, 10.0], &c).unwrap();
        let t = sigmoid_eval_fixed(SigmoidVariant::Taylor1, &x, &c).unwrap();
        assert_eq!(t.get(0, 0), c.encode(0.5).unwrap());
        let s = sigmoid_eval_fixed(SigmoidVariant::SEGMENTED_TAYLOR, &x, &c).unwrap();
        assert_eq!(s.get(0, 1), c.encode(1.0).unwrap());
        assert!(sigmoid_eval_fixed(SigmoidVariant::Exact, &x, &c).is_err());
    }

    #[test]
    fn extreme_inputs_stay_in_range() {
        let c = FixedPointConfig::new(32, 12).unwrap();
        let big = RingMatrix::encode(1, 2, &[c.limit() - 1.0, 1.0 - c.limit()], &c).unwrap();
        for v in SigmoidVariant::approximations() {
            let y = sigmoid_eval_fixed(v, &big, &c).unwrap().decode(&c);
            let want = [sigmoid_eval(v, c.limit() - 1.0), sigmoid_eval(v, 1.0 - c.limit())];
            assert!((y[0] - want[0]).abs() <= 1e-3 && (y[1] - want[1]).abs() <= 1e-3, "{v}: {y:?}");
        }
    }

    #[test]
    fn grid_errors() {
        let want = [
            (SigmoidVariant::Taylor1, 0.82049),
            (SigmoidVariant::SEGMENTED_TAYLOR, 0.03458),
            (SigmoidVariant::SEGMENTED_NONLINEAR, 0.006218),
            (SigmoidVariant::Reciprocal, 0.05772),
            (SigmoidVariant::Sqrt, 0.025584),
        ];
        for (v, e) in want {
            let got = approx_error(v);
            assert!((got - e).abs() < 5e-5, "{v}: {got}");
        }
    }

    #[test]
    fn error_ordering() {
        let e = |v| approx_error(v);
        assert!(e(SigmoidVariant::SEGMENTED_NONLINEAR) < e(SigmoidVariant::Sqrt));
        assert!(e(SigmoidVariant::Sqrt) < e(SigmoidVariant::SEGMENTED_TAYLOR));
        assert!(e(SigmoidVariant::SEGMENTED_TAYLOR) < e(SigmoidVariant::Reciprocal));
        assert!(e(SigmoidVariant::Reciprocal) < e(SigmoidVariant::Taylor1));
    }

    #[test]
    fn fixed_point_tracks_real() {
        let c = cfg();
        let tol = 2f64.powi(-(c.frac as i32) + 2);
        let grid = benchmark_grid();
        let x = RingMatrix::encode(1, grid.len(), &grid, &c).unwrap();
        for v in SigmoidVariant::approximations() {
            let y = sigmoid_eval_fixed(v, &x, &c).unwrap().decode(&c);
            let mut gap = 0.0;
            for (i, &yi) in y.iter().enumerate() {
                let real = sigmoid_eval(v, c.decode(x.get(0, i)));
                assert!((yi - real).abs() <= tol, "{v} at {}: {yi} vs {real}", grid[i]);
                gap += (yi - real).abs();
            }
            assert!(gap / grid.len() as f64 <= 1e-3);
            assert!((approx_error_fixed(v, &c).unwrap() - approx_error(v)).abs() <= 1e-3);
        }
    }

    #[test]
    fn bounded_variants_are_monotone_on_grid() {
        let grid = benchmark_grid();
        for v in SigmoidVariant::approximations().into_iter().chain([SigmoidVariant::Exact]) {
            let ys: Vec<f64> = grid.iter().map(|&x| sigmoid_eval(v, x)).collect();
            assert!(ys.windows(2).all(|p| p[0] <= p[1]), "{v}");
            if v.is_bounded() {
                assert!(ys.iter().all(|y| (0.0..=1.0).contains(y)), "{v}");
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for v in SigmoidVariant::approximations().into_iter().chain([SigmoidVariant::Exact]) {
            assert_eq!(v.name().parse::<SigmoidVariant>().unwrap(), v);
        }
        assert!("logistic".parse::<SigmoidVariant>().is_err());
    }

    proptest! {
        #[test]
        fn bounded_variants_are_symmetric(x in -50.0f64..50.0) {
            for v in SigmoidVariant::approximations().into_iter().chain([SigmoidVariant::Exact]) {
                if v.is_bounded() {
                    let a = sigmoid_eval(v, -x);
                    let b = 1.0 - sigmoid_eval(v, x);
                    prop_assert!((a - b).abs() <= 1e-12, "{} at {}", v, x);
                }
            }
        }

        #[test]
        fn fixed_point_within_tolerance(x in -1000.0f64..1000.0) {
            let c = cfg();
            let tol = 2f64.powi(-(c.frac as i32) + 2);
            let m = RingMatrix::encode(1, 1, &[x], &c).unwrap();
            let xq = c.decode(m.get(0, 0));
            for v in SigmoidVariant::approximations() {
                let y = sigmoid_eval_fixed(v, &m, &c).unwrap().decode(&c)[0];
                prop_assert!((y - sigmoid_eval(v, xq)).abs() <= tol, "{} at {}", v, x);
            }
        }
    }
}
