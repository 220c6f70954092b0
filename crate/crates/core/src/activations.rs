//! Elementwise activation functions with closed-form derivatives.
//!
//! SoftReMish is `x * tanh(softplus(alpha * x))`; Mish is the `alpha = 1`
//! member of that family and is evaluated through the same code path. Every
//! function here is total on finite inputs: softplus switches to its
//! asymptotic form once `alpha * x` exceeds [`SOFTPLUS_THRESHOLD`], and the
//! logistic function is evaluated from whichever exponential cannot overflow.
//!
//! With `s = softplus(a x)`, `t = tanh(s)`, `g = sigmoid(a x)`:
//!
//! ```text
//! f   = x t
//! f'  = t + x (1 - t^2) a g
//! f'' = (1 - t^2) a g (2 + a x ((1 - g) - 2 t g))
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Scalar;

/// `alpha` used when SoftReMish is requested without one.
pub const DEFAULT_ALPHA: f64 = 2.0;

/// Above this value of `alpha * x`, softplus is evaluated as
/// `z + ln(1 + exp(-z))`.
pub const SOFTPLUS_THRESHOLD: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActivationError {
    #[error("alpha must be finite and positive, got {0}")]
    InvalidAlpha(f64),
    #[error("invalid sample range: {0}")]
    InvalidRange(String),
    #[error("unknown activation `{0}` (expected one of relu, tanh, softplus, mish, softremish)")]
    UnknownName(String),
}

/// The activation applied after a layer's affine transform.
///
/// `Identity` is not part of the benchmark sweep; it is used for the logits
/// layer and for exercising layers in isolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum ActivationKind {
    Identity,
    ReLU,
    Tanh,
    Softplus,
    Mish,
    SoftReMish { alpha: f64 },
}

impl ActivationKind {
    /// The four functions compared by the default benchmark sweep.
    pub const BENCHMARK: [ActivationKind; 4] = [
        ActivationKind::ReLU,
        ActivationKind::Tanh,
        ActivationKind::Mish,
        ActivationKind::SoftReMish { alpha: DEFAULT_ALPHA },
    ];

    /// Every non-identity function, in the order curve files are written.
    pub const ALL: [ActivationKind; 5] = [
        ActivationKind::ReLU,
        ActivationKind::Tanh,
        ActivationKind::Softplus,
        ActivationKind::Mish,
        ActivationKind::SoftReMish { alpha: DEFAULT_ALPHA },
    ];

    pub fn soft_remish(alpha: f64) -> Result<Self, ActivationError> {
        if alpha.is_finite() && alpha > 0.0 {
            Ok(ActivationKind::SoftReMish { alpha })
        } else {
            Err(ActivationError::InvalidAlpha(alpha))
        }
    }

    /// `alpha` for SoftReMish, `None` for every other kind.
    pub fn alpha(&self) -> Option<f64> {
        match *self {
            ActivationKind::SoftReMish { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// Replaces `alpha` on SoftReMish; other kinds are returned unchanged.
    pub fn with_alpha(self, alpha: f64) -> Result<Self, ActivationError> {
        match self {
            ActivationKind::SoftReMish { .. } => Self::soft_remish(alpha),
            other => Ok(other),
        }
    }

    /// Lower-case command line name.
    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Identity => "identity",
            ActivationKind::ReLU => "relu",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Softplus => "softplus",
            ActivationKind::Mish => "mish",
            ActivationKind::SoftReMish { .. } => "softremish",
        }
    }

    /// File-name friendly label that also encodes `alpha`, e.g. `softremish-a2`.
    pub fn slug(&self) -> String {
        match self.alpha() {
            Some(alpha) => format!("{}-a{alpha}", self.name()),
            None => self.name().to_string(),
        }
    }

    pub fn eval<F: Scalar>(&self, x: F) -> F {
        match *self {
            ActivationKind::Identity => x,
            ActivationKind::ReLU => relu(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Softplus => softplus_parts(x).softplus,
            ActivationKind::Mish => remish(x, F::one()),
            ActivationKind::SoftReMish { alpha } => remish(x, F::from_f64_lossy(alpha)),
        }
    }

    pub fn eval_d1<F: Scalar>(&self, x: F) -> F {
        self.eval_with_d1(x).1
    }

    /// Value and first derivative from shared intermediates. Both components
    /// are bit-identical to [`eval`](Self::eval) and [`eval_d1`](Self::eval_d1).
    pub fn eval_with_d1<F: Scalar>(&self, x: F) -> (F, F) {
        match *self {
            ActivationKind::Identity => (x, F::one()),
            ActivationKind::ReLU => {
                if x > F::zero() {
                    (x, F::one())
                } else {
                    (F::zero(), F::zero())
                }
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                (t, F::one() - t * t)
            }
            ActivationKind::Softplus => {
                let p = softplus_parts(x);
                (p.softplus, p.sigmoid)
            }
            ActivationKind::Mish => remish_with_d1(x, F::one()),
            ActivationKind::SoftReMish { alpha } => remish_with_d1(x, F::from_f64_lossy(alpha)),
        }
    }

    pub fn eval_d2<F: Scalar>(&self, x: F) -> F {
        match *self {
            ActivationKind::Identity | ActivationKind::ReLU => F::zero(),
            ActivationKind::Tanh => {
                let t = x.tanh();
                let two = F::one() + F::one();
                -two * t * (F::one() - t * t)
            }
            ActivationKind::Softplus => {
                let p = softplus_parts(x);
                p.sigmoid * p.complement
            }
            ActivationKind::Mish => remish_d2(x, F::one()),
            ActivationKind::SoftReMish { alpha } => remish_d2(x, F::from_f64_lossy(alpha)),
        }
    }

    /// Derivative of the given order (0, 1 or 2).
    pub fn eval_order<F: Scalar>(&self, order: DerivativeOrder, x: F) -> F {
        match order {
            DerivativeOrder::Value => self.eval(x),
            DerivativeOrder::First => self.eval_d1(x),
            DerivativeOrder::Second => self.eval_d2(x),
        }
    }

    /// Applies the activation in place.
    pub fn apply<F: Scalar>(&self, values: &mut [F]) {
        if *self == ActivationKind::Identity {
            return;
        }
        for v in values {
            *v = self.eval(*v);
        }
    }

    /// Applies the activation in place and writes the slope at each input
    /// into `slopes`.
    pub fn apply_with_d1<F: Scalar>(&self, values: &mut [F], slopes: &mut [F]) {
        assert_eq!(values.len(), slopes.len());
        for (v, d) in values.iter_mut().zip(slopes.iter_mut()) {
            let (f, g) = self.eval_with_d1(*v);
            *v = f;
            *d = g;
        }
    }

    pub fn sample_curve(
        &self,
        order: DerivativeOrder,
        xmin: f64,
        xmax: f64,
        samples: usize,
    ) -> Result<ActivationCurve, ActivationError> {
        sample_curve(*self, order, xmin, xmax, samples)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Identity => f.write_str("Identity"),
            ActivationKind::ReLU => f.write_str("ReLU"),
            ActivationKind::Tanh => f.write_str("Tanh"),
            ActivationKind::Softplus => f.write_str("Softplus"),
            ActivationKind::Mish => f.write_str("Mish"),
            ActivationKind::SoftReMish { alpha } => write!(f, "SoftReMish(alpha={alpha})"),
        }
    }
}

impl FromStr for ActivationKind {
    type Err = ActivationError;

    /// Parses a command line name. `softremish` gets [`DEFAULT_ALPHA`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(ActivationKind::ReLU),
            "tanh" => Ok(ActivationKind::Tanh),
            "softplus" => Ok(ActivationKind::Softplus),
            "mish" => Ok(ActivationKind::Mish),
            "softremish" => Ok(ActivationKind::SoftReMish { alpha: DEFAULT_ALPHA }),
            _ => Err(ActivationError::UnknownName(s.to_string())),
        }
    }
}

fn relu<F: Scalar>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        F::zero()
    }
}

struct SoftplusParts<F> {
    /// `ln(1 + e^z)`
    softplus: F,
    /// `1 / (1 + e^-z)`
    sigmoid: F,
    /// `1 - sigmoid`, computed without cancellation.
    complement: F,
}

/// Softplus and the logistic pair at `z`, sharing one exponential.
fn softplus_parts<F: Scalar>(z: F) -> SoftplusParts<F> {
    let one = F::one();
    if z > F::from_f64_lossy(SOFTPLUS_THRESHOLD) {
        let en = (-z).exp();
        SoftplusParts { softplus: z + en.ln_1p(), sigmoid: one / (one + en), complement: en / (one + en) }
    } else {
        let e = z.exp();
        SoftplusParts { softplus: e.ln_1p(), sigmoid: e / (one + e), complement: one / (one + e) }
    }
}

/// `ln(1 + e^(a x))` without overflow.
pub fn softplus_stable<F: Scalar>(x: F, a: F) -> F {
    softplus_parts(a * x).softplus
}

/// The logistic function `1 / (1 + e^-z)` without overflow.
pub fn sigmoid<F: Scalar>(z: F) -> F {
    softplus_parts(z).sigmoid
}

fn remish<F: Scalar>(x: F, a: F) -> F {
    x * softplus_parts(a * x).softplus.tanh()
}

fn remish_with_d1<F: Scalar>(x: F, a: F) -> (F, F) {
    let p = softplus_parts(a * x);
    let t = p.softplus.tanh();
    let sech2 = F::one() - t * t;
    (x * t, t + x * sech2 * a * p.sigmoid)
}

fn remish_d2<F: Scalar>(x: F, a: F) -> F {
    let p = softplus_parts(a * x);
    let t = p.softplus.tanh();
    let sech2 = F::one() - t * t;
    let two = F::one() + F::one();
    sech2 * a * p.sigmoid * (two + a * x * (p.complement - two * t * p.sigmoid))
}

/// Which derivative a curve samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DerivativeOrder {
    Value,
    First,
    Second,
}

impl DerivativeOrder {
    pub const ALL: [DerivativeOrder; 3] = [DerivativeOrder::Value, DerivativeOrder::First, DerivativeOrder::Second];

    pub fn from_index(order: u8) -> Option<Self> {
        Self::ALL.get(order as usize).copied()
    }

    pub fn index(self) -> u8 {
        self as u8
    }
}

/// `n` equally spaced samples of one activation derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationCurve {
    pub kind: ActivationKind,
    pub order: DerivativeOrder,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

/// Samples `kind` at `samples` points spanning `[xmin, xmax]` inclusive.
pub fn sample_curve(
    kind: ActivationKind,
    order: DerivativeOrder,
    xmin: f64,
    xmax: f64,
    samples: usize,
) -> Result<ActivationCurve, ActivationError> {
    if !(xmin.is_finite() && xmax.is_finite()) || xmin >= xmax {
        return Err(ActivationError::InvalidRange(format!("need finite xmin < xmax, got [{xmin}, {xmax}]")));
    }
    if samples < 2 {
        return Err(ActivationError::InvalidRange(format!("need at least 2 samples, got {samples}")));
    }
    let step = (xmax - xmin) / (samples - 1) as f64;
    let xs: Vec<f64> = (0..samples).map(|i| if i + 1 == samples { xmax } else { xmin + step * i as f64 }).collect();
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ActivationError::InvalidRange(format!("{samples} samples are not distinct over [{xmin}, {xmax}]")));
    }
    let ys = xs.iter().map(|&x| kind.eval_order(order, x)).collect();
    Ok(ActivationCurve { kind, order, xs, ys })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SRM2: ActivationKind = ActivationKind::SoftReMish { alpha: 2.0 };
    const SRM1: ActivationKind = ActivationKind::SoftReMish { alpha: 1.0 };

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn definitions_at_small_points() {
        assert_eq!(ActivationKind::ReLU.eval(-3.0), 0.0);
        assert_eq!(ActivationKind::ReLU.eval(2.0), 2.0);
        assert_eq!(SRM2.eval(0.0), 0.0);
        assert_eq!(ActivationKind::Mish.eval(0.0), 0.0);
        assert_eq!(ActivationKind::Tanh.eval(0.0), 0.0);
        assert!((ActivationKind::Softplus.eval(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    // 50-digit reference values of x*tanh(ln(1+e^x)) and x*tanh(ln(1+e^(2x))) at x = 1.
    #[test]
    fn reference_values_at_one() {
        assert!((ActivationKind::Mish.eval(1.0_f64) - 0.865_098_388_3).abs() < 1e-9);
        assert!((SRM2.eval(1.0_f64) - 0.971_979_479_8).abs() < 1e-9);
        assert!((ActivationKind::Mish.eval(1.0_f64) - 0.865098).abs() < 5e-7);
        // The 6-digit reference 0.971980 is the true value 0.97197948 rounded up once too often.
        assert!((SRM2.eval(1.0_f64) - 0.971980).abs() < 1e-6);
    }

    #[test]
    fn first_derivative_conventions() {
        assert_eq!(ActivationKind::ReLU.eval_d1(5.0), 1.0);
        assert_eq!(ActivationKind::ReLU.eval_d1(-5.0), 0.0);
        assert_eq!(ActivationKind::ReLU.eval_d1(0.0), 0.0);
        assert_eq!(ActivationKind::Tanh.eval_d1(0.0), 1.0);
        let fd = central_diff(|x| SRM2.eval(x), 0.7, 1e-6);
        let d1 = SRM2.eval_d1(0.7);
        assert!((d1 - fd).abs() <= 1e-8 * d1.abs(), "{d1} vs {fd}");
    }

    #[test]
    fn second_derivative_conventions() {
        for x in [-3.0, 0.0, 1e-9, 4.0] {
            assert_eq!(ActivationKind::ReLU.eval_d2(x), 0.0);
        }
        assert_eq!(ActivationKind::Tanh.eval_d2(0.0), 0.0);
        let m = ActivationKind::Mish;
        let h = 1e-4_f64;
        let fd = (m.eval(0.3 + h) - 2.0 * m.eval(0.3) + m.eval(0.3 - h)) / (h * h);
        let d2 = m.eval_d2(0.3);
        assert!((d2 - fd).abs() <= 1e-5 * d2.abs(), "{d2} vs {fd}");
    }

    #[test]
    fn softplus_stable_asymptotes() {
        assert!((softplus_stable(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        let big = softplus_stable(10_000.0_f64, 2.0);
        assert!(big.is_finite() && (big - 20_000.0).abs() < 1e-9);
        let tiny = softplus_stable(-10_000.0_f64, 2.0);
        assert!((0.0..1e-300).contains(&tiny));
        for x in [-1e6_f64, 1e6] {
            assert!(softplus_stable(x, 2.0).is_finite());
            assert!(softplus_stable(x as f32, 2.0f32).is_finite());
        }
    }

    #[test]
    fn fused_value_and_slope_match_separate_calls() {
        let kinds = [
            ActivationKind::Identity,
            ActivationKind::ReLU,
            ActivationKind::Tanh,
            ActivationKind::Softplus,
            ActivationKind::Mish,
            SRM2,
            ActivationKind::SoftReMish { alpha: 0.37 },
        ];
        for k in kinds {
            for i in -400..=400 {
                let x = i as f64 * 0.05;
                let (v, d) = k.eval_with_d1(x);
                assert_eq!(v.to_bits(), k.eval(x).to_bits(), "{k} value at {x}");
                assert_eq!(d.to_bits(), k.eval_d1(x).to_bits(), "{k} slope at {x}");
                let xf = x as f32;
                assert_eq!(k.eval_with_d1(xf).0.to_bits(), k.eval(xf).to_bits());
            }
        }
    }

    #[test]
    fn alpha_only_reported_for_softremish() {
        assert_eq!(SRM2.alpha(), Some(2.0));
        for k in [ActivationKind::ReLU, ActivationKind::Tanh, ActivationKind::Softplus, ActivationKind::Mish] {
            assert_eq!(k.alpha(), None);
            assert_eq!(k.with_alpha(3.0).unwrap(), k);
        }
        assert!(ActivationKind::soft_remish(0.0).is_err());
        assert!(ActivationKind::soft_remish(-1.0).is_err());
        assert!(ActivationKind::soft_remish(f64::NAN).is_err());
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("softremish".parse::<ActivationKind>().unwrap(), SRM2);
        assert_eq!("ReLU".parse::<ActivationKind>().unwrap(), ActivationKind::ReLU);
        assert!("bogus".parse::<ActivationKind>().is_err());
        assert_eq!(SRM2.to_string(), "SoftReMish(alpha=2)");
        assert_eq!(SRM2.slug(), "softremish-a2");
        assert_eq!(ActivationKind::Mish.slug(), "mish");
    }

    #[test]
    fn positive_asymptote() {
        for x in [20.0_f64, 50.0, 100.0] {
            assert!((SRM2.eval(x) - x).abs() <= 1e-8 * x);
        }
    }

    #[test]
    fn negative_asymptote() {
        for i in 0..200 {
            let x = -20.0 - i as f64 * 0.5;
            assert!(SRM2.eval(x).abs() <= 1e-12, "softremish({x})");
        }
        // Mish decays like |x| e^x: 2.8e-12 at -30, below 1e-12 from about -31.1 on.
        for i in 0..200 {
            let x = -30.0 - i as f64 * 0.5;
            let y = ActivationKind::Mish.eval(x);
            let envelope = x.abs() * x.exp();
            assert!(y.abs() <= envelope * (1.0 + 1e-9), "mish({x}) = {y}");
            if x <= -32.0 {
                assert!(y.abs() <= 1e-12, "mish({x}) = {y}");
            }
        }
    }

    #[test]
    fn extreme_inputs_stay_finite() {
        for k in ActivationKind::ALL.into_iter().chain([SRM1]) {
            for x in [1e4_f64, -1e4, 1e5, -1e5, 1e6, -1e6] {
                assert!(k.eval(x).is_finite(), "{k} at {x}");
                assert!(k.eval_d1(x).is_finite(), "{k}' at {x}");
                assert!(k.eval_d2(x).is_finite(), "{k}'' at {x}");
                let xf = x as f32;
                assert!(k.eval(xf).is_finite() && k.eval_d1(xf).is_finite() && k.eval_d2(xf).is_finite());
            }
        }
    }

    #[test]
    fn sample_curve_shapes() {
        let c = sample_curve(ActivationKind::ReLU, DerivativeOrder::Value, -1.0, 1.0, 3).unwrap();
        assert_eq!(c.xs, vec![-1.0, 0.0, 1.0]);
        assert_eq!(c.ys, vec![0.0, 0.0, 1.0]);

        let c = sample_curve(ActivationKind::Tanh, DerivativeOrder::Value, -5.0, 5.0, 11).unwrap();
        for i in 0..11 {
            assert!((c.ys[i] + c.ys[10 - i]).abs() <= 1e-15);
        }

        let c = SRM2.sample_curve(DerivativeOrder::Value, -5.0, 5.0, 1001).unwrap();
        assert_eq!(c.xs.len(), 1001);
        assert_eq!(*c.xs.last().unwrap(), 5.0);
        for (x, y) in c.xs.iter().zip(&c.ys) {
            assert_eq!(y.to_bits(), SRM2.eval(*x).to_bits());
        }
    }

    #[test]
    fn sample_curve_rejects_bad_ranges() {
        let k = ActivationKind::Mish;
        assert!(k.sample_curve(DerivativeOrder::Value, 1.0, 1.0, 10).is_err());
        assert!(k.sample_curve(DerivativeOrder::Value, 2.0, 1.0, 10).is_err());
        assert!(k.sample_curve(DerivativeOrder::Value, 0.0, 1.0, 1).is_err());
        assert!(k.sample_curve(DerivativeOrder::Value, f64::NAN, 1.0, 5).is_err());
    }

    proptest! {
        #[test]
        fn softremish_alpha_one_is_mish(x in -20.0f64..20.0) {
            prop_assert!((SRM1.eval(x) - ActivationKind::Mish.eval(x)).abs() <= 1e-12);
        }

        #[test]
        fn tanh_stays_in_range(x in -1e6f64..1e6) {
            let y = ActivationKind::Tanh.eval(x);
            prop_assert!((-1.0..=1.0).contains(&y));
            // tanh(x) rounds to +-1 in double once |x| passes about 19.06.
            if x.abs() < 19.0 {
                prop_assert!(y > -1.0 && y < 1.0);
            }
        }

        #[test]
        fn first_derivatives_match_central_differences(x in -10.0f64..10.0) {
            for k in [ActivationKind::Tanh, ActivationKind::Softplus, ActivationKind::Mish, SRM1, SRM2] {
                let fd = central_diff(|v| k.eval(v), x, 1e-6);
                prop_assert!(close(k.eval_d1(x), fd, 1e-6), "{} at {}", k, x);
                let fd2 = central_diff(|v| k.eval_d1(v), x, 1e-6);
                prop_assert!(close(k.eval_d2(x), fd2, 1e-6), "{}'' at {}", k, x);
            }
            if x.abs() >= 1e-3 {
                let k = ActivationKind::ReLU;
                prop_assert!(close(k.eval_d1(x), central_diff(|v| k.eval(v), x, 1e-6), 1e-6));
            }
        }
    }
}
