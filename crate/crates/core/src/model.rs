//! Risk-model primitives: claim and jump laws, the shot-noise parameters,
//! the derived premium rate and the closed-form intensity moments.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};

/// A positive law used for claim sizes and for intensity jumps.
///
/// The solver only ever consumes three functionals of the law: the cdf, the
/// mean and the partial expectation `E[Z; a < Z <= b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    Deterministic { value: f64 },
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::Exponential { rate }.validated()
    }

    pub fn erlang(shape: u32, rate: f64) -> Result<Self> {
        Self::Erlang { shape, rate }.validated()
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        Self::Deterministic { value }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        match self {
            Self::Exponential { rate } => ensure_positive("rate", rate)?,
            Self::Erlang { shape, rate } => {
                ensure_positive("rate", rate)?;
                if shape == 0 {
                    return Err(Error::InvalidParameter {
                        name: "shape",
                        reason: "Erlang shape must be >= 1".into(),
                    });
                }
            }
            Self::Deterministic { value } => ensure_positive("value", value)?,
        }
        Ok(self)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Erlang { shape, rate } => f64::from(shape) / rate,
            Self::Deterministic { value } => value,
        }
    }

    /// `P(Z <= x)`; negative arguments are a domain error.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        check_argument(x)?;
        Ok(self.cdf_clamped(x))
    }

    /// `E[Z; a < Z <= b]`, with `b` allowed to be `+inf`.
    pub fn partial_expectation(&self, a: f64, b: f64) -> Result<f64> {
        check_argument(a)?;
        check_argument(b)?;
        if a > b {
            return Err(Error::Domain(format!(
                "partial expectation needs a <= b, got a={a}, b={b}"
            )));
        }
        Ok(self.lower_partial_clamped(b) - self.lower_partial_clamped(a))
    }

    /// cdf extended by zero to the negative half-line.
    pub(crate) fn cdf_clamped(&self, x: f64) -> f64 {
        if x <= 0.0 || x.is_nan() {
            return 0.0;
        }
        match *self {
            Self::Exponential { rate } => -(-rate * x).exp_m1(),
            Self::Erlang { shape, rate } => erlang_cdf(shape, rate, x),
            Self::Deterministic { value } => {
                if x >= value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `E[Z; Z <= x]`, zero for `x <= 0`.
    pub(crate) fn lower_partial_clamped(&self, x: f64) -> f64 {
        if x <= 0.0 || x.is_nan() {
            return 0.0;
        }
        match *self {
            // Z * density of Erlang(k) is (k / rate) times the Erlang(k+1) density.
            Self::Exponential { rate } => erlang_cdf(2, rate, x) / rate,
            Self::Erlang { shape, rate } => f64::from(shape) / rate * erlang_cdf(shape + 1, rate, x),
            Self::Deterministic { value } => {
                if x >= value {
                    value
                } else {
                    0.0
                }
            }
        }
    }

    /// Points where the cdf jumps.
    pub fn atoms(&self) -> Vec<f64> {
        match *self {
            Self::Deterministic { value } => vec![value],
            _ => Vec::new(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
            Self::Erlang { shape, rate } => {
                let exp = Exp::new(rate).expect("validated rate");
                (0..shape).map(|_| exp.sample(rng)).sum()
            }
            Self::Deterministic { value } => value,
        }
    }
}

fn check_argument(x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("distribution argument must be >= 0, got {x}")))
    }
}

fn erlang_cdf(shape: u32, rate: f64, x: f64) -> f64 {
    if x.is_infinite() {
        return 1.0;
    }
    let rx = rate * x;
    // Tail sum e^{-rx} sum_{i<k} (rx)^i / i!.
    let mut term = 1.0;
    let mut tail = 1.0;
    for i in 1..shape {
        term *= rx / f64::from(i);
        tail += term;
    }
    let cdf = 1.0 - (-rx).exp() * tail;
    cdf.clamp(0.0, 1.0)
}

/// Economic and stochastic primitives of the shot-noise model.
///
/// The premium is derived by the expected value principle with respect to
/// the stationary mean intensity and cannot be set independently.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelParams {
    lambda_floor: f64,
    beta: f64,
    decay: f64,
    discount: f64,
    loading: f64,
    claim_law: DistributionSpec,
    jump_law: DistributionSpec,
    premium: f64,
}

impl ModelParams {
    /// `beta = 0` is accepted and switches the catastrophe stream off.
    pub fn new(
        lambda_floor: f64,
        beta: f64,
        decay: f64,
        discount: f64,
        loading: f64,
        claim_law: DistributionSpec,
        jump_law: DistributionSpec,
    ) -> Result<Self> {
        ensure_non_negative("lambda_floor", lambda_floor)?;
        ensure_non_negative("beta", beta)?;
        ensure_positive("decay", decay)?;
        ensure_positive("discount", discount)?;
        ensure_non_negative("loading", loading)?;
        let claim_law = claim_law.validated()?;
        let jump_law = jump_law.validated()?;
        let mut params = Self {
            lambda_floor,
            beta,
            decay,
            discount,
            loading,
            claim_law,
            jump_law,
            premium: 0.0,
        };
        params.premium = (1.0 + loading) * claim_law.mean() * params.lambda_av();
        Ok(params)
    }

    pub fn lambda_floor(&self) -> f64 {
        self.lambda_floor
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn decay(&self) -> f64 {
        self.decay
    }
    pub fn discount(&self) -> f64 {
        self.discount
    }
    pub fn loading(&self) -> f64 {
        self.loading
    }
    pub fn claim_law(&self) -> DistributionSpec {
        self.claim_law
    }
    pub fn jump_law(&self) -> DistributionSpec {
        self.jump_law
    }

    /// Long-run mean intensity `lambda_floor + beta E(Y) / d`.
    pub fn lambda_av(&self) -> f64 {
        self.lambda_floor + self.beta * self.jump_law.mean() / self.decay
    }

    pub fn premium(&self) -> f64 {
        self.premium
    }

    /// `E(lambda_t)` started from `lambda0`.
    pub fn mean_intensity(&self, lambda0: f64, t: f64) -> Result<f64> {
        self.check_moment_args(lambda0, t)?;
        let decay = (-self.decay * t).exp();
        let grown = -(-self.decay * t).exp_m1();
        Ok(self.lambda_floor * grown + lambda0 * decay + grown * self.beta * self.jump_law.mean() / self.decay)
    }

    /// `E(Lambda_t) = E int_0^t lambda_s ds` started from `lambda0`.
    pub fn mean_cumulative_intensity(&self, lambda0: f64, t: f64) -> Result<f64> {
        self.check_moment_args(lambda0, t)?;
        let d = self.decay;
        let grown = -(-d * t).exp_m1();
        // e^{-dt} - 1 + dt, evaluated without cancellation for small dt.
        let convex = if d * t < 1e-4 {
            let z = d * t;
            z * z / 2.0 - z * z * z / 6.0 + z * z * z * z / 24.0
        } else {
            (-d * t).exp() - 1.0 + d * t
        };
        Ok(self.lambda_floor * t - self.lambda_floor * grown / d
            + grown * lambda0 / d
            + convex * self.beta * self.jump_law.mean() / (d * d))
    }

    fn check_moment_args(&self, lambda0: f64, t: f64) -> Result<()> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("time must be >= 0, got {t}")));
        }
        if !(lambda0 >= self.lambda_floor) {
            return Err(Error::Domain(format!(
                "initial intensity {lambda0} is below the floor {}",
                self.lambda_floor
            )));
        }
        Ok(())
    }

    /// The dynamics the solver and simulator run on.
    pub fn dynamics(&self) -> RiskDynamics {
        RiskDynamics {
            lambda_floor: self.lambda_floor,
            beta: self.beta,
            decay: self.decay,
            discount: self.discount,
            premium: self.premium,
            claim_law: self.claim_law,
            jump_law: self.jump_law,
        }
    }
}

/// Controlled-process dynamics with the premium rate already fixed.
///
/// This is what the HJB solver consumes. It is usually obtained from
/// [`ModelParams::dynamics`]; the constant-intensity baseline builds one
/// directly so it can reuse a premium computed under a different intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskDynamics {
    pub lambda_floor: f64,
    pub beta: f64,
    pub decay: f64,
    pub discount: f64,
    pub premium: f64,
    pub claim_law: DistributionSpec,
    pub jump_law: DistributionSpec,
}

impl RiskDynamics {
    /// Compound Poisson dynamics with constant intensity and no catastrophes.
    pub fn constant_intensity(lambda: f64, premium: f64, discount: f64, claim_law: DistributionSpec) -> Result<Self> {
        ensure_non_negative("lambda", lambda)?;
        ensure_positive("premium", premium)?;
        ensure_positive("discount", discount)?;
        Ok(Self {
            lambda_floor: lambda,
            beta: 0.0,
            decay: 1.0,
            discount,
            premium,
            claim_law: claim_law.validated()?,
            // Never sampled when beta = 0.
            jump_law: DistributionSpec::Deterministic { value: 1.0 },
        })
    }

    /// Deterministic decay `lambda_floor + e^{-dt}(lambda0 - lambda_floor)`.
    pub fn decayed_intensity(&self, lambda0: f64, t: f64) -> f64 {
        self.lambda_floor + (-self.decay * t).exp() * (lambda0 - self.lambda_floor)
    }

    /// Surplus level above which all excess is paid out at once.
    pub fn payout_threshold(&self) -> f64 {
        self.premium / self.discount
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example1() -> ModelParams {
        ModelParams::new(
            0.25,
            0.5,
            0.7,
            0.2,
            0.2,
            DistributionSpec::exponential(10.0).unwrap(),
            DistributionSpec::exponential(0.5).unwrap(),
        )
        .unwrap()
    }

    fn example2() -> ModelParams {
        ModelParams::new(
            10.0,
            0.2,
            0.2,
            0.1,
            0.07,
            DistributionSpec::erlang(2, 1.0).unwrap(),
            DistributionSpec::exponential(0.5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn lambda_av_examples() {
        assert_relative_eq!(example1().lambda_av(), 0.25 + 2.0 / 1.4, max_relative = 1e-15);
        assert!((example1().lambda_av() - 1.678571).abs() < 1e-6);
        assert_relative_eq!(example2().lambda_av(), 12.0, max_relative = 1e-15);
    }

    #[test]
    fn lambda_av_without_catastrophes_is_the_floor() {
        let p = ModelParams::new(
            0.3,
            0.0,
            1.0,
            0.1,
            0.1,
            DistributionSpec::exponential(1.0).unwrap(),
            DistributionSpec::exponential(1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(p.lambda_av(), 0.3);
    }

    #[test]
    fn premium_examples() {
        assert_relative_eq!(example1().premium(), 141.0 / 700.0, max_relative = 1e-14);
        assert_relative_eq!(example2().premium(), 642.0 / 25.0, max_relative = 1e-14);
        let unloaded = ModelParams::new(
            2.0,
            0.0,
            1.0,
            0.1,
            0.0,
            DistributionSpec::deterministic(0.5).unwrap(),
            DistributionSpec::exponential(1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(unloaded.premium(), 1.0);
    }

    #[test]
    fn mean_intensity_limits() {
        let p = example1();
        assert_eq!(p.mean_intensity(0.9, 0.0).unwrap(), 0.9);
        assert_relative_eq!(
            p.mean_intensity(0.9, 200.0).unwrap(),
            p.lambda_av(),
            max_relative = 1e-12
        );
        assert!(p.mean_intensity(0.1, 1.0).is_err());
        assert!(p.mean_intensity(0.3, -1.0).is_err());
    }

    #[test]
    fn mean_intensity_moves_toward_lambda_av() {
        let p = example1();
        let eps = 1e-5;
        for &t in &[0.1, 0.5, 1.0, 3.0] {
            let above = p.mean_intensity(4.0, t + eps).unwrap() - p.mean_intensity(4.0, t).unwrap();
            let below = p.mean_intensity(0.25, t + eps).unwrap() - p.mean_intensity(0.25, t).unwrap();
            assert!(above < 0.0);
            assert!(below > 0.0);
        }
    }

    #[test]
    fn cumulative_intensity_is_integral_of_mean_intensity() {
        let p = example1();
        assert_eq!(p.mean_cumulative_intensity(0.25, 0.0).unwrap(), 0.0);
        let h = 1e-5;
        for &lambda0 in &[0.25, 1.0, 3.5] {
            for &t in &[1e-3, 0.3, 1.0, 2.0, 7.5] {
                let fd = (p.mean_cumulative_intensity(lambda0, t + h).unwrap()
                    - p.mean_cumulative_intensity(lambda0, t - h).unwrap())
                    / (2.0 * h);
                let exact = p.mean_intensity(lambda0, t).unwrap();
                assert!(
                    (fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()),
                    "t={t}: {fd} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn cumulative_intensity_grows_like_lambda_av() {
        let p = example1();
        let t = 1e3 / p.decay();
        let rate = p.mean_cumulative_intensity(0.25, t).unwrap() / t;
        assert!((rate / p.lambda_av() - 1.0).abs() < 0.01);
    }

    #[test]
    fn distribution_closed_forms() {
        let e = DistributionSpec::exponential(10.0).unwrap();
        assert_relative_eq!(e.cdf(0.1).unwrap(), 1.0 - (-1.0f64).exp(), max_relative = 1e-14);
        assert!((e.cdf(0.1).unwrap() - 0.632121).abs() < 1e-6);

        let det = DistributionSpec::deterministic(2.0).unwrap();
        assert_eq!(det.cdf(1.99).unwrap(), 0.0);
        assert_eq!(det.cdf(2.0).unwrap(), 1.0);
        assert_eq!(det.partial_expectation(1.0, 2.0).unwrap(), 2.0);
        assert_eq!(det.partial_expectation(2.0, 3.0).unwrap(), 0.0);

        let erl = DistributionSpec::erlang(2, 1.0).unwrap();
        assert_eq!(erl.mean(), 2.0);
        for &x in &[0.0, 0.3, 1.0, 2.5, 9.0] {
            let closed_form = 1.0 - (1.0 + x) * f64::exp(-x);
            assert_relative_eq!(erl.cdf(x).unwrap(), closed_form, epsilon = 1e-15);
        }
    }

    #[test]
    fn negative_arguments_are_domain_errors() {
        let e = DistributionSpec::exponential(1.0).unwrap();
        assert!(matches!(e.cdf(-0.1), Err(Error::Domain(_))));
        assert!(e.partial_expectation(-1.0, 1.0).is_err());
        assert!(e.partial_expectation(2.0, 1.0).is_err());
    }

    #[test]
    fn invalid_laws_are_rejected() {
        assert!(DistributionSpec::exponential(0.0).is_err());
        assert!(DistributionSpec::erlang(0, 1.0).is_err());
        assert!(DistributionSpec::deterministic(-1.0).is_err());
    }

    /// Midpoint-rule oracle for `E[Z; a < Z <= b]` from the density.
    fn partial_by_quadrature(density: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let n = 200_000;
        let h = (b - a) / n as f64;
        (0..n)
            .map(|i| {
                let z = a + (i as f64 + 0.5) * h;
                z * density(z) * h
            })
            .sum()
    }

    #[test]
    fn partial_expectation_matches_numerical_integration() {
        let e = DistributionSpec::exponential(10.0).unwrap();
        let oracle = partial_by_quadrature(|z| 10.0 * (-10.0 * z).exp(), 0.05, 0.3);
        assert_relative_eq!(e.partial_expectation(0.05, 0.3).unwrap(), oracle, max_relative = 1e-8);

        let erl = DistributionSpec::erlang(2, 1.0).unwrap();
        let oracle = partial_by_quadrature(|z| z * (-z).exp(), 0.5, 4.0);
        assert_relative_eq!(erl.partial_expectation(0.5, 4.0).unwrap(), oracle, max_relative = 1e-8);

        let erl3 = DistributionSpec::erlang(3, 2.0).unwrap();
        let oracle = partial_by_quadrature(|z| 4.0 * z * z * (-2.0 * z).exp(), 0.2, 3.0);
        assert_relative_eq!(erl3.partial_expectation(0.2, 3.0).unwrap(), oracle, max_relative = 1e-8);
    }

    #[test]
    fn partial_expectation_recovers_mean() {
        for law in [
            DistributionSpec::exponential(10.0).unwrap(),
            DistributionSpec::erlang(2, 1.0).unwrap(),
            DistributionSpec::erlang(4, 0.5).unwrap(),
        ] {
            let m = law.mean();
            assert!((law.partial_expectation(0.0, 50.0 * m).unwrap() - m).abs() < 1e-6);
            assert_relative_eq!(
                law.partial_expectation(0.0, f64::INFINITY).unwrap(),
                m,
                max_relative = 1e-15
            );
        }
        let det = DistributionSpec::deterministic(0.1).unwrap();
        assert_eq!(det.partial_expectation(0.0, 5.0).unwrap(), 0.1);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn any_law() -> impl Strategy<Value = DistributionSpec> {
            prop_oneof![
                (0.05f64..20.0).prop_map(|r| DistributionSpec::exponential(r).unwrap()),
                (1u32..6, 0.05f64..20.0).prop_map(|(k, r)| DistributionSpec::erlang(k, r).unwrap()),
                (0.01f64..5.0).prop_map(|v| DistributionSpec::deterministic(v).unwrap()),
            ]
        }

        proptest! {
            #[test]
            fn cdf_is_monotone(law in any_law(), a in 0.0f64..10.0, b in 0.0f64..10.0) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(law.cdf(lo).unwrap() <= law.cdf(hi).unwrap());
                prop_assert_eq!(law.cdf(0.0).unwrap(), 0.0);
                prop_assert_eq!(law.cdf(f64::INFINITY).unwrap(), 1.0);
            }

            #[test]
            fn partial_expectation_is_bounded_and_additive(
                law in any_law(), a in 0.0f64..5.0, w1 in 0.0f64..5.0, w2 in 0.0f64..5.0,
            ) {
                let b = a + w1;
                let c = b + w2;
                let ab = law.partial_expectation(a, b).unwrap();
                let bc = law.partial_expectation(b, c).unwrap();
                let ac = law.partial_expectation(a, c).unwrap();
                prop_assert!(ab >= 0.0 && ab <= law.mean() * (1.0 + 1e-12));
                prop_assert!((ab + bc - ac).abs() <= 1e-12 * (1.0 + law.mean()));
            }
        }
    }
}
