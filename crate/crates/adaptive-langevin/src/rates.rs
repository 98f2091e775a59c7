//! Closed-form predictions: saddle rate μ, hypocoercive scale g(h) and the
//! Eyring–Kramers eigenvalue.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::potential::DoubleWellTopology;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("parameter {name} = {value} must be positive")]
    Parameter { name: &'static str, value: f64 },
    #[error("topology has no index-one saddle Hessian")]
    Topology,
}

fn positive(name: &'static str, value: f64) -> Result<f64, RateError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(RateError::Parameter { name, value })
    }
}

/// Positive root of `μ² + γμ − η = 0`.
///
/// Evaluated as `2η / (γ + √(γ² + 4η))`, which avoids cancellation when
/// `η ≪ γ²`.
pub fn mu_of_saddle(gamma: f64, eta: f64) -> Result<f64, RateError> {
    let gamma = positive("gamma", gamma)?;
    let eta = positive("eta", eta)?;
    Ok(2.0 * eta / (gamma + (gamma * gamma + 4.0 * eta).sqrt()))
}

/// `g(h) = h · min(ν²hγ, 1/γ, γ/(ν²h), ν²h/γ)`.
pub fn rate_g(h: f64, gamma: f64, nu: f64) -> Result<f64, RateError> {
    let h = positive("h", h)?;
    let gamma = positive("gamma", gamma)?;
    let nu = positive("nu", nu)?;
    let s = nu * nu * h;
    Ok(h * (s * gamma).min(1.0 / gamma).min(gamma / s).min(s / gamma))
}

/// Hypocoercive scale with its inputs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GScale {
    pub h: f64,
    pub gamma: f64,
    pub nu: f64,
    pub g: f64,
}

impl GScale {
    pub fn new(h: f64, gamma: f64, nu: f64) -> Result<Self, RateError> {
        Ok(Self { h, gamma, nu, g: rate_g(h, gamma, nu)? })
    }
}

/// Leading-order Eyring–Kramers prediction for the small eigenvalue attached
/// to the shallow well.
#[derive(Debug, Clone, Serialize)]
pub struct RatePrediction {
    pub mu: f64,
    pub prefactor: f64,
    pub lambda: f64,
    pub h: f64,
    pub gamma: f64,
    pub eta: f64,
    pub barrier: f64,
    pub det_hess_m_hat: f64,
    pub det_hess_saddle: f64,
}

impl RatePrediction {
    /// `λ` at another `h` with the same landscape.
    pub fn at(&self, h: f64) -> f64 {
        self.prefactor * h * (-self.barrier / h).exp()
    }
}

/// `λ = μ (det Hess V(m̂))^{1/2} / (2π |det Hess V(s)|^{1/2}) · h e^{−S/h}`.
pub fn eyring_kramers_rate(
    topo: &DoubleWellTopology,
    gamma: f64,
    h: f64,
) -> Result<RatePrediction, RateError> {
    let h = positive("h", h)?;
    let eta = topo.saddle.eta.ok_or(RateError::Topology)?;
    let mu = mu_of_saddle(gamma, eta)?;
    Ok(ek_from_parts(
        mu,
        gamma,
        eta,
        topo.barrier,
        topo.det_hess_m_hat,
        topo.det_hess_saddle,
        h,
    ))
}

fn ek_from_parts(
    mu: f64,
    gamma: f64,
    eta: f64,
    barrier: f64,
    det_m: f64,
    det_s: f64,
    h: f64,
) -> RatePrediction {
    let prefactor = mu * det_m.sqrt() / (2.0 * PI * det_s.abs().sqrt());
    RatePrediction {
        mu,
        prefactor,
        lambda: prefactor * h * (-barrier / h).exp(),
        h,
        gamma,
        eta,
        barrier,
        det_hess_m_hat: det_m,
        det_hess_saddle: det_s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{double_well, Potential};
    use proptest::prelude::*;

    #[test]
    fn mu_examples() {
        assert!((mu_of_saddle(1.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((mu_of_saddle(2.0, 3.0).unwrap() - 1.0).abs() < 1e-15);
        let m = mu_of_saddle(1.0, 1.0).unwrap();
        assert!((m * m + m - 1.0).abs() < 1e-14);
        assert!((m - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert!(mu_of_saddle(0.0, 1.0).is_err());
        assert!(mu_of_saddle(1.0, -1.0).is_err());
    }

    #[test]
    fn g_examples() {
        assert!((rate_g(0.1, 1.0, 1.0).unwrap() - 0.01).abs() < 1e-17);
        assert_eq!(rate_g(1.0, 1.0, 1.0).unwrap(), 1.0);
        // direct min over the four branches
        let (h, g, n) = (0.01f64, 2.0f64, 1.0f64);
        let branches = [n * n * h * g, 1.0 / g, g / (n * n * h), n * n * h / g];
        let direct = h * branches.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((rate_g(h, g, n).unwrap() - direct).abs() < 1e-20);
        assert!((direct - 5e-5).abs() < 1e-18);
        assert!(rate_g(-0.1, 1.0, 1.0).is_err());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn ek_example_against_long_hand() {
        // V''(m̂)=2, V''(s)=-1, γ=1, S=0.25, h=0.1
        let mu = mu_of_saddle(1.0, 1.0).unwrap();
        let r = ek_from_parts(mu, 1.0, 1.0, 0.25, 2.0, -1.0, 0.1);
        // long-hand: ((√5−1)/2)·√2/(2π)·0.1·e^{−2.5}
        let oracle = 0.618_033_988_749_894_9_f64 * 1.414_213_562_373_095 / 6.283_185_307_179_586
            * 0.1
            * 0.082_084_998_623_898_8;
        assert!((r.lambda / oracle - 1.0).abs() < 1e-14);
        assert!((r.lambda - 1.1420e-3).abs() < 1e-6);
        assert!(ek_from_parts(mu, 1.0, 1.0, 1e6, 2.0, -1.0, 0.1).lambda == 0.0);
    }

    #[test]
    fn prefactor_is_h_independent() {
        let topo = double_well(&Potential::tilted_quartic()).unwrap();
        let r = eyring_kramers_rate(&topo, 1.0, 0.1).unwrap();
        for h in [0.05, 0.1, 0.2, 0.4] {
            let lam = r.at(h);
            assert!((lam * (topo.barrier / h).exp() / h / r.prefactor - 1.0).abs() < 1e-14);
        }
        let mut prev = 0.0;
        for k in 1..50 {
            let lam = r.at(0.01 * k as f64);
            assert!(lam > prev);
            prev = lam;
        }
    }

    #[test]
    fn g_is_h_squared_for_unit_parameters() {
        for k in 1..=100 {
            let h = k as f64 / 100.0;
            assert!((rate_g(h, 1.0, 1.0).unwrap() - h * h).abs() <= 1e-16);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn mu_solves_quadratic(gamma in 1e-3f64..10.0, eta in 1e-3f64..10.0) {
            let m = mu_of_saddle(gamma, eta).unwrap();
            prop_assert!(m > 0.0);
            prop_assert!((m * m + gamma * m - eta).abs() <= 1e-13 * eta.max(1.0));
        }

        #[test]
        fn g_is_positive(h in 1e-4f64..2.0, gamma in 1e-2f64..10.0, nu in 1e-2f64..10.0) {
            prop_assert!(rate_g(h, gamma, nu).unwrap() > 0.0);
        }
    }
}
