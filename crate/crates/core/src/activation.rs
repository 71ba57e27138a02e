use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the activation `phi(s) = a*s + b*|s|` together with the
/// weight scale `sigma` used to initialize the network.
///
/// [`ActivationParams::new`] always produces the edge-of-chaos scale
/// `sigma = (a^2 + b^2)^(-1/2)`; [`ActivationParams::with_sigma`] exists for
/// finite-width experiments away from it and is rejected by every closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationParams {
    pub a: f64,
    pub b: f64,
    /// Nonlinearity measure `b^2 / (a^2 + b^2)` in `[0, 1]`.
    pub delta: f64,
    pub sigma: f64,
    /// Lipschitz constant `|a| + |b|`.
    pub lipschitz: f64,
}

impl ActivationParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidActivation { a, b, reason: "non-finite coefficient" });
        }
        let norm2 = a * a + b * b;
        if norm2 == 0.0 {
            return Err(Error::InvalidActivation { a, b, reason: "a and b are both zero" });
        }
        Ok(Self {
            a,
            b,
            delta: b * b / norm2,
            sigma: 1.0 / norm2.sqrt(),
            lipschitz: a.abs() + b.abs(),
        })
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::OutOfDomain { name: "sigma", value: sigma, domain: "(0, inf)" });
        }
        self.sigma = sigma;
        Ok(self)
    }

    /// Canonical `(a, b)` pair with the requested `delta`, using `b = 1` for
    /// `delta <= 1/2` and `a = 1` above (and `(0, 1)` at `delta = 1`).
    pub fn from_delta(delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::OutOfDomain { name: "delta", value: delta, domain: "[0, 1]" });
        }
        if delta == 0.0 {
            Self::new(1.0, 0.0)
        } else if delta == 1.0 {
            Self::new(0.0, 1.0)
        } else if delta <= 0.5 {
            Self::new(((1.0 - delta) / delta).sqrt(), 1.0)
        } else {
            Self::new(1.0, (delta / (1.0 - delta)).sqrt())
        }
    }

    pub fn is_edge_of_chaos(&self) -> bool {
        let s2 = self.sigma * self.sigma * (self.a * self.a + self.b * self.b);
        (s2 - 1.0).abs() <= 8.0 * f64::EPSILON
    }

    pub fn require_edge_of_chaos(&self) -> Result<()> {
        if self.is_edge_of_chaos() {
            Ok(())
        } else {
            Err(Error::NotAtEdgeOfChaos {
                sigma: self.sigma,
                expected: 1.0 / (self.a * self.a + self.b * self.b).sqrt(),
            })
        }
    }

    #[inline]
    pub fn phi(&self, s: f64) -> f64 {
        self.a * s + self.b * s.abs()
    }

    /// Derivative with the convention `phi'(0) = a`.
    #[inline]
    pub fn phi_prime(&self, s: f64) -> f64 {
        if s > 0.0 {
            self.a + self.b
        } else if s < 0.0 {
            self.a - self.b
        } else {
            self.a
        }
    }
}

/// The eight activations `delta = 1/8, 2/8, ..., 1` in increasing order.
pub fn delta_eighths() -> Vec<ActivationParams> {
    let s3 = 3f64.sqrt();
    let s5 = 5f64.sqrt();
    let s7 = 7f64.sqrt();
    [
        (s7, 1.0),
        (s3, 1.0),
        (s5, s3),
        (1.0, 1.0),
        (s3, s5),
        (1.0, s3),
        (1.0, s7),
        (0.0, 1.0),
    ]
    .iter()
    .map(|&(a, b)| ActivationParams::new(a, b).expect("nonzero pair"))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_relu_abs() {
        let id = ActivationParams::new(1.0, 0.0).unwrap();
        assert_eq!(id.delta, 0.0);
        assert_eq!(id.sigma, 1.0);

        let relu = ActivationParams::new(0.5, 0.5).unwrap();
        assert_eq!(relu.delta, 0.5);
        assert!((relu.sigma - 2f64.sqrt()).abs() < 1e-15);

        let abs = ActivationParams::new(0.0, 1.0).unwrap();
        assert_eq!(abs.delta, 1.0);
        assert_eq!(abs.sigma, 1.0);
    }

    #[test]
    fn rejects_zero_and_nonfinite() {
        assert!(ActivationParams::new(0.0, 0.0).is_err());
        assert!(ActivationParams::new(f64::NAN, 1.0).is_err());
        assert!(ActivationParams::new(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn phi_values() {
        let relu = ActivationParams::new(0.5, 0.5).unwrap();
        assert_eq!(relu.phi(-2.0), 0.0);
        assert_eq!(relu.phi_prime(-2.0), 0.0);
        let abs = ActivationParams::new(0.0, 1.0).unwrap();
        assert_eq!(abs.phi(-3.0), 3.0);
        assert_eq!(abs.phi_prime(-3.0), -1.0);
        for p in [relu, abs, ActivationParams::new(1.0, 2.0).unwrap()] {
            assert_eq!(p.phi(0.0), 0.0);
            assert_eq!(p.phi_prime(0.0), p.a);
        }
    }

    #[test]
    fn eighths_have_expected_delta() {
        for (i, p) in delta_eighths().iter().enumerate() {
            let want = (i + 1) as f64 / 8.0;
            assert!((p.delta - want).abs() < 1e-15, "{} vs {}", p.delta, want);
            assert!(p.is_edge_of_chaos());
        }
    }

    #[test]
    fn from_delta_roundtrip() {
        for d in [0.0, 0.1, 0.5, 0.77, 1.0] {
            let p = ActivationParams::from_delta(d).unwrap();
            assert!((p.delta - d).abs() < 1e-14);
        }
    }

    #[test]
    fn non_eoc_sigma_detected() {
        let p = ActivationParams::new(0.5, 0.5).unwrap().with_sigma(1.0).unwrap();
        assert!(p.require_edge_of_chaos().is_err());
    }
}
