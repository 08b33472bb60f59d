//! Geometry of the rescaled model: fibre labels, the sawtooth phase, the
//! changes of variables linking the three representations, and the weighted
//! mass integral.
//!
//! Rescaled coordinates (t, x) carry the density h with
//! dh/dt = dh/dx + alpha h + e^{-alpha} h(t, x-1)^2 - h(t, x)^2,
//! alpha = (1 - gamma) ln 2. Information moves leftward along x + t = const,
//! so the fractional part of t + x labels the lattice fibre through (t, x).

use crate::error::ModelError;

/// Kernel homogeneity gamma < 1 and the derived growth rate alpha.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    gamma: f64,
    alpha: f64,
}

impl ModelParams {
    pub fn new(gamma: f64) -> Result<Self, ModelError> {
        if !gamma.is_finite() || gamma >= 1.0 {
            return Err(ModelError::InvalidGamma(gamma));
        }
        Ok(Self {
            gamma,
            alpha: (1.0 - gamma) * std::f64::consts::LN_2,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// e^{-alpha}, the weight of the delayed gain term.
    pub fn decay(&self) -> f64 {
        (-self.alpha).exp()
    }

    /// Left-plateau height alpha / (1 - e^{-alpha}) of the stationary profile.
    pub fn plateau(&self) -> f64 {
        self.alpha / (1.0 - self.decay())
    }
}

impl Default for ModelParams {
    /// gamma = 0, the constant-kernel normalization (alpha = ln 2).
    fn default() -> Self {
        Self::new(0.0).expect("gamma = 0 is valid")
    }
}

/// Fractional part clamped into [0, 1). Values within a few ulps of an
/// integer snap to 0: period boundaries are jump points and the convention
/// is right-continuous, so t = n + theta must map to phase 0 even when the
/// subtraction rounds to 0.999...9.
pub fn frac(v: f64) -> f64 {
    let f = v - v.floor();
    let tol = 4.0 * f64::EPSILON * v.abs().max(1.0);
    if f >= 1.0 - tol || f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// Fibre label Theta(t, x) = frac(t + x); constant along x + t = const and
/// 1-periodic in each argument.
pub fn fibre_label(t: f64, x: f64) -> f64 {
    frac(t + x)
}

/// Sawtooth phase psi(t, theta) = frac(t - theta). Grows with slope 1 and
/// jumps 1 -> 0 at t = n + theta; right-continuous, so psi(n + theta, theta)
/// is 0, and psi(0, theta) = 1 - theta for theta in (0, 1).
pub fn phase(t: f64, theta: f64) -> f64 {
    frac(t - theta)
}

/// (t, x, h) -> (tau, eta, g): tau = e^{alpha t}, eta = x + t,
/// g = e^{-alpha t} h / alpha.
pub fn h_to_g(t: f64, x: f64, h: f64, p: &ModelParams) -> (f64, f64, f64) {
    let tau = (p.alpha() * t).exp();
    (tau, x + t, h / (alpha_tau(p, tau)))
}

/// Inverse of [`h_to_g`]; tau must be positive.
pub fn g_to_h(tau: f64, eta: f64, g: f64, p: &ModelParams) -> Result<(f64, f64, f64), ModelError> {
    if !(tau > 0.0) {
        return Err(ModelError::NonPositiveTau(tau));
    }
    let t = tau.ln() / p.alpha();
    Ok((t, eta - t, g * alpha_tau(p, tau)))
}

fn alpha_tau(p: &ModelParams, tau: f64) -> f64 {
    p.alpha() * tau
}

/// (eta, g) -> (xi, f): xi = 2^eta, f = 2^{-eta (1 + gamma)} g.
pub fn g_to_f(eta: f64, g: f64, p: &ModelParams) -> (f64, f64) {
    let xi = eta.exp2();
    (xi, g * (-(1.0 + p.gamma()) * eta).exp2())
}

/// Inverse of [`g_to_f`]; xi must be positive.
pub fn f_to_g(xi: f64, f: f64, p: &ModelParams) -> Result<(f64, f64), ModelError> {
    if !(xi > 0.0) {
        return Err(ModelError::NonPositiveXi(xi));
    }
    let eta = xi.log2();
    Ok((eta, f * ((1.0 + p.gamma()) * eta).exp2()))
}

/// Trapezoid quadrature of e^{alpha x} h over the uniform grid
/// x_i = x0 + i dx.
pub fn mass_integral(x0: f64, dx: f64, h: &[f64], p: &ModelParams) -> Result<f64, ModelError> {
    if !(dx > 0.0) || !dx.is_finite() {
        return Err(ModelError::InvalidSpacing(dx));
    }
    let n = h.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (i, &v) in h.iter().enumerate() {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        sum += w * (p.alpha() * (x0 + i as f64 * dx)).exp() * v;
    }
    Ok(sum * dx)
}

/// [`mass_integral`] plus a leak check: errors when either weighted endpoint
/// exceeds `boundary_tol`, in which case the truncated tails are not
/// negligible and the integral value is suspect.
pub fn mass_integral_checked(
    x0: f64,
    dx: f64,
    h: &[f64],
    p: &ModelParams,
    boundary_tol: f64,
) -> Result<f64, ModelError> {
    let total = mass_integral(x0, dx, h, p)?;
    if h.len() >= 2 {
        let left = (p.alpha() * x0).exp() * h[0];
        let right = (p.alpha() * (x0 + (h.len() - 1) as f64 * dx)).exp() * h[h.len() - 1];
        if left.abs() > boundary_tol || right.abs() > boundary_tol {
            return Err(ModelError::BoundaryLeak {
                left,
                right,
                tol: boundary_tol,
            });
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn params_reject_bad_gamma() {
        assert!(ModelParams::new(1.0).is_err());
        assert!(ModelParams::new(2.5).is_err());
        assert!(ModelParams::new(f64::NAN).is_err());
        assert!(ModelParams::new(0.999).is_ok());
        assert!(ModelParams::new(-3.0).is_ok());
    }

    #[test]
    fn gamma_zero_constants() {
        let p = ModelParams::default();
        assert!((p.alpha() - LN2).abs() < 1e-15);
        assert!((p.decay() - 0.5).abs() < 1e-15);
        // plateau = ln 2 / (1 - 1/2) = 2 ln 2
        assert!((p.plateau() - 2.0 * LN2).abs() < 1e-15);
    }

    #[test]
    fn fibre_label_examples() {
        // frac(0.3 - 0.5) = frac(-0.2) = 0.8
        assert!((fibre_label(0.3, -0.5) - 0.8).abs() < 1e-12);
        // 1-periodicity in t
        assert!((fibre_label(1.3, -0.5) - 0.8).abs() < 1e-12);
        // integer x does not change the label
        assert!((fibre_label(0.25, 3.0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn phase_examples() {
        // psi(0, theta) = 1 - theta
        assert!((phase(0.0, 0.3) - 0.7).abs() < 1e-12);
        // t = n + theta is a jump point, phase snaps to 0 (right-continuous)
        assert_eq!(phase(2.3, 0.3), 0.0);
        assert_eq!(phase(0.0, 0.0), 0.0);
        // mid-period value
        assert!((phase(2.8, 0.3) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn transform_point_examples() {
        let p = ModelParams::default();
        // (t=0, x=1, h=alpha) -> (tau=1, eta=1, g=1)
        let (tau, eta, g) = h_to_g(0.0, 1.0, p.alpha(), &p);
        assert_eq!(tau, 1.0);
        assert_eq!(eta, 1.0);
        assert!((g - 1.0).abs() < 1e-15);
        // gamma=0, eta=2, f=1 -> g = 2^{eta(1+gamma)} f = 4
        let (eta2, g2) = f_to_g(4.0, 1.0, &p).unwrap();
        assert_eq!(eta2, 2.0);
        assert!((g2 - 4.0).abs() < 1e-15);
        let (xi, f) = g_to_f(eta2, g2, &p);
        assert_eq!(xi, 4.0);
        assert!((f - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transform_rejects_nonpositive() {
        let p = ModelParams::default();
        assert!(g_to_h(0.0, 1.0, 1.0, &p).is_err());
        assert!(g_to_h(-2.0, 1.0, 1.0, &p).is_err());
        assert!(f_to_g(0.0, 1.0, &p).is_err());
    }

    #[test]
    fn mass_integral_zero_and_hat() {
        let p = ModelParams::default();
        let zeros = vec![0.0; 64];
        assert_eq!(mass_integral(-3.0, 0.125, &zeros, &p).unwrap(), 0.0);

        // Narrow unit-area hat at x = 0: integral approaches e^{alpha*0} = 1.
        let dx = 1.0 / 1024.0;
        let half = 32; // half-width 32 dx = 2^-5
        let n = 2 * half + 1;
        let peak = 1.0 / (half as f64 * dx);
        let h: Vec<f64> = (0..n)
            .map(|i| {
                let d = (i as isize - half as isize).abs() as f64;
                peak * (1.0 - d / half as f64)
            })
            .collect();
        let x0 = -(half as f64) * dx;
        let m = mass_integral(x0, dx, &h, &p).unwrap();
        assert!(
            (m - 1.0).abs() < 1e-3,
            "hat mass {m} should be ~1 (width 2^-5)"
        );
    }

    #[test]
    fn mass_integral_flags_boundary_leak() {
        let p = ModelParams::default();
        let h = vec![1.0; 16];
        let err = mass_integral_checked(0.0, 0.125, &h, &p, 1e-12).unwrap_err();
        assert!(matches!(err, ModelError::BoundaryLeak { .. }));
        // compact interior data passes
        let mut h2 = vec![0.0; 16];
        h2[7] = 3.0;
        assert!(mass_integral_checked(0.0, 0.125, &h2, &p, 1e-12).is_ok());
    }

    proptest! {
        #[test]
        fn frac_in_unit_interval(v in -1e6f64..1e6) {
            let f = frac(v);
            prop_assert!((0.0..1.0).contains(&f));
        }

        #[test]
        fn label_periodic(t in -50.0f64..50.0, x in -50.0f64..50.0) {
            let a = fibre_label(t, x);
            let b = fibre_label(t + 1.0, x);
            let c = fibre_label(t, x - 1.0);
            // compare on the circle
            let d1 = (a - b).abs().min(1.0 - (a - b).abs());
            let d2 = (a - c).abs().min(1.0 - (a - c).abs());
            prop_assert!(d1 < 1e-9, "t-period: {a} vs {b}");
            prop_assert!(d2 < 1e-9, "x-period: {a} vs {c}");
        }

        #[test]
        fn label_constant_along_characteristics(t in 0.0f64..20.0, x in -20.0f64..20.0, s in 0.0f64..5.0) {
            // h(t, x) travels along x + t = const
            let a = fibre_label(t, x);
            let b = fibre_label(t + s, x - s);
            let d = (a - b).abs().min(1.0 - (a - b).abs());
            prop_assert!(d < 1e-9);
        }

        #[test]
        fn phase_self_consistent(t in 0.0f64..30.0, theta in 0.0f64..1.0) {
            // the lattice point k + 1 - psi(t, theta) lies on fibre theta
            let psi = phase(t, theta);
            let k = 3.0;
            let lbl = fibre_label(t, k + 1.0 - psi);
            let d = (lbl - theta).abs().min(1.0 - (lbl - theta).abs());
            prop_assert!(d < 1e-9, "label {lbl} vs theta {theta}");
        }

        #[test]
        fn round_trips(t in -3.0f64..3.0, x in -10.0f64..10.0, h in 0.0f64..10.0, gamma in -1.0f64..0.9) {
            let p = ModelParams::new(gamma).unwrap();
            let (tau, eta, g) = h_to_g(t, x, h, &p);
            let (t2, x2, h2) = g_to_h(tau, eta, g, &p).unwrap();
            prop_assert!((t - t2).abs() < 1e-12 * t.abs().max(1.0));
            prop_assert!((x - x2).abs() < 1e-11 * x.abs().max(1.0));
            prop_assert!((h - h2).abs() < 1e-12 * h.abs().max(1.0));
            let (xi, f) = g_to_f(eta, g, &p);
            let (eta2, g2) = f_to_g(xi, f, &p).unwrap();
            prop_assert!((eta - eta2).abs() < 1e-11 * eta.abs().max(1.0));
            prop_assert!((g - g2).abs() < 1e-11 * g.abs().max(1.0));
        }
    }
}
