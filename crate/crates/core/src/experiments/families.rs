//! Named initial-data families with documented fibre masses. The long-time
//! limit of a run is parameterized entirely by m0(theta), so every family
//! here states what its m0 is and whether it is constant.

use serde::{Deserialize, Serialize};

use crate::model::ModelParams;
use crate::profile::StationaryProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// h0 = hbar(x - lambda): exactly stationary, m0 = e^{alpha lambda}.
    ShiftedProfile { lambda: f64 },
    /// h0 = hbar(x - lambda) (1 + eps sin 2 pi x), eps in [0, 1).
    /// sin(2 pi (k + theta)) is constant along each fibre lattice, so
    /// m0(theta) = e^{alpha lambda} (1 + eps sin 2 pi theta).
    ModulatedProfile { lambda: f64, eps: f64 },
    /// h0 = amplitude exp(-((x - center)/width)^2); m0 semi-analytic
    /// (computed from the lattice sum at init, no closed form recorded).
    GaussianBump {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// h0 = scale e^{-alpha x} on [left, left + len), zero elsewhere.
    /// The tilt cancels the lattice weight: every fibre sees exactly
    /// `len` points of weight `scale`, so m0 = scale * len, constant.
    CompactBlock { scale: f64, left: f64, len: u32 },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::ShiftedProfile { lambda: 0.0 }
    }
}

impl InitialData {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            InitialData::ShiftedProfile { lambda } => {
                if !lambda.is_finite() {
                    return Err(format!("shifted-profile lambda must be finite, got {lambda}"));
                }
            }
            InitialData::ModulatedProfile { lambda, eps } => {
                if !lambda.is_finite() || !(0.0..1.0).contains(&eps) {
                    return Err(format!(
                        "modulated-profile needs finite lambda and eps in [0, 1), got lambda {lambda}, eps {eps}"
                    ));
                }
            }
            InitialData::GaussianBump {
                amplitude,
                center,
                width,
            } => {
                if !(amplitude >= 0.0) || !center.is_finite() || !(width > 0.0) {
                    return Err(format!(
                        "gaussian-bump needs amplitude >= 0 and width > 0, got {amplitude}, {center}, {width}"
                    ));
                }
            }
            InitialData::CompactBlock { scale, left, len } => {
                if !(scale >= 0.0) || !left.is_finite() || len == 0 {
                    return Err(format!(
                        "compact-block needs scale >= 0 and len >= 1, got {scale}, {left}, {len}"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Point sampler; the profile argument backs the profile families.
    pub fn sampler<'a>(
        &'a self,
        profile: &'a StationaryProfile,
    ) -> impl Fn(f64) -> f64 + Sync + 'a {
        let params = *profile.params();
        move |x: f64| match *self {
            InitialData::ShiftedProfile { lambda } => profile.eval(x - lambda),
            InitialData::ModulatedProfile { lambda, eps } => {
                profile.eval(x - lambda)
                    * (1.0 + eps * (2.0 * std::f64::consts::PI * x).sin())
            }
            InitialData::GaussianBump {
                amplitude,
                center,
                width,
            } => {
                let z = (x - center) / width;
                amplitude * (-z * z).exp()
            }
            InitialData::CompactBlock { scale, left, len } => {
                if x >= left && x < left + len as f64 {
                    scale * (-params.alpha() * x).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Closed-form fibre mass, when the family has one.
    pub fn predicted_m0(&self, theta: f64, params: &ModelParams) -> Option<f64> {
        match *self {
            InitialData::ShiftedProfile { lambda } => Some((params.alpha() * lambda).exp()),
            InitialData::ModulatedProfile { lambda, eps } => Some(
                (params.alpha() * lambda).exp()
                    * (1.0 + eps * (2.0 * std::f64::consts::PI * theta).sin()),
            ),
            InitialData::GaussianBump { .. } => None,
            InitialData::CompactBlock { scale, len, .. } => Some(scale * len as f64),
        }
    }

    /// Whether m0(theta) is constant by construction.
    pub fn constant_m0(&self) -> bool {
        match *self {
            InitialData::ShiftedProfile { .. } | InitialData::CompactBlock { .. } => true,
            InitialData::ModulatedProfile { eps, .. } => eps == 0.0,
            InitialData::GaussianBump { .. } => false,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            InitialData::ShiftedProfile { lambda } => {
                format!("shifted-profile(lambda={lambda})")
            }
            InitialData::ModulatedProfile { lambda, eps } => {
                format!("modulated-profile(lambda={lambda}, eps={eps})")
            }
            InitialData::GaussianBump {
                amplitude,
                center,
                width,
            } => format!("gaussian-bump(amplitude={amplitude}, center={center}, width={width})"),
            InitialData::CompactBlock { scale, left, len } => {
                format!("compact-block(scale={scale}, left={left}, len={len})")
            }
        }
    }
}
