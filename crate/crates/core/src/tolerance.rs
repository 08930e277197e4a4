use serde::{Deserialize, Serialize};

/// Environment variable selecting the default tolerance profile.
pub const PROFILE_ENV: &str = "QDS_TOLERANCE_PROFILE";

/// Every numerical threshold used by the analysis.
///
/// `herm`, `psd` and `trace` are absolute; `rank` is relative to the largest
/// eigenvalue or singular value involved in a rank decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub herm: f64,
    pub psd: f64,
    pub trace: f64,
    pub rank: f64,
    /// Residual bound for eigenpairs and fixed-point checks.
    pub eig: f64,
    /// Two eigenvalues closer than this are the same eigenvalue.
    pub cluster: f64,
    /// Distance from the unit circle (discrete) or imaginary axis
    /// (continuous) below which a mode is peripheral.
    pub peripheral: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            herm: 1e-9,
            psd: 1e-9,
            trace: 1e-9,
            rank: 1e-8,
            eig: 1e-8,
            cluster: 1e-7,
            peripheral: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn strict() -> Self {
        Tolerances {
            herm: 1e-11,
            psd: 1e-11,
            trace: 1e-11,
            rank: 1e-10,
            eig: 1e-10,
            cluster: 1e-8,
            peripheral: 1e-10,
        }
    }

    /// Profile named by `QDS_TOLERANCE_PROFILE` (`strict` or `default`).
    pub fn from_env() -> Self {
        match std::env::var(PROFILE_ENV).as_deref() {
            Ok("strict") => Self::strict(),
            _ => Self::default(),
        }
    }
}
