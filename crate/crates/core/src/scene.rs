//! Ground-truth world: geometry, path loss, the BS-IRS channel, IRS steering
//! vectors and the target response.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{CMat, CVec};
use crate::rng::{complex_gaussian, rng_from, unit_phase};
use crate::{Error, Result};

/// dB to linear power ratio.
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_lin(dbm - 30.0)
}

/// Distance-dependent power gain `C0 (d / d0)^(-alpha0)` in linear units.
pub fn path_loss(d_m: f64, c0_db: f64, d0_m: f64, alpha0: f64) -> Result<f64> {
    if !(d_m > 0.0) || !d_m.is_finite() {
        return Err(Error::Domain(format!("path loss needs a positive distance, got {d_m}")));
    }
    if !(d0_m > 0.0) {
        return Err(Error::Domain(format!("reference distance must be positive, got {d0_m}")));
    }
    Ok(db_to_lin(c0_db) * (d_m / d0_m).powf(-alpha0))
}

fn default_half_wave() -> Option<f64> {
    None
}

/// Physical and propagation parameters of one deployment.
///
/// Noise-type powers (`sigma2_dbm`, `sigma2_si_db`, `sigma2_ref_db`) accept
/// `null` for an exactly zero power, which the noiseless consistency checks use.
/// Element spacings default to half a carrier wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// BS antennas.
    pub m: usize,
    /// IRS elements along x.
    pub nx: usize,
    /// IRS elements along y.
    pub ny: usize,
    #[serde(default = "default_half_wave")]
    pub dx_m: Option<f64>,
    #[serde(default = "default_half_wave")]
    pub dy_m: Option<f64>,
    pub lambda_c_m: f64,
    pub bs_position_m: [f64; 3],
    pub irs_center_m: [f64; 3],
    pub target_range_m: f64,
    pub target_theta_deg: f64,
    pub target_phi_deg: f64,
    pub c0_db: f64,
    pub d0_m: f64,
    pub alpha0: f64,
    pub sigma2_dbm: Option<f64>,
    pub sigma2_si_db: Option<f64>,
    pub sigma2_ref_db: Option<f64>,
    /// Target reflection amplitude.
    pub target_rcs_amplitude: f64,
    /// When set, `|alpha|` additionally carries the IRS-target-IRS round-trip
    /// path loss `L(range)`; otherwise `|alpha| = target_rcs_amplitude`.
    #[serde(default)]
    pub target_path_loss: bool,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for SceneConfig {
    /// Deployment used throughout the numerical study: IRS in the xoy-plane at
    /// the origin, BS at (0, 3, 3) m, target at 7.5 m, 60°, 270°.
    fn default() -> Self {
        Self {
            m: 4,
            nx: 5,
            ny: 4,
            dx_m: None,
            dy_m: None,
            lambda_c_m: 0.06,
            bs_position_m: [0.0, 3.0, 3.0],
            irs_center_m: [0.0, 0.0, 0.0],
            target_range_m: 7.5,
            target_theta_deg: 60.0,
            target_phi_deg: 270.0,
            c0_db: -30.0,
            d0_m: 1.0,
            alpha0: 2.2,
            sigma2_dbm: Some(-120.0),
            sigma2_si_db: Some(-10.0),
            sigma2_ref_db: Some(-10.0),
            target_rcs_amplitude: 1.0,
            target_path_loss: true,
            rng_seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn n(&self) -> usize {
        self.nx * self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx_m.unwrap_or(self.lambda_c_m / 2.0)
    }

    pub fn dy(&self) -> f64 {
        self.dy_m.unwrap_or(self.lambda_c_m / 2.0)
    }

    /// Receiver noise power in watts.
    pub fn noise_power(&self) -> f64 {
        self.sigma2_dbm.map_or(0.0, dbm_to_watts)
    }

    pub fn si_power(&self) -> f64 {
        self.sigma2_si_db.map_or(0.0, db_to_lin)
    }

    pub fn ref_power(&self) -> f64 {
        self.sigma2_ref_db.map_or(0.0, db_to_lin)
    }

    pub fn bs_irs_distance(&self) -> f64 {
        let [a, b, c] = self.bs_position_m;
        let [x, y, z] = self.irs_center_m;
        ((a - x).powi(2) + (b - y).powi(2) + (c - z).powi(2)).sqrt()
    }

    pub fn bs_irs_path_loss(&self) -> Result<f64> {
        path_loss(self.bs_irs_distance(), self.c0_db, self.d0_m, self.alpha0)
    }

    pub fn target_angles_rad(&self) -> (f64, f64) {
        (self.target_theta_deg.to_radians(), self.target_phi_deg.to_radians())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.m < 2 {
            return bad(format!("need at least 2 BS antennas, got {}", self.m));
        }
        if self.nx == 0 || self.ny == 0 {
            return bad("IRS must have at least one element per axis".into());
        }
        let positive = [
            ("lambda_c_m", self.lambda_c_m),
            ("dx_m", self.dx()),
            ("dy_m", self.dy()),
            ("target_range_m", self.target_range_m),
            ("d0_m", self.d0_m),
            ("bs_irs_distance", self.bs_irs_distance()),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.target_rcs_amplitude >= 0.0 && self.target_rcs_amplitude.is_finite()) {
            return bad("target_rcs_amplitude must be non-negative".into());
        }
        for (name, v) in [
            ("sigma2_dbm", self.sigma2_dbm),
            ("sigma2_si_db", self.sigma2_si_db),
            ("sigma2_ref_db", self.sigma2_ref_db),
        ] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return bad(format!("{name} must be finite or null"));
                }
            }
        }
        for v in [self.c0_db, self.alpha0, self.target_theta_deg, self.target_phi_deg] {
            if !v.is_finite() {
                return bad("non-finite propagation parameter".into());
            }
        }
        Ok(())
    }
}

/// Planar-array response `a_x(θ, φ) ⊗ a_y(θ, φ)`; element `ix * ny + iy`.
pub fn steering_vector(theta: f64, phi: f64, cfg: &SceneConfig) -> CVec {
    let vx = theta.sin() * phi.cos();
    let vy = theta.sin() * phi.sin();
    let kx = 2.0 * PI * cfg.dx() * vx / cfg.lambda_c_m;
    let ky = 2.0 * PI * cfg.dy() * vy / cfg.lambda_c_m;
    let ny = cfg.ny;
    CVec::from_fn(cfg.n(), |idx, _| {
        let (ix, iy) = (idx / ny, idx % ny);
        Complex64::from_polar(1.0, kx * ix as f64 + ky * iy as f64)
    })
}

/// One realization of the physical world.
///
/// Self-interference and scatter channels are not part of the scene; the pilot
/// simulator redraws them per subframe from the powers in `config`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub config: SceneConfig,
    /// BS-IRS channel, N x M.
    pub g: CMat,
    /// Steering vector toward the true target.
    pub a: CVec,
    /// Round-trip IRS-target-IRS coefficient.
    pub alpha: Complex64,
}

impl Scene {
    pub fn n(&self) -> usize {
        self.config.n()
    }

    pub fn m(&self) -> usize {
        self.config.m
    }

    pub fn noise_power(&self) -> f64 {
        self.config.noise_power()
    }

    /// Same world with the target coefficient replaced.
    pub fn with_alpha(mut self, alpha: Complex64) -> Self {
        self.alpha = alpha;
        self
    }
}

const STREAM_CHANNEL: u64 = 0x6368;
const STREAM_TARGET: u64 = 0x7467;

/// Draws Rayleigh BS-IRS fading, the target steering vector and a uniformly
/// random target phase. A pure function of `(config, seed)`.
pub fn synthesize_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    config.validate()?;
    let (n, m) = (config.n(), config.m);
    let pl = config.bs_irs_path_loss()?;
    let mut rng = rng_from(seed, &[STREAM_CHANNEL]);
    let mut g = CMat::zeros(n, m);
    for r in 0..n {
        for c in 0..m {
            g[(r, c)] = complex_gaussian(&mut rng, pl);
        }
    }
    let (theta, phi) = config.target_angles_rad();
    let a = steering_vector(theta, phi, config);
    let mut amplitude = config.target_rcs_amplitude;
    if config.target_path_loss {
        amplitude *= path_loss(config.target_range_m, config.c0_db, config.d0_m, config.alpha0)?;
    }
    let mut trng = rng_from(seed, &[STREAM_TARGET]);
    let alpha = amplitude * unit_phase(&mut trng);
    Ok(Scene { config: config.clone(), g, a, alpha })
}
