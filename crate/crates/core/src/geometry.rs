//! Position-dependent physics: elevation angles, the logistic LoS/sensing
//! probability, the LoS/NLoS mixture channel gain, the uplink rate and the
//! rate-maximising UAV placement for a fixed sensing angle.
//!
//! Angles are in degrees throughout; trigonometric calls convert explicitly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn horizontal_distance(&self, other: &Point3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn translated(&self, by: &Point3) -> Point3 {
        Point3::new(self.x + by.x, self.y + by.y, self.z + by.z)
    }
}

/// Radio environment: logistic constants, path-loss factors and link budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    /// Logistic offset.
    pub eps: f64,
    /// Logistic slope.
    pub sigma: f64,
    pub gamma_los: f64,
    pub gamma_nlos: f64,
    /// Carrier frequency in Hz.
    pub f_c: f64,
    /// Per-UAV bandwidth in Hz.
    pub bandwidth: f64,
    /// Communication transmit power in W.
    pub p_c: f64,
    /// Noise power spectral density in W/Hz.
    pub n0: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            eps: 12.08,
            sigma: 0.1139,
            gamma_los: 1.0,
            gamma_nlos: 20.0,
            f_c: 2.4e9,
            bandwidth: 1.2e6,
            p_c: dbm_to_watts(20.0),
            n0: dbm_to_watts(-174.0),
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, bool); 7] = [
            ("eps", self.eps > 0.0),
            ("sigma", self.sigma > 0.0),
            ("gamma_los", self.gamma_los > 0.0),
            ("gamma_nlos", self.gamma_nlos >= self.gamma_los),
            ("f_c", self.f_c > 0.0),
            ("bandwidth", self.bandwidth > 0.0),
            ("n0", self.n0 > 0.0),
        ];
        for (key, ok) in checks {
            if !ok {
                return Err(Error::config(format!("env.{key}"), "out of range"));
            }
        }
        // p_c = 0 is allowed and yields a zero rate.
        if !(self.p_c >= 0.0) {
            return Err(Error::config("env.p_c", "must be non-negative"));
        }
        Ok(())
    }
}

/// FMCW sensing duty: chirp duration, chirps per sample and the minimum elevation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingParams {
    /// Chirp duration in seconds.
    pub t_chirp: f64,
    /// Chirps per data sample.
    pub n_chirps: u32,
    /// Minimum sensing elevation in degrees.
    pub theta0: f64,
}

impl Default for SensingParams {
    fn default() -> Self {
        Self { t_chirp: 10e-6, n_chirps: 25, theta0: 15.0 }
    }
}

impl SensingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_chirp > 0.0) {
            return Err(Error::config("sensing.t_chirp", "must be positive"));
        }
        if self.n_chirps < 1 {
            return Err(Error::config("sensing.n_chirps", "must be at least 1"));
        }
        if !(self.theta0 > 0.0 && self.theta0 < 90.0) {
            return Err(Error::config("sensing.theta0", "must lie in (0, 90) degrees"));
        }
        Ok(())
    }
}

/// Elevation angle in degrees of the segment between `a` and `b`.
pub fn elevation_angle(a: &Point3, b: &Point3) -> Result<f64> {
    let d = a.distance(b);
    if !(d > 0.0) {
        return Err(Error::Domain("elevation angle of coincident points".into()));
    }
    let ratio = ((a.z - b.z).abs() / d).min(1.0);
    Ok(ratio.asin().to_degrees())
}

/// Logistic success probability `1 / (1 + eps * exp(-sigma (theta - eps)))`.
///
/// Used both for sensing success and for the LoS probability. `theta` is
/// clamped to `[0, 90]`.
pub fn logistic_link_prob(theta: f64, env: &EnvParams) -> f64 {
    let theta = theta.clamp(0.0, 90.0);
    1.0 / (1.0 + env.eps * (-env.sigma * (theta - env.eps)).exp())
}

/// Inverse of [`logistic_link_prob`]: the elevation angle that achieves `q_s`.
pub fn theta_from_qs(q_s: f64, env: &EnvParams) -> Result<f64> {
    let (lo, hi) = achievable_qs_range(env);
    let slack = 4.0 * f64::EPSILON;
    if !(q_s >= lo * (1.0 - slack) && q_s <= hi * (1.0 + slack)) {
        return Err(Error::infeasible(
            "sensing probability",
            format!("q_s = {q_s} outside achievable range [{lo}, {hi}]"),
        ));
    }
    let theta = env.eps + (env.eps * q_s / (1.0 - q_s)).ln() / env.sigma;
    Ok(theta.clamp(0.0, 90.0))
}

/// Probabilities reachable at 0 and 90 degrees.
pub fn achievable_qs_range(env: &EnvParams) -> (f64, f64) {
    (logistic_link_prob(0.0, env), logistic_link_prob(90.0, env))
}

/// Probability-weighted LoS/NLoS free-space channel gain between a UAV and the server.
pub fn channel_gain(uav: &Point3, server: &Point3, env: &EnvParams) -> Result<f64> {
    let d = uav.distance(server);
    if !(d > 0.0) {
        return Err(Error::Domain("channel gain at zero distance".into()));
    }
    let q_c = logistic_link_prob(elevation_angle(uav, server)?, env);
    Ok(gain_with_los_prob(d, q_c, env))
}

/// Channel gain at distance `d` with the LoS probability pinned to `q_c`.
pub fn gain_with_los_prob(d: f64, q_c: f64, env: &EnvParams) -> f64 {
    let free_space = (4.0 * std::f64::consts::PI * env.f_c * d / SPEED_OF_LIGHT).powi(-2);
    free_space / (env.gamma_los * q_c + env.gamma_nlos * (1.0 - q_c))
}

/// Shannon rate in bit/s for a given channel gain.
pub fn rate_from_gain(h: f64, env: &EnvParams) -> f64 {
    let snr = env.p_c * h / (env.bandwidth * env.n0);
    env.bandwidth * snr.ln_1p() / std::f64::consts::LN_2
}

/// Uplink data rate in bit/s between a UAV and the server.
pub fn data_rate(uav: &Point3, server: &Point3, env: &EnvParams) -> Result<f64> {
    Ok(rate_from_gain(channel_gain(uav, server, env)?, env))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub position: Point3,
    /// Server horizontally coincident with the target: every point of the
    /// circle is equally good and the `+x` point was returned.
    pub degenerate: bool,
}

/// Rate-maximising UAV position at altitude `altitude` that sees `target`
/// under elevation `theta_s`.
///
/// The constraint fixes the UAV to the circle of radius `H / tan(theta_s)` around
/// the target. Distance to the server and the communication elevation are both
/// monotone in the horizontal offset from the server, so the optimum is the
/// circle point on the ray from the target toward the server's ground projection.
pub fn optimal_uav_position(
    target: &Point3,
    server: &Point3,
    altitude: f64,
    theta_s: f64,
) -> Result<Placement> {
    if !(theta_s > 0.0 && theta_s <= 90.0) {
        return Err(Error::Domain(format!("sensing angle {theta_s} outside (0, 90]")));
    }
    if !(altitude > 0.0) {
        return Err(Error::Domain("UAV altitude must be positive".into()));
    }
    let radius = if theta_s >= 90.0 { 0.0 } else { altitude / theta_s.to_radians().tan() };
    let (dx, dy) = (server.x - target.x, server.y - target.y);
    let norm = dx.hypot(dy);
    let degenerate = norm <= f64::EPSILON * (1.0 + target.x.abs().max(target.y.abs()));
    let (ux, uy) = if degenerate { (1.0, 0.0) } else { (dx / norm, dy / norm) };
    Ok(Placement {
        position: Point3::new(target.x + radius * ux, target.y + radius * uy, altitude),
        degenerate,
    })
}
