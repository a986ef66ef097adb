//! Scenario and solver parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsitMode {
    Perfect,
    Estimated,
}

impl CsitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CsitMode::Perfect => "perfect",
            CsitMode::Estimated => "estimated",
        }
    }
}

/// Scenario scalars: array sizes, powers, noise and channel statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// BS antennas.
    #[serde(rename = "M")]
    pub antennas: usize,
    /// IRS elements.
    #[serde(rename = "N")]
    pub irs_elements: usize,
    /// Single-antenna devices.
    #[serde(rename = "K")]
    pub devices: usize,
    /// Sub-messages per device (1 = NOMA, 2 = RSMA).
    #[serde(rename = "I")]
    pub sub_messages: usize,
    /// Number of successive decoding groups.
    #[serde(rename = "L_groups")]
    pub groups: usize,
    pub bandwidth_hz: f64,
    pub p_max_dbm: f64,
    pub p_max_b_dbm: f64,
    /// Transmit SNR `P_max / sigma^2` in dB.
    pub snr_db: f64,
    pub path_count_min: usize,
    pub path_count_max: usize,
    /// Uplink training length in symbols.
    pub l_train: f64,
    pub csit: CsitMode,
    /// Monte-Carlo draws used to estimate each channel covariance.
    pub covariance_samples: usize,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            antennas: 8,
            irs_elements: 8,
            devices: 4,
            sub_messages: 2,
            groups: 4,
            bandwidth_hz: 10e6,
            p_max_dbm: 1.0,
            p_max_b_dbm: 30.0,
            snr_db: 10.0,
            path_count_min: 8,
            path_count_max: 16,
            l_train: 100.0,
            csit: CsitMode::Perfect,
            covariance_samples: 2000,
            seed: 0,
        }
    }
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl SystemConfig {
    pub fn p_max(&self) -> f64 {
        dbm_to_watt(self.p_max_dbm)
    }

    pub fn p_max_b(&self) -> f64 {
        dbm_to_watt(self.p_max_b_dbm)
    }

    /// Noise power from the SNR axis, `sigma^2 = P_max 10^(-snr/10)`.
    pub fn sigma2(&self) -> f64 {
        self.p_max() * 10f64.powf(-self.snr_db / 10.0)
    }

    /// Number of sub-messages `K * I`.
    pub fn streams(&self) -> usize {
        self.devices * self.sub_messages
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.antennas == 0 || self.irs_elements == 0 || self.devices == 0 {
            return fail(format!(
                "M, N, K must be >= 1 (got M={}, N={}, K={})",
                self.antennas, self.irs_elements, self.devices
            ));
        }
        if !(1..=2).contains(&self.sub_messages) {
            return fail(format!("I must be 1 or 2 (got {})", self.sub_messages));
        }
        if self.groups == 0 || self.groups > self.streams() {
            return fail(format!(
                "L_groups must lie in [1, K*I = {}] (got {})",
                self.streams(),
                self.groups
            ));
        }
        if !(self.bandwidth_hz > 0.0) {
            return fail(format!("bandwidth_hz must be positive (got {})", self.bandwidth_hz));
        }
        if !self.p_max_dbm.is_finite() || !self.p_max_b_dbm.is_finite() || !self.snr_db.is_finite() {
            return fail("p_max_dbm, p_max_b_dbm and snr_db must be finite".into());
        }
        if self.path_count_min == 0 || self.path_count_min > self.path_count_max {
            return fail(format!(
                "path count range [{}, {}] is empty or contains 0",
                self.path_count_min, self.path_count_max
            ));
        }
        if !(self.l_train > 0.0) {
            return fail(format!("l_train must be positive (got {})", self.l_train));
        }
        if self.csit == CsitMode::Estimated && self.covariance_samples < 100 {
            return fail(format!(
                "covariance_samples must be >= 100 (got {})",
                self.covariance_samples
            ));
        }
        Ok(())
    }
}

/// How `solve_power` treats the interference terms `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    /// Ascend the smoothed min-rate with `d` kept exact.
    Exact,
    /// Successive convex approximation with `d` replaced by its tangent plane.
    Linearized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamInit {
    /// `g = H_k v / ||H_k v||`.
    MatchedFilter,
    /// Unit-norm complex Gaussian draws from the solver stream.
    Random,
}

/// Iteration caps, tolerances and schedules for every solver stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// LogSumExp smoothing in bits.
    pub alpha: f64,
    pub kappa1: f64,
    pub gpi_max_iters: usize,
    pub kappa2: f64,
    pub ao_max_iters: usize,
    pub rho0: f64,
    pub rho_decay: f64,
    pub rho_floor: f64,
    pub phase_max_outer: usize,
    pub phase_max_inner: usize,
    pub phase_grid_points: usize,
    /// Newton iterations allowed for the PSD / unit-diagonal projection.
    pub projection_max_iters: usize,
    pub power_max_iters: usize,
    pub power_mode: PowerMode,
    pub beam_init: BeamInit,
    pub armijo: f64,
    /// With `I >= 2`, also run AO from the single-message solution padded
    /// with zero-power sub-messages and keep the better result.
    pub noma_start: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            kappa1: 1e-4,
            gpi_max_iters: 200,
            kappa2: 1e-3,
            ao_max_iters: 30,
            rho0: 1.0,
            rho_decay: 0.5,
            rho_floor: 1e-4,
            phase_max_outer: 20,
            phase_max_inner: 40,
            phase_grid_points: 64,
            projection_max_iters: 100,
            power_max_iters: 500,
            power_mode: PowerMode::Exact,
            beam_init: BeamInit::MatchedFilter,
            armijo: 1e-4,
            noma_start: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("rho0", self.rho0),
            ("rho_floor", self.rho_floor),
            ("armijo", self.armijo),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::Config(format!("{name} must be positive (got {value})")));
            }
        }
        if !(self.rho_decay > 0.0 && self.rho_decay <= 1.0) {
            return Err(Error::Config(format!(
                "rho_decay must lie in (0, 1] (got {})",
                self.rho_decay
            )));
        }
        if self.phase_grid_points < 2 {
            return Err(Error::Config("phase_grid_points must be >= 2".into()));
        }
        Ok(())
    }
}
