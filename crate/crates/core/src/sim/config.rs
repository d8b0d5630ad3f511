use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::array::{ArrayConfig, WavefrontModel, SPEED_OF_LIGHT};
use crate::design::{PhaseReference, TradeoffConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compensation {
    Bsa,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Hybrid,
    FdIsac,
    FdComm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    Desk,
}

/// Experiment parameters. The default is the full-scale setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    /// Hz.
    pub carrier_frequency: f64,
    /// Hz.
    pub bandwidth: f64,
    pub subcarriers: usize,
    pub targets: usize,
    pub paths: usize,
    pub rf_chains: usize,
    pub streams: usize,
    pub epsilon: f64,
    pub dict_directions: usize,
    pub dict_ranges: usize,
    /// Angles in radians; directions are drawn uniformly in sine space
    /// between the sines of these endpoints.
    pub direction_interval: [f64; 2],
    /// Meters; used for both paths and targets.
    pub range_interval: [f64; 2],
    /// Meters; `None` means `[1 m, d_F]`.
    pub dict_range_interval: Option<[f64; 2]>,
    pub trials: usize,
    pub snr_grid_db: Vec<f64>,
    /// Hz.
    pub bandwidth_grid: Vec<f64>,
    /// SNR used by the bandwidth sweep and the beampattern run.
    pub snr_db: f64,
    pub seed: u64,
    pub mode: WavefrontModel,
    pub compensation: Compensation,
    pub baselines: Vec<Baseline>,
    /// Adds a hybrid designed under the other wavefront model.
    pub compare_farfield: bool,
    /// Cyclic prefix in samples; `None` means `subcarriers / 4`.
    pub cp_length: Option<usize>,
    pub extra_sweeps: usize,
    pub phase_reference: PhaseReference,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            tx_antennas: 128,
            rx_antennas: 16,
            carrier_frequency: 300e9,
            bandwidth: 20e9,
            subcarriers: 64,
            targets: 3,
            paths: 8,
            rf_chains: 8,
            streams: 4,
            epsilon: 0.5,
            dict_directions: 100,
            dict_ranges: 20,
            direction_interval: [-PI / 3.0, PI / 3.0],
            range_interval: [5.0, 30.0],
            dict_range_interval: None,
            trials: 500,
            snr_grid_db: (-4..=4).map(|i| 5.0 * i as f64).collect(),
            bandwidth_grid: (0..=8).map(|i| 5e9 * i as f64).collect(),
            snr_db: 10.0,
            seed: 0,
            mode: WavefrontModel::NearField,
            compensation: Compensation::Bsa,
            baselines: vec![Baseline::FdComm, Baseline::FdIsac, Baseline::Hybrid],
            compare_farfield: true,
            cp_length: None,
            extra_sweeps: 0,
            phase_reference: PhaseReference::Unwrapped,
        }
    }
}

impl SimConfig {
    pub fn paper() -> Self {
        Self::default()
    }

    /// Reduced-size setup that runs in seconds. Ranges are placed inside
    /// the near field of the 32-element array: `[0.05, 0.3]·d_F`.
    pub fn desk() -> Self {
        let fc = 300e9;
        let d_f = half_wavelength_fraunhofer(32, fc);
        let ranges = [0.05 * d_f, 0.3 * d_f];
        SimConfig {
            tx_antennas: 32,
            rx_antennas: 8,
            subcarriers: 16,
            targets: 2,
            paths: 4,
            rf_chains: 4,
            streams: 2,
            dict_directions: 40,
            dict_ranges: 10,
            range_interval: ranges,
            dict_range_interval: Some(ranges),
            trials: 50,
            ..Self::default()
        }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Paper => Self::paper(),
            Preset::Desk => Self::desk(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Parses `text` with keys it leaves out taken from `self`.
    pub fn overlay_toml_str(&self, text: &str) -> Result<Self> {
        let cfg_err = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        let mut base: toml::Table =
            toml::from_str(&self.to_toml_string()?).map_err(|e| cfg_err(&e))?;
        let patch: toml::Table = toml::from_str(text).map_err(|e| cfg_err(&e))?;
        base.extend(patch);
        toml::Value::Table(base).try_into().map_err(|e| cfg_err(&e))
    }

    pub fn overlay_file(&self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        self.overlay_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn tx_array(&self) -> Result<ArrayConfig> {
        ArrayConfig::half_wavelength(self.tx_antennas, self.carrier_frequency)
    }

    pub fn rx_array(&self) -> Result<ArrayConfig> {
        ArrayConfig::half_wavelength(self.rx_antennas, self.carrier_frequency)
    }

    pub fn tradeoff(&self) -> TradeoffConfig {
        TradeoffConfig {
            epsilon: self.epsilon,
            num_rf_chains: self.rf_chains,
            num_streams: self.streams,
            num_targets: self.targets,
        }
    }

    pub fn fraunhofer_distance(&self) -> f64 {
        half_wavelength_fraunhofer(self.tx_antennas, self.carrier_frequency)
    }

    /// Sine-space interval for direction draws.
    pub fn sine_direction_interval(&self) -> (f64, f64) {
        (self.direction_interval[0].sin(), self.direction_interval[1].sin())
    }

    pub fn dictionary_ranges(&self) -> (f64, f64) {
        match self.dict_range_interval {
            Some([lo, hi]) => (lo, hi),
            None => (1.0, self.fraunhofer_distance()),
        }
    }

    pub fn cp_length(&self) -> usize {
        self.cp_length.unwrap_or(self.subcarriers / 4).max(1)
    }

    /// Rejects inconsistent settings before any computation.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.tx_antennas < 2 || self.rx_antennas < 2 {
            return bad("tx_antennas and rx_antennas must be at least 2".into());
        }
        if !(self.carrier_frequency > 0.0) {
            return bad("carrier_frequency must be positive".into());
        }
        for &b in std::iter::once(&self.bandwidth).chain(&self.bandwidth_grid) {
            if !(0.0..2.0 * self.carrier_frequency).contains(&b) {
                return bad(format!("bandwidth {b} must lie in [0, 2·f_c)"));
            }
        }
        if self.subcarriers == 0 || self.paths == 0 || self.trials == 0 {
            return bad("subcarriers, paths and trials must be positive".into());
        }
        let t = self.tradeoff();
        if let Err(e) = t.validate(self.tx_antennas) {
            return bad(e.to_string());
        }
        if self.targets > self.subcarriers * self.streams {
            return bad("targets must not exceed subcarriers·streams".into());
        }
        if self.dict_directions == 0 || self.dict_ranges == 0 {
            return bad("dictionary grid must be non-empty".into());
        }
        let ff_atoms = self.dict_directions;
        if ff_atoms < self.rf_chains {
            return bad(format!(
                "dict_directions ({ff_atoms}) must be at least rf_chains ({})",
                self.rf_chains
            ));
        }
        let [a0, a1] = self.direction_interval;
        if !(a0 <= a1 && a0 >= -PI / 2.0 && a1 <= PI / 2.0) {
            return bad(format!("direction_interval [{a0}, {a1}] must lie within [-π/2, π/2]"));
        }
        let [r0, r1] = self.range_interval;
        if !(r0 > 0.0 && r0 <= r1 && r1.is_finite()) {
            return bad(format!("range_interval [{r0}, {r1}] must satisfy 0 < lo <= hi"));
        }
        let (d0, d1) = self.dictionary_ranges();
        if !(d0 > 0.0 && d0 <= d1 && d1.is_finite()) {
            return bad(format!(
                "dictionary range interval [{d0}, {d1}] is empty; set dict_range_interval"
            ));
        }
        if self.snr_grid_db.is_empty() || self.bandwidth_grid.is_empty() {
            return bad("snr_grid_db and bandwidth_grid must be non-empty".into());
        }
        if self.snr_grid_db.iter().chain([&self.snr_db]).any(|x| !x.is_finite()) {
            return bad("SNR values must be finite".into());
        }
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed {} exceeds the TOML integer range (max {})", self.seed, i64::MAX));
        }
        if self.baselines.is_empty() {
            return bad("at least one baseline is required".into());
        }
        Ok(())
    }
}

fn half_wavelength_fraunhofer(n: usize, fc: f64) -> f64 {
    let lambda = SPEED_OF_LIGHT / fc;
    let aperture = (n as f64 - 1.0) * lambda / 2.0;
    2.0 * aperture * aperture / lambda
}
