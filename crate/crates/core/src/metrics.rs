//! Evaluation functionals: transmit covariance, beampattern, spectral
//! efficiency and the design objective.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::array::{squinted_steering, ArrayConfig, SteeringParams, WavefrontModel};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// `R_x = F_RF·F_BB·F_BB^H·F_RF^H / N_S`.
pub fn transmit_covariance(f_rf: &CMat, f_bb: &CMat, num_streams: usize) -> Result<CMat> {
    if f_rf.ncols() != f_bb.nrows() {
        return Err(Error::shape("transmit_covariance", f_rf.ncols(), f_bb.nrows()));
    }
    precoder_covariance(&(f_rf * f_bb), num_streams)
}

/// `F·F^H / N_S` for an effective precoder `F`.
pub fn precoder_covariance(f: &CMat, num_streams: usize) -> Result<CMat> {
    if num_streams == 0 {
        return Err(Error::invalid("stream count must be positive"));
    }
    Ok((f * f.adjoint()).unscale(num_streams as f64))
}

/// Direction-by-range probe locations.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGrid {
    pub directions: Vec<f64>,
    pub ranges: Vec<f64>,
}

impl ProbeGrid {
    pub fn params(&self, i: usize, j: usize) -> Result<SteeringParams> {
        SteeringParams::new(self.directions[i], self.ranges[j])
    }
}

#[derive(Debug, Clone)]
pub struct BeampatternGrid {
    pub directions: Vec<f64>,
    pub ranges: Vec<f64>,
    /// One directions × ranges gain map per subcarrier.
    pub gains: Vec<DMatrix<f64>>,
}

impl BeampatternGrid {
    /// Gains at every subcarrier for per-subcarrier covariances.
    pub fn evaluate(
        covariances: &[CMat],
        probe: &ProbeGrid,
        cfg: &ArrayConfig,
        freqs: &[f64],
    ) -> Result<Self> {
        if covariances.len() != freqs.len() {
            return Err(Error::shape("BeampatternGrid::evaluate", freqs.len(), covariances.len()));
        }
        let gains = covariances
            .iter()
            .zip(freqs)
            .map(|(r, &f)| beampattern(r, probe, cfg, f))
            .collect::<Result<Vec<_>>>()?;
        Ok(BeampatternGrid {
            directions: probe.directions.clone(),
            ranges: probe.ranges.clone(),
            gains,
        })
    }

    /// Gain map averaged over subcarriers.
    pub fn mean_over_subcarriers(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.directions.len(), self.ranges.len());
        for g in &self.gains {
            acc += g;
        }
        acc / self.gains.len().max(1) as f64
    }
}

/// Quadratic form `a^H·R·a`, clamped at zero against rounding.
pub fn quadratic_gain(r_x: &CMat, a: &crate::linalg::CVec) -> f64 {
    (a.adjoint() * r_x * a)[(0, 0)].re.max(0.0)
}

/// Array response toward a physical location at subcarrier `f_m`.
fn probe_vector(cfg: &ArrayConfig, p: &SteeringParams, f_m: f64) -> Result<crate::linalg::CVec> {
    if !(f_m > 0.0) {
        return Err(Error::invalid(format!("subcarrier frequency must be positive, got {f_m}")));
    }
    squinted_steering(cfg, p, cfg.carrier_frequency / f_m, WavefrontModel::NearField)
}

/// `B_m(Φ, r) = a^H(Φ, r)·R_x·a(Φ, r)` on the probe grid, with `a` the
/// array response at subcarrier `f_m`.
pub fn beampattern(
    r_x: &CMat,
    probe: &ProbeGrid,
    cfg: &ArrayConfig,
    f_m: f64,
) -> Result<DMatrix<f64>> {
    if r_x.shape() != (cfg.num_elements, cfg.num_elements) {
        return Err(Error::shape("beampattern", cfg.num_elements, r_x.nrows()));
    }
    let mut out = DMatrix::zeros(probe.directions.len(), probe.ranges.len());
    for i in 0..probe.directions.len() {
        for j in 0..probe.ranges.len() {
            let a = probe_vector(cfg, &probe.params(i, j)?, f_m)?;
            out[(i, j)] = quadratic_gain(r_x, &a);
        }
    }
    Ok(out)
}

/// Per-target gain averaged over subcarriers.
pub fn target_gains(
    covariances: &[CMat],
    targets: &[SteeringParams],
    cfg: &ArrayConfig,
    freqs: &[f64],
) -> Result<Vec<f64>> {
    if covariances.len() != freqs.len() || freqs.is_empty() {
        return Err(Error::shape("target_gains", freqs.len(), covariances.len()));
    }
    targets
        .iter()
        .map(|t| {
            let mut acc = 0.0;
            for (r, &f) in covariances.iter().zip(freqs) {
                acc += quadratic_gain(r, &probe_vector(cfg, t, f)?);
            }
            Ok(acc / freqs.len() as f64)
        })
        .collect()
}

/// Average log-det rate over subcarriers for effective precoders `F[m]`:
/// `(1/M)·Σ_m log2 det(I + H[m]F[m]F[m]^H H[m]^H / (N_S·σ²))`.
pub fn spectral_efficiency_of(
    channels: &[CMat],
    precoders: &[CMat],
    noise_variance: f64,
    num_streams: usize,
) -> Result<f64> {
    if !(noise_variance > 0.0) {
        return Err(Error::invalid(format!("noise variance must be positive, got {noise_variance}")));
    }
    if channels.len() != precoders.len() || channels.is_empty() {
        return Err(Error::shape("spectral_efficiency", channels.len(), precoders.len()));
    }
    let scale = 1.0 / (num_streams as f64 * noise_variance);
    let mut total = 0.0;
    for (h, f) in channels.iter().zip(precoders) {
        if h.ncols() != f.nrows() {
            return Err(Error::shape("spectral_efficiency (H·F)", h.ncols(), f.nrows()));
        }
        let hf = h * f;
        let mut a = (&hf * hf.adjoint()) * Complex64::new(scale, 0.0);
        a = (&a + a.adjoint()).unscale(2.0);
        for i in 0..a.nrows() {
            a[(i, i)] += Complex64::new(1.0, 0.0);
        }
        total += linalg::hermitian_log2_det(&a)?;
    }
    let se = total / channels.len() as f64;
    if !se.is_finite() {
        return Err(Error::NonFinite("spectral efficiency".into()));
    }
    Ok(se)
}

/// [`spectral_efficiency_of`] for a hybrid precoder `F_RF·F_BB[m]`.
pub fn spectral_efficiency(
    channels: &[CMat],
    f_rf: &CMat,
    f_bb: &[CMat],
    noise_variance: f64,
    num_streams: usize,
) -> Result<f64> {
    if let Some(b) = f_bb.iter().find(|b| b.nrows() != f_rf.ncols()) {
        return Err(Error::shape("spectral_efficiency (F_RF·F_BB)", f_rf.ncols(), b.nrows()));
    }
    let precoders: Vec<CMat> = f_bb.iter().map(|b| f_rf * b).collect();
    spectral_efficiency_of(channels, &precoders, noise_variance, num_streams)
}

/// `Σ_m ‖F_RF·F_BB[m] − F_CR[m]‖_F`.
pub fn design_residual(f_rf: &CMat, f_bb: &[CMat], f_cr: &[CMat]) -> Result<f64> {
    if f_bb.len() != f_cr.len() {
        return Err(Error::shape("design_residual", f_cr.len(), f_bb.len()));
    }
    let mut acc = 0.0;
    for (b, t) in f_bb.iter().zip(f_cr) {
        if f_rf.ncols() != b.nrows() || (f_rf.nrows(), b.ncols()) != t.shape() {
            return Err(Error::shape("design_residual", f_rf.nrows(), t.nrows()));
        }
        acc += (f_rf * b - t).norm();
    }
    Ok(acc)
}
