//! Wideband multipath channels over an OFDM subcarrier grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::array::{squinted_steering, steer, ArrayConfig, SteeringParams, WavefrontModel};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};

/// Subcarrier frequencies centred on `fc` with spacing `bandwidth / m`.
pub fn subcarrier_frequencies(fc: f64, bandwidth: f64, m: usize) -> Vec<f64> {
    let step = bandwidth / m as f64;
    let centre = (m as f64 - 1.0) / 2.0;
    (0..m).map(|i| fc + step * (i as f64 - centre)).collect()
}

/// `η_m = f_c / f_m` for every subcarrier.
pub fn squint_ratios(fc: f64, freqs: &[f64]) -> Vec<f64> {
    freqs.iter().map(|f| fc / f).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain: Complex64,
    /// Delay in seconds.
    pub delay: f64,
    pub tx: SteeringParams,
    pub rx: SteeringParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

/// Sampling ranges for a multipath draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub num_paths: usize,
    /// Sine-direction interval shared by departure and arrival directions.
    pub direction_interval: (f64, f64),
    pub range_interval: (f64, f64),
    pub bandwidth: f64,
    /// Cyclic-prefix length in samples; delays are drawn over `[0, (cp−1)/B]`.
    pub cp_length: usize,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let (dlo, dhi) = self.direction_interval;
        let (rlo, rhi) = self.range_interval;
        if self.num_paths == 0 {
            return Err(Error::invalid("at least one path is required"));
        }
        if !(dlo <= dhi && dlo >= -1.0 && dhi <= 1.0) {
            return Err(Error::invalid(format!(
                "direction interval ({dlo}, {dhi}) must be a non-empty sub-interval of [-1, 1]"
            )));
        }
        if !(rlo > 0.0 && rlo <= rhi && rhi.is_finite()) {
            return Err(Error::invalid(format!(
                "range interval ({rlo}, {rhi}) must satisfy 0 < lo <= hi"
            )));
        }
        if !(self.bandwidth >= 0.0) || self.cp_length == 0 {
            return Err(Error::invalid("bandwidth must be >= 0 and cp_length >= 1"));
        }
        Ok(())
    }

    fn max_delay(&self) -> f64 {
        if self.bandwidth > 0.0 {
            (self.cp_length as f64 - 1.0) / self.bandwidth
        } else {
            0.0
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Draws `γ ~ CN(0, 1)`, delays, and uniform directions/ranges at both ends.
///
/// The number of generator calls per path does not depend on the
/// bandwidth, so the same seed gives the same geometry across a bandwidth
/// sweep.
pub fn sample_paths<R: Rng + ?Sized>(rng: &mut R, scenario: &Scenario) -> Result<PathSet> {
    scenario.validate()?;
    let max_delay = scenario.max_delay();
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut paths = Vec::with_capacity(scenario.num_paths);
    for _ in 0..scenario.num_paths {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let delay = max_delay * rng.gen::<f64>();
        let tx = SteeringParams::new(
            uniform(rng, scenario.direction_interval),
            uniform(rng, scenario.range_interval),
        )?;
        let rx = SteeringParams::new(
            uniform(rng, scenario.direction_interval),
            uniform(rng, scenario.range_interval),
        )?;
        paths.push(Path {
            gain: Complex64::new(re * scale, im * scale),
            delay,
            tx,
            rx,
        });
    }
    Ok(PathSet { paths })
}

/// Channel matrix `Σ_l γ_l a_R a_T^H e^{−j2πτ_l f_m}` at one subcarrier.
///
/// With `squint` set, each steering vector is taken at the location the
/// carrier-referenced beamspace sees at `f_m` (see
/// [`squinted_steering`]); otherwise at the physical location.
pub fn channel_at(
    paths: &PathSet,
    tx_cfg: &ArrayConfig,
    rx_cfg: &ArrayConfig,
    f_m: f64,
    squint: bool,
) -> Result<CMat> {
    channel_at_model(paths, tx_cfg, rx_cfg, f_m, squint, WavefrontModel::NearField)
}

/// [`channel_at`] under an explicit wavefront model.
pub fn channel_at_model(
    paths: &PathSet,
    tx_cfg: &ArrayConfig,
    rx_cfg: &ArrayConfig,
    f_m: f64,
    squint: bool,
    model: WavefrontModel,
) -> Result<CMat> {
    if !(f_m > 0.0 && f_m.is_finite()) {
        return Err(Error::invalid(format!("subcarrier frequency must be positive, got {f_m}")));
    }
    let eta = tx_cfg.carrier_frequency / f_m;
    let mut h = CMat::zeros(rx_cfg.num_elements, tx_cfg.num_elements);
    for p in &paths.paths {
        let (a_t, a_r) = if squint {
            (
                squinted_steering(tx_cfg, &p.tx, eta, model)?,
                squinted_steering(rx_cfg, &p.rx, rx_cfg.carrier_frequency / f_m, model)?,
            )
        } else {
            (
                steer(tx_cfg, &p.tx, tx_cfg.carrier_frequency, model)?,
                steer(rx_cfg, &p.rx, rx_cfg.carrier_frequency, model)?,
            )
        };
        let coeff = p.gain * Complex64::from_polar(1.0, -2.0 * PI * p.delay * f_m);
        h.gerc(coeff, &a_r, &a_t, Complex64::new(1.0, 0.0));
    }
    Ok(h)
}

/// Per-subcarrier channel matrices for one path draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub per_subcarrier: Vec<CMat>,
    pub subcarrier_frequencies: Vec<f64>,
    pub squinted: bool,
}

impl ChannelRealization {
    pub fn synthesize(
        paths: &PathSet,
        tx_cfg: &ArrayConfig,
        rx_cfg: &ArrayConfig,
        freqs: &[f64],
        squint: bool,
        model: WavefrontModel,
    ) -> Result<Self> {
        let per_subcarrier = freqs
            .iter()
            .map(|&f| channel_at_model(paths, tx_cfg, rx_cfg, f, squint, model))
            .collect::<Result<Vec<_>>>()?;
        Ok(ChannelRealization {
            per_subcarrier,
            subcarrier_frequencies: freqs.to_vec(),
            squinted: squint,
        })
    }
}

/// What [`optimal_beamformer`] does with an all-zero channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroChannel {
    #[default]
    Error,
    ZeroPrecoder,
}

/// Top-`n_s` right singular vectors of `h`, with Frobenius norm `√n_s`.
pub fn optimal_beamformer(h: &CMat, n_s: usize, on_zero: ZeroChannel) -> Result<CMat> {
    let max_streams = h.nrows().min(h.ncols());
    if n_s == 0 || n_s > max_streams {
        return Err(Error::invalid(format!(
            "stream count {n_s} must lie in 1..={max_streams}"
        )));
    }
    if linalg::frobenius(h) == 0.0 {
        return match on_zero {
            ZeroChannel::Error => Err(Error::ZeroNorm("optimal_beamformer: zero channel")),
            ZeroChannel::ZeroPrecoder => Ok(CMat::zeros(h.ncols(), n_s)),
        };
    }
    let dec = linalg::svd(h)?;
    let v = dec.v_t.rows(0, n_s).adjoint();
    let norm = linalg::frobenius(&v);
    Ok(v * Complex64::new((n_s as f64).sqrt() / norm, 0.0))
}

/// `y = H·F_RF·F_BB·s + n`.
pub fn received_signal(
    h: &CMat,
    f_rf: &CMat,
    f_bb: &CMat,
    s: &CVec,
    noise: &CVec,
) -> Result<CVec> {
    if h.ncols() != f_rf.nrows() {
        return Err(Error::shape("received_signal (H·F_RF)", h.ncols(), f_rf.nrows()));
    }
    if f_rf.ncols() != f_bb.nrows() {
        return Err(Error::shape("received_signal (F_RF·F_BB)", f_rf.ncols(), f_bb.nrows()));
    }
    if f_bb.ncols() != s.len() {
        return Err(Error::shape("received_signal (F_BB·s)", f_bb.ncols(), s.len()));
    }
    if noise.len() != h.nrows() {
        return Err(Error::shape("received_signal (noise)", h.nrows(), noise.len()));
    }
    Ok(h * (f_rf * (f_bb * s)) + noise)
}
