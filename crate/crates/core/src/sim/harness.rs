use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::array::{
    build_dictionary, build_far_field_dictionary, ArrayConfig, Dictionary, SteeringParams,
    WavefrontModel,
};
use crate::channel::{
    optimal_beamformer, sample_paths, squint_ratios, subcarrier_frequencies, ChannelRealization,
    PathSet, Scenario, ZeroChannel,
};
use crate::design::{
    design_hybrid, jrc_beamformer, radar_beamformer, subcarrier_auxiliary, DesignOptions,
    HybridDesign,
};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::metrics::{
    precoder_covariance, spectral_efficiency_of, target_gains, BeampatternGrid, ProbeGrid,
};

use super::config::{Baseline, Compensation, SimConfig};
use super::table::{BeampatternReport, ResultRow, ResultTable};

/// Precoding scheme evaluated in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Fully digital, communications only (`F_opt` of the true channel).
    FdComm,
    /// Fully digital trade-off precoder `F_CR`.
    FdIsac,
    Hybrid { model: WavefrontModel, bsa: bool },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::FdComm => "fd_comm".into(),
            Method::FdIsac => "fd_isac".into(),
            Method::Hybrid { model, bsa } => format!(
                "hybrid_{}_{}",
                model_name(*model),
                if *bsa { "bsa" } else { "none" }
            ),
        }
    }
}

pub fn model_name(model: WavefrontModel) -> &'static str {
    match model {
        WavefrontModel::NearField => "nearfield",
        WavefrontModel::FarField => "farfield",
    }
}

fn other_model(model: WavefrontModel) -> WavefrontModel {
    match model {
        WavefrontModel::NearField => WavefrontModel::FarField,
        WavefrontModel::FarField => WavefrontModel::NearField,
    }
}

/// Methods evaluated for `cfg`. With `both_bsa` every hybrid appears with
/// and without compensation.
pub fn methods_for(cfg: &SimConfig, both_bsa: bool) -> Vec<Method> {
    let mut models = vec![cfg.mode];
    if cfg.compare_farfield {
        models.push(other_model(cfg.mode));
    }
    let bsa_flags: Vec<bool> = if both_bsa {
        vec![true, false]
    } else {
        vec![cfg.compensation == Compensation::Bsa]
    };
    let mut out = Vec::new();
    for b in &cfg.baselines {
        match b {
            Baseline::FdComm => out.push(Method::FdComm),
            Baseline::FdIsac => out.push(Method::FdIsac),
            Baseline::Hybrid => {
                for &model in &models {
                    for &bsa in &bsa_flags {
                        out.push(Method::Hybrid { model, bsa });
                    }
                }
            }
        }
    }
    out.dedup();
    out
}

/// Arrays and dictionaries shared by every trial of a run.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub config: SimConfig,
    pub tx: ArrayConfig,
    pub rx: ArrayConfig,
    near_dictionary: Option<Dictionary>,
    far_dictionary: Option<Dictionary>,
}

impl Workspace {
    /// Validates `cfg` and builds the dictionaries the configured methods need.
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let tx = cfg.tx_array()?;
        let rx = cfg.rx_array()?;
        let mut models = vec![cfg.mode];
        if cfg.compare_farfield {
            models.push(other_model(cfg.mode));
        }
        let mut ws = Workspace {
            config: cfg.clone(),
            tx,
            rx,
            near_dictionary: None,
            far_dictionary: None,
        };
        for m in models {
            ws.ensure_dictionary(m)?;
        }
        Ok(ws)
    }

    fn ensure_dictionary(&mut self, model: WavefrontModel) -> Result<()> {
        let cfg = &self.config;
        match model {
            WavefrontModel::NearField if self.near_dictionary.is_none() => {
                self.near_dictionary = Some(build_dictionary(
                    &self.tx,
                    cfg.dict_directions,
                    cfg.dict_ranges,
                    cfg.dictionary_ranges(),
                )?);
            }
            WavefrontModel::FarField if self.far_dictionary.is_none() => {
                let (lo, hi) = cfg.dictionary_ranges();
                self.far_dictionary =
                    Some(build_far_field_dictionary(&self.tx, cfg.dict_directions, 0.5 * (lo + hi))?);
            }
            _ => {}
        }
        Ok(())
    }

    pub fn dictionary(&self, model: WavefrontModel) -> Result<&Dictionary> {
        let d = match model {
            WavefrontModel::NearField => self.near_dictionary.as_ref(),
            WavefrontModel::FarField => self.far_dictionary.as_ref(),
        };
        d.ok_or_else(|| Error::invalid(format!("no {} dictionary built", model_name(model))))
    }
}

/// One Monte Carlo draw: paths, radar targets and the squinted channels.
#[derive(Debug, Clone)]
pub struct Trial {
    pub index: u64,
    pub bandwidth: f64,
    pub paths: PathSet,
    pub targets: Vec<SteeringParams>,
    pub frequencies: Vec<f64>,
    pub etas: Vec<f64>,
    /// Squinted channels `H[m]`, used for evaluation.
    pub channels: Vec<CMat>,
}

/// Generator for trial `index`: one stream per trial so results do not
/// depend on scheduling.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

impl Trial {
    pub fn draw(ws: &Workspace, index: u64, bandwidth: f64) -> Result<Trial> {
        let cfg = &ws.config;
        let mut rng = trial_rng(cfg.seed, index);
        let (dlo, dhi) = cfg.sine_direction_interval();
        let scenario = Scenario {
            num_paths: cfg.paths,
            direction_interval: (dlo, dhi),
            range_interval: (cfg.range_interval[0], cfg.range_interval[1]),
            bandwidth,
            cp_length: cfg.cp_length(),
        };
        let paths = sample_paths(&mut rng, &scenario)?;
        let targets = (0..cfg.targets)
            .map(|_| {
                let phi = dlo + (dhi - dlo) * rng.gen::<f64>();
                let r = cfg.range_interval[0]
                    + (cfg.range_interval[1] - cfg.range_interval[0]) * rng.gen::<f64>();
                SteeringParams::new(phi, r)
            })
            .collect::<Result<Vec<_>>>()?;
        let frequencies = subcarrier_frequencies(cfg.carrier_frequency, bandwidth, cfg.subcarriers);
        let etas = squint_ratios(cfg.carrier_frequency, &frequencies);
        let channels = ChannelRealization::synthesize(
            &paths,
            &ws.tx,
            &ws.rx,
            &frequencies,
            true,
            WavefrontModel::NearField,
        )?
        .per_subcarrier;
        Ok(Trial {
            index,
            bandwidth,
            paths,
            targets,
            frequencies,
            etas,
            channels,
        })
    }

    /// Communications-optimal precoders of the true channel.
    pub fn fd_comm_precoders(&self, num_streams: usize) -> Result<Vec<CMat>> {
        self.channels
            .iter()
            .map(|h| optimal_beamformer(h, num_streams, ZeroChannel::Error))
            .collect()
    }

    /// Fully digital trade-off precoders, scaled to power `N_S` per subcarrier.
    pub fn fd_isac_precoders(&self, ws: &Workspace) -> Result<Vec<CMat>> {
        let cfg = &ws.config;
        let n_s = cfg.streams;
        let f_opt = self.fd_comm_precoders(n_s)?;
        let f_r = radar_beamformer(&self.targets, &ws.tx, WavefrontModel::NearField)?;
        let pi = linalg::polar_factor(&(f_r.adjoint() * linalg::hstack(&f_opt)?))?;
        f_opt
            .iter()
            .enumerate()
            .map(|(m, f)| {
                let f_cr = jrc_beamformer(f, &f_r, &subcarrier_auxiliary(&pi, m, n_s), cfg.epsilon)?;
                let p = f_cr.norm();
                if !(p > 0.0) {
                    return Err(Error::ZeroNorm("fully digital ISAC precoder"));
                }
                Ok(f_cr * num_complex::Complex64::new((n_s as f64).sqrt() / p, 0.0))
            })
            .collect()
    }

    /// Hybrid design under `model`. The design sees the squint-free channel
    /// built with the same wavefront model as its dictionary.
    pub fn design(&self, ws: &Workspace, model: WavefrontModel) -> Result<HybridDesign> {
        let cfg = &ws.config;
        let design_channels = ChannelRealization::synthesize(
            &self.paths,
            &ws.tx,
            &ws.rx,
            &self.frequencies,
            false,
            model,
        )?
        .per_subcarrier;
        let f_opt = design_channels
            .iter()
            .map(|h| optimal_beamformer(h, cfg.streams, ZeroChannel::Error))
            .collect::<Result<Vec<_>>>()?;
        let f_r = radar_beamformer(&self.targets, &ws.tx, model)?;
        let options = DesignOptions {
            extra_sweeps: cfg.extra_sweeps,
            phase_reference: cfg.phase_reference,
        };
        design_hybrid(ws.dictionary(model)?, &f_opt, &f_r, &cfg.tradeoff(), &self.etas, &options)
    }

    /// Effective precoders for every method, in the order given.
    pub fn precoders(&self, ws: &Workspace, methods: &[Method]) -> Result<Vec<Vec<CMat>>> {
        let n_s = ws.config.streams;
        let mut designs: Vec<(WavefrontModel, HybridDesign)> = Vec::new();
        let mut out = Vec::with_capacity(methods.len());
        for method in methods {
            let f = match *method {
                Method::FdComm => self.fd_comm_precoders(n_s)?,
                Method::FdIsac => self.fd_isac_precoders(ws)?,
                Method::Hybrid { model, bsa } => {
                    if !designs.iter().any(|(m, _)| *m == model) {
                        let d = self.design(ws, model)?;
                        d.check_invariants(n_s)?;
                        designs.push((model, d));
                    }
                    let d = &designs.iter().find(|(m, _)| *m == model).unwrap().1;
                    d.precoders(bsa)
                }
            };
            out.push(f);
        }
        Ok(out)
    }

    /// Mean radar gain over targets for precoders `f`.
    pub fn mean_target_gain(&self, ws: &Workspace, f: &[CMat]) -> Result<f64> {
        let covs = f
            .iter()
            .map(|p| precoder_covariance(p, ws.config.streams))
            .collect::<Result<Vec<_>>>()?;
        let g = target_gains(&covs, &self.targets, &ws.tx, &self.frequencies)?;
        Ok(g.iter().sum::<f64>() / g.len().max(1) as f64)
    }
}

/// Per-method results of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// `se[method][snr]`.
    pub se: Vec<Vec<f64>>,
    pub target_gain: Vec<f64>,
}

pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Evaluates every method of one trial at each SNR.
pub fn evaluate_trial(
    ws: &Workspace,
    trial: &Trial,
    methods: &[Method],
    snrs_db: &[f64],
) -> Result<TrialOutcome> {
    let n_s = ws.config.streams;
    let precoders = trial.precoders(ws, methods)?;
    let mut se = Vec::with_capacity(methods.len());
    let mut target_gain = Vec::with_capacity(methods.len());
    for f in &precoders {
        se.push(
            snrs_db
                .iter()
                .map(|&s| spectral_efficiency_of(&trial.channels, f, noise_variance(s), n_s))
                .collect::<Result<Vec<_>>>()?,
        );
        target_gain.push(trial.mean_target_gain(ws, f)?);
    }
    Ok(TrialOutcome { se, target_gain })
}

fn run_trials(
    ws: &Workspace,
    bandwidth: f64,
    methods: &[Method],
    snrs_db: &[f64],
) -> Result<Vec<TrialOutcome>> {
    (0..ws.config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let trial = Trial::draw(ws, t, bandwidth)?;
            let out = evaluate_trial(ws, &trial, methods, snrs_db);
            debug!("trial {t} at B={bandwidth} done");
            out
        })
        .collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate(
    outcomes: &[TrialOutcome],
    methods: &[Method],
    snr_index: usize,
    sweep_value: f64,
    rows: &mut Vec<ResultRow>,
) {
    for (k, method) in methods.iter().enumerate() {
        let se: Vec<f64> = outcomes.iter().map(|o| o.se[k][snr_index]).collect();
        let gains: Vec<f64> = outcomes.iter().map(|o| o.target_gain[k]).collect();
        let (mean_se, std_se) = mean_std(&se);
        rows.push(ResultRow {
            sweep_value,
            method: method.label(),
            mean_se,
            std_se,
            mean_target_gain: mean_std(&gains).0,
            trials_used: outcomes.len(),
        });
    }
}

/// Mean SE against SNR at the configured bandwidth.
pub fn run_se_vs_snr(cfg: &SimConfig) -> Result<ResultTable> {
    let ws = Workspace::new(cfg)?;
    let methods = methods_for(cfg, false);
    info!("se-vs-snr: {} trials, {} methods", cfg.trials, methods.len());
    let outcomes = run_trials(&ws, cfg.bandwidth, &methods, &cfg.snr_grid_db)?;
    let mut rows = Vec::new();
    for (i, &snr) in cfg.snr_grid_db.iter().enumerate() {
        aggregate(&outcomes, &methods, i, snr, &mut rows);
    }
    Ok(ResultTable::new("se-vs-snr", "snr_db", cfg.clone(), rows))
}

/// Mean SE against bandwidth at `cfg.snr_db`; hybrids appear with and
/// without compensation.
pub fn run_se_vs_bandwidth(cfg: &SimConfig) -> Result<ResultTable> {
    let ws = Workspace::new(cfg)?;
    let methods = methods_for(cfg, true);
    let mut rows = Vec::new();
    for &b in &cfg.bandwidth_grid {
        info!("se-vs-bandwidth: B = {b} Hz");
        let outcomes = run_trials(&ws, b, &methods, &[cfg.snr_db])?;
        aggregate(&outcomes, &methods, 0, b, &mut rows);
    }
    Ok(ResultTable::new("se-vs-bandwidth", "bandwidth_hz", cfg.clone(), rows))
}

/// Probe grid spanning the configured direction and range intervals.
pub fn default_probe_grid(cfg: &SimConfig, n_directions: usize, n_ranges: usize) -> ProbeGrid {
    let (lo, hi) = cfg.sine_direction_interval();
    ProbeGrid {
        directions: crate::array::uniform_grid(lo, hi, n_directions),
        ranges: crate::array::uniform_grid(cfg.range_interval[0], cfg.range_interval[1], n_ranges),
    }
}

/// Beampattern of `design` averaged over subcarriers, plus the gains at
/// the trial's targets.
pub fn run_beampattern(
    ws: &Workspace,
    trial: &Trial,
    design: &HybridDesign,
    probe: &ProbeGrid,
    bsa: bool,
) -> Result<BeampatternReport> {
    let n_s = ws.config.streams;
    let covs = design
        .precoders(bsa)
        .iter()
        .map(|f| precoder_covariance(f, n_s))
        .collect::<Result<Vec<_>>>()?;
    let grid = BeampatternGrid::evaluate(&covs, probe, &ws.tx, &trial.frequencies)?;
    let gains = target_gains(&covs, &trial.targets, &ws.tx, &trial.frequencies)?;
    Ok(BeampatternReport {
        config: ws.config.clone(),
        probe: probe.clone(),
        mean_gain: grid.mean_over_subcarriers(),
        targets: trial.targets.clone(),
        target_gains: gains,
    })
}
