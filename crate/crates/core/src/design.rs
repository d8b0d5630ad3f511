//! Hybrid ISAC beamformer design.
//!
//! The analog beamformer is grown one dictionary atom at a time by
//! orthogonal matching pursuit against the joint radar-communications
//! target `F_CR[m] = ε·F_opt[m] + (1−ε)·F_R·Π[m]`. After each atom, the
//! per-subcarrier basebands are re-solved by least squares and the stacked
//! auxiliary matrix `Π̄` is updated as an orthogonal Procrustes problem.
//! Beam-squint is then moved into the baseband: each `F_BB[m]` is replaced
//! by the least-squares match of `F_RF·F̃_BB[m]` to the subcarrier-dependent
//! analog surrogate `F̆_RF[m]·F_BB[m]`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{steer, ArrayConfig, Dictionary, SteeringParams, WavefrontModel};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, PINV_RTOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffConfig {
    /// Communications weight in `[0, 1]`; 1 is communications-only.
    pub epsilon: f64,
    pub num_rf_chains: usize,
    pub num_streams: usize,
    pub num_targets: usize,
}

impl TradeoffConfig {
    pub fn validate(&self, num_tx: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::invalid(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        let (k, ns, nrf) = (self.num_targets, self.num_streams, self.num_rf_chains);
        if !(1 <= k && k <= ns && ns <= nrf && nrf <= num_tx) {
            return Err(Error::invalid(format!(
                "need 1 <= K <= N_S <= N_RF <= N_T, got K={k}, N_S={ns}, N_RF={nrf}, N_T={num_tx}"
            )));
        }
        Ok(())
    }
}

/// How [`sd_analog`] reads the phases of `F_RF` before scaling them by `η`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseReference {
    /// Principal value in `(−π, π]`, entry by entry.
    Wrapped,
    /// Continuous phase along each column, starting from the first element.
    #[default]
    Unwrapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DesignOptions {
    /// Additional baseband/Π/F_CR sweeps after the last atom is added.
    pub extra_sweeps: usize,
    pub phase_reference: PhaseReference,
}

#[derive(Debug, Clone)]
pub struct HybridDesign {
    /// `F_RF`, `N_T × N_RF`.
    pub analog: CMat,
    /// Normalized `F_BB[m]`.
    pub baseband: Vec<CMat>,
    /// Normalized beam-squint-aware `F̃_BB[m]`.
    pub bsa_baseband: Vec<CMat>,
    /// Subcarrier-dependent analog surrogates `F̆_RF[m]`.
    pub sd_analog: Vec<CMat>,
    /// Stacked `Π̄`, `K × M·N_S`.
    pub auxiliary: CMat,
    /// `F_CR[m]` after the last update.
    pub jrc_target: Vec<CMat>,
    pub selected_atoms: Vec<usize>,
    /// `Σ_m ‖F_CR[m] − F_RF·F_BB[m]‖_F` right after each baseband solve.
    pub residual_history: Vec<f64>,
}

impl HybridDesign {
    pub fn num_subcarriers(&self) -> usize {
        self.baseband.len()
    }

    /// Effective precoders `F_RF·F_BB[m]`, using the BSA basebands if asked.
    pub fn precoders(&self, bsa: bool) -> Vec<CMat> {
        let bb = if bsa { &self.bsa_baseband } else { &self.baseband };
        bb.iter().map(|b| &self.analog * b).collect()
    }

    /// Checks constant modulus, per-subcarrier power and `Π̄Π̄^H = I`.
    pub fn check_invariants(&self, num_streams: usize) -> Result<()> {
        let n_t = self.analog.nrows() as f64;
        let target = 1.0 / n_t.sqrt();
        let cm = self.analog.iter().map(|z| (z.norm() - target).abs()).fold(0.0, f64::max);
        if cm > 1e-12 {
            return Err(Error::NonFinite(format!("analog beamformer off constant modulus by {cm}")));
        }
        for (m, b) in self.baseband.iter().chain(&self.bsa_baseband).enumerate() {
            let p = (&self.analog * b).norm_squared();
            if (p - num_streams as f64).abs() > 1e-10 * num_streams as f64 {
                return Err(Error::NonFinite(format!("subcarrier {m}: power {p} != {num_streams}")));
            }
        }
        let k = self.auxiliary.nrows();
        let gram = &self.auxiliary * self.auxiliary.adjoint();
        let err = linalg::max_abs_diff(&gram, &CMat::identity(k, k));
        if err > 1e-10 {
            return Err(Error::NonFinite(format!("auxiliary matrix not row-orthonormal ({err})")));
        }
        Ok(())
    }
}

/// Radar-only precoder: one steering column per target at the carrier.
pub fn radar_beamformer(
    targets: &[SteeringParams],
    cfg: &ArrayConfig,
    model: WavefrontModel,
) -> Result<CMat> {
    if targets.is_empty() {
        return Err(Error::invalid("radar beamformer needs at least one target"));
    }
    for (i, a) in targets.iter().enumerate() {
        if targets[..i].contains(a) {
            log::warn!("duplicate radar target at direction {} range {}", a.direction(), a.range());
        }
    }
    let mut out = CMat::zeros(cfg.num_elements, targets.len());
    for (k, t) in targets.iter().enumerate() {
        out.set_column(k, &steer(cfg, t, cfg.carrier_frequency, model)?);
    }
    Ok(out)
}

/// `ε·F_opt + (1−ε)·F_R·Π`.
pub fn jrc_beamformer(f_opt: &CMat, f_r: &CMat, pi: &CMat, epsilon: f64) -> Result<CMat> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    if f_r.ncols() != pi.nrows() {
        return Err(Error::shape("jrc_beamformer (F_R·Π)", f_r.ncols(), pi.nrows()));
    }
    if f_opt.shape() != (f_r.nrows(), pi.ncols()) {
        return Err(Error::shape(
            "jrc_beamformer",
            format!("{}x{}", f_r.nrows(), pi.ncols()),
            format!("{}x{}", f_opt.nrows(), f_opt.ncols()),
        ));
    }
    let c = |x: f64| Complex64::new(x, 0.0);
    Ok(if epsilon == 1.0 {
        f_opt.clone()
    } else if epsilon == 0.0 {
        f_r * pi
    } else {
        f_opt * c(epsilon) + (f_r * pi) * c(1.0 - epsilon)
    })
}

/// Outcome of one matching-pursuit step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomSelection {
    pub index: usize,
    pub score: f64,
    /// All residuals were zero; the index is the first admissible one.
    pub degenerate: bool,
}

/// Per-atom score `Σ_m ‖a_p^H·R[m]‖²`.
pub fn omp_scores(dictionary: &Dictionary, residuals: &[CMat]) -> Result<Vec<f64>> {
    let n_t = dictionary.atoms.nrows();
    if let Some(r) = residuals.iter().find(|r| r.nrows() != n_t) {
        return Err(Error::shape("omp_select", n_t, r.nrows()));
    }
    let stacked = linalg::hstack(residuals)?;
    let corr = dictionary.atoms.adjoint() * stacked;
    Ok(corr.row_iter().map(|row| row.norm_squared()).collect())
}

/// Highest-scoring atom. Ties go to the lowest index.
pub fn omp_select(dictionary: &Dictionary, residuals: &[CMat]) -> Result<AtomSelection> {
    omp_select_excluding(dictionary, residuals, &[])
}

/// [`omp_select`] over atoms not listed in `excluded`.
pub fn omp_select_excluding(
    dictionary: &Dictionary,
    residuals: &[CMat],
    excluded: &[usize],
) -> Result<AtomSelection> {
    if dictionary.is_empty() {
        return Err(Error::invalid("empty dictionary"));
    }
    let scores = omp_scores(dictionary, residuals)?;
    let mut best: Option<(usize, f64)> = None;
    for (p, &s) in scores.iter().enumerate() {
        if excluded.contains(&p) {
            continue;
        }
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("omp score for atom {p}")));
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((p, s));
        }
    }
    let (index, score) =
        best.ok_or_else(|| Error::invalid("every dictionary atom is already selected"))?;
    let degenerate = score == 0.0;
    if degenerate {
        log::warn!("matching pursuit on all-zero residuals; picked atom {index}");
    }
    Ok(AtomSelection { index, score, degenerate })
}

/// Least-squares `F_BB = F_RF^† F_CR`.
///
/// A rank-deficient `F_RF` yields the minimum-norm solution with singular
/// values below `1e-10·σ_max` discarded.
pub fn ls_baseband(f_rf: &CMat, f_cr: &CMat) -> Result<CMat> {
    if f_rf.nrows() != f_cr.nrows() {
        return Err(Error::shape("ls_baseband", f_rf.nrows(), f_cr.nrows()));
    }
    let (p, truncated) = linalg::pinv(f_rf, PINV_RTOL)?;
    if truncated {
        log::warn!("analog beamformer is rank deficient; using minimum-norm baseband");
    }
    Ok(p * f_cr)
}

/// Scales `F_BB` so that `‖F_RF·F_BB‖_F = √N_S`.
pub fn normalize_baseband(f_rf: &CMat, f_bb: &CMat, num_streams: usize) -> Result<CMat> {
    if f_rf.ncols() != f_bb.nrows() {
        return Err(Error::shape("normalize_baseband", f_rf.ncols(), f_bb.nrows()));
    }
    let norm = (f_rf * f_bb).norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm("normalize_baseband"));
    }
    Ok(f_bb * Complex64::new((num_streams as f64).sqrt() / norm, 0.0))
}

/// Stacked auxiliary update: `Π̄ = U·I_{K×MN_S}·V^H` from the SVD of
/// `F_R^H·(F_RF·F̄_BB − ε·F̄_opt) / (1−ε)`.
///
/// At `ε = 1` the auxiliary matrix has no effect and `previous` is returned.
pub fn update_pi(
    f_r: &CMat,
    f_rf: &CMat,
    f_bb_stack: &CMat,
    f_opt_stack: &CMat,
    epsilon: f64,
    previous: &CMat,
) -> Result<CMat> {
    if epsilon >= 1.0 {
        return Ok(previous.clone());
    }
    if !(epsilon >= 0.0) {
        return Err(Error::invalid(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    if f_rf.ncols() != f_bb_stack.nrows() {
        return Err(Error::shape("update_pi (F_RF·F̄_BB)", f_rf.ncols(), f_bb_stack.nrows()));
    }
    if f_opt_stack.shape() != (f_rf.nrows(), f_bb_stack.ncols()) {
        return Err(Error::shape(
            "update_pi (F̄_opt)",
            format!("{}x{}", f_rf.nrows(), f_bb_stack.ncols()),
            format!("{}x{}", f_opt_stack.nrows(), f_opt_stack.ncols()),
        ));
    }
    if f_r.nrows() != f_rf.nrows() {
        return Err(Error::shape("update_pi (F_R)", f_rf.nrows(), f_r.nrows()));
    }
    if f_r.ncols() > f_bb_stack.ncols() {
        return Err(Error::invalid("update_pi needs K <= M·N_S"));
    }
    let hybrid = f_rf * f_bb_stack;
    let target = if epsilon == 0.0 {
        hybrid
    } else {
        (hybrid - f_opt_stack * Complex64::new(epsilon, 0.0)).unscale(1.0 - epsilon)
    };
    linalg::polar_factor(&(f_r.adjoint() * target))
}

fn wrap_phase(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI { PI } else { w }
}

/// Subcarrier-dependent analog surrogate with entries
/// `exp(j·η·∠[F_RF]_{i,j}) / √N_T`.
pub fn sd_analog(f_rf: &CMat, eta: f64, phase_reference: PhaseReference) -> Result<CMat> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("eta must be positive, got {eta}")));
    }
    if f_rf.iter().any(|z| z.norm() == 0.0) {
        return Err(Error::invalid("analog beamformer has zero entries; phase undefined"));
    }
    let n_t = f_rf.nrows();
    let amp = 1.0 / (n_t as f64).sqrt();
    let mut out = CMat::zeros(n_t, f_rf.ncols());
    for j in 0..f_rf.ncols() {
        let mut prev_raw = 0.0;
        let mut phase = 0.0;
        for i in 0..n_t {
            let raw = f_rf[(i, j)].arg();
            phase = match phase_reference {
                PhaseReference::Wrapped => raw,
                PhaseReference::Unwrapped if i == 0 => raw,
                PhaseReference::Unwrapped => phase + wrap_phase(raw - prev_raw),
            };
            prev_raw = raw;
            out[(i, j)] = Complex64::from_polar(amp, eta * phase);
        }
    }
    Ok(out)
}

/// Unnormalized BSA baseband `F_RF^†·F̆_RF·F_BB`.
pub fn bsa_baseband(f_rf: &CMat, f_rf_sd: &CMat, f_bb: &CMat) -> Result<CMat> {
    if f_rf.shape() != f_rf_sd.shape() {
        return Err(Error::shape(
            "bsa_baseband",
            format!("{}x{}", f_rf.nrows(), f_rf.ncols()),
            format!("{}x{}", f_rf_sd.nrows(), f_rf_sd.ncols()),
        ));
    }
    if f_rf.ncols() != f_bb.nrows() {
        return Err(Error::shape("bsa_baseband (F̆_RF·F_BB)", f_rf.ncols(), f_bb.nrows()));
    }
    ls_baseband(f_rf, &(f_rf_sd * f_bb))
}

/// Per-subcarrier auxiliary block `Π[m] = √M·Π̄_m` of a stacked `K × M·N_S`
/// matrix. The blocks then satisfy `(1/M)·Σ_m Π[m]Π[m]^H = I_K`, so the radar
/// term carries unit-orthonormal weight per subcarrier on average.
pub fn subcarrier_auxiliary(stack: &CMat, m: usize, num_streams: usize) -> CMat {
    let count = stack.ncols() / num_streams;
    stack.columns(m * num_streams, num_streams).into_owned()
        * Complex64::new((count as f64).sqrt(), 0.0)
}

fn check_finite(label: &str, mats: &[CMat]) -> Result<()> {
    for (m, a) in mats.iter().enumerate() {
        if !linalg::is_finite(a) {
            return Err(Error::NonFinite(format!("{label} at subcarrier {m}")));
        }
    }
    Ok(())
}

/// Full hybrid design for one channel draw.
///
/// `f_opt` holds the communications-only precoder per subcarrier, `f_r`
/// the radar-only precoder and `etas` the ratios `f_c / f_m`.
pub fn design_hybrid(
    dictionary: &Dictionary,
    f_opt: &[CMat],
    f_r: &CMat,
    tradeoff: &TradeoffConfig,
    etas: &[f64],
    options: &DesignOptions,
) -> Result<HybridDesign> {
    let n_t = dictionary.atoms.nrows();
    let m_count = f_opt.len();
    let n_s = tradeoff.num_streams;
    let eps = tradeoff.epsilon;
    tradeoff.validate(n_t)?;
    if dictionary.is_empty() {
        return Err(Error::invalid("empty dictionary"));
    }
    if m_count == 0 || etas.len() != m_count {
        return Err(Error::shape("design_hybrid (subcarriers)", m_count, etas.len()));
    }
    if let Some(f) = f_opt.iter().find(|f| f.shape() != (n_t, n_s)) {
        return Err(Error::shape(
            "design_hybrid (F_opt)",
            format!("{n_t}x{n_s}"),
            format!("{}x{}", f.nrows(), f.ncols()),
        ));
    }
    if f_r.shape() != (n_t, tradeoff.num_targets) {
        return Err(Error::shape(
            "design_hybrid (F_R)",
            format!("{n_t}x{}", tradeoff.num_targets),
            format!("{}x{}", f_r.nrows(), f_r.ncols()),
        ));
    }
    if tradeoff.num_rf_chains > dictionary.len() {
        return Err(Error::invalid("dictionary has fewer atoms than RF chains"));
    }
    check_finite("F_opt", f_opt)?;

    let f_opt_stack = linalg::hstack(f_opt)?;
    let mut pi = linalg::polar_factor(&(f_r.adjoint() * &f_opt_stack))?;
    let jrc_all = |pi: &CMat| -> Result<Vec<CMat>> {
        (0..m_count)
            .map(|m| jrc_beamformer(&f_opt[m], f_r, &subcarrier_auxiliary(pi, m, n_s), eps))
            .collect()
    };
    let mut f_cr = jrc_all(&pi)?;
    let mut residuals = f_cr.clone();

    let mut selected = Vec::with_capacity(tradeoff.num_rf_chains);
    let mut f_rf = CMat::zeros(n_t, 0);
    let mut f_bb: Vec<CMat> = Vec::new();
    let mut history = Vec::new();

    // one baseband/Π/F_CR pass; returns the fit residual before the Π update
    let sweep = |f_rf: &CMat, f_cr: &mut Vec<CMat>, pi: &mut CMat| -> Result<(Vec<CMat>, f64)> {
        let bb = f_cr.iter().map(|t| ls_baseband(f_rf, t)).collect::<Result<Vec<_>>>()?;
        let fit: f64 = f_cr.iter().zip(&bb).map(|(t, b)| (t - f_rf * b).norm()).sum();
        if eps < 1.0 {
            *pi = update_pi(f_r, f_rf, &linalg::hstack(&bb)?, &f_opt_stack, eps, pi)?;
            *f_cr = jrc_all(pi)?;
        }
        check_finite("baseband", &bb)?;
        check_finite("JRC target", f_cr)?;
        if !fit.is_finite() {
            return Err(Error::NonFinite("fit residual".into()));
        }
        Ok((bb, fit))
    };

    for _ in 0..tradeoff.num_rf_chains {
        let pick = omp_select_excluding(dictionary, &residuals, &selected)?;
        if pick.degenerate {
            if selected.is_empty() {
                return Err(Error::ZeroNorm("design_hybrid: JRC target is zero"));
            }
            break;
        }
        selected.push(pick.index);
        f_rf = linalg::hstack(&[f_rf, dictionary.atoms.columns(pick.index, 1).into_owned()])?;

        let (bb, fit) = sweep(&f_rf, &mut f_cr, &mut pi)?;
        history.push(fit);
        residuals = f_cr
            .iter()
            .zip(&bb)
            .map(|(t, b)| {
                let r = t - &f_rf * b;
                let n = r.norm();
                if n > 0.0 { r.unscale(n) } else { r }
            })
            .collect();
        f_bb = bb;
        if residuals.iter().all(|r| r.norm() == 0.0) {
            break;
        }
    }
    if selected.len() < tradeoff.num_rf_chains {
        log::warn!(
            "matching pursuit stopped after {} of {} atoms",
            selected.len(),
            tradeoff.num_rf_chains
        );
    }
    for _ in 0..options.extra_sweeps {
        let (bb, fit) = sweep(&f_rf, &mut f_cr, &mut pi)?;
        history.push(fit);
        f_bb = bb;
    }

    let baseband = f_bb
        .iter()
        .map(|b| normalize_baseband(&f_rf, b, n_s))
        .collect::<Result<Vec<_>>>()?;
    let sd = etas
        .iter()
        .map(|&eta| sd_analog(&f_rf, eta, options.phase_reference))
        .collect::<Result<Vec<_>>>()?;
    let bsa = sd
        .iter()
        .zip(&baseband)
        .map(|(s, b)| normalize_baseband(&f_rf, &bsa_baseband(&f_rf, s, b)?, n_s))
        .collect::<Result<Vec<_>>>()?;
    check_finite("BSA baseband", &bsa)?;

    Ok(HybridDesign {
        analog: f_rf,
        baseband,
        bsa_baseband: bsa,
        sd_analog: sd,
        auxiliary: pi,
        jrc_target: f_cr,
        selected_atoms: selected,
        residual_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{build_dictionary, steering_vector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rnd(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
        CMat::from_fn(r, c, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn arr(n: usize) -> ArrayConfig {
        ArrayConfig::half_wavelength(n, 300e9).unwrap()
    }

    #[test]
    fn tradeoff_validation() {
        let ok = TradeoffConfig { epsilon: 0.5, num_rf_chains: 4, num_streams: 2, num_targets: 2 };
        assert!(ok.validate(8).is_ok());
        assert!(ok.validate(3).is_err());
        assert!(TradeoffConfig { epsilon: 1.2, ..ok }.validate(8).is_err());
        assert!(TradeoffConfig { num_targets: 3, ..ok }.validate(8).is_err());
    }

    #[test]
    fn radar_beamformer_columns() {
        let c = arr(16);
        let t = SteeringParams::new(0.0, 10.0).unwrap();
        let fr = radar_beamformer(&[t], &c, WavefrontModel::NearField).unwrap();
        assert_eq!(fr.column(0), steering_vector(&c, &t, 300e9).unwrap().column(0));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let targets: Vec<_> = (0..3)
            .map(|_| SteeringParams::new(rng.gen_range(-0.9..0.9), rng.gen_range(1.0..20.0)).unwrap())
            .collect();
        let fr = radar_beamformer(&targets, &c, WavefrontModel::NearField).unwrap();
        for (k, t) in targets.iter().enumerate() {
            let col = steering_vector(&c, t, 300e9).unwrap();
            assert!((fr.column(k) - col).camax() < 1e-12);
            assert!((fr.column(k).norm() - 1.0).abs() < 1e-12);
        }
        assert!(radar_beamformer(&[], &c, WavefrontModel::NearField).is_err());
    }

    #[test]
    fn jrc_endpoints_and_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (fo, fr, pi) = (rnd(&mut rng, 6, 2), rnd(&mut rng, 6, 2), rnd(&mut rng, 2, 2));
        assert_eq!(jrc_beamformer(&fo, &fr, &pi, 1.0).unwrap(), fo);
        assert_eq!(jrc_beamformer(&fo, &fr, &pi, 0.0).unwrap(), &fr * &pi);
        let mid = jrc_beamformer(&fo, &fr, &pi, 0.5).unwrap();
        let frpi = &fr * &pi;
        for i in 0..6 {
            for j in 0..2 {
                assert!((mid[(i, j)] - (fo[(i, j)] * 0.5 + frpi[(i, j)] * 0.5)).norm() < 1e-12);
            }
        }
        assert!(jrc_beamformer(&fo, &fr, &rnd(&mut rng, 3, 2), 0.5).is_err());
    }

    fn dict(n_t: usize, n_dir: usize, n_r: usize) -> Dictionary {
        let c = arr(n_t);
        build_dictionary(&c, n_dir, n_r, (0.01, 0.05)).unwrap()
    }

    #[test]
    fn omp_picks_matching_atom() {
        let d = dict(8, 9, 3);
        let residual = d.atoms.columns(13, 1) * rnd(&mut ChaCha8Rng::seed_from_u64(1), 1, 3);
        let pick = omp_select(&d, std::slice::from_ref(&residual)).unwrap();
        assert_eq!(pick.index, 13);
        let scaled = residual * Complex64::new(-4.0, 2.5);
        assert_eq!(omp_select(&d, &[scaled]).unwrap().index, 13);
    }

    #[test]
    fn omp_brute_force_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let d = dict(4, 4, 2);
        assert_eq!(d.len(), 8);
        for _ in 0..50 {
            let res: Vec<CMat> = (0..3).map(|_| rnd(&mut rng, 4, 2)).collect();
            let mut best = (0, -1.0);
            for p in 0..8 {
                let mut s = 0.0;
                for r in &res {
                    for j in 0..2 {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for i in 0..4 {
                            acc += d.atoms[(i, p)].conj() * r[(i, j)];
                        }
                        s += acc.norm_sqr();
                    }
                }
                if s > best.1 {
                    best = (p, s);
                }
            }
            assert_eq!(omp_select(&d, &res).unwrap().index, best.0);
        }
    }

    #[test]
    fn omp_zero_residual_and_exclusion() {
        let d = dict(4, 4, 2);
        let pick = omp_select(&d, &[CMat::zeros(4, 2)]).unwrap();
        assert!(pick.degenerate);
        assert_eq!(pick.index, 0);
        let pick = omp_select_excluding(&d, &[CMat::zeros(4, 2)], &[0, 1]).unwrap();
        assert_eq!(pick.index, 2);
        let res = d.atoms.columns(5, 1).into_owned();
        assert_ne!(omp_select_excluding(&d, &[res], &[5]).unwrap().index, 5);
    }

    #[test]
    fn ls_baseband_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        // orthonormal columns: plain projection
        let q = linalg::polar_factor(&rnd(&mut rng, 8, 3)).unwrap();
        let target = rnd(&mut rng, 8, 2);
        let bb = ls_baseband(&q, &target).unwrap();
        assert!(linalg::max_abs_diff(&bb, &(q.adjoint() * &target)) < 1e-12);

        let frf = rnd(&mut rng, 8, 4);
        let inside = &frf * rnd(&mut rng, 4, 2);
        let bb = ls_baseband(&frf, &inside).unwrap();
        assert!((&frf * bb - inside).norm() <= 1e-10);

        let fcr = rnd(&mut rng, 8, 4);
        let bb = ls_baseband(&frf, &fcr).unwrap();
        let normal = (frf.adjoint() * &frf).try_inverse().unwrap() * frf.adjoint() * &fcr;
        assert!(linalg::max_abs_diff(&bb, &normal) < 1e-10);

        assert!(ls_baseband(&frf, &rnd(&mut rng, 5, 2)).is_err());
    }

    #[test]
    fn normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (frf, bb) = (rnd(&mut rng, 8, 4), rnd(&mut rng, 4, 3));
        let n = normalize_baseband(&frf, &bb, 3).unwrap();
        assert!(((&frf * &n).norm() - 3f64.sqrt()).abs() < 1e-12);
        let again = normalize_baseband(&frf, &n, 3).unwrap();
        assert!(linalg::max_abs_diff(&again, &n) < 1e-12);
        let seven = normalize_baseband(&frf, &(bb * Complex64::new(7.0, 0.0)), 3).unwrap();
        assert!(linalg::max_abs_diff(&seven, &n) < 1e-12);
        assert!(normalize_baseband(&frf, &CMat::zeros(4, 3), 3).is_err());
    }

    fn pi_objective(fr: &CMat, frf: &CMat, bb: &CMat, fo: &CMat, eps: f64, pi: &CMat) -> f64 {
        let c = |x: f64| Complex64::new(x, 0.0);
        (frf * bb - fo * c(eps) - (fr * pi) * c(1.0 - eps)).norm()
    }

    #[test]
    fn update_pi_is_row_orthonormal_and_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let (k, cols) = (2, 6);
        let fr = rnd(&mut rng, 8, k);
        let frf = rnd(&mut rng, 8, 3);
        let bb = rnd(&mut rng, 3, cols);
        let fo = rnd(&mut rng, 8, cols);
        let prev = CMat::identity(k, cols);
        let pi = update_pi(&fr, &frf, &bb, &fo, 0.5, &prev).unwrap();
        let gram = &pi * pi.adjoint();
        assert!(linalg::max_abs_diff(&gram, &CMat::identity(k, k)) < 1e-10);

        let best = pi_objective(&fr, &frf, &bb, &fo, 0.5, &pi);
        for _ in 0..1000 {
            let sample = linalg::polar_factor(&rnd(&mut rng, k, cols)).unwrap();
            assert!(best <= pi_objective(&fr, &frf, &bb, &fo, 0.5, &sample) + 1e-12);
        }
        assert_eq!(update_pi(&fr, &frf, &bb, &fo, 1.0, &prev).unwrap(), prev);
    }

    #[test]
    fn update_pi_fixed_point() {
        // F_R^H·T already row-orthonormal: ε = 0, F_R unitary, F_RF·F̄_BB = F_R·Q
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let fr = linalg::polar_factor(&rnd(&mut rng, 4, 4)).unwrap();
        let q = linalg::polar_factor(&rnd(&mut rng, 4, 8)).unwrap();
        let frf = CMat::identity(4, 4);
        let bb = &fr * &q;
        let pi = update_pi(&fr, &frf, &bb, &CMat::zeros(4, 8), 0.0, &CMat::zeros(4, 8)).unwrap();
        assert!(linalg::max_abs_diff(&pi, &q) < 1e-10);
    }

    #[test]
    fn subcarrier_blocks_average_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let pi = linalg::polar_factor(&rnd(&mut rng, 2, 10)).unwrap();
        let mut acc = CMat::zeros(2, 2);
        for m in 0..5 {
            let b = subcarrier_auxiliary(&pi, m, 2);
            assert_eq!(b.shape(), (2, 2));
            acc += &b * b.adjoint();
        }
        assert!(linalg::max_abs_diff(&acc.unscale(5.0), &CMat::identity(2, 2)) < 1e-12);
        // a single subcarrier is left as is
        let one = linalg::polar_factor(&rnd(&mut rng, 2, 3)).unwrap();
        assert_eq!(subcarrier_auxiliary(&one, 0, 3), one);
    }

    #[test]
    fn sd_analog_examples() {
        let d = dict(8, 5, 2);
        let frf = d.atoms.columns(0, 3).into_owned();
        for mode in [PhaseReference::Wrapped, PhaseReference::Unwrapped] {
            let same = sd_analog(&frf, 1.0, mode).unwrap();
            assert!(linalg::max_abs_diff(&same, &frf) < 1e-15);
            let out = sd_analog(&frf, 1.04, mode).unwrap();
            assert!(out.iter().all(|z| (z.norm() - 1.0 / 8f64.sqrt()).abs() < 1e-15));
        }
        let a = Complex64::from_polar(0.5, PI / 4.0);
        let single = CMat::from_element(1, 1, a);
        let out = sd_analog(&single, 2.0, PhaseReference::Wrapped).unwrap();
        assert!((out[(0, 0)].arg() - PI / 2.0).abs() < 1e-15);
        let mut holed = frf.clone();
        holed[(2, 1)] = Complex64::new(0.0, 0.0);
        assert!(sd_analog(&holed, 1.1, PhaseReference::Unwrapped).is_err());
    }

    #[test]
    fn unwrapped_surrogate_tracks_scaled_frequency() {
        // unwrapped phases scale exactly: the surrogate of an atom built at f_c
        // is the same atom built at η·f_c
        let c = arr(32);
        let p = SteeringParams::new(0.7, 0.05).unwrap();
        let atom = steering_vector(&c, &p, 300e9).unwrap();
        let frf = CMat::from_column_slice(32, 1, atom.as_slice());
        let sd = sd_analog(&frf, 1.03, PhaseReference::Unwrapped).unwrap();
        let expect = steering_vector(&c, &p, 300e9 * 1.03).unwrap();
        assert!((sd.column(0) - &expect).camax() < 1e-10);
        let wrapped = sd_analog(&frf, 1.03, PhaseReference::Wrapped).unwrap();
        assert!((wrapped.column(0) - &expect).camax() > 1e-3);
    }

    #[test]
    fn bsa_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let d = dict(16, 12, 3);
        let cols: Vec<CMat> = [3, 10, 20, 30].iter().map(|&p| d.atoms.columns(p, 1).into_owned()).collect();
        let frf = linalg::hstack(&cols).unwrap();
        let bb = normalize_baseband(&frf, &rnd(&mut rng, 4, 2), 2).unwrap();
        let same = bsa_baseband(&frf, &frf, &bb).unwrap();
        assert!(linalg::max_abs_diff(&same, &bb) < 1e-10);

        let sd = sd_analog(&frf, 0.97, PhaseReference::Unwrapped).unwrap();
        let bsa = bsa_baseband(&frf, &sd, &bb).unwrap();
        let goal = &sd * &bb;
        assert!((&frf * &bsa - &goal).norm() <= (&frf * &bb - &goal).norm() + 1e-12);

        // square, invertible analog beamformer reproduces the surrogate exactly
        let c = arr(6);
        // φ = ±1 alias at half-wavelength spacing, so use interior directions
        let grid = (0..6)
            .map(|k| SteeringParams::new((2.0 * k as f64 - 5.0) / 6.0, 0.02).unwrap())
            .collect();
        let full = Dictionary::from_grid(&c, grid, WavefrontModel::NearField).unwrap();
        let sd = sd_analog(&full.atoms, 1.03, PhaseReference::Unwrapped).unwrap();
        let bb = rnd(&mut rng, 6, 2);
        let bsa = bsa_baseband(&full.atoms, &sd, &bb).unwrap();
        assert!((&full.atoms * bsa - &sd * &bb).norm() < 1e-10);
    }

    fn small_problem(
        seed: u64,
        eps: f64,
        m: usize,
    ) -> (Dictionary, Vec<CMat>, CMat, TradeoffConfig, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = arr(12);
        let d = build_dictionary(&c, 24, 3, (0.005, 0.03)).unwrap();
        let f_opt: Vec<CMat> = (0..m)
            .map(|_| linalg::polar_factor(&rnd(&mut rng, 12, 2)).unwrap())
            .collect();
        let targets = [
            SteeringParams::new(-0.4, 0.01).unwrap(),
            SteeringParams::new(0.5, 0.02).unwrap(),
        ];
        let fr = radar_beamformer(&targets, &c, WavefrontModel::NearField).unwrap();
        let t = TradeoffConfig { epsilon: eps, num_rf_chains: 4, num_streams: 2, num_targets: 2 };
        let etas: Vec<f64> = (0..m).map(|i| 1.0 + 0.01 * (i as f64 - (m as f64 - 1.0) / 2.0)).collect();
        (d, f_opt, fr, t, etas)
    }

    #[test]
    fn design_satisfies_invariants() {
        for eps in [0.0, 0.3, 0.5, 1.0] {
            let (d, fo, fr, t, etas) = small_problem(7, eps, 4);
            let design = design_hybrid(&d, &fo, &fr, &t, &etas, &DesignOptions::default()).unwrap();
            design.check_invariants(2).unwrap();
            assert_eq!(design.selected_atoms.len(), 4);
            let mut uniq = design.selected_atoms.clone();
            uniq.sort_unstable();
            uniq.dedup();
            assert_eq!(uniq.len(), 4);
            assert!(design.residual_history.iter().all(|r| r.is_finite()));
            for m in 0..4 {
                let goal = &design.sd_analog[m] * &design.baseband[m];
                let raw = bsa_baseband(&design.analog, &design.sd_analog[m], &design.baseband[m]).unwrap();
                assert!(
                    (&design.analog * raw - &goal).norm()
                        <= (&design.analog * &design.baseband[m] - &goal).norm() + 1e-12
                );
            }
        }
    }

    #[test]
    fn design_extra_sweeps_keep_invariants() {
        let (d, fo, fr, t, etas) = small_problem(8, 0.5, 3);
        let opts = DesignOptions { extra_sweeps: 3, ..Default::default() };
        let design = design_hybrid(&d, &fo, &fr, &t, &etas, &opts).unwrap();
        assert_eq!(design.residual_history.len(), 4 + 3);
        design.check_invariants(2).unwrap();
    }

    #[test]
    fn design_single_atom_matches_brute_force() {
        let c = arr(12);
        let d = build_dictionary(&c, 24, 3, (0.005, 0.03)).unwrap();
        let atom = d.atoms.columns(31, 1).into_owned();
        let f_opt = vec![atom.clone()];
        let fr = atom.clone();
        let t = TradeoffConfig { epsilon: 1.0, num_rf_chains: 1, num_streams: 1, num_targets: 1 };
        let design = design_hybrid(&d, &f_opt, &fr, &t, &[1.0], &DesignOptions::default()).unwrap();
        assert_eq!(design.selected_atoms, vec![31]);
        let fit = |p: usize| {
            let a = d.atoms.columns(p, 1).into_owned();
            let bb = ls_baseband(&a, &f_opt[0]).unwrap();
            (&a * bb - &f_opt[0]).norm()
        };
        let chosen = fit(31);
        assert!((0..d.len()).filter(|&p| p != 31).all(|p| chosen < fit(p)));
    }

    #[test]
    fn design_full_rank_reproduces_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let c = arr(6);
        let d = build_dictionary(&c, 12, 2, (0.01, 0.02)).unwrap();
        let f_opt = vec![linalg::polar_factor(&rnd(&mut rng, 6, 2)).unwrap()];
        let fr = d.atoms.columns(0, 2).into_owned();
        let t = TradeoffConfig { epsilon: 1.0, num_rf_chains: 6, num_streams: 2, num_targets: 2 };
        let design = design_hybrid(&d, &f_opt, &fr, &t, &[1.0], &DesignOptions::default()).unwrap();
        let err = (&design.analog * &design.baseband[0] - &f_opt[0]).norm();
        assert!(err <= 1e-6, "err {err}");
    }

    #[test]
    fn nested_least_squares_residual_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let d = dict(16, 20, 2);
        let target: Vec<CMat> = (0..3).map(|_| rnd(&mut rng, 16, 2)).collect();
        let mut frf = CMat::zeros(16, 0);
        let mut last = f64::INFINITY;
        for p in [3, 17, 22, 5, 38] {
            frf = linalg::hstack(&[frf, d.atoms.columns(p, 1).into_owned()]).unwrap();
            let fit: f64 = target
                .iter()
                .map(|t| (t - &frf * ls_baseband(&frf, t).unwrap()).norm())
                .sum();
            assert!(fit <= last + 1e-12);
            last = fit;
        }
    }

    #[test]
    fn design_rejects_bad_shapes() {
        let (d, fo, fr, t, etas) = small_problem(9, 0.5, 2);
        assert!(design_hybrid(&d, &fo, &fr, &t, &etas[..1], &DesignOptions::default()).is_err());
        let bad = TradeoffConfig { num_targets: 3, num_streams: 3, ..t };
        assert!(design_hybrid(&d, &fo, &fr, &bad, &etas, &DesignOptions::default()).is_err());
        let mut nan = fo.clone();
        nan[0][(0, 0)] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(
            design_hybrid(&d, &nan, &fr, &t, &etas, &DesignOptions::default()),
            Err(Error::NonFinite(_))
        ));
    }
}
