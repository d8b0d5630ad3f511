//! Near-field uniform linear array geometry.
//!
//! Element `n` (1-based) sits at `(n-1)·d` along the array axis. A source is
//! described by its sine-direction `φ ∈ [-1, 1]` and its range `r` from the
//! first element. Steering vectors follow the Fresnel phase law
//!
//! ```text
//! [a(φ, r; f)]_n = exp(j·2π·f/c0·((n-1)·d·φ − (n-1)²·d²·ζ)) / √N,   ζ = (1 − φ²) / (2r)
//! ```
//!
//! with the common factor `exp(−j·2π·f/c0·r)` dropped.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub num_elements: usize,
    /// Element spacing in meters.
    pub spacing: f64,
    /// Carrier frequency in Hz.
    pub carrier_frequency: f64,
    pub speed_of_light: f64,
}

impl ArrayConfig {
    /// Half-wavelength ULA at the given carrier.
    pub fn half_wavelength(num_elements: usize, carrier_frequency: f64) -> Result<Self> {
        if carrier_frequency <= 0.0 || !carrier_frequency.is_finite() {
            return Err(Error::invalid(format!(
                "carrier frequency must be positive, got {carrier_frequency}"
            )));
        }
        Self::new(
            num_elements,
            SPEED_OF_LIGHT / (2.0 * carrier_frequency),
            carrier_frequency,
        )
    }

    pub fn new(num_elements: usize, spacing: f64, carrier_frequency: f64) -> Result<Self> {
        let cfg = ArrayConfig {
            num_elements,
            spacing,
            carrier_frequency,
            speed_of_light: SPEED_OF_LIGHT,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_elements < 2 {
            return Err(Error::invalid(format!(
                "array needs at least 2 elements, got {}",
                self.num_elements
            )));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::invalid(format!("spacing must be positive, got {}", self.spacing)));
        }
        if !(self.carrier_frequency > 0.0 && self.carrier_frequency.is_finite()) {
            return Err(Error::invalid(format!(
                "carrier frequency must be positive, got {}",
                self.carrier_frequency
            )));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        self.speed_of_light / self.carrier_frequency
    }

    pub fn aperture(&self) -> f64 {
        aperture(self)
    }

    /// Fraunhofer distance `2D²/λ` for this array at its carrier.
    pub fn fraunhofer_distance(&self) -> f64 {
        2.0 * self.aperture().powi(2) / self.wavelength()
    }
}

/// A point source seen from the array: sine-direction and range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringParams {
    direction: f64,
    range: f64,
}

impl SteeringParams {
    pub fn new(direction: f64, range: f64) -> Result<Self> {
        if !direction.is_finite() || direction.abs() > 1.0 {
            return Err(Error::invalid(format!("direction must lie in [-1, 1], got {direction}")));
        }
        if !(range > 0.0 && range.is_finite()) {
            return Err(Error::invalid(format!("range must be positive, got {range}")));
        }
        Ok(SteeringParams { direction, range })
    }

    pub fn direction(&self) -> f64 {
        self.direction
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    /// Fresnel curvature coefficient `(1 − φ²) / (2r)`.
    pub fn zeta(&self) -> f64 {
        (1.0 - self.direction * self.direction) / (2.0 * self.range)
    }
}

/// Which wavefront model a steering construction uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavefrontModel {
    NearField,
    FarField,
}

pub fn aperture(cfg: &ArrayConfig) -> f64 {
    (cfg.num_elements as f64 - 1.0) * cfg.spacing
}

pub fn fraunhofer_distance(aperture: f64, wavelength: f64) -> Result<f64> {
    if !(aperture > 0.0) || !(wavelength > 0.0) {
        return Err(Error::invalid(format!(
            "aperture and wavelength must be positive, got {aperture} and {wavelength}"
        )));
    }
    Ok(2.0 * aperture * aperture / wavelength)
}

fn element_offset(element_index: usize, spacing: f64) -> Result<f64> {
    if element_index == 0 {
        return Err(Error::invalid("element index is 1-based"));
    }
    Ok((element_index as f64 - 1.0) * spacing)
}

/// Exact distance from the source to element `n` (1-based).
pub fn element_range(params: &SteeringParams, element_index: usize, spacing: f64) -> Result<f64> {
    let x = element_offset(element_index, spacing)?;
    let r = params.range;
    Ok((r * r + x * x - 2.0 * r * x * params.direction).sqrt())
}

/// Second-order (Fresnel) expansion of [`element_range`].
pub fn element_range_fresnel(
    params: &SteeringParams,
    element_index: usize,
    spacing: f64,
) -> Result<f64> {
    let x = element_offset(element_index, spacing)?;
    Ok(params.range - x * params.direction + x * x * params.zeta())
}

fn check_frequency(frequency: f64) -> Result<()> {
    if !(frequency > 0.0 && frequency.is_finite()) {
        return Err(Error::invalid(format!("frequency must be positive, got {frequency}")));
    }
    Ok(())
}

fn fresnel_vector(cfg: &ArrayConfig, direction: f64, zeta: f64, frequency: f64) -> CVec {
    let n = cfg.num_elements;
    let k = 2.0 * PI * frequency / cfg.speed_of_light;
    let amp = 1.0 / (n as f64).sqrt();
    CVec::from_fn(n, |i, _| {
        let x = i as f64 * cfg.spacing;
        let phase = k * (x * direction - x * x * zeta);
        Complex64::from_polar(amp, phase)
    })
}

/// Unit-norm near-field steering vector at `frequency`.
pub fn steering_vector(cfg: &ArrayConfig, params: &SteeringParams, frequency: f64) -> Result<CVec> {
    check_frequency(frequency)?;
    Ok(fresnel_vector(cfg, params.direction, params.zeta(), frequency))
}

/// Plane-wave steering vector (the quadratic term dropped).
pub fn far_field_steering(cfg: &ArrayConfig, direction: f64, frequency: f64) -> Result<CVec> {
    check_frequency(frequency)?;
    if !direction.is_finite() || direction.abs() > 1.0 {
        return Err(Error::invalid(format!("direction must lie in [-1, 1], got {direction}")));
    }
    Ok(fresnel_vector(cfg, direction, 0.0, frequency))
}

/// Steering vector under the given wavefront model.
pub fn steer(
    cfg: &ArrayConfig,
    params: &SteeringParams,
    frequency: f64,
    model: WavefrontModel,
) -> Result<CVec> {
    match model {
        WavefrontModel::NearField => steering_vector(cfg, params, frequency),
        WavefrontModel::FarField => far_field_steering(cfg, params.direction, frequency),
    }
}

/// Result of mapping a physical location to the location the beam focuses
/// on at another subcarrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquintedLocation {
    pub params: SteeringParams,
    /// Set when `η·|φ|` exceeded 1 and the direction was clamped.
    pub clamped: bool,
}

/// Beam-squint mapping for `η = f_c / f_m`:
/// `φ̄ = η·φ`, `r̄ = (1 − η²φ²) / (η(1 − φ²)) · r`.
pub fn squint_map(params: &SteeringParams, eta: f64) -> Result<SquintedLocation> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("eta must be positive, got {eta}")));
    }
    let phi = params.direction;
    if phi.abs() >= 1.0 {
        return Err(Error::DegenerateGeometry(format!(
            "range mapping is singular at |direction| = 1 (direction {phi})"
        )));
    }
    if eta == 1.0 {
        return Ok(SquintedLocation { params: *params, clamped: false });
    }
    let direction = eta * phi;
    if direction.abs() > 1.0 {
        // the curvature term vanishes at |φ̄| = 1, so the range is immaterial
        log::warn!("squinted direction {direction} clamped to unit magnitude");
        return Ok(SquintedLocation {
            params: SteeringParams { direction: direction.signum(), range: params.range },
            clamped: true,
        });
    }
    let range = (1.0 - eta * eta * phi * phi) / (eta * (1.0 - phi * phi)) * params.range;
    if !(range > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "squinted range {range} is not positive (eta {eta}, direction {phi})"
        )));
    }
    Ok(SquintedLocation {
        params: SteeringParams { direction, range },
        clamped: false,
    })
}

/// `(Δφ, Δr) = (φ̄ − φ, r̄ − r)`.
pub fn squint_deviation(params: &SteeringParams, eta: f64) -> Result<(f64, f64)> {
    let mapped = squint_map(params, eta)?;
    Ok((
        (eta - 1.0) * params.direction,
        mapped.params.range - params.range,
    ))
}

/// Response of the array toward a physical location at subcarrier ratio
/// `eta`, expressed in the carrier-referenced beamspace: the steering vector
/// at the squinted location, built at `f_c`.
///
/// At `|φ| = 1` the curvature term vanishes for every `η`, so the far-field
/// vector at the clamped direction `η·φ` is returned instead of going
/// through the singular range mapping.
pub fn squinted_steering(
    cfg: &ArrayConfig,
    params: &SteeringParams,
    eta: f64,
    model: WavefrontModel,
) -> Result<CVec> {
    let fc = cfg.carrier_frequency;
    if params.direction.abs() >= 1.0 {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be positive, got {eta}")));
        }
        return far_field_steering(cfg, (eta * params.direction).clamp(-1.0, 1.0), fc);
    }
    let mapped = squint_map(params, eta)?;
    steer(cfg, &mapped.params, fc, model)
}

/// Grid of candidate analog beamformer columns.
#[derive(Debug, Clone)]
pub struct Dictionary {
    pub atoms: CMat,
    pub grid: Vec<SteeringParams>,
}

impl Dictionary {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Builds one atom per grid point at the carrier frequency.
    pub fn from_grid(cfg: &ArrayConfig, grid: Vec<SteeringParams>, model: WavefrontModel) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::invalid("dictionary grid is empty"));
        }
        let mut atoms = CMat::zeros(cfg.num_elements, grid.len());
        for (j, p) in grid.iter().enumerate() {
            atoms.set_column(j, &steer(cfg, p, cfg.carrier_frequency, model)?);
        }
        Ok(Dictionary { atoms, grid })
    }
}

/// `n` points spread uniformly over `[lo, hi]`; a single point sits at the
/// midpoint.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Near-field dictionary over `n_directions` sine-directions in `[-1, 1]`
/// and `n_ranges` ranges in `[r_min, r_max]`, direction-major.
pub fn build_dictionary(
    cfg: &ArrayConfig,
    n_directions: usize,
    n_ranges: usize,
    range_interval: (f64, f64),
) -> Result<Dictionary> {
    let (r_min, r_max) = range_interval;
    if n_directions == 0 || n_ranges == 0 {
        return Err(Error::invalid("dictionary grid is empty"));
    }
    if !(r_min > 0.0 && r_min <= r_max && r_max.is_finite()) {
        return Err(Error::invalid(format!(
            "dictionary range interval must satisfy 0 < r_min <= r_max, got ({r_min}, {r_max})"
        )));
    }
    let ranges = uniform_grid(r_min, r_max, n_ranges);
    let mut grid = Vec::with_capacity(n_directions * n_ranges);
    for phi in uniform_grid(-1.0, 1.0, n_directions) {
        for &r in &ranges {
            grid.push(SteeringParams::new(phi, r)?);
        }
    }
    Dictionary::from_grid(cfg, grid, WavefrontModel::NearField)
}

/// Plane-wave dictionary over `n_directions` sine-directions. The range of
/// each grid entry is nominal (`reference_range`) since the atoms ignore it.
pub fn build_far_field_dictionary(
    cfg: &ArrayConfig,
    n_directions: usize,
    reference_range: f64,
) -> Result<Dictionary> {
    if n_directions == 0 {
        return Err(Error::invalid("dictionary grid is empty"));
    }
    let grid = uniform_grid(-1.0, 1.0, n_directions)
        .into_iter()
        .map(|phi| SteeringParams::new(phi, reference_range))
        .collect::<Result<Vec<_>>>()?;
    Dictionary::from_grid(cfg, grid, WavefrontModel::FarField)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MM: f64 = 1e-3;

    fn cfg(n: usize) -> ArrayConfig {
        ArrayConfig::half_wavelength(n, 300e9).unwrap()
    }

    #[test]
    fn aperture_examples() {
        let a = |n| aperture(&ArrayConfig::new(n, 0.5 * MM, 300e9).unwrap());
        assert!((a(2) - 0.5 * MM).abs() < 1e-15);
        assert!((a(256) - 127.5 * MM).abs() < 1e-12);
        assert!((a(128) - 63.5 * MM).abs() < 1e-12);
    }

    #[test]
    fn half_wavelength_spacing() {
        let c = cfg(16);
        assert!((c.spacing - SPEED_OF_LIGHT / 600e9).abs() < 1e-18);
        assert!(ArrayConfig::half_wavelength(1, 300e9).is_err());
    }

    #[test]
    fn fraunhofer_examples() {
        assert!((fraunhofer_distance(0.128, 1e-3).unwrap() - 32.768).abs() < 1e-9);
        assert!((fraunhofer_distance(0.1275, 1e-3).unwrap() - 32.5125).abs() < 1e-9);
        let lam = 1e-3;
        assert!((fraunhofer_distance(lam, lam).unwrap() - 2.0 * lam).abs() < 1e-15);
        assert!(fraunhofer_distance(0.0, 1e-3).is_err());
        assert!(fraunhofer_distance(0.1, -1.0).is_err());
    }

    #[test]
    fn element_range_examples() {
        let d = 0.5 * MM;
        let p = SteeringParams::new(0.3, 7.0).unwrap();
        assert_eq!(element_range(&p, 1, d).unwrap(), 7.0);
        assert_eq!(element_range_fresnel(&p, 1, d).unwrap(), 7.0);

        let broadside = SteeringParams::new(0.0, 10.0).unwrap();
        let exact = element_range(&broadside, 2, d).unwrap();
        assert!((exact - (100.0f64 + 2.5e-7).sqrt()).abs() < 1e-12);
        assert!((exact - 10.000_000_012_5).abs() < 1e-10);
        let fres = element_range_fresnel(&broadside, 2, d).unwrap();
        assert!((fres - (10.0 + d * d / 20.0)).abs() < 1e-12);

        let endfire = SteeringParams::new(1.0, 10.0).unwrap();
        assert!((element_range(&endfire, 2, d).unwrap() - 9.9995).abs() < 1e-12);
        assert!((element_range_fresnel(&endfire, 2, d).unwrap() - 9.9995).abs() < 1e-12);

        assert!(element_range(&p, 0, d).is_err());
    }

    #[test]
    fn steering_params_validation() {
        assert!(SteeringParams::new(1.01, 1.0).is_err());
        assert!(SteeringParams::new(0.0, 0.0).is_err());
        assert!(SteeringParams::new(0.0, -2.0).is_err());
        assert!(SteeringParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn steering_first_element_and_norm() {
        let c = cfg(64);
        let p = SteeringParams::new(-0.4, 0.3).unwrap();
        let a = steering_vector(&c, &p, 301e9).unwrap();
        let amp = 1.0 / 8.0;
        assert!((a[0] - Complex64::new(amp, 0.0)).norm() < 1e-15);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert!(a.iter().all(|z| (z.norm() - amp).abs() < 1e-12));
        assert!(steering_vector(&c, &p, 0.0).is_err());
    }

    #[test]
    fn steering_far_broadside_limit() {
        let c = cfg(32);
        let p = SteeringParams::new(0.0, 1e9).unwrap();
        let a = steering_vector(&c, &p, c.carrier_frequency).unwrap();
        let amp = 1.0 / 32f64.sqrt();
        assert!(a.iter().all(|z| (z - Complex64::new(amp, 0.0)).norm() < 1e-9));
    }

    #[test]
    fn far_field_examples() {
        let c = cfg(32);
        let a = far_field_steering(&c, 0.0, c.carrier_frequency).unwrap();
        let amp = 1.0 / 32f64.sqrt();
        assert!(a.iter().all(|z| (z - Complex64::new(amp, 0.0)).norm() < 1e-15));
        assert!((far_field_steering(&c, 0.7, 290e9).unwrap().norm() - 1.0).abs() < 1e-12);
        // plane-wave limit of the near-field vector
        let r = 1e9 * c.aperture();
        let near = steering_vector(&c, &SteeringParams::new(0.37, r).unwrap(), c.carrier_frequency)
            .unwrap();
        let far = far_field_steering(&c, 0.37, c.carrier_frequency).unwrap();
        assert!((near - far).camax() < 1e-6);
        assert!(far_field_steering(&c, 1.5, c.carrier_frequency).is_err());
    }

    #[test]
    fn squint_map_examples() {
        let p = SteeringParams::new(0.5, 10.0).unwrap();
        assert_eq!(squint_map(&p, 1.0).unwrap().params, p);

        let m = squint_map(&p, 0.96).unwrap();
        assert!((m.params.direction() - 0.48).abs() < 1e-15);
        assert!((m.params.range() - 0.7696 / 0.72 * 10.0).abs() < 1e-12);
        assert!((m.params.range() - 10.6889).abs() < 1e-4);
        assert!(!m.clamped);

        let b = SteeringParams::new(0.0, 10.0).unwrap();
        for eta in [0.9, 0.96, 1.07] {
            let m = squint_map(&b, eta).unwrap();
            assert_eq!(m.params.direction(), 0.0);
            assert!((m.params.range() - 10.0 / eta).abs() < 1e-12);
        }
    }

    #[test]
    fn squint_map_clamps_and_rejects() {
        let p = SteeringParams::new(0.98, 2.0).unwrap();
        let m = squint_map(&p, 1.05).unwrap();
        assert!(m.clamped);
        assert_eq!(m.params.direction(), 1.0);
        assert_eq!(m.params.range(), 2.0);
        let edge = SteeringParams::new(1.0, 2.0).unwrap();
        assert!(matches!(squint_map(&edge, 0.97), Err(Error::DegenerateGeometry(_))));
        assert!(squint_map(&p, 0.0).is_err());
    }

    #[test]
    fn squint_deviation_examples() {
        let p = SteeringParams::new(0.5, 10.0).unwrap();
        assert_eq!(squint_deviation(&p, 1.0).unwrap(), (0.0, 0.0));
        let (dphi, dr) = squint_deviation(&p, 0.96).unwrap();
        assert!((dphi + 0.02).abs() < 1e-15);
        assert!((dr - 0.6889).abs() < 1e-4);
        let b = SteeringParams::new(0.0, 10.0).unwrap();
        let (dphi, dr) = squint_deviation(&b, 0.96).unwrap();
        assert_eq!(dphi, 0.0);
        assert!((dr - (10.0 / 0.96 - 10.0)).abs() < 1e-12);
        assert!((dr - 0.4167).abs() < 1e-4);
    }

    #[test]
    fn squinted_steering_equals_frequency_scaled_vector() {
        // two independent routes: closed-form location mapping at f_c versus
        // the physical vector evaluated at f_c·η
        let c = cfg(48);
        for &(phi, r, eta) in &[(0.3, 0.05, 0.97), (-0.8, 0.2, 1.03), (0.0, 1.0, 0.95)] {
            let p = SteeringParams::new(phi, r).unwrap();
            let a = squinted_steering(&c, &p, eta, WavefrontModel::NearField).unwrap();
            let b = steering_vector(&c, &p, c.carrier_frequency * eta).unwrap();
            assert!((a - b).camax() < 1e-9);
        }
        let edge = SteeringParams::new(-1.0, 0.1).unwrap();
        let a = squinted_steering(&c, &edge, 0.97, WavefrontModel::NearField).unwrap();
        let b = steering_vector(&c, &edge, c.carrier_frequency * 0.97).unwrap();
        assert!((a - b).camax() < 1e-9);
    }

    #[test]
    fn dictionary_examples() {
        let c = cfg(32);
        let d = build_dictionary(&c, 100, 20, (1.0, 8.0)).unwrap();
        assert_eq!(d.len(), 2000);
        assert_eq!(d.atoms.ncols(), 2000);
        for j in 0..d.len() {
            assert!((d.atoms.column(j).norm() - 1.0).abs() < 1e-12);
        }
        for &j in &[0usize, 17, 1999] {
            let again = steering_vector(&c, &d.grid[j], c.carrier_frequency).unwrap();
            assert_eq!(d.atoms.column(j), again.column(0));
        }
        assert_eq!(d.grid[0].direction(), -1.0);
        assert_eq!(d.grid[1999].direction(), 1.0);

        let single = build_dictionary(&c, 1, 1, (2.0, 2.0)).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.grid[0].direction(), 0.0);

        assert!(build_dictionary(&c, 0, 3, (1.0, 2.0)).is_err());
        assert!(build_dictionary(&c, 3, 3, (0.0, 2.0)).is_err());
        assert!(build_dictionary(&c, 3, 3, (3.0, 2.0)).is_err());
    }

    #[test]
    fn far_field_dictionary_ignores_range() {
        let c = cfg(16);
        let d = build_far_field_dictionary(&c, 9, 1.0).unwrap();
        assert_eq!(d.len(), 9);
        let a = far_field_steering(&c, d.grid[3].direction(), c.carrier_frequency).unwrap();
        assert_eq!(d.atoms.column(3), a.column(0));
    }
}
