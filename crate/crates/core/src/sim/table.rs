use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::array::SteeringParams;
use crate::design::HybridDesign;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::metrics::ProbeGrid;

use super::config::SimConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
const CONFIG_PREFIX: &str = "# config: ";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub method: String,
    pub mean_se: f64,
    pub std_se: f64,
    pub mean_target_gain: f64,
    pub trials_used: usize,
}

/// Aggregated sweep results, one row per sweep point and method.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub experiment: String,
    pub sweep_name: String,
    pub config: SimConfig,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(experiment: &str, sweep_name: &str, config: SimConfig, rows: Vec<ResultRow>) -> Self {
        ResultTable {
            experiment: experiment.into(),
            sweep_name: sweep_name.into(),
            config,
            rows,
        }
    }

    pub fn row(&self, sweep_value: f64, method: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.sweep_value == sweep_value && r.method == method)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write_metadata(&mut out, &self.experiment, &self.config)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            self.sweep_name.as_str(),
            "method",
            "mean_se",
            "std_se",
            "mean_target_gain",
            "trials_used",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.sweep_value.to_string(),
                r.method.clone(),
                r.mean_se.to_string(),
                r.std_se.to_string(),
                r.mean_target_gain.to_string(),
                r.trials_used.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::NonFinite(e.to_string()))
    }
}

fn write_metadata<W: Write>(out: &mut W, experiment: &str, cfg: &SimConfig) -> Result<()> {
    writeln!(out, "# nfisac {VERSION}")?;
    writeln!(out, "# experiment: {experiment}")?;
    writeln!(out, "# seed: {}", cfg.seed)?;
    for line in cfg.to_toml_string()?.lines() {
        writeln!(out, "{CONFIG_PREFIX}{line}")?;
    }
    Ok(())
}

/// Recovers the configuration echoed in a CSV header.
pub fn config_from_csv(text: &str) -> Result<SimConfig> {
    let body: Vec<&str> = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l.strip_prefix(CONFIG_PREFIX))
        .collect();
    if body.is_empty() {
        return Err(Error::Config("no configuration echo found".into()));
    }
    SimConfig::from_toml_str(&body.join("\n"))
}

/// Subcarrier-averaged gain map and per-target gains.
#[derive(Debug, Clone)]
pub struct BeampatternReport {
    pub config: SimConfig,
    pub probe: ProbeGrid,
    /// Directions × ranges.
    pub mean_gain: DMatrix<f64>,
    pub targets: Vec<SteeringParams>,
    pub target_gains: Vec<f64>,
}

impl BeampatternReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write_metadata(&mut out, "beampattern", &self.config)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "direction", "range", "gain"])?;
        for (i, d) in self.probe.directions.iter().enumerate() {
            for (j, r) in self.probe.ranges.iter().enumerate() {
                w.write_record([
                    "grid".to_string(),
                    d.to_string(),
                    r.to_string(),
                    self.mean_gain[(i, j)].to_string(),
                ])?;
            }
        }
        for (t, g) in self.targets.iter().zip(&self.target_gains) {
            w.write_record([
                "target".to_string(),
                t.direction().to_string(),
                t.range().to_string(),
                g.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Median of the grid gains.
    pub fn median_gain(&self) -> f64 {
        let mut v: Vec<f64> = self.mean_gain.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return 0.0;
        }
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
}

/// Complex matrix as real and imaginary parts, row-major.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixDump {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&CMat> for MatrixDump {
    fn from(a: &CMat) -> Self {
        let mut re = Vec::with_capacity(a.len());
        let mut im = Vec::with_capacity(a.len());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                re.push(a[(i, j)].re);
                im.push(a[(i, j)].im);
            }
        }
        MatrixDump {
            rows: a.nrows(),
            cols: a.ncols(),
            re,
            im,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Location {
    pub direction: f64,
    pub range: f64,
}

impl From<&SteeringParams> for Location {
    fn from(p: &SteeringParams) -> Self {
        Location {
            direction: p.direction(),
            range: p.range(),
        }
    }
}

/// One design in inspectable form.
#[derive(Debug, Clone, Serialize)]
pub struct DesignDump {
    pub version: &'static str,
    pub config: SimConfig,
    pub trial: u64,
    pub targets: Vec<Location>,
    pub selected_atoms: Vec<usize>,
    pub selected_locations: Vec<Location>,
    pub residual_history: Vec<f64>,
    pub analog: MatrixDump,
    pub auxiliary: MatrixDump,
    pub baseband: Vec<MatrixDump>,
    pub bsa_baseband: Vec<MatrixDump>,
}

impl DesignDump {
    pub fn new(
        config: &SimConfig,
        trial: u64,
        targets: &[SteeringParams],
        atom_grid: &[SteeringParams],
        design: &HybridDesign,
    ) -> Self {
        DesignDump {
            version: VERSION,
            config: config.clone(),
            trial,
            targets: targets.iter().map(Location::from).collect(),
            selected_atoms: design.selected_atoms.clone(),
            selected_locations: design
                .selected_atoms
                .iter()
                .map(|&i| Location::from(&atom_grid[i]))
                .collect(),
            residual_history: design.residual_history.clone(),
            analog: (&design.analog).into(),
            auxiliary: (&design.auxiliary).into(),
            baseband: design.baseband.iter().map(MatrixDump::from).collect(),
            bsa_baseband: design.bsa_baseband.iter().map(MatrixDump::from).collect(),
        }
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}
