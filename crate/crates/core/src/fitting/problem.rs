use std::io::Read;

use serde::{Deserialize, Serialize};

use super::lm::{least_squares, Bounded, FitResult, LmOptions};
use crate::bubble::{evolve_at, EvolveOptions};
use crate::error::{Error, Result};
use crate::linear::transmission_linear;
use crate::meanfield::scan_meanfield_grid;
use crate::params::PhysicalParams;

/// Model parameters that can be fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParam {
    GammaC,
    Cooperativity,
    GammaE,
    OmegaCf,
    GammaR,
    GammaS,
    Xi,
    DeltaCf,
    DeltaBg,
    Alpha,
}

impl FitParam {
    pub const ALL: [FitParam; 10] = [
        FitParam::GammaC,
        FitParam::Cooperativity,
        FitParam::GammaE,
        FitParam::OmegaCf,
        FitParam::GammaR,
        FitParam::GammaS,
        FitParam::Xi,
        FitParam::DeltaCf,
        FitParam::DeltaBg,
        FitParam::Alpha,
    ];

    /// Dotted configuration key of the parameter.
    pub fn key(self) -> &'static str {
        match self {
            FitParam::GammaC => "cavity.gamma_c",
            FitParam::Cooperativity => "ensemble.cooperativity",
            FitParam::GammaE => "ensemble.gamma_e",
            FitParam::OmegaCf => "drive.omega_cf",
            FitParam::GammaR => "rydberg.gamma_r",
            FitParam::GammaS => "rydberg.gamma_s",
            FitParam::Xi => "rydberg.xi",
            FitParam::DeltaCf => "drive.delta_cf",
            FitParam::DeltaBg => "cavity.delta_bg",
            FitParam::Alpha => "drive.alpha",
        }
    }

    pub fn name(self) -> &'static str {
        self.key().split('.').nth(1).unwrap_or_default()
    }

    pub fn parse(name: &str) -> Option<FitParam> {
        FitParam::ALL
            .into_iter()
            .find(|p| p.name() == name || p.key() == name)
    }

    pub fn get(self, p: &PhysicalParams) -> f64 {
        match self {
            FitParam::GammaC => p.cavity.gamma_c,
            FitParam::Cooperativity => p.ensemble.cooperativity,
            FitParam::GammaE => p.ensemble.gamma_e,
            FitParam::OmegaCf => p.drive.omega_cf,
            FitParam::GammaR => p.rydberg.gamma_r,
            FitParam::GammaS => p.gamma_s(),
            FitParam::Xi => p.rydberg.xi,
            FitParam::DeltaCf => p.drive.delta_cf,
            FitParam::DeltaBg => p.cavity.delta_bg,
            FitParam::Alpha => p.drive.alpha,
        }
    }

    pub fn set(self, p: &mut PhysicalParams, value: f64) {
        match self {
            FitParam::GammaC => p.cavity.gamma_c = value,
            FitParam::Cooperativity => p.ensemble.cooperativity = value,
            FitParam::GammaE => p.ensemble.gamma_e = value,
            FitParam::OmegaCf => p.drive.omega_cf = value,
            FitParam::GammaR => p.rydberg.gamma_r = value,
            FitParam::GammaS => p.rydberg.gamma_s = Some(value),
            FitParam::Xi => p.rydberg.xi = value,
            FitParam::DeltaCf => p.drive.delta_cf = value,
            FitParam::DeltaBg => p.cavity.delta_bg = value,
            FitParam::Alpha => p.drive.alpha = value,
        }
    }

    /// Default search box: rates and couplings non-negative, detunings free.
    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            FitParam::DeltaCf | FitParam::DeltaBg => (f64::NEG_INFINITY, f64::INFINITY),
            _ => (0.0, f64::INFINITY),
        }
    }
}

/// Which forward model the data are compared with.
///
/// `x` is the probe detuning in MHz for the two spectral models (for the
/// mean-field model, the photon rate instead when the base configuration
/// scans that), and the time since switch-on in μs for transients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    LinearEit,
    Meanfield,
    BubbleTransient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

impl DataPoint {
    pub fn new(x: f64, y: f64) -> Self {
        DataPoint { x, y, weight: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Weights as given in the data.
    #[default]
    AsGiven,
    /// Photon-counting weights `1 / max(y, ε)`.
    Poisson,
}

const POISSON_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamSpec {
    pub param: FitParam,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
    pub free: bool,
}

#[derive(Debug, Clone)]
pub struct FitProblem {
    pub data: Vec<DataPoint>,
    pub model: FitModel,
    /// Everything not listed in `params` is taken from here.
    pub base: PhysicalParams,
    pub params: Vec<ParamSpec>,
    pub weighting: Weighting,
    pub options: LmOptions,
}

impl FitProblem {
    pub fn new(model: FitModel, base: PhysicalParams, data: Vec<DataPoint>) -> Self {
        let options = match model {
            // integrator noise sits near rtol; step and stop well above it
            FitModel::BubbleTransient => LmOptions {
                diff_step: 1e-3,
                xtol: 1e-8,
                ftol: 1e-7,
                max_iterations: 50,
                ..LmOptions::default()
            },
            _ => LmOptions::default(),
        };
        FitProblem {
            data,
            model,
            base,
            params: Vec::new(),
            weighting: Weighting::AsGiven,
            options,
        }
    }

    /// Adds a free parameter with the default box, starting from `initial`.
    pub fn free(mut self, param: FitParam, initial: f64) -> Self {
        let (lower, upper) = param.default_bounds();
        self.params.push(ParamSpec {
            param,
            initial,
            lower,
            upper,
            free: true,
        });
        self
    }

    pub fn bounded(mut self, param: FitParam, initial: f64, lower: f64, upper: f64) -> Self {
        self.params.push(ParamSpec {
            param,
            initial,
            lower,
            upper,
            free: true,
        });
        self
    }

    /// Adds a parameter held at its base value; it still appears in the report.
    pub fn fixed(mut self, param: FitParam) -> Self {
        let v = param.get(&self.base);
        self.params.push(ParamSpec {
            param,
            initial: v,
            lower: v,
            upper: v,
            free: false,
        });
        self
    }

    pub fn with_weighting(mut self, weighting: Weighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let mut seen = Vec::new();
        for s in &self.params {
            if seen.contains(&s.param) {
                return Err(Error::Fit(format!("{} listed twice", s.param.name())));
            }
            seen.push(s.param);
        }
        if let Some(i) = self.data.iter().position(|d| !d.x.is_finite()) {
            return Err(Error::Fit(format!("abscissa {i} is not finite")));
        }
        if self.model == FitModel::BubbleTransient {
            if let Some(d) = self.data.iter().find(|d| d.x < 0.0) {
                return Err(Error::Fit(format!(
                    "transient sample at negative time {}",
                    d.x
                )));
            }
        }
        Ok(())
    }

    /// Parameters with `theta` substituted for the listed entries.
    pub fn params_at(&self, theta: &[f64]) -> PhysicalParams {
        let mut p = self.base.clone();
        for (s, &v) in self.params.iter().zip(theta) {
            s.param.set(&mut p, v);
        }
        p
    }

    /// Model predictions for every data point, in data order.
    pub fn predict(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let p = self.params_at(theta);
        let xs: Vec<f64> = self.data.iter().map(|d| d.x).collect();
        match self.model {
            FitModel::LinearEit => xs.iter().map(|&x| transmission_linear(&p, x)).collect(),
            FitModel::Meanfield => {
                // continuation follows the sorted axis regardless of data order
                let (order, grid) = sorted_unique(&xs);
                let spectrum = scan_meanfield_grid(&p, p.scan.variable, &grid);
                if let Some(bad) = spectrum.points.iter().find(|q| !q.converged) {
                    return Err(Error::Solver(format!(
                        "mean-field solve failed at x = {}",
                        bad.axis
                    )));
                }
                Ok(order
                    .iter()
                    .map(|&k| spectrum.points[k].transmission)
                    .collect())
            }
            FitModel::BubbleTransient => {
                let (order, grid) = sorted_unique(&xs);
                let series = evolve_at(&p, &grid, &EvolveOptions::default())?;
                Ok(order
                    .iter()
                    .map(|&k| series.samples[k].transmission)
                    .collect())
            }
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        match self.weighting {
            Weighting::AsGiven => self.data.iter().map(|d| d.weight).collect(),
            Weighting::Poisson => self
                .data
                .iter()
                .map(|d| 1.0 / d.y.max(POISSON_FLOOR))
                .collect(),
        }
    }

    pub fn fit(&self) -> Result<FitResult> {
        self.validate()?;
        let y: Vec<f64> = self.data.iter().map(|d| d.y).collect();
        let bounds: Vec<Bounded> = self
            .params
            .iter()
            .map(|s| Bounded {
                value: s.initial,
                lower: s.lower,
                upper: s.upper,
                free: s.free,
            })
            .collect();
        least_squares(
            &|theta: &[f64]| self.predict(theta),
            &y,
            &self.weights(),
            &bounds,
            &self.options,
        )
    }

    /// Runs the fit from each start and keeps the lowest objective.
    pub fn fit_from_starts(&self, starts: &[Vec<f64>]) -> Result<FitResult> {
        let mut best: Option<FitResult> = None;
        let mut last_error = None;
        for start in starts {
            let mut problem = self.clone();
            for (s, &v) in problem.params.iter_mut().zip(start) {
                if s.free {
                    s.initial = v;
                }
            }
            match problem.fit() {
                Ok(r)
                    if best
                        .as_ref()
                        .is_none_or(|b| r.residual_norm < b.residual_norm) =>
                {
                    best = Some(r)
                }
                Ok(_) => {}
                Err(e) => last_error = Some(e),
            }
        }
        best.ok_or_else(|| {
            last_error.unwrap_or_else(|| Error::Fit("no starting points given".into()))
        })
    }

    pub fn report(&self, result: &FitResult) -> FitReport {
        FitReport {
            model: self.model,
            parameters: self
                .params
                .iter()
                .enumerate()
                .map(|(i, s)| ParamReport {
                    name: s.param.name().to_string(),
                    value: result.best_fit[i],
                    ci95: result.ci95[i],
                    free: s.free,
                })
                .collect(),
            residual_norm: result.residual_norm,
            converged: result.converged,
            iterations: result.iterations,
            data_points: self.data.len(),
        }
    }
}

/// Sorted distinct abscissae plus, for each input position, its index in
/// that sorted list.
fn sorted_unique(xs: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let mut grid: Vec<f64> = xs.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let order = xs.iter().map(|x| grid.partition_point(|g| g < x)).collect();
    (order, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub name: String,
    pub value: f64,
    pub ci95: Option<f64>,
    pub free: bool,
}

/// JSON-friendly summary of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: FitModel,
    pub parameters: Vec<ParamReport>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub data_points: usize,
}

impl FitReport {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameters
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.value)
    }
}

/// Reads `x,y[,weight]` rows; lines starting with `#` are skipped.
///
/// A non-numeric first row is a header. With a header, `x` and `y` are the
/// first two columns, the weight is the column named `weight` (if any) and
/// any other columns are ignored. Without one, rows must have two or three
/// fields.
pub fn read_data_csv<R: Read>(reader: R) -> Result<Vec<DataPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    let mut weight_column = None;
    let mut headed = false;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let fields: Vec<&str> = record.iter().collect();
        if i == 0 && fields.first().is_some_and(|f| f.parse::<f64>().is_err()) {
            headed = true;
            weight_column = fields.iter().position(|f| f.eq_ignore_ascii_case("weight"));
            continue;
        }
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        let bad = || {
            Error::Fit(format!(
                "line {line}: expected x,y[,weight], got {:?}",
                fields.join(",")
            ))
        };
        let number = |k: usize| {
            fields
                .get(k)
                .and_then(|f| f.parse::<f64>().ok())
                .ok_or_else(bad)
        };
        let weight_at = match (headed, fields.len()) {
            (true, n) if n >= 2 => weight_column,
            (false, 2) => None,
            (false, 3) => Some(2),
            _ => return Err(bad()),
        };
        out.push(DataPoint {
            x: number(0)?,
            y: number(1)?,
            weight: weight_at.map(number).transpose()?.unwrap_or(1.0),
        });
    }
    Ok(out)
}
