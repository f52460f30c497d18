use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use rydcav::bubble::{evolve, steady_transmission_bubble};
use rydcav::fitting::{
    fit_xi_series, format_xi_table, read_data_csv, FitModel, FitParam, FitProblem, FitReport,
    Transient, Weighting, XiEstimate,
};
use rydcav::interaction::{c6_d, c6_s, InteractionSummary};
use rydcav::linear::scan_linear;
use rydcav::meanfield::scan_meanfield;
use rydcav::units::linewidth_from_geometry;
use rydcav::{Error, PhysicalParams, Result};

use crate::output::{write_csv, write_json, write_text, Meta};
use crate::{Command, Common, Format, NoiseArgs, SeriesArg};

pub fn load_params(common: &Common) -> Result<PhysicalParams> {
    let base = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            PhysicalParams::from_json_str(&text)?
        }
        None => PhysicalParams::default(),
    };
    let pairs = common
        .overrides
        .iter()
        .map(|o| {
            o.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("override {o:?} is not KEY=VAL")))
        })
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        Ok(base)
    } else {
        base.with_overrides(&pairs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct NoisyPoint {
    x: f64,
    y: f64,
    weight: f64,
}

/// Adds Gaussian noise of standard deviation `relative · |y|` (floored at
/// 1e-3 of the largest `|y|`) and attaches inverse-variance weights.
fn add_noise(points: &[(f64, f64)], relative: f64, seed: u64) -> Result<Vec<NoisyPoint>> {
    if !(relative.is_finite() && relative > 0.0) {
        return Err(Error::Config(format!(
            "--noise must be > 0, got {relative}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let floor = 1e-3 * points.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    Ok(points
        .iter()
        .map(|&(x, y)| {
            let sigma = relative * y.abs().max(floor).max(f64::MIN_POSITIVE);
            NoisyPoint {
                x,
                y: y + sigma * normal.sample(&mut rng),
                weight: 1.0 / (sigma * sigma),
            }
        })
        .collect())
}

fn write_noisy(common: &Common, meta: &Meta, axis: &str, points: &[NoisyPoint]) -> Result<()> {
    match common.format.unwrap_or(Format::Csv) {
        Format::Csv => write_csv(common.out.as_deref(), meta, |out| {
            writeln!(out, "{axis},transmission,weight")?;
            for p in points {
                writeln!(out, "{},{},{}", p.x, p.y, p.weight)?;
            }
            Ok(())
        }),
        Format::Json => write_json(common.out.as_deref(), meta, &points),
    }
}

fn parse_free(names: &[String]) -> Result<Vec<FitParam>> {
    names
        .iter()
        .map(|n| {
            FitParam::parse(n.trim()).ok_or_else(|| {
                let known: Vec<&str> = FitParam::ALL.iter().map(|p| p.name()).collect();
                Error::Config(format!(
                    "unknown fit parameter {n:?}; expected one of {}",
                    known.join(", ")
                ))
            })
        })
        .collect()
}

fn read_data(path: &Path) -> Result<Vec<rydcav::fitting::DataPoint>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    read_data_csv(file)
}

fn run_fit(common: &Common, meta: &Meta, problem: &FitProblem) -> Result<()> {
    let result = problem.fit()?;
    let report = problem.report(&result);
    write_report(common, meta, &report)?;
    if !report.converged {
        return Err(Error::Solver(format!(
            "fit stopped after {} iterations without converging",
            report.iterations
        )));
    }
    Ok(())
}

fn write_report(common: &Common, meta: &Meta, report: &FitReport) -> Result<()> {
    match common.format.unwrap_or(Format::Json) {
        Format::Json => write_json(common.out.as_deref(), meta, report),
        Format::Csv => write_csv(common.out.as_deref(), meta, |out| {
            writeln!(out, "name,value,ci95,free")?;
            for p in &report.parameters {
                let ci = p.ci95.map_or_else(String::new, |c| c.to_string());
                writeln!(out, "{},{},{},{}", p.name, p.value, ci, p.free)?;
            }
            Ok(())
        }),
    }
}

#[derive(Serialize)]
struct XiTable<'a> {
    rows: &'a [XiEstimate],
    summary: String,
}

fn fit_levels(
    common: &Common,
    meta: &Meta,
    params: &PhysicalParams,
    levels: &[String],
) -> Result<()> {
    let entries = levels
        .iter()
        .map(|spec| {
            let (n, path) = spec
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--level {spec:?} is not N=PATH")))?;
            let n: u32 = n.trim().parse().map_err(|_| {
                Error::Config(format!(
                    "--level {spec:?}: {n:?} is not a principal quantum number"
                ))
            })?;
            let mut p = params.clone();
            p.rydberg.n = n;
            p.validate()?;
            Ok(Transient {
                n,
                params: p,
                data: read_data(Path::new(path.trim()))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = fit_xi_series(&entries);
    match common.format.unwrap_or(Format::Json) {
        Format::Json => write_json(
            common.out.as_deref(),
            meta,
            &XiTable {
                rows: &rows,
                summary: format_xi_table(&rows),
            },
        )?,
        Format::Csv => write_csv(common.out.as_deref(), meta, |out| {
            writeln!(out, "n,xi_mhz,ci95,converged")?;
            for r in &rows {
                let ci = r.ci95.map_or_else(String::new, |c| c.to_string());
                writeln!(out, "{},{},{},{}", r.n, r.xi, ci, r.converged)?;
            }
            Ok(())
        })?,
    }
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.is_ok())
        .map(|r| r.n.to_string())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Solver(format!(
            "xi fit failed for n = {}",
            failed.join(", ")
        )))
    }
}

#[derive(Serialize)]
struct Summary {
    cavity_linewidth_fwhm_mhz: f64,
    c6_ghz_um6: f64,
    blockade_volume_um3: [f64; 2],
    kappa_mhz: [f64; 2],
    atoms_per_bubble: f64,
    bubble_count: f64,
}

fn validate(common: &Common, meta: &Meta, params: &PhysicalParams) -> Result<()> {
    let s = InteractionSummary::from_params(params)?;
    let summary = Summary {
        cavity_linewidth_fwhm_mhz: linewidth_from_geometry(
            params.cavity.length,
            params.cavity.finesse,
        )?,
        c6_ghz_um6: s.c6,
        blockade_volume_um3: [s.v_b.re, s.v_b.im],
        kappa_mhz: [s.kappa.re, s.kappa.im],
        atoms_per_bubble: s.n_b,
        bubble_count: s.bubble_count,
    };
    match common.format {
        Some(Format::Json) => write_json(common.out.as_deref(), meta, &summary),
        Some(Format::Csv) => write_csv(common.out.as_deref(), meta, |out| {
            writeln!(out, "quantity,value")?;
            writeln!(
                out,
                "cavity_linewidth_fwhm_mhz,{}",
                summary.cavity_linewidth_fwhm_mhz
            )?;
            writeln!(out, "c6_ghz_um6,{}", summary.c6_ghz_um6)?;
            writeln!(out, "blockade_volume_re_um3,{}", s.v_b.re)?;
            writeln!(out, "blockade_volume_im_um3,{}", s.v_b.im)?;
            writeln!(out, "kappa_re_mhz,{}", s.kappa.re)?;
            writeln!(out, "kappa_im_mhz,{}", s.kappa.im)?;
            writeln!(out, "atoms_per_bubble,{}", s.n_b)?;
            writeln!(out, "bubble_count,{}", s.bubble_count)
        }),
        None => write_text(
            common.out.as_deref(),
            &format!(
                "configuration ok\n\
                 cavity linewidth (FWHM from geometry): {:.4} MHz\n\
                 C6: {} GHz.um6\n\
                 blockade volume: {:.4} + {:.4}i um3\n\
                 kappa: {:.6e} + {:.6e}i MHz\n\
                 atoms per bubble: {:.3}",
                summary.cavity_linewidth_fwhm_mhz,
                s.c6,
                s.v_b.re,
                s.v_b.im,
                s.kappa.re,
                s.kappa.im,
                s.n_b
            ),
        ),
    }
}

#[derive(Serialize)]
struct C6Value {
    series: &'static str,
    n: u32,
    c6_ghz_um6: f64,
}

fn c6(common: &Common, series: SeriesArg, n: u32) -> Result<()> {
    let (name, value) = match series {
        SeriesArg::S => ("S", c6_s(n)),
        SeriesArg::D => ("D", c6_d(n)),
    };
    let mut meta_params = PhysicalParams::default();
    meta_params.rydberg.n = n;
    let meta = Meta::new("c6", &meta_params, common.seed);
    match common.format {
        None => write_text(common.out.as_deref(), &format!("{value} GHz.um6")),
        Some(Format::Json) => write_json(
            common.out.as_deref(),
            &meta,
            &C6Value {
                series: name,
                n,
                c6_ghz_um6: value,
            },
        ),
        Some(Format::Csv) => write_csv(common.out.as_deref(), &meta, |out| {
            writeln!(out, "series,n,c6_ghz_um6")?;
            writeln!(out, "{name},{n},{value}")
        }),
    }
}

pub fn run(common: &Common, command: &Command) -> Result<()> {
    if let Command::C6 { series, n } = command {
        return c6(common, *series, *n);
    }
    let params = load_params(common)?;
    let seed = common.seed;
    match command {
        Command::LinearScan(NoiseArgs { noise }) => {
            let meta = Meta::new("linear-scan", &params, seed);
            let spectrum = scan_linear(&params, &params.scan)?;
            if *noise != 0.0 {
                return write_noisy(
                    common,
                    &meta,
                    "delta_p_mhz",
                    &add_noise(&spectrum.points, *noise, seed)?,
                );
            }
            match common.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    write_csv(common.out.as_deref(), &meta, |out| spectrum.write_csv(out))
                }
                Format::Json => write_json(common.out.as_deref(), &meta, &spectrum.points),
            }
        }
        Command::MeanfieldScan => {
            let meta = Meta::new("meanfield-scan", &params, seed);
            let spectrum = scan_meanfield(&params, &params.scan)?;
            match common.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    write_csv(common.out.as_deref(), &meta, |out| spectrum.write_csv(out))?
                }
                Format::Json => write_json(common.out.as_deref(), &meta, &spectrum.points)?,
            }
            match spectrum.failures() {
                0 => Ok(()),
                k => Err(Error::Solver(format!(
                    "{k} of {} scan points did not converge",
                    spectrum.points.len()
                ))),
            }
        }
        Command::BubbleEvolve { t_end, dt, noise } => {
            let meta = Meta::new("bubble-evolve", &params, seed);
            let series = evolve(&params, *t_end, *dt)?;
            if noise.noise != 0.0 {
                let points: Vec<(f64, f64)> = series
                    .samples
                    .iter()
                    .map(|s| (s.t, s.transmission))
                    .collect();
                return write_noisy(
                    common,
                    &meta,
                    "t_us",
                    &add_noise(&points, noise.noise, seed)?,
                );
            }
            match common.format.unwrap_or(Format::Csv) {
                Format::Csv => write_csv(common.out.as_deref(), &meta, |out| series.write_csv(out)),
                Format::Json => write_json(common.out.as_deref(), &meta, &series.samples),
            }
        }
        Command::BubbleSteady { threshold } => {
            let meta = Meta::new("bubble-steady", &params, seed);
            let steady = steady_transmission_bubble(&params, *threshold)?;
            match common.format.unwrap_or(Format::Csv) {
                Format::Csv => write_csv(common.out.as_deref(), &meta, |out| {
                    writeln!(out, "transmission,t_us,converged")?;
                    writeln!(
                        out,
                        "{},{},{}",
                        steady.transmission, steady.t, steady.converged
                    )
                })?,
                Format::Json => write_json(common.out.as_deref(), &meta, &steady)?,
            }
            if steady.converged {
                Ok(())
            } else {
                Err(Error::Integrator {
                    t: steady.t,
                    reason: "transmission did not settle within the evolution limit".into(),
                })
            }
        }
        Command::FitEit {
            data,
            free,
            poisson,
        } => {
            let meta = Meta::new("fit-eit", &params, seed);
            let problem = build_problem(
                FitModel::LinearEit,
                &params,
                read_data(data)?,
                free,
                *poisson,
            )?;
            run_fit(common, &meta, &problem)
        }
        Command::FitTransient {
            data,
            level,
            free,
            poisson,
        } => {
            let meta = Meta::new("fit-transient", &params, seed);
            match data {
                Some(path) => {
                    let problem = build_problem(
                        FitModel::BubbleTransient,
                        &params,
                        read_data(path)?,
                        free,
                        *poisson,
                    )?;
                    run_fit(common, &meta, &problem)
                }
                None if !level.is_empty() => fit_levels(common, &meta, &params, level),
                None => Err(Error::Config(
                    "fit-transient needs --data PATH or --level N=PATH".into(),
                )),
            }
        }
        Command::Validate => validate(common, &Meta::new("validate", &params, seed), &params),
        Command::C6 { .. } => unreachable!("handled above"),
    }
}

fn build_problem(
    model: FitModel,
    params: &PhysicalParams,
    data: Vec<rydcav::fitting::DataPoint>,
    free: &[String],
    poisson: bool,
) -> Result<FitProblem> {
    let mut problem = FitProblem::new(model, params.clone(), data);
    for p in parse_free(free)? {
        problem = problem.free(p, p.get(params));
    }
    if poisson {
        problem = problem.with_weighting(Weighting::Poisson);
    }
    Ok(problem)
}
