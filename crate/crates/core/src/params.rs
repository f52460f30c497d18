//! Physical parameters, configuration parsing and validation.
//!
//! A configuration document is a JSON tree with one section per parameter
//! group (`cavity`, `ensemble`, `rydberg`, `drive`, `scan`, and the optional
//! `bubble` block for the dynamical model). Unknown keys are rejected.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, FieldError, Result};
use crate::interaction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityParams {
    /// Mirror separation, m.
    pub length: f64,
    pub finesse: f64,
    /// Cavity field half-linewidth, MHz.
    pub gamma_c: f64,
    /// Background shift of the cavity line, MHz.
    #[serde(default)]
    pub delta_bg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleParams {
    pub atom_number: u64,
    pub cooperativity: f64,
    /// Coherence decay rate of the intermediate state, MHz.
    pub gamma_e: f64,
    /// Cloud volume, μm³.
    pub cloud_volume: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Series {
    S,
    D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RydbergLevel {
    pub n: u32,
    pub series: Series,
    /// Rydberg coherence decay rate, MHz.
    pub gamma_r: f64,
    /// Dark-state decay rate, MHz. Falls back to `gamma_r` when absent.
    #[serde(default)]
    pub gamma_s: Option<f64>,
    /// Nonlinear transfer rate into the dark state, MHz.
    #[serde(default)]
    pub xi: f64,
    /// Replaces the series formula for C6, GHz·μm⁶.
    #[serde(default)]
    pub c6_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveParams {
    /// Probe detuning from the g→e transition, MHz.
    pub delta_p: f64,
    /// Control detuning from the e→r transition, MHz.
    #[serde(default)]
    pub delta_cf: f64,
    /// Control Rabi frequency, MHz.
    pub omega_cf: f64,
    /// Cavity feeding amplitude, √photons·MHz.
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanVariable {
    /// Probe detuning in MHz.
    #[default]
    DeltaP,
    /// Empty-cavity photon rate in photons/μs.
    PhotonRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    #[serde(default)]
    pub variable: ScanVariable,
    pub start: f64,
    pub stop: f64,
    pub npoints: usize,
}

impl ScanSpec {
    pub fn new(start: f64, stop: f64, npoints: usize) -> Self {
        ScanSpec {
            variable: ScanVariable::DeltaP,
            start,
            stop,
            npoints,
        }
    }

    pub fn photon_rate(start: f64, stop: f64, npoints: usize) -> Self {
        ScanSpec {
            variable: ScanVariable::PhotonRate,
            ..ScanSpec::new(start, stop, npoints)
        }
    }

    pub fn check(&self, prefix: &str, errors: &mut Vec<FieldError>) {
        finite(prefix, "start", self.start, errors);
        finite(prefix, "stop", self.stop, errors);
        if self.npoints < 2 {
            errors.push(FieldError::new(
                format!("{prefix}.npoints"),
                "npoints must be >= 2",
            ));
        }
        if self.start.is_finite() && self.stop.is_finite() && !(self.start < self.stop) {
            errors.push(FieldError::new(
                format!("{prefix}.stop"),
                "stop must be > start",
            ));
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        self.check("scan", &mut errors);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }

    /// Evenly spaced grid, endpoints included.
    pub fn grid(&self) -> Vec<f64> {
        let step = (self.stop - self.start) / (self.npoints - 1) as f64;
        (0..self.npoints)
            .map(|i| {
                if i + 1 == self.npoints {
                    self.stop
                } else {
                    self.start + step * i as f64
                }
            })
            .collect()
    }
}

impl Default for ScanSpec {
    fn default() -> Self {
        ScanSpec::new(-50.0, 50.0, 201)
    }
}

/// Settings of the Rydberg-bubble integrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleSettings {
    /// Boson cutoff of the intermediate-state mode.
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Fixes the number of atoms per bubble instead of deriving it from V_b.
    #[serde(default)]
    pub n_b_override: Option<f64>,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
}

fn default_n_max() -> usize {
    4
}
fn default_rtol() -> f64 {
    1e-8
}
fn default_atol() -> f64 {
    1e-10
}

impl Default for BubbleSettings {
    fn default() -> Self {
        BubbleSettings {
            n_max: default_n_max(),
            n_b_override: None,
            rtol: default_rtol(),
            atol: default_atol(),
        }
    }
}

/// Complex detuning `D = Δ + iγ`, in MHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexDetuning(pub Complex64);

impl ComplexDetuning {
    pub fn new(detuning: f64, damping: f64) -> Self {
        ComplexDetuning(Complex64::new(detuning, damping))
    }

    #[inline]
    pub fn value(self) -> Complex64 {
        self.0
    }

    pub fn is_damped(self) -> bool {
        self.0.im >= 0.0
    }
}

/// The three complex detunings entering every formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detunings {
    pub e: ComplexDetuning,
    pub r: ComplexDetuning,
    pub c: ComplexDetuning,
}

/// Cavity, ensemble, level, drive and scan parameters in one bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    pub cavity: CavityParams,
    pub ensemble: EnsembleParams,
    pub rydberg: RydbergLevel,
    pub drive: DriveParams,
    #[serde(default)]
    pub scan: ScanSpec,
    #[serde(default)]
    pub bubble: BubbleSettings,
}

impl Default for PhysicalParams {
    /// Cavity geometry of the experiment, with EIT parameters of the
    /// typical magnitude extracted from linear spectra.
    fn default() -> Self {
        PhysicalParams {
            cavity: CavityParams {
                length: 0.066,
                finesse: 120.0,
                gamma_c: 10.0,
                delta_bg: 0.0,
            },
            ensemble: EnsembleParams {
                atom_number: 10_000,
                cooperativity: 5.0,
                gamma_e: 3.0,
                cloud_volume: 1e6,
            },
            rydberg: RydbergLevel {
                n: 70,
                series: Series::S,
                gamma_r: 0.2,
                gamma_s: None,
                xi: 0.0,
                c6_override: None,
            },
            drive: DriveParams {
                delta_p: 0.0,
                delta_cf: 0.0,
                omega_cf: 4.0,
                alpha: 1.0,
            },
            scan: ScanSpec::default(),
            bubble: BubbleSettings::default(),
        }
    }
}

fn finite(prefix: &str, name: &str, v: f64, errors: &mut Vec<FieldError>) -> bool {
    if v.is_finite() {
        true
    } else {
        errors.push(FieldError::new(
            format!("{prefix}.{name}"),
            format!("{name} must be finite"),
        ));
        false
    }
}

fn positive(prefix: &str, name: &str, v: f64, errors: &mut Vec<FieldError>) {
    if finite(prefix, name, v, errors) && !(v > 0.0) {
        errors.push(FieldError::new(
            format!("{prefix}.{name}"),
            format!("{name} must be > 0"),
        ));
    }
}

fn non_negative(prefix: &str, name: &str, v: f64, errors: &mut Vec<FieldError>) {
    if finite(prefix, name, v, errors) && v < 0.0 {
        errors.push(FieldError::new(
            format!("{prefix}.{name}"),
            format!("{name} must be >= 0"),
        ));
    }
}

impl PhysicalParams {
    /// Parses a JSON configuration document and validates it.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let params: PhysicalParams =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        params.validated()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters always serialize")
    }

    /// Every violated invariant, each tagged with its field path.
    pub fn check(&self) -> Vec<FieldError> {
        let mut errors = Vec::new();

        let c = &self.cavity;
        positive("cavity", "length", c.length, &mut errors);
        positive("cavity", "finesse", c.finesse, &mut errors);
        positive("cavity", "gamma_c", c.gamma_c, &mut errors);
        finite("cavity", "delta_bg", c.delta_bg, &mut errors);

        let e = &self.ensemble;
        if e.atom_number < 1 {
            errors.push(FieldError::new(
                "ensemble.atom_number",
                "atom_number must be >= 1",
            ));
        }
        non_negative("ensemble", "cooperativity", e.cooperativity, &mut errors);
        non_negative("ensemble", "gamma_e", e.gamma_e, &mut errors);
        positive("ensemble", "cloud_volume", e.cloud_volume, &mut errors);

        let r = &self.rydberg;
        if r.n < 5 {
            errors.push(FieldError::new("rydberg.n", "n must be >= 5"));
        }
        non_negative("rydberg", "gamma_r", r.gamma_r, &mut errors);
        if let Some(gs) = r.gamma_s {
            non_negative("rydberg", "gamma_s", gs, &mut errors);
        }
        non_negative("rydberg", "xi", r.xi, &mut errors);
        if let Some(c6) = r.c6_override {
            finite("rydberg", "c6_override", c6, &mut errors);
        }

        let d = &self.drive;
        finite("drive", "delta_p", d.delta_p, &mut errors);
        finite("drive", "delta_cf", d.delta_cf, &mut errors);
        non_negative("drive", "omega_cf", d.omega_cf, &mut errors);
        non_negative("drive", "alpha", d.alpha, &mut errors);

        self.scan.check("scan", &mut errors);

        let b = &self.bubble;
        if b.n_max < 1 {
            errors.push(FieldError::new("bubble.n_max", "n_max must be >= 1"));
        }
        if let Some(nb) = b.n_b_override {
            if !(nb >= 1.0 && nb <= e.atom_number as f64) {
                errors.push(FieldError::new(
                    "bubble.n_b_override",
                    "n_b_override must lie in [1, atom_number]",
                ));
            }
        }
        positive("bubble", "rtol", b.rtol, &mut errors);
        positive("bubble", "atol", b.atol, &mut errors);

        errors
    }

    pub fn validate(&self) -> Result<()> {
        let errors = self.check();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }

    /// Consumes the bundle and hands it back once every invariant holds.
    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    /// Applies `key=value` style overrides, where `key` is a dotted path to an
    /// existing field and `value` is JSON (bare words are taken as strings).
    pub fn with_overrides<K, V>(&self, overrides: &[(K, V)]) -> Result<Self>
    where
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut tree = serde_json::to_value(self).expect("parameters always serialize");
        for (key, raw) in overrides {
            let key = key.as_ref();
            let slot = key
                .split('.')
                .try_fold(&mut tree, |node, part| node.get_mut(part))
                .filter(|_| !key.is_empty())
                .ok_or_else(|| Error::Config(format!("unknown override key `{key}`")))?;
            if slot.is_object() {
                return Err(Error::Config(format!(
                    "override key `{key}` names a section, not a field"
                )));
            }
            let raw = raw.as_ref().trim();
            *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
        }
        let params: PhysicalParams = serde_json::from_value(tree)
            .map_err(|e| Error::Config(format!("after overrides: {e}")))?;
        params.validated()
    }

    pub fn detunings(&self) -> Detunings {
        let d = &self.drive;
        Detunings {
            e: ComplexDetuning::new(d.delta_p, self.ensemble.gamma_e),
            r: ComplexDetuning::new(d.delta_p + d.delta_cf, self.rydberg.gamma_r),
            c: ComplexDetuning::new(d.delta_p - self.cavity.delta_bg, self.cavity.gamma_c),
        }
    }

    /// Collective coupling `g√N = √(2 γ_e γ_c C)`, MHz.
    pub fn collective_coupling(&self) -> f64 {
        (2.0 * self.ensemble.gamma_e * self.cavity.gamma_c * self.ensemble.cooperativity).sqrt()
    }

    /// C6 of the configured level, GHz·μm⁶.
    pub fn c6(&self) -> f64 {
        self.rydberg
            .c6_override
            .unwrap_or_else(|| match self.rydberg.series {
                Series::S => interaction::c6_s(self.rydberg.n),
                Series::D => interaction::c6_d(self.rydberg.n),
            })
    }

    pub fn gamma_s(&self) -> f64 {
        self.rydberg.gamma_s.unwrap_or(self.rydberg.gamma_r)
    }

    /// nS₁/₂ level with the default cavity and ensemble.
    pub fn s_state(n: u32) -> Self {
        let mut p = PhysicalParams::default();
        p.rydberg.n = n;
        p.rydberg.series = Series::S;
        p
    }

    /// nD₅/₂ level set up for dark-state transients: a long-lived dark
    /// state, ξ = 2 MHz and a feeding rate of 5 photons/μs.
    pub fn d_state(n: u32) -> Self {
        let mut p = PhysicalParams::default();
        p.rydberg.n = n;
        p.rydberg.series = Series::D;
        p.rydberg.gamma_s = Some(0.01);
        p.rydberg.xi = 2.0;
        p.at_photon_rate(5.0)
    }

    /// Same parameters with the probe detuning replaced.
    pub fn at_detuning(&self, delta_p: f64) -> Self {
        let mut p = self.clone();
        p.drive.delta_p = delta_p;
        p
    }

    /// Same parameters with the feeding amplitude set from a photon rate.
    pub fn at_photon_rate(&self, rate: f64) -> Self {
        let mut p = self.clone();
        p.drive.alpha = alpha_from_photon_rate(self.cavity.gamma_c, rate);
        p
    }
}

/// Empty-cavity resonant output rate `R = α² / γ_c`, photons/μs.
pub fn photon_rate_from_alpha(gamma_c: f64, alpha: f64) -> f64 {
    alpha * alpha / gamma_c
}

pub fn alpha_from_photon_rate(gamma_c: f64, rate: f64) -> f64 {
    (gamma_c * rate.max(0.0)).sqrt()
}

/// Volume `(2π)^{3/2} σ_r² σ_z` of a Gaussian cloud, μm³.
pub fn gaussian_cloud_volume(sigma_radial_um: f64, sigma_axial_um: f64) -> f64 {
    (2.0 * PI).powf(1.5) * sigma_radial_um * sigma_radial_um * sigma_axial_um
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paths(err: Error) -> Vec<String> {
        match err {
            Error::Validation(errs) => errs.into_iter().map(|e| e.to_string()).collect(),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_are_valid() {
        let p = PhysicalParams::default();
        p.validate().unwrap();
        assert_eq!(p.cavity.finesse, 120.0);
        assert_eq!(p.cavity.gamma_c, 10.0);
        assert_eq!(p.cavity.length, 0.066);
    }

    #[test]
    fn negative_gamma_c_is_reported_with_path() {
        let mut p = PhysicalParams::default();
        p.cavity.gamma_c = -1.0;
        let msgs = paths(p.validated().unwrap_err());
        assert_eq!(msgs, vec!["cavity.gamma_c: gamma_c must be > 0"]);
    }

    #[test]
    fn degenerate_scan_rejected() {
        let mut p = PhysicalParams::default();
        p.scan.npoints = 1;
        let msgs = paths(p.validated().unwrap_err());
        assert!(msgs.iter().any(|m| m.starts_with("scan.npoints")));
        assert!(ScanSpec::new(1.0, 1.0, 5).validate().is_err());
    }

    #[test]
    fn all_violations_reported() {
        let mut p = PhysicalParams::default();
        p.cavity.finesse = 0.0;
        p.ensemble.cloud_volume = -3.0;
        p.rydberg.n = 2;
        p.drive.alpha = f64::NAN;
        let msgs = paths(p.validated().unwrap_err());
        assert_eq!(msgs.len(), 4, "{msgs:?}");
    }

    #[test]
    fn validation_is_idempotent() {
        let p = PhysicalParams::default();
        let once = p.clone().validated().unwrap();
        let twice = once.clone().validated().unwrap();
        assert_eq!(p, once);
        assert_eq!(once, twice);
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let p = PhysicalParams::default();
        let text = p.to_json_pretty();
        assert_eq!(PhysicalParams::from_json_str(&text).unwrap(), p);

        let mut tree: Value = serde_json::from_str(&text).unwrap();
        tree["cavity"]["mirror_count"] = Value::from(2);
        let err = PhysicalParams::from_json_str(&tree.to_string()).unwrap_err();
        assert!(
            matches!(err, Error::Config(ref m) if m.contains("mirror_count")),
            "{err}"
        );
    }

    #[test]
    fn minimal_document_fills_defaults() {
        let text = r#"{
            "cavity": {"length": 0.066, "finesse": 120, "gamma_c": 10},
            "ensemble": {"atom_number": 5000, "cooperativity": 2, "gamma_e": 3, "cloud_volume": 1e6},
            "rydberg": {"n": 85, "series": "D", "gamma_r": 0.2},
            "drive": {"delta_p": 0, "omega_cf": 4, "alpha": 1}
        }"#;
        let p = PhysicalParams::from_json_str(text).unwrap();
        assert_eq!(p.scan, ScanSpec::default());
        assert_eq!(p.bubble.n_max, 4);
        assert_eq!(p.gamma_s(), 0.2);
        assert_eq!(p.rydberg.series, Series::D);
    }

    #[test]
    fn overrides_match_editing() {
        let p = PhysicalParams::default();
        let q = p
            .with_overrides(&[
                ("cavity.gamma_c", "12.5"),
                ("rydberg.series", "D"),
                ("rydberg.gamma_s", "0.01"),
            ])
            .unwrap();
        let mut edited = p.clone();
        edited.cavity.gamma_c = 12.5;
        edited.rydberg.series = Series::D;
        edited.rydberg.gamma_s = Some(0.01);
        assert_eq!(q, edited);

        assert!(p.with_overrides(&[("cavity.nope", "1")]).is_err());
        assert!(p.with_overrides(&[("cavity", "1")]).is_err());
        assert!(p
            .with_overrides(&[("cavity.gamma_c", "-2")])
            .unwrap_err()
            .is_validation());
    }

    #[test]
    fn detuning_wiring() {
        let mut p = PhysicalParams::default();
        p.drive.delta_p = 2.0;
        p.drive.delta_cf = -0.5;
        p.cavity.delta_bg = 1.0;
        let d = p.detunings();
        assert_eq!(d.e.value(), Complex64::new(2.0, 3.0));
        assert_eq!(d.r.value(), Complex64::new(1.5, 0.2));
        assert_eq!(d.c.value(), Complex64::new(1.0, 10.0));
        assert!(d.e.is_damped() && d.r.is_damped() && d.c.is_damped());
        assert!((p.collective_coupling() - 300f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn photon_rate_convention() {
        let a = alpha_from_photon_rate(10.0, 2.5);
        assert!((photon_rate_from_alpha(10.0, a) - 2.5).abs() < 1e-12);
        assert_eq!(alpha_from_photon_rate(10.0, 0.0), 0.0);
    }

    #[test]
    fn scan_grid_endpoints() {
        let g = ScanSpec::new(-1.0, 1.0, 5).grid();
        assert_eq!(g, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn gaussian_volume() {
        let v = gaussian_cloud_volume(35.0, 35.0);
        assert!((v - 15.749_609_945_722_419 * 42_875.0).abs() < 1e-6);
    }
}
