//! Run configuration: TOML text with one section per module.
//!
//! Key suffixes carry the units. `_h` is a multiple of the field `h`,
//! `_over_h` a multiple of `1/h`, `_rad` radians. Every key is optional and
//! unknown keys are rejected.

use std::path::PathBuf;

use lmg_core::analysis::{ChaoticOptions, ScanOptions, SweepOptions, EXTREMA_TOLERANCE};
use lmg_core::stability::SeedGrid;
use lmg_core::{Error as CoreError, ModelParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub spectrum: SpectrumSection,
    pub integrator: IntegratorSection,
    pub stability: StabilitySection,
    pub esqpt: EsqptSection,
    pub bifurcation: BifurcationSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Field strength, the unit of every other key.
    pub h: f64,
    pub gamma_h: f64,
    pub gamma_y_h: f64,
    pub kappa_h: f64,
    pub lambda_h: f64,
    pub tau_over_h: f64,
    pub n_spins: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            h: 1.0,
            gamma_h: 1.5,
            gamma_y_h: 0.0,
            kappa_h: 0.05,
            lambda_h: 1.0,
            tau_over_h: 0.3,
            n_spins: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DosChoice {
    Counting,
    Resolvent,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolventMode {
    /// Density evaluated at the bin centers.
    Point,
    /// Lorentzian mass integrated over each bin.
    Binned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub max_spins: usize,
    /// Unset: about five states per bin.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_width_h: Option<f64>,
    /// Unset: ten mean level spacings.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_h: Option<f64>,
    pub dos_method: DosChoice,
    pub resolvent: ResolventMode,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            max_spins: lmg_core::spectrum::DEFAULT_MAX_SPINS,
            bin_width_h: None,
            eta_h: None,
            dos_method: DosChoice::Both,
            resolvent: ResolventMode::Point,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt_over_h: f64,
    pub t_max_over_h: f64,
    pub record_from_over_h: f64,
    pub record_stride: usize,
    /// Initial polar angle; unset means the perturbed broken fixed point
    /// for `evolve` and `theta = 3` for the dissipative signal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_theta_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_phi_rad: Option<f64>,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            dt_over_h: 0.005,
            t_max_over_h: 1000.0,
            record_from_over_h: 0.0,
            record_stride: 1,
            initial_theta_rad: None,
            initial_phi_rad: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub tau_min_over_h: f64,
    pub tau_max_over_h: f64,
    pub tau_points: usize,
    pub lambda_min_h: f64,
    pub lambda_max_h: f64,
    pub lambda_points: usize,
    /// Largest branch index of the boundary formula.
    pub z_max: u32,
    pub seed_re_min_h: f64,
    pub seed_re_max_h: f64,
    pub seed_im_max_h: f64,
    pub seed_re_points: usize,
    pub seed_im_points: usize,
    /// Each Newton seed moves by up to this fraction of the grid spacing.
    pub seed_jitter: f64,
    pub seed: u64,
}

impl Default for StabilitySection {
    fn default() -> Self {
        let g = SeedGrid::default();
        Self {
            tau_min_over_h: 0.0,
            tau_max_over_h: 6.0,
            tau_points: 61,
            lambda_min_h: 0.0,
            lambda_max_h: 3.0,
            lambda_points: 31,
            z_max: 10,
            seed_re_min_h: g.re_min,
            seed_re_max_h: g.re_max,
            seed_im_max_h: g.im_max,
            seed_re_points: g.n_re,
            seed_im_points: g.n_im,
            seed_jitter: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsqptSource {
    /// Stationary averages over a delay sweep.
    Feedback,
    /// Orbit averages of the closed system over an energy grid.
    ClosedOrbit,
    /// Sliding windows of a free relaxation.
    Dissipative,
    /// Sliding windows at the model delay.
    Chaotic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsqptSection {
    pub source: EsqptSource,
    pub tau_min_over_h: f64,
    pub tau_max_over_h: f64,
    pub tau_points: usize,
    /// Unset: just above the band bottom.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_min_h: Option<f64>,
    pub energy_max_h: f64,
    pub energy_points: usize,
    pub orbit_t_cap_over_h: f64,
    pub delta_t_over_h: f64,
    pub window_stride: usize,
    pub settle_over_h: f64,
    pub duration_over_h: f64,
    /// Unset: `max(50 tau, 500/h)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub onset_over_h: Option<f64>,
    pub max_onset_over_h: f64,
    pub min_periods: usize,
    pub min_observe_over_h: f64,
    pub probe_over_h: f64,
}

impl Default for EsqptSection {
    fn default() -> Self {
        let s = SweepOptions::default();
        let c = ChaoticOptions::default();
        Self {
            source: EsqptSource::Feedback,
            tau_min_over_h: 0.1,
            tau_max_over_h: 0.6,
            tau_points: 101,
            energy_min_h: None,
            energy_max_h: 0.45,
            energy_points: 100,
            orbit_t_cap_over_h: 2000.0,
            delta_t_over_h: 20.0,
            window_stride: c.stride,
            settle_over_h: c.settle_time,
            duration_over_h: c.duration,
            onset_over_h: None,
            max_onset_over_h: s.max_onset,
            min_periods: s.min_periods,
            min_observe_over_h: s.min_observe,
            probe_over_h: s.probe,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BifurcationSection {
    pub tau_min_over_h: f64,
    pub tau_max_over_h: f64,
    pub tau_points: usize,
    pub settle_over_h: f64,
    pub observe_over_h: f64,
    pub extrema_tolerance: f64,
}

impl Default for BifurcationSection {
    fn default() -> Self {
        Self {
            tau_min_over_h: 0.1,
            tau_max_over_h: 8.0,
            tau_points: 80,
            settle_over_h: 1000.0,
            observe_over_h: 400.0,
            extrema_tolerance: EXTREMA_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Unset: `<subcommand>.csv`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            file: None,
        }
    }
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn parse_error(text: &str, e: toml::de::Error) -> CliError {
    let (line, column) = e.span().map_or((None, None), |s| {
        let (l, c) = line_col(text, s.start);
        (Some(l), Some(c))
    });
    CliError::Parse {
        message: e.message().to_string(),
        line,
        column,
    }
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    parse_with_overrides(text, &[])
}

/// As [`parse_config`], then applies `section.key=value` overrides. Values
/// use TOML syntax; a bare word that is not valid TOML is taken as a string.
pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    if overrides.is_empty() {
        cfg.validate()?;
        return Ok(cfg);
    }
    let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Override {
            setting: overrides.join(" "),
            message: e.message().to_string(),
        })?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_override(table: &mut toml::Table, setting: &str) -> Result<(), CliError> {
    let bad = |message: &str| CliError::Override {
        setting: setting.to_string(),
        message: message.to_string(),
    };
    let (key, raw) = setting.split_once('=').ok_or_else(|| bad("expected section.key=value"))?;
    let (section, field) = key.trim().split_once('.').ok_or_else(|| bad("expected section.key=value"))?;
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").ok_or_else(|| bad("missing value"))?,
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(sec) = entry else {
        return Err(bad("section is not a table"));
    };
    sec.insert(field.to_string(), value);
    Ok(())
}

fn invalid(key: &str, reason: &str) -> CliError {
    CliError::Invalid {
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

fn check_grid(section: &str, lo_key: &str, lo: f64, hi_key: &str, hi: f64, n_key: &str, n: usize) -> Result<(), CliError> {
    if !lo.is_finite() {
        return Err(invalid(&format!("{section}.{lo_key}"), "must be finite"));
    }
    if !hi.is_finite() {
        return Err(invalid(&format!("{section}.{hi_key}"), "must be finite"));
    }
    if n == 0 {
        return Err(invalid(&format!("{section}.{n_key}"), "must be at least 1"));
    }
    if n > 1 && hi <= lo {
        return Err(invalid(&format!("{section}.{hi_key}"), "must exceed the minimum"));
    }
    Ok(())
}

fn check_positive(key: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, "must be positive and finite"))
    }
}

/// `n` evenly spaced points from `lo` to `hi`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

impl RunConfig {
    /// Physical parameters in the core's units.
    pub fn params(&self) -> ModelParams {
        let m = &self.model;
        ModelParams {
            h: m.h,
            gamma: m.gamma_h * m.h,
            gamma_y: m.gamma_y_h * m.h,
            kappa: m.kappa_h * m.h,
            lambda: m.lambda_h * m.h,
            tau: m.tau_over_h / m.h,
            n_spins: m.n_spins,
        }
    }

    fn h(&self) -> f64 {
        self.model.h
    }

    pub fn dt(&self) -> f64 {
        self.integrator.dt_over_h / self.h()
    }

    pub fn t_max(&self) -> f64 {
        self.integrator.t_max_over_h / self.h()
    }

    pub fn stability_taus(&self) -> Vec<f64> {
        let s = &self.stability;
        linspace(s.tau_min_over_h, s.tau_max_over_h, s.tau_points)
            .into_iter()
            .map(|t| t / self.h())
            .collect()
    }

    pub fn stability_lambdas(&self) -> Vec<f64> {
        let s = &self.stability;
        linspace(s.lambda_min_h, s.lambda_max_h, s.lambda_points)
            .into_iter()
            .map(|l| l * self.h())
            .collect()
    }

    pub fn seed_grid(&self) -> SeedGrid {
        let s = &self.stability;
        SeedGrid {
            re_min: s.seed_re_min_h * self.h(),
            re_max: s.seed_re_max_h * self.h(),
            im_min: 0.0,
            im_max: s.seed_im_max_h * self.h(),
            n_re: s.seed_re_points,
            n_im: s.seed_im_points,
        }
    }

    pub fn esqpt_taus(&self) -> Vec<f64> {
        let e = &self.esqpt;
        linspace(e.tau_min_over_h, e.tau_max_over_h, e.tau_points)
            .into_iter()
            .map(|t| t / self.h())
            .collect()
    }

    pub fn sweep_options(&self) -> SweepOptions {
        let e = &self.esqpt;
        let h = self.h();
        SweepOptions {
            dt: self.dt(),
            onset: e.onset_over_h.map(|t| t / h),
            max_onset: e.max_onset_over_h / h,
            min_periods: e.min_periods,
            min_observe: e.min_observe_over_h / h,
            probe: e.probe_over_h / h,
        }
    }

    pub fn chaotic_options(&self) -> ChaoticOptions {
        let e = &self.esqpt;
        ChaoticOptions {
            dt: self.dt(),
            settle_time: e.settle_over_h / self.h(),
            duration: e.duration_over_h / self.h(),
            stride: e.window_stride,
        }
    }

    pub fn bifurcation_taus(&self) -> Vec<f64> {
        let b = &self.bifurcation;
        linspace(b.tau_min_over_h, b.tau_max_over_h, b.tau_points)
            .into_iter()
            .map(|t| t / self.h())
            .collect()
    }

    pub fn scan_options(&self) -> ScanOptions {
        let b = &self.bifurcation;
        ScanOptions {
            dt: self.dt(),
            settle_time: b.settle_over_h / self.h(),
            observe_time: b.observe_over_h / self.h(),
            tolerance: b.extrema_tolerance,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Err(CoreError::InvalidParameter { name, reason }) = self.params().validate() {
            let key = match name {
                "h" => "model.h",
                "gamma" => "model.gamma_h",
                "gamma_y" => "model.gamma_y_h",
                "kappa" => "model.kappa_h",
                "lambda" => "model.lambda_h",
                "tau" => "model.tau_over_h",
                "n_spins" => "model.n_spins",
                other => other,
            };
            return Err(invalid(key, reason));
        }

        let sp = &self.spectrum;
        if sp.max_spins == 0 {
            return Err(invalid("spectrum.max_spins", "must be at least 1"));
        }
        if let Some(w) = sp.bin_width_h {
            check_positive("spectrum.bin_width_h", w)?;
        }
        if let Some(eta) = sp.eta_h {
            if !(eta.is_finite() && eta >= 0.0) {
                return Err(invalid("spectrum.eta_h", "must be non-negative and finite"));
            }
        }

        let i = &self.integrator;
        check_positive("integrator.dt_over_h", i.dt_over_h)?;
        check_positive("integrator.t_max_over_h", i.t_max_over_h)?;
        if !(i.record_from_over_h.is_finite() && (0.0..i.t_max_over_h).contains(&i.record_from_over_h)) {
            return Err(invalid("integrator.record_from_over_h", "must lie in [0, t_max_over_h)"));
        }
        if i.record_stride == 0 {
            return Err(invalid("integrator.record_stride", "must be at least 1"));
        }
        for (key, v) in [
            ("integrator.initial_theta_rad", i.initial_theta_rad),
            ("integrator.initial_phi_rad", i.initial_phi_rad),
        ] {
            if v.is_some_and(|x| !x.is_finite()) {
                return Err(invalid(key, "must be finite"));
            }
        }

        let s = &self.stability;
        check_grid("stability", "tau_min_over_h", s.tau_min_over_h, "tau_max_over_h", s.tau_max_over_h, "tau_points", s.tau_points)?;
        if s.tau_min_over_h < 0.0 {
            return Err(invalid("stability.tau_min_over_h", "must be non-negative"));
        }
        check_grid("stability", "lambda_min_h", s.lambda_min_h, "lambda_max_h", s.lambda_max_h, "lambda_points", s.lambda_points)?;
        check_grid("stability", "seed_re_min_h", s.seed_re_min_h, "seed_re_max_h", s.seed_re_max_h, "seed_re_points", s.seed_re_points)?;
        check_grid("stability", "seed_re_min_h", 0.0, "seed_im_max_h", s.seed_im_max_h, "seed_im_points", s.seed_im_points)?;
        if !(s.seed_jitter.is_finite() && (0.0..=0.5).contains(&s.seed_jitter)) {
            return Err(invalid("stability.seed_jitter", "must lie in [0, 0.5]"));
        }

        let e = &self.esqpt;
        check_grid("esqpt", "tau_min_over_h", e.tau_min_over_h, "tau_max_over_h", e.tau_max_over_h, "tau_points", e.tau_points)?;
        if e.tau_min_over_h < 0.0 {
            return Err(invalid("esqpt.tau_min_over_h", "must be non-negative"));
        }
        check_grid(
            "esqpt",
            "energy_min_h",
            e.energy_min_h.unwrap_or(f64::MIN),
            "energy_max_h",
            e.energy_max_h,
            "energy_points",
            e.energy_points,
        )?;
        check_positive("esqpt.orbit_t_cap_over_h", e.orbit_t_cap_over_h)?;
        check_positive("esqpt.delta_t_over_h", e.delta_t_over_h)?;
        if e.window_stride == 0 {
            return Err(invalid("esqpt.window_stride", "must be at least 1"));
        }
        if !(e.settle_over_h.is_finite() && e.settle_over_h >= 0.0) {
            return Err(invalid("esqpt.settle_over_h", "must be non-negative"));
        }
        check_positive("esqpt.duration_over_h", e.duration_over_h)?;
        if let Some(t) = e.onset_over_h {
            if !(t.is_finite() && t >= 0.0) {
                return Err(invalid("esqpt.onset_over_h", "must be non-negative"));
            }
        }
        check_positive("esqpt.max_onset_over_h", e.max_onset_over_h)?;
        check_positive("esqpt.min_observe_over_h", e.min_observe_over_h)?;
        check_positive("esqpt.probe_over_h", e.probe_over_h)?;
        if e.min_periods == 0 {
            return Err(invalid("esqpt.min_periods", "must be at least 1"));
        }

        let b = &self.bifurcation;
        check_grid("bifurcation", "tau_min_over_h", b.tau_min_over_h, "tau_max_over_h", b.tau_max_over_h, "tau_points", b.tau_points)?;
        if b.tau_min_over_h < 0.0 {
            return Err(invalid("bifurcation.tau_min_over_h", "must be non-negative"));
        }
        if !(b.settle_over_h.is_finite() && b.settle_over_h >= 0.0) {
            return Err(invalid("bifurcation.settle_over_h", "must be non-negative"));
        }
        check_positive("bifurcation.observe_over_h", b.observe_over_h)?;
        check_positive("bifurcation.extrema_tolerance", b.extrema_tolerance)?;

        if let Some(f) = &self.output.file {
            if f.is_empty() || f.contains(['/', '\\']) {
                return Err(invalid("output.file", "must be a plain file name"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let p = cfg.params();
        assert_eq!((p.gamma, p.kappa, p.lambda, p.n_spins), (1.5, 0.05, 1.0, 1000));
    }

    #[test]
    fn units_scale_with_h() {
        let cfg = parse_config("[model]\nh = 2.0\ngamma_h = 1.5\ntau_over_h = 0.4\n").unwrap();
        let p = cfg.params();
        assert_eq!(p.gamma, 3.0);
        assert_eq!(p.tau, 0.2);
    }

    #[test]
    fn typo_is_reported_with_position() {
        let err = parse_config("[model]\nkapa = 0.1\n").unwrap_err();
        let CliError::Parse { message, line, column } = err else {
            panic!("{err:?}");
        };
        assert!(message.contains("kapa"), "{message}");
        assert_eq!((line, column), (Some(2), Some(1)));
    }

    #[test]
    fn negative_kappa_names_the_key() {
        let err = parse_config("[model]\nkappa_h = -0.1\n").unwrap_err();
        assert!(matches!(err, CliError::Invalid { ref key, .. } if key == "model.kappa_h"), "{err:?}");
    }

    #[test]
    fn overrides_replace_file_values() {
        let sets = ["model.kappa_h=0".to_string(), "esqpt.source=closed_orbit".to_string()];
        let cfg = parse_with_overrides("[model]\nkappa_h = 0.2\n", &sets).unwrap();
        assert_eq!(cfg.model.kappa_h, 0.0);
        assert_eq!(cfg.esqpt.source, EsqptSource::ClosedOrbit);
        assert!(parse_with_overrides("", &["model.kapa=1".to_string()]).is_err());
        assert!(parse_with_overrides("", &["kappa_h=1".to_string()]).is_err());
    }

    #[test]
    fn descending_grid_is_rejected() {
        let err = parse_config("[bifurcation]\ntau_min_over_h = 5.0\ntau_max_over_h = 1.0\n").unwrap_err();
        assert!(matches!(err, CliError::Invalid { ref key, .. } if key == "bifurcation.tau_max_over_h"));
    }

    #[test]
    fn linspace_hits_both_ends() {
        let v = linspace(0.1, 0.6, 11);
        assert_eq!(v[0], 0.1);
        assert_eq!(v[10], 0.6);
        assert_eq!(linspace(2.0, 2.0, 1), vec![2.0]);
    }
}
