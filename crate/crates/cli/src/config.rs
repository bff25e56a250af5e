//! TOML run configuration. Keys carry their units; relative paths are resolved
//! against the directory of the configuration file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use casimir_core::analysis::{comparison_grid, CompensationMode, ErrorBudget, ResidualPotential};
use casimir_core::constants::{MV, NM, UM};
use casimir_core::lifshitz::{LifshitzCalculator, LifshitzSettings, MAX_SEPARATION, MIN_SEPARATION};
use casimir_core::optics::{load_optical_table, DrudeParameters, Extrapolation, PermittivityModel, TableFormat};
use casimir_core::simulate::{default_voltages, uniform_z_grid, ExperimentConfig, V0Law, PROTOCOL_VOLTAGES};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub material: MaterialConfig,
    #[serde(default)]
    pub theory: TheoryConfig,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub measurement: MeasurementConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub optical_table: PathBuf,
    #[serde(rename = "plasma_eV", default = "default_plasma")]
    pub plasma_ev: f64,
    #[serde(rename = "relaxation_eV", default = "default_relaxation")]
    pub relaxation_ev: f64,
}

fn default_plasma() -> f64 {
    DrudeParameters::default().plasma_ev
}

fn default_relaxation() -> f64 {
    DrudeParameters::default().relaxation_ev
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    #[serde(rename = "temperature_K")]
    pub temperature_k: f64,
    pub l_max: usize,
    pub k_rel_tol: f64,
    pub series_rel_tol: f64,
    /// Explicit grid; the comparison grid when absent.
    pub separations_nm: Option<Vec<f64>>,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        let s = LifshitzSettings::default();
        Self {
            temperature_k: s.temperature,
            l_max: s.l_max,
            k_rel_tol: s.k_rel_tol,
            series_rel_tol: s.series_rel_tol,
            separations_nm: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CasimirModel {
    Plasma,
    Drude,
    Ideal,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub radius_um: f64,
    pub a0_nm: f64,
    #[serde(rename = "calibration_rad_m_per_N_s")]
    pub calibration: f64,
    #[serde(rename = "v0_slope_mV_per_nm")]
    pub v0_slope: f64,
    #[serde(rename = "v0_intercept_mV")]
    pub v0_intercept: f64,
    /// Explicit voltage list; 11 values around `V0(a0)` when absent.
    #[serde(rename = "voltages_mV")]
    pub voltages: Option<Vec<f64>>,
    #[serde(rename = "voltage_half_span_mV", default = "default_half_span")]
    pub voltage_half_span: f64,
    #[serde(default)]
    pub allow_nonstandard_voltage_count: bool,
    #[serde(default = "default_step")]
    pub z_step_nm: f64,
    pub z_count: usize,
    #[serde(default)]
    pub noise_rad_s: f64,
    #[serde(default)]
    pub drift_rad_s_per_sweep: f64,
    #[serde(default = "default_true")]
    pub anchors: bool,
    #[serde(default = "default_model")]
    pub casimir_model: CasimirModel,
}

fn default_half_span() -> f64 {
    150.0
}

fn default_step() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_model() -> CasimirModel {
    CasimirModel::Plasma
}

/// The fixed-voltage run used for the pressure measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementConfig {
    pub enabled: bool,
    pub repeats: usize,
    /// Applied voltage; the mean of the configured `V0` law over the
    /// calibration grid when absent.
    #[serde(rename = "compensation_mV")]
    pub compensation: Option<f64>,
    /// Separations of the run; the comparison grid when absent.
    pub separations_nm: Option<Vec<f64>>,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self { enabled: true, repeats: 11, compensation: None, separations_nm: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioSource {
    /// The experiment's configured law.
    Law,
    /// The V0 line of the calibration.
    Calibrated,
    /// `ratio_v0_constant_mV` at every separation.
    Constant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub sigma_a_nm: f64,
    #[serde(rename = "sigma_P_random_Pa")]
    pub sigma_p_random: f64,
    pub relative_systematic: f64,
    pub confidence: f64,
    pub subtract_residual_electrostatics: bool,
    pub compensation: CompensationMode,
    pub ratio_v0: RatioSource,
    #[serde(rename = "ratio_v0_constant_mV")]
    pub ratio_v0_constant: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let b = ErrorBudget::default();
        Self {
            sigma_a_nm: b.sigma_a / NM,
            sigma_p_random: b.sigma_p_random,
            relative_systematic: b.relative_systematic,
            confidence: b.confidence,
            subtract_residual_electrostatics: true,
            compensation: CompensationMode::Zero,
            ratio_v0: RatioSource::Law,
            ratio_v0_constant: None,
        }
    }
}

fn check_grid(name: &str, grid_nm: &[f64]) -> Result<(), CliError> {
    if grid_nm.is_empty() {
        return Err(CliError::Config(format!("{name} is empty")));
    }
    if grid_nm.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CliError::Config(format!("{name} must be strictly increasing")));
    }
    let (lo, hi) = (MIN_SEPARATION / NM, MAX_SEPARATION / NM);
    if grid_nm.iter().any(|a| !(*a >= lo && *a <= hi)) {
        return Err(CliError::Config(format!("{name} must lie within {lo}-{hi} nm")));
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let table = self.resolve(&self.material.optical_table);
        if !table.is_file() {
            return Err(CliError::Config(format!("optical table {} does not exist", table.display())));
        }
        DrudeParameters::new(self.material.plasma_ev, self.material.relaxation_ev)?;
        self.lifshitz_settings().validate()?;
        check_grid("theory.separations_nm", &self.theory_grid_nm())?;
        check_grid("measurement.separations_nm", &self.measurement_grid_nm())?;
        let e = &self.experiment;
        if e.z_count < 1 || !(e.z_step_nm > 0.0) {
            return Err(CliError::Config("experiment.z_count must be >= 1 and z_step_nm > 0".into()));
        }
        self.experiment_config(self.seed)?.validate()?;
        if self.measurement.repeats < 2 {
            return Err(CliError::Config("measurement.repeats must be at least 2".into()));
        }
        if self.measurement_grid_nm().iter().any(|a| *a < e.a0_nm) {
            return Err(CliError::Config("measurement separations must not be below a0_nm".into()));
        }
        self.error_budget().validate()?;
        if self.analysis.ratio_v0 == RatioSource::Constant && self.analysis.ratio_v0_constant.is_none() {
            return Err(CliError::Config("ratio_v0 = \"constant\" requires ratio_v0_constant_mV".into()));
        }
        Ok(())
    }

    pub fn lifshitz_settings(&self) -> LifshitzSettings {
        LifshitzSettings {
            temperature: self.theory.temperature_k,
            l_max: self.theory.l_max,
            k_rel_tol: self.theory.k_rel_tol,
            series_rel_tol: self.theory.series_rel_tol,
        }
    }

    pub fn theory_grid_nm(&self) -> Vec<f64> {
        self.theory.separations_nm.clone().unwrap_or_else(|| comparison_grid().iter().map(|a| (a / NM).round()).collect())
    }

    pub fn measurement_grid_nm(&self) -> Vec<f64> {
        self.measurement
            .separations_nm
            .clone()
            .unwrap_or_else(|| comparison_grid().iter().map(|a| (a / NM).round()).collect())
    }

    pub fn drude(&self) -> Result<DrudeParameters, CliError> {
        Ok(DrudeParameters::new(self.material.plasma_ev, self.material.relaxation_ev)?)
    }

    pub fn calculator(&self, variant: Extrapolation) -> Result<LifshitzCalculator, CliError> {
        let path = self.resolve(&self.material.optical_table);
        let file = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
        let table = load_optical_table(std::io::BufReader::new(file), TableFormat::EnergyNkCsv)?;
        let model = PermittivityModel::new(variant, Arc::new(table), self.drude()?)?;
        Ok(LifshitzCalculator::new(model, self.lifshitz_settings())?)
    }

    pub fn v0_law(&self) -> V0Law {
        V0Law { slope_mv_per_nm: self.experiment.v0_slope, intercept_mv: self.experiment.v0_intercept }
    }

    pub fn experiment_config(&self, seed: u64) -> Result<ExperimentConfig, CliError> {
        let e = &self.experiment;
        let law = self.v0_law();
        let a0 = e.a0_nm * NM;
        let voltages = match &e.voltages {
            Some(v) => v.iter().map(|v| v * MV).collect(),
            None => default_voltages(law.at(a0), e.voltage_half_span * MV, PROTOCOL_VOLTAGES),
        };
        Ok(ExperimentConfig {
            radius: e.radius_um * UM,
            a0,
            calibration: e.calibration,
            v0_law: law,
            voltages,
            z_grid: uniform_z_grid(e.z_step_nm * NM, e.z_count),
            noise_sigma: e.noise_rad_s,
            drift_rate: e.drift_rad_s_per_sweep,
            seed,
            anchors: e.anchors,
            allow_nonstandard_voltage_count: e.allow_nonstandard_voltage_count,
        })
    }

    /// Configuration of the fixed-voltage run: same instrument, measurement grid.
    pub fn measurement_config(&self, seed: u64) -> Result<ExperimentConfig, CliError> {
        let mut c = self.experiment_config(seed)?;
        let a0 = self.experiment.a0_nm;
        c.z_grid = self.measurement_grid_nm().iter().map(|a| (a - a0) * NM).collect();
        Ok(c)
    }

    /// Voltage applied in the fixed-voltage run, V.
    pub fn compensation_voltage(&self) -> Result<f64, CliError> {
        if let Some(v) = self.measurement.compensation {
            return Ok(v * MV);
        }
        let c = self.experiment_config(self.seed)?;
        Ok(c.v0_law.mean_over(&c.separations()))
    }

    pub fn error_budget(&self) -> ErrorBudget {
        ErrorBudget {
            sigma_a: self.analysis.sigma_a_nm * NM,
            sigma_p_random: self.analysis.sigma_p_random,
            relative_systematic: self.analysis.relative_systematic,
            confidence: self.analysis.confidence,
        }
    }

    pub fn ratio_potential(&self, calibrated: Option<V0Law>) -> Result<ResidualPotential, CliError> {
        Ok(match self.analysis.ratio_v0 {
            RatioSource::Law => ResidualPotential::Law { law: self.v0_law() },
            RatioSource::Calibrated => ResidualPotential::Law {
                law: calibrated.ok_or_else(|| {
                    CliError::Config("ratio_v0 = \"calibrated\" needs a calibration result".into())
                })?,
            },
            RatioSource::Constant => ResidualPotential::Constant {
                value: self.analysis.ratio_v0_constant.unwrap_or_default() * MV,
            },
        })
    }
}
