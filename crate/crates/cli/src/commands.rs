use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use casimir_core::analysis::{
    apply_error_budget, compare_with_theory, electric_to_casimir_ratio, extract_pressure, read_curve_csv,
    write_curve_csv, ExtractOptions, RATIO_SEPARATIONS,
};
use casimir_core::calibrate::calibrate as run_calibration;
use casimir_core::constants::{MV, NM, UM};
use casimir_core::lifshitz::{IdealConductor, NoCasimir};
use casimir_core::simulate::{format_number, generate_compensated_sweeps, generate_sweeps};
use casimir_core::{
    CalibrationResult, CompensationMode, Extrapolation, LifshitzCalculator, PlatePressure, PressureCurve,
    SweepDataset,
};

use crate::config::{CasimirModel, RatioSource, RunConfig};
use crate::error::{CliError, Context};
use crate::Common;

pub const CALIBRATION_SWEEPS: &str = "calibration_sweeps.csv";
pub const PRESSURE_SWEEPS: &str = "pressure_sweeps.csv";
pub const CALIBRATION_JSON: &str = "calibration.json";
pub const THEORY_DRUDE: &str = "theory_drude.csv";
pub const THEORY_PLASMA: &str = "theory_plasma.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_EXPERIMENT: &str = "report_experiment.csv";
pub const REPORT_DRUDE: &str = "report_theory_drude.csv";
pub const REPORT_PLASMA: &str = "report_theory_plasma.csv";

/// Offset between the calibration seed and the seed of the fixed-voltage run.
const MEASUREMENT_SEED_OFFSET: u64 = 1_000_000;

struct Run {
    config: RunConfig,
    seed: u64,
    out: PathBuf,
}

impl Run {
    fn open(common: &Common) -> Result<Self, CliError> {
        let config = RunConfig::load(&common.config)?;
        let seed = common.seed.unwrap_or(config.seed);
        let out = common.out.clone().unwrap_or_else(|| config.output_dir());
        Ok(Self { config, seed, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Writes all files or none: contents are rendered first, then flushed.
fn write_all(out: &Path, files: &[(PathBuf, Vec<u8>)]) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for (path, bytes) in files {
        fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

fn open_reader(path: &Path) -> Result<BufReader<fs::File>, CliError> {
    fs::File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn truth_model(config: &RunConfig) -> Result<Box<dyn PlatePressure>, CliError> {
    Ok(match config.experiment.casimir_model {
        CasimirModel::Plasma => Box::new(config.calculator(Extrapolation::GeneralizedPlasma)?),
        CasimirModel::Drude => Box::new(config.calculator(Extrapolation::DrudeExtrapolated)?),
        CasimirModel::Ideal => Box::new(IdealConductor),
        CasimirModel::None => Box::new(NoCasimir),
    })
}

fn render_sweeps(ds: &SweepDataset) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn simulate(common: &Common) -> Result<(), CliError> {
    let run = Run::open(common)?;
    let casimir = truth_model(&run.config)?;
    let calibration = generate_sweeps(&run.config.experiment_config(run.seed)?, casimir.as_ref())
        .context("calibration sweeps")?;
    let mut files = vec![(run.path(CALIBRATION_SWEEPS), render_sweeps(&calibration)?)];
    let mut summary = format!("{} calibration records", calibration.records.len());
    if run.config.measurement.enabled {
        let cfg = run.config.measurement_config(run.seed.wrapping_add(MEASUREMENT_SEED_OFFSET))?;
        let compensation = run.config.compensation_voltage()?;
        let ds = generate_compensated_sweeps(&cfg, compensation, run.config.measurement.repeats, casimir.as_ref())
            .context("fixed-voltage sweeps")?;
        summary += &format!(", {} fixed-voltage records at {:.4} mV", ds.records.len(), compensation / MV);
        files.push((run.path(PRESSURE_SWEEPS), render_sweeps(&ds)?));
    }
    write_all(&run.out, &files)?;
    println!("simulate: {summary} -> {}", run.out.display());
    Ok(())
}

pub fn calibrate(common: &Common, sweeps: Option<PathBuf>) -> Result<(), CliError> {
    let run = Run::open(common)?;
    let path = sweeps.unwrap_or_else(|| run.path(CALIBRATION_SWEEPS));
    let ds = SweepDataset::read_csv(open_reader(&path)?).context(path.display())?;
    let result = run_calibration(&ds, run.config.experiment.radius_um * UM).context("calibration")?;
    let json = result.to_json()?;
    write_all(&run.out, &[(run.path(CALIBRATION_JSON), json.into_bytes())])?;
    let l = &result.v0_line_mv;
    println!(
        "calibrate: a0 = {:.3} ± {:.3} nm, C = {:.5e} ± {:.2e}, V0 = ({:.4e} ± {:.1e}) a[nm] + ({:.3} ± {:.3}) mV, mean V0 = {:.3} mV",
        result.a0 / NM,
        result.a0_sigma / NM,
        result.c,
        result.c_sigma,
        l.slope_mv_per_nm,
        l.slope_sigma_mv_per_nm,
        l.intercept_mv,
        l.intercept_sigma_mv,
        l.v0_mean_mv
    );
    Ok(())
}

fn theory_metadata(calc: &LifshitzCalculator) -> BTreeMap<String, String> {
    let s = calc.settings();
    let m = calc.model();
    let mut meta = BTreeMap::new();
    meta.insert("kind".into(), "lifshitz_theory".into());
    meta.insert("model".into(), m.variant().label().into());
    meta.insert("temperature_K".into(), format_number(s.temperature));
    meta.insert("l_max".into(), s.l_max.to_string());
    meta.insert("k_rel_tol".into(), format!("{:e}", s.k_rel_tol));
    meta.insert("series_rel_tol".into(), format!("{:e}", s.series_rel_tol));
    meta.insert("plasma_eV".into(), format_number(m.drude().plasma_ev));
    meta.insert("relaxation_eV".into(), format_number(m.drude().relaxation_ev));
    meta.insert("material".into(), m.table().material().into());
    meta.insert("table_source".into(), m.table().source().into());
    meta
}

fn render_curve(curve: &PressureCurve, meta: &BTreeMap<String, String>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_curve_csv(curve, meta, &mut buf)?;
    Ok(buf)
}

type CurveWithMeta = (PressureCurve, BTreeMap<String, String>);

fn theory_pair(config: &RunConfig, separations: &[f64]) -> Result<[CurveWithMeta; 2], CliError> {
    let mut out = Vec::with_capacity(2);
    for variant in [Extrapolation::DrudeExtrapolated, Extrapolation::GeneralizedPlasma] {
        let calc = config.calculator(variant)?;
        let curve = calc.curve(separations).context(format!("{} theory", variant.label()))?;
        out.push((curve, theory_metadata(&calc)));
    }
    let plasma = out.pop().expect("two curves");
    let drude = out.pop().expect("two curves");
    Ok([drude, plasma])
}

pub fn theory(common: &Common) -> Result<(), CliError> {
    let run = Run::open(common)?;
    let grid: Vec<f64> = run.config.theory_grid_nm().iter().map(|a| a * NM).collect();
    let [(drude, dm), (plasma, pm)] = theory_pair(&run.config, &grid)?;
    write_all(
        &run.out,
        &[(run.path(THEORY_DRUDE), render_curve(&drude, &dm)?), (run.path(THEORY_PLASMA), render_curve(&plasma, &pm)?)],
    )?;
    println!(
        "theory: {} separations {:.0}-{:.0} nm at {} K -> {}",
        grid.len(),
        grid[0] / NM,
        grid[grid.len() - 1] / NM,
        run.config.theory.temperature_k,
        run.out.display()
    );
    Ok(())
}

pub struct ReportInputs {
    pub sweeps: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub experiment: Option<PathBuf>,
    pub compensation: Option<CompensationMode>,
}

pub fn report(common: &Common, inputs: ReportInputs) -> Result<(), CliError> {
    let run = Run::open(common)?;
    let config = &run.config;
    let radius = config.experiment.radius_um * UM;

    let (measured, calibration) = match &inputs.experiment {
        Some(path) => {
            let curve = read_curve_csv(open_reader(path)?).context(path.display())?;
            (curve, None)
        }
        None => {
            let cal_path = inputs.calibration.clone().unwrap_or_else(|| run.path(CALIBRATION_JSON));
            let text = fs::read_to_string(&cal_path).map_err(|e| CliError::io(&cal_path, e))?;
            let cal = CalibrationResult::from_json(&text).context(cal_path.display())?;
            let sweep_path = inputs.sweeps.clone().unwrap_or_else(|| run.path(PRESSURE_SWEEPS));
            let ds = SweepDataset::read_csv(open_reader(&sweep_path)?).context(sweep_path.display())?;
            let options =
                ExtractOptions { subtract_residual_electrostatics: config.analysis.subtract_residual_electrostatics };
            let curve = extract_pressure(&ds, &cal, radius, &options).context("pressure extraction")?;
            (curve, Some(cal))
        }
    };
    if measured.is_empty() {
        return Err(CliError::Config("experiment curve is empty; nothing to compare".into()));
    }

    let [(drude, dm), (plasma, pm)] = theory_pair(config, &measured.separations)?;
    let budget = config.error_budget();
    let experiment = apply_error_budget(&measured, &plasma, &budget).context("error budget")?;
    let mut report =
        compare_with_theory(&experiment, &drude, &plasma, budget.confidence).context("comparison")?;

    let mode = inputs.compensation.unwrap_or(config.analysis.compensation);
    let potential = config.ratio_potential(calibration.as_ref().map(CalibrationResult::v0_law))?;
    if config.analysis.ratio_v0 == RatioSource::Calibrated && calibration.is_none() {
        return Err(CliError::Config("ratio_v0 = \"calibrated\" cannot be used with --experiment".into()));
    }
    let mean_grid = config.experiment_config(run.seed)?.separations();
    let compensation = mode.voltage(&potential, &mean_grid);
    let casimir = config.calculator(Extrapolation::GeneralizedPlasma)?;
    let ratio = electric_to_casimir_ratio(&RATIO_SEPARATIONS, &potential, compensation, radius, &casimir)
        .context("ratio table")?;
    report.ratio_table = Some(ratio);

    let mut exp_meta = BTreeMap::new();
    exp_meta.insert("kind".into(), "experiment_with_budget".into());
    exp_meta.insert("confidence".into(), format_number(budget.confidence));
    exp_meta.insert("sigma_a_nm".into(), format_number(budget.sigma_a / NM));
    exp_meta.insert("sigma_P_random_Pa".into(), format_number(budget.sigma_p_random));
    exp_meta.insert("relative_systematic".into(), format_number(budget.relative_systematic));
    let files = [
        (run.path(REPORT_JSON), report.to_json()?.into_bytes()),
        (run.path(REPORT_EXPERIMENT), render_curve(&experiment, &exp_meta)?),
        (run.path(REPORT_DRUDE), render_curve(&drude, &dm)?),
        (run.path(REPORT_PLASMA), render_curve(&plasma, &pm)?),
    ];
    write_all(&run.out, &files)?;
    print!("{}", report.summary());
    Ok(())
}
