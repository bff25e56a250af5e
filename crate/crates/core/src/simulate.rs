//! Synthetic dynamic-AFM experiments: per-separation voltage sweeps of the
//! cantilever frequency shift
//!
//! ```text
//! Δω(a, V) = -C β_geom(a) (V - V0(a))² - C ∂F_C/∂a,   ∂F_C/∂a = 2πR P(a)
//! ```
//!
//! with a linear residual-potential law `V0(a)`, Gaussian read-out noise and a
//! piezo drift that is linear in acquisition time.
//!
//! Acquisition time is measured in sweeps: record `j` of sweep `k` is taken at
//! `τ = k + j / m`, where `m` is the number of records per sweep. When anchors
//! are enabled every sweep ends by re-measuring its first voltage, which is what
//! [`subtract_drift`] uses to estimate the drift rate.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constants::{MV, NM, UM};
use crate::csvio::{read_numeric_csv, write_metadata};
use crate::electrostatics::{beta_geometric, SpherePlateGeometry};
use crate::error::{Error, Result};
use crate::lifshitz::{sphere_gradient_from_pressure, PlatePressure};

/// Number of applied voltages per sweep in the standard protocol.
pub const PROTOCOL_VOLTAGES: usize = 11;
/// Travel of the piezo actuator.
pub const PIEZO_TRAVEL: f64 = 2.3 * UM;
/// Half-width of the default voltage list around the expected `V0`.
pub const DEFAULT_VOLTAGE_HALF_SPAN: f64 = 150.0 * MV;
pub const RNG_ALGORITHM: &str = "ChaCha8Rng";
pub const SWEEP_HEADER: [&str; 4] = ["z_piezo_nm", "applied_voltage_mV", "frequency_shift_rad_s", "sweep_index"];

/// Residual potential difference `V0(a) = slope·a + intercept`, with `a` in nm
/// and the result in mV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct V0Law {
    pub slope_mv_per_nm: f64,
    pub intercept_mv: f64,
}

impl V0Law {
    /// Untreated surfaces.
    pub const UNCLEANED: V0Law = V0Law { slope_mv_per_nm: 2.60e-3, intercept_mv: 31.95 };
    /// After the first full Ar-ion cleaning.
    pub const CLEANED: V0Law = V0Law { slope_mv_per_nm: 1.07e-3, intercept_mv: 0.928 };
    /// After the additional 60 min cleaning; the set used for the pressure measurement.
    pub const CLEANED_FINAL: V0Law = V0Law { slope_mv_per_nm: 0.917e-3, intercept_mv: -5.80 };

    pub fn new(slope_mv_per_nm: f64, intercept_mv: f64) -> Result<Self> {
        let law = Self { slope_mv_per_nm, intercept_mv };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope_mv_per_nm.is_finite() && self.intercept_mv.is_finite()) {
            return Err(Error::invalid("V0 law coefficients must be finite"));
        }
        Ok(())
    }

    /// `V0` in volts at separation `a` in metres. No domain check.
    pub fn at(&self, a: f64) -> f64 {
        (self.slope_mv_per_nm * (a / NM) + self.intercept_mv) * MV
    }

    /// Unweighted mean of `V0` over the given separations, volts.
    pub fn mean_over(&self, separations: &[f64]) -> f64 {
        separations.iter().map(|a| self.at(*a)).sum::<f64>() / separations.len() as f64
    }

    /// The same law with every potential shifted by `offset` volts.
    pub fn shifted(&self, offset: f64) -> Self {
        Self { intercept_mv: self.intercept_mv + offset / MV, ..*self }
    }
}

/// `V0(a)` in volts; `a` in metres.
pub fn v0_at(law: &V0Law, a: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::invalid(format!("separation must be positive, got {a}")));
    }
    Ok(law.at(a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Sphere radius, m.
    pub radius: f64,
    /// Closest separation (at `z = 0`), m.
    pub a0: f64,
    /// Calibration constant `C = ω0/(2k)`, rad·m/(N·s).
    pub calibration: f64,
    pub v0_law: V0Law,
    /// Applied voltages of one sweep, V.
    pub voltages: Vec<f64>,
    /// Piezo displacements, m.
    pub z_grid: Vec<f64>,
    /// Standard deviation of the read-out noise, rad/s.
    pub noise_sigma: f64,
    /// Drift of the frequency shift, rad/s per sweep.
    pub drift_rate: f64,
    pub seed: u64,
    /// Re-measure the first voltage at the end of every sweep.
    pub anchors: bool,
    /// Permit a voltage count other than the 11-voltage protocol.
    pub allow_nonstandard_voltage_count: bool,
}

/// `n` voltages uniformly spanning `v0_guess ± half_span`.
pub fn default_voltages(v0_guess: f64, half_span: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| v0_guess - half_span + 2.0 * half_span * i as f64 / (n - 1) as f64)
        .collect()
}

/// Piezo grid `0, step, ..` with `count` points.
pub fn uniform_z_grid(step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| i as f64 * step).collect()
}

impl ExperimentConfig {
    /// Protocol defaults around a given law: 11 voltages spanning `V0(a0) ± 150 mV`,
    /// a 1 nm grid from `a0` to 700 nm, noise sized for ≈2% pressure errors at 235 nm.
    pub fn protocol(radius: f64, a0: f64, calibration: f64, v0_law: V0Law, seed: u64) -> Self {
        let count = ((700.0 * NM - a0) / NM).round().max(0.0) as usize + 1;
        Self {
            radius,
            a0,
            calibration,
            v0_law,
            voltages: default_voltages(v0_law.at(a0), DEFAULT_VOLTAGE_HALF_SPAN, PROTOCOL_VOLTAGES),
            z_grid: uniform_z_grid(NM, count),
            noise_sigma: DEFAULT_NOISE_SIGMA,
            drift_rate: 0.0,
            seed,
            anchors: true,
            allow_nonstandard_voltage_count: false,
        }
    }

    pub fn separations(&self) -> Vec<f64> {
        self.z_grid.iter().map(|z| self.a0 + z).collect()
    }

    /// Checks everything except the voltage list.
    fn validate_common(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid(format!("radius must be positive, got {}", self.radius)));
        }
        if !(self.a0 > 0.0 && self.a0.is_finite()) {
            return Err(Error::invalid(format!("a0 must be positive, got {}", self.a0)));
        }
        if !(self.calibration > 0.0 && self.calibration.is_finite()) {
            return Err(Error::invalid(format!("calibration constant C must be positive, got {}", self.calibration)));
        }
        self.v0_law.validate()?;
        if self.z_grid.is_empty() {
            return Err(Error::invalid("z grid is empty"));
        }
        if self.z_grid.iter().any(|z| !(*z >= 0.0 && *z <= PIEZO_TRAVEL)) {
            return Err(Error::invalid(format!(
                "z grid must lie within the piezo travel [0, {} um]",
                PIEZO_TRAVEL / UM
            )));
        }
        if self.z_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("z grid must be strictly increasing"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise sigma must be non-negative"));
        }
        if !self.drift_rate.is_finite() {
            return Err(Error::invalid("drift rate must be finite"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_common()?;
        if self.voltages.len() != PROTOCOL_VOLTAGES && !self.allow_nonstandard_voltage_count {
            return Err(Error::invalid(format!(
                "{} voltages given; the protocol uses exactly {PROTOCOL_VOLTAGES} \
                 (set allow_nonstandard_voltage_count to override)",
                self.voltages.len()
            )));
        }
        if self.voltages.len() < 3 {
            return Err(Error::invalid("at least 3 voltages are needed to define a parabola"));
        }
        if self.voltages.iter().any(|v| !v.is_finite()) || self.voltages.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("voltages must be finite and strictly increasing"));
        }
        let (lo, hi) = (self.voltages[0], self.voltages[self.voltages.len() - 1]);
        for a in self.separations() {
            let v0 = self.v0_law.at(a);
            if !(lo < v0 && v0 < hi) {
                return Err(Error::invalid(format!(
                    "voltages [{} mV, {} mV] do not bracket V0 = {} mV at a = {} nm",
                    lo / MV,
                    hi / MV,
                    v0 / MV,
                    a / NM
                )));
            }
        }
        Ok(())
    }
}

/// Default read-out noise, rad/s.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.002;

/// Voltage-independent parts of the model at one separation.
struct ModelAt {
    beta: f64,
    v0: f64,
    casimir_shift: f64,
}

impl ModelAt {
    fn new(a: f64, config: &ExperimentConfig, casimir: &dyn PlatePressure) -> Result<Self> {
        let geometry = SpherePlateGeometry::new(config.radius, a)?;
        let gradient = sphere_gradient_from_pressure(casimir.plate_pressure(a)?, config.radius);
        Ok(Self {
            beta: config.calibration * beta_geometric(&geometry)?,
            v0: v0_at(&config.v0_law, a)?,
            casimir_shift: -config.calibration * gradient,
        })
    }

    fn shift(&self, v: f64) -> f64 {
        let dv = v - self.v0;
        -self.beta * dv * dv + self.casimir_shift
    }
}

/// Noiseless frequency shift at separation `a` and applied voltage `v`.
pub fn frequency_shift_model(
    a: f64,
    v: f64,
    config: &ExperimentConfig,
    casimir: &dyn PlatePressure,
) -> Result<f64> {
    Ok(ModelAt::new(a, config, casimir)?.shift(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// m
    pub z_piezo: f64,
    /// V
    pub applied_voltage: f64,
    /// rad/s
    pub frequency_shift: f64,
    pub sweep_index: usize,
}

/// One sweep: consecutive records sharing a sweep index, in acquisition order.
#[derive(Debug, Clone, Copy)]
pub struct Sweep<'a> {
    pub index: usize,
    pub z_piezo: f64,
    pub records: &'a [SweepRecord],
}

impl Sweep<'_> {
    pub fn voltages(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.applied_voltage).collect()
    }

    pub fn shifts(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.frequency_shift).collect()
    }
}

/// Records in acquisition order plus `#key=value` metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepDataset {
    pub records: Vec<SweepRecord>,
    pub metadata: BTreeMap<String, String>,
}

pub const META_ANCHORS: &str = "anchors";
pub const META_DRIFT_SUBTRACTED: &str = "drift_subtracted";
pub const META_DRIFT_RATE: &str = "drift_rate_estimate_rad_s_per_sweep";
pub const META_DRIFT_SIGMA: &str = "drift_rate_sigma_rad_s_per_sweep";

impl SweepDataset {
    pub fn sweeps(&self) -> Vec<Sweep<'_>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.records.len() {
            if i == self.records.len() || self.records[i].sweep_index != self.records[start].sweep_index {
                out.push(Sweep {
                    index: self.records[start].sweep_index,
                    z_piezo: self.records[start].z_piezo,
                    records: &self.records[start..i],
                });
                start = i;
            }
        }
        out
    }

    pub fn has_anchors(&self) -> bool {
        self.metadata.get(META_ANCHORS).map(String::as_str) == Some("true")
    }

    pub fn meta_f64(&self, key: &str) -> Option<f64> {
        self.metadata.get(key).and_then(|v| v.parse().ok())
    }

    /// Sweep indices increase, each sweep has one `z`, `z ≥ 0`.
    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::invalid("sweep dataset has no records"));
        }
        let sweeps = self.sweeps();
        if sweeps.windows(2).any(|w| w[1].index <= w[0].index) {
            return Err(Error::invalid("sweep indices must increase and each sweep must be contiguous"));
        }
        for s in &sweeps {
            if s.records.iter().any(|r| r.z_piezo != s.z_piezo) {
                return Err(Error::invalid(format!("sweep {} mixes piezo positions", s.index)));
            }
            if !(s.z_piezo >= 0.0) {
                return Err(Error::invalid(format!("sweep {} has negative z", s.index)));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        write_metadata(w, &self.metadata)?;
        writeln!(w, "{}", SWEEP_HEADER.join(","))?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{}",
                r.z_piezo / NM,
                r.applied_voltage / MV,
                r.frequency_shift,
                r.sweep_index
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let csv = read_numeric_csv(reader, &SWEEP_HEADER)?;
        let mut records = Vec::with_capacity(csv.rows.len());
        for (line, row) in &csv.rows {
            let idx = row[3];
            if !(idx >= 0.0 && idx.fract() == 0.0) {
                return Err(Error::Parse { line: *line, message: format!("sweep_index `{idx}` is not a non-negative integer") });
            }
            if row[0] < 0.0 {
                return Err(Error::Parse { line: *line, message: "z_piezo_nm must be non-negative".into() });
            }
            records.push(SweepRecord {
                z_piezo: row[0] * NM,
                applied_voltage: row[1] * MV,
                frequency_shift: row[2],
                sweep_index: idx as usize,
            });
        }
        let ds = Self { records, metadata: csv.metadata };
        ds.validate()?;
        Ok(ds)
    }
}

/// Shortest decimal for `x` after rounding to 15 significant digits, so that
/// unit conversions echo configured values verbatim.
pub fn format_number(x: f64) -> String {
    let rounded: f64 = format!("{x:.14e}").parse().unwrap_or(x);
    format!("{rounded}")
}

fn config_metadata(config: &ExperimentConfig, kind: &str, casimir: &dyn PlatePressure, per_sweep: usize) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        m.insert(k.to_string(), v);
    };
    put("kind", kind.into());
    put("rng", RNG_ALGORITHM.into());
    put("seed", config.seed.to_string());
    put("radius_um", format_number(config.radius / UM));
    put("noise_rad_s", format_number(config.noise_sigma));
    put("drift_rad_s_per_sweep", format_number(config.drift_rate));
    put("drift_model", "linear in acquisition time; record j of sweep k at k + j/records_per_sweep".into());
    put("casimir_model", casimir.label());
    put(META_ANCHORS, config.anchors.to_string());
    put("records_per_sweep", per_sweep.to_string());
    put("truth_a0_nm", format_number(config.a0 / NM));
    put("truth_C", format_number(config.calibration));
    put("truth_v0_slope_mV_per_nm", format_number(config.v0_law.slope_mv_per_nm));
    put("truth_v0_intercept_mV", format_number(config.v0_law.intercept_mv));
    m
}

fn generate(
    config: &ExperimentConfig,
    voltages: &[f64],
    casimir: &dyn PlatePressure,
    kind: &str,
) -> Result<SweepDataset> {
    let per_sweep = voltages.len() + usize::from(config.anchors);
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut records = Vec::with_capacity(config.z_grid.len() * per_sweep);
    for (k, z) in config.z_grid.iter().enumerate() {
        let model = ModelAt::new(config.a0 + z, config, casimir)?;
        let sequence = voltages.iter().chain(config.anchors.then_some(&voltages[0]));
        for (j, v) in sequence.enumerate() {
            let tau = k as f64 + j as f64 / per_sweep as f64;
            let shift = model.shift(*v) + noise.sample(&mut rng) + config.drift_rate * tau;
            records.push(SweepRecord { z_piezo: *z, applied_voltage: *v, frequency_shift: shift, sweep_index: k });
        }
    }
    let mut metadata = config_metadata(config, kind, casimir, per_sweep);
    metadata.insert(
        "voltages_mV".into(),
        voltages.iter().map(|v| format_number(v / MV)).collect::<Vec<_>>().join(" "),
    );
    Ok(SweepDataset { records, metadata })
}

/// One voltage sweep per piezo position, seeded and reproducible.
pub fn generate_sweeps(config: &ExperimentConfig, casimir: &dyn PlatePressure) -> Result<SweepDataset> {
    config.validate()?;
    generate(config, &config.voltages, casimir, "calibration")
}

/// Sweeps at a fixed compensating voltage repeated `repeats` times per position;
/// the configured voltage list is ignored.
pub fn generate_compensated_sweeps(
    config: &ExperimentConfig,
    compensation: f64,
    repeats: usize,
    casimir: &dyn PlatePressure,
) -> Result<SweepDataset> {
    config.validate_common()?;
    if repeats < 2 {
        return Err(Error::invalid("at least 2 repeats per separation are required"));
    }
    if !compensation.is_finite() {
        return Err(Error::invalid("compensation voltage must be finite"));
    }
    let voltages = vec![compensation; repeats];
    let mut ds = generate(config, &voltages, casimir, "compensated")?;
    ds.metadata.insert("compensation_mV".into(), format_number(compensation / MV));
    Ok(ds)
}

/// Least-squares drift rate from anchor repeats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    /// rad/s per sweep
    pub rate: f64,
    pub sigma: f64,
    pub anchors_used: usize,
}

/// Estimates the drift from the difference between each sweep's anchor and its
/// first record, subtracts `rate·τ` from every record and drops the anchors.
pub fn subtract_drift(dataset: &SweepDataset) -> Result<(SweepDataset, DriftEstimate)> {
    if !dataset.has_anchors() {
        return Err(Error::invalid(
            "dataset has no anchor re-measurements; regenerate it with anchors enabled",
        ));
    }
    dataset.validate()?;
    let sweeps = dataset.sweeps();
    let mut diffs = Vec::with_capacity(sweeps.len());
    let mut dt = 0.0;
    for s in &sweeps {
        let m = s.records.len();
        let (first, last) = (&s.records[0], &s.records[m - 1]);
        if m < 2 || first.applied_voltage != last.applied_voltage {
            return Err(Error::invalid(format!(
                "sweep {} does not end with a re-measurement of its first voltage",
                s.index
            )));
        }
        if dt != 0.0 && (m - 1) as f64 / m as f64 != dt {
            return Err(Error::invalid("sweeps differ in length; cannot place anchors in time"));
        }
        dt = (m - 1) as f64 / m as f64;
        diffs.push(last.frequency_shift - first.frequency_shift);
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let rate = mean / dt;
    let sigma = if diffs.len() > 1 {
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt() / dt
    } else {
        f64::NAN
    };

    let mut records = Vec::with_capacity(dataset.records.len() - sweeps.len());
    for s in &sweeps {
        let m = s.records.len();
        for (j, r) in s.records[..m - 1].iter().enumerate() {
            let tau = s.index as f64 + j as f64 / m as f64;
            records.push(SweepRecord { frequency_shift: r.frequency_shift - rate * tau, ..*r });
        }
    }
    let mut metadata = dataset.metadata.clone();
    metadata.insert(META_ANCHORS.into(), "false".into());
    metadata.insert(META_DRIFT_SUBTRACTED.into(), "true".into());
    metadata.insert(META_DRIFT_RATE.into(), format!("{rate:e}"));
    metadata.insert(META_DRIFT_SIGMA.into(), format!("{sigma:e}"));
    let estimate = DriftEstimate { rate, sigma, anchors_used: sweeps.len() };
    Ok((SweepDataset { records, metadata }, estimate))
}
