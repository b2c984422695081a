//! Config-driven pipelines: source model → detection → analysis, with
//! deterministic CSV/JSON outputs.
//!
//! A scenario is one TOML file. Unknown keys are rejected. Schema problems
//! surface as [`Error::Config`]; configs that parse but describe an
//! impossible setup surface as [`Error::Infeasible`].

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    detection_threshold, differential_rate, fit_crossover, fit_power_law, fit_power_law_poisson,
    CrossoverFit, DifferentialResult, FitReport, PowerLawFit, RatePoint,
};
use crate::detection::{
    chopper_phase_histogram, count_chopped, generate_timetags, simulate_chopped_counts, ChoppedCounts,
    DetectionConfig, TimeTagStream, TIMETAG_HEADER,
};
use crate::error::{Error, Result};
use crate::model::{
    bandwidth_from_wavelength, etpa_rate, g2_zero, sigma_e, tpa_rate_broadband, AbsorberSpec, PhaseMatching,
    Pump, RateParams, SourceSpec, SPEED_OF_LIGHT,
};
use crate::rng::substream;
use crate::source::{sample_pair_frequencies, G2Accumulator, JsaModel, PulseSampler};
use crate::spectrometry::{
    jsi_histogram, marginal_spectrum, Binning, DispersiveFiber, JsiHistogram, SpectralHistogram, Spectrometer,
    TimingReference,
};

pub const BUILTIN_NAMES: [&str; 3] = ["replication-cw", "bsv-sweep", "sfg-crossover"];

const BUILTIN_REPLICATION: &str = include_str!("../scenarios/replication-cw.toml");
const BUILTIN_BSV: &str = include_str!("../scenarios/bsv-sweep.toml");
const BUILTIN_SFG: &str = include_str!("../scenarios/sfg-crossover.toml");

/// Header of every `<name>.points.csv`. The first four columns are what
/// [`analyze_file`] reads back.
pub const POINTS_HEADER: &str = "x,y,exposure,background,rep_rate_hz,photons_per_mode,g2,g2_mc,\
predicted_rate_hz,open_counts,closed_counts,open_time_s,closed_time_s,rate_hz,sigma_hz,z,r_det_hz";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    ReplicationCw,
    BsvSweep,
    SfgCrossover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Artifact {
    Points,
    Fit,
    Report,
    Timetags,
}

fn all_artifacts() -> Vec<Artifact> {
    vec![Artifact::Points, Artifact::Fit, Artifact::Report, Artifact::Timetags]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PumpKind {
    Cw,
    Pulsed,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub center_wavelength_m: f64,
    pub fwhm_wavelength_m: f64,
    pub mode_area_m2: f64,
    pub phase_matching: PhaseMatching,
    #[serde(default = "one")]
    pub temporal_modes: f64,
    pub pump: PumpKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rep_rate_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pump_pulse_duration_s: Option<f64>,
}

impl SourceConfig {
    pub fn to_spec(&self) -> Result<SourceSpec> {
        let pump = match self.pump {
            PumpKind::Cw => Pump::Cw,
            PumpKind::Pulsed => Pump::Pulsed {
                rep_rate: self
                    .rep_rate_hz
                    .ok_or_else(|| Error::Config("[source] pump = \"pulsed\" needs rep_rate_hz".into()))?,
                pump_pulse_duration: self.pump_pulse_duration_s.ok_or_else(|| {
                    Error::Config("[source] pump = \"pulsed\" needs pump_pulse_duration_s".into())
                })?,
            },
        };
        SourceSpec::from_wavelengths(
            self.center_wavelength_m,
            self.fwhm_wavelength_m,
            self.mode_area_m2,
            self.phase_matching,
            self.temporal_modes,
            pump,
        )
        .map_err(infeasible)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbsorberConfig {
    pub sigma2_gm: f64,
    pub tpa_linewidth_hz: f64,
}

impl Default for AbsorberConfig {
    fn default() -> Self {
        let r = AbsorberSpec::rhodamine_default();
        Self { sigma2_gm: r.sigma2_gm, tpa_linewidth_hz: r.tpa_linewidth }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub f: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub avg_power_w: f64,
    pub rep_rate_min_hz: f64,
    pub rep_rate_max_hz: f64,
    pub points: usize,
    pub anchor_rep_rate_hz: f64,
    pub anchor_rate_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossoverConfig {
    pub photons_min: f64,
    pub photons_max: f64,
    pub points: usize,
    /// Expected signal counts per point; sets each point's duration.
    pub target_counts: f64,
    pub anchor_photons_per_pulse: f64,
    pub anchor_rate_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicationConfig {
    pub avg_power_w: f64,
    pub signal_rate_hz: f64,
    #[serde(default)]
    pub emit_sync: bool,
    #[serde(default = "default_phase_bins")]
    pub phase_bins: usize,
}

fn default_phase_bins() -> usize {
    50
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    /// Pulses sampled per point for the Monte Carlo g²(0); 0 disables it.
    pub pulses: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self { pulses: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all_artifacts")]
    pub outputs: Vec<Artifact>,
    pub source: SourceConfig,
    #[serde(default)]
    pub absorber: AbsorberConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateConfig>,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossover: Option<CrossoverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replication: Option<ReplicationConfig>,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
}

/// Command-line overrides applied on top of a parsed config.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub points: Option<usize>,
    pub mc_pulses: Option<usize>,
}

fn infeasible(e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Infeasible(m),
        other => other,
    }
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Infeasible(msg()))
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "replication-cw" => BUILTIN_REPLICATION,
            "bsv-sweep" => BUILTIN_BSV,
            "sfg-crossover" => BUILTIN_SFG,
            other => {
                return Err(Error::Config(format!(
                    "unknown built-in scenario `{other}`; choose one of {}",
                    BUILTIN_NAMES.join(", ")
                )))
            }
        };
        Self::from_toml(text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = o.points {
            if let Some(sw) = &mut self.sweep {
                sw.points = p;
            }
            if let Some(c) = &mut self.crossover {
                c.points = p;
            }
        }
        if let Some(m) = o.mc_pulses {
            self.monte_carlo.pulses = m;
        }
    }

    fn rate_params(&self) -> Result<RateParams> {
        match self.rate {
            Some(r) => RateParams::new(r.f, r.xi).map_err(infeasible),
            None => Ok(RateParams::default_for(self.source.phase_matching)),
        }
    }

    fn absorber(&self) -> Result<AbsorberSpec> {
        AbsorberSpec::new(self.absorber.sigma2_gm, self.absorber.tpa_linewidth_hz, 1.0).map_err(infeasible)
    }

    /// Schema-level checks first (exit code 2), then physical feasibility.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(Error::Config(format!("name must be a plain file stem, got `{}`", self.name)));
        }
        let (section, present) = match self.kind {
            ScenarioKind::ReplicationCw => ("replication", self.replication.is_some()),
            ScenarioKind::BsvSweep => ("sweep", self.sweep.is_some()),
            ScenarioKind::SfgCrossover => ("crossover", self.crossover.is_some()),
        };
        if !present {
            return Err(Error::Config(format!(
                "kind = \"{}\" requires a [{section}] section",
                kind_name(self.kind)
            )));
        }
        let wants_pulsed = self.kind != ScenarioKind::ReplicationCw;
        if wants_pulsed != (self.source.pump == PumpKind::Pulsed) {
            return Err(Error::Config(format!(
                "kind = \"{}\" requires pump = \"{}\"",
                kind_name(self.kind),
                if wants_pulsed { "pulsed" } else { "cw" }
            )));
        }
        self.source.to_spec()?;
        self.detection.validate().map_err(infeasible)?;
        self.absorber()?;
        self.rate_params()?;
        match self.kind {
            ScenarioKind::ReplicationCw => {
                let r = self.replication.as_ref().expect("checked above");
                require(r.avg_power_w >= 0.0 && r.avg_power_w.is_finite(), || {
                    format!("avg_power_w must be >= 0, got {}", r.avg_power_w)
                })?;
                require(r.signal_rate_hz >= 0.0 && r.signal_rate_hz.is_finite(), || {
                    format!("signal_rate_hz must be >= 0, got {}", r.signal_rate_hz)
                })?;
                require(r.phase_bins > 0, || "phase_bins must be at least 1".into())?;
                require(self.detection.duration * self.detection.chopper_freq >= 1.0, || {
                    "measurement must span at least one chopper period".into()
                })?;
            }
            ScenarioKind::BsvSweep => {
                let s = self.sweep.as_ref().expect("checked above");
                require(positive(s.avg_power_w), || format!("avg_power_w must be > 0, got {}", s.avg_power_w))?;
                require(positive(s.rep_rate_min_hz) && s.rep_rate_max_hz > s.rep_rate_min_hz, || {
                    "need 0 < rep_rate_min_hz < rep_rate_max_hz".into()
                })?;
                require(s.points >= 3, || format!("a sweep needs at least 3 points, got {}", s.points))?;
                require(positive(s.anchor_rep_rate_hz) && positive(s.anchor_rate_hz), || {
                    "anchor rep rate and anchor rate must be > 0".into()
                })?;
            }
            ScenarioKind::SfgCrossover => {
                let c = self.crossover.as_ref().expect("checked above");
                require(positive(c.photons_min) && c.photons_max > c.photons_min, || {
                    "need 0 < photons_min < photons_max".into()
                })?;
                require(c.points >= 4, || format!("a crossover sweep needs at least 4 points, got {}", c.points))?;
                require(positive(c.target_counts), || "target_counts must be > 0".into())?;
                require(positive(c.anchor_photons_per_pulse) && positive(c.anchor_rate_hz), || {
                    "anchor photon number and anchor rate must be > 0".into()
                })?;
            }
        }
        Ok(())
    }
}

fn kind_name(k: ScenarioKind) -> &'static str {
    match k {
        ScenarioKind::ReplicationCw => "replication-cw",
        ScenarioKind::BsvSweep => "bsv-sweep",
        ScenarioKind::SfgCrossover => "sfg-crossover",
    }
}

/// One row of the points table. Columns not meaningful for a scenario kind
/// are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub x: f64,
    pub y: f64,
    pub exposure: f64,
    pub background: f64,
    pub rep_rate_hz: Option<f64>,
    pub photons_per_mode: Option<f64>,
    pub g2: Option<f64>,
    pub g2_mc: Option<f64>,
    pub predicted_rate_hz: f64,
    pub counts: ChoppedCounts,
    pub differential: DifferentialResult,
    pub r_det_hz: f64,
}

impl PointResult {
    pub fn rate_point(&self) -> RatePoint {
        RatePoint { x: self.x, rate: self.y, exposure: self.exposure, background: self.background }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub subject: String,
    pub rate_hz: f64,
    pub r_det_hz: f64,
    pub z: f64,
    pub verdict: String,
}

impl Verdict {
    fn new(subject: String, d: &DifferentialResult, r_det: f64, k: f64) -> Self {
        Self {
            subject,
            rate_hz: d.rate_estimate,
            r_det_hz: r_det,
            z: d.z_score,
            verdict: if d.exceeds(k) { "detected" } else { "below threshold" }.into(),
        }
    }

    pub fn detected(&self) -> bool {
        self.verdict == "detected"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FitSummary {
    PowerLaw {
        #[serde(flatten)]
        fit: PowerLawFit,
        excluded_points: Vec<usize>,
    },
    Crossover {
        #[serde(flatten)]
        fit: CrossoverFit,
        expected_n_cross: f64,
    },
    Threshold {
        r_det_hz: f64,
        count_threshold: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub seed: u64,
    /// Wall-clock time of the run; the only non-reproducible field.
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: ScenarioConfig,
    /// Detected rate per unit model rate, fixed by the scenario's anchor.
    pub calibration_constant: f64,
    pub points: Vec<PointResult>,
    pub fit: FitSummary,
    pub fit_report: FitReport,
    pub verdicts: Vec<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub predicted_endpoint_rate_hz: Option<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub stream: Option<TimeTagStream>,
    pub phase_histogram: Option<Vec<u64>>,
}

fn provenance(seed: u64) -> Provenance {
    Provenance {
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    }
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == count {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// Power-law fit over the points with a positive rate. Returns the fit and
/// the indices left out.
pub fn power_law_over(points: &[RatePoint]) -> Result<(PowerLawFit, Vec<usize>)> {
    let (kept, excluded): (Vec<_>, Vec<_>) = points.iter().enumerate().partition(|(_, p)| p.rate > 0.0);
    let kept: Vec<RatePoint> = kept.into_iter().map(|(_, p)| *p).collect();
    let excluded: Vec<usize> = excluded.into_iter().map(|(i, _)| i).collect();
    let fit = if kept.iter().all(|p| p.exposure > 0.0) {
        fit_power_law_poisson(&kept)?
    } else {
        let xy: Vec<(f64, f64)> = kept.iter().map(|p| (p.x, p.rate)).collect();
        fit_power_law(&xy, None)?
    };
    Ok((fit, excluded))
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    cfg.validate()?;
    match cfg.kind {
        ScenarioKind::ReplicationCw => run_replication(cfg),
        ScenarioKind::BsvSweep => run_bsv_sweep(cfg),
        ScenarioKind::SfgCrossover => run_sfg_crossover(cfg),
    }
}

fn run_replication(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let r = cfg.replication.expect("validated");
    let det = &cfg.detection;
    let stream = generate_timetags(r.signal_rate_hz, det, cfg.seed, r.emit_sync).map_err(infeasible)?;
    let cc = count_chopped(&stream)?;
    let d = differential_rate(&cc)?;
    let r_det = detection_threshold(det.dark_rate, det.duration, det.threshold_k, det.duty_cycle)?;
    let histogram = if stream.fluor_count() > 0 {
        Some(chopper_phase_histogram(&stream, det.chopper_freq, r.phase_bins)?)
    } else {
        None
    };
    let point = PointResult {
        x: r.avg_power_w,
        y: d.rate_estimate,
        exposure: cc.open_time,
        background: det.dark_rate,
        rep_rate_hz: None,
        photons_per_mode: Some(cfg.source.to_spec()?.excitation(r.avg_power_w).map_err(infeasible)?.photons_per_mode_n),
        g2: None,
        g2_mc: None,
        predicted_rate_hz: r.signal_rate_hz,
        counts: cc,
        differential: d,
        r_det_hz: r_det,
    };
    let verdicts = vec![Verdict::new("replication".into(), &d, r_det, det.threshold_k)];
    let count_threshold = crate::analysis::count_threshold(det.dark_rate, det.duration, det.threshold_k)?;
    Ok(RunOutput {
        report: RunReport {
            scenario: cfg.clone(),
            calibration_constant: 1.0,
            points: vec![point],
            fit: FitSummary::Threshold { r_det_hz: r_det, count_threshold },
            fit_report: FitReport::from_differential(&d, r_det),
            verdicts,
            predicted_endpoint_rate_hz: None,
            provenance: provenance(cfg.seed),
        },
        stream: Some(stream),
        phase_histogram: histogram,
    })
}

fn mc_g2<R: Rng + ?Sized>(n: f64, pm: PhaseMatching, pulses: usize, rng: &mut R) -> Result<Option<f64>> {
    if pulses == 0 {
        return Ok(None);
    }
    let sampler = PulseSampler::new(n, 1, pm)?;
    let mut acc = G2Accumulator::default();
    let mut buf = sampler.sample(rng);
    for _ in 0..pulses {
        sampler.sample_into(rng, &mut buf);
        acc.push(buf.total_photons);
    }
    Ok(acc.estimate().map(|(g, _)| g))
}

fn chopped_point<R: Rng + ?Sized>(
    rate: f64,
    det: &DetectionConfig,
    rng: &mut R,
) -> Result<(ChoppedCounts, DifferentialResult, f64)> {
    let cc = simulate_chopped_counts(rate, det, rng).map_err(infeasible)?;
    let d = differential_rate(&cc)?;
    let r_det = detection_threshold(det.dark_rate, det.duration, det.threshold_k, det.duty_cycle)?;
    Ok((cc, d, r_det))
}

fn run_bsv_sweep(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let sw = cfg.sweep.expect("validated");
    let src = cfg.source.to_spec()?;
    let absorber = cfg.absorber()?;
    let pm = src.phase_matching;
    // time-averaged two-photon rate per molecule
    let model = |rep: f64| -> Result<(f64, f64, f64, f64)> {
        let s = src.with_rep_rate(rep).map_err(infeasible)?;
        let ex = s.excitation(sw.avg_power_w).map_err(infeasible)?;
        let g2 = g2_zero(ex.photons_per_mode_n, pm)?;
        let r = tpa_rate_broadband(ex.flux_density_phi, absorber.sigma2_si, g2)? * s.pulse_duration() * rep;
        Ok((r, ex.photons_per_pulse_n, ex.photons_per_mode_n, g2))
    };
    let anchor = model(sw.anchor_rep_rate_hz)?.0;
    if !(anchor > 0.0) {
        return Err(Error::Infeasible("model rate at the anchor point is zero".into()));
    }
    let calibration = sw.anchor_rate_hz / anchor;
    let reps = log_space(sw.rep_rate_min_hz, sw.rep_rate_max_hz, sw.points);
    let det = cfg.detection;
    let points: Vec<PointResult> = reps
        .par_iter()
        .enumerate()
        .map(|(i, &rep)| -> Result<PointResult> {
            let mut rng = substream(cfg.seed, i as u64);
            let (r, big_n, n, g2) = model(rep)?;
            let predicted = calibration * r;
            let (cc, d, r_det) = chopped_point(predicted, &det, &mut rng)?;
            let g2_mc = mc_g2(n, pm, cfg.monte_carlo.pulses, &mut rng)?;
            // per-pulse counts; exposure counted in pulses
            Ok(PointResult {
                x: big_n,
                y: d.rate_estimate / rep,
                exposure: cc.open_time * rep,
                background: det.dark_rate / rep,
                rep_rate_hz: Some(rep),
                photons_per_mode: Some(n),
                g2: Some(g2),
                g2_mc,
                predicted_rate_hz: predicted,
                counts: cc,
                differential: d,
                r_det_hz: r_det,
            })
        })
        .collect::<Result<_>>()?;
    let rate_points: Vec<RatePoint> = points.iter().map(PointResult::rate_point).collect();
    let (fit, excluded) = power_law_over(&rate_points)?;
    let verdicts = points
        .iter()
        .map(|p| {
            Verdict::new(format!("rep_rate_hz={}", p.rep_rate_hz.unwrap_or(0.0)), &p.differential, p.r_det_hz, det.threshold_k)
        })
        .collect();
    let endpoint = points.last().map(|p| p.predicted_rate_hz);
    Ok(RunOutput {
        report: RunReport {
            scenario: cfg.clone(),
            calibration_constant: calibration,
            fit_report: FitReport::from_power_law(&fit),
            fit: FitSummary::PowerLaw { fit, excluded_points: excluded },
            points,
            verdicts,
            predicted_endpoint_rate_hz: endpoint,
            provenance: provenance(cfg.seed),
        },
        stream: None,
        phase_histogram: None,
    })
}

fn run_sfg_crossover(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let c = cfg.crossover.expect("validated");
    let src = cfg.source.to_spec()?;
    let absorber = cfg.absorber()?;
    let params = cfg.rate_params()?;
    let rep = match src.pump {
        Pump::Pulsed { rep_rate, .. } => rep_rate,
        Pump::Cw => unreachable!("validated"),
    };
    let se = sigma_e(params.f, absorber.sigma2_si, src.mode_area, src.entanglement_time)?;
    let energy = crate::model::photon_energy(src.center_wavelength)?;
    let model = |big_n: f64| -> Result<(f64, f64)> {
        let ex = src.excitation(big_n * energy * rep).map_err(infeasible)?;
        let r = etpa_rate(ex.flux_density_phi, se, absorber.sigma2_si, params.xi)? * src.pulse_duration() * rep;
        Ok((r, ex.photons_per_mode_n))
    };
    let calibration = c.anchor_rate_hz / model(c.anchor_photons_per_pulse)?.0;
    let ns = log_space(c.photons_min, c.photons_max, c.points);
    let points: Vec<PointResult> = ns
        .par_iter()
        .enumerate()
        .map(|(i, &big_n)| -> Result<PointResult> {
            let mut rng = substream(cfg.seed, i as u64);
            let (r, n) = model(big_n)?;
            let predicted = calibration * r;
            let det = DetectionConfig {
                duration: c.target_counts / (predicted * cfg.detection.duty_cycle),
                ..cfg.detection
            };
            let (cc, d, r_det) = chopped_point(predicted, &det, &mut rng)?;
            Ok(PointResult {
                x: big_n,
                y: d.rate_estimate,
                exposure: cc.open_time,
                background: det.dark_rate,
                rep_rate_hz: Some(rep),
                photons_per_mode: Some(n),
                g2: None,
                g2_mc: None,
                predicted_rate_hz: predicted,
                counts: cc,
                differential: d,
                r_det_hz: r_det,
            })
        })
        .collect::<Result<_>>()?;
    let rate_points: Vec<RatePoint> = points.iter().map(PointResult::rate_point).collect();
    let fit = fit_crossover(&rate_points)?;
    let verdicts = points
        .iter()
        .map(|p| Verdict::new(format!("photons_per_pulse={}", p.x), &p.differential, p.r_det_hz, cfg.detection.threshold_k))
        .collect();
    Ok(RunOutput {
        report: RunReport {
            scenario: cfg.clone(),
            calibration_constant: calibration,
            fit_report: FitReport::from_crossover(&fit),
            fit: FitSummary::Crossover { fit, expected_n_cross: params.f * src.temporal_modes / params.xi },
            points,
            verdicts,
            predicted_endpoint_rate_hz: None,
            provenance: provenance(cfg.seed),
        },
        stream: None,
        phase_histogram: None,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_points_csv<W: Write>(points: &[PointResult], mut w: W) -> Result<()> {
    writeln!(w, "{POINTS_HEADER}")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.x,
            p.y,
            p.exposure,
            p.background,
            opt(p.rep_rate_hz),
            opt(p.photons_per_mode),
            opt(p.g2),
            opt(p.g2_mc),
            p.predicted_rate_hz,
            p.counts.open_counts,
            p.counts.closed_counts,
            p.counts.open_time,
            p.counts.closed_time,
            p.differential.rate_estimate,
            p.differential.sigma,
            p.differential.z_score,
            p.r_det_hz
        )?;
    }
    Ok(())
}

pub fn write_phase_csv<W: Write>(hist: &[u64], mut w: W) -> Result<()> {
    writeln!(w, "phase_start,count")?;
    let n = hist.len() as f64;
    for (i, c) in hist.iter().enumerate() {
        writeln!(w, "{},{c}", i as f64 / n)?;
    }
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes the requested artifacts into `dir` and returns their paths.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let cfg = &out.report.scenario;
    let name = &cfg.name;
    let mut written = Vec::new();
    for artifact in &cfg.outputs {
        match artifact {
            Artifact::Points => {
                let p = dir.join(format!("{name}.points.csv"));
                write_file(&p, |w| write_points_csv(&out.report.points, w))?;
                written.push(p);
            }
            Artifact::Fit => {
                let p = dir.join(format!("{name}.fit.json"));
                fs::write(&p, out.report.fit_report.to_json()?)?;
                written.push(p);
            }
            Artifact::Report => {
                let p = dir.join(format!("{name}.report.json"));
                fs::write(&p, serde_json::to_string_pretty(&out.report)? + "\n")?;
                written.push(p);
            }
            Artifact::Timetags => {
                if let Some(stream) = &out.stream {
                    let p = dir.join(format!("{name}.timetags.csv"));
                    stream.write(&p)?;
                    written.push(crate::detection::sidecar_path(&p));
                    written.push(p);
                }
                if let Some(h) = &out.phase_histogram {
                    let p = dir.join(format!("{name}.phase.csv"));
                    write_file(&p, |w| write_phase_csv(h, w))?;
                    written.push(p);
                }
            }
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    PowerLaw,
    Crossover,
}

/// Strips `.csv` and a trailing `.points` or `.timetags` from a file name.
pub fn analysis_stem(path: &Path) -> String {
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = name.strip_suffix(".csv").unwrap_or(&name);
    let name = name
        .strip_suffix(".points")
        .or_else(|| name.strip_suffix(".timetags"))
        .unwrap_or(name);
    name.to_string()
}

/// Reads `x,y[,exposure[,background]]` columns by name; other columns are ignored.
pub fn read_rate_points<R: BufRead>(r: R) -> Result<Vec<RatePoint>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let (ix, iy) = match (find("x"), find("y")) {
        (Some(x), Some(y)) => (x, y),
        _ => {
            return Err(Error::Format { line: 1, msg: format!("expected columns `x` and `y`, found `{header}`") });
        }
    };
    let (ie, ib) = (find("exposure"), find("background"));
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 2;
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        let get = |idx: usize, name: &str| -> Result<f64> {
            let s = fields.get(idx).ok_or_else(|| Error::Format { line: lineno, msg: format!("missing `{name}`") })?;
            s.parse().map_err(|_| Error::Format { line: lineno, msg: format!("bad `{name}` value `{s}`") })
        };
        out.push(RatePoint {
            x: get(ix, "x")?,
            rate: get(iy, "y")?,
            exposure: ie.map(|i| get(i, "exposure")).transpose()?.unwrap_or(0.0),
            background: ib.map(|i| get(i, "background")).transpose()?.unwrap_or(0.0),
        });
    }
    if out.is_empty() {
        return Err(Error::Empty("points file has no rows"));
    }
    Ok(out)
}

/// Fits an external file. Time-tag files (recognized by their header) give
/// a differential-rate report; point tables give a power-law or crossover fit.
pub fn analyze_file(path: &Path, fit: FitKind) -> Result<FitReport> {
    let mut first = String::new();
    BufReader::new(fs::File::open(path)?).read_line(&mut first)?;
    if first.trim_end() == TIMETAG_HEADER {
        let stream = TimeTagStream::read(path)?;
        let det = &stream.metadata.detection;
        let d = differential_rate(&count_chopped(&stream)?)?;
        let r_det = detection_threshold(det.dark_rate, det.duration, det.threshold_k, det.duty_cycle)?;
        return Ok(FitReport::from_differential(&d, r_det));
    }
    let points = read_rate_points(BufReader::new(fs::File::open(path)?))?;
    match fit {
        FitKind::PowerLaw => Ok(FitReport::from_power_law(&power_law_over(&points)?.0)),
        FitKind::Crossover => {
            if points.iter().any(|p| p.exposure <= 0.0) {
                return Err(Error::Format { line: 1, msg: "crossover fit needs a positive `exposure` column".into() });
            }
            Ok(FitReport::from_crossover(&fit_crossover(&points)?))
        }
    }
}

/// Time-of-flight spectrometer presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TofPreset {
    /// Isolated pairs (n = 0.01): anti-correlated joint spectrum.
    LowGain,
    /// Bright squeezed vacuum (n = 1e4): correlations washed out.
    HighGain,
}

impl TofPreset {
    pub fn photons_per_mode(self) -> f64 {
        match self {
            TofPreset::LowGain => 0.01,
            TofPreset::HighGain => 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TofSettings {
    pub center_wavelength_m: f64,
    pub fwhm_wavelength_m: f64,
    pub schmidt_number: f64,
    pub photons_per_mode: f64,
    pub samples: usize,
    pub spectrum_bins: usize,
    pub jsi_bins: usize,
    pub seed: u64,
}

impl TofSettings {
    pub fn preset(p: TofPreset) -> Self {
        Self {
            center_wavelength_m: 1.064e-6,
            fwhm_wavelength_m: 30e-9,
            schmidt_number: 100.0,
            photons_per_mode: p.photons_per_mode(),
            samples: 200_000,
            spectrum_bins: 120,
            jsi_bins: 61,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TofSummary {
    pub settings: TofSettings,
    pub marginal_fwhm_m: f64,
    pub diagonal_intensity: f64,
    pub antidiagonal_intensity: f64,
    pub ridge_contrast: f64,
    pub correlated_fraction: f64,
}

pub struct TofResult {
    pub summary: TofSummary,
    pub spectrum: SpectralHistogram,
    pub jsi: JsiHistogram,
}

/// Simulated marginal spectrum and joint spectral intensity, both through
/// the default 1 km fiber spectrometer.
pub fn run_tof(settings: &TofSettings) -> Result<TofResult> {
    let center = SPEED_OF_LIGHT / settings.center_wavelength_m;
    let b = bandwidth_from_wavelength(settings.center_wavelength_m, settings.fwhm_wavelength_m)?;
    let jsa = JsaModel::degenerate(center, b, settings.schmidt_number)?;
    let pairs = sample_pair_frequencies(&jsa, settings.photons_per_mode, settings.samples, settings.seed)?;
    let mut rng = substream(settings.seed, 1);
    let marginal_spec = Spectrometer::default();
    let spectrum = marginal_spectrum(&pairs, &jsa, &marginal_spec, Binning::auto(settings.spectrum_bins), &mut rng)?;
    let joint_spec = Spectrometer::new(DispersiveFiber::default(), 50e-12, TimingReference::PulseClock)?;
    let jsi = jsi_histogram(&pairs, &jsa, &joint_spec, Binning::auto(settings.jsi_bins), &mut rng)?;
    let (diag, anti) = jsi.line_intensities();
    let correlated = pairs.iter().filter(|p| p.correlated).count() as f64 / pairs.len() as f64;
    Ok(TofResult {
        summary: TofSummary {
            settings: settings.clone(),
            marginal_fwhm_m: spectrum.fwhm(),
            diagonal_intensity: diag,
            antidiagonal_intensity: anti,
            ridge_contrast: jsi.ridge_contrast(),
            correlated_fraction: correlated,
        },
        spectrum,
        jsi,
    })
}

/// Chopped time-tag simulation with a folded phase histogram.
pub struct ChopperResult {
    pub stream: TimeTagStream,
    pub histogram: Vec<u64>,
    pub differential: DifferentialResult,
    pub r_det: f64,
}

pub fn run_chopper(signal_rate: f64, det: &DetectionConfig, seed: u64, bins: usize, emit_sync: bool) -> Result<ChopperResult> {
    let stream = generate_timetags(signal_rate, det, seed, emit_sync)?;
    let differential = differential_rate(&count_chopped(&stream)?)?;
    let histogram = if stream.fluor_count() > 0 {
        chopper_phase_histogram(&stream, det.chopper_freq, bins)?
    } else {
        vec![0; bins]
    };
    let r_det = detection_threshold(det.dark_rate, det.duration, det.threshold_k, det.duty_cycle)?;
    Ok(ChopperResult { stream, histogram, differential, r_det })
}
