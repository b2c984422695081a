use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tpa_sim::analysis::FitReport;
use tpa_sim::detection::DetectionConfig;
use tpa_sim::model::{
    crossover_flux, entanglement_time, etpa_rate, g2_zero, gm_to_si, photons_per_mode, sigma_e, PhaseMatching,
};
use tpa_sim::scenario::{
    analysis_stem, analyze_file, run_chopper, run_scenario, run_tof, write_outputs, write_phase_csv, FitKind,
    FitSummary, Overrides, ScenarioConfig, ScenarioKind, TofPreset, TofSettings,
};
use tpa_sim::{Error, Result};

#[derive(Parser)]
#[command(name = "tpa-sim", version, about = "Two-photon absorption and SFG simulator for squeezed light")]
struct Cli {
    /// Scenario config (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of sweep points
    #[arg(long, global = true)]
    points: Option<usize>,
    /// Pulses sampled per point for Monte Carlo g²(0)
    #[arg(long = "mc-pulses", global = true)]
    mc_pulses: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from --config or a built-in
    Run {
        #[arg(long, value_parser = ["replication-cw", "bsv-sweep", "sfg-crossover"])]
        builtin: Option<String>,
    },
    /// Evaluate the closed-form rate laws
    Rates(RatesArgs),
    /// Constant-power repetition-rate sweep with power-law fit
    Sweep(SweepArgs),
    /// Linear-to-quadratic crossover sweep with a + bN fit
    SfgCrossover(SfgArgs),
    /// Chopped time-tag generation and phase histogram
    ChopperSim(ChopperArgs),
    /// Time-of-flight marginal spectrum and joint spectral intensity
    TofSpec(TofArgs),
    /// Fit an external points CSV or time-tag file
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "power-law")]
        fit: FitArg,
    },
}

#[derive(Args)]
struct RatesArgs {
    /// Two-photon cross-section in GM
    #[arg(long, default_value_t = 10.0)]
    sigma2_gm: f64,
    /// Two-photon cross-section in m⁴·s (overrides --sigma2-gm)
    #[arg(long)]
    sigma2: Option<f64>,
    /// Mode / entanglement area (m²)
    #[arg(long, default_value_t = 1e-11)]
    area: f64,
    /// Entanglement time (s)
    #[arg(long, conflicts_with = "bandwidth")]
    ent_time: Option<f64>,
    /// Bandwidth (Hz), used when --ent-time is absent
    #[arg(long, default_value_t = 7.95e12)]
    bandwidth: f64,
    #[arg(long, default_value_t = 1.0)]
    f: f64,
    /// Quadratic weight; defaults to the high-gain g²(0)
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long, value_enum, default_value = "type0-or-i")]
    phase_matching: PmArg,
    /// Photon flux density (photons/m²/s) at which to evaluate the rates
    #[arg(long)]
    phi: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    power: Option<f64>,
    #[arg(long)]
    rep_min: Option<f64>,
    #[arg(long)]
    rep_max: Option<f64>,
    /// Measurement time per point (s)
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Args)]
struct SfgArgs {
    #[arg(long)]
    modes: Option<f64>,
    #[arg(long)]
    f: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
}

#[derive(Args)]
struct ChopperArgs {
    #[arg(long, default_value_t = 1.0)]
    signal_rate: f64,
    #[arg(long, default_value_t = 3.0)]
    dark_rate: f64,
    #[arg(long, default_value_t = 600.0)]
    duration: f64,
    #[arg(long, default_value_t = 400.0)]
    chopper_freq: f64,
    #[arg(long, default_value_t = 0.5)]
    duty: f64,
    #[arg(long, default_value_t = 0.02)]
    ramp: f64,
    #[arg(long, default_value_t = 5.0)]
    k: f64,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// Emit one sync tag per chopper period
    #[arg(long)]
    sync: bool,
    #[arg(long, default_value = "chopper")]
    name: String,
}

#[derive(Args)]
struct TofArgs {
    #[arg(long, value_enum, default_value = "low-gain")]
    preset: PresetArg,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    jsi_bins: Option<usize>,
    /// Photons per mode (overrides the preset)
    #[arg(long)]
    n: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitArg {
    PowerLaw,
    Crossover,
}

#[derive(Clone, Copy, ValueEnum)]
enum PmArg {
    Type0OrI,
    TypeIi,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    LowGain,
    HighGain,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Format { .. } => 2,
        Error::Infeasible(_) | Error::Domain(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn overrides(cli: &Cli) -> Overrides {
    Overrides { seed: cli.seed, points: cli.points, mc_pulses: cli.mc_pulses }
}

fn load(cli: &Cli, builtin: Option<&str>, kind: Option<ScenarioKind>) -> Result<ScenarioConfig> {
    let mut cfg = match (&cli.config, builtin) {
        (Some(path), _) => ScenarioConfig::from_path(path)?,
        (None, Some(name)) => ScenarioConfig::builtin(name)?,
        (None, None) => return Err(Error::Config("pass --config <path> or --builtin <name>".into())),
    };
    if let Some(k) = kind {
        if cfg.kind != k {
            return Err(Error::Config(format!("this subcommand needs a config of kind {k:?}, got {:?}", cfg.kind)));
        }
    }
    cfg.apply(&overrides(cli));
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn execute(cli: &Cli, cfg: &ScenarioConfig) -> Result<()> {
    let out = run_scenario(cfg)?;
    let files = write_outputs(&out, &cli.out)?;
    let r = &out.report;
    println!("scenario {} (seed {})", cfg.name, cfg.seed);
    match &r.fit {
        FitSummary::PowerLaw { fit, .. } => {
            println!("exponent = {:.4} ± {:.4}", fit.exponent, fit.exponent_stderr);
            if let Some(end) = r.predicted_endpoint_rate_hz {
                println!("predicted rate at last point = {end:.4} Hz");
            }
        }
        FitSummary::Crossover { fit, expected_n_cross } => {
            println!(
                "n_cross = {:.2} ± {:.2} (model {:.2}){}",
                fit.n_cross,
                fit.n_cross_stderr,
                expected_n_cross,
                if fit.accepted { "" } else { " [not accepted]" }
            );
            for d in &fit.diagnostics {
                println!("warning: {d}");
            }
        }
        FitSummary::Threshold { r_det_hz, count_threshold } => {
            println!("r_det = {r_det_hz:.4} Hz ({count_threshold:.0} counts)");
        }
    }
    if cfg.kind == ScenarioKind::ReplicationCw {
        for v in &r.verdicts {
            println!("{}: z = {:.3}, {}", v.subject, v.z, v.verdict);
        }
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct RatesSummary {
    sigma2_si: f64,
    entanglement_time_s: f64,
    sigma_e_m2: f64,
    crossover_flux: f64,
    n_at_crossover: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    photons_per_mode: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    g2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_per_molecule_hz: Option<f64>,
}

fn rates(cli: &Cli, a: &RatesArgs) -> Result<()> {
    let pm = match a.phase_matching {
        PmArg::Type0OrI => PhaseMatching::Type0OrI,
        PmArg::TypeIi => PhaseMatching::TypeII,
    };
    let s2 = match a.sigma2 {
        Some(v) => v,
        None => gm_to_si(a.sigma2_gm)?,
    };
    let te = match a.ent_time {
        Some(t) => t,
        None => entanglement_time(a.bandwidth)?,
    };
    let se = sigma_e(a.f, s2, a.area, te)?;
    let phi_c = crossover_flux(se, s2)?;
    let n_c = photons_per_mode(phi_c, a.area, te)?;
    let xi = a.xi.unwrap_or(pm.high_gain_g2());
    let mut summary = RatesSummary {
        sigma2_si: s2,
        entanglement_time_s: te,
        sigma_e_m2: se,
        crossover_flux: phi_c,
        n_at_crossover: n_c,
        phi: None,
        photons_per_mode: None,
        g2: None,
        rate_per_molecule_hz: None,
    };
    if let Some(phi) = a.phi {
        let n = photons_per_mode(phi, a.area, te)?;
        summary.phi = Some(phi);
        summary.photons_per_mode = Some(n);
        summary.g2 = Some(g2_zero(n, pm)?);
        summary.rate_per_molecule_hz = Some(etpa_rate(phi, se, s2, xi)?);
    }
    println!("sigma_e = {se:.4e} m^2");
    println!("crossover_flux = {phi_c:.4e} photons/m^2/s");
    println!("n_at_crossover = {n_c:.2}");
    if let (Some(n), Some(g2), Some(r)) = (summary.photons_per_mode, summary.g2, summary.rate_per_molecule_hz) {
        println!("photons_per_mode = {n:.4e}");
        println!("g2 = {g2:.4}");
        println!("rate_per_molecule = {r:.4e} Hz");
    }
    fs::create_dir_all(&cli.out)?;
    write_json(&cli.out.join("rates.json"), &summary)
}

fn chopper(cli: &Cli, a: &ChopperArgs) -> Result<()> {
    let det = DetectionConfig {
        dark_rate: a.dark_rate,
        duration: a.duration,
        chopper_freq: a.chopper_freq,
        duty_cycle: a.duty,
        threshold_k: a.k,
        edge_ramp_fraction: a.ramp,
    };
    let r = run_chopper(a.signal_rate, &det, cli.seed.unwrap_or(0), a.bins, a.sync)?;
    fs::create_dir_all(&cli.out)?;
    let tags = cli.out.join(format!("{}.timetags.csv", a.name));
    r.stream.write(&tags)?;
    let mut phase = Vec::new();
    write_phase_csv(&r.histogram, &mut phase)?;
    fs::write(cli.out.join(format!("{}.phase.csv", a.name)), phase)?;
    let report = FitReport::from_differential(&r.differential, r.r_det);
    fs::write(cli.out.join(format!("{}.fit.json", a.name)), report.to_json()?)?;
    println!("events = {}", r.stream.fluor_count());
    println!(
        "rate = {:.4} ± {:.4} Hz, z = {:.3}, r_det = {:.4} Hz",
        r.differential.rate_estimate, r.differential.sigma, r.differential.z_score, r.r_det
    );
    println!("wrote {}", tags.display());
    Ok(())
}

fn tof(cli: &Cli, a: &TofArgs) -> Result<()> {
    let (preset, label) = match a.preset {
        PresetArg::LowGain => (TofPreset::LowGain, "low-gain"),
        PresetArg::HighGain => (TofPreset::HighGain, "high-gain"),
    };
    let mut s = TofSettings::preset(preset);
    if let Some(v) = a.samples {
        s.samples = v;
    }
    if let Some(v) = a.bins {
        s.spectrum_bins = v;
    }
    if let Some(v) = a.jsi_bins {
        s.jsi_bins = v;
    }
    if let Some(v) = a.n {
        s.photons_per_mode = v;
    }
    if let Some(v) = cli.seed {
        s.seed = v;
    }
    let r = run_tof(&s)?;
    fs::create_dir_all(&cli.out)?;
    let stem = cli.out.join(format!("tof-{label}"));
    let mut buf = Vec::new();
    r.spectrum.write_csv(&mut buf)?;
    fs::write(stem.with_extension("spectrum.csv"), buf)?;
    let mut buf = Vec::new();
    r.jsi.write_csv(&mut buf)?;
    fs::write(stem.with_extension("jsi.csv"), buf)?;
    write_json(&stem.with_extension("summary.json"), &r.summary)?;
    println!("marginal FWHM = {:.3} nm", r.summary.marginal_fwhm_m * 1e9);
    println!(
        "diagonal / anti-diagonal = {:.1} / {:.1}, ridge contrast = {:.2}",
        r.summary.diagonal_intensity, r.summary.antidiagonal_intensity, r.summary.ridge_contrast
    );
    Ok(())
}

fn analyze(cli: &Cli, input: &Path, fit: FitArg) -> Result<()> {
    let kind = match fit {
        FitArg::PowerLaw => FitKind::PowerLaw,
        FitArg::Crossover => FitKind::Crossover,
    };
    let report = analyze_file(input, kind)?;
    fs::create_dir_all(&cli.out)?;
    let json = report.to_json()?;
    let path = cli.out.join(format!("{}.fit.json", analysis_stem(input)));
    fs::write(&path, &json)?;
    print!("{json}");
    println!("wrote {}", path.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run { builtin } => {
            let cfg = load(cli, builtin.as_deref(), None)?;
            execute(cli, &cfg)
        }
        Command::Rates(a) => rates(cli, a),
        Command::Sweep(a) => {
            let mut cfg = load(cli, Some("bsv-sweep"), Some(ScenarioKind::BsvSweep))?;
            let sw = cfg.sweep.as_mut().expect("bsv-sweep config has a sweep section");
            if let Some(p) = a.power {
                sw.avg_power_w = p;
            }
            if let Some(r) = a.rep_min {
                sw.rep_rate_min_hz = r;
                sw.anchor_rep_rate_hz = r;
            }
            if let Some(r) = a.rep_max {
                sw.rep_rate_max_hz = r;
            }
            if let Some(d) = a.duration {
                cfg.detection.duration = d;
            }
            execute(cli, &cfg)
        }
        Command::SfgCrossover(a) => {
            let mut cfg = load(cli, Some("sfg-crossover"), Some(ScenarioKind::SfgCrossover))?;
            if let Some(m) = a.modes {
                cfg.source.temporal_modes = m;
            }
            if a.f.is_some() || a.xi.is_some() {
                let mut r = cfg.rate.unwrap_or(tpa_sim::scenario::RateConfig { f: 1.0, xi: 1.0 });
                r.f = a.f.unwrap_or(r.f);
                r.xi = a.xi.unwrap_or(r.xi);
                cfg.rate = Some(r);
            }
            execute(cli, &cfg)
        }
        Command::ChopperSim(a) => chopper(cli, a),
        Command::TofSpec(a) => tof(cli, a),
        Command::Analyze { input, fit } => analyze(cli, input, *fit),
    }
}
