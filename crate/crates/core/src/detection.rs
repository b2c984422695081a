//! Monte Carlo photon counting behind a chopper wheel.
//!
//! Fluorescence arrives at rate R_S while the beam passes the chopper and
//! detector dark counts arrive at rate D all the time. The chopper
//! transmission is a periodic trapezoid: a plateau for the open part of the
//! duty cycle with linear shoulders where the blade partially covers the beam.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::{from_seed, SimRng};

pub const TIMETAG_HEADER: &str = "timestamp_ns,channel";
pub const TIMETAG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    #[serde(rename = "dark_rate_hz")]
    pub dark_rate: f64,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    #[serde(rename = "chopper_freq_hz")]
    pub chopper_freq: f64,
    pub duty_cycle: f64,
    pub threshold_k: f64,
    /// Width of each transmission shoulder, as a fraction of the period.
    pub edge_ramp_fraction: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            dark_rate: 3.0,
            duration: 600.0,
            chopper_freq: 400.0,
            duty_cycle: 0.5,
            threshold_k: 5.0,
            edge_ramp_fraction: 0.02,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(domain(m));
        if !(self.duty_cycle > 0.0 && self.duty_cycle < 1.0) {
            return bad(format!("duty_cycle must lie in (0, 1), got {}", self.duty_cycle));
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            return bad(format!("dark_rate_hz must be >= 0, got {}", self.dark_rate));
        }
        if !(self.threshold_k > 0.0) {
            return bad(format!("threshold_k must be > 0, got {}", self.threshold_k));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration_s must be > 0, got {}", self.duration));
        }
        if !(self.chopper_freq > 0.0 && self.chopper_freq.is_finite()) {
            return bad(format!("chopper_freq_hz must be > 0, got {}", self.chopper_freq));
        }
        let r = self.edge_ramp_fraction;
        if !(r >= 0.0 && r <= self.duty_cycle.min(1.0 - self.duty_cycle)) {
            return bad(format!(
                "edge_ramp_fraction must lie in [0, min(duty, 1 - duty)], got {r}"
            ));
        }
        Ok(())
    }

    /// Chopper transmission at a phase in [0, 1).
    ///
    /// Rising shoulder on [0, r), plateau on [r, duty), falling shoulder on
    /// [duty, duty + r). The mean over a period equals the duty cycle.
    pub fn transmission(&self, phase: f64) -> f64 {
        let (d, r) = (self.duty_cycle, self.edge_ramp_fraction);
        if phase < r {
            phase / r
        } else if phase < d {
            1.0
        } else if phase < d + r {
            1.0 - (phase - d) / r
        } else {
            0.0
        }
    }

    /// Phase window counted as "open": between the half-transmission points.
    pub fn open_window(&self) -> (f64, f64) {
        let half = 0.5 * self.edge_ramp_fraction;
        (half, self.duty_cycle + half)
    }

    /// Exact open time within [0, duration].
    pub fn open_time(&self) -> f64 {
        let cycles = self.duration * self.chopper_freq;
        let full = cycles.floor();
        let rem = cycles - full;
        let (a, b) = self.open_window();
        let partial = (rem.min(b) - a).max(0.0);
        (full * self.duty_cycle + partial) / self.chopper_freq
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChoppedCounts {
    pub open_counts: u64,
    pub closed_counts: u64,
    pub open_time: f64,
    pub closed_time: f64,
}

impl ChoppedCounts {
    /// Sum of two accumulations over disjoint time windows.
    pub fn merge(&self, other: &Self) -> Self {
        Self {
            open_counts: self.open_counts + other.open_counts,
            closed_counts: self.closed_counts + other.closed_counts,
            open_time: self.open_time + other.open_time,
            closed_time: self.closed_time + other.closed_time,
        }
    }
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite mean").sample(rng) as u64
}

/// Open/closed channel counts of an ideal chopped measurement. `signal_rate`
/// is the fluorescence rate while the beam is unblocked.
pub fn simulate_chopped_counts<R: Rng + ?Sized>(
    signal_rate: f64,
    cfg: &DetectionConfig,
    rng: &mut R,
) -> Result<ChoppedCounts> {
    if !(signal_rate >= 0.0 && signal_rate.is_finite()) {
        return Err(domain(format!("signal rate must be >= 0, got {signal_rate}")));
    }
    cfg.validate()?;
    let open_time = cfg.duration * cfg.duty_cycle;
    let closed_time = cfg.duration * (1.0 - cfg.duty_cycle);
    Ok(ChoppedCounts {
        open_counts: poisson(rng, (signal_rate + cfg.dark_rate) * open_time),
        closed_counts: poisson(rng, cfg.dark_rate * closed_time),
        open_time,
        closed_time,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    Fluor = 0,
    Sync = 1,
}

impl Channel {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Channel::Fluor),
            1 => Some(Channel::Sync),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    pub timestamp_ns: u64,
    pub channel: Channel,
}

impl TimeTag {
    pub fn seconds(&self) -> f64 {
        self.timestamp_ns as f64 * 1e-9
    }
}

/// Sidecar metadata written next to every time-tag file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamMetadata {
    pub format_version: u32,
    pub seed: u64,
    pub signal_rate_hz: f64,
    pub detection: DetectionConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    pub events: Vec<TimeTag>,
    pub metadata: StreamMetadata,
}

impl TimeTagStream {
    pub fn fluor_events(&self) -> impl Iterator<Item = &TimeTag> {
        self.events.iter().filter(|e| e.channel == Channel::Fluor)
    }

    pub fn fluor_count(&self) -> usize {
        self.fluor_events().count()
    }

    /// Appends a stream covering a later, disjoint time window.
    pub fn append(&mut self, other: &TimeTagStream) -> Result<()> {
        if let (Some(last), Some(first)) = (self.events.last(), other.events.first()) {
            if first.timestamp_ns < last.timestamp_ns {
                return Err(domain("appended stream overlaps the existing time window"));
            }
        }
        self.events.extend_from_slice(&other.events);
        self.metadata.detection.duration += other.metadata.detection.duration;
        Ok(())
    }

    /// Writes `<path>` (CSV) and `<path>.meta.toml`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        write_timetags_csv(&self.events, &mut w)?;
        w.flush()?;
        let meta = toml::to_string(&self.metadata).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(sidecar_path(path), meta)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let events = read_timetags_csv(BufReader::new(fs::File::open(path)?))?;
        let meta_text = fs::read_to_string(sidecar_path(path))?;
        let metadata: StreamMetadata =
            toml::from_str(&meta_text).map_err(|e| Error::Config(format!("{}: {e}", sidecar_path(path).display())))?;
        if metadata.format_version != TIMETAG_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported time-tag format version {}",
                metadata.format_version
            )));
        }
        Ok(Self { events, metadata })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.toml");
    PathBuf::from(s)
}

pub fn write_timetags_csv<W: Write>(events: &[TimeTag], mut w: W) -> Result<()> {
    writeln!(w, "{TIMETAG_HEADER}")?;
    for e in events {
        writeln!(w, "{},{}", e.timestamp_ns, e.channel.code())?;
    }
    Ok(())
}

pub fn read_timetags_csv<R: BufRead>(r: R) -> Result<Vec<TimeTag>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end() != TIMETAG_HEADER {
        return Err(Error::Format {
            line: 1,
            msg: format!("expected header `{TIMETAG_HEADER}`, found `{header}`"),
        });
    }
    let mut out = Vec::new();
    let mut last = 0u64;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        let fmt_err = |msg: String| Error::Format { line: lineno, msg };
        let (ts, ch) = line
            .trim_end()
            .split_once(',')
            .ok_or_else(|| fmt_err(format!("expected two fields, found `{line}`")))?;
        let timestamp_ns: u64 = ts.parse().map_err(|_| fmt_err(format!("bad timestamp `{ts}`")))?;
        let channel = ch
            .parse::<u8>()
            .ok()
            .and_then(Channel::from_code)
            .ok_or_else(|| fmt_err(format!("bad channel `{ch}`")))?;
        if timestamp_ns < last {
            return Err(fmt_err("timestamps must be non-decreasing".into()));
        }
        last = timestamp_ns;
        out.push(TimeTag { timestamp_ns, channel });
    }
    Ok(out)
}

fn to_ns(t: f64) -> u64 {
    (t * 1e9).round() as u64
}

/// Inhomogeneous Poisson event stream by thinning a homogeneous process at
/// the peak rate D + R_S. When `emit_sync` is set one Sync tag marks the
/// start of every chopper period.
pub fn generate_timetags(
    signal_rate: f64,
    cfg: &DetectionConfig,
    seed: u64,
    emit_sync: bool,
) -> Result<TimeTagStream> {
    if !(signal_rate >= 0.0 && signal_rate.is_finite()) {
        return Err(domain(format!("signal rate must be >= 0, got {signal_rate}")));
    }
    cfg.validate()?;
    if cfg.chopper_freq * cfg.duration < 1.0 {
        return Err(domain("measurement must span at least one chopper period"));
    }
    let mut rng: SimRng = from_seed(seed);
    let peak = cfg.dark_rate + signal_rate;
    let mut events = Vec::new();
    if peak > 0.0 {
        let exp = Exp::new(peak).expect("positive rate");
        let mut t = 0.0;
        loop {
            t += exp.sample(&mut rng);
            if t > cfg.duration {
                break;
            }
            let phase = (t * cfg.chopper_freq).fract();
            let rate = cfg.dark_rate + signal_rate * cfg.transmission(phase);
            if rng.random::<f64>() * peak < rate {
                events.push(TimeTag {
                    timestamp_ns: to_ns(t),
                    channel: Channel::Fluor,
                });
            }
        }
    }
    if emit_sync {
        let periods = (cfg.duration * cfg.chopper_freq).floor() as u64;
        events.extend((0..=periods).map(|k| TimeTag {
            timestamp_ns: to_ns(k as f64 / cfg.chopper_freq),
            channel: Channel::Sync,
        }));
        events.sort();
    }
    Ok(TimeTagStream {
        events,
        metadata: StreamMetadata {
            format_version: TIMETAG_FORMAT_VERSION,
            seed,
            signal_rate_hz: signal_rate,
            detection: *cfg,
        },
    })
}

fn phase_of(tag: &TimeTag, chopper_freq: f64) -> f64 {
    (tag.seconds() * chopper_freq).fract()
}

/// Open/closed counts of the fluorescence channel, using the half-transmission
/// points of the chopper shoulders as channel boundaries.
pub fn count_chopped(stream: &TimeTagStream) -> Result<ChoppedCounts> {
    let cfg = &stream.metadata.detection;
    cfg.validate()?;
    let (a, b) = cfg.open_window();
    let (mut open, mut closed) = (0, 0);
    for tag in stream.fluor_events() {
        let p = phase_of(tag, cfg.chopper_freq);
        if p >= a && p < b {
            open += 1;
        } else {
            closed += 1;
        }
    }
    let open_time = cfg.open_time();
    Ok(ChoppedCounts {
        open_counts: open,
        closed_counts: closed,
        open_time,
        closed_time: cfg.duration - open_time,
    })
}

/// Fluorescence events folded modulo one chopper period.
pub fn chopper_phase_histogram(stream: &TimeTagStream, chopper_freq: f64, bins: usize) -> Result<Vec<u64>> {
    if bins == 0 {
        return Err(domain("phase histogram needs at least one bin"));
    }
    if !(chopper_freq > 0.0) {
        return Err(domain("chopper frequency must be positive"));
    }
    if stream.fluor_count() == 0 {
        return Err(Error::Empty("time-tag stream has no fluorescence events"));
    }
    let mut hist = vec![0u64; bins];
    for tag in stream.fluor_events() {
        let i = ((phase_of(tag, chopper_freq) * bins as f64) as usize).min(bins - 1);
        hist[i] += 1;
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn cfg(duration: f64, ramp: f64) -> DetectionConfig {
        DetectionConfig {
            duration,
            edge_ramp_fraction: ramp,
            ..DetectionConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(DetectionConfig::default().validate().is_ok());
        for bad in [
            DetectionConfig { duty_cycle: 1.0, ..Default::default() },
            DetectionConfig { duty_cycle: 0.0, ..Default::default() },
            DetectionConfig { dark_rate: -1.0, ..Default::default() },
            DetectionConfig { threshold_k: 0.0, ..Default::default() },
            DetectionConfig { edge_ramp_fraction: 0.6, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn transmission_mean_is_duty() {
        let c = DetectionConfig { edge_ramp_fraction: 0.1, duty_cycle: 0.4, ..Default::default() };
        let n = 100_000;
        let mean = (0..n).map(|i| c.transmission((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
        assert!((mean - 0.4).abs() < 1e-9);
    }

    #[test]
    fn chopped_counts_zero_rates() {
        let c = DetectionConfig { dark_rate: 0.0, duration: 60_000.0, ..Default::default() };
        let mut rng = from_seed(1);
        for _ in 0..100 {
            let cc = simulate_chopped_counts(0.0, &c, &mut rng).unwrap();
            assert_eq!((cc.open_counts, cc.closed_counts), (0, 0));
        }
    }

    #[test]
    fn chopped_counts_means() {
        let c = DetectionConfig { duration: 60_000.0, ..Default::default() };
        let mut rng = from_seed(2);
        let runs = 2000;
        let (mut open, mut closed, mut within) = (0.0, 0.0, 0);
        for _ in 0..runs {
            let cc = simulate_chopped_counts(0.0, &c, &mut rng).unwrap();
            open += cc.open_counts as f64;
            closed += cc.closed_counts as f64;
            let diff = cc.open_counts as f64 - cc.closed_counts as f64;
            if diff.abs() <= 5.0 * (3.0f64 * 60_000.0).sqrt() {
                within += 1;
            }
        }
        assert!((open / runs as f64 / 90_000.0 - 1.0).abs() < 1e-3);
        assert!((closed / runs as f64 / 90_000.0 - 1.0).abs() < 1e-3);
        assert_eq!(within, runs);

        let mut diff = 0.0;
        for _ in 0..runs {
            let cc = simulate_chopped_counts(0.9, &c, &mut rng).unwrap();
            diff += cc.open_counts as f64 - cc.closed_counts as f64;
        }
        let mean = diff / runs as f64;
        // 424 = sd of one difference; the mean of 2000 has sd ≈ 9.5
        assert!((mean - 27_000.0).abs() < 50.0, "{mean}");
        assert!(mean > 5.0 * (3.0f64 * 60_000.0).sqrt());
    }

    #[test]
    fn negative_signal_rejected() {
        assert!(simulate_chopped_counts(-1.0, &DetectionConfig::default(), &mut from_seed(1)).is_err());
        assert!(generate_timetags(-1.0, &DetectionConfig::default(), 1, false).is_err());
    }

    #[test]
    fn needs_one_full_period() {
        let c = DetectionConfig { duration: 1e-3, ..Default::default() };
        assert!(generate_timetags(1.0, &c, 1, false).is_err());
    }

    #[test]
    fn stream_is_sorted_and_in_range() {
        let c = cfg(60.0, 0.02);
        let s = generate_timetags(5.0, &c, 3, true).unwrap();
        assert!(s.events.windows(2).all(|w| w[0].timestamp_ns <= w[1].timestamp_ns));
        assert!(s.events.iter().all(|e| e.timestamp_ns <= 60_000_000_000));
        let syncs = s.events.iter().filter(|e| e.channel == Channel::Sync).count();
        assert_eq!(syncs, 24_001);
    }

    #[test]
    fn total_count_matches_rate_integral() {
        let c = cfg(600.0, 0.02);
        let s = generate_timetags(1.0, &c, 4, false).unwrap();
        let mean = 3.0 * 600.0 + 1.0 * 600.0 * 0.5;
        let n = s.fluor_count() as f64;
        assert!((n - mean).abs() < 3.0 * mean.sqrt(), "{n} vs {mean}");
    }

    #[test]
    fn square_modulation_is_a_step() {
        let c = DetectionConfig { dark_rate: 3.0, ..cfg(600.0, 0.0) };
        let s = generate_timetags(200.0, &c, 5, false).unwrap();
        let bins = 50;
        let h = chopper_phase_histogram(&s, c.chopper_freq, bins).unwrap();
        let per_bin = 600.0 / bins as f64;
        let hi = (200.0 + 3.0) * per_bin;
        let lo = 3.0 * per_bin;
        let near = |x: f64, m: f64| (x - m).abs() < 5.0 * m.sqrt();
        let transition = h.iter().filter(|&&x| !near(x as f64, hi) && !near(x as f64, lo)).count();
        assert!(transition <= 2, "{h:?}");
        assert!(h[..25].iter().all(|&x| near(x as f64, hi)));
    }

    #[test]
    fn shoulders_are_monotone() {
        let c = cfg(600.0, 0.1);
        let s = generate_timetags(500.0, &c, 6, false).unwrap();
        let bins = 100;
        let h: Vec<f64> = chopper_phase_histogram(&s, c.chopper_freq, bins)
            .unwrap()
            .into_iter()
            .map(|x| x as f64)
            .collect();
        let sd = |a: f64, b: f64| (a + b).sqrt();
        // rising shoulder: bins 0..10, falling: bins 50..60
        for i in 0..9 {
            assert!(h[i + 1] - h[i] > -3.0 * sd(h[i], h[i + 1]), "rise at {i}: {h:?}");
        }
        for i in 50..59 {
            assert!(h[i + 1] - h[i] < 3.0 * sd(h[i], h[i + 1]), "fall at {i}: {h:?}");
        }
        assert!(h[5] > h[61] && h[5] < h[20]);
    }

    #[test]
    fn dark_only_is_uniform() {
        let c = cfg(3000.0, 0.02);
        let s = generate_timetags(0.0, &c, 7, false).unwrap();
        let bins = 40;
        let h = chopper_phase_histogram(&s, c.chopper_freq, bins).unwrap();
        let total: u64 = h.iter().sum();
        let e = total as f64 / bins as f64;
        let chi2: f64 = h.iter().map(|&x| (x as f64 - e).powi(2) / e).sum();
        let crit = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.99);
        assert!(chi2 < crit, "{chi2} >= {crit}");
    }

    fn plateau_ratio(h: &[u64], c: &DetectionConfig) -> (f64, f64) {
        let bins = h.len() as f64;
        let (mut open, mut no, mut closed, mut nc) = (0.0, 0.0, 0.0, 0.0);
        for (i, &x) in h.iter().enumerate() {
            let (a, b) = (i as f64 / bins, (i + 1) as f64 / bins);
            if a >= c.edge_ramp_fraction && b <= c.duty_cycle {
                open += x as f64;
                no += 1.0;
            } else if a >= c.duty_cycle + c.edge_ramp_fraction {
                closed += x as f64;
                nc += 1.0;
            }
        }
        let ratio = (open / no) / (closed / nc);
        let rel_sd = (1.0 / open + 1.0 / closed).sqrt();
        (ratio, rel_sd)
    }

    #[test]
    fn plateau_ratio_one_hz_over_three() {
        // 600 s gives ~2100 events, so the ratio carries ≈ 4.5 % noise
        let c = cfg(600.0, 0.02);
        let s = generate_timetags(1.0, &c, 8, false).unwrap();
        let h = chopper_phase_histogram(&s, c.chopper_freq, 50).unwrap();
        let (ratio, rel_sd) = plateau_ratio(&h, &c);
        let want = 4.0 / 3.0;
        assert!((ratio / want - 1.0).abs() < 3.0 * rel_sd, "{ratio} ± {rel_sd}");

        // a 100x longer run pins it to ±5 %
        let c = cfg(60_000.0, 0.02);
        let s = generate_timetags(1.0, &c, 9, false).unwrap();
        let h = chopper_phase_histogram(&s, c.chopper_freq, 50).unwrap();
        let (ratio, _) = plateau_ratio(&h, &c);
        assert!((ratio / want - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn folding_preserves_event_count() {
        let c = cfg(100.0, 0.02);
        let s = generate_timetags(2.0, &c, 10, true).unwrap();
        let h = chopper_phase_histogram(&s, c.chopper_freq, 37).unwrap();
        assert_eq!(h.iter().sum::<u64>() as usize, s.fluor_count());
        let cc = count_chopped(&s).unwrap();
        assert_eq!((cc.open_counts + cc.closed_counts) as usize, s.fluor_count());
    }

    #[test]
    fn empty_stream_histogram_errors() {
        let c = DetectionConfig { dark_rate: 0.0, ..cfg(10.0, 0.02) };
        let s = generate_timetags(0.0, &c, 11, true).unwrap();
        assert!(matches!(chopper_phase_histogram(&s, 400.0, 10), Err(Error::Empty(_))));
    }

    #[test]
    fn determinism_and_concatenation() {
        let c = cfg(50.0, 0.02);
        let a = generate_timetags(2.0, &c, 12, true).unwrap();
        let b = generate_timetags(2.0, &c, 12, true).unwrap();
        assert_eq!(a, b);

        let mut shifted = generate_timetags(2.0, &c, 13, false).unwrap();
        for e in &mut shifted.events {
            e.timestamp_ns += 50_000_000_000;
        }
        let mut joined = a.clone();
        joined.append(&shifted).unwrap();
        assert_eq!(joined.events.len(), a.events.len() + shifted.events.len());
        assert!(shifted.clone().append(&a).is_err());
    }

    #[test]
    fn count_merge_is_associative() {
        let c = DetectionConfig::default();
        let mut rng = from_seed(14);
        let x = simulate_chopped_counts(1.0, &c, &mut rng).unwrap();
        let y = simulate_chopped_counts(1.0, &c, &mut rng).unwrap();
        let z = simulate_chopped_counts(1.0, &c, &mut rng).unwrap();
        assert_eq!(x.merge(&y).merge(&z), x.merge(&y.merge(&z)));
        assert_eq!(x.merge(&y), y.merge(&x));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let c = cfg(5.0, 0.02);
        let s = generate_timetags(10.0, &c, 15, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tags.csv");
        s.write(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("timestamp_ns,channel\n"));
        assert_eq!(TimeTagStream::read(&path).unwrap(), s);

        let bad = "timestamp_ns,channel\n10,0\n5,0\n";
        match read_timetags_csv(bad.as_bytes()) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_timetags_csv("t,c\n".as_bytes()), Err(Error::Format { line: 1, .. })));
        assert!(matches!(
            read_timetags_csv("timestamp_ns,channel\n10,7\n".as_bytes()),
            Err(Error::Format { line: 2, .. })
        ));
    }

    #[test]
    fn open_time_partial_period() {
        let c = DetectionConfig { duration: 1.0 / 400.0 * 10.25, edge_ramp_fraction: 0.0, ..Default::default() };
        // ten full periods plus a quarter period that is entirely open
        let want = (10.0 * 0.5 + 0.25) / 400.0;
        assert!((c.open_time() - want).abs() < 1e-15);
    }
}
