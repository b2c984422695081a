//! Fiber time-of-flight spectrometer.
//!
//! A length of dispersive fiber maps wavelength to arrival delay; a timing
//! reference (the undelayed pair partner for CW sources, the pump pulse clock
//! for pulsed ones) fixes the zero of time. Delays are mapped back to
//! wavelength with an affine calibration, either taken from the fiber
//! parameters or fitted to the edges of filters with known cutoffs.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, ensure_finite_nonneg, ensure_positive, Error, Result};
use crate::model::SPEED_OF_LIGHT;
use crate::source::{FrequencyPairSample, JsaModel};

/// Converts a dispersion in ps/(nm·km) to s/m².
pub fn ps_per_nm_km(value: f64) -> f64 {
    value * 1e-12 / (1e-9 * 1e3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersiveFiber {
    pub length: f64,
    /// Group-delay dispersion in s per (m of wavelength · m of fiber).
    pub dispersion: f64,
    pub reference_wavelength: f64,
}

impl DispersiveFiber {
    pub fn new(length: f64, dispersion: f64, reference_wavelength: f64) -> Result<Self> {
        ensure_positive("fiber length", length)?;
        ensure_positive("reference_wavelength", reference_wavelength)?;
        if dispersion == 0.0 || !dispersion.is_finite() {
            return Err(domain("fiber dispersion must be finite and non-zero"));
        }
        Ok(Self {
            length,
            dispersion,
            reference_wavelength,
        })
    }

    /// Delay per unit wavelength, s/m.
    pub fn delay_slope(&self) -> f64 {
        self.dispersion * self.length
    }
}

impl Default for DispersiveFiber {
    /// 1 km at 40 ps/(nm·km), referenced to 1064 nm.
    fn default() -> Self {
        Self {
            length: 1000.0,
            dispersion: ps_per_nm_km(40.0),
            reference_wavelength: 1064e-9,
        }
    }
}

/// Arrival delay relative to the reference wavelength.
pub fn disperse(wavelength: f64, fiber: &DispersiveFiber) -> f64 {
    fiber.delay_slope() * (wavelength - fiber.reference_wavelength)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimingReference {
    /// CW source: the undelayed partner photon marks emission time.
    PairPartner,
    /// Pulsed source: a pump pick-off marks emission time.
    PulseClock,
}

/// Affine delay-to-wavelength map, λ = intercept + slope·t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineCalibration {
    pub intercept: f64,
    pub slope: f64,
    /// Fit residuals in wavelength (m), one per calibration edge.
    pub residuals: Vec<f64>,
}

impl AffineCalibration {
    pub fn from_fiber(fiber: &DispersiveFiber) -> Self {
        Self {
            intercept: fiber.reference_wavelength,
            slope: 1.0 / fiber.delay_slope(),
            residuals: Vec::new(),
        }
    }

    pub fn wavelength(&self, delay: f64) -> f64 {
        self.intercept + self.slope * delay
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrometer {
    pub fiber: DispersiveFiber,
    /// Per-detector Gaussian timing jitter (standard deviation, s).
    pub jitter_sigma: f64,
    pub reference: TimingReference,
    pub calibration: AffineCalibration,
}

impl Spectrometer {
    pub fn new(fiber: DispersiveFiber, jitter_sigma: f64, reference: TimingReference) -> Result<Self> {
        ensure_finite_nonneg("jitter_sigma", jitter_sigma)?;
        Ok(Self {
            calibration: AffineCalibration::from_fiber(&fiber),
            fiber,
            jitter_sigma,
            reference,
        })
    }

    pub fn with_calibration(mut self, calibration: AffineCalibration) -> Self {
        self.calibration = calibration;
        self
    }

    /// Effective jitter on the measured delay. Two detectors contribute when
    /// the partner photon is the reference.
    pub fn effective_jitter(&self) -> f64 {
        match self.reference {
            TimingReference::PairPartner => self.jitter_sigma * std::f64::consts::SQRT_2,
            TimingReference::PulseClock => self.jitter_sigma,
        }
    }

    /// Simulated measured delay of one photon of the given wavelength.
    pub fn measure_delay<R: Rng + ?Sized>(&self, wavelength: f64, rng: &mut R) -> f64 {
        let jitter = self.effective_jitter();
        let noise = if jitter > 0.0 {
            Normal::new(0.0, jitter).expect("finite jitter").sample(rng)
        } else {
            0.0
        };
        disperse(wavelength, &self.fiber) + noise
    }

    /// Measured-and-calibrated wavelength of one photon.
    pub fn measure_wavelength<R: Rng + ?Sized>(&self, wavelength: f64, rng: &mut R) -> f64 {
        self.calibration.wavelength(self.measure_delay(wavelength, rng))
    }
}

impl Default for Spectrometer {
    /// Default fiber, 50 ps jitter, pair-partner timing.
    fn default() -> Self {
        Self::new(DispersiveFiber::default(), 50e-12, TimingReference::PairPartner)
            .expect("valid defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub bins: usize,
    /// Fixed `(low, high)` range; `None` spans the data.
    pub range: Option<(f64, f64)>,
}

impl Binning {
    pub fn auto(bins: usize) -> Self {
        Self { bins, range: None }
    }

    pub fn fixed(bins: usize, low: f64, high: f64) -> Self {
        Self {
            bins,
            range: Some((low, high)),
        }
    }

    fn resolve(&self, values: &[f64]) -> Result<(f64, f64)> {
        if self.bins == 0 {
            return Err(domain("histogram needs at least one bin"));
        }
        if let Some((lo, hi)) = self.range {
            if !(hi > lo) {
                return Err(domain(format!("empty histogram range [{lo}, {hi}]")));
            }
            return Ok((lo, hi));
        }
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        Ok(widen_degenerate(lo, hi, self.bins))
    }
}

/// A zero-width range becomes a tiny range with the value in the middle bin.
fn widen_degenerate(lo: f64, hi: f64, bins: usize) -> (f64, f64) {
    if hi > lo {
        return (lo, hi);
    }
    let w = lo.abs().max(1e-30) * 1e-9;
    let mid = bins / 2;
    (lo - (mid as f64 + 0.5) * w, lo + ((bins - mid) as f64 - 0.5) * w)
}

fn bin_index(v: f64, lo: f64, hi: f64, bins: usize) -> Option<usize> {
    if !(v >= lo && v <= hi) {
        return None;
    }
    let i = ((v - lo) / (hi - lo) * bins as f64) as usize;
    Some(i.min(bins - 1))
}

fn edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
}

/// Position (in bin-center coordinates, interpolated) where a profile first
/// drops below `level` walking from `start` in direction `step`.
fn crossing(counts: &[f64], centers: &[f64], start: usize, level: f64, forward: bool) -> f64 {
    let mut i = start;
    loop {
        let next = if forward {
            if i + 1 >= counts.len() {
                return centers[i];
            }
            i + 1
        } else {
            if i == 0 {
                return centers[0];
            }
            i - 1
        };
        if counts[next] < level {
            let (a, b) = (counts[i], counts[next]);
            let t = (a - level) / (a - b);
            return centers[i] + t * (centers[next] - centers[i]);
        }
        i = next;
    }
}

/// Full width at half maximum of a binned profile.
pub fn profile_fwhm(counts: &[f64], centers: &[f64]) -> f64 {
    let (peak, max) = counts
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    if max <= 0.0 {
        return 0.0;
    }
    let half = max / 2.0;
    let right = crossing(counts, centers, peak, half, true);
    let left = crossing(counts, centers, peak, half, false);
    let width = if centers.len() > 1 {
        (centers[1] - centers[0]).abs()
    } else {
        0.0
    };
    // a single-bin peak is reported as one bin wide
    (right - left).abs().max(width)
}

/// Marginal spectrum in calibrated wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub calibration: AffineCalibration,
}

impl SpectralHistogram {
    pub fn from_wavelengths(values: &[f64], binning: Binning, calibration: AffineCalibration) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("spectral histogram input"));
        }
        let (lo, hi) = binning.resolve(values)?;
        let mut counts = vec![0u64; binning.bins];
        for &v in values {
            if let Some(i) = bin_index(v, lo, hi, binning.bins) {
                counts[i] += 1;
            }
        }
        Ok(Self {
            bin_edges: edges(lo, hi, binning.bins),
            counts,
            calibration,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn fwhm(&self) -> f64 {
        let counts: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        profile_fwhm(&counts, &self.centers())
    }

    /// Adds another histogram accumulated on the same bins.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.bin_edges != other.bin_edges {
            return Err(domain("cannot merge histograms with different binning"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_center_m,count")?;
        for (c, n) in self.centers().iter().zip(&self.counts) {
            writeln!(w, "{c:e},{n}")?;
        }
        Ok(())
    }
}

/// Interpolated half-level crossings of a histogram, in the histogram's
/// x units. The level is half the mean of all bins at or above half the
/// maximum, which tracks the plateau of a filtered flat spectrum.
pub fn detect_edges(counts: &[u64], centers: &[f64]) -> Vec<f64> {
    let max = counts.iter().copied().max().unwrap_or(0) as f64;
    if max == 0.0 {
        return Vec::new();
    }
    let top: Vec<f64> = counts.iter().map(|&c| c as f64).filter(|&c| c >= 0.5 * max).collect();
    let level = 0.5 * top.iter().sum::<f64>() / top.len() as f64;
    let mut out = Vec::new();
    for i in 0..counts.len().saturating_sub(1) {
        let (a, b) = (counts[i] as f64, counts[i + 1] as f64);
        if (a < level) != (b < level) {
            let t = (level - a) / (b - a);
            out.push(centers[i] + t * (centers[i + 1] - centers[i]));
        }
    }
    out
}

/// Fits the delay→wavelength map from filter edges seen in a delay histogram.
///
/// Edges are matched in ascending order, i.e. delay is assumed to increase
/// with wavelength. Exactly `known_edges.len()` edges must be detected.
pub fn calibrate(delays: &[f64], known_edges: &[f64], bins: usize) -> Result<AffineCalibration> {
    if known_edges.len() < 2 {
        return Err(Error::Calibration(format!(
            "need at least two known edges, got {}",
            known_edges.len()
        )));
    }
    if delays.is_empty() {
        return Err(Error::Empty("calibration delays"));
    }
    let (lo, hi) = Binning::auto(bins).resolve(delays)?;
    // pad so that band edges at the extremes of the data register as crossings
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let mut counts = vec![0u64; bins];
    for &d in delays {
        if let Some(i) = bin_index(d, lo, hi, bins) {
            counts[i] += 1;
        }
    }
    let centers: Vec<f64> = edges(lo, hi, bins).windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let found = detect_edges(&counts, &centers);
    if found.len() < 2 {
        return Err(Error::Calibration(format!(
            "detected {} edge(s) in the delay histogram, need at least two",
            found.len()
        )));
    }
    if found.len() != known_edges.len() {
        return Err(Error::Calibration(format!(
            "detected {} edges but {} known edges were given",
            found.len(),
            known_edges.len()
        )));
    }
    let mut known = known_edges.to_vec();
    known.sort_by(f64::total_cmp);
    fit_affine(&found, &known)
}

/// Least-squares λ = a + b·t through matched (delay, wavelength) points.
pub fn fit_affine(delays: &[f64], wavelengths: &[f64]) -> Result<AffineCalibration> {
    let n = delays.len() as f64;
    let mt = delays.iter().sum::<f64>() / n;
    let ml = wavelengths.iter().sum::<f64>() / n;
    let stt: f64 = delays.iter().map(|t| (t - mt).powi(2)).sum();
    if stt == 0.0 {
        return Err(Error::Calibration("calibration edges share one delay".into()));
    }
    let stl: f64 = delays.iter().zip(wavelengths).map(|(t, l)| (t - mt) * (l - ml)).sum();
    let slope = stl / stt;
    let intercept = ml - slope * mt;
    let residuals = delays
        .iter()
        .zip(wavelengths)
        .map(|(t, l)| l - (intercept + slope * t))
        .collect();
    Ok(AffineCalibration {
        intercept,
        slope,
        residuals,
    })
}

pub fn frequency_to_wavelength(freq: f64) -> f64 {
    SPEED_OF_LIGHT / freq
}

/// Histogram of the signal-arm wavelengths as measured by the spectrometer.
pub fn marginal_spectrum<R: Rng + ?Sized>(
    pairs: &[FrequencyPairSample],
    jsa: &JsaModel,
    spectrometer: &Spectrometer,
    binning: Binning,
    rng: &mut R,
) -> Result<SpectralHistogram> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair stream"));
    }
    let measured: Vec<f64> = pairs
        .iter()
        .map(|p| spectrometer.measure_wavelength(frequency_to_wavelength(p.signal_frequency(jsa)), rng))
        .collect();
    SpectralHistogram::from_wavelengths(&measured, binning, spectrometer.calibration.clone())
}

/// Joint spectral intensity on a square wavelength grid, row = signal bin,
/// column = idler bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsiHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl JsiHistogram {
    pub fn bins(&self) -> usize {
        self.bin_edges.len() - 1
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn at(&self, signal_bin: usize, idler_bin: usize) -> u64 {
        self.counts[signal_bin * self.bins() + idler_bin]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn marginal_signal(&self) -> Vec<u64> {
        let b = self.bins();
        (0..b).map(|i| self.counts[i * b..(i + 1) * b].iter().sum()).collect()
    }

    pub fn marginal_idler(&self) -> Vec<u64> {
        let b = self.bins();
        (0..b).map(|j| (0..b).map(|i| self.counts[i * b + j]).sum()).collect()
    }

    /// Mean counts along the main diagonal (λ_s = λ_i) and along the
    /// anti-diagonal (λ_s + λ_i = const), skipping the central cells they
    /// share and staying within half the marginal FWHM of the center.
    pub fn line_intensities(&self) -> (f64, f64) {
        let b = self.bins();
        let marginal: Vec<f64> = self.marginal_signal().iter().map(|&c| c as f64).collect();
        let idx: Vec<f64> = (0..b).map(|i| i as f64).collect();
        let half_width = (0.5 * profile_fwhm(&marginal, &idx)).max(1.5);
        let mid = b as f64 / 2.0;
        let (mut diag, mut anti, mut n) = (0.0, 0.0, 0.0);
        for i in 0..b {
            let offset = (i as f64 + 0.5 - mid).abs();
            if offset >= 1.0 && offset <= half_width {
                diag += self.at(i, i) as f64;
                anti += self.at(i, b - 1 - i) as f64;
                n += 1.0;
            }
        }
        if n == 0.0 {
            return (0.0, 0.0);
        }
        (diag / n, anti / n)
    }

    /// Anti-diagonal over diagonal intensity.
    pub fn ridge_contrast(&self) -> f64 {
        let (diag, anti) = self.line_intensities();
        anti / diag
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.bin_edges != other.bin_edges {
            return Err(domain("cannot merge JSI histograms with different binning"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Grid CSV: the header row lists idler bin centers, each following row
    /// starts with the signal bin center.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let centers = self.centers();
        write!(w, "signal_m\\idler_m")?;
        for c in &centers {
            write!(w, ",{c:e}")?;
        }
        writeln!(w)?;
        let b = self.bins();
        for (i, c) in centers.iter().enumerate() {
            write!(w, "{c:e}")?;
            for n in &self.counts[i * b..(i + 1) * b] {
                write!(w, ",{n}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Both photons of every pair go through the dispersive fiber. Without a
/// fixed range the grid is square and centered on the mean wavelength.
pub fn jsi_histogram<R: Rng + ?Sized>(
    pairs: &[FrequencyPairSample],
    jsa: &JsaModel,
    spectrometer: &Spectrometer,
    binning: Binning,
    rng: &mut R,
) -> Result<JsiHistogram> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair stream"));
    }
    let measured: Vec<(f64, f64)> = pairs
        .iter()
        .map(|p| {
            let s = spectrometer.measure_wavelength(frequency_to_wavelength(p.signal_frequency(jsa)), rng);
            let i = spectrometer.measure_wavelength(frequency_to_wavelength(p.idler_frequency(jsa)), rng);
            (s, i)
        })
        .collect();
    let bins = binning.bins;
    if bins == 0 {
        return Err(domain("histogram needs at least one bin"));
    }
    let (lo, hi) = match binning.range {
        Some(r) => binning.resolve(&[r.0, r.1])?,
        None => {
            let n = 2.0 * measured.len() as f64;
            let center = measured.iter().map(|(a, b)| a + b).sum::<f64>() / n;
            let half = measured
                .iter()
                .fold(0.0f64, |m, (a, b)| m.max((a - center).abs()).max((b - center).abs()));
            widen_degenerate(center - half, center + half, bins)
        }
    };
    let mut counts = vec![0u64; bins * bins];
    for (s, i) in measured {
        if let (Some(a), Some(b)) = (bin_index(s, lo, hi, bins), bin_index(i, lo, hi, bins)) {
            counts[a * bins + b] += 1;
        }
    }
    Ok(JsiHistogram {
        bin_edges: edges(lo, hi, bins),
        counts,
    })
}
