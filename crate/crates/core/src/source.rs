//! Stochastic model of a squeezed-vacuum source.
//!
//! Per-mode photon numbers follow the single-mode squeezed-vacuum law for
//! type-0/I phase matching (photons only in pairs, P(2k) ∝ C(2k,k)(λ/4)^k with
//! λ = n/(n+1)) and a thermal pair-number law for type-II. Frequency pairs are
//! drawn from a double-Gaussian joint spectrum, mixed with an uncorrelated
//! component whose weight grows with gain.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, ensure_finite_nonneg, ensure_positive, Result};
use crate::model::PhaseMatching;
use crate::rng::{from_seed, SimRng};

/// FWHM of a Gaussian in units of its standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

const CDF_TAIL: f64 = 1e-12;
/// Above this mean the inverse-CDF table gets long; switch to the
/// gamma-Poisson representation of the same law.
const MAX_TABLE_MEAN: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseSample {
    pub per_mode_photons: Vec<u64>,
    /// Pairs whose two photons are both still present.
    pub per_mode_pairs: Vec<u64>,
    pub total_photons: u64,
}

impl PulseSample {
    pub fn empty(modes: usize) -> Self {
        Self {
            per_mode_photons: vec![0; modes],
            per_mode_pairs: vec![0; modes],
            total_photons: 0,
        }
    }

    pub fn total_pairs(&self) -> u64 {
        self.per_mode_pairs.iter().sum()
    }

    pub fn modes(&self) -> usize {
        self.per_mode_photons.len()
    }
}

/// Pair-number law of one mode. Both variants are negative binomials in the
/// pair number k: shape 1/2 for single-mode squeezing, shape 1 (geometric)
/// for two-mode squeezing.
#[derive(Debug, Clone)]
enum PairLaw {
    Zero,
    /// Cumulative probabilities of k = 0, 1, 2, ... pairs.
    Table(Vec<f64>),
    GammaPoisson(Gamma<f64>),
    Geometric { ln_q: f64 },
}

impl PairLaw {
    fn squeezed(n: f64) -> Self {
        if n == 0.0 {
            return PairLaw::Zero;
        }
        if n > MAX_TABLE_MEAN {
            return PairLaw::GammaPoisson(Gamma::new(0.5, n).expect("positive parameters"));
        }
        let lambda = n / (n + 1.0);
        let mut p = (1.0 / (1.0 + n)).sqrt();
        let mut acc = p;
        let mut cdf = vec![acc];
        let mut k = 0.0;
        while acc < 1.0 - CDF_TAIL {
            p *= lambda * (2.0 * k + 1.0) / (2.0 * k + 2.0);
            k += 1.0;
            acc += p;
            cdf.push(acc);
            if p == 0.0 {
                break;
            }
        }
        PairLaw::Table(cdf)
    }

    fn thermal_pairs(mean_pairs: f64) -> Self {
        if mean_pairs == 0.0 {
            return PairLaw::Zero;
        }
        let q = mean_pairs / (1.0 + mean_pairs);
        PairLaw::Geometric { ln_q: q.ln() }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            PairLaw::Zero => 0,
            PairLaw::Table(cdf) => {
                let u: f64 = rng.random();
                let k = cdf.partition_point(|&c| c <= u);
                k.min(cdf.len() - 1) as u64
            }
            PairLaw::GammaPoisson(gamma) => {
                let g = gamma.sample(rng);
                if g <= 0.0 {
                    return 0;
                }
                Poisson::new(g).map(|p| p.sample(rng) as u64).unwrap_or(0)
            }
            PairLaw::Geometric { ln_q } => {
                // inverse CDF: P(K >= k) = q^k
                let u: f64 = 1.0 - rng.random::<f64>();
                (u.ln() / ln_q).floor() as u64
            }
        }
    }
}

/// Reusable per-pulse sampler for `modes` independent, identically
/// distributed modes with mean `n_per_mode` photons each.
#[derive(Debug, Clone)]
pub struct PulseSampler {
    modes: usize,
    law: PairLaw,
}

impl PulseSampler {
    pub fn new(n_per_mode: f64, modes: usize, pm: PhaseMatching) -> Result<Self> {
        ensure_finite_nonneg("n_per_mode", n_per_mode)?;
        if modes == 0 {
            return Err(domain("mode count must be at least 1"));
        }
        let law = match pm {
            PhaseMatching::Type0OrI => PairLaw::squeezed(n_per_mode),
            PhaseMatching::TypeII => PairLaw::thermal_pairs(n_per_mode / 2.0),
        };
        Ok(Self { modes, law })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PulseSample {
        let mut out = PulseSample::empty(self.modes);
        self.sample_into(rng, &mut out);
        out
    }

    /// Overwrites `out` in place; avoids reallocating in tight loops.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut PulseSample) {
        out.per_mode_photons.resize(self.modes, 0);
        out.per_mode_pairs.resize(self.modes, 0);
        let mut total = 0;
        for (photons, pairs) in out
            .per_mode_photons
            .iter_mut()
            .zip(out.per_mode_pairs.iter_mut())
        {
            let k = self.law.sample(rng);
            *pairs = k;
            *photons = 2 * k;
            total += 2 * k;
        }
        out.total_photons = total;
    }
}

pub fn sample_pulse(n_per_mode: f64, modes: usize, pm: PhaseMatching, seed: u64) -> Result<PulseSample> {
    let sampler = PulseSampler::new(n_per_mode, modes, pm)?;
    Ok(sampler.sample(&mut from_seed(seed)))
}

/// Independent binomial thinning of every photon with survival probability `eta`.
///
/// A pair stays intact only if both photons survive; a pair that loses one
/// photon leaves a lone photon that no longer counts as a pair.
pub fn apply_loss<R: Rng + ?Sized>(sample: &PulseSample, eta: f64, rng: &mut R) -> Result<PulseSample> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(domain(format!("transmission must lie in [0, 1], got {eta}")));
    }
    if eta == 1.0 {
        return Ok(sample.clone());
    }
    if eta == 0.0 {
        return Ok(PulseSample::empty(sample.modes()));
    }
    let both = eta * eta;
    // conditional on a pair not surviving intact: one photon survives
    let one_given_broken = 2.0 * eta * (1.0 - eta) / (1.0 - both);
    let mut out = PulseSample::empty(sample.modes());
    let mut total = 0;
    for i in 0..sample.modes() {
        let pairs = sample.per_mode_pairs[i];
        let lone = sample.per_mode_photons[i] - 2 * pairs;
        let intact = binomial(rng, pairs, both);
        let halves = binomial(rng, pairs - intact, one_given_broken);
        let lone_left = binomial(rng, lone, eta);
        out.per_mode_pairs[i] = intact;
        out.per_mode_photons[i] = 2 * intact + halves + lone_left;
        total += out.per_mode_photons[i];
    }
    out.total_photons = total;
    Ok(out)
}

fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Running estimate of g⁽²⁾(0) = ⟨N(N−1)⟩/⟨N⟩² with a delta-method standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct G2Accumulator {
    count: f64,
    sum_n: f64,
    sum_n2: f64,
    sum_f: f64,
    sum_f2: f64,
    sum_nf: f64,
}

impl G2Accumulator {
    pub fn push(&mut self, n: u64) {
        let n = n as f64;
        let f = n * (n - 1.0);
        self.count += 1.0;
        self.sum_n += n;
        self.sum_n2 += n * n;
        self.sum_f += f;
        self.sum_f2 += f * f;
        self.sum_nf += n * f;
    }

    pub fn merge(&mut self, other: &Self) {
        self.count += other.count;
        self.sum_n += other.sum_n;
        self.sum_n2 += other.sum_n2;
        self.sum_f += other.sum_f;
        self.sum_f2 += other.sum_f2;
        self.sum_nf += other.sum_nf;
    }

    pub fn count(&self) -> u64 {
        self.count as u64
    }

    pub fn mean(&self) -> f64 {
        self.sum_n / self.count
    }

    /// (g², standard error); `None` until some photons have been seen.
    pub fn estimate(&self) -> Option<(f64, f64)> {
        if self.count < 2.0 || self.sum_n == 0.0 {
            return None;
        }
        let c = self.count;
        let mn = self.sum_n / c;
        let mf = self.sum_f / c;
        let var_n = self.sum_n2 / c - mn * mn;
        let var_f = self.sum_f2 / c - mf * mf;
        let cov = self.sum_nf / c - mn * mf;
        let g2 = mf / (mn * mn);
        let d_f = 1.0 / (mn * mn);
        let d_n = -2.0 * mf / (mn * mn * mn);
        let var = (d_f * d_f * var_f + d_n * d_n * var_n + 2.0 * d_f * d_n * cov) / c;
        Some((g2, var.max(0.0).sqrt()))
    }
}

/// Double-Gaussian joint spectral amplitude model. All values in Hz.
///
/// The sum detuning (signal + idler) has intensity FWHM `pump_fwhm` and the
/// difference detuning (signal − idler) has intensity FWHM `phasematch_fwhm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JsaModel {
    pub pump_fwhm: f64,
    pub phasematch_fwhm: f64,
    pub center_signal: f64,
    pub center_idler: f64,
}

impl JsaModel {
    pub fn new(pump_fwhm: f64, phasematch_fwhm: f64, center_signal: f64, center_idler: f64) -> Result<Self> {
        ensure_finite_nonneg("pump_fwhm", pump_fwhm)?;
        ensure_positive("phasematch_fwhm", phasematch_fwhm)?;
        ensure_positive("center_signal", center_signal)?;
        ensure_positive("center_idler", center_idler)?;
        Ok(Self {
            pump_fwhm,
            phasematch_fwhm,
            center_signal,
            center_idler,
        })
    }

    /// Degenerate source with the given single-arm marginal FWHM and Schmidt number.
    pub fn degenerate(center_freq: f64, marginal_fwhm: f64, schmidt_number: f64) -> Result<Self> {
        ensure_positive("marginal_fwhm", marginal_fwhm)?;
        if !(schmidt_number >= 1.0) || !schmidt_number.is_finite() {
            return Err(domain(format!("Schmidt number must be >= 1, got {schmidt_number}")));
        }
        let ratio = schmidt_number + (schmidt_number * schmidt_number - 1.0).sqrt();
        let pump = 2.0 * marginal_fwhm / (1.0 + ratio * ratio).sqrt();
        Self::new(pump, ratio * pump, center_freq, center_freq)
    }

    /// Degenerate CW-pumped source: the sum frequency is fixed exactly.
    pub fn degenerate_cw(center_freq: f64, marginal_fwhm: f64) -> Result<Self> {
        Self::new(0.0, 2.0 * marginal_fwhm, center_freq, center_freq)
    }

    /// FWHM of either single-arm marginal.
    pub fn marginal_fwhm(&self) -> f64 {
        self.pump_fwhm.hypot(self.phasematch_fwhm) / 2.0
    }
}

/// Analytic Schmidt number of the double-Gaussian JSA, equal to the ratio of
/// the marginal width to the conditional width of one arm.
pub fn schmidt_mode_estimate(jsa: &JsaModel) -> Result<f64> {
    let (p, q) = (jsa.pump_fwhm, jsa.phasematch_fwhm);
    if !(p > 0.0 && q > 0.0 && p.is_finite() && q.is_finite()) {
        return Err(domain(format!(
            "Schmidt estimate needs positive finite widths, got pump {p}, phase matching {q}"
        )));
    }
    let r = q / p;
    Ok(0.5 * (r + 1.0 / r))
}

/// One detected pair, as detunings (Hz) from the JSA centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPairSample {
    pub signal_detuning: f64,
    pub idler_detuning: f64,
    pub correlated: bool,
}

impl FrequencyPairSample {
    pub fn signal_frequency(&self, jsa: &JsaModel) -> f64 {
        jsa.center_signal + self.signal_detuning
    }

    pub fn idler_frequency(&self, jsa: &JsaModel) -> f64 {
        jsa.center_idler + self.idler_detuning
    }
}

/// Probability that a detected pair comes from one down-conversion event,
/// rather than from photons of different pairs.
pub fn correlated_fraction(n_per_mode: f64) -> f64 {
    1.0 / (1.0 + n_per_mode)
}

#[derive(Debug, Clone, Copy)]
pub struct PairSampler {
    sum: Normal<f64>,
    diff: Normal<f64>,
    marginal: Normal<f64>,
    p_corr: f64,
}

impl PairSampler {
    pub fn new(jsa: &JsaModel, n_per_mode: f64) -> Result<Self> {
        ensure_finite_nonneg("n_per_mode", n_per_mode)?;
        let normal = |fwhm: f64| Normal::new(0.0, fwhm / FWHM_PER_SIGMA).map_err(|e| domain(e.to_string()));
        Ok(Self {
            sum: normal(jsa.pump_fwhm)?,
            diff: normal(jsa.phasematch_fwhm)?,
            marginal: normal(jsa.marginal_fwhm())?,
            p_corr: correlated_fraction(n_per_mode),
        })
    }

    pub fn correlated_fraction(&self) -> f64 {
        self.p_corr
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FrequencyPairSample {
        if rng.random::<f64>() < self.p_corr {
            let s = self.sum.sample(rng);
            let d = self.diff.sample(rng);
            let (signal, idler) = if s == 0.0 {
                // keeps the sum exactly zero in the CW limit
                (0.5 * d, -0.5 * d)
            } else {
                (0.5 * (s + d), 0.5 * (s - d))
            };
            FrequencyPairSample {
                signal_detuning: signal,
                idler_detuning: idler,
                correlated: true,
            }
        } else {
            FrequencyPairSample {
                signal_detuning: self.marginal.sample(rng),
                idler_detuning: self.marginal.sample(rng),
                correlated: false,
            }
        }
    }
}

pub fn sample_pair_frequencies(
    jsa: &JsaModel,
    n_per_mode: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<FrequencyPairSample>> {
    let sampler = PairSampler::new(jsa, n_per_mode)?;
    let mut rng: SimRng = from_seed(seed);
    Ok((0..count).map(|_| sampler.sample(&mut rng)).collect())
}
