//! Estimators and fits: chopped differential rates, significance thresholds,
//! log-log power laws, linear+quadratic crossover fits and the
//! squeezed-vacuum/classical efficiency ratio.

use serde::{Deserialize, Serialize};

use crate::detection::ChoppedCounts;
use crate::error::{domain, Error, Result};

/// Maximum distance of a fitted exponent from 2 for the fit to count as
/// quadratic in [`efficiency_ratio`].
pub const QUADRATIC_TOLERANCE: f64 = 0.2;

/// Minimum max/min abscissa ratio for a crossover fit to be well conditioned.
pub const CROSSOVER_MIN_SPAN: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferentialResult {
    /// Signal rate while the beam is unblocked.
    pub rate_estimate: f64,
    pub sigma: f64,
    pub z_score: f64,
    pub counts_open: u64,
    pub counts_closed: u64,
}

impl DifferentialResult {
    /// One-sided test against `k` standard deviations.
    pub fn exceeds(&self, k: f64) -> bool {
        self.z_score > k
    }
}

pub fn differential_rate(cc: &ChoppedCounts) -> Result<DifferentialResult> {
    if !(cc.open_time > 0.0 && cc.closed_time > 0.0) {
        return Err(domain(format!(
            "open and closed times must be positive, got {} and {}",
            cc.open_time, cc.closed_time
        )));
    }
    let (no, nc) = (cc.open_counts as f64, cc.closed_counts as f64);
    let rate = no / cc.open_time - nc / cc.closed_time;
    let sigma = (no / cc.open_time.powi(2) + nc / cc.closed_time.powi(2)).sqrt();
    let z = if sigma > 0.0 { rate / sigma } else { 0.0 };
    Ok(DifferentialResult {
        rate_estimate: rate,
        sigma,
        z_score: z,
        counts_open: cc.open_counts,
        counts_closed: cc.closed_counts,
    })
}

/// Smallest unblocked-beam rate a chopped measurement resolves at `k` sigma:
/// R_det = k/duty·√(D/T).
pub fn detection_threshold(dark_rate: f64, duration: f64, k: f64, duty: f64) -> Result<f64> {
    if !(dark_rate >= 0.0 && dark_rate.is_finite()) {
        return Err(domain(format!("dark rate must be >= 0, got {dark_rate}")));
    }
    if !(duration > 0.0 && k > 0.0) {
        return Err(domain("duration and k must be positive"));
    }
    if !(duty > 0.0 && duty < 1.0) {
        return Err(domain(format!("duty cycle must lie in (0, 1), got {duty}")));
    }
    Ok(k / duty * (dark_rate / duration).sqrt())
}

/// Excess counts needed for a `k` sigma detection: k·√(D·T).
pub fn count_threshold(dark_rate: f64, duration: f64, k: f64) -> Result<f64> {
    if !(dark_rate >= 0.0 && duration > 0.0 && k > 0.0) {
        return Err(domain("dark rate must be >= 0, duration and k positive"));
    }
    Ok(k * (dark_rate * duration).sqrt())
}

/// A measured rate together with the exposure needed to rebuild its
/// shot-noise variance.
///
/// `background` is the dark rate subtracted in a chopped measurement with
/// equal open and closed times of length `exposure`; use 0 for plain
/// counting. The variance at a true rate R is (R + 2·background)/exposure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub x: f64,
    pub rate: f64,
    pub exposure: f64,
    pub background: f64,
}

impl RatePoint {
    pub fn counting(x: f64, rate: f64, exposure: f64) -> Self {
        Self { x, rate, exposure, background: 0.0 }
    }

    pub fn chopped(x: f64, cc: &ChoppedCounts, background: f64) -> Result<Self> {
        let d = differential_rate(cc)?;
        Ok(Self { x, rate: d.rate_estimate, exposure: cc.open_time, background })
    }

    fn variance(&self, rate: f64) -> f64 {
        // floor at one count so empty points still carry finite weight
        (rate.max(0.0) + 2.0 * self.background).max(1.0 / self.exposure) / self.exposure
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub log_prefactor: f64,
    pub exponent_stderr: f64,
    pub log_prefactor_stderr: f64,
    /// ln c of the best pure quadratic y = c·x² on the same data and weights.
    pub quadratic_log_prefactor: f64,
    pub points: usize,
}

impl PowerLawFit {
    pub fn predict(&self, x: f64) -> f64 {
        (self.log_prefactor + self.exponent * x.ln()).exp()
    }
}

/// Least-squares line through (ln x, ln y).
///
/// `weights` are inverse variances of ln y. Without them every point weighs
/// the same and the standard errors come from the residual scatter.
pub fn fit_power_law(points: &[(f64, f64)], weights: Option<&[f64]>) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("power-law fit needs at least 3 points, got {}", points.len())));
    }
    if let Some(w) = weights {
        if w.len() != points.len() {
            return Err(domain("weights and points differ in length"));
        }
        if w.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(domain("weights must be positive and finite"));
        }
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(domain("power-law fit needs positive, finite data"));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; points.len()],
    };
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(&lx).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(&ly).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&lx).map(|(w, x)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = (0..w.len()).map(|i| w[i] * (lx[i] - mx) * (ly[i] - my)).sum();
    let spread = lx.iter().fold(0.0f64, |m, x| m.max((x - mx).abs()));
    if spread <= 1e-12 * mx.abs().max(1.0) {
        return Err(Error::Fit("all abscissae coincide; exponent is undetermined".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let scale = if weights.is_some() {
        1.0
    } else {
        let rss: f64 = (0..w.len()).map(|i| (ly[i] - intercept - slope * lx[i]).powi(2)).sum();
        rss / (w.len() - 2) as f64
    };
    let var_slope = scale / sxx;
    let var_intercept = scale * (1.0 / sw + mx * mx / sxx);
    let quad = (0..w.len()).map(|i| w[i] * (ly[i] - 2.0 * lx[i])).sum::<f64>() / sw;
    Ok(PowerLawFit {
        exponent: slope,
        log_prefactor: intercept,
        exponent_stderr: var_slope.sqrt(),
        log_prefactor_stderr: var_intercept.sqrt(),
        quadratic_log_prefactor: quad,
        points: points.len(),
    })
}

/// Power law with shot-noise weights: fit with variances from the observed
/// rates, then refit once with variances from the fitted rates.
pub fn fit_power_law_poisson(points: &[RatePoint]) -> Result<PowerLawFit> {
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.rate)).collect();
    let weights = |pred: &dyn Fn(&RatePoint) -> f64| -> Vec<f64> {
        points.iter().map(|p| pred(p).powi(2) / p.variance(pred(p))).collect()
    };
    let first = fit_power_law(&xy, Some(&weights(&|p| p.rate)))?;
    fit_power_law(&xy, Some(&weights(&|p| first.predict(p.x))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverFit {
    /// Linear coefficient in rate = a·N + b·N².
    pub a: f64,
    /// Quadratic coefficient.
    pub b: f64,
    pub n_cross: f64,
    pub n_cross_stderr: f64,
    /// Covariance of (a, b).
    pub covariance: [[f64; 2]; 2],
    /// Both coefficients positive.
    pub accepted: bool,
    pub diagnostics: Vec<String>,
}

impl CrossoverFit {
    pub fn a_stderr(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn b_stderr(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    pub fn predict(&self, n: f64) -> f64 {
        self.a * n + self.b * n * n
    }
}

// Weighted least squares of y = c0·x + c1·x², columns scaled to unit maximum.
fn solve_crossover(points: &[RatePoint], var: &[f64]) -> Result<([f64; 2], [[f64; 2]; 2])> {
    let s0 = points.iter().fold(0.0f64, |m, p| m.max(p.x));
    let s1 = s0 * s0;
    let (mut m00, mut m01, mut m11, mut v0, mut v1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (p, &v) in points.iter().zip(var) {
        let w = 1.0 / v;
        let (f0, f1) = (p.x / s0, p.x * p.x / s1);
        m00 += w * f0 * f0;
        m01 += w * f0 * f1;
        m11 += w * f1 * f1;
        v0 += w * f0 * p.rate;
        v1 += w * f1 * p.rate;
    }
    let det = m00 * m11 - m01 * m01;
    if !(det > 1e-14 * m00 * m11) {
        return Err(Error::Fit("crossover normal equations are singular".into()));
    }
    let inv = [[m11 / det, -m01 / det], [-m01 / det, m00 / det]];
    let c0 = inv[0][0] * v0 + inv[0][1] * v1;
    let c1 = inv[1][0] * v0 + inv[1][1] * v1;
    let cov = [
        [inv[0][0] / (s0 * s0), inv[0][1] / (s0 * s1)],
        [inv[1][0] / (s0 * s1), inv[1][1] / (s1 * s1)],
    ];
    Ok(([c0 / s0, c1 / s1], cov))
}

/// Fits rate = a·N + b·N² with shot-noise weights, iterated once, and
/// reports N_cross = a/b.
pub fn fit_crossover(points: &[RatePoint]) -> Result<CrossoverFit> {
    if points.len() < 4 {
        return Err(Error::Fit(format!("crossover fit needs at least 4 points, got {}", points.len())));
    }
    for p in points {
        if !(p.x > 0.0 && p.x.is_finite()) {
            return Err(domain(format!("photon numbers must be positive, got {}", p.x)));
        }
        if !(p.exposure > 0.0 && p.background >= 0.0 && p.rate.is_finite()) {
            return Err(domain("rate points need finite rates, positive exposure, non-negative background"));
        }
    }
    let observed: Vec<f64> = points.iter().map(|p| p.variance(p.rate)).collect();
    let (c, _) = solve_crossover(points, &observed)?;
    let expected: Vec<f64> = points.iter().map(|p| p.variance(c[0] * p.x + c[1] * p.x * p.x)).collect();
    let ([a, b], cov) = solve_crossover(points, &expected)?;

    let mut diagnostics = Vec::new();
    let (lo, hi) = points.iter().fold((f64::INFINITY, 0.0f64), |(l, h), p| (l.min(p.x), h.max(p.x)));
    let span = hi / lo;
    if span < CROSSOVER_MIN_SPAN {
        diagnostics.push(format!(
            "ill-conditioned: photon numbers span a factor {span:.3} (< {CROSSOVER_MIN_SPAN}), data may cover one regime only"
        ));
    }
    if a <= 0.0 {
        diagnostics.push(format!("linear coefficient not positive: a = {a:e}"));
    }
    if b <= 0.0 {
        diagnostics.push(format!("quadratic coefficient not positive: b = {b:e}"));
    }
    let n_cross = a / b;
    let rel = cov[0][0] / (a * a) + cov[1][1] / (b * b) - 2.0 * cov[0][1] / (a * b);
    let n_cross_stderr = if a == 0.0 {
        cov[0][0].sqrt() / b.abs()
    } else {
        n_cross.abs() * rel.max(0.0).sqrt()
    };
    Ok(CrossoverFit {
        a,
        b,
        n_cross,
        n_cross_stderr,
        covariance: cov,
        accepted: a > 0.0 && b > 0.0,
        diagnostics,
    })
}

/// A power-law fit paired with the pulse duration of its source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulsedFit {
    pub fit: PowerLawFit,
    pub pulse_duration: f64,
}

/// Relative two-photon efficiency of `bsv` over `reference`, after
/// normalizing both quadratic prefactors by peak power (prefactor times
/// pulse duration).
pub fn efficiency_ratio(bsv: &PulsedFit, reference: &PulsedFit) -> Result<f64> {
    for (label, f) in [("squeezed-vacuum", bsv), ("reference", reference)] {
        if (f.fit.exponent - 2.0).abs() > QUADRATIC_TOLERANCE {
            return Err(Error::Fit(format!(
                "{label} fit is not quadratic: exponent {:.3}",
                f.fit.exponent
            )));
        }
        if !(f.pulse_duration > 0.0 && f.pulse_duration.is_finite()) {
            return Err(domain(format!("{label} pulse duration must be positive")));
        }
    }
    let prefactors = (bsv.fit.quadratic_log_prefactor - reference.fit.quadratic_log_prefactor).exp();
    Ok(prefactors * bsv.pulse_duration / reference.pulse_duration)
}

/// Fit summary written as JSON. Absent quantities are omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_cross: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r_det: Option<f64>,
}

impl FitReport {
    pub fn from_power_law(fit: &PowerLawFit) -> Self {
        Self { exponent: Some(fit.exponent), stderr: Some(fit.exponent_stderr), ..Self::default() }
    }

    pub fn from_crossover(fit: &CrossoverFit) -> Self {
        Self {
            a: Some(fit.a),
            b: Some(fit.b),
            n_cross: Some(fit.n_cross),
            stderr: Some(fit.n_cross_stderr),
            ..Self::default()
        }
    }

    pub fn from_differential(d: &DifferentialResult, r_det: f64) -> Self {
        Self { z: Some(d.z_score), r_det: Some(r_det), ..Self::default() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{simulate_chopped_counts, DetectionConfig};
    use crate::rng::from_seed;
    use rand_distr::{Distribution, Poisson};

    fn cc(open: u64, closed: u64, t: f64) -> ChoppedCounts {
        ChoppedCounts { open_counts: open, closed_counts: closed, open_time: t, closed_time: t }
    }

    #[test]
    fn differential_examples() {
        let d = differential_rate(&cc(90_000, 90_000, 30_000.0)).unwrap();
        assert_eq!((d.rate_estimate, d.z_score), (0.0, 0.0));

        let d = differential_rate(&cc(90_000, 90_345, 30_000.0)).unwrap();
        assert!(d.z_score.abs() < 1.0 && d.z_score < 0.0);

        let d = differential_rate(&cc(117_000, 90_000, 30_000.0)).unwrap();
        assert!((d.rate_estimate - 0.9).abs() < 1e-12);
        assert!((d.sigma - 0.015).abs() < 0.001);
        assert!((d.z_score - 59.3).abs() < 0.1, "{}", d.z_score);
        assert!(d.exceeds(5.0));

        assert!(differential_rate(&cc(1, 1, 0.0)).is_err());
        let d = differential_rate(&cc(0, 0, 10.0)).unwrap();
        assert_eq!(d.z_score, 0.0);
    }

    #[test]
    fn thresholds() {
        let r = detection_threshold(3.0, 60_000.0, 5.0, 0.5).unwrap();
        assert!((r - 0.070_710_678).abs() < 1e-8);
        assert!((detection_threshold(200.0, 20_000.0, 5.0, 0.5).unwrap() - 1.0).abs() < 1e-12);
        let r4 = detection_threshold(3.0, 240_000.0, 5.0, 0.5).unwrap();
        assert!((r / r4 - 2.0).abs() < 1e-12);
        assert!((count_threshold(3.0, 60_000.0, 5.0).unwrap() - 2121.32).abs() < 0.01);
        assert!(detection_threshold(3.0, 60_000.0, 5.0, 1.0).is_err());
        assert!(detection_threshold(3.0, 0.0, 5.0, 0.5).is_err());
        assert!(detection_threshold(-3.0, 1.0, 5.0, 0.5).is_err());
    }

    #[test]
    fn threshold_matches_count_domain() {
        for (d, t, k, duty) in [(3.0, 60_000.0, 5.0, 0.5), (200.0, 20_000.0, 3.0, 0.3), (0.5, 10.0, 2.0, 0.8)] {
            let r = detection_threshold(d, t, k, duty).unwrap();
            let excess = r * t * duty;
            assert!((excess / count_threshold(d, t, k).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn differential_is_unbiased() {
        let cfg = DetectionConfig { duration: 600.0, ..Default::default() };
        let mut rng = from_seed(21);
        let runs = 10_000;
        let rs = 0.7;
        let est: Vec<f64> = (0..runs)
            .map(|_| differential_rate(&simulate_chopped_counts(rs, &cfg, &mut rng).unwrap()).unwrap().rate_estimate)
            .collect();
        let mean = est.iter().sum::<f64>() / runs as f64;
        let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
        assert!((mean - rs).abs() < 3.0 * (var / runs as f64).sqrt(), "{mean}");
    }

    #[test]
    fn power_law_exact() {
        let sq: Vec<(f64, f64)> = (1..=10).map(|i| (i as f64, (i * i) as f64)).collect();
        let f = fit_power_law(&sq, None).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-9);
        assert!(f.log_prefactor.abs() < 1e-9);
        assert!(f.quadratic_log_prefactor.abs() < 1e-9);
        let lin: Vec<(f64, f64)> = (1..=10).map(|i| (i as f64 * 1e3, 4.0 * i as f64 * 1e3)).collect();
        let f = fit_power_law(&lin, None).unwrap();
        assert!((f.exponent - 1.0).abs() < 1e-9);
        assert!((f.predict(7.0) - 28.0).abs() < 1e-9);
    }

    #[test]
    fn power_law_errors() {
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 4.0)], None).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 0.0), (3.0, 9.0)], None).is_err());
        assert!(fit_power_law(&[(-1.0, 1.0), (2.0, 4.0), (3.0, 9.0)], None).is_err());
        assert!(matches!(
            fit_power_law(&[(2.0, 1.0), (2.0, 4.0), (2.0, 9.0)], None),
            Err(Error::Fit(_))
        ));
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 4.0), (3.0, 9.0)], Some(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn power_law_stderr_is_calibrated() {
        // known-variance weights: the exponent's pull should be ~N(0, 1)
        let mut rng = from_seed(22);
        let trials = 400;
        let mut pulls = Vec::new();
        for _ in 0..trials {
            let pts: Vec<RatePoint> = (0..8)
                .map(|i| {
                    let x = 10f64.powf(i as f64 / 2.0);
                    let lam = 10.0 * x * x;
                    let n = Poisson::new(lam).unwrap().sample(&mut rng);
                    RatePoint::counting(x, n / 10.0, 10.0)
                })
                .collect();
            let f = fit_power_law_poisson(&pts).unwrap();
            pulls.push((f.exponent - 2.0) / f.exponent_stderr);
        }
        let n = pulls.len() as f64;
        let mean = pulls.iter().sum::<f64>() / n;
        let var = pulls.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.2, "{mean}");
        assert!((var - 1.0).abs() < 0.2, "{var}");
    }

    fn exact_crossover(a: f64, b: f64) -> Vec<RatePoint> {
        (0..9)
            .map(|i| {
                let n = 2.5 * 10f64.powf(i as f64 / 2.0);
                RatePoint::counting(n, a * n + b * n * n, 1e4)
            })
            .collect()
    }

    #[test]
    fn crossover_exact() {
        let f = fit_crossover(&exact_crossover(1.0, 1.0 / 250.0)).unwrap();
        assert!((f.n_cross - 250.0).abs() < 1e-6, "{}", f.n_cross);
        assert!(f.accepted && f.diagnostics.is_empty());
    }

    #[test]
    fn crossover_errors_and_diagnostics() {
        let pts = exact_crossover(1.0, 1.0 / 250.0);
        assert!(matches!(fit_crossover(&pts[..3]), Err(Error::Fit(_))));
        let narrow: Vec<RatePoint> = (0..5)
            .map(|i| {
                let n = 100.0 + 10.0 * i as f64;
                RatePoint::counting(n, n + n * n / 250.0, 1e4)
            })
            .collect();
        let f = fit_crossover(&narrow).unwrap();
        assert!(f.diagnostics.iter().any(|d| d.contains("ill-conditioned")));
        let mut bad = pts.clone();
        bad[0].x = 0.0;
        assert!(fit_crossover(&bad).is_err());
    }

    #[test]
    fn crossover_pure_quadratic() {
        let mut rng = from_seed(23);
        let pts: Vec<RatePoint> = (0..9)
            .map(|i| {
                let n = 2.5 * 10f64.powf(i as f64 / 2.0);
                let t = 1e4 / (n * n / 250.0).max(1e-3);
                let lam = n * n / 250.0 * t;
                RatePoint::counting(n, Poisson::new(lam).unwrap().sample(&mut rng) / t, t)
            })
            .collect();
        let f = fit_crossover(&pts).unwrap();
        assert!(f.a.abs() < 3.0 * f.a_stderr(), "a = {} ± {}", f.a, f.a_stderr());
        assert!(f.n_cross.abs() < 3.0 * f.n_cross_stderr);
    }

    #[test]
    fn crossover_stderr_covers_truth() {
        let mut rng = from_seed(24);
        let mut covered = 0;
        let trials = 200;
        for _ in 0..trials {
            let pts: Vec<RatePoint> = exact_crossover(1.0, 1.0 / 250.0)
                .into_iter()
                .map(|p| {
                    let t = 1e3 / p.rate;
                    let n = Poisson::new(p.rate * t).unwrap().sample(&mut rng);
                    RatePoint::counting(p.x, n / t, t)
                })
                .collect();
            let f = fit_crossover(&pts).unwrap();
            if (f.n_cross - 250.0).abs() < f.n_cross_stderr {
                covered += 1;
            }
        }
        // nominal 68 %
        let frac = covered as f64 / trials as f64;
        assert!((0.55..0.8).contains(&frac), "{frac}");
    }

    fn quad_fit(c: f64) -> PowerLawFit {
        let pts: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, c * (i * i) as f64)).collect();
        fit_power_law(&pts, None).unwrap()
    }

    #[test]
    fn efficiency_ratio_cases() {
        let f = PulsedFit { fit: quad_fit(3.0), pulse_duration: 1e-12 };
        assert!((efficiency_ratio(&f, &f).unwrap() - 1.0).abs() < 1e-12);

        let bsv = PulsedFit { fit: quad_fit(1.8 * 9.2 / 2.5), pulse_duration: 2.5e-12 };
        let laser = PulsedFit { fit: quad_fit(1.0), pulse_duration: 9.2e-12 };
        assert!((efficiency_ratio(&bsv, &laser).unwrap() - 1.8).abs() < 1e-9);

        let lin: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, i as f64)).collect();
        let lin = PulsedFit { fit: fit_power_law(&lin, None).unwrap(), pulse_duration: 1e-12 };
        assert!(matches!(efficiency_ratio(&lin, &laser), Err(Error::Fit(_))));
        let zero = PulsedFit { pulse_duration: 0.0, ..laser };
        assert!(efficiency_ratio(&bsv, &zero).is_err());
    }

    #[test]
    fn report_json_omits_absent_fields() {
        let r = FitReport { z: Some(1.5), r_det: Some(0.07), ..Default::default() };
        let s = r.to_json().unwrap();
        assert!(s.contains("\"z\"") && !s.contains("exponent"));
        let back: FitReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn exponent_is_scale_invariant(k in 0.5f64..3.0, c in 1e-3f64..1e3, s in 1e-3f64..1e3) {
                let pts: Vec<(f64, f64)> = (1..=7)
                    .map(|i| { let x = i as f64; (x, c * x.powf(k) * (1.0 + 0.05 * ((i * 7 % 5) as f64 - 2.0))) })
                    .collect();
                let base = fit_power_law(&pts, None).unwrap();
                let sx: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x * s, y)).collect();
                let sy: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x, y * s)).collect();
                let fx = fit_power_law(&sx, None).unwrap();
                let fy = fit_power_law(&sy, None).unwrap();
                prop_assert!((fx.exponent - base.exponent).abs() < 1e-9);
                prop_assert!((fy.exponent - base.exponent).abs() < 1e-9);
                prop_assert!((fy.log_prefactor - base.log_prefactor - s.ln()).abs() < 1e-9);
            }

            #[test]
            fn crossover_rate_scaling_keeps_n_cross(scale in 1e-3f64..1e3, b in 1e-4f64..1e-1) {
                let pts = exact_crossover(1.0, b);
                let scaled: Vec<RatePoint> = pts.iter().map(|p| RatePoint { rate: p.rate * scale, ..*p }).collect();
                let f0 = fit_crossover(&pts).unwrap();
                let f1 = fit_crossover(&scaled).unwrap();
                prop_assert!((f1.n_cross / f0.n_cross - 1.0).abs() < 1e-8);
                prop_assert!((f0.n_cross * b - 1.0).abs() < 1e-8);
            }

            #[test]
            fn threshold_scales_as_inverse_sqrt_time(d in 0.1f64..1e3, t in 1.0f64..1e6, m in 1.0f64..100.0) {
                let a = detection_threshold(d, t, 5.0, 0.5).unwrap();
                let b = detection_threshold(d, t * m, 5.0, 0.5).unwrap();
                prop_assert!((a / b - m.sqrt()).abs() < 1e-9 * m.sqrt());
            }
        }
    }
}
