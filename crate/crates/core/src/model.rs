//! Closed-form two-photon rate laws and photon-flux bookkeeping.
//!
//! Everything here is a pure function of its arguments. Cross-sections are
//! carried in SI units internally (m⁴·s for the two-photon cross-section,
//! m² for the entangled cross-section); use [`gm_to_si`] at the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{domain, ensure_finite_nonneg, ensure_positive, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Planck constant (J·s).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// One Göppert-Mayer unit in m⁴·s.
pub const GM: f64 = 1e-58;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseMatching {
    /// Indistinguishable (degenerate, co-polarized) photons.
    Type0OrI,
    /// Orthogonally polarized, distinguishable photons.
    TypeII,
}

impl PhaseMatching {
    /// High-gain limit of g²(0), the default ξ for the heuristic rate law.
    pub fn high_gain_g2(self) -> f64 {
        match self {
            PhaseMatching::Type0OrI => 3.0,
            PhaseMatching::TypeII => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Pump {
    Cw,
    Pulsed {
        rep_rate: f64,
        pump_pulse_duration: f64,
    },
}

/// Squeezed-light source description.
///
/// The entanglement area is taken equal to the mode area (single transverse
/// mode), so only `mode_area` is stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub center_wavelength: f64,
    pub fwhm_bandwidth: f64,
    pub entanglement_time: f64,
    pub mode_area: f64,
    pub phase_matching: PhaseMatching,
    pub temporal_modes: f64,
    pub pump: Pump,
}

impl SourceSpec {
    pub fn new(
        center_wavelength: f64,
        fwhm_bandwidth: f64,
        mode_area: f64,
        phase_matching: PhaseMatching,
        temporal_modes: f64,
        pump: Pump,
    ) -> Result<Self> {
        ensure_positive("center_wavelength", center_wavelength)?;
        ensure_positive("mode_area", mode_area)?;
        if !(temporal_modes.is_finite() && temporal_modes >= 1.0) {
            return Err(domain(format!(
                "temporal_modes must be >= 1, got {temporal_modes}"
            )));
        }
        if let Pump::Pulsed {
            rep_rate,
            pump_pulse_duration,
        } = pump
        {
            ensure_positive("rep_rate", rep_rate)?;
            ensure_positive("pump_pulse_duration", pump_pulse_duration)?;
        }
        let entanglement_time = entanglement_time(fwhm_bandwidth)?;
        Ok(Self {
            center_wavelength,
            fwhm_bandwidth,
            entanglement_time,
            mode_area,
            phase_matching,
            temporal_modes,
            pump,
        })
    }

    /// Builds a source from a wavelength-domain FWHM bandwidth.
    pub fn from_wavelengths(
        center_wavelength: f64,
        fwhm_wavelength: f64,
        mode_area: f64,
        phase_matching: PhaseMatching,
        temporal_modes: f64,
        pump: Pump,
    ) -> Result<Self> {
        let b = bandwidth_from_wavelength(center_wavelength, fwhm_wavelength)?;
        Self::new(center_wavelength, b, mode_area, phase_matching, temporal_modes, pump)
    }

    /// Duration of the squeezed-light pulse, taken as M entanglement times.
    pub fn pulse_duration(&self) -> f64 {
        self.temporal_modes * self.entanglement_time
    }

    /// Flux bookkeeping at a given average power.
    ///
    /// For a CW pump the flux is the average flux. For a pulsed pump the
    /// flux is the in-pulse flux, with the pulse spread over
    /// [`pulse_duration`](Self::pulse_duration), so that n = N / M.
    pub fn excitation(&self, avg_power: f64) -> Result<ExcitationState> {
        ensure_finite_nonneg("avg_power", avg_power)?;
        let energy = photon_energy(self.center_wavelength)?;
        match self.pump {
            Pump::Cw => {
                let phi = avg_power / energy / self.mode_area;
                Ok(ExcitationState {
                    avg_power,
                    flux_density_phi: phi,
                    photons_per_pulse_n: 0.0,
                    photons_per_mode_n: photons_per_mode(
                        phi,
                        self.mode_area,
                        self.entanglement_time,
                    )?,
                })
            }
            Pump::Pulsed { rep_rate, .. } => {
                let big_n = photons_per_pulse(avg_power, rep_rate, self.center_wavelength)?;
                let phi = big_n / (self.mode_area * self.pulse_duration());
                Ok(ExcitationState {
                    avg_power,
                    flux_density_phi: phi,
                    photons_per_pulse_n: big_n,
                    photons_per_mode_n: photons_per_mode(
                        phi,
                        self.mode_area,
                        self.entanglement_time,
                    )?,
                })
            }
        }
    }

    pub fn with_rep_rate(&self, rep_rate: f64) -> Result<Self> {
        let mut out = self.clone();
        match &mut out.pump {
            Pump::Pulsed { rep_rate: r, .. } => {
                ensure_positive("rep_rate", rep_rate)?;
                *r = rep_rate;
                Ok(out)
            }
            Pump::Cw => Err(domain("CW source has no repetition rate")),
        }
    }
}

/// Effective two-photon absorber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorberSpec {
    pub sigma2_gm: f64,
    pub sigma2_si: f64,
    pub tpa_linewidth: f64,
    /// Lumped collection efficiency times molecule number; fitted per scenario.
    pub calibration_constant: f64,
}

impl AbsorberSpec {
    pub fn new(sigma2_gm: f64, tpa_linewidth: f64, calibration_constant: f64) -> Result<Self> {
        ensure_finite_nonneg("tpa_linewidth", tpa_linewidth)?;
        ensure_finite_nonneg("calibration_constant", calibration_constant)?;
        Ok(Self {
            sigma2_gm,
            sigma2_si: gm_to_si(sigma2_gm)?,
            tpa_linewidth,
            calibration_constant,
        })
    }

    /// Rhodamine 6G stand-in: 10 GM, broad (≈ 100 THz) two-photon linewidth.
    pub fn rhodamine_default() -> Self {
        Self::new(10.0, 1e14, 1.0).expect("valid constants")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationState {
    pub avg_power: f64,
    pub flux_density_phi: f64,
    pub photons_per_pulse_n: f64,
    pub photons_per_mode_n: f64,
}

/// Phenomenological parameters of the heuristic rate law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub f: f64,
    pub xi: f64,
}

impl RateParams {
    pub fn new(f: f64, xi: f64) -> Result<Self> {
        ensure_positive("f", f)?;
        ensure_positive("xi", xi)?;
        Ok(Self { f, xi })
    }

    /// f = 1 and ξ equal to the high-gain g²(0) of the phase-matching type.
    pub fn default_for(pm: PhaseMatching) -> Self {
        Self {
            f: 1.0,
            xi: pm.high_gain_g2(),
        }
    }
}

pub fn gm_to_si(sigma_gm: f64) -> Result<f64> {
    ensure_finite_nonneg("sigma_gm", sigma_gm)?;
    Ok(sigma_gm * GM)
}

/// Frequency FWHM (Hz) of a spectrum given its wavelength FWHM, c·Δλ/λ².
pub fn bandwidth_from_wavelength(center_wavelength: f64, fwhm_wavelength: f64) -> Result<f64> {
    ensure_positive("center_wavelength", center_wavelength)?;
    ensure_finite_nonneg("fwhm_wavelength", fwhm_wavelength)?;
    Ok(SPEED_OF_LIGHT * fwhm_wavelength / (center_wavelength * center_wavelength))
}

pub fn entanglement_time(bandwidth: f64) -> Result<f64> {
    ensure_positive("bandwidth", bandwidth)?;
    Ok(1.0 / bandwidth)
}

/// Mean photons per spectral-temporal mode, n = φ·A₀·Tₑ.
pub fn photons_per_mode(phi: f64, mode_area: f64, entanglement_time: f64) -> Result<f64> {
    ensure_finite_nonneg("phi", phi)?;
    ensure_finite_nonneg("mode_area", mode_area)?;
    ensure_finite_nonneg("entanglement_time", entanglement_time)?;
    Ok(phi * mode_area * entanglement_time)
}

pub fn photon_energy(wavelength: f64) -> Result<f64> {
    ensure_positive("wavelength", wavelength)?;
    Ok(PLANCK * SPEED_OF_LIGHT / wavelength)
}

/// Photons per pulse (not pairs) at a given average power and repetition rate.
pub fn photons_per_pulse(avg_power: f64, rep_rate: f64, wavelength: f64) -> Result<f64> {
    ensure_finite_nonneg("avg_power", avg_power)?;
    if !(rep_rate.is_finite() && rep_rate > 0.0) {
        return Err(domain(format!(
            "rep_rate must be positive (CW has no per-pulse photon number), got {rep_rate}"
        )));
    }
    Ok(avg_power / (rep_rate * photon_energy(wavelength)?))
}

/// Zero-delay second-order coherence of squeezed vacuum with n photons per mode.
pub fn g2_zero(n: f64, pm: PhaseMatching) -> Result<f64> {
    if !(n > 0.0) || n.is_nan() {
        return Err(domain(format!("photons per mode must be positive, got {n}")));
    }
    Ok(1.0 / n + pm.high_gain_g2())
}

/// Entangled two-photon cross-section σₑ = f·σ⁽²⁾/(Aₑ·Tₑ), in m².
pub fn sigma_e(f: f64, sigma2_si: f64, ent_area: f64, ent_time: f64) -> Result<f64> {
    ensure_finite_nonneg("f", f)?;
    ensure_finite_nonneg("sigma2", sigma2_si)?;
    ensure_positive("entanglement area", ent_area)?;
    ensure_positive("entanglement time", ent_time)?;
    Ok(f * sigma2_si / (ent_area * ent_time))
}

/// Heuristic entangled TPA rate per absorber, σₑφ + ξσ⁽²⁾φ².
pub fn etpa_rate(phi: f64, sigma_e: f64, sigma2_si: f64, xi: f64) -> Result<f64> {
    ensure_finite_nonneg("phi", phi)?;
    ensure_finite_nonneg("sigma_e", sigma_e)?;
    ensure_finite_nonneg("sigma2", sigma2_si)?;
    ensure_finite_nonneg("xi", xi)?;
    Ok(sigma_e * phi + xi * sigma2_si * phi * phi)
}

/// TPA rate per absorber for light much narrower than the TPA linewidth.
pub fn tpa_rate_broadband(phi: f64, sigma2_si: f64, g2: f64) -> Result<f64> {
    ensure_finite_nonneg("phi", phi)?;
    ensure_finite_nonneg("sigma2", sigma2_si)?;
    if !(g2 >= 1.0) || !g2.is_finite() {
        return Err(domain(format!("g2 must be >= 1, got {g2}")));
    }
    Ok(g2 * sigma2_si * phi * phi)
}

/// Flux at which the linear and quadratic terms are equal, σₑ/σ⁽²⁾.
pub fn crossover_flux(sigma_e: f64, sigma2_si: f64) -> Result<f64> {
    ensure_positive("sigma_e", sigma_e)?;
    ensure_positive("sigma2", sigma2_si)?;
    Ok(sigma_e / sigma2_si)
}
