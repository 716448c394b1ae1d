//! Measurement model and synthetic measurement generation.
//!
//! A measurement is one estimated multipath component at a panel:
//! distance, angle of arrival in the panel frame, and normalized amplitude
//! (square root of the component SNR). Noise scales follow the
//! Cramér–Rao bounds of a flat-spectrum signal and a uniform rectangular
//! array.

mod detection;
mod synth;

pub use detection::{
    amplitude_likelihood, bessel_i0e, detection_prob, fa_amplitude_density, log_fa_density,
    log_rice_density, marcum_q1, DetectionTable, PD_MAX,
};
pub use synth::{
    synthesize_panel, synthesize_timestep, write_measurement_csv, SynthOptions, Synthesizer,
};

use crate::error::{Error, Result};
use crate::scenario::{RadioConfig, SPEED_OF_LIGHT};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Where a synthesized measurement came from. Debugging aid only; the
/// inference code never reads it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathOrigin {
    Los,
    /// Single-bounce reflection off the wall with this index in
    /// `Scenario::walls()`.
    Reflection(u16),
    FalseAlarm,
}

impl PathOrigin {
    pub fn label(&self) -> String {
        match self {
            PathOrigin::Los => "los".into(),
            PathOrigin::Reflection(w) => format!("reflection{w}"),
            PathOrigin::FalseAlarm => "fa".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub d: f64,
    pub aoa: f64,
    pub u: f64,
    pub origin: PathOrigin,
}

/// All measurements of one panel at one time step, in no particular order.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    /// 1-based panel id.
    pub panel_id: u16,
    pub time_index: u32,
    pub items: Vec<Measurement>,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// False-alarm process and detector threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClutterParams {
    /// Mean number of false alarms per panel and step.
    pub mu_fa: f64,
    /// Range support of false alarms, meters.
    pub d_max: f64,
    /// Amplitude detection threshold.
    pub u_th: f64,
}

impl Default for ClutterParams {
    fn default() -> Self {
        Self {
            mu_fa: 1.0,
            d_max: 50.0,
            u_th: 1.5,
        }
    }
}

impl ClutterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_fa >= 0.0) {
            return Err(Error::config("mu_fa", "mu_fa must be non-negative"));
        }
        if !(self.d_max > 0.0) {
            return Err(Error::config("d_max", "d_max must be positive"));
        }
        if !(self.u_th > 0.0) {
            return Err(Error::config("u_th", "u_th must be positive"));
        }
        Ok(())
    }

    /// Uniform false-alarm density over range × angle support.
    pub fn spatial_density(&self) -> f64 {
        1.0 / (self.d_max * PI)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseParams {
    /// Extra loss of a single-bounce path, dB.
    pub reflection_loss_db: f64,
    /// Floor on `|cos(incidence)|` in the angle bound.
    pub aoa_floor: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            reflection_loss_db: 6.0,
            aoa_floor: 0.1,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.reflection_loss_db >= 0.0) {
            return Err(Error::config(
                "reflection_loss_db",
                "reflection_loss_db must be non-negative",
            ));
        }
        if !(self.aoa_floor > 0.0 && self.aoa_floor <= 1.0) {
            return Err(Error::config("aoa_floor", "aoa_floor must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Radio plus noise parameters: everything needed to turn an amplitude
/// into measurement noise scales.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub radio: RadioConfig,
    pub reflection_loss_db: f64,
    pub aoa_floor: f64,
}

impl NoiseModel {
    pub fn new(radio: &RadioConfig, params: &NoiseParams) -> Self {
        Self {
            radio: radio.clone(),
            reflection_loss_db: params.reflection_loss_db,
            aoa_floor: params.aoa_floor,
        }
    }

    pub fn range_std(&self, u: f64) -> f64 {
        range_std(u, self.radio.bandwidth_hz)
    }

    pub fn aoa_std(&self, u: f64, incidence: f64) -> f64 {
        aoa_std(u, &self.radio, incidence, self.aoa_floor)
    }

    pub fn amplitude(&self, d: f64, is_reflection: bool) -> Result<f64> {
        path_amplitude(d, is_reflection, &self.radio, self.reflection_loss_db)
    }
}

/// Normalized amplitude of a path of length `d`: free-space loss from the
/// 1 m reference, array gain `N_a`, and `loss_db` for reflections.
pub fn path_amplitude(d: f64, is_reflection: bool, radio: &RadioConfig, loss_db: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::invalid(format!("path length must be positive, got {d}")));
    }
    let mut snr_db = radio.snr_ref_db + 10.0 * (radio.n_elements() as f64).log10()
        - 20.0 * d.log10();
    if is_reflection {
        snr_db -= loss_db;
    }
    Ok(10f64.powf(snr_db / 20.0))
}

/// Range standard deviation `√(3/2)·c / (π·B·u)`.
pub fn range_std(u: f64, bandwidth_hz: f64) -> f64 {
    (1.5f64).sqrt() * SPEED_OF_LIGHT / (PI * bandwidth_hz * u)
}

/// Effective aperture of a square array used by the angle bound:
/// `δ·√((M²−1)/12)·√M`.
pub fn array_aperture(radio: &RadioConfig) -> f64 {
    let m = radio.array_side as f64;
    radio.element_spacing() * ((m * m - 1.0) / 12.0).sqrt() * m.sqrt()
}

/// Angle-of-arrival standard deviation
/// `λ / (2√2·π·u·max(|cos θ|, floor)·A)`. Infinite for a single element.
pub fn aoa_std(u: f64, radio: &RadioConfig, incidence: f64, floor: f64) -> f64 {
    let a = array_aperture(radio);
    let c = incidence.cos().abs().max(floor);
    radio.wavelength() / (2.0 * 2f64.sqrt() * PI * u * c * a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radio(side: u32, snr: f64) -> RadioConfig {
        RadioConfig {
            array_side: side,
            snr_ref_db: snr,
            ..RadioConfig::default()
        }
    }

    #[test]
    fn amplitude_reference_points() {
        let r = radio(1, 20.0);
        assert!((path_amplitude(1.0, false, &r, 6.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((path_amplitude(10.0, false, &r, 6.0).unwrap() - 1.0).abs() < 1e-12);
        let refl = path_amplitude(10.0, true, &r, 6.0).unwrap();
        assert!((refl - 10f64.powf(-0.3)).abs() < 1e-12);
        assert!(path_amplitude(0.0, false, &r, 6.0).is_err());
    }

    #[test]
    fn range_std_values() {
        // sqrt(1.5) * 299792458 / (pi * 4e8 * 10)
        assert!((range_std(10.0, 400e6) - 0.029_218_9).abs() < 1e-6);
        assert!((range_std(10.0, 40e6) - 0.292_189).abs() < 1e-5);
        assert!(range_std(1e12, 400e6) < 1e-12);
    }

    #[test]
    fn aoa_std_scaling() {
        let small = aoa_std(10.0, &radio(5, 0.0), 0.0, 0.1);
        let large = aoa_std(10.0, &radio(7, 0.0), 0.0, 0.1);
        assert!(large < small);
        let doubled = aoa_std(20.0, &radio(5, 0.0), 0.0, 0.1);
        assert!((doubled - small / 2.0).abs() < 1e-15);
        // endfire is floored
        let endfire = aoa_std(10.0, &radio(5, 0.0), PI / 2.0, 0.1);
        assert!((endfire - small * 10.0).abs() < 1e-12);
        assert!(aoa_std(10.0, &radio(1, 0.0), 0.0, 0.1).is_infinite());
    }

    #[test]
    fn aoa_std_direct_evaluation() {
        // 5x5, lambda/4 spacing, u = 10, broadside
        let lambda = 299_792_458.0 / 28e9;
        let delta = lambda / 4.0;
        let aperture = delta * (24.0f64 / 12.0).sqrt() * 5f64.sqrt();
        let expect = lambda / (2.0 * 2f64.sqrt() * PI * 10.0 * aperture);
        let got = aoa_std(10.0, &radio(5, 0.0), 0.0, 0.1);
        assert!((got - expect).abs() < 1e-15);
        assert!((got - 0.014_235_3).abs() < 1e-6, "{got}");
    }
}
