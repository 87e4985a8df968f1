//! Microwave attenuation in liquid water from a single-pole Debye model.
//!
//! Temperature dependence after Kaatze (1989), `T` in degrees Celsius:
//! static permittivity `10^(1.94404 - 1.991e-3 T)`, high-frequency
//! permittivity `5.77 - 0.0274 T`, relaxation time
//! `3.745e-15 (1 + 7e-5 (T - 27.5)^2) exp(2295.7 / (T + 273.15))` seconds.

use num_complex::Complex64;

use crate::error::{Error, Result};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Complex relative permittivity `ε' - jε''`.
pub fn water_permittivity(freq_ghz: f64, temp_c: f64) -> Complex64 {
    let es = 10f64.powf(1.94404 - 1.991e-3 * temp_c);
    let einf = 5.77 - 0.0274 * temp_c;
    let tau = 3.745e-15 * (1.0 + 7e-5 * (temp_c - 27.5).powi(2)) * (2295.7 / (temp_c + 273.15)).exp();
    let omega = 2.0 * std::f64::consts::PI * freq_ghz * 1e9;
    einf + (es - einf) / Complex64::new(1.0, omega * tau)
}

/// Distance over which the field amplitude falls to `1/e`, metres.
pub fn water_attenuation_length(freq_ghz: f64, temp_c: f64) -> Result<f64> {
    if !(freq_ghz > 0.1 && freq_ghz <= 100.0) {
        return Err(Error::OutOfRange(format!("frequency {freq_ghz} GHz outside (0.1, 100]")));
    }
    if !(0.0..=60.0).contains(&temp_c) {
        return Err(Error::OutOfRange(format!("temperature {temp_c} C outside [0, 60]")));
    }
    let root = water_permittivity(freq_ghz, temp_c).sqrt();
    // sqrt(ε) = n - jκ; the field decays as exp(-k0 κ z).
    let kappa = -root.im;
    let k0 = 2.0 * std::f64::consts::PI * freq_ghz * 1e9 / SPEED_OF_LIGHT;
    Ok(1.0 / (k0 * kappa))
}
