//! Decibel conversions and the Gaussian tail function.
//!
//! All dB/dBm handling in the crate goes through here so that a value is
//! converted exactly once at the boundary.

use statrs::function::erf::erfc;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    linear_to_db(watts) + 30.0
}

/// Gaussian tail probability `Q(x) = P(Z > x)` for standard normal `Z`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn db_round_trip() {
        for db in [-113.0, -40.0, 0.0, 3.0, 10.0] {
            assert!((linear_to_db(db_to_linear(db)) - db).abs() < 1e-12);
        }
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((watts_to_dbm(1e-3)).abs() < 1e-12);
    }

    #[test]
    fn noise_density_from_dbm() {
        // -113 dBm/Hz
        let n0 = dbm_to_watts(-113.0);
        assert!((n0 / 5.011_872_336e-15 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn q_at_zero_is_half() {
        assert_eq!(q_function(0.0), 0.5);
        assert!(q_function(3.0) < 1.4e-3 && q_function(3.0) > 1.3e-3);
    }
}
