//! Unit system used throughout the crate.
//!
//! Lengths are in fm, energies in MeV and times in units of `T = 1e-22 s`.
//! Masses follow as MeV·T²/fm² and momenta as MeV·T/fm.

/// Reduced Planck constant in MeV·T.
pub const HBAR: f64 = 6.58212;

/// Speed of light in fm/T.
pub const C_LIGHT: f64 = 30.0;

/// One time unit expressed in seconds.
pub const TIME_UNIT_SECONDS: f64 = 1e-22;

/// Nucleon mass (939 MeV/c²) in MeV·T²/fm².
pub const NUCLEON_MASS: f64 = 939.0 / (C_LIGHT * C_LIGHT);

/// Converts a momentum quoted in MeV/c to internal MeV·T/fm.
pub fn momentum_from_mev_per_c(p: f64) -> f64 {
    p / C_LIGHT
}

/// Converts an internal momentum back to MeV/c.
pub fn momentum_to_mev_per_c(p: f64) -> f64 {
    p * C_LIGHT
}

/// Converts a rest energy in MeV to an internal mass.
pub fn mass_from_rest_energy(mc2: f64) -> f64 {
    mc2 / (C_LIGHT * C_LIGHT)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nucleon_mass_in_internal_units() {
        assert!((NUCLEON_MASS - 1.043_333_333_333_333_3).abs() < 1e-15);
        assert_eq!(mass_from_rest_energy(939.0), NUCLEON_MASS);
    }

    #[test]
    fn momentum_conversion_round_trips() {
        let p = momentum_from_mev_per_c(1200.0);
        assert_eq!(p, 40.0);
        assert_eq!(momentum_to_mev_per_c(p), 1200.0);
    }
}
