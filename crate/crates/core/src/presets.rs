//! Desk-scale parameter sets used by the acceptance suite and the CLI
//! `preset` key.

use crate::lattice::{ModelParams, Variant};

/// M = 1, b^-1 = 5, CAPPED with grid spacing 1. theta_6 is near 1/2 at
/// lambda = 1.
pub fn m1() -> ModelParams {
    ModelParams {
        rho: 0.01,
        ..ModelParams::default()
    }
}

/// M = 5 on the pure-grid-plus-Delaunay street system, L = 1.
pub fn m5() -> ModelParams {
    ModelParams {
        m: 5.0,
        b_inv: 21,
        l: 1.0,
        rho: 2.0,
        lambda: 0.3,
        variant: Variant::DelGrid,
        ..ModelParams::default()
    }
}

/// CAPPED with L = 5, M' = 4 (M = 20) and the smallest admissible b^-1.
pub fn m20() -> ModelParams {
    ModelParams {
        m: 20.0,
        b_inv: 81,
        l: 5.0,
        rho: 0.2,
        variant: Variant::Capped,
        ..ModelParams::default()
    }
}

pub fn by_name(name: &str) -> Option<ModelParams> {
    match name.trim().to_ascii_lowercase().as_str() {
        "m1" => Some(m1()),
        "m5" => Some(m5()),
        "m20" => Some(m20()),
        _ => None,
    }
}

pub const NAMES: [&str; 3] = ["m1", "m5", "m20"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::validate_params;

    #[test]
    fn presets_validate() {
        for n in NAMES {
            let p = validate_params(&by_name(n).unwrap()).unwrap();
            assert!(p.dependency_radius().is_some(), "{n}");
        }
        assert!(by_name("m7").is_none());
    }
}
