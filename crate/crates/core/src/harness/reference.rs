//! Large-system benchmark levels for the non-adaptive schemes (LASSO and
//! MMSE) at `N = 200`, `rho = 0.1`, `sigma^2 = 0.01`, keyed by compression
//! rate `R = N / K`. Constants only, for overlaying on sweep output.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceLevel {
    pub compression_rate: f64,
    pub lasso_db: f64,
    pub mmse_db: f64,
}

pub const REFERENCE_N: usize = 200;
pub const REFERENCE_RHO: f64 = 0.1;
pub const REFERENCE_SIGMA2: f64 = 0.01;

pub const REFERENCE_LEVELS: [ReferenceLevel; 4] = [
    ReferenceLevel {
        compression_rate: 1.0,
        lasso_db: -23.7988424961844,
        mmse_db: -26.7090331369231,
    },
    ReferenceLevel {
        compression_rate: 2.0,
        lasso_db: -21.7087863143831,
        mmse_db: -25.4574314892307,
    },
    ReferenceLevel {
        compression_rate: 4.0,
        lasso_db: -15.2756881199302,
        mmse_db: -19.4385388842104,
    },
    ReferenceLevel {
        compression_rate: 5.0,
        lasso_db: -13.2684000962942,
        mmse_db: -14.1837317839488,
    },
];

/// The reference level for this setting, if the table has one.
pub fn reference_level(n: usize, k: usize, rho: f64, sigma2: f64) -> Option<ReferenceLevel> {
    if n != REFERENCE_N || (rho - REFERENCE_RHO).abs() > 1e-12 || (sigma2 - REFERENCE_SIGMA2).abs() > 1e-12 {
        return None;
    }
    let rate = n as f64 / k as f64;
    REFERENCE_LEVELS
        .iter()
        .copied()
        .find(|lvl| (lvl.compression_rate - rate).abs() < 1e-9)
}
