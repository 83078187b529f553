//! Gaussian prediction intervals `ȳ ± z·Σ̂` and their empirical coverage.

use serde::{Deserialize, Serialize};

use crate::types::UncertaintyRecord;
use crate::{Error, Result};

/// Default interval levels: 50%, 90%, 95% and 99%.
pub const DEFAULT_LEVELS: [f64; 4] = [0.5, 0.9, 0.95, 0.99];

/// Initial guess for `erf⁻¹(x)`, |x| < 1.
///
/// Giles' single-precision polynomial approximation ("Approximating the erfinv
/// function", GPU Computing Gems, 2011), accurate to a few parts in 1e7; two
/// branches in `w = -ln(1 - x²)`.
fn erf_inv_approx(x: f64) -> f64 {
    let w = -((1.0 - x) * (1.0 + x)).ln();
    let p = if w < 5.0 {
        let w = w - 2.5;
        [
            2.810_226_36e-08,
            3.432_739_39e-07,
            -3.523_387_7e-06,
            -4.391_506_54e-06,
            0.000_218_580_87,
            -0.001_253_725_03,
            -0.004_177_681_64,
            0.246_640_727,
            1.501_409_41,
        ]
        .iter()
        .fold(0.0, |acc, c| c + acc * w)
    } else {
        let w = w.sqrt() - 3.0;
        [
            -0.000_200_214_257,
            0.000_100_950_558,
            0.001_349_343_22,
            -0.003_673_428_44,
            0.005_739_507_73,
            -0.007_622_461_3,
            0.009_438_870_47,
            1.001_674_06,
            2.832_976_82,
        ]
        .iter()
        .fold(0.0, |acc, c| c + acc * w)
    };
    p * x
}

/// Inverse error function on `[0, 1)`: polynomial guess refined by one
/// Newton step on `erf`.
pub fn erf_inv(x: f64) -> f64 {
    let w = erf_inv_approx(x);
    let f = libm::erf(w) - x;
    w - f * std::f64::consts::PI.sqrt() / 2.0 * (w * w).exp()
}

/// `Φ(p) = √2·erf⁻¹(p)`: the half-width, in standard deviations, of the
/// central Gaussian interval holding probability `p`.
pub fn probit(p: f64) -> Result<f64> {
    if p.is_nan() || p < 0.0 {
        return Err(Error::InvalidArgument(format!("probit requires p >= 0, got {p}")));
    }
    if p >= 1.0 {
        return Err(Error::UnboundedQuantile(p));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    Ok(std::f64::consts::SQRT_2 * erf_inv(p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub levels: Vec<f64>,
    pub z_values: Vec<f64>,
    pub observed: Vec<f64>,
    /// Membership rule for multi-output targets.
    pub membership: String,
}

/// Whether every component of `y` lies in `ȳ ± z·sqrt(total)`, inclusive.
pub fn inside(r: &UncertaintyRecord, z: f64) -> bool {
    let half = z * r.total.sqrt();
    r.y.iter()
        .zip(&r.y_mean)
        .all(|(y, m)| (y - m).abs() <= half)
}

/// Fraction of records whose target falls inside the interval at each level.
pub fn coverage(records: &[UncertaintyRecord], levels: &[f64]) -> Result<CoverageTable> {
    if records.is_empty() {
        return Err(Error::EmptyInput("records"));
    }
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(Error::InvalidArgument(format!("interval level {l} outside (0, 1)")));
    }
    let z_values = levels.iter().map(|&l| probit(l)).collect::<Result<Vec<_>>>()?;
    let m = records.len() as f64;
    let observed = z_values
        .iter()
        .map(|&z| records.iter().filter(|r| inside(r, z)).count() as f64 / m)
        .collect();
    Ok(CoverageTable {
        levels: levels.to_vec(),
        z_values,
        observed,
        membership: "joint: all output components inside the interval".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // independent reference: bisection on erf
    fn probit_bisect(p: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if libm::erf(mid / std::f64::consts::SQRT_2) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn known_values() {
        assert_eq!(probit(0.0).unwrap(), 0.0);
        assert!((probit(0.95).unwrap() - 1.959964).abs() < 1e-4);
        assert!((probit(0.5).unwrap() - 0.674490).abs() < 1e-4);
    }

    #[test]
    fn matches_bisection_on_grid() {
        for i in 0..=999 {
            let p = i as f64 / 1000.0;
            let got = probit(p).unwrap();
            let want = probit_bisect(p);
            assert!((got - want).abs() <= 1e-9, "p={p}: {got} vs {want}");
        }
    }

    #[test]
    fn round_trip_through_erf() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let z = probit(p).unwrap();
            assert!((libm::erf(z / std::f64::consts::SQRT_2) - p).abs() < 1e-8);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(probit(1.0), Err(Error::UnboundedQuantile(_))));
        assert!(probit(-0.1).is_err());
        assert!(probit(f64::NAN).is_err());
    }

    fn rec(y: f64, mean: f64, total: f64) -> UncertaintyRecord {
        UncertaintyRecord {
            id: "r".into(),
            y: vec![y],
            y_mean: vec![mean],
            epistemic: 0.0,
            aleatoric: total,
            total,
            mc_sq_err: 0.0,
        }
    }

    #[test]
    fn huge_and_zero_uncertainty() {
        let recs = vec![rec(0.0, 0.5, 1e6), rec(1.0, 0.0, 1e6)];
        let t = coverage(&recs, &DEFAULT_LEVELS).unwrap();
        assert!(t.observed.iter().all(|&o| o == 1.0));

        let recs = vec![rec(0.0, 0.5, 0.0), rec(1.0, 0.0, 0.0)];
        let t = coverage(&recs, &DEFAULT_LEVELS).unwrap();
        assert!(t.observed.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn boundary_is_inclusive_and_joint() {
        let z = probit(0.5).unwrap();
        let r = rec(z, 0.0, 1.0);
        assert!(inside(&r, z));
        let mut r2 = rec(0.0, 0.0, 1.0);
        r2.y = vec![0.0, 5.0];
        r2.y_mean = vec![0.0, 0.0];
        assert!(!inside(&r2, z));
    }

    #[test]
    fn bad_levels_rejected() {
        assert!(coverage(&[rec(0.0, 0.0, 1.0)], &[1.0]).is_err());
        assert!(coverage(&[], &[0.5]).is_err());
    }
}
