//! Closed-form solution of `v' = 1 − s v²` on a constant-density piece.

use crate::error::{ensure, Error, Result};

/// States within this relative distance of `1/√s` are treated as equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-9;

/// Variance after `dt` time units of sampling at constant density `s`.
pub fn evolve(v0: f64, s: f64, dt: f64) -> Result<f64> {
    ensure(v0 >= 0.0 && s >= 0.0 && dt >= 0.0 && v0.is_finite() && s.is_finite() && dt.is_finite(), || {
        Error::InvalidParameter(format!("evolve needs finite non-negative inputs, got v0={v0}, s={s}, dt={dt}"))
    })?;
    Ok(evolve_raw(v0, s, dt))
}

/// Posterior variance after an instantaneous batch of `a` samples.
pub fn apply_atom(v: f64, a: f64) -> f64 {
    if v.is_infinite() {
        return 1.0 / a;
    }
    v / (1.0 + a * v)
}

pub(crate) fn evolve_raw(v0: f64, s: f64, dt: f64) -> f64 {
    if s == 0.0 {
        return v0 + dt;
    }
    let k = s.sqrt();
    if (v0 * k - 1.0).abs() < EQUILIBRIUM_TOL {
        return 1.0 / k;
    }
    // tanh addition formula; covers both the tanh and coth branches
    let tau = (k * dt).tanh();
    (v0 + tau / k) / (1.0 + v0 * k * tau)
}

/// `∫₀^dt v(t) dt` along the same piece.
pub(crate) fn integral_v(v0: f64, s: f64, dt: f64) -> f64 {
    if dt == 0.0 {
        return 0.0;
    }
    if s == 0.0 {
        return v0 * dt + 0.5 * dt * dt;
    }
    let k = s.sqrt();
    if (v0 * k - 1.0).abs() < EQUILIBRIUM_TOL {
        return dt / k;
    }
    let x = k * dt;
    let u0 = v0 * k;
    // ∫ v = ln(cosh x + u0 sinh x) / s
    if x <= 1.0 {
        let half = (0.5 * x).sinh();
        (2.0 * half * half + u0 * x.sinh()).ln_1p() / s
    } else {
        (x + (0.5 * (1.0 + u0) + 0.5 * (1.0 - u0) * (-2.0 * x).exp()).ln()) / s
    }
}

/// First time in `(0, dt]` at which the piece crosses level `c`.
pub(crate) fn crossing_time(v0: f64, s: f64, c: f64, dt: f64) -> Option<f64> {
    if v0 == c {
        return None;
    }
    let t = if s == 0.0 {
        if c > v0 {
            c - v0
        } else {
            return None;
        }
    } else {
        let k = s.sqrt();
        if (v0 * k - 1.0).abs() < EQUILIBRIUM_TOL {
            return None;
        }
        let denom = 1.0 - s * c * v0;
        if denom == 0.0 {
            return None;
        }
        let tau = k * (c - v0) / denom;
        if !(tau > 0.0 && tau < 1.0) {
            return None;
        }
        tau.atanh() / k
    };
    (t > 0.0 && t <= dt).then_some(t)
}

/// `∫₀^dt min(v, c) dt`, split analytically at the crossing of `c`.
pub(crate) fn integral_loss(v0: f64, s: f64, c: f64, dt: f64) -> f64 {
    let piece = |v: f64, len: f64| -> f64 {
        if len <= 0.0 {
            return 0.0;
        }
        let end = evolve_raw(v, s, len);
        // monotone piece: decide on the midpoint side of c
        if v.min(end) >= c || (v == c && end >= c) {
            c * len
        } else {
            integral_v(v, s, len).min(c * len)
        }
    };
    match crossing_time(v0, s, c, dt) {
        Some(tc) => piece(v0, tc) + piece(c, dt - tc),
        None => piece(v0, dt),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(evolve(2.0, 0.0, 1.5).unwrap(), 3.5);
        assert_eq!(evolve(0.5, 4.0, 3.0).unwrap(), 0.5);
        assert!((evolve(0.0, 1.0, 0.7).unwrap() - 0.7f64.tanh()).abs() < 1e-15);
        assert!(evolve(-1.0, 1.0, 1.0).is_err());
        assert!(evolve(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn atom_examples() {
        assert_eq!(apply_atom(3.0, 0.0), 3.0);
        let (c, gap) = (0.8, 0.3);
        let a = 1.0 / c - 1.0 / (c + gap);
        assert!((apply_atom(c + gap, a) - c).abs() < 1e-15);
        assert!((apply_atom(1e12, 1.0) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn above_equilibrium_decreases() {
        let v = evolve(5.0, 1.0, 0.5).unwrap();
        assert!(v < 5.0 && v > 1.0);
    }

    #[test]
    fn crossing_matches_evolve() {
        for (v0, s) in [(0.1, 0.0), (0.2, 0.5), (3.0, 2.0), (0.0, 0.3)] {
            let c = 0.9;
            if let Some(t) = crossing_time(v0, s, c, 100.0) {
                assert!((evolve_raw(v0, s, t) - c).abs() < 1e-12, "v0={v0} s={s}");
            }
        }
        assert!(crossing_time(0.1, 4.0, 0.9, 100.0).is_none()); // equilibrium 0.5 < c
    }
}
