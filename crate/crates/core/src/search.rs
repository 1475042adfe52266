//! One-dimensional search helpers.

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
/// Returns `(argmax, max, evaluations)`.
pub fn golden_max(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64, usize) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut evals = 2;
    while hi - lo > tol * (1.0 + lo.abs().max(hi.abs())) && evals < 400 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
        evals += 1;
    }
    let (mut bx, mut bf) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for x in [a, b] {
        let fx = f(x);
        evals += 1;
        if fx > bf {
            bx = x;
            bf = fx;
        }
    }
    (bx, bf, evals)
}

/// Dense scan of `n + 1` points followed by a golden refinement around the
/// best one. Robust to functions that are only unimodal near the optimum.
pub fn scan_then_golden(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, n: usize, tol: f64) -> (f64, f64, usize) {
    let n = n.max(2);
    let step = (b - a) / n as f64;
    let mut best = (a, f(a));
    for i in 1..=n {
        let x = if i == n { b } else { a + step * i as f64 };
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    let lo = (best.0 - step).max(a);
    let hi = (best.0 + step).min(b);
    let (x, fx, e) = golden_max(&mut f, lo, hi, tol);
    if fx >= best.1 {
        (x, fx, e + n + 1)
    } else {
        (best.0, best.1, e + n + 1)
    }
}

/// Bisection for a sign change of `f` on `[a, b]`; requires `f(a)` and `f(b)`
/// of opposite signs (or zero).
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    for _ in 0..300 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol * (1.0 + m.abs()) {
            return Some(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, fx, _) = golden_max(|x| -(x - 1.3) * (x - 1.3), 0.0, 5.0, 1e-12);
        assert!((x - 1.3).abs() < 1e-6);
        assert!(fx.abs() < 1e-12);
    }

    #[test]
    fn golden_checks_endpoints() {
        let (x, _, _) = golden_max(|x| x, 0.0, 2.0, 1e-12);
        assert_eq!(x, 2.0);
    }

    #[test]
    fn scan_handles_two_peaks() {
        let f = |x: f64| (-(x - 0.2).powi(2) * 50.0).exp() + 2.0 * (-(x - 0.8).powi(2) * 50.0).exp();
        let (x, _, _) = scan_then_golden(f, 0.0, 1.0, 50, 1e-12);
        assert!((x - 0.8).abs() < 1e-3);
    }

    #[test]
    fn bisect_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        assert!(bisect(|x| x * x + 1.0, 0.0, 2.0, 1e-14).is_none());
    }
}
