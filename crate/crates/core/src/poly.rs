//! Dense real polynomials with ascending coefficients and real root isolation.

pub(crate) fn trim(c: &[f64]) -> Vec<f64> {
    let mut out = c.to_vec();
    while out.len() > 1 && *out.last().unwrap() == 0.0 {
        out.pop();
    }
    if out.is_empty() {
        out.push(0.0);
    }
    out
}

#[inline]
pub(crate) fn eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

pub(crate) fn derivative(c: &[f64]) -> Vec<f64> {
    if c.len() <= 1 {
        return vec![0.0];
    }
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &a)| a * i as f64)
        .collect()
}

pub(crate) fn degree(c: &[f64]) -> usize {
    c.iter().rposition(|&a| a != 0.0).unwrap_or(0)
}

/// Every real root lies in `[-R, R]` with this `R`.
pub(crate) fn cauchy_bound(c: &[f64]) -> f64 {
    let d = degree(c);
    if d == 0 {
        return 0.0;
    }
    let lead = c[d].abs();
    1.0 + c[..d].iter().map(|a| a.abs() / lead).fold(0.0, f64::max)
}

fn bisect(c: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = eval(c, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = eval(c, mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sorted real roots of `c` in the closed interval `[lo, hi]`.
///
/// The critical points of `c` split the interval into monotone pieces, and
/// each piece holds at most one root, found by bisection.
pub(crate) fn roots_in(c: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let c = trim(c);
    let d = degree(&c);
    if d == 0 || lo > hi {
        return Vec::new();
    }
    if d == 1 {
        let r = -c[0] / c[1];
        return if r >= lo && r <= hi { vec![r] } else { Vec::new() };
    }
    let mut knots = vec![lo];
    knots.extend(roots_in(&derivative(&c), lo, hi).into_iter().filter(|&r| r > lo && r < hi));
    knots.push(hi);
    let mut roots: Vec<f64> = Vec::new();
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (eval(&c, a), eval(&c, b));
        let r = if fa == 0.0 {
            Some(a)
        } else if fb == 0.0 {
            Some(b)
        } else if (fa < 0.0) != (fb < 0.0) {
            Some(bisect(&c, a, b))
        } else {
            None
        };
        if let Some(r) = r {
            if roots.last().map_or(true, |&p| p != r) {
                roots.push(r);
            }
        }
    }
    roots
}

/// Exact extremes of `c` on `[lo, hi]`, found from the endpoints and the
/// isolated critical points.
pub(crate) fn extremes_on(c: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let mut min = eval(c, lo).min(eval(c, hi));
    let mut max = eval(c, lo).max(eval(c, hi));
    for r in roots_in(&derivative(c), lo, hi) {
        let y = eval(c, r);
        min = min.min(y);
        max = max.max(y);
    }
    (min, max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horner_and_derivative() {
        let c = [1.0, -2.0, 0.0, 3.0];
        assert_eq!(eval(&c, 2.0), 1.0 - 4.0 + 24.0);
        assert_eq!(derivative(&c), vec![-2.0, 0.0, 9.0]);
        assert_eq!(degree(&[1.0, 2.0, 0.0]), 1);
    }

    #[test]
    fn roots_of_product() {
        // (x + 2)(x - 0.5)(x - 3) = x^3 - 1.5x^2 - 5.5x + 3
        let c = [3.0, -5.5, -1.5, 1.0];
        let r = roots_in(&c, -10.0, 10.0);
        assert_eq!(r.len(), 3);
        for (got, want) in r.iter().zip([-2.0, 0.5, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(roots_in(&c, 0.0, 1.0).len(), 1);
    }

    #[test]
    fn extremes_of_quartic() {
        // x^4 - 3x^2 has minima at +-sqrt(1.5) with value -2.25
        let (min, max) = extremes_on(&[0.0, 0.0, -3.0, 0.0, 1.0], -2.0, 2.0);
        assert!((min + 2.25).abs() < 1e-14);
        assert_eq!(max, 4.0);
    }

    #[test]
    fn cauchy_bound_contains_roots() {
        let c = [3.0, -5.5, -1.5, 1.0];
        assert!(cauchy_bound(&c) >= 3.0);
    }
}
