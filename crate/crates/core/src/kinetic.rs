//! Self-interaction energies `V` with exact derivatives, and a probe-based
//! audit of their growth conditions at infinity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;
use crate::quad;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KineticForm {
    /// Ascending coefficients `a_0, a_1, ...`.
    Polynomial { coefficients: Vec<f64> },
    /// `a + b x^2`.
    Quadratic { a: f64, b: f64 },
    /// Natural cubic spline through the knots, extended linearly outside them.
    CustomTable { knots: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticSpec {
    #[serde(flatten)]
    pub form: KineticForm,
    /// Exponent claimed for `|V'| <= C |V|^theta` at infinity.
    pub theta: f64,
}

#[derive(Debug, Clone)]
struct Spline {
    knots: Vec<f64>,
    // per interval, cubic in t = x - knots[i]
    pieces: Vec<[f64; 4]>,
    left: (f64, f64),
    right: (f64, f64),
}

impl Spline {
    fn new(knots: &[f64], values: &[f64]) -> Result<Spline> {
        let n = knots.len();
        if n < 3 || values.len() != n {
            return Err(Error::invalid(
                "kinetic table needs at least 3 knots and one value per knot",
            ));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("kinetic table knots must be strictly increasing"));
        }
        if knots.iter().chain(values).any(|x| !x.is_finite()) {
            return Err(Error::invalid("kinetic table entries must be finite"));
        }
        // natural spline: tridiagonal solve for the second derivatives
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let mut m = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            rhs[i] = 6.0
                * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
        }
        for i in 2..n - 1 {
            let w = h[i - 1] / diag[i - 1];
            diag[i] -= w * h[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        for i in (1..n - 1).rev() {
            let upper = if i + 1 < n - 1 { h[i] * m[i + 1] } else { 0.0 };
            m[i] = (rhs[i] - upper) / diag[i];
        }
        let pieces: Vec<[f64; 4]> = (0..n - 1)
            .map(|i| {
                let hi = h[i];
                [
                    values[i],
                    (values[i + 1] - values[i]) / hi - hi * (2.0 * m[i] + m[i + 1]) / 6.0,
                    m[i] / 2.0,
                    (m[i + 1] - m[i]) / (6.0 * hi),
                ]
            })
            .collect();
        let last = &pieces[n - 2];
        let hl = h[n - 2];
        let right_slope = last[1] + 2.0 * last[2] * hl + 3.0 * last[3] * hl * hl;
        Ok(Spline {
            knots: knots.to_vec(),
            left: (values[0], pieces[0][1]),
            right: (values[n - 1], right_slope),
            pieces,
        })
    }

    fn lo(&self) -> f64 {
        self.knots[0]
    }

    fn hi(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    fn piece(&self, x: f64) -> usize {
        let i = self.knots.partition_point(|&k| k <= x);
        i.saturating_sub(1).min(self.pieces.len() - 1)
    }

    fn derivs(&self, x: f64) -> (f64, f64, f64) {
        if x < self.lo() {
            let (y, s) = self.left;
            return (y + s * (x - self.lo()), s, 0.0);
        }
        if x > self.hi() {
            let (y, s) = self.right;
            return (y + s * (x - self.hi()), s, 0.0);
        }
        let i = self.piece(x);
        let c = &self.pieces[i];
        let t = x - self.knots[i];
        (
            c[0] + t * (c[1] + t * (c[2] + t * c[3])),
            c[1] + t * (2.0 * c[2] + t * 3.0 * c[3]),
            2.0 * c[2] + 6.0 * c[3] * t,
        )
    }

    /// V'' is piecewise linear, so its maximum sits at an endpoint or a knot.
    fn max_hess_on(&self, lo: f64, hi: f64) -> f64 {
        let mut best = self.derivs(lo).2.max(self.derivs(hi).2);
        for &k in &self.knots {
            if k > lo && k < hi {
                best = best.max(self.derivs(k).2);
            }
        }
        best
    }

    fn min_value(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, c) in self.pieces.iter().enumerate() {
            let h = self.knots[i + 1] - self.knots[i];
            best = best.min(poly::extremes_on(c, 0.0, h).0);
        }
        best
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Poly {
        c: Vec<f64>,
        d1: Vec<f64>,
        d2: Vec<f64>,
    },
    Quad {
        a: f64,
        b: f64,
    },
    Table(Spline),
}

#[derive(Debug, Clone)]
pub struct KineticEnergy {
    spec: KineticSpec,
    repr: Repr,
    min_value: f64,
    coercive: bool,
    monotone_radius: f64,
}

impl KineticEnergy {
    pub fn new(spec: KineticSpec) -> Result<Self> {
        if !(spec.theta > 0.0 && spec.theta < 1.0) {
            return Err(Error::invalid("theta must lie in (0, 1)"));
        }
        let (repr, coercive, min_value, monotone_radius) = match &spec.form {
            KineticForm::Polynomial { coefficients } => {
                if coefficients.is_empty() || coefficients.iter().any(|a| !a.is_finite()) {
                    return Err(Error::invalid("polynomial coefficients must be finite"));
                }
                let c = poly::trim(coefficients);
                let d = poly::degree(&c);
                let d1 = poly::derivative(&c);
                let d2 = poly::derivative(&d1);
                let coercive = d >= 2 && d % 2 == 0 && c[d] > 0.0;
                let radius = poly::cauchy_bound(&d1);
                let min_value = if coercive {
                    poly::extremes_on(&c, -radius, radius).0
                } else {
                    f64::NEG_INFINITY
                };
                (Repr::Poly { c, d1, d2 }, coercive, min_value, radius)
            }
            KineticForm::Quadratic { a, b } => {
                if !(a.is_finite() && b.is_finite() && *b > 0.0) {
                    return Err(Error::invalid("quadratic energy needs finite a and b > 0"));
                }
                (Repr::Quad { a: *a, b: *b }, true, *a, 0.0)
            }
            KineticForm::CustomTable { knots, values } => {
                let s = Spline::new(knots, values)?;
                let coercive = s.left.1 < 0.0 && s.right.1 > 0.0;
                let min_value = if coercive {
                    s.min_value()
                } else {
                    f64::NEG_INFINITY
                };
                let radius = s.lo().abs().max(s.hi().abs());
                (Repr::Table(s), coercive, min_value, radius)
            }
        };
        Ok(KineticEnergy {
            spec,
            repr,
            min_value,
            coercive,
            monotone_radius,
        })
    }

    pub fn quadratic(a: f64, b: f64, theta: f64) -> Result<Self> {
        Self::new(KineticSpec {
            form: KineticForm::Quadratic { a, b },
            theta,
        })
    }

    pub fn polynomial(coefficients: Vec<f64>, theta: f64) -> Result<Self> {
        Self::new(KineticSpec {
            form: KineticForm::Polynomial { coefficients },
            theta,
        })
    }

    pub fn spec(&self) -> &KineticSpec {
        &self.spec
    }

    pub fn theta(&self) -> f64 {
        self.spec.theta
    }

    pub fn is_coercive(&self) -> bool {
        self.coercive
    }

    /// The global minimum `M_V`; `-inf` when `V` is not coercive.
    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    /// Radius outside which `V` is strictly monotone (increasing to the right,
    /// decreasing to the left) when `V` is coercive.
    pub fn monotone_radius(&self) -> f64 {
        self.monotone_radius
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Poly { c, .. } => poly::eval(c, x),
            Repr::Quad { a, b } => a + b * x * x,
            Repr::Table(s) => s.derivs(x).0,
        }
    }

    #[inline]
    pub fn grad(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Poly { d1, .. } => poly::eval(d1, x),
            Repr::Quad { b, .. } => 2.0 * b * x,
            Repr::Table(s) => s.derivs(x).1,
        }
    }

    #[inline]
    pub fn hess(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Poly { d2, .. } => poly::eval(d2, x),
            Repr::Quad { b, .. } => 2.0 * b,
            Repr::Table(s) => s.derivs(x).2,
        }
    }

    /// Exact maximum of `V''` on `[lo, hi]`.
    pub fn max_hess_on(&self, lo: f64, hi: f64) -> f64 {
        match &self.repr {
            Repr::Poly { d2, .. } => poly::extremes_on(d2, lo, hi).1,
            Repr::Quad { b, .. } => 2.0 * b,
            Repr::Table(s) => s.max_hess_on(lo, hi),
        }
    }

    /// `sup_{|r| <= 1} V''(x + r)`.
    pub fn window_sup_hess(&self, x: f64) -> f64 {
        self.max_hess_on(x - 1.0, x + 1.0)
    }

    /// Smallest `R >= monotone_radius` (up to bisection accuracy, rounded up)
    /// with `V(x) >= level` whenever `|x| >= R`.
    pub fn level_radius(&self, level: f64) -> Result<f64> {
        if !self.coercive {
            return Err(Error::NotCoercive);
        }
        let r0 = self.monotone_radius;
        let side = |sign: f64| -> f64 {
            if self.eval(sign * r0) >= level {
                return r0;
            }
            let mut hi = r0.max(1.0);
            while self.eval(sign * hi) < level {
                hi *= 2.0;
            }
            let mut lo = r0;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if self.eval(sign * mid) >= level {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        Ok(side(1.0).max(side(-1.0)))
    }

    fn probe_stats(&self, x_max: f64) -> ProbeStats {
        let x_tail = x_max / 10.0;
        let count = 4000;
        let theta = self.spec.theta;
        let mut st = ProbeStats {
            coercive: true,
            positive: true,
            sup_hess_ratio: f64::NEG_INFINITY,
            sup_grad_ratio: f64::NEG_INFINITY,
            inf_abs_grad: f64::INFINITY,
            sup_theta_ratio: f64::NEG_INFINITY,
            sup_window_ratio: f64::NEG_INFINITY,
        };
        for sign in [1.0, -1.0] {
            let mut prev: Option<(f64, f64)> = None;
            for i in 0..=count {
                let x = sign * (x_tail + (x_max - x_tail) * i as f64 / count as f64);
                let (v, g) = (self.eval(x), self.grad(x));
                let outward = sign * g;
                if !(outward > 0.0) {
                    st.coercive = false;
                }
                if let Some((pv, pg)) = prev {
                    if !(v > pv) || !(outward >= pg) {
                        st.coercive = false;
                    }
                }
                prev = Some((v, outward));
                if !(v > 0.0) {
                    st.positive = false;
                    continue;
                }
                st.sup_hess_ratio = st.sup_hess_ratio.max(self.hess(x) / v);
                st.sup_grad_ratio = st.sup_grad_ratio.max(g.abs() / v);
                st.inf_abs_grad = st.inf_abs_grad.min(g.abs());
                st.sup_theta_ratio = st.sup_theta_ratio.max(g.abs() / v.powf(theta));
                st.sup_window_ratio = st.sup_window_ratio.max(self.window_sup_hess(x) / v);
            }
            if !(self.eval(sign * x_max) > self.eval(sign * x_tail)) {
                st.coercive = false;
            }
        }
        if !st.positive {
            st.sup_hess_ratio = f64::INFINITY;
            st.sup_grad_ratio = f64::INFINITY;
            st.sup_theta_ratio = f64::INFINITY;
            st.sup_window_ratio = f64::INFINITY;
        }
        st
    }

    /// `sup_{y > x} ... ` ratio `e^{V(x)} * int_{y > x} e^{-V(y)} dy` for the
    /// right tail (`sign = 1`) or its mirror (`sign = -1`).
    fn tail_ratio(&self, x: f64, sign: f64, tail_slope: f64) -> f64 {
        let vx = self.eval(sign * x);
        let mut len = 1.0;
        while self.eval(sign * (x + len)) - vx < 50.0 && len < 1e6 {
            len *= 2.0;
        }
        let body = quad::integrate(
            |y| (vx - self.eval(sign * y)).exp(),
            x,
            x + len,
            1e-15,
            1e-12,
        );
        let rest = (vx - self.eval(sign * (x + len))).exp() / tail_slope;
        body + rest
    }

    /// Audit on the probe range `[X_max / 10, X_max]` with the tail constant
    /// sampled from the same range.
    pub fn audit(&self, x_max: f64) -> Result<AuditReport> {
        self.audit_with_threshold(x_max, x_max / 10.0)
    }

    /// Audit with the tail constant sampled at 20 points of `[k, X_max]`.
    pub fn audit_with_threshold(&self, x_max: f64, k: f64) -> Result<AuditReport> {
        if !(x_max >= 10.0) {
            return Err(Error::invalid("audit probe radius must be at least 10"));
        }
        if !(k > 0.0 && k < x_max) {
            return Err(Error::invalid("tail threshold must lie in (0, X_max)"));
        }
        let here = self.probe_stats(x_max);
        let doubled = self.probe_stats(2.0 * x_max);
        let mut divergent = Vec::new();
        let grows = |a: f64, b: f64| !(b <= 1.1 * a + 1e-12);
        if !here.coercive || !doubled.coercive {
            divergent.push("coercivity".to_string());
        }
        if !here.positive || !doubled.positive {
            divergent.push("positivity".to_string());
        }
        if grows(here.sup_hess_ratio, doubled.sup_hess_ratio) {
            divergent.push("sup_ratio_hess_v".to_string());
        }
        if grows(here.sup_grad_ratio, doubled.sup_grad_ratio) {
            divergent.push("sup_ratio_abs_grad_v".to_string());
        }
        if grows(here.sup_theta_ratio, doubled.sup_theta_ratio) {
            divergent.push("sup_ratio_grad_v_theta".to_string());
        }
        if grows(here.sup_window_ratio, doubled.sup_window_ratio) {
            divergent.push("window_ratio_sup".to_string());
        }
        if !(here.inf_abs_grad > 0.0) || doubled.inf_abs_grad < here.inf_abs_grad / 1.1 {
            divergent.push("inf_abs_grad_tail".to_string());
        }

        // tail constant on [k, X_max], both tails
        let mut tail_constant = f64::NAN;
        let mut tail_lemma_constant = f64::NAN;
        if here.coercive && here.positive {
            let mut min_slope = f64::INFINITY;
            let steps = 4000;
            for sign in [1.0, -1.0] {
                for i in 0..=steps {
                    let x = k + (2.0 * x_max - k) * i as f64 / steps as f64;
                    min_slope = min_slope.min(sign * self.grad(sign * x));
                }
            }
            if min_slope > 0.0 {
                tail_lemma_constant = 1.0 / min_slope;
                let mut c: f64 = 0.0;
                for i in 0..20 {
                    let x = k + (x_max - k) * i as f64 / 19.0;
                    for sign in [1.0, -1.0] {
                        c = c.max(self.tail_ratio(x, sign, min_slope));
                    }
                }
                tail_constant = c;
            } else {
                divergent.push("tail_constant".to_string());
            }
        }

        let passed = divergent.is_empty();
        Ok(AuditReport {
            probe_radius: x_max,
            tail_start: x_max / 10.0,
            theta: self.spec.theta,
            min_value: self.min_value,
            coercivity_ok: here.coercive && doubled.coercive,
            positive_on_tail: here.positive,
            sup_ratio_hess_v: here.sup_hess_ratio,
            sup_ratio_abs_grad_v: here.sup_grad_ratio,
            inf_abs_grad_tail: here.inf_abs_grad,
            sup_ratio_grad_v_theta: here.sup_theta_ratio,
            window_ratio_sup: here.sup_window_ratio,
            tail_constant,
            tail_threshold: k,
            tail_lemma_constant,
            divergent,
            passed,
        })
    }

    /// Concrete constants `(A, C, b, L)` for the bound
    /// `(1/n) sum sup_{|r|<=1} V''(dx_k + v + r) <= A + C * Vbar - C * b`,
    /// valid for increments `|dx_k| <= range`.
    pub fn second_derivative_witness(&self, v: f64, range: f64) -> Result<SecondDerivativeWitness> {
        let l = self.level_radius(1.0)? + v.abs();
        let a = self.max_hess_on(v - l - 1.0, v + l + 1.0).max(0.0);
        let b = self.min_value.min(0.0);
        let step = 0.01;
        let mut c: f64 = 0.0;
        let reach = range.max(l);
        let cells = ((reach - l) / step).ceil() as usize;
        for sign in [1.0, -1.0] {
            for i in 0..cells {
                let x0 = l + i as f64 * step;
                let x1 = (x0 + step).min(reach);
                // |x + v| >= |x| - |v| >= level radius, so V >= 1 and V is monotone here
                let (p, q) = if sign > 0.0 {
                    (x0 + v, x1 + v)
                } else {
                    (-x1 + v, -x0 + v)
                };
                let vmin = self.eval(p).min(self.eval(q));
                let hmax = self.max_hess_on(p - 1.0, q + 1.0);
                c = c.max(hmax / vmin);
            }
        }
        Ok(SecondDerivativeWitness {
            a,
            c,
            b,
            l,
            range: reach,
        })
    }
}

struct ProbeStats {
    coercive: bool,
    positive: bool,
    sup_hess_ratio: f64,
    sup_grad_ratio: f64,
    inf_abs_grad: f64,
    sup_theta_ratio: f64,
    sup_window_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub probe_radius: f64,
    pub tail_start: f64,
    pub theta: f64,
    pub min_value: f64,
    pub coercivity_ok: bool,
    pub positive_on_tail: bool,
    /// sup V''/V on the probes.
    pub sup_ratio_hess_v: f64,
    /// sup |V'|/V.
    pub sup_ratio_abs_grad_v: f64,
    /// inf |V'|.
    pub inf_abs_grad_tail: f64,
    /// sup |V'|/V^theta.
    pub sup_ratio_grad_v_theta: f64,
    /// sup over probes x of sup_{|r|<=1} V''(x+r) / V(x).
    pub window_ratio_sup: f64,
    /// Smallest C with int_{y>x} e^{-V} <= C e^{-V(x)} (and the mirror) at the sampled x.
    pub tail_constant: f64,
    pub tail_threshold: f64,
    /// 1 / inf |V'| beyond the threshold, the constant the tail lemma provides.
    pub tail_lemma_constant: f64,
    /// Names of the quantities whose empirical value degrades when X_max doubles.
    pub divergent: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondDerivativeWitness {
    pub a: f64,
    pub c: f64,
    pub b: f64,
    pub l: f64,
    pub range: f64,
}

impl SecondDerivativeWitness {
    pub fn bound(&self, vbar: f64) -> f64 {
        self.a + self.c * vbar - self.c * self.b
    }
}

/// The energies shipped with the tool, by name.
pub fn presets() -> Vec<(&'static str, KineticSpec)> {
    let knots: Vec<f64> = (0..=20).map(|i| -5.0 + 0.5 * i as f64).collect();
    let values = knots.iter().map(|x: &f64| (1.0 + x * x).sqrt()).collect();
    vec![
        (
            "quadratic",
            KineticSpec {
                form: KineticForm::Quadratic { a: 0.0, b: 1.0 },
                theta: 0.75,
            },
        ),
        (
            "double_well",
            KineticSpec {
                form: KineticForm::Polynomial {
                    coefficients: vec![0.0, 0.0, -3.0, 0.0, 1.0],
                },
                theta: 0.8,
            },
        ),
        (
            "quartic",
            KineticSpec {
                form: KineticForm::Polynomial {
                    coefficients: vec![0.0, 0.0, 0.5, 0.0, 0.25],
                },
                theta: 0.8,
            },
        ),
        (
            "hyperbolic_table",
            KineticSpec {
                form: KineticForm::CustomTable { knots, values },
                theta: 0.5,
            },
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_presets() -> Vec<KineticEnergy> {
        presets()
            .into_iter()
            .map(|(_, s)| KineticEnergy::new(s).unwrap())
            .collect()
    }

    #[test]
    fn derivative_examples() {
        let q = KineticEnergy::quadratic(0.0, 1.0, 0.75).unwrap();
        assert_eq!(q.grad(3.0), 6.0);
        let x4 = KineticEnergy::polynomial(vec![0.0, 0.0, 0.0, 0.0, 1.0], 0.8).unwrap();
        assert_eq!(x4.hess(2.0), 48.0);
        let p = KineticEnergy::polynomial(vec![1.0, -2.0, 0.0, 0.0, 1.0], 0.8).unwrap();
        assert_eq!(p.eval(0.0), 1.0);
    }

    #[test]
    fn finite_differences_agree() {
        let h = 1e-4;
        for v in all_presets() {
            for i in 0..=200 {
                let x = -50.0 + 0.5 * i as f64 + 0.013;
                let g = (v.eval(x + h) - v.eval(x - h)) / (2.0 * h);
                let hh = (v.grad(x + h) - v.grad(x - h)) / (2.0 * h);
                let scale = |a: f64| a.abs().max(1.0);
                assert!((g - v.grad(x)).abs() <= 1e-6 * scale(v.grad(x)), "{x}");
                assert!((hh - v.hess(x)).abs() <= 1e-6 * scale(v.hess(x)), "{x}");
            }
        }
    }

    #[test]
    fn minimum_values() {
        let dw = KineticEnergy::polynomial(vec![0.0, 0.0, -3.0, 0.0, 1.0], 0.8).unwrap();
        assert!((dw.min_value() + 2.25).abs() < 1e-14);
        let q = KineticEnergy::quadratic(0.5, 2.0, 0.75).unwrap();
        assert_eq!(q.min_value(), 0.5);
        let t = &all_presets()[3];
        // spline through sqrt(1 + x^2) bottoms out near the knot value 1
        assert!((t.min_value() - 1.0).abs() < 1e-2);
        for i in 0..=4000 {
            let x = -10.0 + 0.005 * i as f64;
            assert!(t.eval(x) >= t.min_value());
        }
    }

    #[test]
    fn odd_polynomial_is_not_coercive() {
        let v = KineticEnergy::polynomial(vec![0.0, 0.0, 0.0, 1.0], 0.8).unwrap();
        assert!(!v.is_coercive());
        assert_eq!(v.min_value(), f64::NEG_INFINITY);
        assert!(matches!(v.level_radius(1.0), Err(Error::NotCoercive)));
        let report = v.audit(100.0).unwrap();
        assert!(!report.coercivity_ok);
        assert!(!report.passed);
    }

    #[test]
    fn window_sup_hess_examples() {
        let q = KineticEnergy::quadratic(0.0, 1.0, 0.75).unwrap();
        assert_eq!(q.window_sup_hess(-7.3), 2.0);
        let x4 = KineticEnergy::polynomial(vec![0.0, 0.0, 0.0, 0.0, 1.0], 0.8).unwrap();
        assert_eq!(x4.window_sup_hess(0.0), 12.0);
        let grid = (0..=2_000_000)
            .map(|i| x4.hess(1.5 + i as f64 * 1e-6))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((x4.window_sup_hess(2.5) - grid).abs() <= 1e-9);
    }

    #[test]
    fn window_sup_hess_of_table_matches_grid() {
        let t = &all_presets()[3];
        for &x in &[-5.5, -2.2, 0.0, 0.7, 4.6] {
            let grid = (0..=200_000)
                .map(|i| t.hess(x - 1.0 + i as f64 * 1e-5))
                .fold(f64::NEG_INFINITY, f64::max);
            let exact = t.window_sup_hess(x);
            assert!(exact >= grid - 1e-12 && exact - grid < 1e-4, "{x}");
        }
    }

    #[test]
    fn audits_of_presets_pass() {
        for (name, spec) in presets() {
            let r = KineticEnergy::new(spec).unwrap().audit(100.0).unwrap();
            assert!(r.passed, "{name}: {:?}", r.divergent);
        }
    }

    #[test]
    fn quadratic_audit_example() {
        let q = KineticEnergy::quadratic(0.0, 1.0, 0.75).unwrap();
        let r = q.audit(100.0).unwrap();
        assert!(r.coercivity_ok);
        assert!(r.sup_ratio_hess_v <= 0.02 + 1e-15);
        let dw = KineticEnergy::polynomial(vec![0.0, 0.0, -3.0, 0.0, 1.0], 0.8).unwrap();
        let r = dw.audit(100.0).unwrap();
        assert!(r.coercivity_ok && r.inf_abs_grad_tail > 0.0);
    }

    #[test]
    fn too_small_theta_is_flagged() {
        let q = KineticEnergy::quadratic(0.0, 1.0, 0.4).unwrap();
        let r = q.audit(100.0).unwrap();
        assert!(r.divergent.contains(&"sup_ratio_grad_v_theta".to_string()));
    }

    #[test]
    fn gaussian_tail_constant() {
        // e^{x^2} int_x^inf e^{-y^2} dy lies between x/(2x^2+1) and 1/(2x)
        let q = KineticEnergy::quadratic(0.0, 1.0, 0.75).unwrap();
        let r = q.audit_with_threshold(10.0, 3.0).unwrap();
        assert!(r.tail_constant >= 3.0 / 19.0 && r.tail_constant <= 1.0 / 6.0 + 1e-3);
        assert!(r.tail_constant <= r.tail_lemma_constant);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(KineticEnergy::quadratic(0.0, 0.0, 0.5).is_err());
        assert!(KineticEnergy::quadratic(0.0, 1.0, 1.0).is_err());
        let bad = KineticSpec {
            form: KineticForm::CustomTable {
                knots: vec![0.0, 0.0, 1.0],
                values: vec![1.0, 1.0, 1.0],
            },
            theta: 0.5,
        };
        assert!(KineticEnergy::new(bad).is_err());
    }

    #[test]
    fn witness_bounds_window_sums() {
        let dw = KineticEnergy::polynomial(vec![0.0, 0.0, -3.0, 0.0, 1.0], 0.8).unwrap();
        let w = dw.second_derivative_witness(0.3, 20.0).unwrap();
        assert!(w.b < 0.0 && w.a > 0.0 && w.c > 0.0);
        for i in 0..400 {
            let x = -20.0 + 0.1 * i as f64;
            assert!(dw.window_sup_hess(x + 0.3) <= w.bound(dw.eval(x + 0.3)) + 1e-9);
        }
    }

    proptest! {
        #[test]
        fn window_sup_dominates_hess(x in -40.0f64..40.0, r in -1.0f64..1.0, which in 0usize..4) {
            let v = &all_presets()[which];
            prop_assert!(v.window_sup_hess(x) >= v.hess(x + r));
        }

        #[test]
        fn taylor_domination(x in -20.0f64..20.0, v in -3.0f64..3.0, dw in -1.0f64..1.0, which in 0usize..4) {
            let e = &all_presets()[which];
            let w = v + dw;
            let lhs = e.eval(x + w);
            let rhs = e.eval(x + v) + dw * e.grad(x + v) + 0.5 * dw * dw * e.window_sup_hess(x + v);
            prop_assert!(lhs <= rhs + 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn minimum_is_a_lower_bound(x in -60.0f64..60.0, which in 0usize..4) {
            let v = &all_presets()[which];
            prop_assert!(v.eval(x) >= v.min_value());
        }
    }
}
