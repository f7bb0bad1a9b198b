//! Minimal actions on tilted lattices by forward dynamic programming.
//!
//! The action of a lattice path is accumulated slice by slice: at step `k`
//! the potential `beta * F_k(x_k)` is added, then the kinetic cost
//! `alpha * V(increment)`. Every quantity reported here (values, recomputed
//! actions) uses that same left-to-right order.

use serde::{Deserialize, Serialize};

use crate::env::EnvField;
use crate::error::{Error, Result};
use crate::kinetic::KineticEnergy;
use crate::lattice::{common_window, potential_table, PathStats, TiltedLattice};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub value: f64,
    /// Node indices `j_0..j_n`.
    pub path: Vec<i64>,
    pub positions: Vec<f64>,
    pub boundary_touched: bool,
    pub half_width: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Velocity added to every increment inside `V` (zero for point-to-point problems).
    pub shift: f64,
    pub stats: PathStats,
    /// Action recomputed from `path`.
    pub recomputed: f64,
}

fn check_weights(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid("alpha and beta must be positive and finite"));
    }
    Ok(())
}

/// Action of an index path, in the solver's summation order.
pub fn path_action(
    field: &EnvField,
    kinetic: &KineticEnergy,
    lattice: &TiltedLattice,
    shift: f64,
    alpha: f64,
    beta: f64,
    path: &[i64],
) -> f64 {
    let mut acc = 0.0;
    for k in 0..lattice.n {
        acc += beta * field.evaluate(k as i64, lattice.position(k, path[k]));
        acc += alpha * kinetic.eval(lattice.increment(path[k + 1] - path[k], shift));
    }
    acc
}

/// Per-path statistics of an index path.
pub fn path_stats(
    field: &EnvField,
    kinetic: &KineticEnergy,
    lattice: &TiltedLattice,
    shift: f64,
    path: &[i64],
) -> PathStats {
    let n = lattice.n as f64;
    let mut s = PathStats::default();
    for k in 0..lattice.n {
        let inc = lattice.increment(path[k + 1] - path[k], shift);
        s.vbar += kinetic.eval(inc);
        s.fbar += field.evaluate(k as i64, lattice.position(k, path[k]));
        s.vprime_bar += kinetic.grad(inc);
        s.hess_sup_bar += kinetic.window_sup_hess(inc);
    }
    s.vbar /= n;
    s.fbar /= n;
    s.vprime_bar /= n;
    s.hess_sup_bar /= n;
    s
}

/// One DP pass on the given window, without any window enlargement.
pub fn solve_on_lattice(
    field: &EnvField,
    kinetic: &KineticEnergy,
    lattice: &TiltedLattice,
    shift: f64,
    alpha: f64,
    beta: f64,
) -> Result<SolveResult> {
    lattice.validate()?;
    check_weights(alpha, beta)?;
    if !kinetic.is_coercive() {
        return Err(Error::NotCoercive);
    }
    let n = lattice.n;
    let w = lattice.half_width as i64;
    let m = lattice.nodes();
    let pot = potential_table(field, lattice, beta);

    // straight reference path for the safe cut of large jumps
    let (i0, i1) = (lattice.start_index, lattice.end_index);
    let straight: Vec<i64> = (0..=n)
        .map(|k| i0 + ((i1 - i0) as f64 * k as f64 / n as f64).round() as i64)
        .collect();
    let mut upper = 0.0;
    for k in 0..n {
        upper += pot[k][(straight[k] + w) as usize];
        upper += alpha * kinetic.eval(lattice.increment(straight[k + 1] - straight[k], shift));
    }
    let floor = n as f64 * (alpha * kinetic.min_value() + beta * field.lower_bound());
    let budget = (upper - floor) * (1.0 + 1e-12) + 1e-12;
    let mv = kinetic.min_value();

    // kin[d + 2W], +inf for jumps no optimal path can use
    let kin: Vec<f64> = (-2 * w..=2 * w)
        .map(|d| {
            let e = alpha * kinetic.eval(lattice.increment(d, shift));
            if e - alpha * mv > budget {
                f64::INFINITY
            } else {
                e
            }
        })
        .collect();
    let dmax = (-2 * w..=2 * w)
        .filter(|&d| kin[(d + 2 * w) as usize].is_finite())
        .map(|d| d.abs())
        .max()
        .unwrap_or(0);

    let mut best = vec![f64::INFINITY; m];
    best[(i0 + w) as usize] = 0.0;
    let mut pred: Vec<Vec<u32>> = Vec::with_capacity(n);
    let mut a = vec![0.0; m];
    for k in 0..n {
        for j in 0..m {
            a[j] = best[j] + pot[k][j];
        }
        let mut next = vec![f64::INFINITY; m];
        let mut from = vec![u32::MAX; m];
        let targets: Vec<usize> = if k + 1 == n {
            vec![(i1 + w) as usize]
        } else {
            (0..m).collect()
        };
        for jp in targets {
            let lo = (jp as i64 - dmax).max(0) as usize;
            let hi = (jp as i64 + dmax).min(m as i64 - 1) as usize;
            let mut b = f64::INFINITY;
            let mut arg = u32::MAX;
            for j in lo..=hi {
                let c = a[j] + kin[(jp as i64 - j as i64 + 2 * w) as usize];
                if c < b {
                    b = c;
                    arg = j as u32;
                }
            }
            next[jp] = b;
            from[jp] = arg;
        }
        pred.push(from);
        best = next;
    }
    let end = (i1 + w) as usize;
    let value = best[end];
    if !value.is_finite() {
        return Err(Error::Numerical("no admissible lattice path".into()));
    }
    let mut path = vec![0i64; n + 1];
    let mut cur = end;
    path[n] = i1;
    for k in (0..n).rev() {
        cur = pred[k][cur] as usize;
        path[k] = cur as i64 - w;
    }
    let boundary_touched = path[1..n].iter().any(|&j| j.abs() == w);
    let recomputed = path_action(field, kinetic, lattice, shift, alpha, beta, &path);
    Ok(SolveResult {
        value,
        positions: (0..=n).map(|k| lattice.position(k, path[k])).collect(),
        stats: path_stats(field, kinetic, lattice, shift, &path),
        path,
        boundary_touched,
        half_width: lattice.half_width,
        alpha,
        beta,
        shift,
        recomputed,
    })
}

/// Solves on the lattice, doubling the window (at most twice) while the
/// minimizer touches its boundary.
pub fn solve_with_window_policy(
    field: &EnvField,
    kinetic: &KineticEnergy,
    lattice: &TiltedLattice,
    shift: f64,
    alpha: f64,
    beta: f64,
) -> Result<SolveResult> {
    let mut out = common_window(lattice.half_width, |w| {
        let r = solve_on_lattice(field, kinetic, &lattice.with_half_width(w), shift, alpha, beta)?;
        let touched = r.boundary_touched;
        Ok((vec![r], touched))
    })?;
    Ok(out.remove(0))
}

/// `B^n_*(v, alpha, beta)`: paths from 0 to 0 with increments shifted by `v`.
pub fn solve_sheared(
    field: &EnvField,
    kinetic: &KineticEnergy,
    lattice: &TiltedLattice,
    v: f64,
    alpha: f64,
    beta: f64,
) -> Result<SolveResult> {
    if lattice.start != 0.0 || lattice.end != 0.0 {
        return Err(Error::invalid("the sheared problem needs an untilted lattice"));
    }
    solve_with_window_policy(field, kinetic, lattice, v, alpha, beta)
}

/// Point-to-point minimal action from `lattice.start` to `lattice.end`.
pub fn solve_point_to_point(
    field: &EnvField,
    kinetic: &KineticEnergy,
    lattice: &TiltedLattice,
    alpha: f64,
    beta: f64,
) -> Result<SolveResult> {
    solve_with_window_policy(field, kinetic, lattice, 0.0, alpha, beta)
}

/// Solves several sheared problems `(v, alpha, beta)` on one shared window,
/// enlarged until none of the minimizers touches the boundary.
pub fn solve_sheared_family(
    field: &EnvField,
    kinetic: &KineticEnergy,
    lattice: &TiltedLattice,
    params: &[(f64, f64, f64)],
) -> Result<Vec<SolveResult>> {
    common_window(lattice.half_width, |w| {
        let lat = lattice.with_half_width(w);
        let out = params
            .iter()
            .map(|&(v, a, b)| solve_on_lattice(field, kinetic, &lat, v, a, b))
            .collect::<Result<Vec<_>>>()?;
        let touched = out.iter().any(|r| r.boundary_touched);
        Ok((out, touched))
    })
}

/// `|B^n_*(v)| - A_*(0 -> vn)` computed in the field sheared by `-v`, on the
/// lattice tilted with slope `v`.
pub fn shear_coupling_residual(
    field: &EnvField,
    kinetic: &KineticEnergy,
    n: usize,
    v: f64,
    delta: f64,
    half_width: usize,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let sheared_field = field.shear_view(-v);
    let out = common_window(half_width, |w| {
        let a = solve_on_lattice(field, kinetic, &TiltedLattice::sheared(n, delta, w), v, alpha, beta)?;
        let lat = TiltedLattice::point_to_point(n, 0.0, v * n as f64, delta, w);
        let b = solve_on_lattice(&sheared_field, kinetic, &lat, 0.0, alpha, beta)?;
        let touched = a.boundary_touched || b.boundary_touched;
        Ok((vec![a, b], touched))
    })?;
    Ok((out[0].value - out[1].value).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubadditivityReport {
    /// `A^{0,m+n} - A^{0,m} - A^{m,m+n}`; never positive up to rounding.
    pub gap: f64,
    pub whole: f64,
    pub first: f64,
    pub second: f64,
    /// Action of the concatenated minimizers, recomputed on the long lattice.
    pub concatenated: f64,
    pub half_width: usize,
}

/// Compares the minimal action over `m + n` steps with the sum over the
/// first `m` and the remaining `n` steps along the slope-`v` line, on one
/// lattice so that concatenated minimizers are admissible long paths.
pub fn subadditivity_gap(
    field: &EnvField,
    kinetic: &KineticEnergy,
    m: usize,
    n: usize,
    v: f64,
    delta: f64,
    half_width: usize,
    alpha: f64,
    beta: f64,
) -> Result<SubadditivityReport> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("both segment lengths must be at least 1"));
    }
    let later = field.shift_view(m as i64, 0.0);
    let total = (m + n) as f64;
    let out = common_window(half_width, |w| {
        let whole = TiltedLattice::point_to_point(m + n, 0.0, v * total, delta, w);
        let first = TiltedLattice::point_to_point(m, 0.0, v * m as f64, delta, w);
        // the second leg runs in the shifted environment, in its own time 0..n
        let second = TiltedLattice::point_to_point(n, 0.0, v * n as f64, delta, w);
        let a = solve_on_lattice(field, kinetic, &whole, 0.0, alpha, beta)?;
        let b = solve_on_lattice(field, kinetic, &first, 0.0, alpha, beta)?;
        let c = solve_on_lattice(&later.shift_view(0, v * m as f64), kinetic, &second, 0.0, alpha, beta)?;
        let touched = a.boundary_touched || b.boundary_touched || c.boundary_touched;
        Ok((vec![(a, b, c, whole)], touched))
    })?;
    let (a, b, c, whole) = &out[0];
    let mut joined = b.path.clone();
    joined.extend_from_slice(&c.path[1..]);
    let concatenated = path_action(field, kinetic, whole, 0.0, alpha, beta, &joined);
    Ok(SubadditivityReport {
        gap: a.value - b.value - c.value,
        whole: a.value,
        first: b.value,
        second: c.value,
        concatenated,
        half_width: a.half_width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::FieldParams;
    use proptest::prelude::*;

    fn quad() -> KineticEnergy {
        KineticEnergy::quadratic(0.0, 1.0, 0.75).unwrap()
    }

    fn cosine(seed: u64) -> EnvField {
        EnvField::new(
            FieldParams::Cosine {
                offset: 0.0,
                amplitudes: vec![1.0, 0.5],
                frequencies: vec![1.0, 2.7],
                phases: None,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn free_field_straight_path() {
        let r = solve_sheared(&EnvField::constant(0.0), &quad(), &TiltedLattice::sheared(5, 0.1, 10), 1.0, 1.0, 1.0)
            .unwrap();
        assert_eq!(r.value, 5.0);
        assert!(r.path.iter().all(|&j| j == 0));
        assert!(!r.boundary_touched);
    }

    #[test]
    fn constant_field_adds_nc() {
        for &(v, n) in &[(0.3, 4usize), (-1.5, 9)] {
            let r = solve_sheared(&EnvField::constant(0.7), &quad(), &TiltedLattice::sheared(n, 0.1, 10), v, 1.0, 1.0)
                .unwrap();
            let want = n as f64 * (v * v + 0.7);
            assert!((r.value - want).abs() < 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn point_to_point_lines() {
        let f = EnvField::constant(0.0);
        let r = solve_point_to_point(&f, &quad(), &TiltedLattice::point_to_point(4, 0.0, 0.0, 0.1, 10), 1.0, 1.0)
            .unwrap();
        assert_eq!(r.value, 0.0);
        let r = solve_point_to_point(&f, &quad(), &TiltedLattice::point_to_point(4, 0.0, 4.0, 0.1, 10), 1.0, 1.0)
            .unwrap();
        assert_eq!(r.value, 4.0);
        assert!(r.path.iter().all(|&j| j == 0));
    }

    #[test]
    fn window_exhaustion_is_reported() {
        // a strong attraction far from the straight line drags the path into the wall
        let f = EnvField::new(
            FieldParams::Cosine {
                offset: 0.0,
                amplitudes: vec![50.0],
                frequencies: vec![0.05],
                phases: Some(vec![0.0]),
            },
            0,
        )
        .unwrap();
        let err = solve_sheared(&f, &quad(), &TiltedLattice::sheared(40, 0.1, 1), 0.0, 1.0, 1.0).unwrap_err();
        assert!(err.is_window_exhausted());
    }

    #[test]
    fn result_is_self_consistent() {
        let f = cosine(1);
        let r = solve_sheared(&f, &quad(), &TiltedLattice::sheared(24, 0.1, 30), 0.4, 1.3, 0.8).unwrap();
        assert_eq!(r.value, r.recomputed);
        let n = 24.0;
        let split = 1.3 * n * r.stats.vbar + 0.8 * n * r.stats.fbar;
        assert!((split - r.value).abs() <= 1e-10 * r.value.abs().max(1.0));
        let floor = n * (1.3 * quad().min_value() + 0.8 * f.lower_bound());
        assert!(r.value >= floor - 1e-9);
    }

    #[test]
    fn shear_coupling_at_zero_velocity_is_exact() {
        let f = cosine(3);
        assert_eq!(shear_coupling_residual(&f, &quad(), 16, 0.0, 0.1, 20, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn free_field_subadditivity() {
        let r = subadditivity_gap(&EnvField::constant(0.0), &quad(), 3, 5, 0.5, 0.1, 10, 1.0, 1.0).unwrap();
        assert!(r.gap.abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn concavity_in_weights(seed in 0u64..1000, a1 in 0.5f64..2.0, a2 in 0.5f64..2.0,
                                b1 in 0.5f64..2.0, b2 in 0.5f64..2.0, t in 0.0f64..1.0) {
            let f = cosine(seed);
            let lat = TiltedLattice::sheared(12, 0.1, 25);
            let (am, bm) = (t * a1 + (1.0 - t) * a2, t * b1 + (1.0 - t) * b2);
            let out = solve_sheared_family(&f, &quad(), &lat, &[(0.3, a1, b1), (0.3, a2, b2), (0.3, am, bm)]).unwrap();
            prop_assert!(out[2].value >= t * out[0].value + (1.0 - t) * out[1].value - 1e-9);
        }

        #[test]
        fn subadditive(seed in 0u64..1000, m in 1usize..9, n in 1usize..9, v in -1.0f64..1.0) {
            let r = subadditivity_gap(&cosine(seed), &quad(), m, n, v, 0.1, 20, 1.0, 1.0).unwrap();
            prop_assert!(r.gap <= 1e-9);
            prop_assert!(r.whole <= r.concatenated + 1e-12);
        }
    }
}
