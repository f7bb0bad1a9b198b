//! Solvers against independent references: exhaustive enumeration, nested
//! quadrature, closed-form Gaussian bridges, and single-node scans.

use polymer_core::finite_temp::{
    log_partition_on_lattice, log_partition_point_to_point, log_partition_sheared, log_partition_star,
    partition_coupling_residual,
};
use polymer_core::quad::integrate;
use polymer_core::zero_temp::{
    shear_coupling_residual, solve_on_lattice, solve_point_to_point, solve_sheared, subadditivity_gap,
};
use polymer_core::{EnvField, FieldParams, KineticEnergy, TiltedLattice};

fn quad() -> KineticEnergy {
    KineticEnergy::quadratic(0.0, 1.0, 0.75).unwrap()
}

fn cosine(seed: u64) -> EnvField {
    EnvField::new(
        FieldParams::Cosine {
            offset: 0.5,
            amplitudes: vec![1.0, 0.5],
            frequencies: vec![1.0, 2.7],
            phases: None,
        },
        seed,
    )
    .unwrap()
}

fn shot(seed: u64) -> EnvField {
    EnvField::new(
        FieldParams::ShotNoise {
            intensity: 1.0,
            half_width: 0.5,
            height: 1.0,
        },
        seed,
    )
    .unwrap()
}

/// Minimum over all index paths with pinned ends, ties broken by the
/// smallest index at the latest differing time.
fn brute_force(
    field: &EnvField,
    v: &KineticEnergy,
    lat: &TiltedLattice,
    shift: f64,
    alpha: f64,
    beta: f64,
) -> (f64, Vec<i64>) {
    let n = lat.n;
    let w = lat.half_width as i64;
    let interior = n - 1;
    let side = (2 * w + 1) as usize;
    let total = side.pow(interior as u32);
    let mut best: Option<(f64, Vec<i64>)> = None;
    for code in 0..total {
        let mut path = vec![lat.start_index];
        let mut c = code;
        for _ in 0..interior {
            path.push((c % side) as i64 - w);
            c /= side;
        }
        path.push(lat.end_index);
        let mut acc = 0.0;
        for k in 0..n {
            let x = lat.base(k) + path[k] as f64 * lat.delta;
            acc += beta * field.evaluate(k as i64, x);
            let inc = (path[k + 1] - path[k]) as f64 * lat.delta + (lat.slope() + shift);
            acc += alpha * v.eval(inc);
        }
        let better = match &best {
            None => true,
            Some((b, bp)) => {
                acc < *b || (acc == *b && path.iter().rev().lt(bp.iter().rev()))
            }
        };
        if better {
            best = Some((acc, path));
        }
    }
    best.unwrap()
}

#[test]
fn dp_matches_enumeration_on_shot_noise() {
    let f = shot(5);
    let lat = TiltedLattice::sheared(3, 0.25, 7);
    let r = solve_on_lattice(&f, &quad(), &lat, 0.4, 1.0, 1.0).unwrap();
    let (value, path) = brute_force(&f, &quad(), &lat, 0.4, 1.0, 1.0);
    assert_eq!(r.value, value);
    assert_eq!(r.path, path);
}

#[test]
fn dp_matches_enumeration_small_cases() {
    let quartic = KineticEnergy::polynomial(vec![0.0, 0.0, -3.0, 0.0, 1.0], 0.8).unwrap();
    for seed in 0..6u64 {
        for (n, w) in [(1usize, 7usize), (2, 7), (3, 5), (4, 3)] {
            for field in [cosine(seed), shot(seed)] {
                for (v, kin) in [(0.3, &quad()), (-0.8, &quartic)] {
                    let lat = TiltedLattice::sheared(n, 0.3, w);
                    let r = solve_on_lattice(&field, kin, &lat, v, 1.2, 0.7).unwrap();
                    let (value, path) = brute_force(&field, kin, &lat, v, 1.2, 0.7);
                    assert_eq!(r.value, value, "seed {seed} n {n}");
                    assert_eq!(r.path, path, "seed {seed} n {n}");
                }
            }
        }
    }
}

#[test]
fn dp_ties_pick_smallest_indices() {
    // a constant field with V flat near its minimum produces exact ties
    let flat = KineticEnergy::polynomial(vec![0.0, 0.0, -2.0, 0.0, 1.0], 0.8).unwrap();
    let lat = TiltedLattice::sheared(4, 1.0, 3);
    let f = EnvField::constant(0.0);
    let r = solve_on_lattice(&f, &flat, &lat, 0.0, 1.0, 1.0).unwrap();
    let (value, path) = brute_force(&f, &flat, &lat, 0.0, 1.0, 1.0);
    assert_eq!(r.value, value);
    assert_eq!(r.path, path);
}

#[test]
fn two_step_point_to_point_matches_midpoint_scan() {
    let f = cosine(12);
    let (x, y, delta, w) = (0.3, -0.5, 0.05, 60);
    let lat = TiltedLattice::point_to_point(2, x, y, delta, w);
    let r = solve_point_to_point(&f, &quad(), &lat, 1.0, 1.0).unwrap();
    let mid = 0.5 * (x + y);
    let mut best = f64::INFINITY;
    for j in -(w as i64)..=(w as i64) {
        let m = mid + j as f64 * delta;
        let cost = f.evaluate(0, x) + quad().eval(m - x) + f.evaluate(1, m) + quad().eval(y - m);
        best = best.min(cost);
    }
    assert!((r.value - best).abs() <= 1e-12 * best.abs().max(1.0));
}

#[test]
fn shear_coupling_examples() {
    let r = shear_coupling_residual(&cosine(3), &quad(), 32, 0.7, 0.1, 40, 1.0, 1.0).unwrap();
    assert!(r <= 1e-9, "{r}");
    let r = shear_coupling_residual(&shot(9), &quad(), 64, -1.2, 0.1, 40, 1.0, 1.0).unwrap();
    assert!(r <= 1e-9, "{r}");
    let r = partition_coupling_residual(&cosine(3), &quad(), 32, 0.7, 0.1, 40, 1.0, 1.0).unwrap();
    assert!(r <= 1e-9, "{r}");
}

#[test]
fn subadditivity_examples() {
    let r = subadditivity_gap(&cosine(4), &quad(), 8, 8, 0.5, 0.1, 30, 1.0, 1.0).unwrap();
    assert!(r.gap <= 1e-9);
    let r = subadditivity_gap(&shot(21), &quad(), 3, 5, 1.0, 0.1, 30, 1.0, 1.0).unwrap();
    assert!(r.gap <= 1e-9);
    assert!(r.whole <= r.concatenated);
    assert!((r.concatenated - r.first - r.second).abs() < 1e-9);
}

#[test]
fn sheared_solver_examples() {
    let f = EnvField::constant(0.0);
    let r = solve_sheared(&f, &quad(), &TiltedLattice::sheared(5, 0.1, 10), 1.0, 1.0, 1.0).unwrap();
    assert_eq!(r.value, 5.0);
}

fn two_step_integral(f: &EnvField, v: f64) -> f64 {
    let k = quad();
    let f0 = f.evaluate(0, 0.0);
    integrate(
        |x| (-k.eval(x + v) - k.eval(-x + v) - f0 - f.evaluate(1, x)).exp(),
        -12.0,
        12.0,
        1e-300,
        1e-13,
    )
}

#[test]
fn two_step_partition_matches_quadrature() {
    for seed in 0..5 {
        let f = cosine(seed);
        let v = 0.4;
        let r = log_partition_sheared(&f, &quad(), &TiltedLattice::sheared(2, 0.1, 100), v, 1.0, 1.0).unwrap();
        let z = two_step_integral(&f, v);
        let rel = (r.log_z.exp() - z).abs() / z;
        assert!(rel <= 1e-8, "seed {seed}: {rel}");
    }
}

#[test]
fn three_step_point_to_point_matches_nested_quadrature() {
    let k = quad();
    for seed in 0..3 {
        let f = cosine(seed);
        let (x, y) = (0.2, 1.1);
        let lat = TiltedLattice::point_to_point(3, x, y, 0.1, 100);
        let r = log_partition_point_to_point(&f, &k, &lat, 1.0, 1.0).unwrap();
        let f0 = f.evaluate(0, x);
        let z = integrate(
            |z1| {
                let inner = integrate(
                    |z2| (-k.eval(z2 - z1) - f.evaluate(2, z2) - k.eval(y - z2)).exp(),
                    -10.0,
                    10.0,
                    1e-300,
                    1e-13,
                );
                (-f0 - k.eval(z1 - x) - f.evaluate(1, z1)).exp() * inner
            },
            -10.0,
            10.0,
            1e-300,
            1e-12,
        );
        let rel = (r.log_z.exp() - z).abs() / z;
        assert!(rel <= 1e-7, "seed {seed}: {rel}");
    }
}

#[test]
fn gaussian_bridge_normalization() {
    // n-fold self-convolution of exp(-x^2/2) at 0 is (2 pi)^{(n-1)/2} / sqrt(n)
    let v = KineticEnergy::quadratic(0.0, 0.5, 0.75).unwrap();
    let n = 8;
    let r = log_partition_sheared(&EnvField::constant(0.0), &v, &TiltedLattice::sheared(n, 0.1, 120), 0.0, 1.0, 1.0)
        .unwrap();
    let want = 0.5 * (n as f64 - 1.0) * (2.0 * std::f64::consts::PI).ln() - 0.5 * (n as f64).ln();
    assert!((r.log_z - want).abs() < 1e-10, "{} vs {want}", r.log_z);
    // the bridge increments average x^2/2 with variance (n-1)/n per step
    assert!((r.expectations.vbar - 0.5 * (n as f64 - 1.0) / n as f64).abs() < 1e-9);
    assert!(r.expectations.vprime_bar.abs() < 1e-12);
}

#[test]
fn star_minimizers_sit_at_opposite_corners() {
    let k = quad();
    let f = EnvField::constant(0.0);
    let s = log_partition_star(&f, &k, 4, 0.0, 0.0, 0.1, 60, 3, 1.0, 1.0).unwrap();
    // direct evaluation of the 9 endpoint pairs
    let grid = [-1.0 / 3.0, 0.0, 1.0 / 3.0];
    let mut best = (f64::INFINITY, (0.0, 0.0));
    for &a in &grid {
        for &b in &grid {
            let lat = TiltedLattice::point_to_point(4, a, b, 0.1, s.half_width);
            let z = log_partition_on_lattice(&f, &k, &lat, 0.0, 1.0, 1.0).unwrap().log_z;
            if z < best.0 {
                best = (z, (a, b));
            }
        }
    }
    assert!((s.log_z_star - best.0).abs() < 1e-12);
    let (x1, y1) = s.argmin;
    assert!((x1.abs() - 1.0 / 3.0).abs() < 1e-12 && (y1.abs() - 1.0 / 3.0).abs() < 1e-12);
    assert!(x1 * y1 < 0.0);
}

#[test]
fn supermultiplicativity_on_matched_grid() {
    let k = quad();
    let f = cosine(8);
    let (m, n, v) = (4usize, 6usize, 0.5);
    let (delta, w, b) = (0.2, 30, 5);
    let total = (m + n) as f64;
    let whole = log_partition_star(&f, &k, m + n, 0.0, v * total, delta, w, b, 1.0, 1.0).unwrap();
    let first = log_partition_star(&f, &k, m, 0.0, v * m as f64, delta, w, b, 1.0, 1.0).unwrap();
    let later = f.shift_view(m as i64, 0.0);
    let second = log_partition_star(&later, &k, n, v * m as f64, v * total, delta, w, b, 1.0, 1.0).unwrap();
    assert!(whole.matched && first.matched && second.matched);
    assert!(whole.log_z_star >= first.log_z_star + second.log_z_star - 1e-9);
}

#[test]
fn laplace_limit_of_free_energy() {
    let k = quad();
    let f = EnvField::new(
        FieldParams::Cosine {
            offset: 2.0,
            amplitudes: vec![1.0, 0.5],
            frequencies: vec![1.0, 2.7],
            phases: None,
        },
        13,
    )
    .unwrap();
    let lat = TiltedLattice::sheared(16, 0.05, 80);
    let zero = solve_sheared(&f, &k, &lat, 0.3, 1.0, 1.0).unwrap();
    let alpha = 64.0;
    let z = log_partition_sheared(&f, &k, &lat, 0.3, alpha, alpha).unwrap();
    let free = -z.log_z / alpha;
    assert!((free - zero.value).abs() <= 0.02 * zero.value.abs(), "{free} vs {}", zero.value);
}
