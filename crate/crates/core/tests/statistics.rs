//! Statistical properties of the environments and the polymer measure.

use polymer_core::finite_temp::log_partition_sheared;
use polymer_core::{EnvField, FieldParams, KineticEnergy, TiltedLattice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kinds() -> Vec<(&'static str, FieldParams)> {
    vec![
        (
            "cosine",
            FieldParams::Cosine {
                offset: 0.2,
                amplitudes: vec![1.0, 0.5, 0.25],
                frequencies: vec![1.0, 2.3, 4.1],
                phases: None,
            },
        ),
        (
            "shot_noise",
            FieldParams::ShotNoise {
                intensity: 1.5,
                half_width: 0.7,
                height: 0.8,
            },
        ),
    ]
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn lower_bound_holds_on_a_million_probes() {
    for (name, params) in kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bound = params.lower_bound();
        let fields: Vec<EnvField> = (0..1000).map(|s| EnvField::new(params.clone(), s).unwrap()).collect();
        for _ in 0..1_000_000 {
            let f = &fields[rng.random_range(0..fields.len())];
            let k = rng.random_range(-50i64..50);
            let x = rng.random_range(-1e3..1e3);
            let value = f.evaluate(k, x);
            assert!(value >= bound, "{name}: F({k}, {x}) = {value} < {bound}");
        }
    }
}

#[test]
fn one_point_law_is_stationary_in_space() {
    for (name, params) in kinds() {
        let (a, b): (Vec<f64>, Vec<f64>) = (0..10_000u64)
            .map(|s| {
                let f = EnvField::new(params.clone(), s).unwrap();
                (f.evaluate(0, 0.0), f.evaluate(0, 17.3))
            })
            .unzip();
        let (ma, sa) = mean_se(&a);
        let (mb, sb) = mean_se(&b);
        let z = (ma - mb).abs() / (sa * sa + sb * sb).sqrt();
        assert!(z <= 4.0, "{name}: means {ma} and {mb}, z = {z}");
    }
}

#[test]
fn consecutive_slices_are_uncorrelated() {
    for (name, params) in kinds() {
        let (a, b): (Vec<f64>, Vec<f64>) = (0..10_000u64)
            .map(|s| {
                let f = EnvField::new(params.clone(), s).unwrap();
                (f.evaluate(0, 0.0), f.evaluate(1, 0.0))
            })
            .unzip();
        let (ma, _) = mean_se(&a);
        let (mb, _) = mean_se(&b);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() <= 4.0 / 100.0, "{name}: correlation {corr}");
    }
}

#[test]
fn mirrored_pairs_cancel_the_drift_statistic() {
    // even V and v = 0: reflecting the environment flips the sign of V'
    let k = KineticEnergy::polynomial(vec![0.0, 0.0, 0.5, 0.0, 0.25], 0.8).unwrap();
    let lat = TiltedLattice::sheared(16, 0.2, 60);
    for (name, params) in kinds() {
        let mut singles = Vec::new();
        let mut pairs = Vec::new();
        for s in 0..200u64 {
            let f = EnvField::new(params.clone(), 7000 + s).unwrap();
            let a = log_partition_sheared(&f, &k, &lat, 0.0, 1.0, 1.0).unwrap();
            let b = log_partition_sheared(&f.mirrored(), &k, &lat, 0.0, 1.0, 1.0).unwrap();
            singles.push(a.expectations.vprime_bar);
            pairs.push(0.5 * (a.expectations.vprime_bar + b.expectations.vprime_bar));
            assert!((a.log_z - b.log_z).abs() <= 1e-9 * a.log_z.abs().max(1.0));
        }
        let (m, se) = mean_se(&pairs);
        assert!(m.abs() <= 4.0 * se + 1e-12, "{name}: paired mean {m}, stderr {se}");
        let (m, se) = mean_se(&singles);
        assert!(m.abs() <= 4.0 * se, "{name}: mean {m}, stderr {se}");
    }
}

#[test]
fn kinetic_weight_obeys_jensen() {
    let k = KineticEnergy::quadratic(0.0, 1.0, 0.75).unwrap();
    let lat = TiltedLattice::sheared(12, 0.2, 60);
    for (_, params) in kinds() {
        for s in 0..10u64 {
            let f = EnvField::new(params.clone(), s).unwrap();
            let base = log_partition_sheared(&f, &k, &lat, 0.4, 1.0, 1.0).unwrap();
            let n = lat.n as f64;
            for da in [-0.3, -0.1, -0.01, 0.01, 0.1, 0.3] {
                let alpha = 1.0 + da;
                let other = log_partition_sheared(&f, &k, &lat, 0.4, alpha, 1.0).unwrap();
                let rhs = base.log_z + (1.0 - alpha) * n * base.expectations.vbar;
                assert!(other.log_z >= rhs - 1e-9, "seed {s}, alpha {alpha}: {} < {rhs}", other.log_z);
            }
        }
    }
}
