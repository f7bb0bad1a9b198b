//! Monte Carlo shape-function estimates over a seed panel and the checks
//! built on them: derivative formula, convexity, concavity in the weights,
//! and the linear domination diagnostic.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvField, FieldParams};
use crate::error::{Error, Result};
use crate::finite_temp::{log_partition_sheared, log_partition_sheared_family};
use crate::kinetic::KineticEnergy;
use crate::lattice::{PathStats, TiltedLattice};
use crate::zero_temp::{solve_sheared, solve_sheared_family};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    ZeroTemp,
    FiniteTemp,
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::ZeroTemp => "zero_temp",
            Model::FiniteTemp => "finite_temp",
        }
    }
}

/// Seed of the `index`-th realization. Velocity and path length do not
/// enter, so one realization is shared across the whole velocity grid.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Everything that fixes one panel of sheared solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    pub model: Model,
    pub field: FieldParams,
    pub n: usize,
    pub delta: f64,
    pub half_width: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seeds: usize,
    pub master_seed: u64,
}

/// One point of a panel: the scaled value and the path statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// `(1/n) B_*` or `-(1/n) log Z~`.
    pub lambda: f64,
    pub stats: PathStats,
    pub half_width: usize,
}

fn sample_one(
    model: Model,
    field: &EnvField,
    kinetic: &KineticEnergy,
    lattice: &TiltedLattice,
    v: f64,
    alpha: f64,
    beta: f64,
) -> Result<Sample> {
    let n = lattice.n as f64;
    match model {
        Model::ZeroTemp => {
            let r = solve_sheared(field, kinetic, lattice, v, alpha, beta)?;
            Ok(Sample {
                lambda: r.value / n,
                stats: r.stats,
                half_width: r.half_width,
            })
        }
        Model::FiniteTemp => {
            let r = log_partition_sheared(field, kinetic, lattice, v, alpha, beta)?;
            Ok(Sample {
                lambda: -r.log_z / n,
                stats: r.expectations,
                half_width: r.half_width,
            })
        }
    }
}

fn family(
    model: Model,
    field: &EnvField,
    kinetic: &KineticEnergy,
    lattice: &TiltedLattice,
    params: &[(f64, f64, f64)],
) -> Result<Vec<Sample>> {
    let n = lattice.n as f64;
    Ok(match model {
        Model::ZeroTemp => solve_sheared_family(field, kinetic, lattice, params)?
            .into_iter()
            .map(|r| Sample {
                lambda: r.value / n,
                stats: r.stats,
                half_width: r.half_width,
            })
            .collect(),
        Model::FiniteTemp => log_partition_sheared_family(field, kinetic, lattice, params)?
            .into_iter()
            .map(|r| Sample {
                lambda: -r.log_z / n,
                stats: r.expectations,
                half_width: r.half_width,
            })
            .collect(),
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Numerical(format!("worker pool: {e}")))
}

/// Runs `task` on every item with `workers` threads; results keep item order
/// and the first failure in item order is returned.
fn run_tasks<I, T, F>(workers: usize, items: &[I], task: F) -> Result<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = pool(workers)?.install(|| items.par_iter().map(&task).collect());
    results.into_iter().collect()
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Weights of the three-point derivative at the middle of `(a, b, c)`.
fn fd_weights(a: f64, b: f64, c: f64) -> [f64; 3] {
    let (h1, h2) = (b - a, c - b);
    [-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeCurve {
    pub model: Model,
    pub v_grid: Vec<f64>,
    pub n: usize,
    pub delta: f64,
    pub half_width: usize,
    pub seeds: usize,
    pub master_seed: u64,
    pub alpha: f64,
    pub beta: f64,
    /// `lambda[s][i]`: realization `s` at `v_grid[i]`.
    pub lambda: Vec<Vec<f64>>,
    pub deriv: Vec<Vec<f64>>,
    pub vbar: Vec<Vec<f64>>,
    pub hess_sup: Vec<Vec<f64>>,
    /// Largest window any solve of the panel needed.
    pub max_half_width: usize,
    pub mean_lambda: Vec<f64>,
    pub stderr: Vec<f64>,
    pub mean_deriv_stat: Vec<f64>,
    pub deriv_stderr: Vec<f64>,
    /// Three-point slope of `mean_lambda`, interior points only.
    pub fd_slope: Vec<Option<f64>>,
    /// Companion panel at spacing `delta / 2` and window `2W`.
    pub delta_halved: Option<Box<ShapeCurve>>,
}

/// Shape function estimate over `v_grid`, one sheared solve per (seed, v).
pub fn estimate_shape(
    spec: &PanelSpec,
    kinetic: &KineticEnergy,
    v_grid: &[f64],
    with_halved: bool,
    workers: usize,
) -> Result<ShapeCurve> {
    let mut curve = estimate_panel(spec, kinetic, v_grid, workers)?;
    if with_halved {
        let halved = PanelSpec {
            delta: spec.delta / 2.0,
            half_width: spec.half_width * 2,
            ..spec.clone()
        };
        curve.delta_halved = Some(Box::new(estimate_panel(&halved, kinetic, v_grid, workers)?));
    }
    Ok(curve)
}

fn estimate_panel(
    spec: &PanelSpec,
    kinetic: &KineticEnergy,
    v_grid: &[f64],
    workers: usize,
) -> Result<ShapeCurve> {
    if spec.seeds < 2 {
        return Err(Error::invalid("a shape estimate needs at least 2 seeds"));
    }
    if v_grid.len() < 3 || v_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("v_grid needs at least 3 strictly increasing points"));
    }
    spec.field.validate()?;
    let lattice = TiltedLattice::sheared(spec.n, spec.delta, spec.half_width);
    lattice.validate()?;
    let tasks: Vec<(usize, usize)> = (0..spec.seeds)
        .flat_map(|s| (0..v_grid.len()).map(move |i| (s, i)))
        .collect();
    let samples = run_tasks(workers, &tasks, |&(s, i)| {
        let field = EnvField::new(spec.field.clone(), derive_seed(spec.master_seed, s as u64))?;
        sample_one(spec.model, &field, kinetic, &lattice, v_grid[i], spec.alpha, spec.beta).map_err(|e| {
            Error::Task {
                seed_index: s,
                v: v_grid[i],
                source: Box::new(e),
            }
        })
    })?;
    let nv = v_grid.len();
    let grid = |f: &dyn Fn(&Sample) -> f64| -> Vec<Vec<f64>> {
        (0..spec.seeds)
            .map(|s| (0..nv).map(|i| f(&samples[s * nv + i])).collect())
            .collect()
    };
    let lambda = grid(&|x| x.lambda);
    let deriv = grid(&|x| x.stats.vprime_bar);
    let vbar = grid(&|x| x.stats.vbar);
    let hess_sup = grid(&|x| x.stats.hess_sup_bar);
    let column = |m: &Vec<Vec<f64>>, i: usize| -> Vec<f64> { m.iter().map(|r| r[i]).collect() };
    let (mean_lambda, stderr): (Vec<f64>, Vec<f64>) =
        (0..nv).map(|i| mean_and_stderr(&column(&lambda, i))).unzip();
    let (mean_deriv_stat, deriv_stderr): (Vec<f64>, Vec<f64>) =
        (0..nv).map(|i| mean_and_stderr(&column(&deriv, i))).unzip();
    let fd_slope = (0..nv)
        .map(|i| {
            if i == 0 || i + 1 == nv {
                None
            } else {
                let w = fd_weights(v_grid[i - 1], v_grid[i], v_grid[i + 1]);
                Some(w[0] * mean_lambda[i - 1] + w[1] * mean_lambda[i] + w[2] * mean_lambda[i + 1])
            }
        })
        .collect();
    Ok(ShapeCurve {
        model: spec.model,
        v_grid: v_grid.to_vec(),
        n: spec.n,
        delta: spec.delta,
        half_width: spec.half_width,
        seeds: spec.seeds,
        master_seed: spec.master_seed,
        alpha: spec.alpha,
        beta: spec.beta,
        max_half_width: samples.iter().map(|x| x.half_width).max().unwrap_or(spec.half_width),
        lambda,
        deriv,
        vbar,
        hess_sup,
        mean_lambda,
        stderr,
        mean_deriv_stat,
        deriv_stderr,
        fd_slope,
        delta_halved: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativePoint {
    pub v: f64,
    pub fd_slope: f64,
    pub mean_deriv_stat: f64,
    /// `fd_slope - mean_deriv_stat`.
    pub gap: f64,
    /// Standard error of the per-seed gap, combined with a rounding floor.
    pub stderr_combined: f64,
    pub z_score: f64,
}

/// Rounding noise floor for a three-point slope of values of size `scale`
/// built from sums of `n` terms.
fn fd_rounding_floor(weights: &[f64; 3], scale: f64, n: usize) -> f64 {
    let spread: f64 = weights.iter().map(|w| w.abs()).sum();
    16.0 * f64::EPSILON * spread * scale * (n as f64).max(1.0)
}

/// Compares the finite-difference slope with the derivative statistic at
/// every interior velocity, one paired difference per realization.
pub fn derivative_consistency(curve: &ShapeCurve) -> Vec<DerivativePoint> {
    let nv = curve.v_grid.len();
    let scale = curve
        .lambda
        .iter()
        .flatten()
        .chain(curve.deriv.iter().flatten())
        .fold(1.0f64, |a, x| a.max(x.abs()));
    (1..nv.saturating_sub(1))
        .map(|i| {
            let v = &curve.v_grid;
            let w = fd_weights(v[i - 1], v[i], v[i + 1]);
            let gaps: Vec<f64> = (0..curve.seeds)
                .map(|s| {
                    let l = &curve.lambda[s];
                    w[0] * l[i - 1] + w[1] * l[i] + w[2] * l[i + 1] - curve.deriv[s][i]
                })
                .collect();
            let (gap, se) = mean_and_stderr(&gaps);
            let floor = fd_rounding_floor(&w, scale, curve.n);
            let combined = (se * se + floor * floor).sqrt();
            DerivativePoint {
                v: v[i],
                fd_slope: curve.fd_slope[i].unwrap_or(f64::NAN),
                mean_deriv_stat: curve.mean_deriv_stat[i],
                gap,
                stderr_combined: combined,
                z_score: gap.abs() / combined,
            }
        })
        .collect()
}

/// Rounding floor used by [`derivative_consistency`] for this curve, the
/// largest over interior points.
pub fn derivative_rounding_floor(curve: &ShapeCurve) -> f64 {
    let scale = curve
        .lambda
        .iter()
        .flatten()
        .chain(curve.deriv.iter().flatten())
        .fold(1.0f64, |a, x| a.max(x.abs()));
    let v = &curve.v_grid;
    (1..v.len() - 1)
        .map(|i| fd_rounding_floor(&fd_weights(v[i - 1], v[i], v[i + 1]), scale, curve.n))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    /// Largest panel-mean excess of `Lambda(v)` over the chord; negative when
    /// every triple is convex.
    pub max_midpoint_violation: f64,
    /// Violation z-scores per interior triple (positive means a violation).
    pub z_scores: Vec<f64>,
    pub significant_violations: usize,
}

pub fn convexity_report(curve: &ShapeCurve) -> ConvexityReport {
    let v = &curve.v_grid;
    let mut worst = f64::NEG_INFINITY;
    let mut z_scores = Vec::new();
    for i in 1..v.len() - 1 {
        let t = (v[i + 1] - v[i]) / (v[i + 1] - v[i - 1]);
        let excess: Vec<f64> = (0..curve.seeds)
            .map(|s| {
                let l = &curve.lambda[s];
                l[i] - (t * l[i - 1] + (1.0 - t) * l[i + 1])
            })
            .collect();
        let (m, se) = mean_and_stderr(&excess);
        worst = worst.max(m);
        z_scores.push(if se > 0.0 {
            m / se
        } else if m > 0.0 {
            f64::INFINITY
        } else {
            0.0
        });
    }
    ConvexityReport {
        max_midpoint_violation: worst,
        significant_violations: z_scores.iter().filter(|&&z| z > 3.0).count(),
        z_scores,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    /// `c0 + c1 v + c2 v^2`.
    pub coefficients: [f64; 3],
    pub max_residual: f64,
    /// `max(3 stderr, 1% of the curve range)` at the worst point.
    pub tolerance_ok: bool,
}

/// Least-squares quadratic through `mean_lambda`.
pub fn quadratic_fit(curve: &ShapeCurve) -> QuadraticFit {
    let (xs, ys) = (&curve.v_grid, &curve.mean_lambda);
    // normal equations on centered abscissae
    let c = xs.iter().sum::<f64>() / xs.len() as f64;
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let p = [1.0, x - c, (x - c) * (x - c)];
        for r in 0..3 {
            b[r] += p[r] * y;
            for q in 0..3 {
                a[r][q] += p[r] * p[q];
            }
        }
    }
    let sol = solve3(a, b);
    let fitted = |x: f64| sol[0] + sol[1] * (x - c) + sol[2] * (x - c) * (x - c);
    let range = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut max_residual: f64 = 0.0;
    let mut ok = true;
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let r = (y - fitted(x)).abs();
        max_residual = max_residual.max(r);
        if r > (3.0 * curve.stderr[i]).max(0.01 * range) + 1e-12 {
            ok = false;
        }
    }
    QuadraticFit {
        coefficients: [
            sol[0] - sol[1] * c + sol[2] * c * c,
            sol[1] - 2.0 * sol[2] * c,
            sol[2],
        ],
        max_residual,
        tolerance_ok: ok,
    }
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = a[r][col] / a[col][col];
            for q in col..3 {
                a[r][q] -= f * a[col][q];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|q| a[r][q] * x[q]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRobustness {
    pub max_difference: f64,
    pub all_within: bool,
}

/// `|Lambda_delta - Lambda_{delta/2}| <= max(2 stderr, 1% of range)` per point.
pub fn delta_robustness(curve: &ShapeCurve) -> Option<DeltaRobustness> {
    let h = curve.delta_halved.as_ref()?;
    let ys = &curve.mean_lambda;
    let range = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut max_difference: f64 = 0.0;
    let mut all_within = true;
    for i in 0..ys.len() {
        let d = (ys[i] - h.mean_lambda[i]).abs();
        max_difference = max_difference.max(d);
        let se = curve.stderr[i].max(h.stderr[i]);
        if d > (2.0 * se).max(0.01 * range) {
            all_within = false;
        }
    }
    Some(DeltaRobustness {
        max_difference,
        all_within,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightConcavityReport {
    pub max_violation: f64,
    pub triples: usize,
    /// `Vbar` at the grid center against one-sided slopes in `alpha`.
    pub bracket: (f64, f64),
    pub vbar_center: f64,
    pub bracket_violation: f64,
}

/// Midpoint concavity of `(alpha, beta) -> f_n` along axis and diagonal
/// triples of the grid, for one realization.
pub fn alpha_beta_concavity(
    model: Model,
    field: &EnvField,
    kinetic: &KineticEnergy,
    v: f64,
    lattice: &TiltedLattice,
    alpha_grid: &[f64],
    beta_grid: &[f64],
) -> Result<WeightConcavityReport> {
    if alpha_grid.len() < 3 || beta_grid.len() < 3 {
        return Err(Error::invalid("weight grids need at least 3 points"));
    }
    if alpha_grid.iter().chain(beta_grid).any(|x| !(*x > 0.0)) {
        return Err(Error::invalid("weights must be positive"));
    }
    let (na, nb) = (alpha_grid.len(), beta_grid.len());
    let mut triples: Vec<((f64, f64), (f64, f64), (f64, f64))> = Vec::new();
    for i in 0..na {
        for j in 0..nb {
            let p = (alpha_grid[i], beta_grid[j]);
            for (di, dj) in [(2i64, 0i64), (0, 2), (2, 2), (2, -2)] {
                let (i2, j2) = (i as i64 + di, j as i64 + dj);
                if i2 < 0 || j2 < 0 || i2 >= na as i64 || j2 >= nb as i64 {
                    continue;
                }
                let q = (alpha_grid[i2 as usize], beta_grid[j2 as usize]);
                let mid = (0.5 * (p.0 + q.0), 0.5 * (p.1 + q.1));
                triples.push((p, mid, q));
            }
        }
    }
    let ac = alpha_grid[na / 2];
    let bc = beta_grid[nb / 2];
    let h = 0.05;
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut add = |pt: (f64, f64), points: &mut Vec<(f64, f64)>| -> usize {
        *index.entry((pt.0.to_bits(), pt.1.to_bits())).or_insert_with(|| {
            points.push(pt);
            points.len() - 1
        })
    };
    let ids: Vec<(usize, usize, usize)> = triples
        .iter()
        .map(|&(p, m, q)| (add(p, &mut points), add(m, &mut points), add(q, &mut points)))
        .collect();
    let centre = [add((ac - h, bc), &mut points), add((ac, bc), &mut points), add((ac + h, bc), &mut points)];
    let params: Vec<(f64, f64, f64)> = points.iter().map(|&(a, b)| (v, a, b)).collect();
    let samples = family(model, field, kinetic, lattice, &params)?;
    let f = |i: usize| samples[i].lambda;
    let mut max_violation = f64::NEG_INFINITY;
    for &(p, m, q) in &ids {
        max_violation = max_violation.max(0.5 * (f(p) + f(q)) - f(m));
    }
    let left = (f(centre[1]) - f(centre[0])) / h;
    let right = (f(centre[2]) - f(centre[1])) / h;
    let vbar = samples[centre[1]].stats.vbar;
    let bracket_violation = (right - vbar).max(vbar - left);
    Ok(WeightConcavityReport {
        max_violation,
        triples: ids.len(),
        bracket: (right, left),
        vbar_center: vbar,
        bracket_violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationViolation {
    pub n: usize,
    pub w: f64,
    pub seed_index: usize,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub v0: f64,
    pub dominated: bool,
    pub triples: usize,
    pub min_slack: f64,
    pub violations: Vec<DominationViolation>,
    pub n_list: Vec<usize>,
    /// Panel means of the slope coefficient `g_n`, one per `n`.
    pub g_n_sequence: Vec<f64>,
    pub g_n_stderr: Vec<f64>,
    /// Panel means of the second-derivative sum, one per `n`.
    pub m_hat_sequence: Vec<f64>,
    /// (min, max) of `g_n` over the largest half of `n_list`.
    pub bracket: (f64, f64),
    pub h_quadratic_coefficient: f64,
    /// Central difference of `f_n` at `v0` over the smallest offset, largest `n`.
    pub fd_slope: f64,
    pub fd_stderr: f64,
    /// Distance from `fd_slope` to the bracket in units of `fd_stderr`.
    pub bracket_z: f64,
}

/// Checks `f_n(w) - f_n(v0) <= (w - v0) g_n + (w - v0)^2 (M_n + 1) / 2` for
/// every realization, `n`, and offset, where `g_n` and `M_n` are the
/// derivative and second-derivative statistics at `v0`.
pub fn domination_check(
    spec: &PanelSpec,
    kinetic: &KineticEnergy,
    v0: f64,
    n_list: &[usize],
    w_offsets: &[f64],
    workers: usize,
) -> Result<DominationReport> {
    if n_list.is_empty() {
        return Err(Error::invalid("n_list is empty"));
    }
    if w_offsets.is_empty() || w_offsets.iter().any(|o| !(o.abs() <= 1.0) || *o == 0.0) {
        return Err(Error::invalid("offsets must lie in [-1, 1] without 0"));
    }
    let smallest = w_offsets
        .iter()
        .map(|o| o.abs())
        .fold(f64::INFINITY, f64::min);
    let mut vs: Vec<f64> = vec![v0];
    vs.extend(w_offsets.iter().map(|o| v0 + o));
    // symmetric pair for the central difference
    vs.push(v0 - smallest);
    vs.push(v0 + smallest);
    let tasks: Vec<(usize, usize)> = n_list
        .iter()
        .enumerate()
        .flat_map(|(a, _)| (0..spec.seeds).map(move |s| (a, s)))
        .collect();
    let params: Vec<(f64, f64, f64)> = vs.iter().map(|&v| (v, spec.alpha, spec.beta)).collect();
    let panels = run_tasks(workers, &tasks, |&(a, s)| {
        let field = EnvField::new(spec.field.clone(), derive_seed(spec.master_seed, s as u64))?;
        let lattice = TiltedLattice::sheared(n_list[a], spec.delta, spec.half_width);
        family(spec.model, &field, kinetic, &lattice, &params).map_err(|e| Error::Task {
            seed_index: s,
            v: v0,
            source: Box::new(e),
        })
    })?;
    let mut violations = Vec::new();
    let mut min_slack = f64::INFINITY;
    let mut triples = 0;
    let mut g_n_sequence = Vec::new();
    let mut g_n_stderr = Vec::new();
    let mut m_hat_sequence = Vec::new();
    let mut fd_samples = Vec::new();
    let last = n_list.len() - 1;
    for (a, &n) in n_list.iter().enumerate() {
        let mut gs = Vec::new();
        let mut ms = Vec::new();
        for s in 0..spec.seeds {
            let panel = &panels[a * spec.seeds + s];
            let base = &panel[0];
            let g = spec.alpha * base.stats.vprime_bar;
            let m_hat = spec.alpha * base.stats.hess_sup_bar;
            gs.push(g);
            ms.push(m_hat);
            for (o, sample) in w_offsets.iter().zip(&panel[1..]) {
                let lhs = sample.lambda - base.lambda;
                let rhs = o * g + 0.5 * o * o * (m_hat + 1.0);
                let slack = rhs - lhs;
                triples += 1;
                min_slack = min_slack.min(slack);
                if slack < -1e-9 {
                    violations.push(DominationViolation {
                        n,
                        w: v0 + o,
                        seed_index: s,
                        slack,
                    });
                }
            }
            if a == last {
                let k = panel.len();
                fd_samples.push((panel[k - 1].lambda - panel[k - 2].lambda) / (2.0 * smallest));
            }
        }
        let (g, gse) = mean_and_stderr(&gs);
        g_n_sequence.push(g);
        g_n_stderr.push(gse);
        m_hat_sequence.push(mean_and_stderr(&ms).0);
    }
    let half = (n_list.len() / 2).max(1);
    let mut order: Vec<usize> = (0..n_list.len()).collect();
    order.sort_by_key(|&i| n_list[i]);
    let large = &order[order.len() - half..];
    let lo = large.iter().map(|&i| g_n_sequence[i]).fold(f64::INFINITY, f64::min);
    let hi = large.iter().map(|&i| g_n_sequence[i]).fold(f64::NEG_INFINITY, f64::max);
    let m_inf = large.iter().map(|&i| m_hat_sequence[i]).fold(f64::NEG_INFINITY, f64::max);
    let (fd_slope, fd_se) = mean_and_stderr(&fd_samples);
    let scale = fd_samples.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let floor = 16.0 * f64::EPSILON * scale * n_list[order[order.len() - 1]] as f64 / smallest;
    let fd_stderr = (fd_se * fd_se + floor * floor).sqrt();
    let distance = if fd_slope < lo {
        lo - fd_slope
    } else if fd_slope > hi {
        fd_slope - hi
    } else {
        0.0
    };
    Ok(DominationReport {
        v0,
        dominated: violations.is_empty(),
        triples,
        min_slack,
        violations,
        n_list: n_list.to_vec(),
        g_n_sequence,
        g_n_stderr,
        m_hat_sequence,
        bracket: (lo, hi),
        h_quadratic_coefficient: 0.5 * (m_inf + 1.0),
        fd_slope,
        fd_stderr,
        bracket_z: distance / fd_stderr,
    })
}
