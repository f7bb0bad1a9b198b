//! Partition functions and polymer expectations by a transfer operator on
//! tilted lattices.
//!
//! Interior slices carry the rectangle-rule weight `delta`; the pinned
//! endpoints carry none. Vectors are kept in linear space, rescaled to unit
//! maximum after every slice, with the logarithms of the scales accumulated
//! separately, so nothing overflows and no `exp` sits in the inner loops.

use serde::{Deserialize, Serialize};

use crate::env::EnvField;
use crate::error::{Error, Result};
use crate::kinetic::KineticEnergy;
use crate::lattice::{common_window, potential_table, PathStats, TiltedLattice};

/// Mass allowed within two nodes of the window edge before the window grows.
pub const BOUNDARY_MASS_TOL: f64 = 1e-8;

/// Kernel entries below `exp(-KERNEL_LOG_CUTOFF)` of the largest are dropped.
pub const KERNEL_LOG_CUTOFF: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    pub log_z: f64,
    /// Polymer-measure expectations of the path statistics.
    pub expectations: PathStats,
    /// Node-marginal mass of the slice farthest from one.
    pub mass_check: f64,
    /// Largest marginal mass found within two nodes of the window edge.
    pub boundary_mass: f64,
    pub half_width: usize,
    pub alpha: f64,
    pub beta: f64,
    pub shift: f64,
}

impl PartitionResult {
    pub fn boundary_touched(&self) -> bool {
        self.boundary_mass > BOUNDARY_MASS_TOL
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut s = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        s[0] += a[i] * b[i];
        s[1] += a[i + 1] * b[i + 1];
        s[2] += a[i + 2] * b[i + 2];
        s[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

fn normalize(u: &mut [f64]) -> Result<f64> {
    let top = u.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0 && top.is_finite()) {
        return Err(Error::Numerical("transfer vector lost all mass".into()));
    }
    let inv = 1.0 / top;
    for x in u.iter_mut() {
        *x *= inv;
    }
    Ok(top.ln())
}

/// One forward-backward pass on the given window.
pub fn log_partition_on_lattice(
    field: &EnvField,
    kinetic: &KineticEnergy,
    lattice: &TiltedLattice,
    shift: f64,
    alpha: f64,
    beta: f64,
) -> Result<PartitionResult> {
    lattice.validate()?;
    if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid("alpha and beta must be positive and finite"));
    }
    let n = lattice.n;
    let w = lattice.half_width as i64;
    let m = lattice.nodes();
    let span = 4 * w as usize + 1;
    let log_delta = lattice.delta.ln();
    let (i0, i1) = ((lattice.start_index + w) as usize, (lattice.end_index + w) as usize);

    // kernel exp(-alpha V(inc_d)) scaled by its maximum, indexed by d + 2W
    let vals: Vec<f64> = (-2 * w..=2 * w)
        .map(|d| kinetic.eval(lattice.increment(d, shift)))
        .collect();
    let kmax = vals
        .iter()
        .map(|v| -alpha * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let kernel: Vec<f64> = vals
        .iter()
        .map(|v| {
            let e = -alpha * v - kmax;
            if e < -KERNEL_LOG_CUTOFF {
                0.0
            } else {
                e.exp()
            }
        })
        .collect();
    let mut reversed = kernel.clone();
    reversed.reverse();
    let dmax = (0..span)
        .filter(|&i| kernel[i] > 0.0)
        .map(|i| (i as i64 - 2 * w).abs())
        .max()
        .unwrap_or(0);

    // node factors exp(-beta F_k - c_k), c_k the slice maximum
    let fvals = potential_table(field, lattice, 1.0);
    let mut node = Vec::with_capacity(n);
    let mut node_log = Vec::with_capacity(n);
    for row in &fvals {
        let c = row.iter().map(|f| -beta * f).fold(f64::NEG_INFINITY, f64::max);
        node.push(row.iter().map(|f| (-beta * f - c).exp()).collect::<Vec<f64>>());
        node_log.push(c);
    }
    let weight_log = |k: usize| if k < n { log_delta } else { 0.0 };

    // forward: fwd[k] = f_k / exp(fs[k])
    let mut fwd: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut fs = Vec::with_capacity(n + 1);
    let mut first = vec![0.0; m];
    first[i0] = 1.0;
    fwd.push(first);
    fs.push(0.0);
    let mut h = vec![0.0; m];
    for k in 0..n {
        let cur = &fwd[k];
        for j in 0..m {
            h[j] = cur[j] * node[k][j];
        }
        let mut next = vec![0.0; m];
        let targets = if k + 1 == n { i1..i1 + 1 } else { 0..m };
        for jp in targets {
            let lo = (jp as i64 - dmax).max(0) as usize;
            let hi = (jp as i64 + dmax).min(m as i64 - 1) as usize;
            // kernel index jp - j + 2W runs downward as j grows
            let off = (2 * w - jp as i64) as usize;
            next[jp] = dot(&h[lo..=hi], &reversed[off + lo..=off + hi]);
        }
        let s = normalize(&mut next)?;
        fs.push(fs[k] + node_log[k] + kmax + weight_log(k + 1) + s);
        fwd.push(next);
    }
    let log_z = fs[n] + fwd[n][i1].ln();

    // backward: bwd[k] = b_k / exp(bs[k]); b_k includes the node factor of slice k
    let mut bwd: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    let mut bs = vec![0.0; n + 1];
    let mut last = vec![0.0; m];
    last[i1] = 1.0;
    bwd[n] = last;
    for k in (0..n).rev() {
        let nextb = &bwd[k + 1];
        let mut cur = vec![0.0; m];
        for j in 0..m {
            let lo = (j as i64 - dmax).max(0) as usize;
            let hi = (j as i64 + dmax).min(m as i64 - 1) as usize;
            let off = (2 * w - j as i64) as usize;
            cur[j] = node[k][j] * dot(&nextb[lo..=hi], &kernel[off + lo..=off + hi]);
        }
        let s = normalize(&mut cur)?;
        bs[k] = bs[k + 1] + node_log[k] + kmax + weight_log(k + 1) + s;
        bwd[k] = cur;
    }

    // node marginals: p_k(j) = f_k(j) b_k(j) / Z
    let mut mass_check: f64 = 1.0;
    let mut boundary_mass: f64 = 0.0;
    let mut fbar = 0.0;
    for k in 0..=n {
        let scale = (fs[k] + bs[k] - log_z).exp();
        let mut mass = 0.0;
        let mut fsum = 0.0;
        for j in 0..m {
            let p = fwd[k][j] * bwd[k][j] * scale;
            mass += p;
            if k < n {
                fsum += p * fvals[k][j];
            }
            if k > 0 && k < n && (j as i64 - w).abs() >= w - 1 {
                boundary_mass = boundary_mass.max(p);
            }
        }
        fbar += fsum;
        if (mass - 1.0).abs() > (mass_check - 1.0).abs() {
            mass_check = mass;
        }
    }

    // pair marginals summed over time, per jump d
    let mut per_jump = vec![0.0; span];
    for k in 0..n {
        let scale = (fs[k] + node_log[k] + kmax + weight_log(k + 1) + bs[k + 1] - log_z).exp();
        for j in 0..m {
            h[j] = fwd[k][j] * node[k][j];
        }
        let nextb = &bwd[k + 1];
        for j in 0..m {
            if h[j] == 0.0 {
                continue;
            }
            let lo = (j as i64 - dmax).max(0) as usize;
            let hi = (j as i64 + dmax).min(m as i64 - 1) as usize;
            let hj = h[j] * scale;
            for jp in lo..=hi {
                let d = (jp as i64 - j as i64 + 2 * w) as usize;
                per_jump[d] += hj * kernel[d] * nextb[jp];
            }
        }
    }
    let nf = n as f64;
    let mut e = PathStats {
        fbar: fbar / nf,
        ..PathStats::default()
    };
    for (i, &p) in per_jump.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let inc = lattice.increment(i as i64 - 2 * w, shift);
        e.vbar += p * vals[i];
        e.vprime_bar += p * kinetic.grad(inc);
        e.hess_sup_bar += p * kinetic.window_sup_hess(inc);
    }
    e.vbar /= nf;
    e.vprime_bar /= nf;
    e.hess_sup_bar /= nf;

    Ok(PartitionResult {
        log_z,
        expectations: e,
        mass_check,
        boundary_mass,
        half_width: lattice.half_width,
        alpha,
        beta,
        shift,
    })
}

/// Transfer pass with the window doubled (at most twice) while the polymer
/// measure puts too much mass near the window edge.
pub fn log_partition_with_window_policy(
    field: &EnvField,
    kinetic: &KineticEnergy,
    lattice: &TiltedLattice,
    shift: f64,
    alpha: f64,
    beta: f64,
) -> Result<PartitionResult> {
    let mut out = common_window(lattice.half_width, |w| {
        let r = log_partition_on_lattice(field, kinetic, &lattice.with_half_width(w), shift, alpha, beta)?;
        let touched = r.boundary_touched();
        Ok((vec![r], touched))
    })?;
    Ok(out.remove(0))
}

/// `log Z~^n(v, alpha, beta)` for paths pinned at 0 at both ends.
pub fn log_partition_sheared(
    field: &EnvField,
    kinetic: &KineticEnergy,
    lattice: &TiltedLattice,
    v: f64,
    alpha: f64,
    beta: f64,
) -> Result<PartitionResult> {
    if lattice.start != 0.0 || lattice.end != 0.0 {
        return Err(Error::invalid("the sheared problem needs an untilted lattice"));
    }
    log_partition_with_window_policy(field, kinetic, lattice, v, alpha, beta)
}

/// `log Z` from `lattice.start` at time 0 to `lattice.end` at time `n`.
pub fn log_partition_point_to_point(
    field: &EnvField,
    kinetic: &KineticEnergy,
    lattice: &TiltedLattice,
    alpha: f64,
    beta: f64,
) -> Result<PartitionResult> {
    log_partition_with_window_policy(field, kinetic, lattice, 0.0, alpha, beta)
}

/// Several sheared partition functions `(v, alpha, beta)` on one shared window.
pub fn log_partition_sheared_family(
    field: &EnvField,
    kinetic: &KineticEnergy,
    lattice: &TiltedLattice,
    params: &[(f64, f64, f64)],
) -> Result<Vec<PartitionResult>> {
    common_window(lattice.half_width, |w| {
        let lat = lattice.with_half_width(w);
        let out = params
            .iter()
            .map(|&(v, a, b)| log_partition_on_lattice(field, kinetic, &lat, v, a, b))
            .collect::<Result<Vec<_>>>()?;
        let touched = out.iter().any(|r| r.boundary_touched());
        Ok((out, touched))
    })
}

/// `|log Z~^n(v) - log Z(0 -> vn)|`, the latter in the field sheared by `-v`.
pub fn partition_coupling_residual(
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
        let a = log_partition_on_lattice(field, kinetic, &TiltedLattice::sheared(n, delta, w), v, alpha, beta)?;
        let lat = TiltedLattice::point_to_point(n, 0.0, v * n as f64, delta, w);
        let b = log_partition_on_lattice(&sheared_field, kinetic, &lat, 0.0, alpha, beta)?;
        let touched = a.boundary_touched() || b.boundary_touched();
        Ok((vec![a, b], touched))
    })?;
    Ok((out[0].log_z - out[1].log_z).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarResult {
    /// Minimum of `log Z` over the endpoint grid.
    pub log_z_star: f64,
    /// Endpoint offsets `(x1, y1)` attaining the minimum.
    pub argmin: (f64, f64),
    /// Endpoint offsets used along each axis.
    pub offsets: Vec<f64>,
    /// `values[a][b]` is `log Z` for offsets `(offsets[a], offsets[b])`.
    pub values: Vec<Vec<f64>>,
    /// Whether the offsets were exact lattice nodes of one common lattice.
    pub matched: bool,
    pub half_width: usize,
}

/// Endpoint offsets in `(-1/2, 1/2)`: the midpoints of `box_samples` equal
/// cells, plus 0 when it is not already among them.
pub fn box_offsets(box_samples: usize) -> Vec<f64> {
    let b = box_samples as f64;
    let mut out: Vec<f64> = (0..box_samples)
        .map(|i| -0.5 + (i as f64 + 0.5) / b)
        .collect();
    if !out.iter().any(|&x| x.abs() < 1e-12) {
        out.push(0.0);
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    for x in out.iter_mut() {
        if x.abs() < 1e-12 {
            *x = 0.0;
        }
    }
    out
}

/// `log Z_*` from `x` at time 0 to `y` at time `n`: the minimum of `log Z`
/// over endpoints perturbed within the unit box, sampled on [`box_offsets`].
///
/// When every offset is an integer multiple of `delta`, all endpoint pairs
/// are pinned nodes of the single lattice tilted along `x -> y`; grids of
/// this kind make the restriction inequalities exact.
pub fn log_partition_star(
    field: &EnvField,
    kinetic: &KineticEnergy,
    n: usize,
    x: f64,
    y: f64,
    delta: f64,
    half_width: usize,
    box_samples: usize,
    alpha: f64,
    beta: f64,
) -> Result<StarResult> {
    if box_samples < 3 {
        return Err(Error::invalid("box_samples must be at least 3"));
    }
    let offsets = box_offsets(box_samples);
    let steps: Vec<f64> = offsets.iter().map(|o| o / delta).collect();
    let matched = steps.iter().all(|s| (s - s.round()).abs() < 1e-9);
    let out = common_window(half_width, |w| {
        let mut values = vec![vec![0.0; offsets.len()]; offsets.len()];
        let mut touched = false;
        for (a, &xa) in offsets.iter().enumerate() {
            for (b, &yb) in offsets.iter().enumerate() {
                let lat = if matched {
                    TiltedLattice::point_to_point(n, x, y, delta, w)
                        .with_endpoint_indices(steps[a].round() as i64, steps[b].round() as i64)
                } else {
                    TiltedLattice::point_to_point(n, x + xa, y + yb, delta, w)
                };
                let r = log_partition_on_lattice(field, kinetic, &lat, 0.0, alpha, beta)?;
                touched |= r.boundary_touched();
                values[a][b] = r.log_z;
            }
        }
        Ok((vec![(values, w)], touched))
    })?;
    let (values, w) = out.into_iter().next().unwrap();
    let mut best = (f64::INFINITY, (0.0, 0.0));
    for (a, row) in values.iter().enumerate() {
        for (b, &val) in row.iter().enumerate() {
            if val < best.0 {
                best = (val, (offsets[a], offsets[b]));
            }
        }
    }
    Ok(StarResult {
        log_z_star: best.0,
        argmin: best.1,
        offsets,
        values,
        matched,
        half_width: w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::FieldParams;

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
    fn single_step_is_exact() {
        let f = cosine(2);
        let v = 0.6;
        let r = log_partition_sheared(&f, &quad(), &TiltedLattice::sheared(1, 0.1, 5), v, 1.0, 1.0).unwrap();
        let want = -quad().eval(v) - f.evaluate(0, 0.0);
        assert!((r.log_z - want).abs() < 1e-14);
        let lat = TiltedLattice::point_to_point(1, 0.0, 2.0, 0.1, 5);
        let r = log_partition_point_to_point(&f, &quad(), &lat, 1.0, 1.0).unwrap();
        assert!((r.log_z - (-4.0 - f.evaluate(0, 0.0))).abs() < 1e-14);
    }

    #[test]
    fn marginals_are_normalized() {
        let f = cosine(5);
        let r = log_partition_sheared(&f, &quad(), &TiltedLattice::sheared(20, 0.1, 40), 0.3, 1.0, 1.0).unwrap();
        assert!((r.mass_check - 1.0).abs() <= 1e-10);
        assert!(!r.boundary_touched());
    }

    #[test]
    fn constant_field_shifts_log_z() {
        let lat = TiltedLattice::sheared(6, 0.1, 30);
        let a = log_partition_sheared(&EnvField::constant(0.0), &quad(), &lat, 0.2, 1.0, 1.0).unwrap();
        let b = log_partition_sheared(&EnvField::constant(1.5), &quad(), &lat, 0.2, 1.0, 1.0).unwrap();
        assert!((a.log_z - b.log_z - 6.0 * 1.5).abs() < 1e-12);
        assert!((b.expectations.fbar - 1.5).abs() < 1e-12);
    }

    #[test]
    fn box_offsets_include_zero() {
        let five = box_offsets(5);
        for (got, want) in five.iter().zip([-0.4, -0.2, 0.0, 0.2, 0.4]) {
            assert!((got - want).abs() < 1e-15);
        }
        let four = box_offsets(4);
        assert_eq!(four.len(), 5);
        assert!(four.contains(&0.0));
    }

    #[test]
    fn star_is_below_center() {
        let f = cosine(8);
        let s = log_partition_star(&f, &quad(), 6, 0.0, 3.0, 0.2, 30, 5, 1.0, 1.0).unwrap();
        assert!(s.matched);
        let lat = TiltedLattice::point_to_point(6, 0.0, 3.0, 0.2, s.half_width);
        let center = log_partition_on_lattice(&f, &quad(), &lat, 0.0, 1.0, 1.0).unwrap();
        assert!(s.log_z_star <= center.log_z + 1e-12);
    }
}
