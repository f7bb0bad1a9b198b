//! Random potentials `F_k(x)` on `Z x R`.
//!
//! Every field is a pure function of its seed, parameters and view offsets.
//! Randomness is drawn from ChaCha streams keyed by `(seed, k, index, tag)`,
//! where `index` is a cosine mode or a unit cell of the shot-noise point
//! process. Nothing is cached between calls, so a field can be evaluated at
//! arbitrary real coordinates from any thread and always gives the same bits.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAG_COSINE: u64 = 0x636f_7369_6e65_0001;
const TAG_SHOT: u64 = 0x7368_6f74_6e6f_0002;

/// Sampling spacing used by [`EnvField::running_sup`].
pub const SUP_SPACING: f64 = 1e-4;

// max |phi'| and max |phi''| for the bump phi(u) = (1 - u^2)^3
const BUMP_D1: f64 = 1.7174;
const BUMP_D2: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldParams {
    Constant {
        c: f64,
    },
    /// `M + sum_m a_m cos(w_m x + theta_{k,m})` with i.i.d. uniform phases.
    Cosine {
        offset: f64,
        amplitudes: Vec<f64>,
        frequencies: Vec<f64>,
        /// Test hook: use these phases for every time slice instead of drawing them.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phases: Option<Vec<f64>>,
    },
    /// Poisson points of the given intensity, each carrying the bump
    /// `height * (1 - ((x - xi)/half_width)^2)^3`.
    ShotNoise {
        intensity: f64,
        half_width: f64,
        height: f64,
    },
}

impl FieldParams {
    pub fn validate(&self) -> Result<()> {
        match self {
            FieldParams::Constant { c } => {
                if !c.is_finite() {
                    return Err(Error::invalid("constant field value must be finite"));
                }
            }
            FieldParams::Cosine {
                offset,
                amplitudes,
                frequencies,
                phases,
            } => {
                if !offset.is_finite() {
                    return Err(Error::invalid("cosine offset must be finite"));
                }
                if amplitudes.len() != frequencies.len() {
                    return Err(Error::invalid(
                        "cosine amplitudes and frequencies differ in length",
                    ));
                }
                if amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                    return Err(Error::invalid("cosine amplitudes must be finite and >= 0"));
                }
                if frequencies.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::invalid("cosine frequencies must be positive"));
                }
                if let Some(p) = phases {
                    if p.len() != amplitudes.len() || p.iter().any(|x| !x.is_finite()) {
                        return Err(Error::invalid("fixed phases must match the mode count"));
                    }
                }
            }
            FieldParams::ShotNoise {
                intensity,
                half_width,
                height,
            } => {
                if !(intensity.is_finite() && *intensity > 0.0) {
                    return Err(Error::invalid("shot-noise intensity must be positive"));
                }
                if !(half_width.is_finite() && *half_width > 0.0) {
                    return Err(Error::invalid("shot-noise bump half width must be positive"));
                }
                if !(height.is_finite() && *height > 0.0) {
                    return Err(Error::invalid("shot-noise bump height must be positive"));
                }
            }
        }
        Ok(())
    }

    /// The constant `M_F` with `F >= M_F` everywhere.
    pub fn lower_bound(&self) -> f64 {
        match self {
            FieldParams::Constant { c } => *c,
            FieldParams::Cosine {
                offset, amplitudes, ..
            } => offset - amplitudes.iter().sum::<f64>(),
            FieldParams::ShotNoise { .. } => 0.0,
        }
    }
}

/// Affine view `(k, x) -> (k + t, sigma * (x + s + v k))` onto the base field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct View {
    time_offset: i64,
    space_offset: f64,
    shear: f64,
    mirrored: bool,
}

impl View {
    const IDENTITY: View = View {
        time_offset: 0,
        space_offset: 0.0,
        shear: 0.0,
        mirrored: false,
    };

    #[inline]
    fn map(&self, k: i64, x: f64) -> (i64, f64) {
        let y = x + self.space_offset + self.shear * k as f64;
        (k + self.time_offset, if self.mirrored { -y } else { y })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvField {
    params: FieldParams,
    seed: u64,
    view: View,
}

/// Result of [`EnvField::running_sup_estimate`]: the sampled maximum and the
/// safety term added on top of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupEstimate {
    pub sampled_max: f64,
    pub margin: f64,
}

impl SupEstimate {
    pub fn upper(&self) -> f64 {
        self.sampled_max + self.margin
    }
}

fn stream(seed: u64, time: i64, index: i64, tag: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&time.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..32].copy_from_slice(&tag.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn cell_points(seed: u64, time: i64, cell: i64, intensity: f64, out: &mut Vec<f64>) {
    let mut rng = stream(seed, time, cell, TAG_SHOT);
    // intensity was validated positive, so the distribution exists
    let count = Poisson::new(intensity)
        .map(|p| p.sample(&mut rng))
        .unwrap_or(0.0) as usize;
    let base = cell as f64;
    out.extend((0..count).map(|_| base + rng.random::<f64>()));
}

#[inline]
fn bump(height: f64, half_width: f64, x: f64, xi: f64) -> f64 {
    let u = (x - xi) / half_width;
    if u.abs() < 1.0 {
        let s = 1.0 - u * u;
        height * s * s * s
    } else {
        0.0
    }
}

#[inline]
fn cosine_sum(offset: f64, amplitudes: &[f64], frequencies: &[f64], phases: &[f64], x: f64) -> f64 {
    let mut acc = offset;
    for ((a, w), th) in amplitudes.iter().zip(frequencies).zip(phases) {
        acc += a * (w * x + th).cos();
    }
    acc
}

impl EnvField {
    /// Builds a field after validating its parameters.
    pub fn new(params: FieldParams, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(EnvField {
            params,
            seed,
            view: View::IDENTITY,
        })
    }

    pub fn constant(c: f64) -> Self {
        EnvField {
            params: FieldParams::Constant { c },
            seed: 0,
            view: View::IDENTITY,
        }
    }

    pub fn params(&self) -> &FieldParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn lower_bound(&self) -> f64 {
        self.params.lower_bound()
    }

    pub fn time_offset(&self) -> i64 {
        self.view.time_offset
    }

    pub fn space_offset(&self) -> f64 {
        self.view.space_offset
    }

    pub fn shear_offset(&self) -> f64 {
        self.view.shear
    }

    pub fn is_mirrored(&self) -> bool {
        self.view.mirrored
    }

    /// `G_k(x) = F_k(x + v k)`.
    pub fn shear_view(&self, v: f64) -> EnvField {
        let mut out = self.clone();
        out.view.shear = self.view.shear + v;
        out
    }

    /// Space-time shift `G_k(x) = F_{k + n}(x + y)`.
    pub fn shift_view(&self, n: i64, y: f64) -> EnvField {
        let mut out = self.clone();
        out.view.time_offset = self.view.time_offset + n;
        out.view.space_offset = self.view.space_offset + y + self.view.shear * n as f64;
        out
    }

    /// Spatial reflection `G_k(x) = F_k(-x)`.
    pub fn mirrored(&self) -> EnvField {
        let mut out = self.clone();
        out.view.mirrored = !self.view.mirrored;
        out.view.space_offset = -self.view.space_offset;
        out.view.shear = -self.view.shear;
        out
    }

    fn phases(&self, time: i64) -> Vec<f64> {
        match &self.params {
            FieldParams::Cosine {
                amplitudes, phases, ..
            } => match phases {
                Some(p) => p.clone(),
                None => (0..amplitudes.len())
                    .map(|m| {
                        let mut rng = stream(self.seed, time, m as i64, TAG_COSINE);
                        rng.random::<f64>() * TAU
                    })
                    .collect(),
            },
            _ => Vec::new(),
        }
    }

    /// `F_k(x)` seen through the view offsets.
    pub fn evaluate(&self, k: i64, x: f64) -> f64 {
        let (time, y) = self.view.map(k, x);
        match &self.params {
            FieldParams::Constant { c } => *c,
            FieldParams::Cosine {
                offset,
                amplitudes,
                frequencies,
                ..
            } => cosine_sum(*offset, amplitudes, frequencies, &self.phases(time), y),
            FieldParams::ShotNoise {
                intensity,
                half_width,
                height,
            } => {
                let lo = (y - half_width).floor() as i64;
                let hi = (y + half_width).floor() as i64;
                let mut pts = Vec::new();
                let mut sum = 0.0;
                for cell in lo..=hi {
                    pts.clear();
                    cell_points(self.seed, time, cell, *intensity, &mut pts);
                    for &xi in &pts {
                        sum += bump(*height, *half_width, y, xi);
                    }
                }
                sum
            }
        }
    }

    /// Evaluates one time slice at many positions. Bit-identical to calling
    /// [`EnvField::evaluate`] point by point, but draws the slice's randomness once.
    pub fn evaluate_slice(&self, k: i64, xs: &[f64]) -> Vec<f64> {
        if xs.is_empty() {
            return Vec::new();
        }
        match &self.params {
            FieldParams::Constant { c } => vec![*c; xs.len()],
            FieldParams::Cosine {
                offset,
                amplitudes,
                frequencies,
                ..
            } => {
                let time = self.view.map(k, 0.0).0;
                let phases = self.phases(time);
                xs.iter()
                    .map(|&x| {
                        let (_, y) = self.view.map(k, x);
                        cosine_sum(*offset, amplitudes, frequencies, &phases, y)
                    })
                    .collect()
            }
            FieldParams::ShotNoise {
                intensity,
                half_width,
                height,
            } => {
                let mapped: Vec<(i64, f64)> = xs.iter().map(|&x| self.view.map(k, x)).collect();
                let time = mapped[0].0;
                let (ymin, ymax) = mapped
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, y)| {
                        (a.min(y), b.max(y))
                    });
                let lo = (ymin - half_width).floor() as i64;
                let hi = (ymax + half_width).floor() as i64;
                let cells: Vec<Vec<f64>> = (lo..=hi)
                    .map(|cell| {
                        let mut pts = Vec::new();
                        cell_points(self.seed, time, cell, *intensity, &mut pts);
                        pts
                    })
                    .collect();
                mapped
                    .iter()
                    .map(|&(_, y)| {
                        let c0 = (y - half_width).floor() as i64;
                        let c1 = (y + half_width).floor() as i64;
                        let mut sum = 0.0;
                        for cell in c0..=c1 {
                            for &xi in &cells[(cell - lo) as usize] {
                                sum += bump(*height, *half_width, y, xi);
                            }
                        }
                        sum
                    })
                    .collect()
            }
        }
    }

    /// Number of shot-noise points whose bump can reach `[y - r, y + r]` in
    /// base coordinates (zero for other kinds).
    fn points_near(&self, time: i64, y: f64, r: f64) -> usize {
        match &self.params {
            FieldParams::ShotNoise {
                intensity,
                half_width,
                ..
            } => {
                let a = y - r - half_width;
                let b = y + r + half_width;
                let mut pts = Vec::new();
                for cell in a.floor() as i64..=b.floor() as i64 {
                    cell_points(self.seed, time, cell, *intensity, &mut pts);
                }
                pts.iter().filter(|&&xi| xi >= a && xi <= b).count()
            }
            _ => 0,
        }
    }

    /// Bounds on `|F'|` and `|F''|` over the window `|y - x| <= 1/2`.
    fn local_derivative_bounds(&self, k: i64, x: f64) -> (f64, f64) {
        match &self.params {
            FieldParams::Constant { .. } => (0.0, 0.0),
            FieldParams::Cosine {
                amplitudes,
                frequencies,
                ..
            } => amplitudes
                .iter()
                .zip(frequencies)
                .fold((0.0, 0.0), |(l1, l2), (a, w)| (l1 + a * w, l2 + a * w * w)),
            FieldParams::ShotNoise {
                half_width, height, ..
            } => {
                let (time, y) = self.view.map(k, x);
                let count = self.points_near(time, y, 0.5) as f64;
                (
                    count * height * BUMP_D1 / half_width,
                    count * height * BUMP_D2 / (half_width * half_width),
                )
            }
        }
    }

    /// Sampled maximum of `F_k` on `[x - 1/2, x + 1/2]` at spacing
    /// [`SUP_SPACING`], plus a margin from the local derivative bounds.
    ///
    /// The interval endpoints are sampled, so an interior maximizer is within
    /// half a spacing of a sample and has zero slope; the margin is then
    /// `min(L1 * d / 2, L2 * d^2 / 8)`.
    pub fn running_sup_estimate(&self, k: i64, x: f64) -> SupEstimate {
        let steps = (1.0 / SUP_SPACING).round() as usize;
        let ys: Vec<f64> = (0..=steps)
            .map(|i| x - 0.5 + i as f64 * SUP_SPACING)
            .collect();
        let sampled_max = self
            .evaluate_slice(k, &ys)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let (l1, l2) = self.local_derivative_bounds(k, x);
        let margin = (l1 * SUP_SPACING / 2.0).min(l2 * SUP_SPACING * SUP_SPACING / 8.0);
        SupEstimate {
            sampled_max,
            margin,
        }
    }

    /// Upper approximation of `F*_k(x) = sup_{|y - x| <= 1/2} F_k(y)`.
    pub fn running_sup(&self, k: i64, x: f64) -> f64 {
        self.running_sup_estimate(k, x).upper()
    }
}
