use polymer_core::finite_temp::{log_partition_sheared, log_partition_star, partition_coupling_residual};
use polymer_core::shape::{
    alpha_beta_concavity, convexity_report, delta_robustness, derivative_consistency, derivative_rounding_floor,
    derive_seed, domination_check, estimate_shape, quadratic_fit, DerivativePoint,
};
use polymer_core::zero_temp::{shear_coupling_residual, solve_sheared, subadditivity_gap};
use polymer_core::{EnvField, KineticEnergy, Model, PanelSpec, ShapeCurve, TiltedLattice};
use serde::Serialize;

use crate::canonical::{g17, to_canonical_json};
use crate::config::{Needs, RunConfig};
use crate::CliError;

/// Files produced by one command, in emission order, and its exit status.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<(String, Vec<u8>)>,
    pub exit_code: i32,
    pub summary: Vec<String>,
}

fn json_file<T: Serialize>(name: &str, value: &T) -> Result<(String, Vec<u8>), CliError> {
    let mut text = to_canonical_json(value).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    Ok((name.to_string(), text.into_bytes()))
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    config_hash: &'a str,
    command: &'a str,
    result: T,
}

pub fn audit(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let kinetic = cfg.validate(Needs::Kinetic)?;
    let hash = cfg.hash();
    let report = kinetic.audit(cfg.experiment.audit_x_max)?;
    let witness = if kinetic.is_coercive() {
        kinetic.second_derivative_witness(0.0, cfg.experiment.audit_x_max).ok()
    } else {
        None
    };
    #[derive(Serialize)]
    struct Audit {
        report: polymer_core::AuditReport,
        witness: Option<polymer_core::SecondDerivativeWitness>,
    }
    let mut summary = vec![format!(
        "audit: coercivity_ok={} passed={} tail_constant={}",
        report.coercivity_ok,
        report.passed,
        g17(report.tail_constant)
    )];
    if !report.divergent.is_empty() {
        summary.push(format!("divergent: {}", report.divergent.join(", ")));
    }
    let exit_code = if report.passed { 0 } else { 1 };
    let file = json_file(
        "audit.json",
        &Tagged {
            config_hash: &hash,
            command: "audit",
            result: Audit { report, witness },
        },
    )?;
    Ok(Outcome {
        files: vec![file],
        exit_code,
        summary,
    })
}

fn single_field(cfg: &RunConfig) -> Result<EnvField, CliError> {
    Ok(EnvField::new(cfg.environment.field.clone(), cfg.environment.seed)?)
}

pub fn solve(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let kinetic = cfg.validate(Needs::Single)?;
    let field = single_field(cfg)?;
    let e = &cfg.experiment;
    let lattice = TiltedLattice::sheared(cfg.lattice.single(), cfg.lattice.delta, cfg.lattice.half_width);
    let r = solve_sheared(&field, &kinetic, &lattice, e.v, e.alpha, e.beta)?;
    let summary = vec![format!(
        "solve: n={} v={} value={} half_width={}",
        lattice.n,
        g17(e.v),
        g17(r.value),
        r.half_width
    )];
    let hash = cfg.hash();
    let file = json_file(
        "solve.json",
        &Tagged {
            config_hash: &hash,
            command: "solve",
            result: r,
        },
    )?;
    Ok(Outcome {
        files: vec![file],
        exit_code: 0,
        summary,
    })
}

pub fn partition(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let kinetic = cfg.validate(Needs::Single)?;
    let field = single_field(cfg)?;
    let e = &cfg.experiment;
    let lattice = TiltedLattice::sheared(
        cfg.lattice.single(),
        cfg.lattice.delta,
        cfg.lattice.half_width_for(Model::FiniteTemp),
    );
    let r = log_partition_sheared(&field, &kinetic, &lattice, e.v, e.alpha, e.beta)?;
    let summary = vec![format!(
        "partition: n={} v={} log_z={} mass_check={} half_width={}",
        lattice.n,
        g17(e.v),
        g17(r.log_z),
        g17(r.mass_check),
        r.half_width
    )];
    let hash = cfg.hash();
    let file = json_file(
        "partition.json",
        &Tagged {
            config_hash: &hash,
            command: "partition",
            result: r,
        },
    )?;
    Ok(Outcome {
        files: vec![file],
        exit_code: 0,
        summary,
    })
}

fn panel_spec(cfg: &RunConfig, model: Model, n: usize) -> PanelSpec {
    let e = &cfg.experiment;
    PanelSpec {
        model,
        field: cfg.environment.field.clone(),
        n,
        delta: cfg.lattice.delta,
        half_width: cfg.lattice.half_width_for(model),
        alpha: e.alpha,
        beta: e.beta,
        seeds: e.seeds,
        master_seed: e.master_seed,
    }
}

pub const CSV_HEADER: &str = "v,n,delta,mean_lambda,stderr,deriv_stat,fd_slope,z";

fn opt(x: Option<f64>) -> String {
    x.map(g17).unwrap_or_default()
}

/// CSV rows of a curve and its halved-spacing companion.
pub fn curve_csv(curve: &ShapeCurve) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let mut push = |c: &ShapeCurve| {
        let points = derivative_consistency(c);
        for (i, &v) in c.v_grid.iter().enumerate() {
            let z = points.iter().find(|p| p.v == v).map(|p| p.z_score);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                g17(v),
                c.n,
                g17(c.delta),
                g17(c.mean_lambda[i]),
                g17(c.stderr[i]),
                g17(c.mean_deriv_stat[i]),
                opt(c.fd_slope[i]),
                opt(z)
            ));
        }
    };
    push(curve);
    if let Some(h) = &curve.delta_halved {
        push(h);
    }
    out
}

#[derive(Serialize)]
struct ShapeFile<'a> {
    curve: &'a ShapeCurve,
    derivative: Vec<DerivativePoint>,
    derivative_rounding_floor: f64,
    convexity: polymer_core::shape::ConvexityReport,
    quadratic_fit: polymer_core::shape::QuadraticFit,
    delta_robustness: Option<polymer_core::shape::DeltaRobustness>,
}

fn shape_curves(cfg: &RunConfig, kinetic: &KineticEnergy, workers: usize) -> Result<Vec<ShapeCurve>, CliError> {
    let mut curves = Vec::new();
    for model in cfg.model.models() {
        for n in cfg.lattice.lengths() {
            let spec = panel_spec(cfg, model, n);
            curves.push(estimate_shape(
                &spec,
                kinetic,
                &cfg.experiment.v_grid,
                cfg.lattice.delta_halved,
                workers,
            )?);
        }
    }
    Ok(curves)
}

pub fn shape(cfg: &RunConfig, workers: usize) -> Result<Outcome, CliError> {
    let kinetic = cfg.validate(Needs::Panel)?;
    let hash = cfg.hash();
    let mut files = Vec::new();
    let mut summary = Vec::new();
    for curve in shape_curves(cfg, &kinetic, workers)? {
        let stem = format!("shape_{}_n{}", curve.model.name(), curve.n);
        let body = ShapeFile {
            curve: &curve,
            derivative: derivative_consistency(&curve),
            derivative_rounding_floor: derivative_rounding_floor(&curve),
            convexity: convexity_report(&curve),
            quadratic_fit: quadratic_fit(&curve),
            delta_robustness: delta_robustness(&curve),
        };
        let zmax = body.derivative.iter().map(|p| p.z_score).fold(0.0, f64::max);
        summary.push(format!(
            "shape {} n={}: max derivative z={} convexity violations={}",
            curve.model.name(),
            curve.n,
            g17(zmax),
            body.convexity.significant_violations
        ));
        if cfg.output.wants("json") {
            files.push(json_file(
                &format!("{stem}.json"),
                &Tagged {
                    config_hash: &hash,
                    command: "shape",
                    result: &body,
                },
            )?);
        }
        if cfg.output.wants("csv") {
            files.push((format!("{stem}.csv"), curve_csv(&curve).into_bytes()));
        }
    }
    Ok(Outcome {
        files,
        exit_code: 0,
        summary,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub model: String,
    /// "deterministic" (tolerance on a value) or "statistical" (standard errors).
    pub kind: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Diagnostics are reported but never fail the run.
    pub gating: bool,
    pub detail: String,
}

struct Lines(Vec<CheckLine>);

impl Lines {
    fn push(&mut self, name: &str, model: Model, kind: &str, value: f64, tolerance: f64, gating: bool, detail: String) {
        let passed = value <= tolerance;
        self.0.push(CheckLine {
            name: name.into(),
            model: model.name().into(),
            kind: kind.into(),
            value,
            tolerance,
            passed,
            gating,
            detail,
        });
    }
}

fn realization(cfg: &RunConfig, s: usize) -> Result<EnvField, CliError> {
    Ok(EnvField::new(
        cfg.environment.field.clone(),
        derive_seed(cfg.experiment.master_seed, s as u64),
    )?)
}

/// Uniform pseudo-random number in [0, 1) from a counter.
fn unit(master: u64, counter: u64) -> f64 {
    (derive_seed(master ^ 0x5eed_7e57, counter) >> 11) as f64 / (1u64 << 53) as f64
}

fn check_coupling(cfg: &RunConfig, kinetic: &KineticEnergy, model: Model, lines: &mut Lines) -> Result<(), CliError> {
    let e = &cfg.experiment;
    let g = &e.v_grid;
    let vs = [g[0], g[g.len() / 2], g[g.len() - 1]];
    let w = cfg.lattice.half_width_for(model);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for s in 0..e.check_seeds {
        let field = realization(cfg, s)?;
        for &n in &cfg.lattice.lengths() {
            for &v in &vs {
                let r = match model {
                    Model::ZeroTemp => {
                        shear_coupling_residual(&field, kinetic, n, v, cfg.lattice.delta, w, e.alpha, e.beta)?
                    }
                    Model::FiniteTemp => {
                        partition_coupling_residual(&field, kinetic, n, v, cfg.lattice.delta, w, e.alpha, e.beta)?
                    }
                };
                worst = worst.max(r);
                count += 1;
            }
        }
    }
    lines.push(
        "shear_coupling",
        model,
        "deterministic",
        worst,
        1e-9,
        true,
        format!("{count} (seed, n, v) cases"),
    );
    Ok(())
}

fn check_weights(cfg: &RunConfig, kinetic: &KineticEnergy, model: Model, lines: &mut Lines) -> Result<(), CliError> {
    let e = &cfg.experiment;
    let n = cfg.lattice.lengths()[0];
    let lattice = TiltedLattice::sheared(n, cfg.lattice.delta, cfg.lattice.half_width_for(model));
    let mut worst = f64::NEG_INFINITY;
    let mut bracket = f64::NEG_INFINITY;
    for s in 0..e.check_seeds {
        let field = realization(cfg, s)?;
        let r = alpha_beta_concavity(model, &field, kinetic, e.v, &lattice, &e.alpha_grid, &e.beta_grid)?;
        worst = worst.max(r.max_violation);
        bracket = bracket.max(r.bracket_violation);
    }
    lines.push(
        "weight_concavity",
        model,
        "deterministic",
        worst,
        1e-9,
        true,
        format!("{} seeds, n={n}", e.check_seeds),
    );
    lines.push(
        "kinetic_energy_bracket",
        model,
        "deterministic",
        bracket,
        1e-6,
        true,
        "Vbar between one-sided alpha slopes".into(),
    );
    Ok(())
}

fn check_restriction(cfg: &RunConfig, kinetic: &KineticEnergy, model: Model, lines: &mut Lines) -> Result<(), CliError> {
    let e = &cfg.experiment;
    let mut worst = f64::NEG_INFINITY;
    let w = cfg.lattice.half_width_for(model);
    // endpoint boxes sampled at spacing 1/b live on the lattice when delta = 1/b
    let b = ((1.0 / cfg.lattice.delta).round() as usize).max(3);
    let star_delta = 1.0 / b as f64;
    // paths of at most 16 steps stay well inside 6 length units; doubling covers the rest
    let star_w = (6.0 / star_delta).ceil() as usize;
    for t in 0..e.restriction_tuples {
        let base = 4 * t as u64;
        let m = 1 + (unit(e.master_seed, base) * 8.0) as usize;
        let n = 1 + (unit(e.master_seed, base + 1) * 8.0) as usize;
        let seed_index = (unit(e.master_seed, base + 2) * 1e6) as usize;
        let v = -1.0 + 2.0 * unit(e.master_seed, base + 3);
        let field = realization(cfg, seed_index)?;
        let gap = match model {
            Model::ZeroTemp => {
                subadditivity_gap(&field, kinetic, m, n, v, cfg.lattice.delta, w, e.alpha, e.beta)?.gap
            }
            Model::FiniteTemp => {
                let total = (m + n) as f64;
                let star = |f: &EnvField, len: usize, x: f64, y: f64| {
                    log_partition_star(f, kinetic, len, x, y, star_delta, star_w, b, e.alpha, e.beta)
                };
                let whole = star(&field, m + n, 0.0, v * total)?;
                let first = star(&field, m, 0.0, v * m as f64)?;
                let second = star(&field.shift_view(m as i64, 0.0), n, v * m as f64, v * total)?;
                first.log_z_star + second.log_z_star - whole.log_z_star
            }
        };
        worst = worst.max(gap);
    }
    let name = match model {
        Model::ZeroTemp => "subadditivity",
        Model::FiniteTemp => "supermultiplicativity",
    };
    lines.push(
        name,
        model,
        "deterministic",
        worst,
        1e-9,
        true,
        format!("{} random (m, n, seed, v) tuples", e.restriction_tuples),
    );
    Ok(())
}

fn check_mass(cfg: &RunConfig, kinetic: &KineticEnergy, lines: &mut Lines) -> Result<(), CliError> {
    let e = &cfg.experiment;
    let n = cfg.lattice.lengths()[0];
    let lattice = TiltedLattice::sheared(n, cfg.lattice.delta, cfg.lattice.half_width_for(Model::FiniteTemp));
    let mut worst: f64 = 0.0;
    for s in 0..e.check_seeds {
        let field = realization(cfg, s)?;
        for &v in &e.v_grid {
            let r = log_partition_sheared(&field, kinetic, &lattice, v, e.alpha, e.beta)?;
            worst = worst.max((r.mass_check - 1.0).abs());
        }
    }
    lines.push(
        "mass_check",
        Model::FiniteTemp,
        "deterministic",
        worst,
        1e-10,
        true,
        format!("{} seeds x {} velocities, n={n}", e.check_seeds, e.v_grid.len()),
    );
    Ok(())
}

fn check_curves(
    cfg: &RunConfig,
    kinetic: &KineticEnergy,
    curves: &[ShapeCurve],
    lines: &mut Lines,
) -> Result<(), CliError> {
    let quadratic = cfg.kinetic_is_quadratic();
    let reach = curves
        .iter()
        .map(|c| 2.0 * c.max_half_width as f64 * c.delta)
        .fold(0.0, f64::max)
        + cfg.experiment.v_grid.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let witness = kinetic.second_derivative_witness(0.0, reach)?;
    for curve in curves {
        let model = curve.model;
        let n = curve.n;
        let points = derivative_consistency(curve);
        let zmax = points.iter().map(|p| p.z_score).fold(0.0, f64::max);
        lines.push(
            "derivative_formula",
            model,
            "statistical",
            zmax,
            3.0,
            true,
            format!("n={n}, max z over {} interior velocities", points.len()),
        );
        let conv = convexity_report(curve);
        lines.push(
            "convexity",
            model,
            "statistical",
            conv.significant_violations as f64,
            0.0,
            true,
            format!("n={n}, worst midpoint violation {}", g17(conv.max_midpoint_violation)),
        );
        let fit = quadratic_fit(curve);
        lines.push(
            "quadratic_shape",
            model,
            "statistical",
            if fit.tolerance_ok { 0.0 } else { 1.0 },
            0.0,
            quadratic,
            format!("n={n}, max residual {}", g17(fit.max_residual)),
        );
        if let Some(d) = delta_robustness(curve) {
            lines.push(
                "delta_robustness",
                model,
                "statistical",
                if d.all_within { 0.0 } else { 1.0 },
                0.0,
                true,
                format!("n={n}, max difference {}", g17(d.max_difference)),
            );
        }
        let mut excess = f64::NEG_INFINITY;
        for (hs, vb) in curve.hess_sup.iter().zip(&curve.vbar) {
            for (h, v) in hs.iter().zip(vb) {
                excess = excess.max(h - witness.bound(*v));
            }
        }
        lines.push(
            "second_derivative_bound",
            model,
            "deterministic",
            excess,
            1e-6,
            true,
            format!("n={n}, A={} C={} b={}", g17(witness.a), g17(witness.c), g17(witness.b)),
        );
    }
    for model in cfg.model.models() {
        let mine: Vec<&ShapeCurve> = curves.iter().filter(|c| c.model == model).collect();
        if mine.len() < 2 {
            continue;
        }
        let mean_gap = |c: &ShapeCurve| {
            let p = derivative_consistency(c);
            p.iter().map(|x| x.gap.abs()).sum::<f64>() / p.len() as f64
        };
        let first = mine.iter().min_by_key(|c| c.n).unwrap();
        let last = mine.iter().max_by_key(|c| c.n).unwrap();
        let floor = derivative_rounding_floor(last).max(derivative_rounding_floor(first));
        lines.push(
            "derivative_gap_shrinks",
            model,
            "statistical",
            mean_gap(last) - mean_gap(first),
            floor,
            false,
            format!("mean |gap| n={} vs n={}", last.n, first.n),
        );
    }
    Ok(())
}

fn check_domination(
    cfg: &RunConfig,
    kinetic: &KineticEnergy,
    model: Model,
    workers: usize,
    lines: &mut Lines,
) -> Result<(), CliError> {
    let ns = cfg.lattice.lengths();
    let spec = panel_spec(cfg, model, ns[0]);
    let e = &cfg.experiment;
    let r = domination_check(&spec, kinetic, e.domination_v0, &ns, &e.domination_offsets, workers)?;
    lines.push(
        "domination",
        model,
        "deterministic",
        -r.min_slack,
        1e-9,
        true,
        format!("{} (n, w, seed) triples, {} violations", r.triples, r.violations.len()),
    );
    lines.push(
        "domination_bracket",
        model,
        "statistical",
        r.bracket_z,
        3.0,
        true,
        format!(
            "bracket [{}, {}] against fd slope {}",
            g17(r.bracket.0),
            g17(r.bracket.1),
            g17(r.fd_slope)
        ),
    );
    Ok(())
}

pub fn check(cfg: &RunConfig, workers: usize) -> Result<Outcome, CliError> {
    let kinetic = cfg.validate(Needs::Panel)?;
    let hash = cfg.hash();
    let mut lines = Lines(Vec::new());
    for model in cfg.model.models() {
        check_coupling(cfg, &kinetic, model, &mut lines)?;
        check_weights(cfg, &kinetic, model, &mut lines)?;
        check_restriction(cfg, &kinetic, model, &mut lines)?;
        if model == Model::FiniteTemp {
            check_mass(cfg, &kinetic, &mut lines)?;
        }
        check_domination(cfg, &kinetic, model, workers, &mut lines)?;
    }
    let curves = shape_curves(cfg, &kinetic, workers)?;
    check_curves(cfg, &kinetic, &curves, &mut lines)?;
    let lines = lines.0;
    let passed = lines.iter().all(|l| l.passed || !l.gating);
    let summary = lines
        .iter()
        .map(|l| {
            format!(
                "[{}] {} {}: {} (tolerance {}){} {}",
                if l.passed { "PASS" } else { "FAIL" },
                l.name,
                l.model,
                g17(l.value),
                g17(l.tolerance),
                if l.gating { "" } else { " diagnostic" },
                l.detail
            )
        })
        .collect();
    #[derive(Serialize)]
    struct CheckFile {
        passed: bool,
        checks: Vec<CheckLine>,
    }
    let file = json_file(
        "check.json",
        &Tagged {
            config_hash: &hash,
            command: "check",
            result: CheckFile { passed, checks: lines },
        },
    )?;
    Ok(Outcome {
        files: vec![file],
        exit_code: if passed { 0 } else { 1 },
        summary,
    })
}
