use std::path::Path;

use polymer_core::{FieldParams, KineticEnergy, KineticForm, KineticSpec, Model};
use serde::{Deserialize, Serialize};

use crate::canonical::{sha256_hex, to_canonical_json};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    ZeroTemp,
    FiniteTemp,
    Both,
}

impl ModelChoice {
    pub fn models(self) -> Vec<Model> {
        match self {
            ModelChoice::ZeroTemp => vec![Model::ZeroTemp],
            ModelChoice::FiniteTemp => vec![Model::FiniteTemp],
            ModelChoice::Both => vec![Model::ZeroTemp, Model::FiniteTemp],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentBlock {
    /// Seed of the single realization used by `solve` and `partition`.
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub field: FieldParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeBlock {
    pub n: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    pub delta: f64,
    pub half_width: usize,
    /// Starting half width for positive-temperature runs; defaults to `half_width`.
    pub finite_half_width: Option<usize>,
    #[serde(default = "yes")]
    pub delta_halved: bool,
}

impl LatticeBlock {
    /// Path lengths for panel commands.
    pub fn lengths(&self) -> Vec<usize> {
        match (&self.n_list, self.n) {
            (Some(list), _) => list.clone(),
            (None, Some(n)) => vec![n],
            (None, None) => Vec::new(),
        }
    }

    /// Path length for single-instance commands.
    pub fn single(&self) -> usize {
        self.n.or_else(|| self.n_list.as_ref().and_then(|l| l.first().copied())).unwrap_or(0)
    }

    pub fn half_width_for(&self, model: Model) -> usize {
        match model {
            Model::ZeroTemp => self.half_width,
            Model::FiniteTemp => self.finite_half_width.unwrap_or(self.half_width),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    /// Velocity for `solve` and `partition`.
    #[serde(default)]
    pub v: f64,
    #[serde(default = "default_v_grid")]
    pub v_grid: Vec<f64>,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "default_weight_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default = "default_weight_grid")]
    pub beta_grid: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_audit_x_max")]
    pub audit_x_max: f64,
    /// Realizations for the deterministic checks of `check`.
    #[serde(default = "default_check_seeds")]
    pub check_seeds: usize,
    /// Random (m, n, seed, v) tuples for the restriction inequalities.
    #[serde(default = "default_tuples")]
    pub restriction_tuples: usize,
    #[serde(default = "default_v0")]
    pub domination_v0: f64,
    #[serde(default = "default_offsets")]
    pub domination_offsets: Vec<f64>,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        toml::from_str("").expect("defaults parse")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

impl OutputBlock {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_model")]
    pub model: ModelChoice,
    pub environment: EnvironmentBlock,
    pub kinetic: KineticSpec,
    pub lattice: LatticeBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

fn yes() -> bool {
    true
}
fn one() -> f64 {
    1.0
}
fn default_model() -> ModelChoice {
    ModelChoice::Both
}
fn default_v_grid() -> Vec<f64> {
    (0..9).map(|i| -0.4 + 0.1 * i as f64).collect()
}
fn default_weight_grid() -> Vec<f64> {
    vec![0.5, 0.875, 1.25, 1.625, 2.0]
}
fn default_seeds() -> usize {
    20
}
fn default_audit_x_max() -> f64 {
    100.0
}
fn default_check_seeds() -> usize {
    10
}
fn default_tuples() -> usize {
    100
}
fn default_v0() -> f64 {
    0.3
}
fn default_offsets() -> Vec<f64> {
    vec![-0.5, -0.25, 0.25, 0.5]
}
fn default_directory() -> String {
    "runs".into()
}
fn default_formats() -> Vec<String> {
    vec!["json".into(), "csv".into()]
}

/// What a command needs from the config beyond parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Needs {
    Kinetic,
    Single,
    Panel,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Canonical serialization of everything that determines results; the
    /// output block is excluded.
    pub fn canonical(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            model: ModelChoice,
            environment: &'a EnvironmentBlock,
            kinetic: &'a KineticSpec,
            lattice: &'a LatticeBlock,
            experiment: &'a ExperimentBlock,
        }
        to_canonical_json(&Hashed {
            model: self.model,
            environment: &self.environment,
            kinetic: &self.kinetic,
            lattice: &self.lattice,
            experiment: &self.experiment,
        })
        .expect("config serializes")
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }

    /// Checks every numeric field against the solver preconditions.
    pub fn validate(&self, needs: Needs) -> Result<KineticEnergy, CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let kinetic = KineticEnergy::new(self.kinetic.clone()).map_err(|e| CliError::Config(format!("kinetic: {e}")))?;
        let e = &self.experiment;
        if !(e.audit_x_max.is_finite() && e.audit_x_max >= 10.0) {
            return bad("experiment.audit_x_max must be at least 10".into());
        }
        if needs == Needs::Kinetic {
            return Ok(kinetic);
        }
        if !kinetic.is_coercive() {
            return bad("kinetic energy is not coercive; the solvers need V -> +inf at both ends".into());
        }
        self.environment
            .field
            .validate()
            .map_err(|e| CliError::Config(format!("environment: {e}")))?;
        let l = &self.lattice;
        if !(l.delta.is_finite() && l.delta > 0.0) {
            return bad("lattice.delta must be positive".into());
        }
        if l.half_width == 0 || l.finite_half_width == Some(0) {
            return bad("lattice half widths must be positive".into());
        }
        if l.half_width > 1 << 20 || l.finite_half_width.unwrap_or(0) > 1 << 20 {
            return bad("lattice half width is unreasonably large".into());
        }
        for (name, x) in [("alpha", e.alpha), ("beta", e.beta)] {
            if !(x.is_finite() && x > 0.0) {
                return bad(format!("experiment.{name} must be positive"));
            }
        }
        if !e.v.is_finite() {
            return bad("experiment.v must be finite".into());
        }
        match needs {
            Needs::Single => {
                if l.single() == 0 {
                    return bad("lattice.n must be set and at least 1".into());
                }
            }
            Needs::Panel => {
                let ns = l.lengths();
                if ns.is_empty() || ns.contains(&0) {
                    return bad("lattice.n_list (or n) must hold positive lengths".into());
                }
                if e.v_grid.len() < 3
                    || e.v_grid.iter().any(|v| !v.is_finite())
                    || e.v_grid.windows(2).any(|w| !(w[1] > w[0]))
                {
                    return bad("experiment.v_grid needs at least 3 strictly increasing finite points".into());
                }
                if e.seeds < 2 {
                    return bad("experiment.seeds must be at least 2".into());
                }
                if e.check_seeds == 0 {
                    return bad("experiment.check_seeds must be positive".into());
                }
                for (name, g) in [("alpha_grid", &e.alpha_grid), ("beta_grid", &e.beta_grid)] {
                    if g.len() < 3 || g.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                        return bad(format!("experiment.{name} needs at least 3 positive points"));
                    }
                }
                if e.domination_offsets.is_empty()
                    || e.domination_offsets.iter().any(|o| !(o.abs() <= 1.0) || *o == 0.0)
                {
                    return bad("experiment.domination_offsets must lie in [-1, 1] without 0".into());
                }
                if !e.domination_v0.is_finite() {
                    return bad("experiment.domination_v0 must be finite".into());
                }
            }
            Needs::Kinetic => unreachable!(),
        }
        for f in &self.output.formats {
            if f != "json" && f != "csv" {
                return bad(format!("unknown output format {f:?}"));
            }
        }
        Ok(kinetic)
    }

    /// Whether the kinetic energy is exactly quadratic.
    pub fn kinetic_is_quadratic(&self) -> bool {
        match &self.kinetic.form {
            KineticForm::Quadratic { .. } => true,
            KineticForm::Polynomial { coefficients } => {
                let mut c = coefficients.clone();
                while c.last() == Some(&0.0) {
                    c.pop();
                }
                c.len() == 3
            }
            KineticForm::CustomTable { .. } => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
model = "zero_temp"
[environment]
kind = "cosine"
seed = 4
offset = 0.0
amplitudes = [1.0, 0.5]
frequencies = [1.0, 2.3]
[kinetic]
kind = "quadratic"
a = 0.0
b = 1.0
theta = 0.75
[lattice]
n = 8
delta = 0.25
half_width = 20
[experiment]
v_grid = [-0.2, 0.0, 0.2]
seeds = 3
"#;

    #[test]
    fn parses_and_validates() {
        let c = RunConfig::parse(BASE).unwrap();
        assert_eq!(c.model, ModelChoice::ZeroTemp);
        assert_eq!(c.environment.seed, 4);
        assert_eq!(c.lattice.lengths(), vec![8]);
        c.validate(Needs::Panel).unwrap();
        assert!(c.kinetic_is_quadratic());
    }

    #[test]
    fn hash_ignores_key_order_and_output_block() {
        let a = RunConfig::parse(BASE).unwrap();
        let reordered = r#"
[lattice]
half_width = 20
delta = 0.25
n = 8
[kinetic]
theta = 0.75
b = 1
a = 0
kind = "quadratic"
[experiment]
seeds = 3
v_grid = [-0.2, 0, 0.2]
[environment]
frequencies = [1.0, 2.3]
amplitudes = [1, 0.5]
offset = 0
seed = 4
kind = "cosine"
[output]
directory = "elsewhere"
"#;
        let b = RunConfig::parse(&format!("model = \"zero_temp\"\n{reordered}")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.experiment.master_seed = 9;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn rejects_bad_values() {
        let c = RunConfig::parse(&BASE.replace("delta = 0.25", "delta = -1.0")).unwrap();
        assert!(matches!(c.validate(Needs::Panel), Err(CliError::Config(_))));
        let c = RunConfig::parse(&BASE.replace("seeds = 3", "seeds = 1")).unwrap();
        assert!(c.validate(Needs::Panel).is_err());
        assert!(c.validate(Needs::Single).is_ok());
        assert!(RunConfig::parse(&BASE.replace("[lattice]", "[lattice]\nbogus = 1")).is_err());
        let cubic = BASE.replace("kind = \"quadratic\"\na = 0.0\nb = 1.0", "kind = \"polynomial\"\ncoefficients = [0.0, 0.0, 0.0, 1.0]");
        let c = RunConfig::parse(&cubic).unwrap();
        assert!(c.validate(Needs::Kinetic).is_ok());
        assert!(c.validate(Needs::Single).is_err());
    }
}
