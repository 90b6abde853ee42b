//! TOML experiment configuration.
//!
//! ```toml
//! seed = 7
//! workers = 1
//! out = "out/kac"
//!
//! [model]
//! kind = "kac"              # kac | maxwell | linear-toy | free
//! mode = "bird"             # bird | nanbu
//! rate = 1.0
//! initial = { law = "normal", mean = 0.0, sd = 1.0 }
//!
//! [run]
//! horizon = 1.0
//! q = 2
//! n_ladder = [100, 1000]
//! replicas = 2000
//! functionals = ["j1", "cos"]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use propchaos_core::forward::Functional;
use propchaos_core::functionals::{
    capped_jumps, clipped_at, cos2_at, cos_at, poisson_capped_mean, sin_at, tanh_at,
};
use propchaos_core::model::{
    FreeMotion, InitialLaw, JumpLaw, JumpMode, LinearToyKernel, ModelSpec, NullKernel, State,
};
use serde::{Deserialize, Serialize};

/// Configuration error, with the offending field or the TOML location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn field_err<T>(field: &str, msg: impl fmt::Display) -> Result<T, ConfigError> {
    Err(ConfigError(format!("field `{field}`: {msg}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Kac,
    Maxwell,
    LinearToy,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Bird,
    Nanbu,
}

impl From<Mode> for JumpMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Bird => JumpMode::Bird,
            Mode::Nanbu => JumpMode::Nanbu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum JumpConfig {
    Rademacher,
    Constant { value: f64 },
    Normal { mean: f64, sd: f64 },
}

impl From<JumpConfig> for JumpLaw {
    fn from(j: JumpConfig) -> Self {
        match j {
            JumpConfig::Rademacher => JumpLaw::Rademacher,
            JumpConfig::Constant { value } => JumpLaw::Constant(value),
            JumpConfig::Normal { mean, sd } => JumpLaw::Normal { mean, sd },
        }
    }
}

/// Scalar initial laws; vector models keep their built-in law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    Dirac { at: f64 },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
}

impl From<InitialConfig> for InitialLaw {
    fn from(i: InitialConfig) -> Self {
        match i {
            InitialConfig::Dirac { at } => InitialLaw::Dirac(State::scalar(at)),
            InitialConfig::Uniform { lo, hi } => InitialLaw::Uniform {
                lo: State::scalar(lo),
                hi: State::scalar(hi),
            },
            InitialConfig::Normal { mean, sd } => InitialLaw::Normal {
                mean: State::scalar(mean),
                sd,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MotionConfig {
    Still,
    Transport,
    /// Euler-Maruyama with mesh `step`.
    Ou {
        theta: f64,
        sigma: f64,
        step: f64,
    },
}

impl From<MotionConfig> for FreeMotion {
    fn from(m: MotionConfig) -> Self {
        match m {
            MotionConfig::Still => FreeMotion::Still,
            MotionConfig::Transport => FreeMotion::Transport,
            MotionConfig::Ou { theta, sigma, step } => {
                FreeMotion::OrnsteinUhlenbeck { theta, sigma, step }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub kind: ModelKind,
    #[serde(default)]
    pub mode: Mode,
    /// Kac collision rate, linear-toy jump rate, or the clock rate of a
    /// free model.
    #[serde(default = "one")]
    pub rate: f64,
    /// Maxwell cross-section constant.
    #[serde(default = "one")]
    pub b: f64,
    /// Maxwell cell size.
    #[serde(default = "half")]
    pub delta: f64,
    #[serde(default = "rademacher")]
    pub jump: JumpConfig,
    #[serde(default)]
    pub z0: f64,
    /// Overrides the kernel's dominating rate; must not be below it.
    pub lambda: Option<f64>,
    pub initial: Option<InitialConfig>,
    pub motion: Option<MotionConfig>,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn rademacher() -> JumpConfig {
    JumpConfig::Rademacher
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Kac,
            mode: Mode::Bird,
            rate: 1.0,
            b: 1.0,
            delta: 0.5,
            jump: JumpConfig::Rademacher,
            z0: 0.0,
            lambda: None,
            initial: None,
            motion: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "two")]
    pub q: usize,
    #[serde(default = "default_ladder")]
    pub n_ladder: Vec<usize>,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    /// Draws of the nonlinear law used for centering and second moments.
    #[serde(default = "default_marginal")]
    pub marginal_replicas: u64,
    #[serde(default = "three")]
    pub l_max: usize,
    #[serde(default = "default_functionals")]
    pub functionals: Vec<String>,
    /// Forward time grid for trajectory summaries.
    #[serde(default = "default_grid")]
    pub time_grid: usize,
}

fn two() -> usize {
    2
}

fn three() -> usize {
    3
}

fn default_ladder() -> Vec<usize> {
    vec![100, 1000]
}

fn default_replicas() -> u64 {
    1000
}

fn default_marginal() -> u64 {
    100_000
}

fn default_functionals() -> Vec<String> {
    vec!["cos".into(), "j1".into()]
}

fn default_grid() -> usize {
    5
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            q: 2,
            n_ladder: default_ladder(),
            replicas: default_replicas(),
            marginal_replicas: default_marginal(),
            l_max: 3,
            functionals: default_functionals(),
            time_grid: default_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_usize")]
    pub workers: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub run: RunConfig,
}

fn one_usize() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            out: default_out(),
            model: ModelConfig::default(),
            run: RunConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    /// Canonical TOML, the input of the manifest hash.
    #[must_use]
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        let r = &self.run;
        let positive = |field: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                field_err(field, "must be positive")
            }
        };
        positive("model.rate", m.rate)?;
        positive("model.b", m.b)?;
        positive("model.delta", m.delta)?;
        positive("run.horizon", r.horizon)?;
        if let Some(l) = m.lambda {
            positive("model.lambda", l)?;
        }
        if let Some(MotionConfig::Ou { theta, sigma, step }) = m.motion {
            positive("model.motion.step", step)?;
            if !theta.is_finite() || !(sigma >= 0.0) {
                return field_err("model.motion", "needs finite theta and sigma >= 0");
            }
        }
        if let JumpConfig::Normal { sd, .. } = m.jump {
            if !(sd >= 0.0) {
                return field_err("model.jump.sd", "must be nonnegative");
            }
        }
        if let Some(InitialConfig::Normal { sd, .. }) = m.initial {
            if !(sd >= 0.0) {
                return field_err("model.initial.sd", "must be nonnegative");
            }
        }
        if let Some(InitialConfig::Uniform { lo, hi }) = m.initial {
            if !(lo < hi) {
                return field_err("model.initial", "needs lo < hi");
            }
        }
        if m.kind == ModelKind::Maxwell && m.initial.is_some() {
            return field_err(
                "model.initial",
                "the Maxwell model keeps its six-dimensional initial law",
            );
        }
        if r.n_ladder.is_empty() {
            return field_err("run.n_ladder", "must not be empty");
        }
        if r.n_ladder.windows(2).any(|w| w[0] >= w[1]) {
            return field_err("run.n_ladder", "must be strictly increasing");
        }
        if r.n_ladder[0] < 2 {
            return field_err("run.n_ladder", "N must be at least 2");
        }
        if r.q == 0 || r.q > r.n_ladder[0] {
            return field_err("run.q", "must lie in 1..=min(n_ladder)");
        }
        if r.replicas == 0 {
            return field_err("run.replicas", "must be positive");
        }
        if r.marginal_replicas < 2 {
            return field_err("run.marginal_replicas", "must be at least 2");
        }
        if r.time_grid == 0 {
            return field_err("run.time_grid", "must be positive");
        }
        if self.workers == 0 {
            return field_err("workers", "must be positive");
        }
        for name in &r.functionals {
            if functional(name, r.horizon, &self.model).is_none() {
                return field_err("run.functionals", format!("unknown functional `{name}`"));
            }
        }
        self.model_spec().map(|_| ())
    }

    pub fn model_spec(&self) -> Result<ModelSpec, ConfigError> {
        let m = &self.model;
        let mode = JumpMode::from(m.mode);
        let wrap = |e: propchaos_core::Error| ConfigError(format!("field `model`: {e}"));
        let mut spec = match m.kind {
            ModelKind::Kac if m.lambda.is_none() => ModelSpec::kac(m.rate, mode).map_err(wrap)?,
            ModelKind::Kac => {
                let base = ModelSpec::kac(m.rate, mode).map_err(wrap)?;
                ModelSpec::new(
                    "kac",
                    *base.motion(),
                    Arc::new(propchaos_core::model::KacKernel { rate: m.rate }),
                    mode,
                    base.initial().clone(),
                    m.lambda,
                )
                .map_err(wrap)?
            }
            ModelKind::Maxwell => ModelSpec::mollified_maxwell(m.b, m.delta, mode).map_err(wrap)?,
            ModelKind::LinearToy => ModelSpec::new(
                "linear",
                FreeMotion::Still,
                Arc::new(LinearToyKernel {
                    rate: m.rate,
                    jump: m.jump.into(),
                }),
                mode,
                InitialLaw::Dirac(State::scalar(m.z0)),
                m.lambda,
            )
            .map_err(wrap)?,
            ModelKind::Free => {
                let initial: InitialLaw = m.initial.map_or(
                    InitialLaw::Normal {
                        mean: State::scalar(0.0),
                        sd: 1.0,
                    },
                    InitialLaw::from,
                );
                ModelSpec::new(
                    "free",
                    FreeMotion::Still,
                    Arc::new(NullKernel { dim: 1 }),
                    JumpMode::Bird,
                    initial,
                    Some(m.lambda.unwrap_or(m.rate)),
                )
                .map_err(wrap)?
            }
        };
        if let Some(init) = m.initial {
            spec = spec.with_initial(init.into());
        }
        if let Some(motion) = m.motion {
            if matches!(motion, MotionConfig::Transport) && spec.dim() != 6 {
                return field_err(
                    "model.motion",
                    "transport needs the six-dimensional Maxwell state",
                );
            }
            spec = spec.with_motion(motion.into());
        }
        Ok(spec)
    }

    /// The configured functionals, built for `run.horizon`.
    #[must_use]
    pub fn functionals(&self) -> Vec<Functional> {
        self.run
            .functionals
            .iter()
            .map(|n| functional(n, self.run.horizon, &self.model).expect("validated"))
            .collect()
    }
}

/// Whether the catalog functional `name` only takes integer values.
#[must_use]
pub fn integer_valued(name: &str) -> bool {
    matches!(name, "j1" | "j2" | "j3" | "one" | "zero")
}

/// Functional catalog. Scalar functionals read the first coordinate.
/// `j1`, `j2`, `j3` count jumps capped at 1, 2, 3; for the Kac model their
/// exact mean under the nonlinear law (every particle jumps at rate
/// `rate`) is attached as the known mean.
#[must_use]
pub fn functional(name: &str, t: f64, model: &ModelConfig) -> Option<Functional> {
    let vector = model.kind == ModelKind::Maxwell;
    let f = match name {
        "cos" => cos_at(t),
        "sin" => sin_at(t),
        "cos2" => cos2_at(t),
        "tanh" => tanh_at(t),
        "clip1" => clipped_at(t, 1.0),
        "energy" if vector => Functional::at_time("energy", t, f64::INFINITY, |z| {
            (3..6).map(|k| z.get(k) * z.get(k)).sum()
        }),
        "energy" => Functional::at_time("energy", t, f64::INFINITY, |z| z.get(0) * z.get(0)),
        "one" => Functional::constant(1, 1.0),
        "zero" => Functional::constant(1, 0.0),
        _ => {
            let cap: usize = name
                .strip_prefix('j')?
                .parse()
                .ok()
                .filter(|c| (1..=3).contains(c))?;
            let raw = capped_jumps(t, cap);
            if model.kind == ModelKind::Kac {
                raw.with_mean(poisson_capped_mean(model.rate * t, cap))
            } else {
                raw
            }
        }
    };
    Some(Functional {
        name: name.into(),
        ..f
    })
}
