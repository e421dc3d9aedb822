//! Run configuration: a flat TOML file of `key = value` pairs in a few
//! sections, checked field by field.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use whisker_core::flow::FlowConfig;
use whisker_core::models::{Family, ModelSpec};
use whisker_core::newton::{NewtonConfig, Predictor};
use whisker_core::verify::VerifyConfig;
use whisker_core::WhiskerError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Continue,
    RefineBundle,
    Verify,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Continue => "continue",
            Command::RefineBundle => "refine-bundle",
            Command::Verify => "verify",
            Command::Report => "report",
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencySection {
    /// Defaults to `[model.omega0]`.
    pub omega: Option<Vec<f64>>,
    pub nu: Option<f64>,
    pub k_max: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PluginSection {
    /// Program and arguments.
    pub command: Vec<String>,
    pub dim: usize,
    pub angles: Vec<usize>,
    #[serde(default = "yes")]
    pub exact: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Eps,
    Omega0,
    LambdaH,
    Mu,
    Shear,
    Drift,
}

impl Param {
    pub fn set(self, spec: &mut ModelSpec, v: f64) {
        match self {
            Param::Eps => spec.eps = v,
            Param::Omega0 => spec.omega0 = v,
            Param::LambdaH => spec.lambda_h = v,
            Param::Mu => spec.mu = Some(v),
            Param::Shear => spec.shear = v,
            Param::Drift => spec.drift = v,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinueSection {
    pub param: Param,
    pub values: Vec<f64>,
    #[serde(default)]
    pub predictor: Predictor,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub grid: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed_torus: Option<PathBuf>,
    pub model: Option<ModelSpec>,
    pub plugin: Option<PluginSection>,
    pub frequency: FrequencySection,
    pub newton: NewtonConfig,
    pub flow: FlowConfig,
    pub verify: VerifyConfig,
    #[serde(rename = "continue")]
    pub continuation: Option<ContinueSection>,
}

pub const DEFAULT_GRID: usize = 128;
pub const DEFAULT_NU: f64 = 1.0;
pub const DEFAULT_K_MAX: usize = 100;

/// A config problem pinned to a line when the key can be found.
#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub field: String,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{l}: field `{}`: {}", self.path.display(), self.field, self.msg),
            None => write!(f, "{}: field `{}`: {}", self.path.display(), self.field, self.msg),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Line of `key` inside `[section]` (the top level when `section` is empty).
pub fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if let Some(h) = l.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = h.trim().to_string();
            if key.is_empty() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        if current == section && !key.is_empty() {
            if let Some((k, _)) = l.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

pub struct Loaded {
    pub config: RunConfig,
    pub path: PathBuf,
    text: String,
}

impl Loaded {
    /// An error for `section.key`, with the line it sits on.
    pub fn error(&self, field: &str, msg: impl Into<String>) -> ConfigError {
        let (section, key) = field.rsplit_once('.').unwrap_or(("", field));
        let line = locate(&self.text, section, key).or_else(|| locate(&self.text, section, ""));
        ConfigError { path: self.path.clone(), line, field: field.into(), msg: msg.into() }
    }

    /// Paths in the file are relative to the file itself.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }
}

pub fn load(path: &Path) -> Result<Loaded, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.into(),
        line: None,
        field: "-".into(),
        msg: format!("cannot read: {e}"),
    })?;
    parse(path, text)
}

pub fn parse(path: &Path, text: String) -> Result<Loaded, ConfigError> {
    match toml::from_str::<RunConfig>(&text) {
        Ok(config) => Ok(Loaded { config, path: path.into(), text }),
        Err(e) => {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            let msg = e.message().trim().to_string();
            let field = e
                .span()
                .and_then(|s| text.get(s.clone()))
                .map(|s| s.trim().trim_matches(['[', ']']).to_string())
                .filter(|s| !s.is_empty() && !s.contains('\n'))
                .unwrap_or_else(|| "-".into());
            Err(ConfigError { path: path.into(), line, field, msg })
        }
    }
}

/// Checks serde cannot express: powers of two, positivity, consistency.
pub fn validate(l: &Loaded, command: Command, grid: usize) -> Result<(), ConfigError> {
    let c = &l.config;
    if let Some(cmd) = c.command {
        if cmd != command {
            return Err(l.error("command", format!("config is for `{}`, invoked as `{}`", cmd.name(), command.name())));
        }
    }
    if grid < 2 || !grid.is_power_of_two() {
        return Err(l.error("grid", format!("grid size {grid} is not a power of two")));
    }
    match (&c.model, &c.plugin) {
        (Some(_), Some(_)) => return Err(l.error("plugin", "give either [model] or [plugin], not both")),
        (None, None) => return Err(l.error("model", "missing [model] or [plugin] section")),
        _ => {}
    }
    if let Some(m) = &c.model {
        if let Err(e) = m.validate() {
            let field = e.to_string().split_whitespace().find(|w| w.starts_with("model.")).unwrap_or("model").to_string();
            return Err(l.error(&field, detail(&e)));
        }
    }
    if let Some(p) = &c.plugin {
        if p.command.is_empty() {
            return Err(l.error("plugin.command", "empty command"));
        }
        if p.dim == 0 || p.dim % 2 != 0 {
            return Err(l.error("plugin.dim", "dimension must be even and positive"));
        }
        if p.angles.is_empty() || p.angles.iter().any(|&a| a >= p.dim) {
            return Err(l.error("plugin.angles", "angle coordinates must lie in 0..dim"));
        }
        if c.seed_torus.is_none() {
            return Err(l.error("seed_torus", "a plugin system needs a seed torus"));
        }
    }
    if let Err(e) = c.newton.validate() {
        let msg = detail(&e);
        // messages read "<key> must be ..."
        let words: Vec<&str> = msg.split_whitespace().collect();
        let key = words.windows(2).find(|w| w[1] == "must").map(|w| w[0]);
        let field = key.map_or_else(|| "newton".to_string(), |k| format!("newton.{k}"));
        return Err(l.error(&field, msg));
    }
    if let Some(om) = &c.frequency.omega {
        if om.is_empty() || om.iter().any(|w| !w.is_finite()) {
            return Err(l.error("frequency.omega", "must be a non-empty list of finite numbers"));
        }
    }
    if let Some(nu) = c.frequency.nu {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(l.error("frequency.nu", "must be positive"));
        }
    }
    if c.frequency.k_max == Some(0) {
        return Err(l.error("frequency.k_max", "must be at least 1"));
    }
    let v = &c.verify;
    for (name, x) in [
        ("residual_tol", v.residual_tol),
        ("isotropy_tol", v.isotropy_tol),
        ("reducibility_tol", v.reducibility_tol),
        ("split_tol", v.split_tol),
        ("projection_tol", v.projection_tol),
        ("lambda_tol", v.lambda_tol),
    ] {
        if !(x > 0.0 && x.is_finite()) {
            return Err(l.error(&format!("verify.{name}"), "tolerance must be positive"));
        }
    }
    if !(c.flow.flow_tol > 0.0) || !(c.flow.integrator.step > 0.0) {
        return Err(l.error("flow", "flow_tol and integrator.step must be positive"));
    }
    if command == Command::Continue {
        match &c.continuation {
            None => return Err(l.error("continue", "the continue command needs a [continue] section")),
            Some(s) if s.values.is_empty() => return Err(l.error("continue.values", "no parameter values")),
            Some(s) if s.values.iter().any(|v| !v.is_finite()) => {
                return Err(l.error("continue.values", "values must be finite"))
            }
            Some(_) if c.model.is_none() => return Err(l.error("continue", "continuation needs a built-in [model]")),
            _ => {}
        }
    }
    if command == Command::Verify && c.seed_torus.is_none() {
        return Err(l.error("seed_torus", "verify needs the torus to check (seed_torus or --seed-torus)"));
    }
    Ok(())
}

/// The message without the error-kind prefix.
fn detail(e: &WhiskerError) -> String {
    match e {
        WhiskerError::Shape(m) | WhiskerError::InvalidGrid(m) => m.clone(),
        other => other.to_string(),
    }
}

impl RunConfig {
    pub fn is_flow(&self) -> bool {
        self.model.as_ref().is_some_and(|m| m.family == Family::B)
    }
}
