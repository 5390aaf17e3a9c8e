//! Config file loading, flag overrides and backend selection.

use std::path::{Path, PathBuf};

use duostep_core::backends::{
    AlwaysClick, BackendConfig, HttpClient, HttpInterpreter, HttpLocator, Interpreter, Locator, NaiveLocator,
    NoisyLocator, OracleLocator, ScriptBook, ScriptedInterpreter,
};
use serde::Deserialize;
use serde_json::Value;

use crate::CliError;

/// A backend as written in the config file: a builtin name, or an HTTP
/// endpoint description.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum BackendSpec {
    Builtin(String),
    Http(BackendConfig),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub interpreter: Option<BackendSpec>,
    pub locator: Option<BackendSpec>,
    pub records: Option<PathBuf>,
    pub env: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub max_steps: Option<usize>,
    pub parallelism: Option<usize>,
    pub seed: Option<u64>,
}

/// Values given on the command line; each one overrides the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub interpreter: Option<String>,
    pub locator: Option<String>,
    pub records: Option<PathBuf>,
    pub env: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub max_steps: Option<usize>,
    pub parallelism: Option<usize>,
    pub seed: Option<u64>,
    pub allow_network: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub interpreter: Option<BackendSpec>,
    pub locator: Option<BackendSpec>,
    pub records: Option<PathBuf>,
    pub env: Option<PathBuf>,
    pub out: PathBuf,
    pub max_steps: Option<usize>,
    pub parallelism: usize,
    pub seed: u64,
    pub allow_network: bool,
}

/// Replaces `${NAME}` in every string with the environment variable's value.
pub fn interpolate(v: &mut Value) -> Result<(), CliError> {
    match v {
        Value::String(s) => {
            let mut out = String::new();
            let mut rest = s.as_str();
            while let Some(start) = rest.find("${") {
                out.push_str(&rest[..start]);
                let tail = &rest[start + 2..];
                let end = tail
                    .find('}')
                    .ok_or_else(|| CliError::Config(format!("unterminated ${{...}} in {s:?}")))?;
                let name = &tail[..end];
                let val = std::env::var(name)
                    .map_err(|_| CliError::Config(format!("environment variable {name} is not set")))?;
                out.push_str(&val);
                rest = &tail[end + 1..];
            }
            out.push_str(rest);
            *s = out;
        }
        Value::Array(items) => items.iter_mut().try_for_each(interpolate)?,
        Value::Object(map) => map.values_mut().try_for_each(interpolate)?,
        _ => {}
    }
    Ok(())
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

pub fn load_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    let mut v: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {} is not valid JSON: {e}", path.display())))?;
    interpolate(&mut v)?;
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}

impl CliConfig {
    pub fn resolve(o: Overrides) -> Result<Self, CliError> {
        let cwd = PathBuf::from(".");
        let (file, base) = match &o.config {
            Some(p) => {
                let base = p.parent().map(Path::to_path_buf).unwrap_or_else(|| cwd.clone());
                let base = if base.as_os_str().is_empty() { cwd.clone() } else { base };
                (load_file_config(p)?, base)
            }
            None => (FileConfig::default(), cwd.clone()),
        };
        let from_file = |p: Option<PathBuf>| p.map(|p| resolve(&base, p));
        // backend names given as flags resolve against the working directory
        let (interpreter, ibase) = match o.interpreter {
            Some(s) => (Some(BackendSpec::Builtin(s)), true),
            None => (file.interpreter, false),
        };
        let (locator, lbase) = match o.locator {
            Some(s) => (Some(BackendSpec::Builtin(s)), true),
            None => (file.locator, false),
        };
        let localize = |spec: Option<BackendSpec>, from_flag: bool| match spec {
            Some(BackendSpec::Builtin(s)) if !from_flag => Some(BackendSpec::Builtin(rebase_builtin(&s, &base))),
            other => other,
        };
        let parallelism = o.parallelism.or(file.parallelism).unwrap_or(1);
        let max_steps = o.max_steps.or(file.max_steps);
        if max_steps == Some(0) {
            return Err(CliError::Config("max_steps must be positive".into()));
        }
        Ok(Self {
            interpreter: localize(interpreter, ibase),
            locator: localize(locator, lbase),
            records: o.records.or_else(|| from_file(file.records)),
            env: o.env.or_else(|| from_file(file.env)),
            out: o.out.or_else(|| from_file(file.out)).unwrap_or_else(|| PathBuf::from("out")),
            max_steps,
            parallelism,
            seed: o.seed.or(file.seed).unwrap_or(0),
            allow_network: o.allow_network,
        })
    }
}

/// Makes the path inside `scripted:<path>` (possibly nested under
/// `always-click:`) relative to `base`.
fn rebase_builtin(spec: &str, base: &Path) -> String {
    if let Some(inner) = spec.strip_prefix("always-click:") {
        return format!("always-click:{}", rebase_builtin(inner, base));
    }
    match spec.strip_prefix("scripted:") {
        Some(p) => format!("scripted:{}", resolve(base, PathBuf::from(p)).display()),
        None => spec.to_string(),
    }
}

fn http_client(cfg: &BackendConfig, allow_network: bool, role: &str) -> Result<HttpClient, CliError> {
    if !allow_network {
        return Err(CliError::Config(format!(
            "the {role} is an HTTP backend; pass --allow-network to enable network access"
        )));
    }
    cfg.validate().map_err(|e| CliError::Config(format!("{role} backend: {e}")))?;
    if std::env::var(&cfg.auth_token_env_var).is_err() {
        return Err(CliError::Config(format!(
            "{role} backend: environment variable {} is not set",
            cfg.auth_token_env_var
        )));
    }
    Ok(HttpClient::new(cfg.clone()))
}

fn parse_noisy(args: &str, default_seed: u64) -> Result<NoisyLocator, CliError> {
    let bad = || CliError::Config(format!("noisy locator expects noisy:<sigma>[,<seed>], got noisy:{args}"));
    let (sigma, seed) = match args.split_once(',') {
        Some((s, seed)) => (s, seed.trim().parse::<u64>().map_err(|_| bad())?),
        None => (args, default_seed),
    };
    let sigma: f64 = sigma.trim().parse().map_err(|_| bad())?;
    NoisyLocator::new(sigma, seed).map_err(CliError::Config)
}

pub fn build_locator(spec: Option<&BackendSpec>, cfg: &CliConfig) -> Result<Box<dyn Locator>, CliError> {
    let spec = spec.ok_or_else(|| CliError::Config("no locator configured (use --locator)".into()))?;
    match spec {
        BackendSpec::Http(b) => Ok(Box::new(HttpLocator(http_client(b, cfg.allow_network, "locator")?))),
        BackendSpec::Builtin(name) => match name.as_str() {
            "oracle" => Ok(Box::new(OracleLocator)),
            "naive" => Ok(Box::new(NaiveLocator)),
            n => match n.strip_prefix("noisy:") {
                Some(args) => Ok(Box::new(parse_noisy(args, cfg.seed)?)),
                None => Err(CliError::Config(format!(
                    "unknown locator {n:?}; expected oracle, naive or noisy:<sigma>[,<seed>]"
                ))),
            },
        },
    }
}

pub fn load_script(path: &Path) -> Result<ScriptBook, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read script {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("script {}: {e}", path.display())))
}

fn builtin_interpreter(name: &str) -> Result<Box<dyn Interpreter>, CliError> {
    if let Some(inner) = name.strip_prefix("always-click:") {
        return Ok(Box::new(AlwaysClick(builtin_interpreter(inner)?)));
    }
    match name.strip_prefix("scripted:") {
        Some(p) if !p.is_empty() => Ok(Box::new(ScriptedInterpreter::new(load_script(Path::new(p))?))),
        _ => Err(CliError::Config(format!(
            "unknown interpreter {name:?}; expected scripted:<path> or always-click:<interpreter>"
        ))),
    }
}

pub fn build_interpreter(spec: Option<&BackendSpec>, cfg: &CliConfig) -> Result<Box<dyn Interpreter>, CliError> {
    let spec = spec.ok_or_else(|| CliError::Config("no interpreter configured (use --interpreter)".into()))?;
    match spec {
        BackendSpec::Http(b) => Ok(Box::new(HttpInterpreter(http_client(b, cfg.allow_network, "interpreter")?))),
        BackendSpec::Builtin(name) => builtin_interpreter(name),
    }
}
