use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const DEFAULT_OUT: &str = "horolab-runs";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Int,
    Float,
    Text,
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: Kind,
    pub default: &'static str,
    pub help: &'static str,
}

pub const fn p(name: &'static str, kind: Kind, default: &'static str, help: &'static str) -> ParamSpec {
    ParamSpec { name, kind, default, help }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub params: BTreeMap<String, Value>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub baseline: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    experiment: Option<String>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    baseline: Option<PathBuf>,
    #[serde(default)]
    params: toml::Table,
}

/// Resolved parameters of one run.
#[derive(Debug, Clone)]
pub struct Params(pub BTreeMap<String, Value>);

impl Params {
    pub fn f64(&self, key: &str) -> f64 {
        self.0[key].as_f64().expect("schema-checked float")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.0[key].as_u64().expect("schema-checked integer") as usize
    }

    pub fn text(&self, key: &str) -> &str {
        self.0[key].as_str().expect("schema-checked text")
    }
}

fn parse_value(spec: &ParamSpec, raw: &str, path: &str) -> Result<Value, CliError> {
    let bad = |what: &str| CliError::Usage(format!("{path}: expected {what}, got {raw:?}"));
    match spec.kind {
        Kind::Int => raw.parse::<u64>().map(Value::from).map_err(|_| bad("a nonnegative integer")),
        Kind::Float => match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Value::from(v)),
            _ => Err(bad("a finite number")),
        },
        Kind::Text => Ok(Value::from(raw)),
    }
}

fn toml_value(spec: &ParamSpec, v: &toml::Value, path: &str) -> Result<Value, CliError> {
    let raw = match v {
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::String(s) => s.clone(),
        other => return Err(CliError::Usage(format!("{path}: unsupported value {other}"))),
    };
    parse_value(spec, &raw, path)
}

/// Splits `--key value` and `--key=value` pairs.
fn flag_pairs(args: &[String]) -> Result<(Option<String>, Vec<(String, String)>), CliError> {
    let mut experiment = None;
    let mut pairs = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        if let Some(flag) = a.strip_prefix("--") {
            if let Some((k, v)) = flag.split_once('=') {
                pairs.push((k.to_string(), v.to_string()));
                i += 1;
            } else {
                let v = args.get(i + 1).ok_or_else(|| CliError::Usage(format!("flag --{flag} needs a value")))?;
                pairs.push((flag.to_string(), v.clone()));
                i += 2;
            }
        } else if experiment.is_none() {
            experiment = Some(a.clone());
            i += 1;
        } else {
            return Err(CliError::Usage(format!("unexpected argument {a:?}")));
        }
    }
    Ok((experiment, pairs))
}

/// Resolves a run configuration: defaults, then the config file, then
/// `HOROLAB_OUT` for the output directory, then flags.
pub fn resolve(args: &[String], env_out: Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    let (positional, pairs) = flag_pairs(args)?;
    let mut file = ConfigFile::default();
    if let Some((_, path)) = pairs.iter().find(|(k, _)| k == "config") {
        file = load_file(Path::new(path))?;
    }
    let name = positional
        .or(file.experiment.clone())
        .ok_or_else(|| CliError::Usage("no experiment given; see `horolab list`".into()))?;
    let spec = crate::experiments::find(&name)
        .ok_or_else(|| CliError::Usage(format!("unknown experiment {name:?}; see `horolab list`")))?;
    let mut params = BTreeMap::new();
    for ps in spec.params {
        params.insert(ps.name.to_string(), parse_value(ps, ps.default, ps.name).expect("valid default"));
    }
    for (k, v) in &file.params {
        let path = format!("params.{k}");
        let ps = spec.params.iter().find(|p| p.name == k).ok_or_else(|| CliError::Usage(format!("{path}: unknown key")))?;
        params.insert(k.clone(), toml_value(ps, v, &path)?);
    }
    let mut seed = file.seed.unwrap_or(DEFAULT_SEED);
    let mut output_dir = env_out.or(file.output_dir).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut baseline = file.baseline;
    for (k, v) in pairs {
        match k.as_str() {
            "config" => {}
            "seed" => seed = v.parse().map_err(|_| CliError::Usage(format!("--seed: expected an integer, got {v:?}")))?,
            "out" => output_dir = PathBuf::from(v),
            "baseline" => baseline = Some(PathBuf::from(v)),
            _ => {
                let ps = spec
                    .params
                    .iter()
                    .find(|p| p.name == k)
                    .ok_or_else(|| CliError::Usage(format!("--{k}: unknown flag for {name}")))?;
                params.insert(k.clone(), parse_value(ps, &v, &format!("--{k}"))?);
            }
        }
    }
    Ok(ExperimentConfig { experiment: name, params, seed, output_dir, baseline })
}

fn load_file(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message())))
}
