//! Experiment configuration: parsing, flag overrides, path resolution and
//! manifests.

use std::fs;
use std::path::{Path, PathBuf};

use graphon::grid::StateGrid;
use graphon::kernel::Kernel;
use graphon::law::InitialLaw;
use graphon::mfgpde::{ActionSet, PicardOptions};
use graphon::model::ModelSpec;
use graphon::nashgap::{Generator, LabelChoice, Quadrature, SweepConfig};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub const COMMANDS: [&str; 8] = [
    "kernel-norms",
    "netgen",
    "lq-solve",
    "lq-verify",
    "mfg-solve",
    "arena-simulate",
    "nashgap-sweep",
    "emp-convergence",
];

/// A kernel given inline or as a path to a JSON kernel file. Paths are
/// replaced by the loaded kernel during resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum KernelSource {
    File(PathBuf),
    Inline(Kernel),
}

impl<'de> Deserialize<'de> for KernelSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(s) => Ok(KernelSource::File(s.into())),
            other => Kernel::deserialize(other).map(KernelSource::Inline).map_err(serde::de::Error::custom),
        }
    }
}

impl KernelSource {
    pub fn kernel(&self) -> &Kernel {
        match self {
            KernelSource::Inline(k) => k,
            KernelSource::File(p) => panic!("kernel file {} was not resolved", p.display()),
        }
    }

    fn resolve(&mut self, base: &Path) -> CliResult<()> {
        if let KernelSource::File(p) = self {
            let path = absolute(base, p);
            let text = fs::read_to_string(&path).map_err(|e| CliError::input(&path, e))?;
            let k: Kernel = serde_json::from_str(&text).map_err(|e| CliError::input(&path, e))?;
            *self = KernelSource::Inline(k);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFormat {
    #[default]
    Dense,
    Edges,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    #[default]
    Exact,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelNorms {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<PathBuf>,
    #[serde(default)]
    pub format: MatrixFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSource>,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub mode: NormMode,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Compare an interaction matrix with this kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<KernelSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Netgen {
    pub n: usize,
    pub seed: u64,
    pub generator: Generator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSource>,
    #[serde(default = "default_label_choice")]
    pub labels: LabelChoice,
    /// Replace the adjacency by its random-walk Laplacian.
    #[serde(default)]
    pub laplacian: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<KernelSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqSolve {
    pub kernel: KernelSource,
    pub c: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub sigma: f64,
    #[serde(rename = "L")]
    pub labels: usize,
    #[serde(default = "graphon::lqflock::identity_map")]
    pub initial: InitialLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqVerify {
    pub sol: PathBuf,
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfgSolve {
    pub model: ModelSpec,
    pub kernel: KernelSource,
    pub initial: InitialLaw,
    pub actions: ActionSet,
    pub states: StateGrid,
    pub time_steps: usize,
    pub labels: usize,
    #[serde(default)]
    pub picard: PicardOptions,
    /// Bins of the product-structure diagnostic; skipped when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_bins: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArenaSimulate {
    pub xi: PathBuf,
    #[serde(default)]
    pub xi_format: MatrixFormat,
    pub labels: PathBuf,
    /// `lq:<solution.json>`, `mfg:<solution dir>` or `constant:<action>`.
    pub profile: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialLaw>,
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Defaults to the first and last time node.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmpLaw {
    /// Closed-form terminal law of an `lq-solve` solution file.
    Lq { sol: PathBuf },
    /// Terminal flow of an `mfg-solve` output directory.
    Mfg { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpConvergence {
    pub kernel: KernelSource,
    pub law: EmpLaw,
    pub ns: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub quadrature: Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    KernelNorms(KernelNorms),
    Netgen(Netgen),
    LqSolve(LqSolve),
    LqVerify(LqVerify),
    MfgSolve(MfgSolve),
    ArenaSimulate(ArenaSimulate),
    NashgapSweep(SweepConfig),
    EmpConvergence(EmpConvergence),
}

fn default_resolution() -> usize {
    16
}

fn default_restarts() -> usize {
    64
}

fn default_label_choice() -> LabelChoice {
    LabelChoice::Midpoint
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::KernelNorms(_) => "kernel-norms",
            Command::Netgen(_) => "netgen",
            Command::LqSolve(_) => "lq-solve",
            Command::LqVerify(_) => "lq-verify",
            Command::MfgSolve(_) => "mfg-solve",
            Command::ArenaSimulate(_) => "arena-simulate",
            Command::NashgapSweep(_) => "nashgap-sweep",
            Command::EmpConvergence(_) => "emp-convergence",
        }
    }

    /// File name of the main artifact, used when `out` names a file.
    pub fn primary_artifact(&self) -> Option<&'static str> {
        match self {
            Command::LqSolve(_) => Some("sol.json"),
            Command::LqVerify(_) => Some("residual.csv"),
            Command::NashgapSweep(_) => Some("report.csv"),
            Command::EmpConvergence(_) => Some("emp.csv"),
            _ => None,
        }
    }

    /// Makes input paths absolute against `base` and inlines kernel files.
    fn resolve(&mut self, base: &Path) -> CliResult<()> {
        match self {
            Command::KernelNorms(c) => {
                if let Some(m) = &mut c.matrix {
                    *m = absolute(base, m);
                }
                for k in [&mut c.kernel, &mut c.reference].into_iter().flatten() {
                    k.resolve(base)?;
                }
            }
            Command::Netgen(c) => {
                for k in [&mut c.kernel, &mut c.reference].into_iter().flatten() {
                    k.resolve(base)?;
                }
            }
            Command::LqSolve(c) => c.kernel.resolve(base)?,
            Command::LqVerify(c) => c.sol = absolute(base, &c.sol),
            Command::MfgSolve(c) => c.kernel.resolve(base)?,
            Command::ArenaSimulate(c) => {
                c.xi = absolute(base, &c.xi);
                c.labels = absolute(base, &c.labels);
                if let Some((kind, arg)) = c.profile.split_once(':') {
                    if kind == "lq" || kind == "mfg" {
                        c.profile = format!("{kind}:{}", absolute(base, Path::new(arg)).display());
                    }
                }
            }
            Command::NashgapSweep(_) => {}
            Command::EmpConvergence(c) => {
                c.kernel.resolve(base)?;
                match &mut c.law {
                    EmpLaw::Lq { sol } => *sol = absolute(base, sol),
                    EmpLaw::Mfg { dir } => *dir = absolute(base, dir),
                }
            }
        }
        Ok(())
    }
}

/// Whether the raw config describes a command that draws random numbers.
fn is_stochastic(command: &str, obj: &Map<String, Value>) -> bool {
    match command {
        "kernel-norms" => obj.get("mode").and_then(Value::as_str) == Some("heuristic") || obj.contains_key("reference"),
        "netgen" | "lq-verify" | "arena-simulate" | "nashgap-sweep" | "emp-convergence" => true,
        _ => false,
    }
}

/// Flag overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// `dotted.key=value`; the value is parsed as JSON, falling back to a
    /// plain string.
    pub set: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub command: Command,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

fn set_path(root: &mut Value, key: &str, value: Value) -> CliResult<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("cannot set `{key}`: `{part}` is inside a non-object")))?;
        if k + 1 == parts.len() {
            obj.insert((*part).to_owned(), value);
            return Ok(());
        }
        cur = obj.entry((*part).to_owned()).or_insert_with(|| Value::Object(Map::new()));
    }
    Err(CliError::Usage(format!("empty override key in `{key}`")))
}

/// Reads a config or manifest file.
pub fn read_config(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::input(path, e))?;
    // a manifest carries the resolved config under `config`
    match v {
        Value::Object(mut m) if m.contains_key("toolkit") && m.contains_key("config") => {
            Ok(m.remove("config").expect("checked"))
        }
        other => Ok(other),
    }
}

/// Applies overrides, checks the command and seed, and resolves paths.
/// Relative input paths are taken against `base`; a relative `out` from the
/// config as well, a relative `--out` against the working directory.
pub fn resolve(mut raw: Value, base: &Path, overrides: &Overrides) -> CliResult<Resolved> {
    if let Some(seed) = overrides.seed {
        set_path(&mut raw, "seed", Value::from(seed))?;
    }
    for s in &overrides.set {
        let (key, val) =
            s.split_once('=').ok_or_else(|| CliError::Usage(format!("override `{s}` is not key=value")))?;
        let parsed = serde_json::from_str(val).unwrap_or_else(|_| Value::String(val.to_owned()));
        set_path(&mut raw, key, parsed)?;
    }
    let obj = raw.as_object_mut().ok_or_else(|| CliError::Schema("config must be a JSON object".into()))?;
    let config_out = obj.remove("out");
    let threads = match obj.remove("threads") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .filter(|&t| t > 0)
                .ok_or_else(|| CliError::Schema(format!("`threads` must be a positive integer, got {v}")))?
                as usize,
        ),
    };
    let command = match obj.get("command") {
        Some(Value::String(c)) => c.clone(),
        Some(other) => return Err(CliError::Schema(format!("`command` must be a string, got {other}"))),
        None => return Err(CliError::Schema("missing field `command`".into())),
    };
    if !COMMANDS.contains(&command.as_str()) {
        return Err(CliError::UnknownCommand(command));
    }
    if is_stochastic(&command, obj) && obj.get("seed").is_none_or(Value::is_null) {
        return Err(CliError::MissingSeed(command));
    }
    let mut cmd: Command = serde_json::from_value(raw).map_err(|e| CliError::Schema(e.to_string()))?;
    cmd.resolve(base)?;
    let out = match (&overrides.out, config_out) {
        (Some(o), _) => o.clone(),
        (None, Some(Value::String(o))) => absolute(base, Path::new(&o)),
        (None, Some(other)) => return Err(CliError::Schema(format!("`out` must be a path string, got {other}"))),
        (None, None) => return Err(CliError::Usage("no output location; set `out` in the config or pass --out".into())),
    };
    Ok(Resolved { command: cmd, out, threads })
}

/// Manifest written next to every run's outputs. The output location and
/// thread count are left out so reruns elsewhere produce the same file.
pub fn manifest(cmd: &Command) -> CliResult<String> {
    let v = serde_json::json!({
        "toolkit": "graphon",
        "version": env!("CARGO_PKG_VERSION"),
        "config": cmd,
    });
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| CliError::Schema(e.to_string()))?;
    s.push('\n');
    Ok(s)
}
