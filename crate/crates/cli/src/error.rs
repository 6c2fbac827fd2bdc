use std::fmt;
use std::path::PathBuf;

use serde_json::{json, Value};

#[derive(Debug)]
pub enum CliError {
    Core(graphon::Error),
    UnknownCommand(String),
    Schema(String),
    MissingSeed(String),
    Input { path: PathBuf, reason: String },
    Usage(String),
}

impl CliError {
    pub fn input(path: impl Into<PathBuf>, reason: impl fmt::Display) -> Self {
        CliError::Input { path: path.into(), reason: reason.to_string() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::UnknownCommand(_) => "unknown_command",
            CliError::Schema(_) => "schema",
            CliError::MissingSeed(_) => "missing_seed",
            CliError::Input { .. } => "input",
            CliError::Usage(_) => "usage",
        }
    }

    /// Configuration problems exit with 2, failures while running with 1.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(_) | CliError::Input { .. } => 1,
            _ => 2,
        }
    }

    pub fn record(&self) -> Value {
        let mut rec = json!({ "kind": self.kind(), "message": self.to_string() });
        match self {
            CliError::Core(graphon::Error::Solvability { norm, bound, resolution }) => {
                rec["condition"] = json!("||W||_L2 < 1 + (cT)^-1");
                rec["norm"] = json!(norm);
                rec["bound"] = json!(bound);
                rec["resolution"] = json!(resolution);
            }
            CliError::Core(graphon::Error::MassDrift { step, label, drift }) => {
                rec["step"] = json!(step);
                rec["label"] = json!(label);
                rec["drift"] = json!(drift);
            }
            CliError::Input { path, .. } => rec["path"] = json!(path),
            _ => {}
        }
        json!({ "error": rec })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::UnknownCommand(c) => write!(
                f,
                "unknown command `{c}`; expected one of kernel-norms, netgen, lq-solve, lq-verify, \
                 mfg-solve, arena-simulate, nashgap-sweep, emp-convergence"
            ),
            CliError::Schema(m) => write!(f, "invalid config: {m}"),
            CliError::MissingSeed(c) => write!(f, "command `{c}` is stochastic and needs an explicit `seed`"),
            CliError::Input { path, reason } => write!(f, "{}: {reason}", path.display()),
            CliError::Usage(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<graphon::Error> for CliError {
    fn from(e: graphon::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
