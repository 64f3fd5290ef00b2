//! Run configuration: JSON file merged with command-line flags, plus the
//! compact model syntax `family:key=value,...`.

use std::fmt;
use std::path::{Path, PathBuf};

use quench_winding::coldatom::{effective_model, ColdAtomSpec};
use quench_winding::cp::CpThresholds;
use quench_winding::models::{DVectorTable, GenericModel};
use quench_winding::{Error, KGrid, ModelSpec};
use serde::Deserialize;

/// Failure of the front end, mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(Error),
    Disagreement(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Disagreement(_) => 2,
            CliError::Core(e) if e.is_io() => 3,
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Core(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Disagreement(m) => write!(f, "disagreement: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub eps_hi: Option<f64>,
    pub eps_lo: Option<f64>,
    pub suspect_low: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub m: Vec<f64>,
    #[serde(default)]
    pub n: Vec<u32>,
    pub t_s: Option<f64>,
    #[serde(default)]
    pub t_so: Vec<f64>,
}

/// Contents of a `--config` file. Every field is optional; flags win.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<String>,
    /// Free-form note; ignored.
    #[allow(dead_code)]
    pub description: Option<String>,
    pub model: Option<String>,
    pub initial: Option<String>,
    #[serde(rename = "final")]
    pub final_model: Option<String>,
    pub grid_n: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub bins: Option<usize>,
    pub shots: Option<u64>,
    pub densities: Option<PathBuf>,
    #[serde(default)]
    pub polarized: bool,
    #[serde(default)]
    pub allow_cross_plane: bool,
    #[serde(default)]
    pub flag_false_cps: bool,
    #[serde(default)]
    pub svg: bool,
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    pub sweep: Option<SweepConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn check_command(&self, name: &str) -> CliResult<()> {
        match &self.command {
            Some(c) if c != name => Err(CliError::Config(format!(
                "config file is for `{c}`, not `{name}`"
            ))),
            _ => Ok(()),
        }
    }
}

pub fn grid(n: Option<usize>) -> CliResult<KGrid> {
    Ok(KGrid::new(n.unwrap_or(KGrid::DEFAULT_POINTS))?)
}

pub fn thresholds(file: &ThresholdConfig, eps_hi: Option<f64>, eps_lo: Option<f64>, suspect_low: Option<f64>) -> CliResult<CpThresholds> {
    let d = CpThresholds::default();
    let th = CpThresholds {
        eps_hi: eps_hi.or(file.eps_hi).unwrap_or(d.eps_hi),
        eps_lo: eps_lo.or(file.eps_lo).unwrap_or(d.eps_lo),
        suspect_low: suspect_low.or(file.suspect_low).unwrap_or(d.suspect_low),
    };
    th.validate()?;
    Ok(th)
}

/// A parsed model argument.
#[derive(Clone)]
pub enum ModelArg {
    Spec(ModelSpec),
    Lattice(ColdAtomSpec),
}

impl ModelArg {
    pub fn spec(&self) -> CliResult<ModelSpec> {
        match self {
            ModelArg::Spec(s) => Ok(s.clone()),
            ModelArg::Lattice(c) => Ok(effective_model(c)?),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ModelArg::Spec(s) => s.to_string(),
            ModelArg::Lattice(c) => format!(
                "coldatom(delta={}, t_s={}, t_so={}, n={}, a={})",
                c.delta, c.t_s, c.t_so, c.n, c.a
            ),
        }
    }
}

/// Parses `qwz:m=1,t_s=2,t_so=1,n=3`, `ssh:t1=0.5,t2=1,n=2`,
/// `coldatom:delta=2,t_s=2,t_so=0.5,n=1` or `table:<path.csv>`.
pub fn parse_model(text: &str) -> CliResult<ModelArg> {
    let (family, rest) = text
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("model {text:?} needs a family prefix like `qwz:`")))?;
    if family.trim() == "table" {
        let path = Path::new(rest.trim());
        let (table, plane) = DVectorTable::from_csv_path(path)?;
        let label = path.display().to_string();
        return Ok(ModelArg::Spec(ModelSpec::Generic(GenericModel::tabulated(label, plane, table))));
    }
    let mut kv = Vec::new();
    for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value in {text:?}, got {item:?}")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{family}.{}: not a number: {v:?}", k.trim())))?;
        kv.push((k.trim().to_string(), v));
    }
    let take = |allowed: &[&str]| -> CliResult<Vec<Option<f64>>> {
        if let Some((k, _)) = kv.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(CliError::Config(format!(
                "{family}: unknown parameter {k:?} (allowed: {})",
                allowed.join(", ")
            )));
        }
        Ok(allowed
            .iter()
            .map(|a| kv.iter().rev().find(|(k, _)| k == a).map(|(_, v)| *v))
            .collect())
    };
    let harmonic = |v: Option<f64>| -> CliResult<u32> {
        match v {
            None => Ok(1),
            Some(x) if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 => Ok(x as u32),
            Some(x) => Err(CliError::Config(format!("{family}.n must be a nonnegative integer, got {x}"))),
        }
    };
    let required = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| CliError::Config(format!("{family}: missing required parameter {name}")))
    };
    match family.trim() {
        "qwz" => {
            let v = take(&["m", "t_s", "t_so", "n"])?;
            let m = required(v[0], "m")?;
            Ok(ModelArg::Spec(ModelSpec::qwz(
                m,
                v[1].unwrap_or(2.0),
                v[2].unwrap_or(1.0),
                harmonic(v[3])?,
            )?))
        }
        "ssh" => {
            let v = take(&["t1", "t2", "n"])?;
            let t1 = required(v[0], "t1")?;
            Ok(ModelArg::Spec(ModelSpec::ssh(t1, v[1].unwrap_or(1.0), harmonic(v[2])?)?))
        }
        "coldatom" => {
            let v = take(&["delta", "t_s", "t_so", "n", "a"])?;
            let spec = ColdAtomSpec {
                delta: required(v[0], "delta")?,
                t_s: v[1].unwrap_or(2.0),
                t_so: v[2].unwrap_or(0.5),
                n: harmonic(v[3])?,
                a: v[4].unwrap_or(1.0),
            };
            spec.validate()?;
            Ok(ModelArg::Lattice(spec))
        }
        other => Err(CliError::Config(format!(
            "unknown model family {other:?} (qwz, ssh, coldatom, table)"
        ))),
    }
}

pub fn model_field(flag: Option<String>, file: &Option<String>, name: &str) -> CliResult<ModelArg> {
    let text = flag
        .or_else(|| file.clone())
        .ok_or_else(|| CliError::Config(format!("missing --{name}")))?;
    parse_model(&text)
}
