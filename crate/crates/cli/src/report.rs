//! Report rendering, input digests and run manifests.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use probe_oracle::StudyConfig;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Raised for invalid flag combinations found after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// An input file that could not be read or parsed.
#[derive(Debug)]
pub struct InputError {
    pub path: PathBuf,
    pub reason: String,
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cannot load {}: {}", self.path.display(), self.reason)
    }
}

impl std::error::Error for InputError {}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Digests of every file a run read, in read order.
#[derive(Debug, Default)]
pub struct Inputs {
    pub files: Vec<InputDigest>,
}

impl Inputs {
    pub fn read(&mut self, role: &str, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| InputError {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        self.files.push(InputDigest {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    /// Path-free summary: one digest per role, combining the per-file
    /// digests in read order when a role has several files.
    pub fn summary(&self) -> Vec<(String, String)> {
        let mut roles: Vec<&str> = Vec::new();
        for f in &self.files {
            if !roles.contains(&f.role.as_str()) {
                roles.push(&f.role);
            }
        }
        roles
            .into_iter()
            .map(|role| {
                let files: Vec<&InputDigest> = self.files.iter().filter(|f| f.role == role).collect();
                let value = if let [one] = files.as_slice() {
                    format!("sha256:{}", one.sha256)
                } else {
                    let joined: String = files.iter().map(|f| f.sha256.as_str()).collect::<Vec<_>>().join("\n");
                    format!("{}-files-sha256:{}", files.len(), sha256_hex(joined.as_bytes()))
                };
                (role.to_string(), value)
            })
            .collect()
    }
}

/// Rows of display strings under a header.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in std::iter::once(&self.header).chain(&self.rows) {
            let cells: Vec<String> = line.iter().map(|c| csv_cell(c)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn csv_cell(c: &str) -> String {
    if c.contains([',', '"', '\n']) {
        format!("\"{}\"", c.replace('"', "\"\""))
    } else {
        c.to_string()
    }
}

pub fn pct(v: f64) -> String {
    format!("{v:.2}")
}

pub fn num(v: f64) -> String {
    format!("{v:.6}")
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// What a subcommand produced, before rendering.
pub enum Body {
    /// A display table for CSV plus the full-precision result for JSON.
    Table { table: Table, result: Value },
    /// A finished file whose format is fixed (probe matrices); CSV bodies get
    /// the provenance line prepended.
    Raw { text: String, csv: bool },
}

pub struct Report {
    pub command: String,
    pub params: Vec<(String, String)>,
    pub body: Body,
}

pub struct Run<'a> {
    pub argv: &'a [String],
    pub cfg: &'a StudyConfig,
    pub threads: usize,
    pub json: bool,
    pub out: Option<&'a Path>,
    pub inputs: &'a Inputs,
    pub started: std::time::Instant,
}

fn manifest_name(out: Option<&Path>) -> String {
    match out {
        Some(p) => format!(
            "{}.manifest.json",
            p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
        ),
        None => "stderr".into(),
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn config_pairs(cfg: &StudyConfig) -> Vec<(String, String)> {
    vec![
        ("seed".into(), cfg.seed.to_string()),
        ("folds".into(), cfg.folds.to_string()),
        ("control_draws".into(), cfg.control_draws.to_string()),
        ("single_draw".into(), cfg.single_draw.to_string()),
        ("control_sigma_sq".into(), cfg.control_sigma_sq.to_string()),
        ("subset_cap".into(), cfg.subset_cap.to_string()),
    ]
}

fn pairs(p: &[(String, String)]) -> String {
    p.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}

/// The `#` line heading every CSV report. Depends only on the tool version,
/// the command, the configuration and the input contents.
pub fn provenance_line(report: &Report, run: &Run<'_>) -> String {
    let mut line = format!("# probe-oracle {VERSION} {}", report.command);
    line.push_str(&format!(" | config {}", pairs(&config_pairs(run.cfg))));
    if !report.params.is_empty() {
        line.push_str(&format!(" | params {}", pairs(&report.params)));
    }
    let inputs = run.inputs.summary();
    if !inputs.is_empty() {
        line.push_str(&format!(" | inputs {}", pairs(&inputs)));
    }
    line.push_str(&format!(" | manifest {}\n", manifest_name(run.out)));
    line
}

fn params_json(p: &[(String, String)]) -> Value {
    Value::Object(p.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect())
}

pub fn render(report: &Report, run: &Run<'_>) -> Result<String> {
    Ok(match &report.body {
        Body::Raw { text, csv: true } => provenance_line(report, run) + text,
        Body::Raw { text, csv: false } => text.clone(),
        Body::Table { table, result } if run.json => {
            let inputs: Vec<Value> = run
                .inputs
                .summary()
                .into_iter()
                .map(|(role, digest)| json!({ "role": role, "digest": digest }))
                .collect();
            let doc = json!({
                "tool": "probe-oracle",
                "version": VERSION,
                "command": report.command,
                "config": run.cfg,
                "params": params_json(&report.params),
                "inputs": inputs,
                "manifest": manifest_name(run.out),
                "columns": table.header,
                "result": result,
            });
            let mut s = serde_json::to_string_pretty(&doc)?;
            s.push('\n');
            s
        }
        Body::Table { table, .. } => provenance_line(report, run) + &table.to_csv(),
    })
}

/// Writes the report, then its manifest.
pub fn emit(report: &Report, run: &Run<'_>) -> Result<()> {
    let text = render(report, run)?;
    let mut outputs = Vec::new();
    match run.out {
        Some(path) => {
            fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
            outputs.push(json!({ "path": path.display().to_string(), "sha256": sha256_hex(text.as_bytes()) }));
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            outputs.push(json!({ "path": "-", "sha256": sha256_hex(text.as_bytes()) }));
        }
    }
    write_manifest(&report.command, &report.params, outputs, run, run.out.map(manifest_path))
}

pub fn write_manifest(
    command: &str,
    params: &[(String, String)],
    outputs: Vec<Value>,
    run: &Run<'_>,
    path: Option<PathBuf>,
) -> Result<()> {
    let manifest = json!({
        "tool": "probe-oracle",
        "version": VERSION,
        "command": command,
        "argv": run.argv,
        "config": run.cfg,
        "params": params_json(params),
        "seed": run.cfg.seed,
        "threads": run.threads,
        "inputs": run.inputs.files,
        "outputs": outputs,
        "wall_time_seconds": run.started.elapsed().as_secs_f64(),
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    match path {
        Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stderr().write_all(text.as_bytes())?,
    }
    Ok(())
}
