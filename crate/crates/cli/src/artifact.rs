//! Result envelopes, content-addressed caching and file emission.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use hk_core::HkError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub operation: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub wall_time_s: f64,
    /// Set when the run stopped early (budget exhausted); `result` is then
    /// null and `error` says why.
    pub partial: bool,
}

/// Rows destined for CSV; every cell is pre-formatted so that the file is a
/// pure function of the stored blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table {
    pub family: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    pub meta: Meta,
    pub inputs: Value,
    pub result: Value,
    pub table: Option<Table>,
    pub summary: String,
    pub error: Option<String>,
}

/// What a command computes before it is wrapped in an [`Artifact`].
pub struct Outcome {
    pub result: Value,
    pub table: Option<Table>,
    pub summary: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the operation and its inputs. `serde_json` maps are ordered by
/// key, so the serialization is canonical.
pub fn config_hash(operation: &str, inputs: &Value) -> String {
    let canonical = json!({ "operation": operation, "inputs": inputs });
    sha256_hex(canonical.to_string().as_bytes())
}

fn cache_key(operation: &str, inputs: &Value, version: &str) -> String {
    let canonical = json!({ "operation": operation, "inputs": inputs, "version": version });
    sha256_hex(canonical.to_string().as_bytes())
}

pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

pub struct Cache {
    dir: Option<PathBuf>,
}

impl Cache {
    /// `HK_CACHE_DIR`, else `$XDG_CACHE_HOME/hk`, else `$HOME/.cache/hk`.
    pub fn from_env(disabled: bool) -> Self {
        if disabled {
            return Cache { dir: None };
        }
        let env = |k: &str| {
            std::env::var_os(k)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        };
        let dir = env("HK_CACHE_DIR")
            .or_else(|| env("XDG_CACHE_HOME").map(|p| p.join("hk")))
            .or_else(|| env("HOME").map(|p| p.join(".cache").join("hk")));
        Cache { dir }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    fn get(&self, key: &str) -> Option<String> {
        let text = fs::read_to_string(self.path(key)?).ok()?;
        // A blob that no longer parses is treated as a miss.
        serde_json::from_str::<Artifact>(&text).ok()?;
        Some(text)
    }

    fn put(&self, key: &str, blob: &str) {
        let Some(path) = self.path(key) else { return };
        let write = || -> std::io::Result<()> {
            fs::create_dir_all(path.parent().expect("cache file has a parent"))?;
            let tmp = path.with_extension(format!("tmp{}", std::process::id()));
            fs::write(&tmp, blob)?;
            fs::rename(&tmp, &path)
        };
        if let Err(e) = write() {
            log::warn!("could not write cache entry {}: {e}", path.display());
        }
    }
}

/// Runs `compute` unless the cache already holds a result for the same
/// operation, inputs and code version; returns the JSON blob.
///
/// On budget exhaustion a partial blob is returned alongside the error so
/// the caller can still write it out.
pub fn execute<F>(
    cache: &Cache,
    operation: &str,
    inputs: Value,
    seed: Option<u64>,
    compute: F,
) -> Run
where
    F: FnOnce() -> Result<Outcome>,
{
    let key = cache_key(operation, &inputs, VERSION);
    if let Some(blob) = cache.get(&key) {
        log::info!("cache hit for {operation} ({key})");
        return Run::Done(blob);
    }
    let hash = config_hash(operation, &inputs);
    let start = Instant::now();
    let outcome = compute();
    let meta = |partial| Meta {
        tool: "hk".into(),
        version: VERSION.into(),
        operation: operation.into(),
        config_hash: hash.clone(),
        seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        partial,
    };
    match outcome {
        Ok(out) => {
            let artifact = Artifact {
                meta: meta(false),
                inputs,
                result: out.result,
                table: out.table,
                summary: out.summary,
                error: None,
            };
            let blob = to_blob(&artifact);
            cache.put(&key, &blob);
            Run::Done(blob)
        }
        Err(e) if is_budget(&e) => {
            let artifact = Artifact {
                meta: meta(true),
                inputs,
                result: Value::Null,
                table: None,
                summary: format!("partial: {e:#}"),
                error: Some(format!("{e:#}")),
            };
            Run::Partial(to_blob(&artifact), e)
        }
        Err(e) => Run::Failed(e),
    }
}

pub enum Run {
    Done(String),
    Partial(String, anyhow::Error),
    Failed(anyhow::Error),
}

fn to_blob(a: &Artifact) -> String {
    let mut s = serde_json::to_string_pretty(a).expect("artifacts serialize");
    s.push('\n');
    s
}

pub fn is_budget(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(
            c.downcast_ref::<HkError>(),
            Some(HkError::BudgetExceeded { .. })
        )
    })
}

pub fn parse_blob(text: &str) -> Result<Artifact> {
    Ok(serde_json::from_str(text)?)
}

fn meta_line(meta: &Meta) -> String {
    format!(
        "# hk {} operation={} config_hash={} seed={} wall_time_s={} partial={}",
        meta.version,
        meta.operation,
        meta.config_hash,
        meta.seed.map_or("none".to_string(), |s| s.to_string()),
        meta.wall_time_s,
        meta.partial
    )
}

/// CSV header, rows and family footer, without metadata lines.
pub fn table_body(table: &Table) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    let mut out = String::from_utf8(w.into_inner().context("flushing CSV")?)?;
    for line in footer(table) {
        out.push_str(&format!("# {line}\n"));
    }
    Ok(out)
}

pub fn render_csv(a: &Artifact) -> Result<Option<String>> {
    let Some(table) = &a.table else {
        return Ok(None);
    };
    Ok(Some(format!(
        "{}\n{}",
        meta_line(&a.meta),
        table_body(table)?
    )))
}

pub fn render_summary(a: &Artifact) -> String {
    format!("{}\n{}\n", meta_line(&a.meta), a.summary.trim_end())
}

/// Family-specific footer lines computed from the rows.
pub fn footer(table: &Table) -> Vec<String> {
    let col = |name: &str| table.columns.iter().position(|c| c == name);
    let values = |i: usize| -> Vec<f64> {
        table
            .rows
            .iter()
            .filter_map(|r| r.get(i)?.parse::<f64>().ok())
            .collect()
    };
    match table.family.as_str() {
        "minor-decay" => {
            let (Some(q), Some(s)) = (col("Q"), col("sup")) else {
                return vec![];
            };
            let (q, s) = (values(q), values(s));
            if q.len() < 2 || q.len() != s.len() {
                return vec![];
            }
            let lq: Vec<f64> = q.iter().map(|v| v.ln()).collect();
            let ls: Vec<f64> = s.iter().map(|v| v.ln()).collect();
            vec![format!(
                "fitted slope (log sup vs log Q): {}",
                format_f64(hk_core::arith::ls_slope(&lq, &ls))
            )]
        }
        "thm21" => {
            let Some(r) = col("ratio") else { return vec![] };
            let r = values(r);
            if r.is_empty() {
                return vec![];
            }
            let hi = r.iter().copied().fold(f64::MIN, f64::max);
            let lo = r.iter().copied().fold(f64::MAX, f64::min);
            vec![format!("ratio band (max/min): {}", format_f64(hi / lo))]
        }
        "vinogradov" => {
            let (Some(x), Some(j)) = (col("X"), col("J")) else {
                return vec![];
            };
            let (x, j) = (values(x), values(j));
            if x.len() < 2 || x.len() != j.len() || j.iter().any(|v| *v <= 0.0) {
                return vec![];
            }
            let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
            let lj: Vec<f64> = j.iter().map(|v| v.ln()).collect();
            vec![format!(
                "fitted slope (log J vs log X): {}",
                format_f64(hk_core::arith::ls_slope(&lx, &lj))
            )]
        }
        _ => vec![],
    }
}

/// Writes `<stem>.json`, `<stem>.csv` (when there is a table) and
/// `<stem>.txt` into `dir`.
pub fn write_files(dir: &Path, stem: &str, blob: &str) -> Result<Vec<PathBuf>> {
    let a = parse_blob(blob)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let json = dir.join(format!("{stem}.json"));
    fs::write(&json, blob)?;
    written.push(json);
    if let Some(csv) = render_csv(&a)? {
        let path = dir.join(format!("{stem}.csv"));
        fs::write(&path, csv)?;
        written.push(path);
    }
    let txt = dir.join(format!("{stem}.txt"));
    fs::write(&txt, render_summary(&a))?;
    written.push(txt);
    Ok(written)
}
