//! Merging result blobs into one table per experiment family.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::artifact::{parse_blob, table_body, Artifact, Table};
use crate::experiment::Validation;

pub struct Report {
    pub text: String,
    pub files: Vec<PathBuf>,
}

/// Result blobs in `dir`, sorted by file name. Other JSON files are skipped.
fn load(dir: &Path) -> Result<Vec<(PathBuf, Artifact)>> {
    let entries = fs::read_dir(dir)
        .map_err(|e| Validation(vec![format!("results: cannot read {}: {e}", dir.display())]))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        match parse_blob(&text) {
            Ok(a) => out.push((p, a)),
            Err(e) => log::info!("skipping {}: {e}", p.display()),
        }
    }
    Ok(out)
}

pub fn report(dir: &Path, out: &Path) -> Result<Report> {
    let blobs = load(dir)?;
    if blobs.is_empty() {
        return Err(Validation(vec![format!(
            "results: no result blobs in {}",
            dir.display()
        )])
        .into());
    }
    let versions: BTreeSet<&str> = blobs.iter().map(|(_, a)| a.meta.version.as_str()).collect();
    let banner = (versions.len() > 1).then(|| {
        format!(
            "WARNING: results come from different code versions ({})",
            versions.iter().copied().collect::<Vec<_>>().join(", ")
        )
    });

    let mut families: BTreeMap<String, (Table, Vec<&Path>)> = BTreeMap::new();
    let mut untabled = Vec::new();
    for (path, a) in &blobs {
        let Some(t) = &a.table else {
            untabled.push(path.as_path());
            continue;
        };
        match families.get_mut(&t.family) {
            Some((merged, sources)) => {
                if merged.columns != t.columns {
                    bail!(
                        "{}: columns of family {} differ from {}",
                        path.display(),
                        t.family,
                        sources[0].display()
                    );
                }
                merged.rows.extend(t.rows.iter().cloned());
                sources.push(path);
            }
            None => {
                families.insert(t.family.clone(), (t.clone(), vec![path.as_path()]));
            }
        }
    }

    let mut text = String::new();
    if let Some(b) = &banner {
        text.push_str(b);
        text.push('\n');
    }
    text.push_str(&format!(
        "{} result blob(s) in {}\n",
        blobs.len(),
        dir.display()
    ));
    let mut files = Vec::new();
    if !families.is_empty() {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    }
    for (family, (table, sources)) in &families {
        let mut csv = String::new();
        if let Some(b) = &banner {
            csv.push_str(&format!("# {b}\n"));
        }
        csv.push_str(&format!(
            "# hk report family={family} sources={}\n",
            sources.len()
        ));
        let body = table_body(table)?;
        csv.push_str(&body);
        let path = out.join(format!("{family}.csv"));
        fs::write(&path, csv)?;
        text.push_str(&format!(
            "\n[{family}] {} source(s), {} row(s) -> {}\n{}",
            sources.len(),
            table.rows.len(),
            path.display(),
            body
        ));
        files.push(path);
    }
    for (path, a) in blobs
        .iter()
        .filter(|(p, _)| untabled.contains(&p.as_path()))
    {
        text.push_str(&format!(
            "\n[{}] {}\n{}\n",
            a.meta.operation,
            path.display(),
            a.summary.trim_end()
        ));
    }
    Ok(Report { text, files })
}
