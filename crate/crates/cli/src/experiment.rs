//! Strict JSON experiment configurations and their runners.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hk_core::circle::{
    minor_arc_decay_experiment, scaled_minor_containment, theorem21_inequality_experiment,
    w4_main_term_experiment, MainTermConfig, MinorDecayConfig, Theorem21Config,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifact::{format_f64, Outcome, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Sampled sup of the Weyl sum over the minor arcs for a list of `Q`.
    MinorDecay,
    /// The shift inequality on `m(Q)` for a list of `Q`.
    Thm21,
    /// `s * m(Q)` containment for a list of `Q`; `s` is the dilation factor.
    Containment,
    /// Exact counts against the main term for a planted family.
    W4Main,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MinorDecay => "minor-decay",
            ExperimentKind::Thm21 => "thm21",
            ExperimentKind::Containment => "containment",
            ExperimentKind::W4Main => "w4-main",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub experiment: ExperimentKind,
    pub s: usize,
    pub k: usize,
    #[serde(rename = "X", default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(rename = "Q_list", default, skip_serializing_if = "Option::is_none")]
    pub q_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub climb_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integral_samples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Field-level validation failures.
#[derive(Debug)]
pub struct Validation(pub Vec<String>);

impl fmt::Display for Validation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "validation failed:")?;
        for m in &self.0 {
            write!(f, "\n  {m}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Validation {}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Validation(vec![format!("config: cannot read {}: {e}", path.display())])
        })?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Validation(vec![format!("config: {e}")]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Validation> {
        use ExperimentKind::*;
        let mut errs = Vec::new();
        let kind = self.experiment.name();
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            errs.push("name: must be non-empty and use only [A-Za-z0-9._-]".to_string());
        }
        if self.k < 2 {
            errs.push("k: must be at least 2".to_string());
        }
        if self.s == 0 {
            errs.push("s: must be positive".to_string());
        }
        let needs_x = matches!(self.experiment, MinorDecay | Thm21 | Containment);
        match (needs_x, self.x) {
            (true, None) => errs.push(format!("X: required for {kind}")),
            (true, Some(x)) if !(x.is_finite() && x >= 1.0) => {
                errs.push("X: must be finite and at least 1".into())
            }
            (false, Some(_)) => errs.push(format!("X: not used by {kind}")),
            _ => {}
        }
        match (needs_x, &self.q_list) {
            (true, None) => errs.push(format!("Q_list: required for {kind}")),
            (true, Some(q)) => {
                if q.is_empty() || q.iter().any(|v| !(v.is_finite() && *v >= 1.0)) {
                    errs.push("Q_list: values must be finite and at least 1".into());
                }
                if !q.windows(2).all(|w| w[0] < w[1]) {
                    errs.push("Q_list: must be strictly increasing".into());
                }
            }
            (false, Some(_)) => errs.push(format!("Q_list: not used by {kind}")),
            _ => {}
        }
        match (self.experiment, &self.scales) {
            (W4Main, None) => errs.push("scales: required for w4-main".into()),
            (W4Main, Some(v)) if v.len() < 2 || !v.windows(2).all(|w| w[0] < w[1]) => {
                errs.push("scales: need at least two strictly increasing values".into())
            }
            (W4Main, _) | (_, None) => {}
            (_, Some(_)) => errs.push(format!("scales: not used by {kind}")),
        }
        if let Some(h) = &self.h {
            if !matches!(self.experiment, MinorDecay | Thm21) {
                errs.push(format!("h: not used by {kind}"));
            } else if h.len() != self.k {
                errs.push(format!(
                    "h: must have k = {} entries, got {}",
                    self.k,
                    h.len()
                ));
            }
        }
        let only = |field: &str, set: bool, allowed: &[ExperimentKind], errs: &mut Vec<String>| {
            if set && !allowed.contains(&self.experiment) {
                errs.push(format!("{field}: not used by {kind}"));
            }
        };
        only(
            "samples",
            self.samples.is_some(),
            &[MinorDecay, Thm21, Containment],
            &mut errs,
        );
        only(
            "climb_steps",
            self.climb_steps.is_some(),
            &[MinorDecay],
            &mut errs,
        );
        only(
            "integral_samples",
            self.integral_samples.is_some(),
            &[MinorDecay],
            &mut errs,
        );
        only(
            "family_size",
            self.family_size.is_some(),
            &[W4Main],
            &mut errs,
        );
        only("budget", self.budget.is_some(), &[W4Main], &mut errs);
        if self.samples == Some(0) {
            errs.push("samples: must be positive".into());
        }
        if self.family_size == Some(0) {
            errs.push("family_size: must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Validation(errs))
        }
    }

    /// The seed actually used, after defaults.
    pub fn effective_seed(&self) -> u64 {
        match self.experiment {
            ExperimentKind::W4Main => self
                .seed
                .unwrap_or_else(|| MainTermConfig::new(self.s, self.k, vec![]).seed),
            _ => self.seed.unwrap_or(0),
        }
    }

    /// Inputs that determine the result; the output path is excluded.
    pub fn inputs(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.out = None;
        c.seed = Some(self.effective_seed());
        serde_json::to_value(c).expect("configs serialize")
    }
}

fn strings<T: ToString>(v: impl IntoIterator<Item = T>) -> Vec<String> {
    v.into_iter().map(|x| x.to_string()).collect()
}

pub fn run(cfg: &ExperimentConfig, hash: &str) -> Result<Outcome> {
    let seed = cfg.effective_seed();
    match cfg.experiment {
        ExperimentKind::MinorDecay => {
            let x = cfg.x.expect("validated");
            let mut c = MinorDecayConfig::new(
                cfg.s,
                cfg.k,
                x,
                cfg.q_list.clone().expect("validated"),
                cfg.h.clone().unwrap_or_else(|| vec![0; cfg.k]),
            );
            c.seed = seed;
            if let Some(v) = cfg.samples {
                c.samples = v;
            }
            if let Some(v) = cfg.climb_steps {
                c.climb_steps = v;
            }
            if let Some(v) = cfg.integral_samples {
                c.integral_samples = v;
            }
            let r = minor_arc_decay_experiment(&c).context("minor-arc decay experiment")?;
            let rows = r
                .rows
                .iter()
                .map(|row| {
                    let (re, im, hw) =
                        row.integral
                            .map_or((String::new(), String::new(), String::new()), |e| {
                                (
                                    format_f64(e.value.re),
                                    format_f64(e.value.im),
                                    format_f64(e.half_width),
                                )
                            });
                    vec![
                        hash.to_string(),
                        format_f64(row.q_bound),
                        format_f64(row.sup),
                        format_f64(row.reference),
                        format_f64(row.major_measure),
                        format_f64(row.union_bound),
                        re,
                        im,
                        hw,
                    ]
                })
                .collect();
            let summary = format!(
                "minor-arc decay, k = {}, X = {}: sampled sup {} over Q = {}; slope {:.4}, strictly decreasing: {}",
                cfg.k,
                x,
                strings(r.rows.iter().map(|r| format!("{:.2}", r.sup))).join(", "),
                strings(r.rows.iter().map(|r| r.q_bound)).join(", "),
                r.sup_slope,
                r.strictly_decreasing
            );
            Ok(Outcome {
                result: serde_json::to_value(&r)?,
                table: Some(Table {
                    family: "minor-decay".into(),
                    columns: strings([
                        "config_hash",
                        "Q",
                        "sup",
                        "reference",
                        "major_measure",
                        "union_bound",
                        "integral_re",
                        "integral_im",
                        "integral_half_width",
                    ]),
                    rows,
                }),
                summary,
            })
        }
        ExperimentKind::Thm21 => {
            let c = Theorem21Config {
                s: cfg.s,
                k: cfg.k,
                x: cfg.x.expect("validated"),
                q_list: cfg.q_list.clone().expect("validated"),
                h: cfg.h.clone().unwrap_or_else(|| vec![0; cfg.k]),
                samples: cfg.samples.unwrap_or(1 << 14),
                seed,
            };
            let r = theorem21_inequality_experiment(&c).context("shift-inequality experiment")?;
            let rows = c
                .q_list
                .iter()
                .zip(&r.rows)
                .map(|(q, row)| {
                    vec![
                        hash.to_string(),
                        format_f64(*q),
                        format_f64(row.lhs),
                        format_f64(row.lhs_half_width),
                        format_f64(row.moment_double),
                        format_f64(row.moment_dilated),
                        format_f64(row.rhs),
                        row.ratio.map(format_f64).unwrap_or_default(),
                    ]
                })
                .collect();
            let summary = format!(
                "shift inequality, s = {}, k = {}, X = {}: LHS/RHS band {:.3}, non-increasing: {}",
                c.s, c.k, c.x, r.band, r.non_increasing
            );
            Ok(Outcome {
                result: serde_json::to_value(&r)?,
                table: Some(Table {
                    family: "thm21".into(),
                    columns: strings([
                        "config_hash",
                        "Q",
                        "lhs",
                        "lhs_half_width",
                        "moment_double",
                        "moment_dilated",
                        "rhs",
                        "ratio",
                    ]),
                    rows,
                }),
                summary,
            })
        }
        ExperimentKind::Containment => {
            let x = cfg.x.expect("validated");
            let samples = cfg.samples.unwrap_or(10_000);
            let reports = cfg
                .q_list
                .as_ref()
                .expect("validated")
                .iter()
                .map(|&q| scaled_minor_containment(cfg.s as u64, q, x, cfg.k, samples, seed))
                .collect::<hk_core::Result<Vec<_>>>()
                .context("containment experiment")?;
            let rows = reports
                .iter()
                .map(|r| {
                    vec![
                        hash.to_string(),
                        format_f64(r.q_bound),
                        r.factor.to_string(),
                        r.tested.to_string(),
                        r.passed.to_string(),
                    ]
                })
                .collect();
            let passed = reports.iter().all(|r| r.passed == r.tested);
            Ok(Outcome {
                result: json!({ "reports": reports, "all_passed": passed }),
                table: Some(Table {
                    family: "containment".into(),
                    columns: strings(["config_hash", "Q", "factor", "tested", "passed"]),
                    rows,
                }),
                summary: format!(
                    "{} * m(Q) inside m(Q/{}), k = {}, X = {}: all passed: {passed}",
                    cfg.s, cfg.s, cfg.k, x
                ),
            })
        }
        ExperimentKind::W4Main => {
            let mut c = MainTermConfig::new(cfg.s, cfg.k, cfg.scales.clone().expect("validated"));
            c.seed = seed;
            if let Some(v) = cfg.family_size {
                c.family_size = v;
            }
            if let Some(v) = cfg.budget {
                c.budget = v;
            }
            let r = w4_main_term_experiment(&c).context("main-term experiment")?;
            let rows = r
                .rows
                .iter()
                .map(|row| {
                    vec![
                        hash.to_string(),
                        format_f64(row.scale),
                        strings(&row.tuple).join(" "),
                        strings(&row.n).join(" "),
                        row.count.to_string(),
                        format_f64(row.series),
                        format_f64(row.integral),
                        format_f64(row.main_term),
                        format_f64(row.ratio),
                        format_f64(row.l),
                        format_f64(row.truncated_series),
                        format_f64(row.truncated_integral),
                        format_f64(row.box_integral.re),
                        format_f64(row.box_integral.im),
                    ]
                })
                .collect();
            let summary = format!(
                "main term, s = {}, k = {}: family ratios {} at X0 = {}; distance to 1 non-increasing: {}; Fermat counts {}",
                c.s,
                c.k,
                strings(r.summaries.iter().map(|s| format!("{:.4}", s.ratio))).join(", "),
                strings(r.summaries.iter().map(|s| s.scale)).join(", "),
                r.distance_non_increasing,
                strings(r.fermat.iter().map(|f| f.count)).join(", ")
            );
            Ok(Outcome {
                result: serde_json::to_value(&r)?,
                table: Some(Table {
                    family: "w4-main".into(),
                    columns: strings([
                        "config_hash",
                        "scale",
                        "tuple",
                        "n",
                        "count",
                        "series",
                        "integral",
                        "main_term",
                        "ratio",
                        "L",
                        "truncated_series",
                        "truncated_integral",
                        "box_re",
                        "box_im",
                    ]),
                    rows,
                }),
                summary,
            })
        }
    }
}
