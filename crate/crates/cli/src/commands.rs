//! The non-experiment subcommands. Each returns an [`Outcome`].

use std::io::Read;
use std::path::Path;

use anyhow::{anyhow, bail, Result};
use hk_core::circle::{classify, in_major_1d, lattice_representation_integral, DissectionParams};
use hk_core::counting::{count_mitm, count_naive, mvt_scaling_experiment, CountBox, CountResult};
use hk_core::densities::{
    main_term, singular_integral_quadrature, singular_series_euler, singular_series_qsum,
    EulerOptions, IntegralOptions,
};
use hk_core::expsums::{
    complete_sum, oscillatory_integral, shift_polynomials, verify_resolution_identity,
    verify_shift_reindex, weyl_sum, QuadControl, RationalPoint,
};
use hk_core::local::{solubility_report, SolubilityOptions};
use hk_core::{FrequencyPoint, SystemParams, Target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::artifact::{format_f64, Outcome, Table};
use crate::experiment::Validation;

fn strings<T: ToString>(v: impl IntoIterator<Item = T>) -> Vec<String> {
    v.into_iter().map(|x| x.to_string()).collect()
}

pub fn target(n: &[i64], k: usize) -> Result<Target> {
    if n.len() != k {
        return Err(Validation(vec![format!(
            "n: expected k = {k} entries, got {}",
            n.len()
        )])
        .into());
    }
    Ok(Target::new(n.to_vec())?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountChoice {
    Auto,
    Naive,
    Mitm,
}

pub fn count(
    s: usize,
    k: usize,
    n: &[i64],
    bounds: Option<(i64, i64)>,
    method: CountChoice,
    budget: u64,
) -> Result<(CountResult, Outcome)> {
    let params = SystemParams::pure(s, k)?;
    let t = target(n, k)?;
    let b = match bounds {
        Some((lo, hi)) => CountBox::new(lo, hi)?,
        None => CountBox::implied(&params, &t)?,
    };
    let r = match method {
        CountChoice::Naive => count_naive(&params, &t, b, budget)?,
        CountChoice::Mitm => count_mitm(&params, &t, b, budget)?,
        CountChoice::Auto if s <= 2 => count_naive(&params, &t, b, budget)?,
        CountChoice::Auto => count_mitm(&params, &t, b, budget)?,
    };
    let summary = format!("{}", r.count);
    let out = Outcome {
        result: json!({ "count": r.count.to_string(), "details": r, "box": [b.lower, b.upper] }),
        table: None,
        summary,
    };
    Ok((r, out))
}

pub fn vinogradov(t: usize, k: usize, xs: &[u64], budget: u64) -> Result<Outcome> {
    if xs.is_empty() {
        return Err(Validation(vec!["X: at least one value is required".into()]).into());
    }
    let rows: Vec<(u64, u128)> = if xs.len() >= 3 {
        let m = mvt_scaling_experiment(t, k, xs, budget)?;
        m.rows.iter().map(|r| (r.x, r.j)).collect()
    } else {
        xs.iter()
            .map(|&x| Ok((x, hk_core::counting::vinogradov_count(t, k, x, budget)?)))
            .collect::<Result<_>>()?
    };
    let table = Table {
        family: "vinogradov".into(),
        columns: strings(["t", "k", "X", "J"]),
        rows: rows
            .iter()
            .map(|(x, j)| vec![t.to_string(), k.to_string(), x.to_string(), j.to_string()])
            .collect(),
    };
    let summary = rows
        .iter()
        .map(|(x, j)| format!("J_{{{t},{k}}}({x}) = {j}"))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome {
        result: json!({
            "t": t,
            "k": k,
            "rows": rows.iter().map(|(x, j)| json!({ "X": x, "J": j.to_string() })).collect::<Vec<_>>(),
        }),
        table: Some(table),
        summary,
    })
}

pub fn weyl(alpha: &[f64], x: f64) -> Result<Outcome> {
    let v = weyl_sum(&FrequencyPoint::new(alpha.to_vec())?, x)?;
    Ok(Outcome {
        result: json!({ "re": v.re, "im": v.im, "abs": v.norm() }),
        table: None,
        summary: format!("f = {} + {}i, |f| = {}", v.re, v.im, v.norm()),
    })
}

pub fn complete(q: u64, a: &[i64]) -> Result<Outcome> {
    let v = complete_sum(&RationalPoint::new(q, a.to_vec())?);
    Ok(Outcome {
        result: json!({ "re": v.re, "im": v.im, "abs": v.norm() }),
        table: None,
        summary: format!("S = {} + {}i, |S| = {}", v.re, v.im, v.norm()),
    })
}

pub fn integral(beta: &[f64], x: f64, tol: f64) -> Result<Outcome> {
    let control = QuadControl {
        tol,
        ..QuadControl::default()
    };
    let v = oscillatory_integral(beta, x, control)?;
    Ok(Outcome {
        result: serde_json::to_value(v)?,
        table: None,
        summary: format!(
            "I = {} + {}i (error {:e}, {} panels)",
            v.value.re, v.value.im, v.error, v.panels
        ),
    })
}

pub fn local(s: usize, k: usize, n: &[i64], budget: u64) -> Result<Outcome> {
    let params = SystemParams::pure(s, k)?;
    let t = target(n, k)?;
    let mut opts = SolubilityOptions::for_degree(k);
    opts.budget = budget;
    let r = solubility_report(&t, &params, &opts)?;
    Ok(Outcome {
        summary: format!(
            "verdict: {:?}; warnings: {}",
            r.verdict,
            r.warnings.join("; ")
        ),
        result: serde_json::to_value(&r)?,
        table: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum DensityChoice {
    Qsum,
    Euler,
    Both,
    Integral,
    All,
}

/// Half a unit in the third significant digit of the larger value.
pub fn three_digits(a: f64, b: f64) -> bool {
    let m = a.abs().max(b.abs());
    m == 0.0 || (a - b).abs() <= 0.5 * 10f64.powf(m.log10().floor() - 2.0)
}

pub struct DensityArgs {
    pub q_max: u64,
    pub p_max: u64,
    pub tol: f64,
    pub budget: u64,
}

pub fn densities(
    s: usize,
    k: usize,
    n: &[i64],
    method: DensityChoice,
    a: &DensityArgs,
) -> Result<Outcome> {
    let params = SystemParams::pure(s, k)?;
    let t = target(n, k)?;
    let want_q = matches!(
        method,
        DensityChoice::Qsum | DensityChoice::Both | DensityChoice::All
    );
    let want_e = matches!(
        method,
        DensityChoice::Euler | DensityChoice::Both | DensityChoice::All
    );
    let want_i = matches!(method, DensityChoice::Integral | DensityChoice::All);
    let mut result = serde_json::Map::new();
    let mut lines = Vec::new();
    let qsum = if want_q {
        let q = singular_series_qsum(&t, &params, a.q_max, a.tol, a.budget)?;
        lines.push(format!(
            "qsum (q <= {}): {} (tail {:e})",
            a.q_max, q.estimate.value, q.estimate.error_estimate
        ));
        result.insert("qsum".into(), serde_json::to_value(&q.estimate)?);
        Some(q.estimate)
    } else {
        None
    };
    let euler = if want_e {
        let opts = EulerOptions {
            p_max: a.p_max,
            tail_tol: a.tol,
            ..EulerOptions::default()
        };
        let e = singular_series_euler(&t, &params, opts)?;
        lines.push(format!(
            "euler (p <= {}): {} (tail {:e})",
            a.p_max, e.estimate.value, e.estimate.error_estimate
        ));
        result.insert("euler".into(), serde_json::to_value(&e.estimate)?);
        result.insert("euler_factors".into(), serde_json::to_value(&e.factors)?);
        Some(e.estimate)
    } else {
        None
    };
    if let (Some(q), Some(e)) = (&qsum, &euler) {
        let agree = three_digits(q.value, e.value);
        lines.push(format!("agree to 3 significant digits: {agree}"));
        result.insert("agree_3_significant_digits".into(), json!(agree));
    }
    if want_i {
        let i = singular_integral_quadrature(&t, &params, IntegralOptions::for_degree(k))?;
        lines.push(format!(
            "integral: {} (error {:e})",
            i.estimate.value, i.estimate.error_estimate
        ));
        result.insert("integral".into(), serde_json::to_value(&i.estimate)?);
        if let Some(series) = euler.as_ref().or(qsum.as_ref()) {
            match main_term(&t, &params, series, &i.estimate) {
                Ok(m) => {
                    lines.push(format!("main term: {} (error {:e})", m.value, m.error));
                    result.insert("main_term".into(), serde_json::to_value(&m)?);
                }
                Err(e) => lines.push(format!("main term unavailable: {e}")),
            }
        }
    }
    Ok(Outcome {
        result: serde_json::Value::Object(result),
        table: None,
        summary: lines.join("\n"),
    })
}

/// Points from CSV text: one point per row, `k` numeric columns. A header
/// row is skipped when its first cell is not a number.
pub fn read_points(text: &str, k: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if i == 0 && rec.get(0).is_some_and(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() != k {
            return Err(Validation(vec![format!(
                "input row {}: expected {k} columns, got {}",
                i + 1,
                rec.len()
            )])
            .into());
        }
        let row = rec
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|_| anyhow!("input row {}: {c:?} is not a number", i + 1))
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Validation(vec![e.to_string()]))?;
        out.push(row);
    }
    Ok(out)
}

pub fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    std::fs::read_to_string(path)
        .map_err(|e| Validation(vec![format!("input: cannot read {}: {e}", path.display())]).into())
}

pub fn arcs(points: &[Vec<f64>], k: usize, x: f64, q_bound: Option<f64>) -> Result<Outcome> {
    let d = DissectionParams::new(x, k)?;
    let mut columns: Vec<String> = (1..=k).map(|j| format!("alpha_{j}")).collect();
    columns.extend(strings([
        "class", "major_q", "major_a", "center_q", "center_a",
    ]));
    if q_bound.is_some() {
        columns.push("in_major_Q".into());
    }
    let mut counts = [0usize; 4];
    let mut rows = Vec::new();
    for p in points {
        let c = classify(&FrequencyPoint::new(p.clone())?, &d)?;
        counts[c.kind.index()] += 1;
        let mut row: Vec<String> = p.iter().map(|v| format_f64(*v)).collect();
        row.push(c.kind.to_string());
        for label in [&c.major, &c.center] {
            match label {
                Some(l) => {
                    row.push(l.q().to_string());
                    row.push(strings(l.a()).join(" "));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        if let Some(q) = q_bound {
            row.push(in_major_1d(p[k - 1], q, x, k)?.is_some().to_string());
        }
        rows.push(row);
    }
    Ok(Outcome {
        result: json!({
            "X": x,
            "k": k,
            "L": d.l(),
            "Q": d.q(),
            "counts": { "W1": counts[0], "W2": counts[1], "W3": counts[2], "W4": counts[3] },
        }),
        summary: format!(
            "{} point(s), L = {}, Q = {}: W1 {}, W2 {}, W3 {}, W4 {}",
            points.len(),
            d.l(),
            d.q(),
            counts[0],
            counts[1],
            counts[2],
            counts[3]
        ),
        table: Some(Table {
            family: "arcs".into(),
            columns,
            rows,
        }),
    })
}

/// One named check with its verdict.
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub fn verify_identities(k: usize, x: u64, trials: usize, seed: u64) -> Result<Vec<CheckLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-8 * ((x + 1) * (x + 1)) as f64;
    let (mut shift, mut resolution) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let q: u64 = rng.random_range(1..=1000);
        let coords = (0..k)
            .map(|_| rng.random_range(0..q) as f64 / q as f64)
            .collect();
        let alpha = FrequencyPoint::new(coords)?;
        let y = rng.random_range(0..=x);
        shift = shift.max(verify_shift_reindex(&alpha, x, y)?);
        resolution = resolution.max(verify_resolution_identity(&alpha, x, y, 3 * x + 3)?);
    }
    let mut transforms = 0;
    for _ in 0..trials {
        let s = rng.random_range(k..=k + 4);
        let tuple: Vec<i64> = (0..s).map(|_| rng.random_range(0..=x as i64)).collect();
        let y = rng.random_range(0..=x as i64);
        let h: Vec<i64> = (1..=k as u32)
            .map(|j| tuple.iter().map(|v| (v - y).pow(j)).sum())
            .collect();
        if shift_polynomials(&h, s)?.verify_binomial_transform(&tuple, y)? {
            transforms += 1;
        }
    }
    Ok(vec![
        CheckLine {
            name: "shift re-indexing".into(),
            passed: shift <= tol,
            detail: format!("{trials} trials, worst error {shift:.2e}, tolerance {tol:.2e}"),
        },
        CheckLine {
            name: "resolution identity".into(),
            passed: resolution <= tol,
            detail: format!("{trials} trials, worst error {resolution:.2e}, tolerance {tol:.2e}"),
        },
        CheckLine {
            name: "binomial transform".into(),
            passed: transforms == trials,
            detail: format!("{transforms}/{trials} exact"),
        },
    ])
}

pub fn verify_lattice(
    s: usize,
    k: usize,
    x: u64,
    trials: usize,
    seed: u64,
    budget: u64,
) -> Result<Vec<CheckLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = SystemParams::pure(s, k)?;
    let b = CountBox::new(0, x as i64)?;
    let (mut matched, mut worst) = (0, 0.0f64);
    for _ in 0..trials {
        let tuple: Vec<i64> = (0..s).map(|_| rng.random_range(0..=x as i64)).collect();
        let h: Vec<i64> = (1..=k as u32)
            .map(|j| tuple.iter().map(|v| v.pow(j)).sum())
            .collect();
        let v = lattice_representation_integral(s, &h, x as f64, None, budget)?;
        let exact = count_mitm(&params, &Target::new(h)?, b, budget)?.count;
        let residual = (v.re - v.re.round()).abs().max(v.im.abs());
        worst = worst.max(residual);
        if residual < 1e-6 && v.re.round() as u128 == exact {
            matched += 1;
        }
    }
    Ok(vec![CheckLine {
        name: "lattice orthogonality".into(),
        passed: matched == trials,
        detail: format!("{matched}/{trials} exact matches, worst residual {worst:.1e}"),
    }])
}

pub fn verify_counting(trials: usize, seed: u64, budget: u64) -> Result<Vec<CheckLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matched = 0;
    for _ in 0..trials {
        let k = rng.random_range(1..=3usize);
        let s = rng.random_range(2..=6usize);
        let upper = rng.random_range(1..=12i64);
        let tuple: Vec<i64> = (0..s).map(|_| rng.random_range(0..=upper)).collect();
        let n: Vec<i64> = (1..=k as u32)
            .map(|j| tuple.iter().map(|v| v.pow(j)).sum())
            .collect();
        let params = SystemParams::pure(s, k)?;
        let t = Target::new(n)?;
        let b = CountBox::new(0, upper)?;
        if count_naive(&params, &t, b, budget)?.count == count_mitm(&params, &t, b, budget)?.count {
            matched += 1;
        }
    }
    Ok(vec![CheckLine {
        name: "meet-in-the-middle vs naive".into(),
        passed: matched == trials,
        detail: format!("{matched}/{trials} agree"),
    }])
}

pub fn checks_outcome(lines: &[CheckLine]) -> Outcome {
    Outcome {
        result: json!({
            "checks": lines.iter().map(|l| json!({ "name": l.name, "passed": l.passed, "detail": l.detail })).collect::<Vec<_>>(),
            "all_passed": lines.iter().all(|l| l.passed),
        }),
        table: None,
        summary: lines
            .iter()
            .map(|l| {
                format!(
                    "{} {}: {}",
                    if l.passed { "PASS" } else { "FAIL" },
                    l.name,
                    l.detail
                )
            })
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

pub fn parse_pair(v: &[i64]) -> Result<Option<(i64, i64)>> {
    match v {
        [] => Ok(None),
        [lo, hi] => Ok(Some((*lo, *hi))),
        _ => bail!(Validation(vec![
            "box: expected two values LOWER,UPPER".into()
        ])),
    }
}
