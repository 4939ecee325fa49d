use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hk(cache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hk"))
        .args(args)
        .env("HK_CACHE_DIR", cache)
        .output()
        .expect("hk runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn only_file(dir: &Path, ext: &str) -> std::path::PathBuf {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    assert_eq!(v.len(), 1, "{v:?}");
    v.pop().unwrap()
}

#[test]
fn count_prints_the_number() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hk(tmp.path(), &["count", "--s", "3", "--k", "2", "--n", "3,3"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "1");
    let o = hk(
        tmp.path(),
        &[
            "count", "--s", "4", "--k", "2", "--n", "6,14", "--box", "0,6", "--json",
        ],
    );
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    // Only the orderings of (0, 1, 2, 3).
    assert_eq!(v["result"]["count"], "24");
}

#[test]
fn densities_agree_across_methods() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hk(
        tmp.path(),
        &[
            "densities",
            "--s",
            "6",
            "--k",
            "2",
            "--n",
            "3,3",
            "--method",
            "both",
            "--json",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let q = v["result"]["qsum"]["value"].as_f64().unwrap();
    let e = v["result"]["euler"]["value"].as_f64().unwrap();
    assert_eq!(v["result"]["agree_3_significant_digits"], true);
    assert!((q - e).abs() <= 5e-3, "{q} vs {e}");
}

#[test]
fn verify_identities_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hk(
        tmp.path(),
        &[
            "verify",
            "identities",
            "--k",
            "3",
            "--X",
            "20",
            "--trials",
            "50",
        ],
    );
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(
        text.lines().filter(|l| l.starts_with("PASS")).count(),
        3,
        "{text}"
    );
    for args in [
        &[
            "verify", "lattice", "--s", "3", "--k", "2", "--X", "6", "--trials", "5",
        ][..],
        &["verify", "counting", "--trials", "10"][..],
    ] {
        assert!(hk(tmp.path(), args).status.success());
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hk(tmp.path(), &["count", "--s", "3", "--k", "2", "--n", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n: expected k = 2"));

    let out = tmp.path().join("out");
    let o = hk(
        tmp.path(),
        &[
            "count",
            "--s",
            "6",
            "--k",
            "2",
            "--n",
            "60,900",
            "--budget",
            "100",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(3));
    let blob: Value =
        serde_json::from_str(&fs::read_to_string(only_file(&out, "json")).unwrap()).unwrap();
    assert_eq!(blob["meta"]["partial"], true);
    assert!(blob["error"].as_str().unwrap().contains("budget"));

    let o = hk(tmp.path(), &["sums", "weyl", "--alpha", "0.5", "--X", "-3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn strict_config_rejects_unknown_and_bad_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"name":"a","experiment":"thm21","s":6,"k":2,"X":64,"Q_list":[4,8,16],"colour":1}"#,
    )
    .unwrap();
    let o = hk(
        tmp.path(),
        &["experiment", "--config", cfg.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field `colour`"));

    fs::write(
        &cfg,
        r#"{"name":"a","experiment":"minor-decay","s":6,"k":2,"Q_list":[8,4],"scales":[1,2]}"#,
    )
    .unwrap();
    let o = hk(
        tmp.path(),
        &["experiment", "--config", cfg.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr).to_string();
    for field in [
        "X: required",
        "Q_list: must be strictly increasing",
        "scales: not used",
    ] {
        assert!(err.contains(field), "{err}");
    }
}

const DECAY: &str = r#"{"name": "decay", "experiment": "minor-decay", "s": 6, "k": 2, "X": 400,
  "Q_list": [4, 8, 16, 32], "samples": 32, "climb_steps": 8, "seed": 9}"#;

#[test]
fn experiment_outputs_are_cached_and_stamped() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("decay.json");
    fs::write(&cfg, DECAY).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = hk(
            tmp.path(),
            &[
                "experiment",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                dir.to_str().unwrap(),
            ],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for ext in ["json", "csv", "txt"] {
        assert_eq!(
            fs::read(only_file(&a, ext)).unwrap(),
            fs::read(only_file(&b, ext)).unwrap(),
            "{ext}"
        );
    }
    let blob: Value =
        serde_json::from_str(&fs::read_to_string(only_file(&a, "json")).unwrap()).unwrap();
    let meta = &blob["meta"];
    let hash = meta["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert_eq!(meta["seed"], 9);
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert!(meta["wall_time_s"].as_f64().unwrap() >= 0.0);
    for ext in ["csv", "txt"] {
        let first = fs::read_to_string(only_file(&a, ext))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        for needle in [
            format!("config_hash={hash}"),
            "seed=9".into(),
            "wall_time_s=".into(),
            env!("CARGO_PKG_VERSION").into(),
        ] {
            assert!(first.contains(&needle), "{ext}: {first}");
        }
    }

    // A different seed is a different experiment.
    let c = tmp.path().join("c");
    let o = hk(
        tmp.path(),
        &[
            "experiment",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "10",
            "--out",
            c.to_str().unwrap(),
        ],
    );
    assert!(o.status.success());
    let other: Value =
        serde_json::from_str(&fs::read_to_string(only_file(&c, "json")).unwrap()).unwrap();
    assert_ne!(other["meta"]["config_hash"], meta["config_hash"]);
}

fn body(csv: &str) -> String {
    csv.lines()
        .skip_while(|l| l.starts_with("# hk") || l.starts_with("# WARNING"))
        .map(|l| format!("{l}\n"))
        .collect()
}

#[test]
fn report_merges_families() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("decay.json");
    fs::write(&cfg, DECAY).unwrap();
    let res = tmp.path().join("res");
    assert!(hk(
        tmp.path(),
        &[
            "experiment",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            res.to_str().unwrap()
        ]
    )
    .status
    .success());

    let o = hk(tmp.path(), &["report", res.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(!stdout(&o).contains("WARNING"));
    let merged = fs::read_to_string(res.join("report").join("minor-decay.csv")).unwrap();
    let single = fs::read_to_string(only_file(&res, "csv")).unwrap();
    assert_eq!(body(&merged), body(&single));
    let rows: Vec<&str> = merged.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 5, "header and 4 rows");
    assert!(merged.lines().last().unwrap().starts_with("# fitted slope"));

    // A blob from another code version triggers the banner.
    let src = only_file(&res, "json");
    let mut blob: Value = serde_json::from_str(&fs::read_to_string(&src).unwrap()).unwrap();
    blob["meta"]["version"] = "0.0.1".into();
    fs::write(res.join("old.json"), serde_json::to_string(&blob).unwrap()).unwrap();
    let o = hk(tmp.path(), &["report", res.to_str().unwrap()]);
    assert!(stdout(&o).starts_with("WARNING"));
    let merged = fs::read_to_string(res.join("report").join("minor-decay.csv")).unwrap();
    assert!(merged.starts_with("# WARNING"));
    assert_eq!(merged.lines().filter(|l| !l.starts_with('#')).count(), 9);

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(
        hk(tmp.path(), &["report", empty.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn arcs_classifies_csv_points() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("pts.csv");
    // Origin (W4), a point far from small-denominator rationals (W1).
    fs::write(
        &input,
        "alpha_1,alpha_2\n0,0\n0.3819660112501051,0.6180339887498949\n",
    )
    .unwrap();
    let o = hk(
        tmp.path(),
        &[
            "arcs",
            "--k",
            "2",
            "--X",
            "1e12",
            "--input",
            input.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("2 point(s)"), "{text}");
    let rows: Vec<&str> = text
        .lines()
        .skip_while(|l| !l.starts_with("alpha_1,"))
        .collect();
    assert!(rows[0].starts_with("alpha_1,alpha_2,class"), "{text}");
    assert!(rows[1].contains(",W4,"), "{text}");
    assert!(rows[2].contains(",W1,"), "{text}");
}

#[test]
fn vinogradov_reports_a_slope() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hk(
        tmp.path(),
        &["vinogradov", "--t", "1", "--k", "2", "--X", "5,10,20"],
    );
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("J_{1,2}(20) = 20"), "{text}");
    assert!(text.contains("fitted slope"), "{text}");
}
