use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn bench")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Lookup table over one and two layers with widths 1..=4. RMSE is lowest at 3 and 3-2.
fn lookup_table(dir: &Path) -> PathBuf {
    let mut text = String::from("combo,rmse\n");
    for a in 1..=4i32 {
        text.push_str(&format!("{a},{}\n", 2.0 + f64::from((a - 3).abs())));
        for b in 1..=4i32 {
            text.push_str(&format!("{a}-{b},{}\n", 1.0 + f64::from((a - 3).abs() + (b - 2).abs())));
        }
    }
    let path = dir.join("lookup.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let table = lookup_table(tmp.path());
    let out = tmp.path().join("out");
    let o = bench(&[
        "run",
        "--dataset=lookup",
        &format!("--data-dir={}", table.display()),
        &format!("--out={}", out.display()),
        "--layers=1,2",
        "--repeats=2",
        "--max-neurons=4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("Method 1 (grid search)"), "{text}");
    assert!(text.contains("alpha = 0.05"), "{text}");
    for f in ["runs.csv", "fits.csv", "summary.csv", "summary.txt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    // 2 layer counts x 2 repeats x (1 grid + 3 alphas)
    let runs = std::fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 16);
    assert_eq!(std::fs::read_dir(out.join("traces")).unwrap().count(), 16);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(
        summary
            .lines()
            .any(|l| l.contains("grid") && l.contains(",2,") && l.contains("3-2")),
        "{summary}"
    );
}

#[test]
fn search_prints_best_combo() {
    let tmp = tempfile::tempdir().unwrap();
    let table = lookup_table(tmp.path());
    let o = bench(&[
        "search",
        "--dataset",
        "lookup",
        "--data-dir",
        table.to_str().unwrap(),
        "--out",
        tmp.path().join("s").to_str().unwrap(),
        "--method",
        "grid",
        "--max-neurons",
        "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("best combo: 3\n"), "{text}");
    assert!(text.contains("rmse: 2\n"), "{text}");
    assert!(text.contains("distinct combos fitted: 4\n"), "{text}");
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let table = lookup_table(tmp.path());
    let cfg = tmp.path().join("plan.conf");
    std::fs::write(
        &cfg,
        format!(
            "# lookup plan\ndataset=lookup\ndata_dir={}\nlayers=2\nmax-neurons=4\nrepeats=3\nout={}\n",
            table.display(),
            tmp.path().join("cfg").display()
        ),
    )
    .unwrap();
    let o = bench(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--repeats",
        "1",
        "--methods",
        "heuristic",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let runs = std::fs::read_to_string(tmp.path().join("cfg/runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 3, "{runs}");
    assert!(runs.lines().skip(1).all(|l| l.starts_with("heuristic-n2-")), "{runs}");
}

#[test]
fn verify_data_reports_checksum() {
    let tmp = tempfile::tempdir().unwrap();
    let table = lookup_table(tmp.path());
    let o = bench(&[
        "verify-data",
        "--dataset=lookup",
        &format!("--data-dir={}", table.display()),
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let first = text.lines().next().unwrap();
    let digest = first.split_whitespace().next().unwrap();
    assert_eq!(digest.len(), 64);
    assert!(digest.chars().all(|c| c.is_ascii_hexdigit()));
    assert!(text.contains("ok: lookup table with 20 combos"), "{text}");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let table = lookup_table(tmp.path());
    let data = format!("--data-dir={}", table.display());

    assert_eq!(bench(&["run", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(
        bench(&["run", "--dataset=lookup", &data, "--layers=7"]).status.code(),
        Some(1)
    );
    assert_eq!(
        bench(&["run", "--dataset=lookup", &data, "--stopping-rule=often"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(bench(&["--help"]).status.code(), Some(0));

    let missing = format!("--data-dir={}", tmp.path().join("absent.csv").display());
    assert_eq!(
        bench(&["verify-data", "--dataset=boston", &missing]).status.code(),
        Some(2)
    );
    let garbage = tmp.path().join("garbage.csv");
    std::fs::write(&garbage, "not,a\nlookup,table\n").unwrap();
    let o = bench(&["run", "--dataset=lookup", &format!("--data-dir={}", garbage.display())]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
