use std::process::{Command, Output};

fn qswitch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qswitch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn verify_passes_and_lists_headline_numbers() {
    let o = qswitch(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    for (name, value) in [
        ("clone_bob", "8.33333333333e-1"),
        ("clone_charlene", "8.33333333333e-1"),
        ("clone_dick", "3.33333333333e-1"),
        ("demux_to_bob", "1.00000000000e0"),
        ("demux_to_charlene", "1.00000000000e0"),
        ("mg_n4_degeneracy", "2.00000000000e0"),
    ] {
        let line = text
            .lines()
            .find(|l| l.starts_with(name))
            .unwrap_or_else(|| panic!("{name} missing"));
        assert!(line.contains(value) && line.ends_with("pass"), "{line}");
    }
    assert!(!text.contains("FAIL"));
}

#[test]
fn demux_thousand_shots_all_perfect() {
    let o = qswitch(&[
        "demux", "--route", "charlene", "--shots", "1000", "--seed", "3", "--output", "records",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let footers: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|v| v["record"] == "footer")
        .collect();
    assert_eq!(footers.len(), 1000);
    assert!(footers
        .iter()
        .all(|f| (f["final_fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-9));
    let headers = text.lines().filter(|l| l.contains("\"record\":\"header\"")).count();
    assert_eq!(headers, 1000);
    assert!(text.lines().all(|l| l.contains("\"schema\":\"qswitch/1\"")));
}

#[test]
fn demux_table_has_one_row_per_shot() {
    let o = qswitch(&["demux", "--route", "bob", "--shots", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows = text.lines().filter(|l| l.contains("to_Bob")).count();
    assert_eq!(rows, 5);
}

#[test]
fn scan_grid_is_inclusive() {
    let o = qswitch(&["scan", "--n", "8", "--alpha-grid", "0:1:0.1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 12);
    let last = text.lines().last().unwrap();
    assert!(
        last.starts_with("1.00000000000e0") && last.trim_end().ends_with('2'),
        "{last}"
    );
}

#[test]
fn mg_reports_the_spectrum() {
    let o = qswitch(&["mg", "--n", "4", "--alpha", "1.0", "--output", "records"]);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["record"], "spectrum");
    assert_eq!(lines[0]["degeneracy"], 2);
    assert_eq!(lines[0]["ground_energy"].as_f64(), Some(-3.0));
    assert_eq!(lines.iter().filter(|v| v["record"] == "level").count(), 16);
}

#[test]
fn usage_errors_exit_2_and_name_the_flag() {
    for (args, flag) in [
        (&["clone", "--shots", "0"][..], "--shots"),
        (&["clone", "--frobnicate"][..], "--frobnicate"),
        (&["demux"][..], "--route"),
        (&["demux", "--route", "dick"][..], "--route"),
        (&["mg", "--n", "7"][..], "--n"),
        (&["clone", "--alpha", "0.5"][..], "--alpha"),
        (&["scan", "--n", "4", "--alpha-grid", "1:0:0.1"][..], "--alpha-grid"),
    ] {
        let o = qswitch(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).contains(flag), "{args:?}: {}", stderr(&o));
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn computation_errors_exit_1() {
    let o = qswitch(&["mg", "--n", "16"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("resource"));
}

#[test]
fn identical_invocations_give_identical_bytes() {
    for args in [
        &["clone", "--shots", "20", "--seed", "4"][..],
        &["ghz", "--shots", "4", "--seed", "4", "--output", "records"][..],
        &["noise", "--shots", "30", "--seed", "4"][..],
        &[
            "demux", "--route", "bob", "--shots", "40", "--seed", "4", "--delay", "3", "--output", "records",
        ][..],
    ] {
        let (a, b) = (qswitch(args), qswitch(args));
        assert_eq!(a.status.code(), Some(0), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
        assert!(!a.stdout.is_empty());
    }
    let other = qswitch(&["clone", "--shots", "20", "--seed", "5"]);
    assert_ne!(other.stdout, qswitch(&["clone", "--shots", "20", "--seed", "4"]).stdout);
}

#[test]
fn out_flag_writes_a_file() {
    let dir = std::env::temp_dir().join(format!("qswitch-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("clone.jsonl");
    let o = qswitch(&[
        "clone",
        "--alpha",
        "1.0,2.0",
        "--output",
        "records",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["record"], "clone");
    assert_eq!(first["bob"].as_f64(), Some(0.833333333333));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn transcripts_from_the_cli_replay() {
    let o = qswitch(&[
        "demux", "--route", "charlene", "--shots", "3", "--seed", "8", "--output", "records",
    ]);
    let text = stdout(&o);
    let mut chunk = String::new();
    let mut replayed = 0;
    for line in text.lines().filter(|l| !l.contains("\"record\":\"check\"")) {
        chunk.push_str(line);
        chunk.push('\n');
        if line.contains("\"record\":\"footer\"") {
            let t = qswitch::parties::ProtocolTranscript::from_json_lines(&chunk).unwrap();
            let f = qswitch::parties::replay(&t).unwrap();
            assert!((f - t.final_fidelity).abs() < 1e-11);
            chunk.clear();
            replayed += 1;
        }
    }
    assert_eq!(replayed, 3);
}
