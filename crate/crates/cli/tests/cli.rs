use std::process::{Command, Output};

fn obake(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obake"))
        .args(args)
        .env_remove("OBAKE_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fingerprints(text: &str) -> Vec<String> {
    text.lines()
        .filter(|l| l.contains("key fingerprint"))
        .map(|l| l.rsplit(' ').next().unwrap().to_string())
        .collect()
}

#[test]
fn demo_establishes_and_prints_frames() {
    let out = obake(&["demo", "--dim", "2", "--bits", "8", "--threshold", "4", "--noise", "uniform:3", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("system -> token  Setup"));
    assert!(text.contains("token -> system  TemplateResponse"));
    assert!(text.contains("outcome: KeyEstablished"));
    let fps = fingerprints(&text);
    assert_eq!(fps.len(), 2);
    assert_eq!(fps[0], fps[1]);
    assert_eq!(fps[0].len(), 16);
}

#[test]
fn demo_is_reproducible_and_seed_falls_back_to_env() {
    let args = ["demo", "--noise", "gauss:3", "--transport", "tcp", "--seed", "11"];
    let a = stdout(&obake(&args));
    let b = Command::new(env!("CARGO_BIN_EXE_obake"))
        .args(&args[..5])
        .env("OBAKE_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(a, stdout(&b));
}

#[test]
fn abort_exit_code() {
    let out = obake(&["demo", "--dim", "2", "--noise", "adv:-8,0", "--max-rounds", "3", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("outcome: Abort(RoundLimit)"));

    let out = obake(&["demo", "--tamper", "flip-tag", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("TagMismatch"));
}

#[test]
fn usage_errors_exit_three() {
    for args in [
        &["demo", "--bogus"][..],
        &["demo", "--threshold", "3"],
        &["demo", "--bits", "12"],
        &["demo", "--dim", "3", "--threshold", "4,8"],
        &["demo", "--noise", "gauss:-1"],
        &["trials", "--trials", "0"],
        &["trials", "--format", "xml"],
        &[],
    ] {
        let out = obake(args);
        assert_eq!(out.status.code(), Some(3), "{args:?}");
    }
    assert_eq!(obake(&["--help"]).status.code(), Some(0));
}

#[test]
fn trials_jsonl_and_table() {
    let out = obake(&["trials", "--trials", "20", "--noise", "uniform:7", "--format", "jsonl", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 21);
    assert!(lines[..20].iter().all(|l| l["type"] == "trial" && l["status"] == "KeyEstablished"));
    assert_eq!(lines[20]["succeeded"], 20);

    let out = obake(&["trials", "--trials", "10", "--noise", "adv:0,0,9,0", "--max-rounds", "2", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("aborted: RoundLimit"));
}

#[test]
fn template_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("templates.txt");
    let file = path.to_str().unwrap();
    let out = obake(&["template", "gen", "--dim", "3", "--bits", "16", "--out", file, "--count", "2", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0));

    let shown = stdout(&obake(&["template", "show", file]));
    let rows: Vec<&str> = shown.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("token-0: ["));
    assert!(rows[1].starts_with("token-1: ["));

    let out = obake(&["demo", "--dim", "3", "--bits", "16", "--template", file, "--token", "token-1", "--seed", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let expected = rows[1].trim_start_matches("token-1: ");
    assert!(stdout(&out).contains(&format!("template: {expected}")));

    // Wrong dimension for the stored templates.
    let out = obake(&["demo", "--dim", "4", "--bits", "16", "--template", file, "--seed", "2"]);
    assert_eq!(out.status.code(), Some(3));

    let out = obake(&["template", "show", dir.path().join("missing").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}
