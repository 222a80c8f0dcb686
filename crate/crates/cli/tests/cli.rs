use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn z4ap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_z4ap")).args(args).output().unwrap()
}

fn z4ap_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_z4ap"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(code(&z4ap(&["--bogus"])), 1);
    assert_eq!(code(&z4ap(&["count"])), 1);
    assert_eq!(code(&z4ap(&["--help"])), 0);
    assert_eq!(code(&z4ap(&["count", "/no/such/file"])), 1);
}

#[test]
fn a0_counts_agree_across_methods() {
    let dir = tempfile::tempdir().unwrap();
    let a0 = z4ap(&["construct", "a0"]);
    assert_eq!(code(&a0), 0);
    let f = write(dir.path(), "a0.txt", &stdout(&a0));
    let out = z4ap(&["count", &f]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for m in ["naive", "fourier", "fibre"] {
        assert!(text.contains(&format!("{m}: lambda = 1/64, raw = 64")), "{text}");
    }
}

#[test]
fn constructions_pipe_into_verify_free() {
    let a0 = stdout(&z4ap(&["construct", "a0"]));
    let out = z4ap_stdin(&["verify-free"], &a0);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "free: true, size 16");

    let bad = z4ap_stdin(&["verify-free", "-"], "z4 n=1\n0\n1\n2\n");
    assert_eq!(code(&bad), 1);
}

#[test]
fn search_prints_a_certified_maximum() {
    let out = z4ap(&["search", "2"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.starts_with("z4 n=2\n"));
    assert!(text.contains("# size 6, proven maximum: true"), "{text}");
    assert_eq!(code(&z4ap_stdin(&["verify-free"], &text)), 0);
}

#[test]
fn run_then_verify_and_catch_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let set = write(dir.path(), "a0.txt", &stdout(&z4ap(&["construct", "a0"])));
    let trace = dir.path().join("t.jsonl");
    let trace = trace.to_str().unwrap();
    let out = z4ap(&["run", &set, "--driver", "weighted", "--out", trace]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("floor: "));

    let ok = z4ap(&["verify", trace]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(stdout(&ok).starts_with("ok: "));

    // Bump the first raw count recorded in a certificate.
    let text = std::fs::read_to_string(trace).unwrap();
    // Counts that fit in a JSON number are written bare, larger ones quoted.
    let key = "\"raw_count\":";
    let mut at = text.find(key).expect("trace carries a certificate") + key.len();
    if text[at..].starts_with('"') {
        at += 1;
    }
    let end = at + text[at..].find(|c: char| !c.is_ascii_digit()).unwrap();
    let bumped: u128 = text[at..end].parse::<u128>().unwrap() + 1;
    let tampered = format!("{}{}{}", &text[..at], bumped, &text[end..]);
    let bad = write(dir.path(), "bad.jsonl", &tampered);
    let out = z4ap(&["verify", &bad]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("step"));
}

#[test]
fn increment_accepts_both_lemma_spellings() {
    let dir = tempfile::tempdir().unwrap();
    let fam = write(
        dir.path(),
        "f.txt",
        "family m=2\n00: 00 01 11\n01: 01\n10: 00 01 10 11\n",
    );
    for lemma in ["fibre", "6.2", "density", "6.3"] {
        let out = z4ap(&["increment", &fam, "--lemma", lemma, "--gamma", "01"]);
        assert_eq!(code(&out), 0, "{lemma}: {}", String::from_utf8_lossy(&out.stderr));
        // The new family as text, then the certificate as one JSON line.
        let text = stdout(&out);
        assert!(text.starts_with("family m=1\n"), "{text}");
        let cert: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
        assert_eq!(cert["gamma"], 1);
    }
}
