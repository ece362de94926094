use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Deserialize;
use wait_timeout::ChildExt;

use super::{ExecutionReport, ExitStatus, SandboxConfig, SandboxError};

/// Directory (relative to the run dir) holding machine-readable outputs.
pub const RESULTS_DIR: &str = ".crossloop";
/// Results file the test command writes: `{"passed": int, "total": int}`.
pub const RESULTS_FILE: &str = ".crossloop/results.json";

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultsFile {
    passed: u64,
    total: u64,
}

#[derive(Deserialize)]
struct QualityFile {
    raw: f64,
}

struct Captured {
    bytes: Vec<u8>,
    total: usize,
}

fn spawn_reader<R: Read + Send + 'static>(mut pipe: R, cap: usize, tx: mpsc::Sender<(usize, Captured)>, slot: usize) {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut total = 0usize;
        let mut buf = [0u8; 8192];
        loop {
            match pipe.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    total += n;
                    let room = cap.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        let _ = tx.send((slot, Captured { bytes: kept, total }));
    });
}

fn excerpt(captured: Option<Captured>) -> String {
    match captured {
        None => "[output unavailable: stream still held open after teardown]".to_string(),
        Some(c) => {
            let mut text = String::from_utf8_lossy(&c.bytes).into_owned();
            if c.total > c.bytes.len() {
                text.push_str(&format!("\n[truncated {} bytes]", c.total - c.bytes.len()));
            }
            text
        }
    }
}

#[cfg(unix)]
fn kill_group(pid: u32) {
    // SAFETY: plain syscall on a process group id we created; errors (ESRCH) are ignored.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

#[cfg(not(unix))]
fn kill_group(_pid: u32) {}

/// Runs `test_command` through `sh -c` inside `run_dir`.
///
/// Any stale `.crossloop/` directory is removed first so the candidate
/// cannot ship its own results. On timeout the whole process group is
/// killed. Counts come from the results file; without one, exit code 0
/// scores 1/1 and anything else is reported as `CrashedBeforeTests` with 0/0.
pub fn execute_tests(
    run_dir: &Path,
    test_command: &str,
    timeout: Duration,
    config: &SandboxConfig,
) -> Result<ExecutionReport, SandboxError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SandboxError::Io { path, source }
    };
    let results_dir = run_dir.join(RESULTS_DIR);
    if results_dir.exists() {
        fs::remove_dir_all(&results_dir).map_err(io(&results_dir))?;
    }
    fs::create_dir_all(results_dir.join("quality")).map_err(io(&results_dir))?;
    let abs_run_dir = run_dir.canonicalize().map_err(io(run_dir))?;

    let mut cmd = Command::new("sh");
    cmd.arg("-c")
        .arg(test_command)
        .current_dir(&abs_run_dir)
        .env_clear()
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    for key in &config.env_allow {
        if let Ok(value) = std::env::var(key) {
            cmd.env(key, value);
        }
    }
    cmd.envs(&config.extra_env);
    cmd.env("CROSSLOOP_RESULTS", abs_run_dir.join(RESULTS_FILE));
    cmd.env("CROSSLOOP_QUALITY_DIR", abs_run_dir.join(RESULTS_DIR).join("quality"));
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }

    let started = Instant::now();
    let mut child = cmd.spawn().map_err(SandboxError::Spawn)?;
    let pid = child.id();
    let (tx, rx) = mpsc::channel();
    spawn_reader(child.stdout.take().expect("piped stdout"), config.log_cap_bytes, tx.clone(), 0);
    spawn_reader(child.stderr.take().expect("piped stderr"), config.log_cap_bytes, tx, 1);

    let waited = child.wait_timeout(timeout).map_err(io(run_dir))?;
    let (timed_out, status) = match waited {
        Some(status) => (false, Some(status)),
        None => {
            kill_group(pid);
            let status = child.wait().ok();
            (true, status)
        }
    };
    // reap anything the command left running in its group
    kill_group(pid);

    let mut streams: [Option<Captured>; 2] = [None, None];
    let deadline = Instant::now() + config.grace;
    while streams.iter().any(Option::is_none) {
        let left = deadline.saturating_duration_since(Instant::now());
        match rx.recv_timeout(left) {
            Ok((slot, captured)) => streams[slot] = Some(captured),
            Err(_) => break,
        }
    }
    let wall_time_secs = started.elapsed().as_secs_f64();
    let [stdout, stderr] = streams;

    let mut notes = Vec::new();
    let results = read_results(&abs_run_dir, &mut notes);
    let external_quality = read_quality(&abs_run_dir.join(RESULTS_DIR).join("quality"), &mut notes);
    let exit_code = status.and_then(|s| s.code());
    if timed_out {
        notes.push(format!("killed after exceeding the {}s timeout", timeout.as_secs_f64()));
    }

    let (exit_status, passed, total, found) = match (timed_out, results) {
        (true, Some((p, t))) => (ExitStatus::TimedOut, p, t, true),
        (true, None) => (ExitStatus::TimedOut, 0, 0, false),
        (false, Some((p, t))) => (ExitStatus::Completed, p, t, true),
        (false, None) if exit_code == Some(0) => {
            notes.push("no results file; exit code 0 scored as all passed".into());
            (ExitStatus::Completed, 1, 1, false)
        }
        (false, None) => (ExitStatus::CrashedBeforeTests, 0, 0, false),
    };

    Ok(ExecutionReport {
        tests_total: total,
        tests_passed: passed,
        results_file_found: found,
        exit_status,
        exit_code,
        stdout_excerpt: excerpt(stdout),
        stderr_excerpt: excerpt(stderr),
        wall_time_secs,
        external_quality,
        notes,
    })
}

fn read_results(run_dir: &Path, notes: &mut Vec<String>) -> Option<(u64, u64)> {
    let path = run_dir.join(RESULTS_FILE);
    let bytes = fs::read(&path).ok()?;
    match serde_json::from_slice::<ResultsFile>(&bytes) {
        Ok(r) if r.passed <= r.total => Some((r.passed, r.total)),
        Ok(r) => {
            notes.push(format!("results file claims {} passed of {}; ignored", r.passed, r.total));
            Some((0, 0))
        }
        Err(e) => {
            notes.push(format!("malformed results file ignored: {e}"));
            Some((0, 0))
        }
    }
}

fn read_quality(dir: &Path, notes: &mut Vec<String>) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let Ok(entries) = fs::read_dir(dir) else {
        return out;
    };
    for entry in entries.flatten() {
        let path = entry.path();
        let Some(name) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        match fs::read(&path).ok().and_then(|b| serde_json::from_slice::<QualityFile>(&b).ok()) {
            Some(q) if q.raw.is_finite() => {
                out.insert(name.to_string(), q.raw);
            }
            _ => notes.push(format!("unreadable quality file {name}.json ignored")),
        }
    }
    out
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    fn run(cmd: &str, timeout: Duration) -> ExecutionReport {
        let dir = tempfile::tempdir().unwrap();
        execute_tests(dir.path(), cmd, timeout, &SandboxConfig::default()).unwrap()
    }

    #[test]
    fn results_file_is_parsed() {
        let r = run(r#"echo '{"passed":3,"total":4}' > "$CROSSLOOP_RESULTS""#, Duration::from_secs(10));
        assert_eq!((r.tests_passed, r.tests_total), (3, 4));
        assert_eq!(r.exit_status, ExitStatus::Completed);
        assert!(r.results_file_found);
    }

    #[test]
    fn fallback_on_exit_code() {
        let ok = run("echo hi", Duration::from_secs(10));
        assert_eq!((ok.tests_passed, ok.tests_total), (1, 1));
        assert_eq!(ok.stdout_excerpt, "hi\n");
        let bad = run("echo oops >&2; exit 3", Duration::from_secs(10));
        assert_eq!(bad.exit_status, ExitStatus::CrashedBeforeTests);
        assert_eq!((bad.tests_passed, bad.tests_total), (0, 0));
        assert_eq!(bad.exit_code, Some(3));
        assert_eq!(bad.stderr_excerpt, "oops\n");
    }

    #[test]
    fn malformed_results_score_zero() {
        let r = run(r#"echo '{"passed":5,"total":4}' > .crossloop/results.json"#, Duration::from_secs(10));
        assert_eq!((r.tests_passed, r.tests_total), (0, 0));
        assert!(!r.notes.is_empty());
    }

    #[test]
    fn stale_results_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join(".crossloop")).unwrap();
        fs::write(dir.path().join(RESULTS_FILE), r#"{"passed":9,"total":9}"#).unwrap();
        let r = execute_tests(dir.path(), "exit 1", Duration::from_secs(10), &SandboxConfig::default()).unwrap();
        assert_eq!(r.tests_passed, 0);
    }

    #[test]
    fn environment_is_scrubbed() {
        std::env::set_var("CROSSLOOP_TEST_SECRET", "leak");
        let mut config = SandboxConfig::default();
        config.extra_env.insert("EXTRA".into(), "yes".into());
        let dir = tempfile::tempdir().unwrap();
        let r = execute_tests(
            dir.path(),
            r#"echo "[${CROSSLOOP_TEST_SECRET:-}] [$EXTRA]""#,
            Duration::from_secs(10),
            &config,
        )
        .unwrap();
        assert_eq!(r.stdout_excerpt, "[] [yes]\n");
    }

    #[test]
    fn output_is_capped() {
        let dir = tempfile::tempdir().unwrap();
        let config = SandboxConfig { log_cap_bytes: 10, ..SandboxConfig::default() };
        let r = execute_tests(dir.path(), "printf '%0100d' 0", Duration::from_secs(10), &config).unwrap();
        assert!(r.stdout_excerpt.starts_with("0000000000\n[truncated 90 bytes]"));
    }

    #[test]
    fn quality_files_are_collected() {
        let r = run(
            r#"echo '{"raw": 75}' > "$CROSSLOOP_QUALITY_DIR/security.json"; echo nope > "$CROSSLOOP_QUALITY_DIR/robustness.json""#,
            Duration::from_secs(10),
        );
        assert_eq!(r.external_quality.get("security"), Some(&75.0));
        assert!(!r.external_quality.contains_key("robustness"));
    }

    #[test]
    fn timeout_kills_process_tree() {
        let started = Instant::now();
        // background grandchild keeps stdout open; group kill must still return promptly
        let r = run("sleep 30 & sleep 30", Duration::from_millis(300));
        assert_eq!(r.exit_status, ExitStatus::TimedOut);
        assert!(started.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn partial_results_survive_timeout() {
        let r = run(r#"echo '{"passed":2,"total":5}' > "$CROSSLOOP_RESULTS"; sleep 30"#, Duration::from_millis(300));
        assert_eq!(r.exit_status, ExitStatus::TimedOut);
        assert_eq!((r.tests_passed, r.tests_total), (2, 5));
    }
}
