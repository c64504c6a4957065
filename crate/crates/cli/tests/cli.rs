use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::thread;
use std::time::{Duration, Instant};

fn elicit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elicit")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

/// Splits a CSV line, honouring double-quoted fields.
fn fields(line: &str) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut quoted = false;
    for c in line.chars() {
        match c {
            '"' => quoted = !quoted,
            ',' if !quoted => out.push(String::new()),
            _ => out.last_mut().unwrap().push(c),
        }
    }
    out
}

#[test]
fn default_verify_passes_every_case() {
    let out = elicit(&["verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("case,argmax,truth,gap,expected_failure,status"));
    let rows: Vec<Vec<String>> = lines.map(fields).collect();
    // 5 beliefs x 4 utilities x 5 levels, plus 5 beliefs x 5 levels x 3 rules.
    assert_eq!(rows.len(), 175);
    for r in &rows {
        let gap: f64 = r[3].parse().unwrap();
        assert!(gap < 1e-4, "{r:?}");
        assert_eq!((r[4].as_str(), r[5].as_str()), ("false", "PASS"));
    }
}

#[test]
fn naive_variant_rows_fail_by_design() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "naive.toml",
        "[utility]\nfamily = \"exponential\"\nparameter = 1.0\n\n[mechanism]\nalpha = 0.5\nreward = 1.0\nvariant = \"naive\"\n\n[verify]\nsweep = false\nlevels = [0.25, 0.5]\n",
    );
    let report = dir.path().join("verify.csv");
    let out = elicit(&["verify", "--config", &config, "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&report).unwrap();
    let rows: Vec<Vec<String>> = csv.lines().skip(1).map(fields).collect();
    let naive: Vec<_> = rows.iter().filter(|r| r[0].starts_with("naive")).collect();
    assert_eq!(naive.len(), 2);
    for r in &naive {
        assert_eq!((r[4].as_str(), r[5].as_str()), ("true", "FAIL"));
    }
    let half = naive.iter().find(|r| r[0].ends_with("alpha=0.5")).unwrap();
    assert!((half[1].parse::<f64>().unwrap() - 0.6225).abs() < 1e-3);
    assert!(rows.iter().filter(|r| r[0].starts_with("rule")).all(|r| r[5] == "PASS"));
}

#[test]
fn tight_tolerance_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.toml", "[verify]\nsweep = false\nlevels = [0.5]\n");
    let out = elicit(&["verify", "--config", &config, "--tolerance", "1e-15"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_config_exits_2_with_a_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bad.toml", "seed = 4\n\n[grid]\npoints = [1\n");
    let out = elicit(&["curve", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"), "{}", String::from_utf8_lossy(&out.stderr));

    let invalid = write_config(dir.path(), "invalid.toml", "[mechanism]\nalpha = 1.5\nreward = 1.0\n");
    assert_eq!(elicit(&["verify", "--config", &invalid]).status.code(), Some(2));
    assert_eq!(elicit(&["verify", "--config", "/nonexistent/config.toml"]).status.code(), Some(2));
    assert_eq!(elicit(&["verify", "--bogus"]).status.code(), Some(2));
    assert_eq!(elicit(&["curve", "--seed", "x"]).status.code(), Some(2));
}

#[test]
fn curve_requires_a_seed() {
    let out = elicit(&["curve"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn uniform_linear_curve() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = elicit(&["curve", "--seed", "99", "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv = std::fs::read_to_string(&a).unwrap();
    assert_eq!(csv, std::fs::read_to_string(&b).unwrap());
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("q,v,naive_v,empirical_mean,std_error"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 101);
    for r in &rows {
        assert!((r[1] - r[2]).abs() <= 1e-12, "{r:?}");
        if r[4] > 0.0 {
            assert!((r[3] - r[1]).abs() <= 4.0 * r[4], "{r:?}");
        }
    }
}

#[test]
fn simulate_ranks_strategies_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "sim.toml",
        "seed = 5\n\n[belief]\nkind = \"beta\"\nalpha = 2.0\nbeta = 5.0\n\n[utility]\nfamily = \"exponential\"\nparameter = 1.0\n\n[grid]\ntrials = 200000\n\n[simulate]\nstrategies = [{ fixed = 0.9 }, \"truthful\"]\n",
    );
    let first = elicit(&["simulate", "--config", &config]);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(first.stdout, elicit(&["simulate", "--config", &config]).stdout);
    let table = String::from_utf8(first.stdout).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "rank,strategy,report,mean_utility,std_error");
    assert!(lines[1].starts_with("1,truthful,"), "{table}");
    assert!(lines[2].starts_with("2,fixed(0.9),"), "{table}");
}

struct Server {
    child: Option<Child>,
    address: String,
}

impl Server {
    fn start(log: &Path) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_elicit"))
            .args(["serve", "--address", "127.0.0.1:0", "--log", log.to_str().unwrap()])
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let address = line.trim().strip_prefix("listening on http://").expect("listening line").to_owned();
        Server { child: Some(child), address }
    }

    /// Sends SIGTERM and waits for a clean exit.
    fn stop(mut self) -> Output {
        let mut child = self.child.take().unwrap();
        let status = Command::new("kill").args(["-TERM", &child.id().to_string()]).status().unwrap();
        assert!(status.success());
        let deadline = Instant::now() + Duration::from_secs(10);
        while child.try_wait().unwrap().is_none() {
            assert!(Instant::now() < deadline, "server ignored SIGTERM");
            thread::sleep(Duration::from_millis(20));
        }
        child.wait_with_output().unwrap()
    }

    fn kill(mut self) {
        let mut child = self.child.take().unwrap();
        child.kill().unwrap();
        child.wait().unwrap();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn http(address: &str, method: &str, path: &str, body: Option<&str>) -> (u16, String) {
    let mut stream = TcpStream::connect(address).unwrap();
    let body = body.unwrap_or("");
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {address}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    let (head, body) = response.split_once("\r\n\r\n").unwrap();
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    (status, body.to_owned())
}

fn json_field(body: &str, key: &str) -> String {
    let needle = format!("\"{key}\":\"");
    let start = body.find(&needle).unwrap_or_else(|| panic!("{key} missing from {body}")) + needle.len();
    body[start..].split('"').next().unwrap().to_owned()
}

#[test]
fn serve_recovers_sessions_after_a_kill() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let (id, commitment) = {
        let server = Server::start(&log);
        let (status, body) = http(&server.address, "POST", "/sessions", Some(r#"{"levels":[0.25,0.75],"reward":3.0}"#));
        assert_eq!(status, 201, "{body}");
        let id = json_field(&body, "id");
        let (status, _) =
            http(&server.address, "POST", &format!("/sessions/{id}/reports"), Some(r#"{"level":0.25,"value":0.2}"#));
        assert_eq!(status, 200);
        let commitment = json_field(&body, "commitment");
        server.kill();
        (id, commitment)
    };

    let server = Server::start(&log);
    let (status, body) = http(&server.address, "GET", &format!("/sessions/{id}"), None);
    assert_eq!(status, 200, "{body}");
    assert_eq!(json_field(&body, "commitment"), commitment);
    assert!(body.contains("\"value\":0.2"), "{body}");
    assert_eq!(json_field(&body, "state"), "reporting");
    let out = server.stop();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("flushed"));
}

#[test]
fn serve_handles_concurrent_creates() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let server = Server::start(&log);
    let handles: Vec<_> = (0..100)
        .map(|_| {
            let address = server.address.clone();
            thread::spawn(move || {
                let (status, body) = http(&address, "POST", "/sessions", Some(r#"{"levels":[0.5],"reward":1.0}"#));
                assert_eq!(status, 201, "{body}");
                json_field(&body, "id")
            })
        })
        .collect();
    let ids: HashSet<String> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(ids.len(), 100);
    assert!(server.stop().status.success());
    let text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains("\"created\"")).count(), 100);
}

#[test]
fn serve_rejects_unusable_addresses() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let log = log.to_str().unwrap();
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let taken = taken.local_addr().unwrap().to_string();
    for address in ["not-an-address", "127.0.0.1:99999", taken.as_str()] {
        let start = Instant::now();
        let out = elicit(&["serve", "--address", address, "--log", log]);
        assert_eq!(out.status.code(), Some(2), "{address}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(start.elapsed() < Duration::from_secs(10));
    }
}

#[test]
fn serve_rejects_an_unusable_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("corrupt.jsonl");
    std::fs::write(&log, "not json\n").unwrap();
    let out = elicit(&["serve", "--address", "127.0.0.1:0", "--log", log.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
