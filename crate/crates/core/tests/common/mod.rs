#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};

use serde_json::{json, Value};
use sitequota::plan::{build_plan, save_plan, Slack};
use sitequota::survey::{ModeratorSpec, PopulationEstimates};

pub const BIN: &str = env!("CARGO_BIN_EXE_sitequota");

/// A `sitequota serve` child process, killed on drop.
pub struct Server {
    child: Child,
    _stdout: BufReader<ChildStdout>,
    pub base: String,
    client: reqwest::blocking::Client,
}

impl Server {
    /// Starts the service and waits for its address line. On startup
    /// failure returns the exit status and stderr.
    pub fn start(config: &Path) -> Result<Server, (Option<i32>, String)> {
        let mut child = Command::new(BIN)
            .args(["serve", "--config", config.to_str().unwrap()])
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .expect("spawn service");
        let mut stdout = BufReader::new(child.stdout.take().unwrap());
        let mut line = String::new();
        stdout.read_line(&mut line).unwrap();
        let Some(addr) = line.trim().strip_prefix("listening on ") else {
            let status = child.wait().unwrap();
            let mut err = String::new();
            child.stderr.take().unwrap().read_to_string(&mut err).unwrap();
            return Err((status.code(), err));
        };
        Ok(Server {
            base: addr.to_owned(),
            child,
            _stdout: stdout,
            client: reqwest::blocking::Client::new(),
        })
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        let resp = self.client.get(self.url(path)).send().unwrap();
        (resp.status().as_u16(), resp.json().unwrap())
    }

    pub fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        let resp = self.client.post(self.url(path)).json(body).send().unwrap();
        (resp.status().as_u16(), resp.json().unwrap())
    }

    pub fn post_raw(&self, path: &str, body: &str) -> (u16, Value) {
        let resp = self
            .client
            .post(self.url(path))
            .header("content-type", "application/json")
            .body(body.to_owned())
            .send()
            .unwrap();
        (resp.status().as_u16(), resp.json().unwrap())
    }

    pub fn delete(&self, path: &str) -> (u16, Value) {
        let resp = self.client.delete(self.url(path)).send().unwrap();
        (resp.status().as_u16(), resp.json().unwrap())
    }

    /// SIGKILL, no chance to flush anything.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Two binary moderators with 50/50 shares, `J` sites and zero slack, so
/// every limit is `J / 2`.
pub fn write_half_plan(dir: &Path, total: u32) -> PathBuf {
    let est = PopulationEstimates::from_shares(vec![
        (ModeratorSpec::categorical("urban", "urban", &["yes", "no"]), vec![0.5, 0.5]),
        (ModeratorSpec::categorical("title1", "title1", &["yes", "no"]), vec![0.5, 0.5]),
    ])
    .unwrap();
    let plan = build_plan(&est, total, &Slack::uniform(0.0)).unwrap();
    let path = dir.join("plan.json");
    std::fs::write(&path, save_plan(&plan)).unwrap();
    path
}

pub fn write_config(dir: &Path, plan: &Path, read_only: bool) -> PathBuf {
    let path = dir.join(if read_only { "service-ro.json" } else { "service.json" });
    let config = json!({
        "plan": plan,
        "event_log": dir.join("events.ndjson"),
        "bind": "127.0.0.1:0",
        "read_only": read_only,
    });
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

pub fn site(id: &str, urban: &str, title1: &str) -> Value {
    json!({"site_id": id, "responses": {"urban": urban, "title1": title1}})
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Start, three admits, one rejection, one withdrawal, SIGKILL, restart.
/// The restarted service must report the same status and events, and a
/// what-if must leave the event feed unchanged.
pub fn durability_session(dir: &Path) -> Result<(), String> {
    let plan = write_half_plan(dir, 4);
    let config = write_config(dir, &plan, false);
    let server = Server::start(&config).map_err(|e| format!("startup failed: {e:?}"))?;

    let (code, fresh) = server.get("/status");
    ensure!(code == 200 && fresh["accepted"] == 0, "fresh status: {code} {fresh}");

    for (id, urban, title1) in [("a", "yes", "yes"), ("b", "yes", "no"), ("c", "no", "yes")] {
        let (code, d) = server.post("/sites", &site(id, urban, title1));
        ensure!(code == 200 && d["verdict"] == "accepted", "admit {id}: {code} {d}");
    }
    // urban=yes is at its limit of 2.
    let (code, d) = server.post("/sites", &site("d", "yes", "no"));
    ensure!(code == 200 && d["verdict"] == "rejected", "reject d: {code} {d}");
    ensure!(
        d["binding_categories"] == json!([{"moderator": "urban", "label": "yes"}]),
        "binding categories: {d}"
    );
    let (code, ack) = server.delete("/sites/b");
    ensure!(code == 200 && ack["seq"] == 5, "withdraw b: {code} {ack}");

    let (_, status_before) = server.get("/status");
    let (_, events_before) = server.get("/events?since=0");
    ensure!(events_before.as_array().map(Vec::len) == Some(5), "events: {events_before}");

    let (code, w) = server.post("/whatif", &site("e", "no", "no"));
    ensure!(code == 200 && w["verdict"] == "accepted" && w.get("seq").is_none(), "whatif: {code} {w}");
    let (_, events_after_whatif) = server.get("/events?since=0");
    ensure!(events_after_whatif == events_before, "whatif changed /events");

    server.kill();
    let server = Server::start(&config).map_err(|e| format!("restart failed: {e:?}"))?;
    let (_, status_after) = server.get("/status");
    let (_, events_after) = server.get("/events?since=0");
    ensure!(
        status_after == status_before,
        "status differs after restart:\n{status_before}\n{status_after}"
    );
    ensure!(events_after == events_before, "events differ after restart");
    ensure!(status_after["accepted"] == 2, "accepted after restart: {status_after}");
    Ok(())
}
