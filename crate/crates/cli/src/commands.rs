//! The four subcommands. Each returns `Ok` on completion or a [`CliError`]
//! carrying the exit code.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use duostep_core::exec::Execution;
use duostep_core::metrics::{
    grounding_accuracy, load_grounding_records, load_offline_records, load_omni_records, replay_offline,
    score_omni_records, LoadError, MetricReport,
};
use duostep_core::parsing::locate_point;
use duostep_core::sim::SpecError;
use duostep_core::suite::{run_suite, summarize, SuiteOptions, TaskSuite};
use duostep_core::ScreenDims;
use serde::Serialize;

use crate::config::{build_interpreter, build_locator, CliConfig};
use crate::CliError;

fn load_err(e: LoadError) -> CliError {
    CliError::Io(e.to_string())
}

fn spec_err(e: SpecError) -> CliError {
    CliError::Io(e.to_string())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("cannot write {}: {e}", path.display()));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(path, bytes).map_err(io)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

fn write_report(out: &Path, report: &MetricReport) -> Result<(), CliError> {
    write_json(&out.join("summary.json"), &report.summary())?;
    let mut lines = Vec::new();
    for r in &report.per_record {
        serde_json::to_writer(&mut lines, r).map_err(|e| CliError::Io(e.to_string()))?;
        lines.push(b'\n');
    }
    write_bytes(&out.join("records.jsonl"), &lines)
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn require(p: &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    p.clone().ok_or_else(|| CliError::Config(format!("missing {flag}")))
}

fn execution(cfg: &CliConfig) -> Execution {
    Execution::with_parallelism(cfg.parallelism)
}

pub fn cmd_ground(cfg: &CliConfig) -> Result<(), CliError> {
    let locator = build_locator(cfg.locator.as_ref(), cfg)?;
    let path = require(&cfg.records, "--records")?;
    let records = load_grounding_records(&path).map_err(load_err)?;
    let report = grounding_accuracy(&records, locator.as_ref(), execution(cfg));
    write_report(&cfg.out, &report)?;
    println!("grounding: n={} accuracy={}", report.n(), fmt(report.overall.ele_acc));
    Ok(())
}

enum RecordKind {
    Offline,
    Omni,
}

/// Desktop-script records are recognized by a `gt_sequence` field on the
/// first record.
fn sniff(path: &Path) -> Result<RecordKind, CliError> {
    let file =
        std::fs::File::open(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| CliError::Io(format!("{}:1: not valid JSON: {e}", path.display())))?;
        return Ok(if v.get("gt_sequence").is_some() { RecordKind::Omni } else { RecordKind::Offline });
    }
    Ok(RecordKind::Offline)
}

pub fn cmd_replay(cfg: &CliConfig) -> Result<(), CliError> {
    let path = require(&cfg.records, "--records")?;
    let report = match sniff(&path)? {
        RecordKind::Omni => {
            let records = load_omni_records(&path).map_err(load_err)?;
            score_omni_records(&records, execution(cfg))
        }
        RecordKind::Offline => {
            let records = load_offline_records(&path).map_err(load_err)?;
            let configured = cfg.interpreter.is_some() || cfg.locator.is_some();
            if records.is_empty() && !configured {
                replay_offline(&[], &NoBackend, &NoBackend, execution(cfg))
            } else {
                let interpreter = build_interpreter(cfg.interpreter.as_ref(), cfg)?;
                let locator = build_locator(cfg.locator.as_ref(), cfg)?;
                replay_offline(&records, interpreter.as_ref(), locator.as_ref(), execution(cfg))
            }
        }
    };
    write_report(&cfg.out, &report)?;
    let o = &report.overall;
    println!(
        "replay: n={} ele_acc={} op_f1={} step_sr={} seq_score={} action_score={}",
        report.n(),
        fmt(o.ele_acc),
        fmt(o.op_f1),
        fmt(o.step_sr),
        fmt(o.seq_score),
        fmt(o.action_score)
    );
    Ok(())
}

/// Stands in for backends when there is nothing to score.
struct NoBackend;

impl duostep_core::backends::Interpreter for NoBackend {
    fn interpret(
        &self,
        _: &duostep_core::backends::InterpreterRequest<'_>,
    ) -> Result<duostep_core::backends::Interpretation, duostep_core::backends::BackendError> {
        Err(duostep_core::backends::BackendError::NoScript(String::new()))
    }
}

impl duostep_core::backends::Locator for NoBackend {
    fn locate(
        &self,
        _: &duostep_core::backends::LocatorRequest<'_>,
    ) -> Result<String, duostep_core::backends::BackendError> {
        Ok(String::new())
    }
}

fn file_stem(task_id: &str) -> String {
    task_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

pub fn cmd_run(cfg: &CliConfig) -> Result<(), CliError> {
    let interpreter = build_interpreter(cfg.interpreter.as_ref(), cfg)?;
    let locator = build_locator(cfg.locator.as_ref(), cfg)?;
    let path = require(&cfg.env, "--env")?;
    let suite = TaskSuite::load(&path).map_err(spec_err)?;
    let failure: Mutex<Option<CliError>> = Mutex::new(None);
    let obs_dir = cfg.out.join("observations");
    let opts = SuiteOptions {
        max_steps: cfg.max_steps,
        ..SuiteOptions::default()
    };
    let runs = run_suite(&suite, interpreter.as_ref(), locator.as_ref(), execution(cfg), opts, |task, k, obs| {
        let p = obs_dir.join(file_stem(task)).join(format!("step_{k}.png"));
        if let Err(e) = write_bytes(&p, &obs.png) {
            failure.lock().expect("failure slot").get_or_insert(e);
        }
    });
    if let Some(e) = failure.into_inner().expect("failure slot") {
        return Err(e);
    }
    for r in &runs {
        write_json(&cfg.out.join("trajectories").join(format!("{}.json", file_stem(&r.task_id))), r)?;
    }
    let report = summarize(&suite, &runs);
    write_json(&cfg.out.join("summary.json"), &report)?;
    println!(
        "run: tasks={} success_rate={} step_sr={}",
        report.n_tasks,
        fmt(report.success_rate),
        fmt(report.step_sr)
    );
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ParseOutput {
    pub x: f64,
    pub y: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<duostep_core::parsing::PatternFamily>,
    pub fallback: bool,
}

pub fn parse_text(text: &str, dims: ScreenDims) -> ParseOutput {
    let p = locate_point(text, dims);
    ParseOutput {
        x: p.point.x,
        y: p.point.y,
        family: p.family,
        fallback: p.fallback(),
    }
}

pub fn cmd_parse(text: &str, dims: ScreenDims, out: &mut impl Write) -> Result<(), CliError> {
    let line = serde_json::to_string(&parse_text(text, dims)).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out, "{line}").map_err(|e| CliError::Io(e.to_string()))
}
