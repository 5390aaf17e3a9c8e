//! Task suites for interactive runs: each task bundles an environment, an
//! instruction, and the gold step sequence that solves it.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::action::{parse_command, OperationKind};
use crate::agent::{run_task_with, RunOptions, RunResult, TaskSpec, Terminal, DEFAULT_MAX_STEPS};
use crate::backends::{Interpreter, Locator, ScriptBook};
use crate::exec::Execution;
use crate::parsing::StructuredStep;
use crate::sim::{EnvSpec, Environment, Observation, SpecError};

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

/// One expected step. `element` is absent for HOTKEY and STOP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldStep {
    pub screen: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<String>,
    pub description: String,
    pub operation: OperationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl GoldStep {
    pub fn structured(&self) -> StructuredStep {
        StructuredStep::new(&self.description, self.operation.as_str(), self.value.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteTask {
    pub task_id: String,
    pub instruction: String,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    pub env: EnvSpec,
    /// Ends with STOP.
    pub gold: Vec<GoldStep>,
}

impl SuiteTask {
    pub fn task_spec(&self) -> TaskSpec {
        TaskSpec {
            task_id: self.task_id.clone(),
            goal: self.instruction.clone(),
            max_steps: self.max_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSuite {
    pub tasks: Vec<SuiteTask>,
}

impl TaskSuite {
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let suite: TaskSuite = crate::sim::from_json_with_pointer(text)?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let mut ids = std::collections::BTreeSet::new();
        let mut instructions = std::collections::BTreeSet::new();
        for (i, t) in self.tasks.iter().enumerate() {
            let base = format!("/tasks/{i}");
            if !ids.insert(&t.task_id) {
                return Err(SpecError::at(format!("{base}/task_id"), format!("duplicate task id {:?}", t.task_id)));
            }
            // scripted interpreters key their scripts by instruction
            if !instructions.insert(&t.instruction) {
                return Err(SpecError::at(
                    format!("{base}/instruction"),
                    "duplicate instruction".to_string(),
                ));
            }
            if t.max_steps == 0 {
                return Err(SpecError::at(format!("{base}/max_steps"), "must be positive"));
            }
            t.env.validate_at(&format!("{base}/env"))?;
            for (j, g) in t.gold.iter().enumerate() {
                let at = format!("{base}/gold/{j}");
                let Some(screen) = t.env.screens.iter().find(|s| s.id == g.screen) else {
                    return Err(SpecError::at(format!("{at}/screen"), format!("unknown screen {:?}", g.screen)));
                };
                if let Some(el) = &g.element {
                    if screen.element(el).is_none() {
                        return Err(SpecError::at(format!("{at}/element"), format!("unknown element {el:?}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Scripts replaying each task's gold steps, keyed by instruction.
    pub fn gold_scripts(&self) -> ScriptBook {
        ScriptBook::PerTask(
            self.tasks
                .iter()
                .map(|t| (t.instruction.clone(), t.gold.iter().map(GoldStep::structured).collect()))
                .collect(),
        )
    }
}

fn fold(v: Option<&str>) -> Option<String> {
    v.map(|s| s.trim().to_lowercase())
}

/// Per-gold-step success for one run. Trajectory step `k` is compared with
/// gold step `k`: same screen, same operation, same value after folding, and
/// for located steps the executed pixel must hit the gold element.
pub fn score_run(task: &SuiteTask, run: &RunResult) -> Vec<bool> {
    let dims = task.env.render_dims;
    task.gold
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let Some(s) = run.steps.get(k) else {
                return false;
            };
            if s.screen_id != g.screen || s.action.operation() != g.operation {
                return false;
            }
            if g.operation.takes_value() && fold(s.action.value()) != fold(g.value.as_deref()) {
                return false;
            }
            let Some(el) = &g.element else {
                return true;
            };
            let Some(screen) = task.env.screens.iter().find(|sc| sc.id == g.screen) else {
                return false;
            };
            parse_command(s.command.as_str())
                .ok()
                .and_then(|c| c.pixel)
                .and_then(|px| screen.hit_test(px, dims))
                .is_some_and(|hit| &hit.id == el)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    pub terminal: Terminal,
    pub success: bool,
    pub steps_taken: usize,
    pub gold_steps: usize,
    pub step_hits: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub n_tasks: usize,
    pub success_rate: Option<f64>,
    pub step_sr: Option<f64>,
    pub tasks: Vec<TaskOutcome>,
}

pub fn summarize(suite: &TaskSuite, runs: &[RunResult]) -> SuiteReport {
    let mut tasks: Vec<TaskOutcome> = suite
        .tasks
        .iter()
        .zip(runs)
        .map(|(t, r)| {
            let hits = score_run(t, r);
            TaskOutcome {
                task_id: t.task_id.clone(),
                terminal: r.terminal,
                success: r.goal_reached,
                steps_taken: r.steps.len(),
                gold_steps: hits.len(),
                step_hits: hits.iter().filter(|h| **h).count(),
                error_detail: r.error_detail.clone(),
            }
        })
        .collect();
    tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    let n = tasks.len();
    let successes = tasks.iter().filter(|t| t.success).count();
    let gold: usize = tasks.iter().map(|t| t.gold_steps).sum();
    let hits: usize = tasks.iter().map(|t| t.step_hits).sum();
    SuiteReport {
        n_tasks: n,
        success_rate: (n > 0).then(|| successes as f64 / n as f64),
        step_sr: (gold > 0).then(|| hits as f64 / gold as f64),
        tasks,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SuiteOptions {
    pub max_steps: Option<usize>,
    pub run: RunOptions,
}

/// Runs every task on a fresh environment. Results come back in suite order
/// whatever the execution mode. `hook` sees `(task_id, step index,
/// observation)` before each step.
pub fn run_suite<H>(
    suite: &TaskSuite,
    interpreter: &dyn Interpreter,
    locator: &dyn Locator,
    exec: Execution,
    opts: SuiteOptions,
    hook: H,
) -> Vec<RunResult>
where
    H: Fn(&str, usize, &Observation) + Sync + Send,
{
    exec.map(&suite.tasks, |t| {
        let mut spec = t.task_spec();
        if let Some(m) = opts.max_steps {
            spec.max_steps = m;
        }
        match Environment::new(Arc::new(t.env.clone())) {
            Ok(mut env) => run_task_with(&mut env, &spec, interpreter, locator, opts.run, |k, obs| {
                hook(&t.task_id, k, obs)
            }),
            Err(e) => RunResult {
                task_id: t.task_id.clone(),
                steps: Vec::new(),
                terminal: Terminal::Error,
                goal_reached: false,
                error_detail: Some(e.to_string()),
            },
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{NaiveLocator, OracleLocator, ScriptedInterpreter};
    use crate::fixtures::task_suite;

    #[test]
    fn gold_run_scores_every_step() {
        let suite = task_suite();
        let interp = ScriptedInterpreter::new(suite.gold_scripts());
        let runs = run_suite(&suite, &interp, &OracleLocator, Execution::Sequential, SuiteOptions::default(), |_, _, _| {});
        let rep = summarize(&suite, &runs);
        assert_eq!(rep.success_rate, Some(1.0));
        assert_eq!(rep.step_sr, Some(1.0));
    }

    #[test]
    fn naive_run_misses_some_steps() {
        let suite = task_suite();
        let interp = ScriptedInterpreter::new(suite.gold_scripts());
        let runs = run_suite(&suite, &interp, &NaiveLocator, Execution::Sequential, SuiteOptions::default(), |_, _, _| {});
        let rep = summarize(&suite, &runs);
        assert!(rep.step_sr.unwrap() < 1.0);
    }

    #[test]
    fn suite_json_round_trips() {
        let suite = task_suite();
        let text = serde_json::to_string(&suite).unwrap();
        assert_eq!(TaskSuite::from_json(&text).unwrap(), suite);
    }

    #[test]
    fn duplicate_task_ids_rejected() {
        let mut suite = task_suite();
        let dup = suite.tasks[0].clone();
        suite.tasks.push(dup);
        let err = suite.validate().unwrap_err();
        assert_eq!(err.pointer(), Some("/tasks/20/task_id"));
    }

    #[test]
    fn unknown_gold_element_rejected() {
        let mut suite = task_suite();
        suite.tasks[3].gold[0].element = Some("nope".into());
        let err = suite.validate().unwrap_err();
        assert_eq!(err.pointer(), Some("/tasks/3/gold/0/element"));
    }
}
