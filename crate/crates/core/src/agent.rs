//! The two-stage agent loop: interpret, locate, assemble the triplet,
//! execute, repeat.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{serialize_action, ActionError, ActionTriplet, CommandString, OperationKind};
use crate::backends::{
    BackendError, Interpretation, Interpreter, InterpreterRequest, Locator, LocatorRequest,
};
use crate::parsing::{locate_point, PatternFamily, StructuredStep};
use crate::sim::{ApplyOutcome, Environment, Observation};

pub const DEFAULT_MAX_STEPS: usize = 15;

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub goal: String,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

impl TaskSpec {
    pub fn new(task_id: &str, goal: &str) -> Self {
        Self {
            task_id: task_id.into(),
            goal: goal.into(),
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

/// A prior step as the interpreter sees it. Offline replays know the
/// structured step but not the executed triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub step: StructuredStep,
    pub action: Option<ActionTriplet>,
}

impl HistoryEntry {
    pub fn offline(step: StructuredStep) -> Self {
        Self { step, action: None }
    }

    pub fn executed(step: StructuredStep, action: ActionTriplet) -> Self {
        Self {
            step,
            action: Some(action),
        }
    }
}

/// One line per prior step: `k. OP "value" on "description"`; `(none)` when
/// empty.
pub fn history_to_text(history: &[HistoryEntry]) -> String {
    if history.is_empty() {
        return "(none)".to_string();
    }
    let lines: Vec<String> = history
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let op = h
                .action
                .as_ref()
                .map(|a| a.operation().as_str().to_string())
                .unwrap_or_else(|| h.step.operation_name.trim().to_uppercase());
            let value = h
                .action
                .as_ref()
                .map(|a| a.value())
                .unwrap_or(h.step.value.as_deref());
            match value {
                Some(v) => format!("{}. {op} \"{v}\" on \"{}\"", i + 1, h.step.description),
                None => format!("{}. {op} on \"{}\"", i + 1, h.step.description),
            }
        })
        .collect();
    lines.join("\n")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("interpreter: {0}")]
    Interpreter(BackendError),
    #[error("locator: {0}")]
    Locator(BackendError),
    #[error("action: {0}")]
    Action(#[from] ActionError),
}

/// Everything one step produced, before execution.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub interpretation: Interpretation,
    pub locator_raw: Option<String>,
    pub point_family: Option<PatternFamily>,
    pub action: ActionTriplet,
}

/// One interpreter call; one locator call unless the step is STOP.
pub fn step(
    observation: &Observation,
    task: &TaskSpec,
    history: &[HistoryEntry],
    interpreter: &dyn Interpreter,
    locator: &dyn Locator,
) -> Result<StepOutput, StepError> {
    let interpretation = interpreter
        .interpret(&InterpreterRequest {
            task: &task.goal,
            history,
            observation,
        })
        .map_err(StepError::Interpreter)?;
    let structured = &interpretation.step;
    let op: OperationKind = structured.operation_name.parse()?;
    if op == OperationKind::Stop {
        return Ok(StepOutput {
            interpretation,
            locator_raw: None,
            point_family: None,
            action: ActionTriplet::stop(),
        });
    }
    let raw = locator
        .locate(&LocatorRequest {
            description: &structured.description,
            observation,
        })
        .map_err(StepError::Locator)?;
    let parsed = locate_point(&raw, observation.dims);
    // a stray value on CLICK is dropped rather than failing the step
    let value = structured.value.clone().filter(|_| op.takes_value());
    let action = ActionTriplet::new(op, value, Some(parsed.point))?;
    Ok(StepOutput {
        interpretation,
        locator_raw: Some(raw),
        point_family: parsed.family,
        action,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub index: usize,
    pub observation_digest: String,
    pub screen_id: String,
    pub structured: StructuredStep,
    pub action: ActionTriplet,
    pub command: CommandString,
    pub interpreter_raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locator_raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_family: Option<PatternFamily>,
    pub outcome: ApplyOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Terminal {
    Stopped,
    BudgetExhausted,
    EnvGoalReached,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub task_id: String,
    pub steps: Vec<TrajectoryStep>,
    pub terminal: Terminal,
    /// Whether the environment goal held when the run ended.
    pub goal_reached: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_detail: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// End the run as soon as the goal holds instead of waiting for STOP.
    pub stop_on_goal: bool,
}

pub fn run_task(
    env: &mut Environment,
    task: &TaskSpec,
    interpreter: &dyn Interpreter,
    locator: &dyn Locator,
) -> RunResult {
    run_task_with(env, task, interpreter, locator, RunOptions::default(), |_, _| {})
}

/// [`run_task`] with options and a hook that sees every observation before
/// the step that consumes it.
pub fn run_task_with(
    env: &mut Environment,
    task: &TaskSpec,
    interpreter: &dyn Interpreter,
    locator: &dyn Locator,
    opts: RunOptions,
    mut on_observation: impl FnMut(usize, &Observation),
) -> RunResult {
    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut steps = Vec::new();
    let mut terminal = None;
    let mut error_detail = None;
    for index in 1..=task.max_steps {
        let obs = env.observe();
        on_observation(index, &obs);
        let out = match step(&obs, task, &history, interpreter, locator) {
            Ok(out) => out,
            Err(e) => {
                error_detail = Some(e.to_string());
                terminal = Some(Terminal::Error);
                break;
            }
        };
        let command = serialize_action(&out.action, env.dims());
        let screen_id = env.screen_id().to_string();
        let outcome = match env.apply_command(command.as_str()) {
            Ok(o) => o,
            Err(e) => {
                error_detail = Some(format!("executor: {e}"));
                terminal = Some(Terminal::Error);
                break;
            }
        };
        let is_stop = out.action.operation() == OperationKind::Stop;
        history.push(HistoryEntry::executed(
            out.interpretation.step.clone(),
            out.action.clone(),
        ));
        steps.push(TrajectoryStep {
            index,
            observation_digest: obs.digest(),
            screen_id,
            structured: out.interpretation.step,
            action: out.action,
            command,
            interpreter_raw: out.interpretation.raw,
            locator_raw: out.locator_raw,
            point_family: out.point_family,
            outcome,
        });
        if is_stop {
            terminal = Some(if env.is_goal() {
                Terminal::EnvGoalReached
            } else {
                Terminal::Stopped
            });
            break;
        }
        if opts.stop_on_goal && env.is_goal() {
            terminal = Some(Terminal::EnvGoalReached);
            break;
        }
    }
    RunResult {
        task_id: task.task_id.clone(),
        steps,
        terminal: terminal.unwrap_or(Terminal::BudgetExhausted),
        goal_reached: env.is_goal(),
        error_detail,
    }
}
