//! Per-attempt aggregates over every persisted task of a workspace.
//!
//! A task that short-circuited at attempt k keeps reusing its best for the
//! rest of its budget, so it counts as reused (at zero cost, with its best
//! score) in every later attempt column.

use std::fmt::Write;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::backend::Cost;
use crate::score::{Fraction, Score};
use crate::state::{self, StateError, TaskState};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("workspace {0} has no persisted tasks")]
    EmptyWorkspace(String),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttemptRow {
    pub attempt: u32,
    /// Tasks with a record (or a carried-forward reuse) at this attempt.
    pub tasks: usize,
    pub mean_score: BigRational,
    pub mean_best: BigRational,
    pub reused: usize,
    pub total_cost: Cost,
}

impl AttemptRow {
    /// `None` at the first attempt, where no prior best can exist.
    pub fn reuse_rate(&self) -> Option<BigRational> {
        (self.attempt > 1 && self.tasks > 0).then(|| ratio(self.reused as u64, self.tasks as u64))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskRow {
    pub task_id: String,
    pub attempts: usize,
    pub budget: u32,
    pub best: Option<Score>,
    pub solved: bool,
    pub total_cost: Cost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub tasks: Vec<TaskRow>,
    pub attempts: Vec<AttemptRow>,
}

fn ratio(n: u64, d: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn big(f: Fraction) -> BigRational {
    ratio(*f.numer(), *f.denom())
}

/// Two-decimal percentage, rounding half away from zero.
pub fn percent(value: &BigRational) -> String {
    let hundredths = value * BigRational::from_integer(BigInt::from(10_000));
    let magnitude = hundredths.abs();
    let rounded: BigInt = (magnitude.numer() * 2 + magnitude.denom()) / (magnitude.denom() * 2);
    let sign = if hundredths.is_negative() && !rounded.is_zero() { "-" } else { "" };
    let cents: BigInt = &rounded % 100;
    format!("{sign}{}.{:0>2}%", &rounded / 100, cents.to_string())
}

/// Relative saving of `last` over `first`; `None` when `first` cost nothing.
pub fn cost_reduction(first: Cost, last: Cost) -> Option<BigRational> {
    if first.pico() == 0 {
        return None;
    }
    let first = BigInt::from(first.pico());
    Some(BigRational::new(&first - BigInt::from(last.pico()), first))
}

struct Effective {
    score: Fraction,
    best: Fraction,
    reused: bool,
    cost: Cost,
}

fn effective(state: &TaskState, trajectory: &[Option<Score>], t: u32) -> Option<Effective> {
    let attempts = state.attempts();
    let best_at = |i: usize| trajectory[i].map_or(Fraction::zero(), |s| s.value());
    if let Some(record) = attempts.get(t as usize - 1) {
        return Some(Effective {
            score: record.functional_score.value(),
            best: best_at(t as usize - 1),
            reused: record.reused_historical_best,
            cost: record.usage.monetary_cost,
        });
    }
    let last = attempts.last()?;
    (last.reused_historical_best && t <= state.spec().attempt_budget).then(|| Effective {
        score: last.functional_score.value(),
        best: best_at(attempts.len() - 1),
        reused: true,
        cost: Cost::default(),
    })
}

impl Report {
    pub fn from_states(states: &[TaskState]) -> Report {
        let max_attempt = states
            .iter()
            .map(|s| s.spec().attempt_budget.max(s.attempts().len() as u32))
            .max()
            .unwrap_or(0);
        let trajectories: Vec<_> = states.iter().map(TaskState::best_trajectory).collect();
        let mut attempts = Vec::new();
        for t in 1..=max_attempt {
            let cells: Vec<Effective> =
                states.iter().zip(&trajectories).filter_map(|(s, tr)| effective(s, tr, t)).collect();
            if cells.is_empty() {
                continue;
            }
            let n = cells.len() as u64;
            let sum = |f: &dyn Fn(&Effective) -> Fraction| {
                cells.iter().fold(BigRational::zero(), |acc, c| acc + big(f(c)))
            };
            attempts.push(AttemptRow {
                attempt: t,
                tasks: cells.len(),
                mean_score: sum(&|c| c.score) / ratio(n, 1),
                mean_best: sum(&|c| c.best) / ratio(n, 1),
                reused: cells.iter().filter(|c| c.reused).count(),
                total_cost: cells.iter().map(|c| c.cost).sum(),
            });
        }
        let tasks = states
            .iter()
            .map(|s| TaskRow {
                task_id: s.task_id().to_string(),
                attempts: s.attempts().len(),
                budget: s.spec().attempt_budget,
                best: s.best_score(),
                solved: s.best_score().is_some_and(|b| b.meets(s.spec().full_score)),
                total_cost: s.attempts().iter().map(|a| a.usage.monetary_cost).sum(),
            })
            .collect();
        Report { tasks, attempts }
    }

    /// Reduction of the last attempt's cost relative to the first.
    pub fn cost_reduction(&self) -> Option<BigRational> {
        let (first, last) = (self.attempts.first()?, self.attempts.last()?);
        if first.attempt == last.attempt {
            return None;
        }
        cost_reduction(first.total_cost, last.total_cost)
    }

    pub fn render_by_attempt(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:>6} {:>11} {:>11} {:>8} {:>12}", "attempt", "tasks", "mean score", "mean best", "reuse", "cost");
        for row in &self.attempts {
            let reuse = row.reuse_rate().map_or_else(|| "--".to_string(), |r| percent(&r));
            let _ = writeln!(
                out,
                "{:<8} {:>6} {:>11} {:>11} {:>8} {:>12}",
                format!("A{}", row.attempt),
                row.tasks,
                percent(&row.mean_score),
                percent(&row.mean_best),
                reuse,
                row.total_cost.to_string(),
            );
        }
        if let (Some(first), Some(last), Some(r)) = (self.attempts.first(), self.attempts.last(), self.cost_reduction()) {
            let _ = writeln!(out, "cost reduction A{} vs A{}: {}", last.attempt, first.attempt, percent(&r));
        }
        out
    }

    pub fn render_by_task(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:>9} {:>22} {:>9} {:>12}", "task", "attempts", "best", "solved", "cost");
        for row in &self.tasks {
            let _ = writeln!(
                out,
                "{:<24} {:>9} {:>22} {:>9} {:>12}",
                row.task_id,
                format!("{}/{}", row.attempts, row.budget),
                row.best.map_or_else(|| "-".to_string(), |b| b.to_string()),
                if row.solved { "yes" } else { "no" },
                row.total_cost.to_string(),
            );
        }
        out
    }
}

/// Loads every task state in `workspace` and aggregates them.
pub fn load_report(workspace: &Path) -> Result<Report, ReportError> {
    let ids = state::list_tasks(workspace)?;
    if ids.is_empty() {
        return Err(ReportError::EmptyWorkspace(workspace.display().to_string()));
    }
    let states = ids.iter().map(|id| state::load(workspace, id)).collect::<Result<Vec<_>, _>>()?;
    Ok(Report::from_states(&states))
}
