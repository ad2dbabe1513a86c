//! Analysis reports: the JSON document the driver writes, built from an
//! iteration trace.

use crate::domain::ExtReal;
use crate::engine::{IterationTrace, Method, RunStatus, StopReason};
use crate::ir::EquationSystem;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub format: u32,
    pub program: String,
    pub method: String,
    pub templates: usize,
    pub coords: usize,
    pub vars: usize,
    pub iterations: usize,
    pub improvements: usize,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<String>,
    /// 1-based coordinate label -> template name -> bound.
    pub bounds: BTreeMap<String, BTreeMap<String, ExtReal>>,
    pub timing: TimingReport,
    pub config: ConfigEcho,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimingReport {
    pub parse_s: f64,
    pub relax_s: f64,
    pub lp_s: f64,
    pub closure_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub max_iters: usize,
    pub accel: bool,
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub eps_margin: f64,
    pub initial_policy: String,
}

pub fn status_string(status: RunStatus) -> (String, Option<String>) {
    match status {
        RunStatus::Fixpoint => ("fixpoint".into(), None),
        RunStatus::Postfixpoint(reason) => (
            "postfixpoint".into(),
            Some(
                match reason {
                    StopReason::SlaterStop => "slater-stop",
                    StopReason::MaxIters => "max-iters",
                    StopReason::AccelWidened => "accel-widened",
                    StopReason::NoImprovement => "no-improvement",
                }
                .into(),
            ),
        ),
        RunStatus::NotConverged => ("not-converged".into(), None),
    }
}

pub fn method_string(method: Method) -> String {
    match method {
        Method::Kleene => "kleene".into(),
        Method::Policy => "policy".into(),
    }
}

impl Report {
    pub fn from_trace(
        program: &str,
        method: Method,
        sys: &EquationSystem,
        trace: &IterationTrace,
        parse_s: f64,
        config: ConfigEcho,
    ) -> Self {
        let (status, stop_reason) = status_string(trace.status);
        let mut bounds = BTreeMap::new();
        for (i, row) in trace.value.0.iter().enumerate() {
            let mut per_template = BTreeMap::new();
            for (name, bound) in sys.template_names().iter().zip(row.iter()) {
                per_template.insert(name.clone(), bound);
            }
            bounds.insert((i + 1).to_string(), per_template);
        }
        Report {
            format: 1,
            program: program.into(),
            method: method_string(method),
            templates: sys.template_count(),
            coords: sys.len(),
            vars: sys.dim(),
            iterations: trace.iterations,
            improvements: trace.improvements,
            status,
            stop_reason,
            bounds,
            timing: TimingReport {
                parse_s,
                relax_s: trace.timings.relax.as_secs_f64(),
                lp_s: trace.timings.lp.as_secs_f64(),
                closure_s: trace.timings.closure.as_secs_f64(),
                total_s: trace.timings.total.as_secs_f64(),
            },
            config,
        }
    }
}
