//! Run reports: JSON files with all floating-point values rounded to 12
//! significant digits so identical inputs produce byte-identical output.
//! Wall-clock timing goes to standard output only, never into the file.

use serde::Serialize;
use xfermax::lowrank::{RankBoundReport, RankRule};
use xfermax::problem::{ProblemSpec, ValidationReport};
use xfermax::sdp::{CertReport, SdpSolution};
use xfermax::simulate::sig12;
use xfermax::synthesis::{ControlSchedule, RepetitionChoice};

#[derive(Serialize)]
pub struct RunReport {
    pub problem: ProblemEcho,
    pub validation: ValidationEcho,
    pub solver: SolverEcho,
    pub transfer: TransferEcho,
    pub rank: RankEcho,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleEcho>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertEcho>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationEcho>,
}

#[derive(Serialize)]
pub struct ProblemEcho {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub n: usize,
    pub coupling: Vec<Vec<f64>>,
    pub p0: Vec<f64>,
}

#[derive(Serialize)]
pub struct ValidationEcho {
    pub neg_definite: bool,
    pub irreducible: bool,
    pub p0_nonnegative: bool,
    pub pass: bool,
}

#[derive(Serialize)]
pub struct SolverEcho {
    pub status: String,
    pub objective_value: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub perturbed: bool,
}

#[derive(Serialize)]
pub struct TransferEcho {
    /// Attainable gain of the target squared amplitude.
    pub gain: f64,
    /// Peak final squared amplitude p_n(0) + gain.
    pub p_n_final: f64,
    /// Peak final amplitude √(p_n(0) + gain).
    pub r_n_max: f64,
}

#[derive(Serialize)]
pub struct RankEcho {
    pub before: usize,
    pub after: usize,
    pub general_bound: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub special_bound: Option<usize>,
    pub rule: String,
}

#[derive(Serialize)]
pub struct ScheduleEcho {
    pub segments: usize,
    pub repetitions: usize,
    pub repetitions_satisfied: bool,
    pub total_duration: f64,
    pub directions: Vec<Vec<f64>>,
    pub durations: Vec<f64>,
}

#[derive(Serialize)]
pub struct CertEcho {
    pub pass: bool,
    pub gap: f64,
    pub min_eig_primal: f64,
    pub min_eig_dual: f64,
    pub complementarity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_slack: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failed: Vec<String>,
}

#[derive(Serialize)]
pub struct SimulationEcho {
    pub r_final: Vec<f64>,
    pub r_target_final: f64,
    pub tprime_final: f64,
    pub stop: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xy_r_final: Option<Vec<f64>>,
}

fn round_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| sig12(x)).collect()
}

pub fn problem_echo(spec: &ProblemSpec) -> ProblemEcho {
    let n = spec.n();
    let coupling = (0..n)
        .map(|i| (0..n).map(|j| sig12(spec.coupling().get(i, j))).collect())
        .collect();
    ProblemEcho {
        label: spec.label.clone(),
        n,
        coupling,
        p0: round_vec(spec.p0()),
    }
}

pub fn validation_echo(v: &ValidationReport) -> ValidationEcho {
    ValidationEcho {
        neg_definite: v.neg_definite,
        irreducible: v.irreducible,
        p0_nonnegative: v.p0_nonnegative,
        pass: v.pass(),
    }
}

pub fn solver_echo(sol: &SdpSolution) -> SolverEcho {
    SolverEcho {
        status: sol.status.to_string(),
        objective_value: sig12(sol.objective_value),
        gap: sig12(sol.gap),
        primal_residual: sig12(sol.primal_residual),
        dual_residual: sig12(sol.dual_residual),
        iterations: sol.iterations,
        perturbed: sol.perturbed,
    }
}

pub fn transfer_echo(p_n_0: f64, gain: f64) -> TransferEcho {
    let p_n_final = (p_n_0 + gain).max(0.0);
    TransferEcho {
        gain: sig12(gain),
        p_n_final: sig12(p_n_final),
        r_n_max: sig12(p_n_final.sqrt()),
    }
}

pub fn rank_echo(before: usize, after: usize, bound: &RankBoundReport) -> RankEcho {
    RankEcho {
        before,
        after,
        general_bound: bound.general_bound,
        special_bound: bound.special_bound,
        rule: match bound.rule {
            RankRule::General => "general",
            RankRule::LowDimension => "low-dimension",
            RankRule::Banded => "banded",
        }
        .to_string(),
    }
}

pub fn schedule_echo(schedule: &ControlSchedule, choice: &RepetitionChoice) -> ScheduleEcho {
    ScheduleEcho {
        segments: schedule.segments.len(),
        repetitions: schedule.repetitions,
        repetitions_satisfied: choice.satisfied,
        total_duration: sig12(schedule.total_duration),
        directions: schedule
            .segments
            .iter()
            .map(|s| round_vec(&s.direction))
            .collect(),
        durations: schedule
            .segments
            .iter()
            .map(|s| sig12(s.duration))
            .collect(),
    }
}

pub fn cert_echo(cert: &CertReport) -> CertEcho {
    CertEcho {
        pass: cert.pass,
        gap: sig12(cert.gap),
        min_eig_primal: sig12(cert.min_eig_primal),
        min_eig_dual: sig12(cert.min_eig_dual),
        complementarity: sig12(cert.complementarity),
        bound_slack: cert.bound_slack.map(sig12),
        failed: cert.failed.clone(),
    }
}

pub fn simulation_echo(
    r_final: &[f64],
    tprime_final: f64,
    stop: &str,
    xy_r_final: Option<Vec<f64>>,
) -> SimulationEcho {
    SimulationEcho {
        r_target_final: sig12(*r_final.last().unwrap_or(&0.0)),
        r_final: round_vec(r_final),
        tprime_final: sig12(tprime_final),
        stop: stop.to_string(),
        xy_r_final: xy_r_final.map(|v| round_vec(&v)),
    }
}

pub fn to_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("serializable report");
    s.push('\n');
    s
}
