//! Built-in reproduction fixtures: the three worked instances with their
//! published values, solved fresh and compared at fixed tolerances.

use xfermax::linalg::spectral_decompose;
use xfermax::lowrank::rank_reduce;
use xfermax::problem::ProblemSpec;
use xfermax::sdp::{solve, SolveStatus, SolverConfig};
use xfermax::simulate::sig12;

pub struct ReproRow {
    pub case: &'static str,
    pub quantity: String,
    pub reference: f64,
    pub computed: f64,
    pub tol: f64,
}

impl ReproRow {
    pub fn pass(&self) -> bool {
        (self.reference - self.computed).abs() <= self.tol
    }
}

fn solver_cfg() -> SolverConfig {
    SolverConfig {
        gap_tol: 1e-10,
        ..SolverConfig::default()
    }
}

fn rows_2x2() -> Result<Vec<ReproRow>, String> {
    let spec = ProblemSpec::chain(2, 1.0, vec![1.0, 0.0]).expect("fixture");
    let sol = solve(&spec.build_constraints().sdp_problem(), &solver_cfg());
    if sol.status != SolveStatus::Optimal {
        return Err(format!("two-state fixture did not solve: {}", sol.status));
    }
    Ok(vec![ReproRow {
        case: "2x2",
        quantity: "peak transfer efficiency".into(),
        reference: 2f64.sqrt() - 1.0,
        computed: sol.objective_value.max(0.0).sqrt(),
        tol: 1e-6,
    }])
}

fn rows_3x3() -> Result<Vec<ReproRow>, String> {
    let spec = ProblemSpec::chain(3, 1.0, vec![1.0, 1.0, 0.0]).expect("fixture");
    let sdp = spec.build_constraints().sdp_problem();
    let sol = solve(&sdp, &solver_cfg());
    if sol.status != SolveStatus::Optimal {
        return Err(format!("three-state fixture did not solve: {}", sol.status));
    }
    let reduced = rank_reduce(&sdp, &sol.m).map_err(|e| e.to_string())?;
    let dec = spectral_decompose(&reduced).map_err(|e| e.to_string())?;
    let top = dec.eigenvalues[0];
    let vec = &dec.eigenvectors[0];
    let sign = if vec[0] >= 0.0 { 1.0 } else { -1.0 };
    let m: Vec<f64> = vec.iter().map(|v| sign * v).collect();

    let mut rows = vec![
        ReproRow {
            case: "3x3",
            quantity: "transfer gain".into(),
            reference: 0.2821,
            computed: sol.objective_value,
            tol: 1e-3,
        },
        ReproRow {
            case: "3x3",
            quantity: "schedule duration (top eigenvalue)".into(),
            reference: 0.8589,
            computed: top,
            tol: 2e-3,
        },
    ];
    for (i, reference) in [0.4546, 0.8257, 0.3339].iter().enumerate() {
        rows.push(ReproRow {
            case: "3x3",
            quantity: format!("direction component m_{}", i + 1),
            reference: *reference,
            computed: m[i],
            tol: 2e-3,
        });
    }
    rows.push(ReproRow {
        case: "3x3",
        quantity: "peak final amplitude".into(),
        reference: 0.5311,
        computed: sol.objective_value.max(0.0).sqrt(),
        tol: 1e-3,
    });
    rows.push(ReproRow {
        case: "3x3",
        quantity: "control ratio m_2/m_1".into(),
        reference: 1.8163,
        computed: m[1] / m[0],
        tol: 1e-3,
    });
    rows.push(ReproRow {
        case: "3x3",
        quantity: "control ratio m_3/m_1".into(),
        reference: 0.7345,
        computed: m[2] / m[0],
        tol: 1e-3,
    });
    Ok(rows)
}

fn rows_3chain() -> Result<Vec<ReproRow>, String> {
    let delta = 1e-3;
    let spec =
        ProblemSpec::chain(3, 1.0, vec![1.0, delta * delta, delta * delta]).expect("fixture");
    let sol = solve(&spec.build_constraints().sdp_problem(), &solver_cfg());
    if sol.status != SolveStatus::Optimal {
        return Err(format!(
            "limiting-chain fixture did not solve: {}",
            sol.status
        ));
    }
    Ok(vec![ReproRow {
        case: "3chain",
        quantity: "limiting efficiency".into(),
        reference: 2.0 - 3f64.sqrt(),
        computed: (sol.objective_value + delta * delta).max(0.0).sqrt(),
        tol: 3e-3,
    }])
}

/// Builds all comparison rows for the requested case.
pub fn repro_rows(case: &str) -> Result<Vec<ReproRow>, String> {
    let mut rows = Vec::new();
    if case == "all" || case == "2x2" {
        rows.extend(rows_2x2()?);
    }
    if case == "all" || case == "3x3" {
        rows.extend(rows_3x3()?);
    }
    if case == "all" || case == "3chain" {
        rows.extend(rows_3chain()?);
    }
    if rows.is_empty() {
        return Err(format!(
            "unknown case {case:?} (expected 2x2 | 3x3 | 3chain | all)"
        ));
    }
    Ok(rows)
}

/// Prints the comparison table; returns true when every row is inside its
/// tolerance.
pub fn print_table(rows: &[ReproRow]) -> bool {
    println!(
        "{:<8} {:<36} {:>14} {:>16} {:>10} {:>8}  status",
        "case", "quantity", "reference", "computed", "|delta|", "tol"
    );
    let mut all_ok = true;
    for row in rows {
        let delta = (row.reference - row.computed).abs();
        let ok = row.pass();
        all_ok &= ok;
        println!(
            "{:<8} {:<36} {:>14} {:>16} {:>10.2e} {:>8.0e}  {}",
            row.case,
            row.quantity,
            row.reference,
            sig12(row.computed),
            delta,
            row.tol,
            if ok { "ok" } else { "FAIL" }
        );
    }
    all_ok
}
