//! Reachable-set construction in squared-amplitude space: sweep lines
//! parallel to the target axis, solving one program per grid point. A slice
//! at base (p_1, …, p_{n−1}) records the largest attainable target value;
//! every smaller nonnegative value on the slice is also reachable, because
//! holding the pure target direction only drains the target coordinate
//! (its rate is the negative diagonal entry, all others are zero).

use crate::lowrank::{numerical_rank, RANK_REL_TOL};
use crate::problem::ProblemSpec;
use crate::sdp::{solve, SdpProblem, SolveStatus, SolverConfig};
use crate::{Error, Result};
use rayon::prelude::*;
use std::io::{self, Write};

/// One vertical slice of the reachable set.
#[derive(Debug, Clone)]
pub struct ReachSlice {
    /// Fixed values of the first n−1 coordinates.
    pub base: Vec<f64>,
    /// Largest attainable target value, when the slice is reachable.
    pub p_n_max: Option<f64>,
    /// Numerical rank of the attaining solution.
    pub solution_rank: Option<usize>,
    pub status: SolveStatus,
}

impl ReachSlice {
    pub fn feasible(&self) -> bool {
        self.p_n_max.is_some()
    }
}

/// Solves the slice program: maximize the target gain subject to
/// ⟨A_i, M⟩ = base_i − p0_i. An attainable slice with a negative peak is
/// reported unreachable (the target coordinate cannot go below zero).
pub fn reach_slice(spec: &ProblemSpec, base: &[f64], cfg: &SolverConfig) -> Result<ReachSlice> {
    let n = spec.n();
    if base.len() != n - 1 {
        return Err(Error::DimensionMismatch {
            expected: n - 1,
            found: base.len(),
        });
    }
    if base.iter().any(|&b| b < 0.0) {
        return Err(Error::InvalidInput("slice base must be nonnegative".into()));
    }
    let cs = spec.build_constraints();
    let constraints = cs.matrices[..n - 1]
        .iter()
        .cloned()
        .zip(
            base.iter()
                .zip(spec.p0()[..n - 1].iter())
                .map(|(b, p)| b - p),
        )
        .collect();
    let problem = SdpProblem::new(cs.matrices[n - 1].clone(), constraints)?;
    let sol = solve(&problem, cfg);

    if sol.status != SolveStatus::Optimal {
        return Ok(ReachSlice {
            base: base.to_vec(),
            p_n_max: None,
            solution_rank: None,
            status: sol.status,
        });
    }
    let peak = spec.p0()[n - 1] + sol.objective_value;
    let noise = 1e-7 * (1.0 + spec.p0().iter().sum::<f64>());
    if peak < -noise {
        // attainable motion cannot lift the target into the admissible range
        return Ok(ReachSlice {
            base: base.to_vec(),
            p_n_max: None,
            solution_rank: None,
            status: sol.status,
        });
    }
    let peak = peak.max(0.0);
    let rank = match crate::lowrank::rank_reduce(&problem, &sol.m) {
        Ok(reduced) => numerical_rank(&reduced, RANK_REL_TOL),
        Err(_) => numerical_rank(&sol.m, RANK_REL_TOL),
    };
    Ok(ReachSlice {
        base: base.to_vec(),
        p_n_max: Some(peak),
        solution_rank: Some(rank),
        status: sol.status,
    })
}

/// Cartesian sweep over per-axis grids (one grid per non-target coordinate).
/// Slices are independent; with `workers > 1` they run concurrently and are
/// returned in grid order regardless of scheduling.
pub fn reach_set(
    spec: &ProblemSpec,
    grids: &[Vec<f64>],
    cfg: &SolverConfig,
    workers: usize,
) -> Result<Vec<ReachSlice>> {
    let n = spec.n();
    if grids.len() != n - 1 {
        return Err(Error::DimensionMismatch {
            expected: n - 1,
            found: grids.len(),
        });
    }
    if grids.iter().any(|g| g.is_empty()) {
        return Ok(Vec::new());
    }
    let total: usize = grids.iter().map(|g| g.len()).product();
    let point = |mut idx: usize| -> Vec<f64> {
        let mut base = vec![0.0; n - 1];
        for axis in (0..n - 1).rev() {
            let g = &grids[axis];
            base[axis] = g[idx % g.len()];
            idx /= g.len();
        }
        base
    };

    let solve_point = |idx: usize| reach_slice(spec, &point(idx), cfg);
    if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::NumericFailure(format!("worker pool: {e}")))?;
        pool.install(|| (0..total).into_par_iter().map(solve_point).collect())
    } else {
        (0..total).map(solve_point).collect()
    }
}

/// Uniform grid of `count` points on [0, hi].
pub fn uniform_grid(hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![0.0];
    }
    (0..count)
        .map(|i| hi * i as f64 / (count - 1) as f64)
        .collect()
}

/// CSV emission: `p_1,…,p_{n−1},p_n_max,feasible,rank`.
pub fn write_csv<W: Write>(slices: &[ReachSlice], out: &mut W) -> io::Result<()> {
    let k = slices.first().map_or(0, |s| s.base.len());
    let mut header = String::new();
    for i in 1..=k {
        header.push_str(&format!("p_{i},"));
    }
    header.push_str(&format!("p_{}_max,feasible,rank", k + 1));
    writeln!(out, "{header}")?;
    for s in slices {
        let mut line = String::new();
        for b in &s.base {
            line.push_str(&format!("{},", crate::simulate::sig12(*b)));
        }
        match (&s.p_n_max, &s.solution_rank) {
            (Some(p), Some(r)) => {
                line.push_str(&format!("{},true,{}", crate::simulate::sig12(*p), r))
            }
            _ => line.push_str(",false,"),
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Justification for the downward segment: holding the pure target direction
/// gives the target rate 2·a_nn < 0 and zero rates elsewhere.
pub fn down_segment_rates(spec: &ProblemSpec) -> Vec<f64> {
    let n = spec.n();
    let mut m = vec![0.0; n];
    m[n - 1] = 1.0;
    crate::synthesis::p_rates(spec.coupling(), &m)
}
