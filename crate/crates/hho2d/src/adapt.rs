//! Solve-estimate-mark-refine driver with the certified-lower-bound
//! safeguard: while the mesh is too coarse for the certificate, refine
//! uniformly; once certified, follow Dörfler marking (or keep refining
//! everything in uniform mode).

use crate::assembly::{assemble, glb_check};
use crate::estimator::{compute_ph, estimate, mark_doerfler, verify_identities};
use crate::hho::Params;
use crate::mesh::Mesh;
use crate::{Error, Result};
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefineMode {
    Adaptive,
    Uniform,
}

impl std::str::FromStr for RefineMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(RefineMode::Adaptive),
            "uniform" => Ok(RefineMode::Uniform),
            _ => Err(Error::Parse(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct HistoryRow {
    pub ndof: usize,
    pub h_max: f64,
    pub lambda_h: f64,
    pub glb: f64,
    pub eta_sq: f64,
    /// refinement applied after this row was recorded
    pub refine_mode: &'static str,
}

pub struct ConvergenceHistory {
    pub rows: Vec<HistoryRow>,
    /// worst relative violation of the flux identities over all rows
    pub a1_rel_max: f64,
    pub a2_rel_max: f64,
}

/// Run the adaptive (or uniform) eigenvalue loop for eigenvalue index
/// `j` until the dof budget is reached. Returns the history and the
/// final mesh.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_loop(
    initial: Mesh,
    p: usize,
    params: &Params,
    j: usize,
    max_ndof: usize,
    mode: RefineMode,
    theta: f64,
    seed: u64,
) -> Result<(ConvergenceHistory, Mesh)> {
    if j == 0 {
        return Err(Error::Params("eigenvalue index must be at least 1".into()));
    }
    let mut mesh = initial;
    let mut rows: Vec<HistoryRow> = Vec::new();
    let mut a1_rel_max = 0.0f64;
    let mut a2_rel_max = 0.0f64;
    loop {
        let sys = assemble(&mesh, p, params)?;
        let res = sys.solve(j, seed)?;
        let lambda = res.lambdas[j - 1];
        let rep = glb_check(&res, mesh.h_max, params);
        let entry = rep.entries[j - 1];
        let ph = compute_ph(&mesh, &res.vectors[j - 1])?;
        let ind = estimate(&mesh, &ph, &res.vectors[j - 1], lambda)?;
        let chk = verify_identities(&mesh, &ph, &res.vectors[j - 1], lambda)?;
        let scale = chk.ph_norm.max(f64::MIN_POSITIVE);
        a1_rel_max = a1_rel_max.max(chk.a1 / scale);
        a2_rel_max = a2_rel_max.max(chk.a2 / scale);
        let refine_mode = if !entry.condition_met || mode == RefineMode::Uniform {
            "uniform"
        } else {
            "adaptive"
        };
        rows.push(HistoryRow {
            ndof: sys.ndof(),
            h_max: mesh.h_max,
            lambda_h: lambda,
            glb: entry.glb,
            eta_sq: ind.total,
            refine_mode,
        });
        if sys.ndof() >= max_ndof {
            break;
        }
        mesh = if !entry.condition_met {
            // not certified: the safeguard refines everything twice
            mesh.uniform_refine()?
        } else if mode == RefineMode::Uniform {
            // one bisection round per row for a finer history
            mesh.bisect_all()?
        } else {
            let marked = mark_doerfler(&ind, theta)?;
            mesh.bisect(&marked)?
        };
    }
    Ok((
        ConvergenceHistory {
            rows,
            a1_rel_max,
            a2_rel_max,
        },
        mesh,
    ))
}

/// CSV with one row per loop iteration, 17 significant digits.
pub fn write_history_csv<W: Write>(hist: &ConvergenceHistory, out: &mut W) -> Result<()> {
    writeln!(out, "ndof,hmax,lambda_h,glb,eta_sq,refine_mode")
        .map_err(|e| Error::Invalid(format!("write failed: {e}")))?;
    for r in &hist.rows {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.ndof, r.h_max, r.lambda_h, r.glb, r.eta_sq, r.refine_mode
        )
        .map_err(|e| Error::Invalid(format!("write failed: {e}")))?;
    }
    Ok(())
}
