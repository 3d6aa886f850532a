//! Local HHO machinery on a single cell: interpolation, potential and
//! gradient reconstruction, stabilization, and the local bilinear forms.
//!
//! Local dof ordering: the dim P_{p+1}(T) cell dofs first, then p+1 dofs
//! per edge in local edge order. Boundary edges still occupy local columns;
//! their coefficients are fixed to zero (homogeneous Dirichlet) and the
//! columns are dropped during global assembly.

use crate::basis::{l2_project_cell, pk_dim, CellBasis, FaceBasis, RTBasis, VecPBasis};
use crate::mesh::Mesh;
use crate::quad::{edge_quad, PhysQuad};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Method parameters. `sigma2_sq = c_p^2 c_st2^2` and the certification
/// hypothesis `beta * sigma2_sq <= alpha` is enforced at construction.
#[derive(Clone, Copy, Debug)]
pub struct Params {
    pub alpha: f64,
    pub beta: f64,
    pub c_p: f64,
    pub c_st2: f64,
    pub sigma2_sq: f64,
}

impl Params {
    /// beta defaults to its largest admissible value alpha / sigma2_sq.
    pub fn new(alpha: f64, c_p: f64, c_st2: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Params(format!("alpha = {alpha} not in (0,1)")));
        }
        if !(c_p > 0.0 && c_st2 > 0.0) {
            return Err(Error::Params("C_P and C_st2 must be positive".into()));
        }
        let sigma2_sq = c_p * c_p * c_st2 * c_st2;
        Ok(Params {
            alpha,
            beta: alpha / sigma2_sq,
            c_p,
            c_st2,
            sigma2_sq,
        })
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || beta * self.sigma2_sq > self.alpha * (1.0 + 1e-12) {
            return Err(Error::Params(format!(
                "beta = {beta} violates beta * sigma2^2 <= alpha"
            )));
        }
        self.beta = beta;
        Ok(self)
    }
}

impl Default for Params {
    /// alpha = 0.5, C_P = 1/(sqrt(2) pi), C_st2 = sqrt(2), so
    /// sigma2^2 = 1/pi^2 = 0.101321 and beta = alpha pi^2 = 4.934802.
    fn default() -> Self {
        Params::new(0.5, 1.0 / (2.0f64.sqrt() * std::f64::consts::PI), 2.0f64.sqrt()).unwrap()
    }
}

/// A member of the discrete space: cell coefficients in P_{p+1} per
/// triangle and face coefficients in P_p per interior edge, both in the
/// orthonormal local bases. Boundary edges carry no coefficients.
#[derive(Clone, Debug)]
pub struct HHOVector {
    pub p: usize,
    /// dim P_{p+1} per cell
    pub nc: usize,
    /// p+1 per interior edge
    pub nf: usize,
    pub cell: DVector<f64>,
    pub face: DVector<f64>,
}

impl HHOVector {
    pub fn zeros(mesh: &Mesh, p: usize) -> Self {
        let nc = pk_dim(p + 1);
        let nf = p + 1;
        HHOVector {
            p,
            nc,
            nf,
            cell: DVector::zeros(mesh.triangles.len() * nc),
            face: DVector::zeros(mesh.n_interior_edges * nf),
        }
    }

    /// Local dof vector of cell t (boundary-edge slots are zero).
    pub fn gather(&self, mesh: &Mesh, t: usize) -> DVector<f64> {
        let mut loc = DVector::zeros(self.nc + 3 * self.nf);
        loc.rows_mut(0, self.nc)
            .copy_from(&self.cell.rows(t * self.nc, self.nc));
        for k in 0..3 {
            let eid = mesh.tri_edges[t][k];
            if let Some(ie) = mesh.interior_edge_index[eid] {
                loc.rows_mut(self.nc + k * self.nf, self.nf)
                    .copy_from(&self.face.rows(ie * self.nf, self.nf));
            }
        }
        loc
    }
}

/// Per-edge data seen from one cell.
pub struct EdgeData {
    pub eid: usize,
    pub basis: FaceBasis,
    /// quadrature on the edge in its global (low -> high vertex) orientation
    pub qpts: Vec<[f64; 2]>,
    pub qw: Vec<f64>,
    pub qt: Vec<f64>,
    /// outward unit normal of the cell on this edge
    pub normal: [f64; 2],
}

/// Everything needed to build and evaluate local operators on one cell.
pub struct CellContext {
    pub t: usize,
    pub verts: [[f64; 2]; 3],
    pub area: f64,
    pub h: f64,
    pub p: usize,
    pub cell: CellBasis,
    pub rt: RTBasis,
    pub vp: VecPBasis,
    pub quad: PhysQuad,
    pub edges: [EdgeData; 3],
}

impl CellContext {
    pub fn build(mesh: &Mesh, t: usize, p: usize) -> Result<Self> {
        let verts = mesh.tri_verts(t);
        let area = mesh.area(t);
        let h = mesh.diameter(t);
        let cell = CellBasis::build(&verts, p + 1)?;
        let rt = RTBasis::build(&verts, p)?;
        let vp = VecPBasis::build(&verts, p)?;
        // assembly rule: exact for every bilinear-form integrand, 2(p+2)+2
        let quad = PhysQuad::on_triangle(&verts, 2 * (p + 2) + 2)?;
        let mut edge_vec = Vec::with_capacity(3);
        for k in 0..3 {
            let eid = mesh.tri_edges[t][k];
            let e = &mesh.edges[eid];
            let a = [mesh.vertices[e.v[0]].x, mesh.vertices[e.v[0]].y];
            let b = [mesh.vertices[e.v[1]].x, mesh.vertices[e.v[1]].y];
            let (qpts, qw, qt) = edge_quad(a, b, p + 3);
            edge_vec.push(EdgeData {
                eid,
                basis: FaceBasis::new(a, b, p),
                qpts,
                qw,
                qt,
                normal: mesh.outward_normal(t, k),
            });
        }
        let edges: [EdgeData; 3] = edge_vec.try_into().map_err(|_| Error::Invalid("edge count".into()))?;
        Ok(CellContext {
            t,
            verts,
            area,
            h,
            p,
            cell,
            rt,
            vp,
            quad,
            edges,
        })
    }

    pub fn n_cell_dofs(&self) -> usize {
        self.cell.len()
    }

    pub fn n_local_dofs(&self) -> usize {
        self.cell.len() + 3 * (self.p + 1)
    }
}

/// Local operator matrices, all acting on the local dof vector
/// (cell dofs, then 3 x edge dofs).
pub struct LocalOperators {
    /// potential reconstruction: local dofs -> P_{p+1}(T) coefficients
    pub r: DMatrix<f64>,
    /// gradient reconstruction: local dofs -> RT_p(T) coefficients
    pub g: DMatrix<f64>,
    /// stabilization v_T - R v_h: local dofs -> P_{p+1}(T) coefficients
    pub s: DMatrix<f64>,
    /// local contribution to a_h
    pub a: DMatrix<f64>,
    /// local contribution to b_h (cell mass; identity block here)
    pub b: DMatrix<f64>,
    /// projection P_p(T;R^2) coefficients of the gradient reconstruction:
    /// rows of `proj_g` give Pi_p G in the orthonormal vector basis
    pub proj_g: DMatrix<f64>,
}

/// Matrix of the potential reconstruction: for any local dof vector the
/// result satisfies the integration-by-parts identity against all
/// q in P_{p+1}(T) and has the same mean as the cell component.
pub fn potential_reconstruction_local(ctx: &CellContext) -> Result<DMatrix<f64>> {
    let nc = ctx.cell.len();
    let nf = ctx.p + 1;
    let nloc = nc + 3 * nf;
    let (gx, gy) = ctx.cell.eval_grad(&ctx.quad.points);
    let k = weighted(&gx, &gx, &ctx.quad.weights) + weighted(&gy, &gy, &ctx.quad.weights);

    let mut rhs = DMatrix::zeros(nc, nloc);
    // volume part: -(v_T, Lap q)
    let lap = ctx.cell.laplacian_coeffs(); // nc x nmono
    let lap_vals = ctx.cell.mono.eval(&ctx.quad.points) * lap.transpose(); // npts x nc
    let phi = ctx.cell.eval(&ctx.quad.points);
    for i in 0..nc {
        for j in 0..nc {
            let mut s = 0.0;
            for (r, &w) in ctx.quad.weights.iter().enumerate() {
                s += w * phi[(r, j)] * lap_vals[(r, i)];
            }
            rhs[(i, j)] = -s;
        }
    }
    // edge part: + int_F v_F (grad q . n_T)
    for (kedge, ed) in ctx.edges.iter().enumerate() {
        let (egx, egy) = ctx.cell.eval_grad(&ed.qpts);
        let psi = ed.basis.eval_at_params(&ed.qt);
        for i in 0..nc {
            for kf in 0..nf {
                let mut s = 0.0;
                for (r, &w) in ed.qw.iter().enumerate() {
                    s += w
                        * psi[(r, kf)]
                        * (egx[(r, i)] * ed.normal[0] + egy[(r, i)] * ed.normal[1]);
                }
                rhs[(i, nc + kedge * nf + kf)] = s;
            }
        }
    }
    // Neumann solve with the constant mode pinned, then mean shift:
    // basis function 0 is the constant, so row 0 of K vanishes and the
    // mean constraint reads coeff_0(R v) = coeff_0(v_T).
    let mut r = DMatrix::zeros(nc, nloc);
    if nc > 1 {
        let kk = k.view((1, 1), (nc - 1, nc - 1)).into_owned();
        let chol = kk
            .cholesky()
            .ok_or_else(|| Error::Degenerate("singular local stiffness modulo constants".into()))?;
        let sub = rhs.view((1, 0), (nc - 1, nloc)).into_owned();
        let sol = chol.solve(&sub);
        r.view_mut((1, 0), (nc - 1, nloc)).copy_from(&sol);
    }
    r[(0, 0)] = 1.0;
    Ok(r)
}

/// Matrix of the gradient reconstruction into RT_p(T). The RT basis is
/// orthonormal, so the Riesz representation is the moment vector itself.
pub fn gradient_reconstruction_local(ctx: &CellContext) -> Result<DMatrix<f64>> {
    let nc = ctx.cell.len();
    let nf = ctx.p + 1;
    let nrt = ctx.rt.len();
    let nloc = nc + 3 * nf;
    let mut g = DMatrix::zeros(nrt, nloc);
    // volume part: -(v_T, div phi)
    let div = ctx.rt.div_coeffs(); // nrt x nmono
    let div_vals = ctx.rt.mono.eval(&ctx.quad.points) * div.transpose(); // npts x nrt
    let phi = ctx.cell.eval(&ctx.quad.points);
    for i in 0..nrt {
        for j in 0..nc {
            let mut s = 0.0;
            for (r, &w) in ctx.quad.weights.iter().enumerate() {
                s += w * phi[(r, j)] * div_vals[(r, i)];
            }
            g[(i, j)] = -s;
        }
    }
    // edge part: + int_F v_F (phi . n_T)
    for (kedge, ed) in ctx.edges.iter().enumerate() {
        let (rx, ry) = ctx.rt.eval(&ed.qpts);
        let psi = ed.basis.eval_at_params(&ed.qt);
        for i in 0..nrt {
            for kf in 0..nf {
                let mut s = 0.0;
                for (r, &w) in ed.qw.iter().enumerate() {
                    s += w * psi[(r, kf)] * (rx[(r, i)] * ed.normal[0] + ry[(r, i)] * ed.normal[1]);
                }
                g[(i, nc + kedge * nf + kf)] = s;
            }
        }
    }
    Ok(g)
}

/// Local operators and the local forms A_T (from the defining expression
/// with the explicit (1 - Pi_p) correction) and B_T (cell mass).
pub fn local_operators(ctx: &CellContext, params: &Params) -> Result<LocalOperators> {
    let nc = ctx.cell.len();
    let nf = ctx.p + 1;
    let nloc = nc + 3 * nf;
    let r = potential_reconstruction_local(ctx)?;
    let g = gradient_reconstruction_local(ctx)?;
    // S = v_T - R v_h
    let mut s = -r.clone();
    for j in 0..nc {
        s[(j, j)] += 1.0;
    }
    // cross Gram (vector P_p basis) x (RT basis), both orthonormal
    let c = cross_gram(ctx);
    let proj_g = &c * &g;
    // (G u, G v) - alpha ((1-Pi_p) G u, (1-Pi_p) G v) + beta h^-2 (S u, S v)
    let d = &g - c.transpose() * &proj_g;
    let stab = params.beta / (ctx.h * ctx.h) * s.transpose() * &s;
    let a = g.transpose() * &g - params.alpha * d.transpose() * &d + stab;
    let mut b = DMatrix::zeros(nloc, nloc);
    for j in 0..nc {
        b[(j, j)] = 1.0;
    }
    Ok(LocalOperators {
        r,
        g,
        s,
        a,
        b,
        proj_g,
    })
}

/// The algebraically equivalent form ((1-alpha) G u + alpha Pi_p G u, G v)
/// + stabilization; used to cross-check `local_operators`.
pub fn local_form_alternative(ctx: &CellContext, params: &Params) -> Result<DMatrix<f64>> {
    let r = potential_reconstruction_local(ctx)?;
    let g = gradient_reconstruction_local(ctx)?;
    let nc = ctx.cell.len();
    let mut s = -r;
    for j in 0..nc {
        s[(j, j)] += 1.0;
    }
    let c = cross_gram(ctx);
    let pg = c.transpose() * (&c * &g);
    let stab = params.beta / (ctx.h * ctx.h) * s.transpose() * &s;
    Ok(((1.0 - params.alpha) * &g + params.alpha * pg).transpose() * &g + stab)
}

/// Coefficients of Pi_p G (the projected gradient reconstruction) in the
/// orthonormal vector-valued P_p basis, as a matrix on local dofs.
pub fn projected_gradient_local(ctx: &CellContext) -> Result<DMatrix<f64>> {
    Ok(cross_gram(ctx) * gradient_reconstruction_local(ctx)?)
}

fn cross_gram(ctx: &CellContext) -> DMatrix<f64> {
    let (vx, vy) = ctx.vp.eval(&ctx.quad.points);
    let (rx, ry) = ctx.rt.eval(&ctx.quad.points);
    weighted(&vx, &rx, &ctx.quad.weights) + weighted(&vy, &ry, &ctx.quad.weights)
}

fn weighted(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut aw = a.clone();
    for (r, &wr) in w.iter().enumerate() {
        aw.row_mut(r).scale_mut(wr);
    }
    aw.transpose() * b
}

/// Interpolation I v = (Pi_{p+1} v per cell, Pi_F^p v per interior edge).
pub fn interpolate<F: Fn([f64; 2]) -> f64>(mesh: &Mesh, p: usize, f: F) -> Result<HHOVector> {
    let mut v = HHOVector::zeros(mesh, p);
    let nc = v.nc;
    for t in 0..mesh.triangles.len() {
        let verts = mesh.tri_verts(t);
        let basis = CellBasis::build(&verts, p + 1)?;
        let quad = PhysQuad::on_triangle(&verts, (2 * (p + 2) + 2).min(crate::quad::MAX_DEGREE))?;
        let c = l2_project_cell(&f, &basis, &quad);
        v.cell.rows_mut(t * nc, nc).copy_from(&c);
    }
    for (eid, e) in mesh.edges.iter().enumerate() {
        let Some(ie) = mesh.interior_edge_index[eid] else {
            continue;
        };
        let a = [mesh.vertices[e.v[0]].x, mesh.vertices[e.v[0]].y];
        let b = [mesh.vertices[e.v[1]].x, mesh.vertices[e.v[1]].y];
        let fb = FaceBasis::new(a, b, p);
        let (qpts, qw, qt) = edge_quad(a, b, p + 3);
        let psi = fb.eval_at_params(&qt);
        for k in 0..v.nf {
            let mut s = 0.0;
            for (r, &w) in qw.iter().enumerate() {
                s += w * f(qpts[r]) * psi[(r, k)];
            }
            v.face[ie * v.nf + k] = s;
        }
    }
    Ok(v)
}
