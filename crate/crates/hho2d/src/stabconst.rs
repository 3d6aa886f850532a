//! Stability constants on a single triangle: the p-robust constant m_p
//! from the dense eigenproblem coupling the L2 product on Q_p with the
//! inverse Laplacian of the curl, Rayleigh-quotient lower bounds for the
//! projection stability constants, and an interior-angle sweep.

use crate::basis::{pk_dim, CellBasis, MonomialSet, VecPBasis};
use crate::quad::PhysQuad;
use crate::{Error, Result};
use faer::prelude::*;
use faer::sparse::SparseColMat;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Discretization of the inverse Laplacian: conforming Lagrange elements
/// of `degree` on a `refines`-fold uniformly sub-triangulated triangle.
#[derive(Clone, Copy, Debug)]
pub struct FemConfig {
    pub degree: usize,
    pub refines: usize,
}

impl Default for FemConfig {
    fn default() -> Self {
        FemConfig {
            degree: 4,
            refines: 6,
        }
    }
}

pub struct StabConstResult {
    pub p: usize,
    pub m_p_sq: f64,
    /// max{1, m_p} (two space dimensions)
    pub c_st2_upper: f64,
    pub lower_c_st1: f64,
    pub lower_c_st2: f64,
    pub fem_degree: usize,
    pub fem_refines: usize,
}

/// Orthonormal basis (in the orthonormal vector P_p coordinates) of the
/// L2-orthogonal complement Q_p of grad P_{p+1}(T) inside P_p(T; R^2).
/// Empty for p = 0 (the complement is trivial).
pub fn build_qp(verts: &[[f64; 2]; 3], p: usize) -> Result<(VecPBasis, Vec<DVector<f64>>)> {
    let vp = VecPBasis::build(verts, p)?;
    if p == 0 {
        return Ok((vp, Vec::new()));
    }
    let scalar = CellBasis::build(verts, p + 1)?;
    let quad = PhysQuad::on_triangle(verts, 2 * (p + 1))?;
    let (vx, vy) = vp.eval(&quad.points);
    let (gx, gy) = scalar.eval_grad(&quad.points);
    let nq = vp.len();
    let m = scalar.len() - 1; // gradients of the non-constant functions
    // coordinates of grad phi_i in the orthonormal vector basis
    let mut gamma = DMatrix::zeros(nq, m);
    for i in 0..m {
        for j in 0..nq {
            let mut s = 0.0;
            for (r, &w) in quad.weights.iter().enumerate() {
                s += w * (gx[(r, i + 1)] * vx[(r, j)] + gy[(r, i + 1)] * vy[(r, j)]);
            }
            gamma[(j, i)] = s;
        }
    }
    // orthogonal projector onto the complement of the column span
    let gtg = gamma.transpose() * &gamma;
    let chol = gtg
        .cholesky()
        .ok_or_else(|| Error::Degenerate("dependent polynomial gradients".into()))?;
    let proj = &gamma * chol.solve(&gamma.transpose());
    let compl = DMatrix::identity(nq, nq) - proj;
    let (vals, vecs) = crate::basis::sym_eig(&compl);
    let mut basis = Vec::new();
    for k in 0..nq {
        if vals[k] > 0.5 {
            basis.push(vecs.column(k).into_owned());
        }
    }
    let expect = (p + 1) * (p + 2) - ((p + 2) * (p + 3) / 2 - 1);
    if basis.len() != expect {
        return Err(Error::Degenerate(format!(
            "complement dimension {} (expected {expect})",
            basis.len()
        )));
    }
    Ok((vp, basis))
}

/// P_degree Lagrange FEM with zero boundary values on a triangle split
/// into 4^refines congruent sub-triangles. The stiffness factorization is
/// computed once and shared across right-hand sides.
pub struct Poisson {
    pub cfg: FemConfig,
    verts: [[f64; 2]; 3],
    /// lattice order: degree * 2^refines
    n: usize,
    /// interior-node index per lattice node, None on the boundary
    interior: Vec<Option<usize>>,
    n_int: usize,
    /// inverse transposed Vandermonde and monomial set per element type
    elems: Vec<ElemType>,
    /// element list: (type, lattice anchor of local node (0,0), steps)
    layout: Vec<(usize, [i64; 2], [i64; 2], [i64; 2])>,
    factor: faer::sparse::linalg::solvers::Cholesky<usize, f64>,
}

struct ElemType {
    /// physical offsets of this element's vertices from its anchor node
    v1: [f64; 2],
    v2: [f64; 2],
    /// nodal stiffness matrix
    k: DMatrix<f64>,
    /// maps monomial moments to nodal load vectors (V^{-T})
    vinv_t: DMatrix<f64>,
    /// local monomials (shape shared by all elements of this type)
    mono: MonomialSet,
}

impl Poisson {
    pub fn new(verts: &[[f64; 2]; 3], cfg: FemConfig) -> Result<Self> {
        if cfg.degree == 0 || cfg.degree > 10 || cfg.refines > 8 {
            return Err(Error::Params(format!(
                "unsupported FEM configuration {cfg:?}"
            )));
        }
        let d = cfg.degree;
        let m = 1usize << cfg.refines;
        let n = d * m;
        // lattice node (i, j) -> global index, row-major over j
        let node_id = |i: usize, j: usize| -> usize { j * (n + 1) + i - (j * j - j) / 2 };
        let nv = node_id(0, n) + 1;
        let mut interior = vec![None; nv];
        let mut n_int = 0;
        for j in 0..=n {
            for i in 0..=(n - j) {
                if i > 0 && j > 0 && i + j < n {
                    interior[node_id(i, j)] = Some(n_int);
                    n_int += 1;
                }
            }
        }
        // per-lattice-node steps
        let e10 = [
            (verts[1][0] - verts[0][0]) / n as f64,
            (verts[1][1] - verts[0][1]) / n as f64,
        ];
        let e20 = [
            (verts[2][0] - verts[0][0]) / n as f64,
            (verts[2][1] - verts[0][1]) / n as f64,
        ];
        // the two congruence classes: upward and downward sub-triangles
        let up = ElemType::build(d, e10, e20)?;
        let down = ElemType::build(d, [-e10[0], -e10[1]], [-e20[0], -e20[1]])?;
        let elems = vec![up, down];
        let mut layout = Vec::new();
        for b in 0..m {
            for a in 0..(m - b) {
                let anchor = [(a * d) as i64, (b * d) as i64];
                layout.push((0, anchor, [1, 0], [0, 1]));
                if a + b < m - 1 {
                    let anchor = [((a + 1) * d) as i64, ((b + 1) * d) as i64];
                    layout.push((1, anchor, [-1, 0], [0, -1]));
                }
            }
        }
        // assemble the interior stiffness matrix
        let nn = pk_dim(d);
        let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(layout.len() * nn * nn);
        let local_nodes = local_node_list(d);
        for &(ty, anchor, s1, s2) in &layout {
            let ids: Vec<Option<usize>> = local_nodes
                .iter()
                .map(|&(r, s)| {
                    let i = anchor[0] + s1[0] * r as i64 + s2[0] * s as i64;
                    let j = anchor[1] + s1[1] * r as i64 + s2[1] * s as i64;
                    interior[node_id(i as usize, j as usize)]
                })
                .collect();
            let k = &elems[ty].k;
            for (a, &ia) in ids.iter().enumerate() {
                let Some(ia) = ia else { continue };
                for (b, &ib) in ids.iter().enumerate() {
                    let Some(ib) = ib else { continue };
                    trip.push((ia, ib, k[(a, b)]));
                }
            }
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n_int, n_int, &trip)
            .map_err(|e| Error::Eigen(format!("FEM assembly failed: {e:?}")))?;
        let factor = mat
            .sp_cholesky(faer::Side::Lower)
            .map_err(|e| Error::Eigen(format!("FEM factorization failed: {e:?}")))?;
        Ok(Poisson {
            cfg,
            verts: *verts,
            n,
            interior,
            n_int,
            elems,
            layout,
            factor,
        })
    }

    fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i - (j * j - j) / 2
    }

    /// physical coordinates of a lattice node
    fn node_pos(&self, i: usize, j: usize) -> [f64; 2] {
        let (a, b) = (i as f64 / self.n as f64, j as f64 / self.n as f64);
        [
            self.verts[0][0] + a * (self.verts[1][0] - self.verts[0][0]) + b * (self.verts[2][0] - self.verts[0][0]),
            self.verts[0][1] + a * (self.verts[1][1] - self.verts[0][1]) + b * (self.verts[2][1] - self.verts[0][1]),
        ]
    }

    /// Load vectors for several right-hand sides evaluated pointwise,
    /// then discrete solutions of -Lap w = g with zero boundary values.
    /// Returns (interior solution values, interior load vectors).
    pub fn solve_many(
        &self,
        gs: &[&dyn Fn([f64; 2]) -> f64],
        extra_quad_degree: usize,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let k = gs.len();
        let mut rhs = DMatrix::zeros(self.n_int, k);
        let d = self.cfg.degree;
        let local_nodes = local_node_list(d);
        for &(ty, anchor, s1, s2) in &self.layout {
            let et = &self.elems[ty];
            let a0 = self.node_pos(anchor[0] as usize, anchor[1] as usize);
            // element quadrature on the physical sub-triangle
            let v1 = [a0[0] + d as f64 * et.v1[0], a0[1] + d as f64 * et.v1[1]];
            let v2 = [a0[0] + d as f64 * et.v2[0], a0[1] + d as f64 * et.v2[1]];
            let quad = PhysQuad::on_triangle(
                &[a0, v1, v2],
                (d + extra_quad_degree).min(crate::quad::MAX_DEGREE),
            )?;
            let mono_vals = mono_eval_at(&et.mono, a0, &quad.points);
            // monomial moments of every rhs, then nodal loads
            let mut mom = DMatrix::zeros(et.mono.len(), k);
            for (r, &w) in quad.weights.iter().enumerate() {
                for (l, g) in gs.iter().enumerate() {
                    let gv = w * g(quad.points[r]);
                    for i in 0..et.mono.len() {
                        mom[(i, l)] += gv * mono_vals[(r, i)];
                    }
                }
            }
            let loads = &et.vinv_t * mom;
            for (a, &(r, s)) in local_nodes.iter().enumerate() {
                let i = anchor[0] + s1[0] * r as i64 + s2[0] * s as i64;
                let j = anchor[1] + s1[1] * r as i64 + s2[1] * s as i64;
                if let Some(gi) = self.interior[self.node_id(i as usize, j as usize)] {
                    for l in 0..k {
                        rhs[(gi, l)] += loads[(a, l)];
                    }
                }
            }
        }
        let mut frhs = faer::Mat::<f64>::zeros(self.n_int, k);
        for c in 0..k {
            for i in 0..self.n_int {
                frhs[(i, c)] = rhs[(i, c)];
            }
        }
        let sol = self.factor.solve(&frhs);
        let w = DMatrix::from_fn(self.n_int, k, |i, c| sol[(i, c)]);
        Ok((w, rhs))
    }
}

impl ElemType {
    fn build(d: usize, e1: [f64; 2], e2: [f64; 2]) -> Result<Self> {
        // e1, e2 are the per-node steps; element vertices, relative to the
        // anchor node, sit at 0, d e1 and d e2
        let verts = [
            [0.0, 0.0],
            [d as f64 * e1[0], d as f64 * e1[1]],
            [d as f64 * e2[0], d as f64 * e2[1]],
        ];
        let h = crate::basis::diameter(&verts);
        let center = [
            (verts[0][0] + verts[1][0] + verts[2][0]) / 3.0,
            (verts[0][1] + verts[1][1] + verts[2][1]) / 3.0,
        ];
        // monomials relative to the anchor keep the type translation-free
        let mono = MonomialSet::new(d, center, h);
        let nodes = local_node_list(d);
        let pts: Vec<[f64; 2]> = nodes
            .iter()
            .map(|&(r, s)| {
                [
                    r as f64 * e1[0] + s as f64 * e2[0],
                    r as f64 * e1[1] + s as f64 * e2[1],
                ]
            })
            .collect();
        let v = mono.eval(&pts);
        let vinv = v
            .clone()
            .lu()
            .solve(&DMatrix::identity(nodes.len(), nodes.len()))
            .ok_or_else(|| Error::Degenerate("singular FEM Vandermonde".into()))?;
        // stiffness in the monomial basis, then in the nodal basis
        let quad = PhysQuad::on_triangle(&verts, 2 * d)?;
        let (gx, gy) = mono.eval_grad(&quad.points);
        let nloc = nodes.len();
        let mut km = DMatrix::zeros(nloc, nloc);
        for i in 0..nloc {
            for j in 0..nloc {
                let mut s = 0.0;
                for (r, &w) in quad.weights.iter().enumerate() {
                    s += w * (gx[(r, i)] * gx[(r, j)] + gy[(r, i)] * gy[(r, j)]);
                }
                km[(i, j)] = s;
            }
        }
        let k = vinv.transpose() * km * &vinv;
        Ok(ElemType {
            v1: e1,
            v2: e2,
            k,
            vinv_t: vinv.transpose(),
            mono,
        })
    }
}

fn local_node_list(d: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(pk_dim(d));
    for s in 0..=d {
        for r in 0..=(d - s) {
            out.push((r, s));
        }
    }
    out
}

/// evaluate anchored monomials at physical points
fn mono_eval_at(mono: &MonomialSet, anchor: [f64; 2], pts: &[[f64; 2]]) -> DMatrix<f64> {
    let shifted: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] - anchor[0], p[1] - anchor[1]]).collect();
    mono.eval(&shifted)
}

/// m_p^2 = largest eigenvalue of the pencil coupling the L2 product on
/// Q_p with ((-Lap)^{-1} curl q, curl r); lower bounds from P_{p+6}.
pub fn compute_mp(verts: &[[f64; 2]; 3], p: usize, cfg: FemConfig) -> Result<StabConstResult> {
    let poisson = if p >= 1 {
        Some(Poisson::new(verts, cfg)?)
    } else {
        None
    };
    compute_mp_with(verts, p, poisson.as_ref(), cfg)
}

/// Variant sharing one FEM factorization across several degrees p.
pub fn compute_mp_with(
    verts: &[[f64; 2]; 3],
    p: usize,
    poisson: Option<&Poisson>,
    cfg: FemConfig,
) -> Result<StabConstResult> {
    let (lower_c_st1, lower_c_st2) = rayleigh_lower_bounds(verts, p, p + 6)?;
    if p == 0 {
        // Q_0 is trivial and the constant is exactly one
        return Ok(StabConstResult {
            p,
            m_p_sq: 1.0,
            c_st2_upper: 1.0,
            lower_c_st1,
            lower_c_st2,
            fem_degree: cfg.degree,
            fem_refines: cfg.refines,
        });
    }
    let poisson = poisson.ok_or_else(|| Error::Params("missing FEM discretization".into()))?;
    let (vp, qp) = build_qp(verts, p)?;
    let k = qp.len();
    // curls of the Q_p basis as pointwise functions
    let curls: Vec<Box<dyn Fn([f64; 2]) -> f64>> = qp
        .iter()
        .map(|c| {
            let c = c.clone();
            let vp = VecPBasis::build(verts, p).unwrap();
            Box::new(move |pt: [f64; 2]| {
                let cv = vp.eval_curl(&[pt]);
                (0..c.len()).map(|i| c[i] * cv[(0, i)]).sum()
            }) as Box<dyn Fn([f64; 2]) -> f64>
        })
        .collect();
    let grefs: Vec<&dyn Fn([f64; 2]) -> f64> = curls.iter().map(|b| b.as_ref()).collect();
    let (w, rhs) = poisson.solve_many(&grefs, p.max(1))?;
    // b_kl = (grad w_k, grad w_l) = w_k . rhs_l (Galerkin)
    let mut b = w.transpose() * rhs;
    b = (&b + b.transpose()) * 0.5;
    let _ = vp;
    let eig = SymmetricEigen::new(b);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::Eigen(
            "curl-degenerate element of the complement space".into(),
        ));
    }
    let m_p_sq = 1.0 / min;
    let _ = k;
    Ok(StabConstResult {
        p,
        m_p_sq,
        c_st2_upper: m_p_sq.sqrt().max(1.0),
        lower_c_st1,
        lower_c_st2,
        fem_degree: cfg.degree,
        fem_refines: cfg.refines,
    })
}

/// Largest eigenvalue of the pencil (a, b) with b positive semidefinite,
/// restricted to the range of b.
fn max_eig_pencil(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let (vals, vecs) = crate::basis::sym_eig(b);
    let bmax = vals.iter().cloned().fold(0.0, f64::max);
    if !(bmax > 0.0) {
        return Err(Error::Degenerate("zero denominator form".into()));
    }
    let mut cols = Vec::new();
    for i in 0..b.nrows() {
        let l = vals[i];
        if l > 1e-12 * bmax {
            cols.push(vecs.column(i) / l.sqrt());
        }
    }
    let v = DMatrix::from_columns(&cols);
    let red = v.transpose() * a * &v;
    let red = (&red + red.transpose()) * 0.5;
    let e = SymmetricEigen::new(red);
    Ok(e.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Rayleigh-quotient lower bounds over f in P_N(T)/R:
/// c_st1 from ||grad (1 - Pi_{p+1}) f|| and c_st2 from the Galerkin
/// projection error ||grad (1 - G) f||, both against ||(1 - Pi_p) grad f||.
pub fn rayleigh_lower_bounds(verts: &[[f64; 2]; 3], p: usize, n_big: usize) -> Result<(f64, f64)> {
    if n_big < p + 2 {
        return Err(Error::Params(format!(
            "polynomial degree N = {n_big} must be at least p + 2 = {}",
            p + 2
        )));
    }
    let scalar = CellBasis::build(verts, n_big)?;
    let vec = VecPBasis::build(verts, n_big.max(1) - 1)?;
    let quad = PhysQuad::on_triangle(verts, 2 * n_big)?;
    let (gx, gy) = scalar.eval_grad(&quad.points);
    let (vx, vy) = vec.eval(&quad.points);
    let m = scalar.len() - 1; // non-constant functions span P_N / R
    let nv = vec.len();
    // gradient coordinates: column i holds grad f_{i+1} in the vector basis
    let mut d = DMatrix::zeros(nv, m);
    for i in 0..m {
        for j in 0..nv {
            let mut s = 0.0;
            for (r, &w) in quad.weights.iter().enumerate() {
                s += w * (gx[(r, i + 1)] * vx[(r, j)] + gy[(r, i + 1)] * vy[(r, j)]);
            }
            d[(j, i)] = s;
        }
    }
    // denominator: coordinates beyond the P_p block of the vector basis
    let cut = 2 * pk_dim(p);
    let tail = d.rows(cut, nv - cut).into_owned();
    let b = tail.transpose() * &tail;
    // c_st1 numerator: zero the P_{p+1} coefficients, then take gradients
    let keep_lo = pk_dim(p + 1) - 1;
    let mut d1 = d.clone();
    for i in 0..keep_lo {
        for j in 0..nv {
            d1[(j, i)] = 0.0;
        }
    }
    let a1 = d1.transpose() * &d1;
    // c_st2 numerator: distance of grad f to the span of grad P_{p+1}
    let grads = d.columns(0, keep_lo).into_owned();
    let gtg = grads.transpose() * &grads;
    let chol = gtg
        .cholesky()
        .ok_or_else(|| Error::Degenerate("dependent gradients in lower bound".into()))?;
    let resid = &d - &grads * chol.solve(&(grads.transpose() * &d));
    let a2 = resid.transpose() * &resid;
    let c1 = max_eig_pencil(&a1, &b)?;
    let c2 = max_eig_pencil(&a2, &b)?;
    Ok((c1.max(0.0).sqrt(), c2.max(0.0).sqrt()))
}

/// m_p^2 for the isosceles triangles conv{(0,0), (1,0), (cos w, sin w)}.
pub fn angle_sweep(omegas: &[f64], p: usize, cfg: FemConfig) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(omegas.len());
    for &w in omegas {
        if !(w > 0.0 && w < std::f64::consts::PI) {
            return Err(Error::Params(format!("angle {w} not in (0, pi)")));
        }
        let verts = [[0.0, 0.0], [1.0, 0.0], [w.cos(), w.sin()]];
        let res = compute_mp(&verts, p, cfg)?;
        out.push((w, res.m_p_sq));
    }
    Ok(out)
}
