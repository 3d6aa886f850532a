//! Residual a posteriori error estimator for the computed eigenpairs,
//! the discrete-identity checks backing its reliability, and Dörfler
//! bulk marking.
//!
//! The estimated quantity is built from p_h := Pi_p(G u_h), the cellwise
//! L2 projection of the gradient reconstruction onto P_p(T; R^2).

use crate::basis::VecPBasis;
use crate::hho::{projected_gradient_local, CellContext, HHOVector};
use crate::mesh::Mesh;
use crate::quad::{edge_quad, PhysQuad};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Per-triangle indicators and their sum.
pub struct Indicators {
    pub local: Vec<f64>,
    pub total: f64,
}

/// The flux approximation p_h: per-cell coefficients in the orthonormal
/// vector-valued P_p basis.
pub struct FluxField {
    pub p: usize,
    pub coeffs: Vec<DVector<f64>>,
}

impl FluxField {
    /// global L2 norm (the bases are orthonormal)
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt()
    }
}

/// p_h = Pi_p G u_h on every cell.
pub fn compute_ph(mesh: &Mesh, u_h: &HHOVector) -> Result<FluxField> {
    let mut coeffs = Vec::with_capacity(mesh.triangles.len());
    for t in 0..mesh.triangles.len() {
        let ctx = CellContext::build(mesh, t, u_h.p)?;
        let pg = projected_gradient_local(&ctx)?;
        coeffs.push(&pg * u_h.gather(mesh, t));
    }
    Ok(FluxField { p: u_h.p, coeffs })
}

/// eta^2(T) = |T| (||div p_h + lambda u_T||_T^2 + ||curl p_h||_T^2)
///          + sqrt(|T|) (sum over interior edges of T of ||[p_h . nu]||_F^2
///                       + sum over all edges of T of ||[p_h . t]||_F^2),
/// where the tangential "jump" on a boundary edge is the trace itself.
/// Edge terms are computed once per edge and scattered to both cells.
pub fn estimate(
    mesh: &Mesh,
    ph: &FluxField,
    u_h: &HHOVector,
    lambda_h: f64,
) -> Result<Indicators> {
    let p = ph.p;
    let nt = mesh.triangles.len();
    let mut local = vec![0.0; nt];
    let mut vp: Vec<VecPBasis> = Vec::with_capacity(nt);
    // volume terms
    for t in 0..nt {
        let verts = mesh.tri_verts(t);
        let basis = VecPBasis::build(&verts, p)?;
        let cell = crate::basis::CellBasis::build(&verts, p + 1)?;
        let quad = PhysQuad::on_triangle(&verts, 2 * (p + 2))?;
        let dv = basis.eval_div(&quad.points);
        let cv = basis.eval_curl(&quad.points);
        let uv = cell.eval(&quad.points);
        let c = &ph.coeffs[t];
        let ut = u_h.cell.rows(t * u_h.nc, u_h.nc);
        let mut div_term = 0.0;
        let mut curl_term = 0.0;
        for (r, &w) in quad.weights.iter().enumerate() {
            let mut d = 0.0;
            let mut cu = 0.0;
            for i in 0..basis.len() {
                d += c[i] * dv[(r, i)];
                cu += c[i] * cv[(r, i)];
            }
            let mut u = 0.0;
            for i in 0..u_h.nc {
                u += ut[i] * uv[(r, i)];
            }
            div_term += w * (d + lambda_h * u).powi(2);
            curl_term += w * cu * cu;
        }
        local[t] += mesh.area(t) * (div_term + curl_term);
        vp.push(basis);
    }
    // edge terms, one pass per edge
    for e in &mesh.edges {
        let a = [mesh.vertices[e.v[0]].x, mesh.vertices[e.v[0]].y];
        let b = [mesh.vertices[e.v[1]].x, mesh.vertices[e.v[1]].y];
        let (qpts, qw, _) = edge_quad(a, b, p + 2);
        let nu = e.normal;
        let tau = [-nu[1], nu[0]];
        let eval_ph = |t: usize| -> (Vec<f64>, Vec<f64>) {
            let (vx, vy) = vp[t].eval(&qpts);
            let c = &ph.coeffs[t];
            let mut pn = vec![0.0; qpts.len()];
            let mut pt = vec![0.0; qpts.len()];
            for r in 0..qpts.len() {
                let mut px = 0.0;
                let mut py = 0.0;
                for i in 0..vp[t].len() {
                    px += c[i] * vx[(r, i)];
                    py += c[i] * vy[(r, i)];
                }
                pn[r] = px * nu[0] + py * nu[1];
                pt[r] = px * tau[0] + py * tau[1];
            }
            (pn, pt)
        };
        let (pn0, pt0) = eval_ph(e.tris[0]);
        if e.is_boundary {
            // tangential trace only
            let jt: f64 = qw.iter().zip(&pt0).map(|(w, v)| w * v * v).sum();
            let t0 = e.tris[0];
            local[t0] += mesh.area(t0).sqrt() * jt;
        } else {
            let (pn1, pt1) = eval_ph(e.tris[1]);
            let mut jn = 0.0;
            let mut jt = 0.0;
            for r in 0..qpts.len() {
                jn += qw[r] * (pn0[r] - pn1[r]).powi(2);
                jt += qw[r] * (pt0[r] - pt1[r]).powi(2);
            }
            for &t in &e.tris {
                local[t] += mesh.area(t).sqrt() * (jn + jt);
            }
        }
    }
    let total = local.iter().sum();
    Ok(Indicators { local, total })
}

/// Maximal violations of the two discrete identities behind reliability:
/// a1: |(p_h, grad v_z) - lambda (u_T, v_z)| over interior P1 hats v_z,
/// a2: |(p_h, Curl v_z)| over all P1 hats (spanning the divergence-free
/// lowest-order Raviart-Thomas fields together with the constants).
pub struct IdentityCheck {
    pub a1: f64,
    pub a2: f64,
    pub ph_norm: f64,
}

pub fn verify_identities(
    mesh: &Mesh,
    ph: &FluxField,
    u_h: &HHOVector,
    lambda_h: f64,
) -> Result<IdentityCheck> {
    let p = ph.p;
    let nv = mesh.vertices.len();
    // star of each vertex
    let mut stars: Vec<Vec<usize>> = vec![Vec::new(); nv];
    let mut on_boundary = vec![false; nv];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &v in &tri.v {
            stars[v].push(t);
        }
    }
    for e in &mesh.edges {
        if e.is_boundary {
            on_boundary[e.v[0]] = true;
            on_boundary[e.v[1]] = true;
        }
    }
    let mut a1_max = 0.0f64;
    let mut a2_max = 0.0f64;
    for z in 0..nv {
        let mut a1 = 0.0;
        let mut a2 = 0.0;
        for &t in &stars[z] {
            let verts = mesh.tri_verts(t);
            let g = hat_gradient(&verts, mesh.triangles[t].v.iter().position(|&v| v == z).unwrap())?;
            let curl = [-g[1], g[0]];
            let basis = VecPBasis::build(&verts, p)?;
            let cell = crate::basis::CellBasis::build(&verts, p + 1)?;
            let quad = PhysQuad::on_triangle(&verts, 2 * (p + 2))?;
            let (vx, vy) = basis.eval(&quad.points);
            let uv = cell.eval(&quad.points);
            let c = &ph.coeffs[t];
            let ut = u_h.cell.rows(t * u_h.nc, u_h.nc);
            let zpos = [mesh.vertices[z].x, mesh.vertices[z].y];
            for (r, &w) in quad.weights.iter().enumerate() {
                let mut px = 0.0;
                let mut py = 0.0;
                for i in 0..basis.len() {
                    px += c[i] * vx[(r, i)];
                    py += c[i] * vy[(r, i)];
                }
                // hat value at the quadrature point
                let pt = quad.points[r];
                let hat = 1.0 + g[0] * (pt[0] - zpos[0]) + g[1] * (pt[1] - zpos[1]);
                let mut u = 0.0;
                for i in 0..u_h.nc {
                    u += ut[i] * uv[(r, i)];
                }
                a1 += w * (px * g[0] + py * g[1] - lambda_h * u * hat);
                a2 += w * (px * curl[0] + py * curl[1]);
            }
        }
        if !on_boundary[z] {
            a1_max = a1_max.max(a1.abs());
        }
        a2_max = a2_max.max(a2.abs());
    }
    Ok(IdentityCheck {
        a1: a1_max,
        a2: a2_max,
        ph_norm: ph.norm(),
    })
}

/// gradient of the P1 hat that is 1 at local vertex k and 0 at the others
fn hat_gradient(verts: &[[f64; 2]; 3], k: usize) -> Result<[f64; 2]> {
    let a = verts[k];
    let b = verts[(k + 1) % 3];
    let c = verts[(k + 2) % 3];
    // solve g . (b - a) = -1, g . (c - a) = -1
    let m = DMatrix::from_row_slice(2, 2, &[b[0] - a[0], b[1] - a[1], c[0] - a[0], c[1] - a[1]]);
    let rhs = DVector::from_column_slice(&[-1.0, -1.0]);
    let g = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("flat triangle in hat gradient".into()))?;
    Ok([g[0], g[1]])
}

/// Greedy Dörfler marking: the minimal set M (descending indicators, ties
/// by index) with sum over M >= theta * total.
pub fn mark_doerfler(ind: &Indicators, theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Params(format!("theta = {theta} not in (0, 1]")));
    }
    let mut order: Vec<usize> = (0..ind.local.len()).collect();
    order.sort_by(|&i, &j| {
        ind.local[j]
            .partial_cmp(&ind.local[i])
            .unwrap()
            .then(i.cmp(&j))
    });
    let goal = theta * ind.total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for &t in &order {
        if acc >= goal || ind.local[t] == 0.0 {
            break;
        }
        acc += ind.local[t];
        marked.push(t);
    }
    marked.sort_unstable();
    Ok(marked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, glb_check};
    use crate::basis::l2_project_vec;
    use crate::domains::builtin;
    use crate::hho::{interpolate, Params};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn ph_of_affine_interpolant_is_its_gradient() {
        // boundary-edge dofs are clipped to zero, so the identity holds on
        // cells whose edges are all interior
        let mesh = builtin("square").unwrap().uniform_refine().unwrap();
        for p in 0..=2usize {
            let v = interpolate(&mesh, p, |pt| 2.0 * pt[0] - 0.5 * pt[1] + 1.0).unwrap();
            let ph = compute_ph(&mesh, &v).unwrap();
            let mut checked = 0;
            for t in 0..mesh.triangles.len() {
                let inner = mesh.tri_edges[t]
                    .iter()
                    .all(|&e| !mesh.edges[e].is_boundary);
                if !inner {
                    continue;
                }
                checked += 1;
                let verts = mesh.tri_verts(t);
                let basis = VecPBasis::build(&verts, p).unwrap();
                let quad = PhysQuad::on_triangle(&verts, 2 * (p + 2)).unwrap();
                let exact = l2_project_vec(|_| [2.0, -0.5], &basis, &quad);
                assert!((&ph.coeffs[t] - exact).amax() < 1e-11, "p={p} t={t}");
            }
            assert!(checked > 0);
        }
    }

    #[test]
    fn ph_linear_in_u_and_p0_mean_oracle() {
        let mesh = builtin("lshape").unwrap();
        let p = 1;
        let f = |pt: [f64; 2]| (pt[0] * 2.1).cos() + pt[1] * pt[1];
        let g = |pt: [f64; 2]| pt[0] * pt[1];
        let vf = interpolate(&mesh, p, f).unwrap();
        let vg = interpolate(&mesh, p, g).unwrap();
        let mut vc = interpolate(&mesh, p, |pt| 3.0 * f(pt) - 2.0 * g(pt)).unwrap();
        let pf = compute_ph(&mesh, &vf).unwrap();
        let pg = compute_ph(&mesh, &vg).unwrap();
        let pc = compute_ph(&mesh, &vc).unwrap();
        for t in 0..mesh.triangles.len() {
            let lin = 3.0 * &pf.coeffs[t] - 2.0 * &pg.coeffs[t];
            assert!((&pc.coeffs[t] - lin).amax() < 1e-11);
        }
        // p = 0: the flux is the cell mean of G u_h; its integral against
        // the constant field recovers the reconstruction moments
        vc = interpolate(&mesh, 0, f).unwrap();
        let ph0 = compute_ph(&mesh, &vc).unwrap();
        for t in 0..2 {
            let ctx = CellContext::build(&mesh, t, 0).unwrap();
            let gmat = crate::hho::gradient_reconstruction_local(&ctx).unwrap();
            let gcoef = &gmat * vc.gather(&mesh, t);
            let (rx, ry) = ctx.rt.eval(&ctx.quad.points);
            let (vx, vy) = ctx.vp.eval(&ctx.quad.points);
            // mean of G u via quadrature, compared with the P0 flux
            let mut mx = 0.0;
            let mut my = 0.0;
            let mut fx = 0.0;
            let mut fy = 0.0;
            for (r, &w) in ctx.quad.weights.iter().enumerate() {
                for i in 0..ctx.rt.len() {
                    mx += w * gcoef[i] * rx[(r, i)];
                    my += w * gcoef[i] * ry[(r, i)];
                }
                for i in 0..ctx.vp.len() {
                    fx += w * ph0.coeffs[t][i] * vx[(r, i)];
                    fy += w * ph0.coeffs[t][i] * vy[(r, i)];
                }
            }
            assert!((mx - fx).abs() < 1e-11 && (my - fy).abs() < 1e-11);
        }
    }

    #[test]
    fn p0_volume_term_on_one_triangle() {
        let mesh = builtin("triangle").unwrap();
        let mut u = HHOVector::zeros(&mesh, 0);
        u.cell[0] = 1.0; // constant with L2 norm one
        let ph = FluxField {
            p: 0,
            coeffs: vec![DVector::zeros(2)],
        };
        let lambda = 3.0;
        let ind = estimate(&mesh, &ph, &u, lambda).unwrap();
        // zero flux: volume term |T| lambda^2 ||u_T||^2, no normal jumps,
        // zero tangential traces
        let area = mesh.area(0);
        assert!((ind.local[0] - area * lambda * lambda).abs() < 1e-12);
        assert!((ind.total - ind.local.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn indicators_nonnegative_and_edge_orientation_free() {
        // the jump enters squared: rebuilding the mesh with each interior
        // edge's triangles swapped in construction order leaves eta^2 alone
        let mesh = builtin("square").unwrap();
        let params = Params::default();
        let sys = assemble(&mesh, 1, &params).unwrap();
        let res = sys.solve(1, 0).unwrap();
        let ph = compute_ph(&mesh, &res.vectors[0]).unwrap();
        let ind = estimate(&mesh, &ph, &res.vectors[0], res.lambdas[0]).unwrap();
        assert!(ind.local.iter().all(|&e| e >= 0.0));
        // reversed triangle insertion order
        let verts = mesh.vertices.clone();
        let tris: Vec<[usize; 3]> = mesh.triangles.iter().rev().map(|t| t.v).collect();
        let mesh2 = crate::mesh::build_mesh(verts, tris).unwrap();
        let sys2 = assemble(&mesh2, 1, &params).unwrap();
        let res2 = sys2.solve(1, 0).unwrap();
        let ph2 = compute_ph(&mesh2, &res2.vectors[0]).unwrap();
        let ind2 = estimate(&mesh2, &ph2, &res2.vectors[0], res2.lambdas[0]).unwrap();
        let nt = mesh.triangles.len();
        for t in 0..nt {
            // the eigensolver contract allows relative errors up to 1e-9
            let d = (ind.local[t] - ind2.local[nt - 1 - t]).abs();
            assert!(d < 1e-7 * ind.total, "t={t}");
        }
    }

    #[test]
    fn manufactured_eigenfield_rate() {
        // u = 2 sin(pi x) sin(pi y), lambda = 2 pi^2 on the unit square:
        // eta^2 = O(h^{2(p+1)}) under uniform refinement
        let u = |pt: [f64; 2]| 2.0 * (PI * pt[0]).sin() * (PI * pt[1]).sin();
        let gu = move |pt: [f64; 2]| {
            [
                2.0 * PI * (PI * pt[0]).cos() * (PI * pt[1]).sin(),
                2.0 * PI * (PI * pt[0]).sin() * (PI * pt[1]).cos(),
            ]
        };
        let lambda = 2.0 * PI * PI;
        for p in 0..=1usize {
            let mut mesh = builtin("square").unwrap().uniform_refine().unwrap();
            let mut etas = Vec::new();
            for _ in 0..3 {
                let uh = interpolate(&mesh, p, u).unwrap();
                let mut coeffs = Vec::new();
                for t in 0..mesh.triangles.len() {
                    let verts = mesh.tri_verts(t);
                    let basis = VecPBasis::build(&verts, p).unwrap();
                    let quad = PhysQuad::on_triangle(&verts, (2 * (p + 2) + 4).min(crate::quad::MAX_DEGREE)).unwrap();
                    coeffs.push(l2_project_vec(gu, &basis, &quad));
                }
                let ph = FluxField { p, coeffs };
                let ind = estimate(&mesh, &ph, &uh, lambda).unwrap();
                etas.push(ind.total);
                mesh = mesh.uniform_refine().unwrap();
            }
            // each refinement halves h
            for w in etas.windows(2) {
                let rate = (w[0] / w[1]).log2();
                assert!(
                    rate >= 2.0 * (p as f64 + 1.0) - 0.3,
                    "p={p}: rate {rate}, etas {etas:?}"
                );
            }
        }
    }

    #[test]
    fn identities_hold_and_perturbation_breaks_them() {
        let mesh = builtin("lshape").unwrap().uniform_refine().unwrap();
        let params = Params::default();
        let sys = assemble(&mesh, 1, &params).unwrap();
        let res = sys.solve(2, 0).unwrap();
        for j in 0..2 {
            let ph = compute_ph(&mesh, &res.vectors[j]).unwrap();
            let chk = verify_identities(&mesh, &ph, &res.vectors[j], res.lambdas[j]).unwrap();
            assert!(chk.a1 <= 1e-9 * chk.ph_norm, "j={j}: a1 = {}", chk.a1);
            assert!(chk.a2 <= 1e-9 * chk.ph_norm, "j={j}: a2 = {}", chk.a2);
        }
        // random perturbation of the flux must be detected
        let mut ph = compute_ph(&mesh, &res.vectors[0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for c in &mut ph.coeffs {
            for i in 0..c.len() {
                c[i] += 1e-3 * (rng.gen::<f64>() - 0.5);
            }
        }
        let chk = verify_identities(&mesh, &ph, &res.vectors[0], res.lambdas[0]).unwrap();
        assert!(chk.a1 > 1e-6 * chk.ph_norm || chk.a2 > 1e-6 * chk.ph_norm);
    }

    #[test]
    fn single_triangle_has_no_interior_hats() {
        let mesh = builtin("triangle").unwrap();
        let params = Params::default();
        let sys = assemble(&mesh, 0, &params).unwrap();
        let res = sys.solve(1, 0).unwrap();
        let ph = compute_ph(&mesh, &res.vectors[0]).unwrap();
        let chk = verify_identities(&mesh, &ph, &res.vectors[0], res.lambdas[0]).unwrap();
        assert_eq!(chk.a1, 0.0); // vacuous maximum
        assert!(chk.a2 <= 1e-9 * chk.ph_norm.max(1.0));
        // keep the lower-bound report exercised on the smallest case
        let rep = glb_check(&res, mesh.h_max, &params);
        assert!(rep.entries[0].glb <= rep.entries[0].lambda_h);
    }

    #[test]
    fn doerfler_examples() {
        let ind = Indicators {
            local: vec![4.0, 3.0, 2.0, 1.0],
            total: 10.0,
        };
        assert_eq!(mark_doerfler(&ind, 0.5).unwrap(), vec![0, 1]);
        // theta = 1 marks everything with a positive indicator
        let ind2 = Indicators {
            local: vec![1.0, 0.0, 2.0],
            total: 3.0,
        };
        assert_eq!(mark_doerfler(&ind2, 1.0).unwrap(), vec![0, 2]);
        // equal indicators: exactly half (rounded up)
        let ind3 = Indicators {
            local: vec![1.0; 5],
            total: 5.0,
        };
        assert_eq!(mark_doerfler(&ind3, 0.5).unwrap().len(), 3);
        assert!(mark_doerfler(&ind3, 0.0).is_err());
        assert!(mark_doerfler(&ind3, 1.5).is_err());
    }

    #[test]
    fn marked_set_is_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let local: Vec<f64> = (0..12).map(|_| rng.gen::<f64>()).collect();
            let total = local.iter().sum();
            let ind = Indicators { local, total };
            let theta = 0.3 + 0.6 * rng.gen::<f64>();
            let marked = mark_doerfler(&ind, theta).unwrap();
            let sum: f64 = marked.iter().map(|&t| ind.local[t]).sum();
            assert!(sum >= theta * total - 1e-12);
            // dropping the smallest marked indicator breaks the inequality
            if let Some(&tmin) = marked
                .iter()
                .min_by(|&&a, &&b| ind.local[a].partial_cmp(&ind.local[b]).unwrap())
            {
                assert!(sum - ind.local[tmin] < theta * total);
            }
        }
    }
}
