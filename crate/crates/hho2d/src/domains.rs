//! Built-in benchmark domains with right-isosceles initial triangulations,
//! and the read-only table of reference eigenvalues used for error columns.
//!
//! All initial meshes consist of right-isosceles triangles, so the default
//! stability constants (C_st2 = sqrt(2), C_P = 1/(sqrt(2) pi)) apply on
//! every mesh obtained from them by newest-vertex bisection.

use crate::mesh::{build_mesh, Mesh, Vertex};
use crate::{Error, Result};
use std::collections::BTreeMap;

pub const NAMES: [&str; 6] = [
    "triangle",
    "square2",
    "square",
    "lshape",
    "isospectral",
    "dumbbell",
];

/// Construct a built-in domain mesh by name.
pub fn builtin(name: &str) -> Result<Mesh> {
    match name {
        // single right-isosceles triangle, mostly for tests
        "triangle" => build_mesh(
            vec![
                Vertex { x: 0.0, y: 0.0 },
                Vertex { x: 1.0, y: 0.0 },
                Vertex { x: 0.0, y: 1.0 },
            ],
            vec![[0, 1, 2]],
        ),
        // unit square split along the diagonal
        "square2" => build_mesh(
            vec![
                Vertex { x: 0.0, y: 0.0 },
                Vertex { x: 1.0, y: 0.0 },
                Vertex { x: 1.0, y: 1.0 },
                Vertex { x: 0.0, y: 1.0 },
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        ),
        // unit square, criss-cross (4 right-isosceles triangles)
        "square" => {
            let (v, t) = criss_cross(&[(0.0, 0.0)], 1.0, |_, _| 0);
            build_mesh(v, t)
        }
        // (-1,1)^2 minus the closed quadrant [0,1) x (-1,0]:
        // criss-cross of 3 unit squares, 12 triangles
        "lshape" => {
            let (v, t) = criss_cross(&[(-1.0, -1.0), (-1.0, 0.0), (0.0, 0.0)], 1.0, |_, _| 0);
            build_mesh(v, t)
        }
        "isospectral" => isospectral_drum(),
        "dumbbell" => dumbbell_slit(),
        _ => Err(Error::Invalid(format!(
            "unknown domain {name:?} (built-ins: {})",
            NAMES.join(", ")
        ))),
    }
}

/// Reference eigenvalues for the built-in domains. The square value is
/// analytic; the others are high-accuracy published computations and may
/// be overridden by the user on the command line.
pub fn reference_lambda(name: &str, j: usize) -> Option<f64> {
    match (name, j) {
        ("square" | "square2", 1) => Some(2.0 * std::f64::consts::PI * std::f64::consts::PI),
        ("lshape", 1) => Some(9.639_723_844_021_941_0),
        ("isospectral", 1) => Some(2.537_943_999_80),
        ("isospectral", 25) => Some(29.569_772_913_2),
        ("dumbbell", 1) => Some(8.367_702_430_882),
        _ => None,
    }
}

/// Criss-cross a list of axis-aligned squares (given by their lower-left
/// corners and common side length) into 4 right-isosceles triangles each.
/// `branch` assigns a copy index to lattice vertices, which lets slit
/// domains duplicate vertices along the slit (distinct copies never merge).
fn criss_cross(
    squares: &[(f64, f64)],
    s: f64,
    branch: impl Fn([f64; 2], [f64; 2]) -> i8,
) -> (Vec<Vertex>, Vec<[usize; 3]>) {
    // dedup vertices by scaled integer coordinates plus branch index
    let mut ids: BTreeMap<(i64, i64, i8), usize> = BTreeMap::new();
    let mut verts: Vec<Vertex> = Vec::new();
    let mut tris = Vec::new();
    let quant = 8.0 / s; // centers sit on the half-lattice
    for &(x0, y0) in squares {
        let c = [x0 + s / 2.0, y0 + s / 2.0];
        let corner = |dx: f64, dy: f64| [x0 + dx * s, y0 + dy * s];
        let mut id_of = |p: [f64; 2]| -> usize {
            let key = (
                (p[0] * quant).round() as i64,
                (p[1] * quant).round() as i64,
                branch(p, c),
            );
            *ids.entry(key).or_insert_with(|| {
                verts.push(Vertex { x: p[0], y: p[1] });
                verts.len() - 1
            })
        };
        let p00 = id_of(corner(0.0, 0.0));
        let p10 = id_of(corner(1.0, 0.0));
        let p11 = id_of(corner(1.0, 1.0));
        let p01 = id_of(corner(0.0, 1.0));
        let pc = id_of(c);
        tris.push([p00, p10, pc]);
        tris.push([p10, p11, pc]);
        tris.push([p11, p01, pc]);
        tris.push([p01, p00, pc]);
    }
    (verts, tris)
}

/// Isospectral drum (the propeller-shaped member of the classic isospectral
/// pair): a central right-isosceles triangle with a two-triangle blade glued
/// to each of its sides, 7 half-squares in total, here with legs of length 2.
fn isospectral_drum() -> Result<Mesh> {
    let raw: [[[f64; 2]; 3]; 7] = [
        [[1.0, 1.0], [2.0, 1.0], [1.0, 2.0]], // center
        [[1.0, 1.0], [2.0, 1.0], [1.0, 0.0]], // blade below ...
        [[1.0, 0.0], [2.0, 1.0], [2.0, 0.0]], // ... completed to a square
        [[1.0, 1.0], [1.0, 2.0], [0.0, 1.0]], // blade to the left ...
        [[0.0, 1.0], [1.0, 2.0], [0.0, 2.0]], // ... completed to a square
        [[2.0, 1.0], [1.0, 2.0], [2.0, 2.0]], // blade across the hypotenuse
        [[2.0, 1.0], [2.0, 2.0], [3.0, 2.0]], // ... bent outward
    ];
    let mut ids: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let mut verts: Vec<Vertex> = Vec::new();
    let mut tris = Vec::new();
    for t in &raw {
        let mut tri = [0usize; 3];
        for (k, p) in t.iter().enumerate() {
            // scale legs 1 -> 2
            let (x, y) = (2.0 * p[0], 2.0 * p[1]);
            let key = ((2.0 * x).round() as i64, (2.0 * y).round() as i64);
            tri[k] = *ids.entry(key).or_insert_with(|| {
                verts.push(Vertex { x, y });
                verts.len() - 1
            });
        }
        tris.push(tri);
    }
    build_mesh(verts, tris)
}

/// Dumbbell with a slit: (-3,2) x (-1,1) minus the rectangle
/// [-1,1] x [-3/4, 1) and minus the horizontal slit (-3,-2] x {0}.
/// Meshed by criss-crossing squares of side 1/4; lattice vertices on the
/// slit are duplicated so its two sides carry distinct boundary edges.
fn dumbbell_slit() -> Result<Mesh> {
    let s = 0.25;
    let eps = 1e-12;
    let mut squares = Vec::new();
    for ix in 0..20 {
        for iy in 0..8 {
            let x0 = -3.0 + s * ix as f64;
            let y0 = -1.0 + s * iy as f64;
            let removed =
                x0 >= -1.0 - eps && x0 + s <= 1.0 + eps && y0 >= -0.75 - eps;
            if !removed {
                squares.push((x0, y0));
            }
        }
    }
    let branch = |p: [f64; 2], center: [f64; 2]| -> i8 {
        let on_slit = p[1].abs() < eps && p[0] >= -3.0 - eps && p[0] < -2.0 - eps;
        if on_slit {
            if center[1] > 0.0 {
                1
            } else {
                -1
            }
        } else {
            0
        }
    };
    let (v, t) = criss_cross(&squares, s, branch);
    build_mesh(v, t)
}
