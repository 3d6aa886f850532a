//! Conforming triangulations with oriented edges, newest-vertex bisection
//! with closure, uniform refinement, and the plain-text mesh format.

use crate::{Error, Result};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vertex {
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct Triangle {
    pub v: [usize; 3],
    /// local index k of the refinement edge (v[k], v[(k+1)%3])
    pub refinement_edge: usize,
    pub generation: u32,
}

#[derive(Clone, Debug)]
pub struct Edge {
    /// vertex ids, ascending; the edge is parametrized from v[0] to v[1]
    pub v: [usize; 2],
    /// adjacent triangle ids, ascending (1 for boundary, 2 for interior)
    pub tris: Vec<usize>,
    /// unit normal: outward normal of tris[0] (points from the
    /// lower-indexed adjacent triangle towards the higher-indexed one)
    pub normal: [f64; 2],
    pub is_boundary: bool,
    pub length: f64,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<Vertex>,
    pub triangles: Vec<Triangle>,
    pub edges: Vec<Edge>,
    /// tri_edges[t][k] = edge id of local edge (v[k], v[(k+1)%3])
    pub tri_edges: Vec<[usize; 3]>,
    /// position of each edge among the interior edges, if interior
    pub interior_edge_index: Vec<Option<usize>>,
    pub n_interior_edges: usize,
    pub h_max: f64,
}

fn sorted_pair(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Build a mesh from raw vertex/triangle lists. Triangles are reoriented
/// counterclockwise; the initial refinement edge of each triangle is its
/// longest edge (first such local index on ties).
pub fn build_mesh(vertices: Vec<Vertex>, triangles: Vec<[usize; 3]>) -> Result<Mesh> {
    for (i, v) in vertices.iter().enumerate() {
        if !v.x.is_finite() || !v.y.is_finite() {
            return Err(Error::Mesh(format!("vertex {i} has non-finite coordinates")));
        }
    }
    let mut tris = Vec::with_capacity(triangles.len());
    let mut seen = std::collections::HashSet::new();
    for (i, t) in triangles.iter().enumerate() {
        let mut t = *t;
        for &vi in &t {
            if vi >= vertices.len() {
                return Err(Error::Mesh(format!("triangle {i} references vertex {vi}")));
            }
        }
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            return Err(Error::Mesh(format!("triangle {i} has repeated vertices")));
        }
        let mut key = t;
        key.sort_unstable();
        if !seen.insert(key) {
            return Err(Error::Mesh(format!("duplicate triangle {i}")));
        }
        let a = signed_area(&vertices, &t);
        let p = |k: usize| [vertices[t[k]].x, vertices[t[k]].y];
        let h = crate::basis::diameter(&[p(0), p(1), p(2)]);
        if a.abs() <= 1e-14 * h * h {
            return Err(Error::Mesh(format!("triangle {i} is degenerate")));
        }
        if a < 0.0 {
            t.swap(1, 2);
        }
        // longest edge, ties by smallest local index
        let mut re = 0;
        let mut best = -1.0;
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let l = ((vertices[a].x - vertices[b].x).powi(2)
                + (vertices[a].y - vertices[b].y).powi(2))
            .sqrt();
            if l > best + 1e-14 * h {
                best = l;
                re = k;
            }
        }
        tris.push((t, re, 0u32));
    }
    let mesh = from_parts(vertices, tris)?;
    mesh.check_hanging_nodes()?;
    Ok(mesh)
}

fn signed_area(vertices: &[Vertex], t: &[usize; 3]) -> f64 {
    let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

/// Internal constructor preserving refinement edges and generations.
fn from_parts(vertices: Vec<Vertex>, tris: Vec<([usize; 3], usize, u32)>) -> Result<Mesh> {
    let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut tri_edges = Vec::with_capacity(tris.len());
    let mut triangles = Vec::with_capacity(tris.len());
    for (i, &(v, re, generation)) in tris.iter().enumerate() {
        if signed_area(&vertices, &v) <= 0.0 {
            return Err(Error::Mesh(format!("triangle {i} not positively oriented")));
        }
        let mut te = [0usize; 3];
        for k in 0..3 {
            let key = sorted_pair(v[k], v[(k + 1) % 3]);
            let id = *edge_ids.entry(key).or_insert_with(|| {
                let (a, b) = key;
                let (va, vb) = (vertices[a], vertices[b]);
                edges.push(Edge {
                    v: [a, b],
                    tris: Vec::new(),
                    normal: [0.0, 0.0],
                    is_boundary: false,
                    length: ((va.x - vb.x).powi(2) + (va.y - vb.y).powi(2)).sqrt(),
                });
                edges.len() - 1
            });
            if edges[id].tris.len() >= 2 {
                return Err(Error::Mesh(format!(
                    "edge ({}, {}) shared by more than two triangles",
                    v[k],
                    v[(k + 1) % 3]
                )));
            }
            edges[id].tris.push(i);
            te[k] = id;
        }
        tri_edges.push(te);
        triangles.push(Triangle {
            v,
            refinement_edge: re,
            generation,
        });
    }
    let mut interior_edge_index = vec![None; edges.len()];
    let mut n_interior = 0;
    for (id, e) in edges.iter_mut().enumerate() {
        e.tris.sort_unstable();
        e.is_boundary = e.tris.len() == 1;
        if !e.is_boundary {
            interior_edge_index[id] = Some(n_interior);
            n_interior += 1;
        }
        // outward normal of the lowest-indexed adjacent triangle
        let t = &triangles[e.tris[0]];
        let (a, b) = (vertices[e.v[0]], vertices[e.v[1]]);
        let mut n = [(b.y - a.y) / e.length, -(b.x - a.x) / e.length];
        let opp = t
            .v
            .iter()
            .copied()
            .find(|vi| *vi != e.v[0] && *vi != e.v[1])
            .expect("edge vertices must belong to the triangle");
        let mid = [(a.x + b.x) / 2.0, (a.y + b.y) / 2.0];
        let to_mid = [mid[0] - vertices[opp].x, mid[1] - vertices[opp].y];
        if n[0] * to_mid[0] + n[1] * to_mid[1] < 0.0 {
            n = [-n[0], -n[1]];
        }
        e.normal = n;
    }
    let mut h_max: f64 = 0.0;
    for t in &triangles {
        let p = |k: usize| [vertices[t.v[k]].x, vertices[t.v[k]].y];
        h_max = h_max.max(crate::basis::diameter(&[p(0), p(1), p(2)]));
    }
    Ok(Mesh {
        vertices,
        triangles,
        edges,
        tri_edges,
        interior_edge_index,
        n_interior_edges: n_interior,
        h_max,
    })
}

impl Mesh {
    pub fn tri_verts(&self, t: usize) -> [[f64; 2]; 3] {
        let tv = self.triangles[t].v;
        [
            [self.vertices[tv[0]].x, self.vertices[tv[0]].y],
            [self.vertices[tv[1]].x, self.vertices[tv[1]].y],
            [self.vertices[tv[2]].x, self.vertices[tv[2]].y],
        ]
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, &self.triangles[t].v)
    }

    pub fn diameter(&self, t: usize) -> f64 {
        crate::basis::diameter(&self.tri_verts(t))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    /// Outward unit normal of triangle t on its local edge k.
    pub fn outward_normal(&self, t: usize, k: usize) -> [f64; 2] {
        let tv = self.triangles[t].v;
        let (a, b) = (self.vertices[tv[k]], self.vertices[tv[(k + 1) % 3]]);
        let l = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
        // CCW orientation: outward normal is the edge direction rotated by -pi/2
        [(b.y - a.y) / l, -(b.x - a.x) / l]
    }

    /// Interior angles of triangle t (radians).
    pub fn angles(&self, t: usize) -> [f64; 3] {
        let v = self.tri_verts(t);
        let mut out = [0.0; 3];
        for k in 0..3 {
            let a = v[k];
            let b = v[(k + 1) % 3];
            let c = v[(k + 2) % 3];
            let u = [b[0] - a[0], b[1] - a[1]];
            let w = [c[0] - a[0], c[1] - a[1]];
            out[k] = (u[0] * w[1] - u[1] * w[0])
                .atan2(u[0] * w[0] + u[1] * w[1])
                .abs();
        }
        out
    }

    pub fn min_angle(&self) -> f64 {
        (0..self.triangles.len())
            .flat_map(|t| self.angles(t))
            .fold(f64::INFINITY, f64::min)
    }

    /// Newest-vertex bisection of the marked triangles plus the minimal
    /// closure keeping the mesh conforming.
    pub fn bisect(&self, marked: &[usize]) -> Result<Mesh> {
        for &t in marked {
            if t >= self.triangles.len() {
                return Err(Error::Mesh(format!("marked triangle {t} out of range")));
            }
        }
        let mut b = Bisector::new(self);
        for &t in marked {
            b.refine(t)?;
        }
        b.finish()
    }

    /// Uniform refinement: every triangle bisected twice (4 children per
    /// triangle, similar children for right-isosceles input).
    pub fn uniform_refine(&self) -> Result<Mesh> {
        self.bisect_all()?.bisect_all()
    }

    /// One round of bisection of every triangle.
    pub fn bisect_all(&self) -> Result<Mesh> {
        let all: Vec<usize> = (0..self.triangles.len()).collect();
        self.bisect(&all)
    }

    /// Detect hanging nodes: a vertex lying in the interior of an edge.
    /// Skipped on large meshes (refinement preserves conformity).
    pub fn check_hanging_nodes(&self) -> Result<()> {
        if self.vertices.len() * self.edges.len() > 4_000_000 {
            return Ok(());
        }
        for e in &self.edges {
            let (a, b) = (self.vertices[e.v[0]], self.vertices[e.v[1]]);
            for (vi, v) in self.vertices.iter().enumerate() {
                if vi == e.v[0] || vi == e.v[1] {
                    continue;
                }
                let cross = (b.x - a.x) * (v.y - a.y) - (b.y - a.y) * (v.x - a.x);
                if cross.abs() > 1e-12 * e.length * e.length {
                    continue;
                }
                let dot = (b.x - a.x) * (v.x - a.x) + (b.y - a.y) * (v.y - a.y);
                let t = dot / (e.length * e.length);
                if t > 1e-12 && t < 1.0 - 1e-12 {
                    let same_spot = (v.x - a.x - t * (b.x - a.x)).abs() < 1e-12
                        && (v.y - a.y - t * (b.y - a.y)).abs() < 1e-12;
                    if same_spot {
                        return Err(Error::Mesh(format!(
                            "hanging node: vertex {vi} lies inside edge ({}, {})",
                            e.v[0], e.v[1]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Working state for a bisection pass.
struct Bisector {
    vertices: Vec<Vertex>,
    tris: Vec<([usize; 3], usize, u32)>,
    alive: Vec<bool>,
    /// dynamic edge -> live adjacent triangles
    adj: HashMap<(usize, usize), Vec<usize>>,
    midpoints: HashMap<(usize, usize), usize>,
}

impl Bisector {
    fn new(mesh: &Mesh) -> Self {
        let mut adj: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        let tris: Vec<_> = mesh
            .triangles
            .iter()
            .map(|t| (t.v, t.refinement_edge, t.generation))
            .collect();
        for (i, &(v, _, _)) in tris.iter().enumerate() {
            for k in 0..3 {
                adj.entry(sorted_pair(v[k], v[(k + 1) % 3]))
                    .or_default()
                    .push(i);
            }
        }
        Bisector {
            vertices: mesh.vertices.clone(),
            alive: vec![true; tris.len()],
            tris,
            adj,
            midpoints: HashMap::new(),
        }
    }

    fn ref_edge(&self, t: usize) -> (usize, usize) {
        let (v, re, _) = self.tris[t];
        sorted_pair(v[re], v[(re + 1) % 3])
    }

    fn neighbor_across(&self, t: usize, key: (usize, usize)) -> Option<usize> {
        self.adj
            .get(&key)?
            .iter()
            .copied()
            .find(|&s| s != t && self.alive[s])
    }

    fn refine(&mut self, t0: usize) -> Result<()> {
        if !self.alive[t0] {
            return Ok(());
        }
        let limit = 4 * self.tris.len() + 64;
        let mut stack = vec![t0];
        while let Some(&t) = stack.last() {
            if !self.alive[t] {
                stack.pop();
                continue;
            }
            if stack.len() > limit {
                return Err(Error::Mesh(
                    "bisection closure did not terminate (incompatible refinement edges)".into(),
                ));
            }
            let key = self.ref_edge(t);
            let nb = self.neighbor_across(t, key);
            if let Some(n) = nb {
                if self.ref_edge(n) != key {
                    stack.push(n);
                    continue;
                }
            }
            let m = self.midpoint(key);
            self.split(t, m);
            if let Some(n) = nb {
                self.split(n, m);
            }
            stack.pop();
        }
        Ok(())
    }

    fn midpoint(&mut self, key: (usize, usize)) -> usize {
        if let Some(&m) = self.midpoints.get(&key) {
            return m;
        }
        let (a, b) = (self.vertices[key.0], self.vertices[key.1]);
        self.vertices.push(Vertex {
            x: (a.x + b.x) / 2.0,
            y: (a.y + b.y) / 2.0,
        });
        let id = self.vertices.len() - 1;
        self.midpoints.insert(key, id);
        id
    }

    /// Bisect triangle t across its refinement edge (a,b) with peak c,
    /// producing children (c,a,m) and (b,c,m), each with the refinement
    /// edge opposite the new vertex m.
    fn split(&mut self, t: usize, m: usize) {
        let (v, re, generation) = self.tris[t];
        let (a, b, c) = (v[re], v[(re + 1) % 3], v[(re + 2) % 3]);
        self.alive[t] = false;
        for k in 0..3 {
            let key = sorted_pair(v[k], v[(k + 1) % 3]);
            if let Some(list) = self.adj.get_mut(&key) {
                list.retain(|&s| s != t);
            }
        }
        for child in [[c, a, m], [b, c, m]] {
            let id = self.tris.len();
            self.tris.push((child, 0, generation + 1));
            self.alive.push(true);
            for k in 0..3 {
                self.adj
                    .entry(sorted_pair(child[k], child[(k + 1) % 3]))
                    .or_default()
                    .push(id);
            }
        }
    }

    fn finish(self) -> Result<Mesh> {
        let tris: Vec<_> = self
            .tris
            .into_iter()
            .zip(&self.alive)
            .filter(|(_, &a)| a)
            .map(|(t, _)| t)
            .collect();
        from_parts(self.vertices, tris)
    }
}

/// Serialize in the plain-text format:
/// header "vertices N / triangles M", N lines "x y", M lines "i j k".
pub fn write_mesh(mesh: &Mesh) -> String {
    let mut s = format!(
        "vertices {} / triangles {}\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    );
    for v in &mesh.vertices {
        s.push_str(&format!("{:.17e} {:.17e}\n", v.x, v.y));
    }
    for t in &mesh.triangles {
        s.push_str(&format!("{} {} {}\n", t.v[0], t.v[1], t.v[2]));
    }
    s
}

/// Parse the plain-text mesh format. An optional fourth integer per
/// triangle line (boundary tag) is accepted and ignored.
pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty mesh file".into()))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 5 || toks[0] != "vertices" || toks[2] != "/" || toks[3] != "triangles" {
        return Err(Error::Parse(format!(
            "bad header {header:?}, expected \"vertices N / triangles M\""
        )));
    }
    let n: usize = toks[1]
        .parse()
        .map_err(|_| Error::Parse("bad vertex count".into()))?;
    let m: usize = toks[4]
        .parse()
        .map_err(|_| Error::Parse("bad triangle count".into()))?;
    let mut vertices = Vec::with_capacity(n);
    for _ in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse("missing vertex line".into()))?;
        let c: Vec<&str> = line.split_whitespace().collect();
        if c.len() != 2 {
            return Err(Error::Parse(format!("bad vertex line {line:?}")));
        }
        vertices.push(Vertex {
            x: c[0]
                .parse()
                .map_err(|_| Error::Parse(format!("bad coordinate {:?}", c[0])))?,
            y: c[1]
                .parse()
                .map_err(|_| Error::Parse(format!("bad coordinate {:?}", c[1])))?,
        });
    }
    let mut triangles = Vec::with_capacity(m);
    for _ in 0..m {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse("missing triangle line".into()))?;
        let c: Vec<&str> = line.split_whitespace().collect();
        if c.len() != 3 && c.len() != 4 {
            return Err(Error::Parse(format!("bad triangle line {line:?}")));
        }
        let mut t = [0usize; 3];
        for k in 0..3 {
            t[k] = c[k]
                .parse()
                .map_err(|_| Error::Parse(format!("bad index {:?}", c[k])))?;
        }
        triangles.push(t);
    }
    build_mesh(vertices, triangles)
}
