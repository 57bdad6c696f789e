//! Conforming simplicial meshes of the space-time box `(0,1)^d x (0,1)`.
//!
//! The last coordinate of every vertex is time. Elements store their vertices
//! in bisection order together with a type tag, so the refinement edge of an
//! element is always the edge joining its first and last vertex. Refinement
//! bisects that edge and the closure loop keeps bisecting until no element has
//! a hanging node.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Largest space-time dimension handled (d = 2 spatial + time).
pub const MAX_DIM: usize = 3;

/// Distance within which a vertex counts as lying on a face of the unit box.
pub const BOUNDARY_TOL: f64 = 1e-12;

pub type Point = [f64; MAX_DIM];

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// `x` on the spatial boundary, `0 < t < 1`.
    Lateral,
    /// `t = 0`.
    Bottom,
    /// `t = 1`.
    Top,
    Interior,
}

/// Sorted vertex ids of a facet; unused slots hold `usize::MAX`.
pub type FacetKey = [usize; MAX_DIM];

#[derive(Clone, Debug)]
pub struct Element {
    vertices: [usize; MAX_DIM + 1],
    nv: u8,
    tag: u8,
    pub generation: u32,
    /// Index of the bisected parent in [`SimplicialMesh::ancestors`].
    pub parent: Option<usize>,
}

impl Element {
    fn new(vs: &[usize], tag: u8, generation: u32, parent: Option<usize>) -> Self {
        let mut vertices = [usize::MAX; MAX_DIM + 1];
        vertices[..vs.len()].copy_from_slice(vs);
        Element {
            vertices,
            nv: vs.len() as u8,
            tag,
            generation,
            parent,
        }
    }

    /// Vertex ids in bisection order.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices[..self.nv as usize]
    }

    /// Local vertex indices of the refinement edge.
    pub fn refinement_edge(&self) -> (usize, usize) {
        (0, self.nv as usize - 1)
    }

    /// Bisection type (cycles through `0..dim`).
    pub fn bisection_type(&self) -> u8 {
        self.tag
    }
}

#[derive(Clone, Debug)]
pub struct BoundaryFacet {
    pub key: FacetKey,
    pub tag: BoundaryTag,
    /// The single element owning this facet.
    pub element: usize,
    /// Local index (in the owner) of the vertex opposite the facet.
    pub opposite: usize,
}

#[derive(Clone, Debug)]
pub struct SimplicialMesh {
    id: u64,
    predecessor: Option<u64>,
    dim: usize,
    vertices: Vec<Point>,
    vertex_origin: Vec<Option<[usize; 2]>>,
    elements: Vec<Element>,
    ancestors: Vec<Element>,
    origin: Vec<usize>,
    boundary: Vec<BoundaryFacet>,
    facet_tags: HashMap<FacetKey, BoundaryTag>,
}

/// Local vertex pairs `(i, j)`, `i < j`, of a simplex with `nv` vertices.
pub fn local_edges(nv: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..nv).flat_map(move |i| (i + 1..nv).map(move |j| (i, j)))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn facet_key(vs: impl Iterator<Item = usize>) -> FacetKey {
    let mut key = [usize::MAX; MAX_DIM];
    for (slot, v) in key.iter_mut().zip(vs) {
        *slot = v;
    }
    key.sort_unstable();
    key
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for perm in permutations(n - 1) {
        for pos in 0..=perm.len() {
            let mut p = perm.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

pub(crate) fn determinant(dim: usize, m: &[[f64; MAX_DIM]; MAX_DIM]) -> f64 {
    match dim {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => unreachable!("dimension {dim}"),
    }
}

/// Inverse of a `dim x dim` matrix stored in the top-left block.
pub(crate) fn inverse(dim: usize, m: &[[f64; MAX_DIM]; MAX_DIM]) -> [[f64; MAX_DIM]; MAX_DIM] {
    let det = determinant(dim, m);
    let mut inv = [[0.0; MAX_DIM]; MAX_DIM];
    match dim {
        1 => inv[0][0] = 1.0 / det,
        2 => {
            inv[0][0] = m[1][1] / det;
            inv[0][1] = -m[0][1] / det;
            inv[1][0] = -m[1][0] / det;
            inv[1][1] = m[0][0] / det;
        }
        3 => {
            for i in 0..3 {
                for j in 0..3 {
                    let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                    let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                    inv[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
                }
            }
        }
        _ => unreachable!("dimension {dim}"),
    }
    inv
}

fn factorial(n: usize) -> f64 {
    (1..=n).product::<usize>() as f64
}

/// Kuhn triangulation of the unit box with `n` cells per axis.
pub fn build_box_mesh(d: usize, n: usize) -> Result<SimplicialMesh> {
    if !(1..=2).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let breaks: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    build_tensor_mesh(&vec![breaks; d + 1], |_, _| false)
}

/// Kuhn-type triangulation of a tensor grid with the given per-axis
/// breakpoints (each running from 0 to 1; the last axis is time).
///
/// In every cell the D! simplices share the diagonal from a start corner to
/// the opposite corner. `start_high(axis, cell)` selects the upper end of
/// `axis` as the start coordinate for cells with index `cell` along that
/// axis; `|_, _| false` yields the standard Kuhn triangulation. Reflections
/// that are consistent across cell faces keep the mesh conforming.
pub fn build_tensor_mesh(
    breaks: &[Vec<f64>],
    start_high: impl Fn(usize, usize) -> bool,
) -> Result<SimplicialMesh> {
    let dim = breaks.len();
    if !(2..=MAX_DIM).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim.saturating_sub(1)));
    }
    for b in breaks {
        if b.len() < 2 || b.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("breakpoints must increase".into()));
        }
    }
    let counts: Vec<usize> = breaks.iter().map(|b| b.len()).collect();
    let mut strides = vec![1usize; dim];
    for a in 1..dim {
        strides[a] = strides[a - 1] * counts[a - 1];
    }
    let n_vertices: usize = counts.iter().product();
    let mut vertices = Vec::with_capacity(n_vertices);
    for idx in 0..n_vertices {
        let mut p = [0.0; MAX_DIM];
        for a in 0..dim {
            p[a] = breaks[a][(idx / strides[a]) % counts[a]];
        }
        vertices.push(p);
    }

    let perms = permutations(dim);
    let cells: Vec<usize> = counts.iter().map(|c| c - 1).collect();
    let n_cells: usize = cells.iter().product();
    let mut elements = Vec::with_capacity(n_cells * perms.len());
    for cell in 0..n_cells {
        let mut cidx = [0usize; MAX_DIM];
        let mut rem = cell;
        for a in 0..dim {
            cidx[a] = rem % cells[a];
            rem /= cells[a];
        }
        let mut start = [0usize; MAX_DIM];
        let mut step = [0isize; MAX_DIM];
        for a in 0..dim {
            if start_high(a, cidx[a]) {
                start[a] = cidx[a] + 1;
                step[a] = -1;
            } else {
                start[a] = cidx[a];
                step[a] = 1;
            }
        }
        for perm in &perms {
            let mut pos = start;
            let vid = |pos: &[usize; MAX_DIM]| (0..dim).map(|a| pos[a] * strides[a]).sum::<usize>();
            let mut path = vec![vid(&pos)];
            for &a in perm {
                pos[a] = (pos[a] as isize + step[a]) as usize;
                path.push(vid(&pos));
            }
            elements.push(Element::new(&path, 0, 0, None));
        }
    }
    SimplicialMesh::from_parts(dim, vertices, vec![None; n_vertices], elements, Vec::new(), None)
}

impl SimplicialMesh {
    fn from_parts(
        dim: usize,
        vertices: Vec<Point>,
        vertex_origin: Vec<Option<[usize; 2]>>,
        elements: Vec<Element>,
        ancestors: Vec<Element>,
        lineage: Option<(u64, Vec<usize>)>,
    ) -> Result<Self> {
        let (predecessor, origin) = match lineage {
            Some((id, origin)) => (Some(id), origin),
            None => (None, (0..elements.len()).collect()),
        };
        let mut mesh = SimplicialMesh {
            id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed),
            predecessor,
            dim,
            vertices,
            vertex_origin,
            elements,
            ancestors,
            origin,
            boundary: Vec::new(),
            facet_tags: HashMap::new(),
        };
        mesh.boundary = classify_boundary(&mesh)?;
        mesh.facet_tags = mesh.boundary.iter().map(|f| (f.key, f.tag)).collect();
        Ok(mesh)
    }

    /// Unique identity of this mesh instance.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Identity of the mesh this one was refined from.
    pub fn predecessor(&self) -> Option<u64> {
        self.predecessor
    }

    /// Space-time dimension `D = d + 1`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spatial_dim(&self) -> usize {
        self.dim - 1
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Bisected elements of all previous refinement steps.
    pub fn ancestors(&self) -> &[Element] {
        &self.ancestors
    }

    /// For each element, the index of the element of the predecessor mesh it
    /// was obtained from (identity for freshly built meshes).
    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    /// The edge whose midpoint created a vertex, if it was created by bisection.
    pub fn vertex_origin(&self, v: usize) -> Option<[usize; 2]> {
        self.vertex_origin[v]
    }

    pub fn boundary_facets(&self) -> &[BoundaryFacet] {
        &self.boundary
    }

    pub fn facet_tag(&self, vertices: &[usize]) -> BoundaryTag {
        let key = facet_key(vertices.iter().copied());
        self.facet_tags.get(&key).copied().unwrap_or(BoundaryTag::Interior)
    }

    pub fn facet_tags(&self) -> &HashMap<FacetKey, BoundaryTag> {
        &self.facet_tags
    }

    pub fn element_vertices(&self, e: usize) -> &[usize] {
        self.elements[e].vertices()
    }

    /// Columns `x_i - x_0` of the affine element map.
    pub fn jacobian(&self, e: usize) -> [[f64; MAX_DIM]; MAX_DIM] {
        let vs = self.elements[e].vertices();
        let x0 = self.vertices[vs[0]];
        let mut jac = [[0.0; MAX_DIM]; MAX_DIM];
        for (c, &v) in vs[1..].iter().enumerate() {
            for r in 0..self.dim {
                jac[r][c] = self.vertices[v][r] - x0[r];
            }
        }
        jac
    }

    pub fn signed_volume(&self, e: usize) -> f64 {
        determinant(self.dim, &self.jacobian(e)) / factorial(self.dim)
    }

    pub fn volume(&self, e: usize) -> f64 {
        self.signed_volume(e).abs()
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.volume(e)).sum()
    }

    pub fn barycenter(&self, e: usize) -> Point {
        let vs = self.elements[e].vertices();
        let mut c = [0.0; MAX_DIM];
        for &v in vs {
            for a in 0..self.dim {
                c[a] += self.vertices[v][a] / vs.len() as f64;
            }
        }
        c
    }

    /// Vertex ids ordered so that the element map has positive determinant.
    pub fn oriented_vertices(&self, e: usize) -> Vec<usize> {
        let mut vs = self.elements[e].vertices().to_vec();
        if self.signed_volume(e) < 0.0 {
            let n = vs.len();
            vs.swap(n - 2, n - 1);
        }
        vs
    }

    fn facet_measure(&self, vs: &[usize]) -> f64 {
        let p = |i: usize| self.vertices[vs[i]];
        match vs.len() {
            2 => (0..self.dim).map(|a| (p(1)[a] - p(0)[a]).powi(2)).sum::<f64>().sqrt(),
            3 => {
                let u: Vec<f64> = (0..3).map(|a| p(1)[a] - p(0)[a]).collect();
                let w: Vec<f64> = (0..3).map(|a| p(2)[a] - p(0)[a]).collect();
                let cx = u[1] * w[2] - u[2] * w[1];
                let cy = u[2] * w[0] - u[0] * w[2];
                let cz = u[0] * w[1] - u[1] * w[0];
                0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
            }
            n => unreachable!("facet with {n} vertices"),
        }
    }

    /// Measure of a facet given by its vertex ids.
    pub fn facet_area(&self, vertices: &[usize]) -> f64 {
        self.facet_measure(vertices)
    }

    /// Shape quality `r_in / r_circ` (1/2 for an equilateral triangle, 1/3 for
    /// a regular tetrahedron).
    pub fn quality(&self, e: usize) -> f64 {
        let vs = self.elements[e].vertices();
        let dim = self.dim;
        let surface: f64 = (0..vs.len())
            .map(|skip| {
                let f: Vec<usize> = vs.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, &v)| v).collect();
                self.facet_measure(&f)
            })
            .sum();
        let r_in = dim as f64 * self.volume(e) / surface;
        let x0 = self.vertices[vs[0]];
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        let mut rhs = [0.0; MAX_DIM];
        for i in 0..dim {
            let xi = self.vertices[vs[i + 1]];
            for a in 0..dim {
                m[i][a] = 2.0 * (xi[a] - x0[a]);
            }
            rhs[i] = (0..dim).map(|a| xi[a] * xi[a] - x0[a] * x0[a]).sum();
        }
        let inv = inverse(dim, &m);
        let center: Vec<f64> = (0..dim).map(|a| (0..dim).map(|b| inv[a][b] * rhs[b]).sum()).collect();
        let r_circ = (0..dim).map(|a| (center[a] - x0[a]).powi(2)).sum::<f64>().sqrt();
        r_in / r_circ
    }

    /// Bisects every element `sweeps` times.
    pub fn refine_uniform(&self, sweeps: usize) -> Result<SimplicialMesh> {
        let mut mesh = self.refine(&(0..self.n_elements()).collect::<Vec<_>>())?;
        let mut origin = mesh.origin.clone();
        for _ in 1..sweeps {
            let next = mesh.refine(&(0..mesh.n_elements()).collect::<Vec<_>>())?;
            origin = next.origin.iter().map(|&o| origin[o]).collect();
            mesh = next;
        }
        mesh.origin = origin;
        mesh.predecessor = Some(self.id);
        Ok(mesh)
    }

    /// Bisects every marked element at least once and closes the result to a
    /// conforming mesh.
    pub fn refine(&self, marked: &[usize]) -> Result<SimplicialMesh> {
        if self.elements.is_empty() {
            return Err(Error::EmptyMesh);
        }
        if let Some(&bad) = marked.iter().find(|&&m| m >= self.elements.len()) {
            return Err(Error::ElementOutOfRange(bad));
        }
        let dim = self.dim;
        let mut vertices = self.vertices.clone();
        let mut vertex_origin = self.vertex_origin.clone();
        let mut ancestors = self.ancestors.clone();
        let mut slots: Vec<Option<Element>> = self.elements.iter().cloned().map(Some).collect();
        let mut root: Vec<usize> = (0..slots.len()).collect();

        let mut edge_elements: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (s, el) in self.elements.iter().enumerate() {
            let vs = el.vertices();
            for (i, j) in local_edges(vs.len()) {
                edge_elements.entry(edge_key(vs[i], vs[j])).or_default().push(s);
            }
        }
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut queue: VecDeque<usize> = marked.iter().copied().collect();
        let cap = 64 * (self.elements.len() + marked.len()) + 1024;
        let mut bisections = 0usize;

        while let Some(s) = queue.pop_front() {
            let Some(elem) = slots[s].take() else {
                continue;
            };
            bisections += 1;
            if bisections > cap {
                return Err(Error::ClosureDiverged(bisections));
            }
            let vs = elem.vertices().to_vec();
            let key = edge_key(vs[0], vs[dim]);
            let z = *midpoints.entry(key).or_insert_with(|| {
                let (pa, pb) = (vertices[key.0], vertices[key.1]);
                let mut m = [0.0; MAX_DIM];
                for a in 0..dim {
                    m[a] = 0.5 * (pa[a] + pb[a]);
                }
                vertices.push(m);
                vertex_origin.push(Some([key.0, key.1]));
                vertices.len() - 1
            });
            for (i, j) in local_edges(vs.len()) {
                if let Some(list) = edge_elements.get_mut(&edge_key(vs[i], vs[j])) {
                    list.retain(|&x| x != s);
                }
            }
            let parent = ancestors.len();
            ancestors.push(elem.clone());
            for child in bisect(&elem, z, dim, parent) {
                let cs = slots.len();
                let cv = child.vertices().to_vec();
                for (i, j) in local_edges(cv.len()) {
                    edge_elements.entry(edge_key(cv[i], cv[j])).or_default().push(cs);
                }
                slots.push(Some(child));
                root.push(root[s]);
                let hanging = local_edges(cv.len()).any(|(i, j)| midpoints.contains_key(&edge_key(cv[i], cv[j])));
                if hanging {
                    queue.push_back(cs);
                }
            }
            if let Some(list) = edge_elements.get(&key) {
                queue.extend(list.iter().copied());
            }
        }

        let mut elements = Vec::new();
        let mut origin = Vec::new();
        for (s, slot) in slots.into_iter().enumerate() {
            if let Some(el) = slot {
                elements.push(el);
                origin.push(root[s]);
            }
        }
        SimplicialMesh::from_parts(dim, vertices, vertex_origin, elements, ancestors, Some((self.id, origin)))
    }
}

/// Splits a tagged simplex `(x0, ..., xn)_g` at the midpoint `z` of `x0 xn`:
/// children are `(x0, z, x1..xg, x(g+1)..x(n-1))` and
/// `(xn, z, x1..xg, x(n-1)..x(g+1))`, both of type `(g + 1) mod n`.
fn bisect(el: &Element, z: usize, dim: usize, parent: usize) -> [Element; 2] {
    let x = el.vertices();
    let g = el.tag as usize;
    let tag = ((g + 1) % dim) as u8;
    let mut first = vec![x[0], z];
    let mut second = vec![x[dim], z];
    first.extend_from_slice(&x[1..=g]);
    second.extend_from_slice(&x[1..=g]);
    first.extend(x[g + 1..dim].iter().copied());
    second.extend(x[g + 1..dim].iter().rev().copied());
    [
        Element::new(&first, tag, el.generation + 1, Some(parent)),
        Element::new(&second, tag, el.generation + 1, Some(parent)),
    ]
}

/// Tags every boundary facet as lateral, bottom or top. Interior facets are
/// not listed. Fails when a facet is shared by more than two elements or a
/// boundary facet does not lie on a face of the unit box, which also detects
/// hanging nodes.
pub fn classify_boundary(mesh: &SimplicialMesh) -> Result<Vec<BoundaryFacet>> {
    let dim = mesh.dim;
    let mut facets: HashMap<FacetKey, (usize, usize, usize)> = HashMap::new();
    for (e, el) in mesh.elements.iter().enumerate() {
        let vs = el.vertices();
        for skip in 0..vs.len() {
            let key = facet_key(vs.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, &v)| v));
            facets.entry(key).and_modify(|f| f.0 += 1).or_insert((1, e, skip));
        }
    }
    let mut boundary = Vec::new();
    for (key, (count, element, opposite)) in facets {
        let ids: Vec<usize> = key.iter().copied().filter(|&v| v != usize::MAX).collect();
        if count > 2 {
            return Err(Error::NonConforming(ids, count));
        }
        if count == 2 {
            continue;
        }
        let pts: Vec<Point> = ids.iter().map(|&v| mesh.vertices[v]).collect();
        let t = dim - 1;
        let all = |f: &dyn Fn(&Point) -> bool| pts.iter().all(f);
        let tag = if all(&|p| p[t].abs() <= BOUNDARY_TOL) {
            BoundaryTag::Bottom
        } else if all(&|p| (p[t] - 1.0).abs() <= BOUNDARY_TOL) {
            BoundaryTag::Top
        } else if (0..t).any(|a| all(&|p| p[a].abs() <= BOUNDARY_TOL) || all(&|p| (p[a] - 1.0).abs() <= BOUNDARY_TOL)) {
            BoundaryTag::Lateral
        } else {
            return Err(Error::NonBoxBoundary(ids));
        };
        boundary.push(BoundaryFacet {
            key,
            tag,
            element,
            opposite,
        });
    }
    boundary.sort_by_key(|f| f.key);
    Ok(boundary)
}
