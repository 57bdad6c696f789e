//! Goal functionals: the final-time integral `int_Omega u(., T)` and the
//! p-energy `int_{Q_I} |grad_x u|^p` over a polytope region of interest.

use std::f64::consts::{E, PI};
use std::sync::Arc;

use crate::assembly::{check_function, zero_constrained};
use crate::error::{Error, Result};
use crate::fespace::{FeFunction, FeSpace, MAX_LOCAL};
use crate::mesh::{build_tensor_mesh, BoundaryTag, Point, SimplicialMesh, MAX_DIM};
use crate::quadrature::quadrature;

/// `int_0^1 u(x, 1) dx = 2e/pi` for the manufactured solution in one space
/// dimension.
pub const FINAL_TIME_EXACT_1D: f64 = 2.0 * E / PI;
/// `int_{(0,1)^2} u(x, 1) dx = 4e/pi^2`.
pub const FINAL_TIME_EXACT_2D: f64 = 4.0 * E / (PI * PI);
/// 4-energy of the manufactured solution over [`Region::diamond`].
pub const P_ENERGY_EXACT_1D: f64 = 0.011016424135601839;
/// Published 4-energy of the manufactured solution over the octahedral
/// region [`Region::bipyramid`].
pub const P_ENERGY_EXACT_2D: f64 = 0.01937125060566419;

/// Half height (in `t`) of [`Region::bipyramid`]: the apexes of an octahedron
/// with edge length 0.5.
pub const BIPYRAMID_HALF_HEIGHT: f64 = 0.25 * std::f64::consts::SQRT_2;

const GEOM_TOL: f64 = 1e-10;

/// Convex polytope `{x : a_k . x <= b_k}` with its vertices.
#[derive(Clone, Debug)]
pub struct Region {
    dim: usize,
    planes: Vec<([f64; MAX_DIM], f64)>,
    vertices: Vec<Point>,
    edges: Vec<(usize, usize)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn sub(a: &Point, b: &Point) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

impl Region {
    /// Builds a region from half-spaces and the polytope's vertices. Edges
    /// are pairs of vertices sharing `dim - 1` active planes.
    pub fn new(dim: usize, planes: Vec<([f64; MAX_DIM], f64)>, vertices: Vec<Point>) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dim) || planes.is_empty() || vertices.len() <= dim {
            return Err(Error::InvalidArgument("degenerate region".into()));
        }
        for v in &vertices {
            if v[..dim].iter().any(|&c| !(-GEOM_TOL..=1.0 + GEOM_TOL).contains(&c)) {
                return Err(Error::InvalidArgument(format!("region vertex {v:?} outside the unit box")));
            }
            if planes.iter().any(|(a, b)| dot(&a[..dim], &v[..dim]) > b + GEOM_TOL) {
                return Err(Error::InvalidArgument(format!("vertex {v:?} violates a region plane")));
            }
        }
        let active: Vec<Vec<usize>> = vertices
            .iter()
            .map(|v| {
                (0..planes.len())
                    .filter(|&k| (dot(&planes[k].0[..dim], &v[..dim]) - planes[k].1).abs() < GEOM_TOL)
                    .collect()
            })
            .collect();
        let mut edges = Vec::new();
        for i in 0..vertices.len() {
            for j in i + 1..vertices.len() {
                let shared = active[i].iter().filter(|k| active[j].contains(k)).count();
                if shared + 1 >= dim {
                    edges.push((i, j));
                }
            }
        }
        Ok(Region {
            dim,
            planes,
            vertices,
            edges,
        })
    }

    /// `|x - 1/2| + |t - 1/2| <= 1/4`.
    pub fn diamond() -> Self {
        let mut planes = Vec::new();
        for sx in [-1.0, 1.0] {
            for st in [-1.0, 1.0] {
                planes.push(([sx, st, 0.0], 0.25 + 0.5 * (sx + st)));
            }
        }
        let vertices = vec![[0.25, 0.5, 0.0], [0.75, 0.5, 0.0], [0.5, 0.25, 0.0], [0.5, 0.75, 0.0]];
        Region::new(2, planes, vertices).expect("valid diamond")
    }

    /// Octahedron with edge length 1/2 centred at `(1/2, 1/2, 1/2)`, with its
    /// square equator in the plane `t = 1/2` and edges parallel to the axes:
    /// `max(|x - 1/2|, |y - 1/2|) / (1/4) + |t - 1/2| / h <= 1`.
    pub fn bipyramid() -> Self {
        let h = BIPYRAMID_HALF_HEIGHT;
        let mut planes = Vec::new();
        for axis in 0..2 {
            for s in [-1.0, 1.0] {
                for st in [-1.0, 1.0] {
                    let mut a = [0.0; 3];
                    a[axis] = s / 0.25;
                    a[2] = st / h;
                    planes.push((a, 1.0 + 0.5 * (a[0] + a[1] + a[2])));
                }
            }
        }
        let mut vertices = Vec::new();
        for x in [0.25, 0.75] {
            for y in [0.25, 0.75] {
                vertices.push([x, y, 0.5]);
            }
        }
        vertices.push([0.5, 0.5, 0.5 - h]);
        vertices.push([0.5, 0.5, 0.5 + h]);
        Region::new(3, planes, vertices).expect("valid bipyramid")
    }

    /// The default region for `d` space dimensions.
    pub fn for_dim(d: usize) -> Result<Self> {
        match d {
            1 => Ok(Self::diamond()),
            2 => Ok(Self::bipyramid()),
            _ => Err(Error::UnsupportedDimension(d)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.planes
            .iter()
            .all(|(a, b)| dot(&a[..self.dim], &x[..self.dim]) <= b + GEOM_TOL)
    }

    /// Whether some axis separates the simplex from the region (their
    /// interiors are disjoint). Separating-axis test over face normals of
    /// both bodies and, in 3D, edge-edge cross products.
    fn separated(&self, coords: &[Point]) -> bool {
        let dim = self.dim;
        let mut axes: Vec<[f64; 3]> = self.planes.iter().map(|(a, _)| *a).collect();
        // simplex face normals: gradients of barycentric coordinates
        let mut jac = [[0.0; MAX_DIM]; MAX_DIM];
        for c in 0..dim {
            for r in 0..dim {
                jac[r][c] = coords[c + 1][r] - coords[0][r];
            }
        }
        let inv = crate::mesh::inverse(dim, &jac);
        let mut sum = [0.0; 3];
        for row in inv.iter().take(dim) {
            let mut n = [0.0; 3];
            n[..dim].copy_from_slice(&row[..dim]);
            for a in 0..dim {
                sum[a] += n[a];
            }
            axes.push(n);
        }
        axes.push(sum);
        if dim == 3 {
            for &(i, j) in &self.edges {
                let re = sub(&self.vertices[j], &self.vertices[i]);
                for a in 0..coords.len() {
                    for b in a + 1..coords.len() {
                        let n = cross(&re, &sub(&coords[b], &coords[a]));
                        axes.push(n);
                    }
                }
            }
        }
        axes.iter().any(|n| {
            let len = dot(&n[..dim], &n[..dim]).sqrt();
            if len < 1e-14 {
                return false;
            }
            let proj = |pts: &mut dyn Iterator<Item = &Point>| {
                pts.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    let v = dot(&n[..dim], &p[..dim]) / len;
                    (lo.min(v), hi.max(v))
                })
            };
            let (slo, shi) = proj(&mut coords.iter());
            let (rlo, rhi) = proj(&mut self.vertices.iter());
            shi <= rlo + GEOM_TOL || rhi <= slo + GEOM_TOL
        })
    }

    /// Marks which elements lie inside the region; errors if some element is
    /// cut by the region boundary.
    pub fn classify(&self, mesh: &SimplicialMesh) -> Result<Vec<bool>> {
        if mesh.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "region of dimension {} on a mesh of dimension {}",
                self.dim,
                mesh.dim()
            )));
        }
        (0..mesh.n_elements())
            .map(|e| {
                let coords: Vec<Point> = mesh.element_vertices(e).iter().map(|&v| mesh.vertices()[v]).collect();
                if coords.iter().all(|c| self.contains(c)) {
                    Ok(true)
                } else if self.separated(&coords) {
                    Ok(false)
                } else {
                    Err(Error::RegionNotAligned(e))
                }
            })
            .collect()
    }
}

/// Initial mesh of the unit space-time box whose faces resolve the default
/// region of interest. `n` cells per spatial axis; a multiple of 4 for
/// `d = 1` and of 8 for `d = 2` (the half-height section of the octahedron
/// lies at `|x - 1/2| = 1/8`).
pub fn region_aligned_mesh(d: usize, n: usize) -> Result<SimplicialMesh> {
    let multiple = 4 * d;
    if n == 0 || n % multiple != 0 {
        return Err(Error::InvalidArgument(format!(
            "cells per axis must be a positive multiple of {multiple}, got {n}"
        )));
    }
    let uniform: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let time = match d {
        1 => uniform.clone(),
        2 => {
            let h = BIPYRAMID_HALF_HEIGHT;
            vec![0.0, 0.5 - h, 0.5 - 0.5 * h, 0.5, 0.5 + 0.5 * h, 0.5 + h, 1.0]
        }
        _ => return Err(Error::UnsupportedDimension(d)),
    };
    let mut breaks = vec![uniform; d];
    breaks.push(time);
    let mids: Vec<Vec<f64>> = breaks.iter().map(|b| b.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()).collect();
    build_tensor_mesh(&breaks, |axis, cell| {
        let below = mids[axis][cell] < 0.5;
        // spatial axes start at the end farther from the centre, time at the
        // nearer end
        if axis < d {
            !below
        } else {
            below
        }
    })
}

#[derive(Clone, Debug)]
pub enum GoalFunctional {
    /// `J(u) = int_Omega u(x, T) dx`.
    FinalTimeIntegral,
    /// `J(u) = int_{Q_I} |grad_x u|^p`.
    PEnergyRegion { region: Region, p: f64 },
}

impl GoalFunctional {
    /// p-energy goal; the region must be resolved by `mesh` (and hence by
    /// every refinement of it).
    pub fn p_energy(region: Region, p: f64, mesh: &SimplicialMesh) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::InvalidArgument(format!("p must exceed 1, got {p}")));
        }
        region.classify(mesh)?;
        Ok(GoalFunctional::PEnergyRegion { region, p })
    }

    /// `J(u)`.
    pub fn eval(&self, u: &FeFunction) -> Result<f64> {
        match self {
            GoalFunctional::FinalTimeIntegral => {
                let mut j = 0.0;
                for_each_top_point(u.space(), |e, w, vals, _| {
                    let mut loc = [0.0; MAX_LOCAL];
                    let n = u.space().n_local();
                    u.local(e, &mut loc[..n]);
                    j += w * (0..n).map(|i| loc[i] * vals[i]).sum::<f64>();
                })?;
                Ok(j)
            }
            GoalFunctional::PEnergyRegion { region, p } => {
                let space = u.space();
                let inside = region.classify(space.mesh())?;
                let d = space.dim() - 1;
                let n = space.n_local();
                let mut j = 0.0;
                space.map_elements(
                    space.accuracy_order(),
                    |ev, e| {
                        if !inside[e] {
                            return 0.0;
                        }
                        let mut loc = [0.0; MAX_LOCAL];
                        u.local(e, &mut loc[..n]);
                        (0..ev.n_points())
                            .map(|q| {
                                let (_, g) = ev.interpolate(q, &loc[..n]);
                                ev.jxw[q] * dot(&g[..d], &g[..d]).powf(0.5 * p)
                            })
                            .sum()
                    },
                    |_, x| j += x,
                )?;
                Ok(j)
            }
        }
    }

    /// Element contributions to `J'(u)(v)`. For the final-time integral each
    /// top facet contributes to its owning element.
    pub fn derivative_by_element(&self, u: &FeFunction, v: &FeFunction) -> Result<Vec<f64>> {
        let space = u.space();
        check_function(space, v)?;
        let n = space.n_local();
        let mut out = vec![0.0; space.n_elements()];
        match self {
            GoalFunctional::FinalTimeIntegral => {
                for_each_top_point(space, |e, w, vals, _| {
                    let mut loc = [0.0; MAX_LOCAL];
                    v.local(e, &mut loc[..n]);
                    out[e] += w * (0..n).map(|i| loc[i] * vals[i]).sum::<f64>();
                })?;
            }
            GoalFunctional::PEnergyRegion { region, p } => {
                let inside = region.classify(space.mesh())?;
                let d = space.dim() - 1;
                space.map_elements(
                    space.accuracy_order(),
                    |ev, e| {
                        if !inside[e] {
                            return 0.0;
                        }
                        let (mut ul, mut vl) = ([0.0; MAX_LOCAL], [0.0; MAX_LOCAL]);
                        u.local(e, &mut ul[..n]);
                        v.local(e, &mut vl[..n]);
                        (0..ev.n_points())
                            .map(|q| {
                                let (_, gu) = ev.interpolate(q, &ul[..n]);
                                let (_, gv) = ev.interpolate(q, &vl[..n]);
                                ev.jxw[q] * p_energy_weight(&gu[..d], *p) * dot(&gu[..d], &gv[..d])
                            })
                            .sum()
                    },
                    |e, x| out[e] = x,
                )?;
            }
        }
        Ok(out)
    }

    /// `J'(u)(v)`.
    pub fn derivative(&self, u: &FeFunction, v: &FeFunction) -> Result<f64> {
        Ok(self.derivative_by_element(u, v)?.iter().sum())
    }

    /// `g_i = J'(u)(phi_i)`, constrained entries zero.
    pub fn gradient(&self, space: &Arc<FeSpace>, u: &FeFunction) -> Result<Vec<f64>> {
        check_function(space, u)?;
        let n = space.n_local();
        let mut g = vec![0.0; space.n_dofs()];
        match self {
            GoalFunctional::FinalTimeIntegral => {
                for_each_top_point(space, |e, w, vals, _| {
                    for (i, &dof) in space.element_dofs(e).iter().enumerate() {
                        g[dof] += w * vals[i];
                    }
                })?;
            }
            GoalFunctional::PEnergyRegion { region, p } => {
                let inside = region.classify(space.mesh())?;
                let d = space.dim() - 1;
                space.map_elements(
                    space.accuracy_order(),
                    |ev, e| {
                        let mut out = [0.0; MAX_LOCAL];
                        if !inside[e] {
                            return out;
                        }
                        let mut ul = [0.0; MAX_LOCAL];
                        u.local(e, &mut ul[..n]);
                        for q in 0..ev.n_points() {
                            let (_, gu) = ev.interpolate(q, &ul[..n]);
                            let c = ev.jxw[q] * p_energy_weight(&gu[..d], *p);
                            for (i, o) in out[..n].iter_mut().enumerate() {
                                *o += c * dot(&gu[..d], &ev.grad(q, i)[..d]);
                            }
                        }
                        out
                    },
                    |e, out| {
                        for (i, &dof) in space.element_dofs(e).iter().enumerate() {
                            g[dof] += out[i];
                        }
                    },
                )?;
            }
        }
        zero_constrained(space, &mut g);
        Ok(g)
    }
}

/// `p |g|^(p-2)`, taken as zero at `g = 0`.
fn p_energy_weight(g: &[f64], p: f64) -> f64 {
    let s = dot(g, g);
    if s == 0.0 {
        0.0
    } else {
        p * s.powf(0.5 * (p - 2.0))
    }
}

/// Visits the quadrature points of all top facets: owning element, weight,
/// basis values and physical point.
fn for_each_top_point(space: &Arc<FeSpace>, mut visit: impl FnMut(usize, f64, &[f64], &Point)) -> Result<()> {
    let mesh = space.mesh();
    let dim = space.dim();
    let rule = quadrature(dim - 1, 2 * space.degree() + 2)?;
    let facet_factorial: f64 = (1..dim).product::<usize>() as f64;
    let basis = space.basis();
    let mut vals = [0.0; MAX_LOCAL];
    let mut grads = [[0.0; 3]; MAX_LOCAL];
    let mut any = false;
    for facet in mesh.boundary_facets().iter().filter(|f| f.tag == BoundaryTag::Top) {
        any = true;
        let fv = &facet.key[..dim];
        let area = mesh.facet_area(fv);
        let geo = space.geometry(facet.element);
        for (xi, w) in rule.points().iter().zip(rule.weights()) {
            let mut lam = [0.0; MAX_DIM];
            lam[0] = 1.0 - xi[..dim - 1].iter().sum::<f64>();
            lam[1..dim].copy_from_slice(&xi[..dim - 1]);
            let mut x = [0.0; MAX_DIM];
            for (l, &v) in lam.iter().zip(fv) {
                for a in 0..dim {
                    x[a] += l * mesh.vertices()[v][a];
                }
            }
            let r = geo.to_reference(dim, &x);
            basis.eval(&r[..dim], &mut vals, &mut grads);
            visit(facet.element, w * area * facet_factorial, &vals, &x);
        }
    }
    if !any {
        return Err(Error::InvalidArgument("mesh has no top facets".into()));
    }
    Ok(())
}
