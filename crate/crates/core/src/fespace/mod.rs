//! Continuous Lagrange spaces on space-time meshes.
//!
//! Dofs on the lateral boundary and on the bottom `t = 0` are constrained
//! (homogeneous Dirichlet and initial data); dofs on the top `t = T` are free.

mod basis;

use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

pub use basis::{LagrangeBasis, MAX_LOCAL};

pub const LOAD_ORDER: usize = 6;

use crate::assembly::sparse::SparsityPattern;
use crate::error::{Error, Result};
use crate::mesh::{inverse, local_edges, BoundaryTag, Point, SimplicialMesh, MAX_DIM};
use crate::problem::ExactSolution;
use crate::quadrature::{quadrature, QuadratureRule};

/// Affine element map `x = x0 + J xi`.
#[derive(Clone, Debug)]
pub struct ElementGeometry {
    pub origin: Point,
    pub jacobian: [[f64; MAX_DIM]; MAX_DIM],
    pub inverse: [[f64; MAX_DIM]; MAX_DIM],
    pub det_abs: f64,
}

impl ElementGeometry {
    pub fn from_vertices(dim: usize, coords: &[Point]) -> Self {
        let mut jacobian = [[0.0; MAX_DIM]; MAX_DIM];
        for c in 0..dim {
            for r in 0..dim {
                jacobian[r][c] = coords[c + 1][r] - coords[0][r];
            }
        }
        let det = crate::mesh::determinant(dim, &jacobian);
        ElementGeometry {
            origin: coords[0],
            jacobian,
            inverse: inverse(dim, &jacobian),
            det_abs: det.abs(),
        }
    }

    pub fn to_physical(&self, dim: usize, xi: &[f64]) -> Point {
        let mut x = self.origin;
        for r in 0..dim {
            for c in 0..dim {
                x[r] += self.jacobian[r][c] * xi[c];
            }
        }
        x
    }

    pub fn to_reference(&self, dim: usize, x: &[f64]) -> [f64; MAX_DIM] {
        let mut xi = [0.0; MAX_DIM];
        for r in 0..dim {
            for c in 0..dim {
                xi[r] += self.inverse[r][c] * (x[c] - self.origin[c]);
            }
        }
        xi
    }

    /// Physical gradient `J^{-T} g_ref`.
    pub fn push_gradient(&self, dim: usize, g_ref: &[f64; 3]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for r in 0..dim {
            for c in 0..dim {
                g[r] += self.inverse[c][r] * g_ref[c];
            }
        }
        g
    }
}

pub struct FeSpace {
    mesh: Arc<SimplicialMesh>,
    basis: LagrangeBasis,
    n_dofs: usize,
    element_dofs: Vec<usize>,
    dof_coords: Vec<Point>,
    constrained: Vec<bool>,
    geometry: Vec<ElementGeometry>,
    tabulations: Mutex<HashMap<usize, Arc<Tabulation>>>,
    pub(crate) pattern: OnceLock<Arc<SparsityPattern>>,
}

impl std::fmt::Debug for FeSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeSpace")
            .field("degree", &self.basis.degree)
            .field("n_dofs", &self.n_dofs)
            .field("n_elements", &self.mesh.n_elements())
            .finish()
    }
}

/// Builds `S_h^k` on `mesh` with constrained dofs on the lateral and bottom
/// boundary.
pub fn build_space(mesh: Arc<SimplicialMesh>, k: usize) -> Result<Arc<FeSpace>> {
    if !(1..=2).contains(&k) {
        return Err(Error::UnsupportedDegree(k));
    }
    let dim = mesh.dim();
    let basis = LagrangeBasis::new(dim, k);
    let nv = dim + 1;
    let n_local = basis.n_local();
    let mut dof_coords: Vec<Point> = mesh.vertices().to_vec();
    let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut element_dofs = Vec::with_capacity(mesh.n_elements() * n_local);
    for el in mesh.elements() {
        let vs = el.vertices();
        element_dofs.extend_from_slice(vs);
        if k == 2 {
            for (i, j) in local_edges(nv) {
                let key = (vs[i].min(vs[j]), vs[i].max(vs[j]));
                let next = dof_coords.len();
                let idx = *edge_index.entry(key).or_insert_with(|| {
                    let (a, b) = (mesh.vertices()[key.0], mesh.vertices()[key.1]);
                    let mut m = [0.0; MAX_DIM];
                    for c in 0..dim {
                        m[c] = 0.5 * (a[c] + b[c]);
                    }
                    dof_coords.push(m);
                    next
                });
                element_dofs.push(idx);
            }
        }
    }
    let n_dofs = dof_coords.len();
    let mut constrained = vec![false; n_dofs];
    for facet in mesh.boundary_facets() {
        if !matches!(facet.tag, BoundaryTag::Lateral | BoundaryTag::Bottom) {
            continue;
        }
        let fv: Vec<usize> = facet.key.iter().copied().filter(|&v| v != usize::MAX).collect();
        for &v in &fv {
            constrained[v] = true;
        }
        if k == 2 {
            for (i, j) in local_edges(fv.len()) {
                let key = (fv[i].min(fv[j]), fv[i].max(fv[j]));
                constrained[edge_index[&key]] = true;
            }
        }
    }
    let geometry = (0..mesh.n_elements())
        .map(|e| {
            let coords: Vec<Point> = mesh.element_vertices(e).iter().map(|&v| mesh.vertices()[v]).collect();
            ElementGeometry::from_vertices(dim, &coords)
        })
        .collect();
    Ok(Arc::new(FeSpace {
        mesh,
        basis,
        n_dofs,
        element_dofs,
        dof_coords,
        constrained,
        geometry,
        tabulations: Mutex::new(HashMap::new()),
        pattern: OnceLock::new(),
    }))
}

impl FeSpace {
    pub fn mesh(&self) -> &Arc<SimplicialMesh> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.basis.degree
    }

    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn basis(&self) -> LagrangeBasis {
        self.basis
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_local(&self) -> usize {
        self.basis.n_local()
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    pub fn element_dofs(&self, e: usize) -> &[usize] {
        let n = self.n_local();
        &self.element_dofs[e * n..(e + 1) * n]
    }

    pub fn dof_coords(&self) -> &[Point] {
        &self.dof_coords
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.constrained[dof]
    }

    pub fn constrained_mask(&self) -> &[bool] {
        &self.constrained
    }

    pub fn constrained_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs).filter(|&i| self.constrained[i]).collect()
    }

    pub fn n_free(&self) -> usize {
        self.constrained.iter().filter(|&&c| !c).count()
    }

    pub fn geometry(&self, e: usize) -> &ElementGeometry {
        &self.geometry[e]
    }

    /// Basis values and reference gradients at the points of the volume rule
    /// of the given order.
    pub fn tabulate(&self, order: usize) -> Result<Arc<Tabulation>> {
        let mut cache = self.tabulations.lock().expect("tabulation cache poisoned");
        if let Some(t) = cache.get(&order) {
            return Ok(t.clone());
        }
        let rule = quadrature(self.dim(), order)?;
        let t = Arc::new(Tabulation::new(self.basis, rule));
        cache.insert(order, t.clone());
        Ok(t)
    }

    /// Quadrature order for the operator parts of residual and Jacobian.
    pub fn residual_order(&self) -> usize {
        2 * self.degree() + 2
    }

    /// Quadrature order for the source term, the same for every degree so
    /// that nested spaces see identical load integrals.
    pub fn load_order(&self) -> usize {
        LOAD_ORDER
    }

    /// Quadrature order used for error norms and goal values.
    pub fn accuracy_order(&self) -> usize {
        2 * self.degree() + 4
    }

    /// Runs `f` on every element (in parallel, in fixed-size blocks) and
    /// hands the results to `sink` in element order.
    pub(crate) fn map_elements<T, F>(&self, order: usize, f: F, mut sink: impl FnMut(usize, T)) -> Result<()>
    where
        T: Send,
        F: Fn(&mut ElementValues, usize) -> T + Sync,
    {
        const BLOCK: usize = 4096;
        let tab = self.tabulate(order)?;
        let n = self.n_elements();
        let mut start = 0;
        while start < n {
            let range: Range<usize> = start..(start + BLOCK).min(n);
            let results: Vec<T> = range
                .clone()
                .into_par_iter()
                .map_init(
                    || ElementValues::new(self.dim(), tab.clone()),
                    |ev, e| {
                        ev.reinit(self, e);
                        f(ev, e)
                    },
                )
                .collect();
            for (k, r) in results.into_iter().enumerate() {
                sink(range.start + k, r);
            }
            start = range.end;
        }
        Ok(())
    }
}

/// Shape function data on a quadrature rule.
#[derive(Debug)]
pub struct Tabulation {
    pub rule: Arc<QuadratureRule>,
    pub n_local: usize,
    pub values: Vec<f64>,
    pub ref_grads: Vec<[f64; 3]>,
}

impl Tabulation {
    pub fn new(basis: LagrangeBasis, rule: Arc<QuadratureRule>) -> Self {
        let n_local = basis.n_local();
        let mut values = vec![0.0; rule.len() * n_local];
        let mut ref_grads = vec![[0.0; 3]; rule.len() * n_local];
        for (q, p) in rule.points().iter().enumerate() {
            basis.eval(
                p,
                &mut values[q * n_local..(q + 1) * n_local],
                &mut ref_grads[q * n_local..(q + 1) * n_local],
            );
        }
        Tabulation {
            rule,
            n_local,
            values,
            ref_grads,
        }
    }

    pub fn n_points(&self) -> usize {
        self.rule.len()
    }
}

/// Per-element quadrature data: scaled weights, physical points and
/// physical basis gradients.
pub struct ElementValues {
    dim: usize,
    tab: Arc<Tabulation>,
    pub jxw: Vec<f64>,
    pub points: Vec<Point>,
    pub grads: Vec<[f64; 3]>,
}

impl ElementValues {
    pub fn new(dim: usize, tab: Arc<Tabulation>) -> Self {
        let nq = tab.n_points();
        let nl = tab.n_local;
        ElementValues {
            dim,
            jxw: vec![0.0; nq],
            points: vec![[0.0; MAX_DIM]; nq],
            grads: vec![[0.0; 3]; nq * nl],
            tab,
        }
    }

    pub fn reinit(&mut self, space: &FeSpace, e: usize) {
        self.reinit_geometry(space.geometry(e));
    }

    pub fn reinit_geometry(&mut self, geo: &ElementGeometry) {
        let nl = self.tab.n_local;
        for q in 0..self.tab.n_points() {
            self.jxw[q] = self.tab.rule.weights()[q] * geo.det_abs;
            self.points[q] = geo.to_physical(self.dim, &self.tab.rule.points()[q]);
            for i in 0..nl {
                self.grads[q * nl + i] = geo.push_gradient(self.dim, &self.tab.ref_grads[q * nl + i]);
            }
        }
    }

    pub fn n_points(&self) -> usize {
        self.tab.n_points()
    }

    pub fn n_local(&self) -> usize {
        self.tab.n_local
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn value(&self, q: usize, i: usize) -> f64 {
        self.tab.values[q * self.tab.n_local + i]
    }

    #[inline]
    pub fn grad(&self, q: usize, i: usize) -> &[f64; 3] {
        &self.grads[q * self.tab.n_local + i]
    }

    /// Value and full space-time gradient of a local coefficient vector.
    #[inline]
    pub fn interpolate(&self, q: usize, local: &[f64]) -> (f64, [f64; 3]) {
        let mut v = 0.0;
        let mut g = [0.0; 3];
        for (i, &c) in local.iter().enumerate() {
            v += c * self.value(q, i);
            let gi = self.grad(q, i);
            for a in 0..self.dim {
                g[a] += c * gi[a];
            }
        }
        (v, g)
    }
}

/// Value and space-time gradient of a finite element function at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointValue {
    pub value: f64,
    pub gradient: [f64; 3],
    dim: usize,
}

impl PointValue {
    pub fn space_gradient(&self) -> &[f64] {
        &self.gradient[..self.dim - 1]
    }

    pub fn time_derivative(&self) -> f64 {
        self.gradient[self.dim - 1]
    }
}

#[derive(Clone, Debug)]
pub struct FeFunction {
    space: Arc<FeSpace>,
    pub coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(space: &Arc<FeSpace>) -> Self {
        FeFunction {
            coeffs: vec![0.0; space.n_dofs()],
            space: space.clone(),
        }
    }

    pub fn from_coeffs(space: &Arc<FeSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.n_dofs() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {} dofs",
                coeffs.len(),
                space.n_dofs()
            )));
        }
        Ok(FeFunction {
            space: space.clone(),
            coeffs,
        })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn local(&self, e: usize, out: &mut [f64]) {
        for (o, &d) in out.iter_mut().zip(self.space.element_dofs(e)) {
            *o = self.coeffs[d];
        }
    }

    pub fn zero_constrained(&mut self) {
        for (c, &fixed) in self.coeffs.iter_mut().zip(self.space.constrained_mask()) {
            if fixed {
                *c = 0.0;
            }
        }
    }

    /// Value and gradient at reference point `xi` of element `e`.
    pub fn eval(&self, e: usize, xi: &[f64]) -> Result<PointValue> {
        if e >= self.space.n_elements() {
            return Err(Error::ElementOutOfRange(e));
        }
        let dim = self.space.dim();
        let basis = self.space.basis();
        let mut v = [0.0; MAX_LOCAL];
        let mut g = [[0.0; 3]; MAX_LOCAL];
        basis.eval(xi, &mut v, &mut g);
        let geo = self.space.geometry(e);
        let mut out = PointValue {
            value: 0.0,
            gradient: [0.0; 3],
            dim,
        };
        for (i, &d) in self.space.element_dofs(e).iter().enumerate() {
            let c = self.coeffs[d];
            out.value += c * v[i];
            let pg = geo.push_gradient(dim, &g[i]);
            for a in 0..dim {
                out.gradient[a] += c * pg[a];
            }
        }
        Ok(out)
    }

    /// Moves this function to `target`, which must live on the same mesh or
    /// on a mesh refined directly from this one. Values are obtained by
    /// evaluating at the target nodes, which is exact for nested spaces.
    pub fn transfer_to(&self, target: &Arc<FeSpace>) -> Result<FeFunction> {
        let src_mesh = self.space.mesh();
        let dst_mesh = target.mesh();
        let same = src_mesh.id() == dst_mesh.id();
        if !same && dst_mesh.predecessor() != Some(src_mesh.id()) {
            return Err(Error::InvalidArgument(
                "transfer requires the same mesh or its direct refinement".into(),
            ));
        }
        if same && self.space.degree() == target.degree() {
            return FeFunction::from_coeffs(target, self.coeffs.clone());
        }
        let dim = target.dim();
        let mut coeffs = vec![0.0; target.n_dofs()];
        for e in 0..target.n_elements() {
            let src = if same { e } else { dst_mesh.origin()[e] };
            let geo = self.space.geometry(src);
            for &d in target.element_dofs(e) {
                let xi = geo.to_reference(dim, &target.dof_coords()[d]);
                coeffs[d] = self.eval(src, &xi[..dim])?.value;
            }
        }
        let mut f = FeFunction::from_coeffs(target, coeffs)?;
        f.zero_constrained();
        Ok(f)
    }

    /// `(||u_h - u||_{L2(Q)}, ||grad_x (u_h - u)||_{L2(Q)})`.
    pub fn error_norms(&self, exact: &dyn ExactSolution) -> Result<(f64, f64)> {
        let order = self.space.accuracy_order();
        let d = self.space.dim() - 1;
        let mut l2 = 0.0;
        let mut h1 = 0.0;
        let nl = self.space.n_local();
        self.space.map_elements(
            order,
            |ev, e| {
                let mut local = [0.0; MAX_LOCAL];
                self.local(e, &mut local[..nl]);
                let (mut a, mut b) = (0.0, 0.0);
                for q in 0..ev.n_points() {
                    let (v, g) = ev.interpolate(q, &local[..nl]);
                    let x = &ev.points[q];
                    let ue = exact.value(&x[..d + 1]);
                    let ge = exact.gradient(&x[..d + 1]);
                    a += ev.jxw[q] * (v - ue).powi(2);
                    b += ev.jxw[q] * (0..d).map(|i| (g[i] - ge[i]).powi(2)).sum::<f64>();
                }
                (a, b)
            },
            |_, (a, b)| {
                l2 += a;
                h1 += b;
            },
        )?;
        Ok((l2.sqrt(), h1.sqrt()))
    }
}

/// Nodal interpolant of `g(x, t)`.
pub fn interpolate(space: &Arc<FeSpace>, g: impl Fn(&[f64]) -> f64) -> FeFunction {
    let dim = space.dim();
    let coeffs = space.dof_coords().iter().map(|x| g(&x[..dim])).collect();
    FeFunction {
        space: space.clone(),
        coeffs,
    }
}
