//! Degree-of-freedom layout of the velocity and pressure spaces, discrete
//! field containers and the discretization context shared by assembly and
//! post-processing.
//!
//! Global layout, in blocks:
//! `[u_i: cell, component, mode][u_b: edge, component, mode][p_i: cell, mode][p_b: edge, mode]`.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::polybasis::{dim_p, edge_basis, project_edge, CellBasis};
use crate::quadrature::{LineRule, TriangleRule};
use crate::weakops::WeakOpTables;

/// Interior velocity degree `m` and velocity trace degree `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpaceConfig {
    m: usize,
    k: usize,
}

impl SpaceConfig {
    pub fn new(m: usize, k: usize) -> Result<SpaceConfig> {
        if m < 1 {
            return Err(Error::InvalidArgument(format!("m must be >= 1, got {m}")));
        }
        if k + 1 != m && k != m {
            return Err(Error::InvalidArgument(format!("k must be m-1 or m, got m={m}, k={k}")));
        }
        Ok(SpaceConfig { m, k })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Scalar modes of `P_m(K)`.
    pub fn n_ui(&self) -> usize {
        dim_p(self.m)
    }

    /// Scalar modes of `P_k(e)`.
    pub fn n_ub(&self) -> usize {
        self.k + 1
    }

    /// Modes of `P_{m-1}(K)`.
    pub fn n_pi(&self) -> usize {
        dim_p(self.m - 1)
    }

    /// Modes of `P_m(e)`.
    pub fn n_pb(&self) -> usize {
        self.m + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    VelocityInterior,
    VelocityTrace,
    PressureInterior,
    PressureTrace,
}

#[derive(Clone, Debug)]
pub struct DofMap {
    config: SpaceConfig,
    num_cells: usize,
    num_edges: usize,
    offsets: [usize; 5],
    boundary_trace_dofs: Vec<usize>,
    is_fixed: Vec<bool>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, config: SpaceConfig) -> DofMap {
        let nc = mesh.num_cells();
        let ne = mesh.num_edges();
        let sizes = [
            2 * nc * config.n_ui(),
            2 * ne * config.n_ub(),
            nc * config.n_pi(),
            ne * config.n_pb(),
        ];
        let mut offsets = [0; 5];
        for b in 0..4 {
            offsets[b + 1] = offsets[b] + sizes[b];
        }
        let mut map = DofMap {
            config,
            num_cells: nc,
            num_edges: ne,
            offsets,
            boundary_trace_dofs: Vec::new(),
            is_fixed: vec![false; offsets[4]],
        };
        let mut fixed = Vec::new();
        for e in mesh.boundary_edges() {
            for c in 0..2 {
                fixed.extend(map.u_trace(e, c));
            }
        }
        for &d in &fixed {
            map.is_fixed[d] = true;
        }
        map.boundary_trace_dofs = fixed;
        map
    }

    pub fn config(&self) -> SpaceConfig {
        self.config
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    /// Number of field unknowns (without the mean-value multiplier).
    pub fn total(&self) -> usize {
        self.offsets[4]
    }

    /// Global index of the pressure-mean multiplier.
    pub fn multiplier(&self) -> usize {
        self.total()
    }

    pub fn block_range(&self, block: Block) -> Range<usize> {
        let b = block as usize;
        self.offsets[b]..self.offsets[b + 1]
    }

    pub fn block_len(&self, block: Block) -> usize {
        self.block_range(block).len()
    }

    /// Interior velocity modes of one component on `cell`.
    pub fn u_interior(&self, cell: usize, comp: usize) -> Range<usize> {
        let n = self.config.n_ui();
        let s = self.offsets[0] + cell * 2 * n + comp * n;
        s..s + n
    }

    /// Both components of the interior velocity on `cell`, `[x | y]`.
    pub fn u_interior_cell(&self, cell: usize) -> Range<usize> {
        let n = self.config.n_ui();
        let s = self.offsets[0] + cell * 2 * n;
        s..s + 2 * n
    }

    pub fn u_trace(&self, edge: usize, comp: usize) -> Range<usize> {
        let n = self.config.n_ub();
        let s = self.offsets[1] + edge * 2 * n + comp * n;
        s..s + n
    }

    pub fn u_trace_edge(&self, edge: usize) -> Range<usize> {
        let n = self.config.n_ub();
        let s = self.offsets[1] + edge * 2 * n;
        s..s + 2 * n
    }

    pub fn p_interior(&self, cell: usize) -> Range<usize> {
        let n = self.config.n_pi();
        let s = self.offsets[2] + cell * n;
        s..s + n
    }

    pub fn p_trace(&self, edge: usize) -> Range<usize> {
        let n = self.config.n_pb();
        let s = self.offsets[3] + edge * n;
        s..s + n
    }

    /// Velocity trace dofs on boundary edges; these carry Dirichlet data.
    pub fn boundary_trace_dofs(&self) -> &[usize] {
        &self.boundary_trace_dofs
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        dof < self.is_fixed.len() && self.is_fixed[dof]
    }

    /// Global indices touched by `cell`, in the local order
    /// `[u_i x, u_i y | p_i | u_b (edge-major, x then y) | p_b (edge-major) | multiplier]`.
    pub fn cell_dofs(&self, mesh: &Mesh, cell: usize) -> Vec<usize> {
        let edges = mesh.cell_edges(cell);
        let mut out = Vec::with_capacity(self.local_len());
        out.extend(self.u_interior_cell(cell));
        out.extend(self.p_interior(cell));
        for &e in &edges {
            out.extend(self.u_trace_edge(e));
        }
        for &e in &edges {
            out.extend(self.p_trace(e));
        }
        out.push(self.multiplier());
        out
    }

    /// Local element system size.
    pub fn local_len(&self) -> usize {
        let c = self.config;
        2 * c.n_ui() + c.n_pi() + 6 * c.n_ub() + 3 * c.n_pb() + 1
    }

    /// Local indices of the cell-internal unknowns `(u_i, p_i)`.
    pub fn local_interior_len(&self) -> usize {
        2 * self.config.n_ui() + self.config.n_pi()
    }
}

/// Coefficients of `(u_hi, u_hb, p_hi, p_hb)` over a [`DofMap`].
#[derive(Clone, Debug)]
pub struct DiscreteField {
    dofs: Arc<DofMap>,
    coeffs: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(dofs: Arc<DofMap>) -> DiscreteField {
        let n = dofs.total();
        DiscreteField {
            dofs,
            coeffs: vec![0.0; n],
        }
    }

    pub fn from_coeffs(dofs: Arc<DofMap>, coeffs: Vec<f64>) -> Result<DiscreteField> {
        if coeffs.len() != dofs.total() {
            return Err(Error::InvalidArgument(format!(
                "coefficient vector has length {}, expected {}",
                coeffs.len(),
                dofs.total()
            )));
        }
        Ok(DiscreteField { dofs, coeffs })
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn dofs_arc(&self) -> &Arc<DofMap> {
        &self.dofs
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn block(&self, block: Block) -> &[f64] {
        &self.coeffs[self.dofs.block_range(block)]
    }

    pub fn u_interior(&self, cell: usize) -> &[f64] {
        &self.coeffs[self.dofs.u_interior_cell(cell)]
    }

    pub fn u_interior_mut(&mut self, cell: usize) -> &mut [f64] {
        let r = self.dofs.u_interior_cell(cell);
        &mut self.coeffs[r]
    }

    pub fn u_trace(&self, edge: usize) -> &[f64] {
        &self.coeffs[self.dofs.u_trace_edge(edge)]
    }

    pub fn u_trace_mut(&mut self, edge: usize) -> &mut [f64] {
        let r = self.dofs.u_trace_edge(edge);
        &mut self.coeffs[r]
    }

    pub fn p_interior(&self, cell: usize) -> &[f64] {
        &self.coeffs[self.dofs.p_interior(cell)]
    }

    pub fn p_interior_mut(&mut self, cell: usize) -> &mut [f64] {
        let r = self.dofs.p_interior(cell);
        &mut self.coeffs[r]
    }

    pub fn p_trace(&self, edge: usize) -> &[f64] {
        &self.coeffs[self.dofs.p_trace(edge)]
    }

    pub fn p_trace_mut(&mut self, edge: usize) -> &mut [f64] {
        let r = self.dofs.p_trace(edge);
        &mut self.coeffs[r]
    }
}

/// Mesh, bases, quadrature and cached weak-operator tables of one
/// discretization.
#[derive(Clone, Debug)]
pub struct WgSpace {
    mesh: Mesh,
    config: SpaceConfig,
    dofs: Arc<DofMap>,
    bases: Vec<CellBasis>,
    cell_rule: TriangleRule,
    edge_rule: LineRule,
    tables: WeakOpTables,
}

impl WgSpace {
    /// Default cell and edge quadrature degree.
    pub fn default_quadrature_degree(m: usize) -> usize {
        (3 * m + 2).max(2 * m + 4)
    }

    pub fn new(mesh: Mesh, config: SpaceConfig, quadrature_degree: Option<usize>) -> Result<WgSpace> {
        use rayon::prelude::*;
        let m = config.m();
        let qd = quadrature_degree.unwrap_or_else(|| Self::default_quadrature_degree(m));
        if qd < 2 * m {
            return Err(Error::InvalidArgument(format!(
                "quadrature degree {qd} below 2m = {}",
                2 * m
            )));
        }
        let cell_rule = TriangleRule::with_degree(qd);
        let edge_rule = LineRule::with_degree(qd);
        let bases = (0..mesh.num_cells())
            .into_par_iter()
            .map(|c| CellBasis::new(&mesh, c, m))
            .collect::<Result<Vec<_>>>()?;
        let tables = WeakOpTables::build(&mesh, &bases, m, config.k(), &cell_rule, &edge_rule)?;
        let dofs = Arc::new(DofMap::new(&mesh, config));
        Ok(WgSpace {
            mesh,
            config,
            dofs,
            bases,
            cell_rule,
            edge_rule,
            tables,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn config(&self) -> SpaceConfig {
        self.config
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn dofs_arc(&self) -> &Arc<DofMap> {
        &self.dofs
    }

    pub fn basis(&self, cell: usize) -> &CellBasis {
        &self.bases[cell]
    }

    pub fn cell_rule(&self) -> &TriangleRule {
        &self.cell_rule
    }

    pub fn edge_rule(&self) -> &LineRule {
        &self.edge_rule
    }

    pub fn quadrature_degree(&self) -> usize {
        self.cell_rule.degree
    }

    pub fn tables(&self) -> &WeakOpTables {
        &self.tables
    }

    pub fn zero_field(&self) -> DiscreteField {
        DiscreteField::zeros(self.dofs.clone())
    }

    /// Interior velocity of `field` at a point of `cell`.
    pub fn eval_velocity(&self, field: &DiscreteField, cell: usize, p: Point) -> [f64; 2] {
        let n = self.config.n_ui();
        let c = field.u_interior(cell);
        let b = &self.bases[cell];
        [b.eval_poly(&c[..n], p), b.eval_poly(&c[n..], p)]
    }

    /// Interior velocity and its gradient rows `[grad u_x, grad u_y]`.
    pub fn eval_velocity_with_grad(&self, field: &DiscreteField, cell: usize, p: Point) -> ([f64; 2], [[f64; 2]; 2]) {
        let n = self.config.n_ui();
        let c = field.u_interior(cell);
        let b = &self.bases[cell];
        let (ux, gx) = b.eval_poly_with_grad(&c[..n], p);
        let (uy, gy) = b.eval_poly_with_grad(&c[n..], p);
        ([ux, uy], [gx, gy])
    }

    pub fn eval_pressure(&self, field: &DiscreteField, cell: usize, p: Point) -> f64 {
        self.bases[cell].eval_poly(field.p_interior(cell), p)
    }

    /// Velocity trace of `field` on `edge` at parameter `t` (lower to higher vertex).
    pub fn eval_velocity_trace(&self, field: &DiscreteField, edge: usize, t: f64) -> [f64; 2] {
        let n = self.config.n_ub();
        let len = self.mesh.edge_length(edge);
        let mut vals = vec![0.0; n];
        edge_basis(self.config.k(), len, t, &mut vals);
        let c = field.u_trace(edge);
        let dot = |s: &[f64]| s.iter().zip(&vals).map(|(a, b)| a * b).sum::<f64>();
        [dot(&c[..n]), dot(&c[n..])]
    }

    /// Sets `u_hb` on every boundary edge to the edge L2 projection of `g`.
    pub fn set_dirichlet_trace(&self, field: &mut DiscreteField, g: impl Fn(Point) -> [f64; 2]) {
        let k = self.config.k();
        let n = self.config.n_ub();
        for e in self.mesh.boundary_edges() {
            let ends = self.mesh.edge_endpoints(e);
            let gx = project_edge(|p| g(p)[0], ends, k, &self.edge_rule);
            let gy = project_edge(|p| g(p)[1], ends, k, &self.edge_rule);
            let t = field.u_trace_mut(e);
            t[..n].copy_from_slice(&gx);
            t[n..].copy_from_slice(&gy);
        }
    }

    /// `int_Omega p_hi`.
    pub fn mean_value(&self, field: &DiscreteField) -> f64 {
        (0..self.mesh.num_cells())
            .map(|c| {
                let mean = &self.tables.cells[c].mean;
                field.p_interior(c).iter().zip(mean).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum()
    }

    /// Fills the interior parts of `field` with the cellwise L2 projections
    /// of `u` onto `[P_m]^2` and `p` onto `P_{m-1}`.
    pub fn project_interior(&self, field: &mut DiscreteField, u: impl Fn(Point) -> [f64; 2], p: impl Fn(Point) -> f64) {
        let m = self.config.m();
        let n = self.config.n_ui();
        for c in 0..self.mesh.num_cells() {
            let verts = self.mesh.cell_vertices(c);
            let b = &self.bases[c];
            let ux = crate::polybasis::project_cell(|x| u(x)[0], b, &verts, m, &self.cell_rule);
            let uy = crate::polybasis::project_cell(|x| u(x)[1], b, &verts, m, &self.cell_rule);
            let pi = crate::polybasis::project_cell(&p, b, &verts, m - 1, &self.cell_rule);
            let ui = field.u_interior_mut(c);
            ui[..n].copy_from_slice(&ux);
            ui[n..].copy_from_slice(&uy);
            field.p_interior_mut(c).copy_from_slice(&pi);
        }
    }

    /// Fills the trace parts of `field` with the edge L2 projections of `u`
    /// onto `[P_k]^2` and `p` onto `P_m`.
    pub fn project_traces(&self, field: &mut DiscreteField, u: impl Fn(Point) -> [f64; 2], p: impl Fn(Point) -> f64) {
        let m = self.config.m();
        let k = self.config.k();
        let n = self.config.n_ub();
        for e in 0..self.mesh.num_edges() {
            let ends = self.mesh.edge_endpoints(e);
            let ux = project_edge(|x| u(x)[0], ends, k, &self.edge_rule);
            let uy = project_edge(|x| u(x)[1], ends, k, &self.edge_rule);
            let pb = project_edge(&p, ends, m, &self.edge_rule);
            let t = field.u_trace_mut(e);
            t[..n].copy_from_slice(&ux);
            t[n..].copy_from_slice(&uy);
            field.p_trace_mut(e).copy_from_slice(&pb);
        }
    }
}
