//! Global assembly of the linearized WG system, Dirichlet and mean-value
//! constraints, static condensation and the discrete norms used by the
//! energy identities.

pub mod condense;
pub mod local;

use std::fmt;
use std::sync::Arc;

use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dofspace::{DiscreteField, DofMap, WgSpace};
use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::polybasis::{edge_basis, project_edge};
use crate::quadrature::{LineRule, TriangleRule};

pub use condense::{static_condense, CondensedSystem};
pub use local::LocalLayout;

pub type BodyForce = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

#[derive(Clone)]
pub struct ProblemParams {
    pub nu: f64,
    pub alpha: f64,
    pub r: f64,
    /// Multiplies the stabilization weight `h_K^{-1}`.
    pub eta_scale: f64,
    pub force: BodyForce,
}

impl fmt::Debug for ProblemParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemParams")
            .field("nu", &self.nu)
            .field("alpha", &self.alpha)
            .field("r", &self.r)
            .field("eta_scale", &self.eta_scale)
            .finish_non_exhaustive()
    }
}

impl ProblemParams {
    pub fn new(nu: f64, alpha: f64, r: f64, force: BodyForce) -> Result<ProblemParams> {
        let p = ProblemParams {
            nu,
            alpha,
            r,
            eta_scale: 1.0,
            force,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.r >= 2.0 && self.r.is_finite()) {
            return Err(Error::InvalidArgument(format!("r must be >= 2, got {}", self.r)));
        }
        if !(self.eta_scale >= 0.0 && self.eta_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta scale must be >= 0, got {}", self.eta_scale)));
        }
        Ok(())
    }

    pub fn zero_force() -> BodyForce {
        Arc::new(|_| [0.0, 0.0])
    }
}

/// Square sparse system in triplet form.
#[derive(Clone, Debug, Default)]
pub struct LinearSystem {
    pub dim: usize,
    pub triplets: Vec<Triplet<usize, usize, f64>>,
    pub rhs: Vec<f64>,
}

impl LinearSystem {
    pub fn new(dim: usize) -> LinearSystem {
        LinearSystem {
            dim,
            triplets: Vec::new(),
            rhs: vec![0.0; dim],
        }
    }

    /// Compressed-column matrix; duplicate entries are summed.
    pub fn matrix(&self) -> Result<SparseColMat<usize, f64>> {
        SparseColMat::try_new_from_triplets(self.dim, self.dim, &self.triplets)
            .map_err(|e| Error::InvalidArgument(format!("sparse matrix construction failed: {e:?}")))
    }
}

/// `y = M x`.
pub fn sparse_mul(mat: &SparseColMat<usize, f64>, x: &[f64]) -> Vec<f64> {
    let sym = mat.symbolic();
    let cp = sym.col_ptr();
    let ri = sym.row_idx();
    let val = mat.val();
    let mut y = vec![0.0; mat.nrows()];
    for j in 0..mat.ncols() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for idx in cp[j]..cp[j + 1] {
            y[ri[idx]] += val[idx] * xj;
        }
    }
    y
}

/// `x^T M y`.
pub fn bilinear(mat: &SparseColMat<usize, f64>, x: &[f64], y: &[f64]) -> f64 {
    sparse_mul(mat, y).iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Dense element matrix and load over the global indices `dofs`.
#[derive(Clone, Debug)]
pub struct LocalSystem {
    pub dofs: Vec<usize>,
    pub mat: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

fn cell_traces<'a>(space: &WgSpace, field: &'a DiscreteField, cell: usize) -> [&'a [f64]; 3] {
    let e = space.mesh().cell_edges(cell);
    [field.u_trace(e[0]), field.u_trace(e[1]), field.u_trace(e[2])]
}

fn scatter_cells(
    space: &WgSpace,
    build: impl Fn(usize, &mut DMatrix<f64>) + Sync,
) -> Vec<Triplet<usize, usize, f64>> {
    let dofs = space.dofs();
    let n = dofs.local_len();
    let per_cell: Vec<Vec<Triplet<usize, usize, f64>>> = (0..space.mesh().num_cells())
        .into_par_iter()
        .map(|c| {
            let mut mat = DMatrix::zeros(n, n);
            build(c, &mut mat);
            let g = dofs.cell_dofs(space.mesh(), c);
            let mut out = Vec::new();
            for j in 0..n {
                for i in 0..n {
                    let v = mat[(i, j)];
                    if v != 0.0 {
                        out.push(Triplet::new(g[i], g[j], v));
                    }
                }
            }
            out
        })
        .collect();
    per_cell.into_iter().flatten().collect()
}

fn block_matrix(space: &WgSpace, triplets: Vec<Triplet<usize, usize, f64>>) -> Result<SparseColMat<usize, f64>> {
    let n = space.dofs().total() + 1;
    LinearSystem {
        dim: n,
        triplets,
        rhs: Vec::new(),
    }
    .matrix()
}

/// Velocity block of `a_h` (with stabilization) over all dofs plus multiplier.
pub fn assemble_a(space: &WgSpace, nu: f64, eta_scale: f64) -> Result<SparseColMat<usize, f64>> {
    block_matrix(space, scatter_cells(space, |c, m| local::add_a(space, c, nu, eta_scale, m)))
}

/// `B[v, q] = b_h(v, q)`, velocity rows and pressure columns only.
pub fn assemble_b(space: &WgSpace) -> Result<SparseColMat<usize, f64>> {
    block_matrix(space, scatter_cells(space, |c, m| local::add_b(space, c, false, m)))
}

pub fn assemble_c(space: &WgSpace, kappa: &DiscreteField, alpha: f64, r: f64) -> Result<SparseColMat<usize, f64>> {
    block_matrix(
        space,
        scatter_cells(space, |c, m| local::add_c(space, c, alpha, r, kappa.u_interior(c), m)),
    )
}

pub fn assemble_d(space: &WgSpace, kappa: &DiscreteField) -> Result<SparseColMat<usize, f64>> {
    block_matrix(
        space,
        scatter_cells(space, |c, m| {
            local::add_d(space, c, kappa.u_interior(c), cell_traces(space, kappa, c), m)
        }),
    )
}

/// Load vector `(f, v_i)` over all dofs plus multiplier.
pub fn assemble_rhs(space: &WgSpace, f: &(dyn Fn(Point) -> [f64; 2] + Sync)) -> Vec<f64> {
    let dofs = space.dofs();
    let n = dofs.local_len();
    let parts: Vec<(Vec<usize>, DVector<f64>)> = (0..space.mesh().num_cells())
        .into_par_iter()
        .map(|c| {
            let mut rhs = DVector::zeros(n);
            local::add_rhs(space, c, f, &mut rhs);
            (dofs.cell_dofs(space.mesh(), c), rhs)
        })
        .collect();
    let mut out = vec![0.0; dofs.total() + 1];
    for (g, r) in parts {
        for (i, v) in r.iter().enumerate() {
            out[g[i]] += v;
        }
    }
    out
}

/// Frozen element blocks `A + B + B^T + mean` and loads, computed once.
#[derive(Clone, Debug)]
pub struct StaticBlocks {
    pub cells: Vec<LocalSystem>,
}

pub fn assemble_static(space: &WgSpace, params: &ProblemParams) -> StaticBlocks {
    let dofs = space.dofs();
    let n = dofs.local_len();
    let f = &params.force;
    let cells = (0..space.mesh().num_cells())
        .into_par_iter()
        .map(|c| {
            let mut mat = DMatrix::zeros(n, n);
            local::add_a(space, c, params.nu, params.eta_scale, &mut mat);
            local::add_b(space, c, true, &mut mat);
            local::add_mean(space, c, &mut mat);
            let mut rhs = DVector::zeros(n);
            local::add_rhs(space, c, &|p| f(p), &mut rhs);
            LocalSystem {
                dofs: dofs.cell_dofs(space.mesh(), c),
                mat,
                rhs,
            }
        })
        .collect();
    StaticBlocks { cells }
}

/// Element systems of the Oseen step with frozen `kappa`.
pub fn oseen_local_systems(
    space: &WgSpace,
    statics: &StaticBlocks,
    params: &ProblemParams,
    kappa: &DiscreteField,
) -> Vec<LocalSystem> {
    (0..space.mesh().num_cells())
        .into_par_iter()
        .map(|c| {
            let base = &statics.cells[c];
            let mut mat = base.mat.clone();
            local::add_c(space, c, params.alpha, params.r, kappa.u_interior(c), &mut mat);
            local::add_d(space, c, kappa.u_interior(c), cell_traces(space, kappa, c), &mut mat);
            LocalSystem {
                dofs: base.dofs.clone(),
                mat,
                rhs: base.rhs.clone(),
            }
        })
        .collect()
}

/// Scatters element systems into one global system over all dofs plus the
/// multiplier. Every element entry is emitted, so the sparsity pattern is
/// independent of the values.
pub fn assemble_global(locals: &[LocalSystem], dim: usize) -> LinearSystem {
    let mut sys = LinearSystem::new(dim);
    let nnz: usize = locals.iter().map(|l| l.dofs.len() * l.dofs.len()).sum();
    sys.triplets.reserve(nnz);
    for l in locals {
        let n = l.dofs.len();
        for j in 0..n {
            for i in 0..n {
                sys.triplets.push(Triplet::new(l.dofs[i], l.dofs[j], l.mat[(i, j)]));
            }
        }
        for i in 0..n {
            sys.rhs[l.dofs[i]] += l.rhs[i];
        }
    }
    sys
}

/// A system restricted to the free unknowns.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub system: LinearSystem,
    /// Reduced index to global index.
    pub free: Vec<usize>,
}

impl ReducedSystem {
    /// Global vector from a reduced solution and the fixed values.
    pub fn expand(&self, x: &[f64], fixed_values: &[f64]) -> Vec<f64> {
        let mut out = fixed_values.to_vec();
        for (r, &g) in self.free.iter().enumerate() {
            out[g] = x[r];
        }
        out
    }
}

/// Eliminates the boundary velocity trace dofs with the values in
/// `fixed_values` (global length) and keeps the multiplier row.
pub fn apply_constraints(system: &LinearSystem, dofs: &DofMap, fixed_values: &[f64]) -> ReducedSystem {
    let n = system.dim;
    let mut index = vec![usize::MAX; n];
    let mut free = Vec::with_capacity(n);
    for g in 0..n {
        if !dofs.is_fixed(g) {
            index[g] = free.len();
            free.push(g);
        }
    }
    let mut red = LinearSystem::new(free.len());
    for (r, &g) in free.iter().enumerate() {
        red.rhs[r] = system.rhs[g];
    }
    red.triplets.reserve(system.triplets.len());
    for t in &system.triplets {
        let (i, j) = (index[t.row], index[t.col]);
        if i == usize::MAX {
            continue;
        }
        if j == usize::MAX {
            red.rhs[i] -= t.val * fixed_values[t.col];
        } else {
            red.triplets.push(Triplet::new(i, j, t.val));
        }
    }
    ReducedSystem { system: red, free }
}

/// Dirichlet data as a global vector: zero except on boundary trace dofs.
pub fn dirichlet_values(space: &WgSpace, g: Option<&dyn Fn(Point) -> [f64; 2]>) -> Vec<f64> {
    let mut field = space.zero_field();
    if let Some(g) = g {
        space.set_dirichlet_trace(&mut field, g);
    }
    let mut v = field.into_coeffs();
    v.push(0.0);
    v
}

/// `|||v|||_V^2 = sum_K ||grad_w v||_K^2 + eta h_K^{-1} ||Pi^B_k v_i - v_b||_{dK}^2`,
/// evaluated by quadrature of the reconstructed polynomials.
pub fn triple_norm_sq(space: &WgSpace, v: &DiscreteField, eta_scale: f64, rule_degree: usize) -> f64 {
    let cfg = space.config();
    let (m, k) = (cfg.m(), cfg.k());
    let n = cfg.n_ui();
    let nk = cfg.n_ub();
    let ng = crate::polybasis::dim_p(m - 1);
    let cell_rule = TriangleRule::with_degree(rule_degree);
    let edge_rule = LineRule::with_degree(rule_degree);
    let mesh = space.mesh();
    (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let t = &space.tables().cells[c];
            let b = space.basis(c);
            let (pts, wts) = cell_rule.mapped(&mesh.cell_vertices(c));
            let edges = mesh.cell_edges(c);
            let mut total = 0.0;
            for comp in 0..2 {
                let mut sv = v.u_interior(c)[comp * n..(comp + 1) * n].to_vec();
                for &e in &edges {
                    sv.extend_from_slice(&v.u_trace(e)[comp * nk..(comp + 1) * nk]);
                }
                let g = &t.grad_u * DVector::from_vec(sv);
                for (p, w) in pts.iter().zip(&wts) {
                    let gx = b.eval_poly(&g.as_slice()[..ng], *p);
                    let gy = b.eval_poly(&g.as_slice()[ng..], *p);
                    total += w * (gx * gx + gy * gy);
                }
                let eta = eta_scale / mesh.cell_diameter(c);
                let ui = &v.u_interior(c)[comp * n..(comp + 1) * n];
                for &e in &edges {
                    let ends = mesh.edge_endpoints(e);
                    let len = mesh.edge_length(e);
                    let proj = project_edge(|p| b.eval_poly(ui, p), ends, k, &edge_rule);
                    let vb = &v.u_trace(e)[comp * nk..(comp + 1) * nk];
                    let mut tr = vec![0.0; nk];
                    for (&s, &w) in edge_rule.points.iter().zip(&edge_rule.weights) {
                        edge_basis(k, len, s, &mut tr);
                        let d: f64 = tr.iter().zip(proj.iter().zip(vb)).map(|(psi, (a, bb))| psi * (a - bb)).sum();
                        total += eta * w * len * d * d;
                    }
                }
            }
            total
        })
        .sum()
}

/// `||v_i||_{0,r}^r` by quadrature of degree `rule_degree`.
pub fn lr_norm_pow(space: &WgSpace, v: &DiscreteField, r: f64, rule_degree: usize) -> f64 {
    let rule = TriangleRule::with_degree(rule_degree);
    let mesh = space.mesh();
    (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let (pts, wts) = rule.mapped(&mesh.cell_vertices(c));
            pts.iter()
                .zip(&wts)
                .map(|(p, w)| {
                    let u = space.eval_velocity(v, c, *p);
                    w * u[0].hypot(u[1]).powf(r)
                })
                .sum::<f64>()
        })
        .sum()
}

/// `(f, v_i)` by quadrature of degree `rule_degree`.
pub fn load_pairing(space: &WgSpace, f: &(dyn Fn(Point) -> [f64; 2] + Sync), v: &DiscreteField, rule_degree: usize) -> f64 {
    let rule = TriangleRule::with_degree(rule_degree);
    let mesh = space.mesh();
    (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let (pts, wts) = rule.mapped(&mesh.cell_vertices(c));
            pts.iter()
                .zip(&wts)
                .map(|(p, w)| {
                    let u = space.eval_velocity(v, c, *p);
                    let fv = f(*p);
                    w * (u[0] * fv[0] + u[1] * fv[1])
                })
                .sum::<f64>()
        })
        .sum()
}
