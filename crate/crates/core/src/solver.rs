//! Oseen fixed-point iteration with a direct sparse LU per step.

use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::assembly::{
    apply_constraints, assemble_global, assemble_static, dirichlet_values, oseen_local_systems, sparse_mul,
    static_condense, LinearSystem, LocalSystem, ProblemParams, StaticBlocks,
};
use crate::dofspace::{Block, DiscreteField, WgSpace};
use crate::error::{Error, Result};
use crate::mesh::Point;

#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Stop when `||u_hi^l - u_hi^{l-1}||_0` drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Solve the trace system after eliminating cell interiors.
    pub condense: bool,
    /// Iterative refinement sweeps after each direct solve.
    pub refinement_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-8,
            max_iterations: 200,
            condense: true,
            refinement_steps: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidArgument("max iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationHistory {
    /// `||u_hi^l - u_hi^{l-1}||_0` per iteration.
    pub increments: Vec<f64>,
    /// Relative residual of each linear solve.
    pub residuals: Vec<f64>,
    /// Seconds per iteration.
    pub wall_times: Vec<f64>,
    /// Largest local pivot ratio seen when condensing (0 on the full path).
    pub max_pivot_ratio: f64,
    /// Euclidean residual of the nonlinear equations at the returned iterate.
    pub final_residual: f64,
}

impl IterationHistory {
    pub fn iterations(&self) -> usize {
        self.increments.len()
    }

    /// `e_{l+1} / e_l` for consecutive increments.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.increments.windows(2).map(|w| w[1] / w[0]).collect()
    }

    /// Increments strictly decrease after the first iteration.
    pub fn is_monotone(&self) -> bool {
        self.increments.windows(2).skip(1).all(|w| w[1] < w[0])
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub field: DiscreteField,
    pub multiplier: f64,
    pub history: IterationHistory,
}

/// Sparse LU with the symbolic factorization cached while the pattern is unchanged.
#[derive(Default)]
pub struct LinearBackend {
    pattern: Option<(Vec<usize>, Vec<usize>)>,
    symbolic: Option<SymbolicLu<usize>>,
}

impl std::fmt::Debug for LinearBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearBackend").field("cached", &self.symbolic.is_some()).finish()
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl LinearBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Solves `sys`; returns the solution and its relative residual.
    pub fn solve(&mut self, sys: &LinearSystem, iteration: usize, refinement_steps: usize) -> Result<(Vec<f64>, f64)> {
        let fail = |message: String| Error::LinearSolve { iteration, message };
        let mat: SparseColMat<usize, f64> = sys.matrix().map_err(|e| fail(e.to_string()))?;
        let sym = mat.symbolic();
        let same = self
            .pattern
            .as_ref()
            .is_some_and(|(cp, ri)| cp.as_slice() == sym.col_ptr() && ri.as_slice() == sym.row_idx());
        if !same {
            let s = SymbolicLu::try_new(sym).map_err(|e| fail(format!("symbolic factorization: {e:?}")))?;
            self.symbolic = Some(s);
            self.pattern = Some((sym.col_ptr().to_vec(), sym.row_idx().to_vec()));
        }
        let symbolic = self.symbolic.clone().expect("symbolic factorization present");
        let lu = Lu::try_new_with_symbolic(symbolic, mat.as_ref()).map_err(|e| fail(format!("numeric factorization: {e:?}")))?;

        let n = sys.dim;
        let solve = |rhs: &[f64]| -> Vec<f64> {
            let mut b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
            lu.solve_in_place(b.as_mut());
            (0..n).map(|i| b[(i, 0)]).collect()
        };
        let mut x = solve(&sys.rhs);
        let bnorm = norm2(&sys.rhs);
        let residual = |x: &[f64]| -> Vec<f64> {
            let ax = sparse_mul(&mat, x);
            sys.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect()
        };
        for _ in 0..refinement_steps {
            let r = residual(&x);
            let dx = solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(fail("singular system: non-finite solution".into()));
        }
        let rel = norm2(&residual(&x)) / bnorm.max(f64::MIN_POSITIVE);
        let rel = if bnorm == 0.0 { norm2(&residual(&x)) } else { rel };
        if !(rel < 1e-6) {
            return Err(fail(format!("relative residual {rel:.3e} after direct solve")));
        }
        Ok((x, rel))
    }
}

/// Result of one linearized solve.
#[derive(Clone, Debug)]
pub struct StepOutput {
    /// All field dofs followed by the multiplier.
    pub x: Vec<f64>,
    pub residual: f64,
    pub max_pivot_ratio: f64,
}

/// Drops the multiplier row and column (keeping a unit diagonal) and pins
/// one pressure trace dof. The multiplier couples every trace dof once
/// cells are eliminated, so keeping it makes the sparse factors dense.
fn pin_pressure(sys: &LinearSystem, lambda: usize, pin: usize) -> LinearSystem {
    let mut out = LinearSystem::new(sys.dim);
    out.triplets = sys
        .triplets
        .iter()
        .filter(|t| t.row != lambda && t.col != lambda && t.row != pin)
        .copied()
        .collect();
    out.triplets.push(Triplet::new(lambda, lambda, 1.0));
    out.triplets.push(Triplet::new(pin, pin, 1.0));
    out.rhs = sys.rhs.clone();
    out.rhs[lambda] = 0.0;
    out.rhs[pin] = 0.0;
    out
}

/// Coefficients of the pressure `p = 1` (interior and traces); zero elsewhere.
pub fn constant_pressure(space: &WgSpace) -> Vec<f64> {
    let dofs = space.dofs();
    let mesh = space.mesh();
    let mut z = vec![0.0; dofs.total() + 1];
    for c in 0..mesh.num_cells() {
        for (g, w) in dofs.p_interior(c).zip(&space.tables().cells[c].mean) {
            z[g] = *w;
        }
    }
    for e in 0..mesh.num_edges() {
        z[dofs.p_trace(e).start] = mesh.edge_length(e).sqrt();
    }
    z
}

/// Adds the constant pressure that makes `int p_hi` equal `target`.
fn shift_pressure_mean(space: &WgSpace, x: &mut [f64], target: f64) {
    let z = constant_pressure(space);
    // On interior pressure dofs `z` is also the vector of basis means.
    let interior = space.dofs().block_range(Block::PressureInterior);
    let mean: f64 = interior.clone().map(|g| z[g] * x[g]).sum();
    let norm: f64 = interior.map(|g| z[g] * z[g]).sum();
    let s = (target - mean) / norm;
    for (xi, zi) in x.iter_mut().zip(&z) {
        *xi += s * zi;
    }
}

/// Solves the element systems of one Oseen step with the boundary data in
/// `fixed_values`, by static condensation or on the full system.
///
/// The mean-value constraint is met by solving with one pressure trace dof
/// pinned and shifting the pressure afterwards; the constant pressure spans
/// the kernel of the unconstrained operator on both sides, so the result is
/// the bordered solution with a zero multiplier.
pub fn linear_step(
    space: &WgSpace,
    locals: &[LocalSystem],
    fixed_values: &[f64],
    condense: bool,
    backend: &mut LinearBackend,
    iteration: usize,
    refinement_steps: usize,
) -> Result<StepOutput> {
    let dofs = space.dofs();
    let pin_global = dofs.p_trace(0).start;
    let locate = |free: &[usize]| {
        let lambda = free.len() - 1;
        debug_assert_eq!(free[lambda], dofs.multiplier());
        let pin = free.iter().position(|&g| g == pin_global).expect("pressure traces are free");
        (lambda, pin)
    };
    let lambda_global = dofs.multiplier();
    let target: f64 = locals
        .iter()
        .filter_map(|l| l.dofs.iter().position(|&g| g == lambda_global).map(|i| l.rhs[i]))
        .sum();
    let (mut x, residual, max_pivot_ratio) = if condense {
        let cs = static_condense(locals, dofs, dofs.local_interior_len(), fixed_values)?;
        let (lambda, pin) = locate(&cs.free);
        let sys = pin_pressure(&cs.system, lambda, pin);
        let (xc, residual) = backend.solve(&sys, iteration, refinement_steps)?;
        (cs.recover(&xc, fixed_values), residual, cs.max_pivot_ratio)
    } else {
        let global = assemble_global(locals, dofs.total() + 1);
        let red = apply_constraints(&global, dofs, fixed_values);
        let (lambda, pin) = locate(&red.free);
        let sys = pin_pressure(&red.system, lambda, pin);
        let (xr, residual) = backend.solve(&sys, iteration, refinement_steps)?;
        (red.expand(&xr, fixed_values), residual, 0.0)
    };
    shift_pressure_mean(space, &mut x, target);
    Ok(StepOutput {
        x,
        residual,
        max_pivot_ratio,
    })
}

/// Euclidean norm of the residual of the element systems at `x`, over the
/// unconstrained rows.
pub fn global_residual(space: &WgSpace, locals: &[LocalSystem], x: &[f64]) -> f64 {
    let dofs = space.dofs();
    let mut r = vec![0.0; dofs.total() + 1];
    for l in locals {
        let xl = nalgebra::DVector::from_iterator(l.dofs.len(), l.dofs.iter().map(|&g| x[g]));
        let rl = &l.rhs - &l.mat * xl;
        for (i, &g) in l.dofs.iter().enumerate() {
            r[g] += rl[i];
        }
    }
    r.iter()
        .enumerate()
        .filter(|(g, _)| !dofs.is_fixed(*g))
        .map(|(_, v)| v * v)
        .sum::<f64>()
        .sqrt()
}

fn interior_increment(space: &WgSpace, new: &[f64], old: &[f64]) -> f64 {
    let r = space.dofs().block_range(Block::VelocityInterior);
    new[r.clone()].iter().zip(&old[r]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Oseen iteration from the zero interior velocity with the Dirichlet lift
/// on the boundary traces.
pub fn oseen_solve(
    space: &WgSpace,
    params: &ProblemParams,
    dirichlet: Option<&dyn Fn(Point) -> [f64; 2]>,
    config: &SolverConfig,
) -> Result<Solution> {
    params.validate()?;
    config.validate()?;
    let fixed = dirichlet_values(space, dirichlet);
    let statics = assemble_static(space, params);
    oseen_iterate(space, params, &statics, fixed, config)
}

/// Oseen iteration with precomputed frozen blocks and boundary values.
pub fn oseen_iterate(
    space: &WgSpace,
    params: &ProblemParams,
    statics: &StaticBlocks,
    fixed: Vec<f64>,
    config: &SolverConfig,
) -> Result<Solution> {
    let total = space.dofs().total();
    let mut prev = fixed.clone();
    let mut history = IterationHistory::default();
    let mut backend = LinearBackend::new();
    for iteration in 1..=config.max_iterations {
        let start = Instant::now();
        let kappa = DiscreteField::from_coeffs(space.dofs_arc().clone(), prev[..total].to_vec())?;
        let locals = oseen_local_systems(space, statics, params, &kappa);
        let step = linear_step(
            space,
            &locals,
            &fixed,
            config.condense,
            &mut backend,
            iteration,
            config.refinement_steps,
        )?;
        let inc = interior_increment(space, &step.x, &prev);
        history.increments.push(inc);
        history.residuals.push(step.residual);
        history.max_pivot_ratio = history.max_pivot_ratio.max(step.max_pivot_ratio);
        history.wall_times.push(start.elapsed().as_secs_f64());
        prev = step.x;
        if inc < config.tolerance {
            let field = DiscreteField::from_coeffs(space.dofs_arc().clone(), prev[..total].to_vec())?;
            let locals = oseen_local_systems(space, statics, params, &field);
            history.final_residual = global_residual(space, &locals, &prev);
            return Ok(Solution {
                field,
                multiplier: prev[total],
                history,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: config.max_iterations,
        last_increment: history.increments.last().copied().unwrap_or(f64::NAN),
        history: Box::new(history),
    })
}
