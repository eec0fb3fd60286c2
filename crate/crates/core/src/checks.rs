//! Numerical self-checks: weak-gradient commutativity, the energy identities
//! of the assembled forms and the stabilized norm equivalence.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::assembly::{assemble_a, assemble_c, assemble_d, bilinear, lr_norm_pow, triple_norm_sq};
use crate::dofspace::{Block, DiscreteField, WgSpace};
use crate::error::Result;
use crate::mesh::{Mesh, Point};
use crate::polybasis::{dim_p, project_cell, project_edge, project_rt, CellBasis, RtBasis};
use crate::quadrature::{LineRule, TriangleRule};
use crate::weakops::{build_weak_gradient, WeakDegrees};

/// Largest coefficient mismatch of the two commutation identities.
#[derive(Clone, Copy, Debug)]
pub struct CommutativityErrors {
    /// `grad_{w,m-1} {P^RT w, Pi^B_k w} - Pi*_{m-1} grad w`.
    pub velocity: f64,
    /// `grad_{w,m} {Pi*_{m-1} q, Pi^B_m q} - Pi*_m grad q`.
    pub pressure: f64,
}

/// Checks both commutation identities on every cell of `mesh` for smooth
/// `omega` (with gradient rows `grad_omega`) and `q` (with gradient `grad_q`).
#[allow(clippy::too_many_arguments)]
pub fn commutativity_errors(
    mesh: &Mesh,
    m: usize,
    k: usize,
    omega: &dyn Fn(Point) -> [f64; 2],
    grad_omega: &dyn Fn(Point) -> [[f64; 2]; 2],
    q: &dyn Fn(Point) -> f64,
    grad_q: &dyn Fn(Point) -> [f64; 2],
) -> Result<CommutativityErrors> {
    let deg = 4 * m + 16;
    let cr = TriangleRule::with_degree(deg);
    let er = LineRule::with_degree(deg);
    let mut out = CommutativityErrors {
        velocity: 0.0,
        pressure: 0.0,
    };
    for cell in 0..mesh.num_cells() {
        let verts = mesh.cell_vertices(cell);
        let edges = mesh.cell_edges(cell);

        let big = CellBasis::new(mesh, cell, m + 1)?;
        let rt = RtBasis::new(CellBasis::new(mesh, cell, m)?);
        let coeffs = project_rt(omega, &rt, mesh, cell, &cr, &er)?;
        let degs = WeakDegrees {
            interior: m + 1,
            trace: k,
            gamma: m - 1,
        };
        let g = build_weak_gradient(mesh, cell, &big, degs, &cr, &er)?;
        let ng = dim_p(m - 1);
        for comp in 0..2 {
            let field = |p: Point| rt.eval_field(&coeffs, p).0[comp];
            let mut v = project_cell(field, &big, &verts, m + 1, &cr);
            for &e in &edges {
                v.extend(project_edge(|p| omega(p)[comp], mesh.edge_endpoints(e), k, &er));
            }
            let gw = &g * nalgebra::DVector::from_vec(v);
            for d in 0..2 {
                let exact = project_cell(|p| grad_omega(p)[comp][d], &big, &verts, m - 1, &cr);
                for (a, b) in gw.as_slice()[d * ng..(d + 1) * ng].iter().zip(&exact) {
                    out.velocity = out.velocity.max((a - b).abs());
                }
            }
        }

        let basis = CellBasis::new(mesh, cell, m)?;
        let degs = WeakDegrees {
            interior: m - 1,
            trace: m,
            gamma: m,
        };
        let g = build_weak_gradient(mesh, cell, &basis, degs, &cr, &er)?;
        let mut v = project_cell(q, &basis, &verts, m - 1, &cr);
        for &e in &edges {
            v.extend(project_edge(q, mesh.edge_endpoints(e), m, &er));
        }
        let gw = &g * nalgebra::DVector::from_vec(v);
        let n = dim_p(m);
        for d in 0..2 {
            let exact = project_cell(|p| grad_q(p)[d], &basis, &verts, m, &cr);
            for (a, b) in gw.as_slice()[d * n..(d + 1) * n].iter().zip(&exact) {
                out.pressure = out.pressure.max((a - b).abs());
            }
        }
    }
    Ok(out)
}

/// `omega = (sin x cos y, cos x sin y)` with its gradient rows.
pub fn trig_omega(p: Point) -> [f64; 2] {
    [p[0].sin() * p[1].cos(), p[0].cos() * p[1].sin()]
}

pub fn trig_omega_grad(p: Point) -> [[f64; 2]; 2] {
    let (sx, cx, sy, cy) = (p[0].sin(), p[0].cos(), p[1].sin(), p[1].cos());
    [[cx * cy, -sx * sy], [-sx * sy, cx * cy]]
}

/// `q = sin(x + y)` and its gradient.
pub fn trig_q(p: Point) -> f64 {
    (p[0] + p[1]).sin()
}

pub fn trig_q_grad(p: Point) -> [f64; 2] {
    let c = (p[0] + p[1]).cos();
    [c, c]
}

/// A velocity field with uniform random coefficients in `[-1, 1]` and zero
/// boundary traces; pressure dofs are zero.
pub fn random_velocity(space: &WgSpace, rng: &mut StdRng) -> DiscreteField {
    let mut f = space.zero_field();
    let dofs = space.dofs();
    let ranges = [
        dofs.block_range(Block::VelocityInterior),
        dofs.block_range(Block::VelocityTrace),
    ];
    for r in ranges {
        for g in r {
            if !dofs.is_fixed(g) {
                f.coeffs_mut()[g] = rng.random_range(-1.0..1.0);
            }
        }
    }
    f
}

fn with_multiplier(f: &DiscreteField) -> Vec<f64> {
    let mut v = f.coeffs().to_vec();
    v.push(0.0);
    v
}

/// Worst cases of the form identities over random fields.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityErrors {
    /// `max |v^T A v - nu |||v|||^2| / (nu |||v|||^2)`.
    pub a_relative: f64,
    /// `max |v^T A u - u^T A v|`.
    pub a_symmetry: f64,
    /// `max |v^T D(k) v| / (|v|^2 |k|)` over coefficient norms.
    pub d_relative: f64,
    /// `max |u^T D(k) v + v^T D(k) u| / (|u| |v| |k|)`.
    pub d_skew: f64,
    /// `max |v^T C(v) v - alpha ||v_i||_{0,r}^r| / (alpha ||v_i||_{0,r}^r)`.
    pub c_relative: f64,
}

/// Draws `draws` random fields in the space with homogeneous boundary traces.
/// `space` should integrate `|v|^r` exactly for the `c` identity (even `r`,
/// cell rule degree at least `r m`); the reference norm uses a rule of
/// degree `r m + 4`.
pub fn identity_errors(
    space: &WgSpace,
    nu: f64,
    alpha: f64,
    r: f64,
    eta_scale: f64,
    draws: usize,
    seed: u64,
) -> Result<IdentityErrors> {
    let mut rng = StdRng::seed_from_u64(seed);
    let m = space.config().m();
    let ref_deg = (r.ceil() as usize) * m + 4;
    let a = assemble_a(space, nu, eta_scale)?;
    let mut out = IdentityErrors::default();
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    for _ in 0..draws {
        let v = random_velocity(space, &mut rng);
        let u = random_velocity(space, &mut rng);
        let kappa = random_velocity(space, &mut rng);
        let (vv, uu, kk) = (with_multiplier(&v), with_multiplier(&u), with_multiplier(&kappa));

        let tn = nu * triple_norm_sq(space, &v, eta_scale, 2 * m + 2);
        out.a_relative = out.a_relative.max((bilinear(&a, &vv, &vv) - tn).abs() / tn);
        out.a_symmetry = out.a_symmetry.max((bilinear(&a, &vv, &uu) - bilinear(&a, &uu, &vv)).abs());

        let d = assemble_d(space, &kappa)?;
        let scale_v = norm(&vv) * norm(&vv) * norm(&kk);
        out.d_relative = out.d_relative.max(bilinear(&d, &vv, &vv).abs() / scale_v);
        let scale_uv = norm(&vv) * norm(&uu) * norm(&kk);
        out.d_skew = out
            .d_skew
            .max((bilinear(&d, &uu, &vv) + bilinear(&d, &vv, &uu)).abs() / scale_uv);

        if alpha > 0.0 {
            let c = assemble_c(space, &v, alpha, r)?;
            let exact = alpha * lr_norm_pow(space, &v, r, ref_deg);
            out.c_relative = out.c_relative.max((bilinear(&c, &vv, &vv) - exact).abs() / exact);
        }
    }
    Ok(out)
}

/// Extremes of `||grad_h v_i|| / |||v|||_V` over random fields; grows without
/// bound when the stabilization is switched off.
pub fn norm_equivalence_ratio(space: &WgSpace, eta_scale: f64, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = StdRng::seed_from_u64(seed);
    let m = space.config().m();
    let rule = TriangleRule::with_degree(2 * m);
    let mesh = space.mesh();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for _ in 0..draws {
        let v = random_velocity(space, &mut rng);
        let mut grad = 0.0;
        for c in 0..mesh.num_cells() {
            let (pts, wts) = rule.mapped(&mesh.cell_vertices(c));
            for (p, w) in pts.iter().zip(&wts) {
                let (_, g) = space.eval_velocity_with_grad(&v, c, *p);
                grad += w * (g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2));
            }
        }
        let tn = triple_norm_sq(space, &v, eta_scale, 2 * m + 2);
        let ratio = (grad / tn).sqrt();
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    (lo, hi)
}
