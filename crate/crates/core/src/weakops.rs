//! Discrete weak gradient and weak divergence as dense per-cell matrices.
//!
//! Scalar weak functions on a cell are coefficient vectors laid out as
//! `[interior | edge 0 | edge 1 | edge 2]` (local edge order, each edge trace
//! in its global orientation). Vector weak functions are laid out as
//! `[interior x | interior y | edge 0 x | edge 0 y | edge 1 x | ...]`.
//! Because the cell bases are orthonormal, the output coefficients are the
//! right-hand sides of the defining identities directly; no mass solve is
//! needed.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::polybasis::{dim_p, edge_basis, project_cell, project_edge, CellBasis};
use crate::quadrature::{LineRule, TriangleRule};

/// Degrees of one weak operator instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WeakDegrees {
    pub interior: usize,
    pub trace: usize,
    pub gamma: usize,
}

fn check_basis(basis: &CellBasis, cell: usize, degs: WeakDegrees) -> Result<()> {
    let need = degs.interior.max(degs.gamma);
    if basis.degree() < need {
        return Err(Error::InvalidArgument(format!(
            "cell {cell}: basis degree {} below required {need}",
            basis.degree()
        )));
    }
    Ok(())
}

fn edge_point(ends: [Point; 2], t: f64) -> Point {
    let [a, b] = ends;
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// `G_K`: maps scalar weak-function coefficients to the coefficients of
/// `grad_{w,gamma} v` in `[P_gamma(K)]^2` (x block, then y block).
///
/// `(G v, s)_K = -(v_i, div s)_K + <v_b, s.n>_{dK}` for all `s` in `[P_gamma]^2`.
pub fn build_weak_gradient(
    mesh: &Mesh,
    cell: usize,
    basis: &CellBasis,
    degs: WeakDegrees,
    cell_rule: &TriangleRule,
    edge_rule: &LineRule,
) -> Result<DMatrix<f64>> {
    check_basis(basis, cell, degs)?;
    let ng = dim_p(degs.gamma);
    let ni = dim_p(degs.interior);
    let nt = degs.trace + 1;
    let mut g = DMatrix::zeros(2 * ng, ni + 3 * nt);

    let nb = ni.max(ng);
    let mut vals = vec![0.0; nb];
    let mut grads = vec![[0.0; 2]; nb];
    let (pts, wts) = cell_rule.mapped(&mesh.cell_vertices(cell));
    for (p, w) in pts.iter().zip(&wts) {
        basis.eval_with_grad(*p, &mut vals, &mut grads);
        for j in 0..ng {
            for l in 0..ni {
                g[(j, l)] -= w * vals[l] * grads[j][0];
                g[(ng + j, l)] -= w * vals[l] * grads[j][1];
            }
        }
    }

    let normals = mesh.cell_normals(cell);
    let mut tr = vec![0.0; nt];
    for (le, &e) in mesh.cell_edges(cell).iter().enumerate() {
        let ends = mesh.edge_endpoints(e);
        let len = mesh.edge_length(e);
        let n = normals[le];
        for (&t, &w) in edge_rule.points.iter().zip(&edge_rule.weights) {
            basis.eval(edge_point(ends, t), &mut vals[..ng]);
            edge_basis(degs.trace, len, t, &mut tr);
            let wl = w * len;
            for j in 0..ng {
                for (i, ti) in tr.iter().enumerate() {
                    let col = ni + le * nt + i;
                    g[(j, col)] += wl * ti * vals[j] * n[0];
                    g[(ng + j, col)] += wl * ti * vals[j] * n[1];
                }
            }
        }
    }
    Ok(g)
}

/// `D_K`: maps vector weak-function coefficients to the coefficients of
/// `div_{w,gamma} w` in `P_gamma(K)`.
///
/// `(D w, s)_K = -(w_i, grad s)_K + <w_b.n, s>_{dK}` for all `s` in `P_gamma`.
pub fn build_weak_divergence(
    mesh: &Mesh,
    cell: usize,
    basis: &CellBasis,
    degs: WeakDegrees,
    cell_rule: &TriangleRule,
    edge_rule: &LineRule,
) -> Result<DMatrix<f64>> {
    check_basis(basis, cell, degs)?;
    let ng = dim_p(degs.gamma);
    let ni = dim_p(degs.interior);
    let nt = degs.trace + 1;
    let mut d = DMatrix::zeros(ng, 2 * ni + 6 * nt);

    let nb = ni.max(ng);
    let mut vals = vec![0.0; nb];
    let mut grads = vec![[0.0; 2]; nb];
    let (pts, wts) = cell_rule.mapped(&mesh.cell_vertices(cell));
    for (p, w) in pts.iter().zip(&wts) {
        basis.eval_with_grad(*p, &mut vals, &mut grads);
        for j in 0..ng {
            for l in 0..ni {
                d[(j, l)] -= w * vals[l] * grads[j][0];
                d[(j, ni + l)] -= w * vals[l] * grads[j][1];
            }
        }
    }

    let normals = mesh.cell_normals(cell);
    let mut tr = vec![0.0; nt];
    for (le, &e) in mesh.cell_edges(cell).iter().enumerate() {
        let ends = mesh.edge_endpoints(e);
        let len = mesh.edge_length(e);
        let n = normals[le];
        for (&t, &w) in edge_rule.points.iter().zip(&edge_rule.weights) {
            basis.eval(edge_point(ends, t), &mut vals[..ng]);
            edge_basis(degs.trace, len, t, &mut tr);
            let wl = w * len;
            for j in 0..ng {
                for (i, ti) in tr.iter().enumerate() {
                    let base = 2 * ni + le * 2 * nt;
                    d[(j, base + i)] += wl * ti * n[0] * vals[j];
                    d[(j, base + nt + i)] += wl * ti * n[1] * vals[j];
                }
            }
        }
    }
    Ok(d)
}

/// Interior and trace parts of a discrete vector field restricted to one cell.
#[derive(Clone, Debug)]
pub struct LocalVectorField<'a> {
    /// `[x | y]` coefficients in the cell basis.
    pub interior: &'a [f64],
    /// Per local edge, `[x | y]` trace coefficients.
    pub traces: [&'a [f64]; 3],
}

/// Row-wise weak divergence of the tensor `{u_i (x) k_i, u_b (x) k_b}`.
///
/// Each interior product `u_c k` is expanded in `P_{2m}(K)` and each trace
/// product in `P_{2k}(e)` before the weak divergence (interior degree `2m`,
/// trace degree `2k`) is applied. Returns the `P_gamma` coefficients of the
/// two rows.
#[allow(clippy::too_many_arguments)]
pub fn apply_weak_op_tensor(
    mesh: &Mesh,
    cell: usize,
    basis: &CellBasis,
    m: usize,
    k: usize,
    gamma: usize,
    u: &LocalVectorField<'_>,
    kappa: &LocalVectorField<'_>,
) -> Result<[Vec<f64>; 2]> {
    let degs = WeakDegrees {
        interior: 2 * m,
        trace: 2 * k,
        gamma,
    };
    let cell_rule = TriangleRule::with_degree(4 * m + gamma + 2);
    let edge_rule = LineRule::with_degree(4 * m + gamma + 2);
    let d = build_weak_divergence(mesh, cell, basis, degs, &cell_rule, &edge_rule)?;
    let verts = mesh.cell_vertices(cell);
    let nm = dim_p(m);
    let nk = k + 1;
    let eval_vec = |coeffs: &[f64], p: Point| [basis.eval_poly(&coeffs[..nm], p), basis.eval_poly(&coeffs[nm..2 * nm], p)];

    let mut rows: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (c, row) in rows.iter_mut().enumerate() {
        let mut w = Vec::with_capacity(d.ncols());
        for dir in 0..2 {
            let prod = |p: Point| eval_vec(u.interior, p)[c] * eval_vec(kappa.interior, p)[dir];
            w.extend(project_cell(prod, basis, &verts, 2 * m, &cell_rule));
        }
        for (le, &e) in mesh.cell_edges(cell).iter().enumerate() {
            let ends = mesh.edge_endpoints(e);
            let len = mesh.edge_length(e);
            let param = |p: Point| {
                let [a, b] = ends;
                ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / (len * len)
            };
            for dir in 0..2 {
                let prod = |p: Point| {
                    let t = param(p);
                    let ub = crate::polybasis::eval_edge_poly(&u.traces[le][c * nk..(c + 1) * nk], len, t);
                    let kb = crate::polybasis::eval_edge_poly(&kappa.traces[le][dir * nk..(dir + 1) * nk], len, t);
                    ub * kb
                };
                w.extend(project_edge(prod, ends, 2 * k, &edge_rule));
            }
        }
        let out = &d * nalgebra::DVector::from_vec(w);
        *row = out.iter().copied().collect();
    }
    Ok(rows)
}

/// Cached per-cell operators used by assembly.
#[derive(Clone, Debug)]
pub struct CellTables {
    /// Velocity component weak gradient, `gamma = m - 1`.
    pub grad_u: DMatrix<f64>,
    /// Pressure weak gradient, `gamma = m`.
    pub grad_p: DMatrix<f64>,
    /// Velocity weak divergence, `gamma = m`.
    pub div_u: DMatrix<f64>,
    /// Per local edge, the matrix of `Pi^B_k` acting on `P_m(K)` coefficients.
    pub trace_proj: [DMatrix<f64>; 3],
    /// `int_K psi_j` for the pressure interior basis.
    pub mean: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct WeakOpTables {
    pub m: usize,
    pub k: usize,
    pub cells: Vec<CellTables>,
}

impl WeakOpTables {
    pub fn build(
        mesh: &Mesh,
        bases: &[CellBasis],
        m: usize,
        k: usize,
        cell_rule: &TriangleRule,
        edge_rule: &LineRule,
    ) -> Result<WeakOpTables> {
        let cells = (0..mesh.num_cells())
            .into_par_iter()
            .map(|c| build_cell_tables(mesh, c, &bases[c], m, k, cell_rule, edge_rule))
            .collect::<Result<Vec<_>>>()?;
        Ok(WeakOpTables { m, k, cells })
    }
}

fn build_cell_tables(
    mesh: &Mesh,
    cell: usize,
    basis: &CellBasis,
    m: usize,
    k: usize,
    cell_rule: &TriangleRule,
    edge_rule: &LineRule,
) -> Result<CellTables> {
    let grad_u = build_weak_gradient(
        mesh,
        cell,
        basis,
        WeakDegrees { interior: m, trace: k, gamma: m - 1 },
        cell_rule,
        edge_rule,
    )?;
    let grad_p = build_weak_gradient(
        mesh,
        cell,
        basis,
        WeakDegrees { interior: m - 1, trace: m, gamma: m },
        cell_rule,
        edge_rule,
    )?;
    let div_u = build_weak_divergence(
        mesh,
        cell,
        basis,
        WeakDegrees { interior: m, trace: k, gamma: m },
        cell_rule,
        edge_rule,
    )?;
    let nm = dim_p(m);
    let mut vals = vec![0.0; nm];
    let mut tr = vec![0.0; k + 1];
    let trace_proj = std::array::from_fn(|le| {
        let e = mesh.cell_edges(cell)[le];
        let ends = mesh.edge_endpoints(e);
        let len = mesh.edge_length(e);
        let mut p = DMatrix::zeros(k + 1, nm);
        for (&t, &w) in edge_rule.points.iter().zip(&edge_rule.weights) {
            basis.eval(edge_point(ends, t), &mut vals);
            edge_basis(k, len, t, &mut tr);
            for i in 0..=k {
                for j in 0..nm {
                    p[(i, j)] += w * len * tr[i] * vals[j];
                }
            }
        }
        p
    });
    let np = dim_p(m - 1);
    let (pts, wts) = cell_rule.mapped(&mesh.cell_vertices(cell));
    let mut mean = vec![0.0; np];
    let mut pv = vec![0.0; np];
    for (p, w) in pts.iter().zip(&wts) {
        basis.eval(*p, &mut pv);
        for (mj, v) in mean.iter_mut().zip(&pv) {
            *mj += w * v;
        }
    }
    Ok(CellTables {
        grad_u,
        grad_p,
        div_u,
        trace_proj,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn unit_triangle_mesh() -> Mesh {
        Mesh::from_cells(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![1; 3], vec![[0, 1, 2]]).unwrap()
    }

    fn rules(deg: usize) -> (TriangleRule, LineRule) {
        (TriangleRule::with_degree(deg), LineRule::with_degree(deg))
    }

    /// Coefficients of the weak function `{q|_K, q|_e}` for a polynomial `q`.
    fn matching_scalar(mesh: &Mesh, basis: &CellBasis, q: impl Fn(Point) -> f64 + Copy, degs: WeakDegrees) -> DVector<f64> {
        let (cr, er) = rules(12);
        let mut v = project_cell(q, basis, &mesh.cell_vertices(0), degs.interior, &cr);
        for &e in &mesh.cell_edges(0) {
            v.extend(project_edge(q, mesh.edge_endpoints(e), degs.trace, &er));
        }
        DVector::from_vec(v)
    }

    #[test]
    fn gradient_of_constant_pair_vanishes() {
        let mesh = Mesh::uniform(2, 2, crate::mesh::Rect::UNIT).unwrap();
        let (cr, er) = rules(8);
        for (m, k) in [(1, 0), (1, 1), (2, 1), (2, 2)] {
            let b = CellBasis::new(&mesh, 0, m).unwrap();
            let degs = WeakDegrees { interior: m, trace: k, gamma: m - 1 };
            let g = build_weak_gradient(&mesh, 0, &b, degs, &cr, &er).unwrap();
            let v = matching_scalar(&mesh, &b, |_| 3.0, degs);
            assert!((&g * v).amax() < 1e-13);
        }
    }

    #[test]
    fn gradient_of_bottom_edge_indicator() {
        // v_i = 0, v_b = 1 on the bottom edge only, gamma = 0.
        // (G, s) = <1, s.n>_bottom = s.(0,-1) * 1, and (G, s)_K = |K| G.s
        // so G = (0, -1) / (1/2) = (0, -2).
        let mesh = unit_triangle_mesh();
        let b = CellBasis::new(&mesh, 0, 1).unwrap();
        let (cr, er) = rules(6);
        let degs = WeakDegrees { interior: 1, trace: 0, gamma: 0 };
        let g = build_weak_gradient(&mesh, 0, &b, degs, &cr, &er).unwrap();
        let bottom = mesh.local_edge_index(0, mesh.edges().iter().position(|&e| e == [0, 1]).unwrap()).unwrap();
        let mut v = DVector::zeros(3 + 3);
        // Trace coefficient of the constant 1 in the orthonormal edge basis is sqrt(|e|) = 1.
        v[3 + bottom] = 1.0;
        let out = &g * v;
        let c0 = b.eval_poly(&[1.0], [0.2, 0.2]);
        assert!((out[0] * c0).abs() < 1e-14);
        assert!((out[1] * c0 + 2.0).abs() < 1e-14);
    }

    #[test]
    fn gradient_of_matching_linear_pair() {
        let mesh = Mesh::uniform(3, 2, crate::mesh::Rect::UNIT).unwrap();
        let (cr, er) = rules(8);
        for (m, k) in [(1, 0), (1, 1), (2, 1), (2, 2)] {
            for cell in [0, 5] {
                let b = CellBasis::new(&mesh, cell, m).unwrap();
                let degs = WeakDegrees { interior: m, trace: k, gamma: m - 1 };
                let g = build_weak_gradient(&mesh, cell, &b, degs, &cr, &er).unwrap();
                let mut v = project_cell(|p| p[0], &b, &mesh.cell_vertices(cell), m, &cr);
                for &e in &mesh.cell_edges(cell) {
                    v.extend(project_edge(|p| p[0], mesh.edge_endpoints(e), k, &er));
                }
                let out = &g * DVector::from_vec(v);
                let ng = dim_p(m - 1);
                let gx = b.eval_poly(&out.as_slice()[..ng], [0.4, 0.3]);
                let gy = b.eval_poly(&out.as_slice()[ng..], [0.4, 0.3]);
                assert!((gx - 1.0).abs() < 1e-12 && gy.abs() < 1e-12, "m={m} k={k}: ({gx}, {gy})");
            }
        }
    }

    #[test]
    fn divergence_cases() {
        let mesh = unit_triangle_mesh();
        let (cr, er) = rules(8);
        let m = 1;
        let b = CellBasis::new(&mesh, 0, m).unwrap();
        let degs = WeakDegrees { interior: m, trace: m, gamma: m };
        let d = build_weak_divergence(&mesh, 0, &b, degs, &cr, &er).unwrap();
        let verts = mesh.cell_vertices(0);
        let vec_weak = |f: &dyn Fn(Point) -> [f64; 2]| {
            let mut v = project_cell(|p| f(p)[0], &b, &verts, m, &cr);
            v.extend(project_cell(|p| f(p)[1], &b, &verts, m, &cr));
            for &e in &mesh.cell_edges(0) {
                v.extend(project_edge(|p| f(p)[0], mesh.edge_endpoints(e), m, &er));
                v.extend(project_edge(|p| f(p)[1], mesh.edge_endpoints(e), m, &er));
            }
            DVector::from_vec(v)
        };
        let zero = &d * vec_weak(&|_| [0.7, -1.1]);
        assert!(zero.amax() < 1e-13);
        let two = &d * vec_weak(&|p| [p[0], p[1]]);
        for p in [[0.1, 0.1], [0.5, 0.2]] {
            assert!((b.eval_poly(two.as_slice(), p) - 2.0).abs() < 1e-12);
        }

        // w_i = 0, w_b.n = 1 on the hypotenuse only, gamma = 0:
        // (D, 1)_K = <1, 1>_e = sqrt(2) so D = sqrt(2) / (1/2)... with a unit
        // edge the oracle gives <1,1>_e / |K| = 2.
        let unit_edge = mesh.edges().iter().position(|&e| e == [0, 1]).unwrap();
        let le = mesh.local_edge_index(0, unit_edge).unwrap();
        let n = mesh.cell_normals(0)[le];
        let degs0 = WeakDegrees { interior: 1, trace: 0, gamma: 0 };
        let d0 = build_weak_divergence(&mesh, 0, &b, degs0, &cr, &er).unwrap();
        let mut w = DVector::zeros(6 + 6);
        w[6 + 2 * le] = n[0];
        w[6 + 2 * le + 1] = n[1];
        let out = &d0 * w;
        assert!((b.eval_poly(out.as_slice(), [0.3, 0.3]) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn tensor_divergence_one_cell() {
        let mesh = unit_triangle_mesh();
        let m = 1;
        let k = 1;
        let basis = CellBasis::new(&mesh, 0, 2 * m).unwrap();
        let (cr, er) = rules(10);
        let verts = mesh.cell_vertices(0);
        let field = |f: &dyn Fn(Point) -> [f64; 2]| {
            let mut i = project_cell(|p| f(p)[0], &basis, &verts, m, &cr);
            i.extend(project_cell(|p| f(p)[1], &basis, &verts, m, &cr));
            let t: Vec<Vec<f64>> = mesh
                .cell_edges(0)
                .iter()
                .map(|&e| {
                    let mut v = project_edge(|p| f(p)[0], mesh.edge_endpoints(e), k, &er);
                    v.extend(project_edge(|p| f(p)[1], mesh.edge_endpoints(e), k, &er));
                    v
                })
                .collect();
            (i, t)
        };
        let (ui, ut) = field(&|p| [p[0], 0.0]);
        let (ki, kt) = field(&|_| [1.0, 0.0]);
        let u = LocalVectorField { interior: &ui, traces: [&ut[0], &ut[1], &ut[2]] };
        let kap = LocalVectorField { interior: &ki, traces: [&kt[0], &kt[1], &kt[2]] };
        let rows = apply_weak_op_tensor(&mesh, 0, &basis, m, k, m, &u, &kap).unwrap();
        for p in [[0.2, 0.2], [0.6, 0.1]] {
            assert!((basis.eval_poly(&rows[0], p) - 1.0).abs() < 1e-12);
            assert!(basis.eval_poly(&rows[1], p).abs() < 1e-12);
        }
        let (zi, zt) = field(&|_| [0.0, 0.0]);
        let zero = LocalVectorField { interior: &zi, traces: [&zt[0], &zt[1], &zt[2]] };
        let rows = apply_weak_op_tensor(&mesh, 0, &basis, m, k, m, &u, &zero).unwrap();
        assert!(rows.iter().flatten().all(|v| v.abs() < 1e-14));
        let (ci, ct) = field(&|_| [0.3, -2.0]);
        let c = LocalVectorField { interior: &ci, traces: [&ct[0], &ct[1], &ct[2]] };
        let rows = apply_weak_op_tensor(&mesh, 0, &basis, m, k, m, &c, &kap).unwrap();
        assert!(rows.iter().flatten().all(|v| v.abs() < 1e-13));
    }
}
