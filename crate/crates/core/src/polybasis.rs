//! Local polynomial spaces, L2 projections and the Raviart-Thomas space.
//!
//! Cell bases are scaled monomials about the centroid, orthonormalized by a
//! Cholesky factorization of their mass matrix. The ordering is by total
//! degree, so the first `dim_p(j)` functions of a degree-`d` basis are an
//! orthonormal basis of `P_j(K)` for every `j <= d`. Edge bases are
//! orthonormal Legendre polynomials in the arclength of the edge, oriented
//! from its lower to its higher vertex.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::quadrature::{LineRule, TriangleRule};

/// `dim P_j` in two variables.
pub const fn dim_p(j: usize) -> usize {
    (j + 1) * (j + 2) / 2
}

/// `dim RT_j = (j + 1)(j + 3)`.
pub const fn dim_rt(j: usize) -> usize {
    (j + 1) * (j + 3)
}

/// Exponents `(a, b)` of `x^a y^b`, ordered by total degree then by `b`.
fn exponents(degree: usize) -> Vec<(usize, usize)> {
    (0..=degree)
        .flat_map(|d| (0..=d).map(move |b| (d - b, b)))
        .collect()
}

fn powers(x: f64, n: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(n + 1);
    let mut v = 1.0;
    for _ in 0..=n {
        p.push(v);
        v *= x;
    }
    p
}

/// Orthonormal basis of `P_d(K)` on one triangle.
#[derive(Clone, Debug)]
pub struct CellBasis {
    degree: usize,
    center: Point,
    scale: f64,
    exps: Vec<(usize, usize)>,
    /// Row `i` holds the monomial coefficients of basis function `i`.
    transform: DMatrix<f64>,
}

impl CellBasis {
    pub fn new(mesh: &Mesh, cell: usize, degree: usize) -> Result<CellBasis> {
        let verts = mesh.cell_vertices(cell);
        CellBasis::on_triangle(&verts, degree).map_err(|msg| Error::Geometry { cell, message: msg })
    }

    pub fn on_triangle(verts: &[Point; 3], degree: usize) -> std::result::Result<CellBasis, String> {
        let center = [
            (verts[0][0] + verts[1][0] + verts[2][0]) / 3.0,
            (verts[0][1] + verts[1][1] + verts[2][1]) / 3.0,
        ];
        let scale = (0..3)
            .map(|l| {
                let (a, b) = (verts[(l + 1) % 3], verts[(l + 2) % 3]);
                (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .fold(0.0, f64::max);
        if !(scale > 0.0) {
            return Err("zero diameter".into());
        }
        let exps = exponents(degree);
        let n = exps.len();
        let mut basis = CellBasis {
            degree,
            center,
            scale,
            exps,
            transform: DMatrix::identity(n, n),
        };
        let rule = TriangleRule::with_degree(2 * degree);
        let (pts, wts) = rule.mapped(verts);
        // Two Cholesky passes: the second cleans up round-off of the first.
        for _ in 0..2 {
            let mut mass = DMatrix::zeros(n, n);
            let mut vals = vec![0.0; n];
            for (p, w) in pts.iter().zip(&wts) {
                basis.eval(*p, &mut vals);
                for i in 0..n {
                    for j in 0..=i {
                        mass[(i, j)] += w * vals[i] * vals[j];
                    }
                }
            }
            for i in 0..n {
                for j in 0..i {
                    mass[(j, i)] = mass[(i, j)];
                }
            }
            let chol = mass
                .cholesky()
                .ok_or_else(|| "local mass matrix is not positive definite".to_string())?;
            let l_inv = chol
                .l()
                .solve_lower_triangular(&DMatrix::identity(n, n))
                .ok_or_else(|| "singular Cholesky factor".to_string())?;
            basis.transform = &l_inv * &basis.transform;
        }
        Ok(basis)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.exps.len()
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn monomials(&self, p: Point, out: &mut [f64]) {
        let xi = (p[0] - self.center[0]) / self.scale;
        let eta = (p[1] - self.center[1]) / self.scale;
        let px = powers(xi, self.degree);
        let py = powers(eta, self.degree);
        for (o, &(a, b)) in out.iter_mut().zip(&self.exps) {
            *o = px[a] * py[b];
        }
    }

    /// Values of the first `out.len()` basis functions at `p`.
    pub fn eval(&self, p: Point, out: &mut [f64]) {
        let n = self.dim();
        let mut mono = vec![0.0; n];
        self.monomials(p, &mut mono);
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..=i).map(|j| self.transform[(i, j)] * mono[j]).sum();
        }
    }

    /// Values and gradients of the first `vals.len()` basis functions.
    pub fn eval_with_grad(&self, p: Point, vals: &mut [f64], grads: &mut [[f64; 2]]) {
        let n = self.dim();
        let xi = (p[0] - self.center[0]) / self.scale;
        let eta = (p[1] - self.center[1]) / self.scale;
        let px = powers(xi, self.degree);
        let py = powers(eta, self.degree);
        let mut mono = vec![0.0; n];
        let mut dmono = vec![[0.0; 2]; n];
        for (k, &(a, b)) in self.exps.iter().enumerate() {
            mono[k] = px[a] * py[b];
            let dx = if a > 0 { a as f64 * px[a - 1] * py[b] } else { 0.0 };
            let dy = if b > 0 { b as f64 * px[a] * py[b - 1] } else { 0.0 };
            dmono[k] = [dx / self.scale, dy / self.scale];
        }
        for i in 0..vals.len() {
            let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
            for j in 0..=i {
                let t = self.transform[(i, j)];
                v += t * mono[j];
                gx += t * dmono[j][0];
                gy += t * dmono[j][1];
            }
            vals[i] = v;
            grads[i] = [gx, gy];
        }
    }

    /// Evaluates `sum_i coeffs[i] * psi_i(p)`.
    pub fn eval_poly(&self, coeffs: &[f64], p: Point) -> f64 {
        let mut vals = vec![0.0; coeffs.len()];
        self.eval(p, &mut vals);
        vals.iter().zip(coeffs).map(|(v, c)| v * c).sum()
    }

    /// Value and gradient of `sum_i coeffs[i] * psi_i` at `p`.
    pub fn eval_poly_with_grad(&self, coeffs: &[f64], p: Point) -> (f64, [f64; 2]) {
        let n = coeffs.len();
        let mut vals = vec![0.0; n];
        let mut grads = vec![[0.0; 2]; n];
        self.eval_with_grad(p, &mut vals, &mut grads);
        let mut g = [0.0; 2];
        let mut v = 0.0;
        for i in 0..n {
            v += coeffs[i] * vals[i];
            g[0] += coeffs[i] * grads[i][0];
            g[1] += coeffs[i] * grads[i][1];
        }
        (v, g)
    }
}

/// Orthonormal Legendre basis of `P_j(e)` on an edge of the given length,
/// evaluated at the edge parameter `t` in `[0, 1]`.
pub fn edge_basis(degree: usize, length: f64, t: f64, out: &mut [f64]) {
    debug_assert!(out.len() <= degree + 1);
    let z = 2.0 * t - 1.0;
    let (mut p0, mut p1) = (1.0, z);
    for (j, o) in out.iter_mut().enumerate() {
        let pj = match j {
            0 => 1.0,
            1 => z,
            _ => {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
                p2
            }
        };
        *o = ((2 * j + 1) as f64 / length).sqrt() * pj;
    }
}

/// Cell L2 projection onto `P_j(K)`: coefficients of `Pi*_j f` in `basis`.
pub fn project_cell(
    f: impl Fn(Point) -> f64,
    basis: &CellBasis,
    verts: &[Point; 3],
    j: usize,
    rule: &TriangleRule,
) -> Vec<f64> {
    let n = dim_p(j);
    assert!(n <= basis.dim(), "basis degree below projection degree");
    let (pts, wts) = rule.mapped(verts);
    let mut out = vec![0.0; n];
    let mut vals = vec![0.0; n];
    for (p, w) in pts.iter().zip(&wts) {
        basis.eval(*p, &mut vals);
        let fv = f(*p);
        for (o, v) in out.iter_mut().zip(&vals) {
            *o += w * fv * v;
        }
    }
    out
}

/// Edge L2 projection onto `P_j(e)`: coefficients of `Pi^B_j f`.
pub fn project_edge(f: impl Fn(Point) -> f64, ends: [Point; 2], j: usize, rule: &LineRule) -> Vec<f64> {
    let [a, b] = ends;
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    let mut out = vec![0.0; j + 1];
    let mut vals = vec![0.0; j + 1];
    for (&t, &w) in rule.points.iter().zip(&rule.weights) {
        let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        edge_basis(j, len, t, &mut vals);
        let fv = f(p);
        for (o, v) in out.iter_mut().zip(&vals) {
            *o += w * len * fv * v;
        }
    }
    out
}

/// Evaluates an edge polynomial from its coefficients at parameter `t`.
pub fn eval_edge_poly(coeffs: &[f64], length: f64, t: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let mut vals = vec![0.0; coeffs.len()];
    edge_basis(coeffs.len() - 1, length, t, &mut vals);
    vals.iter().zip(coeffs).map(|(v, c)| v * c).sum()
}

/// Basis of `RT_m(K) = [P_m]^2 + x P_m` on one cell.
///
/// The first `2 dim_p(m)` members are `(psi_i, 0)` then `(0, psi_i)`; the last
/// `m + 1` are `x_s q` with `x_s` the scaled position about the centroid and
/// `q` a homogeneous scaled monomial of degree `m`.
#[derive(Clone, Debug)]
pub struct RtBasis {
    degree: usize,
    poly: CellBasis,
}

impl RtBasis {
    pub fn new(poly: CellBasis) -> RtBasis {
        RtBasis {
            degree: poly.degree(),
            poly,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        dim_rt(self.degree)
    }

    pub fn poly_basis(&self) -> &CellBasis {
        &self.poly
    }

    /// Values `[n][2]` and divergences `[n]` of all members at `p`.
    pub fn eval(&self, p: Point, vals: &mut [[f64; 2]], divs: &mut [f64]) {
        let m = self.degree;
        let np = dim_p(m);
        let mut pv = vec![0.0; np];
        let mut pg = vec![[0.0; 2]; np];
        self.poly.eval_with_grad(p, &mut pv, &mut pg);
        for i in 0..np {
            vals[i] = [pv[i], 0.0];
            divs[i] = pg[i][0];
            vals[np + i] = [0.0, pv[i]];
            divs[np + i] = pg[i][1];
        }
        let h = self.poly.scale;
        let xi = (p[0] - self.poly.center[0]) / h;
        let eta = (p[1] - self.poly.center[1]) / h;
        let px = powers(xi, m);
        let py = powers(eta, m);
        for b in 0..=m {
            let a = m - b;
            let q = px[a] * py[b];
            let k = 2 * np + b;
            vals[k] = [xi * q, eta * q];
            // div(x_s q) = (2 + m) q / h by Euler's identity for homogeneous q.
            divs[k] = (2 + m) as f64 * q / h;
        }
    }

    pub fn eval_field(&self, coeffs: &[f64], p: Point) -> ([f64; 2], f64) {
        let n = self.dim();
        let mut vals = vec![[0.0; 2]; n];
        let mut divs = vec![0.0; n];
        self.eval(p, &mut vals, &mut divs);
        let mut v = [0.0; 2];
        let mut d = 0.0;
        for k in 0..n {
            v[0] += coeffs[k] * vals[k][0];
            v[1] += coeffs[k] * vals[k][1];
            d += coeffs[k] * divs[k];
        }
        (v, d)
    }

    /// Coefficients of the `x P_m` part (zero iff the field lies in `[P_m]^2`).
    pub fn non_polynomial_part<'a>(&self, coeffs: &'a [f64]) -> &'a [f64] {
        &coeffs[2 * dim_p(self.degree)..]
    }
}

/// Raviart-Thomas projection `P^RT_m` of a vector field on one cell.
///
/// Solves the square system of normal edge moments against `P_m(e)` and
/// interior moments against `[P_{m-1}(K)]^2` with a pivoted LU.
pub fn project_rt(
    f: impl Fn(Point) -> [f64; 2],
    rt: &RtBasis,
    mesh: &Mesh,
    cell: usize,
    cell_rule: &TriangleRule,
    edge_rule: &LineRule,
) -> Result<Vec<f64>> {
    let m = rt.degree();
    let n = rt.dim();
    let mut mat = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    let mut vals = vec![[0.0; 2]; n];
    let mut divs = vec![0.0; n];
    let mut sig = vec![0.0; m + 1];

    let normals = mesh.cell_normals(cell);
    for (l, &e) in mesh.cell_edges(cell).iter().enumerate() {
        let [a, b] = mesh.edge_endpoints(e);
        let len = mesh.edge_length(e);
        let nrm = normals[l];
        for (&t, &w) in edge_rule.points.iter().zip(&edge_rule.weights) {
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            rt.eval(p, &mut vals, &mut divs);
            edge_basis(m, len, t, &mut sig);
            let fv = f(p);
            let fn_ = fv[0] * nrm[0] + fv[1] * nrm[1];
            for (j, s) in sig.iter().enumerate() {
                let row = l * (m + 1) + j;
                let ws = w * len * s;
                for k in 0..n {
                    mat[(row, k)] += ws * (vals[k][0] * nrm[0] + vals[k][1] * nrm[1]);
                }
                rhs[row] += ws * fn_;
            }
        }
    }
    if m >= 1 {
        let np = dim_p(m - 1);
        let base = 3 * (m + 1);
        let verts = mesh.cell_vertices(cell);
        let (pts, wts) = cell_rule.mapped(&verts);
        let mut pv = vec![0.0; np];
        for (p, w) in pts.iter().zip(&wts) {
            rt.eval(*p, &mut vals, &mut divs);
            rt.poly.eval(*p, &mut pv);
            let fv = f(*p);
            for i in 0..np {
                for c in 0..2 {
                    let row = base + c * np + i;
                    let ws = w * pv[i];
                    for k in 0..n {
                        mat[(row, k)] += ws * vals[k][c];
                    }
                    rhs[row] += ws * fv[c];
                }
            }
        }
    }
    let lu = mat.lu();
    let sol = lu.solve(&rhs).ok_or_else(|| Error::Geometry {
        cell,
        message: "singular Raviart-Thomas interpolation system".into(),
    })?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Geometry {
            cell,
            message: "non-finite Raviart-Thomas coefficients".into(),
        });
    }
    Ok(sol.iter().copied().collect())
}
