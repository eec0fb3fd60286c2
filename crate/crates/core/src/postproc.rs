//! Error norms, divergence checks, convergence rates and file export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dofspace::{DiscreteField, WgSpace};
use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::quadrature::{LineRule, TriangleRule};

/// Closed-form velocity, velocity gradient and pressure.
pub trait ExactSolution: Sync {
    fn velocity(&self, p: Point) -> [f64; 2];
    /// Rows `[grad u_x, grad u_y]`.
    fn velocity_grad(&self, p: Point) -> [[f64; 2]; 2];
    fn pressure(&self, p: Point) -> f64;
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub mesh: String,
    pub h: f64,
    pub dofs: usize,
    pub iterations: usize,
    /// `||u - u_hi||_0 / ||u||_0`.
    pub l2_u: f64,
    /// `||grad u - grad_h u_hi||_0 / ||grad u||_0`.
    pub h1_u: f64,
    /// Mean-adjusted `||p - p_hi||_0 / ||p||_0`.
    pub l2_p: f64,
    /// `||grad u - grad_w u_h||_0 / ||grad u||_0` with the weak gradient; reported only.
    pub weak_h1_u: f64,
    pub div_inf: f64,
    pub jump_inf: f64,
}

fn rel(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// Relative errors of `field` against `exact`, with quadrature of degree
/// `rule_degree` (at least `2m + 6` is used).
pub fn compute_errors(
    space: &WgSpace,
    field: &DiscreteField,
    exact: &dyn ExactSolution,
    iterations: usize,
    rule_degree: usize,
) -> ErrorReport {
    let cfg = space.config();
    let m = cfg.m();
    let deg = rule_degree.max(2 * m + 6);
    let rule = TriangleRule::with_degree(deg);
    let mesh = space.mesh();
    let n = cfg.n_ui();
    let nk = cfg.n_ub();
    let ng = crate::polybasis::dim_p(m - 1);

    // [u err, u, grad err, grad, weak grad err, p err, p, (p - p_h), p]
    let sums = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let (pts, wts) = rule.mapped(&mesh.cell_vertices(c));
            let b = space.basis(c);
            let t = &space.tables().cells[c];
            let edges = mesh.cell_edges(c);
            let weak: Vec<nalgebra::DVector<f64>> = (0..2)
                .map(|comp| {
                    let mut sv = field.u_interior(c)[comp * n..(comp + 1) * n].to_vec();
                    for &e in &edges {
                        sv.extend_from_slice(&field.u_trace(e)[comp * nk..(comp + 1) * nk]);
                    }
                    &t.grad_u * nalgebra::DVector::from_vec(sv)
                })
                .collect();
            let mut s = [0.0; 9];
            for (p, w) in pts.iter().zip(&wts) {
                let (uh, guh) = space.eval_velocity_with_grad(field, c, *p);
                let u = exact.velocity(*p);
                let gu = exact.velocity_grad(*p);
                let ph = space.eval_pressure(field, c, *p);
                let pe = exact.pressure(*p);
                for comp in 0..2 {
                    s[0] += w * (u[comp] - uh[comp]).powi(2);
                    s[1] += w * u[comp].powi(2);
                    let gw = [
                        b.eval_poly(&weak[comp].as_slice()[..ng], *p),
                        b.eval_poly(&weak[comp].as_slice()[ng..], *p),
                    ];
                    for d in 0..2 {
                        s[2] += w * (gu[comp][d] - guh[comp][d]).powi(2);
                        s[3] += w * gu[comp][d].powi(2);
                        s[4] += w * (gu[comp][d] - gw[d]).powi(2);
                    }
                }
                s[5] += w * (pe - ph);
                s[6] += w * pe;
                s[7] += w;
            }
            s
        })
        .reduce(|| [0.0; 9], |a, b| std::array::from_fn(|i| a[i] + b[i]));
    let area = sums[7];
    let shift = sums[5] / area;
    let pmean = sums[6] / area;

    let (pe_sq, p_sq) = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let (pts, wts) = rule.mapped(&mesh.cell_vertices(c));
            let mut a = 0.0;
            let mut b = 0.0;
            for (p, w) in pts.iter().zip(&wts) {
                let pe = exact.pressure(*p);
                let ph = space.eval_pressure(field, c, *p);
                a += w * (pe - ph - shift).powi(2);
                b += w * (pe - pmean).powi(2);
            }
            (a, b)
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));

    let (div_inf, jump_inf) = check_divergence_free(space, field);
    ErrorReport {
        mesh: String::new(),
        h: mesh.h(),
        dofs: space.dofs().total() + 1,
        iterations,
        l2_u: rel(sums[0], sums[1]),
        h1_u: rel(sums[2], sums[3]),
        l2_p: rel(pe_sq, p_sq),
        weak_h1_u: rel(sums[4], sums[3]),
        div_inf,
        jump_inf,
    }
}

/// `(max_K sup |div u_hi|, max_e sup |[u_hi . n_e]|)`, sampled at vertices,
/// edge Gauss points and cell quadrature points.
pub fn check_divergence_free(space: &WgSpace, field: &DiscreteField) -> (f64, f64) {
    let m = space.config().m();
    let rule = TriangleRule::with_degree(2 * m + 2);
    let line = LineRule::with_degree(2 * m + 2);
    let mesh = space.mesh();
    let div = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let verts = mesh.cell_vertices(c);
            let (pts, _) = rule.mapped(&verts);
            pts.iter()
                .chain(verts.iter())
                .map(|p| {
                    let (_, g) = space.eval_velocity_with_grad(field, c, *p);
                    (g[0][0] + g[1][1]).abs()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let jump = (0..mesh.num_edges())
        .into_par_iter()
        .filter_map(|e| {
            let (c0, c1) = mesh.edge_cells(e);
            let c1 = c1?;
            let [a, b] = mesh.edge_endpoints(e);
            let n = mesh.edge_normal(e);
            let ts = line.points.iter().copied().chain([0.0, 1.0]);
            Some(
                ts.map(|t| {
                    let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                    let u0 = space.eval_velocity(field, c0, p);
                    let u1 = space.eval_velocity(field, c1, p);
                    ((u0[0] - u1[0]) * n[0] + (u0[1] - u1[1]) * n[1]).abs()
                })
                .fold(0.0, f64::max),
            )
        })
        .reduce(|| 0.0, f64::max);
    (div, jump)
}

/// `log(e_i / e_{i+1}) / log(h_i / h_{i+1})`; `None` where an error is not
/// positive and finite.
pub fn convergence_rates(levels: &[(f64, f64)]) -> Vec<Option<f64>> {
    levels
        .windows(2)
        .map(|w| {
            let ((h0, e0), (h1, e1)) = (w[0], w[1]);
            let ok = |e: f64| e > 0.0 && e.is_finite();
            if ok(e0) && ok(e1) && h0 > 0.0 && h1 > 0.0 && h0 != h1 {
                Some((e0 / e1).ln() / (h0 / h1).ln())
            } else {
                None
            }
        })
        .collect()
}

/// One row of the study table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub mesh: String,
    pub h: f64,
    pub dofs: usize,
    pub iters: usize,
    #[serde(rename = "errL2u")]
    pub err_l2_u: f64,
    #[serde(rename = "rateL2u")]
    pub rate_l2_u: Option<f64>,
    #[serde(rename = "errH1u")]
    pub err_h1_u: f64,
    #[serde(rename = "rateH1u")]
    pub rate_h1_u: Option<f64>,
    #[serde(rename = "errL2p")]
    pub err_l2_p: f64,
    #[serde(rename = "rateL2p")]
    pub rate_l2_p: Option<f64>,
    #[serde(rename = "divInf")]
    pub div_inf: f64,
    #[serde(rename = "jumpInf")]
    pub jump_inf: f64,
}

pub const CSV_HEADER: &str = "mesh,h,dofs,iters,errL2u,rateL2u,errH1u,rateH1u,errL2p,rateL2p,divInf,jumpInf";

/// Table rows with rates between consecutive reports.
pub fn table_rows(reports: &[ErrorReport]) -> Vec<TableRow> {
    let rates = |f: fn(&ErrorReport) -> f64| {
        let pairs: Vec<(f64, f64)> = reports.iter().map(|r| (r.h, f(r))).collect();
        let mut out = vec![None];
        out.extend(convergence_rates(&pairs));
        out
    };
    let ru = rates(|r| r.l2_u);
    let rh = rates(|r| r.h1_u);
    let rp = rates(|r| r.l2_p);
    reports
        .iter()
        .enumerate()
        .map(|(i, r)| TableRow {
            mesh: r.mesh.clone(),
            h: r.h,
            dofs: r.dofs,
            iters: r.iterations,
            err_l2_u: r.l2_u,
            rate_l2_u: ru[i],
            err_h1_u: r.h1_u,
            rate_h1_u: rh[i],
            err_l2_p: r.l2_p,
            rate_l2_p: rp[i],
            div_inf: r.div_inf,
            jump_inf: r.jump_inf,
        })
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

pub fn export_table(reports: &[ErrorReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in table_rows(reports) {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn parse_table(path: &Path) -> Result<Vec<TableRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected header `{header}`"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        let row: TableRow = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Legacy VTK (3.0, ASCII) unstructured grid with cell averages of the
/// interior velocity and pressure and vertex values averaged over the
/// adjacent cells.
pub fn export_fields(space: &WgSpace, field: &DiscreteField, path: &Path) -> Result<()> {
    let mesh = space.mesh();
    let nv = mesh.num_vertices();
    let nc = mesh.num_cells();
    let rule = TriangleRule::with_degree(2 * space.config().m());
    let mut cell_u = vec![[0.0; 2]; nc];
    let mut cell_p = vec![0.0; nc];
    let mut vert_u = vec![[0.0; 2]; nv];
    let mut vert_p = vec![0.0; nv];
    let mut count = vec![0usize; nv];
    for c in 0..nc {
        let (pts, wts) = rule.mapped(&mesh.cell_vertices(c));
        let area = mesh.cell_area(c);
        for (p, w) in pts.iter().zip(&wts) {
            let u = space.eval_velocity(field, c, *p);
            cell_u[c][0] += w * u[0] / area;
            cell_u[c][1] += w * u[1] / area;
            cell_p[c] += w * space.eval_pressure(field, c, *p) / area;
        }
        for &v in &mesh.cells()[c] {
            let p = mesh.vertices()[v];
            let u = space.eval_velocity(field, c, p);
            vert_u[v][0] += u[0];
            vert_u[v][1] += u[1];
            vert_p[v] += space.eval_pressure(field, c, p);
            count[v] += 1;
        }
    }

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "# vtk DataFile Version 3.0").map_err(io)?;
    writeln!(w, "weak Galerkin velocity and pressure").map_err(io)?;
    writeln!(w, "ASCII").map_err(io)?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID").map_err(io)?;
    writeln!(w, "POINTS {nv} double").map_err(io)?;
    for p in mesh.vertices() {
        writeln!(w, "{:e} {:e} 0", p[0], p[1]).map_err(io)?;
    }
    writeln!(w, "CELLS {nc} {}", 4 * nc).map_err(io)?;
    for c in mesh.cells() {
        writeln!(w, "3 {} {} {}", c[0], c[1], c[2]).map_err(io)?;
    }
    writeln!(w, "CELL_TYPES {nc}").map_err(io)?;
    for _ in 0..nc {
        writeln!(w, "5").map_err(io)?;
    }
    writeln!(w, "CELL_DATA {nc}").map_err(io)?;
    writeln!(w, "VECTORS velocity_mean double").map_err(io)?;
    for u in &cell_u {
        writeln!(w, "{:e} {:e} 0", u[0], u[1]).map_err(io)?;
    }
    writeln!(w, "SCALARS pressure_mean double 1").map_err(io)?;
    writeln!(w, "LOOKUP_TABLE default").map_err(io)?;
    for p in &cell_p {
        writeln!(w, "{p:e}").map_err(io)?;
    }
    writeln!(w, "POINT_DATA {nv}").map_err(io)?;
    writeln!(w, "VECTORS velocity double").map_err(io)?;
    for (u, &n) in vert_u.iter().zip(&count) {
        let s = 1.0 / n.max(1) as f64;
        writeln!(w, "{:e} {:e} 0", u[0] * s, u[1] * s).map_err(io)?;
    }
    writeln!(w, "SCALARS pressure double 1").map_err(io)?;
    writeln!(w, "LOOKUP_TABLE default").map_err(io)?;
    for (p, &n) in vert_p.iter().zip(&count) {
        writeln!(w, "{:e}", p / n.max(1) as f64).map_err(io)?;
    }
    w.flush().map_err(io)
}
