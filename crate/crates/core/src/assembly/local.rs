//! Element kernels. Each adds one form into a dense element matrix laid out
//! as [`crate::dofspace::DofMap::cell_dofs`].

use nalgebra::{DMatrix, DVector};

use crate::dofspace::{SpaceConfig, WgSpace};
use crate::mesh::Point;
use crate::polybasis::edge_basis;

/// Offsets of the element-local layout.
#[derive(Clone, Copy, Debug)]
pub struct LocalLayout {
    pub n_ui: usize,
    pub n_pi: usize,
    pub n_ub: usize,
    pub n_pb: usize,
}

impl LocalLayout {
    pub fn new(config: SpaceConfig) -> LocalLayout {
        LocalLayout {
            n_ui: config.n_ui(),
            n_pi: config.n_pi(),
            n_ub: config.n_ub(),
            n_pb: config.n_pb(),
        }
    }

    pub fn ui(&self, comp: usize) -> usize {
        comp * self.n_ui
    }

    pub fn pi(&self) -> usize {
        2 * self.n_ui
    }

    pub fn ub(&self, le: usize, comp: usize) -> usize {
        2 * self.n_ui + self.n_pi + le * 2 * self.n_ub + comp * self.n_ub
    }

    pub fn pb(&self, le: usize) -> usize {
        2 * self.n_ui + self.n_pi + 6 * self.n_ub + le * self.n_pb
    }

    pub fn lambda(&self) -> usize {
        self.len() - 1
    }

    pub fn interior_len(&self) -> usize {
        2 * self.n_ui + self.n_pi
    }

    pub fn len(&self) -> usize {
        2 * self.n_ui + self.n_pi + 6 * self.n_ub + 3 * self.n_pb + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Element index of scalar velocity dof `s` of component `comp`, where
    /// `s` runs over `[interior | edge 0 | edge 1 | edge 2]`.
    fn velocity_scalar(&self, comp: usize, s: usize) -> usize {
        if s < self.n_ui {
            self.ui(comp) + s
        } else {
            let t = s - self.n_ui;
            self.ub(t / self.n_ub, comp) + t % self.n_ub
        }
    }
}

fn edge_point(ends: [Point; 2], t: f64) -> Point {
    let [a, b] = ends;
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// `nu (G v, G w) + nu eta h_K^{-1} sum_e <P_e v_i - v_b, P_e w_i - w_b>_e` per component.
pub fn add_a(space: &WgSpace, cell: usize, nu: f64, eta_scale: f64, mat: &mut DMatrix<f64>) {
    let lay = LocalLayout::new(space.config());
    let t = &space.tables().cells[cell];
    let ns = lay.n_ui + 3 * lay.n_ub;
    let mut s = t.grad_u.transpose() * &t.grad_u;
    let eta = eta_scale / space.mesh().cell_diameter(cell);
    for le in 0..3 {
        let mut se = DMatrix::zeros(lay.n_ub, ns);
        se.view_mut((0, 0), (lay.n_ub, lay.n_ui)).copy_from(&t.trace_proj[le]);
        for j in 0..lay.n_ub {
            se[(j, lay.n_ui + le * lay.n_ub + j)] = -1.0;
        }
        s += eta * se.transpose() * &se;
    }
    for comp in 0..2 {
        for a in 0..ns {
            let ga = lay.velocity_scalar(comp, a);
            for b in 0..ns {
                let gb = lay.velocity_scalar(comp, b);
                mat[(ga, gb)] += nu * s[(a, b)];
            }
        }
    }
}

/// `b_h(v, q) = (G_p q, v_i)`; with `transpose` also adds the mirrored rows
/// of the continuity equation.
pub fn add_b(space: &WgSpace, cell: usize, transpose: bool, mat: &mut DMatrix<f64>) {
    let lay = LocalLayout::new(space.config());
    let g = &space.tables().cells[cell].grad_p;
    let np = lay.n_pi + 3 * lay.n_pb;
    for comp in 0..2 {
        for j in 0..lay.n_ui {
            let row = lay.ui(comp) + j;
            for l in 0..np {
                let col = if l < lay.n_pi {
                    lay.pi() + l
                } else {
                    let t = l - lay.n_pi;
                    lay.pb(t / lay.n_pb) + t % lay.n_pb
                };
                let v = g[(comp * lay.n_ui + j, l)];
                mat[(row, col)] += v;
                if transpose {
                    mat[(col, row)] += v;
                }
            }
        }
    }
}

/// `alpha (|kappa_i|^{r-2} u_i, v_i)`; `kappa_i` is `[x | y]` interior coefficients.
pub fn add_c(space: &WgSpace, cell: usize, alpha: f64, r: f64, kappa_i: &[f64], mat: &mut DMatrix<f64>) {
    if alpha == 0.0 {
        return;
    }
    let lay = LocalLayout::new(space.config());
    let n = lay.n_ui;
    let b = space.basis(cell);
    let (pts, wts) = space.cell_rule().mapped(&space.mesh().cell_vertices(cell));
    let mut vals = vec![0.0; n];
    let mut block = DMatrix::<f64>::zeros(n, n);
    for (p, w) in pts.iter().zip(&wts) {
        b.eval(*p, &mut vals);
        let kx: f64 = vals.iter().zip(&kappa_i[..n]).map(|(a, c)| a * c).sum();
        let ky: f64 = vals.iter().zip(&kappa_i[n..]).map(|(a, c)| a * c).sum();
        let weight = damping_weight(kx.hypot(ky), r);
        let s = alpha * w * weight;
        for i in 0..n {
            for j in 0..n {
                block[(i, j)] += s * vals[i] * vals[j];
            }
        }
    }
    for comp in 0..2 {
        let o = lay.ui(comp);
        for i in 0..n {
            for j in 0..n {
                mat[(o + i, o + j)] += block[(i, j)];
            }
        }
    }
}

/// `|k|^{r-2}`, with the `r = 2` case equal to one everywhere.
pub fn damping_weight(norm: f64, r: f64) -> f64 {
    if r == 2.0 {
        1.0
    } else {
        norm.powf(r - 2.0)
    }
}

/// Skew convection form with frozen `kappa`, per component:
/// `1/2 (phi_v kappa.grad phi_u - phi_u kappa.grad phi_v)_K`
/// `+ 1/2 <psi_u kappa_b.n, phi_v> - 1/2 <psi_v kappa_b.n, phi_u>`.
pub fn add_d(space: &WgSpace, cell: usize, kappa_i: &[f64], kappa_b: [&[f64]; 3], mat: &mut DMatrix<f64>) {
    let lay = LocalLayout::new(space.config());
    let n = lay.n_ui;
    let nk = lay.n_ub;
    let k = space.config().k();
    let b = space.basis(cell);
    let mesh = space.mesh();
    let (pts, wts) = space.cell_rule().mapped(&mesh.cell_vertices(cell));
    let mut vals = vec![0.0; n];
    let mut grads = vec![[0.0; 2]; n];
    let mut ii = DMatrix::<f64>::zeros(n, n);
    for (p, w) in pts.iter().zip(&wts) {
        b.eval_with_grad(*p, &mut vals, &mut grads);
        let kx: f64 = vals.iter().zip(&kappa_i[..n]).map(|(a, c)| a * c).sum();
        let ky: f64 = vals.iter().zip(&kappa_i[n..]).map(|(a, c)| a * c).sum();
        let conv: Vec<f64> = grads.iter().map(|g| kx * g[0] + ky * g[1]).collect();
        for a in 0..n {
            for bb in 0..n {
                ii[(a, bb)] += 0.5 * w * (vals[a] * conv[bb] - vals[bb] * conv[a]);
            }
        }
    }
    let normals = mesh.cell_normals(cell);
    let mut tr = vec![0.0; nk];
    let mut ib = [DMatrix::<f64>::zeros(n, nk), DMatrix::zeros(n, nk), DMatrix::zeros(n, nk)];
    for (le, &e) in mesh.cell_edges(cell).iter().enumerate() {
        let ends = mesh.edge_endpoints(e);
        let len = mesh.edge_length(e);
        let nrm = normals[le];
        let kb = kappa_b[le];
        for (&t, &w) in space.edge_rule().points.iter().zip(&space.edge_rule().weights) {
            b.eval(edge_point(ends, t), &mut vals);
            edge_basis(k, len, t, &mut tr);
            let kbx: f64 = tr.iter().zip(&kb[..nk]).map(|(a, c)| a * c).sum();
            let kby: f64 = tr.iter().zip(&kb[nk..]).map(|(a, c)| a * c).sum();
            let kn = kbx * nrm[0] + kby * nrm[1];
            for a in 0..n {
                for j in 0..nk {
                    ib[le][(a, j)] += 0.5 * w * len * kn * tr[j] * vals[a];
                }
            }
        }
    }
    for comp in 0..2 {
        let o = lay.ui(comp);
        for a in 0..n {
            for bb in 0..n {
                mat[(o + a, o + bb)] += ii[(a, bb)];
            }
        }
        for (le, m) in ib.iter().enumerate() {
            let ob = lay.ub(le, comp);
            for a in 0..n {
                for j in 0..nk {
                    mat[(o + a, ob + j)] += m[(a, j)];
                    mat[(ob + j, o + a)] -= m[(a, j)];
                }
            }
        }
    }
}

/// Mean-value multiplier coupling `int_K p_i`.
pub fn add_mean(space: &WgSpace, cell: usize, mat: &mut DMatrix<f64>) {
    let lay = LocalLayout::new(space.config());
    let mean = &space.tables().cells[cell].mean;
    let l = lay.lambda();
    for (j, &v) in mean.iter().enumerate() {
        mat[(lay.pi() + j, l)] += v;
        mat[(l, lay.pi() + j)] += v;
    }
}

/// `(f, v_i)` into the interior velocity rows.
pub fn add_rhs(space: &WgSpace, cell: usize, f: &dyn Fn(Point) -> [f64; 2], rhs: &mut DVector<f64>) {
    let lay = LocalLayout::new(space.config());
    let n = lay.n_ui;
    let b = space.basis(cell);
    let (pts, wts) = space.cell_rule().mapped(&space.mesh().cell_vertices(cell));
    let mut vals = vec![0.0; n];
    for (p, w) in pts.iter().zip(&wts) {
        b.eval(*p, &mut vals);
        let fv = f(*p);
        for comp in 0..2 {
            let o = lay.ui(comp);
            for a in 0..n {
                rhs[o + a] += w * fv[comp] * vals[a];
            }
        }
    }
}
