use nalgebra::DVector;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;
use wgbf_core::assembly::triple_norm_sq;
use wgbf_core::checks::{commutativity_errors, random_velocity, trig_omega, trig_omega_grad, trig_q, trig_q_grad};
use wgbf_core::dofspace::{SpaceConfig, WgSpace};
use wgbf_core::mesh::{Mesh, Point, Rect};
use wgbf_core::polybasis::{dim_p, eval_edge_poly, CellBasis};
use wgbf_core::quadrature::{LineRule, TriangleRule};
use wgbf_core::weakops::{build_weak_divergence, build_weak_gradient, WeakDegrees};

fn monomials(deg: usize) -> Vec<(i32, i32)> {
    (0..=deg as i32).flat_map(|t| (0..=t).map(move |b| (t - b, b))).collect()
}

fn mono(e: (i32, i32), p: Point) -> (f64, [f64; 2]) {
    let (a, b) = e;
    let v = p[0].powi(a) * p[1].powi(b);
    let dx = if a > 0 { a as f64 * p[0].powi(a - 1) * p[1].powi(b) } else { 0.0 };
    let dy = if b > 0 { b as f64 * p[0].powi(a) * p[1].powi(b - 1) } else { 0.0 };
    (v, [dx, dy])
}

fn edge_point(ends: [Point; 2], t: f64) -> Point {
    [ends[0][0] + t * (ends[1][0] - ends[0][0]), ends[0][1] + t * (ends[1][1] - ends[0][1])]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn weak_gradient_satisfies_its_definition(
        m in 1usize..3,
        trace_up in 0usize..2,
        gamma_up in 0usize..2,
        cell in 0usize..8,
        coeffs in prop::collection::vec(-1.0f64..1.0, 6 + 3 * 3),
    ) {
        let mesh = Mesh::uniform(2, 2, Rect { x0: 0.0, y0: 0.0, x1: 1.3, y1: 0.7 }).unwrap();
        let degs = WeakDegrees { interior: m, trace: m - 1 + trace_up, gamma: m - 1 + gamma_up };
        let basis = CellBasis::new(&mesh, cell, m).unwrap();
        let g = build_weak_gradient(&mesh, cell, &basis, degs, &TriangleRule::with_degree(2 * m + 2), &LineRule::with_degree(2 * m + 2)).unwrap();
        let ni = dim_p(degs.interior);
        let nt = degs.trace + 1;
        let v: Vec<f64> = coeffs[..ni + 3 * nt].to_vec();
        let gv = &g * DVector::from_vec(v.clone());
        let ng = dim_p(degs.gamma);

        let cr = TriangleRule::with_degree(3 * m + 4);
        let er = LineRule::with_degree(3 * m + 4);
        let (pts, wts) = cr.mapped(&mesh.cell_vertices(cell));
        let normals = mesh.cell_normals(cell);
        for e in monomials(degs.gamma) {
            for d in 0..2 {
                let mut lhs = 0.0;
                let mut rhs = 0.0;
                for (p, w) in pts.iter().zip(&wts) {
                    let (s, ds) = mono(e, *p);
                    let gx = basis.eval_poly(&gv.as_slice()[d * ng..(d + 1) * ng], *p);
                    lhs += w * gx * s;
                    rhs -= w * basis.eval_poly(&v[..ni], *p) * ds[d];
                }
                for (le, &edge) in mesh.cell_edges(cell).iter().enumerate() {
                    let ends = mesh.edge_endpoints(edge);
                    let len = mesh.edge_length(edge);
                    let tr = &v[ni + le * nt..ni + (le + 1) * nt];
                    for (&t, &w) in er.points.iter().zip(&er.weights) {
                        let (s, _) = mono(e, edge_point(ends, t));
                        rhs += w * len * eval_edge_poly(tr, len, t) * s * normals[le][d];
                    }
                }
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn weak_divergence_satisfies_its_definition(
        m in 1usize..3,
        trace_up in 0usize..2,
        cell in 0usize..8,
        coeffs in prop::collection::vec(-1.0f64..1.0, 12 + 6 * 3),
    ) {
        let mesh = Mesh::uniform(2, 2, Rect::UNIT).unwrap();
        let degs = WeakDegrees { interior: m, trace: m - 1 + trace_up, gamma: m };
        let basis = CellBasis::new(&mesh, cell, m).unwrap();
        let d = build_weak_divergence(&mesh, cell, &basis, degs, &TriangleRule::with_degree(2 * m + 2), &LineRule::with_degree(2 * m + 2)).unwrap();
        let ni = dim_p(m);
        let nt = degs.trace + 1;
        let v: Vec<f64> = coeffs[..2 * ni + 6 * nt].to_vec();
        let dv = &d * DVector::from_vec(v.clone());

        let cr = TriangleRule::with_degree(3 * m + 4);
        let er = LineRule::with_degree(3 * m + 4);
        let (pts, wts) = cr.mapped(&mesh.cell_vertices(cell));
        let normals = mesh.cell_normals(cell);
        for e in monomials(m) {
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for (p, w) in pts.iter().zip(&wts) {
                let (s, ds) = mono(e, *p);
                lhs += w * basis.eval_poly(dv.as_slice(), *p) * s;
                let wx = basis.eval_poly(&v[..ni], *p);
                let wy = basis.eval_poly(&v[ni..2 * ni], *p);
                rhs -= w * (wx * ds[0] + wy * ds[1]);
            }
            for (le, &edge) in mesh.cell_edges(cell).iter().enumerate() {
                let ends = mesh.edge_endpoints(edge);
                let len = mesh.edge_length(edge);
                let base = 2 * ni + le * 2 * nt;
                for (&t, &w) in er.points.iter().zip(&er.weights) {
                    let (s, _) = mono(e, edge_point(ends, t));
                    let bx = eval_edge_poly(&v[base..base + nt], len, t);
                    let by = eval_edge_poly(&v[base + nt..base + 2 * nt], len, t);
                    rhs += w * len * (bx * normals[le][0] + by * normals[le][1]) * s;
                }
            }
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn weak_gradient_commutes_with_projections() {
    let mesh = Mesh::uniform(4, 4, Rect::UNIT).unwrap();
    for (m, k) in [(1, 0), (1, 1), (2, 1), (2, 2)] {
        let e = commutativity_errors(&mesh, m, k, &trig_omega, &trig_omega_grad, &trig_q, &trig_q_grad).unwrap();
        assert!(e.velocity <= 1e-10, "m={m} k={k}: velocity {}", e.velocity);
        assert!(e.pressure <= 1e-10, "m={m} k={k}: pressure {}", e.pressure);
    }
}

/// Largest ratios `|grad v_i| / (|grad_w v| + S)` and `|grad_w v| / (|grad v_i| + S)`
/// over random fields, with `S` the stabilization seminorm.
fn equivalence_constants(n: usize, m: usize, k: usize, draws: usize) -> (f64, f64) {
    let space = WgSpace::new(Mesh::uniform(n, n, Rect::UNIT).unwrap(), SpaceConfig::new(m, k).unwrap(), None).unwrap();
    let mesh = space.mesh();
    let rule = TriangleRule::with_degree(2 * m);
    let mut rng = StdRng::seed_from_u64(5);
    let (mut c1, mut c2) = (0.0f64, 0.0f64);
    for _ in 0..draws {
        let v = random_velocity(&space, &mut rng);
        let mut broken = 0.0;
        for c in 0..mesh.num_cells() {
            let (pts, wts) = rule.mapped(&mesh.cell_vertices(c));
            for (p, w) in pts.iter().zip(&wts) {
                let (_, g) = space.eval_velocity_with_grad(&v, c, *p);
                broken += w * g.iter().flatten().map(|x| x * x).sum::<f64>();
            }
        }
        let weak = triple_norm_sq(&space, &v, 0.0, 2 * m + 2);
        let stab = triple_norm_sq(&space, &v, 1.0, 2 * m + 2) - weak;
        let (broken, weak, stab) = (broken.sqrt(), weak.sqrt(), stab.max(0.0).sqrt());
        c1 = c1.max(broken / (weak + stab));
        c2 = c2.max(weak / (broken + stab));
    }
    (c1, c2)
}

#[test]
fn norm_equivalence_constants_do_not_grow_under_refinement() {
    for (m, k) in [(1, 0), (2, 2)] {
        let coarse = equivalence_constants(4, m, k, 200);
        let fine = equivalence_constants(8, m, k, 200);
        for (a, b) in [(coarse.0, fine.0), (coarse.1, fine.1)] {
            assert!(a.is_finite() && b.is_finite() && a < 10.0 && b < 10.0, "m={m} k={k}: {coarse:?} {fine:?}");
            assert!(b < 1.5 * a, "m={m} k={k}: constant grew from {a} to {b}");
        }
    }
}
