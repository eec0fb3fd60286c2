//! Per-cell elimination of `(u_i, p_i)` leaving a system in the trace
//! unknowns and the mean-value multiplier.

use faer::sparse::Triplet;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{LinearSystem, LocalSystem};
use crate::dofspace::{Block, DofMap};
use crate::error::{Error, Result};

/// Local blocks whose pivot ratio exceeds this are reported as singular.
pub const MAX_PIVOT_RATIO: f64 = 1e14;

#[derive(Clone, Debug)]
struct CellRecovery {
    interior: Vec<usize>,
    coupled: Vec<usize>,
    /// `K_II^{-1} K_IG` restricted to free coupled dofs.
    x: DMatrix<f64>,
    /// `K_II^{-1} f_I` with fixed-dof contributions removed.
    y: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct CondensedSystem {
    pub system: LinearSystem,
    /// Condensed index to global index.
    pub free: Vec<usize>,
    /// Largest `max|U_ii| / min|U_ii|` over the local interior blocks.
    pub max_pivot_ratio: f64,
    recovery: Vec<CellRecovery>,
}

impl CondensedSystem {
    /// Full global vector (all dofs plus multiplier) from a condensed solution.
    pub fn recover(&self, x: &[f64], fixed_values: &[f64]) -> Vec<f64> {
        let mut out = fixed_values.to_vec();
        for (r, &g) in self.free.iter().enumerate() {
            out[g] = x[r];
        }
        let parts: Vec<(Vec<usize>, DVector<f64>)> = self
            .recovery
            .par_iter()
            .map(|rec| {
                let xg = DVector::from_iterator(rec.coupled.len(), rec.coupled.iter().map(|&c| x[c]));
                (rec.interior.clone(), &rec.y - &rec.x * xg)
            })
            .collect();
        for (idx, vals) in parts {
            for (g, v) in idx.iter().zip(vals.iter()) {
                out[*g] = *v;
            }
        }
        out
    }
}

/// Condenses the element systems. `fixed_values` has global length and
/// holds the Dirichlet trace data.
pub fn static_condense(
    locals: &[LocalSystem],
    dofs: &DofMap,
    n_interior: usize,
    fixed_values: &[f64],
) -> Result<CondensedSystem> {
    let dim_full = dofs.total() + 1;
    let mut index = vec![usize::MAX; dim_full];
    let mut free = Vec::new();
    for g in dofs
        .block_range(Block::VelocityTrace)
        .chain(dofs.block_range(Block::PressureTrace))
        .chain(std::iter::once(dofs.multiplier()))
    {
        if !dofs.is_fixed(g) {
            index[g] = free.len();
            free.push(g);
        }
    }

    type CellOut = (Vec<Triplet<usize, usize, f64>>, Vec<(usize, f64)>, CellRecovery, f64);
    let results: Vec<Result<CellOut>> = locals
        .par_iter()
        .enumerate()
        .map(|(cell, l)| {
            let n = l.dofs.len();
            let gfree: Vec<usize> = (n_interior..n).filter(|&i| !dofs.is_fixed(l.dofs[i])).collect();
            let gfix: Vec<usize> = (n_interior..n).filter(|&i| dofs.is_fixed(l.dofs[i])).collect();
            let ni = n_interior;
            let nf = gfree.len();
            let kii = l.mat.view((0, 0), (ni, ni)).clone_owned();
            let mut kig = DMatrix::zeros(ni, nf);
            let mut kgi = DMatrix::zeros(nf, ni);
            let mut kgg = DMatrix::zeros(nf, nf);
            let mut fi = l.rhs.rows(0, ni).clone_owned();
            let mut fg = DVector::zeros(nf);
            for (a, &la) in gfree.iter().enumerate() {
                fg[a] = l.rhs[la];
                for i in 0..ni {
                    kig[(i, a)] = l.mat[(i, la)];
                    kgi[(a, i)] = l.mat[(la, i)];
                }
                for (b, &lb) in gfree.iter().enumerate() {
                    kgg[(a, b)] = l.mat[(la, lb)];
                }
            }
            for &lf in &gfix {
                let g = fixed_values[l.dofs[lf]];
                if g == 0.0 {
                    continue;
                }
                for i in 0..ni {
                    fi[i] -= l.mat[(i, lf)] * g;
                }
                for (a, &la) in gfree.iter().enumerate() {
                    fg[a] -= l.mat[(la, lf)] * g;
                }
            }

            let lu = kii.lu();
            let diag = lu.u().diagonal();
            let dmax = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let dmin = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            let ratio = if dmin > 0.0 { dmax / dmin } else { f64::INFINITY };
            if !(ratio.is_finite() && ratio < MAX_PIVOT_RATIO) {
                return Err(Error::SingularLocalBlock { cell, condition: ratio });
            }
            let x = lu.solve(&kig).ok_or(Error::SingularLocalBlock { cell, condition: ratio })?;
            let y = lu.solve(&fi).ok_or(Error::SingularLocalBlock { cell, condition: ratio })?;
            let s = kgg - &kgi * &x;
            let g = fg - &kgi * &y;

            let coupled: Vec<usize> = gfree.iter().map(|&la| index[l.dofs[la]]).collect();
            let mut trip = Vec::with_capacity(nf * nf);
            for b in 0..nf {
                for a in 0..nf {
                    trip.push(Triplet::new(coupled[a], coupled[b], s[(a, b)]));
                }
            }
            let rhs: Vec<(usize, f64)> = coupled.iter().zip(g.iter()).map(|(&c, &v)| (c, v)).collect();
            let rec = CellRecovery {
                interior: l.dofs[..ni].to_vec(),
                coupled,
                x,
                y,
            };
            Ok((trip, rhs, rec, ratio))
        })
        .collect();

    let mut system = LinearSystem::new(free.len());
    let mut recovery = Vec::with_capacity(locals.len());
    let mut max_pivot_ratio: f64 = 0.0;
    for r in results {
        let (trip, rhs, rec, ratio) = r?;
        system.triplets.extend(trip);
        for (i, v) in rhs {
            system.rhs[i] += v;
        }
        recovery.push(rec);
        max_pivot_ratio = max_pivot_ratio.max(ratio);
    }
    Ok(CondensedSystem {
        system,
        free,
        max_pivot_ratio,
        recovery,
    })
}
