//! Tilted Bose-Hubbard Hamiltonian on an open chain:
//!
//! `H = -J sum_i (b_i^+ b_{i+1} + h.c.) + sum_i [U/2 n_i (n_i - 1) + D i n_i]`,
//! with sites labelled `i = 1..M` in the tilt term.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{FockBasis, FockState};
use crate::error::{Error, Result};

/// Hopping `j`, on-site interaction `u` and tilt `d`, all in units where J = 1
/// unless stated otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub j: f64,
    pub u: f64,
    pub d: f64,
}

impl ModelParams {
    pub fn new(j: f64, u: f64, d: f64) -> Result<Self> {
        let p = ModelParams { j, u, d };
        p.validate()?;
        Ok(p)
    }

    /// Parameters in units of J = 1.
    pub fn with_unit_hopping(u: f64, d: f64) -> Result<Self> {
        Self::new(1.0, u, d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j.is_finite() && self.j > 0.0) {
            return Err(Error::InvalidParams(format!("hopping J must be > 0, got {}", self.j)));
        }
        if !(self.u.is_finite() && self.u >= 0.0) {
            return Err(Error::InvalidParams(format!("interaction U must be >= 0, got {}", self.u)));
        }
        if !(self.d.is_finite() && self.d >= 0.0) {
            return Err(Error::InvalidParams(format!("tilt D must be >= 0, got {}", self.d)));
        }
        Ok(())
    }
}

/// Diagonal matrix element of a Fock state. Equals `<n|H|n>` since hopping
/// has no diagonal part in the occupation basis.
pub fn diagonal_energy(occupations: &[u32], params: &ModelParams) -> f64 {
    occupations
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let n = n as f64;
            0.5 * params.u * n * (n - 1.0) + params.d * (i + 1) as f64 * n
        })
        .sum()
}

pub fn state_energy(state: &FockState, params: &ModelParams) -> f64 {
    diagonal_energy(state.occupations(), params)
}

/// Real symmetric sparse matrix; only the strict upper triangle of the
/// off-diagonal part is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix {
    pub dimension: usize,
    pub diagonal: Vec<f64>,
    /// `(row, col, value)` with `row < col`, sorted by row then column.
    pub off_diagonal: Vec<(usize, usize, f64)>,
}

impl HamiltonianMatrix {
    pub fn build(basis: &FockBasis, params: &ModelParams) -> Self {
        let m = basis.n_sites();
        let dim = basis.dim();
        let rows: Vec<(f64, Vec<(usize, usize, f64)>)> = (0..dim)
            .into_par_iter()
            .map(|row| {
                let occ = basis.occupations(row);
                let diag = diagonal_energy(occ, params);
                let mut hops = Vec::new();
                let mut target = occ.to_vec();
                // Moving a boson rightwards lowers the state in decreasing lex
                // order, so it always lands on a larger index: these are
                // exactly the upper-triangle entries of this row.
                for i in 0..m.saturating_sub(1) {
                    let (from, to) = (occ[i], occ[i + 1]);
                    if from == 0 {
                        continue;
                    }
                    target[i] -= 1;
                    target[i + 1] += 1;
                    let col = basis.rank_unchecked(&target);
                    target[i] += 1;
                    target[i + 1] -= 1;
                    debug_assert!(col > row);
                    let amp = (from as u64) * (to as u64 + 1);
                    hops.push((row, col, -params.j * (amp as f64).sqrt()));
                }
                hops.sort_by_key(|&(_, c, _)| c);
                (diag, hops)
            })
            .collect();
        let mut diagonal = Vec::with_capacity(dim);
        let mut off_diagonal = Vec::with_capacity(dim * m.saturating_sub(1));
        for (d, hops) in rows {
            diagonal.push(d);
            off_diagonal.extend(hops);
        }
        HamiltonianMatrix { dimension: dim, diagonal, off_diagonal }
    }

    pub fn dim(&self) -> usize {
        self.dimension
    }

    pub fn trace(&self) -> f64 {
        self.diagonal.iter().sum()
    }

    /// `trace(H^2)` = sum of squared diagonal + twice the squared upper triangle.
    pub fn trace_of_square(&self) -> f64 {
        let diag: f64 = self.diagonal.iter().map(|x| x * x).sum();
        let off: f64 = self.off_diagonal.iter().map(|&(_, _, v)| v * v).sum();
        diag + 2.0 * off
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dimension;
        let mut h = DMatrix::zeros(n, n);
        self.fill_dense(h.as_mut_slice());
        h
    }

    /// Writes the full symmetric matrix into a column-major `n*n` buffer.
    pub(crate) fn fill_dense(&self, buf: &mut [f64]) {
        let n = self.dimension;
        buf.fill(0.0);
        for (i, &d) in self.diagonal.iter().enumerate() {
            buf[i * n + i] = d;
        }
        for &(r, c, v) in &self.off_diagonal {
            buf[c * n + r] = v;
            buf[r * n + c] = v;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.diagonal.iter().zip(x).map(|(d, x)| d * x).collect();
        for &(r, c, v) in &self.off_diagonal {
            y[r] += v * x[c];
            y[c] += v * x[r];
        }
        y
    }

    /// Three-column text export `row col value` of the stored entries
    /// (diagonal plus upper triangle), zero-based indices.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# row col value (upper triangle, symmetric, dim={})", self.dimension)?;
        let mut off = self.off_diagonal.iter().peekable();
        for (i, &d) in self.diagonal.iter().enumerate() {
            writeln!(w, "{i} {i} {d:.17e}")?;
            while let Some(&&(r, c, v)) = off.peek() {
                if r != i {
                    break;
                }
                writeln!(w, "{r} {c} {v:.17e}")?;
                off.next();
            }
        }
        Ok(())
    }

    pub fn export_triplets(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_triplets(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }
}
