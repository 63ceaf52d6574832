//! Full dense eigendecomposition and unfolding-free level statistics.

use std::io::Write;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianMatrix, ModelParams};
use crate::linalg;

/// Mean gap ratio of the GOE used throughout as the chaotic reference.
pub const R_GOE: f64 = 0.535;
/// Alternative GOE value quoted alongside the finite-size scaling data.
pub const R_GOE_ALT: f64 = 0.536;
/// Wigner-like surmise `4 - 2 sqrt(3)`.
pub const R_GOE_SURMISE: f64 = 0.5307;
/// Poisson value `2 ln 2 - 1`, rounded.
pub const R_POISSON: f64 = 0.386;

pub const DEFAULT_EDGE_DISCARD: f64 = 0.1;

#[derive(Debug, Clone, Copy)]
pub struct DiagonalizeOptions {
    pub with_vectors: bool,
    /// Largest dimension accepted in eigenvalues-only mode.
    pub max_dim_values: usize,
    /// Largest dimension accepted when eigenvectors are requested.
    pub max_dim_vectors: usize,
}

impl Default for DiagonalizeOptions {
    fn default() -> Self {
        DiagonalizeOptions { with_vectors: true, max_dim_values: 100_000, max_dim_vectors: 20_000 }
    }
}

impl DiagonalizeOptions {
    pub fn values_only() -> Self {
        DiagonalizeOptions { with_vectors: false, ..Default::default() }
    }
}

/// Eigenvalues in ascending order, optionally with the eigenvector matrix
/// (column `m` is `|E_m>` in the Fock basis).
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Option<DMatrix<f64>>,
    pub params: ModelParams,
    pub spec: BasisSpec,
}

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vectors(&self) -> Result<&DMatrix<f64>> {
        self.eigenvectors.as_ref().ok_or(Error::MissingEigenvectors)
    }

    pub fn normalized_energies(&self) -> Result<Vec<f64>> {
        normalized_energies(&self.eigenvalues)
    }

    /// `max |V^T V - I|`.
    pub fn orthonormality_error(&self) -> Result<f64> {
        let v = self.vectors()?;
        let n = v.ncols();
        let mut g = vec![0.0; n * n];
        unsafe {
            blas::dgemm(
                b'T',
                b'N',
                n as i32,
                n as i32,
                v.nrows() as i32,
                1.0,
                v.as_slice(),
                v.nrows() as i32,
                v.as_slice(),
                v.nrows() as i32,
                0.0,
                &mut g,
                n as i32,
            );
        }
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[j * n + i] - target).abs());
            }
        }
        Ok(worst)
    }

    /// `max_m |H v_m - E_m v_m|_inf / max |E|`.
    pub fn residual(&self, h: &HamiltonianMatrix) -> Result<f64> {
        let v = self.vectors()?;
        let scale = self.eigenvalues.iter().fold(0.0f64, |a, e| a.max(e.abs())).max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for (m, col) in v.column_iter().enumerate() {
            let hv = h.matvec(col.as_slice());
            let e = self.eigenvalues[m];
            for (a, b) in hv.iter().zip(col.iter()) {
                worst = worst.max((a - e * b).abs());
            }
        }
        Ok(worst / scale)
    }

    /// CSV with columns `index,energy,normalized_energy`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let eps = self.normalized_energies()?;
        let io = |e| Error::io("<spectrum csv>", e);
        writeln!(w, "index,energy,normalized_energy").map_err(io)?;
        for (i, (e, x)) in self.eigenvalues.iter().zip(&eps).enumerate() {
            writeln!(w, "{i},{e:.15e},{x:.15e}").map_err(io)?;
        }
        Ok(())
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

pub fn diagonalize(
    h: &HamiltonianMatrix,
    params: ModelParams,
    spec: BasisSpec,
    opts: DiagonalizeOptions,
) -> Result<SpectralData> {
    let n = h.dim();
    let limit = if opts.with_vectors { opts.max_dim_vectors } else { opts.max_dim_values };
    if n > limit {
        return Err(Error::DimensionTooLarge { dimension: n, limit });
    }
    let mut buf = vec![0.0; n * n];
    h.fill_dense(&mut buf);
    let eigenvalues = linalg::symmetric_eigen(&mut buf, n, opts.with_vectors)?;
    let eigenvectors = if opts.with_vectors { Some(DMatrix::from_vec(n, n, buf)) } else { None };
    let data = SpectralData { eigenvalues, eigenvectors, params, spec };
    verify(h, &data)?;
    Ok(data)
}

/// Sum rules `sum E = tr H`, `sum E^2 = tr H^2`, plus the eigenvector
/// residual when vectors are present. A miscompiled or misbehaving LAPACK
/// shows up here rather than downstream.
fn verify(h: &HamiltonianMatrix, data: &SpectralData) -> Result<()> {
    let n = data.dim();
    if n == 0 {
        return Ok(());
    }
    let tr2 = h.trace_of_square();
    let scale = (tr2 / n as f64).sqrt().max(f64::MIN_POSITIVE);
    let sum: f64 = data.eigenvalues.iter().sum();
    let sum2: f64 = data.eigenvalues.iter().map(|e| e * e).sum();
    if (sum - h.trace()).abs() > 1e-9 * n as f64 * scale || (sum2 - tr2).abs() > 1e-9 * tr2.max(f64::MIN_POSITIVE) {
        return Err(Error::InaccurateEigensolve(format!(
            "eigenvalues violate trace sum rules (sum {sum} vs {}, sum sq {sum2} vs {tr2}); check the LAPACK backend",
            h.trace()
        )));
    }
    if data.eigenvectors.is_some() {
        let res = data.residual(h)?;
        if !(res < 1e-8) {
            return Err(Error::InaccurateEigensolve(format!(
                "eigenvector residual {res:e} exceeds 1e-8; check the LAPACK backend"
            )));
        }
    }
    Ok(())
}

/// Eigenvalues of a dense symmetric matrix given column-major.
pub fn dense_eigenvalues(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = matrix.nrows();
    let mut buf = matrix.as_slice().to_vec();
    let w = linalg::symmetric_eigen(&mut buf, n, false)?;
    verify_dense(matrix, &w, None)?;
    Ok(w)
}

/// Dense symmetric eigenpairs, vectors as columns.
pub fn dense_eigen(matrix: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = matrix.nrows();
    let mut buf = matrix.as_slice().to_vec();
    let w = linalg::symmetric_eigen(&mut buf, n, true)?;
    let v = DMatrix::from_vec(n, n, buf);
    verify_dense(matrix, &w, Some(&v))?;
    Ok((w, v))
}

/// Dense counterpart of the sum-rule and residual checks in `diagonalize`.
fn verify_dense(a: &DMatrix<f64>, w: &[f64], v: Option<&DMatrix<f64>>) -> Result<()> {
    let n = w.len();
    if n == 0 {
        return Ok(());
    }
    let tr = a.trace();
    let tr2 = a.iter().map(|x| x * x).sum::<f64>();
    let scale = (tr2 / n as f64).sqrt().max(f64::MIN_POSITIVE);
    let sum: f64 = w.iter().sum();
    let sum2: f64 = w.iter().map(|e| e * e).sum();
    if (sum - tr).abs() > 1e-9 * n as f64 * scale || (sum2 - tr2).abs() > 1e-9 * tr2.max(f64::MIN_POSITIVE) {
        return Err(Error::InaccurateEigensolve(format!(
            "eigenvalues violate trace sum rules (sum {sum} vs {tr}, sum sq {sum2} vs {tr2}); check the LAPACK backend"
        )));
    }
    if let Some(v) = v {
        let mut av = vec![0.0; n * n];
        linalg::matmul(a.as_slice(), v.as_slice(), &mut av, n, n, n);
        let emax = w.iter().fold(0.0f64, |m, e| m.max(e.abs())).max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for m in 0..n {
            for i in 0..n {
                worst = worst.max((av[m * n + i] - w[m] * v[(i, m)]).abs());
            }
        }
        if !(worst / emax < 1e-8) {
            return Err(Error::InaccurateEigensolve(format!(
                "eigenvector residual {:e} exceeds 1e-8; check the LAPACK backend",
                worst / emax
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRatioStats {
    pub mean_r: f64,
    pub n_gaps_used: usize,
    pub edge_fraction_discarded: f64,
    /// Ratios whose gaps fell below `1e-12` of the spectral span; counted as 0.
    pub n_degenerate: usize,
}

/// Mean of `min(s_n, s_{n-1}) / max(s_n, s_{n-1})` over the levels left after
/// dropping `edge_discard` of the spectrum at each end.
pub fn mean_gap_ratio(eigenvalues: &[f64], edge_discard: f64) -> Result<GapRatioStats> {
    if !(0.0..0.5).contains(&edge_discard) {
        return Err(Error::InvalidArgument(format!("edge_discard must lie in [0, 0.5), got {edge_discard}")));
    }
    let n = eigenvalues.len();
    if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("eigenvalues must be sorted ascending".into()));
    }
    let cut = (edge_discard * n as f64).floor() as usize;
    let kept = &eigenvalues[cut..n - cut.min(n)];
    if kept.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 levels after discarding edges, have {}",
            kept.len()
        )));
    }
    let span = eigenvalues[n - 1] - eigenvalues[0];
    let tol = 1e-12 * span;
    let gaps: Vec<f64> = kept.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sum = 0.0;
    let mut degenerate = 0;
    for pair in gaps.windows(2) {
        let (lo, hi) = if pair[0] < pair[1] { (pair[0], pair[1]) } else { (pair[1], pair[0]) };
        if lo <= tol {
            degenerate += 1;
        } else {
            sum += lo / hi;
        }
    }
    let used = gaps.len() - 1;
    if degenerate > 0 {
        warn!("degenerate spectrum: {degenerate} of {used} gap ratios involve a vanishing gap");
    }
    Ok(GapRatioStats {
        mean_r: sum / used as f64,
        n_gaps_used: used,
        edge_fraction_discarded: edge_discard,
        n_degenerate: degenerate,
    })
}

/// Affine map of the spectrum onto `[0, 1]`.
pub fn normalized_energies(eigenvalues: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = eigenvalues
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if eigenvalues.len() < 2 || hi <= lo {
        return Err(Error::DegenerateSpectrum("E_max == E_min".into()));
    }
    let width = hi - lo;
    Ok(eigenvalues.iter().map(|e| (e - lo) / width).collect())
}

/// `|<r> - R_GOE|`.
pub fn chaos_distance(stats: &GapRatioStats) -> f64 {
    chaos_distance_from(stats, R_GOE)
}

pub fn chaos_distance_from(stats: &GapRatioStats, reference: f64) -> f64 {
    (stats.mean_r - reference).abs()
}
