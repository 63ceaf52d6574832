//! Static per-eigenstate indicators: participation ratio in the Fock basis,
//! single-site entanglement entropy and half-chain imbalance.
//!
//! With the total boson number fixed, the occupation of the complement of a
//! site determines the occupation of the site itself, so every single-site
//! reduced density matrix is diagonal in the occupation basis. Entropies are
//! therefore Shannon entropies of the site-occupation distribution.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::FockBasis;
use crate::error::{Error, Result};
use crate::spectrum::SpectralData;

const NORM_TOL: f64 = 1e-10;

fn norm_sq(amplitudes: &[f64]) -> f64 {
    amplitudes.iter().map(|c| c * c).sum()
}

fn check_normalized(amplitudes: &[f64]) -> Result<()> {
    let n = norm_sq(amplitudes);
    if (n - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized(n));
    }
    Ok(())
}

fn check_len(amplitudes: &[f64], basis: &FockBasis) -> Result<()> {
    if amplitudes.len() != basis.dim() {
        return Err(Error::InvalidArgument(format!(
            "state has {} components, basis dimension is {}",
            amplitudes.len(),
            basis.dim()
        )));
    }
    Ok(())
}

/// `1 / sum_k |c_k|^4`.
pub fn participation_ratio(amplitudes: &[f64]) -> Result<f64> {
    check_normalized(amplitudes)?;
    Ok(1.0 / amplitudes.iter().map(|c| (c * c) * (c * c)).sum::<f64>())
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// `p[s][n]`: probability of finding `n` bosons on site `s` (0-based), given
/// Fock-basis probabilities.
pub fn site_occupation_distributions(probabilities: &[f64], basis: &FockBasis) -> Vec<Vec<f64>> {
    let m = basis.n_sites();
    let n = basis.n_bosons();
    let mut table = vec![vec![0.0; n + 1]; m];
    for (p, occ) in probabilities.iter().zip(basis.iter()) {
        for (row, &k) in table.iter_mut().zip(occ) {
            row[k as usize] += p;
        }
    }
    table
}

/// Entanglement entropy of every site from Fock-basis probabilities `|c_k|^2`.
pub fn site_entropies_from_probabilities(probabilities: &[f64], basis: &FockBasis) -> Vec<f64> {
    site_occupation_distributions(probabilities, basis).iter().map(|p| shannon_entropy(p)).collect()
}

/// `S^(i) = -Tr rho_i ln rho_i` for site `site` in `1..=M`.
pub fn single_site_entropy(amplitudes: &[f64], basis: &FockBasis, site: usize) -> Result<f64> {
    check_len(amplitudes, basis)?;
    check_normalized(amplitudes)?;
    if site == 0 || site > basis.n_sites() {
        return Err(Error::SiteOutOfRange { site, n_sites: basis.n_sites() });
    }
    let mut p = vec![0.0; basis.n_bosons() + 1];
    for (c, occ) in amplitudes.iter().zip(basis.iter()) {
        p[occ[site - 1] as usize] += c * c;
    }
    Ok(shannon_entropy(&p))
}

/// Entropies of all sites, in site order.
pub fn site_entropies(amplitudes: &[f64], basis: &FockBasis) -> Result<Vec<f64>> {
    check_len(amplitudes, basis)?;
    check_normalized(amplitudes)?;
    let probs: Vec<f64> = amplitudes.iter().map(|c| c * c).collect();
    Ok(site_entropies_from_probabilities(&probs, basis))
}

/// Typical site-averaged single-site entropy of chaotic states with fixed
/// particle number, with subsystem fraction `f = 1/M` and density `n = N/M`.
pub fn page_value(n_bosons: usize, n_sites: usize) -> f64 {
    let v = n_sites as f64;
    let f = 1.0 / v;
    let n = n_bosons as f64 / v;
    let xlnx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    v * f * (xlnx(n + 1.0) - xlnx(n)) + 0.5 * (f + (1.0 - f).ln())
}

/// `(n_l - n_r) / N` from Fock-basis probabilities; the left half is
/// sites `1..=ceil(M/2)`.
pub fn imbalance_from_probabilities(probabilities: &[f64], basis: &FockBasis) -> f64 {
    let left = basis.spec().left_sites();
    let n = basis.n_bosons() as f64;
    probabilities
        .iter()
        .zip(basis.iter())
        .map(|(p, occ)| {
            let nl: u32 = occ[..left].iter().sum();
            let nr: u32 = occ[left..].iter().sum();
            p * (nl as f64 - nr as f64)
        })
        .sum::<f64>()
        / n
}

pub fn half_chain_imbalance(amplitudes: &[f64], basis: &FockBasis) -> Result<f64> {
    check_len(amplitudes, basis)?;
    check_normalized(amplitudes)?;
    let probs: Vec<f64> = amplitudes.iter().map(|c| c * c).collect();
    Ok(imbalance_from_probabilities(&probs, basis))
}

/// Static imbalance of a Fock state.
pub fn fock_imbalance(occupations: &[u32], left_sites: usize) -> f64 {
    let nl: u32 = occupations[..left_sites].iter().sum();
    let nr: u32 = occupations[left_sites..].iter().sum();
    let n = (nl + nr) as f64;
    (nl as f64 - nr as f64) / n
}

/// Index range of the central `window` fraction of `len` states.
pub fn central_window(len: usize, window: f64) -> Result<std::ops::Range<usize>> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::InvalidArgument(format!("window must lie in (0, 1], got {window}")));
    }
    let keep = ((window * len as f64).round() as usize).min(len);
    if keep == 0 {
        return Err(Error::EmptyWindow);
    }
    let start = (len - keep) / 2;
    Ok(start..start + keep)
}

/// Mean over the states whose spectral index lies in the central `window`
/// fraction. Values must be ordered by eigenvalue.
pub fn central_window_average(values: &[f64], window: f64) -> Result<f64> {
    let r = central_window(values.len(), window)?;
    let n = r.len() as f64;
    Ok(values[r].iter().sum::<f64>() / n)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticipationResult {
    pub per_state_pr: Vec<f64>,
    /// `D / 3`.
    pub goe_reference: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyResult {
    /// Row `k` holds `S^(1..M)` of eigenstate `k`, in nats.
    pub per_site_entropy: Vec<Vec<f64>>,
    pub site_average: Vec<f64>,
    pub page_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImbalanceResult {
    pub per_state_imbalance: Vec<f64>,
    pub left_sites: usize,
}

/// All static indicators of every eigenstate.
#[derive(Debug, Clone)]
pub struct EigenstateDiagnostics {
    pub energies: Vec<f64>,
    pub normalized_energies: Vec<f64>,
    pub participation: ParticipationResult,
    pub entropy: EntropyResult,
    pub imbalance: ImbalanceResult,
}

struct PerState {
    pr: f64,
    entropies: Vec<f64>,
    imbalance: f64,
}

impl EigenstateDiagnostics {
    pub fn compute(spectral: &SpectralData, basis: &FockBasis) -> Result<Self> {
        let v = spectral.vectors()?;
        if v.nrows() != basis.dim() {
            return Err(Error::InvalidArgument("basis does not match spectral data".into()));
        }
        let rows: Vec<Result<PerState>> = (0..v.ncols())
            .into_par_iter()
            .map(|m| {
                let col = v.column(m);
                let c = col.as_slice();
                check_normalized(c)?;
                let probs: Vec<f64> = c.iter().map(|x| x * x).collect();
                Ok(PerState {
                    pr: 1.0 / probs.iter().map(|p| p * p).sum::<f64>(),
                    entropies: site_entropies_from_probabilities(&probs, basis),
                    imbalance: imbalance_from_probabilities(&probs, basis),
                })
            })
            .collect();
        let mut per_state_pr = Vec::with_capacity(rows.len());
        let mut per_site_entropy = Vec::with_capacity(rows.len());
        let mut site_average = Vec::with_capacity(rows.len());
        let mut per_state_imbalance = Vec::with_capacity(rows.len());
        for r in rows {
            let r = r?;
            per_state_pr.push(r.pr);
            site_average.push(r.entropies.iter().sum::<f64>() / r.entropies.len() as f64);
            per_site_entropy.push(r.entropies);
            per_state_imbalance.push(r.imbalance);
        }
        let spec = basis.spec();
        Ok(EigenstateDiagnostics {
            energies: spectral.eigenvalues.clone(),
            normalized_energies: spectral.normalized_energies()?,
            participation: ParticipationResult { per_state_pr, goe_reference: basis.dim() as f64 / 3.0 },
            entropy: EntropyResult {
                per_site_entropy,
                site_average,
                page_value: page_value(spec.n_bosons, spec.n_sites),
            },
            imbalance: ImbalanceResult { per_state_imbalance, left_sites: spec.left_sites() },
        })
    }

    /// Central-window `PR / D_GOE`.
    pub fn scaled_participation(&self, window: f64) -> Result<f64> {
        Ok(central_window_average(&self.participation.per_state_pr, window)? / self.participation.goe_reference)
    }

    /// Central-window site-averaged entropy over the Page value.
    pub fn scaled_entropy(&self, window: f64) -> Result<f64> {
        Ok(central_window_average(&self.entropy.site_average, window)? / self.entropy.page_value)
    }

    /// Per-state CSV:
    /// `index,energy,normalized_energy,PR,S_site_1..S_site_M,S_avg,imbalance`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let m = self.entropy.per_site_entropy.first().map_or(0, Vec::len);
        write!(w, "index,energy,normalized_energy,PR")?;
        for s in 1..=m {
            write!(w, ",S_site_{s}")?;
        }
        writeln!(w, ",S_avg,imbalance")?;
        for k in 0..self.energies.len() {
            write!(
                w,
                "{k},{:.15e},{:.15e},{:.15e}",
                self.energies[k], self.normalized_energies[k], self.participation.per_state_pr[k]
            )?;
            for s in &self.entropy.per_site_entropy[k] {
                write!(w, ",{s:.15e}")?;
            }
            writeln!(w, ",{:.15e},{:.15e}", self.entropy.site_average[k], self.imbalance.per_state_imbalance[k])?;
        }
        Ok(())
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }
}
