//! Ensembles of initial Fock product states for the quench protocols.
//!
//! Two protocols: occupation-capped states whose mean energy lies in a window
//! around the centre of a reference spectrum, and maximally imbalanced states
//! with every boson in the right half of the chain.

use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{FockBasis, FockState};
use crate::diagnostics::fock_imbalance;
use crate::error::{Error, Result};
use crate::hamiltonian::{diagonal_energy, HamiltonianMatrix, ModelParams};

pub const RNG_NAME: &str = "ChaCha8";

/// Mean and standard deviation of the spectrum, `tr H / D` and
/// `sqrt(tr H^2 / D - E_c^2)`, without diagonalizing.
pub fn spectral_moments(h: &HamiltonianMatrix) -> (f64, f64) {
    let d = h.dim() as f64;
    let mean = h.trace() / d;
    let var = (h.trace_of_square() / d - mean * mean).max(0.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyWindowProtocol {
    #[serde(default = "default_reference")]
    pub reference_params: ModelParams,
    /// Half-width in units of the spectral standard deviation.
    #[serde(default = "default_halfwidth")]
    pub window_halfwidth: f64,
    #[serde(default = "default_cap")]
    pub occupation_cap: u32,
    pub sample_count: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_reference() -> ModelParams {
    ModelParams { j: 1.0, u: 0.5, d: 0.8 }
}

fn default_halfwidth() -> f64 {
    0.4
}

fn default_cap() -> u32 {
    3
}

impl EnergyWindowProtocol {
    pub fn new(sample_count: usize, rng_seed: u64) -> Self {
        EnergyWindowProtocol {
            reference_params: default_reference(),
            window_halfwidth: default_halfwidth(),
            occupation_cap: default_cap(),
            sample_count,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.reference_params.validate()?;
        if !(self.window_halfwidth > 0.0) {
            return Err(Error::InvalidArgument("window_halfwidth must be > 0".into()));
        }
        if self.occupation_cap < 1 || self.sample_count < 1 {
            return Err(Error::InvalidArgument("occupation_cap and sample_count must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImbalanceProtocol {
    #[serde(default = "default_cap")]
    pub occupation_cap: u32,
    /// Seeded uniform subsample size; all qualifying states when `None`.
    #[serde(default)]
    pub max_states: Option<usize>,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for ImbalanceProtocol {
    fn default() -> Self {
        ImbalanceProtocol { occupation_cap: default_cap(), max_states: None, rng_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtocolRecord {
    EnergyWindow { protocol: EnergyWindowProtocol, center: f64, std_dev: f64, lower: f64, upper: f64 },
    Imbalance { protocol: ImbalanceProtocol },
}

/// A selected ensemble with everything needed to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSet {
    pub n_bosons: usize,
    pub n_sites: usize,
    pub states: Vec<FockState>,
    pub basis_indices: Vec<usize>,
    /// Diagonal energies under the protocol's reference parameters (energy
    /// window) or under J=1, U=D=0 (imbalance protocol, all zero).
    pub diagonal_energies: Vec<f64>,
    pub candidate_count: usize,
    pub sampling: String,
    pub rng: String,
    pub seed: u64,
    pub protocol: ProtocolRecord,
}

impl StateSet {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

fn subsample(candidates: &[usize], k: usize, seed: u64) -> Vec<usize> {
    if k >= candidates.len() {
        return candidates.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, candidates.len(), k).into_iter().map(|i| candidates[i]).collect();
    picked.sort_unstable();
    picked
}

/// Window bounds `[E_c - w dE, E_c + w dE]` for the protocol's reference
/// Hamiltonian, returned with `(E_c, dE)`.
pub fn energy_window(basis: &FockBasis, protocol: &EnergyWindowProtocol) -> (f64, f64, f64, f64) {
    let h = HamiltonianMatrix::build(basis, &protocol.reference_params);
    let (center, sd) = spectral_moments(&h);
    let half = protocol.window_halfwidth * sd;
    (center, sd, center - half, center + half)
}

/// Basis indices of all capped states inside the energy window.
pub fn energy_window_candidates(basis: &FockBasis, protocol: &EnergyWindowProtocol) -> Vec<usize> {
    let (_, _, lo, hi) = energy_window(basis, protocol);
    basis
        .iter()
        .enumerate()
        .filter(|(_, occ)| occ.iter().all(|&n| n <= protocol.occupation_cap))
        .filter(|(_, occ)| {
            let e = diagonal_energy(occ, &protocol.reference_params);
            e >= lo && e <= hi
        })
        .map(|(k, _)| k)
        .collect()
}

/// Seeded uniform sample without replacement from the energy-window
/// candidates, returned in basis order.
pub fn sample_energy_window(basis: &FockBasis, protocol: &EnergyWindowProtocol) -> Result<StateSet> {
    protocol.validate()?;
    let (center, std_dev, lower, upper) = energy_window(basis, protocol);
    let candidates = energy_window_candidates(basis, protocol);
    if candidates.len() < protocol.sample_count {
        return Err(Error::InsufficientCandidates {
            available: candidates.len(),
            requested: protocol.sample_count,
        });
    }
    let picked = subsample(&candidates, protocol.sample_count, protocol.rng_seed);
    let states: Vec<FockState> = picked.iter().map(|&k| basis.state(k)).collect();
    let diagonal_energies = states.iter().map(|s| diagonal_energy(s.occupations(), &protocol.reference_params)).collect();
    Ok(StateSet {
        n_bosons: basis.n_bosons(),
        n_sites: basis.n_sites(),
        states,
        basis_indices: picked,
        diagonal_energies,
        candidate_count: candidates.len(),
        sampling: "uniform without replacement".into(),
        rng: RNG_NAME.into(),
        seed: protocol.rng_seed,
        protocol: ProtocolRecord::EnergyWindow { protocol: *protocol, center, std_dev, lower, upper },
    })
}

/// States with no boson on sites `1..=ceil(M/2)` and at most `cap` per site.
pub fn maximally_imbalanced_states(basis: &FockBasis, protocol: &ImbalanceProtocol) -> Result<StateSet> {
    let left = basis.spec().left_sites();
    let candidates: Vec<usize> = basis
        .iter()
        .enumerate()
        .filter(|(_, occ)| occ[..left].iter().all(|&n| n == 0) && occ.iter().all(|&n| n <= protocol.occupation_cap))
        .map(|(k, _)| k)
        .collect();
    let picked = match protocol.max_states {
        Some(k) => subsample(&candidates, k, protocol.rng_seed),
        None => candidates.clone(),
    };
    let states: Vec<FockState> = picked.iter().map(|&k| basis.state(k)).collect();
    debug_assert!(states.iter().all(|s| fock_imbalance(s.occupations(), left) == -1.0));
    let zero = ModelParams { j: 1.0, u: 0.0, d: 0.0 };
    let diagonal_energies = states.iter().map(|s| diagonal_energy(s.occupations(), &zero)).collect();
    Ok(StateSet {
        n_bosons: basis.n_bosons(),
        n_sites: basis.n_sites(),
        states,
        basis_indices: picked,
        diagonal_energies,
        candidate_count: candidates.len(),
        sampling: if protocol.max_states.is_some() { "uniform without replacement" } else { "all" }.into(),
        rng: RNG_NAME.into(),
        seed: protocol.rng_seed,
        protocol: ProtocolRecord::Imbalance { protocol: *protocol },
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::basis::BasisSpec;
    use crate::spectrum::{diagonalize, DiagonalizeOptions};

    fn basis(n: usize, m: usize) -> FockBasis {
        FockBasis::new(BasisSpec::new(n, m).unwrap()).unwrap()
    }

    // coefficient of x^n in (1 + x + .. + x^cap)^parts, by repeated convolution
    fn capped_compositions(n: usize, parts: usize, cap: usize) -> u64 {
        let mut poly = vec![1u64];
        for _ in 0..parts {
            let mut next = vec![0u64; poly.len() + cap];
            for (i, &a) in poly.iter().enumerate() {
                for k in 0..=cap {
                    next[i + k] += a;
                }
            }
            poly = next;
        }
        poly.get(n).copied().unwrap_or(0)
    }

    #[test]
    fn moments_examples() {
        let h = HamiltonianMatrix { dimension: 2, diagonal: vec![0.0, 2.0], off_diagonal: vec![] };
        assert_eq!(spectral_moments(&h), (1.0, 1.0));
        let b = basis(1, 2);
        let h = HamiltonianMatrix::build(&b, &ModelParams::new(1.0, 0.0, 0.0).unwrap());
        let (c, s) = spectral_moments(&h);
        assert_abs_diff_eq!(c, 0.0);
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn moments_match_eigenvalues() {
        let spec = BasisSpec::new(8, 8).unwrap();
        let b = FockBasis::new(spec).unwrap();
        let p = ModelParams::new(1.0, 0.5, 0.8).unwrap();
        let h = HamiltonianMatrix::build(&b, &p);
        let (c, s) = spectral_moments(&h);
        let e = diagonalize(&h, p, spec, DiagonalizeOptions::values_only()).unwrap().eigenvalues;
        let n = e.len() as f64;
        let mean = e.iter().sum::<f64>() / n;
        let sd = (e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert_abs_diff_eq!(c, mean, epsilon = 1e-9);
        assert_abs_diff_eq!(s, sd, epsilon = 1e-9);
    }

    #[test]
    fn imbalance_protocol_counts() {
        for (n, want) in [(7, 6), (8, 31), (9, 20), (10, 101)] {
            let set = maximally_imbalanced_states(&basis(n, n), &ImbalanceProtocol::default()).unwrap();
            assert_eq!(set.len(), want, "N=M={n}");
        }
    }

    #[test]
    fn imbalance_counts_match_polynomial_oracle() {
        for m in 1..=12 {
            for n in 1..=12 {
                let b = basis(n, m);
                let set = maximally_imbalanced_states(&b, &ImbalanceProtocol::default()).unwrap();
                let right = m - m.div_ceil(2);
                assert_eq!(set.len() as u64, capped_compositions(n, right, 3), "N={n} M={m}");
                let left = m.div_ceil(2);
                for s in &set.states {
                    assert!(s.occupations()[..left].iter().all(|&x| x == 0));
                    assert!(s.max_occupation() <= 3);
                }
            }
        }
    }

    #[test]
    fn imbalance_subsample_is_seeded() {
        let b = basis(10, 10);
        let p = ImbalanceProtocol { max_states: Some(20), rng_seed: 5, ..Default::default() };
        let a = maximally_imbalanced_states(&b, &p).unwrap();
        let c = maximally_imbalanced_states(&b, &p).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a, c);
        assert_eq!(a.candidate_count, 101);
        let d = maximally_imbalanced_states(&b, &ImbalanceProtocol { rng_seed: 6, ..p }).unwrap();
        assert_ne!(a.states, d.states);
    }

    #[test]
    fn energy_window_sampling() {
        let b = basis(8, 8);
        let proto = EnergyWindowProtocol::new(200, 42);
        let set = sample_energy_window(&b, &proto).unwrap();
        assert_eq!(set.len(), 200);
        let again = sample_energy_window(&b, &proto).unwrap();
        assert_eq!(set, again);
        let ProtocolRecord::EnergyWindow { lower, upper, .. } = set.protocol else { panic!() };
        for (s, &k) in set.states.iter().zip(&set.basis_indices) {
            assert!(s.max_occupation() <= 3);
            let e = diagonal_energy(s.occupations(), &proto.reference_params);
            assert!(e >= lower && e <= upper);
            assert_eq!(b.occupations(k), s.occupations());
        }
        let unique: std::collections::HashSet<_> = set.basis_indices.iter().collect();
        assert_eq!(unique.len(), 200);
    }

    #[test]
    fn full_candidate_set_when_sample_equals_count() {
        let b = basis(6, 6);
        let proto = EnergyWindowProtocol::new(1, 0);
        let all = energy_window_candidates(&b, &proto);
        let set = sample_energy_window(&b, &EnergyWindowProtocol { sample_count: all.len(), ..proto }).unwrap();
        assert_eq!(set.basis_indices, all);
        let err = sample_energy_window(&b, &EnergyWindowProtocol { sample_count: all.len() + 1, ..proto });
        assert!(matches!(err, Err(Error::InsufficientCandidates { .. })));
    }

    #[test]
    fn manifest_round_trips() {
        let b = basis(5, 5);
        let set = sample_energy_window(&b, &EnergyWindowProtocol::new(3, 9)).unwrap();
        let back: StateSet = serde_json::from_str(&set.to_json().unwrap()).unwrap();
        assert_eq!(back, set);
        assert!(set.to_json().unwrap().contains("\"seed\": 9"));
    }
}
