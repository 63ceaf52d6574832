//! Number-conserving bosonic Fock basis.
//!
//! States are ordered lexicographically decreasing in their occupation
//! vectors, so `(N, 0, ..., 0)` has index 0 and `(0, ..., 0, N)` is last.
//! Ranking is a closed-form sum over a table of composition counts.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of bosons and number of sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisSpec {
    pub n_bosons: usize,
    pub n_sites: usize,
}

impl BasisSpec {
    pub fn new(n_bosons: usize, n_sites: usize) -> Result<Self> {
        let spec = BasisSpec { n_bosons, n_sites };
        spec.validate()?;
        dimension(spec)?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.n_bosons == 0 || self.n_sites == 0 {
            return Err(Error::InvalidSpec(format!(
                "need N >= 1 and M >= 1, got N={}, M={}",
                self.n_bosons, self.n_sites
            )));
        }
        if self.n_bosons > u32::MAX as usize {
            return Err(Error::InvalidSpec("N exceeds u32 range".into()));
        }
        Ok(())
    }

    /// Number of sites in the left half, `ceil(M/2)`.
    pub fn left_sites(&self) -> usize {
        self.n_sites.div_ceil(2)
    }
}

/// Hilbert-space dimension `(M+N-1)! / (N! (M-1)!)`, computed exactly.
pub fn dimension(spec: BasisSpec) -> Result<usize> {
    spec.validate()?;
    let overflow = || Error::Overflow { n_bosons: spec.n_bosons, n_sites: spec.n_sites };
    // C(N+M-1, k) with k = min(N, M-1); each partial product is itself a binomial.
    let n = (spec.n_bosons + spec.n_sites - 1) as u128;
    let k = spec.n_bosons.min(spec.n_sites - 1) as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i).ok_or_else(overflow)? / (i + 1);
    }
    usize::try_from(acc).map_err(|_| overflow())
}

/// Occupation-number vector `|n_1, ..., n_M>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FockState(pub Vec<u32>);

impl FockState {
    pub fn new(occupations: Vec<u32>) -> Self {
        FockState(occupations)
    }

    pub fn occupations(&self) -> &[u32] {
        &self.0
    }

    pub fn n_sites(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&n| n as u64).sum()
    }

    pub fn max_occupation(&self) -> u32 {
        self.0.iter().copied().max().unwrap_or(0)
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, ">")
    }
}

/// Enumerated basis plus the composition-count table used for ranking.
///
/// Read-only after construction, so it can be shared freely across threads.
#[derive(Debug, Clone)]
pub struct FockBasis {
    spec: BasisSpec,
    dim: usize,
    // counts[r * (M + 1) + s] = number of ways to place r bosons on s sites
    counts: Vec<usize>,
    // row-major D x M occupation table in canonical order
    occupations: Vec<u32>,
}

impl FockBasis {
    pub fn new(spec: BasisSpec) -> Result<Self> {
        let dim = dimension(spec)?;
        let counts = count_table(spec)?;
        let mut basis = FockBasis { spec, dim, counts, occupations: Vec::new() };
        basis.occupations = enumerate_flat(spec, dim);
        Ok(basis)
    }

    pub fn spec(&self) -> BasisSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_sites(&self) -> usize {
        self.spec.n_sites
    }

    pub fn n_bosons(&self) -> usize {
        self.spec.n_bosons
    }

    /// Occupations of the state with canonical index `index`.
    pub fn occupations(&self, index: usize) -> &[u32] {
        let m = self.spec.n_sites;
        &self.occupations[index * m..(index + 1) * m]
    }

    pub fn state(&self, index: usize) -> FockState {
        FockState(self.occupations(index).to_vec())
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.occupations.chunks_exact(self.spec.n_sites)
    }

    pub fn states(&self) -> Vec<FockState> {
        self.iter().map(|o| FockState(o.to_vec())).collect()
    }

    fn count(&self, bosons: usize, sites: usize) -> usize {
        self.counts[bosons * (self.spec.n_sites + 1) + sites]
    }

    /// Checks that `occupations` is a member of this basis.
    pub fn check(&self, occupations: &[u32]) -> Result<()> {
        if occupations.len() != self.spec.n_sites {
            return Err(Error::InvalidState {
                occupations: occupations.to_vec(),
                reason: format!("expected {} sites", self.spec.n_sites),
            });
        }
        let total: u64 = occupations.iter().map(|&n| n as u64).sum();
        if total != self.spec.n_bosons as u64 {
            return Err(Error::InvalidState {
                occupations: occupations.to_vec(),
                reason: format!("holds {total} bosons, expected {}", self.spec.n_bosons),
            });
        }
        Ok(())
    }

    /// Canonical index of a state, O(M).
    pub fn rank(&self, occupations: &[u32]) -> Result<usize> {
        self.check(occupations)?;
        Ok(self.rank_unchecked(occupations))
    }

    pub fn rank_state(&self, state: &FockState) -> Result<usize> {
        self.rank(state.occupations())
    }

    /// Rank of a state already known to belong to the basis.
    pub(crate) fn rank_unchecked(&self, occupations: &[u32]) -> usize {
        let m = self.spec.n_sites;
        let mut remaining = self.spec.n_bosons;
        let mut index = 0;
        for (i, &n) in occupations[..m - 1].iter().enumerate() {
            remaining -= n as usize;
            // States sharing the prefix but with more bosons on site i come
            // first: sum over larger values collapses to one count.
            if remaining > 0 {
                index += self.count(remaining - 1, m - i);
            }
        }
        index
    }

    pub fn unrank(&self, index: usize) -> Result<FockState> {
        if index >= self.dim {
            return Err(Error::IndexOutOfRange { index, dimension: self.dim });
        }
        let m = self.spec.n_sites;
        let mut occ = vec![0u32; m];
        let mut remaining = self.spec.n_bosons;
        let mut rest = index;
        for (i, slot) in occ.iter_mut().enumerate().take(m - 1) {
            let after = m - i - 1;
            let mut v = remaining;
            loop {
                let block = self.count(remaining - v, after);
                if rest < block {
                    break;
                }
                rest -= block;
                v -= 1;
            }
            *slot = v as u32;
            remaining -= v;
        }
        occ[m - 1] = remaining as u32;
        Ok(FockState(occ))
    }
}

fn count_table(spec: BasisSpec) -> Result<Vec<usize>> {
    let (n, m) = (spec.n_bosons, spec.n_sites);
    let w = m + 1;
    let mut t = vec![0usize; (n + 1) * w];
    t[0] = 1;
    for s in 1..=m {
        for r in 0..=n {
            // ways(r, s) = sum_{k<=r} ways(k, s-1) = ways(r-1, s) + ways(r, s-1)
            let mut v = t[r * w + s - 1];
            if r > 0 {
                v = v.checked_add(t[(r - 1) * w + s]).ok_or(Error::Overflow {
                    n_bosons: n,
                    n_sites: m,
                })?;
            }
            t[r * w + s] = v;
        }
    }
    Ok(t)
}

fn enumerate_flat(spec: BasisSpec, dim: usize) -> Vec<u32> {
    let m = spec.n_sites;
    let n = spec.n_bosons as u32;
    let mut out = Vec::with_capacity(dim * m);
    let mut cur = vec![0u32; m];
    cur[0] = n;
    loop {
        out.extend_from_slice(&cur);
        // successor in decreasing lex order: find the rightmost non-final site
        // with a boson, move one to its right neighbour and sweep the tail there
        let Some(i) = (0..m - 1).rev().find(|&i| cur[i] > 0) else {
            break;
        };
        let tail: u32 = cur[i + 1..].iter().sum();
        cur[i] -= 1;
        for c in cur[i + 1..].iter_mut() {
            *c = 0;
        }
        cur[i + 1] = tail + 1;
    }
    debug_assert_eq!(out.len(), dim * m);
    out
}

/// All states of `spec` in canonical order.
pub fn enumerate(spec: BasisSpec) -> Result<Vec<FockState>> {
    Ok(FockBasis::new(spec)?.states())
}
