//! Optional on-disk cache of spectral data keyed by `(N, M, J, U, D)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::hamiltonian::ModelParams;
use crate::spectrum::SpectralData;

/// Directory holding cached eigendata; caching is off when unset.
pub const CACHE_ENV: &str = "TBH_EIGEN_CACHE";

const MAGIC: &[u8; 8] = b"TBHEIG01";

#[derive(Debug, Clone)]
pub struct EigenCache {
    dir: PathBuf,
}

impl EigenCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        EigenCache { dir: dir.into() }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(Self::new)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, spec: BasisSpec, params: &ModelParams) -> PathBuf {
        let mut h = Sha256::new();
        h.update(MAGIC);
        for x in [spec.n_bosons as u64, spec.n_sites as u64, params.j.to_bits(), params.u.to_bits(), params.d.to_bits()] {
            h.update(x.to_le_bytes());
        }
        let key: String = h.finalize().iter().take(16).map(|b| format!("{b:02x}")).collect();
        self.dir.join(format!("N{}_M{}_{key}.bin", spec.n_bosons, spec.n_sites))
    }

    /// Cached data for the point, if present and carrying vectors when
    /// they are needed. Unreadable entries count as misses.
    pub fn load(&self, spec: BasisSpec, params: &ModelParams, need_vectors: bool) -> Option<SpectralData> {
        let path = self.path(spec, params);
        let f = File::open(&path).ok()?;
        match read_entry(BufReader::new(f), need_vectors) {
            Ok(Some((eigenvalues, eigenvectors))) => Some(SpectralData { eigenvalues, eigenvectors, params: *params, spec }),
            Ok(None) => None,
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                None
            }
        }
    }

    /// Stores the data unless an entry with at least as much content exists.
    pub fn store(&self, data: &SpectralData) -> Result<()> {
        let path = self.path(data.spec, &data.params);
        if data.eigenvectors.is_none() && path.exists() {
            return Ok(());
        }
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let tmp = path.with_extension("tmp");
        let write = || -> std::io::Result<()> {
            let mut w = BufWriter::new(File::create(&tmp)?);
            w.write_all(MAGIC)?;
            w.write_all(&(data.dim() as u64).to_le_bytes())?;
            w.write_all(&[data.eigenvectors.is_some() as u8])?;
            for x in &data.eigenvalues {
                w.write_all(&x.to_le_bytes())?;
            }
            if let Some(v) = &data.eigenvectors {
                for x in v.as_slice() {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            w.flush()
        };
        write().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

type Entry = (Vec<f64>, Option<DMatrix<f64>>);

fn read_f64s<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

fn read_entry<R: Read>(mut r: R, need_vectors: bool) -> std::io::Result<Option<Entry>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "bad magic"));
    }
    let mut n = [0u8; 8];
    r.read_exact(&mut n)?;
    let n = u64::from_le_bytes(n) as usize;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let has_vectors = flag[0] == 1;
    if need_vectors && !has_vectors {
        return Ok(None);
    }
    let values = read_f64s(&mut r, n)?;
    let vectors = if need_vectors { Some(DMatrix::from_vec(n, n, read_f64s(&mut r, n * n)?)) } else { None };
    Ok(Some((values, vectors)))
}
