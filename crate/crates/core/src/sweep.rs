//! Parameter sweeps: chaos maps over `(U, D)` and one-dimensional cuts with
//! the full set of static and dynamical indicators.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, FockBasis};
use crate::cache::EigenCache;
use crate::config::{Diagnostic, FixedAxis, SweepConfig, SystemSize, SOFTWARE, VERSION};
use crate::diagnostics::{central_window_average, page_value, EigenstateDiagnostics};
use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianMatrix, ModelParams};
use crate::initial_states::{
    maximally_imbalanced_states, sample_energy_window, EnergyWindowProtocol, ImbalanceProtocol, StateSet,
};
use crate::quench::{correlation_hole_depth, observable_relaxation_values, survival_ensemble, Observable};
use crate::spectrum::{chaos_distance, diagonalize, mean_gap_ratio, DiagonalizeOptions, SpectralData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    Failed,
    /// Beyond the dense-diagonalization limits.
    Skipped,
}

/// One `(N, M, U, D)` point. Diagnostics that were not requested stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub n_bosons: usize,
    pub n_sites: usize,
    pub dimension: usize,
    pub u: f64,
    pub d: f64,
    pub d_over_j: f64,
    pub u_over_nj: f64,
    pub mean_r: Option<f64>,
    pub chaos_distance: Option<f64>,
    pub n_gaps: Option<usize>,
    pub pr_over_dgoe: Option<f64>,
    pub entropy_over_page: Option<f64>,
    pub eigen_imbalance: Option<f64>,
    pub hole_depth_scaled: Option<f64>,
    pub entropy_relax_over_page: Option<f64>,
    pub imbalance_relax: Option<f64>,
    pub status: PointStatus,
    pub error: String,
}

impl PointRecord {
    fn empty(spec: BasisSpec, dimension: usize, u: f64, d: f64) -> Self {
        PointRecord {
            n_bosons: spec.n_bosons,
            n_sites: spec.n_sites,
            dimension,
            u,
            d,
            d_over_j: d,
            u_over_nj: u / spec.n_bosons as f64,
            mean_r: None,
            chaos_distance: None,
            n_gaps: None,
            pr_over_dgoe: None,
            entropy_over_page: None,
            eigen_imbalance: None,
            hole_depth_scaled: None,
            entropy_relax_over_page: None,
            imbalance_relax: None,
            status: PointStatus::Ok,
            error: String::new(),
        }
    }

    fn key(&self) -> PointKey {
        (self.n_bosons, self.n_sites, self.u.to_bits(), self.d.to_bits())
    }
}

type PointKey = (usize, usize, u64, u64);

/// Initial-state ensembles of one system size, fixed for the whole sweep.
#[derive(Debug, Clone, Default)]
pub struct StateSets {
    pub survival: Option<StateSet>,
    pub entropy: Option<StateSet>,
    pub imbalance: Option<StateSet>,
}

impl StateSets {
    /// Builds the ensembles the config's diagnostics need. Seeds derive from
    /// `rng_seed`: survival `s`, entropy `s + 1`, imbalance subsample `s + 2`.
    pub fn for_config(basis: &FockBasis, cfg: &SweepConfig) -> Result<Self> {
        let p = &cfg.protocols;
        let n = basis.n_bosons();
        let window = |count: usize, seed: u64| EnergyWindowProtocol {
            reference_params: ModelParams { j: 1.0, u: p.reference_u, d: p.reference_d },
            window_halfwidth: p.window_halfwidth,
            occupation_cap: p.occupation_cap,
            sample_count: count,
            rng_seed: seed,
        };
        let survival = if cfg.wants(Diagnostic::Survival) {
            Some(sample_energy_window(basis, &window(p.survival_states, cfg.rng_seed))?)
        } else {
            None
        };
        let entropy = if cfg.wants(Diagnostic::EntropyDynamics) {
            Some(sample_energy_window(basis, &window(p.entropy_states_for(n), cfg.rng_seed.wrapping_add(1)))?)
        } else {
            None
        };
        let imbalance = if cfg.wants(Diagnostic::ImbalanceDynamics) {
            let proto = ImbalanceProtocol {
                occupation_cap: p.occupation_cap,
                max_states: p.imbalance_states_for(n),
                rng_seed: cfg.rng_seed.wrapping_add(2),
            };
            Some(maximally_imbalanced_states(basis, &proto)?)
        } else {
            None
        };
        Ok(StateSets { survival, entropy, imbalance })
    }

    fn named(&self) -> impl Iterator<Item = (&'static str, &StateSet)> {
        [("survival", &self.survival), ("entropy", &self.entropy), ("imbalance", &self.imbalance)]
            .into_iter()
            .filter_map(|(k, s)| s.as_ref().map(|s| (k, s)))
    }
}

/// Diagonalizes at `params`, going through the cache when one is given.
pub fn spectral_data(
    basis: &FockBasis,
    params: ModelParams,
    with_vectors: bool,
    cache: Option<&EigenCache>,
) -> Result<SpectralData> {
    let spec = basis.spec();
    if let Some(hit) = cache.and_then(|c| c.load(spec, &params, with_vectors)) {
        log::debug!("cache hit for {spec:?} {params:?}");
        return Ok(hit);
    }
    let h = HamiltonianMatrix::build(basis, &params);
    let opts = DiagonalizeOptions { with_vectors, ..Default::default() };
    let data = diagonalize(&h, params, spec, opts)?;
    if let Some(c) = cache {
        if let Err(e) = c.store(&data) {
            log::warn!("could not write eigendata cache: {e}");
        }
    }
    Ok(data)
}

/// Computes every requested diagnostic at one point from a single
/// diagonalization.
pub fn evaluate_point(
    basis: &FockBasis,
    sets: &StateSets,
    u: f64,
    d: f64,
    cfg: &SweepConfig,
    cache: Option<&EigenCache>,
) -> Result<PointRecord> {
    let spec = basis.spec();
    let p = &cfg.protocols;
    let params = ModelParams::new(1.0, u, d)?;
    let spectral = spectral_data(basis, params, cfg.needs_vectors(), cache)?;
    let mut rec = PointRecord::empty(spec, basis.dim(), u, d);

    if cfg.wants(Diagnostic::GapRatio) {
        let stats = mean_gap_ratio(&spectral.eigenvalues, p.edge_discard)?;
        rec.mean_r = Some(stats.mean_r);
        rec.chaos_distance = Some(chaos_distance(&stats));
        rec.n_gaps = Some(stats.n_gaps_used);
    }
    if [Diagnostic::Pr, Diagnostic::Entropy, Diagnostic::Imbalance].iter().any(|&x| cfg.wants(x)) {
        let diag = EigenstateDiagnostics::compute(&spectral, basis)?;
        let w = p.central_window;
        if cfg.wants(Diagnostic::Pr) {
            rec.pr_over_dgoe = Some(diag.scaled_participation(w)?);
        }
        if cfg.wants(Diagnostic::Entropy) {
            rec.entropy_over_page = Some(diag.scaled_entropy(w)?);
        }
        if cfg.wants(Diagnostic::Imbalance) {
            rec.eigen_imbalance = Some(central_window_average(&diag.imbalance.per_state_imbalance, w)?);
        }
    }
    let grid = p.time_grid.build()?;
    if let Some(set) = &sets.survival {
        let ens = survival_ensemble(&set.states, basis, &spectral, &grid, p.smoothing_window)?;
        rec.hole_depth_scaled = Some(correlation_hole_depth(&ens, p.hole_window, basis.dim())?.scaled_depth);
    }
    // Only relaxation values are recorded, so only the grid tail is evolved.
    if let Some(set) = &sets.entropy {
        let r = observable_relaxation_values(&set.states, basis, &spectral, &grid, &[Observable::Entropy], p.smoothing_window)?;
        rec.entropy_relax_over_page = Some(r[0] / page_value(spec.n_bosons, spec.n_sites));
    }
    if let Some(set) = &sets.imbalance {
        let r = observable_relaxation_values(&set.states, basis, &spectral, &grid, &[Observable::Imbalance], p.smoothing_window)?;
        rec.imbalance_relax = Some(r[0]);
    }
    Ok(rec)
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// All records in grid order.
    pub records: Vec<PointRecord>,
    pub records_path: PathBuf,
    pub n_failed: usize,
    pub n_skipped: usize,
    /// Points taken over from a previous run.
    pub n_resumed: usize,
}

impl SweepOutcome {
    pub fn is_complete(&self) -> bool {
        self.n_failed == 0 && self.n_skipped == 0
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    software: &'a str,
    version: &'a str,
    config_hash: String,
    rng_seed: u64,
    kind: &'a str,
    records: String,
    n_points: usize,
    n_failed: usize,
    n_skipped: usize,
    n_resumed: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    software: &'a str,
    version: &'a str,
    config_hash: String,
    rng_seed: u64,
    state_set: &'a StateSet,
}

/// Writes a state-set manifest wrapped with provenance fields.
pub fn write_state_manifest(cfg: &SweepConfig, set: &StateSet, path: &Path) -> Result<()> {
    let m = Manifest { software: SOFTWARE, version: VERSION, config_hash: cfg.hash(), rng_seed: cfg.rng_seed, state_set: set };
    std::fs::write(path, serde_json::to_string_pretty(&m)?).map_err(|e| Error::io(path, e))
}

fn grid_points(cfg: &SweepConfig) -> Vec<(SystemSize, f64, f64)> {
    let mut pts = Vec::new();
    for &s in &cfg.system_sizes {
        for &u in &cfg.u_values {
            for &d in &cfg.d_values {
                pts.push((s, u, d));
            }
        }
    }
    pts
}

fn write_header(path: &Path, provenance: &str, records: &[PointRecord]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut f = std::io::BufWriter::new(f);
    writeln!(f, "# {provenance}").map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(f);
    if records.is_empty() {
        w.write_record(csv_header()).map_err(|e| csv_err(path, e))?;
    }
    for r in records {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_header() -> Vec<String> {
    [
        "n_bosons",
        "n_sites",
        "dimension",
        "u",
        "d",
        "d_over_j",
        "u_over_nj",
        "mean_r",
        "chaos_distance",
        "n_gaps",
        "pr_over_dgoe",
        "entropy_over_page",
        "eigen_imbalance",
        "hole_depth_scaled",
        "entropy_relax_over_page",
        "imbalance_relax",
        "status",
        "error",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Reads the records of an earlier run; `Ok(None)` when no file exists.
pub fn read_records(path: &Path) -> Result<Option<(String, Vec<PointRecord>)>> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut r = BufReader::new(f);
    let mut first = String::new();
    r.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    let provenance = first.trim_start_matches('#').trim().to_string();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        match rec {
            Ok(rec) => out.push(rec),
            // A torn final line from an interrupted run.
            Err(e) => log::warn!("dropping unreadable record in {}: {e}", path.display()),
        }
    }
    Ok(Some((provenance, out)))
}

fn run_points(cfg: &SweepConfig, kind: &str, resume: bool) -> Result<SweepOutcome> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    cfg.echo()?;
    let provenance = cfg.provenance();
    let path = cfg.output_dir.join(format!("{kind}.csv"));
    let points = grid_points(cfg);
    let wanted: HashMap<PointKey, usize> = points
        .iter()
        .enumerate()
        .map(|(i, &(s, u, dv))| ((s.0, s.1, u.to_bits(), dv.to_bits()), i))
        .collect();

    let mut done: BTreeMap<usize, PointRecord> = BTreeMap::new();
    if resume {
        if let Some((prov, old)) = read_records(&path)? {
            if prov != provenance {
                return Err(Error::config(
                    path.display().to_string(),
                    format!("existing records were produced by a different config ({prov})"),
                ));
            }
            for r in old {
                if r.status == PointStatus::Ok {
                    if let Some(&i) = wanted.get(&r.key()) {
                        done.insert(i, r);
                    }
                }
            }
        }
    }
    let n_resumed = done.len();
    write_header(&path, &provenance, &done.values().cloned().collect::<Vec<_>>())?;

    let cache = EigenCache::from_env();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_count)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;

    let mut prepared: HashMap<SystemSize, std::result::Result<(FockBasis, StateSets), String>> = HashMap::new();
    let todo: Vec<usize> = (0..points.len()).filter(|i| !done.contains_key(i)).collect();
    let limit = if cfg.needs_vectors() {
        DiagonalizeOptions::default().max_dim_vectors
    } else {
        DiagonalizeOptions::default().max_dim_values
    };

    for chunk in todo.chunks(cfg.worker_count) {
        for &i in chunk {
            let size = points[i].0;
            if prepared.contains_key(&size) {
                continue;
            }
            let prep = prepare_size(size, cfg, limit);
            match &prep {
                Ok((basis, sets)) => {
                    log::info!("prepared N={} M={} (dimension {})", size.0, size.1, basis.dim());
                    for (name, set) in sets.named() {
                        let p = cfg.output_dir.join(format!("states_{name}_N{}_M{}.json", size.0, size.1));
                        write_state_manifest(cfg, set, &p)?;
                    }
                }
                Err(msg) => log::warn!("skipping N={} M={}: {msg}", size.0, size.1),
            }
            prepared.insert(size, prep);
        }
        let results: Vec<(usize, PointRecord)> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&i| {
                    let (size, u, d) = points[i];
                    let spec = BasisSpec { n_bosons: size.0, n_sites: size.1 };
                    let rec = match &prepared[&size] {
                        Ok((basis, sets)) => match evaluate_point(basis, sets, u, d, cfg, cache.as_ref()) {
                            Ok(r) => r,
                            Err(e) => {
                                let mut r = PointRecord::empty(spec, basis.dim(), u, d);
                                r.status = if is_resource_limit(&e) { PointStatus::Skipped } else { PointStatus::Failed };
                                r.error = e.to_string();
                                r
                            }
                        },
                        Err(msg) => {
                            let dim = crate::basis::dimension(spec).unwrap_or(0);
                            let mut r = PointRecord::empty(spec, dim, u, d);
                            r.status = PointStatus::Skipped;
                            r.error = msg.clone();
                            r
                        }
                    };
                    (i, rec)
                })
                .collect()
        });
        let f = OpenOptions::new().append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(f);
        for (i, rec) in results {
            match rec.status {
                PointStatus::Ok => log::info!("N={} U={} D={} done", rec.n_bosons, rec.u, rec.d),
                _ => log::warn!("N={} U={} D={}: {}", rec.n_bosons, rec.u, rec.d, rec.error),
            }
            w.serialize(&rec).map_err(|e| csv_err(&path, e))?;
            done.insert(i, rec);
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }

    // Canonical order, so resumed and uninterrupted runs give the same file.
    let records: Vec<PointRecord> = done.into_values().collect();
    write_header(&path, &provenance, &records)?;
    let n_failed = records.iter().filter(|r| r.status == PointStatus::Failed).count();
    let n_skipped = records.iter().filter(|r| r.status == PointStatus::Skipped).count();
    let summary = Summary {
        software: SOFTWARE,
        version: VERSION,
        config_hash: cfg.hash(),
        rng_seed: cfg.rng_seed,
        kind,
        records: format!("{kind}.csv"),
        n_points: records.len(),
        n_failed,
        n_skipped,
        n_resumed,
    };
    let sp = cfg.output_dir.join(format!("{kind}_summary.json"));
    std::fs::write(&sp, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&sp, e))?;
    Ok(SweepOutcome { records, records_path: path, n_failed, n_skipped, n_resumed })
}

fn prepare_size(size: SystemSize, cfg: &SweepConfig, limit: usize) -> std::result::Result<(FockBasis, StateSets), String> {
    let spec = size.spec().map_err(|e| e.to_string())?;
    let dim = crate::basis::dimension(spec).map_err(|e| e.to_string())?;
    if dim > limit {
        return Err(Error::DimensionTooLarge { dimension: dim, limit }.to_string());
    }
    let basis = FockBasis::new(spec).map_err(|e| e.to_string())?;
    let sets = StateSets::for_config(&basis, cfg).map_err(|e| e.to_string())?;
    Ok((basis, sets))
}

fn is_resource_limit(e: &Error) -> bool {
    matches!(e, Error::DimensionTooLarge { .. } | Error::Overflow { .. })
}

/// Eigenvalues-only `chaos_distance` over the full `U x D` grid of every
/// system size. Writes `chaos_map.csv`; with `resume`, points already
/// present are kept.
pub fn run_chaos_map(cfg: &SweepConfig, resume: bool) -> Result<SweepOutcome> {
    let mut cfg = cfg.clone();
    if cfg.diagnostics != [Diagnostic::GapRatio] {
        log::info!("chaos map computes the gap ratio only; other diagnostics ignored");
        cfg.diagnostics = vec![Diagnostic::GapRatio];
    }
    run_points(&cfg, "chaos_map", resume)
}

/// All requested diagnostics along a one-parameter cut for each system size.
/// Writes `cut.csv` incrementally.
pub fn run_cut(cfg: &SweepConfig, resume: bool) -> Result<SweepOutcome> {
    if cfg.axis() == FixedAxis::None {
        return Err(Error::config("fixed_axis", "a cut needs a single U or a single D value"));
    }
    run_points(cfg, "cut", resume)
}
