//! Single-point artifact writers behind the `basis`, `spectrum`,
//! `eigenstates` and `quench` subcommands. Each iterates over every
//! `(N, M, U, D)` point of a config.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::basis::FockBasis;
use crate::cache::EigenCache;
use crate::config::{SweepConfig, SystemSize, SOFTWARE, VERSION};
use crate::diagnostics::{central_window_average, EigenstateDiagnostics};
use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianMatrix, ModelParams};
use crate::quench::{
    correlation_hole_depth, ensemble_analytic_curve, observable_traces, survival_ensemble, CurveOptions, Observable,
    QuenchTrace, SurvivalAnalysis,
};
use crate::spectrum::{chaos_distance, mean_gap_ratio, GapRatioStats};
use crate::sweep::{spectral_data, write_state_manifest, StateSets};

#[derive(Serialize)]
struct Provenance<'a> {
    software: &'a str,
    version: &'a str,
    config_hash: String,
    rng_seed: u64,
}

fn provenance(cfg: &SweepConfig) -> Provenance<'static> {
    Provenance { software: SOFTWARE, version: VERSION, config_hash: cfg.hash(), rng_seed: cfg.rng_seed }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

/// Writes `# <provenance>` followed by whatever `body` emits.
fn write_with_header(
    path: &Path,
    cfg: &SweepConfig,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    let run = |w: &mut std::io::BufWriter<std::fs::File>| -> std::io::Result<()> {
        writeln!(w, "# {}", cfg.provenance())?;
        body(w)?;
        w.flush()
    };
    run(&mut w).map_err(|e| Error::io(path, e))
}

fn tag(size: SystemSize, u: f64, d: f64) -> String {
    format!("N{}_M{}_U{u}_D{d}", size.0, size.1)
}

fn points(cfg: &SweepConfig) -> impl Iterator<Item = (SystemSize, f64, f64)> + '_ {
    cfg.system_sizes
        .iter()
        .flat_map(move |&s| cfg.u_values.iter().flat_map(move |&u| cfg.d_values.iter().map(move |&d| (s, u, d))))
}

fn out_dir(cfg: &SweepConfig) -> Result<&Path> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    cfg.echo()?;
    Ok(&cfg.output_dir)
}

/// Basis listing (`index,n_1..n_M`) per size, plus Hamiltonian triplets per
/// point when `export_hamiltonian` is set.
pub fn run_basis(cfg: &SweepConfig) -> Result<Vec<PathBuf>> {
    let dir = out_dir(cfg)?;
    let mut written = Vec::new();
    for &size in &cfg.system_sizes {
        let basis = FockBasis::new(size.spec()?)?;
        let path = dir.join(format!("basis_N{}_M{}.csv", size.0, size.1));
        write_with_header(&path, cfg, |w| {
            write!(w, "index")?;
            for i in 1..=basis.n_sites() {
                write!(w, ",n_{i}")?;
            }
            writeln!(w)?;
            for (k, occ) in basis.iter().enumerate() {
                write!(w, "{k}")?;
                for n in occ {
                    write!(w, ",{n}")?;
                }
                writeln!(w)?;
            }
            Ok(())
        })?;
        written.push(path);
        if cfg.export_hamiltonian {
            for &u in &cfg.u_values {
                for &d in &cfg.d_values {
                    let h = HamiltonianMatrix::build(&basis, &ModelParams::new(1.0, u, d)?);
                    let path = dir.join(format!("hamiltonian_{}.csv", tag(size, u, d)));
                    write_with_header(&path, cfg, |w| h.write_triplets(w))?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

#[derive(Serialize)]
struct SpectrumSummary {
    #[serde(flatten)]
    provenance: Provenance<'static>,
    n_bosons: usize,
    n_sites: usize,
    dimension: usize,
    u: f64,
    d: f64,
    gap_ratio: GapRatioStats,
    chaos_distance: f64,
}

/// Eigenvalue CSV and gap-ratio summary per point.
pub fn run_spectrum(cfg: &SweepConfig) -> Result<Vec<PathBuf>> {
    let dir = out_dir(cfg)?;
    let cache = EigenCache::from_env();
    let mut written = Vec::new();
    for (size, u, d) in points(cfg) {
        let basis = FockBasis::new(size.spec()?)?;
        let params = ModelParams::new(1.0, u, d)?;
        let spectral = spectral_data(&basis, params, false, cache.as_ref())?;
        let t = tag(size, u, d);
        let path = dir.join(format!("spectrum_{t}.csv"));
        write_with_header(&path, cfg, |w| {
            spectral.write_csv(&mut *w).map_err(|e| std::io::Error::other(e.to_string()))
        })?;
        let stats = mean_gap_ratio(&spectral.eigenvalues, cfg.protocols.edge_discard)?;
        let summary = SpectrumSummary {
            provenance: provenance(cfg),
            n_bosons: size.0,
            n_sites: size.1,
            dimension: basis.dim(),
            u,
            d,
            gap_ratio: stats,
            chaos_distance: chaos_distance(&stats),
        };
        let sp = dir.join(format!("spectrum_{t}.json"));
        write_json(&sp, &summary)?;
        written.extend([path, sp]);
        if cfg.export_hamiltonian {
            let h = HamiltonianMatrix::build(&basis, &params);
            let path = dir.join(format!("hamiltonian_{t}.csv"));
            write_with_header(&path, cfg, |w| h.write_triplets(w))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[derive(Serialize)]
struct EigenstateSummary {
    #[serde(flatten)]
    provenance: Provenance<'static>,
    n_bosons: usize,
    n_sites: usize,
    dimension: usize,
    u: f64,
    d: f64,
    central_window: f64,
    pr_over_dgoe: f64,
    entropy_over_page: f64,
    mean_imbalance: f64,
    page_value: f64,
    goe_participation: f64,
}

/// Per-eigenstate CSV and central-window summary per point.
pub fn run_eigenstates(cfg: &SweepConfig) -> Result<Vec<PathBuf>> {
    let dir = out_dir(cfg)?;
    let cache = EigenCache::from_env();
    let w = cfg.protocols.central_window;
    let mut written = Vec::new();
    for (size, u, d) in points(cfg) {
        let basis = FockBasis::new(size.spec()?)?;
        let spectral = spectral_data(&basis, ModelParams::new(1.0, u, d)?, true, cache.as_ref())?;
        let diag = EigenstateDiagnostics::compute(&spectral, &basis)?;
        let t = tag(size, u, d);
        let path = dir.join(format!("eigenstates_{t}.csv"));
        write_with_header(&path, cfg, |out| diag.write_csv(out))?;
        let summary = EigenstateSummary {
            provenance: provenance(cfg),
            n_bosons: size.0,
            n_sites: size.1,
            dimension: basis.dim(),
            u,
            d,
            central_window: w,
            pr_over_dgoe: diag.scaled_participation(w)?,
            entropy_over_page: diag.scaled_entropy(w)?,
            mean_imbalance: central_window_average(&diag.imbalance.per_state_imbalance, w)?,
            page_value: diag.entropy.page_value,
            goe_participation: diag.participation.goe_reference,
        };
        let sp = dir.join(format!("eigenstates_{t}.json"));
        write_json(&sp, &summary)?;
        written.extend([path, sp]);
    }
    Ok(written)
}

#[derive(Serialize)]
struct TraceSidecar<'a> {
    #[serde(flatten)]
    provenance: Provenance<'static>,
    observable: &'a str,
    n_bosons: usize,
    n_sites: usize,
    dimension: usize,
    u: f64,
    d: f64,
    n_states: usize,
    state_manifest: String,
    relaxation_value: f64,
    smoothing_window: usize,
    time_grid: &'a crate::config::TimeGridConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    survival: Option<SurvivalAnalysis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    analytic_curve: Option<String>,
}

fn write_trace(path: &Path, cfg: &SweepConfig, trace: &QuenchTrace) -> Result<()> {
    write_with_header(path, cfg, |w| trace.write_csv(w))
}

/// Survival, entropy and imbalance traces per point: `(time, raw_mean,
/// smoothed_mean)` CSV plus a JSON sidecar. The survival probability also
/// gets the ensemble-averaged analytic curve.
pub fn run_quench(cfg: &SweepConfig) -> Result<Vec<PathBuf>> {
    if !cfg.diagnostics.iter().any(|d| d.is_dynamical()) {
        return Err(Error::config(
            "diagnostics",
            "quench needs at least one of survival, entropy_dynamics, imbalance_dynamics",
        ));
    }
    let dir = out_dir(cfg)?;
    let cache = EigenCache::from_env();
    let p = &cfg.protocols;
    let grid = p.time_grid.build()?;
    let mut written = Vec::new();
    for &size in &cfg.system_sizes {
        let basis = FockBasis::new(size.spec()?)?;
        let sets = StateSets::for_config(&basis, cfg)?;
        let manifest = |name: &str| format!("states_{name}_N{}_M{}.json", size.0, size.1);
        for (name, set) in [("survival", &sets.survival), ("entropy", &sets.entropy), ("imbalance", &sets.imbalance)] {
            if let Some(set) = set {
                let path = dir.join(manifest(name));
                write_state_manifest(cfg, set, &path)?;
                written.push(path);
            }
        }
        for &u in &cfg.u_values {
            for &d in &cfg.d_values {
                let spectral = spectral_data(&basis, ModelParams::new(1.0, u, d)?, true, cache.as_ref())?;
                let t = tag(size, u, d);
                let sidecar = |observable: &'static str, n_states: usize, trace: &QuenchTrace| TraceSidecar {
                    provenance: provenance(cfg),
                    observable,
                    n_bosons: size.0,
                    n_sites: size.1,
                    dimension: basis.dim(),
                    u,
                    d,
                    n_states,
                    state_manifest: manifest(observable),
                    relaxation_value: trace.relaxation_value,
                    smoothing_window: trace.smoothing_window,
                    time_grid: &p.time_grid,
                    survival: None,
                    analytic_curve: None,
                };
                if let Some(set) = &sets.survival {
                    let ens = survival_ensemble(&set.states, &basis, &spectral, &grid, p.smoothing_window)?;
                    let analysis = correlation_hole_depth(&ens, p.hole_window, basis.dim())?;
                    let curve = ensemble_analytic_curve(&ens.weights, &spectral.eigenvalues, &grid, CurveOptions::default())?;
                    let path = dir.join(format!("survival_{t}.csv"));
                    write_trace(&path, cfg, &ens.trace)?;
                    let cpath = dir.join(format!("survival_analytic_{t}.csv"));
                    write_with_header(&cpath, cfg, |w| {
                        writeln!(w, "time,analytic")?;
                        for (t, v) in grid.points.iter().zip(&curve) {
                            writeln!(w, "{t:.10e},{v:.15e}")?;
                        }
                        Ok(())
                    })?;
                    let mut sc = sidecar("survival", set.len(), &ens.trace);
                    sc.survival = Some(analysis);
                    sc.analytic_curve = Some(format!("survival_analytic_{t}.csv"));
                    let jpath = dir.join(format!("survival_{t}.json"));
                    write_json(&jpath, &sc)?;
                    written.extend([path, cpath, jpath]);
                }
                for (name, set, obs) in [
                    ("entropy", &sets.entropy, Observable::Entropy),
                    ("imbalance", &sets.imbalance, Observable::Imbalance),
                ] {
                    let Some(set) = set else { continue };
                    let trace = observable_traces(&set.states, &basis, &spectral, &grid, &[obs], p.smoothing_window)?
                        .remove(0);
                    let path = dir.join(format!("{name}_{t}.csv"));
                    write_trace(&path, cfg, &trace)?;
                    let jpath = dir.join(format!("{name}_{t}.json"));
                    write_json(&jpath, &sidecar(name, set.len(), &trace))?;
                    written.extend([path, jpath]);
                }
            }
        }
    }
    Ok(written)
}
