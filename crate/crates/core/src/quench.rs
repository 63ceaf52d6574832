//! Quench dynamics by spectral decomposition.
//!
//! An initial state `|Psi(0)> = sum_m c_m |E_m>` evolves as
//! `|Psi(t)> = sum_m c_m e^{-i E_m t} |E_m>`. Every observable here is
//! evaluated exactly on a fixed time grid from the eigendata.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{FockBasis, FockState};
use crate::diagnostics::{imbalance_from_probabilities, site_entropies_from_probabilities};
use crate::error::{Error, Result};
use crate::linalg;
use crate::spectrum::SpectralData;

pub const DEFAULT_SMOOTHING_WINDOW: usize = 21;
pub const RELAXATION_POINTS: usize = 10;
pub const DEFAULT_HOLE_WINDOW: (f64, f64) = (20.0, 1.0e3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Logarithmic,
    Linear,
    Custom,
}

/// Strictly increasing, non-negative sample times in units of `1/J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub points: Vec<f64>,
    pub kind: GridKind,
}

impl TimeGrid {
    pub fn logarithmic(t_min: f64, t_max: f64, n: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_max > t_min) || n < 2 {
            return Err(Error::InvalidTimeGrid(format!(
                "logarithmic grid needs 0 < t_min < t_max and n >= 2 (got {t_min}, {t_max}, {n})"
            )));
        }
        let (a, b) = (t_min.log10(), t_max.log10());
        let points = (0..n).map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64)).collect();
        Self::new(points, GridKind::Logarithmic)
    }

    pub fn linear(t_min: f64, t_max: f64, n: usize) -> Result<Self> {
        if !(t_min >= 0.0 && t_max > t_min) || n < 2 {
            return Err(Error::InvalidTimeGrid(format!(
                "linear grid needs 0 <= t_min < t_max and n >= 2 (got {t_min}, {t_max}, {n})"
            )));
        }
        let points = (0..n).map(|k| t_min + (t_max - t_min) * k as f64 / (n - 1) as f64).collect();
        Self::new(points, GridKind::Linear)
    }

    pub fn new(points: Vec<f64>, kind: GridKind) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidTimeGrid("empty grid".into()));
        }
        if !(points[0] >= 0.0) || points.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidTimeGrid("times must be finite and non-negative".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTimeGrid("times must be strictly increasing".into()));
        }
        Ok(TimeGrid { points, kind })
    }

    /// 400 log-spaced points over `[0.1, 1e4]`.
    pub fn default_log() -> Self {
        Self::logarithmic(0.1, 1.0e4, 400).expect("valid default grid")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Centered moving mean; windows shrink at the boundaries instead of padding.
pub fn moving_average(series: &[f64], window_points: usize) -> Result<Vec<f64>> {
    if window_points == 0 || window_points % 2 == 0 {
        return Err(Error::InvalidArgument(format!("moving-average window must be odd and >= 1, got {window_points}")));
    }
    let half = window_points / 2;
    let n = series.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            series[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect())
}

/// Ensemble of sampled evolutions with mean, smoothed mean and the
/// relaxation value (mean of the last 10 smoothed points).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchTrace {
    pub time_grid: TimeGrid,
    /// `values[state][time]`.
    pub values: Vec<Vec<f64>>,
    pub ensemble_mean: Vec<f64>,
    pub smoothed_mean: Vec<f64>,
    pub relaxation_value: f64,
    pub smoothing_window: usize,
}

impl QuenchTrace {
    pub fn from_values(time_grid: TimeGrid, values: Vec<Vec<f64>>, smoothing_window: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty ensemble".into()));
        }
        let nt = time_grid.len();
        if values.iter().any(|v| v.len() != nt) {
            return Err(Error::InvalidArgument("trace length does not match the time grid".into()));
        }
        let ns = values.len() as f64;
        let ensemble_mean: Vec<f64> =
            (0..nt).map(|t| values.iter().map(|v| v[t]).sum::<f64>() / ns).collect();
        let smoothed_mean = moving_average(&ensemble_mean, smoothing_window)?;
        let tail = &smoothed_mean[nt.saturating_sub(RELAXATION_POINTS)..];
        let relaxation_value = tail.iter().sum::<f64>() / tail.len() as f64;
        Ok(QuenchTrace { time_grid, values, ensemble_mean, smoothed_mean, relaxation_value, smoothing_window })
    }

    /// CSV with columns `time,raw_mean,smoothed_mean`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time,raw_mean,smoothed_mean")?;
        for ((t, r), s) in self.time_grid.points.iter().zip(&self.ensemble_mean).zip(&self.smoothed_mean) {
            writeln!(w, "{t:.10e},{r:.15e},{s:.15e}")?;
        }
        Ok(())
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }
}

/// Eigenbasis coefficients of a Fock state: row `rank(state)` of the
/// eigenvector matrix.
pub fn evolve_amplitudes(initial: &FockState, basis: &FockBasis, spectral: &SpectralData) -> Result<Vec<f64>> {
    let v = spectral.vectors()?;
    let k = basis.rank_state(initial)?;
    Ok(v.row(k).iter().copied().collect())
}

/// Eigenbasis coefficients of an arbitrary real state, `V^T psi`.
pub fn eigenbasis_coefficients(state: &[f64], spectral: &SpectralData) -> Result<Vec<f64>> {
    let v = spectral.vectors()?;
    if state.len() != v.nrows() {
        return Err(Error::InvalidArgument("state length does not match the spectrum".into()));
    }
    Ok(linalg::matvec_transposed(v.as_slice(), state, v.nrows(), v.ncols()))
}

/// `S_P(t) = |sum_m |c_m|^2 e^{-i E_m t}|^2` on the grid.
pub fn survival_probability(c: &[f64], eigenvalues: &[f64], grid: &TimeGrid) -> Vec<f64> {
    let weights: Vec<f64> = c.iter().map(|x| x * x).collect();
    survival_from_weights(&weights, eigenvalues, grid)
}

fn survival_from_weights(weights: &[f64], eigenvalues: &[f64], grid: &TimeGrid) -> Vec<f64> {
    // Shifting by a constant changes only the global phase.
    let shift = eigenvalues.iter().zip(weights).map(|(e, w)| e * w).sum::<f64>();
    let total: f64 = weights.iter().sum();
    grid.points
        .iter()
        .map(|&t| {
            let (mut re, mut im) = (0.0, 0.0);
            for (&w, &e) in weights.iter().zip(eigenvalues) {
                if w == 0.0 {
                    continue;
                }
                let (s, c) = ((e - shift) * t).sin_cos();
                re += w * c;
                im += w * s;
            }
            // dividing by the norm makes S_P(0) = 1 exactly
            let (re, im) = (re / total, im / total);
            re * re + im * im
        })
        .collect()
}

/// Survival-probability ensemble together with the eigenbasis weights that
/// produced it.
#[derive(Debug, Clone)]
pub struct SurvivalEnsemble {
    pub trace: QuenchTrace,
    /// `sum_m |c_m|^4` for each initial state.
    pub iprs: Vec<f64>,
    /// `|c_m|^2` for each initial state.
    pub weights: Vec<Vec<f64>>,
}

impl SurvivalEnsemble {
    pub fn mean_ipr(&self) -> f64 {
        self.iprs.iter().sum::<f64>() / self.iprs.len() as f64
    }
}

/// Survival probability of each coefficient vector on the grid.
pub fn survival_ensemble_from_coefficients(
    coefficients: &[Vec<f64>],
    eigenvalues: &[f64],
    grid: &TimeGrid,
    smoothing_window: usize,
) -> Result<SurvivalEnsemble> {
    let weights: Vec<Vec<f64>> =
        coefficients.iter().map(|c| c.iter().map(|x| x * x).collect()).collect();
    for w in &weights {
        let norm: f64 = w.iter().sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(norm));
        }
    }
    let values: Vec<Vec<f64>> =
        weights.par_iter().map(|w| survival_from_weights(w, eigenvalues, grid)).collect();
    let iprs = weights.iter().map(|w| w.iter().map(|x| x * x).sum()).collect();
    let trace = QuenchTrace::from_values(grid.clone(), values, smoothing_window)?;
    Ok(SurvivalEnsemble { trace, iprs, weights })
}

pub fn survival_ensemble(
    states: &[FockState],
    basis: &FockBasis,
    spectral: &SpectralData,
    grid: &TimeGrid,
    smoothing_window: usize,
) -> Result<SurvivalEnsemble> {
    let coefficients = states
        .iter()
        .map(|s| evolve_amplitudes(s, basis, spectral))
        .collect::<Result<Vec<_>>>()?;
    survival_ensemble_from_coefficients(&coefficients, &spectral.eigenvalues, grid, smoothing_window)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalAnalysis {
    /// Ensemble mean of `sum_m |c_m|^4`.
    pub ipr: f64,
    /// `1 / ipr`.
    pub pr: f64,
    /// Minimum of the smoothed ensemble mean inside the search window.
    pub sp_min: f64,
    pub t_min: f64,
    /// Minimum of the raw ensemble mean inside the same window.
    pub sp_min_raw: f64,
    /// `|1/sp_min - PR|`.
    pub hole_depth: f64,
    /// Same depth using the raw minimum.
    pub hole_depth_raw: f64,
    /// `hole_depth / (D/3)`.
    pub scaled_depth: f64,
    pub hole_window: (f64, f64),
}

/// Depth of the correlation hole `|1/S_P,min - PR|` over `window`.
pub fn correlation_hole_depth(
    ensemble: &SurvivalEnsemble,
    window: (f64, f64),
    dimension: usize,
) -> Result<SurvivalAnalysis> {
    hole_depth_from_trace(&ensemble.trace, ensemble.mean_ipr(), window, dimension)
}

pub fn hole_depth_from_trace(
    trace: &QuenchTrace,
    ipr: f64,
    window: (f64, f64),
    dimension: usize,
) -> Result<SurvivalAnalysis> {
    let inside: Vec<usize> = trace
        .time_grid
        .points
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= window.0 && t <= window.1)
        .map(|(i, _)| i)
        .collect();
    if inside.is_empty() {
        return Err(Error::WindowEmpty(window.0, window.1));
    }
    let argmin = |series: &[f64]| {
        inside.iter().copied().min_by(|&a, &b| series[a].total_cmp(&series[b])).expect("nonempty")
    };
    let i_s = argmin(&trace.smoothed_mean);
    let i_r = argmin(&trace.ensemble_mean);
    let sp_min = trace.smoothed_mean[i_s];
    let sp_min_raw = trace.ensemble_mean[i_r];
    let pr = 1.0 / ipr;
    let hole_depth = (1.0 / sp_min - pr).abs();
    Ok(SurvivalAnalysis {
        ipr,
        pr,
        sp_min,
        t_min: trace.time_grid.points[i_s],
        sp_min_raw,
        hole_depth,
        hole_depth_raw: (1.0 / sp_min_raw - pr).abs(),
        scaled_depth: hole_depth / (dimension as f64 / 3.0),
        hole_window: window,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Site-averaged single-site entanglement entropy.
    Entropy,
    /// Half-chain imbalance.
    Imbalance,
}

/// Real and imaginary parts of `|Psi(t)>` in the Fock basis, from its
/// eigenbasis coefficients.
pub fn evolve_state(c: &[f64], spectral: &SpectralData, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let v = spectral.vectors()?;
    let n = v.nrows();
    let mut b = vec![0.0; 2 * n];
    for (m, (&cm, &e)) in c.iter().zip(&spectral.eigenvalues).enumerate() {
        let (s, co) = (e * t).sin_cos();
        b[m] = cm * co;
        b[n + m] = -cm * s;
    }
    let mut out = vec![0.0; 2 * n];
    linalg::matmul(v.as_slice(), &b, &mut out, n, n, 2);
    let im = out.split_off(n);
    Ok((out, im))
}

// Times per dgemm batch; bounds the scratch memory at 4 * D * BATCH doubles.
const TIME_BATCH: usize = 64;

/// Fock-basis probabilities `|<k|Psi(t)>|^2` for each grid time, handed to
/// `visit(time_index, probabilities)`.
fn for_each_probability_vector<F>(c: &[f64], spectral: &SpectralData, grid: &TimeGrid, mut visit: F) -> Result<()>
where
    F: FnMut(usize, &[f64]),
{
    let v = spectral.vectors()?;
    let n = v.nrows();
    let e = &spectral.eigenvalues;
    let mut probs = vec![0.0; n];
    for (chunk_idx, times) in grid.points.chunks(TIME_BATCH).enumerate() {
        let nt = times.len();
        // columns [0, nt): c cos(Et); [nt, 2nt): -c sin(Et)
        let mut b = vec![0.0; n * 2 * nt];
        for (j, &t) in times.iter().enumerate() {
            for m in 0..n {
                let (s, co) = (e[m] * t).sin_cos();
                b[j * n + m] = c[m] * co;
                b[(nt + j) * n + m] = -c[m] * s;
            }
        }
        let mut psi = vec![0.0; n * 2 * nt];
        linalg::matmul(v.as_slice(), &b, &mut psi, n, n, 2 * nt);
        for j in 0..nt {
            let re = &psi[j * n..(j + 1) * n];
            let im = &psi[(nt + j) * n..(nt + j + 1) * n];
            for ((p, a), b) in probs.iter_mut().zip(re).zip(im) {
                *p = a * a + b * b;
            }
            visit(chunk_idx * TIME_BATCH + j, &probs);
        }
    }
    Ok(())
}

/// Time traces of the requested observables for every initial state.
/// Returned traces follow the order of `observables`.
pub fn observable_traces(
    states: &[FockState],
    basis: &FockBasis,
    spectral: &SpectralData,
    grid: &TimeGrid,
    observables: &[Observable],
    smoothing_window: usize,
) -> Result<Vec<QuenchTrace>> {
    if states.is_empty() {
        return Err(Error::InvalidArgument("empty initial ensemble".into()));
    }
    spectral.vectors()?;
    let nt = grid.len();
    let m = basis.n_sites() as f64;
    let per_state: Vec<Vec<Vec<f64>>> = states
        .par_iter()
        .map(|s| {
            let c = evolve_amplitudes(s, basis, spectral)?;
            let mut out = vec![vec![0.0; nt]; observables.len()];
            for_each_probability_vector(&c, spectral, grid, |t, probs| {
                for (o, row) in observables.iter().zip(out.iter_mut()) {
                    row[t] = match o {
                        Observable::Entropy => site_entropies_from_probabilities(probs, basis).iter().sum::<f64>() / m,
                        Observable::Imbalance => imbalance_from_probabilities(probs, basis),
                    };
                }
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    observables
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let values = per_state.iter().map(|o| o[k].clone()).collect();
            QuenchTrace::from_values(grid.clone(), values, smoothing_window)
        })
        .collect()
}

pub fn observable_trace(
    states: &[FockState],
    basis: &FockBasis,
    spectral: &SpectralData,
    grid: &TimeGrid,
    observable: Observable,
    smoothing_window: usize,
) -> Result<QuenchTrace> {
    Ok(observable_traces(states, basis, spectral, grid, &[observable], smoothing_window)?.remove(0))
}

/// Relaxation values of `observables`, evolving only the grid tail that the
/// last smoothed points depend on. Agrees with the `relaxation_value` of
/// [`observable_traces`] on the full grid at a fraction of the cost.
pub fn observable_relaxation_values(
    states: &[FockState],
    basis: &FockBasis,
    spectral: &SpectralData,
    grid: &TimeGrid,
    observables: &[Observable],
    smoothing_window: usize,
) -> Result<Vec<f64>> {
    let start = grid.len().saturating_sub(RELAXATION_POINTS + smoothing_window / 2);
    let tail = TimeGrid::new(grid.points[start..].to_vec(), grid.kind)?;
    let traces = observable_traces(states, basis, spectral, &tail, observables, smoothing_window)?;
    Ok(traces.iter().map(|t| t.relaxation_value).collect())
}

/// GOE two-level form factor.
pub fn goe_two_level_form_factor(tau: f64) -> f64 {
    let tau = tau.abs();
    if tau <= 1.0 {
        1.0 - 2.0 * tau + tau * (1.0 + 2.0 * tau).ln()
    } else {
        -1.0 + tau * ((2.0 * tau + 1.0) / (2.0 * tau - 1.0)).ln()
    }
}

/// Smoothed local density of states on an energy grid plus the derived
/// scalars entering the dip-ramp-plateau curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticCurveInputs {
    /// Uniform energy grid.
    pub energies: Vec<f64>,
    /// `rho(E)` on `energies`, integrating to 1.
    pub ldos: Vec<f64>,
    /// Mean level density where `rho` is supported.
    pub mean_dos: f64,
    /// Effective number of participating levels.
    pub eta: f64,
    pub ipr: f64,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CurveOptions {
    /// Fixed kernel bandwidth; Silverman's rule with a level-spacing floor
    /// when unset.
    pub bandwidth: Option<f64>,
}

fn trapezoid(y: &[f64], dx: f64) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    dx * (y.iter().sum::<f64>() - 0.5 * (y[0] + y[y.len() - 1]))
}

fn gaussian_kde(points: &[f64], weights: &[f64], grid: &[f64], h: f64) -> Vec<f64> {
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    let reach = 8.0 * h;
    grid.par_iter()
        .map(|&x| {
            points
                .iter()
                .zip(weights)
                .filter(|(&p, &w)| w != 0.0 && (x - p).abs() < reach)
                .map(|(&p, &w)| {
                    let z = (x - p) / h;
                    w * norm * (-0.5 * z * z).exp()
                })
                .sum()
        })
        .collect()
}

/// Estimates `rho(E)`, `nu(E)`, the mean density and `eta` from the
/// ensemble-averaged weights `|c_m|^2` over the levels `E_m`.
pub fn estimate_curve_inputs(
    weights: &[Vec<f64>],
    eigenvalues: &[f64],
    opts: CurveOptions,
) -> Result<AnalyticCurveInputs> {
    if weights.is_empty() {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    let n = eigenvalues.len();
    if n < 2 {
        return Err(Error::DegenerateSpectrum("need at least two levels".into()));
    }
    let ns = weights.len() as f64;
    let mut w = vec![0.0; n];
    for row in weights {
        for (a, b) in w.iter_mut().zip(row) {
            *a += b / ns;
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let ipr = weights.iter().map(|r| r.iter().map(|x| x * x).sum::<f64>()).sum::<f64>() / ns;

    let mean: f64 = w.iter().zip(eigenvalues).map(|(w, e)| w * e).sum();
    let var: f64 = w.iter().zip(eigenvalues).map(|(w, e)| w * (e - mean).powi(2)).sum();
    let n_eff = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
    // local spacing at each level, weighted by rho
    let spacing: f64 = (0..n)
        .map(|m| {
            let lo = eigenvalues[m.saturating_sub(1)];
            let hi = eigenvalues[(m + 1).min(n - 1)];
            let span = if m == 0 || m == n - 1 { hi - lo } else { 0.5 * (hi - lo) };
            w[m] * span
        })
        .sum();
    if !(spacing > 0.0) {
        return Err(Error::DegenerateSpectrum("vanishing level spacing under the weights".into()));
    }
    let h = match opts.bandwidth {
        Some(h) if h > 0.0 => h,
        Some(h) => return Err(Error::InvalidArgument(format!("bandwidth must be > 0, got {h}"))),
        None => (1.06 * var.sqrt() * n_eff.powf(-0.2)).max(2.0 * spacing),
    };

    let (lo, hi) = w
        .iter()
        .zip(eigenvalues)
        .filter(|(&w, _)| w > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &e)| (lo.min(e), hi.max(e)));
    let (lo, hi) = (lo - 6.0 * h, hi + 6.0 * h);
    let step = h / 8.0;
    let npts = (((hi - lo) / step).ceil() as usize + 1).max(3);
    let energies: Vec<f64> = (0..npts).map(|k| lo + k as f64 * step).collect();
    let mut ldos = gaussian_kde(eigenvalues, &w, &energies, h);
    let norm = trapezoid(&ldos, step);
    ldos.iter_mut().for_each(|x| *x /= norm);
    let ones = vec![1.0; n];
    let dos = gaussian_kde(eigenvalues, &ones, &energies, h);

    let mean_dos = trapezoid(&ldos.iter().zip(&dos).map(|(r, v)| r * v).collect::<Vec<_>>(), step);
    let inv_eta = trapezoid(
        &ldos.iter().zip(&dos).map(|(r, v)| if *v > 1e-300 { r * r / v } else { 0.0 }).collect::<Vec<_>>(),
        step,
    );
    Ok(AnalyticCurveInputs { energies, ldos, mean_dos, eta: 1.0 / inv_eta, ipr, bandwidth: h })
}

impl AnalyticCurveInputs {
    fn step(&self) -> f64 {
        self.energies[1] - self.energies[0]
    }

    /// `|int dE rho(E) e^{-iEt}|^2` by trapezoidal quadrature. Beyond the
    /// grid's Nyquist time `pi / dE` the transform of the smoothed density is
    /// below `exp(-(pi h / dE)^2)` and is returned as 0.
    pub fn smooth_survival(&self, t: f64) -> f64 {
        let step = self.step();
        if t.abs() > std::f64::consts::PI / step {
            return 0.0;
        }
        let center = self.energies[self.energies.len() / 2];
        let (mut re, mut im) = (0.0, 0.0);
        let last = self.energies.len() - 1;
        for (k, (&e, &r)) in self.energies.iter().zip(&self.ldos).enumerate() {
            let wq = if k == 0 || k == last { 0.5 } else { 1.0 };
            let (s, c) = ((e - center) * t).sin_cos();
            re += wq * r * c;
            im += wq * r * s;
        }
        (re * re + im * im) * step * step
    }
}

/// `<S_P(t)> = (1-IPR)/(eta-1) [eta S_bc(t) - b2(t / (2 pi nu))] + IPR`.
pub fn analytic_survival_curve(inputs: &AnalyticCurveInputs, grid: &TimeGrid) -> Vec<f64> {
    let ipr = inputs.ipr;
    let prefactor = if inputs.eta > 1.0 + 1e-12 { (1.0 - ipr) / (inputs.eta - 1.0) } else { 0.0 };
    let heisenberg = 2.0 * std::f64::consts::PI * inputs.mean_dos;
    grid.points
        .iter()
        .map(|&t| {
            let sbc = inputs.smooth_survival(t);
            prefactor * (inputs.eta * sbc - goe_two_level_form_factor(t / heisenberg)) + ipr
        })
        .collect()
}

/// Average of the per-state analytic curves.
pub fn ensemble_analytic_curve(
    weights: &[Vec<f64>],
    eigenvalues: &[f64],
    grid: &TimeGrid,
    opts: CurveOptions,
) -> Result<Vec<f64>> {
    let curves = weights
        .par_iter()
        .map(|w| {
            let inputs = estimate_curve_inputs(std::slice::from_ref(w), eigenvalues, opts)?;
            Ok(analytic_survival_curve(&inputs, grid))
        })
        .collect::<Result<Vec<_>>>()?;
    let ns = curves.len() as f64;
    Ok((0..grid.len()).map(|t| curves.iter().map(|c| c[t]).sum::<f64>() / ns).collect())
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::basis::BasisSpec;
    use crate::diagnostics::{fock_imbalance, participation_ratio};
    use crate::hamiltonian::{HamiltonianMatrix, ModelParams};
    use crate::initial_states::{maximally_imbalanced_states, ImbalanceProtocol};
    use crate::spectrum::{diagonalize, DiagonalizeOptions};

    #[test]
    fn tail_relaxation_matches_full_trace() {
        let (b, _, s) = setup(5, 5, 0.5, 1.0);
        let states = maximally_imbalanced_states(&b, &ImbalanceProtocol::default()).unwrap().states;
        let grid = TimeGrid::logarithmic(0.1, 1.0e3, 60).unwrap();
        let obs = [Observable::Entropy, Observable::Imbalance];
        let full = observable_traces(&states, &b, &s, &grid, &obs, 9).unwrap();
        let tail = observable_relaxation_values(&states, &b, &s, &grid, &obs, 9).unwrap();
        for (f, t) in full.iter().zip(&tail) {
            assert_abs_diff_eq!(f.relaxation_value, *t, epsilon = 1e-12);
        }
    }

    fn setup(n: usize, m: usize, u: f64, d: f64) -> (FockBasis, HamiltonianMatrix, SpectralData) {
        let spec = BasisSpec::new(n, m).unwrap();
        let b = FockBasis::new(spec).unwrap();
        let p = ModelParams::new(1.0, u, d).unwrap();
        let h = HamiltonianMatrix::build(&b, &p);
        let s = diagonalize(&h, p, spec, DiagonalizeOptions::default()).unwrap();
        (b, h, s)
    }

    #[test]
    fn grids() {
        let g = TimeGrid::logarithmic(0.1, 1e4, 400).unwrap();
        assert_eq!(g.len(), 400);
        assert_abs_diff_eq!(g.points[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(g.points[399], 1e4, epsilon = 1e-9);
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0], GridKind::Custom).is_err());
        assert!(TimeGrid::new(vec![-1.0, 1.0], GridKind::Custom).is_err());
        assert!(TimeGrid::logarithmic(0.0, 1.0, 10).is_err());
        assert_eq!(TimeGrid::linear(0.0, 1.0, 3).unwrap().points, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn moving_average_examples() {
        let x = [1.0, 5.0, -2.0, 4.0];
        assert_eq!(moving_average(&x, 1).unwrap(), x.to_vec());
        assert_eq!(moving_average(&[2.0; 6], 5).unwrap(), vec![2.0; 6]);
        assert_eq!(moving_average(&[0.0, 3.0, 0.0], 3).unwrap(), vec![1.5, 1.0, 1.5]);
        assert!(moving_average(&x, 2).is_err());
        assert!(moving_average(&x, 0).is_err());
    }

    #[test]
    fn relaxation_uses_last_ten_smoothed_points() {
        let grid = TimeGrid::linear(0.0, 19.0, 20).unwrap();
        let vals: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let tr = QuenchTrace::from_values(grid, vec![vals.clone(), vals], 1).unwrap();
        assert_abs_diff_eq!(tr.relaxation_value, 14.5);
    }

    #[test]
    fn two_site_single_boson_splits_evenly() {
        let (b, _, s) = setup(1, 2, 0.0, 0.0);
        let c = evolve_amplitudes(&FockState(vec![1, 0]), &b, &s).unwrap();
        assert_abs_diff_eq!(c[0] * c[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(c[1] * c[1], 0.5, epsilon = 1e-14);
        // gap 2: S_P = cos^2(t)
        let grid = TimeGrid::linear(0.0, 10.0, 101).unwrap();
        let sp = survival_probability(&c, &s.eigenvalues, &grid);
        for (t, v) in grid.points.iter().zip(&sp) {
            assert_abs_diff_eq!(*v, t.cos().powi(2), epsilon = 1e-12);
        }
    }

    #[test]
    fn two_level_closed_form() {
        let s = 0.5f64.sqrt();
        let gap = 0.73;
        let grid = TimeGrid::linear(0.0, 40.0, 200).unwrap();
        let sp = survival_probability(&[s, s], &[0.3, 0.3 + gap], &grid);
        for (t, v) in grid.points.iter().zip(&sp) {
            assert_abs_diff_eq!(*v, (gap * t / 2.0).cos().powi(2), epsilon = 1e-12);
        }
    }

    #[test]
    fn eigenstate_initial_condition_survives() {
        let (_, _, s) = setup(4, 4, 0.5, 0.5);
        let v = s.vectors().unwrap();
        let c = eigenbasis_coefficients(v.column(7).as_slice(), &s).unwrap();
        assert_abs_diff_eq!(c[7].abs(), 1.0, epsilon = 1e-12);
        let sp = survival_probability(&c, &s.eigenvalues, &TimeGrid::default_log());
        assert!(sp.iter().all(|&x| (x - 1.0).abs() < 1e-10));
    }

    #[test]
    fn survival_bounds_and_long_time_average() {
        let (b, _, s) = setup(6, 6, 0.5, 0.5);
        let grid = TimeGrid::new(
            std::iter::once(0.0).chain(TimeGrid::default_log().points).collect(),
            GridKind::Custom,
        )
        .unwrap();
        let state = b.state(200);
        let c = evolve_amplitudes(&state, &b, &s).unwrap();
        assert_abs_diff_eq!(c.iter().map(|x| x * x).sum::<f64>(), 1.0, epsilon = 1e-10);
        let sp = survival_probability(&c, &s.eigenvalues, &grid);
        assert_eq!(sp[0], 1.0);
        assert!(sp.iter().all(|&x| x > 0.0 && x <= 1.0 + 1e-12));
        let ipr: f64 = c.iter().map(|x| x.powi(4)).sum();
        let tail: Vec<f64> = grid.points.iter().zip(&sp).filter(|(t, _)| **t >= 1e3).map(|(_, v)| *v).collect();
        let n = tail.len() as f64;
        let mean = tail.iter().sum::<f64>() / n;
        let se = (tail.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt();
        assert!((mean - ipr).abs() < 3.0 * se, "mean {mean} ipr {ipr} se {se}");
    }

    #[test]
    fn norm_and_energy_are_conserved() {
        let (b, h, s) = setup(5, 5, 0.5, 0.8);
        let k = b.rank(&[0, 1, 1, 2, 1]).unwrap();
        let c = evolve_amplitudes(&b.state(k), &b, &s).unwrap();
        let e0 = h.diagonal[k];
        for t in [0.0, 0.3, 7.0, 150.0, 9000.0] {
            let (re, im) = evolve_state(&c, &s, t).unwrap();
            let norm: f64 = re.iter().chain(&im).map(|x| x * x).sum();
            assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-10);
            let hre = h.matvec(&re);
            let him = h.matvec(&im);
            let e: f64 = re.iter().zip(&hre).chain(im.iter().zip(&him)).map(|(a, b)| a * b).sum();
            assert!(((e - e0) / e0).abs() < 1e-8);
        }
    }

    #[test]
    fn observable_traces_start_at_static_values() {
        let (b, _, s) = setup(6, 6, 0.5, 0.5);
        let set = maximally_imbalanced_states(&b, &ImbalanceProtocol::default()).unwrap();
        let grid = TimeGrid::new(vec![0.0, 0.5, 1.0, 5.0, 20.0], GridKind::Custom).unwrap();
        let traces =
            observable_traces(&set.states, &b, &s, &grid, &[Observable::Entropy, Observable::Imbalance], 1).unwrap();
        let (ent, imb) = (&traces[0], &traces[1]);
        for (k, st) in set.states.iter().enumerate() {
            assert!(ent.values[k][0].abs() < 1e-12);
            assert_abs_diff_eq!(imb.values[k][0], fock_imbalance(st.occupations(), 3), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(imb.ensemble_mean[0], -1.0, epsilon = 1e-12);
        assert!(ent.ensemble_mean[4] > 0.5);
        // single-observable path agrees
        let alone = observable_trace(&set.states, &b, &s, &grid, Observable::Imbalance, 1).unwrap();
        for (a, b) in alone.ensemble_mean.iter().zip(&imb.ensemble_mean) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn batched_probabilities_match_direct_evolution() {
        let (b, _, s) = setup(4, 5, 0.4, 0.9);
        let c = evolve_amplitudes(&b.state(3), &b, &s).unwrap();
        let grid = TimeGrid::logarithmic(0.1, 100.0, 150).unwrap();
        let mut got = Vec::new();
        for_each_probability_vector(&c, &s, &grid, |t, p| got.push((t, p.to_vec()))).unwrap();
        assert_eq!(got.len(), 150);
        for (t, p) in got.iter().step_by(37) {
            let (re, im) = evolve_state(&c, &s, grid.points[*t]).unwrap();
            for k in 0..p.len() {
                assert_abs_diff_eq!(p[k], re[k] * re[k] + im[k] * im[k], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn form_factor_properties() {
        assert_eq!(goe_two_level_form_factor(0.0), 1.0);
        let below = goe_two_level_form_factor(1.0);
        let above = goe_two_level_form_factor(1.0 + 1e-12);
        assert!((below - above).abs() < 1e-9);
        assert_abs_diff_eq!(below, 3f64.ln() - 1.0, epsilon = 1e-15);
        let mut prev = 1.0;
        for k in 1..2000 {
            let v = goe_two_level_form_factor(k as f64 * 0.01);
            assert!(v < prev && v > 0.0);
            prev = v;
        }
        assert!(goe_two_level_form_factor(1e4) < 1e-8);
    }

    #[test]
    fn gaussian_ldos_transform() {
        let sigma: f64 = 1.7;
        let step = 0.01;
        let energies: Vec<f64> = (-1500..=1500).map(|k| k as f64 * step).collect();
        let ldos: Vec<f64> = energies
            .iter()
            .map(|e| (-(e * e) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt()))
            .collect();
        let inputs = AnalyticCurveInputs { energies, ldos, mean_dos: 10.0, eta: 50.0, ipr: 0.05, bandwidth: 0.1 };
        for t in [0.0, 0.1, 0.3, 0.6, 1.0, 2.0] {
            assert_abs_diff_eq!(inputs.smooth_survival(t), (-sigma * sigma * t * t).exp(), epsilon = 1e-6);
        }
        let grid = TimeGrid::new(vec![0.0, 1e8], GridKind::Custom).unwrap();
        let curve = analytic_survival_curve(&inputs, &grid);
        assert_abs_diff_eq!(curve[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(curve[1], 0.05, epsilon = 1e-9);
    }

    #[test]
    fn flat_weights_give_expected_integrals() {
        // 600 unit-spaced levels, weight spread evenly over the middle 200
        let e: Vec<f64> = (0..600).map(|k| k as f64).collect();
        let n = 200;
        let w: Vec<f64> = (0..600).map(|k| if (200..400).contains(&k) { 1.0 / n as f64 } else { 0.0 }).collect();
        let inputs = estimate_curve_inputs(&[w.clone()], &e, CurveOptions { bandwidth: Some(2.0) }).unwrap();
        assert_abs_diff_eq!(inputs.mean_dos, 1.0, epsilon = 1e-3);
        assert!((inputs.eta / n as f64 - 1.0).abs() < 0.02, "eta {}", inputs.eta);
        assert_abs_diff_eq!(inputs.ipr, 1.0 / n as f64, epsilon = 1e-15);
        let default = estimate_curve_inputs(&[w], &e, CurveOptions::default()).unwrap();
        assert!(default.bandwidth >= 2.0);
        assert!((default.mean_dos - 1.0).abs() < 0.05);
        assert!((default.eta / n as f64 - 1.0).abs() < 0.3);
    }

    #[test]
    fn dominant_level_gives_flat_curve() {
        let e: Vec<f64> = (0..50).map(|k| k as f64 * 0.3).collect();
        let mut w = vec![0.0; 50];
        w[20] = 1.0;
        let inputs = estimate_curve_inputs(&[w], &e, CurveOptions::default()).unwrap();
        assert_eq!(inputs.ipr, 1.0);
        let curve = analytic_survival_curve(&inputs, &TimeGrid::default_log());
        assert!(curve.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn analytic_curve_limits_on_model() {
        let (b, _, s) = setup(6, 6, 0.5, 0.5);
        let states: Vec<FockState> = (100..110).map(|k| b.state(k)).collect();
        let grid = TimeGrid::new(vec![0.0, 1.0, 1e9], GridKind::Custom).unwrap();
        let ens = survival_ensemble(&states, &b, &s, &grid, 1).unwrap();
        let inputs = estimate_curve_inputs(&ens.weights, &s.eigenvalues, CurveOptions::default()).unwrap();
        assert!(inputs.eta > 1.0 && inputs.mean_dos > 0.0);
        let area = trapezoid(&inputs.ldos, inputs.step());
        assert_abs_diff_eq!(area, 1.0, epsilon = 1e-12);
        let curve = analytic_survival_curve(&inputs, &grid);
        assert_abs_diff_eq!(curve[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(curve[2], inputs.ipr, epsilon = 1e-6 * inputs.ipr);
        let per_state = ensemble_analytic_curve(&ens.weights, &s.eigenvalues, &grid, CurveOptions::default()).unwrap();
        assert_abs_diff_eq!(per_state[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(per_state[2], ens.mean_ipr(), epsilon = 1e-6 * ens.mean_ipr());
    }

    #[test]
    fn hole_depth_on_flat_trace_is_zero() {
        let grid = TimeGrid::default_log();
        let ipr = 0.01;
        let values = vec![vec![ipr; grid.len()]; 3];
        let tr = QuenchTrace::from_values(grid, values, 9).unwrap();
        let a = hole_depth_from_trace(&tr, ipr, DEFAULT_HOLE_WINDOW, 300).unwrap();
        assert!(a.hole_depth < 1e-9);
        assert!(matches!(hole_depth_from_trace(&tr, ipr, (2e4, 3e4), 300), Err(Error::WindowEmpty(..))));
    }

    #[test]
    fn poisson_versus_goe_hole() {
        use crate::random_matrix::{goe_matrix, poisson_spectrum, random_unit_vector};
        use crate::spectrum::dense_eigenvalues;
        // Each random state evolves under its own spectrum realization, so the
        // ensemble mean averages the (non-self-averaging) form factor too.
        let dim = 200;
        let realizations = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = TimeGrid::logarithmic(0.01, 1e4, 500).unwrap();
        let window = (0.5, 200.0);
        let mut goe_values = Vec::new();
        let mut poisson_values = Vec::new();
        let mut ipr = 0.0;
        for _ in 0..realizations {
            let c = random_unit_vector(dim, &mut rng);
            ipr += c.iter().map(|x| x.powi(4)).sum::<f64>() / realizations as f64;
            let goe = dense_eigenvalues(&goe_matrix(dim, &mut rng)).unwrap();
            let width = goe[dim - 1] - goe[0];
            let levels: Vec<f64> = poisson_spectrum(dim, &mut rng).iter().map(|x| x * width).collect();
            goe_values.push(survival_probability(&c, &goe, &grid));
            poisson_values.push(survival_probability(&c, &levels, &grid));
        }
        let p = QuenchTrace::from_values(grid.clone(), poisson_values, 9).unwrap();
        let g = QuenchTrace::from_values(grid, goe_values, 9).unwrap();
        let pa = hole_depth_from_trace(&p, ipr, window, dim).unwrap();
        let ga = hole_depth_from_trace(&g, ipr, window, dim).unwrap();
        assert!(pa.scaled_depth < 0.1, "poisson {}", pa.scaled_depth);
        assert!((ga.scaled_depth - 0.5).abs() < 0.15, "goe {}", ga.scaled_depth);
        let s = 0.5f64.sqrt();
        assert_abs_diff_eq!(participation_ratio(&[s, s]).unwrap(), 2.0, epsilon = 1e-12);
    }
}
