//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! Set `TBH_EIGEN_CACHE` to a directory to reuse diagonalizations between
//! runs.

use std::collections::{BTreeMap, HashMap};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tbh_core::basis::{dimension, BasisSpec, FockBasis};
use tbh_core::cache::EigenCache;
use tbh_core::config::SweepConfig;
use tbh_core::diagnostics::{page_value, single_site_entropy};
use tbh_core::hamiltonian::{HamiltonianMatrix, ModelParams};
use tbh_core::initial_states::{maximally_imbalanced_states, ImbalanceProtocol};
use tbh_core::quench::{
    analytic_survival_curve, estimate_curve_inputs, evolve_amplitudes, evolve_state, goe_two_level_form_factor,
    hole_depth_from_trace, survival_ensemble_from_coefficients, survival_probability, CurveOptions, GridKind,
    TimeGrid, DEFAULT_SMOOTHING_WINDOW,
};
use tbh_core::random_matrix::{goe_matrix, poisson_spectrum, random_unit_vector};
use tbh_core::spectrum::{
    dense_eigen, dense_eigenvalues, diagonalize, mean_gap_ratio, DiagonalizeOptions, DEFAULT_EDGE_DISCARD,
    R_GOE, R_POISSON,
};
use tbh_core::sweep::{evaluate_point, spectral_data, PointRecord, StateSets};

const TILT_CUT: [f64; 6] = [0.01, 0.5, 0.8, 1.6, 2.4, 3.2];
const INTERACTION_CUT: [f64; 7] = [0.01, 0.5, 0.8, 1.2, 1.6, 2.4, 3.2];

struct Report {
    results: Vec<(u32, bool)>,
}

impl Report {
    fn record(&mut self, id: u32, title: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {tag}: {title}: {detail}");
        self.results.push((id, pass));
    }
}

fn dynamics_config() -> SweepConfig {
    SweepConfig::from_toml(
        r#"
        system_sizes = [[8, 8]]
        u_values = [0.5]
        d_values = [0.5]
        diagnostics = ["gap_ratio", "entropy", "survival", "entropy_dynamics", "imbalance_dynamics"]
        "#,
    )
    .and_then(SweepConfig::validate)
    .expect("built-in config is valid")
}

/// Full-diagnostic points at N = M = n, keyed by (U, D) bit patterns.
struct Points {
    n: usize,
    basis: FockBasis,
    sets: StateSets,
    cfg: SweepConfig,
    cache: Option<EigenCache>,
    done: BTreeMap<(u64, u64), PointRecord>,
}

impl Points {
    fn new(n: usize) -> Self {
        let basis = FockBasis::new(BasisSpec::new(n, n).unwrap()).unwrap();
        let cfg = dynamics_config();
        let sets = StateSets::for_config(&basis, &cfg).unwrap();
        Points { n, basis, sets, cfg, cache: EigenCache::from_env(), done: BTreeMap::new() }
    }

    fn get(&mut self, u: f64, d: f64) -> &PointRecord {
        let key = (u.to_bits(), d.to_bits());
        if !self.done.contains_key(&key) {
            let t0 = Instant::now();
            let r = evaluate_point(&self.basis, &self.sets, u, d, &self.cfg, self.cache.as_ref()).unwrap();
            println!(
                "  N={} U={u} D={d}: r={:.4} S/SPV={:.4} hole={:.4} S_relax={:.4} I_relax={:.4} ({:.0} s)",
                self.n,
                r.mean_r.unwrap(),
                r.entropy_over_page.unwrap(),
                r.hole_depth_scaled.unwrap(),
                r.entropy_relax_over_page.unwrap(),
                r.imbalance_relax.unwrap(),
                t0.elapsed().as_secs_f64()
            );
            self.done.insert(key, r);
        }
        &self.done[&key]
    }
}

fn criterion_1(rep: &mut Report) {
    let oracle = |n: u128, m: u128| -> u128 {
        // C(n + m - 1, n) by the multiplicative formula
        (1..=n).fold(1u128, |acc, k| acc * (m - 1 + k) / k)
    };
    let d8 = dimension(BasisSpec::new(8, 8).unwrap()).unwrap();
    let d10 = dimension(BasisSpec::new(10, 10).unwrap()).unwrap();
    let pass = d8 == 6435 && d10 == 92378 && d8 as u128 == oracle(8, 8) && d10 as u128 == oracle(10, 10);
    rep.record(1, "Hilbert-space dimensions", pass, format!("dim(8,8)={d8}, dim(10,10)={d10}"));
}

fn criterion_2(rep: &mut Report) {
    let want = [(7, 6), (8, 31), (9, 20), (10, 101)];
    let mut got = Vec::new();
    for (n, _) in want {
        let b = FockBasis::new(BasisSpec::new(n, n).unwrap()).unwrap();
        let proto = ImbalanceProtocol { max_states: None, ..ImbalanceProtocol::default() };
        got.push(maximally_imbalanced_states(&b, &proto).unwrap().len());
    }
    let pass = want.iter().zip(&got).all(|((_, w), g)| w == g);
    rep.record(2, "imbalance-protocol state counts", pass, format!("N=7..10 -> {got:?}"));
}

fn criterion_3(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let samples = 50;
    let mut goe = 0.0;
    let mut poisson = 0.0;
    for _ in 0..samples {
        let e = dense_eigenvalues(&goe_matrix(500, &mut rng)).unwrap();
        goe += mean_gap_ratio(&e, DEFAULT_EDGE_DISCARD).unwrap().mean_r / samples as f64;
        let p = poisson_spectrum(500, &mut rng);
        poisson += mean_gap_ratio(&p, DEFAULT_EDGE_DISCARD).unwrap().mean_r / samples as f64;
    }
    let pass = (0.525..=0.545).contains(&goe) && (0.376..=0.396).contains(&poisson);
    rep.record(3, "gap-ratio references", pass, format!("GOE <r>={goe:.4}, Poisson <r>={poisson:.4}"));
}

fn criterion_4(rep: &mut Report, p8: &mut Points) {
    let chaotic = p8.get(0.5, 0.5).mean_r.unwrap();
    let b = FockBasis::new(BasisSpec::new(8, 8).unwrap()).unwrap();
    let params = ModelParams::new(1.0, 0.5, 4.0).unwrap();
    let regular = spectral_data(&b, params, false, p8.cache.as_ref()).unwrap();
    let regular = mean_gap_ratio(&regular.eigenvalues, DEFAULT_EDGE_DISCARD).unwrap().mean_r;
    let pass = (chaotic - R_GOE).abs() <= 0.02 && (regular - R_POISSON).abs() <= 0.02;
    rep.record(
        4,
        "model chaos point",
        pass,
        format!("U=D=0.5: <r>={chaotic:.4}; U=0.5, D=4: <r>={regular:.4}"),
    );
}

fn criterion_5(rep: &mut Report, p8: &mut Points) {
    let (n, v) = (8.0f64, 8.0f64);
    let f = 1.0 / v;
    let density = n / v;
    let independent = v * f * ((density + 1.0) * (density + 1.0).ln() - density * density.ln())
        + 0.5 * (f + (1.0 - f).ln());
    let pv = page_value(8, 8);
    let ratio = p8.get(0.5, 0.01).entropy_over_page.unwrap();
    let pass = (pv - independent).abs() <= 1e-12 && ratio > 0.9 && ratio <= 1.0;
    rep.record(5, "Page value", pass, format!("S_PV(8,8)={pv:.15}, central S/S_PV at D=0.01: {ratio:.4}"));
}

fn criterion_6(rep: &mut Report) {
    let dim = 500;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (e, v) = dense_eigen(&goe_matrix(dim, &mut rng)).unwrap();
    let coeffs: Vec<Vec<f64>> = (0..50)
        .map(|_| v.tr_mul(&DVector::from_vec(random_unit_vector(dim, &mut rng))).as_slice().to_vec())
        .collect();
    let grid = TimeGrid::logarithmic(0.01, 1e4, 400).unwrap();
    let ens = survival_ensemble_from_coefficients(&coeffs, &e, &grid, DEFAULT_SMOOTHING_WINDOW).unwrap();
    // The GOE matrix has about 1/20 of the model's level density at N=8, so
    // its hole opens and closes that much earlier.
    let a = hole_depth_from_trace(&ens.trace, ens.mean_ipr(), (1.0, 1e3), dim).unwrap();
    let pass = (0.35..=0.65).contains(&a.scaled_depth);
    rep.record(
        6,
        "GOE correlation-hole depth",
        pass,
        format!("depth/(D/3)={:.4} at t={:.2}", a.scaled_depth, a.t_min),
    );
}

fn criterion_7(rep: &mut Report, p7: &mut Points, p8: &mut Points) {
    let mut pass = true;
    let mut detail = Vec::new();
    for p in [p7, p8] {
        let holes: Vec<f64> = TILT_CUT.iter().map(|&d| p.get(0.5, d).hole_depth_scaled.unwrap()).collect();
        let weak = TILT_CUT.iter().zip(&holes).filter(|(d, _)| **d <= 0.8).all(|(_, h)| (0.1..=0.6).contains(h));
        let strong = TILT_CUT.iter().zip(&holes).filter(|(d, _)| **d >= 2.4).all(|(_, h)| *h < 0.05);
        // finite at D = 0.8, already near zero at D = 1.6
        let at = |d: f64| holes[TILT_CUT.iter().position(|&x| x == d).unwrap()];
        let drop = at(0.8) >= 0.1 && at(1.6) < 0.05;
        pass &= weak && strong && drop;
        let list: Vec<String> = TILT_CUT.iter().zip(&holes).map(|(d, h)| format!("{d}:{h:.3}")).collect();
        detail.push(format!("N={} [{}]", p.n, list.join(" ")));
    }
    rep.record(7, "hole collapse along the tilt cut", pass, detail.join("; "));
}

fn criterion_8(rep: &mut Report, p7: &mut Points, p8: &mut Points) {
    let mut pass = true;
    let mut detail = Vec::new();
    for p in [p7, p8] {
        let n = p.n as f64;
        let rows: Vec<(f64, f64, f64)> = INTERACTION_CUT
            .iter()
            .map(|&u| {
                let r = p.get(u, 0.5);
                (u / n, r.hole_depth_scaled.unwrap(), r.entropy_relax_over_page.unwrap())
            })
            .collect();
        let argmax = |f: fn(&(f64, f64, f64)) -> f64| {
            rows.iter().max_by(|a, b| f(a).total_cmp(&f(b))).unwrap().0
        };
        let hole_peak = argmax(|r| r.1);
        let entropy_peak = argmax(|r| r.2);
        let inside = |x: f64| (0.08..=0.25).contains(&x);
        pass &= inside(hole_peak) && inside(entropy_peak);
        detail.push(format!(
            "N={}: hole peak U/N={hole_peak:.3}, entropy peak U/N={entropy_peak:.3} [{}]",
            p.n,
            rows.iter().map(|(x, h, s)| format!("{x:.3}:{h:.3}/{s:.4}")).collect::<Vec<_>>().join(" ")
        ));
    }
    rep.record(8, "interaction-cut maxima", pass, detail.join("; "));
}

fn criterion_9(rep: &mut Report, p8: &mut Points) {
    let weak = p8.get(0.5, 0.01).imbalance_relax.unwrap();
    let strong = p8.get(0.5, 3.2).imbalance_relax.unwrap();
    let pass = (-0.1..=0.1).contains(&weak) && (-1.0..=-0.8).contains(&strong);
    rep.record(9, "imbalance relaxation extremes", pass, format!("D=0.01: {weak:.4}, D=3.2: {strong:.4}"));
}

fn partial_trace_entropy(c: &[f64], b: &FockBasis, site: usize) -> f64 {
    let mut groups: HashMap<Vec<u32>, Vec<(usize, f64)>> = HashMap::new();
    for (k, occ) in b.iter().enumerate() {
        let mut rest = occ.to_vec();
        let local = rest.remove(site - 1) as usize;
        groups.entry(rest).or_default().push((local, c[k]));
    }
    let n = b.n_bosons();
    let mut rho = DMatrix::<f64>::zeros(n + 1, n + 1);
    for members in groups.values() {
        for &(a, ca) in members {
            for &(bb, cb) in members {
                rho[(a, bb)] += ca * cb;
            }
        }
    }
    let eig = nalgebra::SymmetricEigen::new(rho);
    -eig.eigenvalues.iter().filter(|&&x| x > 1e-300).map(|&x| x * x.ln()).sum::<f64>()
}

fn criterion_10(rep: &mut Report) {
    let mut failures: Vec<&str> = Vec::new();

    let mut bijective = true;
    for n in 1..=6 {
        for m in 1..=6 {
            let b = FockBasis::new(BasisSpec::new(n, m).unwrap()).unwrap();
            bijective &= (0..b.dim()).all(|k| b.rank_state(&b.unrank(k).unwrap()).unwrap() == k);
        }
    }
    if !bijective {
        failures.push("rank/unrank");
    }

    let b = FockBasis::new(BasisSpec::new(5, 5).unwrap()).unwrap();
    let p = ModelParams::new(1.0, 0.7, 0.9).unwrap();
    let h = HamiltonianMatrix::build(&b, &p);
    let dense = h.to_dense();
    if (&dense - dense.transpose()).amax() > 1e-10 {
        failures.push("hermiticity");
    }
    let m = 9;
    let chain = FockBasis::new(BasisSpec::new(1, m).unwrap()).unwrap();
    let free = HamiltonianMatrix::build(&chain, &ModelParams::new(1.0, 0.3, 0.0).unwrap());
    let got = dense_eigenvalues(&free.to_dense()).unwrap();
    let mut want: Vec<f64> =
        (1..=m).map(|k| -2.0 * (k as f64 * std::f64::consts::PI / (m + 1) as f64).cos()).collect();
    want.sort_by(f64::total_cmp);
    if got.iter().zip(&want).any(|(a, b)| (a - b).abs() > 1e-10) {
        failures.push("N=1 spectrum");
    }

    let s = diagonalize(&h, p, b.spec(), DiagonalizeOptions::default()).unwrap();
    let k = b.rank(&[0, 1, 1, 2, 1]).unwrap();
    let c = evolve_amplitudes(&b.state(k), &b, &s).unwrap();
    let e0 = h.diagonal[k];
    for t in [0.3, 7.0, 150.0, 9000.0] {
        let (re, im) = evolve_state(&c, &s, t).unwrap();
        let norm: f64 = re.iter().chain(&im).map(|x| x * x).sum();
        let (hre, him) = (h.matvec(&re), h.matvec(&im));
        let e: f64 = re.iter().zip(&hre).chain(im.iter().zip(&him)).map(|(a, b)| a * b).sum();
        if (norm - 1.0).abs() > 1e-10 || ((e - e0) / e0).abs() > 1e-8 {
            failures.push("conservation");
            break;
        }
    }

    let b4 = FockBasis::new(BasisSpec::new(4, 4).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut shortcut_ok = true;
    for _ in 0..10 {
        let v = random_unit_vector(b4.dim(), &mut rng);
        for site in 1..=4 {
            let fast = single_site_entropy(&v, &b4, site).unwrap();
            shortcut_ok &= (fast - partial_trace_entropy(&v, &b4, site)).abs() <= 1e-10;
        }
    }
    if !shortcut_ok {
        failures.push("entropy shortcut");
    }

    // Long-time average from random times far beyond the Heisenberg time.
    let ipr: f64 = c.iter().map(|x| x.powi(4)).sum();
    let mut times: Vec<f64> = (0..20000).map(|_| rng.gen_range(1e4..1e7)).collect();
    times.insert(0, 0.0);
    times.sort_by(f64::total_cmp);
    let grid = TimeGrid::new(times, GridKind::Custom).unwrap();
    let sp = survival_probability(&c, &s.eigenvalues, &grid);
    let tail = &sp[1..];
    let nt = tail.len() as f64;
    let mean = tail.iter().sum::<f64>() / nt;
    let se = (tail.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nt - 1.0)).sqrt() / nt.sqrt();
    if sp[0] != 1.0 || (mean - ipr).abs() > 4.0 * se {
        failures.push("survival limits");
    }

    let below = goe_two_level_form_factor(1.0);
    let above = goe_two_level_form_factor(1.0 + 1e-12);
    if (below - above).abs() > 1e-9 {
        failures.push("b2 continuity");
    }

    let w: Vec<f64> = c.iter().map(|x| x * x).collect();
    let inputs = estimate_curve_inputs(&[w], &s.eigenvalues, CurveOptions::default()).unwrap();
    let limits = TimeGrid::new(vec![0.0, 1e9], GridKind::Custom).unwrap();
    let curve = analytic_survival_curve(&inputs, &limits);
    if (curve[0] - 1.0).abs() > 1e-9 || (curve[1] - inputs.ipr).abs() > 1e-9 {
        failures.push("analytic-curve limits");
    }

    let pass = failures.is_empty();
    let detail = if pass { "all property checks hold".to_string() } else { format!("failed: {}", failures.join(", ")) };
    rep.record(10, "property suites", pass, detail);
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut rep = Report { results: Vec::new() };
    criterion_1(&mut rep);
    criterion_2(&mut rep);
    criterion_3(&mut rep);
    criterion_6(&mut rep);
    criterion_10(&mut rep);

    let mut p7 = Points::new(7);
    let mut p8 = Points::new(8);
    criterion_4(&mut rep, &mut p8);
    criterion_5(&mut rep, &mut p8);
    criterion_9(&mut rep, &mut p8);
    criterion_7(&mut rep, &mut p7, &mut p8);
    criterion_8(&mut rep, &mut p7, &mut p8);

    rep.results.sort_by_key(|r| r.0);
    let failed: Vec<u32> = rep.results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria pass ({:.0} s)",
        rep.results.len() - failed.len(),
        rep.results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failing criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
