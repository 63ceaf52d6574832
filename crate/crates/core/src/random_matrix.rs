//! Reference ensembles: GOE matrices and uncorrelated (Poisson) spectra.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// GOE matrix `(A + A^T) / 2` with `A_ij ~ N(0, 1)`: diagonal variance 1,
/// off-diagonal variance 1/2.
pub fn goe_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let a: f64 = StandardNormal.sample(rng);
            if i == j {
                h[(i, i)] = a;
            } else {
                let v = a / std::f64::consts::SQRT_2;
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
    }
    h
}

/// `n` independent uniform levels on `[0, 1)`, sorted ascending.
pub fn poisson_spectrum<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut e: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Random unit vector with Gaussian components.
pub fn random_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}
