use rand::Rng;
use rand_distr::Exp1;

/// One point from the flat Dirichlet on the `k`-simplex (normalized unit
/// exponentials).
pub fn sample_simplex<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let mut p: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = p.iter().sum();
    for v in &mut p {
        *v /= s;
    }
    p
}

pub fn sample_simplex_points<R: Rng + ?Sized>(k: usize, m: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..m).map(|_| sample_simplex(k, rng)).collect()
}
