//! Seeded sample generators shared by the checkers.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn unit_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let r = crate::numkernel::norm(&v);
        if r > 1e-12 {
            return v.into_iter().map(|c| c / r).collect();
        }
    }
}

/// `count` seeded points on the sphere of the given radius.
pub fn sphere_points(n: usize, count: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            unit_vector(&mut rng, n)
                .into_iter()
                .map(|c| c * radius)
                .collect()
        })
        .collect()
}

/// `count` seeded points with norms log-uniform in [rmin, rmax].
pub fn shell_points(n: usize, count: usize, rmin: f64, rmax: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            let r = (rmin.ln() + u * (rmax.ln() - rmin.ln())).exp();
            unit_vector(&mut rng, n)
                .into_iter()
                .map(|c| c * r)
                .collect()
        })
        .collect()
}

/// Points s * dir for `count` scales log-spaced in [smin, smax].
pub fn ray_points(dir: &[f64], count: usize, smin: f64, smax: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let t = if count > 1 {
                i as f64 / (count - 1) as f64
            } else {
                0.0
            };
            let s = (smin.ln() + t * (smax.ln() - smin.ln())).exp();
            dir.iter().map(|c| c * s).collect()
        })
        .collect()
}
