#![allow(dead_code)]

use bistoch_core::{Measure, PointSet};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn random_points(rng: &mut StdRng, m: usize, d: usize) -> PointSet {
    let data = (0..m * d).map(|_| rng.gen::<f64>()).collect();
    PointSet::from_row_major(m, d, data).unwrap()
}

pub fn random_measure(rng: &mut StdRng, m: usize) -> Measure {
    Measure::new((0..m).map(|_| rng.gen_range(0.1..2.0)).collect()).unwrap()
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Plain nested-loop `p(x, x') = sum_i beta(x, i) beta(x', i)`.
pub fn dense_kernel(beta: &bistoch_core::Matrix) -> Vec<Vec<f64>> {
    let (m, n) = (beta.rows(), beta.cols());
    let mut p = vec![vec![0.0; m]; m];
    for x in 0..m {
        for y in 0..m {
            let mut s = 0.0;
            for i in 0..n {
                s += beta[(x, i)] * beta[(y, i)];
            }
            p[x][y] = s;
        }
    }
    p
}
