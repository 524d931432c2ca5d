use rand::Rng;
use relgrade_core::embedding::Similarity;
use relgrade_core::finetune::{loss_gradient, LinearAdapter, LossKind};
use relgrade_core::rng;

const STEP: f64 = 1e-6;

fn loss_at(w: &LinearAdapter, loss: LossKind, sim: Similarity, a: &[f64], p: &[f64], negs: &[&[f64]]) -> f64 {
    loss_gradient(loss, 0.5, sim, w, a, p, negs).unwrap().0
}

/// Largest per-entry relative error between the analytic gradient and
/// central differences, with `floor` guarding entries near zero.
fn max_relative_error(loss: LossKind, sim: Similarity, seed: u64, floor: f64) -> f64 {
    let dim = 8;
    let mut r = rng::rng(seed);
    let vec = |r: &mut rand_chacha::ChaCha8Rng| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let rows: Vec<Vec<f64>> = (0..dim)
        .map(|i| (0..dim).map(|j| f64::from(u8::from(i == j)) + r.random_range(-0.3..0.3)).collect())
        .collect();
    let w = LinearAdapter::from_rows(rows.clone()).unwrap();
    let a = vec(&mut r);
    let p = vec(&mut r);
    let negs_owned: Vec<Vec<f64>> = match loss {
        LossKind::Psce => vec![vec(&mut r)],
        LossKind::InfoNce => (0..3).map(|_| vec(&mut r)).collect(),
    };
    let negs: Vec<&[f64]> = negs_owned.iter().map(Vec::as_slice).collect();
    let (_, analytic) = loss_gradient(loss, 0.5, sim, &w, &a, &p, &negs).unwrap();

    let mut worst: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let mut plus = rows.clone();
            plus[i][j] += STEP;
            let mut minus = rows.clone();
            minus[i][j] -= STEP;
            let fp = loss_at(&LinearAdapter::from_rows(plus).unwrap(), loss, sim, &a, &p, &negs);
            let fm = loss_at(&LinearAdapter::from_rows(minus).unwrap(), loss, sim, &a, &p, &negs);
            let numeric = (fp - fm) / (2.0 * STEP);
            let g = analytic[i * dim + j];
            let err = (g - numeric).abs() / g.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn analytic_gradients_match_finite_differences() {
    for loss in [LossKind::Psce, LossKind::InfoNce] {
        for sim in [Similarity::Cosine, Similarity::Euclidean] {
            let worst = (0..50).map(|s| max_relative_error(loss, sim, s, 1e-8)).fold(0.0, f64::max);
            assert!(worst < 1e-4, "{loss}/{sim}: {worst:e}");
        }
    }
}
