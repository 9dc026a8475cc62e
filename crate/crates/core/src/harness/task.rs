//! Linear regression with per-node covariate shift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::config::TaskSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Row-major `len x d` features.
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    fn row(&self, i: usize, d: usize) -> &[f64] {
        &self.features[i * d..(i + 1) * d]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    d: usize,
    true_model: Vec<f64>,
    shards: Vec<Dataset>,
    test: Dataset,
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn draw<R: Rng>(rng: &mut R, len: usize, shift: &[f64], w: &[f64], noise: f64) -> Dataset {
    let d = w.len();
    let mut features = Vec::with_capacity(len * d);
    let mut targets = Vec::with_capacity(len);
    for _ in 0..len {
        let row: Vec<f64> = shift.iter().map(|m| m + normal(rng)).collect();
        let y = dot(&row, w) + noise * normal(rng);
        features.extend(row);
        targets.push(y);
    }
    Dataset { features, targets }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SyntheticTask {
    /// Draws the true model in `[-1, 1]^d`, one shard per node and a test set.
    pub fn generate(spec: &TaskSpec, n_tot: usize, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(0x7461_736b);
        let true_model: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let [lo, hi] = spec.samples_per_node;
        let shards = (0..n_tot)
            .map(|_| {
                let len = rng.gen_range(lo..=hi);
                let shift: Vec<f64> = (0..d)
                    .map(|_| spec.heterogeneity * normal(&mut rng))
                    .collect();
                draw(&mut rng, len, &shift, &true_model, spec.noise)
            })
            .collect();
        let test = draw(
            &mut rng,
            spec.test_samples,
            &vec![0.0; d],
            &true_model,
            spec.noise,
        );
        Self {
            d,
            true_model,
            shards,
            test,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn true_model(&self) -> &[f64] {
        &self.true_model
    }

    /// Shard of node index `i` (0-based).
    pub fn shard(&self, i: usize) -> &Dataset {
        &self.shards[i]
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        self.shards.iter().map(Dataset::len).collect()
    }

    /// `steps` minibatch SGD steps on squared loss, batches drawn with
    /// replacement.
    pub fn train<R: Rng>(
        &self,
        node: usize,
        start: &[f64],
        steps: usize,
        batch: usize,
        eta: f64,
        rng: &mut R,
    ) -> Vec<f64> {
        let data = &self.shards[node];
        let d = self.d;
        let mut w = start.to_vec();
        let mut grad = vec![0.0; d];
        for _ in 0..steps {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for _ in 0..batch {
                let i = rng.gen_range(0..data.len());
                let x = data.row(i, d);
                let r = dot(x, &w) - data.targets[i];
                for (g, xi) in grad.iter_mut().zip(x) {
                    *g += 2.0 * r * xi;
                }
            }
            for (wi, g) in w.iter_mut().zip(&grad) {
                *wi -= eta * g / batch as f64;
            }
        }
        w
    }

    /// Mean squared error on the held-out set.
    pub fn test_mse(&self, model: &[f64]) -> f64 {
        let d = self.d;
        let sse: f64 = (0..self.test.len())
            .map(|i| {
                let r = dot(self.test.row(i, d), model) - self.test.targets[i];
                r * r
            })
            .sum();
        sse / self.test.len() as f64
    }
}
