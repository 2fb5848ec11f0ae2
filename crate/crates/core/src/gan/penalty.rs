use rand::Rng;

use super::Discriminator;
use crate::encoding::CELLS;

/// Keeps the norm differentiable at a zero gradient.
const NORM_EPS: f64 = 1e-12;

/// Anything that scores `[N, 2048]` data rows and can report the gradient of
/// each score with respect to its own row.
pub trait Critic {
    fn condition_channels(&self) -> usize;
    fn scores(&self, data: &[f64], conditions: &[f64], batch: usize) -> Vec<f64>;
    fn data_gradient(&self, data: &[f64], conditions: &[f64], batch: usize) -> Vec<f64>;
}

impl Critic for Discriminator {
    fn condition_channels(&self) -> usize {
        self.condition_channels
    }

    fn scores(&self, data: &[f64], conditions: &[f64], batch: usize) -> Vec<f64> {
        self.score(data, conditions, batch)
    }

    fn data_gradient(&self, data: &[f64], conditions: &[f64], batch: usize) -> Vec<f64> {
        let (_, cache) = self.forward(&self.assemble_input(data, conditions, batch));
        Discriminator::data_gradient(self, &cache)
    }
}

/// Per-sample convex combinations `eps·real + (1 − eps)·fake`.
pub fn interpolate(real: &[f64], fake: &[f64], eps: &[f64]) -> Vec<f64> {
    assert_eq!(real.len(), fake.len(), "real and fake batches differ in size");
    assert_eq!(real.len(), eps.len() * CELLS, "one mixing weight per sample");
    real.chunks_exact(CELLS)
        .zip(fake.chunks_exact(CELLS))
        .zip(eps)
        .flat_map(|((r, f), &e)| r.iter().zip(f).map(move |(a, b)| e * a + (1.0 - e) * b))
        .collect()
}

/// Mean of `(‖g_n‖ − 1)²` over per-sample gradient rows, plus the norms.
pub fn penalty_from_gradients(gradients: &[f64]) -> (f64, Vec<f64>) {
    let norms: Vec<f64> = gradients
        .chunks_exact(CELLS)
        .map(|g| (g.iter().map(|v| v * v).sum::<f64>() + NORM_EPS).sqrt())
        .collect();
    let penalty = norms.iter().map(|n| (n - 1.0).powi(2)).sum::<f64>() / norms.len() as f64;
    (penalty, norms)
}

/// Gradient penalty at random interpolates of the two batches (not yet
/// scaled by the penalty coefficient).
pub fn gradient_penalty<C: Critic + ?Sized, R: Rng>(
    critic: &C,
    real: &[f64],
    fake: &[f64],
    conditions: &[f64],
    rng: &mut R,
) -> f64 {
    let batch = real.len() / CELLS;
    let eps: Vec<f64> = (0..batch).map(|_| rng.random::<f64>()).collect();
    let mixed = interpolate(real, fake, &eps);
    penalty_from_gradients(&critic.data_gradient(&mixed, conditions, batch)).0
}

/// Critic objective and its parameter gradient for one batch.
#[derive(Debug, Clone)]
pub struct CriticEval {
    /// `mean D(fake) − mean D(real) + λ·penalty`
    pub loss: f64,
    /// `mean D(real) − mean D(fake)`
    pub wasserstein: f64,
    pub penalty: f64,
    pub grads: Vec<Vec<f64>>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Value of the critic objective with fixed mixing weights `eps`.
pub fn critic_loss(
    critic: &Discriminator,
    real: &[f64],
    fake: &[f64],
    conditions: &[f64],
    eps: &[f64],
    gp_coefficient: f64,
) -> f64 {
    let batch = eps.len();
    let real_scores = critic.score(real, conditions, batch);
    let fake_scores = critic.score(fake, conditions, batch);
    let mixed = interpolate(real, fake, eps);
    let (penalty, _) = penalty_from_gradients(&Critic::data_gradient(critic, &mixed, conditions, batch));
    mean(&fake_scores) - mean(&real_scores) + gp_coefficient * penalty
}

/// Critic objective together with its exact parameter gradient, penalty term
/// included.
pub fn critic_loss_and_gradients(
    critic: &Discriminator,
    real: &[f64],
    fake: &[f64],
    conditions: &[f64],
    eps: &[f64],
    gp_coefficient: f64,
) -> CriticEval {
    let batch = eps.len();
    let mut grads = critic.zero_grads();

    // real and fake share one pass: rows [real; fake]
    let mut data = Vec::with_capacity(2 * batch * CELLS);
    data.extend_from_slice(real);
    data.extend_from_slice(fake);
    let mut conds = Vec::with_capacity(2 * conditions.len());
    conds.extend_from_slice(conditions);
    conds.extend_from_slice(conditions);
    let (scores, cache) = critic.forward(&critic.assemble_input(&data, &conds, 2 * batch));
    let (real_scores, fake_scores) = scores.split_at(batch);
    let wasserstein = mean(real_scores) - mean(fake_scores);
    let inv = 1.0 / batch as f64;
    let dscores: Vec<f64> = (0..2 * batch).map(|i| if i < batch { -inv } else { inv }).collect();
    critic.backward(&cache, &dscores, Some(&mut grads), false);

    let mixed = interpolate(real, fake, eps);
    let (_, cache) = critic.forward(&critic.assemble_input(&mixed, conditions, batch));
    let gradient = critic.data_gradient(&cache);
    let (penalty, norms) = penalty_from_gradients(&gradient);
    if gp_coefficient != 0.0 {
        // d/dg (‖g‖ − 1)² = 2 (‖g‖ − 1) g / ‖g‖, averaged over the batch
        let tangent: Vec<f64> = gradient
            .chunks_exact(CELLS)
            .zip(&norms)
            .flat_map(|(g, &n)| {
                let scale = gp_coefficient * 2.0 * (n - 1.0) / n * inv;
                g.iter().map(move |v| scale * v)
            })
            .collect();
        critic.directional_backward(&cache, &tangent, &mut grads);
    }

    CriticEval {
        loss: -wasserstein + gp_coefficient * penalty,
        wasserstein,
        penalty,
        grads,
    }
}
