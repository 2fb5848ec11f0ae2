use std::ops::ControlFlow;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    critic_loss_and_gradients, ArchConfig, Condition, ConditionMode, ConditionSpec, Discriminator, GanError,
    Generator, Hyperparams,
};
use crate::config::{DeviceConfig, OsLabel, Vocabulary};
use crate::encoding::{discretize_cells, encode, ConfigMatrix, CELLS};
use crate::nn::Adam;

const SAMPLE_CHUNK: usize = 256;

/// A generator/critic pair plus everything needed to rebuild it.
#[derive(Debug, Clone, PartialEq)]
pub struct GanModel {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub condition: ConditionSpec,
    pub hyperparams: Hyperparams,
    pub arch: ArchConfig,
    pub step_count: usize,
}

impl GanModel {
    /// Freshly initialized networks, drawn from a generator seeded with
    /// `hyperparams.seed`.
    pub fn new(condition: ConditionSpec, hyperparams: Hyperparams, arch: ArchConfig) -> Result<Self, GanError> {
        let mut rng = ChaCha8Rng::seed_from_u64(hyperparams.seed);
        Self::init(&mut rng, condition, hyperparams, arch)
    }

    fn init<R: Rng>(
        rng: &mut R,
        condition: ConditionSpec,
        hyperparams: Hyperparams,
        arch: ArchConfig,
    ) -> Result<Self, GanError> {
        hyperparams.validate()?;
        condition.validate()?;
        let generator = Generator::new(rng, hyperparams.latent_dim + condition.num_classes, &arch);
        let discriminator = Discriminator::new(rng, condition.num_classes, &arch);
        Ok(GanModel {
            generator,
            discriminator,
            condition,
            hyperparams,
            arch,
            step_count: 0,
        })
    }

    /// Generator input rows: a latent draw followed by the condition vector.
    fn latent_rows<R: Rng>(&self, rng: &mut R, conditions: &[Vec<f64>]) -> Vec<f64> {
        let latent = self.hyperparams.latent_dim;
        let mut rows = Vec::with_capacity(conditions.len() * self.generator.input_dim);
        for c in conditions {
            rows.extend((0..latent).map(|_| rng.sample::<f64, _>(StandardNormal)));
            rows.extend_from_slice(c);
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Critic loss averaged over the step's critic iterations.
    pub d_loss: f64,
    pub g_loss: f64,
    /// Unscaled gradient penalty averaged over the critic iterations.
    pub gp: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub steps: Vec<StepRecord>,
}

impl TrainingReport {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn d_losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.d_loss).collect()
    }
}

/// Encodes a corpus for training in the given mode. Conditional modes drop
/// devices that carry no usable label (OS label `Other`, or no device type).
pub fn training_set(
    corpus: &[DeviceConfig],
    vocab: &Vocabulary,
    mode: ConditionMode,
) -> (Vec<ConfigMatrix>, Option<Vec<Condition>>) {
    match mode {
        ConditionMode::Unconditional => (corpus.iter().map(|c| encode(c, vocab)).collect(), None),
        ConditionMode::Os => {
            let (m, l) = corpus
                .iter()
                .filter_map(|c| match c.os_label() {
                    OsLabel::Other => None,
                    label => Some((encode(c, vocab), Condition::Os(label))),
                })
                .unzip();
            (m, Some(l))
        }
        ConditionMode::DeviceType => {
            let (m, l) = corpus
                .iter()
                .filter_map(|c| {
                    let types = c.device_types();
                    (!types.is_empty()).then(|| (encode(c, vocab), Condition::DeviceTypes(types)))
                })
                .unzip();
            (m, Some(l))
        }
    }
}

fn condition_vectors(spec: &ConditionSpec, labels: &[Condition]) -> Result<Vec<Vec<f64>>, GanError> {
    labels.iter().map(|l| spec.vector(l)).collect()
}

/// Trains a fresh model for `hp.total_steps` steps. Each step performs
/// `hp.critic_iters` critic updates on batches drawn with replacement, then
/// one generator update. Everything random flows from one generator seeded
/// with `hp.seed`.
pub fn train(
    matrices: &[ConfigMatrix],
    labels: Option<&[Condition]>,
    condition: ConditionSpec,
    hp: &Hyperparams,
    arch: &ArchConfig,
) -> Result<(GanModel, TrainingReport), GanError> {
    train_with(matrices, labels, condition, hp, arch, |_, _| ControlFlow::Continue(()))
}

/// [`train`], calling `on_step` with the model and record after every step.
/// Returning `Break` ends training after that step.
pub fn train_with<F>(
    matrices: &[ConfigMatrix],
    labels: Option<&[Condition]>,
    condition: ConditionSpec,
    hp: &Hyperparams,
    arch: &ArchConfig,
    mut on_step: F,
) -> Result<(GanModel, TrainingReport), GanError>
where
    F: FnMut(&GanModel, &StepRecord) -> ControlFlow<()>,
{
    if matrices.is_empty() {
        return Err(GanError::EmptyCorpus);
    }
    let conditions: Vec<Vec<f64>> = match (condition.is_conditional(), labels) {
        (false, None) => vec![Vec::new(); matrices.len()],
        (false, Some(_)) => return Err(GanError::LabelMismatch("unconditional training takes no labels".into())),
        (true, None) => return Err(GanError::LabelMismatch("conditional training needs one label per matrix".into())),
        (true, Some(l)) if l.len() != matrices.len() => {
            return Err(GanError::LabelMismatch(format!(
                "{} labels for {} matrices",
                l.len(),
                matrices.len()
            )))
        }
        (true, Some(l)) => condition_vectors(&condition, l)?,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut model = GanModel::init(&mut rng, condition, hp.clone(), arch.clone())?;
    let mut report = TrainingReport::default();
    if hp.total_steps == 0 {
        return Ok((model, report));
    }

    let g_shapes: Vec<usize> = model.generator.params().iter().map(|p| p.len()).collect();
    let d_shapes: Vec<usize> = model.discriminator.params().iter().map(|p| p.len()).collect();
    let mut adam_g = Adam::new(hp.learning_rate, hp.adam_beta1, hp.adam_beta2, &g_shapes);
    let mut adam_d = Adam::new(hp.learning_rate, hp.adam_beta1, hp.adam_beta2, &d_shapes);
    let batch = hp.batch_size;
    let n_cond = condition.num_classes;

    for step in 0..hp.total_steps {
        let started = Instant::now();
        let mut d_loss = 0.0;
        let mut gp = 0.0;
        for _ in 0..hp.critic_iters {
            let mut real = Vec::with_capacity(batch * CELLS);
            let mut cond_rows = Vec::with_capacity(batch);
            for _ in 0..batch {
                let i = rng.random_range(0..matrices.len());
                matrices[i].extend_signed(&mut real);
                cond_rows.push(conditions[i].clone());
            }
            let z = model.latent_rows(&mut rng, &cond_rows);
            let fake = model.generator.generate(&z, batch);
            let eps: Vec<f64> = (0..batch).map(|_| rng.random::<f64>()).collect();
            let flat_cond: Vec<f64> = cond_rows.concat();
            let eval = critic_loss_and_gradients(
                &model.discriminator,
                &real,
                &fake,
                &flat_cond,
                &eps,
                hp.gp_coefficient,
            );
            adam_d.update(&mut model.discriminator.params_mut(), &eval.grads);
            d_loss += eval.loss;
            gp += eval.penalty;
        }

        // generator conditions follow the empirical label distribution
        let cond_rows: Vec<Vec<f64>> = (0..batch)
            .map(|_| conditions[rng.random_range(0..matrices.len())].clone())
            .collect();
        let z = model.latent_rows(&mut rng, &cond_rows);
        let (fake, g_cache) = model.generator.forward(&z, batch);
        let flat_cond: Vec<f64> = cond_rows.concat();
        debug_assert_eq!(flat_cond.len(), batch * n_cond);
        let (scores, d_cache) = model
            .discriminator
            .forward(&model.discriminator.assemble_input(&fake, &flat_cond, batch));
        let g_loss = -scores.iter().sum::<f64>() / batch as f64;
        let dx = model
            .discriminator
            .backward(&d_cache, &vec![-1.0 / batch as f64; batch], None, true)
            .expect("dx requested");
        let g_grads = model.generator.backward(&g_cache, &dx.data[..batch * CELLS]);
        adam_g.update(&mut model.generator.params_mut(), &g_grads);

        model.step_count += 1;
        let record = StepRecord {
            d_loss: d_loss / hp.critic_iters as f64,
            g_loss,
            gp: gp / hp.critic_iters as f64,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        if step % 100 == 0 {
            log::debug!("step {step}: d_loss {:.4} g_loss {:.4} gp {:.4}", record.d_loss, record.g_loss, record.gp);
        }
        let flow = on_step(&model, &record);
        report.steps.push(record);
        if flow.is_break() {
            break;
        }
    }
    Ok((model, report))
}

fn check_condition(model: &GanModel, condition: Option<&Condition>) -> Result<Vec<f64>, GanError> {
    match (model.condition.is_conditional(), condition) {
        (true, None) => Err(GanError::ConditionRequired),
        (false, Some(_)) => Err(GanError::ConditionNotAllowed),
        (false, None) => Ok(Vec::new()),
        (true, Some(c)) => model.condition.vector(c),
    }
}

fn generate_matrices<R: Rng>(model: &GanModel, rng: &mut R, conditions: &[Vec<f64>]) -> Vec<ConfigMatrix> {
    let mut out = Vec::with_capacity(conditions.len());
    for chunk in conditions.chunks(SAMPLE_CHUNK) {
        let z = model.latent_rows(rng, chunk);
        let cells = model.generator.generate(&z, chunk.len());
        out.extend(cells.chunks_exact(CELLS).map(discretize_cells));
    }
    out
}

/// Draws `n` matrices from the generator, discretized to valid encodings.
pub fn sample(
    model: &GanModel,
    n: usize,
    condition: Option<&Condition>,
    seed: u64,
) -> Result<Vec<ConfigMatrix>, GanError> {
    let vector = check_condition(model, condition)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(generate_matrices(model, &mut rng, &vec![vector; n]))
}

/// One matrix per entry of `conditions` (a conditional model is required).
pub fn sample_with_conditions(
    model: &GanModel,
    conditions: &[Condition],
    seed: u64,
) -> Result<Vec<ConfigMatrix>, GanError> {
    let vectors = conditions
        .iter()
        .map(|c| check_condition(model, Some(c)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(generate_matrices(model, &mut rng, &vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{build_vocabulary, default_prototypes, synth_corpus, CorpusSpec};

    fn tiny_arch() -> ArchConfig {
        ArchConfig {
            generator_widths: [4, 4, 2, 2],
            discriminator_widths: [2, 2, 2, 2, 2],
            ..ArchConfig::compact()
        }
    }

    fn tiny_hp(steps: usize) -> Hyperparams {
        Hyperparams {
            batch_size: 4,
            total_steps: steps,
            latent_dim: 8,
            seed: 11,
            ..Hyperparams::default()
        }
    }

    fn corpus() -> Vec<DeviceConfig> {
        let spec = CorpusSpec {
            prototypes: default_prototypes(),
            noise_rate: 0.0,
            seed: 5,
        };
        synth_corpus(&spec, 200).unwrap()
    }

    #[test]
    fn zero_steps_returns_initial_model() {
        let corpus = corpus();
        let vocab = build_vocabulary(&corpus, 30).unwrap();
        let (m, _) = training_set(&corpus, &vocab, ConditionMode::Unconditional);
        let (model, report) = train(&m, None, ConditionSpec::unconditional(), &tiny_hp(0), &tiny_arch()).unwrap();
        assert!(report.is_empty());
        assert_eq!(model.step_count, 0);
        let fresh = GanModel::new(ConditionSpec::unconditional(), tiny_hp(0), tiny_arch()).unwrap();
        assert_eq!(model, fresh);
    }

    #[test]
    fn errors() {
        let hp = tiny_hp(1);
        assert!(matches!(
            train(&[], None, ConditionSpec::unconditional(), &hp, &tiny_arch()),
            Err(GanError::EmptyCorpus)
        ));
        let m = vec![ConfigMatrix::sentinel(); 3];
        let os = ConditionSpec::new(ConditionMode::Os);
        assert!(matches!(train(&m, None, os, &hp, &tiny_arch()), Err(GanError::LabelMismatch(_))));
        let labels = vec![Condition::Os(OsLabel::Linux); 2];
        assert!(matches!(
            train(&m, Some(&labels), os, &hp, &tiny_arch()),
            Err(GanError::LabelMismatch(_))
        ));
        let labels = vec![Condition::Os(OsLabel::Other); 3];
        assert!(matches!(
            train(&m, Some(&labels), os, &hp, &tiny_arch()),
            Err(GanError::LabelMismatch(_))
        ));
    }

    #[test]
    fn training_is_deterministic_and_samples_are_valid() {
        let corpus = corpus();
        let vocab = build_vocabulary(&corpus, 30).unwrap();
        let (m, labels) = training_set(&corpus, &vocab, ConditionMode::Os);
        let labels = labels.unwrap();
        assert_eq!(m.len(), labels.len());
        let spec = ConditionSpec::new(ConditionMode::Os);
        let (a, report) = train(&m, Some(&labels), spec, &tiny_hp(3), &tiny_arch()).unwrap();
        let (b, _) = train(&m, Some(&labels), spec, &tiny_hp(3), &tiny_arch()).unwrap();
        assert_eq!(a, b);
        assert_eq!(report.len(), 3);
        assert_eq!(a.step_count, 3);
        assert!(report.steps.iter().all(|s| s.d_loss.is_finite() && s.gp >= 0.0));

        let ubuntu = Condition::Os(OsLabel::Ubuntu);
        let s1 = sample(&a, 7, Some(&ubuntu), 3).unwrap();
        assert_eq!(s1, sample(&a, 7, Some(&ubuntu), 3).unwrap());
        assert_eq!(s1.len(), 7);
        for matrix in &s1 {
            assert!(ConfigMatrix::from_cells(&matrix.to_cells()).is_ok());
        }
        assert!(matches!(sample(&a, 1, None, 0), Err(GanError::ConditionRequired)));
        let both = sample_with_conditions(&a, &[ubuntu, Condition::Os(OsLabel::Qts)], 1).unwrap();
        assert_eq!(both.len(), 2);
    }

    #[test]
    fn unconditional_rejects_condition() {
        let model = GanModel::new(ConditionSpec::unconditional(), tiny_hp(0), tiny_arch()).unwrap();
        assert!(matches!(
            sample(&model, 1, Some(&Condition::Os(OsLabel::Linux)), 0),
            Err(GanError::ConditionNotAllowed)
        ));
        assert_eq!(sample(&model, 300, None, 0).unwrap().len(), 300);
    }
}
