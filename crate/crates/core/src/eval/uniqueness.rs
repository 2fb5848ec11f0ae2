use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::config::Vocabulary;
use crate::encoding::{decode, ConfigMatrix};
use crate::gan::{sample, sample_with_conditions, Condition, GanModel};

/// Canonical text of a matrix's OS token and its sorted (port, service)
/// pairs; CPE and build do not take part. JSON quoting keeps distinct
/// structures distinct whatever characters the symbols contain.
pub fn signature(matrix: &ConfigMatrix, vocab: &Vocabulary) -> String {
    let config = decode(matrix, vocab);
    let ports: Vec<(u16, &str)> = config.services.iter().map(|s| (s.port, s.module.as_str())).collect();
    serde_json::to_string(&(&config.os_family, ports)).expect("strings and integers serialize")
}

/// One row of the uniqueness table for sample size `samples`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniquenessRow {
    pub samples: usize,
    pub real_unique: usize,
    pub gen_unique: usize,
    /// Generated draws whose signature occurs in the real corpus, counted
    /// with multiplicity.
    pub gen_match: usize,
    /// Distinct signatures among those matches.
    pub gen_match_dedup: usize,
}

/// Sample sizes 500, 1000, …, 5000.
pub fn default_sizes() -> Vec<usize> {
    (1..=10).map(|i| i * 500).collect()
}

/// Counts distinct and matching signatures for each size in `sizes`.
///
/// Real draws are made with replacement from `real`; generated draws are
/// taken in order from `generated`, which must hold at least `max(sizes)`
/// matrices. Each row uses a prefix of one draw sequence, so a larger size
/// always sees a superset of a smaller one's draws.
pub fn uniqueness_table(
    real: &[ConfigMatrix],
    generated: &[ConfigMatrix],
    vocab: &Vocabulary,
    sizes: &[usize],
    seed: u64,
) -> Result<Vec<UniquenessRow>, EvalError> {
    if sizes.is_empty() {
        return Err(EvalError::EmptyInput("no sample sizes".into()));
    }
    if real.is_empty() {
        return Err(EvalError::EmptyInput("real corpus is empty".into()));
    }
    let max = *sizes.iter().max().expect("non-empty");
    if generated.len() < max {
        return Err(EvalError::InvalidInput(format!(
            "{} generated samples for a largest size of {max}",
            generated.len()
        )));
    }
    let real_sigs: Vec<String> = real.iter().map(|m| signature(m, vocab)).collect();
    let corpus: HashSet<&str> = real_sigs.iter().map(String::as_str).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<&str> = (0..max).map(|_| real_sigs[rng.random_range(0..real.len())].as_str()).collect();
    let gen_sigs: Vec<String> = generated[..max].iter().map(|m| signature(m, vocab)).collect();

    Ok(sizes
        .iter()
        .map(|&n| {
            let real_unique = draws[..n].iter().collect::<HashSet<_>>().len();
            let gen = &gen_sigs[..n];
            let gen_unique = gen.iter().collect::<HashSet<_>>().len();
            let matches: Vec<&String> = gen.iter().filter(|s| corpus.contains(s.as_str())).collect();
            UniquenessRow {
                samples: n,
                real_unique,
                gen_unique,
                gen_match: matches.len(),
                gen_match_dedup: matches.into_iter().collect::<HashSet<_>>().len(),
            }
        })
        .collect())
}

/// [`uniqueness_table`] with generated samples drawn from `model`. A
/// conditional model is sampled under the real corpus's own labels, drawn
/// in proportion to their frequency (`labels` must then be given).
pub fn uniqueness_table_for_model(
    real: &[ConfigMatrix],
    labels: Option<&[Condition]>,
    model: &GanModel,
    vocab: &Vocabulary,
    sizes: &[usize],
    seed: u64,
) -> Result<Vec<UniquenessRow>, EvalError> {
    let max = sizes.iter().copied().max().unwrap_or(0);
    let generated = generate_for_eval(model, labels, max, seed)?;
    uniqueness_table(real, &generated, vocab, sizes, seed)
}

/// `n` samples from `model`; conditional models draw their labels from
/// `labels` uniformly at random, i.e. in proportion to label frequency.
pub fn generate_for_eval(
    model: &GanModel,
    labels: Option<&[Condition]>,
    n: usize,
    seed: u64,
) -> Result<Vec<ConfigMatrix>, EvalError> {
    if !model.condition.is_conditional() {
        return Ok(sample(model, n, None, seed)?);
    }
    let labels = labels
        .filter(|l| !l.is_empty())
        .ok_or_else(|| EvalError::EmptyInput("a conditional model needs the corpus labels".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1abe1);
    let drawn: Vec<Condition> = (0..n).map(|_| labels[rng.random_range(0..labels.len())]).collect();
    Ok(sample_with_conditions(model, &drawn, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{build_vocabulary, DeviceConfig, ServiceEntry};
    use crate::encoding::encode;

    fn device(os: &str, services: &[(u16, &str, Option<&str>)]) -> DeviceConfig {
        DeviceConfig::new(
            os,
            None,
            services.iter().map(|&(p, m, c)| ServiceEntry::new(p, m, c)).collect(),
        )
        .unwrap()
    }

    fn setup() -> (Vec<DeviceConfig>, Vocabulary) {
        let corpus = vec![
            device("Linux", &[(22, "ssh", Some("cpe:/a:openbsd:openssh")), (80, "http", None)]),
            device("Linux", &[(22, "ssh", None), (80, "http", None)]),
            device("Windows", &[(445, "smb", None)]),
            device("Linux", &[(22, "telnet", None), (80, "http", None)]),
        ];
        let vocab = build_vocabulary(&corpus, 30).unwrap();
        (corpus, vocab)
    }

    #[test]
    fn signature_ignores_cpe_but_not_service() {
        let (c, v) = setup();
        let s: Vec<String> = c.iter().map(|d| signature(&encode(d, &v), &v)).collect();
        assert_eq!(s[0], s[1]);
        assert_ne!(s[0], s[3]);
        assert_ne!(s[0], s[2]);
        assert_eq!(s[0], signature(&encode(&c[0], &v), &v));
    }

    #[test]
    fn matches_count_with_multiplicity() {
        let (c, v) = setup();
        let real: Vec<ConfigMatrix> = c.iter().map(|d| encode(d, &v)).collect();
        let foreign = encode(&device("Ubuntu", &[(21, "ftp", None)]), &v);
        let generated = vec![real[0], real[0], real[2], foreign, real[1]];
        let rows = uniqueness_table(&real, &generated, &v, &[1, 4, 5], 3).unwrap();
        assert_eq!(rows[1].gen_unique, 3);
        assert_eq!(rows[1].gen_match, 3);
        assert_eq!(rows[1].gen_match_dedup, 2);
        // real[1] shares real[0]'s signature
        assert_eq!(rows[2].gen_match, 4);
        assert!(rows[2].gen_match > rows[2].gen_unique - 1);
        let one = rows[0];
        assert!(one.real_unique <= 1 && one.gen_unique <= 1 && one.gen_match <= 1);
    }

    #[test]
    fn rows_are_bounded_and_monotone() {
        let (c, v) = setup();
        let real: Vec<ConfigMatrix> = c.iter().map(|d| encode(d, &v)).collect();
        let generated: Vec<ConfigMatrix> = (0..5000).map(|i| real[i % 3]).collect();
        let rows = uniqueness_table(&real, &generated, &v, &default_sizes(), 8).unwrap();
        for w in rows.windows(2) {
            assert!(w[0].real_unique <= w[1].real_unique);
        }
        for r in &rows {
            assert!(r.real_unique <= r.samples && r.gen_unique <= r.samples && r.gen_match <= r.samples);
            assert!(r.gen_match >= r.gen_match_dedup);
        }
    }

    #[test]
    fn errors() {
        let (c, v) = setup();
        let real: Vec<ConfigMatrix> = c.iter().map(|d| encode(d, &v)).collect();
        assert!(uniqueness_table(&real, &real, &v, &[], 0).is_err());
        assert!(uniqueness_table(&real, &real, &v, &[10], 0).is_err());
        assert!(uniqueness_table(&[], &real, &v, &[1], 0).is_err());
    }
}
