use decoyforge::config::{build_vocabulary, default_prototypes, synth_corpus, CorpusSpec, OsLabel};
use decoyforge::encoding::{decode, ConfigMatrix};
use decoyforge::gan::{
    load_checkpoint, sample, save_checkpoint, train, training_set, ArchConfig, Condition, ConditionMode,
    ConditionSpec, Hyperparams,
};

fn matrices(n: usize, mode: ConditionMode, seed: u64) -> (Vec<ConfigMatrix>, Option<Vec<Condition>>) {
    let spec = CorpusSpec {
        prototypes: default_prototypes(),
        noise_rate: 0.0,
        seed,
    };
    let corpus = synth_corpus(&spec, n).unwrap();
    let vocab = build_vocabulary(&corpus, 30).unwrap();
    training_set(&corpus, &vocab, mode)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[test]
fn same_seed_same_model() {
    let (m, _) = matrices(300, ConditionMode::Unconditional, 1);
    let hp = Hyperparams {
        total_steps: 3,
        batch_size: 8,
        seed: 9,
        ..Hyperparams::desk()
    };
    let (a, ra) = train(&m, None, ConditionSpec::unconditional(), &hp, &ArchConfig::desk()).unwrap();
    let (b, rb) = train(&m, None, ConditionSpec::unconditional(), &hp, &ArchConfig::desk()).unwrap();
    assert_eq!(ra.d_losses(), rb.d_losses());
    assert_eq!(sample(&a, 20, None, 4).unwrap(), sample(&b, 20, None, 4).unwrap());

    let other = Hyperparams { seed: 10, ..hp };
    let (c, _) = train(&m, None, ConditionSpec::unconditional(), &other, &ArchConfig::desk()).unwrap();
    assert_ne!(sample(&a, 20, None, 4).unwrap(), sample(&c, 20, None, 4).unwrap());
}

#[test]
fn checkpoint_round_trip_keeps_samples() {
    let (m, labels) = matrices(300, ConditionMode::Os, 2);
    let hp = Hyperparams {
        total_steps: 2,
        batch_size: 8,
        seed: 2,
        ..Hyperparams::desk()
    };
    let (model, _) =
        train(&m, labels.as_deref(), ConditionSpec::new(ConditionMode::Os), &hp, &ArchConfig::desk()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&model, dir.path()).unwrap();
    let loaded = load_checkpoint(dir.path()).unwrap();
    let label = Condition::Os(OsLabel::Debian);
    assert_eq!(
        sample(&model, 30, Some(&label), 5).unwrap(),
        sample(&loaded, 30, Some(&label), 5).unwrap()
    );
    assert_eq!(loaded.step_count, 2);
}

#[test]
fn conditional_sampling_needs_a_label() {
    let (m, labels) = matrices(200, ConditionMode::Os, 3);
    let hp = Hyperparams {
        total_steps: 1,
        batch_size: 4,
        ..Hyperparams::desk()
    };
    let (model, _) =
        train(&m, labels.as_deref(), ConditionSpec::new(ConditionMode::Os), &hp, &ArchConfig::desk()).unwrap();
    assert!(sample(&model, 5, None, 0).is_err());
}

#[test]
fn samples_decode_to_valid_devices() {
    let spec = CorpusSpec {
        prototypes: default_prototypes(),
        noise_rate: 0.0,
        seed: 4,
    };
    let corpus = synth_corpus(&spec, 300).unwrap();
    let vocab = build_vocabulary(&corpus, 30).unwrap();
    let (m, _) = training_set(&corpus, &vocab, ConditionMode::Unconditional);
    let hp = Hyperparams {
        total_steps: 2,
        batch_size: 8,
        ..Hyperparams::desk()
    };
    let (model, _) = train(&m, None, ConditionSpec::unconditional(), &hp, &ArchConfig::desk()).unwrap();
    for s in sample(&model, 50, None, 1).unwrap() {
        let device = decode(&s, &vocab);
        let mut ports: Vec<u16> = device.services.iter().map(|x| x.port).collect();
        ports.dedup();
        assert_eq!(ports.len(), device.services.len());
        assert!(ports.iter().all(|p| vocab.active().contains(p)));
    }
}

/// A full desk-scale run: the critic loss magnitude, smoothed as medians
/// over 100-step windows, ends well below where it starts.
#[test]
fn critic_loss_magnitude_shrinks() {
    let (m, _) = matrices(5000, ConditionMode::Unconditional, 6);
    let hp = Hyperparams {
        seed: 6,
        ..Hyperparams::desk()
    };
    assert_eq!(hp.total_steps, 2000);
    let (_, report) = train(&m, None, ConditionSpec::unconditional(), &hp, &ArchConfig::desk()).unwrap();
    let windows: Vec<f64> = report
        .d_losses()
        .chunks(100)
        .map(|w| median(&mut w.iter().map(|v| v.abs()).collect::<Vec<_>>()))
        .collect();
    assert_eq!(windows.len(), 20);
    let head = windows[..3].iter().sum::<f64>() / 3.0;
    let tail = windows[17..].iter().sum::<f64>() / 3.0;
    assert!(tail < head, "window medians {windows:?}");
    // least-squares slope over the window medians
    let n = windows.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = windows.iter().sum::<f64>() / n;
    let slope = windows.iter().enumerate().map(|(i, y)| (i as f64 - mx) * (y - my)).sum::<f64>()
        / windows.iter().enumerate().map(|(i, _)| (i as f64 - mx).powi(2)).sum::<f64>();
    assert!(slope < 0.0, "window medians {windows:?}");
}
