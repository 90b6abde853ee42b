use propchaos::config::{functional, integer_valued, ExperimentConfig, ModelConfig, ModelKind};
use propchaos::manifest::config_hash;

#[test]
fn defaults_fill_missing_sections() {
    let cfg = ExperimentConfig::from_toml("seed = 4").unwrap();
    assert_eq!(cfg.seed, 4);
    assert_eq!(cfg.workers, 1);
    assert_eq!(cfg.model.kind, ModelKind::Kac);
    assert_eq!(cfg.run.n_ladder, vec![100, 1000]);
    assert_eq!(cfg.run.q, 2);
    assert_eq!(cfg.functionals().len(), 2);
}

#[test]
fn sample_configs_parse_and_build() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{e}"));
        cfg.model_spec().unwrap();
        seen += 1;
    }
    assert!(seen >= 3);
}

#[test]
fn errors_name_the_field() {
    let cases = [
        ("[run]\nq = 0", "run.q"),
        ("[run]\nn_ladder = [10, 10]", "run.n_ladder"),
        ("[run]\nn_ladder = [3]\nq = 4", "run.q"),
        ("[run]\nfunctionals = [\"j9\"]", "run.functionals"),
        ("[run]\nhorizon = -1.0", "run.horizon"),
        ("[model]\nrate = 0.0", "model.rate"),
        ("[model]\nkind = \"kac\"\nlambda = 0.5", "model"),
        ("workers = 0", "workers"),
        (
            "[model]\nkind = \"maxwell\"\ninitial = { law = \"dirac\", at = 0.0 }",
            "model.initial",
        ),
    ];
    for (text, field) in cases {
        let err = ExperimentConfig::from_toml(text).unwrap_err();
        assert!(err.0.contains(field), "{text}: {err}");
    }
}

#[test]
fn syntax_and_unknown_keys_are_rejected() {
    let err = ExperimentConfig::from_toml("seed = 1\nfoo = 2").unwrap_err();
    assert!(err.0.contains("foo"), "{err}");
    let err = ExperimentConfig::from_toml("[model]\nkind = \"boltzmann\"").unwrap_err();
    assert!(err.0.contains("boltzmann"), "{err}");
    let err = ExperimentConfig::from_toml("seed = \n").unwrap_err();
    assert!(err.0.contains("line 1"), "{err}");
}

#[test]
fn canonical_form_round_trips_and_drives_the_hash() {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/kac.toml"
    ))
    .unwrap();
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let again = ExperimentConfig::from_toml(&cfg.canonical()).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(config_hash(&cfg), config_hash(&again));
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(config_hash(&cfg), config_hash(&other));
}

#[test]
fn jump_functionals_carry_the_poisson_mean_for_kac_only() {
    let kac = ModelConfig {
        rate: 2.0,
        ..ModelConfig::default()
    };
    let j1 = functional("j1", 0.5, &kac).unwrap();
    assert!((j1.mean.unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    let toy = ModelConfig {
        kind: ModelKind::LinearToy,
        ..ModelConfig::default()
    };
    assert!(functional("j1", 0.5, &toy).unwrap().mean.is_none());
    assert!(functional("j4", 0.5, &kac).is_none());
    assert!(integer_valued("j2") && !integer_valued("cos"));
}
