use probekit::config::RunConfig;
use proptest::prelude::*;
use std::path::PathBuf;

proptest! {
    #[test]
    fn toml_round_trip(
        seed in prop::option::of(any::<u32>()),
        trials in prop::option::of(1usize..20),
        layers in prop::option::of(prop::collection::vec(0usize..40, 0..5)),
        store in prop::option::of("[a-z/_]{1,12}"),
        texts in prop::option::of(prop::collection::vec("[ -~]{0,20}", 0..3)),
    ) {
        let mut c = RunConfig::default();
        c.seed = seed.map(u64::from);
        c.sweep.trials = trials;
        c.sweep.layers = layers;
        c.sweep.train_store = store.map(PathBuf::from);
        c.classify.texts = texts;
        let back = RunConfig::from_toml(&c.to_toml(), "rt").unwrap();
        prop_assert_eq!(back, c);
    }
}

#[test]
fn empty_file_is_default() {
    assert_eq!(RunConfig::from_toml("", "e").unwrap(), RunConfig::default());
}

#[test]
fn unknown_section_is_rejected() {
    assert!(RunConfig::from_toml("[sweeep]\n", "u").is_err());
}
