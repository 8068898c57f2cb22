use ndarray::Array2;
use probekit::extract::{extract_activations, tokenize, ExtractionMeta};
use probekit::model::{ModelConfig, Transformer};
use probekit::pooling::{pool_store, PoolingMethod};
use probekit::probe::{fit_probe, ClassifierId, ProbeSpec};
use probekit::surgeon::{verify_prefix_equivalence, TruncatedPipeline};
use std::collections::BTreeMap;

fn corpus() -> (Vec<String>, Vec<i64>) {
    let texts: Vec<String> = (0..24)
        .map(|i| if i % 2 == 0 { format!("a dreadful dull film {i}") } else { format!("a splendid warm film {i}") })
        .collect();
    let labels = (0..24).map(|i| (i % 2) as i64).collect();
    (texts, labels)
}

#[test]
fn pipeline_matches_probe_on_extracted_features() {
    let model = Transformer::random(ModelConfig::toy("toy", 3, 16, 256), 42).unwrap();
    let (texts, labels) = corpus();
    let batch = tokenize(&model, &texts).unwrap();
    let store = extract_activations(&model, &batch, &[2], &labels, &ExtractionMeta::new("toy", 42)).unwrap();
    for method in [PoolingMethod::Mean, PoolingMethod::Last, PoolingMethod::Concat] {
        let feats = pool_store(&store, 2, method).unwrap();
        let head = fit_probe(&feats, &labels, &ProbeSpec::new(ClassifierId::LogisticRegression).with_trials(1)).unwrap();
        let want = head.predict_matrix(feats.features.view()).unwrap();
        let pipe = TruncatedPipeline::from_model(&model, 2, method, head, BTreeMap::new()).unwrap();
        let got_feats: Array2<f32> = pipe.features(&texts).unwrap();
        let diff = got_feats.iter().zip(feats.features.iter()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(diff < 1e-4, "{method:?}: {diff}");
        assert_eq!(pipe.classify(&texts).unwrap(), want, "{method:?}");
    }
}

#[test]
fn saved_pipeline_reloads_identically() {
    let model = Transformer::random(ModelConfig::toy("toy", 3, 16, 256), 1).unwrap();
    let (texts, labels) = corpus();
    let batch = tokenize(&model, &texts).unwrap();
    let store = extract_activations(&model, &batch, &[1], &labels, &ExtractionMeta::new("toy", 42)).unwrap();
    let feats = pool_store(&store, 1, PoolingMethod::Mean).unwrap();
    let head = fit_probe(&feats, &labels, &ProbeSpec::new(ClassifierId::Knn).with_trials(1)).unwrap();
    let names = BTreeMap::from([(0, "negative".to_string()), (1, "positive".to_string())]);
    let pipe = TruncatedPipeline::from_model(&model, 1, PoolingMethod::Mean, head, names).unwrap();
    let dir = tempfile::tempdir().unwrap();
    pipe.save(dir.path()).unwrap();
    let back = TruncatedPipeline::load(dir.path()).unwrap();
    assert_eq!(back.classify_named(&texts).unwrap(), pipe.classify_named(&texts).unwrap());
    assert!(verify_prefix_equivalence(&model, &back, &texts).unwrap());
    assert!(back.plan().kept_params < back.plan().full_params);
}

#[test]
fn cut_beyond_depth_is_rejected() {
    let model = Transformer::random(ModelConfig::toy("toy", 2, 16, 64), 1).unwrap();
    let x = Array2::<f32>::from_shape_fn((4, 16), |(i, j)| (i * j) as f32);
    let head = probekit::probe::fit_matrix(x.view(), &[0, 1, 0, 1], &ProbeSpec::new(ClassifierId::Knn).with_trials(1)).unwrap();
    assert!(TruncatedPipeline::from_model(&model, 3, PoolingMethod::Mean, head, BTreeMap::new()).is_err());
}
