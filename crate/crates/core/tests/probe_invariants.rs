use ndarray::Array2;
use probekit::probe::{fit_matrix, ClassifierId, ProbeSpec, TrainedProbe};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn data(n: usize, seed: u64) -> (Array2<f32>, Vec<i64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<i64> = (0..n).map(|i| (i % 3) as i64).collect();
    let x = Array2::from_shape_fn((n, 5), |(i, j)| {
        let c = if j as i64 == y[i] { 2.5 } else { 0.0 };
        c + rng.random_range(-1.0f32..1.0)
    });
    (x, y)
}

fn quick(id: ClassifierId) -> ProbeSpec {
    ProbeSpec::new(id).with_trials(1)
}

#[test]
fn predictions_are_known_labels() {
    let (x, y) = data(90, 1);
    let y: Vec<i64> = y.iter().map(|l| l * 10 + 3).collect();
    for id in [ClassifierId::LogisticRegression, ClassifierId::Knn, ClassifierId::DecisionTree, ClassifierId::GaussianNb] {
        let p = fit_matrix(x.view(), &y, &quick(id)).unwrap();
        for l in p.predict_matrix(x.view()).unwrap() {
            assert!([3, 13, 23].contains(&l), "{id:?} predicted {l}");
        }
    }
}

#[test]
fn relabeling_permutes_predictions() {
    let (x, y) = data(90, 2);
    let map = |l: i64| [7, -1, 4][l as usize];
    let y2: Vec<i64> = y.iter().map(|&l| map(l)).collect();
    for id in [ClassifierId::Knn, ClassifierId::GaussianNb, ClassifierId::LogisticRegression] {
        let a = fit_matrix(x.view(), &y, &quick(id)).unwrap().predict_matrix(x.view()).unwrap();
        let b = fit_matrix(x.view(), &y2, &quick(id)).unwrap().predict_matrix(x.view()).unwrap();
        let mapped: Vec<i64> = a.iter().map(|&l| map(l)).collect();
        assert_eq!(mapped, b, "{id:?}");
    }
}

#[test]
fn json_round_trip_keeps_predictions() {
    let (x, y) = data(60, 3);
    for id in ClassifierId::ALL {
        let p = fit_matrix(x.view(), &y, &quick(id)).unwrap();
        let back = TrainedProbe::from_json(&p.to_json()).unwrap();
        assert_eq!(p.predict_matrix(x.view()).unwrap(), back.predict_matrix(x.view()).unwrap(), "{id:?}");
    }
}

#[test]
fn rejects_bad_inputs() {
    let (x, y) = data(30, 4);
    let spec = quick(ClassifierId::LogisticRegression);
    assert!(fit_matrix(x.view(), &y[..29], &spec).is_err());
    assert!(fit_matrix(x.view(), &vec![1; 30], &spec).is_err());
    let p = fit_matrix(x.view(), &y, &spec).unwrap();
    let wrong = Array2::<f32>::zeros((2, 4));
    assert!(p.predict_matrix(wrong.view()).is_err());
}
