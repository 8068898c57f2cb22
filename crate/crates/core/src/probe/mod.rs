//! Probe classifiers over pooled features, with seeded hyperparameter search.

mod bayes;
mod boosting;
mod knn;
mod linear;
mod neural;
pub mod optim;
mod scaler;
pub mod search;
mod svm;
mod tree;

pub use bayes::GaussianNb;
pub use boosting::{BoostParams, BoostedTrees, Grower};
pub use knn::Knn;
pub use linear::{fit_linear_svm, fit_logistic, LinearModel};
pub use neural::{Arch, NeuralNet, TrainParams};
pub use scaler::Standardizer;
pub use search::{Hyperparams, ParamRange, ParamValue, SearchSpace};
pub use svm::{Kernel, KernelSvm};
pub use tree::{ClassTree, RandomForest, TreeParams};

use crate::pooling::{PooledFeatures, PoolingMethod};
use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("training data has a single class ({0})")]
    SingleClassTraining(i64),
    #[error("{what} mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { what: &'static str, expected: usize, actual: usize },
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid probe spec: {0}")]
    InvalidSpec(String),
    #[error("unknown classifier `{0}`")]
    UnknownClassifier(String),
    #[error("probe file is corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ProbeError>;

/// Index of the first maximum.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassifierId {
    #[serde(rename = "logistic_regression")]
    LogisticRegression,
    #[serde(rename = "linear_svm")]
    LinearSvm,
    #[serde(rename = "knn")]
    Knn,
    #[serde(rename = "decision_tree")]
    DecisionTree,
    #[serde(rename = "random_forest")]
    RandomForest,
    #[serde(rename = "gradient_boosted_trees_A")]
    GradientBoostedTreesA,
    #[serde(rename = "gradient_boosted_trees_B")]
    GradientBoostedTreesB,
    #[serde(rename = "mlp")]
    Mlp,
    #[serde(rename = "bilstm")]
    BiLstm,
    #[serde(rename = "cnn")]
    Cnn,
    #[serde(rename = "kernel_svm")]
    KernelSvm,
    #[serde(rename = "gaussian_nb")]
    GaussianNb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Linear,
    DistanceBased,
    TreeBased,
    NeuralNetwork,
    Other,
}

impl Family {
    pub fn display_name(self) -> &'static str {
        match self {
            Family::Linear => "Linear",
            Family::DistanceBased => "Distance-based",
            Family::TreeBased => "Tree-based",
            Family::NeuralNetwork => "Neural Network",
            Family::Other => "Other",
        }
    }
}

fn log_uniform(low: f64, high: f64) -> ParamRange {
    ParamRange::LogUniform { low, high }
}

fn choices(v: &[i64]) -> ParamRange {
    ParamRange::Int { choices: v.to_vec() }
}

impl ClassifierId {
    pub const ALL: [ClassifierId; 12] = [
        ClassifierId::LogisticRegression,
        ClassifierId::LinearSvm,
        ClassifierId::Knn,
        ClassifierId::DecisionTree,
        ClassifierId::RandomForest,
        ClassifierId::GradientBoostedTreesA,
        ClassifierId::GradientBoostedTreesB,
        ClassifierId::Mlp,
        ClassifierId::BiLstm,
        ClassifierId::Cnn,
        ClassifierId::KernelSvm,
        ClassifierId::GaussianNb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierId::LogisticRegression => "logistic_regression",
            ClassifierId::LinearSvm => "linear_svm",
            ClassifierId::Knn => "knn",
            ClassifierId::DecisionTree => "decision_tree",
            ClassifierId::RandomForest => "random_forest",
            ClassifierId::GradientBoostedTreesA => "gradient_boosted_trees_A",
            ClassifierId::GradientBoostedTreesB => "gradient_boosted_trees_B",
            ClassifierId::Mlp => "mlp",
            ClassifierId::BiLstm => "bilstm",
            ClassifierId::Cnn => "cnn",
            ClassifierId::KernelSvm => "kernel_svm",
            ClassifierId::GaussianNb => "gaussian_nb",
        }
    }

    /// Short name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ClassifierId::LogisticRegression => "Logistic Reg.",
            ClassifierId::LinearSvm => "Linear SVM",
            ClassifierId::Knn => "KNN",
            ClassifierId::DecisionTree => "Decision Tree",
            ClassifierId::RandomForest => "Random Forest",
            ClassifierId::GradientBoostedTreesA => "GBT-A",
            ClassifierId::GradientBoostedTreesB => "GBT-B",
            ClassifierId::Mlp => "MLP",
            ClassifierId::BiLstm => "BiLSTM",
            ClassifierId::Cnn => "CNN",
            ClassifierId::KernelSvm => "Non-linear SVM",
            ClassifierId::GaussianNb => "Gaussian NB",
        }
    }

    pub fn family(self) -> Family {
        match self {
            ClassifierId::LogisticRegression | ClassifierId::LinearSvm => Family::Linear,
            ClassifierId::Knn => Family::DistanceBased,
            ClassifierId::DecisionTree
            | ClassifierId::RandomForest
            | ClassifierId::GradientBoostedTreesA
            | ClassifierId::GradientBoostedTreesB => Family::TreeBased,
            ClassifierId::Mlp | ClassifierId::BiLstm | ClassifierId::Cnn => Family::NeuralNetwork,
            ClassifierId::KernelSvm | ClassifierId::GaussianNb => Family::Other,
        }
    }

    /// Trees are scale-invariant; every other family is standardized.
    pub fn default_standardize(self) -> bool {
        self.family() != Family::TreeBased
    }

    pub fn default_search_space(self) -> SearchSpace {
        let depth = ParamRange::int_range(3, 12);
        let estimators = choices(&[50, 100, 200]);
        let entries: Vec<(&str, ParamRange)> = match self {
            ClassifierId::LogisticRegression | ClassifierId::LinearSvm => vec![("C", log_uniform(1e-3, 1e2))],
            ClassifierId::Knn => vec![("n_neighbors", choices(&[3, 5, 7, 11]))],
            ClassifierId::DecisionTree => vec![("max_depth", depth)],
            ClassifierId::RandomForest
            | ClassifierId::GradientBoostedTreesA
            | ClassifierId::GradientBoostedTreesB => vec![("max_depth", depth), ("n_estimators", estimators)],
            ClassifierId::Mlp => vec![("hidden_width", choices(&[64, 128, 256]))],
            ClassifierId::BiLstm => vec![("hidden_width", choices(&[8, 16, 32]))],
            ClassifierId::Cnn => vec![("filters", choices(&[8, 16, 32]))],
            ClassifierId::KernelSvm => vec![
                ("C", log_uniform(1e-3, 1e2)),
                ("kernel", ParamRange::Categorical { choices: vec!["rbf".into(), "poly".into()] }),
            ],
            ClassifierId::GaussianNb => vec![("var_smoothing", log_uniform(1e-11, 1e-7))],
        };
        entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

impl fmt::Display for ClassifierId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierId {
    type Err = ProbeError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        ClassifierId::ALL
            .into_iter()
            .find(|c| c.as_str().to_ascii_lowercase() == lower)
            .ok_or_else(|| ProbeError::UnknownClassifier(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub classifier_id: ClassifierId,
    pub search_space: SearchSpace,
    pub trials: usize,
    pub seed: u64,
    pub standardize: bool,
}

impl ProbeSpec {
    pub const DEFAULT_TRIALS: usize = 5;
    pub const DEFAULT_SEED: u64 = 42;

    pub fn new(classifier_id: ClassifierId) -> Self {
        Self {
            classifier_id,
            search_space: classifier_id.default_search_space(),
            trials: Self::DEFAULT_TRIALS,
            seed: Self::DEFAULT_SEED,
            standardize: classifier_id.default_standardize(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(ProbeError::InvalidSpec("trials must be at least 1".into()));
        }
        search::validate_space(&self.search_space).map_err(ProbeError::InvalidSpec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FittedModel {
    Linear(LinearModel),
    Knn(Knn),
    Tree(ClassTree),
    Forest(RandomForest),
    Boosted(BoostedTrees),
    Neural(NeuralNet),
    KernelSvm(KernelSvm),
    NaiveBayes(GaussianNb),
}

impl FittedModel {
    pub fn predict_row(&self, x: ArrayView1<'_, f64>) -> usize {
        match self {
            FittedModel::Linear(m) => m.predict(x),
            FittedModel::Knn(m) => m.predict(x),
            FittedModel::Tree(m) => m.predict(x),
            FittedModel::Forest(m) => m.predict(x),
            FittedModel::Boosted(m) => m.predict(x),
            FittedModel::Neural(m) => m.predict(&x.to_vec()),
            FittedModel::KernelSvm(m) => m.predict(x),
            FittedModel::NaiveBayes(m) => m.predict(x),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            FittedModel::Linear(m) => m.param_count(),
            FittedModel::Knn(m) => m.param_count(),
            FittedModel::Tree(m) => m.param_count(),
            FittedModel::Forest(m) => m.param_count(),
            FittedModel::Boosted(m) => m.param_count(),
            FittedModel::Neural(m) => m.param_count(),
            FittedModel::KernelSvm(m) => m.param_count(),
            FittedModel::NaiveBayes(m) => m.param_count(),
        }
    }
}

/// Fits one configuration on class-index labels `0..k`.
pub fn fit_model(id: ClassifierId, x: &Array2<f64>, y: &[usize], k: usize, hp: &Hyperparams, seed: u64) -> FittedModel {
    let depth = hp.usize("max_depth", 6);
    let estimators = hp.usize("n_estimators", 100);
    let neural = |arch: Arch, epochs: usize, lr: f64, clip: f64| {
        let tp = TrainParams {
            epochs: hp.usize("epochs", epochs),
            batch_size: hp.usize("batch_size", 32),
            lr: hp.f64("learning_rate", lr),
            l2: hp.f64("alpha", 1e-4),
            clip,
        };
        FittedModel::Neural(NeuralNet::fit(x, y, k, arch, tp, seed))
    };
    match id {
        ClassifierId::LogisticRegression => FittedModel::Linear(fit_logistic(x, y, k, hp.f64("C", 1.0), 500)),
        ClassifierId::LinearSvm => FittedModel::Linear(fit_linear_svm(x, y, k, hp.f64("C", 1.0), seed)),
        ClassifierId::Knn => FittedModel::Knn(Knn::fit(x, y, k, hp.usize("n_neighbors", 5))),
        ClassifierId::DecisionTree => {
            FittedModel::Tree(ClassTree::fit(x, y, k, (0..y.len()).collect(), TreeParams::with_depth(depth), seed))
        }
        ClassifierId::RandomForest => FittedModel::Forest(RandomForest::fit(x, y, k, estimators, depth, seed)),
        ClassifierId::GradientBoostedTreesA => {
            FittedModel::Boosted(BoostedTrees::fit(x, y, k, BoostParams::exact(estimators, depth)))
        }
        ClassifierId::GradientBoostedTreesB => {
            FittedModel::Boosted(BoostedTrees::fit(x, y, k, BoostParams::histogram(estimators, depth)))
        }
        ClassifierId::Mlp => neural(Arch::Mlp { hidden: hp.usize("hidden_width", 64) }, 100, 1e-3, 0.0),
        ClassifierId::BiLstm => neural(Arch::BiLstm { hidden: hp.usize("hidden_width", 16) }, 20, 1e-2, 5.0),
        ClassifierId::Cnn => neural(Arch::Cnn { filters: hp.usize("filters", 16) }, 30, 1e-2, 5.0),
        ClassifierId::KernelSvm => {
            let gamma = Kernel::scale_gamma(x);
            let kernel = match hp.str("kernel", "rbf") {
                "poly" => Kernel::Poly { gamma, degree: 3, coef0: 1.0 },
                _ => Kernel::Rbf { gamma },
            };
            FittedModel::KernelSvm(KernelSvm::fit(x, y, k, hp.f64("C", 1.0), kernel))
        }
        ClassifierId::GaussianNb => FittedModel::NaiveBayes(GaussianNb::fit(x, y, k, hp.f64("var_smoothing", 1e-9))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub hyperparams: Hyperparams,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedProbe {
    pub spec: ProbeSpec,
    pub chosen_hyperparams: Hyperparams,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Original label per class index, ascending.
    pub classes: Vec<i64>,
    pub train_size: usize,
    /// Most frequent training label (smallest on ties).
    pub majority_label: i64,
    pub trials: Vec<TrialRecord>,
    pub standardization: Option<Standardizer>,
    pub fitted: FittedModel,
}

fn to_f64(x: ArrayView2<'_, f32>) -> Result<Array2<f64>> {
    for ((row, col), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(ProbeError::NonFinite { row, col });
        }
    }
    Ok(x.mapv(f64::from))
}

fn accuracy_of(model: &FittedModel, x: &Array2<f64>, y: &[usize]) -> f64 {
    let correct = x.rows().into_iter().zip(y).filter(|(r, &t)| model.predict_row(*r) == t).count();
    correct as f64 / y.len().max(1) as f64
}

fn subset(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(ndarray::Axis(0), idx)
}

/// Fits a probe on a raw feature matrix (rows are examples).
pub fn fit_matrix(x: ArrayView2<'_, f32>, labels: &[i64], spec: &ProbeSpec) -> Result<TrainedProbe> {
    spec.validate()?;
    if x.nrows() != labels.len() {
        return Err(ProbeError::DimensionMismatch { what: "label count", expected: x.nrows(), actual: labels.len() });
    }
    if labels.is_empty() {
        return Err(ProbeError::EmptyTrainingSet);
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ProbeError::SingleClassTraining(classes[0]));
    }
    let k = classes.len();
    let y: Vec<usize> = labels.iter().map(|l| classes.binary_search(l).expect("label in class set")).collect();
    let raw = to_f64(x)?;

    let prepare = |train: &Array2<f64>| -> (Option<Standardizer>, Array2<f64>) {
        if spec.standardize {
            let s = Standardizer::fit(train.view());
            let z = s.transform(train.view());
            (Some(s), z)
        } else {
            (None, train.clone())
        }
    };

    let configs = search::sample_configs(&spec.search_space, spec.trials, spec.seed);
    let (tr_idx, va_idx) = search::stratified_split(&y, k, 0.2, spec.seed);
    let x_tr = subset(&raw, &tr_idx);
    let y_tr: Vec<usize> = tr_idx.iter().map(|&i| y[i]).collect();
    let (inner_scaler, z_tr) = prepare(&x_tr);
    let (z_va, y_va) = if va_idx.is_empty() {
        (z_tr.clone(), y_tr.clone())
    } else {
        let x_va = subset(&raw, &va_idx);
        let z = match &inner_scaler {
            Some(s) => s.transform(x_va.view()),
            None => x_va,
        };
        (z, va_idx.iter().map(|&i| y[i]).collect())
    };
    let scores: Vec<f64> = configs
        .par_iter()
        .map(|hp| accuracy_of(&fit_model(spec.classifier_id, &z_tr, &y_tr, k, hp, spec.seed), &z_va, &y_va))
        .collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let chosen = configs[best].clone();
    let (scaler, z) = prepare(&raw);
    let fitted = fit_model(spec.classifier_id, &z, &y, k, &chosen, spec.seed);

    let mut counts = vec![0usize; k];
    y.iter().for_each(|&c| counts[c] += 1);
    let majority = argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
    Ok(TrainedProbe {
        spec: spec.clone(),
        chosen_hyperparams: chosen,
        input_dim: x.ncols(),
        num_classes: k,
        majority_label: classes[majority],
        classes,
        train_size: labels.len(),
        trials: configs
            .into_iter()
            .zip(scores)
            .map(|(hyperparams, validation_accuracy)| TrialRecord { hyperparams, validation_accuracy })
            .collect(),
        standardization: scaler,
        fitted,
    })
}

pub fn fit_probe(train: &PooledFeatures, labels: &[i64], spec: &ProbeSpec) -> Result<TrainedProbe> {
    fit_matrix(train.features.view(), labels, spec)
}

impl TrainedProbe {
    pub fn predict_matrix(&self, x: ArrayView2<'_, f32>) -> Result<Vec<i64>> {
        if x.ncols() != self.input_dim {
            return Err(ProbeError::DimensionMismatch { what: "feature dimension", expected: self.input_dim, actual: x.ncols() });
        }
        let raw = to_f64(x)?;
        let z = match &self.standardization {
            Some(s) => s.transform(raw.view()),
            None => raw,
        };
        Ok(z.rows().into_iter().map(|r| self.classes[self.fitted.predict_row(r)]).collect())
    }

    /// Prediction for a single pooled vector.
    pub fn predict_one(&self, x: &[f32]) -> Result<i64> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        Ok(self.predict_matrix(view)?[0])
    }

    /// Learned parameters plus standardization statistics.
    pub fn param_count(&self) -> usize {
        self.fitted.param_count() + self.standardization.as_ref().map_or(0, |s| s.mean.len() + s.std.len())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("probe serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text).map_err(|e| ProbeError::Corrupt(e.to_string()))?;
        if p.classes.len() != p.num_classes || p.num_classes < 2 {
            return Err(ProbeError::Corrupt("class table does not match num_classes".into()));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        crate::io_util::write_atomic(path, self.to_json().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn predict_probe(probe: &TrainedProbe, features: &PooledFeatures) -> Result<Vec<i64>> {
    probe.predict_matrix(features.features.view())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub accuracy: f64,
    pub correct: usize,
    pub layer: usize,
    pub pooling: PoolingMethod,
    pub classifier_id: ClassifierId,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    /// Accuracy of always predicting the majority training label.
    pub majority_baseline: f64,
}

/// Fraction of positions where `pred` equals `gold`.
pub fn accuracy(pred: &[i64], gold: &[i64]) -> Result<(usize, f64)> {
    if gold.is_empty() {
        return Err(ProbeError::EmptyTestSet);
    }
    if pred.len() != gold.len() {
        return Err(ProbeError::DimensionMismatch { what: "label count", expected: pred.len(), actual: gold.len() });
    }
    let correct = pred.iter().zip(gold).filter(|(a, b)| a == b).count();
    Ok((correct, correct as f64 / gold.len() as f64))
}

/// Accuracy of a constant predictor that always outputs the most frequent
/// training label (smallest label on ties).
pub fn majority_baseline(train_labels: &[i64], test_labels: &[i64]) -> Result<f64> {
    let mut counts = std::collections::BTreeMap::new();
    for l in train_labels {
        *counts.entry(*l).or_insert(0usize) += 1;
    }
    let top = counts.values().copied().max().ok_or(ProbeError::EmptyTrainingSet)?;
    let label = counts.iter().find(|(_, &c)| c == top).map(|(l, _)| *l).expect("non-empty");
    Ok(accuracy(&vec![label; test_labels.len()], test_labels)?.1)
}

pub fn evaluate_probe(probe: &TrainedProbe, features: &PooledFeatures, labels: &[i64]) -> Result<ProbeResult> {
    if labels.is_empty() {
        return Err(ProbeError::EmptyTestSet);
    }
    if features.num_examples() != labels.len() {
        return Err(ProbeError::DimensionMismatch {
            what: "label count",
            expected: features.num_examples(),
            actual: labels.len(),
        });
    }
    let pred = predict_probe(probe, features)?;
    let (correct, acc) = accuracy(&pred, labels)?;
    let baseline = labels.iter().filter(|&&l| l == probe.majority_label).count() as f64 / labels.len() as f64;
    Ok(ProbeResult {
        accuracy: acc,
        correct,
        layer: features.layer,
        pooling: features.method,
        classifier_id: probe.spec.classifier_id,
        seed: probe.spec.seed,
        train_size: probe.train_size,
        test_size: labels.len(),
        majority_baseline: baseline,
    })
}
