//! Layer x pooling x classifier grids over a train/test pair of activation
//! stores, best-cell selection and report rendering.

pub mod svg;

use crate::extract::ActivationStore;
use crate::pooling::{pool_store, PooledFeatures, PoolingMethod};
use crate::probe::{evaluate_probe, fit_probe, ClassifierId, ProbeResult, ProbeSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("train/test stores disagree: {0}")]
    StoreMismatch(String),
    #[error("grid axis `{0}` is empty")]
    EmptyGrid(&'static str),
    #[error("layer {0} is not in the store")]
    LayerNotInStore(usize),
    #[error("every cell failed")]
    AllCellsFailed,
    #[error("cannot write {path}: {source}")]
    OutputNotWritable { path: PathBuf, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, SweepError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub layer_ids: Vec<usize>,
    pub poolings: Vec<PoolingMethod>,
    pub classifier_ids: Vec<ClassifierId>,
    pub seed: u64,
    pub trials: usize,
}

impl SweepGrid {
    pub fn new(layer_ids: Vec<usize>, poolings: Vec<PoolingMethod>, classifier_ids: Vec<ClassifierId>) -> Self {
        Self { layer_ids, poolings, classifier_ids, seed: ProbeSpec::DEFAULT_SEED, trials: ProbeSpec::DEFAULT_TRIALS }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn num_cells(&self) -> usize {
        self.layer_ids.len() * self.poolings.len() * self.classifier_ids.len()
    }

    fn validate(&self) -> Result<()> {
        if self.layer_ids.is_empty() {
            return Err(SweepError::EmptyGrid("layers"));
        }
        if self.poolings.is_empty() {
            return Err(SweepError::EmptyGrid("poolings"));
        }
        if self.classifier_ids.is_empty() {
            return Err(SweepError::EmptyGrid("classifiers"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub layer: usize,
    pub pooling: PoolingMethod,
    pub classifier_id: ClassifierId,
    pub result: Option<ProbeResult>,
    pub error: Option<String>,
    pub wall_ms: f64,
}

impl SweepCell {
    pub fn accuracy(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.accuracy)
    }

    pub fn status(&self) -> String {
        match &self.error {
            None => "ok".into(),
            Some(e) => format!("error: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCell {
    pub layer: usize,
    pub pooling: PoolingMethod,
    pub classifier_id: ClassifierId,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub model_id: String,
    pub dataset_id: String,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub majority_baseline: f64,
    pub cells: Vec<SweepCell>,
    pub best: Option<BestCell>,
}

fn check_stores(train: &ActivationStore, test: &ActivationStore, grid: &SweepGrid) -> Result<()> {
    let (a, b) = (&train.manifest, &test.manifest);
    if a.model_id != b.model_id {
        return Err(SweepError::StoreMismatch(format!("model_id {} vs {}", a.model_id, b.model_id)));
    }
    if a.hidden_dim != b.hidden_dim {
        return Err(SweepError::StoreMismatch(format!("hidden_dim {} vs {}", a.hidden_dim, b.hidden_dim)));
    }
    if train.label_set() != test.label_set() {
        return Err(SweepError::StoreMismatch(format!(
            "label sets {:?} vs {:?}",
            train.label_set(),
            test.label_set()
        )));
    }
    for &l in &grid.layer_ids {
        if !train.layers.contains_key(&l) || !test.layers.contains_key(&l) {
            return Err(SweepError::LayerNotInStore(l));
        }
    }
    Ok(())
}

/// Ordering used for best-cell selection: `Less` means `a` ranks ahead.
fn rank(a: &BestCell, b: &BestCell) -> Ordering {
    b.accuracy
        .total_cmp(&a.accuracy)
        .then(a.layer.cmp(&b.layer))
        .then(a.pooling.tie_rank().cmp(&b.pooling.tie_rank()))
        .then(a.classifier_id.as_str().cmp(b.classifier_id.as_str()))
}

fn ranked(cells: &[SweepCell]) -> Vec<BestCell> {
    let mut v: Vec<BestCell> = cells
        .iter()
        .filter_map(|c| {
            c.accuracy().map(|accuracy| BestCell {
                layer: c.layer,
                pooling: c.pooling,
                classifier_id: c.classifier_id,
                accuracy,
            })
        })
        .collect();
    v.sort_by(rank);
    v
}

/// Highest accuracy; ties go to the lower layer, then pooling order
/// mean < attention < concat < max < min < last, then classifier id.
pub fn select_best(cells: &[SweepCell]) -> Result<BestCell> {
    ranked(cells).into_iter().next().ok_or(SweepError::AllCellsFailed)
}

type FeaturePair = std::result::Result<(PooledFeatures, PooledFeatures), String>;

pub fn run_sweep(train: &ActivationStore, test: &ActivationStore, grid: &SweepGrid) -> Result<SweepReport> {
    grid.validate()?;
    check_stores(train, test, grid)?;
    let pairs: Vec<(usize, PoolingMethod)> =
        grid.layer_ids.iter().flat_map(|&l| grid.poolings.iter().map(move |&p| (l, p))).collect();
    let features: BTreeMap<(usize, u8), FeaturePair> = pairs
        .par_iter()
        .map(|&(l, p)| {
            let f = pool_store(train, l, p)
                .and_then(|tr| pool_store(test, l, p).map(|te| (tr, te)))
                .map_err(|e| e.to_string());
            ((l, p.tie_rank()), f)
        })
        .collect();
    let triples: Vec<(usize, PoolingMethod, ClassifierId)> = pairs
        .iter()
        .flat_map(|&(l, p)| grid.classifier_ids.iter().map(move |&c| (l, p, c)))
        .collect();
    let cells: Vec<SweepCell> = triples
        .par_iter()
        .map(|&(layer, pooling, classifier_id)| {
            let start = Instant::now();
            let outcome = match &features[&(layer, pooling.tie_rank())] {
                Err(e) => Err(e.clone()),
                Ok((tr, te)) => {
                    let spec = ProbeSpec::new(classifier_id).with_seed(grid.seed).with_trials(grid.trials);
                    std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                        fit_probe(tr, &tr.labels, &spec).and_then(|probe| evaluate_probe(&probe, te, &te.labels))
                    }))
                    .map_err(|_| "classifier panicked".to_string())
                    .and_then(|r| r.map_err(|e| e.to_string()))
                }
            };
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let (result, error) = match outcome {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e)),
            };
            SweepCell { layer, pooling, classifier_id, result, error, wall_ms }
        })
        .collect();
    let majority_baseline = crate::probe::majority_baseline(&train.labels, &test.labels).unwrap_or(0.0);
    let best = select_best(&cells).ok();
    Ok(SweepReport {
        model_id: train.manifest.model_id.clone(),
        dataset_id: train.manifest.dataset_id.clone(),
        seed: grid.seed,
        train_size: train.num_examples(),
        test_size: test.num_examples(),
        majority_baseline,
        cells,
        best,
    })
}

/// Best accuracy per layer over all poolings and classifiers.
pub fn per_layer_best(report: &SweepReport) -> Vec<(usize, f64)> {
    let mut m: BTreeMap<usize, f64> = BTreeMap::new();
    for c in &report.cells {
        if let Some(a) = c.accuracy() {
            let e = m.entry(c.layer).or_insert(f64::NEG_INFINITY);
            *e = e.max(a);
        }
    }
    m.into_iter().collect()
}

/// Layer with the highest best-per-layer accuracy (lowest layer on ties).
pub fn best_layer(report: &SweepReport) -> Option<usize> {
    per_layer_best(report).into_iter().fold(None, |acc: Option<(usize, f64)>, (l, a)| match acc {
        Some((_, ba)) if ba >= a => acc,
        _ => Some((l, a)),
    })
    .map(|(l, _)| l)
}

pub fn cells_csv(report: &SweepReport, include_timings: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model_id", "dataset_id", "layer", "pooling", "classifier", "accuracy", "seed", "train_size", "test_size",
        "wall_ms", "status",
    ])
    .expect("in-memory write");
    for c in &report.cells {
        let acc = c.accuracy().map(|a| format!("{a:.6}")).unwrap_or_default();
        let wall = if include_timings { format!("{:.3}", c.wall_ms) } else { "0".to_string() };
        w.write_record([
            report.model_id.as_str(),
            report.dataset_id.as_str(),
            &c.layer.to_string(),
            c.pooling.as_str(),
            c.classifier_id.as_str(),
            &acc,
            &report.seed.to_string(),
            &report.train_size.to_string(),
            &report.test_size.to_string(),
            &wall,
            &c.status(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// Compact table row: `layer / prober / pooling / accuracy`.
pub fn compact_row(cell: &BestCell) -> String {
    format!(
        "{} / {} / {} / {:.4}",
        cell.layer,
        cell.classifier_id.display_name(),
        cell.pooling.display_name(),
        cell.accuracy
    )
}

pub fn top_k_table(report: &SweepReport, k: usize) -> String {
    let mut out = String::from("| Model | Dataset | Layer | Prober | Pooling | Accuracy |\n|---|---|---|---|---|---|\n");
    for c in ranked(&report.cells).into_iter().take(k) {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {:.4} |",
            report.model_id,
            report.dataset_id,
            c.layer,
            c.classifier_id.display_name(),
            c.pooling.display_name(),
            c.accuracy
        );
    }
    out
}

fn write_out(path: PathBuf, bytes: &[u8]) -> Result<PathBuf> {
    crate::io_util::write_atomic(&path, bytes)
        .map_err(|source| SweepError::OutputNotWritable { path: path.clone(), source })?;
    Ok(path)
}

/// Writes `cells.csv`, one `layers_<pooling>.svg` per pooling, a min/max
/// band plot, `top3.md` and `report.json` into `out`.
pub fn render_report(report: &SweepReport, out: &Path, include_timings: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|source| SweepError::OutputNotWritable { path: out.to_path_buf(), source })?;
    let mut written = vec![write_out(out.join("cells.csv"), cells_csv(report, include_timings).as_bytes())?];

    let mut poolings: Vec<PoolingMethod> = report.cells.iter().map(|c| c.pooling).collect();
    poolings.sort_by_key(|p| p.tie_rank());
    poolings.dedup();
    let mut classifiers: Vec<ClassifierId> = report.cells.iter().map(|c| c.classifier_id).collect();
    classifiers.sort();
    classifiers.dedup();
    for p in &poolings {
        let series: Vec<svg::Series> = classifiers
            .iter()
            .map(|&cid| svg::Series {
                name: cid.display_name().to_string(),
                points: report
                    .cells
                    .iter()
                    .filter(|c| c.pooling == *p && c.classifier_id == cid)
                    .filter_map(|c| c.accuracy().map(|a| (c.layer as f64, a)))
                    .collect(),
            })
            .filter(|s| !s.points.is_empty())
            .collect();
        let title = format!("{} / {}: {} pooling", report.model_id, report.dataset_id, p.display_name());
        let chart = svg::line_chart(&title, "Layer", "Accuracy", &series, None);
        written.push(write_out(out.join(format!("layers_{}.svg", p.as_str())), chart.as_bytes())?);
    }

    let mut bands: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for c in &report.cells {
        if let Some(a) = c.accuracy() {
            let e = bands.entry(c.layer).or_insert((a, a));
            e.0 = e.0.min(a);
            e.1 = e.1.max(a);
        }
    }
    let band = svg::Band { name: "min/max".into(), points: bands.iter().map(|(&l, &(lo, hi))| (l as f64, lo, hi)).collect() };
    let best_line = svg::Series {
        name: "best".into(),
        points: per_layer_best(report).into_iter().map(|(l, a)| (l as f64, a)).collect(),
    };
    let title = format!("{} / {}: accuracy range per layer", report.model_id, report.dataset_id);
    let chart = svg::line_chart(&title, "Layer", "Accuracy", &[best_line], Some(&band));
    written.push(write_out(out.join("layers_band.svg"), chart.as_bytes())?);

    let mut md = top_k_table(report, 3);
    if let Some(b) = &report.best {
        let _ = write!(md, "\nBest: {}\nMajority baseline: {:.4}\n", compact_row(b), report.majority_baseline);
    }
    written.push(write_out(out.join("top3.md"), md.as_bytes())?);
    let mut stable = report.clone();
    if !include_timings {
        stable.cells.iter_mut().for_each(|c| c.wall_ms = 0.0);
    }
    let json = serde_json::to_vec_pretty(&stable).expect("report serializes");
    written.push(write_out(out.join("report.json"), &json)?);
    Ok(written)
}

pub fn load_report(path: &Path) -> std::io::Result<SweepReport> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(layer: usize, pooling: PoolingMethod, cid: ClassifierId, acc: Option<f64>) -> SweepCell {
        SweepCell {
            layer,
            pooling,
            classifier_id: cid,
            result: acc.map(|accuracy| ProbeResult {
                accuracy,
                correct: 0,
                layer,
                pooling,
                classifier_id: cid,
                seed: 42,
                train_size: 10,
                test_size: 10,
                majority_baseline: 0.5,
            }),
            error: acc.is_none().then(|| "boom".to_string()),
            wall_ms: 1.0,
        }
    }

    #[test]
    fn tie_breaks() {
        use ClassifierId::*;
        use PoolingMethod::*;
        let cells = vec![cell(5, Mean, LogisticRegression, Some(0.91)), cell(3, Concat, LinearSvm, Some(0.91))];
        assert_eq!(select_best(&cells).unwrap().layer, 3);
        let cells = vec![cell(3, Last, LogisticRegression, Some(0.9)), cell(3, Mean, LogisticRegression, Some(0.9))];
        assert_eq!(select_best(&cells).unwrap().pooling, Mean);
        let cells = vec![cell(3, Mean, Mlp, Some(0.9)), cell(3, Mean, Knn, Some(0.9))];
        assert_eq!(select_best(&cells).unwrap().classifier_id, Knn);
        let single = vec![cell(7, Max, Cnn, Some(0.1))];
        assert_eq!(select_best(&single).unwrap().layer, 7);
        assert!(matches!(select_best(&[cell(1, Max, Cnn, None)]), Err(SweepError::AllCellsFailed)));
    }

    #[test]
    fn compact_row_matches_table_format() {
        let b = BestCell {
            layer: 10,
            pooling: PoolingMethod::Attention,
            classifier_id: ClassifierId::KernelSvm,
            accuracy: 0.945,
        };
        assert_eq!(compact_row(&b), "10 / Non-linear SVM / Attn / 0.9450");
    }

    #[test]
    fn csv_has_one_row_per_cell_and_marks_failures() {
        use PoolingMethod::*;
        let mut cells = Vec::new();
        for l in [0, 1] {
            for p in [Mean, Last] {
                for c in [ClassifierId::Knn, ClassifierId::GaussianNb] {
                    cells.push(cell(l, p, c, if l == 1 && c == ClassifierId::Knn { None } else { Some(0.5) }));
                }
            }
        }
        let report = SweepReport {
            model_id: "m".into(),
            dataset_id: "d".into(),
            seed: 42,
            train_size: 10,
            test_size: 10,
            majority_baseline: 0.5,
            best: select_best(&cells).ok(),
            cells,
        };
        let csv = cells_csv(&report, false);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[0], "model_id,dataset_id,layer,pooling,classifier,accuracy,seed,train_size,test_size,wall_ms,status");
        assert_eq!(lines.iter().filter(|l| l.ends_with("error: boom")).count(), 2);
        let dir = tempfile::tempdir().unwrap();
        let files = render_report(&report, dir.path(), false).unwrap();
        assert_eq!(files.len(), 1 + 2 + 1 + 2);
    }
}
