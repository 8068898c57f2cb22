//! Seeded, label-stratified reduction of text classification corpora.

use crate::io_util::write_atomic;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

/// Allowed absolute gap between original and reduced label proportions.
pub const DRIFT_TOLERANCE: f64 = 0.02;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("label {label}: {required} examples needed within the length cap, {available} available")]
    InsufficientSamples { label: i64, required: usize, available: usize },
    #[error("average length {avg:.2} exceeds max_len {max_len}")]
    LengthConstraintViolated { avg: f64, max_len: usize },
    #[error("label {label} proportion drifted from {original:.4} to {reduced:.4}")]
    DistributionDrift { label: i64, original: f64, reduced: f64 },
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetId {
    Imdb,
    Sst2,
    Rotten,
    Emotion,
}

impl DatasetId {
    pub const ALL: [DatasetId; 4] = [DatasetId::Imdb, DatasetId::Sst2, DatasetId::Rotten, DatasetId::Emotion];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::Imdb => "imdb",
            DatasetId::Sst2 => "sst2",
            DatasetId::Rotten => "rotten",
            DatasetId::Emotion => "emotion",
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        match s.as_str() {
            "imdb" => Ok(DatasetId::Imdb),
            "sst2" | "sst-2" => Ok(DatasetId::Sst2),
            "rotten" | "rotten_tomatoes" | "rotten-tomatoes" => Ok(DatasetId::Rotten),
            "emotion" => Ok(DatasetId::Emotion),
            _ => Err(DatasetError::UnknownDataset(s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub dataset_id: DatasetId,
    pub train_size: usize,
    pub test_size: usize,
    pub label_set: Vec<i64>,
    /// Cap on whitespace-token length per example.
    pub max_len: usize,
}

impl DatasetSpec {
    /// Reference split sizes and length caps for the four benchmark tasks.
    pub fn reference(id: DatasetId) -> Self {
        let (train_size, test_size, max_len, k) = match id {
            DatasetId::Imdb => (7000, 7000, 132, 2),
            DatasetId::Sst2 => (6920, 1821, 56, 2),
            DatasetId::Rotten => (8530, 1066, 59, 2),
            DatasetId::Emotion => (6000, 2000, 64, 6),
        };
        Self { dataset_id: id, train_size, test_size, label_set: (0..k).collect(), max_len }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Example {
    pub text: String,
    pub label: i64,
}

impl Example {
    pub fn new(text: impl Into<String>, label: i64) -> Self {
        Self { text: text.into(), label }
    }
}

/// Whitespace-token count.
pub fn text_length(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub n: usize,
    pub label_counts: BTreeMap<i64, usize>,
    pub label_distribution: BTreeMap<i64, f64>,
    pub avg_sentence_length: f64,
}

pub fn compute_stats(examples: &[Example]) -> Result<SplitStats> {
    if examples.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let n = examples.len();
    let mut label_counts = BTreeMap::new();
    let mut total_len = 0usize;
    for e in examples {
        *label_counts.entry(e.label).or_insert(0) += 1;
        total_len += text_length(&e.text);
    }
    let label_distribution = label_counts.iter().map(|(&l, &c)| (l, c as f64 / n as f64)).collect();
    Ok(SplitStats { n, label_counts, label_distribution, avg_sentence_length: total_len as f64 / n as f64 })
}

/// Per-label quotas summing to `target`: floors of `target * count / n`,
/// then the leftover units go to the largest remainders (smaller label on ties).
pub fn label_quotas(label_counts: &BTreeMap<i64, usize>, target: usize) -> BTreeMap<i64, usize> {
    let n: usize = label_counts.values().sum();
    if n == 0 {
        return BTreeMap::new();
    }
    let mut quotas = BTreeMap::new();
    // exact integer arithmetic: quota*n + rem = target*count
    let mut rems = Vec::new();
    let mut assigned = 0;
    for (&label, &count) in label_counts {
        let num = target as u128 * count as u128;
        let q = (num / n as u128) as usize;
        rems.push((num % n as u128, label));
        quotas.insert(label, q);
        assigned += q;
    }
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, label) in rems.iter().take(target - assigned) {
        *quotas.get_mut(&label).unwrap() += 1;
    }
    quotas
}

/// Keeps `target` examples: per label (ascending) drop texts longer than
/// `max_len`, draw the label's quota without replacement, then shuffle the
/// union. One ChaCha8 stream seeded with `seed` drives every draw. Quotas
/// follow the input's label distribution.
pub fn reduce_split(examples: &[Example], target: usize, max_len: usize, seed: u64) -> Result<Vec<Example>> {
    let stats = compute_stats(examples)?;
    let quotas = label_quotas(&stats.label_counts, target);
    let mut pools: BTreeMap<i64, Vec<&Example>> = BTreeMap::new();
    for e in examples {
        if text_length(&e.text) <= max_len {
            pools.entry(e.label).or_default().push(e);
        }
    }
    for (&label, &required) in &quotas {
        let available = pools.get(&label).map_or(0, Vec::len);
        if available < required {
            return Err(DatasetError::InsufficientSamples { label, required, available });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(target);
    for (&label, &quota) in &quotas {
        let pool = pools.get(&label).map(Vec::as_slice).unwrap_or(&[]);
        out.extend(pool.choose_multiple(&mut rng, quota).map(|&e| e.clone()));
    }
    out.shuffle(&mut rng);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedDataset {
    pub dataset_id: DatasetId,
    pub seed: u64,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

/// Reduces both splits to the reference sizes. The test split uses `seed + 1`.
/// All quotas are checked before anything is returned.
pub fn reduce_dataset(train: &[Example], test: &[Example], spec: &DatasetSpec, seed: u64) -> Result<ReducedDataset> {
    let train_red = reduce_split(train, spec.train_size, spec.max_len, seed)?;
    let test_red = reduce_split(test, spec.test_size, spec.max_len, seed.wrapping_add(1))?;
    Ok(ReducedDataset { dataset_id: spec.dataset_id, seed, train: train_red, test: test_red })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub max_len: usize,
    pub original: SplitStats,
    pub reduced: SplitStats,
    /// Reduced examples longer than `max_len`.
    pub over_length: usize,
}

impl ValidationReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "size: {} -> {}", self.original.n, self.reduced.n);
        let _ = writeln!(
            s,
            "avg length: {:.2} -> {:.2} (max_len {})",
            self.original.avg_sentence_length, self.reduced.avg_sentence_length, self.max_len
        );
        let _ = writeln!(s, "label distribution:");
        let labels: std::collections::BTreeSet<i64> = self
            .original
            .label_distribution
            .keys()
            .chain(self.reduced.label_distribution.keys())
            .copied()
            .collect();
        for l in labels {
            let o = self.original.label_distribution.get(&l).copied().unwrap_or(0.0);
            let r = self.reduced.label_distribution.get(&l).copied().unwrap_or(0.0);
            let _ = writeln!(s, "  {l}: {o:.4} -> {r:.4}");
        }
        s
    }
}

/// Recomputes statistics of a reduction and checks the average-length bound
/// and label drift against the original split.
pub fn validate_reduction(reduced: &[Example], original: &SplitStats, max_len: usize) -> Result<ValidationReport> {
    let stats = compute_stats(reduced)?;
    if stats.avg_sentence_length > max_len as f64 {
        return Err(DatasetError::LengthConstraintViolated { avg: stats.avg_sentence_length, max_len });
    }
    let labels: std::collections::BTreeSet<i64> =
        original.label_distribution.keys().chain(stats.label_distribution.keys()).copied().collect();
    for label in labels {
        let o = original.label_distribution.get(&label).copied().unwrap_or(0.0);
        let r = stats.label_distribution.get(&label).copied().unwrap_or(0.0);
        if (o - r).abs() > DRIFT_TOLERANCE {
            return Err(DatasetError::DistributionDrift { label, original: o, reduced: r });
        }
    }
    let over_length = reduced.iter().filter(|e| text_length(&e.text) > max_len).count();
    Ok(ValidationReport { max_len, original: original.clone(), reduced: stats, over_length })
}

pub fn to_jsonl(examples: &[Example]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(&serde_json::to_string(e).expect("example serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: &Path, examples: &[Example]) -> Result<()> {
    write_atomic(path, to_jsonl(examples).as_bytes())?;
    Ok(())
}

/// Writes `train.jsonl`, `test.jsonl`, `report.txt` and `report.json`.
pub fn save_reduction(dir: &Path, reduced: &ReducedDataset, train_report: &ValidationReport, test_report: &ValidationReport) -> Result<()> {
    write_jsonl(&dir.join("train.jsonl"), &reduced.train)?;
    write_jsonl(&dir.join("test.jsonl"), &reduced.test)?;
    let text = format!(
        "dataset: {}\nseed: {}\n\n[train]\n{}\n[test]\n{}",
        reduced.dataset_id,
        reduced.seed,
        train_report.to_text(),
        test_report.to_text()
    );
    write_atomic(&dir.join("report.txt"), text.as_bytes())?;
    let json = serde_json::json!({
        "dataset_id": reduced.dataset_id,
        "seed": reduced.seed,
        "train": train_report,
        "test": test_report,
    });
    write_atomic(&dir.join("report.json"), serde_json::to_string_pretty(&json).expect("report serializes").as_bytes())?;
    Ok(())
}

const TEXT_COLUMNS: [&str; 4] = ["text", "sentence", "review", "content"];

fn parse_label_value(raw: &str) -> Option<i64> {
    let t = raw.trim();
    t.parse::<i64>().ok().or_else(|| match t.to_ascii_lowercase().as_str() {
        "negative" | "neg" => Some(0),
        "positive" | "pos" => Some(1),
        _ => None,
    })
}

/// JSON lines with a text field (`text`, `sentence`, `review` or `content`)
/// and a `label` that is an integer or `positive`/`negative`.
pub fn load_jsonl(path: &Path) -> Result<Vec<Example>> {
    let content = fs::read_to_string(path)?;
    let err = |line: usize, message: String| DatasetError::Parse { path: path.display().to_string(), line, message };
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| err(i + 1, e.to_string()))?;
        let text = TEXT_COLUMNS
            .iter()
            .find_map(|k| v.get(*k).and_then(|t| t.as_str()))
            .ok_or_else(|| err(i + 1, "no text field".into()))?;
        let label = match v.get("label") {
            Some(serde_json::Value::Number(n)) => n.as_i64(),
            Some(serde_json::Value::String(s)) => parse_label_value(s),
            _ => None,
        }
        .ok_or_else(|| err(i + 1, "missing or invalid label".into()))?;
        out.push(Example::new(text, label));
    }
    Ok(out)
}

/// Delimited file with a header row naming a text column and a `label` column.
pub fn load_delimited(path: &Path, delimiter: u8) -> Result<Vec<Example>> {
    let err = |line: usize, message: String| DatasetError::Parse { path: path.display().to_string(), line, message };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .quoting(delimiter != b'\t')
        .from_path(path)
        .map_err(|e| err(0, e.to_string()))?;
    let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let find = |names: &[&str]| headers.iter().position(|h| names.contains(&h.trim().to_ascii_lowercase().as_str()));
    let text_col = find(&TEXT_COLUMNS).ok_or_else(|| err(1, "no text column".into()))?;
    let label_col = find(&["label", "sentiment"]).ok_or_else(|| err(1, "no label column".into()))?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| err(i + 2, e.to_string()))?;
        let text = rec.get(text_col).ok_or_else(|| err(i + 2, "short row".into()))?;
        let label = rec
            .get(label_col)
            .and_then(parse_label_value)
            .ok_or_else(|| err(i + 2, "missing or invalid label".into()))?;
        out.push(Example::new(text, label));
    }
    Ok(out)
}

/// Picks a loader from the file extension: `.jsonl`, `.csv` or `.tsv`.
pub fn load_examples(path: &Path) -> Result<Vec<Example>> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("csv") => load_delimited(path, b','),
        Some("tsv") => load_delimited(path, b'\t'),
        _ => load_jsonl(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(counts: &[(i64, usize)], len: impl Fn(usize) -> usize) -> Vec<Example> {
        let mut out = Vec::new();
        let mut i = 0;
        for &(label, c) in counts {
            for _ in 0..c {
                let words: Vec<String> = (0..len(i)).map(|w| format!("w{i}x{w}")).collect();
                out.push(Example::new(words.join(" "), label));
                i += 1;
            }
        }
        out
    }

    #[test]
    fn stats_by_hand() {
        let s = compute_stats(&[Example::new("a b", 0), Example::new("c", 1)]).unwrap();
        assert_eq!(s.label_distribution[&0], 0.5);
        assert_eq!(s.label_distribution[&1], 0.5);
        assert_eq!(s.avg_sentence_length, 1.5);
        let one = compute_stats(&[Example::new("x", 4)]).unwrap();
        assert_eq!(one.label_distribution[&4], 1.0);
        assert!(matches!(compute_stats(&[]), Err(DatasetError::EmptyDataset)));
    }

    #[test]
    fn quotas_hit_target() {
        let counts: BTreeMap<i64, usize> = [(0, 1), (1, 1), (2, 1)].into();
        let q = label_quotas(&counts, 10);
        assert_eq!(q.values().sum::<usize>(), 10);
        assert_eq!(q[&0], 4);
        assert_eq!(q[&1], 3);
        let counts: BTreeMap<i64, usize> = [(0, 700), (1, 300)].into();
        assert_eq!(label_quotas(&counts, 100), [(0, 70), (1, 30)].into());
    }

    #[test]
    fn balanced_reduction() {
        let data = corpus(&[(0, 500), (1, 500)], |i| 1 + i % 20);
        let red = reduce_split(&data, 100, 15, 42).unwrap();
        assert_eq!(red.len(), 100);
        assert_eq!(red.iter().filter(|e| e.label == 0).count(), 50);
        assert!(red.iter().all(|e| text_length(&e.text) <= 15));
        let again = reduce_split(&data, 100, 15, 42).unwrap();
        assert_eq!(to_jsonl(&red), to_jsonl(&again));
        validate_reduction(&red, &compute_stats(&data).unwrap(), 15).unwrap();
    }

    #[test]
    fn full_target_is_permutation() {
        let data = corpus(&[(0, 30), (1, 20)], |_| 3);
        let mut red = reduce_split(&data, 50, 10, 1).unwrap();
        let mut orig = data.clone();
        red.sort_by(|a, b| a.text.cmp(&b.text));
        orig.sort_by(|a, b| a.text.cmp(&b.text));
        assert_eq!(red, orig);
    }

    #[test]
    fn insufficient_samples() {
        // label 1 needs 100 but only 60 are short enough
        let mut data = corpus(&[(0, 200)], |_| 2);
        data.extend(corpus(&[(1, 60)], |_| 2));
        data.extend(corpus(&[(1, 140)], |_| 50));
        let err = reduce_split(&data, 200, 10, 42).unwrap_err();
        assert!(matches!(err, DatasetError::InsufficientSamples { label: 1, required: 100, available: 60 }));
    }

    #[test]
    fn validation_errors() {
        let orig = compute_stats(&corpus(&[(0, 50), (1, 50)], |_| 4)).unwrap();
        let mut red = corpus(&[(0, 5), (1, 5)], |_| 4);
        red.push(Example::new(vec!["z"; 100].join(" "), 0));
        red.push(Example::new("z", 1));
        assert!(matches!(validate_reduction(&red, &orig, 10), Err(DatasetError::LengthConstraintViolated { .. })));
        let skewed = corpus(&[(0, 10)], |_| 4);
        assert!(matches!(
            validate_reduction(&skewed, &orig, 10),
            Err(DatasetError::DistributionDrift { label: 0, .. })
        ));
    }

    #[test]
    fn loaders() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("a.jsonl");
        fs::write(&j, "{\"text\":\"good film\",\"label\":1}\n\n{\"sentence\":\"bad\",\"label\":\"negative\"}\n").unwrap();
        assert_eq!(load_examples(&j).unwrap(), vec![Example::new("good film", 1), Example::new("bad", 0)]);
        let c = dir.path().join("a.csv");
        fs::write(&c, "review,sentiment\n\"fine, really\",positive\nmeh,negative\n").unwrap();
        assert_eq!(load_examples(&c).unwrap(), vec![Example::new("fine, really", 1), Example::new("meh", 0)]);
        let t = dir.path().join("a.tsv");
        fs::write(&t, "sentence\tlabel\nit \"works\"\t1\n").unwrap();
        assert_eq!(load_examples(&t).unwrap(), vec![Example::new("it \"works\"", 1)]);
        fs::write(&j, "{\"text\":\"x\"}\n").unwrap();
        assert!(matches!(load_examples(&j), Err(DatasetError::Parse { line: 1, .. })));
    }

    #[test]
    fn reference_specs() {
        let s = DatasetSpec::reference(DatasetId::Sst2);
        assert_eq!((s.train_size, s.test_size, s.max_len), (6920, 1821, 56));
        assert_eq!(DatasetSpec::reference(DatasetId::Emotion).label_set.len(), 6);
        assert_eq!("rotten_tomatoes".parse::<DatasetId>().unwrap(), DatasetId::Rotten);
    }
}
