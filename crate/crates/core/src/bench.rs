//! Latency, throughput and peak-memory measurement for classification runners.

use crate::model::Transformer;
use crate::prompt::{render_prompt, ChatModel, PromptTemplate, TemplateId, TransformerChat};
use crate::surgeon::TruncatedPipeline;
use serde::{Deserialize, Serialize};
use std::alloc::{GlobalAlloc, Layout, System};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::{Duration, Instant};
use thiserror::Error;

pub const MIN_ITERS: usize = 10;
pub const MIN_WARMUP: usize = 2;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("device `{0}` is not available (only `cpu` is supported)")]
    DeviceUnavailable(String),
    #[error("need at least {MIN_ITERS} measured iterations, got {0}")]
    TooFewIterations(usize),
    #[error("need at least {MIN_WARMUP} warmup iterations, got {0}")]
    TooFewWarmup(usize),
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("no input samples")]
    EmptyInput,
    #[error("runner `{runner}` failed: {message}")]
    Runner { runner: String, message: String },
}

pub type Result<T> = std::result::Result<T, BenchError>;

static ALLOC_CURRENT: AtomicUsize = AtomicUsize::new(0);
static ALLOC_PEAK: AtomicUsize = AtomicUsize::new(0);
static ALLOC_ACTIVE: AtomicBool = AtomicBool::new(false);

/// Heap-counting wrapper around the system allocator. Install it with
/// `#[global_allocator]` in a binary to get transient-heap peaks in
/// [`measure_efficiency`]; without it only resident weights are counted.
pub struct CountingAllocator;

unsafe impl GlobalAlloc for CountingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = ALLOC_CURRENT.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            ALLOC_PEAK.fetch_max(now, Ordering::Relaxed);
            ALLOC_ACTIVE.store(true, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        ALLOC_CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

impl CountingAllocator {
    pub fn is_active() -> bool {
        ALLOC_ACTIVE.load(Ordering::Relaxed)
    }

    pub fn current() -> usize {
        ALLOC_CURRENT.load(Ordering::Relaxed)
    }

    pub fn peak() -> usize {
        ALLOC_PEAK.load(Ordering::Relaxed)
    }

    /// Lowers the recorded peak to the current allocation level.
    pub fn reset_peak() {
        ALLOC_PEAK.store(ALLOC_CURRENT.load(Ordering::Relaxed), Ordering::Relaxed);
    }
}

/// Process high-water resident set, when the platform exposes it.
pub fn process_peak_rss() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Something that classifies a batch of texts.
pub trait BenchRunner {
    fn runner_id(&self) -> String;

    /// Bytes of weights the runner keeps loaded.
    fn resident_bytes(&self) -> u64 {
        0
    }

    fn run_batch(&self, texts: &[String]) -> std::result::Result<(), String>;
}

/// Sleeps a fixed time per sample.
pub struct SleepRunner {
    pub per_sample: Duration,
}

impl BenchRunner for SleepRunner {
    fn runner_id(&self) -> String {
        format!("sleep-{}ms", self.per_sample.as_millis())
    }

    fn run_batch(&self, texts: &[String]) -> std::result::Result<(), String> {
        std::thread::sleep(self.per_sample * texts.len() as u32);
        Ok(())
    }
}

/// Truncated model plus head.
pub struct PipelineRunner<'a> {
    pub name: String,
    pub pipeline: &'a TruncatedPipeline,
}

impl BenchRunner for PipelineRunner<'_> {
    fn runner_id(&self) -> String {
        self.name.clone()
    }

    fn resident_bytes(&self) -> u64 {
        self.pipeline.model().resident_bytes() + self.pipeline.head().param_count() as u64 * 8
    }

    fn run_batch(&self, texts: &[String]) -> std::result::Result<(), String> {
        self.pipeline.classify(texts).map(|_| ()).map_err(|e| e.to_string())
    }
}

/// Full model answering a prompt template with greedy decoding.
pub struct PromptRunner<'a> {
    pub name: String,
    pub model: &'a Transformer,
    pub template: TemplateId,
    pub max_new_tokens: usize,
}

impl BenchRunner for PromptRunner<'_> {
    fn runner_id(&self) -> String {
        self.name.clone()
    }

    fn resident_bytes(&self) -> u64 {
        self.model.resident_bytes()
    }

    fn run_batch(&self, texts: &[String]) -> std::result::Result<(), String> {
        let template = PromptTemplate::get(self.template);
        let chat = TransformerChat { model: self.model };
        for t in texts {
            let msgs = render_prompt(&template, t).map_err(|e| e.to_string())?;
            chat.generate(&msgs, self.max_new_tokens).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub warmup: usize,
    pub iters: usize,
    pub batch_size: usize,
    pub device: String,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { warmup: MIN_WARMUP, iters: MIN_ITERS, batch_size: 1, device: "cpu".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemorySource {
    /// Resident weights plus the counted heap peak during measurement.
    WeightsPlusHeap,
    /// Resident weights only (no counting allocator installed).
    Weights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub runner_id: String,
    pub peak_memory_bytes: u64,
    pub memory_source: MemorySource,
    pub avg_ms_per_sample: f64,
    pub throughput_sps: f64,
    pub batch_size: usize,
    pub warmup_iters: usize,
    pub measured_iters: usize,
    pub device: String,
}

impl BenchResult {
    /// Relative gap between throughput and `1000 / avg_ms`, meaningful at batch 1.
    pub fn consistency_gap(&self) -> f64 {
        ((self.throughput_sps - 1000.0 / self.avg_ms_per_sample) / self.throughput_sps).abs()
    }
}

/// Runs `warmup` untimed and `iters` timed batches, cycling through `samples`.
/// Only the runner call is timed.
pub fn measure_efficiency(runner: &dyn BenchRunner, samples: &[String], opts: &BenchOptions) -> Result<BenchResult> {
    if opts.device != "cpu" {
        return Err(BenchError::DeviceUnavailable(opts.device.clone()));
    }
    if opts.iters < MIN_ITERS {
        return Err(BenchError::TooFewIterations(opts.iters));
    }
    if opts.warmup < MIN_WARMUP {
        return Err(BenchError::TooFewWarmup(opts.warmup));
    }
    if opts.batch_size == 0 {
        return Err(BenchError::ZeroBatch);
    }
    if samples.is_empty() {
        return Err(BenchError::EmptyInput);
    }
    let runner_id = runner.runner_id();
    let mut cursor = 0;
    let mut next_batch = || {
        let b: Vec<String> = (0..opts.batch_size).map(|i| samples[(cursor + i) % samples.len()].clone()).collect();
        cursor = (cursor + opts.batch_size) % samples.len();
        b
    };
    let fail = |message: String| BenchError::Runner { runner: runner_id.clone(), message };
    for _ in 0..opts.warmup {
        runner.run_batch(&next_batch()).map_err(fail)?;
    }
    let batches: Vec<Vec<String>> = (0..opts.iters).map(|_| next_batch()).collect();
    let base = CountingAllocator::current();
    CountingAllocator::reset_peak();
    let mut total = Duration::ZERO;
    for b in &batches {
        let start = Instant::now();
        runner.run_batch(b).map_err(fail)?;
        total += start.elapsed();
    }
    let (transient, memory_source) = if CountingAllocator::is_active() {
        (CountingAllocator::peak().saturating_sub(base) as u64, MemorySource::WeightsPlusHeap)
    } else {
        (0, MemorySource::Weights)
    };
    let n = (opts.iters * opts.batch_size) as f64;
    let secs = total.as_secs_f64().max(f64::MIN_POSITIVE);
    Ok(BenchResult {
        runner_id,
        peak_memory_bytes: runner.resident_bytes() + transient,
        memory_source,
        avg_ms_per_sample: secs * 1000.0 / n,
        throughput_sps: n / secs,
        batch_size: opts.batch_size,
        warmup_iters: opts.warmup,
        measured_iters: opts.iters,
        device: opts.device.clone(),
    })
}

/// A reference efficiency row used for ratio columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub name: String,
    /// Decimal gigabytes.
    pub peak_memory_gb: f64,
    pub avg_ms_per_sample: f64,
    pub throughput_sps: f64,
}

impl ReferenceRow {
    fn new(name: &str, peak_memory_gb: f64, avg_ms_per_sample: f64, throughput_sps: f64) -> Self {
        Self { name: name.into(), peak_memory_gb, avg_ms_per_sample, throughput_sps }
    }
}

/// Reference SST-2 efficiency figures for the Llama instruct models, their
/// truncated counterparts and two encoder baselines.
pub fn sst2_reference_rows() -> Vec<ReferenceRow> {
    vec![
        ReferenceRow::new("Instruct-Llama 3.2 (1B)", 2.4, 11.17, 90.0),
        ReferenceRow::new("Instruct-Llama 3.2 (3B)", 6.2, 18.19, 55.0),
        ReferenceRow::new("Instruct-Llama 3.1 (8B)", 15.4, 37.73, 48.0),
        ReferenceRow::new("Truncated Llama 3.2 (1B)", 1.5, 6.08, 164.0),
        ReferenceRow::new("Truncated Llama 3.2 (1B) Instruct", 1.7, 7.98, 125.0),
        ReferenceRow::new("Truncated Llama 3.2 (3B) Instruct", 1.7, 5.09, 196.0),
        ReferenceRow::new("Truncated Llama 3.1 (8B) Instruct", 3.2, 5.31, 182.0),
        ReferenceRow::new("DeBERTa V3 Large (418M)", 0.845, 22.03, 45.0),
        ReferenceRow::new("RoBERTa Large (355M)", 0.692, 8.35, 120.0),
    ]
}

fn fmt_bytes(b: u64) -> String {
    let b = b as f64;
    if b >= 1e9 {
        format!("{:.2} GB", b / 1e9)
    } else if b >= 1e6 {
        format!("{:.2} MB", b / 1e6)
    } else if b >= 1e3 {
        format!("{:.2} KB", b / 1e3)
    } else {
        format!("{b} B")
    }
}

/// Markdown table: runner, peak memory, avg time per sample, throughput.
/// With `reference`, row `i` is paired with `reference[i]` and measured /
/// reference ratios are appended (blank when no reference row exists).
pub fn compare_report(results: &[BenchResult], reference: Option<&[ReferenceRow]>) -> String {
    let mut s = String::new();
    s.push_str("| Runner | Peak Memory | Avg. Time per Sample (ms) | Throughput (samples/sec) |");
    if reference.is_some() {
        s.push_str(" Reference | Memory Ratio | Time Ratio | Throughput Ratio |");
    }
    s.push('\n');
    s.push_str("|---|---|---|---|");
    if reference.is_some() {
        s.push_str("---|---|---|---|");
    }
    s.push('\n');
    for (i, r) in results.iter().enumerate() {
        let _ = write!(
            s,
            "| {} | {} | {:.2} | {:.1} |",
            r.runner_id,
            fmt_bytes(r.peak_memory_bytes),
            r.avg_ms_per_sample,
            r.throughput_sps
        );
        if let Some(refs) = reference {
            match refs.get(i) {
                Some(rf) => {
                    let _ = write!(
                        s,
                        " {} | {:.4} | {:.4} | {:.4} |",
                        rf.name,
                        r.peak_memory_bytes as f64 / (rf.peak_memory_gb * 1e9),
                        r.avg_ms_per_sample / rf.avg_ms_per_sample,
                        r.throughput_sps / rf.throughput_sps
                    );
                }
                None => s.push_str("  |  |  |  |"),
            }
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(id: &str, mem: u64, ms: f64) -> BenchResult {
        BenchResult {
            runner_id: id.into(),
            peak_memory_bytes: mem,
            memory_source: MemorySource::Weights,
            avg_ms_per_sample: ms,
            throughput_sps: 1000.0 / ms,
            batch_size: 1,
            warmup_iters: 2,
            measured_iters: 10,
            device: "cpu".into(),
        }
    }

    #[test]
    fn preconditions() {
        let r = SleepRunner { per_sample: Duration::from_millis(1) };
        let s = vec!["a".to_string()];
        let bad = |o: BenchOptions| measure_efficiency(&r, &s, &o).unwrap_err();
        assert!(matches!(bad(BenchOptions { iters: 9, ..Default::default() }), BenchError::TooFewIterations(9)));
        assert!(matches!(bad(BenchOptions { warmup: 1, ..Default::default() }), BenchError::TooFewWarmup(1)));
        assert!(matches!(bad(BenchOptions { device: "cuda:0".into(), ..Default::default() }), BenchError::DeviceUnavailable(_)));
        assert!(matches!(measure_efficiency(&r, &[], &BenchOptions::default()), Err(BenchError::EmptyInput)));
    }

    #[test]
    fn sleep_runner_timing() {
        let r = SleepRunner { per_sample: Duration::from_millis(10) };
        let res = measure_efficiency(&r, &["x".to_string()], &BenchOptions::default()).unwrap();
        assert!((res.avg_ms_per_sample - 10.0).abs() <= 2.0, "{}", res.avg_ms_per_sample);
        assert!(res.consistency_gap() <= 0.10);
    }

    #[test]
    fn report_shapes() {
        let empty = compare_report(&[], None);
        assert_eq!(empty.lines().count(), 2);
        let rows = [result("a", 2_400_000_000, 11.17), result("b", 1_000, 5.0)];
        let table = compare_report(&rows, None);
        assert_eq!(table.lines().count(), 4);
        let refs = sst2_reference_rows();
        let with_ref = compare_report(&rows[..1], Some(&refs[..1]));
        let row = with_ref.lines().nth(2).unwrap();
        assert!(row.contains("| 1.0000 | 1.0000 |"), "{row}");
    }

    #[test]
    fn reference_rows_mostly_follow_inverse_latency() {
        // the 8B instruct row is the one inconsistent reference row
        let refs = sst2_reference_rows();
        let off: Vec<&str> = refs
            .iter()
            .filter(|r| ((r.throughput_sps - 1000.0 / r.avg_ms_per_sample) / r.throughput_sps).abs() > 0.10)
            .map(|r| r.name.as_str())
            .collect();
        assert_eq!(off, vec!["Instruct-Llama 3.1 (8B)"]);
    }
}
