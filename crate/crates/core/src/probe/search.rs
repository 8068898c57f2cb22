//! Hyperparameter spaces, seeded sampling and the stratified validation split.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Str(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamRange {
    LogUniform { low: f64, high: f64 },
    Uniform { low: f64, high: f64 },
    Int { choices: Vec<i64> },
    Categorical { choices: Vec<String> },
}

impl ParamRange {
    pub fn int_range(lo: i64, hi: i64) -> Self {
        ParamRange::Int { choices: (lo..=hi).collect() }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> ParamValue {
        match self {
            ParamRange::LogUniform { low, high } => {
                let u: f64 = rng.random();
                ParamValue::Float((low.ln() + u * (high.ln() - low.ln())).exp().clamp(*low, *high))
            }
            ParamRange::Uniform { low, high } => {
                let u: f64 = rng.random();
                ParamValue::Float(low + u * (high - low))
            }
            ParamRange::Int { choices } => ParamValue::Int(choices[rng.random_range(0..choices.len())]),
            ParamRange::Categorical { choices } => {
                ParamValue::Str(choices[rng.random_range(0..choices.len())].clone())
            }
        }
    }

    pub fn contains(&self, v: &ParamValue) -> bool {
        match (self, v) {
            (ParamRange::LogUniform { low, high }, ParamValue::Float(x))
            | (ParamRange::Uniform { low, high }, ParamValue::Float(x)) => x >= low && x <= high,
            (ParamRange::Int { choices }, ParamValue::Int(x)) => choices.contains(x),
            (ParamRange::Categorical { choices }, ParamValue::Str(s)) => choices.contains(s),
            _ => false,
        }
    }

    fn is_valid(&self) -> bool {
        match self {
            ParamRange::LogUniform { low, high } => *low > 0.0 && low <= high && high.is_finite(),
            ParamRange::Uniform { low, high } => low <= high && low.is_finite() && high.is_finite(),
            ParamRange::Int { choices } => !choices.is_empty(),
            ParamRange::Categorical { choices } => !choices.is_empty(),
        }
    }
}

pub type SearchSpace = BTreeMap<String, ParamRange>;

/// One sampled configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams(pub BTreeMap<String, ParamValue>);

impl Hyperparams {
    pub fn f64(&self, name: &str, default: f64) -> f64 {
        match self.0.get(name) {
            Some(ParamValue::Float(v)) => *v,
            Some(ParamValue::Int(v)) => *v as f64,
            _ => default,
        }
    }

    pub fn usize(&self, name: &str, default: usize) -> usize {
        match self.0.get(name) {
            Some(ParamValue::Int(v)) if *v > 0 => *v as usize,
            _ => default,
        }
    }

    pub fn str<'a>(&'a self, name: &str, default: &'a str) -> &'a str {
        match self.0.get(name) {
            Some(ParamValue::Str(s)) => s,
            _ => default,
        }
    }

    pub fn set(&mut self, name: &str, value: ParamValue) {
        self.0.insert(name.to_string(), value);
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

pub fn validate_space(space: &SearchSpace) -> Result<(), String> {
    for (name, range) in space {
        if !range.is_valid() {
            return Err(format!("invalid range for `{name}`: {range:?}"));
        }
    }
    Ok(())
}

/// `trials` configurations drawn independently from `space`.
pub fn sample_configs(space: &SearchSpace, trials: usize, seed: u64) -> Vec<Hyperparams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| Hyperparams(space.iter().map(|(k, r)| (k.clone(), r.sample(&mut rng))).collect()))
        .collect()
}

pub fn config_in_space(space: &SearchSpace, config: &Hyperparams) -> bool {
    space.iter().all(|(k, r)| config.0.get(k).is_some_and(|v| r.contains(v)))
}

/// Stratified split: per class, `round(val_fraction * n_c)` examples go to
/// validation, keeping at least one in training. Index lists are sorted.
pub fn stratified_split(y: &[usize], n_classes: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        idx.shuffle(&mut rng);
        let n_val = ((idx.len() as f64 * val_fraction).round() as usize).min(idx.len().saturating_sub(1));
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> SearchSpace {
        let mut s = SearchSpace::new();
        s.insert("C".into(), ParamRange::LogUniform { low: 1e-3, high: 1e2 });
        s.insert("depth".into(), ParamRange::int_range(3, 12));
        s.insert("kernel".into(), ParamRange::Categorical { choices: vec!["rbf".into(), "poly".into()] });
        s
    }

    #[test]
    fn samples_stay_inside_space_and_are_seeded() {
        let s = space();
        let a = sample_configs(&s, 50, 42);
        assert_eq!(a, sample_configs(&s, 50, 42));
        assert_ne!(a, sample_configs(&s, 50, 43));
        assert!(a.iter().all(|c| config_in_space(&s, c)));
    }

    #[test]
    fn hyperparams_json_round_trip() {
        let c = sample_configs(&space(), 1, 1).remove(0);
        let back: Hyperparams = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn split_is_stratified_80_20() {
        let y: Vec<usize> = (0..100).map(|i| usize::from(i % 10 < 3)).collect();
        let (tr, va) = stratified_split(&y, 2, 0.2, 42);
        assert_eq!(tr.len() + va.len(), 100);
        assert_eq!(va.iter().filter(|&&i| y[i] == 1).count(), 6);
        assert_eq!(va.iter().filter(|&&i| y[i] == 0).count(), 14);
        assert_eq!((tr.clone(), va.clone()), stratified_split(&y, 2, 0.2, 42));
    }

    #[test]
    fn singleton_class_stays_in_training() {
        let y = vec![0, 0, 0, 0, 0, 1];
        let (tr, va) = stratified_split(&y, 2, 0.2, 0);
        assert!(tr.contains(&5));
        assert_eq!(va.len(), 1);
    }
}
