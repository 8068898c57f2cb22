use probekit::dataset::{label_quotas, reduce_split, text_length, Example};
use proptest::prelude::*;
use std::collections::BTreeMap;

proptest! {
    #[test]
    fn quotas_sum_to_target_and_stay_close(counts in prop::collection::btree_map(0i64..8, 1usize..500, 1..6), frac in 0.0f64..1.0) {
        let total: usize = counts.values().sum();
        let target = (total as f64 * frac) as usize;
        let q = label_quotas(&counts, target);
        prop_assert_eq!(q.values().sum::<usize>(), target);
        for (l, &c) in &counts {
            let exact = target as f64 * c as f64 / total as f64;
            prop_assert!((q[l] as f64 - exact).abs() < 1.0);
            prop_assert!(q[l] <= c);
        }
    }

    #[test]
    fn reduction_respects_cap_and_quota(lens in prop::collection::vec((1usize..30, 0i64..3), 20..120), seed in any::<u64>()) {
        let data: Vec<Example> = lens
            .iter()
            .enumerate()
            .map(|(i, &(n, l))| Example::new(vec![format!("w{i}"); n].join(" "), l))
            .collect();
        let max_len = 20;
        let target = data.len() / 4;
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for e in &data {
            *counts.entry(e.label).or_default() += 1;
        }
        match reduce_split(&data, target, max_len, seed) {
            Ok(r) => {
                prop_assert_eq!(r.len(), target);
                prop_assert!(r.iter().all(|e| text_length(&e.text) <= max_len));
                let mut got: BTreeMap<i64, usize> = BTreeMap::new();
                for e in &r {
                    *got.entry(e.label).or_default() += 1;
                }
                let want: BTreeMap<i64, usize> = label_quotas(&counts, target).into_iter().filter(|&(_, v)| v > 0).collect();
                prop_assert_eq!(got, want);
            }
            Err(_) => {
                // only allowed when some label has too few short examples
                let q = label_quotas(&counts, target);
                let short = |l: i64| data.iter().filter(|e| e.label == l && text_length(&e.text) <= max_len).count();
                prop_assert!(q.iter().any(|(&l, &n)| short(l) < n));
            }
        }
    }
}
