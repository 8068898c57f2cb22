use ndarray::Array2;
use probekit::pooling::{attention_weights, pool, PoolingMethod, TokenMatrix};
use proptest::prelude::*;

fn matrix() -> impl Strategy<Value = TokenMatrix> {
    (1usize..=10, 1usize..=6).prop_flat_map(|(t, d)| {
        (prop::collection::vec(-50.0f64..50.0, t * d), prop::collection::vec(0u8..=1, t)).prop_map(move |(v, mut m)| {
            if !m.contains(&1) {
                m[t - 1] = 1;
            }
            TokenMatrix::new(Array2::from_shape_vec((t, d), v).unwrap(), m).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn output_dims(m in matrix()) {
        let d = m.dim();
        for method in PoolingMethod::ALL {
            prop_assert_eq!(pool(&m, method).unwrap().values.len(), method.output_dim(d));
        }
    }

    #[test]
    fn padded_rows_are_ignored(m in matrix(), junk in -1e6f64..1e6) {
        let mut v = m.values().clone();
        for (i, &b) in m.mask().iter().enumerate() {
            if b == 0 {
                v.row_mut(i).fill(junk);
            }
        }
        let other = TokenMatrix::new(v, m.mask().to_vec()).unwrap();
        for method in PoolingMethod::ALL {
            prop_assert_eq!(pool(&m, method).unwrap().values, pool(&other, method).unwrap().values);
        }
    }

    #[test]
    fn attention_is_a_distribution(m in matrix()) {
        let w = attention_weights(&m).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (wi, &b) in w.iter().zip(m.mask()) {
            prop_assert!(*wi >= 0.0);
            if b == 0 {
                prop_assert_eq!(*wi, 0.0);
            }
        }
    }

    #[test]
    fn attention_lies_between_min_and_max(m in matrix()) {
        let a = pool(&m, PoolingMethod::Attention).unwrap().values;
        let lo = pool(&m, PoolingMethod::Min).unwrap().values;
        let hi = pool(&m, PoolingMethod::Max).unwrap().values;
        for j in 0..a.len() {
            prop_assert!(lo[j] - 1e-9 <= a[j] && a[j] <= hi[j] + 1e-9);
        }
    }
}

#[test]
fn all_masked_is_an_error() {
    let m = TokenMatrix::new(Array2::zeros((3, 2)), vec![0, 0, 0]);
    let rejected = match m {
        Err(_) => true,
        Ok(m) => PoolingMethod::ALL.iter().all(|&p| pool(&m, p).is_err()),
    };
    assert!(rejected);
}

#[test]
fn mask_length_must_match() {
    assert!(TokenMatrix::new(Array2::zeros((3, 2)), vec![1, 1]).is_err());
}
