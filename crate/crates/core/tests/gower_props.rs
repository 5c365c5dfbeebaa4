use std::sync::Arc;

use gowerfed::data::{Column, FeatureKind, FeatureSchema, InstanceTable, Value};
use gowerfed::gower::{self, GowerEngine};
use proptest::prelude::*;

fn schema(kinds: &[FeatureKind]) -> Arc<FeatureSchema> {
    let columns = kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| Column {
            name: format!("f{i}"),
            kind,
        })
        .collect();
    Arc::new(FeatureSchema::new(columns, "label", Vec::new()).unwrap())
}

fn cell(kind: FeatureKind) -> impl Strategy<Value = Value> {
    match kind {
        FeatureKind::Numerical => prop_oneof![
            1 => Just(Value::Missing),
            6 => (-1e3f64..1e3).prop_map(Value::Number),
            1 => Just(Value::Number(7.0)),
        ]
        .boxed(),
        FeatureKind::Categorical => prop_oneof![
            1 => Just(Value::Missing),
            6 => prop::sample::select(vec!["a", "b", "c"]).prop_map(Value::token),
        ]
        .boxed(),
    }
}

prop_compose! {
    fn table(max_rows: usize)(
        kinds in prop::collection::vec(prop_oneof![Just(FeatureKind::Numerical), Just(FeatureKind::Categorical)], 1..6),
        n in 2..max_rows,
    )(
        rows in prop::collection::vec(kinds.iter().map(|&k| cell(k)).collect::<Vec<_>>(), n..=n),
        labels in prop::collection::vec(0u8..2, n..=n),
        kinds in Just(kinds),
    ) -> InstanceTable {
        InstanceTable::new(schema(&kinds), rows, labels).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn square_matrix_is_a_bounded_symmetric_dissimilarity(t in table(24)) {
        let m = gower::gower_matrix(&t).unwrap();
        for i in 0..m.rows() {
            prop_assert_eq!(m.get(i, i), 0.0);
            for j in 0..m.cols() {
                let v = m.get(i, j);
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert_eq!(v, m.get(j, i));
            }
        }
    }

    #[test]
    fn limit_cols_is_the_left_block(t in table(20), frac in 0.0f64..1.0) {
        let limit = 1 + ((t.len() - 1) as f64 * frac) as usize;
        let full = gower::gower_matrix(&t).unwrap();
        let left = gower::gower_matrix_limit_cols(&t, limit).unwrap();
        prop_assert_eq!((left.rows(), left.cols()), (t.len(), limit));
        for i in 0..t.len() {
            prop_assert_eq!(left.row(i), &full.row(i)[..limit]);
        }
    }

    #[test]
    fn sliced_matches_appended_rows(t in table(20), frac in 0.0f64..1.0) {
        let skip = 1 + ((t.len() - 2) as f64 * frac) as usize;
        let train = t.select(&(0..skip).collect::<Vec<_>>());
        let sliced = gower::sliced_gower_matrix_limit_cols(&t, skip, skip).unwrap();
        let base = gower::gower_matrix(&train).unwrap();
        let ranges = gower::compute_ranges(&train);
        for (i, row) in t.rows()[skip..].iter().enumerate() {
            let appended = gower::append_row(&base, row, &train, &ranges).unwrap();
            prop_assert_eq!(appended.as_slice(), sliced.row(i));
        }
        prop_assert_eq!(sliced.row_labels(), &t.labels()[skip..]);
    }

    #[test]
    fn width_does_not_change_values(t in table(40)) {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| gower::gower_matrix(&t).unwrap());
        let b = four.install(|| gower::gower_matrix(&t).unwrap());
        prop_assert_eq!(a, b);
    }
}

fn small() -> InstanceTable {
    let kinds = [FeatureKind::Categorical, FeatureKind::Numerical, FeatureKind::Numerical];
    let rows = vec![
        vec![Value::token("tcp"), Value::Number(0.0), Value::Number(4.0)],
        vec![Value::token("udp"), Value::Number(10.0), Value::Missing],
        vec![Value::token("tcp"), Value::Number(5.0), Value::Number(8.0)],
        vec![Value::token("icmp"), Value::Number(2.0), Value::Number(6.0)],
    ];
    InstanceTable::new(schema(&kinds), rows, vec![0, 1, 0, 1]).unwrap()
}

#[test]
fn single_instance_matrix() {
    let t = small().select(&[0]);
    let m = gower::gower_matrix(&t).unwrap();
    assert_eq!((m.rows(), m.cols(), m.values()), (1, 1, [0.0f32].as_slice()));
}

#[test]
fn test_row_copying_a_training_row() {
    let train = small();
    let dup = train.select(&[0]);
    let all = train.concat(&dup).unwrap();
    let sliced = gower::sliced_gower_matrix_limit_cols(&all, 4, 4).unwrap();
    let full = gower::gower_matrix(&train).unwrap();
    assert_eq!(sliced.row(0), full.row(0));
}

#[test]
fn maximally_different_instance_is_all_ones() {
    let train = small();
    let ranges = gower::compute_ranges(&train);
    let base = gower::gower_matrix(&train).unwrap();
    let far = vec![Value::token("gre"), Value::Number(1e6), Value::Number(-1e6)];
    let row = gower::append_row(&base, &far, &train, &ranges).unwrap();
    assert_eq!(row, vec![1.0f32; 4]);
}

#[test]
fn hand_evaluated_entries() {
    // ranges: num1 = 10, num2 = 4 (missing ignored)
    let m = gower::gower_matrix(&small()).unwrap();
    let close = |a: f32, b: f64| (f64::from(a) - b).abs() < 1e-7;
    assert!(close(m.get(0, 1), (1.0 + 1.0) / 2.0));
    assert!(close(m.get(0, 2), (0.0 + 0.5 + 1.0) / 3.0));
    assert!(close(m.get(0, 3), (1.0 + 0.2 + 0.5) / 3.0));
}

#[test]
fn memory_cap_refuses_before_allocating() {
    let engine = GowerEngine::with_memory_cap(10);
    let err = engine.matrix(&small()).unwrap_err();
    assert_eq!(err.kind(), "memory_budget");
    assert!(err.to_string().contains("68"), "{err}");
}
