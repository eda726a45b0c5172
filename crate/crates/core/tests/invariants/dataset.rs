use std::collections::BTreeSet;

use idsr::dataset::{parse_delimited, split_indices, strategic_points, Dataset, Format};
use proptest::prelude::*;

use super::{arb_finite, run, Suite};

pub fn suites() -> Vec<Suite> {
    vec![
        Suite { module: "dataset", name: "dataset_split_partitions", check: split_partitions },
        Suite { module: "dataset", name: "dataset_strategic_permutation", check: strategic_permutation },
        Suite { module: "dataset", name: "dataset_load_idempotent", check: load_idempotent },
    ]
}

fn split_partitions(cases: u32) -> Result<(), String> {
    let s = (1usize..400, 0.01..0.99f64, any::<u64>());
    run(cases, s, |(n, frac, seed)| {
        let (train, test) = split_indices(n, frac, seed);
        let a: BTreeSet<usize> = train.iter().copied().collect();
        let b: BTreeSet<usize> = test.iter().copied().collect();
        prop_assert_eq!(a.len(), train.len());
        prop_assert_eq!(b.len(), test.len());
        prop_assert!(a.is_disjoint(&b));
        let all: BTreeSet<usize> = a.union(&b).copied().collect();
        prop_assert_eq!(all, (0..n).collect::<BTreeSet<_>>());
        prop_assert_eq!(train.len(), ((frac * n as f64).round() as usize).min(n));
        Ok(())
    })
}

/// Targets on a quarter grid so every sum is exact and the mean does not
/// depend on row order.
fn strategic_permutation(cases: u32) -> Result<(), String> {
    let s = (1usize..40)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(-40i32..40, n),
                Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
            )
        });
    run(cases, s, |(ticks, perm)| {
        let n = ticks.len();
        let y: Vec<f64> = ticks.iter().map(|&t| t as f64 * 0.25).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let d = Dataset::from_rows("t", &rows, y.clone()).unwrap();
        // Row k of the permuted set is row perm[k] of the original.
        let pd = d.subset(&perm).unwrap();
        let a = strategic_points(&d).unwrap();
        let b = strategic_points(&pd).unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        let key = |slot: usize, t: f64| if slot == 1 { (t - mean).abs() } else { t };
        for slot in 0..3 {
            let orig = a.row_indices[slot];
            let mapped = perm[b.row_indices[slot]];
            // Same row up to ties on the selection key.
            prop_assert_eq!(key(slot, y[orig]), key(slot, y[mapped]));
            let tied = y.iter().filter(|&&t| key(slot, t) == key(slot, y[orig])).count();
            if tied == 1 {
                prop_assert_eq!(orig, mapped);
            }
        }
        Ok(())
    })
}

fn load_idempotent(cases: u32) -> Result<(), String> {
    let s = (1usize..5, 2usize..20, any::<bool>()).prop_flat_map(|(p, n, csv)| {
        (
            prop::collection::vec(prop::collection::vec(arb_finite(), p), n),
            prop::collection::vec(arb_finite(), n),
            Just(csv),
        )
    });
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run(cases, s, |(rows, y, csv)| {
        let format = if csv { Format::Csv } else { Format::Tsv };
        let d = Dataset::from_rows("t", &rows, y).unwrap();
        let path = dir.path().join("d.txt");
        d.write_delimited(&path, format, "target").unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let back = parse_delimited("t", &bytes, format, "target").unwrap();
        prop_assert_eq!(back.feature_names(), d.feature_names());
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(back.features()), bits(d.features()));
        prop_assert_eq!(bits(back.target()), bits(d.target()));
        Ok(())
    })
}
