use idsr::dataset::Dataset;
use idsr::intrinsic_dim::{estimate_id, id_profile_builtin, Estimator, EstimatorParams};
use proptest::prelude::*;

use super::{run, Suite};

pub fn suites() -> Vec<Suite> {
    vec![
        Suite { module: "intrinsic_dim", name: "id_scale_invariance", check: scale_invariance },
        Suite { module: "intrinsic_dim", name: "id_embedding_invariance", check: embedding_invariance },
        Suite { module: "intrinsic_dim", name: "id_bounds_and_window", check: bounds_and_window },
    ]
}

fn cloud() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..5, 30usize..70).prop_flat_map(|(p, n)| prop::collection::vec(prop::collection::vec(-1.0..1.0f64, p), n))
}

fn dataset(rows: &[Vec<f64>]) -> Dataset {
    Dataset::from_rows("t", rows, vec![0.0; rows.len()]).unwrap()
}

/// Every estimator on `d`, failures as `None`.
fn estimates(d: &Dataset) -> Vec<Option<f64>> {
    let params = EstimatorParams::default();
    Estimator::ALL.iter().map(|e| estimate_id(d, e, &params).ok()).collect()
}

fn compare(a: &[Option<f64>], b: &[Option<f64>], what: &str) -> Result<(), TestCaseError> {
    for (k, e) in Estimator::ALL.iter().enumerate() {
        match (a[k], b[k]) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-6, "{} {}: {} vs {}", what, e.name(), x, y),
            (None, None) => {}
            _ => prop_assert!(false, "{} {}: failure status changed {:?} vs {:?}", what, e.name(), a[k], b[k]),
        }
    }
    Ok(())
}

fn scale_invariance(cases: u32) -> Result<(), String> {
    run(cases, (cloud(), 0.05..20.0f64), |(rows, c)| {
        let d = dataset(&rows);
        compare(&estimates(&d), &estimates(&d.scaled(c)), "scaled")
    })
}

fn embedding_invariance(cases: u32) -> Result<(), String> {
    run(cases, cloud(), |rows| {
        let padded: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().copied().chain(std::iter::once(0.0)).collect())
            .collect();
        compare(&estimates(&dataset(&rows)), &estimates(&dataset(&padded)), "padded")
    })
}

fn bounds_and_window(cases: u32) -> Result<(), String> {
    run(cases, cloud(), |rows| {
        let d = dataset(&rows);
        let est = estimates(&d);
        for (k, e) in Estimator::ALL.iter().enumerate() {
            if let Some(v) = est[k] {
                prop_assert!(v > 0.0 && v.is_finite(), "{} gave {}", e.name(), v);
            }
        }
        let lpca = est[Estimator::ALL.iter().position(|e| *e == Estimator::Lpca).unwrap()];
        prop_assert!(lpca.is_some_and(|v| v <= d.p() as f64));
        if let Ok(p) = id_profile_builtin(&d, &Estimator::ALL, &EstimatorParams::default()) {
            prop_assert!(p.id_min <= p.id_max);
            prop_assert!(p.id_min >= 0.0);
            prop_assert!(p.window().contains(p.id_mean));
        }
        Ok(())
    })
}
