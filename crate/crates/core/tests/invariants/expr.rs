use idsr::dataset::Dataset;
use idsr::expr::StackModel;
use proptest::prelude::*;

use super::{arb_finite, arb_model, run, Suite};

pub fn suites() -> Vec<Suite> {
    vec![
        Suite { module: "expr", name: "expr_totality", check: totality },
        Suite { module: "expr", name: "expr_purity", check: purity },
        Suite { module: "expr", name: "expr_batch_matches_scalar", check: batch_matches_scalar },
        Suite { module: "expr", name: "expr_json_round_trip", check: json_round_trip },
    ]
}

fn totality(cases: u32) -> Result<(), String> {
    let s = (arb_model(4, 40, 40), prop::collection::vec(arb_finite(), 4));
    run(cases, s, |(m, x)| {
        let v = m.evaluate(&x);
        prop_assert!(v.is_finite(), "{m} at {x:?} gave {v}");
        Ok(())
    })
}

fn purity(cases: u32) -> Result<(), String> {
    let s = (arb_model(4, 40, 40), prop::collection::vec(arb_finite(), 4));
    run(cases, s, |(m, x)| {
        let a = m.evaluate(&x);
        let mut stack = Vec::new();
        let b = m.evaluate_with(&x, &mut stack);
        let c = m.clone().evaluate(&x);
        prop_assert_eq!(a.to_bits(), b.to_bits());
        prop_assert_eq!(a.to_bits(), c.to_bits());
        Ok(())
    })
}

fn batch_matches_scalar(cases: u32) -> Result<(), String> {
    let s = (1usize..6).prop_flat_map(|p| {
        (
            arb_model(p, 30, 30),
            prop::collection::vec(prop::collection::vec(arb_finite(), p), 1..12),
        )
    });
    run(cases, s, |(m, rows)| {
        let d = Dataset::from_rows("t", &rows, vec![0.0; rows.len()]).unwrap();
        let batch = m.evaluate_batch(&d);
        prop_assert_eq!(batch.len(), rows.len());
        for (i, r) in rows.iter().enumerate() {
            prop_assert_eq!(batch[i].to_bits(), m.evaluate(r).to_bits(), "row {}", i);
        }
        Ok(())
    })
}

fn json_round_trip(cases: u32) -> Result<(), String> {
    run(cases, arb_model(6, 30, 30), |m| {
        let text = serde_json::to_string(&m).unwrap();
        let back: StackModel = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, m);
        Ok(())
    })
}
