use idsr::intrinsic_dim::IdWindow;
use idsr::select::mann_whitney::mann_whitney_u;
use idsr::select::{classify_in_window, min_max_normalize, Band};
use proptest::prelude::*;

use super::{run, Suite};

pub fn suites() -> Vec<Suite> {
    vec![
        Suite { module: "select", name: "select_band_partition", check: band_partition },
        Suite { module: "select", name: "select_window_monotone", check: window_monotone },
        Suite { module: "select", name: "select_normalization_bounds", check: normalization_bounds },
        Suite { module: "select", name: "select_mann_whitney_symmetry", check: mann_whitney_symmetry },
    ]
}

fn window() -> impl Strategy<Value = IdWindow> {
    (0.0..10.0f64, 0.0..5.0f64).prop_map(|(lo, w)| IdWindow { min: lo, max: lo + w })
}

fn band_partition(cases: u32) -> Result<(), String> {
    let s = (window(), prop::collection::vec(0usize..16, 1..60));
    run(cases, s, |(w, eds)| {
        let mut counts = [0usize; 3];
        for &ed in &eds {
            let band = classify_in_window(ed, &w);
            let k = Band::ALL.iter().position(|b| *b == band).unwrap();
            counts[k] += 1;
            // Independent restatement of the band rule.
            let e = ed as f64;
            let dist = if e < w.min { w.min - e } else if e > w.max { e - w.max } else { 0.0 };
            let want = if dist == 0.0 { Band::Ideal } else if dist <= 1.0 { Band::Close } else { Band::Far };
            prop_assert_eq!(band, want);
        }
        prop_assert_eq!(counts.iter().sum::<usize>(), eds.len());
        Ok(())
    })
}

fn window_monotone(cases: u32) -> Result<(), String> {
    let s = (window(), 0.0..3.0f64, 0.0..3.0f64, 0usize..16);
    run(cases, s, |(w, grow_lo, grow_hi, ed)| {
        let wider = IdWindow { min: (w.min - grow_lo).max(0.0), max: w.max + grow_hi };
        let rank = |b: Band| Band::ALL.iter().position(|x| *x == b).unwrap();
        let narrow = classify_in_window(ed, &w);
        let wide = classify_in_window(ed, &wider);
        prop_assert!(rank(wide) <= rank(narrow), "{:?} -> {:?}", narrow, wide);
        Ok(())
    })
}

fn normalization_bounds(cases: u32) -> Result<(), String> {
    run(cases, prop::collection::vec(0.0..1.0f64, 1..80), |v| {
        let n = min_max_normalize(&v);
        prop_assert_eq!(n.len(), v.len());
        prop_assert!(n.iter().all(|x| (0.0..=1.0).contains(x)));
        let distinct = v.iter().any(|x| *x != v[0]);
        if distinct {
            prop_assert_eq!(n.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
            prop_assert_eq!(n.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        }
        // Order preserving.
        for i in 0..v.len() {
            for j in 0..v.len() {
                if v[i] < v[j] {
                    prop_assert!(n[i] <= n[j]);
                }
            }
        }
        Ok(())
    })
}

fn mann_whitney_symmetry(cases: u32) -> Result<(), String> {
    // Small integer grids produce ties; larger samples take the normal path.
    let sample = || prop::collection::vec((0u8..12).prop_map(f64::from), 1..25);
    run(cases, (sample(), sample()), |(a, b)| {
        let ab = mann_whitney_u(&a, &b).unwrap();
        let ba = mann_whitney_u(&b, &a).unwrap();
        let nm = (a.len() * b.len()) as f64;
        prop_assert!((ab.u + ba.u - nm).abs() < 1e-9);
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        prop_assert!(ab.p_value > 0.0 && ab.p_value <= 1.0);
        Ok(())
    })
}
