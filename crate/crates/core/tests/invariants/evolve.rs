use idsr::dataset::Dataset;
use idsr::evolve::{dominates, evolve_with, pareto_front, EvolveOptions, GpConfig, ScoredModel, SelectionScheme};
use idsr::StackModel;
use proptest::prelude::*;

use super::{run, Suite};

pub fn suites() -> Vec<Suite> {
    vec![
        Suite { module: "evolve", name: "evolve_elitism_and_size_cap", check: elitism_and_size_cap },
        Suite { module: "evolve", name: "evolve_front_matches_oracle", check: front_matches_oracle },
        Suite { module: "evolve", name: "evolve_offspring_mix", check: offspring_mix },
    ]
}

fn small_problem() -> impl Strategy<Value = Dataset> {
    (1usize..4, 8usize..30).prop_flat_map(|(p, n)| {
        (prop::collection::vec(prop::collection::vec(-3.0..3.0f64, p), n), prop::collection::vec(-5.0..5.0f64, n))
            .prop_map(|(rows, y)| Dataset::from_rows("t", &rows, y).unwrap())
    })
}

fn elitism_and_size_cap(cases: u32) -> Result<(), String> {
    let s = (small_problem(), any::<u64>(), any::<bool>(), 10usize..40);
    run(cases, s, |(d, seed, pareto, cap)| {
        let config = GpConfig {
            population_size: 20,
            elitism_count: 2,
            tournament_size: 4,
            generations: 6,
            max_complexity: cap,
            max_init_size: 10,
            selection_scheme: if pareto { SelectionScheme::ParetoTournament } else { SelectionScheme::Tournament },
            seed,
            ..GpConfig::default()
        };
        let mut bests = Vec::new();
        let mut sizes_ok = true;
        let (pop, history) = evolve_with(&d, &config, EvolveOptions::default(), |s| {
            bests.push(s.best_fitness);
            sizes_ok &= s.best_size <= cap;
            true
        })
        .unwrap();
        prop_assert!(sizes_ok);
        prop_assert!(pop.members.iter().all(|m| m.size <= cap && m.model.size_complexity() == m.size));
        prop_assert_eq!(history.len(), 7);
        for w in bests.windows(2) {
            prop_assert!(w[1] <= w[0], "best fitness rose: {:?}", bests);
        }
        Ok(())
    })
}

/// Quadratic dominance check over all pairs.
fn brute_force_front(members: &[ScoredModel]) -> Vec<(u64, usize)> {
    let key = |m: &ScoredModel| (m.train_fitness, m.size as f64);
    let mut out: Vec<(u64, usize)> = members
        .iter()
        .filter(|a| !members.iter().any(|b| dominates(key(b), key(a))))
        .map(|m| (m.train_fitness.to_bits(), m.size))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn front_matches_oracle(cases: u32) -> Result<(), String> {
    // Coarse grids force ties in both objectives.
    let s = prop::collection::vec((0u32..20, 1usize..15), 1..200);
    run(cases, s, |pairs| {
        let members: Vec<ScoredModel> = pairs
            .iter()
            .map(|&(f, size)| ScoredModel {
                model: StackModel::constant(1.0),
                train_fitness: f as f64 / 20.0,
                size,
                ed: None,
            })
            .collect();
        let front = pareto_front(&members);
        let mut got: Vec<(u64, usize)> = front.iter().map(|m| (m.train_fitness.to_bits(), m.size)).collect();
        got.sort_unstable();
        prop_assert_eq!(got.len(), front.len(), "duplicate objective pairs in front");
        prop_assert_eq!(got, brute_force_front(&members));
        Ok(())
    })
}

fn offspring_mix(cases: u32) -> Result<(), String> {
    let s = (0.0..100.0f64, 0.0..100.0f64, 0.0..100.0f64, 5usize..40, 0usize..5, any::<u64>())
        .prop_filter("positive total rate", |(a, b, c, ..)| a + b + c > 1e-6);
    run(cases, s, |(rm, rc, rs, pop, elite, seed)| {
        let elite = elite.min(pop);
        let config = GpConfig {
            mutation_rate: rm,
            crossover_rate: rc,
            spawn_rate: rs,
            population_size: pop,
            elitism_count: elite,
            tournament_size: 3,
            generations: 2,
            max_init_size: 6,
            seed,
            ..GpConfig::default()
        };
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let d = Dataset::from_rows("t", &rows, (0..10).map(|i| (i * i) as f64).collect()).unwrap();
        let (final_pop, history) = evolve_with(&d, &config, EvolveOptions::default(), |_| true).unwrap();
        prop_assert_eq!(final_pop.members.len(), pop);
        let total = (pop - elite) as f64;
        let sum = rm + rc + rs;
        for stats in &history[1..] {
            let made = stats.offspring;
            prop_assert_eq!(made.iter().sum::<usize>(), pop - elite);
            for (k, rate) in [rm, rc, rs].into_iter().enumerate() {
                let ideal = total * rate / sum;
                prop_assert!((made[k] as f64 - ideal).abs() < 1.0, "{:?} vs ideal {}", made, ideal);
            }
        }
        Ok(())
    })
}
