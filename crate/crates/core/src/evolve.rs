//! Generational genetic-programming engine over [`StackModel`]s.
//!
//! Fitness is `1 - r^2` with `r` the Pearson correlation between model output
//! and target, so lower is better. Each generation keeps the `elitism_count`
//! fittest models and fills the rest with mutation, two-point crossover and
//! fresh random models in the configured proportions. Parents come from a
//! plain fitness tournament or a Pareto tournament over
//! (fitness, complexity), where complexity is either model size or effective
//! dimensionality.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{strategic_points, Dataset};
use crate::expr::{random_model, random_operand, random_operator, Operand, Operator, StackModel};
use crate::hessian_ed::effective_dimensionality_at;
use crate::intrinsic_dim::IdWindow;

/// Attempts at producing a valid child before falling back.
const MAX_RETRIES: usize = 10;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("invalid GP configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset needs at least 2 rows for correlation fitness, got {0}")]
    TooFewRows(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionScheme {
    Tournament,
    ParetoTournament,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityMetric {
    Size,
    EffectiveDimensionality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossoverMethod {
    TwoPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessMetric {
    /// `1 - r^2`, Pearson correlation.
    PearsonR2,
}

/// Engine settings. [`Default`] reproduces the StackGP settings table:
/// offspring weights 79/11/10 (mutation/crossover/spawn), 10 elites,
/// tournament size 30, population 400, 200 generations, size cap 300.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub spawn_rate: f64,
    pub elitism_count: usize,
    pub crossover_method: CrossoverMethod,
    pub tournament_size: usize,
    pub population_size: usize,
    pub generations: usize,
    pub max_complexity: usize,
    pub max_init_size: usize,
    pub fitness_metric: FitnessMetric,
    pub selection_scheme: SelectionScheme,
    pub complexity_metric: ComplexityMetric,
    pub seed: u64,
    /// Score offspring on the rayon pool. Fitness values are identical either
    /// way; all random draws stay on the calling thread.
    pub parallel: bool,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            mutation_rate: 79.0,
            crossover_rate: 11.0,
            spawn_rate: 10.0,
            elitism_count: 10,
            crossover_method: CrossoverMethod::TwoPoint,
            tournament_size: 30,
            population_size: 400,
            generations: 200,
            max_complexity: crate::expr::MAX_COMPLEXITY,
            max_init_size: 20,
            fitness_metric: FitnessMetric::PearsonR2,
            selection_scheme: SelectionScheme::Tournament,
            complexity_metric: ComplexityMetric::Size,
            seed: 0,
            parallel: false,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |msg: String| Err(EvolveError::InvalidConfig(msg));
        let rates = [self.mutation_rate, self.crossover_rate, self.spawn_rate];
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) || rates.iter().sum::<f64>() <= 0.0 {
            return bad(format!("offspring rates {rates:?} must be non-negative with a positive sum"));
        }
        if self.population_size == 0 {
            return bad("population_size must be positive".into());
        }
        if self.elitism_count >= self.population_size {
            return bad(format!(
                "elitism_count {} must be below population_size {}",
                self.elitism_count, self.population_size
            ));
        }
        if self.tournament_size == 0 || self.tournament_size > self.population_size {
            return bad(format!(
                "tournament_size {} must lie in 1..={}",
                self.tournament_size, self.population_size
            ));
        }
        if self.max_init_size == 0 || self.max_init_size > self.max_complexity {
            return bad(format!(
                "max_init_size {} must lie in 1..=max_complexity ({})",
                self.max_init_size, self.max_complexity
            ));
        }
        Ok(())
    }

    /// Rates normalized to percentages summing to 100.
    pub fn normalized_rates(&self) -> [f64; 3] {
        let total = self.mutation_rate + self.crossover_rate + self.spawn_rate;
        [
            100.0 * self.mutation_rate / total,
            100.0 * self.crossover_rate / total,
            100.0 * self.spawn_rate / total,
        ]
    }

    /// Mutation, crossover and spawn counts for `total` offspring, split by
    /// largest remainder so they always sum to `total`.
    pub fn offspring_counts(&self, total: usize) -> [usize; 3] {
        let rates = self.normalized_rates();
        let exact: Vec<f64> = rates.iter().map(|r| r / 100.0 * total as f64).collect();
        let mut counts = [0usize; 3];
        for (c, e) in counts.iter_mut().zip(&exact) {
            *c = e.floor() as usize;
        }
        let mut left = total - counts.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &k in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[k] += 1;
            left -= 1;
        }
        counts
    }
}

/// A model with its cached scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredModel {
    pub model: StackModel,
    /// `1 - r^2` on the training data, in `[0, 1]`.
    pub train_fitness: f64,
    pub size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ed: Option<usize>,
}

impl ScoredModel {
    pub fn score(model: StackModel, d: &Dataset) -> Self {
        let train_fitness = fitness(&model, d);
        let size = model.size_complexity();
        ScoredModel {
            model,
            train_fitness,
            size,
            ed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub members: Vec<ScoredModel>,
    pub generation: usize,
}

impl Population {
    pub fn best(&self) -> Option<&ScoredModel> {
        self.members.iter().min_by(|a, b| rank_order(a, b))
    }
}

/// Summary statistics of one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub median_fitness: f64,
    pub best_size: usize,
    pub mean_size: f64,
    /// Offspring made by mutation, crossover and spawning this generation.
    pub offspring: [usize; 3],
}

impl GenerationStats {
    fn of(pop: &Population) -> Self {
        let mut fits: Vec<f64> = pop.members.iter().map(|m| m.train_fitness).collect();
        fits.sort_by(f64::total_cmp);
        let best = pop.best().expect("population is non-empty");
        GenerationStats {
            generation: pop.generation,
            best_fitness: best.train_fitness,
            median_fitness: median_sorted(&fits),
            best_size: best.size,
            mean_size: pop.members.iter().map(|m| m.size as f64).sum::<f64>()
                / pop.members.len() as f64,
            offspring: [0; 3],
        }
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `1 - r^2` between model output and target; 1 when either side has zero
/// variance or the correlation is not finite.
pub fn fitness(m: &StackModel, d: &Dataset) -> f64 {
    let pred = m.evaluate_batch(d);
    one_minus_r2(&pred, d.target())
}

/// `1 - r^2` for two equal-length vectors.
pub fn one_minus_r2(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.len() < 2 || a.len() != b.len() {
        return 1.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if !(saa > 0.0 && sbb > 0.0) {
        return 1.0;
    }
    let r = sab / (saa.sqrt() * sbb.sqrt());
    if !r.is_finite() {
        return 1.0;
    }
    (1.0 - r * r).clamp(0.0, 1.0)
}

/// Single-token edit: replace, insert or delete on the operator or operand
/// stack, chosen uniformly. Falls back to a copy of the parent when no valid
/// edit is found in ten tries.
pub fn mutate<R: Rng + ?Sized>(m: &StackModel, rng: &mut R, config: &GpConfig, p: usize) -> StackModel {
    for _ in 0..MAX_RETRIES {
        let mut ops = m.ops().to_vec();
        let mut operands = m.operands().to_vec();
        let on_ops = rng.random_bool(0.5);
        let kind = rng.random_range(0..3);
        let ok = if on_ops {
            edit(&mut ops, kind, rng, random_operator)
        } else {
            edit(&mut operands, kind, rng, |r| random_operand(r, p))
        };
        if !ok {
            continue;
        }
        if let Ok(child) = StackModel::with_max_complexity(ops, operands, config.max_complexity) {
            return child;
        }
    }
    m.clone()
}

fn edit<T, R: Rng + ?Sized>(
    stack: &mut Vec<T>,
    kind: u32,
    rng: &mut R,
    mut token: impl FnMut(&mut R) -> T,
) -> bool {
    match kind {
        0 => {
            if stack.is_empty() {
                return false;
            }
            let i = rng.random_range(0..stack.len());
            stack[i] = token(rng);
        }
        1 => {
            let i = rng.random_range(0..=stack.len());
            let t = token(rng);
            stack.insert(i, t);
        }
        _ => {
            if stack.is_empty() {
                return false;
            }
            let i = rng.random_range(0..stack.len());
            stack.remove(i);
        }
    }
    true
}

/// Cut points for [`crossover_at`]: `(start, end)` segments in each parent's
/// operator and operand stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutPoints {
    pub ops_a: (usize, usize),
    pub ops_b: (usize, usize),
    pub operands_a: (usize, usize),
    pub operands_b: (usize, usize),
}

/// Replaces `a[start..end]` with `b[start..end]` on both stacks. The result
/// is unvalidated.
pub fn crossover_at(a: &StackModel, b: &StackModel, cuts: CutPoints) -> (Vec<Operator>, Vec<Operand>) {
    (
        splice(a.ops(), b.ops(), cuts.ops_a, cuts.ops_b),
        splice(a.operands(), b.operands(), cuts.operands_a, cuts.operands_b),
    )
}

fn splice<T: Copy>(a: &[T], b: &[T], (i1, i2): (usize, usize), (j1, j2): (usize, usize)) -> Vec<T> {
    let mut out = Vec::with_capacity(i1 + (j2 - j1) + (a.len() - i2));
    out.extend_from_slice(&a[..i1]);
    out.extend_from_slice(&b[j1..j2]);
    out.extend_from_slice(&a[i2..]);
    out
}

fn random_cut<R: Rng + ?Sized>(rng: &mut R, len: usize) -> (usize, usize) {
    let x = rng.random_range(0..=len);
    let y = rng.random_range(0..=len);
    (x.min(y), x.max(y))
}

/// Two-point crossover, applied independently to both stacks. Children with
/// an empty operand stack are redrawn; oversize children are redrawn and, on
/// the last try, truncated at the tail.
pub fn crossover<R: Rng + ?Sized>(
    a: &StackModel,
    b: &StackModel,
    rng: &mut R,
    config: &GpConfig,
) -> StackModel {
    let max = config.max_complexity;
    let mut last = None;
    for _ in 0..MAX_RETRIES {
        let cuts = CutPoints {
            ops_a: random_cut(rng, a.ops().len()),
            ops_b: random_cut(rng, b.ops().len()),
            operands_a: random_cut(rng, a.operands().len()),
            operands_b: random_cut(rng, b.operands().len()),
        };
        let (ops, operands) = crossover_at(a, b, cuts);
        if operands.is_empty() {
            continue;
        }
        if ops.len() + operands.len() <= max {
            return StackModel::with_max_complexity(ops, operands, max)
                .expect("child satisfies invariants");
        }
        last = Some((ops, operands));
    }
    match last {
        Some((mut ops, mut operands)) => {
            while ops.len() + operands.len() > max {
                if ops.len() >= operands.len() || operands.len() == 1 {
                    ops.pop();
                } else {
                    operands.pop();
                }
            }
            StackModel::with_max_complexity(ops, operands, max).expect("truncated child is valid")
        }
        None => a.clone(),
    }
}

/// Total order used for "best": fitness, then size.
fn rank_order(a: &ScoredModel, b: &ScoredModel) -> Ordering {
    a.train_fitness
        .total_cmp(&b.train_fitness)
        .then(a.size.cmp(&b.size))
}

fn sample_pool<R: Rng + ?Sized>(n: usize, rng: &mut R, tournament_size: usize) -> Vec<usize> {
    (0..tournament_size).map(|_| rng.random_range(0..n)).collect()
}

/// Index of the tournament winner: lowest fitness, then smaller size, then
/// earlier index. Members are drawn with replacement.
pub fn tournament_select_index<R: Rng + ?Sized>(
    members: &[ScoredModel],
    rng: &mut R,
    tournament_size: usize,
) -> usize {
    let pool = sample_pool(members.len(), rng, tournament_size);
    *pool
        .iter()
        .min_by(|&&i, &&j| rank_order(&members[i], &members[j]).then(i.cmp(&j)))
        .expect("tournament pool is non-empty")
}

pub fn tournament_select<'a, R: Rng + ?Sized>(
    members: &'a [ScoredModel],
    rng: &mut R,
    config: &GpConfig,
) -> &'a ScoredModel {
    &members[tournament_select_index(members, rng, config.tournament_size)]
}

/// True when `a` Pareto-dominates `b` under joint minimization.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Draws a tournament pool and returns a uniformly chosen member of its
/// non-dominated set under (train fitness, `complexity_of`).
pub fn pareto_tournament_select_index<R: Rng + ?Sized>(
    members: &[ScoredModel],
    rng: &mut R,
    tournament_size: usize,
    mut complexity_of: impl FnMut(usize, &ScoredModel) -> f64,
) -> usize {
    let mut pool = sample_pool(members.len(), rng, tournament_size);
    pool.sort_unstable();
    pool.dedup();
    let objectives: Vec<(f64, f64)> = pool
        .iter()
        .map(|&i| (members[i].train_fitness, complexity_of(i, &members[i])))
        .collect();
    let front: Vec<usize> = (0..pool.len())
        .filter(|&k| !objectives.iter().any(|&o| dominates(o, objectives[k])))
        .map(|k| pool[k])
        .collect();
    front[rng.random_range(0..front.len())]
}

pub fn pareto_tournament_select<'a, R: Rng + ?Sized>(
    members: &'a [ScoredModel],
    rng: &mut R,
    config: &GpConfig,
    complexity_of: impl Fn(&ScoredModel) -> f64,
) -> &'a ScoredModel {
    let i = pareto_tournament_select_index(members, rng, config.tournament_size, |_, m| {
        complexity_of(m)
    });
    &members[i]
}

/// Members not dominated under (train fitness, size), sorted by size, with
/// equal (fitness, size) pairs kept once.
pub fn pareto_front(members: &[ScoredModel]) -> Vec<ScoredModel> {
    let mut idx: Vec<usize> = (0..members.len()).collect();
    idx.sort_by(|&i, &j| {
        members[i]
            .size
            .cmp(&members[j].size)
            .then(members[i].train_fitness.total_cmp(&members[j].train_fitness))
            .then(i.cmp(&j))
    });
    let mut best = f64::INFINITY;
    let mut front = Vec::new();
    for i in idx {
        if members[i].train_fitness < best {
            best = members[i].train_fitness;
            front.push(members[i].clone());
        }
    }
    front
}

/// Per-genotype ED cache, sampled at the training data's strategic points.
struct EdCache {
    points: [Vec<f64>; 3],
    window: Option<IdWindow>,
    cache: HashMap<StackModel, usize>,
}

impl EdCache {
    fn new(d: &Dataset, window: Option<IdWindow>) -> Self {
        let sp = strategic_points(d).expect("dataset is non-empty");
        EdCache {
            points: [sp.p_min, sp.p_mean, sp.p_max],
            window,
            cache: HashMap::new(),
        }
    }

    fn ed(&mut self, m: &StackModel) -> usize {
        if let Some(&ed) = self.cache.get(m) {
            return ed;
        }
        let pts: Vec<&[f64]> = self.points.iter().map(Vec::as_slice).collect();
        let ed = effective_dimensionality_at(m, &pts).ed;
        self.cache.insert(m.clone(), ed);
        ed
    }

    /// Distance to the ID window when one is set, raw ED otherwise.
    fn complexity(&mut self, m: &StackModel) -> f64 {
        let ed = self.ed(m);
        match self.window {
            Some(w) => w.distance(ed as f64),
            None => ed as f64,
        }
    }
}

fn score_all(models: Vec<StackModel>, d: &Dataset, parallel: bool) -> Vec<ScoredModel> {
    if parallel {
        models.into_par_iter().map(|m| ScoredModel::score(m, d)).collect()
    } else {
        models.into_iter().map(|m| ScoredModel::score(m, d)).collect()
    }
}

/// Options beyond [`GpConfig`] for [`evolve_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct EvolveOptions {
    /// Target window for ED-based Pareto selection. Without it, raw ED is
    /// minimized.
    pub id_window: Option<IdWindow>,
}

/// Runs the engine with default options and no early stop.
pub fn evolve(d: &Dataset, config: &GpConfig) -> Result<Population, EvolveError> {
    evolve_with(d, config, EvolveOptions::default(), |_| true).map(|(pop, _)| pop)
}

/// Runs the engine, calling `observer` after every generation (including the
/// initial one, generation 0). Returning `false` stops the run early.
pub fn evolve_with(
    d: &Dataset,
    config: &GpConfig,
    options: EvolveOptions,
    mut observer: impl FnMut(&GenerationStats) -> bool,
) -> Result<(Population, Vec<GenerationStats>), EvolveError> {
    config.validate()?;
    if d.n() < 2 {
        return Err(EvolveError::TooFewRows(d.n()));
    }
    let p = d.p();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ed_cache = match (config.selection_scheme, config.complexity_metric) {
        (SelectionScheme::ParetoTournament, ComplexityMetric::EffectiveDimensionality) => {
            Some(EdCache::new(d, options.id_window))
        }
        _ => None,
    };

    let init: Vec<StackModel> = (0..config.population_size)
        .map(|_| random_model(&mut rng, p, config.max_init_size))
        .collect();
    let mut pop = Population {
        members: score_all(init, d, config.parallel),
        generation: 0,
    };
    let mut history = vec![GenerationStats::of(&pop)];
    if !observer(&history[0]) {
        return Ok((pop, history));
    }

    let [n_mut, n_cross, n_spawn] =
        config.offspring_counts(config.population_size - config.elitism_count);

    for gen in 1..=config.generations {
        let members = &pop.members;
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.sort_by(|&i, &j| rank_order(&members[i], &members[j]).then(i.cmp(&j)));
        let elites: Vec<ScoredModel> = order[..config.elitism_count]
            .iter()
            .map(|&i| members[i].clone())
            .collect();

        let mut pick = |rng: &mut ChaCha8Rng| -> usize {
            match (config.selection_scheme, ed_cache.as_mut()) {
                (SelectionScheme::Tournament, _) => {
                    tournament_select_index(members, rng, config.tournament_size)
                }
                (SelectionScheme::ParetoTournament, None) => {
                    pareto_tournament_select_index(members, rng, config.tournament_size, |_, m| {
                        m.size as f64
                    })
                }
                (SelectionScheme::ParetoTournament, Some(cache)) => {
                    pareto_tournament_select_index(members, rng, config.tournament_size, |_, m| {
                        cache.complexity(&m.model)
                    })
                }
            }
        };

        let mut offspring = Vec::with_capacity(n_mut + n_cross + n_spawn);
        let mut made = [0usize; 3];
        for _ in 0..n_mut {
            let parent = pick(&mut rng);
            offspring.push(mutate(&members[parent].model, &mut rng, config, p));
            made[0] += 1;
        }
        for _ in 0..n_cross {
            let a = pick(&mut rng);
            let b = pick(&mut rng);
            offspring.push(crossover(&members[a].model, &members[b].model, &mut rng, config));
            made[1] += 1;
        }
        for _ in 0..n_spawn {
            offspring.push(random_model(&mut rng, p, config.max_init_size));
            made[2] += 1;
        }

        let mut next = elites;
        next.extend(score_all(offspring, d, config.parallel));
        pop = Population {
            members: next,
            generation: gen,
        };
        let mut stats = GenerationStats::of(&pop);
        stats.offspring = made;
        let keep_going = observer(&stats);
        history.push(stats);
        if !keep_going {
            break;
        }
    }
    Ok((pop, history))
}
