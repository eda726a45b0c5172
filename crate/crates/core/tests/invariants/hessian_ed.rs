use idsr::dataset::Dataset;
use idsr::expr::{Operand, Operator, StackModel};
use idsr::hessian_ed::{effective_dimensionality, effective_dimensionality_at};
use proptest::prelude::*;

use super::{arb_model, run, Suite};

pub fn suites() -> Vec<Suite> {
    vec![
        Suite { module: "hessian_ed", name: "ed_analytic_library", check: analytic_library },
        Suite { module: "hessian_ed", name: "ed_sample_convergence", check: sample_convergence },
        Suite { module: "hessian_ed", name: "ed_permutation_equivariance", check: permutation_equivariance },
        Suite { module: "hessian_ed", name: "ed_unused_features", check: unused_features },
    ]
}

/// Ambient width of the library inputs.
pub const P: usize = 6;

/// One step of a left-comb program: a unary op on the accumulator, or
/// `acc = acc op operand`.
#[derive(Clone, Copy)]
pub enum Step {
    U(Operator),
    B(Operator, Operand),
}

/// Builds the stack model for `start` followed by `steps`.
pub fn chain(start: Operand, steps: &[Step]) -> StackModel {
    let mut ops = Vec::new();
    let mut below = Vec::new();
    for s in steps {
        match *s {
            Step::U(op) => ops.push(op),
            Step::B(op, o) => {
                ops.push(op);
                below.push(o);
            }
        }
    }
    // The accumulator starts on top; the first binary operand sits just
    // below it, the next one below that, and so on.
    let mut operands: Vec<Operand> = below.into_iter().rev().collect();
    operands.push(start);
    StackModel::new(ops, operands).unwrap()
}

fn x(i: usize) -> Operand {
    Operand::Feature(i)
}

/// `acc + x_j^2` via `(acc / x_j + x_j) * x_j`, valid away from zero.
fn add_square(j: usize) -> [Step; 3] {
    use Operator::*;
    [Step::B(Div, x(j)), Step::B(Add, x(j)), Step::B(Mul, x(j))]
}

pub fn sum_squares(k: usize) -> StackModel {
    let mut steps = vec![Step::U(Operator::Square)];
    for j in 1..k {
        steps.extend(add_square(j));
    }
    chain(x(0), &steps)
}

/// Closed-form functions and their Hessian rank on `[0.5, 1.5]^6`, where
/// every curvature term keeps one sign so averaging cannot cancel it.
pub fn library() -> Vec<(&'static str, StackModel, usize)> {
    use Operator::*;
    use Step::{B, U};
    vec![
        ("4.2", StackModel::constant(4.2), 0),
        ("x0+x1+x2", chain(x(0), &[B(Add, x(1)), B(Add, x(2))]), 0),
        ("sin(x0)", chain(x(0), &[U(Sin)]), 1),
        ("x0^2", chain(x(0), &[U(Square)]), 1),
        ("sqrt(x0)", chain(x(0), &[U(Sqrt)]), 1),
        ("(x0+x1)^2", chain(x(0), &[B(Add, x(1)), U(Square)]), 1),
        ("exp(x0+x1)", chain(x(0), &[B(Add, x(1)), U(Exp)]), 1),
        ("(x0-x1)^2+x2", chain(x(0), &[B(Sub, x(1)), U(Square), B(Add, x(2))]), 1),
        ("x0*x1", chain(x(0), &[B(Mul, x(1))]), 2),
        ("x0^2*x1", chain(x(0), &[U(Square), B(Mul, x(1))]), 2),
        ("exp(x0)*x1", chain(x(0), &[U(Exp), B(Mul, x(1))]), 2),
        ("log(x0)+x1^2", {
            let mut s = vec![U(Log)];
            s.extend(add_square(1));
            chain(x(0), &s)
        }, 2),
        ("x0*x1*x2", chain(x(0), &[B(Mul, x(1)), B(Mul, x(2))]), 3),
        ("x0*x1+sin(x2)", chain(x(2), &[U(Sin), B(Div, x(0)), B(Add, x(1)), B(Mul, x(0))]), 3),
        ("x0*x1+x2*x3", chain(x(0), &[B(Mul, x(1)), B(Div, x(3)), B(Add, x(2)), B(Mul, x(3))]), 4),
        ("sum_{i<3} xi^2", sum_squares(3), 3),
        ("sum_{i<6} xi^2", sum_squares(6), 6),
    ]
}

/// Direct evaluation of each library label, to check the stack programs
/// encode what their labels say.
pub fn reference(label: &str, v: &[f64]) -> f64 {
    match label {
        "4.2" => 4.2,
        "x0+x1+x2" => v[0] + v[1] + v[2],
        "sin(x0)" => v[0].sin(),
        "x0^2" => v[0] * v[0],
        "sqrt(x0)" => v[0].sqrt(),
        "(x0+x1)^2" => (v[0] + v[1]).powi(2),
        "exp(x0+x1)" => (v[0] + v[1]).exp(),
        "(x0-x1)^2+x2" => (v[0] - v[1]).powi(2) + v[2],
        "x0*x1" => v[0] * v[1],
        "x0^2*x1" => v[0] * v[0] * v[1],
        "exp(x0)*x1" => v[0].exp() * v[1],
        "log(x0)+x1^2" => v[0].ln() + v[1] * v[1],
        "x0*x1*x2" => v[0] * v[1] * v[2],
        "x0*x1+sin(x2)" => v[0] * v[1] + v[2].sin(),
        "x0*x1+x2*x3" => v[0] * v[1] + v[2] * v[3],
        "sum_{i<3} xi^2" => v[..3].iter().map(|t| t * t).sum(),
        "sum_{i<6} xi^2" => v.iter().map(|t| t * t).sum(),
        _ => unreachable!("{label}"),
    }
}

fn point_sets() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.5..1.5f64, P), 1..=6)
}

fn analytic_library(cases: u32) -> Result<(), String> {
    let lib = library();
    run(cases, point_sets(), |points| {
        let refs: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
        for (label, m, rank) in &lib {
            let f = m.evaluate(refs[0]);
            prop_assert!((f - reference(label, refs[0])).abs() < 1e-9 * f.abs().max(1.0), "{}", label);
            let est = effective_dimensionality_at(m, &refs);
            prop_assert_eq!(est.ed, *rank, "{} over {} points: sv {:?}", label, refs.len(), est.singular_values);
        }
        Ok(())
    })
}

/// `|x|` on three features: each point Hessian has rank 2 (no curvature
/// along the radius), but radii differ between points so averages reach 3.
fn sample_convergence(cases: u32) -> Result<(), String> {
    use Operator::*;
    let mut steps = vec![Step::U(Square)];
    steps.extend(add_square(1));
    steps.extend(add_square(2));
    steps.push(Step::U(Sqrt));
    let norm = chain(x(0), &steps);
    let lib = library();
    let s = prop::collection::vec(prop::collection::vec(0.5..1.5f64, P), 6);
    run(cases, s, |points| {
        let refs: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
        let mut ranks = Vec::new();
        for n in 1..=refs.len() {
            ranks.push(effective_dimensionality_at(&norm, &refs[..n]).ed);
        }
        prop_assert_eq!(ranks[0], 2);
        for r in &ranks[1..] {
            prop_assert_eq!(*r, 3, "{:?}", ranks);
        }
        // Constant-rank members agree for every prefix.
        for (label, m, rank) in &lib {
            for n in 1..=refs.len() {
                prop_assert_eq!(effective_dimensionality_at(m, &refs[..n]).ed, *rank, "{} n={}", label, n);
            }
        }
        Ok(())
    })
}

fn permutation_equivariance(cases: u32) -> Result<(), String> {
    let s = (2usize..6).prop_flat_map(|p| {
        (
            arb_model(p, 12, 12),
            prop::collection::vec(prop::collection::vec(-3.0..3.0f64, p), 3..12),
            Just((0..p).collect::<Vec<usize>>()).prop_shuffle(),
        )
    });
    run(cases, s, |(m, rows, perm)| {
        // New column k holds old feature perm[k]; inv maps old -> new.
        let mut inv = vec![0; perm.len()];
        for (k, &old) in perm.iter().enumerate() {
            inv[old] = k;
        }
        let operands: Vec<Operand> = m
            .operands()
            .iter()
            .map(|o| match *o {
                Operand::Feature(i) => Operand::Feature(inv[i]),
                c => c,
            })
            .collect();
        let pm = StackModel::new(m.ops().to_vec(), operands).unwrap();
        let prows: Vec<Vec<f64>> = rows.iter().map(|r| perm.iter().map(|&i| r[i]).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| m.evaluate(r)).collect();
        let d = Dataset::from_rows("t", &rows, y.clone()).unwrap();
        let pd = Dataset::from_rows("t", &prows, y).unwrap();
        let a = effective_dimensionality(&m, &d);
        let b = effective_dimensionality(&pm, &pd);
        prop_assert_eq!(a.ed, b.ed);
        prop_assert_eq!(a.row_indices.clone(), b.row_indices.clone());
        // Swapping two features reorders the cross-stencil sum, so entries
        // agree to rounding rather than bit for bit.
        let scale = a.h_bar.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        for (k, &i) in perm.iter().enumerate() {
            for (l, &j) in perm.iter().enumerate() {
                let (u, v) = (b.h_bar[k][l], a.h_bar[i][j]);
                prop_assert!((u - v).abs() <= 1e-9 * scale, "h_bar[{}][{}]: {} vs {}", k, l, u, v);
            }
        }
        Ok(())
    })
}

fn unused_features(cases: u32) -> Result<(), String> {
    let s = (1usize..5, 1usize..4).prop_flat_map(|(p, extra)| {
        (
            arb_model(p, 12, 12),
            prop::collection::vec(prop::collection::vec(-3.0..3.0f64, p + extra), 3..12),
            Just(p),
        )
    });
    run(cases, s, |(m, rows, p)| {
        let narrow: Vec<Vec<f64>> = rows.iter().map(|r| r[..p].to_vec()).collect();
        let y: Vec<f64> = narrow.iter().map(|r| m.evaluate(r)).collect();
        let a = effective_dimensionality(&m, &Dataset::from_rows("t", &narrow, y.clone()).unwrap());
        let b = effective_dimensionality(&m, &Dataset::from_rows("t", &rows, y).unwrap());
        prop_assert_eq!(a.ed, b.ed);
        let wide = rows[0].len();
        for i in 0..wide {
            for j in 0..wide {
                let v = b.h_bar[i][j];
                if i < p && j < p {
                    prop_assert_eq!(v.to_bits(), a.h_bar[i][j].to_bits());
                } else {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
        Ok(())
    })
}
