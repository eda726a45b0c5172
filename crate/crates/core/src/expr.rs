//! Two-stack symbolic models.
//!
//! A [`StackModel`] holds an operator stack and an operand stack. Evaluation
//! pushes every operand (features resolved against the input row) onto a
//! value stack in order, then applies the operators front to back. A binary
//! operator pops `a` (top) then `b` and pushes `a ∘ b`; an operator that finds
//! too few values is skipped. The result is the top of the value stack.
//!
//! All operators are protected so evaluation of finite inputs is total and
//! finite: see [`Operator::apply`].

use std::fmt;
use std::hash::{Hash, Hasher};

use rand::Rng;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;

/// Default cap on `|ops| + |operands|`.
pub const MAX_COMPLEXITY: usize = 300;
/// Ephemeral constants are drawn uniformly from `[-CONST_RANGE, CONST_RANGE]`.
pub const CONST_RANGE: f64 = 10.0;
/// Probability that a random operand is a feature rather than a constant.
pub const FEATURE_PROB: f64 = 0.7;

const GUARD: f64 = 1e-12;
const EXP_CLAMP: f64 = 50.0;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("operand stack is empty")]
    NoOperands,
    #[error("size complexity {size} exceeds maximum {max}")]
    TooComplex { size: usize, max: usize },
    #[error("feature index x{index} out of range for {p} features")]
    FeatureOutOfRange { index: usize, p: usize },
    #[error("unknown operator {0:?}")]
    UnknownOperator(String),
    #[error("bad operand {0:?} (expected a number or \"x<i>\")")]
    BadOperand(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operator {
    Add,
    Sub,
    Mul,
    Div,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Square,
}

impl Operator {
    pub const ALL: [Operator; 10] = [
        Operator::Add,
        Operator::Sub,
        Operator::Mul,
        Operator::Div,
        Operator::Sin,
        Operator::Cos,
        Operator::Exp,
        Operator::Log,
        Operator::Sqrt,
        Operator::Square,
    ];

    pub fn arity(self) -> usize {
        match self {
            Operator::Add | Operator::Sub | Operator::Mul | Operator::Div => 2,
            _ => 1,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Add => "add",
            Operator::Sub => "sub",
            Operator::Mul => "mul",
            Operator::Div => "div",
            Operator::Sin => "sin",
            Operator::Cos => "cos",
            Operator::Exp => "exp",
            Operator::Log => "log",
            Operator::Sqrt => "sqrt",
            Operator::Square => "square",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Operator> {
        Operator::ALL.into_iter().find(|op| op.symbol() == s)
    }

    /// Applies the operator. `b` is ignored by unary operators.
    ///
    /// Protection rules: `div` returns 1 when `|b| <= 1e-12`, `log` is
    /// `ln|a|` (0 when `|a| <= 1e-12`), `sqrt` is `sqrt|a|`, `exp` clamps its
    /// argument at 50. Overflow saturates at `±f64::MAX`.
    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        let v = match self {
            Operator::Add => a + b,
            Operator::Sub => a - b,
            Operator::Mul => a * b,
            Operator::Div => {
                if b.abs() > GUARD {
                    a / b
                } else {
                    1.0
                }
            }
            Operator::Sin => a.sin(),
            Operator::Cos => a.cos(),
            Operator::Exp => a.min(EXP_CLAMP).exp(),
            Operator::Log => {
                if a.abs() > GUARD {
                    a.abs().ln()
                } else {
                    0.0
                }
            }
            Operator::Sqrt => a.abs().sqrt(),
            Operator::Square => a * a,
        };
        saturate(v)
    }
}

#[inline]
fn saturate(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else if v.is_nan() {
        0.0
    } else {
        f64::MAX.copysign(v)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl Serialize for Operator {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for Operator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Operator::from_symbol(&s)
            .ok_or_else(|| de::Error::custom(ModelError::UnknownOperator(s)))
    }
}

/// A leaf value: an input feature or a constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Operand {
    Feature(usize),
    Const(f64),
}

impl Operand {
    #[inline]
    fn resolve(self, x: &[f64]) -> f64 {
        match self {
            // Out-of-range features read as 0; models are validated against
            // the dataset width before use.
            Operand::Feature(i) => x.get(i).copied().unwrap_or(0.0),
            Operand::Const(c) => c,
        }
    }
}

impl Serialize for Operand {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            Operand::Feature(i) => s.serialize_str(&format!("x{i}")),
            Operand::Const(c) => s.serialize_f64(c),
        }
    }
}

impl<'de> Deserialize<'de> for Operand {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(c) if c.is_finite() => Ok(Operand::Const(c)),
            Raw::Num(c) => Err(de::Error::custom(ModelError::BadOperand(c.to_string()))),
            Raw::Str(s) => s
                .strip_prefix('x')
                .and_then(|i| i.parse().ok())
                .map(Operand::Feature)
                .ok_or_else(|| de::Error::custom(ModelError::BadOperand(s))),
        }
    }
}

/// Two-stack symbolic model. Invariants (checked at construction): at least
/// one operand and `size_complexity() <= max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct StackModel {
    ops: Vec<Operator>,
    operands: Vec<Operand>,
}

#[derive(Deserialize)]
struct RawModel {
    ops: Vec<Operator>,
    operands: Vec<Operand>,
}

impl TryFrom<RawModel> for StackModel {
    type Error = ModelError;

    fn try_from(raw: RawModel) -> Result<Self, Self::Error> {
        StackModel::new(raw.ops, raw.operands)
    }
}

// Constants hash by bit pattern so identical genotypes share cache entries.
impl Eq for StackModel {}

impl Hash for StackModel {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.ops.hash(state);
        self.operands.len().hash(state);
        for o in &self.operands {
            match *o {
                Operand::Feature(i) => {
                    0u8.hash(state);
                    i.hash(state);
                }
                Operand::Const(c) => {
                    1u8.hash(state);
                    c.to_bits().hash(state);
                }
            }
        }
    }
}

impl StackModel {
    /// Builds a model under the default [`MAX_COMPLEXITY`] cap.
    pub fn new(ops: Vec<Operator>, operands: Vec<Operand>) -> Result<Self, ModelError> {
        Self::with_max_complexity(ops, operands, MAX_COMPLEXITY)
    }

    pub fn with_max_complexity(
        ops: Vec<Operator>,
        operands: Vec<Operand>,
        max: usize,
    ) -> Result<Self, ModelError> {
        if operands.is_empty() {
            return Err(ModelError::NoOperands);
        }
        let size = ops.len() + operands.len();
        if size > max {
            return Err(ModelError::TooComplex { size, max });
        }
        if let Some(c) = operands.iter().find_map(|o| match o {
            Operand::Const(c) if !c.is_finite() => Some(*c),
            _ => None,
        }) {
            return Err(ModelError::BadOperand(c.to_string()));
        }
        Ok(StackModel { ops, operands })
    }

    /// Constant model.
    pub fn constant(c: f64) -> Self {
        StackModel {
            ops: Vec::new(),
            operands: vec![Operand::Const(c)],
        }
    }

    pub fn ops(&self) -> &[Operator] {
        &self.ops
    }

    pub fn operands(&self) -> &[Operand] {
        &self.operands
    }

    /// Combined stack length.
    pub fn size_complexity(&self) -> usize {
        self.ops.len() + self.operands.len()
    }

    /// Largest feature index referenced, if any.
    pub fn max_feature(&self) -> Option<usize> {
        self.operands
            .iter()
            .filter_map(|o| match o {
                Operand::Feature(i) => Some(*i),
                Operand::Const(_) => None,
            })
            .max()
    }

    /// Checks that every feature index is below `p`.
    pub fn check_features(&self, p: usize) -> Result<(), ModelError> {
        match self.max_feature() {
            Some(index) if index >= p => Err(ModelError::FeatureOutOfRange { index, p }),
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut stack = Vec::with_capacity(self.operands.len());
        self.evaluate_with(x, &mut stack)
    }

    /// [`evaluate`](Self::evaluate) reusing a caller-provided scratch stack.
    pub fn evaluate_with(&self, x: &[f64], stack: &mut Vec<f64>) -> f64 {
        stack.clear();
        stack.extend(self.operands.iter().map(|o| o.resolve(x)));
        for &op in &self.ops {
            match op.arity() {
                1 => {
                    if let Some(top) = stack.last_mut() {
                        *top = op.apply(*top, 0.0);
                    }
                }
                _ => {
                    if stack.len() >= 2 {
                        let a = stack.pop().unwrap();
                        let top = stack.last_mut().unwrap();
                        *top = op.apply(a, *top);
                    }
                }
            }
        }
        // Operands are never empty, and operators never shrink the stack
        // below one value.
        stack.last().copied().unwrap_or(0.0)
    }

    /// Row-wise evaluation over a dataset.
    pub fn evaluate_batch(&self, d: &Dataset) -> Vec<f64> {
        let mut stack = Vec::with_capacity(self.operands.len());
        d.rows().map(|r| self.evaluate_with(r, &mut stack)).collect()
    }

    /// Infix rendering. Features use `names` when given, otherwise `x<i>`.
    pub fn to_infix(&self, names: Option<&[String]>) -> String {
        let leaf = |o: &Operand| match *o {
            Operand::Feature(i) => names
                .and_then(|n| n.get(i).cloned())
                .unwrap_or_else(|| format!("x{i}")),
            Operand::Const(c) => format!("{c}"),
        };
        let mut stack: Vec<String> = self.operands.iter().map(leaf).collect();
        for &op in &self.ops {
            if op.arity() == 1 {
                if let Some(top) = stack.pop() {
                    stack.push(match op {
                        Operator::Square => format!("({top})^2"),
                        Operator::Sqrt => format!("sqrt(|{top}|)"),
                        Operator::Log => format!("log(|{top}|)"),
                        _ => format!("{op}({top})"),
                    });
                }
            } else if stack.len() >= 2 {
                let a = stack.pop().unwrap();
                let b = stack.pop().unwrap();
                let sym = match op {
                    Operator::Add => "+",
                    Operator::Sub => "-",
                    Operator::Mul => "*",
                    _ => "/",
                };
                stack.push(format!("({a} {sym} {b})"));
            }
        }
        stack.pop().unwrap_or_default()
    }
}

impl fmt::Display for StackModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_infix(None))
    }
}

pub fn random_operator<R: Rng + ?Sized>(rng: &mut R) -> Operator {
    Operator::ALL[rng.random_range(0..Operator::ALL.len())]
}

pub fn random_operand<R: Rng + ?Sized>(rng: &mut R, p: usize) -> Operand {
    if rng.random_bool(FEATURE_PROB) {
        Operand::Feature(rng.random_range(0..p))
    } else {
        Operand::Const(rng.random_range(-CONST_RANGE..=CONST_RANGE))
    }
}

/// Random model for population initialization: `1..=max_init_size/2`
/// operands and `0..=max_init_size/2` operators.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, p: usize, max_init_size: usize) -> StackModel {
    assert!(p >= 1 && max_init_size >= 1, "need p >= 1 and max_init_size >= 1");
    let half = max_init_size / 2;
    let n_operands = rng.random_range(1..=half.max(1));
    let n_ops = rng.random_range(0..=half);
    let operands = (0..n_operands).map(|_| random_operand(rng, p)).collect();
    let ops = (0..n_ops).map(|_| random_operator(rng)).collect();
    StackModel { ops, operands }
}
