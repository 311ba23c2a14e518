//! Symbolic separable fields: sums of products of univariate atoms.
//!
//! Keeping coefficients symbolic gives exact partial derivatives (for
//! `div f`, `∇·ρ_{·k}`, Jacobians) and exact TT ranks for diagonal operators.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tt::TtVector;

/// A univariate building block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Atom {
    /// `x^p`
    Pow(u32),
    /// `sin(freq·x + phase)`; cosine is a phase of π/2.
    Sin { freq: f64, phase: f64 },
}

impl Atom {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Atom::Pow(p) => x.powi(p as i32),
            Atom::Sin { freq, phase } => (freq * x + phase).sin(),
        }
    }

    fn canonical(self) -> Self {
        match self {
            Atom::Sin { freq, phase } if freq < 0.0 => Atom::Sin {
                // sin(-a x + b) = sin(a x + π - b)
                freq: -freq,
                phase: (PI - phase).rem_euclid(TAU),
            },
            Atom::Sin { freq, phase } => Atom::Sin {
                freq,
                phase: phase.rem_euclid(TAU),
            },
            a => a,
        }
    }

    fn key(&self) -> (u8, f64, f64) {
        match *self {
            Atom::Pow(p) => (0, p as f64, 0.0),
            Atom::Sin { freq, phase } => (1, freq, phase),
        }
    }
}

/// `coeff · Π (atom evaluated at x[coord])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub factors: Vec<(usize, Atom)>,
}

impl Term {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.factors
            .iter()
            .fold(self.coeff, |acc, (k, a)| acc * a.eval(x[*k]))
    }

    /// Product of this term's atoms acting on coordinate `k`, at `x`.
    pub fn eval_coord(&self, k: usize, x: f64) -> f64 {
        self.factors
            .iter()
            .filter(|(c, _)| *c == k)
            .fold(1.0, |acc, (_, a)| acc * a.eval(x))
    }

    pub fn depends_on(&self, k: usize) -> bool {
        self.factors.iter().any(|(c, _)| *c == k)
    }

    fn normalize(mut self) -> Self {
        let mut pows: Vec<(usize, u32)> = Vec::new();
        let mut rest: Vec<(usize, Atom)> = Vec::new();
        for (c, a) in self.factors.drain(..) {
            match a.canonical() {
                Atom::Pow(0) => {}
                Atom::Pow(p) => match pows.iter_mut().find(|(k, _)| *k == c) {
                    Some(e) => e.1 += p,
                    None => pows.push((c, p)),
                },
                s => rest.push((c, s)),
            }
        }
        let mut factors: Vec<(usize, Atom)> =
            pows.into_iter().map(|(c, p)| (c, Atom::Pow(p))).collect();
        factors.extend(rest);
        factors.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then(a.1.key().partial_cmp(&b.1.key()).unwrap_or(std::cmp::Ordering::Equal))
        });
        self.factors = factors;
        self
    }

    fn derivative(&self, k: usize) -> Vec<Term> {
        let mut out = Vec::new();
        for (idx, (c, a)) in self.factors.iter().enumerate() {
            if *c != k {
                continue;
            }
            let (scale, repl) = match *a {
                Atom::Pow(0) => continue,
                Atom::Pow(p) => (p as f64, Atom::Pow(p - 1)),
                Atom::Sin { freq, phase } => (
                    freq,
                    Atom::Sin {
                        freq,
                        phase: phase + PI / 2.0,
                    },
                ),
            };
            let mut factors = self.factors.clone();
            factors[idx] = (*c, repl);
            out.push(Term {
                coeff: self.coeff * scale,
                factors,
            });
        }
        out
    }
}

/// Scalar function on R^d as a finite sum of separable terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableField {
    dim: usize,
    terms: Vec<Term>,
}

impl SeparableField {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::from_terms(
            dim,
            vec![Term {
                coeff: c,
                factors: vec![],
            }],
        )
    }

    /// `c · x_k^p`
    pub fn monomial(dim: usize, k: usize, p: u32, c: f64) -> Self {
        Self::from_terms(
            dim,
            vec![Term {
                coeff: c,
                factors: vec![(k, Atom::Pow(p))],
            }],
        )
    }

    /// `c · sin(freq·x_k + phase)`
    pub fn sine(dim: usize, k: usize, freq: f64, phase: f64, c: f64) -> Self {
        Self::from_terms(
            dim,
            vec![Term {
                coeff: c,
                factors: vec![(k, Atom::Sin { freq, phase })],
            }],
        )
    }

    /// `c · cos(freq·x_k)`
    pub fn cosine(dim: usize, k: usize, freq: f64, c: f64) -> Self {
        Self::sine(dim, k, freq, PI / 2.0, c)
    }

    pub fn from_terms(dim: usize, terms: Vec<Term>) -> Self {
        let mut f = Self { dim, terms };
        f.simplify();
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Coordinates some term depends on, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.dim)
            .filter(|&k| self.terms.iter().any(|t| t.depends_on(k)))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// True if no term depends on any coordinate.
    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.factors.is_empty())
    }

    fn simplify(&mut self) {
        let mut merged: Vec<Term> = Vec::new();
        for t in self.terms.drain(..).map(Term::normalize) {
            if t.coeff == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|m| m.factors == t.factors) {
                Some(m) => m.coeff += t.coeff,
                None => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff.abs() > 1e-300);
        self.terms = merged;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self::from_terms(self.dim.max(other.dim), terms)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                coeff: t.coeff * c,
                factors: t.factors.clone(),
            })
            .collect();
        Self::from_terms(self.dim, terms)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let mut factors = a.factors.clone();
                factors.extend(b.factors.iter().cloned());
                terms.push(Term {
                    coeff: a.coeff * b.coeff,
                    factors,
                });
            }
        }
        Self::from_terms(self.dim.max(other.dim), terms)
    }

    /// Exact partial derivative `∂/∂x_k`.
    pub fn partial(&self, k: usize) -> Self {
        let terms = self.terms.iter().flat_map(|t| t.derivative(k)).collect();
        Self::from_terms(self.dim, terms)
    }

    /// Samples the field on a tensor grid given per-direction point sets.
    /// Each term becomes one exact rank-1 train; the sum has rank ≤ number of terms.
    pub fn sample_tt(&self, points: &[Vec<f64>]) -> Result<TtVector> {
        if points.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "field of dimension {} sampled on {} directions",
                self.dim,
                points.len()
            )));
        }
        let modes: Vec<usize> = points.iter().map(|p| p.len()).collect();
        if self.terms.is_empty() {
            return Ok(TtVector::zeros(&modes));
        }
        let mut acc: Option<TtVector> = None;
        for t in &self.terms {
            let mut factors: Vec<Vec<f64>> = points
                .iter()
                .enumerate()
                .map(|(k, pts)| pts.iter().map(|&x| t.eval_coord(k, x)).collect())
                .collect();
            for v in &mut factors[0] {
                *v *= t.coeff;
            }
            let r1 = TtVector::rank_one(&factors)?;
            acc = Some(match acc {
                None => r1,
                Some(a) => a.add(&r1)?,
            });
        }
        Ok(acc.expect("nonempty"))
    }
}

/// Dense `d × d` array of fields (used for `G`, `ρ` and their products).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMatrix {
    dim: usize,
    entries: Vec<SeparableField>,
}

impl FieldMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![SeparableField::zero(dim); dim * dim],
        }
    }

    /// `c · I`
    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, SeparableField::constant(dim, c));
        }
        m
    }

    pub fn constant(dim: usize, values: &[f64]) -> Result<Self> {
        if values.len() != dim * dim {
            return Err(Error::ShapeMismatch("constant matrix size".into()));
        }
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.set(i, j, SeparableField::constant(dim, values[i * dim + j]));
            }
        }
        Ok(m)
    }

    pub fn diagonal(fields: Vec<SeparableField>) -> Self {
        let dim = fields.len();
        let mut m = Self::zeros(dim);
        for (i, f) in fields.into_iter().enumerate() {
            m.set(i, i, f);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> &SeparableField {
        &self.entries[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, f: SeparableField) {
        self.entries[i * self.dim + j] = f;
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|f| f.eval(x)).collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    /// `self · selfᵀ`
    pub fn outer_self(&self) -> Self {
        let d = self.dim;
        let mut m = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let mut acc = SeparableField::zero(d);
                for k in 0..d {
                    let (a, b) = (self.get(i, k), self.get(j, k));
                    if !a.is_zero() && !b.is_zero() {
                        acc = acc.add(&a.mul(b));
                    }
                }
                m.set(i, j, acc);
            }
        }
        m.chop_constants(1e-14);
        m
    }

    /// Drops constant terms below `rel` times the largest constant term,
    /// e.g. the rounding residue of `QQᵀ` for an orthogonal `Q`.
    fn chop_constants(&mut self, rel: f64) {
        let scale = self
            .entries
            .iter()
            .flat_map(|f| f.terms.iter())
            .filter(|t| t.factors.is_empty())
            .fold(0.0f64, |m, t| m.max(t.coeff.abs()));
        for f in &mut self.entries {
            f.terms.retain(|t| !t.factors.is_empty() || t.coeff.abs() > rel * scale);
        }
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| i == j || self.get(i, j).is_zero()))
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(|f| f.is_constant())
    }

    /// Column divergence `Σ_i ∂_i M_{ik}`.
    pub fn column_divergence(&self, k: usize) -> SeparableField {
        (0..self.dim).fold(SeparableField::zero(self.dim), |acc, i| {
            acc.add(&self.get(i, k).partial(i))
        })
    }

    /// `Σ_{i,j} ∂_i ∂_j M_{ij}`.
    pub fn double_divergence(&self) -> SeparableField {
        let mut acc = SeparableField::zero(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc = acc.add(&self.get(i, j).partial(j).partial(i));
            }
        }
        acc
    }
}
