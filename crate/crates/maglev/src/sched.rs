//! Scheduling variables for the parameter-varying embeddings.
//!
//! A scheduling variable is a product of primitive factors (trigonometric
//! functions of the tilt angles, raw angles, angular rates) with integer
//! exponents. Working with explicit [`Monomial`]s keeps the affine
//! decompositions exact: wherever a matrix entry needs a product like
//! `sin(chi) cos(chi) cos(psi)`, that product simply becomes one more
//! scheduling variable instead of an approximation residual.
//!
//! Analytic first time derivatives are available for every factor. Rates of
//! the angular-rate factors are the angular accelerations; when those are
//! not supplied the corresponding derivative entries are reported as zero,
//! which every consumer in this crate either tolerates exactly (the terms
//! are annihilated structurally) or does not read.

use serde::{Deserialize, Serialize};

use crate::dynamics::{coord, GeneralizedState};
use crate::{Error, Result, Vector6};

/// Primitive scheduling factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Factor {
    SinChi,
    CosChi,
    SinPsi,
    CosPsi,
    RateChi,
    RatePsi,
    RateZeta,
    AngleChi,
    AnglePsi,
}

impl Factor {
    /// Value of the factor at a state.
    pub fn value(self, state: &GeneralizedState) -> f64 {
        match self {
            Factor::SinChi => state.q[coord::CHI].sin(),
            Factor::CosChi => state.q[coord::CHI].cos(),
            Factor::SinPsi => state.q[coord::PSI].sin(),
            Factor::CosPsi => state.q[coord::PSI].cos(),
            Factor::RateChi => state.qd[coord::CHI],
            Factor::RatePsi => state.qd[coord::PSI],
            Factor::RateZeta => state.qd[coord::ZETA],
            Factor::AngleChi => state.q[coord::CHI],
            Factor::AnglePsi => state.q[coord::PSI],
        }
    }

    /// Time derivative of the factor along the state flow. Rate factors
    /// differentiate to accelerations, taken as zero when `qdd` is absent.
    pub fn rate(self, state: &GeneralizedState, qdd: Option<&Vector6>) -> f64 {
        let acc = |i: usize| qdd.map_or(0.0, |a| a[i]);
        match self {
            Factor::SinChi => state.q[coord::CHI].cos() * state.qd[coord::CHI],
            Factor::CosChi => -state.q[coord::CHI].sin() * state.qd[coord::CHI],
            Factor::SinPsi => state.q[coord::PSI].cos() * state.qd[coord::PSI],
            Factor::CosPsi => -state.q[coord::PSI].sin() * state.qd[coord::PSI],
            Factor::RateChi => acc(coord::CHI),
            Factor::RatePsi => acc(coord::PSI),
            Factor::RateZeta => acc(coord::ZETA),
            Factor::AngleChi => state.qd[coord::CHI],
            Factor::AnglePsi => state.qd[coord::PSI],
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Factor::SinChi => "sin_chi",
            Factor::CosChi => "cos_chi",
            Factor::SinPsi => "sin_psi",
            Factor::CosPsi => "cos_psi",
            Factor::RateChi => "chid",
            Factor::RatePsi => "psid",
            Factor::RateZeta => "zetad",
            Factor::AngleChi => "chi",
            Factor::AnglePsi => "psi",
        }
    }
}

/// Product of factors with positive integer exponents, kept in a canonical
/// sorted form so structural equality works.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monomial {
    factors: Vec<(Factor, u32)>,
}

impl Monomial {
    /// Single factor to the first power.
    pub fn factor(f: Factor) -> Self {
        Self { factors: vec![(f, 1)] }
    }

    /// Builds a monomial from (factor, exponent) pairs; merges duplicates.
    pub fn product(pairs: &[(Factor, u32)]) -> Self {
        let mut m = Self { factors: Vec::new() };
        for &(f, e) in pairs {
            m = m.times_pow(f, e);
        }
        m
    }

    fn times_pow(mut self, f: Factor, e: u32) -> Self {
        if e == 0 {
            return self;
        }
        match self.factors.iter_mut().find(|(g, _)| *g == f) {
            Some((_, exp)) => *exp += e,
            None => {
                self.factors.push((f, e));
                self.factors.sort();
            }
        }
        self
    }

    /// Product with another single factor (used when multiplying a matrix
    /// entry by an angular rate during the Coriolis assembly).
    pub fn times(&self, f: Factor) -> Self {
        self.clone().times_pow(f, 1)
    }

    pub fn value(&self, state: &GeneralizedState) -> f64 {
        self.factors
            .iter()
            .map(|&(f, e)| f.value(state).powi(e as i32))
            .product()
    }

    /// Time derivative by the product rule.
    pub fn rate(&self, state: &GeneralizedState, qdd: Option<&Vector6>) -> f64 {
        let mut total = 0.0;
        for (k, &(f, e)) in self.factors.iter().enumerate() {
            let mut term = e as f64 * f.value(state).powi(e as i32 - 1) * f.rate(state, qdd);
            for (j, &(g, d)) in self.factors.iter().enumerate() {
                if j != k {
                    term *= g.value(state).powi(d as i32);
                }
            }
            total += term;
        }
        total
    }

    pub fn name(&self) -> String {
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|&(f, e)| {
                if e == 1 {
                    f.symbol().to_string()
                } else {
                    format!("{}^{}", f.symbol(), e)
                }
            })
            .collect();
        parts.join("*")
    }
}

/// Ordered list of scheduling variables shared by one model family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulingBasis {
    monomials: Vec<Monomial>,
}

/// The default seven-variable factorization: trigonometric functions of the
/// two tilt angles plus the three angular rates.
pub const BASE7: [Factor; 7] = [
    Factor::SinChi,
    Factor::CosChi,
    Factor::SinPsi,
    Factor::CosPsi,
    Factor::RateChi,
    Factor::RatePsi,
    Factor::RateZeta,
];

impl SchedulingBasis {
    pub fn new(monomials: Vec<Monomial>) -> Self {
        Self { monomials }
    }

    /// The seven primitive variables `(sin chi, cos chi, sin psi, cos psi,
    /// chid, psid, zetad)`.
    pub fn base7() -> Self {
        Self::new(BASE7.iter().map(|&f| Monomial::factor(f)).collect())
    }

    /// Raw-angle pair `(chi, psi)` used by the local input-map expansion.
    pub fn angles() -> Self {
        Self::new(vec![
            Monomial::factor(Factor::AngleChi),
            Monomial::factor(Factor::AnglePsi),
        ])
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    /// Index of a monomial if it is already part of the basis.
    pub fn position(&self, m: &Monomial) -> Option<usize> {
        self.monomials.iter().position(|x| x == m)
    }

    /// Index of a monomial, appending it if new.
    pub fn intern(&mut self, m: Monomial) -> usize {
        match self.position(&m) {
            Some(i) => i,
            None => {
                self.monomials.push(m);
                self.monomials.len() - 1
            }
        }
    }

    /// Evaluates the basis at a state: values plus one layer of analytic
    /// time derivatives (see the module note on rate-factor derivatives).
    pub fn evaluate(&self, state: &GeneralizedState, qdd: Option<&Vector6>) -> SchedulingPoint {
        let n = self.monomials.len();
        let mut values = nalgebra::DVector::zeros(n);
        let mut rates = nalgebra::DVector::zeros(n);
        for (i, m) in self.monomials.iter().enumerate() {
            values[i] = m.value(state);
            rates[i] = m.rate(state, qdd);
        }
        SchedulingPoint { values, derivs: vec![rates] }
    }
}

/// Evaluated scheduling variables with their time derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct SchedulingPoint {
    pub values: nalgebra::DVector<f64>,
    /// `derivs[k-1]` holds the k-th time derivative of `values`.
    pub derivs: Vec<nalgebra::DVector<f64>>,
}

impl SchedulingPoint {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }

    /// k-th derivative layer (k >= 1).
    pub fn deriv(&self, order: usize) -> Result<&nalgebra::DVector<f64>> {
        if order == 0 || order > self.derivs.len() {
            return Err(Error::SchedulingOrder { needed: order, available: self.derivs.len() });
        }
        Ok(&self.derivs[order - 1])
    }
}

/// Default scheduling extraction: evaluates the seven-variable basis at a
/// state. Accelerations, when available, complete the derivatives of the
/// rate variables; model-specific bases are evaluated through
/// [`SchedulingBasis::evaluate`] instead.
pub fn scheduling_map(state: &GeneralizedState, qdd: Option<&Vector6>) -> SchedulingPoint {
    SchedulingBasis::base7().evaluate(state, qdd)
}
