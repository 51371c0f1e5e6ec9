//! Monomials, posynomials and their log-log transforms.
//!
//! A posynomial `f(v) = Σ_k c_k ∏_j v_j^{a_kj}` with `c_k > 0` becomes the
//! convex log-sum-exp function `F(w) = log Σ_k exp(log c_k + a_k·w)` after the
//! substitution `v = exp(w)`. Differences of two such functions are the DC
//! constraints handled by [`crate::dcsolve`].
//!
//! Exponent vectors are stored sparsely as `(variable index, exponent)` pairs
//! sorted by index, where indices refer to a shared [`VarSpace`].

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PosyError {
    #[error("monomial coefficient must be positive and finite, got {0}")]
    NonpositiveCoefficient(f64),
    #[error("variable {index} has nonpositive value {value}")]
    NonpositiveInput { index: usize, value: f64 },
    #[error("scale factor must be positive, got {0}")]
    ScaleNonpositive(f64),
    #[error("posynomial must have at least one term")]
    Empty,
    #[error("variable index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
}

/// Ordered registry of named optimization variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarSpace {
    names: Vec<String>,
}

impl VarSpace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a variable and returns its index.
    pub fn push(&mut self, name: impl Into<String>) -> usize {
        self.names.push(name.into());
        self.names.len() - 1
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// `c · ∏ v_j^{a_j}` with `c > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    coeff: f64,
    exponents: Vec<(usize, f64)>,
}

impl Monomial {
    pub fn new(coeff: f64, exponents: impl IntoIterator<Item = (usize, f64)>) -> Result<Self, PosyError> {
        if !(coeff > 0.0 && coeff.is_finite()) {
            return Err(PosyError::NonpositiveCoefficient(coeff));
        }
        let mut exps: Vec<(usize, f64)> = Vec::new();
        for (i, a) in exponents {
            match exps.iter_mut().find(|(j, _)| *j == i) {
                Some(slot) => slot.1 += a,
                None => exps.push((i, a)),
            }
        }
        exps.retain(|&(_, a)| a != 0.0);
        exps.sort_by_key(|&(i, _)| i);
        Ok(Self {
            coeff,
            exponents: exps,
        })
    }

    pub fn constant(coeff: f64) -> Result<Self, PosyError> {
        Self::new(coeff, [])
    }

    /// `c · v_i`.
    pub fn var(coeff: f64, i: usize) -> Result<Self, PosyError> {
        Self::new(coeff, [(i, 1.0)])
    }

    /// Builds a monomial from a dense exponent vector.
    pub fn dense(coeff: f64, exponents: &[f64]) -> Result<Self, PosyError> {
        Self::new(coeff, exponents.iter().copied().enumerate())
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn exponents(&self) -> &[(usize, f64)] {
        &self.exponents
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial::new(
            self.coeff * other.coeff,
            self.exponents.iter().chain(&other.exponents).copied(),
        )
        .expect("product of positive coefficients is positive")
    }

    fn max_index(&self) -> Option<usize> {
        self.exponents.last().map(|&(i, _)| i)
    }

    /// Evaluates at a strictly positive point.
    pub fn eval(&self, v: &[f64]) -> Result<f64, PosyError> {
        let mut acc = self.coeff;
        for &(i, a) in &self.exponents {
            let x = *v.get(i).ok_or(PosyError::IndexOutOfRange {
                index: i,
                dim: v.len(),
            })?;
            if !(x > 0.0) {
                return Err(PosyError::NonpositiveInput { index: i, value: x });
            }
            acc *= x.powf(a);
        }
        Ok(acc)
    }

    /// `log c + a·w`, the log-transformed monomial.
    pub fn log_eval(&self, w: &[f64]) -> f64 {
        self.coeff.ln() + self.exponents.iter().map(|&(i, a)| a * w[i]).sum::<f64>()
    }
}

/// Evaluates a monomial at a strictly positive point.
pub fn eval_monomial(m: &Monomial, v: &[f64]) -> Result<f64, PosyError> {
    m.eval(v)
}

/// Nonempty sum of monomials; like terms are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct Posynomial {
    terms: Vec<Monomial>,
}

impl Posynomial {
    pub fn new(terms: Vec<Monomial>) -> Result<Self, PosyError> {
        if terms.is_empty() {
            return Err(PosyError::Empty);
        }
        let mut merged: Vec<Monomial> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.iter_mut().find(|m| m.exponents == t.exponents) {
                Some(m) => m.coeff += t.coeff,
                None => merged.push(t),
            }
        }
        Ok(Self { terms: merged })
    }

    /// Collects terms into a posynomial, or `None` for an empty sum.
    pub fn from_terms(terms: Vec<Monomial>) -> Option<Self> {
        Self::new(terms).ok()
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_monomial(&self) -> bool {
        self.terms.len() == 1
    }

    pub fn max_index(&self) -> Option<usize> {
        self.terms.iter().filter_map(Monomial::max_index).max()
    }

    pub fn eval(&self, v: &[f64]) -> Result<f64, PosyError> {
        self.terms.iter().map(|t| t.eval(v)).sum()
    }

    pub fn add(&self, other: &Posynomial) -> Posynomial {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Posynomial::new(terms).expect("sum of nonempty posynomials")
    }

    pub fn scale(&self, k: f64) -> Result<Posynomial, PosyError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(PosyError::ScaleNonpositive(k));
        }
        Ok(Posynomial {
            terms: self
                .terms
                .iter()
                .map(|t| Monomial {
                    coeff: t.coeff * k,
                    exponents: t.exponents.clone(),
                })
                .collect(),
        })
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Posynomial {
        Posynomial::new(self.terms.iter().map(|t| t.mul(m)).collect())
            .expect("nonempty product")
    }

    pub fn log_transform(&self) -> LogPosynomial {
        LogPosynomial::new(self)
    }
}

impl From<Monomial> for Posynomial {
    fn from(m: Monomial) -> Self {
        Self { terms: vec![m] }
    }
}

impl fmt::Display for Posynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, t) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}", t.coeff)?;
            for &(i, a) in &t.exponents {
                if a == 1.0 {
                    write!(f, "·v{i}")?;
                } else {
                    write!(f, "·v{i}^{a}")?;
                }
            }
        }
        Ok(())
    }
}

pub fn eval_posynomial(f: &Posynomial, v: &[f64]) -> Result<f64, PosyError> {
    f.eval(v)
}

pub fn posy_add(f: &Posynomial, g: &Posynomial) -> Posynomial {
    f.add(g)
}

pub fn posy_scale(f: &Posynomial, k: f64) -> Result<Posynomial, PosyError> {
    f.scale(k)
}

pub fn posy_mul_monomial(f: &Posynomial, m: &Monomial) -> Posynomial {
    f.mul_monomial(m)
}

/// Affine function `constant + Σ coeffs_i · w_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub constant: f64,
    pub coeffs: Vec<(usize, f64)>,
}

impl Affine {
    pub fn eval(&self, w: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|&(i, c)| c * w[i]).sum::<f64>()
    }
}

/// Value, gradient and Hessian of a log-posynomial restricted to the
/// variables it depends on.
#[derive(Debug, Clone)]
pub struct LocalSecondOrder {
    pub value: f64,
    pub support: Vec<usize>,
    pub grad: Vec<f64>,
    /// Row-major `support.len()²` Hessian.
    pub hess: Vec<f64>,
}

/// `F(w) = log f(exp w)` for a posynomial `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPosynomial {
    support: Vec<usize>,
    log_coeffs: Vec<f64>,
    /// Row-major `terms × support` exponent matrix.
    exps: Vec<f64>,
}

impl LogPosynomial {
    pub fn new(f: &Posynomial) -> Self {
        let mut support: Vec<usize> = f
            .terms
            .iter()
            .flat_map(|t| t.exponents.iter().map(|&(i, _)| i))
            .collect();
        support.sort_unstable();
        support.dedup();
        let k = support.len();
        let mut exps = vec![0.0; f.terms.len() * k];
        for (t, term) in f.terms.iter().enumerate() {
            for &(i, a) in &term.exponents {
                let j = support.binary_search(&i).unwrap();
                exps[t * k + j] = a;
            }
        }
        Self {
            support,
            log_coeffs: f.terms.iter().map(|t| t.coeff.ln()).collect(),
            exps,
        }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn terms(&self) -> usize {
        self.log_coeffs.len()
    }

    /// Affine iff the source is a single monomial.
    pub fn is_affine(&self) -> bool {
        self.terms() == 1
    }

    fn exponents(&self, w: &[f64]) -> Vec<f64> {
        let k = self.support.len();
        self.log_coeffs
            .iter()
            .enumerate()
            .map(|(t, &lc)| {
                lc + self.exps[t * k..(t + 1) * k]
                    .iter()
                    .zip(&self.support)
                    .map(|(a, &i)| a * w[i])
                    .sum::<f64>()
            })
            .collect()
    }

    /// Max-shifted log-sum-exp and the softmax weights.
    fn lse(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let z = self.exponents(w);
        let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = z.iter().map(|&zi| (zi - zmax).exp()).collect();
        let sum: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= sum);
        (zmax + sum.ln(), p)
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        self.lse(w).0
    }

    /// Value and dense gradient.
    pub fn value_grad(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let (f, local) = self.value_local_grad(w);
        let mut g = vec![0.0; w.len()];
        for (&i, gi) in self.support.iter().zip(local) {
            g[i] = gi;
        }
        (f, g)
    }

    /// Value and gradient over [`Self::support`]; the gradient is the
    /// softmax-weighted average of the exponent vectors.
    pub fn value_local_grad(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let (f, p) = self.lse(w);
        let k = self.support.len();
        let mut g = vec![0.0; k];
        for (t, &pt) in p.iter().enumerate() {
            for j in 0..k {
                g[j] += pt * self.exps[t * k + j];
            }
        }
        (f, g)
    }

    /// Value, gradient and Hessian `Σ p_t a_t a_tᵀ − ggᵀ` over the support.
    pub fn second_order(&self, w: &[f64]) -> LocalSecondOrder {
        let (f, p) = self.lse(w);
        let k = self.support.len();
        let mut g = vec![0.0; k];
        let mut h = vec![0.0; k * k];
        for (t, &pt) in p.iter().enumerate() {
            let a = &self.exps[t * k..(t + 1) * k];
            for r in 0..k {
                g[r] += pt * a[r];
                if a[r] == 0.0 {
                    continue;
                }
                for c in 0..k {
                    h[r * k + c] += pt * a[r] * a[c];
                }
            }
        }
        for r in 0..k {
            for c in 0..k {
                h[r * k + c] -= g[r] * g[c];
            }
        }
        LocalSecondOrder {
            value: f,
            support: self.support.clone(),
            grad: g,
            hess: h,
        }
    }

    /// First-order expansion at `w0`. Because `F` is convex this is a global
    /// under-estimator, `T(w) ≤ F(w)`, with equality everywhere when `F` is
    /// affine.
    pub fn tangent(&self, w0: &[f64]) -> Affine {
        let (f, g) = self.value_local_grad(w0);
        let constant = f - self
            .support
            .iter()
            .zip(&g)
            .map(|(&i, gi)| gi * w0[i])
            .sum::<f64>();
        Affine {
            constant,
            coeffs: self.support.iter().copied().zip(g).collect(),
        }
    }
}

pub fn log_transform(f: &Posynomial) -> LogPosynomial {
    f.log_transform()
}

/// Tangent of `log Q(exp w)` at `w0`.
pub fn linearize_concave(q: &Posynomial, w0: &[f64]) -> Affine {
    q.log_transform().tangent(w0)
}

/// `log P(exp w) − log Q(exp w) ≤ 0`, i.e. `P ≤ Q` in the original variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DCConstraint {
    pub p: Posynomial,
    pub q: Posynomial,
    pub label: String,
}

impl DCConstraint {
    pub fn new(p: Posynomial, q: Posynomial, label: impl Into<String>) -> Self {
        Self {
            p,
            q,
            label: label.into(),
        }
    }

    /// The convex part is exact after linearization when `Q` is a monomial.
    pub fn is_convex(&self) -> bool {
        self.q.is_monomial()
    }

    /// Exact value `log P(exp w) − log Q(exp w)`.
    pub fn value(&self, w: &[f64]) -> f64 {
        self.p.log_transform().value(w) - self.q.log_transform().value(w)
    }

    pub fn max_index(&self) -> Option<usize> {
        self.p.max_index().max(self.q.max_index())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn posy(terms: &[(f64, &[f64])]) -> Posynomial {
        Posynomial::new(
            terms
                .iter()
                .map(|(c, a)| Monomial::dense(*c, a).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn monomial_evaluation() {
        let m = Monomial::dense(2.0, &[0.5, -1.0]).unwrap();
        assert_eq!(m.eval(&[4.0, 2.0]).unwrap(), 2.0);
        let one = Monomial::constant(1.0).unwrap();
        assert_eq!(one.eval(&[0.3, 7.0]).unwrap(), 1.0);
        let m = Monomial::dense(3.0, &[1.0]).unwrap();
        assert_eq!(
            m.eval(&[0.0]),
            Err(PosyError::NonpositiveInput {
                index: 0,
                value: 0.0
            })
        );
        assert_eq!(
            Monomial::constant(0.0),
            Err(PosyError::NonpositiveCoefficient(0.0))
        );
    }

    #[test]
    fn posynomial_evaluation() {
        let f = posy(&[(1.0, &[1.0, 0.0]), (1.0, &[1.0, 1.0])]);
        assert_eq!(f.eval(&[1.0, 1.0]).unwrap(), 2.0);
        let f = posy(&[(2.0, &[1.0])]);
        assert_eq!(f.eval(&[3.0]).unwrap(), 6.0);
        assert_eq!(Posynomial::new(vec![]), Err(PosyError::Empty));
    }

    #[test]
    fn closure_operations() {
        let v1 = posy(&[(1.0, &[1.0])]);
        let twice = posy_add(&v1, &v1);
        assert_eq!(twice.terms().len(), 1);
        assert_eq!(twice.terms()[0].coeff(), 2.0);

        let s = posy(&[(1.0, &[1.0, 0.0]), (1.0, &[0.0, 1.0])]);
        let scaled = posy_scale(&s, 3.0).unwrap();
        assert!(scaled.terms().iter().all(|t| t.coeff() == 3.0));
        assert_eq!(posy_scale(&s, 0.0), Err(PosyError::ScaleNonpositive(0.0)));

        let m = Monomial::new(2.0, [(2, 1.0)]).unwrap();
        let prod = posy_mul_monomial(&s, &m);
        let expect = posy(&[(2.0, &[1.0, 0.0, 1.0]), (2.0, &[0.0, 1.0, 1.0])]);
        assert_eq!(prod, expect);
    }

    #[test]
    fn monomial_transform_is_affine() {
        let f = posy(&[(2.0, &[1.0, 1.0])]);
        let lf = log_transform(&f);
        assert!(lf.is_affine());
        for w in [[0.0, 0.0], [1.5, -0.25], [-3.0, 2.0]] {
            assert!((lf.value(&w) - (2f64.ln() + w[0] + w[1])).abs() < 1e-14);
        }
    }

    #[test]
    fn two_term_sum_at_origin() {
        let f = posy(&[(1.0, &[1.0, 0.0]), (1.0, &[0.0, 1.0])]);
        let (v, g) = log_transform(&f).value_grad(&[0.0, 0.0]);
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert!((g[0] - 0.5).abs() < 1e-15 && (g[1] - 0.5).abs() < 1e-15);

        let t = linearize_concave(&f, &[0.0, 0.0]);
        assert!((t.constant - 2f64.ln()).abs() < 1e-15);
        assert_eq!(t.coeffs, vec![(0, 0.5), (1, 0.5)]);
    }

    #[test]
    fn tangent_of_monomial_is_exact() {
        let q = posy(&[(0.7, &[2.0, -1.0])]);
        let t = linearize_concave(&q, &[0.3, -0.8]);
        let lq = q.log_transform();
        for w in [[0.0, 0.0], [5.0, 1.0], [-2.0, 4.0]] {
            assert!((t.eval(&w) - lq.value(&w)).abs() < 1e-12);
        }
    }

    #[test]
    fn large_exponents_do_not_overflow() {
        let f = posy(&[(1.0, &[1.0]), (1.0, &[2.0])]);
        let v = log_transform(&f).value(&[800.0]);
        assert!((v - 1600.0).abs() < 1e-9);
    }

    #[test]
    fn product_of_monomials_transforms_to_sum() {
        let a = Monomial::dense(1.5, &[1.0, -2.0, 0.5]).unwrap();
        let b = Monomial::dense(0.2, &[0.0, 3.0, 1.0]).unwrap();
        let w = [0.4, -1.1, 2.3];
        let lhs = Posynomial::from(a.mul(&b)).log_transform().value(&w);
        let rhs = a.log_eval(&w) + b.log_eval(&w);
        assert!((lhs - rhs).abs() < 1e-13);
    }

    fn arb_posy() -> impl Strategy<Value = (usize, Posynomial)> {
        (1usize..=6).prop_flat_map(|nv| {
            prop::collection::vec(
                (0.01f64..10.0, prop::collection::vec(-3.0f64..3.0, nv)),
                1..=8,
            )
            .prop_map(move |terms| {
                let terms = terms
                    .into_iter()
                    .map(|(c, a)| Monomial::dense(c, &a).unwrap())
                    .collect();
                (nv, Posynomial::new(terms).unwrap())
            })
        })
    }

    fn arb_point(nv: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-2.0f64..2.0, nv)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn gradient_matches_central_differences(
            (nv, f, w) in arb_posy().prop_flat_map(|(nv, f)| (Just(nv), Just(f), arb_point(nv)))
        ) {
            let lf = f.log_transform();
            let (_, g) = lf.value_grad(&w);
            let h = 1e-6;
            for i in 0..nv {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[i] += h;
                wm[i] -= h;
                let fd = (lf.value(&wp) - lf.value(&wm)) / (2.0 * h);
                let scale = g[i].abs().max(1.0);
                prop_assert!((fd - g[i]).abs() <= 1e-5 * scale,
                    "component {}: analytic {} vs fd {}", i, g[i], fd);
            }
        }

        #[test]
        fn midpoint_convexity(
            (f, w1, w2) in arb_posy().prop_flat_map(|(nv, f)| (Just(f), arb_point(nv), arb_point(nv)))
        ) {
            let lf = f.log_transform();
            let mid: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| 0.5 * (a + b)).collect();
            prop_assert!(lf.value(&mid) <= 0.5 * (lf.value(&w1) + lf.value(&w2)) + 1e-12);
        }

        #[test]
        fn hessian_matches_gradient_differences(
            (nv, f, w) in arb_posy().prop_flat_map(|(nv, f)| (Just(nv), Just(f), arb_point(nv)))
        ) {
            let lf = f.log_transform();
            let so = lf.second_order(&w);
            let k = so.support.len();
            let h = 1e-6;
            for (c, &i) in so.support.iter().enumerate() {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[i] += h;
                wm[i] -= h;
                let (_, gp) = lf.value_grad(&wp);
                let (_, gm) = lf.value_grad(&wm);
                for (r, &j) in so.support.iter().enumerate() {
                    let fd = (gp[j] - gm[j]) / (2.0 * h);
                    prop_assert!((fd - so.hess[r * k + c]).abs() <= 1e-5 * (1.0 + fd.abs()));
                }
            }
            prop_assert!(nv >= k);
        }

        #[test]
        fn eval_is_monotone_in_coefficients(
            (nv, f) in arb_posy(), bump in 0.0f64..5.0, pick in 0usize..8
        ) {
            let v: Vec<f64> = (0..nv).map(|i| 0.5 + i as f64 * 0.3).collect();
            let k = pick % f.terms().len();
            let mut terms = f.terms().to_vec();
            let old = &terms[k];
            terms[k] = Monomial::new(old.coeff() + bump, old.exponents().iter().copied()).unwrap();
            let g = Posynomial::new(terms).unwrap();
            prop_assert!(g.eval(&v).unwrap() >= f.eval(&v).unwrap());
            prop_assert!(f.eval(&v).unwrap() > 0.0);
        }
    }
}
