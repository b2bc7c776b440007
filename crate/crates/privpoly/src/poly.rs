//! Polynomial model and its protocol decomposition.
//!
//! A target polynomial over the owner's closed neighborhood is split into
//! per-neighbor bivariate parts (terms touching only the owner and one
//! neighbor), an owner-only part evaluated locally, and a list of
//! multiplicative terms, each a product of univariate factors across the
//! group. The decomposition expands back to the original monomial list
//! exactly, as formal polynomials over the rationals.

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use std::collections::{BTreeMap, BTreeSet};

use crate::agent::AgentId;
use crate::error::PolyError;

/// A single monomial `coeff * prod_j x_j^{e_j}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Monomial {
    pub coeff: BigRational,
    pub exponents: BTreeMap<AgentId, u32>,
}

impl Monomial {
    pub fn new(coeff: BigRational, exponents: BTreeMap<AgentId, u32>) -> Self {
        let exponents = exponents.into_iter().filter(|(_, e)| *e > 0).collect();
        Monomial { coeff, exponents }
    }

    /// Convenience constructor from an `f64` coefficient and `(agent, exp)` pairs.
    pub fn from_f64(coeff: f64, exps: &[(u32, u32)]) -> Self {
        Monomial::new(
            BigRational::from_float(coeff).expect("finite coefficient"),
            exps.iter().map(|&(a, e)| (AgentId(a), e)).collect(),
        )
    }

    pub fn total_degree(&self) -> u32 {
        self.exponents.values().sum()
    }
}

/// A univariate polynomial, keyed by exponent. The variable it applies to is
/// given by context (the factor's agent, or the owner for the owner part).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnivariatePoly {
    terms: BTreeMap<u32, BigRational>,
}

impl UnivariatePoly {
    pub fn zero() -> Self {
        UnivariatePoly {
            terms: BTreeMap::new(),
        }
    }

    pub fn one() -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(0, BigRational::one());
        UnivariatePoly { terms }
    }

    pub fn from_terms(terms: BTreeMap<u32, BigRational>) -> Self {
        let terms = terms.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        UnivariatePoly { terms }
    }

    pub fn terms(&self) -> &BTreeMap<u32, BigRational> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// True for the constant polynomial 1 (the identity factor).
    pub fn is_one(&self) -> bool {
        self.terms.len() == 1
            && self.terms.get(&0).map(|c| c.is_one()).unwrap_or(false)
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().next_back().copied().unwrap_or(0)
    }

    pub fn add_term(&mut self, exp: u32, coeff: BigRational) {
        let entry = self.terms.entry(exp).or_insert_with(BigRational::zero);
        *entry += coeff;
        if entry.is_zero() {
            self.terms.remove(&exp);
        }
    }

    pub fn scale(&self, c: &BigRational) -> UnivariatePoly {
        UnivariatePoly::from_terms(
            self.terms
                .iter()
                .map(|(e, k)| (*e, k * c))
                .collect(),
        )
    }

    pub fn eval_exact(&self, x: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for (e, c) in &self.terms {
            let mut p = BigRational::one();
            for _ in 0..*e {
                p *= x;
            }
            acc += c * p;
        }
        acc
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c.to_f64().unwrap_or(f64::NAN) * x.powi(*e as i32))
            .sum()
    }
}

/// One bivariate term `(coeff, p_owner, p_neighbor)` with `p_neighbor >= 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BivariateTerm {
    pub coeff: BigRational,
    pub owner_exp: u32,
    pub neighbor_exp: u32,
}

/// All terms of the target polynomial touching only the owner and one
/// specific neighbor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BivariatePart {
    pub neighbor: AgentId,
    pub terms: Vec<BivariateTerm>,
}

impl BivariatePart {
    pub fn eval_f64(&self, x_owner: f64, x_neighbor: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coeff.to_f64().unwrap_or(f64::NAN)
                    * x_owner.powi(t.owner_exp as i32)
                    * x_neighbor.powi(t.neighbor_exp as i32)
            })
            .sum()
    }
}

/// A univariate factor of a multiplicative term, with its coefficient
/// sensitivity flag. Private coefficients travel encrypted; public ones may
/// use the plaintext shortcut.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub poly: UnivariatePoly,
    pub coeffs_public: bool,
}

impl Factor {
    pub fn private(poly: UnivariatePoly) -> Self {
        Factor {
            poly,
            coeffs_public: false,
        }
    }

    pub fn identity() -> Self {
        Factor::private(UnivariatePoly::one())
    }

    pub fn is_identity(&self) -> bool {
        self.poly.is_one()
    }
}

/// One product `prod_j W_j(x_j)` over the whole group; agents absent from the
/// product carry identity factors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiplicativeTerm {
    pub factors: BTreeMap<AgentId, Factor>,
}

impl MultiplicativeTerm {
    pub fn eval_f64(&self, values: &BTreeMap<AgentId, f64>) -> f64 {
        self.factors
            .iter()
            .map(|(agent, f)| f.poly.eval_f64(values[agent]))
            .product()
    }
}

/// The decomposed target polynomial of one owner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolynomialSpec {
    pub owner: AgentId,
    pub neighbors: BTreeSet<AgentId>,
    /// Terms in the owner's variable only (including any constant); the owner
    /// evaluates these locally.
    pub owner_part: UnivariatePoly,
    pub bivariate: BTreeMap<AgentId, BivariatePart>,
    pub multiplicative: Vec<MultiplicativeTerm>,
}

type CoeffMap = BTreeMap<BTreeMap<AgentId, u32>, BigRational>;

fn coeff_map(monomials: &[Monomial]) -> CoeffMap {
    let mut map: CoeffMap = BTreeMap::new();
    for m in monomials {
        let exps: BTreeMap<AgentId, u32> = m
            .exponents
            .iter()
            .filter(|(_, e)| **e > 0)
            .map(|(a, e)| (*a, *e))
            .collect();
        let entry = map.entry(exps).or_insert_with(BigRational::zero);
        *entry += &m.coeff;
    }
    map.retain(|_, c| !c.is_zero());
    map
}

impl PolynomialSpec {
    pub fn group(&self) -> BTreeSet<AgentId> {
        let mut g = self.neighbors.clone();
        g.insert(self.owner);
        g
    }

    /// Number of multiplicative terms `T`.
    pub fn t_count(&self) -> usize {
        self.multiplicative.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.expand()
            .keys()
            .map(|exps| exps.values().sum())
            .max()
            .unwrap_or(0)
    }

    /// Expands the decomposition back into a canonical coefficient map.
    pub fn expand(&self) -> CoeffMap {
        let mut monomials: Vec<Monomial> = Vec::new();
        for (e, c) in self.owner_part.terms() {
            let mut exps = BTreeMap::new();
            if *e > 0 {
                exps.insert(self.owner, *e);
            }
            monomials.push(Monomial::new(c.clone(), exps));
        }
        for part in self.bivariate.values() {
            for t in &part.terms {
                let mut exps = BTreeMap::new();
                if t.owner_exp > 0 {
                    exps.insert(self.owner, t.owner_exp);
                }
                exps.insert(part.neighbor, t.neighbor_exp);
                monomials.push(Monomial::new(t.coeff.clone(), exps));
            }
        }
        for term in &self.multiplicative {
            // expand the product factor by factor
            let mut acc: Vec<(BigRational, BTreeMap<AgentId, u32>)> =
                vec![(BigRational::one(), BTreeMap::new())];
            for (agent, factor) in &term.factors {
                let mut next = Vec::new();
                for (e, c) in factor.poly.terms() {
                    for (c0, exps0) in &acc {
                        let mut exps = exps0.clone();
                        if *e > 0 {
                            *exps.entry(*agent).or_insert(0) += *e;
                        }
                        next.push((c0 * c, exps));
                    }
                }
                acc = next;
            }
            for (c, exps) in acc {
                monomials.push(Monomial::new(c, exps));
            }
        }
        coeff_map(&monomials)
    }

    /// Reference oracle: evaluates the decomposed polynomial in plain `f64`
    /// arithmetic.
    pub fn evaluate_plain(&self, values: &BTreeMap<AgentId, f64>) -> Result<f64, PolyError> {
        for agent in self.group() {
            if !values.contains_key(&agent) {
                return Err(PolyError::MissingAgent(agent));
            }
        }
        let x_owner = values[&self.owner];
        let mut acc = self.owner_part.eval_f64(x_owner);
        for part in self.bivariate.values() {
            acc += part.eval_f64(x_owner, values[&part.neighbor]);
        }
        for term in &self.multiplicative {
            acc += term.eval_f64(values);
        }
        Ok(acc)
    }

    /// Exact rational evaluation, for two-path equivalence oracles.
    pub fn evaluate_exact(
        &self,
        values: &BTreeMap<AgentId, BigRational>,
    ) -> Result<BigRational, PolyError> {
        for agent in self.group() {
            if !values.contains_key(&agent) {
                return Err(PolyError::MissingAgent(agent));
            }
        }
        let x_owner = &values[&self.owner];
        let mut acc = self.owner_part.eval_exact(x_owner);
        for part in self.bivariate.values() {
            let x_n = &values[&part.neighbor];
            for t in &part.terms {
                let mut p = t.coeff.clone();
                for _ in 0..t.owner_exp {
                    p *= x_owner;
                }
                for _ in 0..t.neighbor_exp {
                    p *= x_n;
                }
                acc += p;
            }
        }
        for term in &self.multiplicative {
            let mut p = BigRational::one();
            for (agent, f) in &term.factors {
                p *= f.poly.eval_exact(&values[agent]);
            }
            acc += p;
        }
        Ok(acc)
    }

    /// Removes agent `j` by the monomial rule: every exponent of `x_j` is set
    /// to zero (so `x_j^0 = 1`), and the spec is re-decomposed over the
    /// shrunk neighbor set. Idempotent.
    pub fn drop_agent(&self, dropped: AgentId) -> PolynomialSpec {
        let mut monomials = Vec::new();
        for (exps, c) in self.expand() {
            let exps: BTreeMap<AgentId, u32> =
                exps.into_iter().filter(|(a, _)| *a != dropped).collect();
            monomials.push(Monomial::new(c, exps));
        }
        let mut neighbors = self.neighbors.clone();
        neighbors.remove(&dropped);
        decompose(&monomials, self.owner, &neighbors)
            .expect("re-decomposition over a shrunk support cannot fail")
    }
}

/// Splits a monomial list into the protocol form: owner-only part, bivariate
/// parts, and multiplicative terms built by greedy support-pattern factoring.
pub fn decompose(
    monomials: &[Monomial],
    owner: AgentId,
    neighbors: &BTreeSet<AgentId>,
) -> Result<PolynomialSpec, PolyError> {
    for m in monomials {
        for (agent, e) in &m.exponents {
            if *e > 0 && *agent != owner && !neighbors.contains(agent) {
                return Err(PolyError::InvalidSupport(*agent));
            }
        }
    }
    let map = coeff_map(monomials);

    let mut owner_part = UnivariatePoly::zero();
    let mut bivariate: BTreeMap<AgentId, BivariatePart> = BTreeMap::new();
    // multivariate monomials grouped by their support pattern
    let mut groups: BTreeMap<BTreeSet<AgentId>, Vec<(BTreeMap<AgentId, u32>, BigRational)>> =
        BTreeMap::new();

    for (exps, coeff) in map {
        let neighbor_vars: Vec<AgentId> = exps
            .keys()
            .filter(|a| **a != owner)
            .copied()
            .collect();
        match neighbor_vars.len() {
            0 => owner_part.add_term(exps.get(&owner).copied().unwrap_or(0), coeff),
            1 => {
                let j = neighbor_vars[0];
                bivariate
                    .entry(j)
                    .or_insert_with(|| BivariatePart {
                        neighbor: j,
                        terms: Vec::new(),
                    })
                    .terms
                    .push(BivariateTerm {
                        coeff,
                        owner_exp: exps.get(&owner).copied().unwrap_or(0),
                        neighbor_exp: exps[&j],
                    });
            }
            _ => {
                let support: BTreeSet<AgentId> = exps.keys().copied().collect();
                groups.entry(support).or_default().push((exps, coeff));
            }
        }
    }

    let mut group_members = neighbors.clone();
    group_members.insert(owner);
    let mut multiplicative = Vec::new();

    for (support, members) in groups {
        // factor out the per-variable minimum exponents
        let mut min_exps: BTreeMap<AgentId, u32> = BTreeMap::new();
        for v in &support {
            let m = members
                .iter()
                .map(|(exps, _)| exps.get(v).copied().unwrap_or(0))
                .min()
                .unwrap_or(0);
            min_exps.insert(*v, m);
        }
        let remainders: Vec<(BTreeMap<AgentId, u32>, BigRational)> = members
            .iter()
            .map(|(exps, c)| {
                let rem: BTreeMap<AgentId, u32> = exps
                    .iter()
                    .filter_map(|(a, e)| {
                        let r = e - min_exps.get(a).copied().unwrap_or(0);
                        (r > 0).then_some((*a, r))
                    })
                    .collect();
                (rem, c.clone())
            })
            .collect();
        let remainder_vars: BTreeSet<AgentId> = remainders
            .iter()
            .flat_map(|(rem, _)| rem.keys().copied())
            .collect();

        if remainder_vars.len() <= 1 {
            // single product: the whole remainder sum is univariate
            let mut factors: BTreeMap<AgentId, Factor> = group_members
                .iter()
                .map(|a| (*a, Factor::identity()))
                .collect();
            let carrier = remainder_vars
                .iter()
                .next()
                .copied()
                .unwrap_or_else(|| *support.iter().next().expect("nonempty support"));
            for v in &support {
                if *v == carrier {
                    continue;
                }
                let mut terms = BTreeMap::new();
                terms.insert(min_exps[v], BigRational::one());
                factors.insert(*v, Factor::private(UnivariatePoly::from_terms(terms)));
            }
            let mut carrier_poly = UnivariatePoly::zero();
            for (rem, c) in &remainders {
                let e = rem.get(&carrier).copied().unwrap_or(0);
                carrier_poly.add_term(min_exps.get(&carrier).copied().unwrap_or(0) + e, c.clone());
            }
            factors.insert(carrier, Factor::private(carrier_poly));
            multiplicative.push(MultiplicativeTerm { factors });
        } else {
            // remainder mixes variables: each monomial is its own product
            for (exps, c) in &members {
                let mut factors: BTreeMap<AgentId, Factor> = group_members
                    .iter()
                    .map(|a| (*a, Factor::identity()))
                    .collect();
                let mut vars = exps.keys();
                let first = *vars.next().expect("multivariate monomial has variables");
                for (v, e) in exps {
                    let mut terms = BTreeMap::new();
                    let coeff = if *v == first {
                        c.clone()
                    } else {
                        BigRational::one()
                    };
                    terms.insert(*e, coeff);
                    factors.insert(*v, Factor::private(UnivariatePoly::from_terms(terms)));
                }
                multiplicative.push(MultiplicativeTerm { factors });
            }
        }
    }

    Ok(PolynomialSpec {
        owner,
        neighbors: neighbors.clone(),
        owner_part,
        bivariate,
        multiplicative,
    })
}
