//! Collusion identifiability analysis.
//!
//! A set of corrupt agents pools its queries' results and private values.
//! Under the structural rule that every product term touches at most one
//! noncorrupt variable, the pooled equations are linear in the stacked moment
//! vectors `P(x_j) = [x_j, x_j^2, ..., x_j^r]` of the noncorrupt values:
//! `A · [P(x_1); ...; P(x_m)] = b`. The solution set is the affine subspace
//! through one solution along the null space of `A`, characterized by the
//! exact rational projector `Pi = I - pinv(A) A`. A noncorrupt value is
//! uniquely recoverable exactly when its block of that subspace meets the
//! moment curve in one point.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use std::collections::{BTreeMap, BTreeSet};

use crate::agent::AgentId;
use crate::error::AnalysisError;
use crate::poly::PolynomialSpec;

// --- exact rational matrices -------------------------------------------------

/// A dense matrix of exact rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigRational>,
}

impl RatMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RatMatrix {
            rows,
            cols,
            data: vec![BigRational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = RatMatrix::zeros(n, n);
        for i in 0..n {
            *m.at_mut(i, i) = BigRational::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<BigRational>>) -> Self {
        let r = rows.len();
        let c = rows.first().map(Vec::len).unwrap_or(0);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        RatMatrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    /// Integer-entry convenience constructor.
    pub fn from_i64(rows: &[&[i64]]) -> Self {
        RatMatrix::from_rows(
            rows.iter()
                .map(|r| {
                    r.iter()
                        .map(|v| BigRational::from_integer(BigInt::from(*v)))
                        .collect()
                })
                .collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, r: usize, c: usize) -> &BigRational {
        &self.data[r * self.cols + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut BigRational {
        &mut self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> RatMatrix {
        let mut out = RatMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                *out.at_mut(c, r) = self.at(r, c).clone();
            }
        }
        out
    }

    pub fn mul(&self, other: &RatMatrix) -> RatMatrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = RatMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let v = self.at(r, k);
                if v.is_zero() {
                    continue;
                }
                for c in 0..other.cols {
                    let t = v * other.at(k, c);
                    *out.at_mut(r, c) += t;
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &RatMatrix) -> RatMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    pub fn mul_vec(&self, v: &[BigRational]) -> Vec<BigRational> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| {
                (0..self.cols)
                    .map(|c| self.at(r, c) * &v[c])
                    .fold(BigRational::zero(), |a, b| a + b)
            })
            .collect()
    }

    /// Reduced row echelon form; returns (rref, pivot column indices).
    pub fn rref(&self) -> (RatMatrix, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..m.cols {
            if row >= m.rows {
                break;
            }
            let Some(p) = (row..m.rows).find(|r| !m.at(*r, col).is_zero()) else {
                continue;
            };
            for c in 0..m.cols {
                let tmp = m.at(p, c).clone();
                *m.at_mut(p, c) = m.at(row, c).clone();
                *m.at_mut(row, c) = tmp;
            }
            let inv = m.at(row, col).recip();
            for c in 0..m.cols {
                let v = m.at(row, c) * &inv;
                *m.at_mut(row, c) = v;
            }
            for r in 0..m.rows {
                if r == row || m.at(r, col).is_zero() {
                    continue;
                }
                let f = m.at(r, col).clone();
                for c in 0..m.cols {
                    let v = m.at(r, c) - &f * m.at(row, c);
                    *m.at_mut(r, c) = v;
                }
            }
            pivots.push(col);
            row += 1;
        }
        (m, pivots)
    }

    /// Gauss-Jordan inverse; panics if singular (callers pass gram matrices
    /// of full-rank factors, which are invertible).
    fn inverse(&self) -> RatMatrix {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut aug = RatMatrix::zeros(n, 2 * n);
        for r in 0..n {
            for c in 0..n {
                *aug.at_mut(r, c) = self.at(r, c).clone();
            }
            *aug.at_mut(r, n + r) = BigRational::one();
        }
        let (red, pivots) = aug.rref();
        assert_eq!(pivots, (0..n).collect::<Vec<_>>(), "singular matrix");
        let mut out = RatMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                *out.at_mut(r, c) = red.at(r, n + c).clone();
            }
        }
        out
    }

    /// Moore-Penrose pseudoinverse via the full-rank factorization
    /// `A = C F` (pivot columns times rref rows):
    /// `pinv(A) = F' (F F')^{-1} (C' C)^{-1} C'`.
    pub fn pinv(&self) -> RatMatrix {
        let (red, pivots) = self.rref();
        let rank = pivots.len();
        if rank == 0 {
            return RatMatrix::zeros(self.cols, self.rows);
        }
        let mut c = RatMatrix::zeros(self.rows, rank);
        for (k, col) in pivots.iter().enumerate() {
            for r in 0..self.rows {
                *c.at_mut(r, k) = self.at(r, *col).clone();
            }
        }
        let mut f = RatMatrix::zeros(rank, self.cols);
        for r in 0..rank {
            for col in 0..self.cols {
                *f.at_mut(r, col) = red.at(r, col).clone();
            }
        }
        let ft = f.transpose();
        let ct = c.transpose();
        let m1 = f.mul(&ft).inverse();
        let m2 = ct.mul(&c).inverse();
        ft.mul(&m1).mul(&m2).mul(&ct)
    }
}

/// The orthogonal projector onto the null space of `a`: `I - pinv(a)·a`.
pub fn projector(a: &RatMatrix) -> RatMatrix {
    RatMatrix::identity(a.cols()).sub(&a.pinv().mul(a))
}

// --- the collusion system ----------------------------------------------------

/// Moment vector `[alpha, alpha^2, ..., alpha^r]`.
pub fn moment_vector(alpha: &BigRational, r: u32) -> Vec<BigRational> {
    let mut out = Vec::with_capacity(r as usize);
    let mut p = BigRational::one();
    for _ in 0..r {
        p *= alpha;
        out.push(p.clone());
    }
    out
}

/// The pooled linear system of a colluding set over the noncorrupt values.
#[derive(Debug, Clone)]
pub struct CollusionInstance {
    /// Moment degree `r`.
    pub degree: u32,
    /// Noncorrupt agents, fixing the block order of `a`'s columns.
    pub noncorrupt: Vec<AgentId>,
    /// `n x (m*r)` coefficient matrix.
    pub a: RatMatrix,
    pub b: Vec<BigRational>,
    /// True noncorrupt values, available to the test harness only.
    pub truth: Option<Vec<BigRational>>,
}

impl CollusionInstance {
    /// Harness constructor: derives `b` from the true values, so `truth` is
    /// an exact solution by construction.
    pub fn from_truth(a: RatMatrix, degree: u32, noncorrupt: Vec<AgentId>, truth: Vec<BigRational>) -> Self {
        assert_eq!(a.cols(), noncorrupt.len() * degree as usize);
        assert_eq!(truth.len(), noncorrupt.len());
        let stacked = stack_moments(&truth, degree);
        let b = a.mul_vec(&stacked);
        CollusionInstance {
            degree,
            noncorrupt,
            a,
            b,
            truth: Some(truth),
        }
    }

    pub fn var_count(&self) -> usize {
        self.noncorrupt.len()
    }

    /// One exact solution of the system in stacked-moment coordinates: the
    /// harness truth when present, else the minimum-norm solution `pinv(A)b`.
    fn particular(&self) -> Vec<BigRational> {
        match &self.truth {
            Some(t) => stack_moments(t, self.degree),
            None => self.a.pinv().mul_vec(&self.b),
        }
    }
}

fn stack_moments(values: &[BigRational], r: u32) -> Vec<BigRational> {
    values.iter().flat_map(|v| moment_vector(v, r)).collect()
}

/// Builds the pooled system from corrupt agents' queries, their known private
/// values, and the observed query results. Each query's owner must be
/// corrupt; product terms touching two or more noncorrupt variables violate
/// the structural assumption and are rejected.
pub fn build_system(
    queries: &[PolynomialSpec],
    corrupt_values: &BTreeMap<AgentId, BigRational>,
    results: &[BigRational],
) -> Result<CollusionInstance, AnalysisError> {
    assert_eq!(queries.len(), results.len(), "one result per query");
    let corrupt: BTreeSet<AgentId> = corrupt_values.keys().copied().collect();
    for q in queries {
        if !corrupt.contains(&q.owner) {
            return Err(AnalysisError::StructureViolation(format!(
                "query owner {} has no known private value",
                q.owner
            )));
        }
    }
    let mut noncorrupt: BTreeSet<AgentId> = BTreeSet::new();
    for q in queries {
        for a in q.group() {
            if !corrupt.contains(&a) {
                noncorrupt.insert(a);
            }
        }
    }
    let noncorrupt: Vec<AgentId> = noncorrupt.into_iter().collect();
    let index: BTreeMap<AgentId, usize> = noncorrupt
        .iter()
        .enumerate()
        .map(|(i, a)| (*a, i))
        .collect();

    // moment degree: highest exponent on any noncorrupt variable
    let mut degree = 1u32;
    for q in queries {
        for part in q.bivariate.values() {
            if index.contains_key(&part.neighbor) {
                for t in &part.terms {
                    degree = degree.max(t.neighbor_exp);
                }
            }
        }
        for term in &q.multiplicative {
            for (agent, f) in &term.factors {
                if index.contains_key(agent) && !f.is_identity() {
                    degree = degree.max(f.poly.degree());
                }
            }
        }
    }
    let r = degree as usize;

    let pow = |v: &BigRational, e: u32| -> BigRational {
        let mut p = BigRational::one();
        for _ in 0..e {
            p *= v;
        }
        p
    };

    let mut a = RatMatrix::zeros(queries.len(), noncorrupt.len() * r);
    let mut b = Vec::with_capacity(queries.len());
    for (row, (q, result)) in queries.iter().zip(results).enumerate() {
        let x_own = &corrupt_values[&q.owner];
        let mut constant = BigRational::zero();
        for (e, c) in q.owner_part.terms() {
            constant += c * pow(x_own, *e);
        }
        for part in q.bivariate.values() {
            match index.get(&part.neighbor) {
                Some(col_block) => {
                    for t in &part.terms {
                        let coeff = &t.coeff * pow(x_own, t.owner_exp);
                        *a.at_mut(row, col_block * r + (t.neighbor_exp as usize - 1)) += coeff;
                    }
                }
                None => {
                    let xn = &corrupt_values[&part.neighbor];
                    for t in &part.terms {
                        constant += &t.coeff * pow(x_own, t.owner_exp) * pow(xn, t.neighbor_exp);
                    }
                }
            }
        }
        for term in &q.multiplicative {
            let mut xi = BigRational::one();
            let mut nc_factor: Option<(AgentId, &crate::poly::UnivariatePoly)> = None;
            for (agent, f) in &term.factors {
                if f.is_identity() {
                    continue;
                }
                match corrupt_values.get(agent) {
                    Some(v) => xi *= f.poly.eval_exact(v),
                    None => {
                        if nc_factor.is_some() {
                            return Err(AnalysisError::StructureViolation(format!(
                                "query of {} has a product touching two noncorrupt variables",
                                q.owner
                            )));
                        }
                        nc_factor = Some((*agent, &f.poly));
                    }
                }
            }
            match nc_factor {
                None => constant += xi,
                Some((agent, poly)) => {
                    let col_block = index[&agent];
                    for (e, c) in poly.terms() {
                        let coeff = &xi * c;
                        if *e == 0 {
                            constant += coeff;
                        } else {
                            *a.at_mut(row, col_block * r + (*e as usize - 1)) += coeff;
                        }
                    }
                }
            }
        }
        b.push(result - constant);
    }

    Ok(CollusionInstance {
        degree,
        noncorrupt,
        a,
        b,
        truth: None,
    })
}

// --- verdicts ----------------------------------------------------------------

/// Whether a noncorrupt agent's value can be reconstructed by the colluders.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Identified,
    /// Carries a second exact-or-verified solution differing in the queried
    /// coordinate.
    NotIdentified { witness: Vec<f64> },
    /// Neither the exact certificate nor the falsifier was conclusive.
    Unknown,
}

/// Affine decision (`r = 1`): the value of variable `i` is identified
/// exactly when row `i` of the null-space projector vanishes; otherwise
/// `particular + Pi e_i` is a second exact solution differing at `i`.
pub fn check_affine(instance: &CollusionInstance, i: usize) -> Verdict {
    assert_eq!(instance.degree, 1, "affine check requires degree 1");
    let pi = projector(&instance.a);
    let m = instance.var_count();
    let row_zero = (0..m).all(|c| pi.at(i, c).is_zero());
    if row_zero {
        return Verdict::Identified;
    }
    let particular = instance.particular();
    let mut e_i = vec![BigRational::zero(); m];
    e_i[i] = BigRational::one();
    let shift = pi.mul_vec(&e_i);
    let witness: Vec<BigRational> = particular
        .iter()
        .zip(&shift)
        .map(|(p, s)| p + s)
        .collect();
    debug_assert_eq!(instance.a.mul_vec(&witness), instance.b);
    Verdict::NotIdentified {
        witness: witness.iter().map(|w| w.to_f64().unwrap()).collect(),
    }
}

/// General decision for moment degree `r`. Returns `Identified` on the exact
/// certificate (block row `i` of the projector vanishes, so the subspace is
/// a single point in that block), `NotIdentified` when the grid-plus-polish
/// falsifier exhibits a second verified solution, and `Unknown` otherwise.
pub fn check_general(instance: &CollusionInstance, i: usize, grid_points: usize) -> Verdict {
    let r = instance.degree as usize;
    if instance.degree == 1 {
        return check_affine(instance, i);
    }
    let pi = projector(&instance.a);
    let cols = instance.a.cols();
    let block_zero = (i * r..(i + 1) * r).all(|row| (0..cols).all(|c| pi.at(row, c).is_zero()));
    if block_zero {
        return Verdict::Identified;
    }
    match falsify(instance, i, grid_points) {
        Some(witness) => Verdict::NotIdentified { witness },
        None => Verdict::Unknown,
    }
}

fn f64_residual(a: &RatMatrix, b: &[BigRational], x: &[f64], r: u32) -> f64 {
    let stacked: Vec<f64> = x
        .iter()
        .flat_map(|v| (1..=r).map(move |e| v.powi(e as i32)))
        .collect();
    let mut ss = 0.0;
    for row in 0..a.rows() {
        let mut acc = -b[row].to_f64().unwrap();
        for c in 0..a.cols() {
            acc += a.at(row, c).to_f64().unwrap() * stacked[c];
        }
        ss += acc * acc;
    }
    ss.sqrt()
}

/// Coordinate-descent refinement with geometrically shrinking steps,
/// driving the residual of the full system toward zero.
fn polish(a: &RatMatrix, b: &[BigRational], x0: &[f64], r: u32) -> Vec<f64> {
    let m = x0.len();
    let mut x = x0.to_vec();
    let mut res = f64_residual(a, b, &x, r);
    let mut step = 0.25f64;
    while step > 1e-13 && res > 1e-13 {
        let mut improved = false;
        for dim in 0..m {
            loop {
                let mut moved = false;
                for s in [step, -step] {
                    let mut cand = x.clone();
                    cand[dim] += s;
                    let cr = f64_residual(a, b, &cand, r);
                    if cr < res {
                        res = cr;
                        x = cand;
                        moved = true;
                        improved = true;
                        break;
                    }
                }
                if !moved {
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    x
}

/// Searches a uniform grid over a box around the true values for a second
/// solution of the full system, polishing promising candidates.
fn falsify(instance: &CollusionInstance, i: usize, grid_points: usize) -> Option<Vec<f64>> {
    let truth = instance.truth.as_ref()?;
    let truth_f: Vec<f64> = truth.iter().map(|t| t.to_f64().unwrap()).collect();
    let m = instance.var_count();
    let per_dim = (grid_points as f64).powf(1.0 / m as f64).max(3.0) as usize;
    let half_width = 3.0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx = vec![0usize; m];
    loop {
        let cand: Vec<f64> = (0..m)
            .map(|d| truth_f[d] - half_width + 2.0 * half_width * idx[d] as f64 / (per_dim - 1) as f64)
            .collect();
        if (cand[i] - truth_f[i]).abs() >= 0.5 {
            let res = f64_residual(&instance.a, &instance.b, &cand, instance.degree);
            if best.as_ref().map_or(true, |(b, _)| res < *b) {
                best = Some((res, cand));
            }
        }
        // odometer increment
        let mut d = 0;
        loop {
            if d == m {
                let (_, seed) = best?;
                let polished = polish(&instance.a, &instance.b, &seed, instance.degree);
                let res = f64_residual(&instance.a, &instance.b, &polished, instance.degree);
                if res <= 1e-9 && (polished[i] - truth_f[i]).abs() >= 1e-6 {
                    return Some(polished);
                }
                return None;
            }
            idx[d] += 1;
            if idx[d] < per_dim {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Independent oracle: decides identifiability of variable `i` by direct
/// enumeration. For the affine case each grid value of `x_i` is tested for
/// exact rational feasibility against the system; for higher degrees the
/// full grid is enumerated on the residual.
pub fn brute_force_verdict(
    instance: &CollusionInstance,
    i: usize,
    per_dim: usize,
) -> Result<Verdict, AnalysisError> {
    let m = instance.var_count();
    let _r = instance.degree as usize;
    if instance.degree == 1 {
        // feasibility of [A; e_i'] z = [b; alpha] for each candidate alpha
        let mut aug_rows: Vec<Vec<BigRational>> = (0..instance.a.rows())
            .map(|row| (0..m).map(|c| instance.a.at(row, c).clone()).collect())
            .collect();
        let mut e_row = vec![BigRational::zero(); m];
        e_row[i] = BigRational::one();
        aug_rows.push(e_row);
        let aug = RatMatrix::from_rows(aug_rows);
        let aug_pinv = aug.pinv();
        let center = instance.particular()[i].clone();
        let mut feasible: Vec<(BigRational, Vec<BigRational>)> = Vec::new();
        for step in 0..per_dim as i64 {
            let offset = BigRational::from_integer(BigInt::from(step - per_dim as i64 / 2));
            let alpha = &center + offset;
            let mut rhs = instance.b.clone();
            rhs.push(alpha.clone());
            let z = aug_pinv.mul_vec(&rhs);
            if aug.mul_vec(&z) == rhs {
                feasible.push((alpha, z));
            }
        }
        if feasible.is_empty() {
            return Err(AnalysisError::OracleInconclusive);
        }
        let first = &feasible[0].0;
        if feasible.iter().all(|(alpha, _)| alpha == first) {
            Ok(Verdict::Identified)
        } else {
            let witness = feasible
                .iter()
                .find(|(alpha, _)| alpha != first)
                .map(|(_, z)| z.iter().map(|v| v.to_f64().unwrap()).collect())
                .expect("a second feasible value exists");
            Ok(Verdict::NotIdentified { witness })
        }
    } else {
        let truth = instance
            .truth
            .as_ref()
            .ok_or(AnalysisError::OracleInconclusive)?;
        let truth_f: Vec<f64> = truth.iter().map(|t| t.to_f64().unwrap()).collect();
        let mut solutions: Vec<Vec<f64>> = Vec::new();
        let half_width = 3.0;
        let mut idx = vec![0usize; m];
        loop {
            let cand: Vec<f64> = (0..m)
                .map(|d| {
                    truth_f[d] - half_width
                        + 2.0 * half_width * idx[d] as f64 / (per_dim - 1) as f64
                })
                .collect();
            let polished = polish(&instance.a, &instance.b, &cand, instance.degree);
            if f64_residual(&instance.a, &instance.b, &polished, instance.degree) <= 1e-9 {
                solutions.push(polished);
            }
            let mut d = 0;
            loop {
                if d == m {
                    if solutions.is_empty() {
                        return Err(AnalysisError::OracleInconclusive);
                    }
                    let xi0 = solutions[0][i];
                    return Ok(
                        match solutions.iter().find(|s| (s[i] - xi0).abs() > 1e-6) {
                            None => Verdict::Identified,
                            Some(w) => Verdict::NotIdentified { witness: w.clone() },
                        },
                    );
                }
                idx[d] += 1;
                if idx[d] < per_dim {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{decompose, Monomial};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn pinv_of_invertible_matches_inverse() {
        let a = RatMatrix::from_i64(&[&[1, 1], &[1, -1]]);
        let p = a.pinv();
        assert_eq!(a.mul(&p), RatMatrix::identity(2));
        assert!(projector(&a).is_zero());
    }

    #[test]
    fn pinv_of_row_vector() {
        // pinv([1 1]) = [1/2; 1/2]
        let a = RatMatrix::from_i64(&[&[1, 1]]);
        let p = a.pinv();
        assert_eq!(*p.at(0, 0), rat(1, 2));
        assert_eq!(*p.at(1, 0), rat(1, 2));
        let pi = projector(&a);
        assert_eq!(*pi.at(0, 0), rat(1, 2));
        assert_eq!(*pi.at(0, 1), rat(-1, 2));
    }

    #[test]
    fn zero_matrix_projector_is_identity() {
        let a = RatMatrix::zeros(2, 3);
        assert_eq!(projector(&a), RatMatrix::identity(3));
    }

    fn random_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> RatMatrix {
        RatMatrix::from_rows(
            (0..rows)
                .map(|_| {
                    (0..cols)
                        .map(|_| rat(rng.gen_range(-5..=5), rng.gen_range(1..=4)))
                        .collect()
                })
                .collect(),
        )
    }

    #[test]
    fn projector_identities_on_random_matrices() {
        let mut rng = ChaCha20Rng::seed_from_u64(0x9a9a);
        for _ in 0..25 {
            let rows = rng.gen_range(1..=4);
            let cols = rng.gen_range(1..=4);
            let a = random_matrix(&mut rng, rows, cols);
            let pi = projector(&a);
            assert_eq!(pi.mul(&pi), pi, "projector must be idempotent");
            assert!(a.mul(&pi).is_zero(), "projector must kill the row space");
            assert_eq!(pi.transpose(), pi, "projector must be symmetric");
            // four Penrose identities for the pseudoinverse itself
            let p = a.pinv();
            assert_eq!(a.mul(&p).mul(&a), a);
            assert_eq!(p.mul(&a).mul(&p), p);
            assert_eq!(a.mul(&p).transpose(), a.mul(&p));
            assert_eq!(p.mul(&a).transpose(), p.mul(&a));
        }
    }

    fn affine_instance(rows: &[&[i64]], truth: &[i64]) -> CollusionInstance {
        let m = truth.len();
        CollusionInstance::from_truth(
            RatMatrix::from_i64(rows),
            1,
            (1..=m as u32).map(AgentId).collect(),
            truth.iter().map(|t| rat(*t, 1)).collect(),
        )
    }

    #[test]
    fn independent_affine_queries_identify_both() {
        let inst = affine_instance(&[&[1, 1], &[1, -1]], &[3, 5]);
        assert_eq!(check_affine(&inst, 0), Verdict::Identified);
        assert_eq!(check_affine(&inst, 1), Verdict::Identified);
    }

    #[test]
    fn repeated_affine_query_identifies_neither() {
        let inst = affine_instance(&[&[1, 1], &[1, 1]], &[3, 5]);
        for i in 0..2 {
            let Verdict::NotIdentified { witness } = check_affine(&inst, i) else {
                panic!("sum-only observations cannot pin down either value");
            };
            // witness satisfies the system and moves coordinate i
            let w: Vec<BigRational> = witness
                .iter()
                .map(|v| BigRational::from_float(*v).unwrap())
                .collect();
            assert_eq!(inst.a.mul_vec(&w), inst.b);
            assert!((witness[i] - [3.0, 5.0][i]).abs() >= 1e-6);
        }
    }

    #[test]
    fn affine_checker_agrees_with_brute_force() {
        let mut rng = ChaCha20Rng::seed_from_u64(0xbf);
        for trial in 0..20 {
            let n = rng.gen_range(1..=4);
            let m = rng.gen_range(1..=4);
            let a = RatMatrix::from_rows(
                (0..n)
                    .map(|_| (0..m).map(|_| rat(rng.gen_range(-2..=2), 1)).collect())
                    .collect(),
            );
            let truth: Vec<BigRational> = (0..m).map(|_| rat(rng.gen_range(-3..=3), 1)).collect();
            let inst = CollusionInstance::from_truth(
                a,
                1,
                (1..=m as u32).map(AgentId).collect(),
                truth,
            );
            for i in 0..m {
                let fast = check_affine(&inst, i);
                let slow = brute_force_verdict(&inst, i, 7).unwrap();
                let agree = matches!(
                    (&fast, &slow),
                    (Verdict::Identified, Verdict::Identified)
                        | (Verdict::NotIdentified { .. }, Verdict::NotIdentified { .. })
                );
                assert!(agree, "disagreement on trial {trial} var {i}: {fast:?} vs {slow:?}");
            }
        }
    }

    #[test]
    fn general_certificate_identifies() {
        // two independent quadratic observations of one variable:
        // rows pin down both moments
        let a = RatMatrix::from_i64(&[&[1, 0], &[0, 1]]);
        let inst = CollusionInstance::from_truth(a, 2, vec![AgentId(1)], vec![rat(2, 1)]);
        assert_eq!(check_general(&inst, 0, 100), Verdict::Identified);
    }

    #[test]
    fn moment_curve_crossing_is_not_identified() {
        // single observation of x + x^2: alpha and -(1+alpha) share it
        let a = RatMatrix::from_i64(&[&[1, 1]]);
        let inst = CollusionInstance::from_truth(a, 2, vec![AgentId(1)], vec![rat(1, 1)]);
        let Verdict::NotIdentified { witness } = check_general(&inst, 0, 200) else {
            panic!("x + x^2 = 2 has the second root -2");
        };
        assert!((witness[0] - (-2.0)).abs() < 1e-6);
    }

    #[test]
    fn unknown_when_falsifier_finds_nothing() {
        // x^2 alone: sign of x is lost, but the grid keeps within the box of
        // the true value; certificate fails, falsifier finds -x*
        let a = RatMatrix::from_i64(&[&[0, 1]]);
        let inst = CollusionInstance::from_truth(a, 2, vec![AgentId(1)], vec![rat(1, 1)]);
        match check_general(&inst, 0, 200) {
            Verdict::NotIdentified { witness } => {
                assert!((witness[0] + 1.0).abs() < 1e-6);
            }
            v => panic!("expected the mirrored root, got {v:?}"),
        }
    }

    #[test]
    fn build_system_affine_single_query() {
        // corrupt agent 1 queries x1 + x2 (owner part x1 known)
        let monomials = vec![
            Monomial::from_f64(1.0, &[(1, 1)]),
            Monomial::from_f64(1.0, &[(2, 1)]),
            Monomial::from_f64(1.0, &[(3, 1)]),
        ];
        let spec = decompose(&monomials, AgentId(1), &(2..=3).map(AgentId).collect()).unwrap();
        let corrupt = [(AgentId(1), rat(2, 1))].into_iter().collect();
        let inst = build_system(&[spec], &corrupt, &[rat(7, 1)]).unwrap();
        assert_eq!(inst.degree, 1);
        assert_eq!(inst.a.rows(), 1);
        assert_eq!(inst.a.cols(), 2);
        assert_eq!(*inst.a.at(0, 0), rat(1, 1));
        assert_eq!(*inst.a.at(0, 1), rat(1, 1));
        // b = 7 - x1 = 5
        assert_eq!(inst.b[0], rat(5, 1));
    }

    #[test]
    fn build_system_folds_corrupt_product_factors() {
        // query of corrupt 1 over corrupt 2 and noncorrupt 3:
        // x1 * x2 * x3^2 -> row coefficient xi = x1*x2 on the x3^2 column
        let monomials = vec![Monomial::from_f64(1.0, &[(1, 1), (2, 1), (3, 2)])];
        let spec = decompose(&monomials, AgentId(1), &(2..=3).map(AgentId).collect()).unwrap();
        let corrupt: BTreeMap<AgentId, BigRational> =
            [(AgentId(1), rat(2, 1)), (AgentId(2), rat(3, 1))].into_iter().collect();
        let inst = build_system(&[spec], &corrupt, &[rat(24, 1)]).unwrap();
        assert_eq!(inst.degree, 2);
        assert_eq!(inst.noncorrupt, vec![AgentId(3)]);
        assert_eq!(*inst.a.at(0, 0), rat(0, 1));
        assert_eq!(*inst.a.at(0, 1), rat(6, 1)); // xi = 2*3
        assert_eq!(inst.b[0], rat(24, 1));
    }

    #[test]
    fn build_system_rejects_two_noncorrupt_product_variables() {
        let monomials = vec![Monomial::from_f64(1.0, &[(1, 1), (2, 1), (3, 1)])];
        let spec = decompose(&monomials, AgentId(1), &(2..=3).map(AgentId).collect()).unwrap();
        let corrupt = [(AgentId(1), rat(1, 1))].into_iter().collect();
        assert!(matches!(
            build_system(&[spec], &corrupt, &[rat(0, 1)]),
            Err(AnalysisError::StructureViolation(_))
        ));
    }

    #[test]
    fn more_unknowns_than_observations_leaves_someone_hidden() {
        let mut rng = ChaCha20Rng::seed_from_u64(0x11);
        for _ in 0..10 {
            let n = 2;
            let m = 3;
            let a = random_matrix(&mut rng, n, m);
            let truth: Vec<BigRational> = (0..m).map(|_| rat(rng.gen_range(-3..=3), 1)).collect();
            let inst = CollusionInstance::from_truth(
                a,
                1,
                (1..=m as u32).map(AgentId).collect(),
                truth,
            );
            let hidden = (0..m)
                .any(|i| matches!(check_affine(&inst, i), Verdict::NotIdentified { .. }));
            assert!(hidden, "rank at most {n} cannot identify all {m} variables");
        }
    }
}
