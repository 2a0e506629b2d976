//! Binary quadratic and fractional programs over `δ ∈ {−1, 1}ᴺ`.
//!
//! The production solver is a depth-first branch-and-bound directly on `δ`.
//! The 0/1 linearization with McCormick products is kept as an independent
//! cross-check, with its own branch-and-bound over `υ`.

use crate::linalg::CMat;
use crate::{Error, Result};

/// Default largest `N` the exact solver accepts.
pub const DEFAULT_SOLVE_CAP: usize = 24;

/// `δᴴRδ = Σ r_ii + Σ_{i>j} 2Re(r_ij) δ_i δ_j` for Hermitian `R`.
///
/// Every solver scores candidates with this function so that values from
/// different solvers are bitwise comparable.
pub fn objective(r: &CMat, delta: &[i8]) -> f64 {
    let n = delta.len();
    let mut v: f64 = (0..n).map(|i| r[(i, i)].re).sum();
    for i in 0..n {
        for j in 0..i {
            v += 2.0 * r[(i, j)].re * f64::from(delta[i] * delta[j]);
        }
    }
    v
}

fn check_square(r: &CMat) -> Result<()> {
    if !r.is_square() {
        return Err(Error::Domain(format!("matrix is {:?}, expected square", r.shape())));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    Ok(())
}

fn sign_vector(bits: u64, n: usize) -> Vec<i8> {
    (0..n).map(|i| if bits >> i & 1 == 1 { -1 } else { 1 }).collect()
}

/// Exhaustive maximization over the `2ᴺ⁻¹` vectors with `δ_1 = +1`. Ties go to
/// the earliest vector in enumeration order, which starts at all ones.
pub fn brute_force_max(r: &CMat) -> Result<(Vec<i8>, f64)> {
    check_square(r)?;
    let n = r.nrows();
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    if n > 30 {
        return Err(Error::SolveCap { n, cap: 30 });
    }
    let mut best = (sign_vector(0, n), objective(r, &sign_vector(0, n)));
    for bits in 1..(1u64 << (n - 1)) {
        let d = sign_vector(bits << 1, n);
        let v = objective(r, &d);
        if v > best.1 {
            best = (d, v);
        }
    }
    Ok(best)
}

struct Search {
    n: usize,
    /// `w[i][j] = 2Re(r_ij)` for `i > j`.
    w: Vec<Vec<f64>>,
    /// `tail[k] = Σ |w_ij|` over pairs with both indices `≥ k`.
    tail: Vec<f64>,
    slack: f64,
    best_delta: Vec<i8>,
    best_value: f64,
    nodes: u64,
}

impl Search {
    fn dfs(&mut self, r: &CMat, k: usize, delta: &mut Vec<i8>, fixed: f64, lin: &mut [f64]) {
        self.nodes += 1;
        if k == self.n {
            let v = objective(r, delta);
            if v > self.best_value {
                self.best_value = v;
                self.best_delta = delta.clone();
            }
            return;
        }
        let bound = fixed + lin[k..].iter().map(|l| l.abs()).sum::<f64>() + self.tail[k];
        if bound < self.best_value - self.slack {
            return;
        }
        for s in [1i8, -1] {
            delta.push(s);
            let sf = f64::from(s);
            for i in k + 1..self.n {
                lin[i] += self.w[i][k] * sf;
            }
            self.dfs(r, k + 1, delta, fixed + lin[k] * sf, lin);
            for i in k + 1..self.n {
                lin[i] -= self.w[i][k] * sf;
            }
            delta.pop();
        }
    }
}

/// Exact maximizer of `δᴴRδ` with `δ_1 = +1`, refusing `N > cap`.
pub fn quad_binary_max_capped(r: &CMat, cap: usize) -> Result<(Vec<i8>, f64)> {
    check_square(r)?;
    let n = r.nrows();
    if n > cap {
        return Err(Error::SolveCap { n, cap });
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let w: Vec<Vec<f64>> = (0..n).map(|i| (0..i).map(|j| 2.0 * r[(i, j)].re).collect()).collect();
    let mut tail = vec![0.0; n + 1];
    for k in (0..n).rev() {
        tail[k] = tail[k + 1] + (k + 1..n).map(|i| w[i][k].abs()).sum::<f64>();
    }
    let diag: f64 = (0..n).map(|i| r[(i, i)].re).sum();
    let ones = vec![1i8; n];
    let scale = diag.abs() + tail[0];
    let mut search =
        Search { n, slack: 1e-9 * scale, best_value: objective(r, &ones), best_delta: ones, w, tail, nodes: 0 };
    let mut lin = vec![0.0; n];
    for i in 1..n {
        lin[i] = search.w[i][0];
    }
    let mut delta = vec![1i8];
    search.dfs(r, 1, &mut delta, diag, &mut lin);
    Ok((search.best_delta, search.best_value))
}

/// [`quad_binary_max_capped`] with the default cap.
pub fn quad_binary_max(r: &CMat) -> Result<(Vec<i8>, f64)> {
    quad_binary_max_capped(r, DEFAULT_SOLVE_CAP)
}

/// `max δᴴΞ₁δ / δᴴΞ₂δ` over sign vectors.
#[derive(Debug, Clone)]
pub struct RatioProblem {
    pub xi1: CMat,
    pub xi2: CMat,
}

impl RatioProblem {
    /// Checks shapes, Hermitian symmetry and positive definiteness of `Ξ₂`.
    pub fn new(xi1: CMat, xi2: CMat) -> Result<Self> {
        let prob = Self::new_semidefinite(xi1, xi2)?;
        let eig = nalgebra::SymmetricEigen::new(prob.xi2.clone()).eigenvalues;
        if eig.min() <= 1e-14 * eig.amax() {
            return Err(Error::Domain("Xi2 is not positive definite".into()));
        }
        Ok(prob)
    }

    /// Like [`RatioProblem::new`] but only requires `Ξ₂ ⪰ 0`. The echo model has
    /// rank-deficient `Ξ₂` when `N > ML`, yet `δᴴΞ₂δ > 0` for sign vectors with
    /// probability one; a vanishing denominator is reported when met.
    pub fn new_semidefinite(xi1: CMat, xi2: CMat) -> Result<Self> {
        check_square(&xi1)?;
        check_square(&xi2)?;
        if xi1.shape() != xi2.shape() {
            return Err(Error::Domain("Xi1 and Xi2 differ in size".into()));
        }
        for (name, x) in [("Xi1", &xi1), ("Xi2", &xi2)] {
            let asym = (x - x.adjoint()).norm();
            if asym > 1e-9 * x.norm().max(f64::MIN_POSITIVE) {
                return Err(Error::Domain(format!("{name} is not Hermitian")));
            }
        }
        let eig = nalgebra::SymmetricEigen::new(xi2.clone()).eigenvalues;
        if eig.min() < -1e-9 * eig.amax() {
            return Err(Error::Domain("Xi2 is not positive semidefinite".into()));
        }
        Ok(Self { xi1, xi2 })
    }

    pub fn ratio(&self, delta: &[i8]) -> f64 {
        objective(&self.xi1, delta) / objective(&self.xi2, delta)
    }
}

#[derive(Debug, Clone)]
pub struct DinkelbachResult {
    pub delta: Vec<i8>,
    pub ratio: f64,
    /// `y⁽⁰⁾, y⁽¹⁾, …`.
    pub y_trace: Vec<f64>,
    pub converged: bool,
}

/// Dinkelbach iterations with exact inner solves.
///
/// Stops once the parametric optimum `max δᴴ(Ξ₁ − yΞ₂)δ` is within
/// `tol · |y| · δᴴΞ₂δ` of zero or the ratio gain falls below `tol · |y|`, so
/// the rule is invariant to rescaling `Ξ₁`.
pub fn dinkelbach_solve(
    prob: &RatioProblem,
    delta_init: Option<&[i8]>,
    tol: f64,
    max_iters: usize,
) -> Result<DinkelbachResult> {
    let n = prob.xi1.nrows();
    let mut delta: Vec<i8> = match delta_init {
        Some(d) if d.len() == n => d.to_vec(),
        Some(d) => return Err(Error::Domain(format!("initial vector has length {}, expected {n}", d.len()))),
        None => vec![1; n],
    };
    if delta.first() == Some(&-1) {
        delta.iter_mut().for_each(|s| *s = -*s);
    }
    let denom_floor = 1e-13 * prob.xi2.norm();
    if objective(&prob.xi2, &delta) <= denom_floor {
        return Err(Error::Degenerate("initial sign vector has zero denominator".into()));
    }
    let mut y = prob.ratio(&delta);
    let mut trace = vec![y];
    let mut converged = false;
    for _ in 0..max_iters {
        let r = &prob.xi1 - prob.xi2.scale(y);
        let (cand, f) = quad_binary_max(&r)?;
        let denom = objective(&prob.xi2, &cand);
        if f <= tol * (y.abs() * denom.abs()).max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        if denom <= denom_floor {
            // The inner optimum sits on a null direction of Ξ₂; stop at the incumbent.
            converged = true;
            break;
        }
        let y_new = prob.ratio(&cand);
        if !y_new.is_finite() {
            return Err(Error::Numerical("ratio is not finite".into()));
        }
        if y_new <= y {
            // Rounding stalled the ascent; keep the incumbent.
            converged = true;
            break;
        }
        let gain = y_new - y;
        delta = cand;
        y = y_new;
        trace.push(y);
        if gain < tol * y.abs() {
            converged = true;
            break;
        }
    }
    Ok(DinkelbachResult { delta, ratio: y, y_trace: trace, converged })
}

/// 0/1 form of `max δᴴRδ` with `δ_i = 2υ_i − 1` and products `υ_ij` linked by
/// `υ_ij ≤ υ_i`, `υ_ij ≤ υ_j`, `υ_ij ≥ υ_i + υ_j − 1`.
#[derive(Debug, Clone)]
pub struct IlpInstance {
    pub n: usize,
    /// `(i, j, Re r_ij)` for every `i > j`.
    pub pairs: Vec<(usize, usize, f64)>,
    /// `Σ r_ii + Σ_{i>j} 2Re r_ij`, dropped from the linear objective.
    pub constant: f64,
}

pub fn linearize(r: &CMat) -> Result<IlpInstance> {
    check_square(r)?;
    let n = r.nrows();
    let mut pairs = Vec::new();
    let mut constant: f64 = (0..n).map(|i| r[(i, i)].re).sum();
    for i in 0..n {
        for j in 0..i {
            pairs.push((i, j, r[(i, j)].re));
            constant += 2.0 * r[(i, j)].re;
        }
    }
    Ok(IlpInstance { n, pairs, constant })
}

/// Binary triples `(υ_i, υ_j, υ_ij)` allowed by the linking constraints.
pub const MCCORMICK_FEASIBLE: [(u8, u8, u8); 4] = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 1)];

impl IlpInstance {
    pub fn feasible(ui: u8, uj: u8, uij: u8) -> bool {
        ui <= 1 && uj <= 1 && uij <= 1 && uij <= ui && uij <= uj && uij + 1 >= ui + uj
    }

    fn pair_term(w: f64, ui: u8, uj: u8, uij: u8) -> f64 {
        8.0 * w * f64::from(uij) - 4.0 * w * f64::from(ui + uj)
    }

    /// Linear objective at binary `υ` with products set to the forced values.
    pub fn evaluate(&self, u: &[u8]) -> f64 {
        self.pairs.iter().map(|&(i, j, w)| Self::pair_term(w, u[i], u[j], u[i] & u[j])).sum()
    }

    /// Upper bound on one pair's term given the fixed prefix `u[..k]`.
    fn pair_bound(w: f64, i: usize, j: usize, u: &[u8], k: usize) -> f64 {
        MCCORMICK_FEASIBLE
            .iter()
            .filter(|&&(a, b, _)| (i >= k || u[i] == a) && (j >= k || u[j] == b))
            .map(|&(a, b, c)| Self::pair_term(w, a, b, c))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn bnb(&self, k: usize, u: &mut Vec<u8>, best: &mut (Vec<u8>, f64), slack: f64) {
        if k == self.n {
            let v = self.evaluate(u);
            if v > best.1 {
                *best = (u.clone(), v);
            }
            return;
        }
        let bound: f64 = self.pairs.iter().map(|&(i, j, w)| Self::pair_bound(w, i, j, u, k)).sum();
        if bound < best.1 - slack {
            return;
        }
        for bit in [1u8, 0] {
            u.push(bit);
            self.bnb(k + 1, u, best, slack);
            u.pop();
        }
    }

    /// Exact ILP optimum `(υ*, linear value)` with `υ_1 = 1`.
    pub fn solve(&self) -> (Vec<u8>, f64) {
        if self.n == 0 {
            return (Vec::new(), 0.0);
        }
        let ones = vec![1u8; self.n];
        let mut best = (ones.clone(), self.evaluate(&ones));
        let slack = 1e-9 * self.pairs.iter().map(|p| 8.0 * p.2.abs()).sum::<f64>();
        let mut u = vec![1u8];
        self.bnb(1, &mut u, &mut best, slack);
        best
    }

    /// ILP optimum mapped back to `(δ*, δ*ᴴRδ*)`.
    pub fn solve_quadratic(&self) -> (Vec<i8>, f64) {
        let (u, v) = self.solve();
        (u.iter().map(|&b| 2 * b as i8 - 1).collect(), v + self.constant)
    }
}
