//! Joint waveform and IRS phase design for the next localization cycle.
//!
//! The objective is the belief-weighted sum of pairwise distances between the
//! hypotheses' expected echoes. With per-hypothesis `W_k = diag(a_k) Ĝ_k` and
//! `v_k = W_k x`, each pair term is a trace in the lifted variable `Q = θθᴴ`:
//!
//! ```text
//! ‖s_k − s_l‖² ∝ Σ_{u,w ∈ {k,l}} c_uw tr(Qᴴ A_uw Q B_uw),
//! A_uw = W_w* W_uᵀ,   B_uw = conj(v_w) v_uᵀ.
//! ```
//!
//! The unit-modulus `Q` is decoupled from `θ` by the penalty
//! `‖Q − θθᴴ‖²_F / (4ρ)` and the three blocks `(Q, x, θ)` are updated in turn
//! with exact closed forms. `ρ` shrinks geometrically until the lifting is
//! closed.

use std::io::Write;

use num_complex::Complex64;

use crate::linalg::{dominant_eigenpair, hermitian_part, CMat, CVec, ZERO};
use crate::localize::{BeliefState, HypothesisGrid};
use crate::{Error, Result};

/// One hypothesis as seen by the optimizer.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub steering: CVec,
    /// Sign-resolved channel `diag(δ̂) Ĝ`, `N × M`.
    pub channel: CMat,
    pub alpha: Complex64,
}

/// Everything the distance depends on apart from `(Q, x)`.
#[derive(Debug, Clone)]
pub struct DistanceContext {
    pub hypotheses: Vec<Hypothesis>,
    /// `β_kl = p_k p_l`.
    pub beta: Vec<Vec<f64>>,
    pub snapshots: usize,
    pub sigma2: f64,
    w: Vec<CMat>,
    /// `A_kl` at index `k·I + l`.
    a: Vec<CMat>,
}

impl DistanceContext {
    pub fn new(hypotheses: Vec<Hypothesis>, probs: &[f64], snapshots: usize, sigma2: f64) -> Result<Self> {
        if hypotheses.len() != probs.len() || hypotheses.is_empty() {
            return Err(Error::Domain(format!("{} hypotheses but {} probabilities", hypotheses.len(), probs.len())));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("probabilities must form a simplex".into()));
        }
        let n = hypotheses[0].steering.len();
        if hypotheses.iter().any(|h| h.steering.len() != n || h.channel.nrows() != n) {
            return Err(Error::Domain("hypotheses disagree on the IRS size".into()));
        }
        let w: Vec<CMat> = hypotheses
            .iter()
            .map(|h| {
                let mut w = h.channel.clone();
                for (r, s) in h.steering.iter().enumerate() {
                    for c in 0..w.ncols() {
                        w[(r, c)] *= s;
                    }
                }
                w
            })
            .collect();
        let count = hypotheses.len();
        let mut a = Vec::with_capacity(count * count);
        for k in 0..count {
            for l in 0..count {
                a.push(w[l].map(|v| v.conj()) * w[k].transpose());
            }
        }
        let beta = probs.iter().map(|p| probs.iter().map(|q| p * q).collect()).collect();
        Ok(Self { hypotheses, beta, snapshots, sigma2, w, a })
    }

    /// Builds the context from the current beliefs and sign estimates.
    pub fn from_belief(
        grid: &HypothesisGrid,
        g_hat: &CMat,
        belief: &BeliefState,
        snapshots: usize,
        sigma2: f64,
    ) -> Result<Self> {
        let hypotheses = grid
            .steering
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let mut channel = g_hat.clone();
                for (n, &s) in belief.delta[k].iter().enumerate() {
                    if s < 0 {
                        channel.row_mut(n).neg_mut();
                    }
                }
                Hypothesis { steering: a.clone(), channel, alpha: belief.alpha[k] }
            })
            .collect();
        Self::new(hypotheses, &belief.probs, snapshots, sigma2)
    }

    pub fn n(&self) -> usize {
        self.hypotheses[0].steering.len()
    }

    pub fn m(&self) -> usize {
        self.hypotheses[0].channel.ncols()
    }

    pub fn count(&self) -> usize {
        self.hypotheses.len()
    }

    /// `L/σ²`, or `L` in the noiseless limit.
    pub fn scale(&self) -> f64 {
        let l = self.snapshots as f64;
        if self.sigma2 > 0.0 {
            l / self.sigma2
        } else {
            l
        }
    }

    pub fn a_matrix(&self, k: usize, l: usize) -> &CMat {
        &self.a[k * self.count() + l]
    }

    /// Coefficient of `tr(QᴴA_klQB_kl)` in the weighted sum, before scaling.
    pub fn weight(&self, k: usize, l: usize) -> Complex64 {
        let h = &self.hypotheses;
        if k == l {
            let b: f64 = (0..self.count()).filter(|&j| j != k).map(|j| self.beta[k][j]).sum();
            Complex64::new(b * h[k].alpha.norm_sqr(), 0.0)
        } else {
            -h[k].alpha * h[l].alpha.conj() * self.beta[k][l]
        }
    }

    fn v(&self, x: &CVec) -> Vec<CVec> {
        self.w.iter().map(|w| w * x).collect()
    }

    /// `tr(Qᴴ A_kl Q B_kl)` with `B_kl = conj(v_l) v_kᵀ`.
    fn trace_term(&self, q: &CMat, v: &[CVec], k: usize, l: usize) -> Complex64 {
        let z = self.a_matrix(k, l) * (q * v[l].map(|c| c.conj()));
        v[k].dot(&(q.adjoint() * z))
    }

    /// `φ_ij` in the lifted form.
    pub fn pair_distance(&self, q: &CMat, x: &CVec, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let v = self.v(x);
        self.pair_distance_v(q, &v, i, j)
    }

    fn pair_distance_v(&self, q: &CMat, v: &[CVec], i: usize, j: usize) -> f64 {
        let (ai, aj) = (self.hypotheses[i].alpha, self.hypotheses[j].alpha);
        let tii = self.trace_term(q, v, i, i).re;
        let tjj = self.trace_term(q, v, j, j).re;
        let tij = self.trace_term(q, v, i, j);
        self.scale() * (ai.norm_sqr() * tii - 2.0 * (ai * aj.conj() * tij).re + aj.norm_sqr() * tjj)
    }

    /// `Σ_{i<j} β_ij φ_ij`.
    pub fn weighted_distance(&self, q: &CMat, x: &CVec) -> f64 {
        let v = self.v(x);
        let mut total = 0.0;
        for i in 0..self.count() {
            for j in i + 1..self.count() {
                if self.beta[i][j] != 0.0 {
                    total += self.beta[i][j] * self.pair_distance_v(q, &v, i, j);
                }
            }
        }
        total
    }

    /// Weighted distance at the feasible point `Q = θθᴴ`.
    pub fn distance_at(&self, theta: &CVec, x: &CVec) -> f64 {
        self.weighted_distance(&(theta * theta.adjoint()), x)
    }

    fn active_pairs(&self) -> Vec<(usize, usize, Complex64)> {
        let mut out = Vec::new();
        for k in 0..self.count() {
            for l in 0..self.count() {
                let w = self.weight(k, l) * self.scale();
                if w != ZERO {
                    out.push((k, l, w));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub q: CMat,
    pub theta: CVec,
    pub x: CVec,
    pub rho: f64,
}

impl OptimizerState {
    /// Feasible start `Q = θθᴴ`.
    pub fn new(theta: CVec, x: CVec, rho: f64) -> Self {
        let q = &theta * theta.adjoint();
        Self { q, theta, x, rho }
    }

    /// `ξ = (N² − Re θᴴQθ) / N²`.
    pub fn violation(&self) -> f64 {
        let n2 = (self.theta.len() * self.theta.len()) as f64;
        (n2 - self.theta.dotc(&(&self.q * &self.theta)).re) / n2
    }

    /// `‖Q − θθᴴ‖²_F`.
    pub fn lifting_gap(&self) -> f64 {
        (&self.q - &self.theta * self.theta.adjoint()).norm_squared()
    }

    /// Penalized objective `D(Q, x) − ‖Q − θθᴴ‖²_F / (4ρ)`.
    pub fn penalized(&self, ctx: &DistanceContext) -> f64 {
        ctx.weighted_distance(&self.q, &self.x) - self.lifting_gap() / (4.0 * self.rho)
    }
}

/// Which block an update touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    QEntry(usize, usize),
    Waveform,
    ThetaEntry(usize),
}

/// One row-major sweep of exact phase updates over every entry of `Q`.
pub fn update_q(state: &mut OptimizerState, ctx: &DistanceContext, observe: &mut dyn FnMut(Step, &OptimizerState)) {
    let n = state.theta.len();
    let v = ctx.v(&state.x);
    let vc: Vec<CVec> = v.iter().map(|u| u.map(|c| c.conj())).collect();
    let pairs = ctx.active_pairs();
    // z_kl = A_kl Q conj(v_l), kept current as Q changes
    let mut z: Vec<CVec> = pairs.iter().map(|&(k, l, _)| ctx.a_matrix(k, l) * (&state.q * &vc[l])).collect();
    let pen = 1.0 / (4.0 * state.rho);
    for m in 0..n {
        for col in 0..n {
            let q = state.q[(m, col)];
            let mut u = ZERO;
            for (idx, &(k, l, w)) in pairs.iter().enumerate() {
                let a_mm = ctx.a_matrix(k, l)[(m, m)];
                u += w * v[k][col] * (z[idx][m] - q * a_mm * vc[l][col]);
            }
            let target = u + state.theta[m] * state.theta[col].conj() * pen;
            let mag = target.norm();
            if !(mag > 0.0 && mag.is_finite()) {
                continue;
            }
            let q_new = target / mag;
            let delta = q_new - q;
            if delta != ZERO {
                for (idx, &(k, l, _)) in pairs.iter().enumerate() {
                    let s = delta * vc[l][col];
                    z[idx].axpy(s, &ctx.a_matrix(k, l).column(m), Complex64::new(1.0, 0.0));
                }
                state.q[(m, col)] = q_new;
            }
            observe(Step::QEntry(m, col), state);
        }
    }
}

/// `Z` such that the weighted distance equals `xᴴ Z x` for the current `Q`.
pub fn waveform_matrix(q: &CMat, ctx: &DistanceContext) -> CMat {
    let mut z = CMat::zeros(ctx.m(), ctx.m());
    for (k, l, w) in ctx.active_pairs() {
        let core = q.adjoint() * ctx.a_matrix(k, l) * q;
        z += (ctx.w[l].adjoint() * core.transpose() * &ctx.w[k]) * w;
    }
    z
}

/// `x ← sqrt(P_b) ·` dominant eigenvector of `Herm(Z)`, kept only if it does
/// not lower `xᴴZx`.
pub fn update_x(state: &mut OptimizerState, ctx: &DistanceContext, power: f64) -> Result<()> {
    let z = hermitian_part(&waveform_matrix(&state.q, ctx));
    if z.iter().all(|v| *v == ZERO) {
        return Ok(());
    }
    let (lambda, u) = dominant_eigenpair(&z)?;
    let candidate = u.scale(power.sqrt());
    let old = state.x.dotc(&(&z * &state.x)).re;
    if power * lambda >= old {
        state.x = candidate;
    }
    Ok(())
}

/// Coordinate-wise maximization of `θᴴPθ`, `P = (Q + Qᴴ)/2`.
pub fn update_theta(state: &mut OptimizerState, observe: &mut dyn FnMut(Step, &OptimizerState)) {
    let p = hermitian_part(&state.q);
    for m in 0..state.theta.len() {
        let s = p.row(m).transpose().dot(&state.theta) - p[(m, m)] * state.theta[m];
        let mag = s.norm();
        if mag > 0.0 && mag.is_finite() {
            state.theta[m] = s / mag;
        }
        observe(Step::ThetaEntry(m), state);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerParams {
    pub power: f64,
    /// Initial penalty; `None` selects `N² / (4 (D₀ + ε))`.
    pub rho0: Option<f64>,
    pub c_pen: f64,
    pub eps: f64,
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl OptimizerParams {
    pub fn new(power: f64) -> Self {
        Self { power, rho0: None, c_pen: 0.5, eps: 1e-7, inner_tol: 1e-6, max_outer: 60, max_inner: 100 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c_pen > 0.0 && self.c_pen < 1.0) {
            return Err(Error::Config(format!("c_pen must lie in (0, 1), got {}", self.c_pen)));
        }
        if !(self.eps > 0.0) || !(self.inner_tol >= 0.0) || !(self.power > 0.0) {
            return Err(Error::Config("eps and power must be positive, inner_tol non-negative".into()));
        }
        if let Some(r) = self.rho0 {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("rho0 must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterRecord {
    pub outer: usize,
    pub rho: f64,
    pub xi: f64,
    pub penalized: f64,
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub x: CVec,
    pub theta: CVec,
    /// Violation of the final iterate.
    pub xi: f64,
    pub feasible: bool,
    pub initial_distance: f64,
    /// Weighted distance at the returned `(x, θ)`.
    pub distance: f64,
    /// True when the final iterate was worse than the start and the start was
    /// returned instead.
    pub kept_initial: bool,
    pub final_state: OptimizerState,
    pub trace: Vec<OuterRecord>,
}

/// Penalty BCD from `(x₀, θ₀)`.
pub fn optimize(ctx: &DistanceContext, x0: &CVec, theta0: &CVec, params: &OptimizerParams) -> Result<OptimizeResult> {
    optimize_observed(ctx, x0, theta0, params, &mut |_, _| {})
}

/// [`optimize`] reporting every single block update to `observer`.
pub fn optimize_observed(
    ctx: &DistanceContext,
    x0: &CVec,
    theta0: &CVec,
    params: &OptimizerParams,
    observe: &mut dyn FnMut(Step, &OptimizerState),
) -> Result<OptimizeResult> {
    params.validate()?;
    if x0.len() != ctx.m() || theta0.len() != ctx.n() {
        return Err(Error::Domain("initial point does not match the context".into()));
    }
    let d0 = ctx.distance_at(theta0, x0);
    let n2 = (ctx.n() * ctx.n()) as f64;
    let rho0 = params.rho0.unwrap_or_else(|| if d0 > 0.0 { n2 / (4.0 * d0) } else { 1.0 });
    let mut state = OptimizerState::new(theta0.clone(), x0.clone(), rho0);
    let mut trace = Vec::new();
    let trivial = ctx.active_pairs().is_empty();
    let mut feasible = true;
    if !trivial {
        feasible = false;
        for outer in 0..params.max_outer {
            let mut prev = state.penalized(ctx);
            for _ in 0..params.max_inner {
                update_q(&mut state, ctx, observe);
                update_x(&mut state, ctx, params.power)?;
                observe(Step::Waveform, &state);
                update_theta(&mut state, observe);
                let cur = state.penalized(ctx);
                if !cur.is_finite() {
                    return Err(Error::Numerical("penalized objective is not finite".into()));
                }
                let done = cur - prev <= params.inner_tol * cur.abs();
                prev = cur;
                if done {
                    break;
                }
            }
            let xi = state.violation();
            trace.push(OuterRecord {
                outer,
                rho: state.rho,
                xi,
                penalized: prev,
                distance: ctx.distance_at(&state.theta, &state.x),
            });
            if xi < params.eps {
                feasible = true;
                break;
            }
            state.rho *= params.c_pen;
        }
    }
    let d_final = ctx.distance_at(&state.theta, &state.x);
    let kept_initial = d_final < d0;
    let (x, theta, distance) =
        if kept_initial { (x0.clone(), theta0.clone(), d0) } else { (state.x.clone(), state.theta.clone(), d_final) };
    Ok(OptimizeResult {
        x,
        theta,
        xi: state.violation(),
        feasible,
        initial_distance: d0,
        distance,
        kept_initial,
        final_state: state,
        trace,
    })
}

pub fn write_trace_csv<W: Write>(mut out: W, trace: &[OuterRecord]) -> std::io::Result<()> {
    writeln!(out, "outer,rho,xi,penalized,distance")?;
    for r in trace {
        writeln!(out, "{},{:e},{:e},{:e},{:e}", r.outer, r.rho, r.xi, r.penalized, r.distance)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::diag_vec;
    use crate::localize::{random_phases, random_waveform};
    use crate::rng::{complex_gaussian, rng_from};

    fn random_context(seed: u64, n: usize, m: usize, count: usize, l: usize) -> DistanceContext {
        let mut rng = rng_from(seed, &[0x7770]);
        let hyps = (0..count)
            .map(|_| Hypothesis {
                steering: random_phases(&mut rng, n),
                channel: CMat::from_fn(n, m, |_, _| complex_gaussian(&mut rng, 1.0)),
                alpha: complex_gaussian(&mut rng, 1.0),
            })
            .collect();
        let raw: Vec<f64> = (0..count).map(|i| 1.0 + i as f64).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
        DistanceContext::new(hyps, &probs, l, 0.5).unwrap()
    }

    /// Expected echo under hypothesis `k` by explicit matrix products.
    fn direct_mean(h: &Hypothesis, theta: &CVec, x: &CVec, l: usize) -> CVec {
        let t = diag_vec(theta);
        let xm = CMat::from_fn(x.len(), l, |i, _| x[i]);
        let y = (h.channel.transpose() * &t * &h.steering * h.steering.transpose() * &t * &h.channel * xm) * h.alpha;
        CVec::from_iterator(y.len(), y.iter().copied())
    }

    #[test]
    fn lifted_distance_matches_direct_echo_difference() {
        for seed in 0..10 {
            let ctx = random_context(seed, 6, 3, 3, 8);
            let mut rng = rng_from(seed, &[1]);
            let theta = random_phases(&mut rng, 6);
            let x = random_waveform(&mut rng, 3, 2.0);
            let q = &theta * theta.adjoint();
            for i in 0..3 {
                for j in 0..3 {
                    let yi = direct_mean(&ctx.hypotheses[i], &theta, &x, 8);
                    let yj = direct_mean(&ctx.hypotheses[j], &theta, &x, 8);
                    let want = (yi - yj).norm_squared() / ctx.sigma2;
                    let got = ctx.pair_distance(&q, &x, i, j);
                    assert!((got - want).abs() <= 1e-9 * want.max(1e-300), "{got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn identical_hypotheses_are_indistinguishable() {
        let ctx = random_context(1, 4, 2, 1, 4);
        let h = ctx.hypotheses[0].clone();
        let twin = DistanceContext::new(vec![h.clone(), h], &[0.5, 0.5], 4, 1.0).unwrap();
        let theta = random_phases(&mut rng_from(3, &[]), 4);
        let x = CVec::from_element(2, Complex64::new(1.0, 0.0));
        assert!(twin.pair_distance(&(&theta * theta.adjoint()), &x, 0, 1).abs() < 1e-12);
    }

    #[test]
    fn unified_weights_reproduce_weighted_distance() {
        let ctx = random_context(5, 5, 3, 4, 2);
        let mut rng = rng_from(5, &[2]);
        let x = random_waveform(&mut rng, 3, 1.0);
        let q = CMat::from_fn(5, 5, |_, _| crate::rng::unit_phase(&mut rng));
        let v = ctx.v(&x);
        let unified: Complex64 = ctx.active_pairs().iter().map(|&(k, l, w)| w * ctx.trace_term(&q, &v, k, l)).sum();
        let direct = ctx.weighted_distance(&q, &x);
        assert!((unified.re - direct).abs() <= 1e-10 * direct.abs());
        assert!(unified.im.abs() <= 1e-10 * direct.abs());
        let z = waveform_matrix(&q, &ctx);
        let quad = x.dotc(&(&z * &x));
        assert!((quad.re - direct).abs() <= 1e-10 * direct.abs());
    }

    #[test]
    fn q_entry_update_matches_phase_grid() {
        let ctx = random_context(9, 4, 2, 3, 4);
        let mut rng = rng_from(9, &[3]);
        let theta = random_phases(&mut rng, 4);
        let x = random_waveform(&mut rng, 2, 1.0);
        let mut state = OptimizerState::new(theta, x, 0.7);
        state.q = CMat::from_fn(4, 4, |_, _| crate::rng::unit_phase(&mut rng));
        let before = state.clone();
        let mut first = None;
        update_q(&mut state, &ctx, &mut |step, s: &OptimizerState| {
            if first.is_none() && step == Step::QEntry(0, 0) {
                first = Some(s.q[(0, 0)]);
            }
        });
        let chosen = first.unwrap();
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 0..4096 {
            let phase = std::f64::consts::TAU * k as f64 / 4096.0;
            let mut s = before.clone();
            s.q[(0, 0)] = Complex64::from_polar(1.0, phase);
            let v = s.penalized(&ctx);
            if v > best.0 {
                best = (v, phase);
            }
        }
        let diff = (chosen.arg() - best.1).rem_euclid(std::f64::consts::TAU);
        let diff = diff.min(std::f64::consts::TAU - diff);
        assert!(diff <= std::f64::consts::TAU / 4096.0, "{diff}");
    }

    #[test]
    fn waveform_diagonal_example() {
        // Build a context whose Z is diag(3, 1) by construction: one pair with
        // a single IRS element and identity-like channels.
        let hyps = vec![
            Hypothesis {
                steering: CVec::from_element(1, Complex64::new(1.0, 0.0)),
                channel: CMat::from_row_slice(1, 2, &[Complex64::new(3f64.sqrt(), 0.0), ZERO]),
                alpha: Complex64::new(1.0, 0.0),
            },
            Hypothesis {
                steering: CVec::from_element(1, Complex64::new(1.0, 0.0)),
                channel: CMat::from_row_slice(1, 2, &[ZERO, Complex64::new(1.0, 0.0)]),
                alpha: ZERO,
            },
        ];
        let ctx = DistanceContext::new(hyps, &[0.5, 0.5], 4, 1.0).unwrap();
        // D = L β |α_0|² |g_0 x|⁴ so Z is rank one along e₁; check the x update
        // saturates power on e₁.
        let mut state = OptimizerState::new(
            CVec::from_element(1, Complex64::new(1.0, 0.0)),
            CVec::from_vec(vec![Complex64::new(0.0, 0.0), Complex64::new(2.0, 0.0)]),
            1.0,
        );
        update_x(&mut state, &ctx, 4.0).unwrap();
        assert!((state.x[0].norm() - 2.0).abs() < 1e-12);
        assert!(state.x[1].norm() < 1e-12);
        assert!((state.x.norm_squared() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn theta_fixed_point_when_lifting_is_exact() {
        let theta = random_phases(&mut rng_from(4, &[]), 5);
        let mut state = OptimizerState::new(theta.clone(), CVec::zeros(2), 1.0);
        update_theta(&mut state, &mut |_, _| {});
        let g = state.theta[0] / theta[0];
        assert!((&state.theta - &theta * g).norm() < 1e-12);
    }

    #[test]
    fn single_hypothesis_is_trivial() {
        let ctx = random_context(2, 4, 2, 1, 4);
        let mut rng = rng_from(2, &[]);
        let theta = random_phases(&mut rng, 4);
        let x = random_waveform(&mut rng, 2, 1.0);
        let res = optimize(&ctx, &x, &theta, &OptimizerParams::new(1.0)).unwrap();
        assert_eq!(res.distance, 0.0);
        assert!(res.feasible);
        assert_eq!(res.theta, theta);
    }

    #[test]
    fn optimizer_improves_and_closes_lifting() {
        let ctx = random_context(6, 6, 3, 3, 4);
        let mut rng = rng_from(6, &[4]);
        let theta = random_phases(&mut rng, 6);
        let x = random_waveform(&mut rng, 3, 2.0);
        let res = optimize(&ctx, &x, &theta, &OptimizerParams::new(2.0)).unwrap();
        assert!(res.feasible, "xi = {}", res.xi);
        assert!(res.xi < 1e-7);
        let gap = res.final_state.lifting_gap().sqrt() / 6.0;
        assert!(gap < (2e-7f64).sqrt());
        assert!(res.distance >= res.initial_distance);
        assert!((res.x.norm_squared() - 2.0).abs() < 1e-9 || res.kept_initial);
        assert!(res.theta.iter().all(|t| (t.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn trace_csv_header() {
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "outer,rho,xi,penalized,distance\n");
    }
}
