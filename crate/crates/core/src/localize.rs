//! Per-cycle localization: echo simulation, joint ML of `(γ, δ)` per
//! hypothesis, Bayesian belief update and termination.
//!
//! Under hypothesis `j` with estimated channel `Ĝ` the noiseless echo is
//! `y = γ Φ_j δ`, where `Φ_j = (Θ(1ᵀ_L ⊗ a_j))ᵀ ⋄ Ĝᵀ` and `δ` is the unknown
//! per-row sign of `Ĝ`. Echo vectors are stacked snapshot-major: entry
//! `l·M + m` is antenna `m` in snapshot `l`.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;

use crate::bqp::{dinkelbach_solve, RatioProblem};
use crate::linalg::{khatri_rao, CMat, CVec, ZERO};
use crate::rng::{complex_gaussian, rng_from, unit_phase};
use crate::scene::{steering_vector, Scene, SceneConfig};
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.95;
pub const DINKELBACH_TOL: f64 = 1e-9;
pub const DINKELBACH_MAX_ITERS: usize = 50;

/// Uniform partition of an elevation interval at a fixed azimuth.
#[derive(Debug, Clone)]
pub struct HypothesisGrid {
    pub theta_lo_deg: f64,
    pub theta_hi_deg: f64,
    pub phi_deg: f64,
    /// Grid-centre elevations.
    pub centers_deg: Vec<f64>,
    /// Steering vector at each centre.
    pub steering: Vec<CVec>,
}

impl HypothesisGrid {
    pub fn uniform(
        theta_lo_deg: f64,
        theta_hi_deg: f64,
        count: usize,
        phi_deg: f64,
        cfg: &SceneConfig,
    ) -> Result<Self> {
        if count == 0 || !(theta_hi_deg > theta_lo_deg) {
            return Err(Error::Config(format!(
                "need at least one grid over a non-empty interval, got {count} over [{theta_lo_deg}, {theta_hi_deg})"
            )));
        }
        let width = (theta_hi_deg - theta_lo_deg) / count as f64;
        let centers_deg: Vec<f64> = (0..count).map(|i| theta_lo_deg + (i as f64 + 0.5) * width).collect();
        let steering = centers_deg.iter().map(|t| steering_vector(t.to_radians(), phi_deg.to_radians(), cfg)).collect();
        Ok(Self { theta_lo_deg, theta_hi_deg, phi_deg, centers_deg, steering })
    }

    pub fn len(&self) -> usize {
        self.centers_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers_deg.is_empty()
    }

    /// Index of the grid containing `theta_deg`, if inside `[lo, hi)`.
    pub fn index_of(&self, theta_deg: f64) -> Option<usize> {
        if theta_deg < self.theta_lo_deg || theta_deg >= self.theta_hi_deg {
            return None;
        }
        let width = (self.theta_hi_deg - self.theta_lo_deg) / self.len() as f64;
        Some((((theta_deg - self.theta_lo_deg) / width) as usize).min(self.len() - 1))
    }
}

/// Beliefs and latest per-hypothesis estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub cycle: usize,
    pub probs: Vec<f64>,
    pub gamma: Vec<Complex64>,
    pub delta: Vec<Vec<i8>>,
    pub alpha: Vec<Complex64>,
    pub residual: Vec<f64>,
    /// Set when the last update could not be applied and the prior was kept.
    pub stalled: bool,
}

impl BeliefState {
    pub fn uniform(hypotheses: usize, n: usize) -> Self {
        Self {
            cycle: 0,
            probs: vec![1.0 / hypotheses as f64; hypotheses],
            gamma: vec![ZERO; hypotheses],
            delta: vec![vec![1; n]; hypotheses],
            alpha: vec![ZERO; hypotheses],
            residual: vec![f64::NAN; hypotheses],
            stalled: false,
        }
    }

    /// Index of the most probable hypothesis (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Echo `vec(α GᵀΘ a aᵀΘ G X) + noise` with `X = [x, …, x]` (`L` columns).
pub fn simulate_echo(scene: &Scene, x: &CVec, theta: &CVec, l: usize, seed: u64) -> Result<CVec> {
    check_phases(theta)?;
    if l == 0 {
        return Err(Error::Config("snapshot count L must be at least 1".into()));
    }
    let gamma = echo_gamma(scene, x, theta);
    let f = echo_signature(&scene.g, &scene.a, theta);
    let sigma2 = scene.noise_power();
    let mut rng = rng_from(seed, &[]);
    Ok(CVec::from_fn(l * scene.m(), |i, _| gamma * f[i % scene.m()] + complex_gaussian(&mut rng, sigma2)))
}

/// `γ = α aᵀΘGx`.
pub fn echo_gamma(scene: &Scene, x: &CVec, theta: &CVec) -> Complex64 {
    scene.alpha * scene.a.component_mul(theta).dot(&(&scene.g * x))
}

/// One snapshot of `f`: `GᵀΘa`.
pub fn echo_signature(g: &CMat, a: &CVec, theta: &CVec) -> CVec {
    g.transpose() * a.component_mul(theta)
}

fn check_phases(theta: &CVec) -> Result<()> {
    if theta.iter().any(|t| (t.norm() - 1.0).abs() > 1e-9) {
        return Err(Error::Domain("IRS phases must have unit modulus".into()));
    }
    Ok(())
}

/// `Φ = (Θ(1ᵀ_L ⊗ a))ᵀ ⋄ Ĝᵀ`, size `ML × N`.
pub fn echo_design(g_hat: &CMat, a: &CVec, theta: &CVec, l: usize) -> CMat {
    let ta = a.component_mul(theta).transpose();
    let rows = CMat::from_fn(l, ta.len(), |_, n| ta[n]);
    khatri_rao(&rows, &g_hat.transpose())
}

fn signed_sum(phi: &CMat, delta: &[i8]) -> CVec {
    let mut v = CVec::zeros(phi.nrows());
    for (n, &s) in delta.iter().enumerate() {
        v.axpy(Complex64::new(f64::from(s), 0.0), &phi.column(n), Complex64::new(1.0, 0.0));
    }
    v
}

/// `γ̂ = δᴴΦᴴy / ‖Φδ‖²`.
pub fn estimate_gamma(phi: &CMat, delta: &[i8], y: &CVec) -> Result<Complex64> {
    let pd = signed_sum(phi, delta);
    let energy = pd.norm_squared();
    if energy == 0.0 {
        return Err(Error::Degenerate("hypothesis signature Φδ is zero".into()));
    }
    Ok(pd.dotc(y) / energy)
}

#[derive(Debug, Clone)]
pub struct JointEstimate {
    pub gamma: Complex64,
    /// Sign vector with `δ(1) = +1`.
    pub delta: Vec<i8>,
    /// `‖y − γ̂Φδ̂‖²`.
    pub residual: f64,
    /// Fitted mean `γ̂Φδ̂`.
    pub mean: CVec,
    pub dinkelbach_iters: usize,
}

/// Joint ML over `(γ, δ)` for one hypothesis via the fractional program
/// `max δᴴΞ₁δ / δᴴΞ₂δ`, `Ξ₁ = ΦᴴyyᴴΦ`, `Ξ₂ = ΦᴴΦ`.
pub fn joint_ml(y: &CVec, phi: &CMat, warm_start: Option<&[i8]>) -> Result<JointEstimate> {
    let b = phi.adjoint() * y;
    let xi1 = &b * b.adjoint();
    let xi2 = phi.adjoint() * phi;
    let prob = RatioProblem::new_semidefinite(xi1, xi2)?;
    let res = dinkelbach_solve(&prob, warm_start, DINKELBACH_TOL, DINKELBACH_MAX_ITERS)?;
    let gamma = estimate_gamma(phi, &res.delta, y)?;
    let mean = signed_sum(phi, &res.delta) * gamma;
    let residual = (y - &mean).norm_squared();
    Ok(JointEstimate { gamma, delta: res.delta, residual, mean, dinkelbach_iters: res.y_trace.len() - 1 })
}

/// `p⁺(i) ∝ p(i) exp(−‖y − ȳ_i‖²/σ²)` in the log domain. With `σ² = 0` the
/// mass moves to the hypotheses with the smallest residual.
pub fn bayes_update(belief: &BeliefState, y: &CVec, means: &[CVec], sigma2: f64) -> BeliefState {
    let residual: Vec<f64> = means.iter().map(|m| (y - m).norm_squared()).collect();
    bayes_update_residuals(belief, &residual, sigma2, y.norm_squared())
}

fn bayes_update_residuals(belief: &BeliefState, residual: &[f64], sigma2: f64, energy: f64) -> BeliefState {
    let mut next = belief.clone();
    next.residual = residual.to_vec();
    next.stalled = false;
    if residual.len() != belief.probs.len() || residual.iter().any(|r| !r.is_finite()) {
        next.stalled = true;
        return next;
    }
    let log_post: Vec<f64> = if sigma2 > 0.0 {
        belief.probs.iter().zip(residual).map(|(p, r)| p.ln() - r / sigma2).collect()
    } else {
        let best = residual.iter().copied().fold(f64::INFINITY, f64::min);
        let tie = 1e-9 * energy.max(best);
        belief
            .probs
            .iter()
            .zip(residual)
            .map(|(p, r)| if *r <= best + tie { p.ln() } else { f64::NEG_INFINITY })
            .collect()
    };
    let top = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        next.stalled = true;
        return next;
    }
    let w: Vec<f64> = log_post.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    next.probs = w.iter().map(|v| v / total).collect();
    next
}

/// `α̂ = γ̂ / (aᵀΘ diag(δ̂) Ĝ x)`, or `None` when the denominator vanishes.
pub fn estimate_alpha(
    gamma: Complex64,
    theta: &CVec,
    delta: &[i8],
    g_hat: &CMat,
    x: &CVec,
    a: &CVec,
) -> Option<Complex64> {
    let gx = g_hat * x;
    let mut den = ZERO;
    let mut scale = 0.0;
    for n in 0..gx.len() {
        let term = a[n] * theta[n] * f64::from(delta[n]) * gx[n];
        den += term;
        scale += term.norm();
    }
    if den.norm() <= 1e-12 * scale || scale == 0.0 {
        return None;
    }
    Some(gamma / den)
}

/// Fixed inputs of a localization run.
#[derive(Debug, Clone)]
pub struct LocalizationContext {
    pub grid: HypothesisGrid,
    pub g_hat: CMat,
    pub snapshots: usize,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRow {
    pub cycle: usize,
    pub hypothesis: usize,
    pub probability: f64,
    pub residual: f64,
    pub gamma_abs: f64,
    pub alpha_abs: f64,
}

/// One transmit/receive/compute cycle.
pub fn run_cycle(
    scene: &Scene,
    ctx: &LocalizationContext,
    belief: &BeliefState,
    x: &CVec,
    theta: &CVec,
    seed: u64,
) -> Result<(BeliefState, Vec<CycleRow>)> {
    let y = simulate_echo(scene, x, theta, ctx.snapshots, seed)?;
    let fits = ctx
        .grid
        .steering
        .iter()
        .enumerate()
        .map(|(j, a)| {
            let phi = echo_design(&ctx.g_hat, a, theta, ctx.snapshots);
            let warm = (belief.cycle > 0).then(|| belief.delta[j].as_slice());
            joint_ml(&y, &phi, warm)
        })
        .collect::<Result<Vec<_>>>()?;
    let residual: Vec<f64> = fits.iter().map(|f| f.residual).collect();
    let mut next = bayes_update_residuals(belief, &residual, ctx.sigma2, y.norm_squared());
    next.cycle = belief.cycle + 1;
    for (j, fit) in fits.iter().enumerate() {
        next.gamma[j] = fit.gamma;
        next.delta[j] = fit.delta.clone();
        if let Some(alpha) = estimate_alpha(fit.gamma, theta, &fit.delta, &ctx.g_hat, x, &ctx.grid.steering[j]) {
            next.alpha[j] = alpha;
        }
    }
    let rows = (0..fits.len())
        .map(|j| CycleRow {
            cycle: next.cycle,
            hypothesis: j,
            probability: next.probs[j],
            residual: next.residual[j],
            gamma_abs: next.gamma[j].norm(),
            alpha_abs: next.alpha[j].norm(),
        })
        .collect();
    Ok((next, rows))
}

#[derive(Debug, Clone)]
pub struct Decision {
    pub winner: usize,
    pub probability: f64,
    /// `diag(δ̂_winner) Ĝ`.
    pub channel: CMat,
}

/// Declares a winner once its belief reaches `threshold`.
pub fn terminate(belief: &BeliefState, threshold: f64, g_hat: &CMat) -> Option<Decision> {
    let winner = belief.argmax();
    let probability = belief.probs[winner];
    if probability < threshold {
        return None;
    }
    let mut channel = g_hat.clone();
    for (n, &s) in belief.delta[winner].iter().enumerate() {
        if s < 0 {
            channel.row_mut(n).neg_mut();
        }
    }
    Some(Decision { winner, probability, channel })
}

/// Unit-modulus vector with independent uniform phases.
pub fn random_phases<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| unit_phase(rng))
}

/// Random waveform with `‖x‖² = P_b`.
pub fn random_waveform<R: Rng + ?Sized>(rng: &mut R, m: usize, power: f64) -> CVec {
    let v = CVec::from_fn(m, |_, _| complex_gaussian(rng, 1.0));
    let norm = v.norm();
    if norm == 0.0 {
        return CVec::from_element(m, Complex64::new((power / m as f64).sqrt(), 0.0));
    }
    v.scale(power.sqrt() / norm)
}

pub fn write_cycle_csv<W: Write>(mut out: W, rows: &[CycleRow], header: bool) -> std::io::Result<()> {
    if header {
        writeln!(out, "cycle,hypothesis,probability,residual,gamma_abs,alpha_abs")?;
    }
    for r in rows {
        writeln!(
            out,
            "{},{},{:e},{:e},{:e},{:e}",
            r.cycle, r.hypothesis, r.probability, r.residual, r.gamma_abs, r.alpha_abs
        )?;
    }
    Ok(())
}
