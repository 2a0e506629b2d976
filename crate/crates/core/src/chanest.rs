//! BS–IRS channel recovery from pairwise products.
//!
//! The pilot model only exposes `g_{n,a} g_{n,b}` for `a ≠ b`, so each row of
//! `G` is identifiable up to a sign. Estimation runs in three steps: average
//! the LS product estimates, build a geometric-mean initial point, then refine
//! every entry by exact coordinate descent on the weighted LS objective
//!
//! ```text
//! J(G) = Σ_p (ω̂_p − ω_p(G))ᴴ R⁻¹ (ω̂_p − ω_p(G)),   R = 2σ²(ΦᴴΦ)⁻¹.
//! ```

use std::io::Write;

use num_complex::Complex64;

use crate::linalg::{CMat, CVec, ZERO};
use crate::pilot::{ls_estimate, ObservationSet};
use crate::{Error, Result};

/// Averaged product estimates `h̄[n][a][b]`, symmetric in `(a, b)`.
#[derive(Debug, Clone)]
pub struct PairProducts {
    pub n: usize,
    pub m: usize,
    values: Vec<Complex64>,
    counts: Vec<usize>,
}

impl PairProducts {
    fn idx(&self, n: usize, a: usize, b: usize) -> usize {
        (n * self.m + a) * self.m + b
    }

    pub fn get(&self, n: usize, a: usize, b: usize) -> Complex64 {
        self.values[self.idx(n, a, b)]
    }

    /// How many LS coordinates were averaged into `h̄[n][a][b]`.
    pub fn count(&self, n: usize, a: usize, b: usize) -> usize {
        self.counts[self.idx(n, a, b)]
    }

    /// Builds products from a noiseless channel.
    pub fn from_channel(g: &CMat) -> Self {
        let (n, m) = g.shape();
        let mut values = vec![ZERO; n * m * m];
        let mut counts = vec![0; n * m * m];
        for k in 0..n {
            for a in 0..m {
                for b in 0..m {
                    if a != b {
                        values[(k * m + a) * m + b] = g[(k, a)] * g[(k, b)];
                        counts[(k * m + a) * m + b] = 1;
                    }
                }
            }
        }
        Self { n, m, values, counts }
    }
}

/// Averages every LS coordinate that estimates the same product.
pub fn pairwise_products(obs: &ObservationSet) -> Result<PairProducts> {
    let s = &obs.schedule;
    let (n, m, mt, mr) = (s.n, s.m, s.mt, s.mr());
    let mut values = vec![ZERO; n * m * m];
    let mut counts = vec![0usize; n * m * m];
    for (p, sub) in s.subframes.iter().enumerate() {
        let w = ls_estimate(obs, p);
        for k in 0..n {
            for (ai, &a) in sub.tx.iter().enumerate() {
                for (bi, &b) in sub.rx.iter().enumerate() {
                    let v = w[k * mt * mr + ai * mr + bi];
                    for (x, y) in [(a, b), (b, a)] {
                        values[(k * m + x) * m + y] += v;
                        counts[(k * m + x) * m + y] += 1;
                    }
                }
            }
        }
    }
    for a in 0..m {
        for b in 0..m {
            if a != b && counts[a * m + b] == 0 {
                return Err(Error::Schedule(format!("antenna pair ({a}, {b}) is never observed")));
            }
        }
    }
    for (v, &c) in values.iter_mut().zip(&counts) {
        if c > 0 {
            *v /= c as f64;
        }
    }
    Ok(PairProducts { n, m, values, counts })
}

/// Geometric-mean estimate of `g_{n,l}` from all tuples `(p, q)` avoiding `l`.
/// Returns `None` when every tuple's divisor is below the floor.
fn anchor_estimate(h: &PairProducts, n: usize, l: usize, floor: f64) -> Option<Complex64> {
    let mut roots = Vec::new();
    for p in 0..h.m {
        for q in p + 1..h.m {
            if p == l || q == l {
                continue;
            }
            let den = h.get(n, p, q);
            if den.norm() <= floor {
                continue;
            }
            let r = (h.get(n, l, p) * h.get(n, l, q) / den).sqrt();
            if r.is_finite() && r.norm() > 0.0 {
                roots.push(r);
            }
        }
    }
    let first = *roots.first()?;
    let mut log_mag = 0.0;
    let mut rel_phase = 0.0;
    for r in &roots {
        let r = if (r * first.conj()).re < 0.0 { -r } else { *r };
        log_mag += r.norm().ln();
        rel_phase += (r / first).arg();
    }
    let k = roots.len() as f64;
    Some(Complex64::from_polar((log_mag / k).exp(), first.arg() + rel_phase / k))
}

/// Initial estimate: geometric mean for the anchor column, ratios elsewhere.
///
/// If a row's anchor has no usable tuple the column with the largest minimum
/// pair magnitude is used instead. Rows with no usable anchor stay zero.
pub fn initialize(h: &PairProducts, anchor: usize) -> Result<CMat> {
    if h.m < 3 {
        return Err(Error::Domain(format!("initialization needs M >= 3, got {}", h.m)));
    }
    if anchor >= h.m {
        return Err(Error::Domain(format!("anchor {anchor} out of range for M = {}", h.m)));
    }
    let mut g = CMat::zeros(h.n, h.m);
    for n in 0..h.n {
        let scale = (0..h.m)
            .flat_map(|a| (0..h.m).map(move |b| (a, b)))
            .filter(|(a, b)| a != b)
            .map(|(a, b)| h.get(n, a, b).norm())
            .fold(0.0, f64::max);
        if scale == 0.0 {
            continue;
        }
        let floor = 1e-9 * scale;
        let min_pair =
            |l: usize| (0..h.m).filter(|&p| p != l).map(|p| h.get(n, l, p).norm()).fold(f64::INFINITY, f64::min);
        let usable = |l: usize| anchor_estimate(h, n, l, floor).filter(|v| v.norm() > 0.0);
        let primary = (min_pair(anchor) > floor).then(|| usable(anchor)).flatten();
        let chosen = primary.map(|v| (anchor, v)).or_else(|| {
            let mut order: Vec<usize> = (0..h.m).collect();
            order.sort_by(|&a, &b| min_pair(b).total_cmp(&min_pair(a)).then(a.cmp(&b)));
            order.into_iter().find_map(|l| usable(l).map(|v| (l, v)))
        });
        let Some((l, gl)) = chosen else { continue };
        g[(n, l)] = gl;
        for a in 0..h.m {
            if a != l {
                g[(n, a)] = h.get(n, l, a) / gl;
            }
        }
    }
    Ok(g)
}

/// One coordinate's footprint: subframe, product coordinate, partner column.
#[derive(Debug, Clone, Copy)]
struct Slot {
    p: usize,
    coord: usize,
    partner: usize,
}

/// Coordinate-descent state for the weighted LS objective.
///
/// Residuals `r_p = ω̂_p − ω_p(G)` and `W r_p` are kept current so each
/// entry update costs `O(P · dim(ω) · M)`.
#[derive(Debug, Clone)]
pub struct Refiner {
    g: CMat,
    weight: CMat,
    residual: Vec<CVec>,
    weighted: Vec<CVec>,
    footprint: Vec<Vec<Slot>>,
}

impl Refiner {
    pub fn new(obs: &ObservationSet, g0: &CMat) -> Result<Self> {
        let s = &obs.schedule;
        if g0.shape() != (s.n, s.m) {
            return Err(Error::Domain(format!("initial estimate is {:?}, expected ({}, {})", g0.shape(), s.n, s.m)));
        }
        if g0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("initial estimate is not finite".into()));
        }
        let gram = obs.phi.adjoint() * &obs.phi;
        let weight = if obs.sigma2 > 0.0 { gram.unscale(2.0 * obs.sigma2) } else { gram };
        let (mt, mr) = (s.mt, s.mr());
        let mut footprint = vec![Vec::new(); s.n * s.m];
        for (p, sub) in s.subframes.iter().enumerate() {
            for n in 0..s.n {
                for (ai, &a) in sub.tx.iter().enumerate() {
                    for (bi, &b) in sub.rx.iter().enumerate() {
                        let coord = n * mt * mr + ai * mr + bi;
                        footprint[n * s.m + a].push(Slot { p, coord, partner: b });
                        footprint[n * s.m + b].push(Slot { p, coord, partner: a });
                    }
                }
            }
        }
        let mut r = Self { g: g0.clone(), weight, residual: Vec::new(), weighted: Vec::new(), footprint };
        r.residual = (0..s.subframes.len())
            .map(|p| ls_estimate(obs, p) - crate::pilot::product_vector(&r.g, &s.subframes[p]))
            .collect();
        r.weighted = r.residual.iter().map(|v| &r.weight * v).collect();
        Ok(r)
    }

    pub fn estimate(&self) -> &CMat {
        &self.g
    }

    /// Current objective `J`.
    pub fn objective(&self) -> f64 {
        self.residual.iter().zip(&self.weighted).map(|(r, w)| r.dotc(w).re).sum()
    }

    /// Closed-form minimizer of `J` over entry `(n, a)` with all others fixed,
    /// or `None` when that coordinate has no curvature.
    pub fn optimal_entry(&self, n: usize, a: usize) -> Option<Complex64> {
        let slots = &self.footprint[n * self.g.ncols() + a];
        let g_old = self.g[(n, a)];
        let mut num = ZERO;
        let mut den = 0.0;
        for s in slots {
            let d = self.g[(n, s.partner)];
            num += d.conj() * self.weighted[s.p][s.coord];
            for t in slots.iter().filter(|t| t.p == s.p) {
                den += (d.conj() * self.weight[(s.coord, t.coord)] * self.g[(n, t.partner)]).re;
            }
        }
        if !(den > 0.0 && den.is_finite()) {
            return None;
        }
        Some(g_old + num / den)
    }

    /// Moves entry `(n, a)` to its conditional optimum. Returns whether it moved.
    pub fn update_entry(&mut self, n: usize, a: usize) -> bool {
        let Some(g_new) = self.optimal_entry(n, a) else { return false };
        let delta = g_new - self.g[(n, a)];
        let m = self.g.ncols();
        for s in &self.footprint[n * m + a] {
            let step = delta * self.g[(n, s.partner)];
            self.residual[s.p][s.coord] -= step;
            let col = self.weight.column(s.coord);
            self.weighted[s.p].axpy(-step, &col, Complex64::new(1.0, 0.0));
        }
        self.g[(n, a)] = g_new;
        true
    }

    /// One row-major sweep over all entries.
    pub fn sweep(&mut self) {
        let (n, m) = self.g.shape();
        for k in 0..n {
            for a in 0..m {
                self.update_entry(k, a);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    pub g_hat: CMat,
    /// Always true: rows are known only up to sign.
    pub sign_ambiguous: bool,
    pub iterations_run: usize,
    pub final_objective: f64,
    pub converged: bool,
    /// `J` before the first sweep and after each sweep.
    pub objective_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub sweep: usize,
    pub objective: f64,
    pub ne: Option<f64>,
}

pub const DEFAULT_MAX_SWEEPS: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-8;

/// Coordinate-descent refinement until the relative per-sweep decrease of `J`
/// drops below `tol` or `max_sweeps` is reached.
pub fn refine(obs: &ObservationSet, g0: &CMat, max_sweeps: usize, tol: f64) -> Result<ChannelEstimate> {
    refine_traced(obs, g0, max_sweeps, tol, None).map(|(e, _)| e)
}

/// [`refine`] that also records `(sweep, J, NE)` per sweep when the true
/// channel is supplied.
pub fn refine_traced(
    obs: &ObservationSet,
    g0: &CMat,
    max_sweeps: usize,
    tol: f64,
    truth: Option<&CMat>,
) -> Result<(ChannelEstimate, Vec<SweepRecord>)> {
    let mut r = Refiner::new(obs, g0)?;
    let ne = |g: &CMat| truth.map(|t| normalized_error(g, t)).transpose();
    let mut j = r.objective();
    let mut history = vec![j];
    let mut trace = vec![SweepRecord { sweep: 0, objective: j, ne: ne(r.estimate())? }];
    let mut converged = j == 0.0;
    let mut sweeps = 0;
    while !converged && sweeps < max_sweeps {
        r.sweep();
        sweeps += 1;
        let j_new = r.objective();
        if !j_new.is_finite() {
            return Err(Error::Numerical(format!("objective diverged at sweep {sweeps}")));
        }
        history.push(j_new);
        trace.push(SweepRecord { sweep: sweeps, objective: j_new, ne: ne(r.estimate())? });
        converged = j_new == 0.0 || (j - j_new) <= tol * j.abs();
        j = j_new;
    }
    let est = ChannelEstimate {
        g_hat: r.g,
        sign_ambiguous: true,
        iterations_run: sweeps,
        final_objective: j,
        converged,
        objective_history: history,
    };
    Ok((est, trace))
}

/// Products, initialization and refinement with the default settings.
pub fn estimate_channel(obs: &ObservationSet) -> Result<ChannelEstimate> {
    let h = pairwise_products(obs)?;
    let g0 = initialize(&h, 0)?;
    refine(obs, &g0, DEFAULT_MAX_SWEEPS, DEFAULT_TOL)
}

/// `min_δ ‖diag(δ)Ĝ − G‖_F / ‖G‖_F`, choosing each row's sign independently.
pub fn normalized_error(g_hat: &CMat, g_true: &CMat) -> Result<f64> {
    if g_hat.shape() != g_true.shape() {
        return Err(Error::Domain(format!("shape mismatch: {:?} vs {:?}", g_hat.shape(), g_true.shape())));
    }
    let denom = g_true.norm();
    if denom == 0.0 {
        return Err(Error::Domain("true channel has zero norm".into()));
    }
    let mut err = 0.0;
    for n in 0..g_true.nrows() {
        let (h, g) = (g_hat.row(n), g_true.row(n));
        let plus = (h - g).norm_squared();
        let minus = (h + g).norm_squared();
        err += plus.min(minus);
    }
    Ok(err.sqrt() / denom)
}

/// Writes a sweep trace as CSV with a header row.
pub fn write_trace_csv<W: Write>(mut out: W, trace: &[SweepRecord]) -> std::io::Result<()> {
    writeln!(out, "sweep,objective,ne")?;
    for r in trace {
        match r.ne {
            Some(ne) => writeln!(out, "{},{:e},{:e}", r.sweep, r.objective, ne)?,
            None => writeln!(out, "{},{:e},", r.sweep, r.objective)?,
        }
    }
    Ok(())
}
