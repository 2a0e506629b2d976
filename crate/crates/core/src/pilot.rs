//! Full-duplex differential pilot protocol.
//!
//! In every subframe the BS transmits on an antenna set `A` (size `Mt`) and
//! receives on the complement `B`. Each differential observation is taken from
//! its own pair of slots that share the same pilot vector. Differencing the
//! pair removes the static self-interference and scatter terms and leaves
//!
//! ```text
//! ỹ_B(p, l) = (Δθ(l)ᵀ ⊗ (x(l)ᵀ ⊗ I)) vec(G_Aᵀ ⋄ G_Bᵀ) + Δn_B(p, l)
//! ```
//!
//! Slot pairs are organized in `Mt` blocks. Block `k` holds `C_k + 1` IRS states
//! and a constant pilot `x_k`; difference `l` switches the IRS from state `l` to
//! state `l + 1`. The blocks' pilots are the columns of an `Mt`-point DFT so that
//! all `N·Mt` products per receive antenna are identifiable. Since no slot is
//! shared between two differences, `Δn` is white with covariance `2σ²I`.
//!
//! Product vectors are ordered `n`-major, then transmit index, then receive
//! index: coordinate `n·Mt·Mr + a·Mr + b` estimates `g[n, A[a]] · g[n, B[b]]`.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::linalg::{gram_inverse, khatri_rao, vec_of, CMat, CVec};
use crate::rng::{complex_gaussian, rng_from};
use crate::scene::Scene;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subframe {
    /// Transmit antenna indices (sorted).
    pub tx: Vec<usize>,
    /// Receive antenna indices (sorted complement of `tx`).
    pub rx: Vec<usize>,
}

/// Slot pairs with a constant pilot.
#[derive(Debug, Clone)]
pub struct PilotBlock {
    pub pilot: CVec,
    /// IRS reflection vectors; difference `l` pairs states `l` and `l + 1`.
    pub states: Vec<CVec>,
}

#[derive(Debug, Clone)]
pub struct PilotSchedule {
    pub m: usize,
    pub mt: usize,
    pub n: usize,
    /// Differential observations per subframe.
    pub c: usize,
    /// Total pilot power in watts.
    pub pilot_power: f64,
    pub subframes: Vec<Subframe>,
    pub blocks: Vec<PilotBlock>,
}

/// All `k`-subsets of `0..m` in lexicographic order.
fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            if m - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Unit-modulus IRS states `θ_l(n) = exp(j 2π (n+1) l / (C+1))`, `l = 0..=C`.
/// Their consecutive differences span ℂᴺ whenever `C ≥ N`.
fn dft_states(n: usize, c: usize) -> Vec<CVec> {
    let period = (c + 1) as f64;
    (0..=c).map(|l| CVec::from_fn(n, |k, _| Complex64::from_polar(1.0, TAU * ((k + 1) * l) as f64 / period))).collect()
}

/// Builds the antenna-split schedule and IRS/pilot patterns.
pub fn build_schedule(m: usize, mt: usize, n: usize, c: usize, pilot_power: f64) -> Result<PilotSchedule> {
    if mt == 0 || mt >= m {
        return Err(Error::Config(format!("need 1 <= Mt < M, got Mt = {mt}, M = {m}")));
    }
    if n == 0 {
        return Err(Error::Config("IRS must have at least one element".into()));
    }
    if c < n * mt {
        return Err(Error::Identifiability { c, required: n * mt });
    }
    if !(pilot_power >= 0.0 && pilot_power.is_finite()) {
        return Err(Error::Config(format!("pilot power must be non-negative, got {pilot_power}")));
    }
    let subframes = combinations(m, mt)
        .into_iter()
        .map(|tx| {
            let rx = (0..m).filter(|i| !tx.contains(i)).collect();
            Subframe { tx, rx }
        })
        .collect();
    let amp = (pilot_power / mt as f64).sqrt();
    let blocks = (0..mt)
        .map(|k| {
            let ck = c / mt + usize::from(k < c % mt);
            let pilot = CVec::from_fn(mt, |a, _| Complex64::from_polar(amp, -TAU * (a * k) as f64 / mt as f64));
            PilotBlock { pilot, states: dft_states(n, ck) }
        })
        .collect();
    Ok(PilotSchedule { m, mt, n, c, pilot_power, subframes, blocks })
}

impl PilotSchedule {
    /// Receive antennas per subframe.
    pub fn mr(&self) -> usize {
        self.m - self.mt
    }

    /// Length of each subframe's product vector.
    pub fn omega_len(&self) -> usize {
        self.n * self.mt * self.mr()
    }

    /// Slots per subframe.
    pub fn slots(&self) -> usize {
        2 * self.c
    }

    /// `(Δθ(l), x(l))` for every differential observation `l`, in stacking order.
    pub fn differences(&self) -> Vec<(CVec, CVec)> {
        self.blocks.iter().flat_map(|b| b.states.windows(2).map(move |w| (&w[1] - &w[0], b.pilot.clone()))).collect()
    }

    /// Number of product estimates `g_{n,a} g_{n,b}` one row of `G` receives over
    /// the whole schedule.
    pub fn product_estimate_count(&self) -> usize {
        self.subframes.iter().map(|s| s.tx.len() * s.rx.len()).sum()
    }

    /// Pilot overhead: differential observations summed over subframes.
    pub fn pilot_cost(&self) -> usize {
        self.subframes.len() * self.c
    }

    /// Efficiency by counting, `(estimates per distinct pair) / cost`, as a
    /// reduced fraction.
    pub fn counted_efficiency(&self) -> (u64, u64) {
        let pairs = (self.m * (self.m - 1)) as u64; // = 2 * unordered pairs
        reduce(2 * self.product_estimate_count() as u64, pairs * self.pilot_cost() as u64)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn reduce(num: u64, den: u64) -> (u64, u64) {
    let g = gcd(num, den).max(1);
    (num / g, den / g)
}

/// Channel-estimation efficiency `2(M - Mt) / (N M (M - 1))` as a reduced fraction.
pub fn efficiency_fraction(m: usize, mt: usize, n: usize) -> (u64, u64) {
    reduce(2 * (m - mt) as u64, (n * m * (m - 1)) as u64)
}

pub fn efficiency(m: usize, mt: usize, n: usize) -> f64 {
    let (a, b) = efficiency_fraction(m, mt, n);
    a as f64 / b as f64
}

/// `Φ^(p)`: stacked `Δθ(l)ᵀ ⊗ (x(l)ᵀ ⊗ I_Mr)` blocks. The patterns are shared by
/// all subframes, so every `p` yields the same matrix.
pub fn build_design_matrix(schedule: &PilotSchedule, p: usize) -> CMat {
    assert!(p < schedule.subframes.len(), "subframe index out of range");
    let (mt, mr, n) = (schedule.mt, schedule.mr(), schedule.n);
    let diffs = schedule.differences();
    let mut phi = CMat::zeros(diffs.len() * mr, schedule.omega_len());
    for (l, (dtheta, x)) in diffs.iter().enumerate() {
        for k in 0..n {
            for a in 0..mt {
                let coef = dtheta[k] * x[a];
                for b in 0..mr {
                    phi[(l * mr + b, k * mt * mr + a * mr + b)] = coef;
                }
            }
        }
    }
    phi
}

/// `vec(G_Aᵀ ⋄ G_Bᵀ)` for one subframe.
pub fn product_vector(g: &CMat, sub: &Subframe) -> CVec {
    let ga_t = g.select_columns(&sub.tx).transpose();
    let gb_t = g.select_columns(&sub.rx).transpose();
    vec_of(&khatri_rao(&ga_t, &gb_t))
}

/// Differenced observations of one pilot round, with the shared design matrix.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    pub schedule: PilotSchedule,
    pub phi: CMat,
    /// `(ΦᴴΦ)⁻¹`.
    pub gram_inv: CMat,
    /// Stacked differential observations `ỹ_B(p)`, one per subframe.
    pub y: Vec<CVec>,
    /// Per-slot receiver noise power.
    pub sigma2: f64,
}

impl ObservationSet {
    /// Assembles an observation set after checking `Φ` has full column rank.
    pub fn new(schedule: PilotSchedule, y: Vec<CVec>, sigma2: f64) -> Result<Self> {
        if y.len() != schedule.subframes.len() {
            return Err(Error::Schedule(format!(
                "{} observation vectors for {} subframes",
                y.len(),
                schedule.subframes.len()
            )));
        }
        let phi = build_design_matrix(&schedule, 0);
        if let Some(bad) = y.iter().position(|v| v.len() != phi.nrows()) {
            return Err(Error::Schedule(format!("observation {bad} has the wrong length")));
        }
        let gram_inv = gram_inverse(&phi)?;
        Ok(Self { schedule, phi, gram_inv, y, sigma2 })
    }

    /// `R_ω̂ = 2σ² (ΦᴴΦ)⁻¹`.
    pub fn covariance(&self) -> CMat {
        self.gram_inv.scale(2.0 * self.sigma2)
    }
}

/// LS estimate `ω̂^(p) = (ΦᴴΦ)⁻¹ Φᴴ ỹ_B(p)`.
pub fn ls_estimate(obs: &ObservationSet, p: usize) -> CVec {
    &obs.gram_inv * (obs.phi.adjoint() * &obs.y[p])
}

/// Simulates the received slots of every subframe, including freshly drawn
/// self-interference and scatter channels and receiver noise, then differences
/// each slot pair.
pub fn simulate_pilot_round(scene: &Scene, schedule: &PilotSchedule, seed: u64) -> Result<ObservationSet> {
    if schedule.n != scene.n() || schedule.m != scene.m() {
        return Err(Error::Schedule(format!(
            "schedule is for N = {}, M = {} but scene has N = {}, M = {}",
            schedule.n,
            schedule.m,
            scene.n(),
            scene.m()
        )));
    }
    let cfg = &scene.config;
    let (sigma2, si, rf) = (cfg.noise_power(), cfg.si_power(), cfg.ref_power());
    let (mt, mr) = (schedule.mt, schedule.mr());
    let y = schedule
        .subframes
        .iter()
        .enumerate()
        .map(|(p, sub)| {
            let mut rng = rng_from(seed, &[p as u64]);
            let static_ch =
                CMat::from_fn(mr, mt, |_, _| complex_gaussian(&mut rng, si) + complex_gaussian(&mut rng, rf));
            let ga = scene.g.select_columns(&sub.tx);
            let gb_t = scene.g.select_columns(&sub.rx).transpose();
            let mut stacked = Vec::with_capacity(schedule.c * mr);
            for block in &schedule.blocks {
                let direct = &static_ch * &block.pilot;
                let ga_x = &ga * &block.pilot;
                let mut slot = |theta: &CVec| {
                    let noise = CVec::from_fn(mr, |_, _| complex_gaussian(&mut rng, sigma2));
                    &gb_t * ga_x.component_mul(theta) + &direct + noise
                };
                for w in block.states.windows(2) {
                    let (first, second) = (slot(&w[0]), slot(&w[1]));
                    stacked.extend((second - first).iter().copied());
                }
            }
            CVec::from_vec(stacked)
        })
        .collect();
    ObservationSet::new(schedule.clone(), y, sigma2)
}
