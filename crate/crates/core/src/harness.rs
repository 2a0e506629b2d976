//! Monte Carlo campaigns: channel-estimation sweeps and sequential
//! localization runs, with deterministic per-trial seeding and CSV output.
//!
//! Every trial seed is derived from the master seed and the trial's own
//! coordinates (antenna count, IRS size, SNR, trial index), never from its
//! position in the sweep, so adding or reordering sweep points leaves the other
//! points' numbers unchanged. Channel realizations depend only on
//! `(M, N, trial)`, which gives common random numbers across SNRs, power
//! budgets and waveform arms.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chanest::{initialize, normalized_error, pairwise_products, refine_traced};
use crate::linalg::{CMat, CVec};
use crate::localize::{
    random_phases, random_waveform, run_cycle, terminate, BeliefState, CycleRow, HypothesisGrid, LocalizationContext,
};
use crate::pilot::{build_schedule, simulate_pilot_round};
use crate::rng::{derive_seed, rng_from};
use crate::scene::{db_to_lin, synthesize_scene, Scene, SceneConfig};
use crate::waveopt::{optimize, DistanceContext, OptimizerParams};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

const TAG_SCENE: u64 = 0x5343;
const TAG_PILOT: u64 = 0x5049;
const TAG_THETA0: u64 = 0x5430;
const TAG_ECHO: u64 = 0x4543;
const TAG_RANDOM: u64 = 0x5241;

fn one() -> u32 {
    1
}

/// How many differential observations each subframe uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum Overhead {
    /// `C = N · Mt`.
    #[default]
    Minimal,
    /// Same total overhead `C · C(M, Mt)` as the minimal schedule with `mt`
    /// transmit antennas.
    EqualTo { mt: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PilotParams {
    pub overhead: Overhead,
    /// Anchor column for the geometric-mean initialization.
    pub anchor: usize,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for PilotParams {
    fn default() -> Self {
        Self { overhead: Overhead::Minimal, anchor: 0, max_sweeps: 300, tol: 1e-8 }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

impl PilotParams {
    /// `C` for a given `(M, Mt, N)`.
    pub fn observations(&self, m: usize, mt: usize, n: usize) -> Result<usize> {
        match self.overhead {
            Overhead::Minimal => Ok(n * mt),
            Overhead::EqualTo { mt: reference } => {
                if reference == 0 || reference >= m {
                    return Err(Error::Config(format!("overhead reference Mt = {reference} invalid for M = {m}")));
                }
                Ok(n * reference * binomial(m, reference) / binomial(m, mt))
            }
        }
    }
}

/// Sweep axes of a channel-estimation campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChanestSweep {
    pub snr_db: Vec<f64>,
    pub m: Vec<usize>,
    /// IRS rows; the column count comes from `scene.nx`.
    pub ny: Vec<usize>,
    pub mt: Vec<usize>,
    /// Also record mean NE per refinement sweep.
    #[serde(default)]
    pub record_convergence: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Waveform and IRS phases from the distance-maximizing optimizer.
    Optimized,
    /// Waveform and IRS phases drawn at random every cycle.
    Random,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Optimized => "optimized",
            Arm::Random => "random",
        }
    }
}

fn default_arms() -> Vec<Arm> {
    vec![Arm::Optimized]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationParams {
    pub grids: usize,
    pub theta_lo_deg: f64,
    pub theta_hi_deg: f64,
    /// Azimuth of the grid; defaults to the target azimuth.
    #[serde(default)]
    pub phi_deg: Option<f64>,
    pub snapshots: usize,
    pub threshold: f64,
    pub max_cycles: usize,
    /// Cycle at which the summary reports the decided-correct fraction.
    pub decision_cycle: usize,
    pub pb_w: Vec<f64>,
    pub m: Vec<usize>,
    pub ny: Vec<usize>,
    #[serde(default = "default_arms")]
    pub arms: Vec<Arm>,
    /// SNR of the channel-estimation stage preceding localization.
    pub chanest_snr_db: f64,
    /// Transmit antennas in the channel-estimation stage.
    #[serde(default = "one_usize")]
    pub chanest_mt: usize,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Initial penalty parameter; `null` derives it from the starting distance.
    pub rho0: Option<f64>,
    pub c_pen: f64,
    pub eps: f64,
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let p = OptimizerParams::new(1.0);
        Self {
            rho0: p.rho0,
            c_pen: p.c_pen,
            eps: p.eps,
            inner_tol: p.inner_tol,
            max_outer: p.max_outer,
            max_inner: p.max_inner,
        }
    }
}

impl OptimizerConfig {
    pub fn params(&self, power: f64) -> OptimizerParams {
        OptimizerParams {
            power,
            rho0: self.rho0,
            c_pen: self.c_pen,
            eps: self.eps,
            inner_tol: self.inner_tol,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
        }
    }
}

/// Reduced-size overrides applied by `--desk-scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskScale {
    pub trials: usize,
    #[serde(default)]
    pub nx: Option<usize>,
    #[serde(default)]
    pub ny: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "one")]
    pub schema_version: u32,
    pub name: String,
    pub scene: SceneConfig,
    #[serde(default)]
    pub pilot: PilotParams,
    #[serde(default)]
    pub chanest: Option<ChanestSweep>,
    #[serde(default)]
    pub localization: Option<LocalizationParams>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub desk_scale: Option<DeskScale>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        self.scene.validate()?;
        if self.chanest.is_none() && self.localization.is_none() {
            return Err(Error::Config("spec defines neither a chanest nor a localization campaign".into()));
        }
        if let Some(c) = &self.chanest {
            if c.snr_db.is_empty() || c.m.is_empty() || c.ny.is_empty() || c.mt.is_empty() {
                return Err(Error::Config("chanest sweep axes must be non-empty".into()));
            }
        }
        if let Some(l) = &self.localization {
            if l.pb_w.is_empty() || l.m.is_empty() || l.ny.is_empty() || l.arms.is_empty() {
                return Err(Error::Config("localization sweep axes must be non-empty".into()));
            }
            if l.snapshots == 0 || l.max_cycles == 0 || l.grids == 0 {
                return Err(Error::Config("snapshots, max_cycles and grids must be positive".into()));
            }
            if !(l.threshold > 0.0 && l.threshold <= 1.0) {
                return Err(Error::Config(format!("threshold must lie in (0, 1], got {}", l.threshold)));
            }
            if l.pb_w.iter().any(|p| !(*p > 0.0)) {
                return Err(Error::Config("power budgets must be positive".into()));
            }
        }
        self.optimizer.params(1.0).rho0.map_or(Ok(()), |r| {
            if r > 0.0 {
                Ok(())
            } else {
                Err(Error::Config("rho0 must be positive".into()))
            }
        })
    }

    /// Applies the reduced-size preset, if the spec carries one.
    pub fn apply_desk_scale(&mut self) {
        let Some(desk) = self.desk_scale.clone() else { return };
        self.trials = desk.trials.max(1);
        if let Some(nx) = desk.nx {
            self.scene.nx = nx;
        }
        if let Some(ny) = desk.ny {
            if let Some(c) = &mut self.chanest {
                c.ny = ny.clone();
            }
            if let Some(l) = &mut self.localization {
                l.ny = ny;
            }
        }
    }

    fn scene_for(&self, m: usize, ny: usize) -> SceneConfig {
        SceneConfig { m, ny, ..self.scene.clone() }
    }
}

/// Pilot power giving the requested received SNR `P_t L(d)² / σ²`.
pub fn pilot_power_for_snr(cfg: &SceneConfig, snr_db: f64) -> Result<f64> {
    let pl = cfg.bs_irs_path_loss()?;
    let sigma2 = cfg.noise_power();
    let reference = if sigma2 > 0.0 { sigma2 } else { 1.0 };
    Ok(db_to_lin(snr_db) * reference / (pl * pl))
}

fn scene_seed(master: u64, m: usize, n: usize, trial: usize) -> u64 {
    derive_seed(master, &[TAG_SCENE, m as u64, n as u64, trial as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChanestTrial {
    pub trial: usize,
    pub ne: f64,
    pub sweeps: usize,
    #[serde(skip)]
    pub ne_by_sweep: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChanestPoint {
    pub snr_db: f64,
    pub m: usize,
    pub n: usize,
    pub mt: usize,
    pub c: usize,
    pub ne_mean: f64,
    pub ne_std: f64,
    pub sweeps_mean: f64,
    pub trials: Vec<ChanestTrial>,
    /// Mean NE after each sweep (index 0 is the initialization).
    pub convergence: Vec<f64>,
}

/// Channel estimate for one scene: pilot round, products, init, refinement.
pub fn estimate_for_scene(
    scene: &Scene,
    pilot: &PilotParams,
    mt: usize,
    snr_db: f64,
    noise_seed: u64,
    track: bool,
) -> Result<(CMat, usize, Vec<f64>)> {
    let (m, n) = (scene.m(), scene.n());
    let c = pilot.observations(m, mt, n)?;
    let pt = pilot_power_for_snr(&scene.config, snr_db)?;
    let schedule = build_schedule(m, mt, n, c, pt)?;
    let obs = simulate_pilot_round(scene, &schedule, noise_seed)?;
    let g0 = initialize(&pairwise_products(&obs)?, pilot.anchor)?;
    let truth = track.then_some(&scene.g);
    let (est, trace) = refine_traced(&obs, &g0, pilot.max_sweeps, pilot.tol, truth)?;
    let ne_trace = trace.iter().filter_map(|r| r.ne).collect();
    Ok((est.g_hat, est.iterations_run, ne_trace))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

pub fn run_chanest_campaign(spec: &ExperimentSpec) -> Result<Vec<ChanestPoint>> {
    spec.validate()?;
    let sweep = spec.chanest.as_ref().ok_or_else(|| Error::Config("spec has no chanest section".into()))?;
    let mut points = Vec::new();
    for &m in &sweep.m {
        for &ny in &sweep.ny {
            for &mt in &sweep.mt {
                for &snr in &sweep.snr_db {
                    points.push((m, ny, mt, snr));
                }
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..spec.trials).map(move |t| (p, t))).collect();
    let outcomes: Vec<ChanestTrial> = jobs
        .par_iter()
        .map(|&(p, trial)| {
            let (m, ny, mt, snr) = points[p];
            let cfg = spec.scene_for(m, ny);
            let n = cfg.n();
            let scene = synthesize_scene(&cfg, scene_seed(spec.master_seed, m, n, trial))?;
            let noise =
                derive_seed(spec.master_seed, &[TAG_PILOT, m as u64, n as u64, mt as u64, snr.to_bits(), trial as u64]);
            let (g_hat, sweeps, trace) =
                estimate_for_scene(&scene, &spec.pilot, mt, snr, noise, sweep.record_convergence)?;
            Ok(ChanestTrial { trial, ne: normalized_error(&g_hat, &scene.g)?, sweeps, ne_by_sweep: trace })
        })
        .collect::<Result<_>>()?;
    points
        .iter()
        .enumerate()
        .map(|(p, &(m, ny, mt, snr))| {
            let trials = outcomes[p * spec.trials..(p + 1) * spec.trials].to_vec();
            let ne: Vec<f64> = trials.iter().map(|t| t.ne).collect();
            let (ne_mean, ne_std) = mean_std(&ne);
            let sweeps_mean = trials.iter().map(|t| t.sweeps as f64).sum::<f64>() / trials.len() as f64;
            let longest = trials.iter().map(|t| t.ne_by_sweep.len()).max().unwrap_or(0);
            let convergence = (0..longest)
                .map(|s| {
                    let vals: Vec<f64> = trials.iter().map(|t| t.ne_by_sweep[s.min(t.ne_by_sweep.len() - 1)]).collect();
                    mean_std(&vals).0
                })
                .collect();
            let n = spec.scene.nx * ny;
            Ok(ChanestPoint {
                snr_db: snr,
                m,
                n,
                mt,
                c: spec.pilot.observations(m, mt, n)?,
                ne_mean,
                ne_std,
                sweeps_mean,
                trials,
                convergence,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: usize,
    /// NE of the channel estimate the run started from.
    pub ne: f64,
    /// First cycle at which the belief crossed the threshold.
    pub terminated_at: Option<usize>,
    pub winner: Option<usize>,
    /// Whether the argmax (frozen after termination) is the true grid, per cycle.
    pub correct_by_cycle: Vec<bool>,
}

impl TrialOutcome {
    /// Terminated on the true hypothesis no later than `cycle`.
    pub fn decided_correct_by(&self, cycle: usize, truth: usize) -> bool {
        matches!((self.terminated_at, self.winner), (Some(c), Some(w)) if c <= cycle && w == truth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationPoint {
    pub m: usize,
    pub n: usize,
    pub pb_w: f64,
    pub arm: Arm,
    pub true_hypothesis: usize,
    /// Fraction of trials whose argmax is the true grid, per cycle.
    pub p_correct: Vec<f64>,
    /// Median cycles to threshold, counting unfinished trials as `max_cycles + 1`.
    pub median_cycles: f64,
    pub decided_correct_fraction: f64,
    pub decision_cycle: usize,
    pub outcomes: Vec<TrialOutcome>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Shared per-trial setup: true scene, channel estimate, grid, truth index.
pub struct TrialSetup {
    pub scene: Scene,
    pub g_hat: CMat,
    pub ne: f64,
    pub grid: HypothesisGrid,
    pub truth: usize,
    pub seed: u64,
}

pub fn prepare_trial(spec: &ExperimentSpec, m: usize, ny: usize, trial: usize) -> Result<TrialSetup> {
    let loc = spec.localization.as_ref().ok_or_else(|| Error::Config("spec has no localization section".into()))?;
    let cfg = spec.scene_for(m, ny);
    let n = cfg.n();
    let seed = scene_seed(spec.master_seed, m, n, trial);
    let scene = synthesize_scene(&cfg, seed)?;
    let noise = derive_seed(seed, &[TAG_PILOT, loc.chanest_snr_db.to_bits()]);
    let (g_hat, _, _) = estimate_for_scene(&scene, &spec.pilot, loc.chanest_mt, loc.chanest_snr_db, noise, false)?;
    let ne = normalized_error(&g_hat, &scene.g)?;
    let phi = loc.phi_deg.unwrap_or(cfg.target_phi_deg);
    let grid = HypothesisGrid::uniform(loc.theta_lo_deg, loc.theta_hi_deg, loc.grids, phi, &cfg)?;
    let truth = grid.index_of(cfg.target_theta_deg).ok_or_else(|| {
        Error::Config(format!(
            "target elevation {} lies outside the grid [{}, {})",
            cfg.target_theta_deg, loc.theta_lo_deg, loc.theta_hi_deg
        ))
    })?;
    Ok(TrialSetup { scene, g_hat, ne, grid, truth, seed })
}

/// First-cycle waveform `sqrt(P_b/M)·1` and seeded random IRS phases.
pub fn initial_point(setup: &TrialSetup, pb_w: f64) -> (CVec, CVec) {
    let m = setup.scene.m();
    let x = CVec::from_element(m, Complex64::new((pb_w / m as f64).sqrt(), 0.0));
    (x, random_phases(&mut rng_from(setup.seed, &[TAG_THETA0]), setup.scene.n()))
}

fn context(loc: &LocalizationParams, setup: &TrialSetup) -> LocalizationContext {
    LocalizationContext {
        grid: setup.grid.clone(),
        g_hat: setup.g_hat.clone(),
        snapshots: loc.snapshots,
        sigma2: setup.scene.noise_power(),
    }
}

/// Belief after the first cycle of a trial, the point at which the first
/// waveform design takes place.
pub fn first_cycle_belief(spec: &ExperimentSpec, setup: &TrialSetup, pb_w: f64) -> Result<BeliefState> {
    let loc = spec.localization.as_ref().ok_or_else(|| Error::Config("spec has no localization section".into()))?;
    let (x, theta) = initial_point(setup, pb_w);
    let belief = BeliefState::uniform(setup.grid.len(), setup.scene.n());
    let seed = derive_seed(setup.seed, &[TAG_ECHO, 1]);
    Ok(run_cycle(&setup.scene, &context(loc, setup), &belief, &x, &theta, seed)?.0)
}

/// Runs one arm of one trial, optionally collecting per-cycle diagnostics.
pub fn run_arm(
    spec: &ExperimentSpec,
    setup: &TrialSetup,
    arm: Arm,
    pb_w: f64,
    mut rows: Option<&mut Vec<CycleRow>>,
) -> Result<TrialOutcome> {
    let loc = spec.localization.as_ref().expect("checked by prepare_trial");
    let (m, n) = (setup.scene.m(), setup.scene.n());
    let ctx = context(loc, setup);
    let (mut x, mut theta) = initial_point(setup, pb_w);
    let mut belief = BeliefState::uniform(setup.grid.len(), n);
    let mut correct = Vec::with_capacity(loc.max_cycles);
    let mut decision = None;
    for cycle in 1..=loc.max_cycles {
        let echo_seed = derive_seed(setup.seed, &[TAG_ECHO, cycle as u64]);
        let (next, cycle_rows) = run_cycle(&setup.scene, &ctx, &belief, &x, &theta, echo_seed)?;
        belief = next;
        if let Some(r) = rows.as_deref_mut() {
            r.extend(cycle_rows);
        }
        if let Some(d) = terminate(&belief, loc.threshold, &setup.g_hat) {
            decision = Some((cycle, d.winner));
            correct.resize(loc.max_cycles, d.winner == setup.truth);
            break;
        }
        correct.push(belief.argmax() == setup.truth);
        if cycle == loc.max_cycles {
            break;
        }
        match arm {
            Arm::Optimized => {
                let dctx = DistanceContext::from_belief(&setup.grid, &setup.g_hat, &belief, loc.snapshots, ctx.sigma2)?;
                let res = optimize(&dctx, &x, &theta, &spec.optimizer.params(pb_w))?;
                x = res.x;
                theta = res.theta;
            }
            Arm::Random => {
                let mut rng = rng_from(setup.seed, &[TAG_RANDOM, cycle as u64]);
                x = random_waveform(&mut rng, m, pb_w);
                theta = random_phases(&mut rng, n);
            }
        }
    }
    Ok(TrialOutcome {
        trial: 0,
        ne: setup.ne,
        terminated_at: decision.map(|d| d.0),
        winner: decision.map(|d| d.1),
        correct_by_cycle: correct,
    })
}

pub fn run_localization_campaign(spec: &ExperimentSpec) -> Result<Vec<LocalizationPoint>> {
    spec.validate()?;
    let loc = spec.localization.as_ref().ok_or_else(|| Error::Config("spec has no localization section".into()))?;
    let hardware: Vec<(usize, usize)> = loc.m.iter().flat_map(|&m| loc.ny.iter().map(move |&ny| (m, ny))).collect();
    let variants: Vec<(f64, Arm)> = loc.pb_w.iter().flat_map(|&p| loc.arms.iter().map(move |&a| (p, a))).collect();
    let jobs: Vec<(usize, usize)> = (0..hardware.len()).flat_map(|h| (0..spec.trials).map(move |t| (h, t))).collect();
    let per_job: Vec<(usize, Vec<TrialOutcome>)> = jobs
        .par_iter()
        .map(|&(h, trial)| {
            let (m, ny) = hardware[h];
            let setup = prepare_trial(spec, m, ny, trial)?;
            let outs = variants
                .iter()
                .map(|&(pb, arm)| {
                    let mut o = run_arm(spec, &setup, arm, pb, None)?;
                    o.trial = trial;
                    Ok(o)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((setup.truth, outs))
        })
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    for (h, &(m, ny)) in hardware.iter().enumerate() {
        let block = &per_job[h * spec.trials..(h + 1) * spec.trials];
        let truth = block[0].0;
        for (v, &(pb_w, arm)) in variants.iter().enumerate() {
            let outcomes: Vec<TrialOutcome> = block.iter().map(|(_, o)| o[v].clone()).collect();
            let k = outcomes.len() as f64;
            let p_correct = (0..loc.max_cycles)
                .map(|c| outcomes.iter().filter(|o| o.correct_by_cycle[c]).count() as f64 / k)
                .collect();
            let cycles: Vec<f64> =
                outcomes.iter().map(|o| o.terminated_at.map_or(loc.max_cycles as f64 + 1.0, |c| c as f64)).collect();
            let decided =
                outcomes.iter().filter(|o| o.decided_correct_by(loc.decision_cycle, truth)).count() as f64 / k;
            points.push(LocalizationPoint {
                m,
                n: spec.scene.nx * ny,
                pb_w,
                arm,
                true_hypothesis: truth,
                p_correct,
                median_cycles: median(cycles),
                decided_correct_fraction: decided,
                decision_cycle: loc.decision_cycle,
                outcomes,
            });
        }
    }
    Ok(points)
}

/// Trailing line every emitted CSV carries.
pub fn manifest_footer() -> String {
    format!("# manifest={MANIFEST_FILE} schema_version={SCHEMA_VERSION}\n")
}

pub fn chanest_csv(points: &[ChanestPoint]) -> String {
    let mut s = String::from("snr_db,M,N,Mt,ne_mean,ne_std\n");
    for p in points {
        s += &format!("{},{},{},{},{},{}\n", p.snr_db, p.m, p.n, p.mt, p.ne_mean, p.ne_std);
    }
    s + &manifest_footer()
}

pub fn chanest_trials_csv(points: &[ChanestPoint]) -> String {
    let mut s = String::from("snr_db,M,N,Mt,C,trial,ne,sweeps\n");
    for p in points {
        for t in &p.trials {
            s += &format!("{},{},{},{},{},{},{},{}\n", p.snr_db, p.m, p.n, p.mt, p.c, t.trial, t.ne, t.sweeps);
        }
    }
    s + &manifest_footer()
}

pub fn convergence_csv(points: &[ChanestPoint]) -> String {
    let mut s = String::from("snr_db,M,N,Mt,sweep,ne_mean\n");
    for p in points {
        for (k, ne) in p.convergence.iter().enumerate() {
            s += &format!("{},{},{},{},{},{}\n", p.snr_db, p.m, p.n, p.mt, k, ne);
        }
    }
    s + &manifest_footer()
}

pub fn localization_curve_csv(points: &[LocalizationPoint]) -> String {
    let mut s = String::from("M,N,pb_w,arm,cycle,p_correct\n");
    for p in points {
        for (c, v) in p.p_correct.iter().enumerate() {
            s += &format!("{},{},{},{},{},{}\n", p.m, p.n, p.pb_w, p.arm.name(), c + 1, v);
        }
    }
    s + &manifest_footer()
}

pub fn localization_summary_csv(points: &[LocalizationPoint]) -> String {
    let mut s = String::from("M,N,pb_w,arm,true_hypothesis,median_cycles,decision_cycle,decided_correct_fraction\n");
    for p in points {
        s += &format!(
            "{},{},{},{},{},{},{},{}\n",
            p.m,
            p.n,
            p.pb_w,
            p.arm.name(),
            p.true_hypothesis,
            p.median_cycles,
            p.decision_cycle,
            p.decided_correct_fraction
        );
    }
    s + &manifest_footer()
}

pub fn localization_trials_csv(points: &[LocalizationPoint]) -> String {
    let mut s = String::from("M,N,pb_w,arm,trial,ne,cycles_to_threshold,winner\n");
    for p in points {
        for o in &p.outcomes {
            let cyc = o.terminated_at.map_or(String::new(), |c| c.to_string());
            let win = o.winner.map_or(String::new(), |w| w.to_string());
            s += &format!("{},{},{},{},{},{},{},{}\n", p.m, p.n, p.pb_w, p.arm.name(), o.trial, o.ne, cyc, win);
        }
    }
    s + &manifest_footer()
}

#[derive(Debug, Serialize)]
struct Manifest<'a, T: Serialize> {
    schema_version: u32,
    generator: &'a str,
    version: &'a str,
    command: &'a str,
    master_seed: Option<u64>,
    files: Vec<String>,
    input: &'a T,
}

/// Writes the named CSV bodies and a manifest holding the resolved input
/// (an [`ExperimentSpec`] for campaigns).
pub fn write_outputs<T: Serialize>(
    dir: &Path,
    command: &str,
    master_seed: Option<u64>,
    input: &T,
    files: &[(&str, String)],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::File::create(&path)?.write_all(body.as_bytes())?;
        written.push(path);
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        generator: "irsloc",
        version: env!("CARGO_PKG_VERSION"),
        command,
        master_seed,
        files: files.iter().map(|(n, _)| n.to_string()).collect(),
        input,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ExperimentSpec {
        ExperimentSpec {
            schema_version: 1,
            name: "tiny".into(),
            scene: SceneConfig { nx: 2, ny: 2, ..SceneConfig::default() },
            pilot: PilotParams::default(),
            chanest: Some(ChanestSweep {
                snr_db: vec![10.0, 20.0],
                m: vec![4],
                ny: vec![2],
                mt: vec![1],
                record_convergence: true,
            }),
            localization: Some(LocalizationParams {
                grids: 4,
                theta_lo_deg: 52.5,
                theta_hi_deg: 72.5,
                phi_deg: None,
                snapshots: 4,
                threshold: 0.95,
                max_cycles: 3,
                decision_cycle: 3,
                pb_w: vec![10.0],
                m: vec![4],
                ny: vec![2],
                arms: vec![Arm::Optimized, Arm::Random],
                chanest_snr_db: 20.0,
                chanest_mt: 1,
            }),
            optimizer: OptimizerConfig::default(),
            trials: 3,
            master_seed: 42,
            desk_scale: None,
        }
    }

    #[test]
    fn spec_roundtrips_and_rejects_typos() {
        let spec = tiny_spec();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(ExperimentSpec::from_json(&text).unwrap(), spec);
        let typo = text.replacen("\"trials\"", "\"trails\"", 1);
        assert!(ExperimentSpec::from_json(&typo).is_err());
        let mut zero = spec.clone();
        zero.trials = 0;
        assert!(zero.validate().is_err());
    }

    #[test]
    fn overhead_rules() {
        let p = PilotParams { overhead: Overhead::EqualTo { mt: 2 }, ..PilotParams::default() };
        assert_eq!(p.observations(4, 1, 25).unwrap(), 75);
        assert_eq!(p.observations(4, 2, 25).unwrap(), 50);
        assert_eq!(PilotParams::default().observations(4, 2, 25).unwrap(), 50);
    }

    #[test]
    fn chanest_campaign_is_deterministic_and_order_free() {
        let spec = tiny_spec();
        let a = run_chanest_campaign(&spec).unwrap();
        let b = run_chanest_campaign(&spec).unwrap();
        assert_eq!(chanest_csv(&a), chanest_csv(&b));
        let mut reordered = spec.clone();
        reordered.chanest.as_mut().unwrap().snr_db = vec![20.0];
        let c = run_chanest_campaign(&reordered).unwrap();
        assert_eq!(c[0].trials, a[1].trials);
        assert!(a[0].convergence.len() > 1);
    }

    #[test]
    fn localization_campaign_shapes() {
        let spec = tiny_spec();
        let pts = run_localization_campaign(&spec).unwrap();
        assert_eq!(pts.len(), 2);
        for p in &pts {
            assert_eq!(p.true_hypothesis, 1);
            assert_eq!(p.outcomes.len(), 3);
            assert!(p.p_correct.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(p.outcomes.iter().all(|o| o.correct_by_cycle.len() == 3));
        }
        let again = run_localization_campaign(&spec).unwrap();
        assert_eq!(localization_curve_csv(&pts), localization_curve_csv(&again));
    }

    #[test]
    fn csv_footer_and_header() {
        let text = chanest_csv(&[]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "snr_db,M,N,Mt,ne_mean,ne_std");
        assert_eq!(lines.last().unwrap(), &"# manifest=manifest.json schema_version=1");
    }

    #[test]
    fn median_rules() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
