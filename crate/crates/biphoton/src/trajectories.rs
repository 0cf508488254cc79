//! Monte Carlo wavefunction unraveling of the master equation.
//!
//! A trajectory alternates no-jump evolution under the non-Hermitian
//! effective Hamiltonian (fourth-order fixed step, renormalized each step)
//! with random quantum jumps: at each step a uniform `r` is drawn and a jump
//! fires when `r < dp = dt * sum_j <psi|C_j^dag C_j|psi>`, the channel chosen
//! with probability `dp_j / dp`.
//!
//! Both Hamiltonian and jump operators are excitation-weight definite, so
//! between jumps the state occupies a single eigenspace of
//! `N = |e><e| + a^dag a + b^dag b / 2` and the propagation runs on that
//! manifold's small block of `H_e` — an exact representation change that
//! keeps the per-step cost at a handful of flops (manifold dimensions are
//! 1 to ~6 at the truncations of interest). A unit test pins the blocked
//! propagation against full-space integration.
//!
//! Randomness is a counter-based ChaCha12 generator; trajectory `k` of a run
//! seeded with `s` uses stream `k` of seed `s`, so ensembles are reproducible
//! under any dispatch order.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::io::{self, Write};

use crate::hilbert::excitation_key;
use crate::model::{build_h_effective, CollapseChannel, TwoLevelParams};
use crate::{Error, Result, SpaceSpec};

/// Runtime guard: a step whose total jump probability reaches this aborts.
pub const MAX_STEP_JUMP_PROBABILITY: f64 = 0.1;
/// Config-time invariant: `dt * max total jump rate` must stay below this.
pub const DT_RATE_BUDGET: f64 = 0.01;

#[derive(Clone, Copy, Debug)]
pub struct TrajectoryConfig {
    pub params: TwoLevelParams,
    pub spec: SpaceSpec,
    pub t_max: f64,
    pub dt: f64,
    pub seed: u64,
    /// Population sampling period in steps.
    pub sample_stride: usize,
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.t_max > 0.0) {
            return Err(Error::InvalidParams("t_max must be > 0".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParams("dt must be > 0".into()));
        }
        if self.sample_stride == 0 {
            return Err(Error::InvalidParams("sample_stride must be >= 1".into()));
        }
        let rate = max_total_jump_rate(&self.params, &self.spec);
        if self.dt * rate >= DT_RATE_BUDGET {
            return Err(Error::StepSize(format!(
                "dt * max jump rate = {:.3e} >= {DT_RATE_BUDGET}; need dt < {:.3e}",
                self.dt * rate,
                DT_RATE_BUDGET / rate
            )));
        }
        Ok(())
    }
}

/// Largest total jump rate over the basis states of the space,
/// `max_{i,j,k} [kappa1 j + kappa2 k + (P for |g>, gamma for |e>)]`.
pub fn max_total_jump_rate(params: &TwoLevelParams, spec: &SpaceSpec) -> f64 {
    let mut worst = 0.0f64;
    for idx in 0..spec.dim() {
        let (i, j, k) = spec.labels(idx);
        let atom = if i == 0 { params.pump } else { params.gamma };
        worst = worst.max(params.kappa1 * j as f64 + params.kappa2 * k as f64 + atom);
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: CollapseChannel,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PopulationSample {
    pub time: f64,
    pub pop_e: f64,
    pub n_a: f64,
    pub n_b: f64,
    /// `<N>`; constant between jumps.
    pub excitation: f64,
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub trajectory_id: u64,
    pub events: Vec<JumpEvent>,
    pub samples: Vec<PopulationSample>,
}

/// Per-channel jump counters.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct ChannelCounts {
    pub a_photon: u64,
    pub b_photon: u64,
    pub decay: u64,
    pub pump: u64,
}

impl ChannelCounts {
    pub fn get(&self, ch: CollapseChannel) -> u64 {
        match ch {
            CollapseChannel::APhoton => self.a_photon,
            CollapseChannel::BPhoton => self.b_photon,
            CollapseChannel::Decay => self.decay,
            CollapseChannel::Pump => self.pump,
        }
    }

    fn bump(&mut self, ch: CollapseChannel) {
        match ch {
            CollapseChannel::APhoton => self.a_photon += 1,
            CollapseChannel::BPhoton => self.b_photon += 1,
            CollapseChannel::Decay => self.decay += 1,
            CollapseChannel::Pump => self.pump += 1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct JumpStats {
    pub counts: ChannelCounts,
    pub cascade_count: u64,
    pub mean_intra_cascade_gap: Option<f64>,
    /// `100 * (count[B_PHOTON]/2) / count[PUMP]` in percent.
    pub eta_estimate: f64,
    /// Binomial standard error of the estimate, in percentage points.
    pub eta_stderr: f64,
}

// ---------------------------------------------------------------------------
// manifold-blocked engine
// ---------------------------------------------------------------------------

struct BlockChannel {
    channel: CollapseChannel,
    target: usize,
    /// local src -> (local dst, amplitude), already sqrt(rate)-scaled
    map: Vec<Option<(usize, f64)>>,
    /// rate * (c^dag c) diagonal per local src (= amplitude^2)
    weight: Vec<f64>,
}

struct Manifold {
    dim: usize,
    /// H_e block, row-major
    h_eff: Vec<C64>,
    channels: Vec<BlockChannel>,
    /// diagonal observable weights per local index
    w_pop_e: Vec<f64>,
    w_n_a: Vec<f64>,
    w_n_b: Vec<f64>,
    excitation: f64,
}

pub(crate) struct BlockedSpace {
    manifolds: Vec<Manifold>,
    /// (manifold, local) of |e,0,0>
    init: (usize, usize),
    max_dim: usize,
}

impl BlockedSpace {
    pub(crate) fn build(params: &TwoLevelParams, spec: &SpaceSpec) -> Result<BlockedSpace> {
        if spec.atom_levels() != 2 {
            return Err(Error::Unsupported(
                "trajectories run on the two-level model".into(),
            ));
        }
        let d = spec.dim();
        let h_eff = build_h_effective(params, spec)?;

        let mut keys: Vec<i64> = (0..d).map(|i| excitation_key(spec, i)).collect();
        let mut distinct = keys.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let manifold_of_key = |k: i64| distinct.binary_search(&k).unwrap();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); distinct.len()];
        for idx in 0..d {
            members[manifold_of_key(keys[idx])].push(idx);
        }
        keys.clear();

        // local position of a global basis index
        let mut local_of = vec![(usize::MAX, usize::MAX); d];
        for (m, list) in members.iter().enumerate() {
            for (l, &g) in list.iter().enumerate() {
                local_of[g] = (m, l);
            }
        }

        let channel_defs: [(CollapseChannel, f64); 4] = [
            (CollapseChannel::APhoton, params.kappa1),
            (CollapseChannel::BPhoton, params.kappa2),
            (CollapseChannel::Decay, params.gamma),
            (CollapseChannel::Pump, params.pump),
        ];

        let mut manifolds = Vec::with_capacity(members.len());
        for list in &members {
            let dim = list.len();
            let mut block = vec![C64::new(0.0, 0.0); dim * dim];
            for (r, &gr) in list.iter().enumerate() {
                for (c, &gc) in list.iter().enumerate() {
                    block[r * dim + c] = h_eff.matrix()[(gr, gc)];
                }
            }
            let mut channels = Vec::new();
            for &(channel, rate) in &channel_defs {
                if rate <= 0.0 {
                    continue;
                }
                let mut map = vec![None; dim];
                let mut weight = vec![0.0; dim];
                let mut target = usize::MAX;
                for (l, &g) in list.iter().enumerate() {
                    let (i, j, k) = spec.labels(g);
                    let dst = match channel {
                        CollapseChannel::APhoton if j >= 1 => {
                            Some((spec.index(i, j - 1, k), rate * j as f64))
                        }
                        CollapseChannel::BPhoton if k >= 1 => {
                            Some((spec.index(i, j, k - 1), rate * k as f64))
                        }
                        CollapseChannel::Decay if i == 1 => {
                            Some((spec.index(0, j, k), rate))
                        }
                        CollapseChannel::Pump if i == 0 => {
                            Some((spec.index(1, j, k), rate))
                        }
                        _ => None,
                    };
                    if let Some((gdst, w)) = dst {
                        let (m_dst, l_dst) = local_of[gdst];
                        debug_assert!(target == usize::MAX || target == m_dst);
                        target = m_dst;
                        map[l] = Some((l_dst, w.sqrt()));
                        weight[l] = w;
                    }
                }
                if target != usize::MAX {
                    channels.push(BlockChannel {
                        channel,
                        target,
                        map,
                        weight,
                    });
                }
            }
            let mut w_pop_e = vec![0.0; dim];
            let mut w_n_a = vec![0.0; dim];
            let mut w_n_b = vec![0.0; dim];
            for (l, &g) in list.iter().enumerate() {
                let (i, j, k) = spec.labels(g);
                w_pop_e[l] = if i == 1 { 1.0 } else { 0.0 };
                w_n_a[l] = j as f64;
                w_n_b[l] = k as f64;
            }
            let excitation = excitation_key(spec, list[0]) as f64 / 2.0;
            manifolds.push(Manifold {
                dim,
                h_eff: block,
                channels,
                w_pop_e,
                w_n_a,
                w_n_b,
                excitation,
            });
        }
        let init = local_of[spec.index(1, 0, 0)];
        let max_dim = manifolds.iter().map(|m| m.dim).max().unwrap_or(1);
        Ok(BlockedSpace {
            manifolds,
            init,
            max_dim,
        })
    }

    /// One RK4 step of `psi' = -i H_e psi` on a manifold block, without
    /// renormalization.
    pub(crate) fn rk4_step(&self, manifold: usize, psi: &mut [C64], dt: f64, scratch: &mut Scratch) {
        let m = &self.manifolds[manifold];
        let n = m.dim;
        let matvec = |h: &[C64], x: &[C64], y: &mut [C64]| {
            for r in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                let row = &h[r * n..(r + 1) * n];
                for c in 0..n {
                    acc += row[c] * x[c];
                }
                y[r] = C64::new(acc.im, -acc.re); // -i * (H psi)
            }
        };
        let (k1, k2, k3, k4, tmp) = scratch.split(n);
        matvec(&m.h_eff, psi, k1);
        for i in 0..n {
            tmp[i] = psi[i] + 0.5 * dt * k1[i];
        }
        matvec(&m.h_eff, tmp, k2);
        for i in 0..n {
            tmp[i] = psi[i] + 0.5 * dt * k2[i];
        }
        matvec(&m.h_eff, tmp, k3);
        for i in 0..n {
            tmp[i] = psi[i] + dt * k3[i];
        }
        matvec(&m.h_eff, tmp, k4);
        for i in 0..n {
            psi[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

pub(crate) struct Scratch {
    buf: Vec<C64>,
}

impl Scratch {
    fn new(max_dim: usize) -> Scratch {
        Scratch {
            buf: vec![C64::new(0.0, 0.0); 5 * max_dim],
        }
    }

    #[allow(clippy::type_complexity)]
    fn split(
        &mut self,
        n: usize,
    ) -> (&mut [C64], &mut [C64], &mut [C64], &mut [C64], &mut [C64]) {
        let (a, rest) = self.buf.split_at_mut(n);
        let (b, rest) = rest.split_at_mut(n);
        let (c, rest) = rest.split_at_mut(n);
        let (d, rest) = rest.split_at_mut(n);
        let (e, _) = rest.split_at_mut(n);
        (a, b, c, d, e)
    }
}

fn normalize(psi: &mut [C64]) -> f64 {
    let n2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if n2 > 0.0 {
        let inv = 1.0 / n2.sqrt();
        for z in psi.iter_mut() {
            *z *= inv;
        }
    }
    n2
}

fn run_single(
    space: &BlockedSpace,
    config: &TrajectoryConfig,
    trajectory_id: u64,
) -> Result<TrajectoryRecord> {
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    rng.set_stream(trajectory_id);

    let steps = (config.t_max / config.dt).ceil() as u64;
    let mut manifold = space.init.0;
    let mut psi = vec![C64::new(0.0, 0.0); space.max_dim];
    let mut next = vec![C64::new(0.0, 0.0); space.max_dim];
    let mut scratch = Scratch::new(space.max_dim);
    psi[space.init.1] = C64::new(1.0, 0.0);
    let mut dim = space.manifolds[manifold].dim;

    let mut events = Vec::new();
    let mut samples = Vec::new();
    let record_sample = |samples: &mut Vec<PopulationSample>,
                         m: &Manifold,
                         psi: &[C64],
                         time: f64| {
        let mut pop_e = 0.0;
        let mut n_a = 0.0;
        let mut n_b = 0.0;
        for (l, z) in psi.iter().enumerate().take(m.dim) {
            let p = z.norm_sqr();
            pop_e += p * m.w_pop_e[l];
            n_a += p * m.w_n_a[l];
            n_b += p * m.w_n_b[l];
        }
        samples.push(PopulationSample {
            time,
            pop_e,
            n_a,
            n_b,
            excitation: m.excitation,
        });
    };

    record_sample(&mut samples, &space.manifolds[manifold], &psi[..dim], 0.0);
    for step in 1..=steps {
        let t_next = step as f64 * config.dt;
        let m = &space.manifolds[manifold];
        // total jump probability of this step
        let mut dp_total = 0.0;
        for ch in &m.channels {
            let mut w = 0.0;
            for l in 0..dim {
                w += ch.weight[l] * psi[l].norm_sqr();
            }
            dp_total += w * config.dt;
        }
        if dp_total >= MAX_STEP_JUMP_PROBABILITY {
            return Err(Error::StepSize(format!(
                "jump probability {dp_total:.3} reached {MAX_STEP_JUMP_PROBABILITY} at t = {t_next:.4}"
            )));
        }
        let r: f64 = rng.gen();
        if r < dp_total {
            // select channel by scanning the cumulative probabilities
            let mut acc = 0.0;
            let mut chosen = None;
            for ch in &m.channels {
                let mut w = 0.0;
                for l in 0..dim {
                    w += ch.weight[l] * psi[l].norm_sqr();
                }
                acc += w * config.dt;
                if r < acc {
                    chosen = Some(ch);
                    break;
                }
            }
            let ch = chosen.expect("cumulative probabilities cover r < dp");
            let tgt = &space.manifolds[ch.target];
            next[..tgt.dim].fill(C64::new(0.0, 0.0));
            for l in 0..dim {
                if let Some((dst, amp)) = ch.map[l] {
                    next[dst] += amp * psi[l];
                }
            }
            std::mem::swap(&mut psi, &mut next);
            manifold = ch.target;
            dim = tgt.dim;
            normalize(&mut psi[..dim]);
            events.push(JumpEvent {
                time: t_next,
                channel: ch.channel,
            });
        } else if dim == 1 {
            // single-state manifold: renormalized no-jump evolution is the
            // identity up to a global phase
        } else {
            space.rk4_step(manifold, &mut psi[..dim], config.dt, &mut scratch);
            normalize(&mut psi[..dim]);
        }
        if step % config.sample_stride as u64 == 0 {
            record_sample(&mut samples, &space.manifolds[manifold], &psi[..dim], t_next);
        }
    }
    Ok(TrajectoryRecord {
        trajectory_id,
        events,
        samples,
    })
}

/// Run a single trajectory (stream 0 of the configured seed) from `|e,0,0>`.
pub fn run_trajectory(config: &TrajectoryConfig) -> Result<TrajectoryRecord> {
    run_trajectory_stream(config, 0)
}

/// Run one trajectory on a chosen RNG stream.
pub fn run_trajectory_stream(config: &TrajectoryConfig, stream: u64) -> Result<TrajectoryRecord> {
    config.validate()?;
    let space = BlockedSpace::build(&config.params, &config.spec)?;
    run_single(&space, config, stream)
}

/// Run trajectories `0..n`, dispatched in parallel, merged in index order.
pub fn run_ensemble(config: &TrajectoryConfig, n: usize) -> Result<Vec<TrajectoryRecord>> {
    config.validate()?;
    if n == 0 {
        return Err(Error::InvalidParams("ensemble size must be >= 1".into()));
    }
    let space = BlockedSpace::build(&config.params, &config.spec)?;
    (0..n as u64)
        .into_par_iter()
        .map(|id| run_single(&space, config, id))
        .collect()
}

/// Detect cascades: two consecutive B_PHOTON events with no intervening
/// event of any other channel. Pairs are matched greedily from the left and
/// do not overlap.
pub fn cascade_detect(record: &TrajectoryRecord) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + 1 < record.events.len() {
        if record.events[i].channel == CollapseChannel::BPhoton
            && record.events[i + 1].channel == CollapseChannel::BPhoton
        {
            out.push((record.events[i].time, record.events[i + 1].time));
            i += 2;
        } else {
            i += 1;
        }
    }
    out
}

/// Aggregate jump statistics over an ensemble. The efficiency estimator is
/// `100 * (count[B_PHOTON]/2) / count[PUMP]` with a binomial standard error
/// per pump cycle.
pub fn jump_statistics(records: &[TrajectoryRecord]) -> Result<JumpStats> {
    if records.is_empty() {
        return Err(Error::UndefinedEstimate("no trajectory records".into()));
    }
    let mut counts = ChannelCounts::default();
    let mut cascade_count = 0u64;
    let mut gap_sum = 0.0;
    for rec in records {
        for ev in &rec.events {
            counts.bump(ev.channel);
        }
        for (t1, t2) in cascade_detect(rec) {
            cascade_count += 1;
            gap_sum += t2 - t1;
        }
    }
    if counts.pump == 0 {
        return Err(Error::UndefinedEstimate(
            "no pump events; the efficiency estimator is undefined".into(),
        ));
    }
    let pairs = counts.b_photon as f64 / 2.0;
    let pump = counts.pump as f64;
    let eta_estimate = 100.0 * pairs / pump;
    let p_hat = (pairs / pump).clamp(0.0, 1.0);
    let eta_stderr = 100.0 * (p_hat * (1.0 - p_hat) / pump).sqrt();
    Ok(JumpStats {
        counts,
        cascade_count,
        mean_intra_cascade_gap: if cascade_count > 0 {
            Some(gap_sum / cascade_count as f64)
        } else {
            None
        },
        eta_estimate,
        eta_stderr,
    })
}

/// Ensemble-averaged populations on the shared sample grid.
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleSeries {
    pub times: Vec<f64>,
    pub pop_e: Vec<f64>,
    pub n_a: Vec<f64>,
    pub n_b: Vec<f64>,
    pub stderr_pop_e: Vec<f64>,
    pub stderr_n_a: Vec<f64>,
    pub stderr_n_b: Vec<f64>,
    pub n_trajectories: usize,
}

/// Average `n` trajectories of the same configuration.
pub fn ensemble_average(config: &TrajectoryConfig, n: usize) -> Result<EnsembleSeries> {
    let records = run_ensemble(config, n)?;
    let n_samples = records
        .iter()
        .map(|r| r.samples.len())
        .min()
        .unwrap_or(0);
    let nf = records.len() as f64;
    let mut out = EnsembleSeries {
        times: Vec::with_capacity(n_samples),
        pop_e: vec![0.0; n_samples],
        n_a: vec![0.0; n_samples],
        n_b: vec![0.0; n_samples],
        stderr_pop_e: vec![0.0; n_samples],
        stderr_n_a: vec![0.0; n_samples],
        stderr_n_b: vec![0.0; n_samples],
        n_trajectories: records.len(),
    };
    for s in 0..n_samples {
        out.times.push(records[0].samples[s].time);
        let mut acc = [0.0f64; 3];
        let mut acc2 = [0.0f64; 3];
        for rec in &records {
            let smp = &rec.samples[s];
            for (k, v) in [smp.pop_e, smp.n_a, smp.n_b].into_iter().enumerate() {
                acc[k] += v;
                acc2[k] += v * v;
            }
        }
        let mean = acc.map(|a| a / nf);
        let sem = |k: usize| {
            if records.len() < 2 {
                0.0
            } else {
                let var = (acc2[k] / nf - mean[k] * mean[k]).max(0.0) * nf / (nf - 1.0);
                (var / nf).sqrt()
            }
        };
        out.pop_e[s] = mean[0];
        out.n_a[s] = mean[1];
        out.n_b[s] = mean[2];
        out.stderr_pop_e[s] = sem(0);
        out.stderr_n_a[s] = sem(1);
        out.stderr_n_b[s] = sem(2);
    }
    Ok(out)
}

/// CSV event log: one row per event, columns `trajectory_id,time,channel`.
pub fn write_event_log<W: Write>(records: &[TrajectoryRecord], w: &mut W) -> io::Result<()> {
    writeln!(w, "trajectory_id,time,channel")?;
    for rec in records {
        for ev in &rec.events {
            writeln!(w, "{},{},{}", rec.trajectory_id, ev.time, ev.channel)?;
        }
    }
    Ok(())
}
