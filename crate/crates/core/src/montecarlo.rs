//! Seeded Monte Carlo over fixed-size batches.
//!
//! Batch `b` always draws from stream `b` of the run seed, and batch results
//! are merged in batch order, so totals do not depend on the thread count.
//! With the `parallel` feature batches run on rayon; without it they run in
//! a plain loop.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{batch_rng, ChannelModel};
use crate::circuit::{apply_circuit, CodeCircuit, Direction};
use crate::decoder::erasure::ErasureDecoder;
use crate::decoder::sc::extract_syndrome;
use crate::decoder::{Schedule, ScDecoder};
use crate::error::{Error, Result};
use crate::polarization::{ChannelStats, Role};

pub const DEFAULT_BATCH: u64 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub trials: u64,
    pub seed: u64,
    pub batch_size: u64,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
}

impl McConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        McConfig { trials, seed, batch_size: DEFAULT_BATCH, threads: None }
    }

    fn batches(&self) -> Vec<(u64, u64)> {
        let bs = self.batch_size.max(1);
        (0..self.trials.div_ceil(bs))
            .map(|b| (b, bs.min(self.trials - b * bs)))
            .collect()
    }
}

/// Run every batch in order on the current thread.
pub fn run_batches_sequential<T, F>(cfg: &McConfig, work: F) -> Result<Vec<T>>
where
    F: Fn(&mut ChaCha8Rng, u64) -> Result<T>,
{
    cfg.batches()
        .into_iter()
        .map(|(b, count)| work(&mut batch_rng(cfg.seed, b), count))
        .collect()
}

/// Run batches on a rayon pool; results come back in batch order.
#[cfg(feature = "parallel")]
pub fn run_batches_parallel<T, F>(cfg: &McConfig, work: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> Result<T> + Sync,
{
    use rayon::prelude::*;
    let go = || {
        cfg.batches()
            .into_par_iter()
            .map(|(b, count)| work(&mut batch_rng(cfg.seed, b), count))
            .collect::<Result<Vec<T>>>()
    };
    match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(go),
        None => go(),
    }
}

pub fn run_batches<T, F>(cfg: &McConfig, work: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> Result<T> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if cfg.threads != Some(1) {
            return run_batches_parallel(cfg, work);
        }
    }
    run_batches_sequential(cfg, work)
}

/// Which decoder produces the statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderKind {
    Standard,
    Symmetric,
    /// GF(2) knowledge tracking; erasure channel only.
    ErasureExact,
}

impl DecoderKind {
    pub fn schedule(self) -> Schedule {
        match self {
            DecoderKind::Symmetric => Schedule::Symmetric,
            _ => Schedule::Standard,
        }
    }
}

impl std::str::FromStr for DecoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(DecoderKind::Standard),
            "symmetric" => Ok(DecoderKind::Symmetric),
            "erasure-exact" => Ok(DecoderKind::ErasureExact),
            _ => Err(Error::Parse(format!("unknown decoder {s:?}"))),
        }
    }
}

impl std::fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecoderKind::Standard => "standard",
            DecoderKind::Symmetric => "symmetric",
            DecoderKind::ErasureExact => "erasure-exact",
        })
    }
}

fn check_pair(channel: &ChannelModel, kind: DecoderKind) -> Result<()> {
    if kind == DecoderKind::ErasureExact && !channel.is_erasure() {
        return Err(Error::InvalidConfig("erasure-exact decoder needs an erasure channel".into()));
    }
    Ok(())
}

/// Genie error counts in half-units: a wrong Pauli decision adds 2, an
/// undetermined erasure decision (a fair coin) adds 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenieCounts {
    pub trials: u64,
    pub x_half: Vec<u64>,
    pub z_half: Vec<u64>,
}

impl GenieCounts {
    fn zero(n: usize) -> Self {
        GenieCounts { trials: 0, x_half: vec![0; n], z_half: vec![0; n] }
    }

    fn add(&mut self, o: &GenieCounts) {
        self.trials += o.trials;
        for (a, b) in self.x_half.iter_mut().zip(&o.x_half) {
            *a += b;
        }
        for (a, b) in self.z_half.iter_mut().zip(&o.z_half) {
            *a += b;
        }
    }

    pub fn stats(&self) -> Result<ChannelStats> {
        let t = 2.0 * self.trials.max(1) as f64;
        ChannelStats::new(
            self.x_half.iter().map(|&c| c as f64 / t).collect(),
            self.z_half.iter().map(|&c| c as f64 / t).collect(),
            self.trials,
        )
    }
}

/// Per-wire genie error counts over `cfg.trials` sampled errors.
pub fn genie_counts(c: &CodeCircuit, channel: &ChannelModel, kind: DecoderKind, cfg: &McConfig) -> Result<GenieCounts> {
    check_pair(channel, kind)?;
    let n = c.n;
    let parts = run_batches(cfg, |rng, count| {
        let mut acc = GenieCounts::zero(n);
        acc.trials = count;
        match kind {
            DecoderKind::ErasureExact => {
                let dec = ErasureDecoder::new(c, Schedule::Standard)?;
                for _ in 0..count {
                    let (erased, _) = channel.sample_erasure(rng, n);
                    let (ix, iz) = dec.genie(&erased)?;
                    for w in 0..n {
                        acc.x_half[w] += u64::from(ix[w] > 0.0);
                        acc.z_half[w] += u64::from(iz[w] > 0.0);
                    }
                }
            }
            _ => {
                let mut dec = ScDecoder::new(c, kind.schedule(), channel)?;
                for _ in 0..count {
                    let e = channel.sample_pauli(rng, n);
                    let truth = apply_circuit(&e, c, Direction::Decode)?;
                    let rec = dec.genie(&truth)?;
                    for w in 0..n {
                        acc.x_half[w] += 2 * u64::from(rec.x_wrong[w]);
                        acc.z_half[w] += 2 * u64::from(rec.z_wrong[w]);
                    }
                }
            }
        }
        Ok(acc)
    })?;
    let mut total = GenieCounts::zero(n);
    for p in &parts {
        total.add(p);
    }
    Ok(total)
}

pub fn genie_stats(c: &CodeCircuit, channel: &ChannelModel, kind: DecoderKind, cfg: &McConfig) -> Result<ChannelStats> {
    genie_counts(c, channel, kind, cfg)?.stats()
}

/// One row of block-error-rate output. Column order is fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerRecord {
    pub n: usize,
    pub k: usize,
    pub channel: String,
    pub decoder: String,
    pub trials: u64,
    pub block_errors: u64,
    pub degenerate_only_events: u64,
    pub ber: f64,
    pub wilson95_low: f64,
    pub wilson95_high: f64,
    pub wall_seconds: f64,
}

pub const BER_HEADER: &str =
    "n,k,channel,decoder,trials,block_errors,degenerate_only_events,ber,wilson95_low,wilson95_high,wall_seconds";

impl BerRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.8e},{:.8e},{:.8e},{:.3}",
            self.n,
            self.k,
            self.channel,
            self.decoder,
            self.trials,
            self.block_errors,
            self.degenerate_only_events,
            self.ber,
            self.wilson95_low,
            self.wilson95_high,
            self.wall_seconds
        )
    }

    /// Standard error of the BER estimate.
    pub fn sigma(&self) -> f64 {
        let t = self.trials.max(1) as f64;
        (self.ber * (1.0 - self.ber) / t).sqrt()
    }
}

/// Wilson score interval at 95% confidence.
pub fn wilson95(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt()) / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct BerCounts {
    block_errors: u64,
    degenerate_only: u64,
}

/// Honest decoding of sampled errors against a frozen map.
pub fn simulate(
    c: &CodeCircuit,
    channel: &ChannelModel,
    kind: DecoderKind,
    roles: &[Role],
    cfg: &McConfig,
) -> Result<BerRecord> {
    check_pair(channel, kind)?;
    if roles.len() != c.n {
        return Err(Error::InvalidConfig(format!("{} roles for {} wires", roles.len(), c.n)));
    }
    let n = c.n;
    let start = Instant::now();
    let parts = run_batches(cfg, |rng, count| {
        let mut acc = BerCounts::default();
        match kind {
            DecoderKind::ErasureExact => {
                let dec = ErasureDecoder::new(c, Schedule::Standard)?;
                for _ in 0..count {
                    let (erased, e) = channel.sample_erasure(rng, n);
                    let truth = apply_circuit(&e, c, Direction::Decode)?;
                    let r = dec.decode(&erased, roles, &extract_syndrome(&truth, roles))?;
                    tally(&mut acc, Some(&r), &truth, roles);
                }
            }
            _ => {
                let mut dec = ScDecoder::new(c, kind.schedule(), channel)?;
                for _ in 0..count {
                    let e = channel.sample_pauli(rng, n);
                    let truth = apply_circuit(&e, c, Direction::Decode)?;
                    let syn = extract_syndrome(&truth, roles);
                    let r = match dec.decode_until_error(roles, &syn, &truth) {
                        Ok(r) => r,
                        Err(Error::InconsistentEvidence(_)) => None,
                        Err(e) => return Err(e),
                    };
                    tally(&mut acc, r.as_ref(), &truth, roles);
                }
            }
        }
        Ok(acc)
    })?;
    let mut tot = BerCounts::default();
    for p in parts {
        tot.block_errors += p.block_errors;
        tot.degenerate_only += p.degenerate_only;
    }
    let (lo, hi) = wilson95(tot.block_errors, cfg.trials);
    Ok(BerRecord {
        n,
        k: roles.iter().filter(|r| **r == Role::Data).count(),
        channel: channel.to_string(),
        decoder: kind.to_string(),
        trials: cfg.trials,
        block_errors: tot.block_errors,
        degenerate_only_events: tot.degenerate_only,
        ber: tot.block_errors as f64 / cfg.trials.max(1) as f64,
        wilson95_low: lo,
        wilson95_high: hi,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn tally(acc: &mut BerCounts, r: Option<&crate::decoder::DecodeResult>, truth: &crate::pauli::PauliOp, roles: &[Role]) {
    match r {
        Some(r) if r.data_ok(truth, roles) => {
            if r.degenerate_mismatch(truth, roles) {
                acc.degenerate_only += 1;
            }
        }
        _ => acc.block_errors += 1,
    }
}

/// Per-decode wall times of honest decodes, in seconds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub samples: Vec<f64>,
    /// Decodes that stopped on inconsistent evidence; not in `samples`.
    pub failed: u64,
}

impl Timing {
    fn sorted(&self) -> Vec<f64> {
        let mut v = self.samples.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn min(&self) -> f64 {
        self.sorted().first().copied().unwrap_or(f64::NAN)
    }

    pub fn median(&self) -> f64 {
        let v = self.sorted();
        if v.is_empty() {
            return f64::NAN;
        }
        v[v.len() / 2]
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len().max(1) as f64
    }
}

/// Holds a warmed-up decoder and draws fresh syndromes for timing.
pub struct DecodeTimer<'a> {
    c: &'a CodeCircuit,
    channel: ChannelModel,
    roles: Vec<Role>,
    dec: ScDecoder,
    rng: ChaCha8Rng,
    pub timing: Timing,
}

impl<'a> DecodeTimer<'a> {
    pub fn new(c: &'a CodeCircuit, channel: &ChannelModel, schedule: Schedule, roles: &[Role], seed: u64) -> Result<Self> {
        if roles.len() != c.n {
            return Err(Error::InvalidConfig(format!("{} roles for {} wires", roles.len(), c.n)));
        }
        let mut t = DecodeTimer {
            c,
            channel: *channel,
            roles: roles.to_vec(),
            dec: ScDecoder::new(c, schedule, channel)?,
            rng: batch_rng(seed, 0),
            timing: Timing::default(),
        };
        // builds the contraction plans
        t.run(1)?;
        t.timing = Timing::default();
        Ok(t)
    }

    /// Time `reps` decodes as one block and record the per-decode average.
    pub fn run(&mut self, reps: usize) -> Result<()> {
        let syns = (0..reps.max(1))
            .map(|_| {
                let e = self.channel.sample_pauli(&mut self.rng, self.c.n);
                Ok(extract_syndrome(&apply_circuit(&e, self.c, Direction::Decode)?, &self.roles))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut failed = 0;
        let start = Instant::now();
        for syn in &syns {
            match self.dec.decode(&self.roles, syn) {
                Ok(_) => {}
                Err(Error::InconsistentEvidence(_)) => failed += 1,
                Err(e) => return Err(e),
            }
        }
        let el = start.elapsed().as_secs_f64();
        self.timing.failed += failed;
        // a failed decode stops early and would flatter the average
        if failed == 0 {
            self.timing.samples.push(el / syns.len() as f64);
        }
        Ok(())
    }
}

/// Timing of one honest decode over `reps` sampled errors.
pub fn time_decode(c: &CodeCircuit, channel: &ChannelModel, schedule: Schedule, roles: &[Role], reps: usize, seed: u64) -> Result<Timing> {
    let mut t = DecodeTimer::new(c, channel, schedule, roles, seed)?;
    for _ in 0..reps {
        t.run(1)?;
    }
    Ok(t.timing)
}

/// Time decodes on several circuits round-robin so machine noise hits all of
/// them alike. Each round spends roughly the same number of gate
/// evaluations per circuit by repeating the smaller ones.
pub fn time_interleaved(
    codes: &[(&CodeCircuit, Vec<Role>)],
    channel: &ChannelModel,
    schedule: Schedule,
    rounds: usize,
    seed: u64,
) -> Result<Vec<Timing>> {
    let biggest = codes.iter().map(|(c, _)| c.n).max().unwrap_or(1);
    let mut timers = codes
        .iter()
        .enumerate()
        .map(|(i, (c, r))| DecodeTimer::new(c, channel, schedule, r, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..rounds {
        for t in timers.iter_mut() {
            t.run((biggest / t.c.n).clamp(1, 16))?;
        }
    }
    Ok(timers.into_iter().map(|t| t.timing).collect())
}

/// Short stable hash of a serializable config.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    let json = serde_json::to_string(cfg)?;
    let digest = Sha256::digest(json.as_bytes());
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// A uniformly random frozen map with `k` data wires; useful for timing.
pub fn random_roles<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<Role> {
    let mut roles: Vec<Role> = (0..n)
        .map(|i| if i < k { Role::Data } else if rng.random::<bool>() { Role::Freeze0 } else { Role::Freezeplus })
        .collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        roles.swap(i, j);
    }
    roles
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_bmera, build_polar};

    #[test]
    fn wilson_basics() {
        let (lo, hi) = wilson95(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.03 && hi < 0.04);
        let (lo, hi) = wilson95(50, 100);
        assert!((lo + hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batches_cover_trials() {
        let mut cfg = McConfig::new(1000, 1);
        cfg.batch_size = 300;
        let b = cfg.batches();
        assert_eq!(b, vec![(0, 300), (1, 300), (2, 300), (3, 100)]);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let c = build_bmera(4).unwrap();
        let ch = ChannelModel::depolarizing(0.1).unwrap();
        let mut cfg = McConfig::new(200, 42);
        cfg.batch_size = 16;
        cfg.threads = Some(1);
        let a = genie_counts(&c, &ch, DecoderKind::Standard, &cfg).unwrap();
        cfg.threads = Some(3);
        let b = genie_counts(&c, &ch, DecoderKind::Standard, &cfg).unwrap();
        assert_eq!(a, b);
        let seq = run_batches_sequential(&cfg, |rng, n| Ok((n, rng.random::<u32>()))).unwrap();
        let any = run_batches(&cfg, |rng, n| Ok((n, rng.random::<u32>()))).unwrap();
        assert_eq!(seq, any);
    }

    #[test]
    fn erasure_kind_needs_erasure_channel() {
        let c = build_polar(2).unwrap();
        let ch = ChannelModel::depolarizing(0.1).unwrap();
        assert!(genie_counts(&c, &ch, DecoderKind::ErasureExact, &McConfig::new(1, 1)).is_err());
    }

    #[test]
    fn simulate_noiseless_has_no_errors() {
        let c = build_polar(4).unwrap();
        let ch = ChannelModel::depolarizing(0.0).unwrap();
        let roles: Vec<Role> = (0..16).map(|w| if w >= 8 { Role::Data } else { Role::Freeze0 }).collect();
        let r = simulate(&c, &ch, DecoderKind::Symmetric, &roles, &McConfig::new(20, 3)).unwrap();
        assert_eq!(r.block_errors, 0);
        assert_eq!(r.k, 8);
        assert_eq!(r.csv_row().split(',').count(), BER_HEADER.split(',').count());
    }

    #[test]
    fn timing_counts_every_decode() {
        let c = build_polar(5).unwrap();
        let ch = ChannelModel::depolarizing(0.02).unwrap();
        let roles = random_roles(&mut batch_rng(1, 0), 32, 16);
        let t = time_decode(&c, &ch, Schedule::Standard, &roles, 10, 5).unwrap();
        assert_eq!(t.samples.len() as u64 + t.failed, 10);
        assert!(t.min() <= t.median());
        let small = build_polar(3).unwrap();
        let r8 = random_roles(&mut batch_rng(2, 0), 8, 4);
        let ts = time_interleaved(&[(&small, r8), (&c, roles)], &ch, Schedule::Standard, 3, 9).unwrap();
        assert_eq!(ts.len(), 2);
        assert!(ts.iter().all(|t| t.samples.len() as u64 + t.failed == 3));
    }

    #[test]
    fn config_hash_stable() {
        let a = config_hash(&McConfig::new(10, 1)).unwrap();
        assert_eq!(a, config_hash(&McConfig::new(10, 1)).unwrap());
        assert_ne!(a, config_hash(&McConfig::new(10, 2)).unwrap());
        assert_eq!(a.len(), 16);
    }
}
