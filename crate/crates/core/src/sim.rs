//! Monte Carlo SER and solver-timing experiments.
//!
//! Every block draws its channel, data and noise from its own ChaCha8
//! substream keyed by `(seed, domain, index, sub-index)`, so results do not
//! depend on the number of worker threads. Schemes share channel, data and
//! unit noise within a block; SNR points scale the same unit noise.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::time::Instant;

use crate::baselines::{rzf_precoder, zf_precoder, BaselineKind};
use crate::dual::{solve_ci_blp, CiBlpOptions, CiBlpProblem, GramPolicy};
use crate::error::{CiError, Result};
use crate::geometry::{ChannelMatrix, PskConstellation, SymbolBlock, C64};
use crate::oracle::SlotProblem;
use crate::simplex_qp::SolverOptions;

const DOMAIN_CHANNEL: u64 = 1;
const DOMAIN_DATA: u64 = 2;
const DOMAIN_NOISE: u64 = 3;
const DOMAIN_TIMING: u64 = 4;

/// Largest tolerated fraction of failed solves per scheme.
pub const FAILURE_BUDGET: f64 = 1e-3;
/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "ZF")]
    Zf,
    #[serde(rename = "RZF")]
    Rzf,
    #[serde(rename = "CI_SLP")]
    CiSlp,
    #[serde(rename = "CI_BLP")]
    CiBlp,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Zf => "ZF",
            Scheme::Rzf => "RZF",
            Scheme::CiSlp => "CI_SLP",
            Scheme::CiBlp => "CI_BLP",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<BaselineKind> for Scheme {
    fn from(kind: BaselineKind) -> Self {
        match kind {
            BaselineKind::Zf => Scheme::Zf,
            BaselineKind::Rzf => Scheme::Rzf,
            BaselineKind::CiSlp => Scheme::CiSlp,
        }
    }
}

fn default_p0() -> f64 {
    1.0
}

fn default_block_lengths() -> Vec<usize> {
    vec![4, 8, 15, 32, 64]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Block lengths visited by the `blocklen` and `timing` runs.
    #[serde(default = "default_block_lengths")]
    pub block_lengths: Vec<usize>,
    /// Slots per channel frame in the `blocklen` run; defaults to the lcm of `block_lengths`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_slots: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            block_lengths: default_block_lengths(),
            frame_slots: None,
        }
    }
}

fn default_tol() -> f64 {
    SolverOptions::default().tol
}

fn default_max_iter() -> usize {
    SolverOptions::default().max_iter
}

fn default_gram() -> GramPolicy {
    GramPolicy::PseudoInverse
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_gram")]
    pub gram: GramPolicy,
    /// Also time assembly and recovery in `timing` runs.
    #[serde(default)]
    pub measure_assembly: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            gram: default_gram(),
            measure_assembly: false,
        }
    }
}

impl SolverConfig {
    pub fn ci_blp_options(&self) -> CiBlpOptions {
        CiBlpOptions {
            qp: SolverOptions {
                tol: self.tol,
                max_iter: self.max_iter,
                record_trace: false,
            },
            gram: self.gram,
            require_convergence: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "K")]
    pub users: usize,
    #[serde(rename = "N_T")]
    pub antennas: usize,
    /// PSK order.
    #[serde(rename = "M")]
    pub order: usize,
    #[serde(rename = "N")]
    pub block_length: usize,
    /// Transmit power budget per slot.
    #[serde(default = "default_p0")]
    pub p0: f64,
    /// Transmit SNR points `p0/σ²` in dB.
    pub snr_db: Vec<f64>,
    pub n_blocks: usize,
    /// Written as an integer up to `i64::MAX` and as a decimal string above it.
    #[serde(with = "seed_repr")]
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CiError::InvalidConfig(msg));
        if self.users == 0 {
            return bad("K ≥ 1 required".into());
        }
        if self.users > self.antennas {
            return bad(format!("K ≤ N_T required (K = {}, N_T = {})", self.users, self.antennas));
        }
        if self.order < 3 {
            return bad(format!("M ≥ 3 required, M = {} has no CI region", self.order));
        }
        if self.block_length == 0 {
            return bad("N ≥ 1 required".into());
        }
        if !(self.p0 > 0.0 && self.p0.is_finite()) {
            return bad(format!("p0 > 0 required, got {}", self.p0));
        }
        if self.snr_db.is_empty() {
            return bad("snr_db must list at least one SNR".into());
        }
        if let Some(v) = self.snr_db.iter().find(|v| v.is_nan() || **v == f64::NEG_INFINITY) {
            return bad(format!("snr_db entries must be numbers or +inf, got {v}"));
        }
        if self.n_blocks == 0 {
            return bad("n_blocks ≥ 1 required".into());
        }
        if self.schemes.is_empty() {
            return bad("schemes must list at least one scheme".into());
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.schemes.iter().find(|s| !seen.insert(**s)) {
            return bad(format!("scheme {dup} listed twice"));
        }
        if self.sweep.block_lengths.is_empty() || self.sweep.block_lengths.contains(&0) {
            return bad("sweep.block_lengths must be nonempty with every N ≥ 1".into());
        }
        if let Some(frame) = self.sweep.frame_slots {
            if let Some(n) = self.sweep.block_lengths.iter().find(|&&n| frame % n != 0) {
                return bad(format!("sweep.frame_slots = {frame} is not a multiple of N = {n}"));
            }
        }
        if !(self.solver.tol > 0.0) {
            return bad(format!("solver.tol > 0 required, got {}", self.solver.tol));
        }
        if self.solver.max_iter == 0 {
            return bad("solver.max_iter ≥ 1 required".into());
        }
        if self.solver.gram == GramPolicy::Strict && self.schemes.contains(&Scheme::CiBlp) {
            let min_n = self
                .sweep
                .block_lengths
                .iter()
                .copied()
                .chain([self.block_length])
                .min()
                .unwrap_or(self.block_length);
            if min_n < self.users {
                return bad(format!(
                    "N ≥ K required for CI_BLP with solver.gram = \"strict\" (N = {min_n}, K = {})",
                    self.users
                ));
            }
        }
        Ok(())
    }

    pub fn constellation(&self) -> Result<PskConstellation> {
        PskConstellation::new(self.order)
    }

    /// `σ²` for every SNR point.
    pub fn noise_variances(&self) -> Vec<f64> {
        self.snr_db.iter().map(|db| self.p0 / 10f64.powf(db / 10.0)).collect()
    }

    /// Slots per frame of the `blocklen` run.
    pub fn frame_slots(&self) -> usize {
        self.sweep
            .frame_slots
            .unwrap_or_else(|| self.sweep.block_lengths.iter().fold(1, |acc, &n| lcm(acc, n)))
    }
}

/// Full-range `u64` seeds in formats whose integers are signed 64-bit.
mod seed_repr {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(seed: &u64, serializer: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => serializer.serialize_i64(v),
            Err(_) => serializer.serialize_str(&seed.to_string()),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<u64, D::Error> {
        struct SeedVisitor;

        impl Visitor<'_> for SeedVisitor {
            type Value = u64;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a nonnegative integer or a decimal string")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<u64, E> {
                Ok(v)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<u64, E> {
                u64::try_from(v).map_err(|_| E::custom(format!("seed must be nonnegative, got {v}")))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<u64, E> {
                v.parse().map_err(|_| E::custom(format!("seed {v:?} is not a u64")))
            }
        }

        deserializer.deserialize_any(SeedVisitor)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Independent generator for one `(domain, index, sub)` cell of a seeded run.
pub fn substream(seed: u64, domain: u64, index: u64, sub: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..32].copy_from_slice(&sub.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// One circularly-symmetric `CN(0, 1)` draw.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `K×N_T` channel with i.i.d. `CN(0, 1)` entries, drawn row by row.
pub fn rayleigh_channel<R: Rng + ?Sized>(rng: &mut R, users: usize, antennas: usize) -> ChannelMatrix {
    let mut h = DMatrix::zeros(users, antennas);
    for k in 0..users {
        for a in 0..antennas {
            h[(k, a)] = complex_gaussian(rng);
        }
    }
    ChannelMatrix::new(h).expect("finite Gaussian channel with K ≤ N_T")
}

/// Nearest constellation point; exact ties go to the smaller index.
pub fn detect_psk(y: C64, constellation: &PskConstellation) -> usize {
    let mut best = 0;
    let mut best_dist = (y - constellation.point(0)).norm_sqr();
    for (i, &p) in constellation.points().iter().enumerate().skip(1) {
        let dist = (y - p).norm_sqr();
        if dist < best_dist * (1.0 - 1e-12) {
            best = i;
            best_dist = dist;
        }
    }
    best
}

fn draw_indices(rng: &mut ChaCha8Rng, count: usize, order: usize) -> Vec<usize> {
    (0..count).map(|_| rng.random_range(0..order)).collect()
}

fn draw_noise(rng: &mut ChaCha8Rng, slots: usize, users: usize) -> DMatrix<C64> {
    let mut z = DMatrix::zeros(slots, users);
    for n in 0..slots {
        for k in 0..users {
            z[(n, k)] = complex_gaussian(rng);
        }
    }
    z
}

/// Symbol errors of one block: `y = r + σz` detected against the transmitted indices.
///
/// `received` and `noise` are `N×K`; `slots` masks out slots whose solve failed.
pub fn count_errors(
    received: &DMatrix<C64>,
    noise: &DMatrix<C64>,
    sigma: f64,
    block: &SymbolBlock,
    slots: &[bool],
) -> u32 {
    let mut errors = 0;
    for n in 0..block.slots() {
        if !slots[n] {
            continue;
        }
        for k in 0..block.users() {
            let y = received[(n, k)] + noise[(n, k)] * sigma;
            if detect_psk(y, block.constellation()) != block.index(n, k) {
                errors += 1;
            }
        }
    }
    errors
}

/// Noiseless `N×K` received signals of one scheme on one block.
struct Transmission {
    received: DMatrix<C64>,
    /// Slots with a valid transmit signal.
    valid: Vec<bool>,
    attempts: u32,
    failures: u32,
}

fn through_precoder(channel: &ChannelMatrix, w: &DMatrix<C64>, block: &SymbolBlock) -> DMatrix<C64> {
    // (H W Sᵀ)ᵀ with S the N×K symbol matrix.
    (channel.matrix() * w * block.symbols().transpose()).transpose()
}

fn transmit(
    scheme: Scheme,
    channel: &ChannelMatrix,
    block: &SymbolBlock,
    p0: f64,
    noise_var: f64,
    options: &CiBlpOptions,
) -> Transmission {
    let (slots, users) = (block.slots(), block.users());
    let whole = |result: Result<DMatrix<C64>>| match result {
        Ok(w) => Transmission {
            received: through_precoder(channel, &w, block),
            valid: vec![true; slots],
            attempts: 1,
            failures: 0,
        },
        Err(_) => Transmission {
            received: DMatrix::zeros(slots, users),
            valid: vec![false; slots],
            attempts: 1,
            failures: 1,
        },
    };
    match scheme {
        Scheme::Zf => whole(zf_precoder(channel, p0)),
        Scheme::Rzf => whole(Ok(rzf_precoder(channel, p0, noise_var))),
        Scheme::CiBlp => whole(solve_ci_blp(channel, block, p0, options).map(|p| p.w)),
        Scheme::CiSlp => {
            let mut out = Transmission {
                received: DMatrix::zeros(slots, users),
                valid: vec![false; slots],
                attempts: slots as u32,
                failures: 0,
            };
            for n in 0..slots {
                let solved = SlotProblem::new(channel, &block.slot(n), block.constellation(), p0)
                    .and_then(|problem| problem.solve());
                match solved {
                    Ok(sol) => {
                        let r = channel.matrix() * sol.x;
                        out.received.row_mut(n).copy_from(&r.transpose());
                        out.valid[n] = true;
                    }
                    Err(_) => out.failures += 1,
                }
            }
            out
        }
    }
}

/// SER tally of one scheme at one SNR and block length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerEntry {
    pub scheme: Scheme,
    pub block_length: usize,
    pub snr_db: f64,
    pub symbols_sent: u64,
    pub symbol_errors: u64,
    pub ser: f64,
    /// Half-width of the 95% Wilson score interval.
    pub ci95_halfwidth: f64,
    pub failures: u64,
    pub attempts: u64,
    /// Errors per Monte Carlo block, in block order, for paired comparisons.
    pub block_errors: Vec<u32>,
    /// Symbols sent per Monte Carlo block.
    pub block_sent: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerResult {
    pub entries: Vec<SerEntry>,
}

impl SerResult {
    pub fn entry(&self, scheme: Scheme, block_length: usize, snr_db: f64) -> Option<&SerEntry> {
        self.entries
            .iter()
            .find(|e| e.scheme == scheme && e.block_length == block_length && e.snr_db == snr_db)
    }
}

/// Half-width of the 95% Wilson score interval for `errors` out of `sent`.
pub fn wilson_halfwidth(errors: u64, sent: u64) -> f64 {
    if sent == 0 {
        return 0.5;
    }
    let n = sent as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
}

/// Standard error of the mean per-block SER difference `a − b` over paired blocks.
pub fn paired_standard_error(a: &SerEntry, b: &SerEntry) -> f64 {
    let diffs: Vec<f64> = a
        .block_errors
        .iter()
        .zip(&a.block_sent)
        .zip(b.block_errors.iter().zip(&b.block_sent))
        .map(|((&ea, &sa), (&eb, &sb))| ea as f64 / sa.max(1) as f64 - eb as f64 / sb.max(1) as f64)
        .collect();
    let n = diffs.len() as f64;
    if diffs.len() < 2 {
        return f64::INFINITY;
    }
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Per-scheme outcome of one block: errors per SNR, symbols sent, solve attempts, failures.
type SchemeTally = (Vec<u32>, u32, u32, u32);

struct CellTally {
    errors: Vec<Vec<u32>>,
    sent: Vec<u32>,
    attempts: u64,
    failures: u64,
}

/// Simulates one block of `slots` and returns per-scheme, per-SNR error counts.
fn simulate_block(
    config: &ExperimentConfig,
    constellation: &PskConstellation,
    channel: &ChannelMatrix,
    indices: &[usize],
    slots: usize,
    noise: &DMatrix<C64>,
    noise_vars: &[f64],
) -> Result<Vec<SchemeTally>> {
    let block = SymbolBlock::from_indices(constellation, slots, config.users, indices)?;
    let options = config.solver.ci_blp_options();
    let mut out = Vec::with_capacity(config.schemes.len());
    for &scheme in &config.schemes {
        let mut errors = Vec::with_capacity(noise_vars.len());
        let mut shared: Option<Transmission> = None;
        let mut sent = 0;
        let (mut attempts, mut failures) = (0, 0);
        for &var in noise_vars {
            // RZF depends on σ²; every other scheme transmits once per block.
            let fresh;
            let tx = if scheme == Scheme::Rzf {
                fresh = transmit(scheme, channel, &block, config.p0, var, &options);
                attempts += fresh.attempts;
                failures += fresh.failures;
                &fresh
            } else {
                if shared.is_none() {
                    let t = transmit(scheme, channel, &block, config.p0, var, &options);
                    attempts += t.attempts;
                    failures += t.failures;
                    shared = Some(t);
                }
                shared.as_ref().unwrap()
            };
            sent = tx.valid.iter().filter(|&&v| v).count() as u32 * config.users as u32;
            errors.push(count_errors(&tx.received, noise, var.sqrt(), &block, &tx.valid));
        }
        out.push((errors, sent, attempts, failures));
    }
    Ok(out)
}

fn finish(config: &ExperimentConfig, block_length: usize, tallies: Vec<CellTally>) -> Result<Vec<SerEntry>> {
    let mut entries = Vec::new();
    for (scheme, tally) in config.schemes.iter().zip(tallies) {
        if tally.failures as f64 > FAILURE_BUDGET * tally.attempts as f64 {
            return Err(CiError::FailureBudgetExceeded {
                scheme: scheme.name().into(),
                failures: tally.failures as usize,
                attempts: tally.attempts as usize,
            });
        }
        let symbols_sent: u64 = tally.sent.iter().map(|&s| s as u64).sum();
        for (j, &snr_db) in config.snr_db.iter().enumerate() {
            let block_errors = tally.errors[j].clone();
            let symbol_errors: u64 = block_errors.iter().map(|&e| e as u64).sum();
            let ser = if symbols_sent == 0 {
                0.0
            } else {
                symbol_errors as f64 / symbols_sent as f64
            };
            entries.push(SerEntry {
                scheme: *scheme,
                block_length,
                snr_db,
                symbols_sent,
                symbol_errors,
                ser,
                ci95_halfwidth: wilson_halfwidth(symbol_errors, symbols_sent),
                failures: tally.failures,
                attempts: tally.attempts,
                block_errors,
                block_sent: tally.sent.clone(),
            });
        }
    }
    Ok(entries)
}

fn empty_tallies(config: &ExperimentConfig, blocks: usize) -> Vec<CellTally> {
    config
        .schemes
        .iter()
        .map(|_| CellTally {
            errors: vec![Vec::with_capacity(blocks); config.snr_db.len()],
            sent: Vec::with_capacity(blocks),
            attempts: 0,
            failures: 0,
        })
        .collect()
}

fn accumulate(tallies: &mut [CellTally], outcome: Vec<SchemeTally>) {
    for (tally, (errors, sent, attempts, failures)) in tallies.iter_mut().zip(outcome) {
        for (j, e) in errors.into_iter().enumerate() {
            tally.errors[j].push(e);
        }
        tally.sent.push(sent);
        tally.attempts += attempts as u64;
        tally.failures += failures as u64;
    }
}

/// SER sweep over `snr_db` at block length `N`, with `n_blocks` blocks.
pub fn run_ser(config: &ExperimentConfig) -> Result<SerResult> {
    config.validate()?;
    let constellation = config.constellation()?;
    let noise_vars = config.noise_variances();
    let (k, nt, n) = (config.users, config.antennas, config.block_length);
    let outcomes: Vec<Result<_>> = (0..config.n_blocks as u64)
        .into_par_iter()
        .map(|b| {
            let channel = rayleigh_channel(&mut substream(config.seed, DOMAIN_CHANNEL, b, 0), k, nt);
            let indices = draw_indices(&mut substream(config.seed, DOMAIN_DATA, b, 0), n * k, config.order);
            let noise = draw_noise(&mut substream(config.seed, DOMAIN_NOISE, b, 0), n, k);
            simulate_block(config, &constellation, &channel, &indices, n, &noise, &noise_vars)
        })
        .collect();
    let mut tallies = empty_tallies(config, config.n_blocks);
    for outcome in outcomes {
        accumulate(&mut tallies, outcome?);
    }
    Ok(SerResult {
        entries: finish(config, n, tallies)?,
    })
}

/// SER versus block length.
///
/// Each of the `n_blocks` frames holds one channel over `frame_slots()`
/// slots; for every `N` in the sweep the frame is split into blocks of `N`
/// slots with data and noise drawn per `(frame, N)`. The channel realizations
/// are therefore shared across all `N`.
pub fn run_blocklen(config: &ExperimentConfig) -> Result<SerResult> {
    config.validate()?;
    let constellation = config.constellation()?;
    let noise_vars = config.noise_variances();
    let frame = config.frame_slots();
    let (k, nt) = (config.users, config.antennas);
    let mut entries = Vec::new();
    for &n in &config.sweep.block_lengths {
        let per_frame = frame / n;
        let outcomes: Vec<Result<_>> = (0..config.n_blocks as u64)
            .into_par_iter()
            .map(|f| {
                let channel = rayleigh_channel(&mut substream(config.seed, DOMAIN_CHANNEL, f, 0), k, nt);
                let mut data = substream(config.seed, DOMAIN_DATA, f, n as u64);
                let mut noise_rng = substream(config.seed, DOMAIN_NOISE, f, n as u64);
                let mut frame_outcomes = Vec::with_capacity(per_frame);
                for _ in 0..per_frame {
                    let indices = draw_indices(&mut data, n * k, config.order);
                    let noise = draw_noise(&mut noise_rng, n, k);
                    frame_outcomes.push(simulate_block(
                        config,
                        &constellation,
                        &channel,
                        &indices,
                        n,
                        &noise,
                        &noise_vars,
                    )?);
                }
                Ok(frame_outcomes)
            })
            .collect();
        let mut tallies = empty_tallies(config, config.n_blocks * per_frame);
        for outcome in outcomes {
            for block in outcome? {
                accumulate(&mut tallies, block);
            }
        }
        entries.extend(finish(config, n, tallies)?);
    }
    Ok(SerResult { entries })
}

/// Solver timing of one scheme at one block length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub scheme: Scheme,
    pub block_length: usize,
    pub blocks: usize,
    /// QP solves per block: 1 for CI-BLP, `N` for CI-SLP, 0 for linear precoders.
    pub qp_per_block: usize,
    /// Variables and constraints of each QP.
    pub qp_variables: usize,
    pub qp_constraints: usize,
    /// Per-block solve time in seconds; for linear precoders the precoder computation.
    pub mean_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    pub total_s: f64,
    /// Mean per-block time including assembly and recovery, when measured.
    pub end_to_end_mean_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingResult {
    pub entries: Vec<TimingEntry>,
}

impl TimingResult {
    pub fn entry(&self, scheme: Scheme, block_length: usize) -> Option<&TimingEntry> {
        self.entries
            .iter()
            .find(|e| e.scheme == scheme && e.block_length == block_length)
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Times the QP solves of each scheme for every `N` in `sweep.block_lengths`.
///
/// Blocks run sequentially so the timings are not perturbed by sibling work.
pub fn run_timing(config: &ExperimentConfig) -> Result<TimingResult> {
    config.validate()?;
    let constellation = config.constellation()?;
    let noise_var = config.noise_variances()[0];
    let (k, nt) = (config.users, config.antennas);
    let options = config.solver.ci_blp_options();
    let mut entries = Vec::new();
    for &n in &config.sweep.block_lengths {
        for &scheme in &config.schemes {
            let mut times = Vec::with_capacity(config.n_blocks);
            let mut end_to_end = Vec::new();
            let mut failures = 0u64;
            let mut attempts = 0u64;
            for b in 0..config.n_blocks as u64 {
                let mut rng = substream(config.seed, DOMAIN_TIMING, b, n as u64);
                let channel = rayleigh_channel(&mut rng, k, nt);
                let indices = draw_indices(&mut rng, n * k, config.order);
                let block = SymbolBlock::from_indices(&constellation, n, k, &indices)?;
                let overall = Instant::now();
                let solve_time = match scheme {
                    Scheme::Zf | Scheme::Rzf => {
                        let start = Instant::now();
                        let w = if scheme == Scheme::Zf {
                            zf_precoder(&channel, config.p0)
                        } else {
                            Ok(rzf_precoder(&channel, config.p0, noise_var))
                        };
                        attempts += 1;
                        failures += w.is_err() as u64;
                        start.elapsed().as_secs_f64()
                    }
                    Scheme::CiBlp => {
                        attempts += 1;
                        match CiBlpProblem::assemble(&channel, &block, config.p0, options.gram) {
                            Ok(problem) => {
                                let start = Instant::now();
                                let sol = problem.solve_qp(&options.qp);
                                let elapsed = start.elapsed().as_secs_f64();
                                if !sol.converged || problem.recover(&block, &sol).is_err() {
                                    failures += 1;
                                }
                                elapsed
                            }
                            Err(_) => {
                                failures += 1;
                                0.0
                            }
                        }
                    }
                    Scheme::CiSlp => {
                        let mut total = 0.0;
                        for slot in 0..n {
                            attempts += 1;
                            match SlotProblem::new(&channel, &block.slot(slot), &constellation, config.p0) {
                                Ok(problem) => {
                                    let start = Instant::now();
                                    let sol = problem.solve();
                                    total += start.elapsed().as_secs_f64();
                                    failures += sol.is_err() as u64;
                                }
                                Err(_) => failures += 1,
                            }
                        }
                        total
                    }
                };
                if config.solver.measure_assembly {
                    end_to_end.push(overall.elapsed().as_secs_f64());
                }
                times.push(solve_time);
            }
            if failures as f64 > FAILURE_BUDGET * attempts as f64 {
                return Err(CiError::FailureBudgetExceeded {
                    scheme: scheme.name().into(),
                    failures: failures as usize,
                    attempts: attempts as usize,
                });
            }
            let total: f64 = times.iter().sum();
            let mut sorted = times.clone();
            sorted.sort_by(f64::total_cmp);
            let (qp_per_block, qp_variables, qp_constraints) = match scheme {
                Scheme::Zf | Scheme::Rzf => (0, 0, 0),
                Scheme::CiBlp => (1, 2 * n * k, 2 * n * k + 1),
                Scheme::CiSlp => (n, 2 * nt, 2 * k),
            };
            entries.push(TimingEntry {
                scheme,
                block_length: n,
                blocks: config.n_blocks,
                qp_per_block,
                qp_variables,
                qp_constraints,
                mean_s: total / times.len() as f64,
                p50_s: percentile(&sorted, 0.5),
                p95_s: percentile(&sorted, 0.95),
                total_s: total,
                end_to_end_mean_s: (!end_to_end.is_empty())
                    .then(|| end_to_end.iter().sum::<f64>() / end_to_end.len() as f64),
            });
        }
    }
    Ok(TimingResult { entries })
}
