//! Seeded property and oracle checks of the CI-BLP pipeline.
//!
//! Each suite draws its own instances, evaluates one family of identities or
//! cross-checks, and reports the worst deviation against its tolerance.

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use crate::dual::{
    build_fg, build_gram, build_u, cross_coefficients, solve_ci_blp, stationarity_residual, CiBlpOptions, GramPolicy,
};
use crate::error::Result;
use crate::geometry::{ChannelMatrix, PskConstellation, SymbolBlock, C64};
use crate::oracle::solve_primal_p1;
use crate::sim::{rayleigh_channel, substream};
use crate::simplex_qp::{certify, solve, SimplexQpProblem, SolverOptions};

const DOMAIN_VALIDATION: u64 = 0x5641_4c49_4441_5445;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub instances: usize,
    /// Largest observed deviation, in the units of `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seconds: f64,
    pub detail: String,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} n={:<4} worst={:.3e} tol={:.1e} ({:.2}s){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.worst,
            self.tolerance,
            self.seconds,
            if self.detail.is_empty() {
                String::new()
            } else {
                format!("  {}", self.detail)
            }
        )
    }
}

struct Tracker {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    instances: usize,
    failures: Vec<String>,
    start: Instant,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            worst: 0.0,
            instances: 0,
            failures: Vec::new(),
            start: Instant::now(),
        }
    }

    fn record(&mut self, value: f64, what: impl FnOnce() -> String) {
        if value.is_nan() || value > self.worst {
            self.worst = if value.is_nan() { f64::INFINITY } else { value };
        }
        if !(value <= self.tolerance) && self.failures.len() < 3 {
            self.failures.push(what());
        }
    }

    fn error(&mut self, what: String) {
        self.worst = f64::INFINITY;
        if self.failures.len() < 3 {
            self.failures.push(what);
        }
    }

    fn finish(self) -> CheckReport {
        CheckReport {
            name: self.name.into(),
            instances: self.instances,
            worst: self.worst,
            tolerance: self.tolerance,
            passed: self.failures.is_empty(),
            seconds: self.start.elapsed().as_secs_f64(),
            detail: self.failures.join("; "),
        }
    }
}

/// A random channel and symbol block.
#[derive(Debug, Clone)]
pub struct Instance {
    pub channel: ChannelMatrix,
    pub block: SymbolBlock,
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "K={} N_T={} N={} M={}",
            self.block.users(),
            self.channel.antennas(),
            self.block.slots(),
            self.block.constellation().order()
        )
    }
}

/// Sampling grid for random instances; only combinations with `K ≤ N_T` are drawn.
#[derive(Debug, Clone)]
pub struct InstanceSpace {
    pub users: Vec<usize>,
    pub antennas: Vec<usize>,
    pub slots: Vec<usize>,
    pub orders: Vec<usize>,
    /// Also require `N ≥ K` and redraw symbols until `D` passes the strict check.
    pub invertible_gram: bool,
}

impl InstanceSpace {
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Instance> {
        let combos: Vec<(usize, usize, usize, usize)> = self
            .users
            .iter()
            .flat_map(|&k| {
                self.antennas.iter().flat_map(move |&nt| {
                    self.slots
                        .iter()
                        .flat_map(move |&n| self.orders.iter().map(move |&m| (k, nt, n, m)))
                })
            })
            .filter(|&(k, nt, n, _)| k <= nt && (!self.invertible_gram || n >= k))
            .collect();
        let &(k, nt, n, m) = combos.choose(rng).expect("instance space has a valid combination");
        let constellation = PskConstellation::new(m)?;
        let channel = rayleigh_channel(rng, k, nt);
        loop {
            let idx: Vec<usize> = (0..n * k).map(|_| rng.random_range(0..m)).collect();
            let block = SymbolBlock::from_indices(&constellation, n, k, &idx)?;
            if !self.invertible_gram || build_gram(&block, GramPolicy::Strict).is_ok() {
                return Ok(Instance { channel, block });
            }
        }
    }
}

fn rng_for(seed: u64, suite: u64) -> ChaCha8Rng {
    substream(seed, DOMAIN_VALIDATION, suite, 0)
}

/// `‖F + G − U‖_F ≤ 1e-10·‖U‖_F` over `K∈{1,2,4}, N_T∈{2,4,8}, N∈{2,4,8}, M∈{4,8}`.
///
/// Blocks with `N < K` use the pseudo-inverse of `D`, for which the identity
/// holds unchanged.
pub fn fg_identity(seed: u64, count: usize) -> CheckReport {
    let space = InstanceSpace {
        users: vec![1, 2, 4],
        antennas: vec![2, 4, 8],
        slots: vec![2, 4, 8],
        orders: vec![4, 8],
        invertible_gram: false,
    };
    let mut rng = rng_for(seed, 1);
    let mut t = Tracker::new("F + G = U", 1e-10);
    for _ in 0..count {
        t.instances += 1;
        let mut run = || -> Result<(f64, String)> {
            let inst = space.draw(&mut rng)?;
            let geoms = inst.block.slot_geometries(&inst.channel)?;
            let gram = build_gram(&inst.block, GramPolicy::PseudoInverse)?;
            let coeffs = cross_coefficients(&gram, &inst.block);
            let u = build_u(&geoms, &coeffs)?;
            let fg = build_fg(&geoms, &coeffs)?;
            Ok(((&fg.f + &fg.g - &u).norm() / u.norm(), inst.to_string()))
        };
        match run() {
            Ok((rel, label)) => t.record(rel, || format!("{label}: {rel:.3e}")),
            Err(e) => t.error(e.to_string()),
        }
    }
    t.finish()
}

fn small_space() -> InstanceSpace {
    InstanceSpace {
        users: vec![1, 2, 3, 4],
        antennas: vec![1, 2, 3, 4],
        slots: vec![1, 2, 4, 6, 8],
        orders: vec![4, 8],
        invertible_gram: true,
    }
}

/// Dual pipeline versus the primal oracle: `|t_dual − t_oracle| ≤ 1e-4·max(1, t)`.
pub fn duality(seed: u64, count: usize) -> CheckReport {
    let mut rng = rng_for(seed, 2);
    let space = small_space();
    let mut t = Tracker::new("dual t = primal t", 1e-4);
    let options = CiBlpOptions::default();
    for _ in 0..count {
        t.instances += 1;
        let mut run = || -> Result<(f64, String)> {
            let inst = space.draw(&mut rng)?;
            let dual = solve_ci_blp(&inst.channel, &inst.block, 1.0, &options)?;
            let primal = solve_primal_p1(&inst.channel, &inst.block, 1.0)?;
            let gap = (dual.certificate.t - primal.t).abs() / primal.t.max(1.0);
            Ok((gap, format!("{inst}: dual {} primal {}", dual.certificate.t, primal.t)))
        };
        match run() {
            Ok((gap, label)) => t.record(gap, || label),
            Err(e) => t.error(e.to_string()),
        }
    }
    t.finish()
}

/// KKT certificate of the recovered precoder, one report per condition.
pub fn kkt_certificate(seed: u64, count: usize) -> Vec<CheckReport> {
    let mut rng = rng_for(seed, 3);
    let space = small_space();
    let mut power = Tracker::new("power activity", 1e-6);
    let mut slack = Tracker::new("complementary slackness", 1e-5);
    let mut stationarity = Tracker::new("stationarity", 1e-8);
    let mut consistency = Tracker::new("min α = dual t", 1e-6);
    let options = CiBlpOptions::default();
    for _ in 0..count {
        for tr in [&mut power, &mut slack, &mut stationarity, &mut consistency] {
            tr.instances += 1;
        }
        let inst = match space.draw(&mut rng) {
            Ok(i) => i,
            Err(e) => {
                power.error(e.to_string());
                continue;
            }
        };
        let solved = solve_ci_blp(&inst.channel, &inst.block, 1.0, &options).and_then(|p| {
            let geoms = inst.block.slot_geometries(&inst.channel)?;
            let gram = build_gram(&inst.block, options.gram)?;
            Ok((p, geoms, gram))
        });
        let (p, geoms, gram) = match solved {
            Ok(v) => v,
            Err(e) => {
                power.error(format!("{inst}: {e}"));
                continue;
            }
        };
        let budget = inst.block.slots() as f64;
        let rel_power = (p.block_power - budget).abs() / budget;
        power.record(rel_power, || format!("{inst}: {rel_power:.3e}"));

        let alpha = p.scaling_factors(&geoms, &inst.block);
        let worst_slack = p
            .certificate
            .delta_e
            .iter()
            .zip(alpha.iter())
            .filter(|(&d, _)| d > 1e-6)
            .map(|(_, &a)| (a - p.certificate.t).abs())
            .fold(0.0, f64::max);
        slack.record(worst_slack, || format!("{inst}: {worst_slack:.3e}"));

        let st = stationarity_residual(&p, &geoms, &gram, &inst.block);
        stationarity.record(st, || format!("{inst}: {st:.3e}"));

        let dual_t = p.qp.as_ref().map_or(f64::NAN, |q| q.dual_t);
        let gap = (p.certificate.t - dual_t).abs();
        consistency.record(gap, || format!("{inst}: {gap:.3e}"));
    }
    vec![power.finish(), slack.finish(), stationarity.finish(), consistency.finish()]
}

/// Minimum of `δᵀQδ` over the simplex by enumerating every support.
pub fn enumerate_supports(q: &DMatrix<f64>) -> f64 {
    let d = q.nrows();
    let mut best = f64::INFINITY;
    for mask in 1u64..(1 << d) {
        let support: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
        let s = support.len();
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = 2.0 * q[(i, j)];
            }
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
        }
        let mut rhs = DVector::zeros(s + 1);
        rhs[s] = 1.0;
        let eps = 1e-13 * kkt.amax();
        let Ok(z) = kkt.svd(true, true).solve(&rhs, eps) else {
            continue;
        };
        if z.rows(0, s).iter().any(|&v| v < -1e-12) {
            continue;
        }
        let mut x = DVector::zeros(d);
        for (a, &i) in support.iter().enumerate() {
            x[i] = z[a].max(0.0);
        }
        let sum = x.sum();
        if (sum - 1.0).abs() > 1e-9 {
            continue;
        }
        best = best.min(x.dot(&(q * &x)));
    }
    best
}

fn random_psd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let rank = rng.random_range(1..=d);
    let scale = 10f64.powf(rng.random_range(-3.0..3.0));
    let b = DMatrix::from_fn(rank, d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    b.transpose() * b * scale
}

/// Simplex QP: KKT residual ≤ 1e-9 for `d ≤ 64`, and support enumeration
/// agreement ≤ 1e-8 for `d ≤ 6`.
pub fn simplex_solver(seed: u64, count: usize) -> Vec<CheckReport> {
    let mut rng = rng_for(seed, 4);
    let mut residual = Tracker::new("simplex KKT residual", 1e-9);
    let mut enumeration = Tracker::new("simplex vs enumeration", 1e-8);
    let options = SolverOptions::default();
    for i in 0..count {
        let d = if i % 2 == 0 { rng.random_range(2..=6) } else { rng.random_range(7..=64) };
        let q = random_psd(&mut rng, d);
        let problem = match SimplexQpProblem::new(q.clone()) {
            Ok(p) => p,
            Err(e) => {
                residual.error(e.to_string());
                continue;
            }
        };
        let sol = solve(&problem, &options);
        residual.instances += 1;
        let r = certify(&problem, &sol.delta);
        residual.record(r, || format!("d={d}: {r:.3e} after {} iterations", sol.iterations));
        if d <= 6 {
            enumeration.instances += 1;
            let reference = enumerate_supports(&q);
            let gap = (sol.objective - reference).abs() / (1.0f64).max(reference.abs());
            enumeration.record(gap, || format!("d={d}: {} vs {reference}", sol.objective));
        }
    }
    vec![residual.finish(), enumeration.finish()]
}

/// `K = N_T = 1, h = 1, s = e^{jπ/4}` in QPSK: `t = 1` and `W = 1` through both solvers.
pub fn micro_case() -> CheckReport {
    let mut t = Tracker::new("micro case t = W = 1", 1e-6);
    let run = || -> Result<[f64; 2]> {
        let c = PskConstellation::with_offset(4, PI / 4.0)?;
        let h = ChannelMatrix::new(DMatrix::from_element(1, 1, C64::new(1.0, 0.0)))?;
        let block = SymbolBlock::from_indices(&c, 1, 1, &[0])?;
        let dual = solve_ci_blp(&h, &block, 1.0, &CiBlpOptions::default())?;
        let primal = solve_primal_p1(&h, &block, 1.0)?;
        let one = C64::new(1.0, 0.0);
        Ok([
            (dual.certificate.t - 1.0).abs().max((dual.w[(0, 0)] - one).norm()),
            (primal.t - 1.0).abs().max((primal.w[(0, 0)] - one).norm()),
        ])
    };
    t.instances = 2;
    match run() {
        Ok([d, p]) => {
            t.record(d, || format!("dual pipeline off by {d:.3e}"));
            t.record(p, || format!("oracle off by {p:.3e}"));
        }
        Err(e) => t.error(e.to_string()),
    }
    t.finish()
}

/// Every suite at the default instance counts.
pub fn run_all(seed: u64) -> Vec<CheckReport> {
    let mut reports = vec![fg_identity(seed, 200), duality(seed, 50)];
    reports.extend(kkt_certificate(seed, 50));
    reports.extend(simplex_solver(seed, 100));
    reports.push(micro_case());
    reports
}
