//! Primal ground truth for the max-min CI problem.
//!
//! Solves the min-power form `min P(Ŵ) s.t. α_k^n(Ŵ) ≥ 1` with a dense
//! primal active-set method and rescales onto the power budget. The linear
//! functionals and the power form are obtained by probing the complex
//! precoder on basis inputs and decomposing received points directly, so no
//! `Mⁿ` matrix or Gram inverse from the dual path is involved.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

use crate::error::{CiError, Result};
use crate::geometry::{boundary_decomposition, lift_precoder, unlift_precoder, ChannelMatrix, PskConstellation, SymbolBlock, C64};

/// Active-set iteration options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveSetOptions {
    pub max_iter: usize,
    /// Relative stationarity tolerance for declaring optimality.
    pub tol: f64,
}

impl Default for ActiveSetOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSetOutcome {
    pub z: DVector<f64>,
    /// Multipliers of every constraint, zero off the working set.
    pub multipliers: DVector<f64>,
    pub iterations: usize,
    /// `‖Gz − Aᵀλ‖ / max(‖Gz‖, 1e-300)`.
    pub stationarity: f64,
}

/// Dense primal active-set solve of `min ½zᵀGz s.t. Az ≥ b` from a feasible `z0`.
pub fn solve_inequality_qp(
    g: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    z0: DVector<f64>,
    options: &ActiveSetOptions,
) -> Result<ActiveSetOutcome> {
    let n = g.nrows();
    let m = a.nrows();
    if g.ncols() != n || a.ncols() != n || b.len() != m || z0.len() != n {
        return Err(CiError::DimensionMismatch(format!(
            "G {:?}, A {:?}, b {}, z0 {}",
            g.shape(),
            a.shape(),
            b.len(),
            z0.len()
        )));
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let feas_tol = 1e-12 * scale * (1.0 + z0.amax());
    let slack0 = a * &z0 - b;
    if slack0.iter().any(|&s| s < -feas_tol) {
        return Err(CiError::Infeasible("starting point violates a constraint".into()));
    }

    let row_norms: Vec<f64> = a.row_iter().map(|r| r.norm()).collect();
    let mut z = z0;
    let mut working: Vec<usize> = (0..m).filter(|&i| slack0[i].abs() <= feas_tol).collect();
    for iteration in 1..=options.max_iter {
        let grad = g * &z;
        let (step, lambda) = equality_step(g, a, &working, &grad);
        if step.norm() <= 1e-10 * (1.0 + z.norm()) {
            let (worst, value) = lambda
                .iter()
                .enumerate()
                .min_by(|x, y| x.1.total_cmp(y.1))
                .map(|(i, &v)| (i, v))
                .unwrap_or((0, 0.0));
            let lambda_scale = lambda.amax().max(f64::MIN_POSITIVE);
            if working.is_empty() || value >= -options.tol * lambda_scale {
                let mut multipliers = DVector::zeros(m);
                for (idx, &i) in working.iter().enumerate() {
                    multipliers[i] = lambda[idx];
                }
                let residual = &grad - a.transpose() * &multipliers;
                let stationarity = residual.norm() / grad.norm().max(1e-300);
                return Ok(ActiveSetOutcome {
                    z,
                    multipliers,
                    iterations: iteration,
                    stationarity,
                });
            }
            working.remove(worst);
            continue;
        }
        // Ratio test over constraints outside the working set; directions
        // numerically orthogonal to a row cannot block.
        let mut alpha = 1.0;
        let mut blocking = None;
        let step_norm = step.norm();
        for i in 0..m {
            if working.contains(&i) {
                continue;
            }
            let ap = a.row(i).dot(&step.transpose());
            if ap < -1e-12 * row_norms[i] * step_norm {
                let slack = a.row(i).dot(&z.transpose()) - b[i];
                let ratio = (slack.max(0.0)) / -ap;
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(i);
                }
            }
        }
        z += &step * alpha;
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    Err(CiError::NotConverged {
        iterations: options.max_iter,
        residual: f64::NAN,
    })
}

/// Solves the equality-constrained subproblem on the working set.
///
/// Returns the step `p` and the working-set multipliers `λ` with `Gz + Gp = A_Wᵀλ`.
fn equality_step(
    g: &DMatrix<f64>,
    a: &DMatrix<f64>,
    working: &[usize],
    grad: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let n = g.nrows();
    let w = working.len();
    let mut kkt = DMatrix::zeros(n + w, n + w);
    kkt.view_mut((0, 0), (n, n)).copy_from(g);
    for (r, &i) in working.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = a[(i, j)];
            kkt[(j, n + r)] = -a[(i, j)];
        }
    }
    let mut rhs = DVector::zeros(n + w);
    rhs.rows_mut(0, n).copy_from(&(-grad));
    let sol = kkt
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()) && (&kkt * s - &rhs).amax() <= 1e-9 * (1.0 + rhs.amax()))
        .unwrap_or_else(|| {
            let eps = 1e-12 * kkt.amax();
            kkt.svd(true, true)
                .solve(&rhs, eps)
                .unwrap_or_else(|_| DVector::zeros(n + w))
        });
    (sol.rows(0, n).into_owned(), sol.rows(n, w).into_owned())
}

/// Received point `r` written as `α_A u + α_B v`.
fn decompose(r: C64, u: C64, v: C64) -> (f64, f64) {
    let cross = |x: C64, y: C64| x.re * y.im - x.im * y.re;
    let det = cross(u, v);
    (cross(r, v) / det, cross(u, r) / det)
}

fn zf_direction(channel: &ChannelMatrix) -> Result<DMatrix<C64>> {
    let h = channel.matrix();
    let hh = h.adjoint();
    let gram = h * &hh;
    let inv = gram
        .try_inverse()
        .ok_or_else(|| CiError::Infeasible("H Hᴴ is singular, no strictly feasible start".into()))?;
    Ok(hh * inv)
}

/// `base + ε·direction` with `ε` chosen so every functional moves by at most ½.
///
/// A start at which all functionals coincide makes every constraint active at
/// once on the first step; the perturbation separates them.
fn perturbed_start(functionals: &DMatrix<f64>, base: DVector<f64>, direction: DVector<f64>) -> DVector<f64> {
    let shift = (functionals * &direction).amax();
    if shift > 0.0 {
        base + direction * (0.5 / shift)
    } else {
        base
    }
}

/// The min-power form of the block CI problem over `vec(Ŵ)` (column-major).
#[derive(Debug, Clone)]
pub struct PrimalProblem {
    /// `2NK` rows; row `n·2K + k` is `α_A` of user `k`, row `n·2K + K + k` its `α_B`.
    pub functionals: DMatrix<f64>,
    /// `P(Ŵ) = zᵀ power z`.
    pub power: DMatrix<f64>,
    pub budget: f64,
    antennas: usize,
    users: usize,
}

impl PrimalProblem {
    pub fn new(channel: &ChannelMatrix, block: &SymbolBlock, p0: f64) -> Result<Self> {
        if channel.users() != block.users() {
            return Err(CiError::DimensionMismatch(format!(
                "channel serves {} users, block carries {}",
                channel.users(),
                block.users()
            )));
        }
        let (nt, k, slots) = (channel.antennas(), block.users(), block.slots());
        let nvar = nt * 2 * k;
        let boundaries: Vec<Vec<(C64, C64)>> = (0..slots)
            .map(|n| {
                block
                    .slot(n)
                    .iter()
                    .map(|&s| boundary_decomposition(s, block.constellation()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let mut functionals = DMatrix::zeros(2 * k * slots, nvar);
        // images[var][n] = W(e_var) sⁿ
        let mut images: Vec<Vec<DVector<C64>>> = Vec::with_capacity(nvar);
        for var in 0..nvar {
            let mut w_hat = DMatrix::zeros(nt, 2 * k);
            w_hat[(var % nt, var / nt)] = 1.0;
            let w = unlift_precoder(&w_hat);
            let mut per_slot = Vec::with_capacity(slots);
            for n in 0..slots {
                let x = &w * block.slot_vector(n);
                let r = channel.matrix() * &x;
                for user in 0..k {
                    let (u, v) = boundaries[n][user];
                    let (aa, ab) = decompose(r[user], u, v);
                    functionals[(n * 2 * k + user, var)] = aa;
                    functionals[(n * 2 * k + k + user, var)] = ab;
                }
                per_slot.push(x);
            }
            images.push(per_slot);
        }
        let mut power = DMatrix::zeros(nvar, nvar);
        for i in 0..nvar {
            for j in i..nvar {
                let v: f64 = (0..slots).map(|n| images[i][n].dotc(&images[j][n]).re).sum();
                power[(i, j)] = v;
                power[(j, i)] = v;
            }
        }
        Ok(Self {
            functionals,
            power,
            budget: slots as f64 * p0,
            antennas: nt,
            users: k,
        })
    }

    pub fn vectorize(&self, w_hat: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_column_slice(w_hat.as_slice())
    }

    pub fn matricize(&self, z: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.antennas, 2 * self.users, z.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSolution {
    pub w_hat: DMatrix<f64>,
    pub w: DMatrix<C64>,
    /// Minimum scaling factor after rescaling onto the budget.
    pub t: f64,
    /// Optimal power of the min-power form (all `α ≥ 1`).
    pub min_power: f64,
    /// Block power after rescaling.
    pub block_power: f64,
    pub iterations: usize,
    pub stationarity: f64,
}

/// Primal solve of the block problem: `t = sqrt(N p0 / P*)`.
pub fn solve_primal_p1(channel: &ChannelMatrix, block: &SymbolBlock, p0: f64) -> Result<PrimalSolution> {
    if !(p0 > 0.0 && p0.is_finite()) {
        return Err(CiError::InvalidConfig(format!("power budget p0 must be positive, got {p0}")));
    }
    let problem = PrimalProblem::new(channel, block, p0)?;
    for (row, values) in problem.functionals.row_iter().enumerate() {
        if values.amax() == 0.0 {
            return Err(CiError::Infeasible(format!("scaling functional {row} is identically zero")));
        }
    }
    let start = lift_precoder(&zf_direction(channel)?.map(|v| v * 2.0));
    let matched = lift_precoder(&channel.matrix().adjoint());
    let z0 = perturbed_start(&problem.functionals, problem.vectorize(&start), problem.vectorize(&matched));
    let ones = DVector::from_element(problem.functionals.nrows(), 1.0);
    let outcome = solve_inequality_qp(
        &(&problem.power * 2.0),
        &problem.functionals,
        &ones,
        z0,
        &ActiveSetOptions::default(),
    )?;
    let min_power = outcome.z.dot(&(&problem.power * &outcome.z));
    if !(min_power > 0.0) {
        return Err(CiError::Infeasible(format!("optimal power {min_power:e} is not positive")));
    }
    let factor = (problem.budget / min_power).sqrt();
    let z = &outcome.z * factor;
    let t = (&problem.functionals * &z).min();
    let block_power = z.dot(&(&problem.power * &z));
    let w_hat = problem.matricize(&z);
    Ok(PrimalSolution {
        w: unlift_precoder(&w_hat),
        w_hat,
        t,
        min_power,
        block_power,
        iterations: outcome.iterations,
        stationarity: outcome.stationarity,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotSolution {
    /// Transmit vector for the slot.
    pub x: DVector<C64>,
    pub t: f64,
    pub iterations: usize,
    pub stationarity: f64,
}

/// The min-power form of the per-slot problem over `x ∈ C^{N_T}`, stored as `[Re x; Im x]`.
#[derive(Debug, Clone)]
pub struct SlotProblem {
    /// `2K` rows; row `k` is `α_A` of user `k`, row `K + k` its `α_B`.
    pub functionals: DMatrix<f64>,
    start: DVector<f64>,
    p0: f64,
}

impl SlotProblem {
    pub fn new(
        channel: &ChannelMatrix,
        symbols: &[C64],
        constellation: &PskConstellation,
        p0: f64,
    ) -> Result<Self> {
        if !(p0 > 0.0 && p0.is_finite()) {
            return Err(CiError::InvalidConfig(format!("power budget p0 must be positive, got {p0}")));
        }
        let (k, nt) = (channel.users(), channel.antennas());
        if symbols.len() != k {
            return Err(CiError::DimensionMismatch(format!("{} symbols for {k} users", symbols.len())));
        }
        let boundaries = symbols
            .iter()
            .map(|&s| boundary_decomposition(s, constellation))
            .collect::<Result<Vec<_>>>()?;
        let mut functionals = DMatrix::zeros(2 * k, 2 * nt);
        for var in 0..2 * nt {
            let mut x = DVector::zeros(nt);
            x[var % nt] = if var < nt { C64::new(1.0, 0.0) } else { C64::new(0.0, 1.0) };
            let r = channel.matrix() * x;
            for user in 0..k {
                let (u, v) = boundaries[user];
                let (aa, ab) = decompose(r[user], u, v);
                functionals[(user, var)] = aa;
                functionals[(k + user, var)] = ab;
            }
        }
        let s = DVector::from_column_slice(symbols);
        let x0 = zf_direction(channel)? * &s * C64::new(2.0, 0.0);
        let mf = channel.matrix().adjoint() * s;
        let split = |x: &DVector<C64>| DVector::from_fn(2 * nt, |i, _| if i < nt { x[i].re } else { x[i - nt].im });
        let start = perturbed_start(&functionals, split(&x0), split(&mf));
        Ok(Self {
            functionals,
            start,
            p0,
        })
    }

    pub fn solve(&self) -> Result<SlotSolution> {
        let (rows, vars) = self.functionals.shape();
        let nt = vars / 2;
        let ones = DVector::from_element(rows, 1.0);
        let g = DMatrix::<f64>::identity(vars, vars) * 2.0;
        let outcome = solve_inequality_qp(
            &g,
            &self.functionals,
            &ones,
            self.start.clone(),
            &ActiveSetOptions::default(),
        )?;
        let min_power = outcome.z.norm_squared();
        if !(min_power > 0.0) {
            return Err(CiError::Infeasible(format!("optimal power {min_power:e} is not positive")));
        }
        let z = &outcome.z * (self.p0 / min_power).sqrt();
        Ok(SlotSolution {
            x: DVector::from_fn(nt, |i, _| C64::new(z[i], z[nt + i])),
            t: (&self.functionals * &z).min(),
            iterations: outcome.iterations,
            stationarity: outcome.stationarity,
        })
    }
}

/// Per-slot max-min CI over the transmit vector `x ∈ C^{N_T}` with `‖x‖² ≤ p0`.
pub fn solve_slot(
    channel: &ChannelMatrix,
    symbols: &[C64],
    constellation: &PskConstellation,
    p0: f64,
) -> Result<SlotSolution> {
    SlotProblem::new(channel, symbols, constellation, p0)?.solve()
}

/// Magnitude×phase grid for [`brute_force_tiny`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TinyGrid {
    /// Magnitudes `r_max·i/magnitude_steps` for `i = 1..=magnitude_steps`.
    pub magnitude_steps: usize,
    /// Phases `2π·j/phase_steps` for `j = 0..phase_steps`.
    pub phase_steps: usize,
}

/// Exhaustive search over the scalar precoder `w` for `K = N_T = 1`.
pub fn brute_force_tiny(
    channel: &ChannelMatrix,
    block: &SymbolBlock,
    p0: f64,
    grid: &TinyGrid,
) -> Result<(C64, f64)> {
    if channel.users() != 1 || channel.antennas() != 1 || block.users() != 1 {
        return Err(CiError::DimensionMismatch("brute force requires K = N_T = 1".into()));
    }
    if grid.magnitude_steps == 0 || grid.phase_steps == 0 {
        return Err(CiError::InvalidConfig("grid must have at least one point per axis".into()));
    }
    let h = channel.matrix()[(0, 0)];
    let symbols: Vec<C64> = (0..block.slots()).map(|n| block.symbols()[(n, 0)]).collect();
    let boundaries = symbols
        .iter()
        .map(|&s| boundary_decomposition(s, block.constellation()))
        .collect::<Result<Vec<_>>>()?;
    let energy: f64 = symbols.iter().map(|s| s.norm_sqr()).sum();
    let r_max = (block.slots() as f64 * p0 / energy).sqrt();
    let mut best = (C64::new(0.0, 0.0), f64::NEG_INFINITY);
    for i in 1..=grid.magnitude_steps {
        let mag = r_max * i as f64 / grid.magnitude_steps as f64;
        for j in 0..grid.phase_steps {
            let w = C64::from_polar(mag, 2.0 * PI * j as f64 / grid.phase_steps as f64);
            let mut worst = f64::INFINITY;
            for (s, &(u, v)) in symbols.iter().zip(&boundaries) {
                let (aa, ab) = decompose(h * w * s, u, v);
                worst = worst.min(aa).min(ab);
            }
            if worst > best.1 {
                best = (w, worst);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn micro() -> (ChannelMatrix, SymbolBlock) {
        let c = PskConstellation::with_offset(4, PI / 4.0).unwrap();
        let h = ChannelMatrix::new(DMatrix::from_element(1, 1, C64::new(1.0, 0.0))).unwrap();
        (h, SymbolBlock::from_indices(&c, 1, 1, &[0]).unwrap())
    }

    fn random_channel(rng: &mut ChaCha8Rng, k: usize, nt: usize) -> ChannelMatrix {
        ChannelMatrix::new(DMatrix::from_fn(k, nt, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        }))
        .unwrap()
    }

    #[test]
    fn decompose_recovers_basis_coefficients() {
        let u = C64::new(1.0, 0.2);
        let v = C64::new(-0.3, 0.9);
        let (a, b) = decompose(u * 0.7 + v * 1.3, u, v);
        assert_abs_diff_eq!(a, 0.7, epsilon = 1e-14);
        assert_abs_diff_eq!(b, 1.3, epsilon = 1e-14);
    }

    #[test]
    fn active_set_solves_small_textbook_qp() {
        // min x² + y² s.t. x + y ≥ 2, x ≥ 0.5 → (1, 1).
        let g = DMatrix::identity(2, 2) * 2.0;
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let b = DVector::from_vec(vec![2.0, 0.5]);
        let out = solve_inequality_qp(&g, &a, &b, DVector::from_vec(vec![5.0, 5.0]), &ActiveSetOptions::default()).unwrap();
        assert_abs_diff_eq!(out.z[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.z[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.multipliers[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.multipliers[1], 0.0, epsilon = 1e-12);
        // x ≥ 3 binds alone → (3, 0).
        let b2 = DVector::from_vec(vec![2.0, 3.0]);
        let out = solve_inequality_qp(&g, &a, &b2, DVector::from_vec(vec![5.0, 5.0]), &ActiveSetOptions::default()).unwrap();
        assert_abs_diff_eq!(out.z[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.z[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn active_set_rejects_infeasible_start() {
        let g = DMatrix::identity(1, 1);
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DVector::from_element(1, 1.0);
        assert!(matches!(
            solve_inequality_qp(&g, &a, &b, DVector::zeros(1), &ActiveSetOptions::default()),
            Err(CiError::Infeasible(_))
        ));
    }

    #[test]
    fn micro_case_has_unit_solution() {
        let (h, block) = micro();
        let sol = solve_primal_p1(&h, &block, 1.0).unwrap();
        assert_abs_diff_eq!(sol.t, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.w[(0, 0)].re, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.w[(0, 0)].im, 0.0, epsilon = 1e-9);
        let (w, t) = brute_force_tiny(&h, &block, 1.0, &TinyGrid { magnitude_steps: 200, phase_steps: 3600 }).unwrap();
        assert!((t - 1.0).abs() <= 2.0 * PI / 3600.0);
        assert!((w - C64::new(1.0, 0.0)).norm() <= 1e-2);
    }

    #[test]
    fn doubling_power_scales_t_by_sqrt_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c = PskConstellation::new(8).unwrap();
        let h = random_channel(&mut rng, 2, 3);
        let idx: Vec<usize> = (0..8).map(|_| rng.random_range(0..8)).collect();
        let block = SymbolBlock::from_indices(&c, 4, 2, &idx).unwrap();
        let one = solve_primal_p1(&h, &block, 1.0).unwrap();
        let two = solve_primal_p1(&h, &block, 2.0).unwrap();
        assert!((two.t - 2f64.sqrt() * one.t).abs() <= 1e-9 * two.t);
        assert!((one.block_power - 4.0).abs() <= 1e-12 * 4.0);
    }

    #[test]
    fn zero_channel_is_reported() {
        let c = PskConstellation::with_offset(4, PI / 4.0).unwrap();
        let h = ChannelMatrix::new(DMatrix::from_element(1, 1, C64::new(0.0, 0.0))).unwrap();
        let block = SymbolBlock::from_indices(&c, 1, 1, &[2]).unwrap();
        assert!(matches!(solve_primal_p1(&h, &block, 1.0), Err(CiError::Infeasible(_))));
        let (_, t) = brute_force_tiny(&h, &block, 1.0, &TinyGrid { magnitude_steps: 4, phase_steps: 8 }).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn finer_grids_never_lose() {
        let c = PskConstellation::new(8).unwrap();
        let h = ChannelMatrix::new(DMatrix::from_element(1, 1, C64::new(0.3, -1.1))).unwrap();
        let block = SymbolBlock::from_indices(&c, 3, 1, &[1, 4, 6]).unwrap();
        let qp = solve_primal_p1(&h, &block, 1.0).unwrap().t;
        let mut previous = f64::NEG_INFINITY;
        for level in 0..5 {
            let grid = TinyGrid {
                magnitude_steps: 4 << level,
                phase_steps: 16 << level,
            };
            let (_, t) = brute_force_tiny(&h, &block, 1.0, &grid).unwrap();
            assert!(t >= previous);
            assert!(t <= qp + 1e-9);
            previous = t;
        }
        assert!(qp - previous <= 0.05 * qp);
    }

    #[test]
    fn slot_solution_saturates_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c = PskConstellation::new(8).unwrap();
        for _ in 0..20 {
            let h = random_channel(&mut rng, 3, 4);
            let s: Vec<C64> = (0..3).map(|_| c.point(rng.random_range(0..8))).collect();
            let sol = solve_slot(&h, &s, &c, 1.0).unwrap();
            assert!((sol.x.norm_squared() - 1.0).abs() <= 1e-10);
            assert!(sol.stationarity <= 1e-6);
            assert!(sol.t > 0.0);
        }
    }

    #[test]
    fn slot_solve_matches_single_slot_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let c = PskConstellation::new(8).unwrap();
        let h = random_channel(&mut rng, 1, 3);
        let idx = [5];
        let block = SymbolBlock::from_indices(&c, 1, 1, &idx).unwrap();
        let slot = solve_slot(&h, &[c.point(5)], &c, 1.0).unwrap();
        let blockwise = solve_primal_p1(&h, &block, 1.0).unwrap();
        assert!((slot.t - blockwise.t).abs() <= 1e-8 * slot.t);
    }
}
