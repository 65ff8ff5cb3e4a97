//! Convex quadratic minimization over the probability simplex.
//!
//! Solves `min δᵀQδ  s.t.  δ ≥ 0, 1ᵀδ = 1` for a dense symmetric PSD `Q`
//! with accelerated projected gradient (FISTA), gradient-based adaptive
//! restart, and a monotone safeguard. Every iterate is the output of an exact
//! Euclidean projection, so feasibility holds throughout. Periodically the
//! current support is polished by an exact equality-constrained solve, which
//! gives KKT residuals near machine precision once the support is identified.

use nalgebra::{DMatrix, DVector};

use crate::error::{CiError, Result};

/// Coordinates at or below this value are treated as off the support.
const SUPPORT_EPS: f64 = 1e-12;
/// Relative slack accepted on objective increases caused by roundoff.
const MONOTONE_SLACK: f64 = 1e-14;
/// Absolute roundoff slack on the objective, relative to `‖Q‖₂`.
const ROUNDOFF_SLACK: f64 = 16.0 * f64::EPSILON;
/// Residual normalizer floor relative to `2‖Q‖₂`.
const GRADIENT_FLOOR: f64 = 1e-6;
/// Iterations before the first support-polish attempt; doubles after each rejection.
const POLISH_INTERVAL: usize = 16;
/// Consecutive iterates with an unchanged support before polishing.
const SUPPORT_STABLE: usize = 8;
/// Iteration at which an unconverged solve falls back to the exact min-norm-point method.
const EXACT_FALLBACK_AFTER: usize = 256;
/// Support updates tried per polish attempt.
const POLISH_ROUNDS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target normalized KKT residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Record the objective of every accepted iterate.
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 50_000,
            record_trace: false,
        }
    }
}

/// A validated simplex QP.
#[derive(Debug, Clone)]
pub struct SimplexQpProblem {
    q: DMatrix<f64>,
    lambda_max: f64,
}

impl SimplexQpProblem {
    /// Checks symmetry (1e-10 relative) and PSD-ness (λ_min ≥ −1e-8·‖Q‖₂).
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        let d = q.nrows();
        if d == 0 || q.ncols() != d {
            return Err(CiError::InvalidQp(format!(
                "Q must be square and nonempty, got {}×{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(CiError::InvalidQp("non-finite entry in Q".into()));
        }
        let fro = q.norm();
        let asym = (&q - q.transpose()).norm();
        if asym > 1e-10 * fro {
            return Err(CiError::InvalidQp(format!(
                "Q is not symmetric: ‖Q−Qᵀ‖_F = {asym:e}, ‖Q‖_F = {fro:e}"
            )));
        }
        let q = (&q + q.transpose()) * 0.5;
        let lambda_max = largest_eigenvalue(&q);
        if lambda_max > 0.0 {
            let shift = 1e-8 * lambda_max;
            let shifted = &q + DMatrix::<f64>::identity(d, d) * shift;
            if shifted.cholesky().is_none() {
                return Err(CiError::InvalidQp(format!(
                    "Q is not PSD: smallest eigenvalue below −1e-8·‖Q‖₂ = {:e}",
                    -shift
                )));
            }
        } else if fro > 0.0 {
            return Err(CiError::InvalidQp("Q has no positive eigenvalue".into()));
        }
        Ok(Self { q, lambda_max })
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Power-iteration estimate of `‖Q‖₂`.
    pub fn spectral_norm(&self) -> f64 {
        self.lambda_max
    }

    pub fn objective(&self, delta: &DVector<f64>) -> f64 {
        delta.dot(&(&self.q * delta))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexQpSolution {
    pub delta: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective per accepted iterate when [`SolverOptions::record_trace`] is set.
    pub trace: Vec<f64>,
}

/// Euclidean projection onto `{x ≥ 0, 1ᵀx = 1}` (sort-based water filling).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    // Largest support whose water level keeps every member positive.
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    let mut x: Vec<f64> = v.iter().map(|&vi| (vi - tau).max(0.0)).collect();
    // Absorb the rounding residue of the sum into the largest coordinate.
    let sum: f64 = x.iter().sum();
    if let Some((imax, _)) = x
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
    {
        x[imax] = (x[imax] + (1.0 - sum)).max(0.0);
    }
    x
}

/// Normalized KKT residual of `delta` for `min δᵀQδ` over the simplex.
///
/// With `g = 2Qδ` and `λ = δᵀg`, the residual is
/// `max(max_{δ_i > 1e-12} |g_i − λ|, max_i (λ − g_i)_+) / max(‖g‖∞, 2e-6‖Q‖₂)`;
/// it is zero exactly at a KKT point. The floor keeps the residual meaningful
/// when the optimal objective is zero and `g` vanishes.
pub fn certify(problem: &SimplexQpProblem, delta: &DVector<f64>) -> f64 {
    let grad = problem.matrix() * delta * 2.0;
    kkt_residual(delta, &grad, gradient_floor(problem.spectral_norm()))
}

fn gradient_floor(spectral_norm: f64) -> f64 {
    2.0 * GRADIENT_FLOOR * spectral_norm
}

fn kkt_residual(delta: &DVector<f64>, grad: &DVector<f64>, floor: f64) -> f64 {
    let scale = grad.amax().max(floor);
    if scale == 0.0 {
        return 0.0;
    }
    let lambda = delta.dot(grad);
    let mut worst: f64 = 0.0;
    for (&di, &gi) in delta.iter().zip(grad.iter()) {
        if di > SUPPORT_EPS {
            worst = worst.max((gi - lambda).abs());
        }
        worst = worst.max(lambda - gi);
    }
    worst / scale
}

/// Minimizes `δᵀQδ` over the simplex starting from the barycenter.
///
/// Returns the best iterate with `converged = false` when `max_iter` is hit.
pub fn solve(problem: &SimplexQpProblem, options: &SolverOptions) -> SimplexQpSolution {
    let d = problem.dim();
    let q = problem.matrix();
    let mut x = DVector::from_element(d, 1.0 / d as f64);
    let mut qx = q * &x;
    let mut f = x.dot(&qx);
    let mut trace = Vec::new();
    if options.record_trace {
        trace.push(f);
    }

    // Lipschitz constant of ∇(δᵀQδ) = 2Qδ, padded for the power-iteration bias.
    let mut lipschitz = (2.0 * problem.spectral_norm() * 1.02).max(f64::MIN_POSITIVE);
    let mut y = x.clone();
    let mut qy = qx.clone();
    let mut momentum = 1.0_f64;

    let floor = gradient_floor(problem.spectral_norm());
    let roundoff = ROUNDOFF_SLACK * problem.spectral_norm();
    let uphill = |from: f64, to: f64| to > from + MONOTONE_SLACK * from.abs() + roundoff;
    let mut residual = kkt_residual(&x, &(&qx * 2.0), floor);
    let mut iterations = 0;
    let mut next_polish = POLISH_INTERVAL;
    let mut polish_gap = POLISH_INTERVAL;
    let mut polisher = Polisher::new(q);
    let mut support = support_of(&x);
    let mut stable = 0;
    while residual > options.tol && iterations < options.max_iter {
        iterations += 1;
        if iterations == EXACT_FALLBACK_AFTER {
            if let Some(z) = min_norm_point(q) {
                let qz = q * &z;
                let fz = z.dot(&qz);
                let rz = kkt_residual(&z, &(&qz * 2.0), floor);
                if rz < residual && (rz <= options.tol || !uphill(f, fz)) {
                    x = z;
                    qx = qz;
                    f = fz;
                    residual = rz;
                    y.copy_from(&x);
                    qy.copy_from(&qx);
                    momentum = 1.0;
                    if options.record_trace {
                        trace.push(f);
                    }
                    continue;
                }
            }
        }
        let due = iterations >= next_polish
            && (stable >= SUPPORT_STABLE || iterations >= next_polish + polish_gap);
        if due {
            polish_gap *= 2;
            next_polish = iterations + polish_gap;
            if let Some(z) = polisher.polish(&x) {
                let qz = q * &z;
                let fz = z.dot(&qz);
                let rz = kkt_residual(&z, &(&qz * 2.0), floor);
                if !uphill(f, fz) && rz < residual {
                    x = z;
                    qx = qz;
                    f = fz;
                    residual = rz;
                    y.copy_from(&x);
                    qy.copy_from(&qx);
                    momentum = 1.0;
                    if options.record_trace {
                        trace.push(f);
                    }
                    continue;
                }
            }
        }

        let step: Vec<f64> = y
            .iter()
            .zip(qy.iter())
            .map(|(yi, gi)| yi - 2.0 * gi / lipschitz)
            .collect();
        let x_new = DVector::from_vec(project_simplex(&step));
        let qx_new = q * &x_new;
        let f_new = x_new.dot(&qx_new);

        if uphill(f, f_new) {
            if momentum == 1.0 && y == x {
                // A plain projected-gradient step went uphill: the step was too long.
                lipschitz *= 2.0;
            }
            y.copy_from(&x);
            qy.copy_from(&qx);
            momentum = 1.0;
            continue;
        }

        // Gradient restart: drop momentum when it points against the descent step.
        let restart = (&y - &x_new).dot(&(&x_new - &x)) > 0.0;
        let next_momentum = if restart {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt())
        };
        let beta = if restart {
            0.0
        } else {
            (momentum - 1.0) / next_momentum
        };
        y = &x_new + (&x_new - &x) * beta;
        qy = &qx_new + (&qx_new - &qx) * beta;
        x = x_new;
        qx = qx_new;
        f = f_new;
        momentum = next_momentum;
        if options.record_trace {
            trace.push(f);
        }
        residual = kkt_residual(&x, &(&qx * 2.0), floor);
        let next_support = support_of(&x);
        stable = if next_support == support { stable + 1 } else { 0 };
        support = next_support;
    }

    SimplexQpSolution {
        objective: f,
        kkt_residual: residual,
        converged: residual <= options.tol,
        iterations,
        delta: x,
        trace,
    }
}

fn support_of(x: &DVector<f64>) -> Vec<bool> {
    x.iter().map(|&v| v > SUPPORT_EPS).collect()
}

/// Support refinement for the polish step.
///
/// Holds a lazily computed factor `Q = VᵀV`, used on faces where the
/// equality-constrained system is singular (`rank Q` below the support size).
struct Polisher<'a> {
    q: &'a DMatrix<f64>,
    factor: Option<DMatrix<f64>>,
}

impl<'a> Polisher<'a> {
    fn new(q: &'a DMatrix<f64>) -> Self {
        Self { q, factor: None }
    }

    /// Starting from the support of `x`, repeatedly minimizes on the affine
    /// hull of a candidate support, dropping every coordinate that comes out
    /// negative and adding every coordinate whose gradient undercuts the
    /// multiplier, until the support is KKT-consistent. The caller accepts the
    /// result only if it improves on `x`.
    fn polish(&mut self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let d = x.len();
        let mut support: Vec<usize> = (0..d).filter(|&i| x[i] > SUPPORT_EPS).collect();
        let mut anchor: Vec<f64> = support.iter().map(|&i| x[i]).collect();
        for _ in 0..POLISH_ROUNDS {
            let total: f64 = anchor.iter().sum();
            if !(total > 0.0) {
                return None;
            }
            anchor.iter_mut().for_each(|v| *v /= total);
            let z = self.face_minimizer(&support, &anchor)?;
            if z.iter().any(|&v| v < 0.0) {
                let kept: Vec<(usize, f64)> = support
                    .iter()
                    .zip(z.iter())
                    .filter(|(_, &v)| v > 0.0)
                    .map(|(&i, &v)| (i, v))
                    .collect();
                if kept.is_empty() {
                    return None;
                }
                (support, anchor) = kept.into_iter().unzip();
                continue;
            }
            let mut candidate = DVector::zeros(d);
            for (&i, &v) in support.iter().zip(z.iter()) {
                candidate[i] = v;
            }
            let sum = candidate.sum();
            if !(sum > 0.0) {
                return None;
            }
            candidate /= sum;
            let grad = self.q * &candidate * 2.0;
            let lambda = candidate.dot(&grad);
            let cutoff = lambda - 1e-13 * grad.amax();
            let entering: Vec<usize> = (0..d)
                .filter(|&j| candidate[j] == 0.0 && grad[j] < cutoff)
                .collect();
            if entering.is_empty() {
                return Some(candidate);
            }
            support.extend(entering);
            support.sort_unstable();
            support.dedup();
            anchor = support.iter().map(|&i| candidate[i]).collect();
        }
        None
    }

    /// Minimizer of `δᵀQδ` on `{1ᵀδ = 1}` restricted to `support`.
    ///
    /// Uses the KKT system when it is nonsingular. Otherwise returns the
    /// minimizer closest to `anchor` (which sums to one), computed from the
    /// factor as `anchor − (V_S P)⁺ V_S anchor` with `P` the centering projector.
    fn face_minimizer(&mut self, support: &[usize], anchor: &[f64]) -> Option<DVector<f64>> {
        let s = support.len();
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = 2.0 * self.q[(i, j)];
            }
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
        }
        let mut rhs = DVector::zeros(s + 1);
        rhs[s] = 1.0;
        let tol = 1e-10 * kkt.amax();
        if let Some(z) = kkt.clone().lu().solve(&rhs) {
            if z.iter().all(|v| v.is_finite()) && (&kkt * &z - &rhs).amax() <= tol {
                return Some(z.rows(0, s).into_owned());
            }
        }

        let q = self.q;
        let v = self.factor.get_or_insert_with(|| psd_factor(q));
        let v_s = v.select_columns(support);
        let w = DVector::from_column_slice(anchor);
        let mean = v_s.column_mean();
        let mut centered = v_s.clone();
        for mut col in centered.column_iter_mut() {
            col -= &mean;
        }
        let eps = 1e-13 * centered.amax().max(f64::MIN_POSITIVE);
        let correction = centered.svd(true, true).solve(&(&v_s * &w), eps).ok()?;
        let z = w - correction;
        z.iter().all(|v| v.is_finite()).then_some(z)
    }
}

/// Wolfe's minimum-norm-point method on the points with Gram matrix `Q`.
///
/// Maintains an affinely independent corral `S` and weights `λ` with the
/// invariant that `λ` is a convex combination supported on `S`. Each major
/// cycle adds the point most aligned against `x = Σλ_i p_i`; minor cycles move
/// toward the affine minimizer of the corral and drop points whose weight
/// reaches zero. Terminates at a KKT point up to roundoff.
fn min_norm_point(q: &DMatrix<f64>) -> Option<DVector<f64>> {
    let d = q.nrows();
    let scale = q.diagonal().amax();
    if !(scale > 0.0) {
        return Some(DVector::from_element(d, 1.0 / d as f64));
    }
    let start = (0..d).min_by(|&a, &b| q[(a, a)].total_cmp(&q[(b, b)]))?;
    let mut corral = vec![start];
    let mut weights = vec![1.0];
    for _ in 0..10 * d + 10 {
        let lambda = expand(&corral, &weights, d);
        let qx = q * &lambda;
        let norm2 = lambda.dot(&qx);
        let (j, &aligned) = qx.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
        if norm2 - aligned <= 1e-14 * scale || corral.contains(&j) {
            return Some(lambda);
        }
        corral.push(j);
        weights.push(0.0);
        loop {
            let alpha = affine_minimizer(q, &corral)?;
            if alpha.iter().all(|&a| a > 1e-15) {
                weights = alpha.iter().copied().collect();
                break;
            }
            let mut theta: f64 = 1.0;
            for (&w, &a) in weights.iter().zip(alpha.iter()) {
                if a <= 1e-15 {
                    theta = theta.min(w / (w - a));
                }
            }
            let mut kept = Vec::with_capacity(corral.len());
            for (i, (&idx, &w)) in corral.iter().zip(&weights).enumerate() {
                let moved = w + theta * (alpha[i] - w);
                if moved > 1e-15 {
                    kept.push((idx, moved));
                }
            }
            if kept.is_empty() {
                return None;
            }
            let total: f64 = kept.iter().map(|(_, w)| w).sum();
            (corral, weights) = kept.into_iter().map(|(i, w)| (i, w / total)).unzip();
        }
    }
    None
}

fn expand(corral: &[usize], weights: &[f64], d: usize) -> DVector<f64> {
    let mut x = DVector::zeros(d);
    for (&i, &w) in corral.iter().zip(weights) {
        x[i] = w;
    }
    x
}

/// Affine minimizer `α` (with `1ᵀα = 1`) of the corral, or `None` if it is affinely dependent.
fn affine_minimizer(q: &DMatrix<f64>, corral: &[usize]) -> Option<DVector<f64>> {
    let s = corral.len();
    let mut kkt = DMatrix::zeros(s + 1, s + 1);
    for (a, &i) in corral.iter().enumerate() {
        for (b, &j) in corral.iter().enumerate() {
            kkt[(a, b)] = q[(i, j)];
        }
        kkt[(a, s)] = 1.0;
        kkt[(s, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(s + 1);
    rhs[s] = 1.0;
    let z = kkt.clone().lu().solve(&rhs)?;
    let ok = z.iter().all(|v| v.is_finite()) && (&kkt * &z - &rhs).amax() <= 1e-9 * kkt.amax();
    ok.then(|| z.rows(0, s).into_owned())
}

/// `V` with `Q = VᵀV`, keeping eigenvalues above `1e-13·λ_max`.
fn psd_factor(q: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = q.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.amax();
    let keep: Vec<usize> = (0..q.nrows())
        .filter(|&i| eig.eigenvalues[i] > 1e-13 * lmax)
        .collect();
    let mut v = DMatrix::zeros(keep.len(), q.ncols());
    for (row, &i) in keep.iter().enumerate() {
        let scale = eig.eigenvalues[i].sqrt();
        for j in 0..q.ncols() {
            v[(row, j)] = scale * eig.eigenvectors[(j, i)];
        }
    }
    v
}

/// Power iteration for the largest eigenvalue of a symmetric PSD matrix.
fn largest_eigenvalue(q: &DMatrix<f64>) -> f64 {
    let d = q.nrows();
    let mut v = DVector::from_fn(d, |i, _| 1.0 + (i as f64 * 0.618_033_988_7).fract());
    v.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w = q * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= 1e-10 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Rayleigh quotients underestimate; the norm of Qv is an upper-side check.
    (q * &v).norm().max(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(rng: &mut ChaCha8Rng, d: usize, rank: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(rank, d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        b.transpose() * b
    }

    /// Exhaustive support enumeration for the projection.
    fn brute_force_projection(v: &[f64]) -> Vec<f64> {
        let d = v.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1 << d) {
            let support: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
            let tau = (support.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / support.len() as f64;
            let mut x = vec![0.0; d];
            let mut feasible = true;
            for &i in &support {
                x[i] = v[i] - tau;
                if x[i] < 0.0 {
                    feasible = false;
                }
            }
            if !feasible {
                continue;
            }
            let dist: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.as_ref().is_none_or(|(bd, _)| dist < *bd) {
                best = Some((dist, x));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let on = [0.25, 0.5, 0.25];
        let p = project_simplex(&on);
        for (a, b) in p.iter().zip(on) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert_eq!(project_simplex(&[-3.0]), vec![1.0]);
    }

    #[test]
    fn projection_matches_support_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..300 {
            let v: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let fast = project_simplex(&v);
            let slow = brute_force_projection(&v);
            for (a, b) in fast.iter().zip(&slow) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_idempotent(v in prop::collection::vec(-1e3f64..1e3, 1..40)) {
            let x = project_simplex(&v);
            prop_assert!(x.iter().all(|&xi| xi >= 0.0));
            prop_assert!((x.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let again = project_simplex(&x);
            for (a, b) in x.iter().zip(&again) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn identity_splits_evenly() {
        let problem = SimplexQpProblem::new(DMatrix::identity(2, 2)).unwrap();
        let sol = solve(&problem, &SolverOptions::default());
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.delta[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.objective, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn diagonal_one_two() {
        // One-variable KKT: δ₁ = 2/3, δ₂ = 1/3, objective 2/3. Check against a grid.
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let grid_best = (0..=100_000)
            .map(|i| {
                let a = i as f64 / 100_000.0;
                a * a + 2.0 * (1.0 - a) * (1.0 - a)
            })
            .fold(f64::INFINITY, f64::min);
        let problem = SimplexQpProblem::new(q).unwrap();
        let sol = solve(&problem, &SolverOptions::default());
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.delta[0], 2.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.delta[1], 1.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.objective, 2.0 / 3.0, epsilon = 1e-12);
        assert!((sol.objective - grid_best).abs() < 1e-9);
    }

    #[test]
    fn certify_examples() {
        let eye = SimplexQpProblem::new(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(certify(&eye, &DVector::from_vec(vec![0.5, 0.5])), 0.0);
        let diag =
            SimplexQpProblem::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])))
                .unwrap();
        assert!(certify(&diag, &DVector::from_vec(vec![1.0, 0.0])) > 0.0);
    }

    #[test]
    fn random_psd_matches_long_projected_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for rank in [3, 8] {
            let q = random_psd(&mut rng, 8, rank);
            let problem = SimplexQpProblem::new(q.clone()).unwrap();
            let sol = solve(&problem, &SolverOptions::default());
            assert!(sol.converged);
            assert!(sol.kkt_residual <= 1e-9);
            // Plain projected gradient with ten times the budget.
            let lip = 2.0 * q.symmetric_eigenvalues().max();
            let mut x = DVector::from_element(8, 1.0 / 8.0);
            for _ in 0..10 * 50_000 {
                let g = &q * &x * 2.0;
                let step: Vec<f64> = x.iter().zip(g.iter()).map(|(a, b)| a - b / lip).collect();
                x = DVector::from_vec(project_simplex(&step));
            }
            let reference = x.dot(&(&q * &x));
            assert!((sol.objective - reference).abs() <= 1e-8, "{} vs {reference}", sol.objective);
        }
    }

    #[test]
    fn iterates_descend_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_psd(&mut rng, 30, 12);
        let problem = SimplexQpProblem::new(q).unwrap();
        let options = SolverOptions {
            record_trace: true,
            ..SolverOptions::default()
        };
        let sol = solve(&problem, &options);
        assert!(sol.converged);
        for pair in sol.trace.windows(2) {
            let slack = MONOTONE_SLACK * pair[0].abs() + ROUNDOFF_SLACK * problem.spectral_norm();
            assert!(pair[1] <= pair[0] + slack);
        }
        assert!(sol.delta.iter().all(|&v| v >= 0.0));
        assert!((sol.delta.sum() - 1.0).abs() <= 1e-12);
        assert!(sol.objective >= -1e-12 * problem.spectral_norm());
    }

    #[test]
    fn scaling_q_keeps_the_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = random_psd(&mut rng, 10, 10);
        let base = solve(&SimplexQpProblem::new(q.clone()).unwrap(), &SolverOptions::default());
        for c in [0.01, 7.5] {
            let scaled = solve(
                &SimplexQpProblem::new(&q * c).unwrap(),
                &SolverOptions::default(),
            );
            assert!((scaled.objective - c * base.objective).abs() <= 1e-8 * c * base.objective);
            assert!((&scaled.delta - &base.delta).amax() <= 1e-6);
        }
    }

    #[test]
    fn min_norm_point_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..60 {
            let d = 2 + trial % 5;
            let rank = 1 + trial % d;
            let q = random_psd(&mut rng, d, rank);
            let x = min_norm_point(&q).expect("affinely independent corrals on random data");
            assert!((x.sum() - 1.0).abs() <= 1e-12 && x.iter().all(|&v| v >= 0.0));
            let reference = crate::validation::enumerate_supports(&q);
            let f = x.dot(&(&q * &x));
            assert!((f - reference).abs() <= 1e-10 * q.amax().max(1.0), "d={d} rank={rank}: {f} vs {reference}");
        }
    }

    #[test]
    fn max_iter_reports_unconverged() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let q = random_psd(&mut rng, 20, 5);
        let problem = SimplexQpProblem::new(q).unwrap();
        let sol = solve(
            &problem,
            &SolverOptions {
                max_iter: 2,
                ..SolverOptions::default()
            },
        );
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 2);
        assert!((sol.delta.sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn intake_rejects_bad_matrices() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(SimplexQpProblem::new(asym), Err(CiError::InvalidQp(_))));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(SimplexQpProblem::new(indefinite), Err(CiError::InvalidQp(_))));
        let nan = DMatrix::from_element(1, 1, f64::NAN);
        assert!(SimplexQpProblem::new(nan).is_err());
    }
}
