//! Dual simplex-QP assembly and closed-form precoder recovery.
//!
//! For a block of `N` slots the CI-BLP problem
//! `max t  s.t.  α_k^n(Ŵ) ≥ t,  Σ_n ‖W s^n‖² ≤ N p0`
//! has the dual `min δᵀUδ` over the simplex in `R^{2NK}`. Given the dual
//! optimum, `μ = sqrt(δᵀUδ / 4Np0)` and
//! `Ŵ = (1/2μ) Σ_n [Aⁿᵀ δⁿ s_Eⁿᵀ + Bⁿᵀ δⁿ c_Eⁿᵀ] D⁻¹`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{CiError, Result};
use crate::geometry::{scaling_vector, unlift_precoder, ChannelMatrix, SlotGeometry, SymbolBlock, C64};
use crate::simplex_qp::{self, SimplexQpProblem, SimplexQpSolution, SolverOptions};

/// Largest accepted condition number of `D`.
pub const MAX_GRAM_CONDITION: f64 = 1e10;
/// `δᵀUδ` at or below this value is treated as a degenerate dual.
const DEGENERATE_QUADRATIC: f64 = 1e-14;

/// How to invert the block Gram matrix `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramPolicy {
    /// Refuse `D` with condition number above 1e10.
    #[default]
    Strict,
    /// Use the Moore–Penrose inverse when `D` is rank deficient.
    ///
    /// The block symbols span the range of `D`, so every quantity the dual
    /// needs is unchanged by the choice of generalized inverse.
    PseudoInverse,
}

/// `D = Σ_n s_Eⁿ s_Eⁿᵀ + c_Eⁿ c_Eⁿᵀ` and its (generalized) inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct GramData {
    pub d: DMatrix<f64>,
    pub d_inv: DMatrix<f64>,
    /// `λ_max / λ_min`; infinite when `D` is singular.
    pub cond: f64,
    pub rank: usize,
}

/// The `N×N` scalars `p, q, f, g` coupling slot pairs through `D⁻¹`.
///
/// `p[(m,n)] = s_Eⁿᵀ D⁻¹ s_Eᵐ`, `q[(m,n)] = c_Eⁿᵀ D⁻¹ c_Eᵐ`,
/// `f[(m,n)] = c_Eⁿᵀ D⁻¹ s_Eᵐ`, `g[(m,n)] = s_Eⁿᵀ D⁻¹ c_Eᵐ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCoefficients {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

/// Strict `D` construction: errors when `cond(D) > 1e10`.
pub fn build_d(block: &SymbolBlock) -> Result<GramData> {
    build_gram(block, GramPolicy::Strict)
}

pub fn build_gram(block: &SymbolBlock, policy: GramPolicy) -> Result<GramData> {
    let dim = 2 * block.users();
    let mut d = DMatrix::zeros(dim, dim);
    for n in 0..block.slots() {
        let s = block.s_ext(n);
        let c = block.c_ext(n);
        d.ger(1.0, s, s, 1.0);
        d.ger(1.0, c, c, 1.0);
    }
    let eigen = SymmetricEigen::new(d.clone());
    let lambda_max = eigen.eigenvalues.max();
    let lambda_min = eigen.eigenvalues.min();
    let cond = if lambda_min > 0.0 {
        lambda_max / lambda_min
    } else {
        f64::INFINITY
    };
    if cond <= MAX_GRAM_CONDITION {
        let d_inv = d
            .clone()
            .cholesky()
            .ok_or(CiError::SingularD { cond })?
            .inverse();
        return Ok(GramData {
            d,
            d_inv,
            cond,
            rank: dim,
        });
    }
    match policy {
        GramPolicy::Strict => Err(CiError::SingularD { cond }),
        GramPolicy::PseudoInverse => {
            let cutoff = lambda_max / MAX_GRAM_CONDITION;
            let mut d_inv = DMatrix::zeros(dim, dim);
            let mut rank = 0;
            for (i, &lambda) in eigen.eigenvalues.iter().enumerate() {
                if lambda > cutoff {
                    let v = eigen.eigenvectors.column(i);
                    d_inv.ger(1.0 / lambda, &v, &v, 1.0);
                    rank += 1;
                }
            }
            Ok(GramData {
                d,
                d_inv,
                cond,
                rank,
            })
        }
    }
}

pub fn cross_coefficients(gram: &GramData, block: &SymbolBlock) -> CrossCoefficients {
    let slots = block.slots();
    let inv_s: Vec<DVector<f64>> = (0..slots).map(|m| &gram.d_inv * block.s_ext(m)).collect();
    let inv_c: Vec<DVector<f64>> = (0..slots).map(|m| &gram.d_inv * block.c_ext(m)).collect();
    let mut coeffs = CrossCoefficients {
        p: DMatrix::zeros(slots, slots),
        q: DMatrix::zeros(slots, slots),
        f: DMatrix::zeros(slots, slots),
        g: DMatrix::zeros(slots, slots),
    };
    for m in 0..slots {
        for n in 0..slots {
            coeffs.p[(m, n)] = block.s_ext(n).dot(&inv_s[m]);
            coeffs.q[(m, n)] = block.c_ext(n).dot(&inv_c[m]);
            coeffs.f[(m, n)] = block.c_ext(n).dot(&inv_s[m]);
            coeffs.g[(m, n)] = block.s_ext(n).dot(&inv_c[m]);
        }
    }
    coeffs
}

fn check_geometries(geometries: &[SlotGeometry], coeffs: &CrossCoefficients) -> Result<(usize, usize)> {
    let first = geometries
        .first()
        .ok_or_else(|| CiError::DimensionMismatch("no slot geometries".into()))?;
    let (rows, antennas) = first.a.shape();
    for (n, geom) in geometries.iter().enumerate() {
        if geom.a.shape() != (rows, antennas) || geom.b.shape() != (rows, antennas) {
            return Err(CiError::DimensionMismatch(format!(
                "slot {n} geometry is {:?}/{:?}, expected {rows}×{antennas}",
                geom.a.shape(),
                geom.b.shape()
            )));
        }
    }
    if coeffs.p.nrows() != geometries.len() {
        return Err(CiError::DimensionMismatch(format!(
            "{} slot geometries but {}×{} coefficients",
            geometries.len(),
            coeffs.p.nrows(),
            coeffs.p.ncols()
        )));
    }
    Ok((rows, antennas))
}

/// Assembles the `2NK×2NK` dual matrix from its `2K×2K` blocks
/// `U_{m,n} = p Aᵐ Aⁿᵀ + f Aᵐ Bⁿᵀ + g Bᵐ Aⁿᵀ + q Bᵐ Bⁿᵀ`.
pub fn build_u(geometries: &[SlotGeometry], coeffs: &CrossCoefficients) -> Result<DMatrix<f64>> {
    let (rows, _) = check_geometries(geometries, coeffs)?;
    let slots = geometries.len();
    let mut u = DMatrix::zeros(rows * slots, rows * slots);
    for (m, gm) in geometries.iter().enumerate() {
        for (n, gn) in geometries.iter().enumerate() {
            let left = &gn.a * coeffs.p[(m, n)] + &gn.b * coeffs.f[(m, n)];
            let right = &gn.a * coeffs.g[(m, n)] + &gn.b * coeffs.q[(m, n)];
            let block = &gm.a * left.transpose() + &gm.b * right.transpose();
            u.view_mut((m * rows, n * rows), (rows, rows)).copy_from(&block);
        }
    }
    Ok(u)
}

/// The two halves of the block power expanded in `δ`: `δᵀFδ` is the
/// `s_E` part and `δᵀGδ` the `c_E` part, each scaled by `4μ²`.
#[cfg(any(test, feature = "validation"))]
#[derive(Debug, Clone, PartialEq)]
pub struct FgMatrices {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

/// Builds `F = Σ_l F^l` and `G = Σ_l G^l` block by block.
#[cfg(any(test, feature = "validation"))]
pub fn build_fg(geometries: &[SlotGeometry], coeffs: &CrossCoefficients) -> Result<FgMatrices> {
    let (rows, _) = check_geometries(geometries, coeffs)?;
    let slots = geometries.len();
    let (p, q, f, g) = (&coeffs.p, &coeffs.q, &coeffs.f, &coeffs.g);
    let mut big_f = DMatrix::zeros(rows * slots, rows * slots);
    let mut big_g = DMatrix::zeros(rows * slots, rows * slots);
    for (m, gm) in geometries.iter().enumerate() {
        for (n, gn) in geometries.iter().enumerate() {
            let aa = &gm.a * gn.a.transpose();
            let ab = &gm.a * gn.b.transpose();
            let ba = &gm.b * gn.a.transpose();
            let bb = &gm.b * gn.b.transpose();
            let mut f_block = DMatrix::zeros(rows, rows);
            let mut g_block = DMatrix::zeros(rows, rows);
            for l in 0..slots {
                f_block += &aa * (p[(l, n)] * p[(m, l)])
                    + &ab * (f[(l, n)] * p[(m, l)])
                    + &ba * (p[(l, n)] * g[(m, l)])
                    + &bb * (f[(l, n)] * g[(m, l)]);
                g_block += &aa * (g[(l, n)] * f[(m, l)])
                    + &ab * (q[(l, n)] * f[(m, l)])
                    + &ba * (g[(l, n)] * q[(m, l)])
                    + &bb * (q[(l, n)] * q[(m, l)]);
            }
            big_f.view_mut((m * rows, n * rows), (rows, rows)).copy_from(&f_block);
            big_g.view_mut((m * rows, n * rows), (rows, rows)).copy_from(&g_block);
        }
    }
    Ok(FgMatrices { f: big_f, g: big_g })
}

/// `μ = sqrt(δᵀUδ / (4 N p0))`.
pub fn recover_mu(delta: &DVector<f64>, u: &DMatrix<f64>, slots: usize, p0: f64) -> Result<f64> {
    if u.nrows() != delta.len() {
        return Err(CiError::DimensionMismatch(format!(
            "δ has {} entries, U is {}×{}",
            delta.len(),
            u.nrows(),
            u.ncols()
        )));
    }
    let quad = delta.dot(&(u * delta));
    if quad <= DEGENERATE_QUADRATIC {
        return Err(CiError::DegenerateDual(quad));
    }
    Ok((quad / (4.0 * slots as f64 * p0)).sqrt())
}

/// Dual certificate of a CI-BLP solve.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    /// Stacked multipliers `[δ¹; …; δᴺ]`, each `δⁿ ∈ R^{2K}`.
    pub delta_e: DVector<f64>,
    pub mu: f64,
    /// Smallest scaling factor achieved by the recovered precoder.
    pub t: f64,
}

/// Simplex-QP statistics attached by [`solve_ci_blp`].
#[derive(Debug, Clone, PartialEq)]
pub struct QpReport {
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `sqrt(N p0 δᵀUδ)`, the optimal `t` implied by the dual objective.
    pub dual_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    /// `Ŵ = [Re W, −Im W]`, `N_T×2K`.
    pub w_hat: DMatrix<f64>,
    /// Complex precoder `W`, `N_T×K`.
    pub w: DMatrix<C64>,
    pub certificate: DualSolution,
    /// `Σ_n ‖W sⁿ‖²`.
    pub block_power: f64,
    pub qp: Option<QpReport>,
}

impl Precoder {
    pub fn transmit(&self, slot: &DVector<C64>) -> DVector<C64> {
        &self.w * slot
    }

    /// Scaling factors of every slot, `α_Eⁿ`, stacked like `δ_E`.
    pub fn scaling_factors(&self, geometries: &[SlotGeometry], block: &SymbolBlock) -> DVector<f64> {
        let rows = 2 * block.users();
        let mut alpha = DVector::zeros(rows * block.slots());
        for (n, geom) in geometries.iter().enumerate() {
            let a = scaling_vector(&self.w_hat, geom, block.s_ext(n), block.c_ext(n));
            alpha.rows_mut(n * rows, rows).copy_from(&a);
        }
        alpha
    }
}

/// `Σ_n [Aⁿᵀ δⁿ s_Eⁿᵀ + Bⁿᵀ δⁿ c_Eⁿᵀ]`, the multiplier-weighted CI gradient.
pub fn weighted_gradient(
    delta: &DVector<f64>,
    geometries: &[SlotGeometry],
    block: &SymbolBlock,
) -> DMatrix<f64> {
    let rows = 2 * block.users();
    let antennas = geometries[0].antennas();
    let mut r = DMatrix::zeros(antennas, rows);
    for (n, geom) in geometries.iter().enumerate() {
        let dn = delta.rows(n * rows, rows);
        let a_d = geom.a.transpose() * dn;
        let b_d = geom.b.transpose() * dn;
        r.ger(1.0, &a_d, block.s_ext(n), 1.0);
        r.ger(1.0, &b_d, block.c_ext(n), 1.0);
    }
    r
}

/// Relative residual of the Lagrangian stationarity `2μŴD = Σ_n [Aⁿᵀδⁿs_Eⁿᵀ + Bⁿᵀδⁿc_Eⁿᵀ]`.
pub fn stationarity_residual(
    precoder: &Precoder,
    geometries: &[SlotGeometry],
    gram: &GramData,
    block: &SymbolBlock,
) -> f64 {
    let r = weighted_gradient(&precoder.certificate.delta_e, geometries, block);
    let lhs = &precoder.w_hat * &gram.d * (2.0 * precoder.certificate.mu);
    (&lhs - &r).norm() / lhs.norm().max(r.norm()).max(f64::MIN_POSITIVE)
}

/// Closed-form precoder from the dual variables.
pub fn recover_precoder(
    delta: &DVector<f64>,
    mu: f64,
    geometries: &[SlotGeometry],
    gram: &GramData,
    block: &SymbolBlock,
) -> Result<Precoder> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(CiError::DegenerateDual(mu));
    }
    let rows = 2 * block.users();
    if geometries.len() != block.slots() || delta.len() != rows * block.slots() {
        return Err(CiError::DimensionMismatch(format!(
            "δ has {} entries for N={}, K={} and {} geometries",
            delta.len(),
            block.slots(),
            block.users(),
            geometries.len()
        )));
    }
    let r = weighted_gradient(delta, geometries, block);
    let w_hat = r * &gram.d_inv / (2.0 * mu);
    let w = unlift_precoder(&w_hat);
    let block_power = (0..block.slots())
        .map(|n| (&w * block.slot_vector(n)).norm_squared())
        .sum();
    let mut precoder = Precoder {
        w_hat,
        w,
        certificate: DualSolution {
            delta_e: delta.clone(),
            mu,
            t: 0.0,
        },
        block_power,
        qp: None,
    };
    precoder.certificate.t = precoder.scaling_factors(geometries, block).min();
    Ok(precoder)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiBlpOptions {
    pub qp: SolverOptions,
    pub gram: GramPolicy,
    /// Turn a non-converged QP into [`CiError::NotConverged`].
    pub require_convergence: bool,
}

impl Default for CiBlpOptions {
    fn default() -> Self {
        Self {
            qp: SolverOptions::default(),
            gram: GramPolicy::Strict,
            require_convergence: true,
        }
    }
}

/// Everything needed before the QP solve, kept so the solve can be timed alone.
#[derive(Debug, Clone)]
pub struct CiBlpProblem {
    pub geometries: Vec<SlotGeometry>,
    pub gram: GramData,
    pub coefficients: CrossCoefficients,
    pub qp: SimplexQpProblem,
    pub p0: f64,
}

impl CiBlpProblem {
    pub fn assemble(
        channel: &ChannelMatrix,
        block: &SymbolBlock,
        p0: f64,
        gram_policy: GramPolicy,
    ) -> Result<Self> {
        if !(p0 > 0.0 && p0.is_finite()) {
            return Err(CiError::InvalidConfig(format!("power budget p0 must be positive, got {p0}")));
        }
        if channel.users() != block.users() {
            return Err(CiError::DimensionMismatch(format!(
                "channel serves {} users, block carries {}",
                channel.users(),
                block.users()
            )));
        }
        let geometries = block.slot_geometries(channel)?;
        let gram = build_gram(block, gram_policy)?;
        let coefficients = cross_coefficients(&gram, block);
        let u = build_u(&geometries, &coefficients)?;
        let qp = SimplexQpProblem::new(u)?;
        Ok(Self {
            geometries,
            gram,
            coefficients,
            qp,
            p0,
        })
    }

    pub fn u(&self) -> &DMatrix<f64> {
        self.qp.matrix()
    }

    pub fn solve_qp(&self, options: &SolverOptions) -> SimplexQpSolution {
        simplex_qp::solve(&self.qp, options)
    }

    pub fn recover(&self, block: &SymbolBlock, solution: &SimplexQpSolution) -> Result<Precoder> {
        let slots = block.slots();
        let mu = recover_mu(&solution.delta, self.u(), slots, self.p0)?;
        let mut precoder = recover_precoder(&solution.delta, mu, &self.geometries, &self.gram, block)?;
        precoder.qp = Some(QpReport {
            objective: solution.objective,
            kkt_residual: solution.kkt_residual,
            iterations: solution.iterations,
            converged: solution.converged,
            dual_t: (slots as f64 * self.p0 * solution.objective).sqrt(),
        });
        Ok(precoder)
    }
}

/// End-to-end CI-BLP: assemble the dual, solve it, recover `W`.
pub fn solve_ci_blp(
    channel: &ChannelMatrix,
    block: &SymbolBlock,
    p0: f64,
    options: &CiBlpOptions,
) -> Result<Precoder> {
    let problem = CiBlpProblem::assemble(channel, block, p0, options.gram)?;
    let solution = problem.solve_qp(&options.qp);
    if options.require_convergence && !solution.converged {
        return Err(CiError::NotConverged {
            iterations: solution.iterations,
            residual: solution.kkt_residual,
        });
    }
    problem.recover(block, &solution)
}
