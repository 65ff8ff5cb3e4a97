//! Reference precoders: zero forcing, regularized zero forcing, and per-slot CI-SLP.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CiError, Result};
use crate::geometry::{ChannelMatrix, PskConstellation, C64};
use crate::oracle::{solve_slot, SlotSolution};

/// Singular-value ratio above which `H` is treated as rank deficient.
const RANK_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    #[serde(rename = "ZF")]
    Zf,
    #[serde(rename = "RZF")]
    Rzf,
    #[serde(rename = "CI_SLP")]
    CiSlp,
}

fn normalize(w: DMatrix<C64>, p0: f64) -> DMatrix<C64> {
    let norm = w.norm();
    if norm == 0.0 {
        return w;
    }
    w * C64::new(p0.sqrt() / norm, 0.0)
}

/// `W = c·Hᴴ(HHᴴ)⁻¹` with `‖W‖_F² = p0`, so `HW = c·I`.
pub fn zf_precoder(channel: &ChannelMatrix, p0: f64) -> Result<DMatrix<C64>> {
    let h = channel.matrix();
    let sv = h.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 0.0) || smax / smin > RANK_CONDITION {
        return Err(CiError::RankDeficient(format!(
            "H has singular values in [{smin:e}, {smax:e}], zero forcing needs rank {}",
            channel.users()
        )));
    }
    let hh = h.adjoint();
    let inv = (h * &hh)
        .try_inverse()
        .ok_or_else(|| CiError::RankDeficient("H Hᴴ is not invertible".into()))?;
    Ok(normalize(hh * inv, p0))
}

/// `W = c·Hᴴ(HHᴴ + (Kσ²/p0)·I)⁻¹` with `‖W‖_F² = p0`.
///
/// Evaluated through the SVD `H = UΣVᴴ` as `V Σ(Σ² + ρ)⁻¹ Uᴴ`, which stays
/// defined for rank-deficient `H`.
pub fn rzf_precoder(channel: &ChannelMatrix, p0: f64, noise_var: f64) -> DMatrix<C64> {
    let h = channel.matrix();
    let rho = channel.users() as f64 * noise_var / p0;
    let svd = h.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᴴ");
    let smax = svd.singular_values.max();
    let gains = DVector::from_iterator(
        svd.singular_values.len(),
        svd.singular_values.iter().map(|&s| {
            if s <= smax / RANK_CONDITION {
                C64::new(0.0, 0.0)
            } else {
                C64::new(s / (s * s + rho), 0.0)
            }
        }),
    );
    let w = v_t.adjoint() * DMatrix::from_diagonal(&gains) * u.adjoint();
    normalize(w, p0)
}

/// Per-slot CI-SLP transmit vector with `‖x‖² = p0`.
pub fn ci_slp_precoder(
    channel: &ChannelMatrix,
    constellation: &PskConstellation,
    slot_symbols: &[C64],
    p0: f64,
) -> Result<SlotSolution> {
    solve_slot(channel, slot_symbols, constellation, p0)
}
