//! Symbol-scaling constructive-interference geometry.
//!
//! A PSK symbol `s` with phase `φ` is split along the two decision boundaries
//! of its sector, `s = s_A + s_B` with `s_A ∥ e^{j(φ+π/M)}` and
//! `s_B ∥ e^{j(φ−π/M)}`. A noiseless received point `r = h_kᵀ W s` is written
//! in the same basis, `r = α_A s_A + α_B s_B`, and the scaling factors
//! `(α_A, α_B)` measure how far `r` sits from the boundaries.
//!
//! Complex quantities are lifted to real ones by stacking real parts over
//! imaginary parts: `s_E = [Re s; Im s]`, `c_E = T s_E = [Im s; −Re s]`, and
//! the precoder `W` is carried as `Ŵ = [Re W, −Im W]` so that
//! `Ŵ s_E = Re(W s)` and `Ŵ c_E = Im(W s)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{CiError, Result};

pub type C64 = Complex64;

/// Tolerance used when matching a complex value to a constellation point.
const MEMBERSHIP_TOL: f64 = 1e-9;

/// Unit-modulus `M`-PSK constellation with points `e^{j(2πk/M + offset)}`.
///
/// The default offset is zero. Decision boundaries sit at `±π/M` around
/// each point.
#[derive(Debug, Clone, PartialEq)]
pub struct PskConstellation {
    order: usize,
    offset: f64,
    points: Vec<C64>,
}

impl PskConstellation {
    pub fn new(order: usize) -> Result<Self> {
        Self::with_offset(order, 0.0)
    }

    /// Constellation rotated by `offset` radians (e.g. `π/4` for the usual QPSK).
    pub fn with_offset(order: usize, offset: f64) -> Result<Self> {
        if order < 2 {
            return Err(CiError::InvalidConstellation(format!(
                "PSK order must be at least 2, got {order}"
            )));
        }
        if !offset.is_finite() {
            return Err(CiError::InvalidConstellation("non-finite phase offset".into()));
        }
        let points = (0..order)
            .map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / order as f64 + offset))
            .collect();
        Ok(Self {
            order,
            offset,
            points,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> C64 {
        self.points[index]
    }

    /// Half-width of a decision sector, `π/M`.
    pub fn half_angle(&self) -> f64 {
        PI / self.order as f64
    }

    /// Index of the constellation point equal to `symbol`, if any.
    pub fn index_of(&self, symbol: C64) -> Option<usize> {
        self.points
            .iter()
            .position(|p| (p - symbol).norm() <= MEMBERSHIP_TOL)
    }

    fn require_index(&self, symbol: C64) -> Result<usize> {
        self.index_of(symbol)
            .ok_or(CiError::NotAConstellationPoint {
                re: symbol.re,
                im: symbol.im,
                order: self.order,
            })
    }
}

/// `N` slots of `K` PSK symbols together with their lifted forms.
#[derive(Debug, Clone)]
pub struct SymbolBlock {
    constellation: PskConstellation,
    indices: Vec<usize>,
    symbols: DMatrix<C64>,
    s_ext: Vec<DVector<f64>>,
    c_ext: Vec<DVector<f64>>,
}

impl SymbolBlock {
    /// Builds a block from slot-major constellation indices (`indices[n * K + k]`).
    pub fn from_indices(
        constellation: &PskConstellation,
        slots: usize,
        users: usize,
        indices: &[usize],
    ) -> Result<Self> {
        if slots == 0 || users == 0 {
            return Err(CiError::DimensionMismatch(
                "a symbol block needs at least one slot and one user".into(),
            ));
        }
        if indices.len() != slots * users {
            return Err(CiError::DimensionMismatch(format!(
                "expected {} symbol indices for N={slots}, K={users}, got {}",
                slots * users,
                indices.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= constellation.order()) {
            return Err(CiError::InvalidConstellation(format!(
                "symbol index {bad} out of range for {}-PSK",
                constellation.order()
            )));
        }
        let symbols = DMatrix::from_fn(slots, users, |n, k| {
            constellation.point(indices[n * users + k])
        });
        let (s_ext, c_ext) = (0..slots)
            .map(|n| {
                let slot: Vec<C64> = symbols.row(n).iter().copied().collect();
                extend_symbols(&slot)
            })
            .unzip();
        Ok(Self {
            constellation: constellation.clone(),
            indices: indices.to_vec(),
            symbols,
            s_ext,
            c_ext,
        })
    }

    /// Builds a block from an `N×K` matrix of complex constellation points.
    pub fn from_symbols(constellation: &PskConstellation, symbols: &DMatrix<C64>) -> Result<Self> {
        let (slots, users) = symbols.shape();
        let mut indices = Vec::with_capacity(slots * users);
        for n in 0..slots {
            for k in 0..users {
                indices.push(constellation.require_index(symbols[(n, k)])?);
            }
        }
        Self::from_indices(constellation, slots, users, &indices)
    }

    pub fn constellation(&self) -> &PskConstellation {
        &self.constellation
    }

    /// Block length `N`.
    pub fn slots(&self) -> usize {
        self.symbols.nrows()
    }

    /// Number of users `K`.
    pub fn users(&self) -> usize {
        self.symbols.ncols()
    }

    /// `N×K` matrix of complex symbols; row `n` is `(s^n)ᵀ`.
    pub fn symbols(&self) -> &DMatrix<C64> {
        &self.symbols
    }

    pub fn index(&self, slot: usize, user: usize) -> usize {
        self.indices[slot * self.users() + user]
    }

    pub fn slot(&self, slot: usize) -> Vec<C64> {
        self.symbols.row(slot).iter().copied().collect()
    }

    pub fn slot_vector(&self, slot: usize) -> DVector<C64> {
        DVector::from_iterator(self.users(), self.symbols.row(slot).iter().copied())
    }

    /// `s_E^n`.
    pub fn s_ext(&self, slot: usize) -> &DVector<f64> {
        &self.s_ext[slot]
    }

    /// `c_E^n = T s_E^n`.
    pub fn c_ext(&self, slot: usize) -> &DVector<f64> {
        &self.c_ext[slot]
    }

    /// One geometry per slot, all against the same channel.
    pub fn slot_geometries(&self, channel: &ChannelMatrix) -> Result<Vec<SlotGeometry>> {
        (0..self.slots())
            .map(|n| {
                let mut geom = build_slot_geometry(channel, &self.slot(n), &self.constellation)?;
                geom.slot = n;
                Ok(geom)
            })
            .collect()
    }
}

/// Selector and rotation matrices of the real lifting.
///
/// `P = [I; 0]`, `Q = [0; I]` (both `2N_T×N_T`) and `T = [0, I_K; −I_K, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftingOperators {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub t: DMatrix<f64>,
}

impl LiftingOperators {
    pub fn new(antennas: usize, users: usize) -> Self {
        let (p, q) = selectors(antennas);
        let t = DMatrix::from_fn(2 * users, 2 * users, |i, j| {
            if i < users && j == i + users {
                1.0
            } else if i >= users && j + users == i {
                -1.0
            } else {
                0.0
            }
        });
        Self { p, q, t }
    }
}

/// `([I_n; 0], [0; I_n])`, each `2n×n`.
pub fn selectors(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = DMatrix::from_fn(2 * n, n, |i, j| if i == j { 1.0 } else { 0.0 });
    let q = DMatrix::from_fn(2 * n, n, |i, j| if i == j + n { 1.0 } else { 0.0 });
    (p, q)
}

/// Downlink channel `H` (`K×N_T`), row `k` is `h_kᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix(DMatrix<C64>);

impl ChannelMatrix {
    pub fn new(h: DMatrix<C64>) -> Result<Self> {
        let (users, antennas) = h.shape();
        if users == 0 || antennas == 0 {
            return Err(CiError::InvalidChannel("empty channel matrix".into()));
        }
        if users > antennas {
            return Err(CiError::InvalidChannel(format!(
                "K ≤ N_T required, got K={users}, N_T={antennas}"
            )));
        }
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CiError::InvalidChannel("non-finite channel entry".into()));
        }
        Ok(Self(h))
    }

    pub fn users(&self) -> usize {
        self.0.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    /// Returns a copy with every row multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.map(|z| z * factor))
    }
}

/// Per-slot map from the lifted precoder to the scaling factors.
///
/// `α_E = M W_E s_E = A Ŵ s_E + B Ŵ c_E`, with `A` and `B` the first and
/// last `N_T` columns of `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotGeometry {
    pub slot: usize,
    pub m: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl SlotGeometry {
    pub fn users(&self) -> usize {
        self.m.nrows() / 2
    }

    pub fn antennas(&self) -> usize {
        self.a.ncols()
    }
}

/// Splits a PSK symbol along the two decision boundaries of its sector.
///
/// Returns `(s_A, s_B)` with `s_A + s_B = symbol`.
pub fn boundary_decomposition(symbol: C64, constellation: &PskConstellation) -> Result<(C64, C64)> {
    constellation.require_index(symbol)?;
    let half = constellation.half_angle();
    let scale = 2.0 * half.cos();
    if scale.abs() < 1e-9 {
        return Err(CiError::DegenerateGeometry(format!(
            "{}-PSK has collinear decision boundaries",
            constellation.order()
        )));
    }
    let phase = symbol.arg();
    let s_a = C64::from_polar(1.0 / scale, phase + half);
    // Close the identity exactly so that s_A + s_B == symbol in floating point.
    let s_b = symbol - s_a;
    Ok((s_a, s_b))
}

/// Builds `M^n`, `A^n`, `B^n` for one slot.
///
/// Rows `k` and `K+k` of `M^n` are `V_k^{-1} H̃_k`, where
/// `V_k = [Re s_A, Re s_B; Im s_A, Im s_B]` and
/// `H̃_k = [Re h_kᵀ, −Im h_kᵀ; Im h_kᵀ, Re h_kᵀ]`.
pub fn build_slot_geometry(
    channel: &ChannelMatrix,
    slot_symbols: &[C64],
    constellation: &PskConstellation,
) -> Result<SlotGeometry> {
    let users = channel.users();
    let antennas = channel.antennas();
    if slot_symbols.len() != users {
        return Err(CiError::DimensionMismatch(format!(
            "slot has {} symbols but the channel serves {users} users",
            slot_symbols.len()
        )));
    }
    let h = channel.matrix();
    let mut m = DMatrix::zeros(2 * users, 2 * antennas);
    for (k, &symbol) in slot_symbols.iter().enumerate() {
        let (s_a, s_b) = boundary_decomposition(symbol, constellation)?;
        let det = s_a.re * s_b.im - s_b.re * s_a.im;
        if det.abs() < 1e-12 {
            return Err(CiError::DegenerateGeometry(format!(
                "boundary basis of user {k} is singular (det = {det:e})"
            )));
        }
        let v_inv = [[s_b.im / det, -s_b.re / det], [-s_a.im / det, s_a.re / det]];
        for j in 0..antennas {
            let hk = h[(k, j)];
            // Columns j and N_T + j of H̃_k.
            let re_col = [hk.re, hk.im];
            let im_col = [-hk.im, hk.re];
            for (row, coeffs) in [(k, v_inv[0]), (users + k, v_inv[1])] {
                m[(row, j)] = coeffs[0] * re_col[0] + coeffs[1] * re_col[1];
                m[(row, antennas + j)] = coeffs[0] * im_col[0] + coeffs[1] * im_col[1];
            }
        }
    }
    let a = m.columns(0, antennas).into_owned();
    let b = m.columns(antennas, antennas).into_owned();
    Ok(SlotGeometry { slot: 0, m, a, b })
}

/// `(s_E, c_E)` for one slot: real parts stacked over imaginary parts.
pub fn extend_symbols(slot_symbols: &[C64]) -> (DVector<f64>, DVector<f64>) {
    let k = slot_symbols.len();
    let s_e = DVector::from_fn(2 * k, |i, _| {
        if i < k {
            slot_symbols[i].re
        } else {
            slot_symbols[i - k].im
        }
    });
    let c_e = DVector::from_fn(2 * k, |i, _| {
        if i < k {
            slot_symbols[i].im
        } else {
            -slot_symbols[i - k].re
        }
    });
    (s_e, c_e)
}

/// `α_E = A Ŵ s_E + B Ŵ c_E`.
pub fn scaling_vector(
    w_hat: &DMatrix<f64>,
    geometry: &SlotGeometry,
    s_e: &DVector<f64>,
    c_e: &DVector<f64>,
) -> DVector<f64> {
    &geometry.a * (w_hat * s_e) + &geometry.b * (w_hat * c_e)
}

/// `Ŵ = [Re W, −Im W]`.
pub fn lift_precoder(w: &DMatrix<C64>) -> DMatrix<f64> {
    let (nt, k) = w.shape();
    DMatrix::from_fn(nt, 2 * k, |i, j| {
        if j < k {
            w[(i, j)].re
        } else {
            -w[(i, j - k)].im
        }
    })
}

/// `W = Ŵ P̂ − j Ŵ Q̂`, the inverse of [`lift_precoder`].
pub fn unlift_precoder(w_hat: &DMatrix<f64>) -> DMatrix<C64> {
    let nt = w_hat.nrows();
    let k = w_hat.ncols() / 2;
    DMatrix::from_fn(nt, k, |i, j| C64::new(w_hat[(i, j)], -w_hat[(i, j + k)]))
}

/// `W_E = P Ŵ + Q Ŵ T = [Re W, −Im W; Im W, Re W]`.
pub fn extended_precoder(w_hat: &DMatrix<f64>) -> DMatrix<f64> {
    let nt = w_hat.nrows();
    let k = w_hat.ncols() / 2;
    let ops = LiftingOperators::new(nt, k);
    &ops.p * w_hat + &ops.q * w_hat * &ops.t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_channel(rng: &mut ChaCha8Rng, k: usize, nt: usize) -> ChannelMatrix {
        ChannelMatrix::new(DMatrix::from_fn(k, nt, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        }))
        .unwrap()
    }

    fn random_precoder(rng: &mut ChaCha8Rng, nt: usize, k: usize) -> DMatrix<C64> {
        DMatrix::from_fn(nt, k, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    /// Cramer's rule in complex form: `r = a·u + b·v` for real `a`, `b`.
    fn decompose(r: C64, u: C64, v: C64) -> (f64, f64) {
        let cross = |x: C64, y: C64| (x * y.conj()).im;
        (cross(r, v) / cross(u, v), cross(r, u) / cross(v, u))
    }

    #[test]
    fn constellation_points_are_unit_sorted_and_distinct() {
        for order in [2, 4, 8, 16] {
            let c = PskConstellation::new(order).unwrap();
            assert_eq!(c.half_angle(), PI / order as f64);
            let mut last = -1.0;
            for p in c.points() {
                assert_abs_diff_eq!(p.norm(), 1.0, epsilon = 1e-12);
                let angle = p.arg().rem_euclid(2.0 * PI);
                assert!(angle > last);
                last = angle;
            }
        }
        assert!(matches!(
            PskConstellation::new(1),
            Err(CiError::InvalidConstellation(_))
        ));
    }

    #[test]
    fn qpsk_boundaries_are_the_axes() {
        let s = C64::from_polar(1.0, PI / 4.0);
        assert!(boundary_decomposition(s, &PskConstellation::new(4).unwrap()).is_err());
        let c = PskConstellation::with_offset(4, PI / 4.0).unwrap();
        let (s_a, s_b) = boundary_decomposition(s, &c).unwrap();
        let half = 0.5_f64.sqrt();
        assert_abs_diff_eq!(s_a.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s_a.im, half, epsilon = 1e-15);
        assert_abs_diff_eq!(s_b.re, half, epsilon = 1e-15);
        assert_abs_diff_eq!(s_b.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn eight_psk_decomposition_of_one() {
        let c = PskConstellation::new(8).unwrap();
        let (s_a, s_b) = boundary_decomposition(C64::new(1.0, 0.0), &c).unwrap();
        let expected = 1.0 / (2.0 * (PI / 8.0).cos());
        assert_abs_diff_eq!(s_a.re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s_a.im, 0.207_106_781_186_547_5, epsilon = 1e-12);
        assert_abs_diff_eq!(s_b.re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s_b.im, -0.207_106_781_186_547_5, epsilon = 1e-12);
        assert_abs_diff_eq!(s_a.norm(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(s_b.norm(), expected, epsilon = 1e-12);
    }

    #[test]
    fn decomposition_identity_and_positive_coefficients() {
        for order in [3, 4, 8, 16] {
            let c = PskConstellation::new(order).unwrap();
            for &s in c.points() {
                let (s_a, s_b) = boundary_decomposition(s, &c).unwrap();
                assert_abs_diff_eq!((s_a + s_b - s).norm(), 0.0, epsilon = 1e-12);
                let u_a = C64::from_polar(1.0, s.arg() + c.half_angle());
                let u_b = C64::from_polar(1.0, s.arg() - c.half_angle());
                let (ca, _) = decompose(s_a, u_a, u_b);
                let (_, cb) = decompose(s_b, u_a, u_b);
                assert!(ca > 0.0 && cb > 0.0);
                // Each component lies along its own boundary only.
                assert_abs_diff_eq!((s_a * u_a.conj()).im, 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!((s_b * u_b.conj()).im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn bpsk_is_degenerate() {
        let c = PskConstellation::new(2).unwrap();
        assert!(matches!(
            boundary_decomposition(C64::new(1.0, 0.0), &c),
            Err(CiError::DegenerateGeometry(_))
        ));
        let h = ChannelMatrix::new(DMatrix::from_element(1, 1, C64::new(1.0, 0.0))).unwrap();
        assert!(build_slot_geometry(&h, &[C64::new(1.0, 0.0)], &c).is_err());
    }

    #[test]
    fn extend_symbols_examples() {
        let one = C64::new(1.0, 0.0);
        let j = C64::new(0.0, 1.0);
        let (s, c) = extend_symbols(&[one]);
        assert_eq!(s.as_slice(), &[1.0, 0.0]);
        assert_eq!(c.as_slice(), &[0.0, -1.0]);
        let (s, c) = extend_symbols(&[j]);
        assert_eq!(s.as_slice(), &[0.0, 1.0]);
        assert_eq!(c.as_slice(), &[1.0, 0.0]);
        let (s, c) = extend_symbols(&[one, j]);
        assert_eq!(s.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(c.as_slice(), &[0.0, 1.0, -1.0, 0.0]);
        let ops = LiftingOperators::new(1, 2);
        assert_eq!(&ops.t * &s, c);
    }

    #[test]
    fn lifting_operator_identities() {
        for (nt, k) in [(1, 1), (3, 2), (4, 4)] {
            let ops = LiftingOperators::new(nt, k);
            let i_nt = DMatrix::<f64>::identity(nt, nt);
            assert_eq!(ops.p.transpose() * &ops.p, i_nt);
            assert_eq!(ops.q.transpose() * &ops.q, i_nt);
            assert_eq!(ops.p.transpose() * &ops.q, DMatrix::zeros(nt, nt));
            assert_eq!(ops.q.transpose() * &ops.p, DMatrix::zeros(nt, nt));
            assert_eq!(&ops.t * &ops.t, -DMatrix::<f64>::identity(2 * k, 2 * k));
            assert_eq!(ops.t.transpose(), -&ops.t);
        }
    }

    #[test]
    fn block_extended_forms_have_norm_k() {
        let c = PskConstellation::new(8).unwrap();
        let block = SymbolBlock::from_indices(&c, 3, 2, &[0, 1, 2, 3, 5, 7]).unwrap();
        for n in 0..3 {
            assert_abs_diff_eq!(block.s_ext(n).norm_squared(), 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(block.c_ext(n).norm_squared(), 2.0, epsilon = 1e-12);
            let slot = block.slot(n);
            for (k, s) in slot.iter().enumerate() {
                assert_eq!(block.c_ext(n)[k], s.im);
                assert_eq!(block.c_ext(n)[2 + k], -s.re);
            }
        }
        let rebuilt = SymbolBlock::from_symbols(&c, block.symbols()).unwrap();
        assert_eq!(rebuilt.index(2, 1), 7);
    }

    #[test]
    fn block_rejects_bad_input() {
        let c = PskConstellation::new(4).unwrap();
        assert!(SymbolBlock::from_indices(&c, 2, 2, &[0, 1, 2]).is_err());
        assert!(SymbolBlock::from_indices(&c, 1, 1, &[4]).is_err());
        let off = DMatrix::from_element(1, 1, C64::new(0.5, 0.0));
        assert!(matches!(
            SymbolBlock::from_symbols(&c, &off),
            Err(CiError::NotAConstellationPoint { .. })
        ));
    }

    #[test]
    fn channel_requires_k_at_most_nt() {
        let h = DMatrix::from_element(3, 2, C64::new(1.0, 0.0));
        assert!(matches!(ChannelMatrix::new(h), Err(CiError::InvalidChannel(_))));
        let h = DMatrix::from_element(1, 2, C64::new(f64::NAN, 0.0));
        assert!(ChannelMatrix::new(h).is_err());
    }

    #[test]
    fn identity_receive_gives_unit_scaling() {
        let c = PskConstellation::with_offset(4, PI / 4.0).unwrap();
        let s = c.point(0);
        let h = ChannelMatrix::new(DMatrix::from_element(1, 1, C64::new(1.0, 0.0))).unwrap();
        let geom = build_slot_geometry(&h, &[s], &c).unwrap();
        let w_hat = lift_precoder(&DMatrix::from_element(1, 1, C64::new(1.0, 0.0)));
        let (s_e, c_e) = extend_symbols(&[s]);
        let alpha = scaling_vector(&w_hat, &geom, &s_e, &c_e);
        assert_abs_diff_eq!(alpha[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(alpha[1], 1.0, epsilon = 1e-12);
        let alpha0 = scaling_vector(&DMatrix::zeros(1, 2), &geom, &s_e, &c_e);
        assert_eq!(alpha0, DVector::zeros(2));
    }

    #[test]
    fn geometry_columns_split_m() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = PskConstellation::new(8).unwrap();
        let h = random_channel(&mut rng, 2, 3);
        let geom = build_slot_geometry(&h, &[c.point(3), c.point(6)], &c).unwrap();
        assert_eq!(geom.a, geom.m.columns(0, 3).into_owned());
        assert_eq!(geom.b, geom.m.columns(3, 3).into_owned());
        let (p, q) = selectors(3);
        assert_eq!(&geom.m * p, geom.a);
        assert_eq!(&geom.m * q, geom.b);
    }

    #[test]
    fn rows_of_m_depend_only_on_their_user() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c = PskConstellation::new(8).unwrap();
        let h = random_channel(&mut rng, 3, 4);
        let slot = [c.point(1), c.point(4), c.point(7)];
        let base = build_slot_geometry(&h, &slot, &c).unwrap();
        let mut h2 = h.matrix().clone();
        for j in 0..4 {
            h2[(1, j)] = C64::new(rng.random(), rng.random());
        }
        let other = build_slot_geometry(&ChannelMatrix::new(h2).unwrap(), &slot, &c).unwrap();
        for row in [0, 2, 3, 5] {
            assert_eq!(base.m.row(row), other.m.row(row));
        }
        assert_ne!(base.m.row(1), other.m.row(1));
    }

    #[test]
    fn lifting_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (nt, k) = (rng.random_range(1..5), rng.random_range(1..4));
            let w = random_precoder(&mut rng, nt, k);
            let s: Vec<C64> = (0..k)
                .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let sv = DVector::from_column_slice(&s);
            let ws = &w * &sv;
            let w_hat = lift_precoder(&w);
            let (s_e, c_e) = extend_symbols(&s);
            let we_s = extended_precoder(&w_hat) * &s_e;
            let ws_hat = &w_hat * &s_e;
            let wc_hat = &w_hat * &c_e;
            for i in 0..nt {
                assert_abs_diff_eq!(we_s[i], ws[i].re, epsilon = 1e-12);
                assert_abs_diff_eq!(we_s[nt + i], ws[i].im, epsilon = 1e-12);
                assert_abs_diff_eq!(ws_hat[i], ws[i].re, epsilon = 1e-12);
                assert_abs_diff_eq!(wc_hat[i], ws[i].im, epsilon = 1e-12);
            }
            assert_abs_diff_eq!(
                ws_hat.norm_squared() + wc_hat.norm_squared(),
                ws.norm_squared(),
                epsilon = 1e-12
            );
            assert_eq!(unlift_precoder(&w_hat), w);
            // Real and imaginary parts through the 2K×K selectors.
            let (p_hat, q_hat) = selectors(k);
            let re = &w_hat * p_hat;
            let im = -(&w_hat * q_hat);
            let rebuilt = DMatrix::from_fn(nt, k, |i, j| C64::new(re[(i, j)], im[(i, j)]));
            assert_eq!(rebuilt, w);
        }
    }

    #[test]
    fn scaling_vector_matches_complex_decomposition() {
        // α-oracle equivalence over 1000 random instances.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..1000 {
            let order = if rng.random::<bool>() { 4 } else { 8 };
            let c = PskConstellation::new(order).unwrap();
            let k = rng.random_range(1..=4);
            let nt = rng.random_range(k..=4);
            let h = random_channel(&mut rng, k, nt);
            let slot: Vec<C64> = (0..k).map(|_| c.point(rng.random_range(0..order))).collect();
            let w = random_precoder(&mut rng, nt, k);
            let geom = build_slot_geometry(&h, &slot, &c).unwrap();
            let (s_e, c_e) = extend_symbols(&slot);
            let w_hat = lift_precoder(&w);
            let alpha = scaling_vector(&w_hat, &geom, &s_e, &c_e);
            let alpha_m = &geom.m * extended_precoder(&w_hat) * &s_e;
            let received = h.matrix() * &w * DVector::from_column_slice(&slot);
            for user in 0..k {
                let s = slot[user];
                let u_a = C64::from_polar(1.0, s.arg() + c.half_angle());
                let u_b = C64::from_polar(1.0, s.arg() - c.half_angle());
                let rho = 1.0 / (2.0 * c.half_angle().cos());
                let (a, b) = decompose(received[user], u_a * rho, u_b * rho);
                assert!((alpha[user] - a).abs() <= 1e-9 * (1.0 + a.abs()));
                assert!((alpha[k + user] - b).abs() <= 1e-9 * (1.0 + b.abs()));
                assert!((alpha_m[user] - a).abs() <= 1e-9 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn received_point_inside_sector_has_nonnegative_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let c = PskConstellation::new(8).unwrap();
        let h = ChannelMatrix::new(DMatrix::from_element(1, 1, C64::new(1.0, 0.0))).unwrap();
        for _ in 0..200 {
            let idx = rng.random_range(0..8);
            let s = c.point(idx);
            let offset = (rng.random::<f64>() * 2.0 - 1.0) * 0.999 * c.half_angle();
            let w = C64::from_polar(rng.random::<f64>() * 3.0 + 0.01, offset);
            let geom = build_slot_geometry(&h, &[s], &c).unwrap();
            let (s_e, c_e) = extend_symbols(&[s]);
            let alpha =
                scaling_vector(&lift_precoder(&DMatrix::from_element(1, 1, w)), &geom, &s_e, &c_e);
            assert!(alpha[0] >= 0.0 && alpha[1] >= 0.0, "{alpha:?}");
        }
    }
}
