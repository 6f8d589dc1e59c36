//! Operator-selfdecomposable laws on `ℝ^d`: `X = ∫_(0,∞) e^{-tQ} dY(t)`.
//!
//! `Q` must have spectrum in the open right half-plane so that
//! `e^{-tQ} → 0`. Stopping at `τ` gives `X = X_τ + e^{-τQ} X'` on each
//! trajectory, with `X'` an independent copy of `X`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::decomposition::{run_until_stopped, Extendable, StoppingRule, Timeline};
use crate::discount::TruncationPolicy;
use crate::error::{invalid, Error, Result};
use crate::levy::{simulate_segment, JumpPath, JumpSet, LevyModel};
use crate::rng::RngStream;

// Padé degrees with their 1-norm thresholds θ_m and numerator coefficients
// (Higham, scaling and squaring).
const THETA: [(usize, f64); 5] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_230e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068e0),
    (13, 5.371_920_351_148_152e0),
];
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `(U, V)` with `U` odd and `V` even in `a`, for the low-degree approximants.
fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut power = DMatrix::identity(n, n);
    let mut u = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for k in 0..b.len() / 2 {
        u += &power * b[2 * k + 1];
        v += &power * b[2 * k];
        power = &power * &a2;
    }
    (a * u, v)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &PADE13;
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    (u, v)
}

/// Matrix exponential by scaling and squaring around a diagonal Padé
/// approximant of degree 3 to 13. `1×1` inputs use the scalar `exp`.
pub fn matrix_exp(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("matrix_exp needs a square matrix, got {}×{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(m.clone());
    }
    if n == 1 {
        return Ok(DMatrix::from_element(1, 1, m[(0, 0)].exp()));
    }
    if n == 2 {
        let e = exp_2x2(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        return Ok(DMatrix::from_row_slice(2, 2, &e));
    }
    pade_exp(m)
}

/// `exp([[a, b], [c, d]])` in closed form, row-major.
///
/// With `s = (a+d)/2` and `μ² = ((a-d)/2)² + bc`, `(M - sI)² = μ² I`, so
/// `e^M = e^s (cosh μ · I + sinh μ / μ · (M - sI))`. Both coefficients are
/// even in `μ` and are evaluated from `μ²` directly.
fn exp_2x2(a: f64, b: f64, c: f64, d: f64) -> [f64; 4] {
    let s = 0.5 * (a + d);
    let h = 0.5 * (a - d);
    let mu2 = h * h + b * c;
    let (ch, sh) = if mu2.abs() < 1e-3 {
        let es = s.exp();
        let ch = 1.0 + mu2 * (1.0 / 2.0 + mu2 * (1.0 / 24.0 + mu2 * (1.0 / 720.0 + mu2 / 40320.0)));
        let sh = 1.0 + mu2 * (1.0 / 6.0 + mu2 * (1.0 / 120.0 + mu2 * (1.0 / 5040.0 + mu2 / 362880.0)));
        (es * ch, es * sh)
    } else if mu2 > 0.0 {
        let mu = mu2.sqrt();
        let hi = (s + mu).exp();
        let lo = (s - mu).exp();
        (0.5 * (hi + lo), lo * (2.0 * mu).exp_m1() / (2.0 * mu))
    } else {
        let nu = (-mu2).sqrt();
        let es = s.exp();
        (es * nu.cos(), es * nu.sin() / nu)
    };
    [ch + sh * h, sh * b, sh * c, ch - sh * h]
}

fn pade_exp(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let norm = norm1(m);
    let low: [(usize, &[f64]); 4] = [(3, &PADE3), (5, &PADE5), (7, &PADE7), (9, &PADE9)];
    for (i, (deg, coeffs)) in low.iter().enumerate() {
        debug_assert_eq!(THETA[i].0, *deg);
        if norm <= THETA[i].1 {
            let (u, v) = pade_low(m, coeffs);
            return solve_pade(u, v);
        }
    }
    let theta13 = THETA[4].1;
    let s = if norm > theta13 {
        (norm / theta13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = m / 2f64.powi(s);
    let (u, v) = pade13(&scaled);
    let mut r = solve_pade(u, v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn solve_pade(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = &v + &u;
    let q = v - u;
    q.lu().solve(&p).ok_or_else(|| invalid("singular Padé denominator"))
}

/// Smallest real part over the eigenvalues of `q`.
pub fn min_real_eigenvalue(q: &DMatrix<f64>) -> Result<f64> {
    if !q.is_square() || q.nrows() == 0 {
        return Err(Error::Dimension("Q must be a nonempty square matrix".into()));
    }
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(q.complex_eigenvalues().iter().map(|z| z.re).fold(f64::INFINITY, f64::min))
}

/// Tolerance of the spectral gate.
pub const SPECTRAL_TOL: f64 = 1e-12;

/// How the `d`-dimensional driver generates jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorDriver {
    /// Coordinate `i` is an independent scalar model.
    Independent { coordinates: Vec<LevyModel> },
    /// One scalar model; every jump (and the drift) points along `direction`.
    SharedDirection { model: LevyModel, direction: Vec<f64> },
}

impl OperatorDriver {
    pub fn dimension(&self) -> usize {
        match self {
            OperatorDriver::Independent { coordinates } => coordinates.len(),
            OperatorDriver::SharedDirection { direction, .. } => direction.len(),
        }
    }

    fn models(&self) -> Vec<&LevyModel> {
        match self {
            OperatorDriver::Independent { coordinates } => coordinates.iter().collect(),
            OperatorDriver::SharedDirection { model, .. } => vec![model],
        }
    }

    /// `E[Y(1)]`.
    pub fn mean_at_one(&self) -> DVector<f64> {
        match self {
            OperatorDriver::Independent { coordinates } => {
                DVector::from_iterator(coordinates.len(), coordinates.iter().map(LevyModel::mean_at_one))
            }
            OperatorDriver::SharedDirection { model, direction } => {
                DVector::from_column_slice(direction) * model.mean_at_one()
            }
        }
    }

    fn drift(&self) -> DVector<f64> {
        match self {
            OperatorDriver::Independent { coordinates } => {
                DVector::from_iterator(coordinates.len(), coordinates.iter().map(|m| m.drift))
            }
            OperatorDriver::SharedDirection { model, direction } => DVector::from_column_slice(direction) * model.drift,
        }
    }
}

/// `Q` together with a `d`-dimensional driver. Construction enforces the
/// spectral condition.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorModel {
    q: DMatrix<f64>,
    driver: OperatorDriver,
}

impl OperatorModel {
    pub fn new(q: DMatrix<f64>, driver: OperatorDriver) -> Result<Self> {
        let d = driver.dimension();
        if d == 0 || q.nrows() != d || q.ncols() != d {
            return Err(Error::Dimension(format!(
                "Q is {}×{} but the driver has dimension {d}",
                q.nrows(),
                q.ncols()
            )));
        }
        if let OperatorDriver::SharedDirection { direction, .. } = &driver {
            if direction.iter().any(|x| !x.is_finite()) {
                return Err(invalid("direction must be finite"));
            }
        }
        for m in driver.models() {
            m.validate()?;
            if m.has_gaussian() {
                return Err(Error::GaussianPart("the operator integral"));
            }
        }
        let min_re = min_real_eigenvalue(&q)?;
        if min_re <= SPECTRAL_TOL {
            return Err(Error::Spectral { min_re });
        }
        Ok(Self { q, driver })
    }

    /// `Q` given row-major.
    pub fn from_rows(d: usize, q_row_major: &[f64], driver: OperatorDriver) -> Result<Self> {
        if q_row_major.len() != d * d {
            return Err(Error::Dimension(format!("expected {} entries for Q, got {}", d * d, q_row_major.len())));
        }
        Self::new(DMatrix::from_row_slice(d, d, q_row_major), driver)
    }

    pub fn dimension(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn driver(&self) -> &OperatorDriver {
        &self.driver
    }

    /// `e^{-tQ}`.
    pub fn discount(&self, t: f64) -> Result<DMatrix<f64>> {
        matrix_exp(&(&self.q * -t))
    }

    /// `∫_0^t e^{-sQ} ds = Q⁻¹ (I - e^{-tQ})`.
    pub fn discount_mass(&self, t: f64) -> Result<DMatrix<f64>> {
        if self.dimension() == 1 {
            let q = self.q[(0, 0)];
            return Ok(DMatrix::from_element(1, 1, -(-t * q).exp_m1() / q));
        }
        let d = self.dimension();
        let rhs = DMatrix::identity(d, d) - self.discount(t)?;
        self.q.clone().lu().solve(&rhs).ok_or_else(|| invalid("Q is singular"))
    }

    /// `E[X] = Q⁻¹ E[Y(1)]`.
    pub fn mean(&self) -> Result<DVector<f64>> {
        self.q
            .clone()
            .lu()
            .solve(&self.driver.mean_at_one())
            .ok_or_else(|| invalid("Q is singular"))
    }
}

/// Jumps of the `d`-dimensional driver, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorPath {
    horizon: f64,
    times: Vec<f64>,
    sizes: Vec<DVector<f64>>,
    drift: DVector<f64>,
}

impl VectorPath {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }

    pub fn jump_sizes(&self) -> &[DVector<f64>] {
        &self.sizes
    }

    pub fn drift(&self) -> &DVector<f64> {
        &self.drift
    }

    fn segment(driver: &OperatorDriver, start: f64, len: f64, stream: &mut RngStream) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
        let d = driver.dimension();
        let mut jumps: Vec<(f64, DVector<f64>)> = Vec::new();
        match driver {
            OperatorDriver::Independent { coordinates } => {
                for (i, m) in coordinates.iter().enumerate() {
                    let p: JumpPath = simulate_segment(m, len, stream)?;
                    for (t, s) in p.jumps() {
                        let mut v = DVector::zeros(d);
                        v[i] = s;
                        jumps.push((start + t, v));
                    }
                }
                jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
            OperatorDriver::SharedDirection { model, direction } => {
                let p: JumpPath = simulate_segment(model, len, stream)?;
                let dir = DVector::from_column_slice(direction);
                jumps.extend(p.jumps().map(|(t, s)| (start + t, &dir * s)));
            }
        }
        Ok(jumps.into_iter().unzip())
    }

    /// Simulates the driver on `(0, horizon]`. Independent coordinates are
    /// drawn one after another from the same stream.
    pub fn simulate(model: &OperatorModel, horizon: f64, stream: &mut RngStream) -> Result<Self> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("horizon must be nonnegative, got {horizon}")));
        }
        let (times, sizes) = Self::segment(&model.driver, 0.0, horizon, stream)?;
        Ok(Self {
            horizon,
            times,
            sizes,
            drift: model.driver.drift(),
        })
    }

    pub fn extend(&mut self, model: &OperatorModel, new_horizon: f64, stream: &mut RngStream) -> Result<()> {
        if !(new_horizon.is_finite() && new_horizon >= self.horizon) {
            return Err(invalid("cannot shrink a path"));
        }
        let (times, sizes) = Self::segment(&model.driver, self.horizon, new_horizon - self.horizon, stream)?;
        for (t, s) in times.into_iter().zip(sizes) {
            if self.times.last().is_some_and(|&last| t <= last) || t > new_horizon {
                continue;
            }
            self.times.push(t);
            self.sizes.push(s);
        }
        self.horizon = new_horizon;
        Ok(())
    }

    /// `Y_τ(t) = Y(t + τ) - Y(τ)`.
    pub fn shift_path(&self, tau: f64) -> Result<VectorPath> {
        if !(tau >= 0.0 && tau <= self.horizon) {
            return Err(Error::TimeOutOfRange { t: tau, horizon: self.horizon });
        }
        let first = self.times.partition_point(|&t| t <= tau);
        Ok(VectorPath {
            horizon: self.horizon - tau,
            times: self.times[first..].iter().map(|&t| t - tau).collect(),
            sizes: self.sizes[first..].to_vec(),
            drift: self.drift.clone(),
        })
    }
}

impl Timeline for VectorPath {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn jump_count(&self) -> usize {
        self.times.len()
    }

    fn jump_time(&self, i: usize) -> f64 {
        self.times[i]
    }

    fn jump_is_nonzero(&self, i: usize) -> bool {
        self.sizes[i].iter().any(|&x| x != 0.0)
    }

    /// Vector jumps are tested through their Euclidean norm.
    fn jump_in(&self, i: usize, set: &JumpSet) -> bool {
        set.contains(self.sizes[i].norm())
    }

    fn has_gaussian(&self) -> bool {
        false
    }
}

impl Extendable for VectorPath {
    type Model = OperatorModel;

    fn simulate(model: &OperatorModel, horizon: f64, stream: &mut RngStream) -> Result<Self> {
        VectorPath::simulate(model, horizon, stream)
    }

    fn extend_to(&mut self, model: &OperatorModel, horizon: f64, stream: &mut RngStream) -> Result<()> {
        self.extend(model, horizon, stream)
    }

    fn total_jump_rate(model: &OperatorModel) -> f64 {
        model.driver.models().iter().map(|m| m.jump_rate).sum()
    }
}

/// `Σ_{τ_k ≤ t} e^{-τ_k Q} ΔY_k + Q⁻¹(I - e^{-tQ}) b`.
pub fn eval_operator_integral(model: &OperatorModel, path: &VectorPath, t: f64) -> Result<DVector<f64>> {
    if !(t >= 0.0 && t <= path.horizon) {
        return Err(Error::TimeOutOfRange { t, horizon: path.horizon });
    }
    let d = model.dimension();
    let n = path.times.partition_point(|&s| s <= t);
    let mut acc = DVector::<f64>::zeros(d);
    for (tau, size) in path.times[..n].iter().zip(&path.sizes[..n]) {
        let e = model.discount(*tau)?;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += e[(i, j)] * size[j];
            }
            acc[i] += row;
        }
    }
    if path.drift.iter().any(|&b| b != 0.0) {
        let mass = model.discount_mass(t)?;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += mass[(i, j)] * path.drift[j];
            }
            acc[i] += row;
        }
    }
    Ok(acc)
}

/// One draw of `∫_(0,T] e^{-tQ} dY(t)`. For `d = 1`, `Q = [1]` this consumes
/// the stream exactly like the scalar sampler and returns the same bits.
pub fn sample_operator_integral(
    model: &OperatorModel,
    policy: &TruncationPolicy,
    stream: &mut RngStream,
) -> Result<DVector<f64>> {
    policy.validate()?;
    let path = VectorPath::simulate(model, policy.horizon, stream)?;
    eval_operator_integral(model, &path, policy.horizon)
}

/// One realization of `(τ, X_τ, e^{-τQ}, X', X)` in `ℝ^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorRecord {
    pub tau: f64,
    pub x_tau: DVector<f64>,
    pub discount: DMatrix<f64>,
    pub x_prime: DVector<f64>,
    pub x_total: DVector<f64>,
}

/// Relative tolerance of the operator recombination.
pub const OPERATOR_PATHWISE_TOL: f64 = 1e-9;

impl OperatorRecord {
    /// `‖x_total - (x_tau + D x_prime)‖_∞ / (1 + ‖x_total‖_∞)`.
    pub fn relative_residual(&self) -> f64 {
        let recombined = &self.x_tau + &self.discount * &self.x_prime;
        (&self.x_total - recombined).amax() / (1.0 + self.x_total.amax())
    }

    pub fn satisfies_identity(&self) -> bool {
        self.relative_residual() <= OPERATOR_PATHWISE_TOL
    }
}

/// Operator analogue of [`crate::decomposition::decompose`].
pub fn operator_decompose(
    model: &OperatorModel,
    rule: &StoppingRule,
    policy: &TruncationPolicy,
    stream: &mut RngStream,
) -> Result<OperatorRecord> {
    let mut path_stream = stream.split();
    let mut time_stream = stream.split();
    let (path, tau) = run_until_stopped::<VectorPath>(
        model,
        rule,
        policy,
        policy.horizon,
        &mut path_stream,
        &mut time_stream,
    )?;
    let x_total = eval_operator_integral(model, &path, path.horizon())?;
    let x_tau = eval_operator_integral(model, &path, tau)?;
    let shifted = path.shift_path(tau)?;
    let x_prime = eval_operator_integral(model, &shifted, shifted.horizon())?;
    Ok(OperatorRecord {
        tau,
        x_tau,
        discount: model.discount(tau)?,
        x_prime,
        x_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::JumpLaw;

    fn diag_model(q: &[f64]) -> OperatorModel {
        let d = q.len();
        let coords = (0..d).map(|_| LevyModel::gamma_bdlp(1.5, 1.0)).collect();
        OperatorModel::new(DMatrix::from_diagonal(&DVector::from_column_slice(q)), OperatorDriver::Independent { coordinates: coords })
            .unwrap()
    }

    #[test]
    fn exp_of_zero_and_diagonal() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(matrix_exp(&z).unwrap(), DMatrix::identity(3, 3));
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.3, -2.0]));
        let e = matrix_exp(&d).unwrap();
        assert!((e[(0, 0)] - 0.3f64.exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn exp_rejects_bad_input() {
        let mut m = DMatrix::<f64>::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert_eq!(matrix_exp(&m), Err(Error::NonFinite));
        assert!(matrix_exp(&DMatrix::<f64>::zeros(2, 3)).is_err());
    }

    #[test]
    fn exp_nilpotent_jordan_block() {
        // exp([[a, 1], [0, a]]) = e^a [[1, 1], [0, 1]], at several scales
        for a in [0.001, 0.5, 3.0, 12.0] {
            let m = DMatrix::from_row_slice(2, 2, &[a, 1.0, 0.0, a]);
            let e = matrix_exp(&m).unwrap();
            let ea = f64::exp(a);
            let expect = DMatrix::from_row_slice(2, 2, &[ea, ea, 0.0, ea]);
            assert!((&e - &expect).amax() <= 1e-12 * ea, "a = {a}");
        }
    }

    #[test]
    fn closed_form_2x2_matches_pade() {
        let mut s = RngStream::new(8, 8);
        for scale in [1e-6, 1e-2, 0.5, 3.0, 20.0] {
            for _ in 0..200 {
                let m = DMatrix::from_fn(2, 2, |_, _| scale * (2.0 * crate::rng::sample_uniform(&mut s) - 1.0));
                let fast = matrix_exp(&m).unwrap();
                let slow = pade_exp(&m).unwrap();
                let err = (&fast - &slow).amax() / slow.amax().max(1e-300);
                assert!(err < 1e-11 * (1.0 + norm1(&m)), "scale {scale}: {err}");
            }
        }
        // near-defective: μ² straddling the series threshold
        for eps in [0.0, 1e-12, 9.99e-4, 1.001e-3, -9.99e-4, -1.001e-3] {
            let m = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, eps, -1.0]);
            let fast = matrix_exp(&m).unwrap();
            let slow = pade_exp(&m).unwrap();
            assert!((&fast - &slow).amax() < 1e-14, "eps {eps}");
        }
    }

    #[test]
    fn exp_rotation() {
        let th = 2.5;
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -th, th, 0.0]);
        let e = matrix_exp(&m).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        assert!((&e - &expect).amax() < 1e-13);
    }

    #[test]
    fn spectral_gate() {
        let driver = || OperatorDriver::Independent {
            coordinates: vec![LevyModel::gamma_bdlp(1.0, 1.0); 2],
        };
        assert!(OperatorModel::from_rows(2, &[1.0, 0.0, 0.0, 2.0], driver()).is_ok());
        let zero = OperatorModel::from_rows(2, &[1.0, 0.0, 0.0, 0.0], driver()).unwrap_err();
        assert!(matches!(zero, Error::Spectral { .. }));
        // purely imaginary pair
        assert!(matches!(
            OperatorModel::from_rows(2, &[0.0, 1.0, -1.0, 0.0], driver()),
            Err(Error::Spectral { .. })
        ));
        // non-normal but stable: eigenvalues 1, 1
        assert!(OperatorModel::from_rows(2, &[1.0, 50.0, 0.0, 1.0], driver()).is_ok());
        assert!(OperatorModel::from_rows(3, &[1.0; 9], driver()).is_err());
        let gaussian = OperatorDriver::Independent {
            coordinates: vec![LevyModel::gaussian(1.0), LevyModel::gamma_bdlp(1.0, 1.0)],
        };
        assert!(OperatorModel::from_rows(2, &[1.0, 0.0, 0.0, 1.0], gaussian).is_err());
    }

    #[test]
    fn fixed_time_zero_record() {
        let m = diag_model(&[1.0, 2.0]);
        let mut s = RngStream::new(1, 1);
        let r = operator_decompose(&m, &StoppingRule::FixedTime { t: 0.0 }, &TruncationPolicy::default(), &mut s).unwrap();
        assert_eq!(r.x_tau, DVector::zeros(2));
        assert_eq!(r.discount, DMatrix::identity(2, 2));
        assert_eq!(r.x_prime, r.x_total);
    }

    #[test]
    fn scalar_consistency_bit_identical() {
        let scalar = LevyModel::compound_poisson(2.0, JumpLaw::Uniform { low: -1.0, high: 3.0 }).with_drift(0.7);
        let op = OperatorModel::from_rows(
            1,
            &[1.0],
            OperatorDriver::Independent {
                coordinates: vec![scalar.clone()],
            },
        )
        .unwrap();
        let policy = TruncationPolicy::default();
        for i in 0..200 {
            let a = crate::discount::sample_discounted_integral(&scalar, &policy, &mut RngStream::new(9, i)).unwrap();
            let b = sample_operator_integral(&op, &policy, &mut RngStream::new(9, i)).unwrap();
            assert_eq!(a.to_bits(), b[0].to_bits());
        }
    }

    #[test]
    fn shared_direction_path() {
        let m = OperatorModel::from_rows(
            2,
            &[1.0, 0.5, 0.0, 2.0],
            OperatorDriver::SharedDirection {
                model: LevyModel::gamma_bdlp(2.0, 1.0),
                direction: vec![1.0, -0.5],
            },
        )
        .unwrap();
        let mut s = RngStream::new(3, 3);
        let p = VectorPath::simulate(&m, 10.0, &mut s).unwrap();
        for v in p.jump_sizes() {
            assert!((v[1] + 0.5 * v[0]).abs() < 1e-15);
        }
        let r = operator_decompose(&m, &StoppingRule::KthJump { k: 2 }, &TruncationPolicy::default(), &mut s).unwrap();
        assert!(r.satisfies_identity(), "{}", r.relative_residual());
    }
}
