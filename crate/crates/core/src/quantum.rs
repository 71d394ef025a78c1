//! Dense Hermitian linear algebra, states and channels in Choi form.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::tolerance::Tolerances;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn log2(x: f64) -> f64 {
    x.log2()
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
/// nalgebra's Hermitian solver occasionally returns a decomposition that
/// does not reproduce the input (sparse inputs with degenerate spectra), so
/// the result is checked and, if needed, recomputed in a rotated basis.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let h = hermitian_part(m);
    let n = h.nrows();
    let scale = max_abs(&h).max(1e-300);
    let (mut vals, mut vecs) = eigh_raw(&h);
    let mut err = recon_error(&h, &vals, &vecs);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut tries = 0;
    while err > 1e-11 * scale && tries < 4 {
        let u = random_unitary(n, &mut rng);
        let (v2, w2) = eigh_raw(&hermitian_part(&(u.adjoint() * &h * &u)));
        let w2 = &u * w2;
        let e2 = recon_error(&h, &v2, &w2);
        if e2 < err {
            (vals, vecs, err) = (v2, w2, e2);
        }
        tries += 1;
    }
    (vals, vecs)
}

fn eigh_raw(h: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(h.clone());
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(h.nrows(), h.ncols(), |r, k| eig.eigenvectors[(r, idx[k])]);
    (vals, vecs)
}

fn recon_error(h: &CMat, vals: &[f64], vecs: &CMat) -> f64 {
    let mut scaled = vecs.clone();
    for (k, &v) in vals.iter().enumerate() {
        scaled.column_mut(k).scale_mut(v);
    }
    max_abs(&(scaled * vecs.adjoint() - h))
}

pub fn eigvalsh(m: &CMat) -> Vec<f64> {
    eigh(m).0
}

pub fn min_eig(m: &CMat) -> f64 {
    eigvalsh(m).first().copied().unwrap_or(0.0)
}

pub fn max_eig(m: &CMat) -> f64 {
    eigvalsh(m).last().copied().unwrap_or(0.0)
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * cr(0.5)
}

/// Apply a real function to the spectrum of a Hermitian matrix.
pub fn herm_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(m);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|&v| cr(f(v)))));
    hermitian_part(&(&vecs * d * vecs.adjoint()))
}

pub fn psd_sqrt(m: &CMat) -> CMat {
    herm_fn(m, |v| v.max(0.0).sqrt())
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace_re(m: &CMat) -> f64 {
    m.trace().re
}

/// Re Tr(A B).
pub fn tr_prod(a: &CMat, b: &CMat) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            let x = a[(i, k)];
            let y = b[(k, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// |i><j| in dimension d.
pub fn unit(d: usize, i: usize, j: usize) -> CMat {
    let mut m = CMat::zeros(d, d);
    m[(i, j)] = ONE;
    m
}

/// Orthonormal Hermitian basis of d x d matrices (d^2 elements).
pub fn hermitian_basis(d: usize) -> Vec<CMat> {
    let mut out = Vec::with_capacity(d * d);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for r in 0..d {
        out.push(unit(d, r, r));
        for col in (r + 1)..d {
            let mut a = CMat::zeros(d, d);
            a[(r, col)] = cr(s);
            a[(col, r)] = cr(s);
            out.push(a);
            let mut b = CMat::zeros(d, d);
            b[(r, col)] = c(0.0, -s);
            b[(col, r)] = c(0.0, s);
            out.push(b);
        }
    }
    out
}

/// Partial transpose on the second factor of a da x db system.
pub fn partial_transpose(m: &CMat, da: usize, db: usize) -> CMat {
    let mut out = CMat::zeros(da * db, da * db);
    for i in 0..da {
        for a in 0..db {
            for j in 0..da {
                for b in 0..db {
                    out[(i * db + a, j * db + b)] = m[(i * db + b, j * db + a)];
                }
            }
        }
    }
    out
}

/// Trace out the second factor.
pub fn partial_trace_second(m: &CMat, da: usize, db: usize) -> CMat {
    CMat::from_fn(da, da, |i, j| (0..db).map(|a| m[(i * db + a, j * db + a)]).sum())
}

/// Trace out the first factor.
pub fn partial_trace_first(m: &CMat, da: usize, db: usize) -> CMat {
    CMat::from_fn(db, db, |a, b| (0..da).map(|i| m[(i * db + a, i * db + b)]).sum())
}

/// Validated density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMat);

impl DensityMatrix {
    pub fn new(m: CMat, tol: &Tolerances) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(CoreError::InvalidState("matrix must be square and nonempty".into()));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CoreError::InvalidState("non-finite entry".into()));
        }
        if max_abs(&(&m - m.adjoint())) > tol.herm {
            return Err(CoreError::InvalidState("not Hermitian".into()));
        }
        let h = hermitian_part(&m);
        let t = trace_re(&h);
        if (t - 1.0).abs() > tol.trace {
            return Err(CoreError::InvalidState(format!("trace {t} differs from 1")));
        }
        let e = min_eig(&h);
        if e < -tol.psd {
            return Err(CoreError::InvalidState(format!("minimum eigenvalue {e:e} below tolerance")));
        }
        Ok(DensityMatrix(h))
    }

    /// Hermitize, clip negative eigenvalues and renormalize. For numerically
    /// produced matrices that are states up to solver accuracy.
    pub fn project(m: &CMat) -> Result<Self> {
        let clipped = herm_fn(m, |v| v.max(0.0));
        let t = trace_re(&clipped);
        if !(t > 0.0) || !t.is_finite() {
            return Err(CoreError::InvalidState("cannot project zero matrix onto states".into()));
        }
        Ok(DensityMatrix(clipped * cr(1.0 / t)))
    }

    pub fn from_pure(psi: &PureState) -> Self {
        DensityMatrix(psi.projector())
    }

    pub fn maximally_mixed(d: usize) -> Self {
        DensityMatrix(CMat::identity(d, d) * cr(1.0 / d as f64))
    }

    pub fn diagonal(p: &[f64]) -> Result<Self> {
        let m = CMat::from_diagonal(&DVector::from_iterator(p.len(), p.iter().map(|&v| cr(v))));
        DensityMatrix::new(m, &Tolerances::default())
    }

    pub fn basis(d: usize, i: usize) -> Self {
        DensityMatrix(unit(d, i, i))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn kron(&self, o: &DensityMatrix) -> DensityMatrix {
        DensityMatrix(kron(&self.0, &o.0))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigvalsh(&self.0)
    }

    pub fn is_pure(&self, tol: f64) -> bool {
        (tr_prod(&self.0, &self.0) - 1.0).abs() <= tol
    }

    /// Dominant eigenvector as a pure state.
    pub fn top_vector(&self) -> PureState {
        let (_, v) = eigh(&self.0);
        let d = self.dim();
        PureState(v.column(d - 1).into_owned())
    }
}

/// Validated unit vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState(CVec);

impl PureState {
    pub fn new(v: CVec, tol: &Tolerances) -> Result<Self> {
        if v.is_empty() || v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CoreError::InvalidState("pure state must be nonempty and finite".into()));
        }
        let n = v.norm();
        if (n - 1.0).abs() > tol.unit {
            return Err(CoreError::InvalidState(format!("norm {n} differs from 1")));
        }
        Ok(PureState(v))
    }

    pub fn normalized(v: CVec) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(CoreError::InvalidState("zero vector".into()));
        }
        Ok(PureState(v / cr(n)))
    }

    pub fn from_slice(a: &[Complex64]) -> Result<Self> {
        PureState::normalized(CVec::from_column_slice(a))
    }

    pub fn basis(d: usize, i: usize) -> Self {
        let mut v = CVec::zeros(d);
        v[i] = ONE;
        PureState(v)
    }

    /// (1/sqrt d) sum_j |j>.
    pub fn uniform(d: usize) -> Self {
        PureState(CVec::from_element(d, cr(1.0 / (d as f64).sqrt())))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn vector(&self) -> &CVec {
        &self.0
    }

    pub fn projector(&self) -> CMat {
        &self.0 * self.0.adjoint()
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(self)
    }

    pub fn kron(&self, o: &PureState) -> PureState {
        PureState(self.0.kronecker(&o.0))
    }

    /// <psi|A|psi>, real part.
    pub fn expect(&self, a: &CMat) -> f64 {
        (self.0.adjoint() * a * &self.0)[(0, 0)].re
    }

    /// Bloch vector of a qubit state.
    pub fn bloch(&self) -> Option<[f64; 3]> {
        bloch_vector(&self.projector())
    }
}

pub fn pauli() -> [CMat; 3] {
    [
        CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        CMat::from_row_slice(2, 2, &[ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO]),
        CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, cr(-1.0)]),
    ]
}

pub fn bloch_vector(m: &CMat) -> Option<[f64; 3]> {
    if m.nrows() != 2 {
        return None;
    }
    let p = pauli();
    Some([tr_prod(&p[0], m), tr_prod(&p[1], m), tr_prod(&p[2], m)])
}

pub fn bloch_state(r: [f64; 3]) -> CMat {
    let p = pauli();
    (CMat::identity(2, 2) + &p[0] * cr(r[0]) + &p[1] * cr(r[1]) + &p[2] * cr(r[2])) * cr(0.5)
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(CoreError::Dimension { expected: a, got: b });
    }
    Ok(())
}

/// Uhlmann fidelity (Tr sqrt(sqrt(sigma) rho sqrt(sigma)))^2.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    let r = root_fidelity(rho, sigma)?;
    Ok((r * r).clamp(0.0, 1.0))
}

pub fn root_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_dims(rho.dim(), sigma.dim())?;
    Ok(root_fidelity_raw(rho.matrix(), sigma.matrix()))
}

/// Root fidelity of PSD matrices without validation.
pub fn root_fidelity_raw(rho: &CMat, sigma: &CMat) -> f64 {
    let s = psd_sqrt(sigma);
    let m = hermitian_part(&(&s * rho * &s));
    eigvalsh(&m).iter().map(|v| v.max(0.0).sqrt()).sum::<f64>().min(1.0)
}

/// Projector onto eigenvectors with eigenvalue above `rank_tol`.
pub fn support_projector(rho: &DensityMatrix, rank_tol: f64) -> CMat {
    support_projector_raw(rho.matrix(), rank_tol)
}

pub fn support_projector_raw(m: &CMat, rank_tol: f64) -> CMat {
    herm_fn(m, |v| if v > rank_tol { 1.0 } else { 0.0 })
}

/// Minimum eigenvalue of the partial transpose of a 2 x 2 state.
pub fn partial_transpose_min_eig(rho: &DensityMatrix) -> Result<f64> {
    check_dims(4, rho.dim())?;
    Ok(min_eig(&partial_transpose(rho.matrix(), 2, 2)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelReport {
    pub min_eig: f64,
    pub tp_residual: f64,
    pub ok: bool,
}

/// Linear map in Choi form, J = sum_ij |i><j| (x) E(|i><j|).
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelChoi {
    pub d_in: usize,
    pub d_out: usize,
    pub j: CMat,
}

impl ChannelChoi {
    pub fn new(d_in: usize, d_out: usize, j: CMat) -> Result<Self> {
        if j.nrows() != d_in * d_out || j.ncols() != d_in * d_out {
            return Err(CoreError::InvalidChannel(format!(
                "Choi matrix is {}x{}, expected {}",
                j.nrows(),
                j.ncols(),
                d_in * d_out
            )));
        }
        if j.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CoreError::InvalidChannel("non-finite entry".into()));
        }
        Ok(ChannelChoi { d_in, d_out, j })
    }

    /// Choi matrix of the linear extension of `f` from matrix units.
    pub fn from_map(d_in: usize, d_out: usize, f: impl Fn(&CMat) -> CMat) -> Self {
        let mut j = CMat::zeros(d_in * d_out, d_in * d_out);
        for a in 0..d_in {
            for b in 0..d_in {
                let out = f(&unit(d_in, a, b));
                j.view_mut((a * d_out, b * d_out), (d_out, d_out)).copy_from(&out);
            }
        }
        ChannelChoi { d_in, d_out, j }
    }

    pub fn identity(d: usize) -> Self {
        ChannelChoi::from_map(d, d, |x| x.clone())
    }

    pub fn transpose(d: usize) -> Self {
        ChannelChoi::from_map(d, d, |x| x.transpose())
    }

    pub fn dephasing(d: usize) -> Self {
        ChannelChoi::from_map(d, d, |x| CMat::from_diagonal(&x.diagonal()))
    }

    /// N_p(X) = (1-p) X + p Tr(X) I/d. Completely positive only for p in [0, d^2/(d^2-1)].
    pub fn depolarizing(d: usize, p: f64) -> Self {
        ChannelChoi::from_map(d, d, |x| x * cr(1.0 - p) + CMat::identity(d, d) * (x.trace() * p / d as f64))
    }

    /// X -> Tr(X) sigma.
    pub fn replacement(d_in: usize, sigma: &CMat) -> Self {
        ChannelChoi::from_map(d_in, sigma.nrows(), |x| sigma * x.trace())
    }

    /// Unitary conjugation X -> U X U^dag.
    pub fn unitary(u: &CMat) -> Self {
        ChannelChoi::from_map(u.ncols(), u.nrows(), |x| u * x * u.adjoint())
    }

    /// Channel from Kraus operators.
    pub fn from_kraus(kraus: &[CMat]) -> Self {
        let d_in = kraus[0].ncols();
        let d_out = kraus[0].nrows();
        ChannelChoi::from_map(d_in, d_out, |x| {
            let mut acc = CMat::zeros(d_out, d_out);
            for k in kraus {
                acc += k * x * k.adjoint();
            }
            acc
        })
    }

    /// Apply to an arbitrary d_in x d_in matrix: sum_ij X_ij J_(i,j).
    pub fn apply(&self, x: &CMat) -> CMat {
        let mut out = CMat::zeros(self.d_out, self.d_out);
        for a in 0..self.d_in {
            for b in 0..self.d_in {
                let w = x[(a, b)];
                if w == ZERO {
                    continue;
                }
                out += self.j.view((a * self.d_out, b * self.d_out), (self.d_out, self.d_out)) * w;
            }
        }
        out
    }

    pub fn apply_state(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        check_dims(self.d_in, rho.dim())?;
        DensityMatrix::project(&self.apply(rho.matrix()))
    }

    pub fn validate(&self, tol: &Tolerances) -> ChannelReport {
        let e = min_eig(&self.j);
        let tr_out = partial_trace_second(&self.j, self.d_in, self.d_out);
        let tp = frobenius(&(tr_out - CMat::identity(self.d_in, self.d_in)));
        ChannelReport { min_eig: e, tp_residual: tp, ok: e >= -tol.psd && tp <= tol.tp }
    }

    /// `second` after `self`.
    pub fn then(&self, second: &ChannelChoi) -> Result<ChannelChoi> {
        check_dims(self.d_out, second.d_in)?;
        Ok(ChannelChoi::from_map(self.d_in, second.d_out, |x| second.apply(&self.apply(x))))
    }

    /// Max entry-wise difference of the two maps over the matrix-unit basis.
    pub fn distance(&self, other: &ChannelChoi) -> f64 {
        max_abs(&(&self.j - &other.j))
    }
}

pub fn compose(second: &ChannelChoi, first: &ChannelChoi) -> Result<ChannelChoi> {
    first.then(second)
}

pub fn apply_channel(e: &ChannelChoi, rho: &DensityMatrix) -> Result<DensityMatrix> {
    e.apply_state(rho)
}

pub fn validate_channel(e: &ChannelChoi, tol: &Tolerances) -> ChannelReport {
    e.validate(tol)
}

/// Max over matrix units E_ij of |lambda_out(E(E_ij)) - E(lambda_in(E_ij))|.
pub fn commutation_residual(
    e: &ChannelChoi,
    lambda_in: impl Fn(&CMat) -> CMat,
    lambda_out: impl Fn(&CMat) -> CMat,
) -> f64 {
    let mut worst: f64 = 0.0;
    for a in 0..e.d_in {
        for b in 0..e.d_in {
            let x = unit(e.d_in, a, b);
            let lhs = lambda_out(&e.apply(&x));
            let rhs = e.apply(&lambda_in(&x));
            worst = worst.max(max_abs(&(lhs - rhs)));
        }
    }
    worst
}

pub fn random_unit_vector<R: Rng>(d: usize, rng: &mut R) -> CVec {
    let v = CVec::from_fn(d, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let n = v.norm();
    v / cr(n)
}

pub fn random_pure<R: Rng>(d: usize, rng: &mut R) -> PureState {
    PureState(random_unit_vector(d, rng))
}

fn ginibre<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

/// Random state of the given rank (induced measure).
pub fn random_density_rank<R: Rng>(d: usize, rank: usize, rng: &mut R) -> DensityMatrix {
    let g = ginibre(d, rank.max(1), rng);
    let m = &g * g.adjoint();
    let t = trace_re(&m);
    DensityMatrix(hermitian_part(&(m * cr(1.0 / t))))
}

pub fn random_density<R: Rng>(d: usize, rng: &mut R) -> DensityMatrix {
    random_density_rank(d, d, rng)
}

pub fn random_unitary<R: Rng>(d: usize, rng: &mut R) -> CMat {
    let g = ginibre(d, d, rng);
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    // fix phases so the distribution is Haar
    let ph = CMat::from_diagonal(&DVector::from_fn(d, |i, _| {
        let z = r[(i, i)];
        if z.norm() > 0.0 {
            z / z.norm()
        } else {
            ONE
        }
    }));
    q * ph
}

/// Random CPTP map from a normalized Wishart Choi matrix.
pub fn random_channel<R: Rng>(d_in: usize, d_out: usize, rng: &mut R) -> ChannelChoi {
    let n = d_in * d_out;
    let g = ginibre(n, n, rng);
    let w = &g * g.adjoint();
    let s = partial_trace_second(&w, d_in, d_out);
    let s_inv_half = herm_fn(&s, |v| 1.0 / v.sqrt());
    let a = kron(&s_inv_half, &CMat::identity(d_out, d_out));
    let j = hermitian_part(&(&a * w * &a));
    ChannelChoi { d_in, d_out, j }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigh_reproduces_sparse_degenerate_input() {
        // isotropic-type output; the plain Hermitian solver misses it by ~3e-3
        let (a, b, o) = (0.24430629915696436, 0.2556937008430356, -0.011387401686071247);
        let mut h = CMat::zeros(4, 4);
        h[(0, 0)] = cr(a);
        h[(3, 3)] = cr(a);
        h[(1, 1)] = cr(b);
        h[(2, 2)] = cr(b);
        h[(0, 3)] = cr(o);
        h[(3, 0)] = cr(o);
        let (vals, vecs) = eigh(&h);
        assert!(recon_error(&h, &vals, &vecs) < 1e-13);
        assert!((vals[0] - (a + o)).abs() < 1e-13 && (vals[3] - b).abs() < 1e-13);
        let p = DensityMatrix::project(&h).unwrap();
        assert!(max_abs(&(p.matrix() - &h)) < 1e-13);
    }

    fn plus() -> DensityMatrix {
        PureState::uniform(2).density()
    }

    #[test]
    fn fidelity_examples() {
        let tol = Tolerances::default();
        let z0 = DensityMatrix::basis(2, 0);
        let z1 = DensityMatrix::basis(2, 1);
        let mix = DensityMatrix::maximally_mixed(2);
        assert!((fidelity(&plus(), &plus()).unwrap() - 1.0).abs() < 1e-12);
        assert!(fidelity(&z0, &z1).unwrap().abs() < 1e-12);
        assert!((fidelity(&z0, &mix).unwrap() - 0.5).abs() < 1e-12);
        let three = DensityMatrix::maximally_mixed(3);
        assert!(fidelity(&z0, &three).is_err());
        let _ = tol;
    }

    #[test]
    fn support_projector_examples() {
        let p = support_projector(&plus(), 1e-9);
        assert!(max_abs(&(p - plus().matrix())) < 1e-12);
        let p = support_projector(&DensityMatrix::maximally_mixed(3), 1e-9);
        assert!(max_abs(&(p - CMat::identity(3, 3))) < 1e-12);
        let r = DensityMatrix::diagonal(&[0.5, 0.5, 0.0]).unwrap();
        let p = support_projector(&r, 1e-9);
        let want = CMat::from_diagonal(&DVector::from_vec(vec![ONE, ONE, ZERO]));
        assert!(max_abs(&(p - want)) < 1e-12);
    }

    #[test]
    fn channel_examples() {
        let tol = Tolerances::default();
        let id = ChannelChoi::identity(2);
        let out = id.apply_state(&plus()).unwrap();
        assert!(max_abs(&(out.matrix() - plus().matrix())) < 1e-12);
        let out = ChannelChoi::dephasing(2).apply_state(&plus()).unwrap();
        assert!(max_abs(&(out.matrix() - DensityMatrix::maximally_mixed(2).matrix())) < 1e-12);
        let out = ChannelChoi::depolarizing(2, 1.0).apply_state(&DensityMatrix::basis(2, 0)).unwrap();
        assert!(max_abs(&(out.matrix() - DensityMatrix::maximally_mixed(2).matrix())) < 1e-12);

        let r = id.validate(&tol);
        assert!(r.ok && r.tp_residual < 1e-15 && r.min_eig.abs() < 1e-15);
        let zero = ChannelChoi::new(2, 2, CMat::zeros(4, 4)).unwrap().validate(&tol);
        assert!(!zero.ok && (zero.tp_residual - 2f64.sqrt()).abs() < 1e-12);
        let t = ChannelChoi::transpose(2).validate(&tol);
        assert!(!t.ok && (t.min_eig + 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_transpose_examples() {
        let bell = PureState::from_slice(&[ONE, ZERO, ZERO, ONE]).unwrap().density();
        assert!((partial_transpose_min_eig(&bell).unwrap() + 0.5).abs() < 1e-12);
        let mix = DensityMatrix::maximally_mixed(4);
        assert!((partial_transpose_min_eig(&mix).unwrap() - 0.25).abs() < 1e-12);
        let prod = DensityMatrix::basis(4, 0);
        assert!(partial_transpose_min_eig(&prod).unwrap().abs() < 1e-12);
        assert!(partial_transpose_min_eig(&DensityMatrix::maximally_mixed(3)).is_err());
    }

    #[test]
    fn eigen_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [2, 5, 9, 16] {
            let g = ginibre(d, d, &mut rng);
            let a = hermitian_part(&g);
            let (vals, vecs) = eigh(&a);
            let l = CMat::from_diagonal(&DVector::from_iterator(d, vals.iter().map(|&v| cr(v))));
            let rec = &vecs * l * vecs.adjoint();
            assert!(max_abs(&(rec - &a)) < 1e-8);
        }
    }

    #[test]
    fn random_channels_are_cptp_and_contract_fidelity() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let e = random_channel(3, 2, &mut rng);
            assert!(e.validate(&tol).ok);
            let r = random_density(3, &mut rng);
            let s = random_density_rank(3, 1, &mut rng);
            let before = fidelity(&r, &s).unwrap();
            let after = fidelity(&e.apply_state(&r).unwrap(), &e.apply_state(&s).unwrap()).unwrap();
            assert!(after >= before - 1e-8);
        }
    }

    #[test]
    fn composition_matches_sequential_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let e1 = random_channel(2, 3, &mut rng);
            let e2 = random_channel(3, 2, &mut rng);
            let both = compose(&e2, &e1).unwrap();
            let r = random_density(2, &mut rng);
            let seq = e2.apply(&e1.apply(r.matrix()));
            assert!(max_abs(&(both.apply(r.matrix()) - seq)) < 1e-9);
        }
    }

    #[test]
    fn root_fidelity_jointly_concave() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let p: f64 = rng.gen_range(0.0..1.0);
            let (r1, r2) = (random_density(3, &mut rng), random_density_rank(3, 1, &mut rng));
            let (s1, s2) = (random_density(3, &mut rng), random_density_rank(3, 2, &mut rng));
            let mix = |a: &DensityMatrix, b: &DensityMatrix| {
                DensityMatrix::project(&(a.matrix() * cr(p) + b.matrix() * cr(1.0 - p))).unwrap()
            };
            let lhs = root_fidelity(&mix(&r1, &r2), &mix(&s1, &s2)).unwrap();
            let rhs = p * root_fidelity(&r1, &s1).unwrap() + (1.0 - p) * root_fidelity(&r2, &s2).unwrap();
            assert!(lhs >= rhs - 1e-8);
        }
    }

    #[test]
    fn density_validation() {
        let tol = Tolerances::default();
        assert!(DensityMatrix::new(CMat::identity(2, 2), &tol).is_err());
        let bad = CMat::from_row_slice(2, 2, &[cr(1.5), ZERO, ZERO, cr(-0.5)]);
        assert!(DensityMatrix::new(bad, &tol).is_err());
        let nonherm = CMat::from_row_slice(2, 2, &[cr(0.5), ONE, ZERO, cr(0.5)]);
        assert!(DensityMatrix::new(nonherm, &tol).is_err());
        assert!(PureState::new(CVec::from_element(2, ONE), &tol).is_err());
    }
}
