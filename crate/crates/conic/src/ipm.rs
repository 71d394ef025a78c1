//! Homogeneous self-dual embedding, HKM direction, Mehrotra predictor-corrector.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::program::{CMat, ConicProgram, Row};
use crate::{ConicError, Settings, SolveReport, Status};

/// Point in the product cone: nonnegative scalars followed by Hermitian blocks.
#[derive(Clone, Debug)]
struct Vars {
    s: DVector<f64>,
    b: Vec<CMat>,
}

impl Vars {
    fn zeros(n: usize, dims: &[usize]) -> Self {
        Vars { s: DVector::zeros(n), b: dims.iter().map(|&k| CMat::zeros(k, k)).collect() }
    }

    fn identity(n: usize, dims: &[usize]) -> Self {
        Vars {
            s: DVector::from_element(n, 1.0),
            b: dims.iter().map(|&k| CMat::identity(k, k)).collect(),
        }
    }

    fn from_row(r: &Row, dims: &[usize]) -> Self {
        Vars {
            s: DVector::from_column_slice(&r.scalars),
            b: r
                .blocks
                .iter()
                .zip(dims)
                .map(|(m, &k)| m.clone().unwrap_or_else(|| CMat::zeros(k, k)))
                .collect(),
        }
    }

    fn dot(&self, o: &Vars) -> f64 {
        let mut acc = self.s.dot(&o.s);
        for (a, b) in self.b.iter().zip(&o.b) {
            acc += herm_inner(a, b);
        }
        acc
    }

    fn axpy(&mut self, alpha: f64, o: &Vars) {
        self.s.axpy(alpha, &o.s, 1.0);
        let a = Complex64::new(alpha, 0.0);
        for (x, y) in self.b.iter_mut().zip(&o.b) {
            *x += y * a;
        }
    }

    fn scaled(&self, alpha: f64) -> Vars {
        let a = Complex64::new(alpha, 0.0);
        Vars { s: &self.s * alpha, b: self.b.iter().map(|m| m * a).collect() }
    }

    fn norm_inf(&self) -> f64 {
        let mut m = self.s.amax();
        for b in &self.b {
            for z in b.iter() {
                m = m.max(z.norm());
            }
        }
        m
    }
}

/// Re Tr(A^dag B), which is Re Tr(A B) for Hermitian A.
fn herm_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

fn hermitize(m: &mut CMat) {
    let h = (&*m + m.adjoint()) * Complex64::new(0.5, 0.0);
    *m = h;
}

/// Constraint data after row scaling and dependent-row removal.
struct Data {
    n: usize,
    dims: Vec<usize>,
    rows: Vec<Row>,
    b: DVector<f64>,
    c: Vars,
}

impl Data {
    fn m(&self) -> usize {
        self.rows.len()
    }

    fn apply(&self, x: &Vars) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.rows.iter().map(|r| row_dot(r, x)))
    }

    fn apply_t(&self, y: &DVector<f64>) -> Vars {
        let mut out = Vars::zeros(self.n, &self.dims);
        for (r, &yi) in self.rows.iter().zip(y.iter()) {
            if yi == 0.0 {
                continue;
            }
            for (k, &a) in r.scalars.iter().enumerate() {
                out.s[k] += yi * a;
            }
            let c = Complex64::new(yi, 0.0);
            for (bi, m) in r.blocks.iter().enumerate() {
                if let Some(m) = m {
                    out.b[bi] += m * c;
                }
            }
        }
        out
    }
}

fn row_dot(r: &Row, x: &Vars) -> f64 {
    let mut acc: f64 = r.scalars.iter().zip(x.s.iter()).map(|(a, b)| a * b).sum();
    for (m, xb) in r.blocks.iter().zip(&x.b) {
        if let Some(m) = m {
            acc += herm_inner(m, xb);
        }
    }
    acc
}

fn row_inner(a: &Row, b: &Row) -> f64 {
    let mut acc: f64 = a.scalars.iter().zip(&b.scalars).map(|(x, y)| x * y).sum();
    for (x, y) in a.blocks.iter().zip(&b.blocks) {
        if let (Some(x), Some(y)) = (x, y) {
            acc += herm_inner(x, y);
        }
    }
    acc
}

fn scale_row(r: &Row, s: f64) -> Row {
    let c = Complex64::new(s, 0.0);
    Row {
        scalars: r.scalars.iter().map(|v| v * s).collect(),
        blocks: r.blocks.iter().map(|m| m.as_ref().map(|m| m * c)).collect(),
    }
}

enum Presolve {
    Ok { keep: Vec<usize>, scales: Vec<f64> },
    Inconsistent { y: Vec<f64> },
}

/// Normalize rows and drop linearly dependent ones (in order), checking that
/// the dropped right-hand sides are consistent.
fn presolve(p: &ConicProgram) -> Presolve {
    let m = p.rows.len();
    let norms: Vec<f64> = p.rows.iter().map(|r| row_inner(r, r).sqrt()).collect();
    let mut keep: Vec<usize> = Vec::new();
    // Cholesky factor of the Gram matrix of kept (unit) rows, row-major lower.
    let mut l: Vec<Vec<f64>> = Vec::new();
    let rows_unit: Vec<Row> = p
        .rows
        .iter()
        .zip(&norms)
        .map(|(r, &nrm)| if nrm > 0.0 { scale_row(r, 1.0 / nrm) } else { r.clone() })
        .collect();
    let b_unit: Vec<f64> =
        p.rhs.iter().zip(&norms).map(|(b, &nrm)| if nrm > 0.0 { b / nrm } else { *b }).collect();
    for i in 0..m {
        let g: Vec<f64> = keep.iter().map(|&k| row_inner(&rows_unit[k], &rows_unit[i])).collect();
        // forward solve L w = g
        let mut w = vec![0.0; keep.len()];
        for a in 0..keep.len() {
            let mut s = g[a];
            for c in 0..a {
                s -= l[a][c] * w[c];
            }
            w[a] = s / l[a][a];
        }
        let gii = if norms[i] > 0.0 { 1.0 } else { 0.0 };
        let resid = gii - w.iter().map(|v| v * v).sum::<f64>();
        if resid > 1e-10 {
            let mut row = w.clone();
            row.push(resid.sqrt());
            l.push(row);
            keep.push(i);
            continue;
        }
        // dependent: coefficients c with row_i = sum c_k row_k, L^T c = w
        let mut coef = vec![0.0; keep.len()];
        for a in (0..keep.len()).rev() {
            let mut s = w[a];
            for c in (a + 1)..keep.len() {
                s -= l[c][a] * coef[c];
            }
            coef[a] = s / l[a][a];
        }
        let implied: f64 = coef.iter().zip(&keep).map(|(c, &k)| c * b_unit[k]).sum();
        let mismatch = b_unit[i] - implied;
        let scale = 1.0 + b_unit[i].abs() + implied.abs();
        if mismatch.abs() > 1e-9 * scale {
            let mut y = vec![0.0; m];
            let sgn = mismatch.signum();
            y[i] = sgn / norms[i].max(f64::MIN_POSITIVE);
            for (c, &k) in coef.iter().zip(&keep) {
                y[k] = -sgn * c / norms[k];
            }
            let by: f64 = y.iter().zip(&p.rhs).map(|(a, b)| a * b).sum();
            for v in y.iter_mut() {
                *v /= by;
            }
            return Presolve::Inconsistent { y };
        }
    }
    let scales = keep.iter().map(|&k| norms[k]).collect();
    Presolve::Ok { keep, scales }
}

struct Factor {
    xchol: Vec<CMat>,
    zinv: Vec<CMat>,
    ratio: DVector<f64>,
}

impl Factor {
    /// H(W) = sym(X W Z^{-1}); scalars x/z * w.
    fn h(&self, x: &Vars, w: &Vars) -> Vars {
        let s = w.s.component_mul(&self.ratio);
        let b = x
            .b
            .iter()
            .zip(&w.b)
            .zip(&self.zinv)
            .map(|((xb, wb), zi)| {
                let t = xb * wb * zi;
                (&t + t.adjoint()) * Complex64::new(0.5, 0.0)
            })
            .collect();
        Vars { s, b }
    }
}

fn max_step(x: &Vars, dx: &Vars, chol: Option<&[CMat]>) -> f64 {
    let mut alpha = f64::INFINITY;
    for (xi, di) in x.s.iter().zip(dx.s.iter()) {
        if *di < 0.0 {
            alpha = alpha.min(-xi / di);
        }
    }
    for (bi, (xb, db)) in x.b.iter().zip(&dx.b).enumerate() {
        let l = match chol {
            Some(c) => c[bi].clone(),
            None => match Cholesky::new(xb.clone()) {
                Some(c) => c.l(),
                None => return 0.0,
            },
        };
        let linv = match l.clone().try_inverse() {
            Some(v) => v,
            None => return 0.0,
        };
        let mut s = &linv * db * linv.adjoint();
        hermitize(&mut s);
        let eig = SymmetricEigen::new(s);
        let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    alpha
}

fn solve_spd(m: &DMatrix<f64>, chol: &Option<Cholesky<f64, nalgebra::Dyn>>, rhs: &DVector<f64>) -> DVector<f64> {
    match chol {
        Some(c) => c.solve(rhs),
        None => m.clone().lu().solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
    }
}

fn factor_schur(m: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let dmax = m.diagonal().amax().max(1e-300);
    let mut reg = 1e-14 * dmax;
    while reg < 1e-6 * dmax {
        let mut mm = m.clone();
        for i in 0..mm.nrows() {
            mm[(i, i)] += reg;
        }
        if let Some(c) = Cholesky::new(mm) {
            return Some(c);
        }
        reg *= 100.0;
    }
    None
}

struct Dir {
    dx: Vars,
    dy: DVector<f64>,
    dz: Vars,
    dtau: f64,
    dkappa: f64,
}

pub(crate) fn solve(p: &ConicProgram, st: &Settings) -> Result<SolveReport, ConicError> {
    p.validate()?;
    let (keep, scales) = match presolve(p) {
        Presolve::Ok { keep, scales } => (keep, scales),
        Presolve::Inconsistent { y } => return Ok(infeasible_report(p, y, 0)),
    };
    let cvars = Vars::from_row(&p.objective, &p.block_dims);
    let cscale = cvars.norm_inf().max(1.0);
    let data = Data {
        n: p.n_scalars,
        dims: p.block_dims.clone(),
        rows: keep.iter().zip(&scales).map(|(&k, &s)| scale_row(&p.rows[k], 1.0 / s)).collect(),
        b: DVector::from_iterator(keep.len(), keep.iter().zip(&scales).map(|(&k, &s)| p.rhs[k] / s)),
        c: cvars.scaled(1.0 / cscale),
    };
    let nu = (data.n + data.dims.iter().sum::<usize>()) as f64;
    let m = data.m();
    let bnorm = data.b.amax();
    let cnorm = data.c.norm_inf();

    let mut x = Vars::identity(data.n, &data.dims);
    let mut z = Vars::identity(data.n, &data.dims);
    let mut y = DVector::<f64>::zeros(m);
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let mut best: Option<(f64, Vars, DVector<f64>, Vars, f64)> = None;
    let mut iterations = 0;
    let mut status = Status::MaxIter;
    let mut reduced = false;

    for it in 0..st.max_iter {
        iterations = it;
        let ax = data.apply(&x);
        let rp = &ax - &data.b * tau;
        let mut rd = data.apply_t(&y);
        rd.axpy(1.0, &z);
        rd.axpy(-tau, &data.c);
        let cx = data.c.dot(&x);
        let by = data.b.dot(&y);
        let rg = cx - by + kappa;
        let xz = x.dot(&z);
        let mu = (xz + tau * kappa) / (nu + 1.0);

        let pres = rp.amax() / tau / (1.0 + bnorm);
        let dres = rd.norm_inf() / tau / (1.0 + cnorm);
        let pobj = cx / tau;
        let dobj = by / tau;
        let gap = xz / (tau * tau);
        let rel_gap = gap / pobj.abs().min(dobj.abs()).max(1.0);
        if pres < st.feas_tol && dres < st.feas_tol && (gap < st.gap_tol || rel_gap < st.gap_tol) {
            status = Status::Optimal;
            break;
        }
        // track best iterate for stall recovery
        let merit = pres.max(dres).max(rel_gap.min(gap));
        if best.as_ref().map_or(true, |b| merit < b.0) {
            best = Some((merit, x.scaled(1.0 / tau), y.scale(1.0 / tau), z.scaled(1.0 / tau), merit));
        }
        // infeasibility certificates
        if by > 0.0 {
            let mut aty = data.apply_t(&y);
            aty.axpy(1.0, &z);
            if aty.norm_inf() / by < st.infeas_tol {
                status = Status::Infeasible;
                break;
            }
        }
        if cx < 0.0 && ax.amax() / (-cx) < st.infeas_tol {
            status = Status::Unbounded;
            break;
        }

        // factorization
        let mut xchol = Vec::with_capacity(x.b.len());
        let mut zinv = Vec::with_capacity(z.b.len());
        let mut broken = false;
        for (xb, zb) in x.b.iter().zip(&z.b) {
            match (Cholesky::new(xb.clone()), Cholesky::new(zb.clone())) {
                (Some(cx_), Some(cz)) => {
                    xchol.push(cx_.l());
                    let mut zi = cz.inverse();
                    hermitize(&mut zi);
                    zinv.push(zi);
                }
                _ => {
                    broken = true;
                    break;
                }
            }
        }
        if broken {
            break;
        }
        let ratio = x.s.component_div(&z.s);
        let fac = Factor { xchol, zinv, ratio };

        // Schur complement M_ij = <A_i, H(A_j)>
        let mut schur = DMatrix::<f64>::zeros(m, m);
        let hcols: Vec<Vars> = data
            .rows
            .iter()
            .map(|r| {
                let mut v = Vars::zeros(data.n, &data.dims);
                for k in 0..data.n {
                    v.s[k] = r.scalars[k] * fac.ratio[k];
                }
                for (bi, mb) in r.blocks.iter().enumerate() {
                    if let Some(mb) = mb {
                        // X A Z^{-1}; the inner product with Hermitian A_i only sees its Hermitian part
                        v.b[bi] = &x.b[bi] * mb * &fac.zinv[bi];
                    }
                }
                v
            })
            .collect();
        for j in 0..m {
            for i in 0..=j {
                let mut acc = 0.0;
                let (ri, hj) = (&data.rows[i], &hcols[j]);
                for k in 0..data.n {
                    acc += ri.scalars[k] * hj.s[k];
                }
                for (bi, mb) in ri.blocks.iter().enumerate() {
                    if let (Some(mb), Some(_)) = (mb, &data.rows[j].blocks[bi]) {
                        acc += herm_inner(mb, &hj.b[bi]);
                    }
                }
                schur[(i, j)] = acc;
                schur[(j, i)] = acc;
            }
        }
        let chol = factor_schur(&schur);

        let hc = fac.h(&x, &data.c);
        let v = solve_spd(&schur, &chol, &(data.apply(&hc) + &data.b));
        let atv = data.apply_t(&v);
        let mut dx1 = fac.h(&x, &atv);
        dx1.axpy(-1.0, &hc);
        let hrd = fac.h(&x, &rd);
        let denom = data.c.dot(&dx1) - data.b.dot(&v) - kappa / tau;

        let direction = |eta: f64, rc: &Vars, rtau: f64| -> Dir {
            let mut t = rc.clone();
            t.axpy(eta, &hrd);
            let rhs1 = -(&rp * eta) - data.apply(&t);
            let u = solve_spd(&schur, &chol, &rhs1);
            let mut dx0 = t;
            dx0.axpy(1.0, &fac.h(&x, &data.apply_t(&u)));
            let dtau = (-eta * rg - data.c.dot(&dx0) + data.b.dot(&u) - rtau / tau) / denom;
            let mut dx = dx0;
            dx.axpy(dtau, &dx1);
            let dy = &u + &v * dtau;
            let mut dz = rd.scaled(-eta);
            dz.axpy(-1.0, &data.apply_t(&dy));
            dz.axpy(dtau, &data.c);
            for b in dx.b.iter_mut().chain(dz.b.iter_mut()) {
                hermitize(b);
            }
            let dkappa = (rtau - kappa * dtau) / tau;
            Dir { dx, dy, dz, dtau, dkappa }
        };

        let step_len = |d: &Dir| -> f64 {
            let mut a = max_step(&x, &d.dx, Some(&fac.xchol)).min(max_step(&z, &d.dz, None));
            if d.dtau < 0.0 {
                a = a.min(-tau / d.dtau);
            }
            if d.dkappa < 0.0 {
                a = a.min(-kappa / d.dkappa);
            }
            a
        };

        // predictor
        let aff = direction(1.0, &x.scaled(-1.0), -tau * kappa);
        let alpha_aff = step_len(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // corrector
        let mut rc = Vars::zeros(data.n, &data.dims);
        for k in 0..data.n {
            rc.s[k] = (sigma * mu - aff.dx.s[k] * aff.dz.s[k]) / z.s[k] - x.s[k];
        }
        for bi in 0..data.dims.len() {
            let zi = &fac.zinv[bi];
            let corr = &aff.dx.b[bi] * &aff.dz.b[bi] * zi;
            let corr = (&corr + corr.adjoint()) * Complex64::new(0.5, 0.0);
            rc.b[bi] = zi * Complex64::new(sigma * mu, 0.0) - &x.b[bi] - corr;
        }
        let rtau = sigma * mu - tau * kappa - aff.dtau * aff.dkappa;
        let dir = direction(1.0 - sigma, &rc, rtau);
        let amax = step_len(&dir);
        let alpha = (st.step_damping * amax).min(1.0);
        if !alpha.is_finite() || alpha < 1e-12 {
            break;
        }
        x.axpy(alpha, &dir.dx);
        z.axpy(alpha, &dir.dz);
        y.axpy(alpha, &dir.dy, 1.0);
        tau += alpha * dir.dtau;
        kappa += alpha * dir.dkappa;
        for b in x.b.iter_mut().chain(z.b.iter_mut()) {
            hermitize(b);
        }
        if !(tau.is_finite() && kappa.is_finite()) || tau <= 0.0 {
            break;
        }
    }

    // map back to the caller's scaling
    let unscale_y = |yv: &DVector<f64>, factor: f64| -> Vec<f64> {
        let mut full = vec![0.0; p.rows.len()];
        for ((&k, &s), yi) in keep.iter().zip(&scales).zip(yv.iter()) {
            full[k] = yi / s * factor;
        }
        full
    };

    match status {
        Status::Infeasible => {
            let by = data.b.dot(&y);
            let yfull = unscale_y(&(&y / by), 1.0);
            Ok(infeasible_report(p, yfull, iterations))
        }
        Status::Unbounded => {
            let cx = p_obj(p, &x);
            let ray = x.scaled(-1.0 / cx);
            Ok(SolveReport {
                status,
                objective: f64::NEG_INFINITY,
                dual_objective: f64::NEG_INFINITY,
                scalars: ray.s.iter().copied().collect(),
                blocks: ray.b,
                dual: vec![0.0; p.rows.len()],
                dual_scalars: vec![0.0; p.n_scalars],
                dual_blocks: p.block_dims.iter().map(|&k| CMat::zeros(k, k)).collect(),
                max_eq_residual: f64::NAN,
                min_block_eig: f64::NAN,
                iterations,
                reduced_accuracy: false,
            })
        }
        _ => {
            let (xs, ys, zs) = if status == Status::Optimal {
                (x.scaled(1.0 / tau), y.scale(1.0 / tau), z.scaled(1.0 / tau))
            } else if let Some((_, bx, byv, bz, _)) = best {
                (bx, byv, bz)
            } else {
                (x.scaled(1.0 / tau), y.scale(1.0 / tau), z.scaled(1.0 / tau))
            };
            let mut rep = finish(p, &xs, unscale_y(&ys, cscale), &zs.scaled(cscale), iterations);
            if status != Status::Optimal {
                let gap = (rep.objective - rep.dual_objective).abs()
                    / rep.objective.abs().min(rep.dual_objective.abs()).max(1.0);
                if rep.max_eq_residual <= st.eq_tol && gap <= st.opt_tol && rep.min_block_eig >= -st.psd_tol {
                    reduced = true;
                    status = Status::Optimal;
                }
            }
            rep.status = status;
            rep.reduced_accuracy = reduced;
            Ok(rep)
        }
    }
}

fn p_obj(p: &ConicProgram, x: &Vars) -> f64 {
    row_dot(&p.objective, x)
}

fn finish(p: &ConicProgram, x: &Vars, y: Vec<f64>, z: &Vars, iterations: usize) -> SolveReport {
    let mut max_res: f64 = 0.0;
    for (r, b) in p.rows.iter().zip(&p.rhs) {
        max_res = max_res.max((row_dot(r, x) - b).abs());
    }
    let mut min_eig = x.s.iter().copied().fold(f64::INFINITY, f64::min);
    for b in &x.b {
        let e = SymmetricEigen::new(b.clone());
        min_eig = min_eig.min(e.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min));
    }
    if !min_eig.is_finite() {
        min_eig = 0.0;
    }
    let dual_objective = y.iter().zip(&p.rhs).map(|(a, b)| a * b).sum();
    SolveReport {
        status: Status::Optimal,
        objective: p_obj(p, x),
        dual_objective,
        scalars: x.s.iter().copied().collect(),
        blocks: x.b.clone(),
        dual: y,
        dual_scalars: z.s.iter().copied().collect(),
        dual_blocks: z.b.clone(),
        max_eq_residual: max_res,
        min_block_eig: min_eig,
        iterations,
        reduced_accuracy: false,
    }
}

fn infeasible_report(p: &ConicProgram, y: Vec<f64>, iterations: usize) -> SolveReport {
    SolveReport {
        status: Status::Infeasible,
        objective: f64::INFINITY,
        dual_objective: f64::INFINITY,
        scalars: vec![0.0; p.n_scalars],
        blocks: p.block_dims.iter().map(|&k| CMat::zeros(k, k)).collect(),
        dual: y,
        dual_scalars: vec![0.0; p.n_scalars],
        dual_blocks: p.block_dims.iter().map(|&k| CMat::zeros(k, k)).collect(),
        max_eq_residual: f64::NAN,
        min_block_eig: f64::NAN,
        iterations,
        reduced_accuracy: false,
    }
}
