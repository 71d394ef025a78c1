//! Divergences, resource monotones, smoothed and RD-map variants, and
//! modification coefficients. All values are in bits.

use std::rc::Rc;

use oneshot_conic::{bisect_min, LinearExpr, SolveReport, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::programs::{corner_br, corner_tl, embed, re_trace_offdiag, Builder, HExpr};
use crate::quantum::*;
use crate::theories::{membership, FreeStateSet, RdMapSpec};
use crate::tolerance::Ctx;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Analytic,
    Lp,
    Sdp,
    GridHeuristic,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::Lp => "lp",
            Method::Sdp => "sdp",
            Method::GridHeuristic => "grid-heuristic",
        }
    }
}

/// Optional optimizer payloads; which fields are set depends on the measure.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    /// Closest or optimal free state.
    #[serde(with = "crate::io::opt_cmat")]
    pub free_state: Option<CMat>,
    /// Optimal test operator P.
    #[serde(with = "crate::io::opt_cmat")]
    pub test_operator: Option<CMat>,
    /// Mixing weights over the free set's extreme points.
    pub weights: Option<Vec<f64>>,
    /// Optimal state in the smoothing ball.
    #[serde(with = "crate::io::opt_cmat")]
    pub smoothed_state: Option<CMat>,
    /// Normalized negative part of a robustness decomposition.
    #[serde(with = "crate::io::opt_cmat")]
    pub delta: Option<CMat>,
    /// Robustness value R (not logarithmic).
    #[serde(with = "crate::io::opt_fnum")]
    pub robustness: Option<f64>,
    /// Witness operator.
    #[serde(with = "crate::io::opt_cmat")]
    pub witness: Option<CMat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    #[serde(with = "crate::io::fnum")]
    pub value: f64,
    pub method: Method,
    pub status: String,
    pub optimizer: Optimizer,
}

impl MeasureReport {
    fn analytic(value: f64) -> Self {
        MeasureReport { value, method: Method::Analytic, status: "optimal".into(), optimizer: Optimizer::default() }
    }

    fn with(mut self, f: impl FnOnce(&mut Optimizer)) -> Self {
        f(&mut self.optimizer);
        self
    }

    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }
}

fn same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(CoreError::Dimension { expected: a, got: b });
    }
    Ok(())
}

fn conic_method(b: &Builder) -> Method {
    if b.prog.block_dims.is_empty() {
        Method::Lp
    } else {
        Method::Sdp
    }
}

fn infinite(method: Method, status: &str) -> MeasureReport {
    MeasureReport { value: f64::INFINITY, method, status: status.into(), optimizer: Optimizer::default() }
}

fn expect_optimal(rep: &SolveReport, what: &str) -> Result<()> {
    if rep.status != Status::Optimal {
        return Err(CoreError::Solver(format!("{what}: status {}", rep.status.as_str())));
    }
    Ok(())
}

/// Max-relative entropy log min{l : rho <= l sigma}.
pub fn d_max(rho: &DensityMatrix, sigma: &DensityMatrix, ctx: &Ctx) -> Result<MeasureReport> {
    same_dim(rho.dim(), sigma.dim())?;
    Ok(MeasureReport::analytic(d_max_raw(rho.matrix(), sigma.matrix(), ctx)))
}

pub fn d_max_raw(rho: &CMat, sigma: &CMat, ctx: &Ctx) -> f64 {
    let d = rho.nrows();
    let pi = support_projector_raw(sigma, ctx.tol.rank);
    let outside = trace_re(&((CMat::identity(d, d) - &pi) * rho));
    if outside > ctx.tol.support {
        return f64::INFINITY;
    }
    let r = ctx.tol.rank;
    let s = herm_fn(sigma, |x| if x > r { 1.0 / x.sqrt() } else { 0.0 });
    let m = hermitian_part(&(&s * rho * &s));
    log2(max_eig(&m).max(0.0))
}

/// Min-relative entropy -log Tr(Pi_rho sigma).
pub fn d_min(rho: &DensityMatrix, sigma: &DensityMatrix, ctx: &Ctx) -> Result<MeasureReport> {
    same_dim(rho.dim(), sigma.dim())?;
    let p = support_projector(rho, ctx.tol.rank);
    let t = tr_prod(&p, sigma.matrix());
    if t <= ctx.tol.support {
        return Err(CoreError::Precondition("D_min undefined: Tr(Pi_rho sigma) vanishes".into()));
    }
    Ok(MeasureReport::analytic(-log2(t.min(1.0))).with(|o| o.test_operator = Some(p)))
}

/// Umegaki relative entropy in bits; +inf on support violation.
pub fn rel_entropy(rho: &DensityMatrix, sigma: &DensityMatrix, ctx: &Ctx) -> Result<f64> {
    same_dim(rho.dim(), sigma.dim())?;
    let d = rho.dim();
    let pi = support_projector(sigma, ctx.tol.rank);
    if trace_re(&((CMat::identity(d, d) - &pi) * rho.matrix())) > ctx.tol.support {
        return Ok(f64::INFINITY);
    }
    let r = ctx.tol.rank;
    let lr = herm_fn(rho.matrix(), |x| if x > r { x.log2() } else { 0.0 });
    let ls = herm_fn(sigma.matrix(), |x| if x > r { x.log2() } else { 0.0 });
    Ok(tr_prod(rho.matrix(), &(lr - ls)))
}

/// Hypothesis-testing relative entropy -log min{Tr P sigma : 0 <= P <= I, Tr P rho >= 1 - eps}.
pub fn d_hypothesis(rho: &DensityMatrix, sigma: &DensityMatrix, eps: f64, ctx: &Ctx) -> Result<MeasureReport> {
    same_dim(rho.dim(), sigma.dim())?;
    check_eps(eps)?;
    if eps == 0.0 {
        // any feasible P acts as identity on supp(rho)
        let p = support_projector(rho, ctx.tol.rank);
        let t = tr_prod(&p, sigma.matrix());
        if t <= ctx.tol.support {
            return Ok(infinite(Method::Analytic, "support").with(|o| o.test_operator = Some(p)));
        }
        return Ok(MeasureReport::analytic(-log2(t.min(1.0))).with(|o| o.test_operator = Some(p)));
    }
    let d = rho.dim();
    let mut b = Builder::new();
    let p = b.block(d);
    let q = b.block(d);
    let s = b.scalar();
    let mut sum = HExpr::block(p, d);
    sum.add(&HExpr::block(q, d));
    b.pin(&sum, &CMat::identity(d, d))?;
    b.eq(&LinearExpr::new().block(p, rho.matrix().clone()).scalar(s, -1.0), 1.0 - eps)?;
    b.minimize(&LinearExpr::new().block(p, sigma.matrix().clone()))?;
    let rep = b.solve(ctx)?;
    expect_optimal(&rep, "hypothesis test")?;
    let t = rep.objective;
    let pm = rep.blocks[p].clone();
    if t <= ctx.tol.support {
        return Ok(infinite(Method::Sdp, "support").with(|o| o.test_operator = Some(pm)));
    }
    Ok(MeasureReport { value: -log2(t.min(1.0)), method: Method::Sdp, status: "optimal".into(), optimizer: Optimizer::default() }
        .with(|o| o.test_operator = Some(pm)))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps) {
        return Err(CoreError::Precondition(format!("epsilon {eps} outside [0, 1)")));
    }
    Ok(())
}

/// Largest squared Schmidt coefficient of a two-qubit vector.
fn schmidt_max(psi: &CVec) -> f64 {
    let m = CMat::from_row_slice(2, 2, psi.as_slice());
    let s = m.singular_values();
    s.max().powi(2)
}

/// Free fidelity max over free sigma of f(rho, sigma).
pub fn free_fidelity(rho: &DensityMatrix, f: &FreeStateSet, ctx: &Ctx) -> Result<MeasureReport> {
    same_dim(f.dim(), rho.dim())?;
    if let FreeStateSet::GibbsSingleton { .. } = f {
        let tau = f.gibbs_state().unwrap();
        return Ok(MeasureReport::analytic(fidelity(rho, &tau)?).with(|o| o.free_state = Some(tau.into_matrix())));
    }
    if rho.is_pure(1e-9) {
        let psi = rho.top_vector();
        return Ok(match f.extreme_points() {
            Some(pts) => {
                let (i, v) = pts
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, psi.expect(p)))
                    .fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
                MeasureReport::analytic(v.clamp(0.0, 1.0)).with(|o| o.free_state = Some(pts[i].clone()))
            }
            None => {
                let m = CMat::from_row_slice(2, 2, psi.vector().as_slice());
                let svd = m.svd(true, true);
                let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
                let k = if svd.singular_values[0] >= svd.singular_values[1] { 0 } else { 1 };
                let a = u.column(k).into_owned();
                let b = vt.row(k).transpose();
                let prod = kron(&(&a * a.adjoint()), &(&b * b.adjoint()));
                MeasureReport::analytic(schmidt_max(psi.vector()).min(1.0)).with(|o| o.free_state = Some(prod))
            }
        });
    }
    let d = rho.dim();
    let mut b = Builder::new();
    let w = b.block(2 * d);
    let tl = corner_tl(w, d);
    b.pin(&corner_br(w, d), rho.matrix())?;
    let cv = b.in_cone(&tl, f)?;
    b.trace_eq(&tl, 1.0)?;
    b.minimize(&LinearExpr::new().block(w, -re_trace_offdiag(d)))?;
    let rep = b.solve(ctx)?;
    expect_optimal(&rep, "free fidelity")?;
    let root = (-rep.objective).clamp(0.0, 1.0);
    let sigma = cv.value(&rep);
    Ok(MeasureReport { value: root * root, method: Method::Sdp, status: "optimal".into(), optimizer: Optimizer::default() }
        .with(|o| {
            o.weights = cv.weights(&rep);
            o.free_state = Some(sigma);
        }))
}

#[derive(Clone, Debug, PartialEq)]
pub enum ResourceKind {
    Dmax,
    Dmin,
    Dh(f64),
}

impl ResourceKind {
    pub fn parse(s: &str, eps: f64) -> Result<Self> {
        match s {
            "dmax" => Ok(ResourceKind::Dmax),
            "dmin" => Ok(ResourceKind::Dmin),
            "dh" => Ok(ResourceKind::Dh(eps)),
            _ => Err(CoreError::Parse(format!("unknown measure kind '{s}'"))),
        }
    }
}

fn free_zero(rho: &DensityMatrix, f: &FreeStateSet, ctx: &Ctx) -> Result<Option<MeasureReport>> {
    let m = membership(rho, f, ctx)?;
    Ok(m.inside.then(|| MeasureReport::analytic(0.0).with(|o| o.free_state = Some(rho.matrix().clone()))))
}

/// Resource divergences minimized over the free set.
pub fn resource_measure(rho: &DensityMatrix, f: &FreeStateSet, kind: &ResourceKind, ctx: &Ctx) -> Result<MeasureReport> {
    same_dim(f.dim(), rho.dim())?;
    // D_H at eps > 0 is positive even on free states
    let shortcut = !matches!(kind, ResourceKind::Dh(e) if *e > 0.0);
    if shortcut {
        if let Some(z) = free_zero(rho, f, ctx)? {
            return Ok(z);
        }
    }
    match kind {
        ResourceKind::Dmax => resource_dmax(rho, f, ctx),
        ResourceKind::Dmin => resource_dmin(rho, f, ctx),
        ResourceKind::Dh(eps) => resource_dh(rho, f, *eps, ctx),
    }
}

fn resource_dmax(rho: &DensityMatrix, f: &FreeStateSet, ctx: &Ctx) -> Result<MeasureReport> {
    if let Some(tau) = f.gibbs_state() {
        return Ok(MeasureReport::analytic(d_max_raw(rho.matrix(), tau.matrix(), ctx))
            .with(|o| o.free_state = Some(tau.into_matrix())));
    }
    // min Tr S s.t. S - rho >= 0, S in cone(F)
    let d = rho.dim();
    let mut b = Builder::new();
    let q = b.block(d);
    let cv = b.cone_element(f)?;
    let mut e = cv.expr(d);
    e.add(&HExpr::block(q, d).scaled(-1.0));
    b.pin(&e, rho.matrix())?;
    let (obj, _) = cv.expr(d).functional(&CMat::identity(d, d));
    b.minimize(&obj)?;
    let method = conic_method(&b);
    let rep = b.solve(ctx)?;
    if rep.status == Status::Infeasible {
        return Ok(infinite(method, "infeasible"));
    }
    expect_optimal(&rep, "max-relative resource")?;
    let lam = rep.objective.max(1.0);
    let s = cv.value(&rep);
    let sigma = &s * cr(1.0 / trace_re(&s));
    Ok(MeasureReport { value: log2(lam), method, status: "optimal".into(), optimizer: Optimizer::default() }.with(|o| {
        o.weights = cv.weights(&rep).map(|w| w.iter().map(|x| x / lam).collect());
        o.free_state = Some(sigma);
        o.robustness = Some(lam - 1.0);
    }))
}

/// max over free sigma of Tr(P sigma).
pub fn max_overlap(p: &CMat, f: &FreeStateSet, ctx: &Ctx) -> Result<(f64, CMat, Method)> {
    match f.extreme_points() {
        Some(pts) => {
            let (i, v) = pts
                .iter()
                .enumerate()
                .map(|(i, s)| (i, tr_prod(p, s)))
                .fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
            Ok((v, pts[i].clone(), Method::Analytic))
        }
        None => {
            let d = f.dim();
            let mut b = Builder::new();
            let cv = b.cone_element(f)?;
            let e = cv.expr(d);
            b.trace_eq(&e, 1.0)?;
            let (lin, _) = e.functional(&(-p));
            b.minimize(&lin)?;
            let rep = b.solve_optimal(ctx, "overlap")?;
            Ok((-rep.objective, cv.value(&rep), Method::Sdp))
        }
    }
}

fn resource_dmin(rho: &DensityMatrix, f: &FreeStateSet, ctx: &Ctx) -> Result<MeasureReport> {
    let p = support_projector(rho, ctx.tol.rank);
    let (v, sigma, method) = max_overlap(&p, f, ctx)?;
    let out = if v <= ctx.tol.support { infinite(method, "support") } else {
        MeasureReport { value: -log2(v.min(1.0)), method, status: "optimal".into(), optimizer: Optimizer::default() }
    };
    Ok(out.with(|o| {
        o.free_state = Some(sigma);
        o.test_operator = Some(p);
    }))
}

/// min over P of max over free sigma of Tr(P sigma), by minimax.
fn resource_dh(rho: &DensityMatrix, f: &FreeStateSet, eps: f64, ctx: &Ctx) -> Result<MeasureReport> {
    check_eps(eps)?;
    if let Some(tau) = f.gibbs_state() {
        return Ok(d_hypothesis(rho, &tau, eps, ctx)?.with(|o| o.free_state = Some(tau.into_matrix())));
    }
    if eps == 0.0 {
        return resource_dmin(rho, f, ctx);
    }
    let d = rho.dim();
    let mut b = Builder::new();
    let p = b.block(d);
    let q = b.block(d);
    let s = b.scalar();
    let t = b.scalar();
    let mut sum = HExpr::block(p, d);
    sum.add(&HExpr::block(q, d));
    b.pin(&sum, &CMat::identity(d, d))?;
    b.eq(&LinearExpr::new().block(p, rho.matrix().clone()).scalar(s, -1.0), 1.0 - eps)?;
    let mut first_row = None;
    match f.extreme_points() {
        Some(pts) => {
            for v in &pts {
                let r = b.scalar();
                let row = b.prog.n_constraints();
                first_row.get_or_insert(row);
                b.eq(&LinearExpr::new().scalar(t, 1.0).block(p, -v).scalar(r, -1.0), 0.0)?;
            }
        }
        None => {
            // t I - P = A + B^Gamma with A, B >= 0
            let a = b.block(d);
            let bb = b.block(d);
            let mut e = HExpr::block(p, d);
            e.add_scalar(t, -CMat::identity(d, d));
            e.add(&HExpr::block(a, d));
            e.add_block(bb, Rc::new(|g: &CMat| partial_transpose(g, 2, 2)));
            b.pin_zero(&e)?;
        }
    }
    b.minimize(&LinearExpr::new().scalar(t, 1.0))?;
    let rep = b.solve(ctx)?;
    expect_optimal(&rep, "hypothesis-testing resource")?;
    let val = rep.objective;
    let pm = rep.blocks[p].clone();
    let mut sigma = None;
    if let (Some(row), Some(pts)) = (first_row, f.extreme_points()) {
        let mu: Vec<f64> = (0..pts.len()).map(|i| rep.dual[row + i].abs()).collect();
        let z: f64 = mu.iter().sum();
        if z > 0.0 {
            sigma = Some(pts.iter().zip(&mu).fold(CMat::zeros(d, d), |a, (v, &m)| a + v * cr(m / z)));
        }
    }
    let out = if val <= ctx.tol.support { infinite(Method::Sdp, "support") } else {
        MeasureReport { value: -log2(val.min(1.0)), method: Method::Sdp, status: "optimal".into(), optimizer: Optimizer::default() }
    };
    Ok(out.with(|o| {
        o.test_operator = Some(pm);
        o.free_state = sigma;
    }))
}

/// Free robustness R with value LR = log(1 + R); +inf when rho is outside span(F).
pub fn free_robustness(rho: &DensityMatrix, f: &FreeStateSet, ctx: &Ctx) -> Result<MeasureReport> {
    same_dim(f.dim(), rho.dim())?;
    if let Some(z) = free_zero(rho, f, ctx)? {
        return Ok(z.with(|o| o.robustness = Some(0.0)));
    }
    match f {
        FreeStateSet::GibbsSingleton { .. } | FreeStateSet::DiagonalSimplex { .. } => {
            return Ok(infinite(Method::Analytic, "outside affine free set").with(|o| o.robustness = Some(f64::INFINITY)));
        }
        _ => {}
    }
    // rho + A = B with A, B in cone(F); minimize Tr A
    let d = rho.dim();
    let mut b = Builder::new();
    let a = b.cone_element(f)?;
    let bp = b.cone_element(f)?;
    let mut e = bp.expr(d);
    e.add(&a.expr(d).scaled(-1.0));
    b.pin(&e, rho.matrix())?;
    let (obj, _) = a.expr(d).functional(&CMat::identity(d, d));
    b.minimize(&obj)?;
    let method = conic_method(&b);
    let rep = b.solve(ctx)?;
    if rep.status == Status::Infeasible {
        return Ok(infinite(method, "infeasible").with(|o| o.robustness = Some(f64::INFINITY)));
    }
    expect_optimal(&rep, "free robustness")?;
    let r = rep.objective.max(0.0);
    let am = a.value(&rep);
    let bm = bp.value(&rep);
    Ok(MeasureReport { value: log2(1.0 + r), method, status: "optimal".into(), optimizer: Optimizer::default() }.with(|o| {
        o.robustness = Some(r);
        o.free_state = Some(&bm * cr(1.0 / trace_re(&bm).max(1e-300)));
        if r > 1e-12 {
            o.delta = Some(&am * cr(1.0 / trace_re(&am)));
        }
        o.weights = a.weights(&rep);
    }))
}

/// log max{Tr(rho X) : X >= 0, Tr(X sigma) <= 1 on F}; equals the max-relative resource.
pub fn generalized_robustness_witness(rho: &DensityMatrix, f: &FreeStateSet, ctx: &Ctx) -> Result<MeasureReport> {
    same_dim(f.dim(), rho.dim())?;
    let d = rho.dim();
    let mut b = Builder::new();
    let x = b.block(d);
    match f.extreme_points() {
        Some(pts) => {
            for v in &pts {
                let r = b.scalar();
                b.eq(&LinearExpr::new().block(x, v.clone()).scalar(r, 1.0), 1.0)?;
            }
        }
        None => {
            // I - X = A + B^Gamma
            let a = b.block(d);
            let bb = b.block(d);
            let mut e = HExpr::block(x, d);
            e.add(&HExpr::block(a, d));
            e.add_block(bb, Rc::new(|g: &CMat| partial_transpose(g, 2, 2)));
            b.pin(&e, &CMat::identity(d, d))?;
        }
    }
    b.minimize(&LinearExpr::new().block(x, -rho.matrix()))?;
    let rep = b.solve(ctx)?;
    if rep.status == Status::Unbounded {
        return Ok(infinite(Method::Sdp, "unbounded"));
    }
    expect_optimal(&rep, "robustness witness")?;
    let v = (-rep.objective).max(1.0);
    let xm = rep.blocks[x].clone();
    Ok(MeasureReport { value: log2(v), method: Method::Sdp, status: "optimal".into(), optimizer: Optimizer::default() }
        .with(|o| o.witness = Some(xm)))
}

#[derive(Clone, Debug, PartialEq)]
pub enum SmoothKind {
    Dmax,
    Lr,
    DminHeuristic { seed: u64 },
}

/// State in the fidelity ball around `rho`: returns the smoothed-state expression.
/// The block [[rho', Y], [Y^*, Lambda]] lives on the support of rho so that
/// rank-deficient (e.g. pure) inputs keep a strictly feasible point.
fn ball(b: &mut Builder, rho: &CMat, eps: f64) -> Result<HExpr> {
    let d = rho.nrows();
    let (vals, vecs) = eigh(rho);
    let top = vals.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..d).filter(|&i| vals[i] > 1e-12 * top.max(1e-300)).collect();
    let r = keep.len();
    let n = d + r;
    let w = b.block(n);
    let mut tl = HExpr::zero(d);
    tl.add_block(w, Rc::new(move |g: &CMat| embed(g, n, 0, 0)));
    let mut br = HExpr::zero(r);
    br.add_block(w, Rc::new(move |g: &CMat| embed(g, n, d, d)));
    let lam = CMat::from_fn(r, r, |i, j| if i == j { cr(vals[keep[i]]) } else { cr(0.0) });
    b.pin(&br, &lam)?;
    let mut c = CMat::zeros(n, n);
    for (j, &k) in keep.iter().enumerate() {
        for i in 0..d {
            let v = vecs[(i, k)];
            c[(i, d + j)] = v * 0.5;
            c[(d + j, i)] = v.conj() * 0.5;
        }
    }
    let s = b.scalar();
    b.eq(&LinearExpr::new().block(w, c).scalar(s, -1.0), (1.0 - eps).sqrt())?;
    b.trace_eq(&tl, 1.0)?;
    Ok(tl)
}

/// Smoothed measures over the ball f(rho', rho) >= 1 - eps.
pub fn smooth_measure(rho: &DensityMatrix, f: &FreeStateSet, eps: f64, kind: &SmoothKind, ctx: &Ctx) -> Result<MeasureReport> {
    same_dim(f.dim(), rho.dim())?;
    check_eps(eps)?;
    if eps == 0.0 {
        return match kind {
            SmoothKind::Dmax => resource_measure(rho, f, &ResourceKind::Dmax, ctx),
            SmoothKind::Lr => free_robustness(rho, f, ctx),
            SmoothKind::DminHeuristic { .. } => resource_measure(rho, f, &ResourceKind::Dmin, ctx),
        }
        .map(|r| r.with(|o| o.smoothed_state = Some(rho.matrix().clone())));
    }
    let d = rho.dim();
    match kind {
        SmoothKind::Dmax => {
            // rho' + Q = S in cone(F); minimize Tr S
            let mut b = Builder::new();
            let rp = ball(&mut b, rho.matrix(), eps)?;
            let q = b.block(d);
            let mut e = rp.clone();
            e.add(&HExpr::block(q, d));
            let cv = b.in_cone(&e, f)?;
            let (obj, _) = cv.expr(d).functional(&CMat::identity(d, d));
            b.minimize(&obj)?;
            let rep = b.solve(ctx)?;
            if rep.status == Status::Infeasible {
                return Ok(infinite(Method::Sdp, "infeasible"));
            }
            expect_optimal(&rep, "smoothed max-relative resource")?;
            let lam = rep.objective.max(1.0);
            let s = cv.value(&rep);
            let rpm = rp.value(&rep);
            Ok(MeasureReport { value: log2(lam), method: Method::Sdp, status: "optimal".into(), optimizer: Optimizer::default() }
                .with(|o| {
                    o.free_state = Some(&s * cr(1.0 / trace_re(&s)));
                    o.smoothed_state = Some(rpm);
                    o.robustness = Some(lam - 1.0);
                }))
        }
        SmoothKind::Lr => {
            let mut b = Builder::new();
            let rp = ball(&mut b, rho.matrix(), eps)?;
            let a = b.cone_element(f)?;
            let mut e = rp.clone();
            e.add(&a.expr(d));
            let bp = b.in_cone(&e, f)?;
            let (obj, _) = a.expr(d).functional(&CMat::identity(d, d));
            b.minimize(&obj)?;
            let rep = b.solve(ctx)?;
            if rep.status == Status::Infeasible {
                return Ok(infinite(Method::Sdp, "infeasible").with(|o| o.robustness = Some(f64::INFINITY)));
            }
            expect_optimal(&rep, "smoothed robustness")?;
            let r = rep.objective.max(0.0);
            let am = a.value(&rep);
            let bm = bp.value(&rep);
            let rpm = rp.value(&rep);
            Ok(MeasureReport { value: log2(1.0 + r), method: Method::Sdp, status: "optimal".into(), optimizer: Optimizer::default() }
                .with(|o| {
                    o.robustness = Some(r);
                    o.smoothed_state = Some(rpm);
                    o.free_state = Some(&bm * cr(1.0 / trace_re(&bm).max(1e-300)));
                    if r > 1e-12 {
                        o.delta = Some(&am * cr(1.0 / trace_re(&am)));
                    }
                }))
        }
        SmoothKind::DminHeuristic { seed } => {
            let (v, best) = smooth_max_heuristic(rho, eps, *seed, ctx, |cand| {
                resource_measure(cand, f, &ResourceKind::Dmin, ctx).map(|r| r.value)
            })?;
            Ok(MeasureReport { value: v, method: Method::GridHeuristic, status: "heuristic".into(), optimizer: Optimizer::default() }
                .with(|o| o.smoothed_state = Some(best)))
        }
    }
}

/// Seeded multi-start search for max of `g` over the ball; a lower estimate.
pub fn smooth_max_heuristic(
    rho: &DensityMatrix,
    eps: f64,
    seed: u64,
    ctx: &Ctx,
    g: impl Fn(&DensityMatrix) -> Result<f64>,
) -> Result<(f64, CMat)> {
    let d = rho.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let in_ball = |c: &DensityMatrix| root_fidelity_raw(c.matrix(), rho.matrix()) >= (1.0 - eps).sqrt() - 1e-12;
    let mut best = g(rho)?;
    let mut arg = rho.matrix().clone();
    let consider = |cand: DensityMatrix, best: &mut f64, arg: &mut CMat| -> Result<()> {
        if in_ball(&cand) {
            let v = g(&cand)?;
            if v > *best {
                *best = v;
                *arg = cand.into_matrix();
            }
        }
        Ok(())
    };
    // spectral truncations of rho
    let (vals, vecs) = eigh(rho.matrix());
    for k in 1..d {
        let mut m = CMat::zeros(d, d);
        for i in (d - k)..d {
            let v = vecs.column(i);
            m += &v * v.adjoint() * cr(vals[i].max(0.0));
        }
        if trace_re(&m) > 1e-12 {
            consider(DensityMatrix::project(&m)?, &mut best, &mut arg)?;
        }
    }
    // random rotations and mixtures near rho, shrinking toward feasibility
    let _ = ctx;
    for _ in 0..200 {
        let target = random_density_rank(d, rng.gen_range(1..=d), &mut rng).into_matrix();
        let mut t: f64 = rng.gen_range(0.0..1.0);
        for _ in 0..20 {
            let cand = DensityMatrix::project(&(rho.matrix() * cr(1.0 - t) + &target * cr(t)))?;
            if in_ball(&cand) {
                consider(cand, &mut best, &mut arg)?;
                break;
            }
            t *= 0.5;
        }
    }
    Ok((best, arg))
}

#[derive(Clone, Debug, PartialEq)]
pub enum LambdaKind {
    F,
    Dmax,
    Dmin,
    Dh(f64),
}

/// Divergence between rho and lambda(rho). Pseudo maps give the barred
/// measure, 0 on free inputs, and therefore need the free set.
pub fn lambda_measure(
    rho: &DensityMatrix,
    spec: &RdMapSpec,
    kind: &LambdaKind,
    free: Option<&FreeStateSet>,
    ctx: &Ctx,
) -> Result<MeasureReport> {
    same_dim(spec.dim, rho.dim())?;
    if spec.is_pseudo {
        let f = free.ok_or_else(|| CoreError::Precondition("pseudo RD map measure needs the free set".into()))?;
        if membership(rho, f, ctx)?.inside {
            let v = if *kind == LambdaKind::F { 1.0 } else { 0.0 };
            return Ok(MeasureReport::analytic(v));
        }
    }
    let l = DensityMatrix::project(&spec.apply(rho.matrix()))?;
    let rep = match kind {
        LambdaKind::F => MeasureReport::analytic(fidelity(rho, &l)?),
        LambdaKind::Dmax => d_max(rho, &l, ctx)?,
        LambdaKind::Dmin => d_min(rho, &l, ctx)?,
        LambdaKind::Dh(eps) => d_hypothesis(rho, &l, *eps, ctx)?,
    };
    Ok(rep.with(|o| o.free_state = Some(l.into_matrix())))
}

/// min over the ball of D_max(rho' || lambda(rho')), by bisection on
/// t with the feasibility program t lambda(rho') - rho' >= 0.
pub fn smooth_lambda_dmax(rho: &DensityMatrix, spec: &RdMapSpec, eps: f64, ctx: &Ctx) -> Result<MeasureReport> {
    same_dim(spec.dim, rho.dim())?;
    check_eps(eps)?;
    if eps == 0.0 {
        return lambda_measure(rho, spec, &LambdaKind::Dmax, None, ctx);
    }
    let d = rho.dim();
    let feasible = |t: f64| -> Result<Option<CMat>> {
        let mut b = Builder::new();
        let rp = ball(&mut b, rho.matrix(), eps)?;
        let z = b.block(d);
        let sp = spec.clone();
        let mapped = rp.mapped(d, |m| sp.apply(m), {
            let sp = spec.clone();
            Rc::new(move |g: &CMat| sp.adjoint(g))
        });
        let mut e = mapped.scaled(t);
        e.add(&rp.scaled(-1.0));
        e.add(&HExpr::block(z, d).scaled(-1.0));
        b.pin_zero(&e)?;
        let rep = b.solve(ctx)?;
        Ok(match rep.status {
            Status::Optimal => Some(rp.value(&rep)),
            _ => None,
        })
    };
    let upper = 2f64.powf(d_max_raw(rho.matrix(), &spec.apply(rho.matrix()), ctx).min(64.0)) * 1.000001;
    if !upper.is_finite() {
        return Ok(infinite(Method::Sdp, "support"));
    }
    let found = bisect_min(1.0, upper.max(1.0), 1e-7, |t| feasible(t).map(|r| r.is_some()))?;
    match found {
        Some(t) => {
            let rp = feasible(t)?;
            Ok(MeasureReport { value: log2(t), method: Method::Sdp, status: "optimal".into(), optimizer: Optimizer::default() }
                .with(|o| o.smoothed_state = rp))
        }
        None => Err(CoreError::Solver("smoothed lambda bisection found no feasible point".into())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoefficientKind {
    #[serde(rename = "m_f")]
    F,
    #[serde(rename = "m_min")]
    Min,
    #[serde(rename = "m_max")]
    Max,
    #[serde(rename = "m_LR")]
    Lr,
    #[serde(rename = "m_f_lambda")]
    FLambda,
    #[serde(rename = "m_min_lambda")]
    MinLambda,
    #[serde(rename = "m_max_lambda")]
    MaxLambda,
}

impl CoefficientKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CoefficientKind::F => "m_f",
            CoefficientKind::Min => "m_min",
            CoefficientKind::Max => "m_max",
            CoefficientKind::Lr => "m_LR",
            CoefficientKind::FLambda => "m_f_lambda",
            CoefficientKind::MinLambda => "m_min_lambda",
            CoefficientKind::MaxLambda => "m_max_lambda",
        }
    }

    pub fn is_lambda(&self) -> bool {
        matches!(self, CoefficientKind::FLambda | CoefficientKind::MinLambda | CoefficientKind::MaxLambda)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModCoefficient {
    pub kind: CoefficientKind,
    pub d: usize,
    #[serde(with = "crate::io::fnum")]
    pub value: f64,
    #[serde(with = "crate::io::fnum")]
    pub measure: f64,
}

/// Measure of a reference state divided by log d.
pub fn modification_coefficient(
    phi: &DensityMatrix,
    free: &FreeStateSet,
    spec: Option<&RdMapSpec>,
    kind: CoefficientKind,
    ctx: &Ctx,
) -> Result<ModCoefficient> {
    let d = phi.dim();
    if d < 2 {
        return Err(CoreError::Precondition("modification coefficients need d >= 2".into()));
    }
    let need_spec = || spec.ok_or_else(|| CoreError::Precondition("lambda coefficient needs an RD map".into()));
    let measure = match kind {
        CoefficientKind::F => -log2(free_fidelity(phi, free, ctx)?.value),
        CoefficientKind::Min => resource_measure(phi, free, &ResourceKind::Dmin, ctx)?.value,
        CoefficientKind::Max => resource_measure(phi, free, &ResourceKind::Dmax, ctx)?.value,
        CoefficientKind::Lr => free_robustness(phi, free, ctx)?.value,
        CoefficientKind::FLambda => -log2(lambda_measure(phi, need_spec()?, &LambdaKind::F, Some(free), ctx)?.value),
        CoefficientKind::MinLambda => lambda_measure(phi, need_spec()?, &LambdaKind::Dmin, Some(free), ctx)?.value,
        CoefficientKind::MaxLambda => lambda_measure(phi, need_spec()?, &LambdaKind::Dmax, Some(free), ctx)?.value,
    };
    Ok(ModCoefficient { kind, d, value: measure / log2(d as f64), measure })
}
