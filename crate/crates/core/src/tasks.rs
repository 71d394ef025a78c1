//! One-shot formation and distillation: ladder bounds, explicit channel
//! constructions with certificates, and an exact conversion oracle.

use std::rc::Rc;

use oneshot_conic::{LinearExpr, Status};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::measures::{
    d_hypothesis, free_fidelity, free_robustness, lambda_measure, max_overlap, resource_measure, smooth_lambda_dmax,
    smooth_measure, LambdaKind, ResourceKind, SmoothKind,
};
use crate::programs::{channel_adj, corner_br, corner_tl, re_trace_offdiag, Builder, HExpr};
use crate::quantum::*;
use crate::theories::{
    has_ffr, membership, pauli_eigenstates, product_probes, FreeStateSet, RdMapKind, RdMapSpec, ReferenceFamily,
    Theory,
};
use crate::tolerance::Ctx;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Formation,
    Distillation,
    DistillationInputError,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Formation => "formation",
            Task::Distillation => "distillation",
            Task::DistillationInputError => "distillation-input-error",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "formation" => Ok(Task::Formation),
            "distillation" => Ok(Task::Distillation),
            "distillation-input-error" => Ok(Task::DistillationInputError),
            _ => Err(CoreError::Parse(format!("unknown task '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Lower,
    Upper,
    Exact,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Lower => "lower",
            Direction::Upper => "upper",
            Direction::Exact => "exact",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Direction::Lower),
            "upper" => Ok(Direction::Upper),
            "exact" => Ok(Direction::Exact),
            _ => Err(CoreError::Parse(format!("unknown direction '{s}'"))),
        }
    }
}

/// How d0 is picked from the echoed ladder values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderRule {
    /// Smallest d with value >= threshold.
    MinAtLeast,
    /// Largest d with value <= threshold.
    MaxAtMost,
    /// Largest d with value >= threshold.
    MaxAtLeast,
}

impl LadderRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            LadderRule::MinAtLeast => "min_at_least",
            LadderRule::MaxAtMost => "max_at_most",
            LadderRule::MaxAtLeast => "max_at_least",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "min_at_least" => Ok(LadderRule::MinAtLeast),
            "max_at_most" => Ok(LadderRule::MaxAtMost),
            "max_at_least" => Ok(LadderRule::MaxAtLeast),
            _ => Err(CoreError::Parse(format!("unknown ladder rule '{s}'"))),
        }
    }

    /// `values` must be sorted by dimension.
    pub fn select(&self, values: &[(usize, f64)], threshold: f64, slack: f64) -> Option<usize> {
        match self {
            LadderRule::MinAtLeast => values.iter().find(|(_, v)| *v >= threshold - slack).map(|p| p.0),
            LadderRule::MaxAtMost => values.iter().rev().find(|(_, v)| *v <= threshold + slack).map(|p| p.0),
            LadderRule::MaxAtLeast => values.iter().rev().find(|(_, v)| *v >= threshold - slack).map(|p| p.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub task: Task,
    pub direction: Direction,
    pub variant: String,
    pub d0: Option<usize>,
    /// Why d0 is absent.
    pub reason: Option<String>,
    /// log2 d0, the stronger form of the bound.
    #[serde(with = "crate::io::opt_fnum")]
    pub log_d0: Option<f64>,
    /// Closed-form bound in bits; absent when it needs a missing ladder neighbour.
    #[serde(with = "crate::io::opt_fnum")]
    pub bound: Option<f64>,
    /// Measure of the input state fed to the rule, in bits.
    #[serde(with = "crate::io::fnum")]
    pub measure: f64,
    #[serde(with = "crate::io::fnum")]
    pub threshold: f64,
    pub rule: LadderRule,
    /// Per-dimension reference quantity compared against the threshold.
    #[serde(with = "crate::io::pairs")]
    pub ladder_values: Vec<(usize, f64)>,
    #[serde(with = "crate::io::fnum")]
    pub epsilon: f64,
    pub theory: String,
    pub family: String,
    pub estimated: bool,
    pub notes: Vec<String>,
}

impl BoundReport {
    /// Re-derive d0 from the echoed values.
    pub fn recompute_d0(&self, slack: f64) -> Option<usize> {
        self.rule.select(&self.ladder_values, self.threshold, slack)
    }

    fn value_at(&self, d: usize) -> Option<f64> {
        self.ladder_values.iter().find(|p| p.0 == d).map(|p| p.1)
    }
}

/// A channel together with everything checked about it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversionCertificate {
    pub choi: ChannelChoi,
    #[serde(with = "crate::io::fnum")]
    pub min_eig: f64,
    #[serde(with = "crate::io::fnum")]
    pub tp_residual: f64,
    pub freeness_method: String,
    /// Membership residual of the image of each input free extreme point (or probe).
    pub vertex_residuals: Vec<f64>,
    #[serde(with = "crate::io::fnum")]
    pub freeness_residual: f64,
    #[serde(with = "crate::io::opt_fnum")]
    pub commutation_residual: Option<f64>,
    #[serde(with = "crate::io::fnum")]
    pub fidelity: f64,
    #[serde(with = "crate::io::fnum")]
    pub target_fidelity: f64,
    pub construction: String,
    pub valid: bool,
    pub notes: Vec<String>,
}

/// E(w) = Tr(k w) a + Tr(w) b; every construction here has this shape.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub k: CMat,
    pub a: CMat,
    pub b: CMat,
}

impl AffineMap {
    pub fn apply(&self, w: &CMat) -> CMat {
        &self.a * cr(tr_prod(&self.k, w)) + &self.b * w.trace()
    }

    /// J = k^T (x) a + I (x) b.
    pub fn choi(&self) -> ChannelChoi {
        let d_in = self.k.nrows();
        let j = kron(&self.k.transpose(), &self.a) + kron(&CMat::identity(d_in, d_in), &self.b);
        ChannelChoi { d_in, d_out: self.a.nrows(), j }
    }
}

/// Formation map for constant-trace references:
/// E(w) = [(Tr(phi w) - c) rho_e + (1 - Tr(phi w)) delta] / (1 - c).
pub fn ct_formation_map(phi: &CMat, rho_e: &CMat, delta: &CMat, c: f64) -> AffineMap {
    let s = 1.0 / (1.0 - c);
    AffineMap { k: phi.clone(), a: (rho_e - delta) * cr(s), b: (delta - rho_e * cr(c)) * cr(s) }
}

/// E(w) = Tr(k w) rho + (1 - Tr(k w)) delta.
pub fn mixing_map(k: &CMat, rho: &CMat, delta: &CMat) -> AffineMap {
    AffineMap { k: k.clone(), a: rho - delta, b: delta.clone() }
}

/// E(w) = Tr(P w) Phi + (1 - Tr(P w)) (I - Phi)/(d0 - 1).
pub fn isotropic_distillation_map(p: &CMat, phi: &CMat) -> AffineMap {
    let d0 = phi.nrows();
    let rest = (CMat::identity(d0, d0) - phi) * cr(1.0 / (d0 as f64 - 1.0));
    mixing_map(p, phi, &rest)
}

/// Depolarizing map N_p(X) = (1-p) X + p Tr(X) I/d, any p.
pub fn depolarize(x: &CMat, p: f64) -> CMat {
    let d = x.nrows();
    x * cr(1.0 - p) + CMat::identity(d, d) * (x.trace() * (p / d as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub enum FormationLowerVariant {
    Dmax,
    Lr,
    DmaxLambda(RdMapSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub enum FormationAchievableVariant {
    CtMap,
    FfrMap,
    CommCtMap(RdMapSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub enum DistillationUpperVariant {
    Ng,
    Comm(RdMapSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistillationAchievableVariant {
    RobustnessMap,
    IsotropicMap,
    PseudoCommDepol,
    InputErrorRobustness,
    InputErrorIsotropic,
}

impl DistillationAchievableVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            DistillationAchievableVariant::RobustnessMap => "robustness_map",
            DistillationAchievableVariant::IsotropicMap => "isotropic_map",
            DistillationAchievableVariant::PseudoCommDepol => "pseudo_comm_depol",
            DistillationAchievableVariant::InputErrorRobustness => "input_error_robustness",
            DistillationAchievableVariant::InputErrorIsotropic => "input_error_isotropic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        use DistillationAchievableVariant::*;
        [RobustnessMap, IsotropicMap, PseudoCommDepol, InputErrorRobustness, InputErrorIsotropic]
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| CoreError::Parse(format!("unknown distillation variant '{s}'")))
    }
}

/// Free-operation class for the exact oracle.
#[derive(Clone, Debug, PartialEq)]
pub enum OpClass {
    Ng,
    /// Commuting with a linear map, given at the input and output dimensions.
    Comm { lambda_in: RdMapSpec, lambda_out: RdMapSpec },
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps) {
        return Err(CoreError::Precondition(format!("epsilon {eps} outside [0, 1)")));
    }
    Ok(())
}

fn ladder_values(family: &ReferenceFamily, f: impl Fn(usize) -> Result<f64> + Sync) -> Result<Vec<(usize, f64)>> {
    family.ladder().par_iter().map(|&d| f(d).map(|v| (d, v))).collect()
}

/// RD map at dimension d: the given one when it matches, else the theory's.
fn rd_at(theory: &Theory, spec: &RdMapSpec, d: usize) -> Result<RdMapSpec> {
    if spec.dim == d {
        return Ok(spec.clone());
    }
    theory
        .rd_map_at(d)
        .ok_or_else(|| CoreError::Unsupported(format!("theory '{}' has no RD map at d = {d}", theory.id)))
}

fn pure_projector(family: &ReferenceFamily, d: usize) -> Result<CMat> {
    Ok(family.pure_reference(d)?.projector())
}

fn log_ratio(measure: f64, value: f64, d: usize) -> f64 {
    // measure / m with m = value / log d
    if value <= 0.0 {
        return if measure <= 0.0 { 0.0 } else { f64::INFINITY };
    }
    measure * log2(d as f64) / value
}

fn report(
    task: Task,
    direction: Direction,
    variant: &str,
    theory: &Theory,
    family: &ReferenceFamily,
    eps: f64,
) -> BoundReport {
    BoundReport {
        task,
        direction,
        variant: variant.to_string(),
        d0: None,
        reason: None,
        log_d0: None,
        bound: None,
        measure: 0.0,
        threshold: 0.0,
        rule: LadderRule::MinAtLeast,
        ladder_values: Vec::new(),
        epsilon: eps,
        theory: theory.id.clone(),
        family: family.id(),
        estimated: false,
        notes: Vec::new(),
    }
}

fn finish(mut r: BoundReport, slack: f64, no_d0: &str) -> BoundReport {
    r.d0 = r.recompute_d0(slack);
    match r.d0 {
        Some(d) => r.log_d0 = Some(log2(d as f64)),
        None => r.reason = Some(no_d0.to_string()),
    }
    r
}

fn require_ffr(f: &FreeStateSet, what: &str) -> Result<()> {
    if !has_ffr(f) {
        return Err(CoreError::Precondition(format!(
            "{what}: free set at d = {} does not span the state space (affine or lower-dimensional theory), \
             so free robustness is infinite",
            f.dim()
        )));
    }
    Ok(())
}

/// max - min of Tr(k sigma) over the free set.
pub fn ct_spread(k: &CMat, f: &FreeStateSet, ctx: &Ctx) -> Result<f64> {
    let (hi, _, _) = max_overlap(k, f, ctx)?;
    let (lo, _, _) = max_overlap(&(-k), f, ctx)?;
    Ok(hi + lo)
}

fn ct_holds(k: &CMat, f: &FreeStateSet, ctx: &Ctx) -> Result<(bool, f64)> {
    let spread = ct_spread(k, f, ctx)?;
    let tol = if f.extreme_points().is_some() { 1e-10 } else { 1e-6 };
    Ok((spread <= tol, spread))
}

/// Lower bound on the formation cost from a monotone of rho versus the
/// same monotone of the references.
pub fn formation_lower_bound(
    rho: &DensityMatrix,
    theory: &Theory,
    family: &ReferenceFamily,
    eps: f64,
    variant: &FormationLowerVariant,
    ctx: &Ctx,
) -> Result<BoundReport> {
    check_eps(eps)?;
    let n = rho.dim();
    let f = theory.free_set(n)?;
    let (tag, measure) = match variant {
        FormationLowerVariant::Dmax => ("dmax", smooth_measure(rho, &f, eps, &SmoothKind::Dmax, ctx)?.value),
        FormationLowerVariant::Lr => {
            require_ffr(&f, "lr variant")?;
            for &d in family.ladder() {
                require_ffr(&theory.free_set(d)?, "lr variant")?;
            }
            ("lr", smooth_measure(rho, &f, eps, &SmoothKind::Lr, ctx)?.value)
        }
        FormationLowerVariant::DmaxLambda(spec) => {
            let l = rd_at(theory, spec, n)?;
            ("dmax_lambda", smooth_lambda_dmax(rho, &l, eps, ctx)?.value)
        }
    };
    let values = ladder_values(family, |d| {
        let phi = family.reference_state(d)?;
        let fd = theory.free_set(d)?;
        Ok(match variant {
            FormationLowerVariant::Dmax => resource_measure(&phi, &fd, &ResourceKind::Dmax, ctx)?.value,
            FormationLowerVariant::Lr => free_robustness(&phi, &fd, ctx)?.value,
            FormationLowerVariant::DmaxLambda(spec) => {
                let l = rd_at(theory, spec, d)?;
                lambda_measure(&phi, &l, &LambdaKind::Dmax, Some(&fd), ctx)?.value
            }
        })
    })?;
    let mut r = report(Task::Formation, Direction::Lower, tag, theory, family, eps);
    r.measure = measure;
    r.threshold = measure;
    r.rule = LadderRule::MinAtLeast;
    r.ladder_values = values;
    let mut r = finish(r, ctx.tol.ladder, "no ladder dimension reaches the measure of the target");
    if let Some(d) = r.d0 {
        r.bound = Some(log_ratio(measure, r.value_at(d).unwrap(), d).min(log2(d as f64)));
    }
    Ok(r)
}

/// Mix rho_e and delta toward `anchor` until (delta - c rho_e) is PSD.
/// Returns the mixing weight used.
/// Move a smoothed state back inside the fidelity ball around `rho` (solver
/// accuracy can leave it just outside) by mixing it toward `rho`; root
/// fidelity is concave, so the smallest sufficient weight is found by bisection.
fn pull_into_ball(rho_e: &CMat, rho: &CMat, target: f64) -> (CMat, f64) {
    let fid = |m: &CMat| root_fidelity_raw(m, rho).powi(2);
    if fid(rho_e) >= target {
        return (rho_e.clone(), 0.0);
    }
    let mix = |s: f64| rho_e * cr(1.0 - s) + rho * cr(s);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if fid(&mix(mid)) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (mix(hi), hi)
}

fn repair_ct(rho_e: &mut CMat, delta: &mut CMat, c: f64, anchor: &CMat) -> f64 {
    let l0 = min_eig(&(&*delta - &*rho_e * cr(c)));
    if l0 >= 0.0 {
        return 0.0;
    }
    let mu = min_eig(anchor);
    let denom = (1.0 - c) * mu - l0;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = (-l0 / denom * 1.01).min(1.0);
    *rho_e = &*rho_e * cr(1.0 - t) + anchor * cr(t);
    *delta = &*delta * cr(1.0 - t) + anchor * cr(t);
    t
}

/// Residual of `m` as a member of `f`: distance to the state set plus
/// the membership violation of its projection.
fn free_residual(m: &CMat, f: &FreeStateSet, ctx: &Ctx) -> Result<f64> {
    let proj = DensityMatrix::project(m)?;
    let off = frobenius(&(m - proj.matrix()));
    Ok(off + membership(&proj, f, ctx)?.violation)
}

/// Per-vertex (or per-probe) freeness of an affine map, plus the two
/// extreme values of Tr(k sigma) over the input set, which decide
/// freeness completely since the output depends on sigma only through it.
fn affine_freeness(map: &AffineMap, f_in: &FreeStateSet, f_out: &FreeStateSet, ctx: &Ctx) -> Result<(String, Vec<f64>)> {
    let (method, probes) = match f_in.extreme_points() {
        Some(p) => ("vertices", p),
        None => ("probes+range", product_probes()),
    };
    let mut res: Vec<f64> = probes
        .iter()
        .map(|v| free_residual(&map.apply(v), f_out, ctx))
        .collect::<Result<_>>()?;
    if f_in.extreme_points().is_none() {
        let (hi, _, _) = max_overlap(&map.k, f_in, ctx)?;
        let (lo, _, _) = max_overlap(&(-&map.k), f_in, ctx)?;
        for x in [-lo, hi] {
            res.push(free_residual(&(&map.a * cr(x) + &map.b), f_out, ctx)?);
        }
    }
    Ok((method.to_string(), res))
}

/// Freeness evidence for an arbitrary channel: images of the input free
/// set's extreme points (or product probes for the separable set).
pub fn verify_freeness(e: &ChannelChoi, f_in: &FreeStateSet, f_out: &FreeStateSet, ctx: &Ctx) -> Result<Vec<f64>> {
    if e.d_in != f_in.dim() || e.d_out != f_out.dim() {
        return Err(CoreError::Dimension { expected: f_in.dim(), got: e.d_in });
    }
    let probes = f_in.extreme_points().unwrap_or_else(product_probes);
    probes.iter().map(|v| free_residual(&e.apply(v), f_out, ctx)).collect()
}

/// Pull the smoothed state into the ball, then restore delta >= c rho_e by
/// mixing both toward `anchor`; retried with a growing fidelity margin.
/// `partner` recomputes delta from rho_e when the two are linked; otherwise
/// delta is a free state and only the anchor mixing may touch it.
#[allow(clippy::too_many_arguments)]
fn repaired_ct(
    rho_e: &CMat,
    delta: &CMat,
    rho: &CMat,
    eps: f64,
    c: f64,
    anchor: &CMat,
    partner: Option<&dyn Fn(&CMat) -> CMat>,
    ctx: &Ctx,
    notes: &mut Vec<String>,
) -> (CMat, CMat) {
    let mut last = (rho_e.clone(), delta.clone());
    for margin in [0.0, 1e-10, 1e-9, 1e-8, 1e-7] {
        let (mut r, s) = pull_into_ball(rho_e, rho, (1.0 - eps + margin).min(1.0));
        let mut d = partner.map_or_else(|| delta.clone(), |p| p(&r));
        let t = repair_ct(&mut r, &mut d, c, anchor);
        let f = root_fidelity_raw(&r, rho).powi(2);
        let done = f >= 1.0 - eps - 0.5 * ctx.tol.fidelity;
        if done || margin == 1e-7 {
            if s > 0.0 {
                notes.push(format!("pulled smoothed state toward the input by {s:.3e}"));
            }
            if t > 0.0 {
                notes.push(format!("mixed smoothed state and partner toward the anchor by {t:.3e}"));
            }
        }
        last = (r, d);
        if done {
            break;
        }
    }
    last
}

#[allow(clippy::too_many_arguments)]
fn certify(
    map: &AffineMap,
    input: &CMat,
    target: &CMat,
    eps: f64,
    f_in: &FreeStateSet,
    f_out: &FreeStateSet,
    comm: Option<(&dyn Fn(&CMat) -> CMat, &dyn Fn(&CMat) -> CMat)>,
    construction: &str,
    notes: Vec<String>,
    ctx: &Ctx,
) -> Result<ConversionCertificate> {
    let choi = map.choi();
    let ch = choi.validate(&ctx.tol);
    let (method, residuals) = affine_freeness(map, f_in, f_out, ctx)?;
    let freeness_residual = residuals.iter().cloned().fold(0.0, f64::max);
    let commutation_residual = comm.map(|(li, lo)| commutation_residual(&choi, li, lo));
    let out = DensityMatrix::project(&map.apply(input))?;
    let fid = fidelity(&out, &DensityMatrix::project(target)?)?;
    let target_fidelity = 1.0 - eps;
    let tol = &ctx.tol;
    let valid = ch.min_eig >= -tol.psd
        && ch.tp_residual <= tol.tp
        && freeness_residual <= tol.freeness
        && commutation_residual.map_or(true, |c| c <= tol.commutation)
        && fid >= target_fidelity - tol.fidelity;
    let cert = ConversionCertificate {
        choi,
        min_eig: ch.min_eig,
        tp_residual: ch.tp_residual,
        freeness_method: method,
        vertex_residuals: residuals,
        freeness_residual,
        commutation_residual,
        fidelity: fid,
        target_fidelity,
        construction: construction.to_string(),
        valid,
        notes,
    };
    if !valid {
        return Err(CoreError::Certificate(format!(
            "{construction}: min eig {:.3e}, TP residual {:.3e}, freeness {:.3e}, commutation {:?}, fidelity {:.12} vs {:.12}",
            cert.min_eig, cert.tp_residual, cert.freeness_residual, cert.commutation_residual, cert.fidelity, target_fidelity
        )));
    }
    Ok(cert)
}

/// Achievable formation cost with the explicit map and its certificate.
/// The certificate is absent exactly when no ladder dimension qualifies.
pub fn formation_achievable(
    rho: &DensityMatrix,
    theory: &Theory,
    family: &ReferenceFamily,
    eps: f64,
    variant: &FormationAchievableVariant,
    ctx: &Ctx,
) -> Result<(BoundReport, Option<ConversionCertificate>)> {
    check_eps(eps)?;
    let n = rho.dim();
    let f = theory.free_set(n)?;
    let projectors: Vec<(usize, CMat)> =
        family.ladder().iter().map(|&d| pure_projector(family, d).map(|p| (d, p))).collect::<Result<_>>()?;
    match variant {
        FormationAchievableVariant::CtMap | FormationAchievableVariant::CommCtMap(_) => {
            for (d, p) in &projectors {
                let (ok, spread) = ct_holds(p, &theory.free_set(*d)?, ctx)?;
                if !ok {
                    return Err(CoreError::Precondition(format!(
                        "constant-trace condition fails at d = {d} (spread {spread:.3e})"
                    )));
                }
            }
        }
        FormationAchievableVariant::FfrMap => require_ffr(&f, "ffr_map")?,
    }
    let (tag, rep) = match variant {
        FormationAchievableVariant::CtMap => ("ct_map", smooth_measure(rho, &f, eps, &SmoothKind::Dmax, ctx)?),
        FormationAchievableVariant::FfrMap => ("ffr_map", smooth_measure(rho, &f, eps, &SmoothKind::Lr, ctx)?),
        FormationAchievableVariant::CommCtMap(spec) => {
            let l = rd_at(theory, spec, n)?;
            if l.is_pseudo {
                return Err(CoreError::Precondition("comm_ct_map needs an RD map that fixes free states".into()));
            }
            let mut r = smooth_lambda_dmax(rho, &l, eps, ctx)?;
            if r.optimizer.smoothed_state.is_none() {
                r.optimizer.smoothed_state = Some(rho.matrix().clone());
            }
            ("comm_ct_map", r)
        }
    };
    let values = ladder_values(family, |d| {
        let phi = family.reference_state(d)?;
        Ok(-log2(free_fidelity(&phi, &theory.free_set(d)?, ctx)?.value))
    })?;
    let mut r = report(Task::Formation, Direction::Upper, tag, theory, family, eps);
    r.measure = rep.value;
    r.threshold = rep.value;
    r.rule = LadderRule::MinAtLeast;
    r.ladder_values = values;
    let mut r = finish(r, ctx.tol.ladder, "no ladder reference has enough free infidelity");
    let Some(d0) = r.d0 else { return Ok((r, None)) };
    if let Some(dd) = family.down(d0) {
        r.bound = Some(log_ratio(rep.value, r.value_at(dd).unwrap(), dd) + log2(d0 as f64 / dd as f64));
    }
    let phi = projectors.iter().find(|p| p.0 == d0).unwrap().1.clone();
    let f_in = theory.free_set(d0)?;
    let c = 2f64.powf(-r.value_at(d0).unwrap());
    let rho_e = DensityMatrix::project(rep.optimizer.smoothed_state.as_ref().unwrap_or(rho.matrix()))?.into_matrix();
    let mut notes = Vec::new();
    let cert = match variant {
        FormationAchievableVariant::CtMap => {
            if c >= 1.0 - 1e-12 {
                return Err(CoreError::Precondition(format!("reference at d = {d0} is free")));
            }
            let delta = DensityMatrix::project(
                rep.optimizer.free_state.as_ref().ok_or_else(|| CoreError::Solver("no optimal free state".into()))?,
            )?
            .into_matrix();
            let (rho_e, delta) = repaired_ct(&rho_e, &delta, rho.matrix(), eps, c, &f.center(), None, ctx, &mut notes);
            let map = ct_formation_map(&phi, &rho_e, &delta, c);
            certify(&map, &phi, rho.matrix(), eps, &f_in, &f, None, "ct_map", notes, ctx)?
        }
        FormationAchievableVariant::FfrMap => {
            let delta = match &rep.optimizer.delta {
                Some(dl) => DensityMatrix::project(dl)?.into_matrix(),
                None => rho_e.clone(),
            };
            let big_r = rep.optimizer.robustness.unwrap_or(0.0);
            let s = (1.0 / ((1.0 + big_r) * c)).min(1.0);
            if s < 1.0 {
                notes.push(format!("shrank the resource weight by {:.3e}", 1.0 - s));
            }
            let mut map = mixing_map(&phi, &rho_e, &delta);
            map.a *= cr(s);
            certify(&map, &phi, rho.matrix(), eps, &f_in, &f, None, "ffr_map", notes, ctx)?
        }
        FormationAchievableVariant::CommCtMap(spec) => {
            let l_out = rd_at(theory, spec, n)?;
            let l_in = rd_at(theory, spec, d0)?;
            let anchor = l_out.apply(&(CMat::identity(n, n) * cr(1.0 / n as f64)));
            let lam = l_out.apply(&rho_e);
            let (rho_e, _) = repaired_ct(&rho_e, &lam, rho.matrix(), eps, c, &anchor, Some(&|x: &CMat| l_out.apply(x)), ctx, &mut notes);
            let lam = l_out.apply(&rho_e);
            let map = ct_formation_map(&phi, &rho_e, &lam, c);
            let li = |x: &CMat| l_in.apply(x);
            let lo = |x: &CMat| l_out.apply(x);
            certify(&map, &phi, rho.matrix(), eps, &f_in, &f, Some((&li, &lo)), "comm_ct_map", notes, ctx)?
        }
    };
    Ok((r, Some(cert)))
}

/// Upper bound on the distillation yield.
pub fn distillation_upper_bound(
    rho: &DensityMatrix,
    theory: &Theory,
    family: &ReferenceFamily,
    eps: f64,
    variant: &DistillationUpperVariant,
    ctx: &Ctx,
) -> Result<BoundReport> {
    check_eps(eps)?;
    let n = rho.dim();
    let f = theory.free_set(n)?;
    for &d in family.ladder() {
        family.pure_reference(d)?;
    }
    match variant {
        DistillationUpperVariant::Ng => {
            let dh = resource_measure(rho, &f, &ResourceKind::Dh(eps), ctx)?.value;
            let values = ladder_values(family, |d| {
                let phi = family.reference_state(d)?;
                Ok(-log2(free_fidelity(&phi, &theory.free_set(d)?, ctx)?.value))
            })?;
            let mut r = report(Task::Distillation, Direction::Upper, "ng", theory, family, eps);
            r.measure = dh;
            r.threshold = dh;
            r.rule = LadderRule::MaxAtMost;
            r.ladder_values = values;
            let mut r = finish(r, ctx.tol.ladder, "every reference has more free infidelity than the hypothesis-testing measure");
            if let Some(d) = r.d0 {
                r.bound = Some(log_ratio(dh, r.value_at(d).unwrap(), d));
            }
            Ok(r)
        }
        DistillationUpperVariant::Comm(spec) => {
            let l = rd_at(theory, spec, n)?;
            if !l.is_channel || l.is_pseudo || !l.is_linear() {
                return Err(CoreError::Precondition(format!(
                    "comm variant needs a linear RD channel; {} is not one",
                    l.name()
                )));
            }
            let lr = DensityMatrix::project(&l.apply(rho.matrix()))?;
            let dh = d_hypothesis(rho, &lr, eps, ctx)?.value;
            let thr = 2f64.powf(-dh) - 2.0 * eps.sqrt();
            let values = ladder_values(family, |d| {
                let phi = family.pure_reference(d)?;
                let ld = rd_at(theory, spec, d)?;
                Ok(phi.expect(&ld.apply(&phi.projector())))
            })?;
            let mut r = report(Task::Distillation, Direction::Upper, "comm", theory, family, eps);
            r.measure = dh;
            r.threshold = thr;
            r.rule = LadderRule::MaxAtLeast;
            r.ladder_values = values;
            if thr <= 0.0 {
                r.reason = Some("2^-D_H,lambda - 2 sqrt(eps) <= 0: unbounded by this criterion".into());
                r.bound = Some(f64::INFINITY);
                return Ok(r);
            }
            let mut r = finish(r, ctx.tol.ladder, "no reference keeps enough lambda-fidelity");
            if let Some(d) = r.d0 {
                r.bound = Some(log_ratio(-log2(thr), -log2(r.value_at(d).unwrap()), d));
            }
            Ok(r)
        }
    }
}

/// min p with (1-p) Phi + p I/d in the free set.
pub fn isotropic_threshold(phi: &CMat, f: &FreeStateSet, ctx: &Ctx) -> Result<f64> {
    let d = phi.nrows();
    let mut b = Builder::new();
    let p = b.scalar();
    let cv = b.cone_element(f)?;
    let mut e = cv.expr(d);
    e.add_scalar(p, phi - CMat::identity(d, d) * cr(1.0 / d as f64));
    b.pin(&e, phi)?;
    b.minimize(&LinearExpr::new().scalar(p, 1.0))?;
    let rep = b.solve_optimal(ctx, "isotropic threshold")?;
    Ok(rep.scalars[p].clamp(0.0, 1.0))
}

struct Isotropic {
    /// (d, p~_d) over D'.
    eligible: Vec<(usize, f64)>,
}

fn isotropic_ladder(theory: &Theory, family: &ReferenceFamily, n: usize, ctx: &Ctx) -> Result<Isotropic> {
    let mixed_free = |d: usize| -> Result<bool> {
        let f = theory.free_set(d)?;
        Ok(membership(&DensityMatrix::maximally_mixed(d), &f, ctx)?.inside)
    };
    if !mixed_free(n)? {
        return Err(CoreError::Precondition(format!("maximally mixed state is not free at d = {n}")));
    }
    let mut eligible = Vec::new();
    for &d in family.ladder() {
        let phi = pure_projector(family, d)?;
        let f = theory.free_set(d)?;
        if !mixed_free(d)? {
            continue;
        }
        let anti = DensityMatrix::project(&((CMat::identity(d, d) - &phi) * cr(1.0 / (d as f64 - 1.0))))?;
        if membership(&anti, &f, ctx)?.inside {
            eligible.push((d, isotropic_threshold(&phi, &f, ctx)?));
        }
    }
    if eligible.is_empty() {
        return Err(CoreError::Precondition(
            "D' is empty: (I - Phi_d)/(d - 1) is not free for any ladder dimension".into(),
        ));
    }
    Ok(Isotropic { eligible })
}

fn clamp_test(p: &CMat) -> CMat {
    herm_fn(&hermitian_part(p), |x| x.clamp(0.0, 1.0))
}

/// Achievable distillation yield with the explicit map and its certificate.
pub fn distillation_achievable(
    rho: &DensityMatrix,
    theory: &Theory,
    family: &ReferenceFamily,
    eps: f64,
    variant: DistillationAchievableVariant,
    ctx: &Ctx,
) -> Result<(BoundReport, Option<ConversionCertificate>)> {
    use DistillationAchievableVariant::*;
    check_eps(eps)?;
    let n = rho.dim();
    let f = theory.free_set(n)?;
    let input_error = matches!(variant, InputErrorRobustness | InputErrorIsotropic);
    if input_error && !rho.is_pure(1e-9) {
        return Err(CoreError::Precondition("input-error variants need a pure input state".into()));
    }
    let robust = matches!(variant, RobustnessMap | InputErrorRobustness);
    if robust {
        require_ffr(&f, variant.as_str())?;
        for &d in family.ladder() {
            require_ffr(&theory.free_set(d)?, variant.as_str())?;
        }
    }
    let iso = if robust { None } else { Some(isotropic_ladder(theory, family, n, ctx)?) };

    // test operator and the measure it certifies
    let (measure, p_op) = if input_error {
        let v = resource_measure(rho, &f, &ResourceKind::Dmin, ctx)?.value;
        (v, rho.top_vector().projector())
    } else {
        let rep = resource_measure(rho, &f, &ResourceKind::Dh(eps), ctx)?;
        let p = rep.optimizer.test_operator.clone().unwrap_or_else(|| support_projector(rho, ctx.tol.rank));
        (rep.value, clamp_test(&p))
    };
    if variant == PseudoCommDepol {
        let need = n as f64 / iso.as_ref().unwrap().eligible.last().unwrap().0 as f64;
        let tr = trace_re(&p_op);
        // checked again at d0 below; reject early when no eligible d can work
        if !iso.as_ref().unwrap().eligible.iter().any(|(d, _)| (tr - n as f64 / *d as f64).abs() <= 1e-6) {
            return Err(CoreError::Precondition(format!(
                "optimal test operator has Tr P = {tr:.9}; commutation with depolarizing needs Tr P = d_in/d0 (e.g. {need})"
            )));
        }
    }

    let task = if input_error { Task::DistillationInputError } else { Task::Distillation };
    let mut r = report(task, Direction::Lower, variant.as_str(), theory, family, eps);
    r.measure = measure;
    let (values, rule, threshold) = match variant {
        RobustnessMap => (
            ladder_values(family, |d| free_robustness(&family.reference_state(d)?, &theory.free_set(d)?, ctx).map(|m| m.value))?,
            LadderRule::MaxAtMost,
            measure,
        ),
        InputErrorRobustness => (
            ladder_values(family, |d| {
                free_robustness(&family.reference_state(d)?, &theory.free_set(d)?, ctx).map(|m| 2f64.powf(-m.value))
            })?,
            LadderRule::MaxAtLeast,
            2f64.powf(-measure) + 2.0 * eps.sqrt(),
        ),
        IsotropicMap | PseudoCommDepol => (
            iso.as_ref()
                .unwrap()
                .eligible
                .iter()
                .map(|&(d, p)| (d, -log2(1.0 - p + p / d as f64)))
                .collect(),
            LadderRule::MaxAtMost,
            measure,
        ),
        InputErrorIsotropic => (
            iso.as_ref().unwrap().eligible.iter().map(|&(d, p)| (d, 1.0 - p + p / d as f64)).collect(),
            LadderRule::MaxAtLeast,
            2f64.powf(-measure) + 2.0 * eps.sqrt(),
        ),
    };
    r.ladder_values = values;
    r.rule = rule;
    r.threshold = threshold;
    let mut r = finish(r, ctx.tol.ladder, "no ladder reference is reachable under this construction's rule");
    let Some(d0) = r.d0 else { return Ok((r, None)) };

    // bound expression with the next ladder dimension up
    let up = match variant {
        IsotropicMap | PseudoCommDepol | InputErrorIsotropic => {
            let el = &iso.as_ref().unwrap().eligible;
            el.iter().position(|p| p.0 == d0).and_then(|i| el.get(i + 1)).map(|p| p.0)
        }
        _ => family.up(d0),
    };
    if let Some(du) = up {
        let v = r.value_at(du).unwrap();
        let (num, bits) = match rule {
            LadderRule::MaxAtLeast => (-log2(threshold), -log2(v)),
            _ => (measure, v),
        };
        r.bound = Some(log_ratio(num, bits, du) - log2(du as f64 / d0 as f64));
    }

    let phi = family.reference_state(d0)?.into_matrix();
    let f_out = theory.free_set(d0)?;
    let mut notes = Vec::new();
    let (mut map, x_crit) = if robust {
        let fr = free_robustness(&DensityMatrix::project(&phi)?, &f_out, ctx)?;
        let big_r = fr.optimizer.robustness.unwrap_or(0.0);
        let delta = match &fr.optimizer.delta {
            Some(dl) => DensityMatrix::project(dl)?.into_matrix(),
            None => phi.clone(),
        };
        (mixing_map(&p_op, &phi, &delta), 1.0 / (1.0 + big_r))
    } else {
        let pt = iso.as_ref().unwrap().eligible.iter().find(|p| p.0 == d0).unwrap().1;
        (isotropic_distillation_map(&p_op, &phi), 1.0 - pt + pt / d0 as f64)
    };
    // free inputs must keep Tr(P sigma) at or below the critical overlap
    let (x_max, _, _) = max_overlap(&map.k, &f, ctx)?;
    if x_max > x_crit {
        let s = x_crit / x_max;
        notes.push(format!("scaled the test operator by {s:.12}"));
        map.k *= cr(s);
    }
    let p_deg = match theory.rd_map_at(d0).map(|m| m.kind) {
        Some(RdMapKind::DepolarizingPseudo { p }) => p,
        _ => iso.as_ref().map_or(0.5, |i| i.eligible.iter().find(|p| p.0 == d0).unwrap().1),
    };
    let comm = variant == PseudoCommDepol || variant == InputErrorIsotropic;
    if variant == PseudoCommDepol {
        let tr = trace_re(&map.k);
        let need = n as f64 / d0 as f64;
        if (tr - need).abs() > 1e-6 {
            return Err(CoreError::Precondition(format!(
                "optimal test operator has Tr P = {tr:.9}; commutation with depolarizing needs Tr P = d_in/d0 = {need}"
            )));
        }
    }
    let li = move |x: &CMat| depolarize(x, p_deg);
    let lo = move |x: &CMat| depolarize(x, p_deg);
    let comm_pair: Option<(&dyn Fn(&CMat) -> CMat, &dyn Fn(&CMat) -> CMat)> =
        if comm && n == d0 { Some((&li, &lo)) } else { None };
    if comm && n != d0 {
        notes.push("input and output dimensions differ; depolarizing commutation not checked".into());
    }
    let cert = certify(&map, rho.matrix(), &phi, if input_error { 0.0 } else { eps }, &f, &f_out, comm_pair, variant.as_str(), notes, ctx)?;
    Ok((r, Some(cert)))
}

/// Outcome of the exact conversion program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// Maximized root fidelity sqrt f(E(rho_in), target).
    #[serde(with = "crate::io::fnum")]
    pub root_fidelity: f64,
    /// Root fidelity recomputed from the returned Choi matrix.
    #[serde(with = "crate::io::opt_fnum")]
    pub witness_root_fidelity: Option<f64>,
    pub witness: Option<ChannelChoi>,
    /// Freeness on a separable input set is only imposed on probes: an
    /// infeasible verdict is conclusive, a feasible one is a relaxation.
    pub one_sided: bool,
}

/// Whether some free channel maps rho_in into the fidelity ball of target.
pub fn exact_conversion_feasible(
    rho_in: &DensityMatrix,
    target: &DensityMatrix,
    eps: f64,
    f_in: &FreeStateSet,
    f_out: &FreeStateSet,
    op: &OpClass,
    ctx: &Ctx,
) -> Result<Feasibility> {
    check_eps(eps)?;
    let (a, bdim) = (rho_in.dim(), target.dim());
    if f_in.dim() != a || f_out.dim() != bdim {
        return Err(CoreError::Dimension { expected: f_in.dim(), got: a });
    }
    let mut b = Builder::new();
    let j = b.block(a * bdim);
    let image = |x: &CMat| {
        let mut e = HExpr::zero(bdim);
        e.add_block(j, channel_adj(x));
        e
    };
    // trace preservation: Tr_out J = I
    let mut tp = HExpr::zero(a);
    tp.add_block(j, Rc::new(move |g: &CMat| kron(g, &CMat::identity(bdim, bdim))));
    b.pin(&tp, &CMat::identity(a, a))?;
    let (probes, one_sided) = match f_in.extreme_points() {
        Some(p) => (p, false),
        None => (product_probes(), true),
    };
    for v in &probes {
        b.in_cone(&image(v), f_out)?;
    }
    if let OpClass::Comm { lambda_in, lambda_out } = op {
        if lambda_in.dim != a || lambda_out.dim != bdim {
            return Err(CoreError::Dimension { expected: a, got: lambda_in.dim });
        }
        for g in hermitian_basis(a) {
            let lo = lambda_out.clone();
            let lo2 = lambda_out.clone();
            let mut e = image(&g).mapped(bdim, move |m| lo.apply(m), Rc::new(move |h: &CMat| lo2.adjoint(h)));
            e.add(&image(&lambda_in.apply(&g)).scaled(-1.0));
            b.pin_zero(&e)?;
        }
    }
    let out = image(rho_in.matrix());
    let pure = target.is_pure(1e-9);
    if pure {
        let (lin, _) = out.functional(&(-target.matrix()));
        b.minimize(&lin)?;
    } else {
        let w = b.block(2 * bdim);
        let mut diff = corner_tl(w, bdim);
        diff.add(&out.scaled(-1.0));
        b.pin_zero(&diff)?;
        b.pin(&corner_br(w, bdim), target.matrix())?;
        b.minimize(&LinearExpr::new().block(w, -re_trace_offdiag(bdim)))?;
    }
    let rep = b.solve(ctx)?;
    if rep.status != Status::Optimal {
        return Err(CoreError::Solver(format!("conversion program: status {}", rep.status.as_str())));
    }
    let root = if pure { (-rep.objective).clamp(0.0, 1.0).sqrt() } else { (-rep.objective).clamp(0.0, 1.0) };
    let jm = hermitian_part(&rep.blocks[j]);
    let witness = ChannelChoi::new(a, bdim, jm)?;
    let wout = DensityMatrix::project(&witness.apply(rho_in.matrix()))?;
    let wroot = root_fidelity(&wout, target)?;
    let feasible = root >= (1.0 - eps).sqrt() - ctx.tol.feasibility;
    Ok(Feasibility {
        feasible,
        root_fidelity: root,
        witness_root_fidelity: Some(wroot),
        witness: feasible.then_some(witness),
        one_sided,
    })
}

fn op_class_at(theory: &Theory, op: &OpClass, d_in: usize, d_out: usize) -> Result<OpClass> {
    Ok(match op {
        OpClass::Ng => OpClass::Ng,
        OpClass::Comm { lambda_in, .. } => {
            let li = rd_at(theory, lambda_in, d_in)?;
            let lo = rd_at(theory, lambda_in, d_out)?;
            if !li.is_linear() || !lo.is_linear() {
                return Err(CoreError::Unsupported("exact oracle needs a linear map".into()));
            }
            OpClass::Comm { lambda_in: li, lambda_out: lo }
        }
    })
}

/// Exact one-shot rate by scanning the ladder with the conversion oracle.
pub fn one_shot_rate_exact(
    rho: &DensityMatrix,
    theory: &Theory,
    family: &ReferenceFamily,
    eps: f64,
    task: Task,
    op: &OpClass,
    ctx: &Ctx,
) -> Result<BoundReport> {
    check_eps(eps)?;
    let n = rho.dim();
    let f = theory.free_set(n)?;
    let mut r = report(task, Direction::Exact, "oracle", theory, family, eps);
    r.threshold = (1.0 - eps).sqrt();
    let mut values = Vec::new();
    let mut one_sided = false;
    match task {
        Task::Formation => {
            r.rule = LadderRule::MinAtLeast;
            for &d in family.ladder() {
                let phi = family.reference_state(d)?;
                let fd = theory.free_set(d)?;
                let res = exact_conversion_feasible(&phi, rho, eps, &fd, &f, &op_class_at(theory, op, d, n)?, ctx)?;
                one_sided |= res.one_sided;
                values.push((d, res.root_fidelity));
                if res.feasible {
                    break;
                }
            }
        }
        Task::Distillation => {
            r.rule = LadderRule::MaxAtLeast;
            for &d in family.ladder().iter().rev() {
                let phi = family.reference_state(d)?;
                let fd = theory.free_set(d)?;
                let res = exact_conversion_feasible(rho, &phi, eps, &f, &fd, &op_class_at(theory, op, n, d)?, ctx)?;
                one_sided |= res.one_sided;
                values.push((d, res.root_fidelity));
                if res.feasible {
                    break;
                }
            }
            values.reverse();
        }
        Task::DistillationInputError => {
            return Err(CoreError::Unsupported("exact oracle covers output-error tasks only".into()));
        }
    }
    if one_sided {
        r.notes.push("separable input set relaxed to probes: feasible verdicts are one-sided".into());
    }
    r.ladder_values = values;
    let mut r = finish(r, ctx.tol.feasibility, "no ladder dimension admits the conversion");
    r.bound = r.log_d0;
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub task: Task,
    /// log2 d values; None means no ladder dimension qualified.
    #[serde(with = "crate::io::opt_fnum")]
    pub lower: Option<f64>,
    #[serde(with = "crate::io::opt_fnum")]
    pub exact: Option<f64>,
    #[serde(with = "crate::io::opt_fnum")]
    pub upper: Option<f64>,
    pub ordered: bool,
    #[serde(with = "crate::io::fnum")]
    pub slack: f64,
    pub diagnostic: Option<String>,
    pub reports: Vec<BoundReport>,
}

/// Check bound <= exact <= bound for one instance.
pub fn sandwich_check(
    rho: &DensityMatrix,
    theory: &Theory,
    family: &ReferenceFamily,
    eps: f64,
    task: Task,
    ctx: &Ctx,
) -> Result<SandwichReport> {
    let slack = 1e-6;
    let n = rho.dim();
    let f = theory.free_set(n)?;
    let mut reports = Vec::new();
    let (lower, exact, upper, ordered) = match task {
        Task::Formation => {
            let lo = formation_lower_bound(rho, theory, family, eps, &FormationLowerVariant::Dmax, ctx)?;
            let ct = family
                .ladder()
                .iter()
                .map(|&d| Ok(ct_holds(&pure_projector(family, d)?, &theory.free_set(d)?, ctx)?.0))
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .all(|x| x);
            let variant = if ct {
                FormationAchievableVariant::CtMap
            } else if has_ffr(&f) {
                FormationAchievableVariant::FfrMap
            } else {
                return Err(CoreError::Unsupported("no achievable formation construction applies".into()));
            };
            let (up, _) = formation_achievable(rho, theory, family, eps, &variant, ctx)?;
            let ex = one_shot_rate_exact(rho, theory, family, eps, task, &OpClass::Ng, ctx)?;
            // absent values mean "beyond the ladder": +inf for formation
            let inf = |x: Option<f64>| x.unwrap_or(f64::INFINITY);
            let ordered =
                inf(lo.log_d0) <= inf(ex.log_d0) + slack && inf(ex.log_d0) <= inf(up.log_d0) + slack;
            let t = (lo.log_d0, ex.log_d0, up.log_d0, ordered);
            reports.extend([lo, ex, up]);
            t
        }
        Task::Distillation => {
            let up = distillation_upper_bound(rho, theory, family, eps, &DistillationUpperVariant::Ng, ctx)?;
            let mut best: Option<BoundReport> = None;
            for v in [DistillationAchievableVariant::RobustnessMap, DistillationAchievableVariant::IsotropicMap] {
                match distillation_achievable(rho, theory, family, eps, v, ctx) {
                    Ok((rep, _)) => {
                        if best.as_ref().map_or(true, |b| rep.log_d0.unwrap_or(f64::NEG_INFINITY) > b.log_d0.unwrap_or(f64::NEG_INFINITY)) {
                            best = Some(rep);
                        }
                    }
                    Err(CoreError::Precondition(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            let lo = best.ok_or_else(|| CoreError::Unsupported("no achievable distillation construction applies".into()))?;
            let ex = one_shot_rate_exact(rho, theory, family, eps, task, &OpClass::Ng, ctx)?;
            let ninf = |x: Option<f64>| x.unwrap_or(f64::NEG_INFINITY);
            let ordered =
                ninf(lo.log_d0) <= ninf(ex.log_d0) + slack && ninf(ex.log_d0) <= ninf(up.log_d0) + slack;
            let t = (lo.log_d0, ex.log_d0, up.log_d0, ordered);
            reports.extend([lo, ex, up]);
            t
        }
        Task::DistillationInputError => {
            return Err(CoreError::Unsupported("sandwich covers output-error tasks only".into()));
        }
    };
    let diagnostic = (!ordered).then(|| {
        let show = |x: Option<f64>| x.map_or("none".to_string(), |v| format!("{v:.9}"));
        let detail: Vec<String> = reports
            .iter()
            .map(|r| format!("{} {}: measure {:.9}, values {:?}", r.variant, r.direction.as_str(), r.measure, r.ladder_values))
            .collect();
        format!(
            "ordering violated: lower {}, exact {}, upper {}; {}",
            show(lower),
            show(exact),
            show(upper),
            detail.join("; ")
        )
    });
    Ok(SandwichReport { task, lower, exact, upper, ordered, slack, diagnostic, reports })
}

/// Random incoherent operation: Kraus operators with one nonzero entry per
/// column, normalized column-wise.
pub fn random_incoherent_channel<R: Rng>(d_in: usize, d_out: usize, rng: &mut R) -> ChannelChoi {
    let m = rng.gen_range(1..=3);
    let mut kraus: Vec<CMat> = Vec::new();
    for _ in 0..m {
        let mut k = CMat::zeros(d_out, d_in);
        for i in 0..d_in {
            let row = rng.gen_range(0..d_out);
            k[(row, i)] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        // split non-injective columns into separate operators
        for i in 0..d_in {
            let mut single = CMat::zeros(d_out, d_in);
            single[(rng.gen_range(0..d_out), i)] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            kraus.push(single);
        }
        if d_in <= d_out {
            // an injective operator keeps coherence
            let mut perm: Vec<usize> = (0..d_out).collect();
            for i in (1..d_out).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let mut inj = CMat::zeros(d_out, d_in);
            for i in 0..d_in {
                inj[(perm[i], i)] = c(rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0));
            }
            kraus.push(inj);
        }
    }
    // K^dag K is diagonal for all these operators; normalize per column
    let mut norms = vec![0.0; d_in];
    for k in &kraus {
        for i in 0..d_in {
            norms[i] += k.column(i).norm_squared();
        }
    }
    for k in kraus.iter_mut() {
        for i in 0..d_in {
            let s = norms[i].sqrt();
            k.column_mut(i).scale_mut(1.0 / s);
        }
    }
    ChannelChoi::from_kraus(&kraus)
}

fn hadamard() -> CMat {
    let s = 1.0 / 2f64.sqrt();
    CMat::from_row_slice(2, 2, &[cr(s), cr(s), cr(s), cr(-s)])
}

fn phase_gate() -> CMat {
    CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, c(0.0, 1.0)])
}

/// Random single-qubit Clifford as a word in H and S.
pub fn random_clifford<R: Rng>(rng: &mut R) -> CMat {
    let mut u = CMat::identity(2, 2);
    for _ in 0..rng.gen_range(1..8) {
        u = if rng.gen_bool(0.5) { hadamard() * u } else { phase_gate() * u };
    }
    u
}

/// Random stabilizer-preserving qubit channel: a mixture of Clifford
/// unitaries, Pauli noise and Pauli measure-and-prepare maps.
pub fn random_stabilizer_channel<R: Rng>(rng: &mut R) -> ChannelChoi {
    let stab = pauli_eigenstates();
    let paulis = {
        let [x, y, z] = pauli();
        [CMat::identity(2, 2), x, y, z]
    };
    let parts = rng.gen_range(1..=3);
    let mut weights: Vec<f64> = (0..parts).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut j = CMat::zeros(4, 4);
    for w in weights {
        let ch = match rng.gen_range(0..3) {
            0 => ChannelChoi::unitary(&random_clifford(rng)),
            1 => {
                let mut q: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
                let s: f64 = q.iter().sum();
                q.iter_mut().for_each(|x| *x /= s);
                let kraus: Vec<CMat> = paulis.iter().zip(&q).map(|(p, &x)| p * cr(x.sqrt())).collect();
                ChannelChoi::from_kraus(&kraus)
            }
            _ => {
                // measure in a Pauli basis, prepare stabilizer states
                let axis = rng.gen_range(0..3);
                let (p0, p1) = (stab[2 * axis].clone(), stab[2 * axis + 1].clone());
                let (s0, s1) = (stab[rng.gen_range(0..6)].clone(), stab[rng.gen_range(0..6)].clone());
                ChannelChoi::from_map(2, 2, |x| &s0 * cr(tr_prod(&p0, x)) + &s1 * cr(tr_prod(&p1, x)))
            }
        };
        j += ch.j * cr(w);
    }
    ChannelChoi { d_in: 2, d_out: 2, j }
}
