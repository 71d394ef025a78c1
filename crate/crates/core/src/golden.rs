//! Golden-state search and collapse verification.

use std::collections::BTreeMap;

use oneshot_conic::{LinearExpr, Status};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::measures::{
    free_robustness, modification_coefficient, resource_measure, CoefficientKind, ModCoefficient, ResourceKind,
};
use crate::programs::Builder;
use crate::quantum::*;
use crate::tasks::{
    ct_spread, exact_conversion_feasible, formation_achievable, ConversionCertificate, FormationAchievableVariant,
    OpClass,
};
use crate::theories::{
    bell_state, gibbs_weights, has_ffr, top_level, Constructor, FreeStateSet, LadderSpec, RdMapSpec, ReferenceFamily,
    Theory,
};
use crate::tolerance::Ctx;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldenReport {
    pub state: PureState,
    pub d: usize,
    /// g_d, the free-fidelity coefficient of `state`.
    #[serde(with = "crate::io::fnum")]
    pub g: f64,
    pub coefficients: Vec<ModCoefficient>,
    /// Max pairwise difference between the coefficients.
    #[serde(with = "crate::io::fnum")]
    pub collapse_residual: f64,
    pub collapse: bool,
    /// Log-robustness coefficient and whether it coincides with the others.
    #[serde(with = "crate::io::opt_fnum")]
    pub lr: Option<f64>,
    pub lr_coincides: Option<bool>,
    pub starts: usize,
    pub converged: bool,
    /// First-order decrease available per unit step at the returned state.
    #[serde(with = "crate::io::fnum")]
    pub stationarity: f64,
    /// Number of distinct optimal states found.
    pub orbit_size: usize,
    pub method: String,
    pub notes: Vec<String>,
}

pub const DEFAULT_STARTS: usize = 64;

fn overlaps(psi: &CVec, pts: &[CMat]) -> Vec<f64> {
    pts.iter().map(|p| (psi.adjoint() * p * psi)[(0, 0)].re).collect()
}

fn worst(psi: &CVec, pts: &[CMat]) -> f64 {
    overlaps(psi, pts).into_iter().fold(f64::MIN, f64::max)
}

/// Real orthonormal directions of the tangent space at psi (orthogonal to psi).
fn tangent(psi: &CVec) -> Vec<CVec> {
    let d = psi.len();
    let mut basis: Vec<CVec> = vec![psi.clone()];
    for k in 0..d {
        let mut v = CVec::zeros(d);
        v[k] = ONE;
        for b in &basis {
            let proj = b.dotc(&v);
            v -= b * proj;
        }
        let n = v.norm();
        if n > 1e-8 {
            basis.push(v / cr(n));
        }
        if basis.len() == d {
            break;
        }
    }
    let mut out = Vec::new();
    for b in basis.into_iter().skip(1) {
        out.push(b.clone());
        out.push(b * c(0.0, 1.0));
    }
    out
}

/// Smoothed descent on the log-sum-exp of the vertex overlaps.
fn warmup(mut psi: CVec, pts: &[CMat]) -> CVec {
    for beta in [20.0, 80.0, 320.0, 1280.0] {
        let mut step = 0.2;
        let mut cur = soft(&psi, pts, beta);
        for _ in 0..200 {
            let f = overlaps(&psi, pts);
            let m = f.iter().cloned().fold(f64::MIN, f64::max);
            let w: Vec<f64> = f.iter().map(|x| (beta * (x - m)).exp()).collect();
            let z: f64 = w.iter().sum();
            let mut g = CVec::zeros(psi.len());
            for (p, wi) in pts.iter().zip(&w) {
                g += p * &psi * cr(wi / z);
            }
            let along = psi.dotc(&g);
            g -= &psi * along;
            let trial = normalize(&(&psi - &g * cr(step)));
            let val = soft(&trial, pts, beta);
            if val < cur {
                psi = trial;
                cur = val;
                step *= 1.2;
            } else {
                step *= 0.5;
                if step < 1e-10 {
                    break;
                }
            }
        }
    }
    psi
}

fn soft(psi: &CVec, pts: &[CMat], beta: f64) -> f64 {
    let f = overlaps(psi, pts);
    let m = f.iter().cloned().fold(f64::MIN, f64::max);
    m + f.iter().map(|x| (beta * (x - m)).exp()).sum::<f64>().ln() / beta
}

fn normalize(v: &CVec) -> CVec {
    v / cr(v.norm())
}

/// Linearized minimax step: min t s.t. f_i + g_i . x <= t, |x_k| <= delta.
/// Returns (predicted max, step x).
fn slp_step(psi: &CVec, pts: &[CMat], delta: f64, ctx: &Ctx) -> Option<(f64, Vec<f64>)> {
    let dirs = tangent(psi);
    let f = overlaps(psi, pts);
    let grads: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| {
            let pv = p * psi;
            dirs.iter().map(|e| 2.0 * pv.dotc(e).re).collect()
        })
        .collect();
    let k = dirs.len();
    let mut b = Builder::new();
    let u: Vec<usize> = (0..k).map(|_| b.scalar()).collect();
    let t = b.scalar();
    for &ui in &u {
        let w = b.scalar();
        b.eq(&LinearExpr::new().scalar(ui, 1.0).scalar(w, 1.0), 2.0 * delta).ok()?;
    }
    for (fi, gi) in f.iter().zip(&grads) {
        let s = b.scalar();
        let mut e = LinearExpr::new().scalar(s, 1.0).scalar(t, -1.0);
        for (&ui, &g) in u.iter().zip(gi) {
            e.add_scalar(ui, g);
        }
        let shift: f64 = gi.iter().sum::<f64>() * delta;
        b.eq(&e, shift - fi).ok()?;
    }
    b.minimize(&LinearExpr::new().scalar(t, 1.0)).ok()?;
    let rep = b.solve(ctx).ok()?;
    if rep.status != Status::Optimal {
        return None;
    }
    let x = u.iter().map(|&i| rep.scalars[i] - delta).collect();
    Some((rep.scalars[t], x))
}

fn apply_step(psi: &CVec, x: &[f64]) -> CVec {
    let dirs = tangent(psi);
    let mut v = psi.clone();
    for (e, &xi) in dirs.iter().zip(x) {
        v += e * cr(xi);
    }
    normalize(&v)
}

/// Trust-region sequential LP polish. Returns (state, value, converged).
fn polish(mut psi: CVec, pts: &[CMat], ctx: &Ctx) -> (CVec, f64, bool) {
    let mut val = worst(&psi, pts);
    let mut delta: f64 = 0.05;
    for _ in 0..200 {
        if delta < 1e-11 {
            return (psi, val, true);
        }
        let Some((pred, x)) = slp_step(&psi, pts, delta, ctx) else {
            delta *= 0.25;
            continue;
        };
        if val - pred < 1e-15 {
            return (psi, val, true);
        }
        let trial = apply_step(&psi, &x);
        let tv = worst(&trial, pts);
        if tv < val {
            let ratio = (val - tv) / (val - pred);
            psi = trial;
            val = tv;
            if ratio > 0.75 {
                delta = (delta * 2.0).min(0.5);
            } else if ratio < 0.25 {
                delta *= 0.25;
            }
        } else {
            delta *= 0.25;
        }
    }
    (psi, val, false)
}

fn stationarity(psi: &CVec, pts: &[CMat], ctx: &Ctx) -> f64 {
    let delta = 1e-6;
    match slp_step(psi, pts, delta, ctx) {
        Some((pred, _)) => ((worst(psi, pts) - pred) / delta).max(0.0),
        None => f64::NAN,
    }
}

/// Phase-fixed copy: first largest-modulus component real and positive.
pub fn phase_fix(v: &CVec) -> CVec {
    let m = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let i = v.iter().position(|z| z.norm() >= m - 1e-9).unwrap_or(0);
    let ph = v[i] / cr(v[i].norm());
    v * ph.conj()
}

fn key(v: &CVec) -> Vec<f64> {
    if v.len() == 2 {
        let p = v * v.adjoint();
        return bloch_vector(&p).unwrap().to_vec();
    }
    let f = phase_fix(v);
    f.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn lex_greater(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > 1e-6 {
            return x > y;
        }
    }
    false
}

fn bloch_grid_best(pts: &[CMat]) -> CVec {
    let mut best = (f64::MAX, CVec::zeros(2));
    let (nt, np) = (90, 180);
    for i in 0..=nt {
        let th = std::f64::consts::PI * i as f64 / nt as f64;
        for j in 0..np {
            let ph = 2.0 * std::f64::consts::PI * j as f64 / np as f64;
            let v = CVec::from_vec(vec![cr((th / 2.0).cos()), c((th / 2.0).sin() * ph.cos(), (th / 2.0).sin() * ph.sin())]);
            let w = worst(&v, pts);
            if w < best.0 {
                best = (w, v);
            }
        }
    }
    best.1
}

/// Minimize the free fidelity over pure states by multi-start search.
pub fn find_golden_state(f: &FreeStateSet, seed: u64, starts: usize, ctx: &Ctx) -> Result<GoldenReport> {
    let d = f.dim();
    if d < 2 {
        return Err(CoreError::Precondition("golden states need d >= 2".into()));
    }
    match f {
        FreeStateSet::GibbsSingleton { energies, temperature } => return golden_thermo(energies, *temperature, ctx),
        FreeStateSet::SeparablePpt2x2 => {
            let mut r = verify_collapse(&bell_state(), f, None, ctx)?;
            r.method = "analytic".into();
            r.notes.push("separable golden state taken from the closed form g = 1/2".into());
            return Ok(r);
        }
        _ => {}
    }
    let pts = f.extreme_points().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inits: Vec<CVec> = vec![PureState::uniform(d).vector().clone()];
    if d == 2 {
        inits.push(bloch_grid_best(&pts));
    }
    for _ in 0..starts {
        inits.push(random_unit_vector(d, &mut rng));
    }
    let warmed: Vec<(CVec, f64)> = inits
        .into_par_iter()
        .map(|v| {
            let w = warmup(v, &pts);
            let val = worst(&w, &pts);
            (w, val)
        })
        .collect();
    // polish the best distinct warm starts
    let mut order: Vec<usize> = (0..warmed.len()).collect();
    order.sort_by(|&a, &b| warmed[a].1.partial_cmp(&warmed[b].1).unwrap().then(a.cmp(&b)));
    // every start that warmed up close to the best, so symmetric optima are all seen
    let cut = warmed[order[0]].1 + 1e-3;
    let pick: Vec<usize> = order.into_iter().filter(|&i| warmed[i].1 <= cut).take(96).collect();
    let polished: Vec<(CVec, f64, bool)> = pick
        .par_iter()
        .map(|&i| polish(warmed[i].0.clone(), &pts, ctx))
        .collect();
    let best_val = polished.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    let mut optimal: Vec<CVec> = Vec::new();
    let mut converged = false;
    for (v, val, conv) in &polished {
        if *val <= best_val + 1e-9 {
            converged |= *conv;
            let p = v * v.adjoint();
            if !optimal.iter().any(|o| max_abs(&(o * o.adjoint() - &p)) < 1e-5) {
                optimal.push(v.clone());
            }
        }
    }
    let mut best = optimal[0].clone();
    for v in &optimal[1..] {
        if lex_greater(&key(v), &key(&best)) {
            best = v.clone();
        }
    }
    let psi = PureState::normalized(phase_fix(&best))?;
    let stat = stationarity(psi.vector(), &pts, ctx);
    let mut r = verify_collapse(&psi, f, None, ctx)?;
    r.starts = starts;
    r.converged = converged;
    r.stationarity = stat;
    r.orbit_size = optimal.len();
    r.method = "multistart-slp".into();
    Ok(r)
}

fn coefficient(c: &[ModCoefficient], k: CoefficientKind) -> Option<f64> {
    c.iter().find(|m| m.kind == k).map(|m| m.value)
}

/// All applicable coefficients of `phi` and whether they coincide.
pub fn verify_collapse(phi: &PureState, f: &FreeStateSet, spec: Option<&RdMapSpec>, ctx: &Ctx) -> Result<GoldenReport> {
    let d = phi.dim();
    let rho = phi.density();
    let mut notes = Vec::new();
    let mut kinds = vec![CoefficientKind::F, CoefficientKind::Min, CoefficientKind::Max];
    if let Some(s) = spec {
        if s.is_exact {
            kinds.extend([CoefficientKind::FLambda, CoefficientKind::MinLambda, CoefficientKind::MaxLambda]);
        } else {
            notes.push(format!("RD map {} is not exact; lambda checks skipped", s.name()));
        }
    }
    let coefficients: Vec<ModCoefficient> = kinds
        .iter()
        .map(|&k| modification_coefficient(&rho, f, spec, k, ctx))
        .collect::<Result<_>>()?;
    let vals: Vec<f64> = coefficients.iter().map(|c| c.value).collect();
    let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
    let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
    let residual = if hi.is_infinite() && lo.is_infinite() { 0.0 } else { hi - lo };
    let g = coefficient(&coefficients, CoefficientKind::F).unwrap();
    let (lr, lr_coincides) = match f {
        FreeStateSet::VertexPolytope { .. } | FreeStateSet::SeparablePpt2x2 => {
            let v = free_robustness(&rho, f, ctx)?.value / log2(d as f64);
            (Some(v), Some((v - coefficient(&coefficients, CoefficientKind::Max).unwrap()).abs() <= 1e-6))
        }
        _ => (None, None),
    };
    Ok(GoldenReport {
        state: phi.clone(),
        d,
        g,
        coefficients,
        collapse_residual: residual,
        collapse: residual <= 1e-6,
        lr,
        lr_coincides,
        starts: 0,
        converged: true,
        stationarity: 0.0,
        orbit_size: 1,
        method: "direct".into(),
        notes,
    })
}

/// Golden state of the Gibbs theory: the top energy eigenvector.
pub fn golden_thermo(energies: &[f64], temperature: f64, ctx: &Ctx) -> Result<GoldenReport> {
    let f = FreeStateSet::gibbs(energies.to_vec(), temperature)?;
    let d = energies.len();
    if d < 2 {
        return Err(CoreError::Precondition("golden states need d >= 2".into()));
    }
    let i = top_level(energies);
    let psi = PureState::basis(d, i);
    let tau = f.gibbs_state().unwrap();
    let spec = RdMapSpec::constant(&tau);
    let mut r = verify_collapse(&psi, &f, Some(&spec), ctx)?;
    let formula = -log2(gibbs_weights(energies, temperature)[i]) / log2(d as f64);
    r.notes.push(format!("closed form {formula:.12}"));
    r.method = "analytic".into();
    let ties = energies.iter().filter(|&&e| e == energies[i]).count();
    r.orbit_size = ties;
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootTarget {
    pub feasible: bool,
    #[serde(with = "crate::io::fnum")]
    pub root_fidelity: f64,
    pub one_sided: bool,
    /// Constructive map for this target, when the theory's conditions provide one.
    pub construction: Option<ConversionCertificate>,
    pub construction_note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootReport {
    pub is_root: bool,
    /// Which constructive route applies: "ct", "ffr", or none.
    pub route: Option<String>,
    pub targets: Vec<RootTarget>,
}

/// Check that every target is reachable from `phi` by a free operation.
pub fn check_root_state(
    phi: &PureState,
    f: &FreeStateSet,
    targets: &[DensityMatrix],
    eps: f64,
    op: &OpClass,
    ctx: &Ctx,
) -> Result<RootReport> {
    let d = phi.dim();
    if f.dim() != d {
        return Err(CoreError::Dimension { expected: f.dim(), got: d });
    }
    if let Some(t) = targets.iter().find(|t| t.dim() != d) {
        return Err(CoreError::Dimension { expected: d, got: t.dim() });
    }
    let source = phi.density();
    let family =
        ReferenceFamily::new(LadderSpec::Explicit(vec![d]), Constructor::Golden(BTreeMap::from([(d, phi.clone())])))?;
    let theory = Theory::custom("root-check", f.clone(), None, family.clone(), ctx)?;
    let route = if ct_spread(source.matrix(), f, ctx)? <= if f.extreme_points().is_some() { 1e-10 } else { 1e-6 } {
        Some(FormationAchievableVariant::CtMap)
    } else if has_ffr(f) {
        let dmax = resource_measure(&source, f, &ResourceKind::Dmax, ctx)?.value;
        let lr = free_robustness(&source, f, ctx)?.value;
        ((dmax - lr).abs() <= 1e-7).then_some(FormationAchievableVariant::FfrMap)
    } else {
        None
    };
    let targets = targets
        .iter()
        .map(|t| {
            let res = exact_conversion_feasible(&source, t, eps, f, f, op, ctx)?;
            let (construction, construction_note) = match &route {
                None => (None, None),
                Some(v) => match formation_achievable(t, &theory, &family, 0.0, v, ctx) {
                    Ok((_, Some(c))) => (Some(c), None),
                    Ok((r, None)) => (None, r.reason),
                    Err(CoreError::Certificate(m)) | Err(CoreError::Precondition(m)) => (None, Some(m)),
                    Err(e) => return Err(e),
                },
            };
            Ok(RootTarget {
                feasible: res.feasible,
                root_fidelity: res.root_fidelity,
                one_sided: res.one_sided,
                construction,
                construction_note,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RootReport {
        is_root: targets.iter().all(|t| t.feasible),
        route: route.map(|v| match v {
            FormationAchievableVariant::CtMap => "ct".to_string(),
            _ => "ffr".to_string(),
        }),
        targets,
    })
}
