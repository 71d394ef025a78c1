//! Command implementations for the `oneshot` binary. Every command renders
//! its report to a string so batch mode can run instances in isolation.

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use oneshot_core::golden::{find_golden_state, golden_thermo, verify_collapse, GoldenReport, DEFAULT_STARTS};
use oneshot_core::io::{self, load_state, load_theory, parse_manifest, to_json};
use oneshot_core::measures::*;
use oneshot_core::quantum::DensityMatrix;
use oneshot_core::tasks::*;
use oneshot_core::theories::{classify_theory, LadderSpec, Theory, TheoryKind};
use oneshot_core::{CoreError, Ctx};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CERTIFICATE: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "oneshot", version, about = "One-shot resource theory measures, bounds and certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<String>,
    /// Tolerance profile (default, strict, loose); overrides ONESHOT_TOL_PROFILE.
    #[arg(long, global = true)]
    pub profile: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate a divergence or resource measure.
    Measure(MeasureArgs),
    /// Golden-state search and collapse verification.
    Golden(GoldenArgs),
    /// Classify a theory (convex, affine, FFR, CH, CT).
    Classify(ClassifyArgs),
    /// Formation or distillation bounds, optionally with the exact sandwich.
    Bounds(BoundsArgs),
    /// Build and certify an explicit conversion channel.
    Convert(ConvertArgs),
    /// Run a manifest of commands in parallel.
    Batch(BatchArgs),
}

#[derive(Args, Debug)]
pub struct MeasureArgs {
    #[arg(long)]
    pub theory: Option<String>,
    /// State JSON file or builtin:NAME.
    #[arg(long)]
    pub state: String,
    /// Second state for relative divergences (no theory needed).
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub kind: String,
    /// Comma-separated smoothing parameters.
    #[arg(long, default_value = "0")]
    pub epsilon: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Coefficient for --kind modcoef (m_f, m_min, m_max, m_LR, m_f_lambda, m_min_lambda, m_max_lambda).
    #[arg(long, default_value = "m_f")]
    pub coef: String,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct GoldenArgs {
    #[arg(long)]
    pub theory: String,
    /// Dimension, default the theory's own.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Required for the numerical search.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_STARTS)]
    pub starts: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub theory: String,
    #[arg(long)]
    pub ladder: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub theory: String,
    #[arg(long)]
    pub state: String,
    /// Comma-separated error tolerances.
    #[arg(long, default_value = "0")]
    pub epsilon: String,
    /// Ladder override, e.g. all:6, pow2:16 or 2,4.
    #[arg(long)]
    pub ladder: Option<String>,
    /// Formation: dmax, lr, dmax_lambda. Distillation: ng, comm.
    #[arg(long)]
    pub converse: Option<String>,
    /// Formation: ct_map, ffr_map, comm_ct_map. Distillation: robustness_map,
    /// isotropic_map, pseudo_comm_depol, input_error_robustness, input_error_isotropic.
    #[arg(long)]
    pub achievable: Option<String>,
    /// Also run the exact oracle and check the ordering.
    #[arg(long)]
    pub sandwich: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub theory: String,
    #[arg(long)]
    pub state: String,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long)]
    pub ladder: Option<String>,
    /// Construction; chosen automatically when absent.
    #[arg(long)]
    pub variant: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct BatchArgs {
    /// JSON file {"runs": [[command, args...], ...]}.
    #[arg(long)]
    pub manifest: String,
    #[command(flatten)]
    pub common: Common,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let code = match &e {
            CoreError::Parse(_) | CoreError::InvalidState(_) | CoreError::InvalidChannel(_) => EXIT_INPUT,
            CoreError::Dimension { .. } | CoreError::Precondition(_) | CoreError::Unsupported(_) => EXIT_PRECONDITION,
            CoreError::Solver(_) => EXIT_SOLVER,
            CoreError::Certificate(_) => EXIT_CERTIFICATE,
        };
        Failure { code, message: e.to_string() }
    }
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

/// Rendered report plus exit code (nonzero reports still carry content).
#[derive(Debug)]
pub struct Rendered {
    pub text: String,
    pub code: i32,
    pub diagnostic: Option<String>,
}

type Res<T> = std::result::Result<T, Failure>;

fn ctx_for(common: &Common) -> Res<Ctx> {
    match &common.profile {
        Some(p) => Ctx::profile(p).ok_or_else(|| fail(EXIT_INPUT, format!("unknown tolerance profile '{p}'"))),
        None => Ctx::from_env().map_err(|m| fail(EXIT_INPUT, m)),
    }
}

fn epsilons(s: &str) -> Res<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| fail(EXIT_INPUT, format!("bad epsilon '{t}'"))))
        .collect::<Res<_>>()?;
    if let Some(e) = v.iter().find(|e| !(0.0..1.0).contains(*e)) {
        return Err(fail(EXIT_INPUT, format!("epsilon {e} outside [0, 1)")));
    }
    Ok(v)
}

fn json_text<T: Serialize>(x: &T) -> Res<String> {
    Ok(to_json(x)? + "\n")
}

fn one_or_many<T: Serialize>(rows: &[T]) -> Res<String> {
    if rows.len() == 1 {
        json_text(&rows[0])
    } else {
        json_text(&rows)
    }
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Res<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| fail(EXIT_INPUT, e.to_string());
    w.write_record(header).map_err(io_err)?;
    for r in rows {
        w.write_record(r).map_err(io_err)?;
    }
    let bytes = w.into_inner().map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| fail(EXIT_INPUT, e.to_string()))
}

fn num(x: f64) -> String {
    match io::num_value(x) {
        Value::String(s) => s,
        v => v.to_string(),
    }
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct MeasureRow {
    pub kind: String,
    #[serde(with = "oneshot_core::io::fnum")]
    pub epsilon: f64,
    pub theory: Option<String>,
    pub state: String,
    pub bits: bool,
    #[serde(flatten)]
    pub report: MeasureReport,
}

fn quantity(kind: &str) -> &'static str {
    match kind {
        "dmax" => "Dmax",
        "dmin" => "Dmin",
        "dh" => "DH_eps",
        "rel" => "D",
        "robustness" => "LR",
        "witness" => "LR",
        "free-fidelity" => "neg_log_free_fidelity",
        "smooth-dmax" => "Dmax_eps",
        "smooth-lr" => "LR_eps",
        "smooth-dmin" => "Dmin_eps_estimate",
        "lambda-f" => "neg_log_F_lambda",
        "lambda-dmax" => "Dmax_lambda",
        "lambda-dmin" => "Dmin_lambda",
        "lambda-dh" => "DH_lambda_eps",
        "smooth-lambda-dmax" => "Dmax_lambda_eps",
        _ => "value",
    }
}

fn rd_for(theory: &Theory, d: usize) -> Res<oneshot_core::theories::RdMapSpec> {
    theory
        .rd_map_at(d)
        .ok_or_else(|| fail(EXIT_PRECONDITION, format!("theory '{}' has no RD map at d = {d}", theory.id)))
}

fn measure_one(a: &MeasureArgs, rho: &DensityMatrix, theory: Option<&Theory>, eps: f64, ctx: &Ctx) -> Res<MeasureReport> {
    if let Some(s) = &a.sigma {
        let sigma = load_state(s, &ctx.tol)?;
        return Ok(match a.kind.as_str() {
            "dmax" => d_max(rho, &sigma, ctx)?,
            "dmin" => d_min(rho, &sigma, ctx)?,
            "dh" => d_hypothesis(rho, &sigma, eps, ctx)?,
            "rel" => {
                let v = rel_entropy(rho, &sigma, ctx)?;
                MeasureReport { value: v, method: Method::Analytic, status: "optimal".into(), optimizer: Optimizer::default() }
            }
            k => return Err(fail(EXIT_INPUT, format!("kind '{k}' is not a two-state divergence (dmax, dmin, dh, rel)"))),
        });
    }
    let th = theory.ok_or_else(|| fail(EXIT_INPUT, "--theory or --sigma is required"))?;
    let d = rho.dim();
    let f = th.free_set(d)?;
    let lam = |k: LambdaKind| -> Res<MeasureReport> { Ok(lambda_measure(rho, &rd_for(th, d)?, &k, Some(&f), ctx)?) };
    Ok(match a.kind.as_str() {
        "dmax" => resource_measure(rho, &f, &ResourceKind::Dmax, ctx)?,
        "dmin" => resource_measure(rho, &f, &ResourceKind::Dmin, ctx)?,
        "dh" => resource_measure(rho, &f, &ResourceKind::Dh(eps), ctx)?,
        "robustness" => free_robustness(rho, &f, ctx)?,
        "witness" => generalized_robustness_witness(rho, &f, ctx)?,
        "free-fidelity" => {
            let mut r = free_fidelity(rho, &f, ctx)?;
            r.value = -r.value.log2();
            r
        }
        "smooth-dmax" => smooth_measure(rho, &f, eps, &SmoothKind::Dmax, ctx)?,
        "smooth-lr" => smooth_measure(rho, &f, eps, &SmoothKind::Lr, ctx)?,
        "smooth-dmin" => {
            let seed = a.seed.ok_or_else(|| fail(EXIT_INPUT, "--seed is required for the heuristic smooth-dmin"))?;
            smooth_measure(rho, &f, eps, &SmoothKind::DminHeuristic { seed }, ctx)?
        }
        "lambda-f" => {
            let mut r = lam(LambdaKind::F)?;
            r.value = -r.value.log2();
            r
        }
        "lambda-dmax" => lam(LambdaKind::Dmax)?,
        "lambda-dmin" => lam(LambdaKind::Dmin)?,
        "lambda-dh" => lam(LambdaKind::Dh(eps))?,
        "smooth-lambda-dmax" => smooth_lambda_dmax(rho, &rd_for(th, d)?, eps, ctx)?,
        k => return Err(fail(EXIT_INPUT, format!("unknown measure kind '{k}'"))),
    })
}

fn coefficient_kind(s: &str) -> Res<CoefficientKind> {
    use CoefficientKind::*;
    [F, Min, Max, Lr, FLambda, MinLambda, MaxLambda]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| fail(EXIT_INPUT, format!("unknown coefficient '{s}'")))
}

fn cmd_measure(a: &MeasureArgs) -> Res<Rendered> {
    let ctx = ctx_for(&a.common)?;
    let theory = a.theory.as_deref().map(|t| load_theory(t, &ctx)).transpose()?;
    let rho = load_state(&a.state, &ctx.tol)?;
    if a.kind == "modcoef" {
        let th = theory.as_ref().ok_or_else(|| fail(EXIT_INPUT, "--theory is required for modcoef"))?;
        let kind = coefficient_kind(&a.coef)?;
        let d = rho.dim();
        let spec = if kind.is_lambda() { Some(rd_for(th, d)?) } else { None };
        let c = modification_coefficient(&rho, &th.free_set(d)?, spec.as_ref(), kind, &ctx)?;
        let text = match a.common.format {
            Format::Json => json_text(&c)?,
            Format::Csv => csv_text(
                &["theory", "state", "d", "coefficient", "value", "measure_bits"],
                &[vec![th.id.clone(), a.state.clone(), c.d.to_string(), a.coef.clone(), num(c.value), num(c.measure)]],
            )?,
        };
        return Ok(Rendered { text, code: EXIT_OK, diagnostic: None });
    }
    let rows = epsilons(&a.epsilon)?
        .into_iter()
        .map(|eps| {
            let report = measure_one(a, &rho, theory.as_ref(), eps, &ctx)?;
            Ok(MeasureRow {
                kind: a.kind.clone(),
                epsilon: eps,
                theory: theory.as_ref().map(|t| t.id.clone()),
                state: a.state.clone(),
                bits: true,
                report,
            })
        })
        .collect::<Res<Vec<_>>>()?;
    let text = match a.common.format {
        Format::Json => one_or_many(&rows)?,
        Format::Csv => {
            let q = format!("{}_bits", quantity(&a.kind));
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.theory.clone().unwrap_or_default(),
                        r.state.clone(),
                        num(r.epsilon),
                        num(r.report.value),
                        opt_num(r.report.optimizer.robustness),
                        r.report.method.as_str().to_string(),
                        r.report.status.clone(),
                    ]
                })
                .collect();
            csv_text(&["theory", "state", "epsilon", &q, "R", "method", "status"], &body)?
        }
    };
    Ok(Rendered { text, code: EXIT_OK, diagnostic: None })
}

fn cmd_golden(a: &GoldenArgs) -> Res<Rendered> {
    let ctx = ctx_for(&a.common)?;
    let th = load_theory(&a.theory, &ctx)?;
    let d = a.dim.unwrap_or(th.dim);
    let report: GoldenReport = match &th.kind {
        TheoryKind::Thermo { energies, temperature } => {
            if d > energies.len() {
                return Err(fail(EXIT_PRECONDITION, format!("thermo theory has only {} levels", energies.len())));
            }
            golden_thermo(&energies[..d], *temperature, &ctx)?
        }
        _ => {
            let seed = a.seed.ok_or_else(|| fail(EXIT_INPUT, "--seed is required for the golden search"))?;
            let f = th.free_set(d)?;
            let mut r = find_golden_state(&f, seed, a.starts, &ctx)?;
            if let Some(spec) = th.rd_map_at(d) {
                let v = verify_collapse(&r.state, &f, Some(&spec), &ctx)?;
                r.coefficients = v.coefficients;
                r.collapse_residual = v.collapse_residual;
                r.collapse = v.collapse;
                r.notes.extend(v.notes);
            }
            r
        }
    };
    let text = match a.common.format {
        Format::Json => json_text(&report)?,
        Format::Csv => {
            let mut header = vec!["theory".to_string(), "d".into(), "g_d".into()];
            let mut row = vec![th.id.clone(), report.d.to_string(), num(report.g)];
            for c in &report.coefficients {
                header.push(c.kind.as_str().to_string());
                row.push(num(c.value));
            }
            header.extend(["m_LR", "collapse_residual", "collapse", "orbit_size", "method"].map(String::from));
            row.extend([
                opt_num(report.lr),
                num(report.collapse_residual),
                report.collapse.to_string(),
                report.orbit_size.to_string(),
                report.method.clone(),
            ]);
            let h: Vec<&str> = header.iter().map(String::as_str).collect();
            csv_text(&h, &[row])?
        }
    };
    Ok(Rendered { text, code: EXIT_OK, diagnostic: None })
}

fn cmd_classify(a: &ClassifyArgs) -> Res<Rendered> {
    let ctx = ctx_for(&a.common)?;
    let th = load_theory(&a.theory, &ctx)?;
    let fam = a.ladder.as_deref().map(|l| Ok::<_, CoreError>(th.family.with_ladder(LadderSpec::parse(l)?)?)).transpose()?;
    let c = classify_theory(&th, fam.as_ref(), &ctx)?;
    let text = match a.common.format {
        Format::Json => json_text(&c)?,
        Format::Csv => {
            let mut rows = vec![];
            for (name, f) in [("convex", Some(&c.convex)), ("affine", Some(&c.affine)), ("ffr", Some(&c.ffr)), ("ch", Some(&c.ch)), ("ct", c.ct.as_ref())] {
                match f {
                    Some(f) => rows.push(vec![name.to_string(), f.value.to_string(), f.evidence.clone()]),
                    None => rows.push(vec![name.to_string(), String::new(), "not applicable".into()]),
                }
            }
            csv_text(&["property", "value", "evidence"], &rows)?
        }
    };
    Ok(Rendered { text, code: EXIT_OK, diagnostic: None })
}

/// A bound that ran, or the reason a construction does not apply.
#[derive(Serialize, Deserialize, Debug, PartialEq)]
#[serde(untagged)]
pub enum Outcome<T> {
    Done(T),
    Rejected { rejected: String },
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct BoundsRow {
    pub task: Task,
    #[serde(with = "oneshot_core::io::fnum")]
    pub epsilon: f64,
    pub lower: Outcome<BoundReport>,
    pub upper: Outcome<BoundReport>,
    /// Which side the explicit construction provides.
    pub achievable: Direction,
    pub certificate: Option<ConversionCertificate>,
    pub sandwich: Option<SandwichReport>,
}

fn formation_converse(s: &str, th: &Theory, d: usize) -> Res<FormationLowerVariant> {
    Ok(match s {
        "dmax" => FormationLowerVariant::Dmax,
        "lr" => FormationLowerVariant::Lr,
        "dmax_lambda" => FormationLowerVariant::DmaxLambda(rd_for(th, d)?),
        _ => return Err(fail(EXIT_INPUT, format!("unknown formation converse '{s}'"))),
    })
}

fn formation_variant(s: &str, th: &Theory, d: usize) -> Res<FormationAchievableVariant> {
    Ok(match s {
        "ct_map" => FormationAchievableVariant::CtMap,
        "ffr_map" => FormationAchievableVariant::FfrMap,
        "comm_ct_map" => FormationAchievableVariant::CommCtMap(rd_for(th, d)?),
        _ => return Err(fail(EXIT_INPUT, format!("unknown formation construction '{s}'"))),
    })
}

fn distillation_converse(s: &str, th: &Theory, d: usize) -> Res<DistillationUpperVariant> {
    Ok(match s {
        "ng" => DistillationUpperVariant::Ng,
        "comm" => DistillationUpperVariant::Comm(rd_for(th, d)?),
        _ => return Err(fail(EXIT_INPUT, format!("unknown distillation converse '{s}'"))),
    })
}

type Achieved = (BoundReport, Option<ConversionCertificate>);

/// Try constructions in order; precondition rejections move on to the next.
fn first_applicable(tries: Vec<Box<dyn Fn() -> oneshot_core::Result<Achieved> + '_>>, pick_max: bool) -> Res<Outcome<Achieved>> {
    let mut best: Option<Achieved> = None;
    let mut reasons = vec![];
    for t in tries {
        match t() {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => pick_max && r.0.d0.unwrap_or(0) > b.0.d0.unwrap_or(0),
                };
                if better {
                    best = Some(r);
                }
                if !pick_max {
                    break;
                }
            }
            Err(e @ (CoreError::Precondition(_) | CoreError::Unsupported(_))) => reasons.push(e.to_string()),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(match best {
        Some(b) => Outcome::Done(b),
        None => Outcome::Rejected { rejected: reasons.join("; ") },
    })
}

fn with_ladder(th: &Theory, ladder: &Option<String>) -> Res<oneshot_core::theories::ReferenceFamily> {
    Ok(match ladder {
        Some(l) => th.family.with_ladder(LadderSpec::parse(l)?)?,
        None => th.family.clone(),
    })
}

fn achieve(
    task: Task,
    variant: Option<&str>,
    rho: &DensityMatrix,
    th: &Theory,
    fam: &oneshot_core::theories::ReferenceFamily,
    eps: f64,
    ctx: &Ctx,
) -> Res<Outcome<Achieved>> {
    let d = rho.dim();
    match (task, variant) {
        (Task::Formation, Some(v)) => {
            let v = formation_variant(v, th, d)?;
            Ok(Outcome::Done(formation_achievable(rho, th, fam, eps, &v, ctx)?))
        }
        (Task::Formation, None) => first_applicable(
            vec![
                Box::new(|| formation_achievable(rho, th, fam, eps, &FormationAchievableVariant::CtMap, ctx)),
                Box::new(|| formation_achievable(rho, th, fam, eps, &FormationAchievableVariant::FfrMap, ctx)),
            ],
            false,
        ),
        (_, Some(v)) => {
            let v = DistillationAchievableVariant::parse(v)?;
            let input = matches!(v, DistillationAchievableVariant::InputErrorRobustness | DistillationAchievableVariant::InputErrorIsotropic);
            if input != (task == Task::DistillationInputError) {
                return Err(fail(EXIT_INPUT, format!("construction '{}' does not belong to task '{}'", v.as_str(), task.as_str())));
            }
            Ok(Outcome::Done(distillation_achievable(rho, th, fam, eps, v, ctx)?))
        }
        (_, None) => {
            use DistillationAchievableVariant::*;
            let vs = if task == Task::Distillation {
                [RobustnessMap, IsotropicMap]
            } else {
                [InputErrorRobustness, InputErrorIsotropic]
            };
            first_applicable(
                vs.into_iter()
                    .map(|v| Box::new(move || distillation_achievable(rho, th, fam, eps, v, ctx)) as Box<dyn Fn() -> _>)
                    .collect(),
                true,
            )
        }
    }
}

fn converse(
    task: Task,
    variant: Option<&str>,
    rho: &DensityMatrix,
    th: &Theory,
    fam: &oneshot_core::theories::ReferenceFamily,
    eps: f64,
    ctx: &Ctx,
) -> Res<BoundReport> {
    let d = rho.dim();
    Ok(match task {
        Task::Formation => formation_lower_bound(rho, th, fam, eps, &formation_converse(variant.unwrap_or("dmax"), th, d)?, ctx)?,
        _ => distillation_upper_bound(rho, th, fam, eps, &distillation_converse(variant.unwrap_or("ng"), th, d)?, ctx)?,
    })
}

fn cmd_bounds(a: &BoundsArgs) -> Res<Rendered> {
    let ctx = ctx_for(&a.common)?;
    let task = Task::parse(&a.task)?;
    let th = load_theory(&a.theory, &ctx)?;
    let rho = load_state(&a.state, &ctx.tol)?;
    let fam = with_ladder(&th, &a.ladder)?;
    let mut code = EXIT_OK;
    let mut diagnostic = None;
    let mut rows = vec![];
    for eps in epsilons(&a.epsilon)? {
        let conv = converse(task, a.converse.as_deref(), &rho, &th, &fam, eps, &ctx)?;
        let ach = achieve(task, a.achievable.as_deref(), &rho, &th, &fam, eps, &ctx)?;
        let (ach_report, certificate) = match ach {
            Outcome::Done((r, c)) => (Outcome::Done(r), c),
            Outcome::Rejected { rejected } => (Outcome::Rejected { rejected }, None),
        };
        let sandwich = if a.sandwich {
            if task == Task::DistillationInputError {
                return Err(fail(EXIT_PRECONDITION, "the sandwich covers output-error tasks only"));
            }
            let s = sandwich_check(&rho, &th, &fam, eps, task, &ctx)?;
            if !s.ordered {
                code = EXIT_CERTIFICATE;
                diagnostic = s.diagnostic.clone();
            }
            Some(s)
        } else {
            None
        };
        let (lower, upper, achievable) = match task {
            Task::Formation => (Outcome::Done(conv), ach_report, Direction::Upper),
            _ => (ach_report, Outcome::Done(conv), Direction::Lower),
        };
        rows.push(BoundsRow { task, epsilon: eps, lower, upper, achievable, certificate, sandwich });
    }
    let text = match a.common.format {
        Format::Json => one_or_many(&rows)?,
        Format::Csv => {
            let side = |o: &Outcome<BoundReport>| match o {
                Outcome::Done(r) => [
                    r.variant.clone(),
                    r.d0.map(|d| d.to_string()).unwrap_or_default(),
                    opt_num(r.log_d0),
                    opt_num(r.bound),
                ],
                Outcome::Rejected { .. } => [String::from("rejected"), String::new(), String::new(), String::new()],
            };
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let mut row = vec![r.task.as_str().to_string(), num(r.epsilon)];
                    row.extend(side(&r.lower));
                    row.extend(side(&r.upper));
                    let s = r.sandwich.as_ref();
                    row.push(s.map(|s| opt_num(s.exact)).unwrap_or_default());
                    row.push(s.map(|s| s.ordered.to_string()).unwrap_or_default());
                    row
                })
                .collect();
            csv_text(
                &[
                    "task",
                    "epsilon",
                    "lower_variant",
                    "lower_d0",
                    "lower_log2_d0_bits",
                    "lower_bound_bits",
                    "upper_variant",
                    "upper_d0",
                    "upper_log2_d0_bits",
                    "upper_bound_bits",
                    "exact_log2_d_bits",
                    "ordered",
                ],
                &body,
            )?
        }
    };
    Ok(Rendered { text, code, diagnostic })
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct ConvertReport {
    pub report: BoundReport,
    pub certificate: ConversionCertificate,
}

fn cmd_convert(a: &ConvertArgs) -> Res<Rendered> {
    let ctx = ctx_for(&a.common)?;
    let task = Task::parse(&a.task)?;
    if !(0.0..1.0).contains(&a.epsilon) {
        return Err(fail(EXIT_INPUT, format!("epsilon {} outside [0, 1)", a.epsilon)));
    }
    let th = load_theory(&a.theory, &ctx)?;
    let rho = load_state(&a.state, &ctx.tol)?;
    let fam = with_ladder(&th, &a.ladder)?;
    let (report, cert) = match achieve(task, a.variant.as_deref(), &rho, &th, &fam, a.epsilon, &ctx)? {
        Outcome::Done(x) => x,
        Outcome::Rejected { rejected } => return Err(fail(EXIT_PRECONDITION, rejected)),
    };
    let certificate = cert.ok_or_else(|| {
        fail(EXIT_PRECONDITION, format!("no qualifying d0: {}", report.reason.clone().unwrap_or_default()))
    })?;
    let out = ConvertReport { report, certificate };
    let text = match a.common.format {
        Format::Json => json_text(&out)?,
        Format::Csv => {
            let c = &out.certificate;
            csv_text(
                &[
                    "construction",
                    "d0",
                    "min_eig",
                    "tp_residual",
                    "freeness_residual",
                    "commutation_residual",
                    "fidelity",
                    "target_fidelity",
                    "valid",
                ],
                &[vec![
                    c.construction.clone(),
                    out.report.d0.map(|d| d.to_string()).unwrap_or_default(),
                    num(c.min_eig),
                    num(c.tp_residual),
                    num(c.freeness_residual),
                    opt_num(c.commutation_residual),
                    num(c.fidelity),
                    num(c.target_fidelity),
                    c.valid.to_string(),
                ]],
            )?
        }
    };
    Ok(Rendered { text, code: EXIT_OK, diagnostic: None })
}

fn cmd_batch(a: &BatchArgs) -> Res<Rendered> {
    let text = std::fs::read_to_string(&a.manifest).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", a.manifest)))?;
    let runs = parse_manifest(&text)?;
    let results: Vec<(i32, Value)> = runs
        .par_iter()
        .map(|args| {
            let argv = std::iter::once("oneshot".to_string()).chain(args.iter().cloned());
            let outcome = match Cli::try_parse_from(argv) {
                Err(e) => Err(fail(EXIT_INPUT, e.to_string())),
                Ok(Cli { command: Command::Batch(_) }) => Err(fail(EXIT_INPUT, "nested batch runs are not allowed")),
                Ok(cli) => execute(&cli.command).and_then(|r| deliver(&cli.command, &r).map(|_| r)),
            };
            match outcome {
                Ok(r) => {
                    let body = serde_json::from_str::<Value>(&r.text).unwrap_or(Value::String(r.text.clone()));
                    (r.code, json!({"exit_code": r.code, "output": body, "diagnostic": r.diagnostic}))
                }
                Err(f) => (f.code, json!({"exit_code": f.code, "error": f.message})),
            }
        })
        .collect();
    let code = results.iter().map(|r| r.0).max().unwrap_or(EXIT_OK);
    let entries: Vec<Value> = results
        .into_iter()
        .enumerate()
        .map(|(i, (_, mut v))| {
            v["index"] = json!(i);
            v
        })
        .collect();
    let text = match a.common.format {
        Format::Json => json_text(&json!({"runs": entries}))?,
        Format::Csv => {
            let rows: Vec<Vec<String>> = entries
                .iter()
                .map(|e| {
                    vec![
                        e["index"].to_string(),
                        e["exit_code"].to_string(),
                        e.get("error").and_then(Value::as_str).unwrap_or("").to_string(),
                    ]
                })
                .collect();
            csv_text(&["index", "exit_code", "error"], &rows)?
        }
    };
    Ok(Rendered { text, code, diagnostic: None })
}

fn common(c: &Command) -> &Common {
    match c {
        Command::Measure(a) => &a.common,
        Command::Golden(a) => &a.common,
        Command::Classify(a) => &a.common,
        Command::Bounds(a) => &a.common,
        Command::Convert(a) => &a.common,
        Command::Batch(a) => &a.common,
    }
}

/// Run a command and render its report.
pub fn execute(c: &Command) -> Res<Rendered> {
    match c {
        Command::Measure(a) => cmd_measure(a),
        Command::Golden(a) => cmd_golden(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Convert(a) => cmd_convert(a),
        Command::Batch(a) => cmd_batch(a),
    }
}

/// Write the report to --output when given; returns whether it was written.
pub fn deliver(c: &Command, r: &Rendered) -> Res<bool> {
    match &common(c).output {
        Some(path) => {
            std::fs::write(path, &r.text).map_err(|e| fail(EXIT_INPUT, format!("{path}: {e}")))?;
            Ok(true)
        }
        None => Ok(false),
    }
}
