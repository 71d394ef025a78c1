//! Central tolerance profiles.

use oneshot_conic::Settings;

/// Environment variable selecting the default profile (`default`, `strict`, `loose`).
pub const PROFILE_ENV: &str = "ONESHOT_TOL_PROFILE";

#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub herm: f64,
    pub psd: f64,
    pub trace: f64,
    pub unit: f64,
    pub tp: f64,
    pub support: f64,
    pub rank: f64,
    /// Freeness residual allowed for per-vertex certificates.
    pub freeness: f64,
    /// Commutation residual allowed for commuting-map certificates.
    pub commutation: f64,
    /// Slack applied when comparing measure values in ladder rules.
    pub ladder: f64,
    /// Slack on the root fidelity when deciding oracle feasibility.
    pub feasibility: f64,
    /// Allowed shortfall of certified output fidelity below 1 - eps.
    pub fidelity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            herm: 1e-10,
            psd: 1e-9,
            trace: 1e-9,
            unit: 1e-10,
            tp: 1e-9,
            support: 1e-9,
            rank: 1e-9,
            freeness: 1e-7,
            commutation: 1e-8,
            ladder: 1e-7,
            feasibility: 1e-7,
            fidelity: 1e-8,
        }
    }
}

/// Tolerances plus solver settings; threaded through every computation.
#[derive(Clone, Debug)]
pub struct Ctx {
    pub tol: Tolerances,
    pub solver: Settings,
}

impl Default for Ctx {
    fn default() -> Self {
        Ctx { tol: Tolerances::default(), solver: Settings::default() }
    }
}

impl Ctx {
    pub fn profile(name: &str) -> Option<Ctx> {
        let mut ctx = Ctx::default();
        match name {
            "default" => {}
            "strict" => {
                ctx.tol.psd = 1e-10;
                ctx.tol.tp = 1e-10;
                ctx.tol.freeness = 1e-8;
                ctx.solver.feas_tol = 1e-12;
                ctx.solver.gap_tol = 1e-12;
            }
            "loose" => {
                ctx.tol.psd = 1e-7;
                ctx.tol.tp = 1e-7;
                ctx.tol.trace = 1e-7;
                ctx.tol.freeness = 1e-6;
                ctx.tol.commutation = 1e-7;
                ctx.tol.feasibility = 1e-6;
                ctx.tol.fidelity = 1e-7;
                ctx.solver.feas_tol = 1e-9;
                ctx.solver.gap_tol = 1e-9;
            }
            _ => return None,
        }
        Some(ctx)
    }

    /// Profile named by [`PROFILE_ENV`], falling back to the default.
    pub fn from_env() -> Result<Ctx, String> {
        match std::env::var(PROFILE_ENV) {
            Ok(name) => Ctx::profile(&name).ok_or_else(|| format!("unknown tolerance profile '{name}'")),
            Err(_) => Ok(Ctx::default()),
        }
    }
}
