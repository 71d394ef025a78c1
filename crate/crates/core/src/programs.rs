//! Helpers that assemble conic programs from matrix-valued linear expressions.

use std::rc::Rc;

use oneshot_conic::{solve, ConicProgram, LinearExpr, SolveReport, Status};

use crate::error::{CoreError, Result};
use crate::quantum::{cr, hermitian_basis, kron, partial_transpose, tr_prod, CMat};
use crate::theories::FreeStateSet;
use crate::tolerance::Ctx;

/// Adjoint action of a linear map from a block variable into the expression
/// space: `Tr(g L(X)) = Re Tr(adj(g) X)`.
pub type Adj = Rc<dyn Fn(&CMat) -> CMat>;

#[derive(Clone)]
pub enum Term {
    Scalar { var: usize, coeff: CMat },
    Block { var: usize, adj: Adj },
}

/// Hermitian-matrix-valued affine expression in the program variables.
#[derive(Clone)]
pub struct HExpr {
    pub dim: usize,
    pub terms: Vec<Term>,
    pub constant: CMat,
}

impl HExpr {
    pub fn zero(dim: usize) -> Self {
        HExpr { dim, terms: Vec::new(), constant: CMat::zeros(dim, dim) }
    }

    pub fn constant(m: &CMat) -> Self {
        HExpr { dim: m.nrows(), terms: Vec::new(), constant: m.clone() }
    }

    pub fn block(var: usize, dim: usize) -> Self {
        let mut e = HExpr::zero(dim);
        e.add_block(var, Rc::new(|g: &CMat| g.clone()));
        e
    }

    pub fn add_scalar(&mut self, var: usize, coeff: CMat) -> &mut Self {
        self.terms.push(Term::Scalar { var, coeff });
        self
    }

    pub fn add_block(&mut self, var: usize, adj: Adj) -> &mut Self {
        self.terms.push(Term::Block { var, adj });
        self
    }

    pub fn add_const(&mut self, m: &CMat) -> &mut Self {
        self.constant += m;
        self
    }

    pub fn add(&mut self, other: &HExpr) -> &mut Self {
        self.terms.extend(other.terms.iter().cloned());
        self.constant += &other.constant;
        self
    }

    pub fn scaled(&self, s: f64) -> HExpr {
        let terms = self
            .terms
            .iter()
            .map(|t| match t {
                Term::Scalar { var, coeff } => Term::Scalar { var: *var, coeff: coeff * cr(s) },
                Term::Block { var, adj } => {
                    let a = adj.clone();
                    Term::Block { var: *var, adj: Rc::new(move |g: &CMat| a(g) * cr(s)) }
                }
            })
            .collect();
        HExpr { dim: self.dim, terms, constant: &self.constant * cr(s) }
    }

    /// Compose with a linear map `L` on the expression space given by its adjoint.
    pub fn mapped(&self, out_dim: usize, map: impl Fn(&CMat) -> CMat, adj: Adj) -> HExpr {
        let terms = self
            .terms
            .iter()
            .map(|t| match t {
                Term::Scalar { var, coeff } => Term::Scalar { var: *var, coeff: map(coeff) },
                Term::Block { var, adj: inner } => {
                    let (a, i) = (adj.clone(), inner.clone());
                    Term::Block { var: *var, adj: Rc::new(move |g: &CMat| i(&a(g))) }
                }
            })
            .collect();
        HExpr { dim: out_dim, terms, constant: map(&self.constant) }
    }

    /// `Tr(g E) = expr + const`.
    pub fn functional(&self, g: &CMat) -> (LinearExpr, f64) {
        let mut e = LinearExpr::new();
        for t in &self.terms {
            match t {
                Term::Scalar { var, coeff } => e.add_scalar(*var, tr_prod(g, coeff)),
                Term::Block { var, adj } => e.add_block(*var, adj(g)),
            }
        }
        (e, tr_prod(g, &self.constant))
    }

    /// Evaluate at a solution.
    pub fn value(&self, rep: &SolveReport) -> CMat {
        let mut out = self.constant.clone();
        let basis = hermitian_basis(self.dim);
        for t in &self.terms {
            match t {
                Term::Scalar { var, coeff } => out += coeff * cr(rep.scalars[*var]),
                Term::Block { var, adj } => {
                    // reconstruct L(X) from its coordinates in the orthonormal basis
                    let x = &rep.blocks[*var];
                    for g in &basis {
                        out += g * cr(tr_prod(&adj(g), x));
                    }
                }
            }
        }
        out
    }
}

/// Top-left `k x k` corner of a `2k` block.
pub fn corner_tl(var: usize, k: usize) -> HExpr {
    let mut e = HExpr::zero(k);
    e.add_block(var, Rc::new(move |g: &CMat| embed(g, 2 * k, 0, 0)));
    e
}

/// Bottom-right `k x k` corner of a `2k` block.
pub fn corner_br(var: usize, k: usize) -> HExpr {
    let mut e = HExpr::zero(k);
    e.add_block(var, Rc::new(move |g: &CMat| embed(g, 2 * k, k, k)));
    e
}

/// Coefficient of `Re Tr X` where X is the top-right corner of a `2k` block.
pub fn re_trace_offdiag(k: usize) -> CMat {
    let mut m = CMat::zeros(2 * k, 2 * k);
    for i in 0..k {
        m[(i, k + i)] = cr(0.5);
        m[(k + i, i)] = cr(0.5);
    }
    m
}

pub fn embed(g: &CMat, n: usize, r: usize, c: usize) -> CMat {
    let mut m = CMat::zeros(n, n);
    m.view_mut((r, c), (g.nrows(), g.ncols())).copy_from(g);
    m
}

/// Adjoint of X -> E(X_in) where E is the channel with Choi block variable:
/// Tr(g E(X)) = Tr((X^T (x) g) J).
pub fn channel_adj(x_in: &CMat) -> Adj {
    let xt = x_in.transpose();
    Rc::new(move |g: &CMat| kron(&xt, g))
}

/// Decomposition variables of an element of cone(F).
#[derive(Clone, Debug)]
pub enum ConeVars {
    Weights { vars: Vec<usize>, points: Vec<CMat> },
    Ppt { block: usize },
}

impl ConeVars {
    pub fn value(&self, rep: &SolveReport) -> CMat {
        match self {
            ConeVars::Weights { vars, points } => {
                let mut m = CMat::zeros(points[0].nrows(), points[0].ncols());
                for (v, p) in vars.iter().zip(points) {
                    m += p * cr(rep.scalars[*v].max(0.0));
                }
                m
            }
            ConeVars::Ppt { block } => rep.blocks[*block].clone(),
        }
    }

    pub fn weights(&self, rep: &SolveReport) -> Option<Vec<f64>> {
        match self {
            ConeVars::Weights { vars, .. } => Some(vars.iter().map(|v| rep.scalars[*v].max(0.0)).collect()),
            ConeVars::Ppt { .. } => None,
        }
    }

    /// The cone element as an expression in the program variables.
    pub fn expr(&self, dim: usize) -> HExpr {
        match self {
            ConeVars::Weights { vars, points } => {
                let mut e = HExpr::zero(dim);
                for (v, p) in vars.iter().zip(points) {
                    e.add_scalar(*v, p.clone());
                }
                e
            }
            ConeVars::Ppt { block } => HExpr::block(*block, dim),
        }
    }
}

pub struct Builder {
    pub prog: ConicProgram,
}

impl Default for Builder {
    fn default() -> Self {
        Builder::new()
    }
}

impl Builder {
    pub fn new() -> Self {
        Builder { prog: ConicProgram::new(0, Vec::new()) }
    }

    pub fn scalar(&mut self) -> usize {
        self.prog.push_scalar()
    }

    pub fn block(&mut self, dim: usize) -> usize {
        self.prog.push_block(dim)
    }

    pub fn eq(&mut self, e: &LinearExpr, rhs: f64) -> Result<()> {
        Ok(self.prog.add_eq(e, rhs)?)
    }

    /// `Tr(g E) = rhs`.
    pub fn functional_eq(&mut self, e: &HExpr, g: &CMat, rhs: f64) -> Result<()> {
        let (lin, k) = e.functional(g);
        self.eq(&lin, rhs - k)
    }

    /// E = target, one real equation per orthonormal Hermitian basis element.
    pub fn pin(&mut self, e: &HExpr, target: &CMat) -> Result<()> {
        for g in hermitian_basis(e.dim) {
            let (lin, k) = e.functional(&g);
            self.eq(&lin, tr_prod(&g, target) - k)?;
        }
        Ok(())
    }

    pub fn pin_zero(&mut self, e: &HExpr) -> Result<()> {
        self.pin(e, &CMat::zeros(e.dim, e.dim))
    }

    /// A fresh element of cone(F) with its decomposition variables.
    pub fn cone_element(&mut self, set: &FreeStateSet) -> Result<ConeVars> {
        let d = set.dim();
        match set.extreme_points() {
            Some(points) => {
                let vars = points.iter().map(|_| self.scalar()).collect();
                Ok(ConeVars::Weights { vars, points })
            }
            None => {
                // separable 2x2 cone relaxed to PPT: S >= 0, S^Gamma >= 0
                let s = self.block(d);
                let t = self.block(d);
                let mut e = HExpr::zero(d);
                e.add_block(s, Rc::new(|g: &CMat| partial_transpose(g, 2, 2)));
                e.add_block(t, Rc::new(|g: &CMat| -g.clone()));
                self.pin_zero(&e)?;
                Ok(ConeVars::Ppt { block: s })
            }
        }
    }

    /// Constrain E to lie in cone(F).
    pub fn in_cone(&mut self, e: &HExpr, set: &FreeStateSet) -> Result<ConeVars> {
        let cv = self.cone_element(set)?;
        let mut diff = e.clone();
        diff.add(&cv.expr(e.dim).scaled(-1.0));
        self.pin_zero(&diff)?;
        Ok(cv)
    }

    /// Trace functional of E.
    pub fn trace_eq(&mut self, e: &HExpr, rhs: f64) -> Result<()> {
        let id = CMat::identity(e.dim, e.dim);
        self.functional_eq(e, &id, rhs)
    }

    pub fn minimize(&mut self, e: &LinearExpr) -> Result<()> {
        Ok(self.prog.set_objective(e)?)
    }

    pub fn solve(&self, ctx: &Ctx) -> Result<SolveReport> {
        Ok(solve(&self.prog, &ctx.solver)?)
    }

    /// Solve and require an optimal status.
    pub fn solve_optimal(&self, ctx: &Ctx, what: &str) -> Result<SolveReport> {
        let rep = self.solve(ctx)?;
        match rep.status {
            Status::Optimal => Ok(rep),
            s => Err(CoreError::Solver(format!("{what}: status {}", s.as_str()))),
        }
    }
}
