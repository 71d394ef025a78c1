//! Free-state sets, resource destroying maps, reference families and the
//! structural classification of resource theories.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::programs::Builder;
use crate::quantum::*;
use crate::tolerance::{Ctx, Tolerances};
use oneshot_conic::LinearExpr;

#[derive(Clone, Debug, PartialEq)]
pub enum FreeStateSet {
    VertexPolytope { vertices: Vec<DensityMatrix> },
    /// States diagonal in the columns of `basis`.
    DiagonalSimplex { dim: usize, basis: CMat },
    GibbsSingleton { energies: Vec<f64>, temperature: f64 },
    /// Separable two-qubit states (exactly the PPT ones).
    SeparablePpt2x2,
}

impl FreeStateSet {
    pub fn polytope(vertices: Vec<DensityMatrix>) -> Result<Self> {
        let f = FreeStateSet::VertexPolytope { vertices };
        f.validate()?;
        Ok(f)
    }

    pub fn diagonal(dim: usize) -> Self {
        FreeStateSet::DiagonalSimplex { dim, basis: CMat::identity(dim, dim) }
    }

    pub fn diagonal_in(basis: CMat) -> Result<Self> {
        let f = FreeStateSet::DiagonalSimplex { dim: basis.nrows(), basis };
        f.validate()?;
        Ok(f)
    }

    pub fn gibbs(energies: Vec<f64>, temperature: f64) -> Result<Self> {
        let f = FreeStateSet::GibbsSingleton { energies, temperature };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FreeStateSet::VertexPolytope { vertices } => {
                let Some(first) = vertices.first() else {
                    return Err(CoreError::Precondition("free set has no vertices".into()));
                };
                if let Some(v) = vertices.iter().find(|v| v.dim() != first.dim()) {
                    return Err(CoreError::Dimension { expected: first.dim(), got: v.dim() });
                }
            }
            FreeStateSet::DiagonalSimplex { dim, basis } => {
                if *dim == 0 || basis.nrows() != *dim || basis.ncols() != *dim {
                    return Err(CoreError::Precondition("basis must be a square matrix of the set dimension".into()));
                }
                let err = max_abs(&(basis.adjoint() * basis - CMat::identity(*dim, *dim)));
                if err > 1e-9 {
                    return Err(CoreError::Precondition(format!("basis is not unitary (residual {err:e})")));
                }
            }
            FreeStateSet::GibbsSingleton { energies, temperature } => {
                if energies.is_empty() {
                    return Err(CoreError::Precondition("no energy levels".into()));
                }
                if energies.iter().any(|e| !e.is_finite()) {
                    return Err(CoreError::Precondition("energies must be finite".into()));
                }
                if !(*temperature > 0.0 && temperature.is_finite()) {
                    return Err(CoreError::Precondition("temperature must be positive".into()));
                }
            }
            FreeStateSet::SeparablePpt2x2 => {}
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            FreeStateSet::VertexPolytope { vertices } => vertices[0].dim(),
            FreeStateSet::DiagonalSimplex { dim, .. } => *dim,
            FreeStateSet::GibbsSingleton { energies, .. } => energies.len(),
            FreeStateSet::SeparablePpt2x2 => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FreeStateSet::VertexPolytope { .. } => "vertex_polytope",
            FreeStateSet::DiagonalSimplex { .. } => "diagonal",
            FreeStateSet::GibbsSingleton { .. } => "gibbs",
            FreeStateSet::SeparablePpt2x2 => "ppt_2x2",
        }
    }

    /// Finite list of extreme points, when the set is a polytope.
    pub fn extreme_points(&self) -> Option<Vec<CMat>> {
        match self {
            FreeStateSet::VertexPolytope { vertices } => Some(vertices.iter().map(|v| v.matrix().clone()).collect()),
            FreeStateSet::DiagonalSimplex { dim, basis } => Some(
                (0..*dim)
                    .map(|j| {
                        let col = basis.column(j);
                        &col * col.adjoint()
                    })
                    .collect(),
            ),
            FreeStateSet::GibbsSingleton { .. } => Some(vec![self.gibbs_state().unwrap().into_matrix()]),
            FreeStateSet::SeparablePpt2x2 => None,
        }
    }

    pub fn gibbs_state(&self) -> Option<DensityMatrix> {
        match self {
            FreeStateSet::GibbsSingleton { energies, temperature } => Some(gibbs_state(energies, *temperature)),
            _ => None,
        }
    }

    /// A state in the relative interior, used as a reference point.
    pub fn center(&self) -> CMat {
        match self.extreme_points() {
            Some(p) => {
                let n = p.len() as f64;
                p.iter().fold(CMat::zeros(self.dim(), self.dim()), |acc, v| acc + v) * cr(1.0 / n)
            }
            None => CMat::identity(4, 4) * cr(0.25),
        }
    }
}

/// Gibbs weights e^{-E_i/T}/Z computed with a shifted exponent.
pub fn gibbs_weights(energies: &[f64], temperature: f64) -> Vec<f64> {
    let e0 = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-(e - e0) / temperature).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

pub fn gibbs_state(energies: &[f64], temperature: f64) -> DensityMatrix {
    DensityMatrix::diagonal(&gibbs_weights(energies, temperature)).expect("Gibbs weights form a state")
}

#[derive(Clone, Debug, PartialEq)]
pub enum RdMapKind {
    CompleteDephasing { basis: CMat },
    ConstantState { sigma: CMat },
    FiniteGroupTwirl { unitaries: Vec<CMat> },
    DepolarizingPseudo { p: f64 },
    /// Matrix acting on row-major vectorized operators.
    LinearCustom { superop: CMat },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdMapSpec {
    pub kind: RdMapKind,
    pub dim: usize,
    pub is_channel: bool,
    pub is_exact: bool,
    pub is_pseudo: bool,
}

fn vec_row(x: &CMat) -> CVec {
    CVec::from_iterator(x.len(), x.transpose().iter().cloned())
}

fn unvec_row(v: &CVec, d: usize) -> CMat {
    CMat::from_row_slice(d, d, v.as_slice())
}

impl RdMapSpec {
    pub fn dephasing(dim: usize) -> Self {
        RdMapSpec {
            kind: RdMapKind::CompleteDephasing { basis: CMat::identity(dim, dim) },
            dim,
            is_channel: true,
            is_exact: true,
            is_pseudo: false,
        }
    }

    pub fn constant(sigma: &DensityMatrix) -> Self {
        RdMapSpec {
            kind: RdMapKind::ConstantState { sigma: sigma.matrix().clone() },
            dim: sigma.dim(),
            is_channel: true,
            is_exact: true,
            is_pseudo: false,
        }
    }

    pub fn twirl(unitaries: Vec<CMat>) -> Self {
        let dim = unitaries[0].nrows();
        RdMapSpec { kind: RdMapKind::FiniteGroupTwirl { unitaries }, dim, is_channel: true, is_exact: false, is_pseudo: false }
    }

    pub fn depolarizing_pseudo(dim: usize, p: f64) -> Self {
        RdMapSpec { kind: RdMapKind::DepolarizingPseudo { p }, dim, is_channel: true, is_exact: false, is_pseudo: true }
    }

    pub fn custom(superop: CMat, is_exact: bool) -> Result<Self> {
        let n = superop.nrows();
        let dim = (n as f64).sqrt().round() as usize;
        if dim * dim != n || superop.ncols() != n {
            return Err(CoreError::Precondition("superoperator must be d^2 x d^2".into()));
        }
        let mut s = RdMapSpec { kind: RdMapKind::LinearCustom { superop }, dim, is_channel: false, is_exact, is_pseudo: false };
        s.is_channel = s.choi().validate(&Tolerances::default()).ok;
        Ok(s)
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            RdMapKind::CompleteDephasing { .. } => "complete_dephasing",
            RdMapKind::ConstantState { .. } => "constant_state",
            RdMapKind::FiniteGroupTwirl { .. } => "finite_group_twirl",
            RdMapKind::DepolarizingPseudo { .. } => "depolarizing_pseudo",
            RdMapKind::LinearCustom { .. } => "linear_custom",
        }
    }

    pub fn is_linear(&self) -> bool {
        true
    }

    /// Action on an arbitrary operator.
    pub fn apply(&self, x: &CMat) -> CMat {
        let d = self.dim;
        match &self.kind {
            RdMapKind::CompleteDephasing { basis } => {
                let y = basis.adjoint() * x * basis;
                basis * CMat::from_diagonal(&y.diagonal()) * basis.adjoint()
            }
            RdMapKind::ConstantState { sigma } => sigma * x.trace(),
            RdMapKind::FiniteGroupTwirl { unitaries } => {
                let n = unitaries.len() as f64;
                unitaries.iter().fold(CMat::zeros(d, d), |acc, u| acc + u * x * u.adjoint()) * cr(1.0 / n)
            }
            RdMapKind::DepolarizingPseudo { p } => {
                x * cr(1.0 - p) + CMat::identity(d, d) * (x.trace() * (*p / d as f64))
            }
            RdMapKind::LinearCustom { superop } => unvec_row(&(superop * vec_row(x)), d),
        }
    }

    /// Hilbert-Schmidt adjoint.
    pub fn adjoint(&self, g: &CMat) -> CMat {
        let d = self.dim;
        match &self.kind {
            RdMapKind::CompleteDephasing { .. } => self.apply(g),
            RdMapKind::ConstantState { sigma } => CMat::identity(d, d) * cr(tr_prod(g, sigma)),
            RdMapKind::FiniteGroupTwirl { unitaries } => {
                let n = unitaries.len() as f64;
                unitaries.iter().fold(CMat::zeros(d, d), |acc, u| acc + u.adjoint() * g * u) * cr(1.0 / n)
            }
            RdMapKind::DepolarizingPseudo { .. } => self.apply(g),
            RdMapKind::LinearCustom { superop } => unvec_row(&(superop.adjoint() * vec_row(g)), d),
        }
    }

    pub fn choi(&self) -> ChannelChoi {
        ChannelChoi::from_map(self.dim, self.dim, |x| self.apply(x))
    }

    /// Check the defining property on free inputs: fixed points for proper RD
    /// maps, landing in the free set for pseudo maps. Returns the worst residual.
    pub fn check_on(&self, free: &FreeStateSet, ctx: &Ctx) -> Result<f64> {
        if free.dim() != self.dim {
            return Err(CoreError::Dimension { expected: free.dim(), got: self.dim });
        }
        let mut samples = free.extreme_points().unwrap_or_else(|| {
            let mut out = Vec::new();
            for r in pauli_eigenstates() {
                for s in pauli_eigenstates() {
                    out.push(kron(&r, &s));
                }
            }
            out
        });
        samples.push(free.center());
        let mut worst: f64 = 0.0;
        for s in &samples {
            let out = self.apply(s);
            if self.is_pseudo {
                let st = DensityMatrix::project(&out)?;
                let m = membership(&st, free, ctx)?;
                worst = worst.max(if m.inside { 0.0 } else { m.violation });
            } else {
                worst = worst.max(max_abs(&(out - s)));
            }
        }
        Ok(worst)
    }
}

pub fn apply_rd_map(spec: &RdMapSpec, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != spec.dim {
        return Err(CoreError::Dimension { expected: spec.dim, got: rho.dim() });
    }
    let out = spec.apply(rho.matrix());
    DensityMatrix::new(hermitian_part(&out), &Tolerances::default())
        .map_err(|e| CoreError::InvalidChannel(format!("{} output is not a state: {e}", spec.name())))
}

/// Six single-qubit Pauli eigenstates.
pub fn pauli_eigenstates() -> Vec<CMat> {
    let mut out = Vec::new();
    for axis in 0..3 {
        for s in [1.0, -1.0] {
            let mut r = [0.0; 3];
            r[axis] = s;
            out.push(bloch_state(r));
        }
    }
    out
}

/// Pure qubit state with the given unit Bloch vector, first amplitude real.
pub fn pure_from_bloch(r: [f64; 3]) -> PureState {
    let n = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let theta = (r[2] / n).clamp(-1.0, 1.0).acos();
    let phi = r[1].atan2(r[0]);
    let s = (theta / 2.0).sin();
    PureState::normalized(CVec::from_vec(vec![cr((theta / 2.0).cos()), c(s * phi.cos(), s * phi.sin())])).unwrap()
}

/// |T> = (|0> + e^{i pi/4}|1>)/sqrt 2.
pub fn t_state() -> PureState {
    let h = 1.0 / 2f64.sqrt();
    PureState::normalized(CVec::from_vec(vec![cr(h), c(h * (PI / 4.0).cos(), h * (PI / 4.0).sin())])).unwrap()
}

/// Qubit magic golden state with Bloch vector (1,1,1)/sqrt 3.
pub fn magic_golden() -> PureState {
    let s = 1.0 / 3f64.sqrt();
    pure_from_bloch([s, s, s])
}

pub fn bell_state() -> PureState {
    let h = 1.0 / 2f64.sqrt();
    PureState::normalized(CVec::from_vec(vec![cr(h), ZERO, ZERO, cr(h)])).unwrap()
}

/// All 60 two-qubit stabilizer states, from pairs of commuting Pauli strings.
pub fn two_qubit_stabilizer_states() -> Vec<CMat> {
    let p = pauli();
    let single = [CMat::identity(2, 2), p[0].clone(), p[1].clone(), p[2].clone()];
    let mut strings = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            if a + b > 0 {
                strings.push(kron(&single[a], &single[b]));
            }
        }
    }
    let id = CMat::identity(4, 4);
    let mut states: Vec<CMat> = Vec::new();
    for i in 0..strings.len() {
        for j in i + 1..strings.len() {
            let (pi, pj) = (&strings[i], &strings[j]);
            if max_abs(&(pi * pj - pj * pi)) > 1e-12 {
                continue;
            }
            for s1 in [1.0, -1.0] {
                for s2 in [1.0, -1.0] {
                    let proj = (&id + pi * cr(s1)) * (&id + pj * cr(s2)) * cr(0.25);
                    if (trace_re(&proj) - 1.0).abs() > 1e-9 {
                        continue;
                    }
                    if !states.iter().any(|s| max_abs(&(s - &proj)) < 1e-9) {
                        states.push(proj);
                    }
                }
            }
        }
    }
    states
}

/// Dimension ladder generator.
#[derive(Clone, Debug, PartialEq)]
pub enum LadderSpec {
    All { max: usize },
    Pow2 { max: usize },
    Squares { max: usize },
    Explicit(Vec<usize>),
}

pub const MAX_LADDER_DIM: usize = 64;

impl LadderSpec {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            LadderSpec::All { max } => (2..=*max).collect(),
            LadderSpec::Pow2 { max } => (1..).map(|k| 1usize << k).take_while(|d| d <= max).collect(),
            LadderSpec::Squares { max } => (2..).map(|k: usize| k * k).take_while(|d| d <= max).collect(),
            LadderSpec::Explicit(v) => v.clone(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            LadderSpec::All { max } => format!("all:{max}"),
            LadderSpec::Pow2 { max } => format!("pow2:{max}"),
            LadderSpec::Squares { max } => format!("squares:{max}"),
            LadderSpec::Explicit(v) => v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","),
        }
    }

    /// `all:8`, `pow2:16`, `squares:16` or a comma list.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || CoreError::Parse(format!("bad ladder spec '{s}'"));
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        let (head, tail) = s.split_once(':').unwrap_or((s, ""));
        let spec = match head {
            "all" => LadderSpec::All { max: if tail.is_empty() { 8 } else { num(tail)? } },
            "pow2" => LadderSpec::Pow2 { max: if tail.is_empty() { 16 } else { num(tail)? } },
            "squares" => LadderSpec::Squares { max: if tail.is_empty() { 16 } else { num(tail)? } },
            _ => LadderSpec::Explicit(s.split(',').map(num).collect::<Result<_>>()?),
        };
        let top = match &spec {
            LadderSpec::All { max } | LadderSpec::Pow2 { max } | LadderSpec::Squares { max } => *max,
            LadderSpec::Explicit(v) => v.iter().copied().max().unwrap_or(0),
        };
        if top > MAX_LADDER_DIM {
            return Err(CoreError::Parse(format!("ladder exceeds d = {MAX_LADDER_DIM}")));
        }
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Constructor {
    Golden(BTreeMap<usize, PureState>),
    Explicit(BTreeMap<usize, DensityMatrix>),
    TensorPower(PureState),
}

impl Constructor {
    pub fn tag(&self) -> &'static str {
        match self {
            Constructor::Golden(_) => "golden",
            Constructor::Explicit(_) => "explicit",
            Constructor::TensorPower(_) => "tensor_power",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceFamily {
    pub ladder_spec: LadderSpec,
    ladder: Vec<usize>,
    pub constructor: Constructor,
}

impl ReferenceFamily {
    pub fn new(ladder_spec: LadderSpec, constructor: Constructor) -> Result<Self> {
        let ladder = ladder_spec.dims();
        if ladder.is_empty() {
            return Err(CoreError::Precondition("empty ladder".into()));
        }
        if ladder.windows(2).any(|w| w[0] >= w[1]) || ladder[0] < 2 {
            return Err(CoreError::Precondition("ladder must be strictly increasing with d >= 2".into()));
        }
        if matches!(&constructor, Constructor::TensorPower(seed) if seed.dim() < 2) {
            return Err(CoreError::Precondition("tensor power seed needs dimension >= 2".into()));
        }
        let fam = ReferenceFamily { ladder_spec, ladder, constructor };
        for &d in &fam.ladder {
            let s = fam.build(d)?;
            if s.dim() != d {
                return Err(CoreError::Dimension { expected: d, got: s.dim() });
            }
        }
        Ok(fam)
    }

    /// Golden family with uniform superpositions (coherence).
    pub fn uniform(ladder_spec: LadderSpec) -> Result<Self> {
        let states = ladder_spec.dims().into_iter().map(|d| (d, PureState::uniform(d))).collect();
        ReferenceFamily::new(ladder_spec, Constructor::Golden(states))
    }

    pub fn tensor_power(seed: PureState, max: usize) -> Result<Self> {
        let s = seed.dim();
        if s < 2 {
            return Err(CoreError::Precondition("tensor power seed needs dimension >= 2".into()));
        }
        let mut dims = Vec::new();
        let mut d = s;
        while d <= max {
            dims.push(d);
            d *= s;
        }
        ReferenceFamily::new(LadderSpec::Explicit(dims), Constructor::TensorPower(seed))
    }

    /// Same constructor on a different ladder.
    pub fn with_ladder(&self, ladder_spec: LadderSpec) -> Result<Self> {
        ReferenceFamily::new(ladder_spec, self.constructor.clone())
    }

    pub fn ladder(&self) -> &[usize] {
        &self.ladder
    }

    pub fn id(&self) -> String {
        format!("{}[{}]", self.constructor.tag(), self.ladder_spec.label())
    }

    fn build(&self, d: usize) -> Result<DensityMatrix> {
        let missing = || CoreError::Precondition(format!("no reference state for d = {d}"));
        match &self.constructor {
            Constructor::Golden(m) => m.get(&d).map(|p| p.density()).ok_or_else(missing),
            Constructor::Explicit(m) => m.get(&d).cloned().ok_or_else(missing),
            Constructor::TensorPower(seed) => {
                let mut cur = seed.clone();
                while cur.dim() < d {
                    cur = cur.kron(seed);
                }
                if cur.dim() == d {
                    Ok(cur.density())
                } else {
                    Err(missing())
                }
            }
        }
    }

    pub fn reference_state(&self, d: usize) -> Result<DensityMatrix> {
        if !self.ladder.contains(&d) {
            return Err(CoreError::Precondition(format!("d = {d} is not on the ladder")));
        }
        self.build(d)
    }

    /// Reference state as a pure vector; error for mixed references.
    pub fn pure_reference(&self, d: usize) -> Result<PureState> {
        let rho = self.reference_state(d)?;
        if !rho.is_pure(1e-9) {
            return Err(CoreError::Precondition(format!("reference state at d = {d} is not pure")));
        }
        Ok(rho.top_vector())
    }

    pub fn down(&self, d: usize) -> Option<usize> {
        let i = self.ladder.iter().position(|&x| x == d)?;
        i.checked_sub(1).map(|j| self.ladder[j])
    }

    pub fn up(&self, d: usize) -> Option<usize> {
        let i = self.ladder.iter().position(|&x| x == d)?;
        self.ladder.get(i + 1).copied()
    }

    pub fn neighbors(&self, d: usize) -> Result<(usize, usize)> {
        if !self.ladder.contains(&d) {
            return Err(CoreError::Precondition(format!("d = {d} is not on the ladder")));
        }
        match (self.down(d), self.up(d)) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(CoreError::Precondition(format!("d = {d} is at the ladder boundary"))),
        }
    }
}

pub fn reference_state(family: &ReferenceFamily, d: usize) -> Result<DensityMatrix> {
    family.reference_state(d)
}

pub fn neighbors(family: &ReferenceFamily, d: usize) -> Result<(usize, usize)> {
    family.neighbors(d)
}

#[derive(Clone, Debug, PartialEq)]
pub enum TheoryKind {
    Coherence,
    Magic,
    Thermo { energies: Vec<f64>, temperature: f64 },
    Superposition { a: PureState, b: PureState },
    Entanglement,
    Custom,
}

/// A resource theory: free sets per dimension, an optional RD map and the
/// default reference family.
#[derive(Clone, Debug, PartialEq)]
pub struct Theory {
    pub id: String,
    pub kind: TheoryKind,
    pub dim: usize,
    pub free: FreeStateSet,
    pub rd_map: Option<RdMapSpec>,
    pub family: ReferenceFamily,
}

impl Theory {
    /// Theory from an explicit single-dimension free set. Linear RD maps are
    /// checked on free inputs and refused when every state has finite robustness.
    pub fn custom(
        id: &str,
        free: FreeStateSet,
        rd_map: Option<RdMapSpec>,
        family: ReferenceFamily,
        ctx: &Ctx,
    ) -> Result<Self> {
        free.validate()?;
        if let Some(spec) = &rd_map {
            if matches!(spec.kind, RdMapKind::LinearCustom { .. }) && ffr_rank(&free).0 {
                return Err(CoreError::Precondition(
                    "theory has finite robustness for all states; a linear RD channel cannot exist".into(),
                ));
            }
            let worst = spec.check_on(&free, ctx)?;
            if worst > 1e-8 {
                return Err(CoreError::Precondition(format!(
                    "RD map does not preserve free states (residual {worst:e})"
                )));
            }
        }
        Ok(Theory { id: id.to_string(), kind: TheoryKind::Custom, dim: free.dim(), free, rd_map, family })
    }

    /// Free set at dimension `d`.
    pub fn free_set(&self, d: usize) -> Result<FreeStateSet> {
        let unsupported = || CoreError::Unsupported(format!("theory '{}' has no free set at d = {d}", self.id));
        if d == self.dim {
            return Ok(self.free.clone());
        }
        match &self.kind {
            TheoryKind::Coherence if d >= 1 => Ok(FreeStateSet::diagonal(d)),
            TheoryKind::Magic if d == 2 => magic_free_set(1),
            TheoryKind::Magic if d == 4 => magic_free_set(2),
            TheoryKind::Thermo { energies, temperature } if d >= 1 && d <= energies.len() => {
                FreeStateSet::gibbs(energies[..d].to_vec(), *temperature)
            }
            TheoryKind::Superposition { a, b } if d >= 2 && d.is_power_of_two() => {
                superposition_free_set(a, b, d.trailing_zeros() as usize)
            }
            _ => Err(unsupported()),
        }
    }

    /// RD map at dimension `d`, if the theory has one there.
    pub fn rd_map_at(&self, d: usize) -> Option<RdMapSpec> {
        if d == self.dim {
            return self.rd_map.clone();
        }
        match &self.kind {
            TheoryKind::Coherence => Some(RdMapSpec::dephasing(d)),
            TheoryKind::Thermo { .. } => self.free_set(d).ok()?.gibbs_state().map(|t| RdMapSpec::constant(&t)),
            TheoryKind::Magic if d == 2 => Some(RdMapSpec::depolarizing_pseudo(2, 1.0 - 1.0 / 3f64.sqrt())),
            _ => None,
        }
    }
}

fn magic_free_set(n: usize) -> Result<FreeStateSet> {
    let pts = match n {
        1 => pauli_eigenstates(),
        2 => two_qubit_stabilizer_states(),
        _ => return Err(CoreError::Unsupported("magic theory only for one or two qubits".into())),
    };
    FreeStateSet::polytope(pts.into_iter().map(|m| DensityMatrix::project(&m)).collect::<Result<_>>()?)
}

fn superposition_free_set(a: &PureState, b: &PureState, n: usize) -> Result<FreeStateSet> {
    let (mut va, mut vb) = (a.clone(), b.clone());
    for _ in 1..n {
        va = va.kron(a);
        vb = vb.kron(b);
    }
    FreeStateSet::polytope(vec![va.density(), vb.density()])
}

/// Qubit state minimizing the larger overlap with two pure qubit states.
pub fn superposition_golden(a: &PureState, b: &PureState) -> PureState {
    let (ra, rb) = (a.bloch().unwrap(), b.bloch().unwrap());
    let s = [-(ra[0] + rb[0]), -(ra[1] + rb[1]), -(ra[2] + rb[2])];
    let n = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
    if n < 1e-12 {
        // antipodal pair: any state on the equator between them
        let mut perp = [rb[1] - ra[1], ra[0] - rb[0], 0.0];
        if perp.iter().map(|x| x * x).sum::<f64>() < 1e-12 {
            perp = [1.0, 0.0, 0.0];
        }
        return pure_from_bloch(perp);
    }
    pure_from_bloch([s[0] / n, s[1] / n, s[2] / n])
}

/// Built-in theories by name: `coherence:d`, `magic1`, `magic2`,
/// `thermo:E0,E1,...:T`, `superposition[:angle[:n]]`, `entanglement`.
/// An optional `builtin:` prefix is accepted.
pub fn builtin_theory(name: &str) -> Result<Theory> {
    let name = name.strip_prefix("builtin:").unwrap_or(name);
    let parts: Vec<&str> = name.split(':').collect();
    let bad = |m: &str| CoreError::Unsupported(format!("builtin theory '{name}': {m}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("bad number"));
    match parts[0] {
        "coherence" => {
            let d = match parts.get(1) {
                Some(s) => s.parse::<usize>().map_err(|_| bad("bad dimension"))?,
                None => 2,
            };
            if !(2..=16).contains(&d) || parts.len() > 2 {
                return Err(bad("dimension must be in 2..=16"));
            }
            Ok(Theory {
                id: format!("builtin:coherence:{d}"),
                kind: TheoryKind::Coherence,
                dim: d,
                free: FreeStateSet::diagonal(d),
                rd_map: Some(RdMapSpec::dephasing(d)),
                family: ReferenceFamily::uniform(LadderSpec::All { max: d.max(8) })?,
            })
        }
        "magic1" | "magic2" | "magic_qubit" => {
            let n = match (parts[0], parts.get(1)) {
                ("magic1", None) => 1,
                ("magic2", None) => 2,
                ("magic_qubit", Some(s)) => s.parse::<usize>().map_err(|_| bad("bad qubit count"))?,
                _ => return Err(bad("unexpected parameters")),
            };
            let free = magic_free_set(n)?;
            let rd = if n == 1 { Some(RdMapSpec::depolarizing_pseudo(2, 1.0 - 1.0 / 3f64.sqrt())) } else { None };
            Ok(Theory {
                id: format!("builtin:magic{n}"),
                kind: TheoryKind::Magic,
                dim: 1 << n,
                free,
                rd_map: rd,
                family: ReferenceFamily::tensor_power(magic_golden(), 4)?,
            })
        }
        "thermo" => {
            if parts.len() != 3 {
                return Err(bad("expected thermo:E0,E1,...:T"));
            }
            let energies: Vec<f64> = parts[1].split(',').map(num).collect::<Result<_>>()?;
            let t = num(parts[2])?;
            if energies.len() < 2 || energies.len() > 16 {
                return Err(bad("need between 2 and 16 energy levels"));
            }
            let free = FreeStateSet::gibbs(energies.clone(), t)?;
            let tau = free.gibbs_state().unwrap();
            let ladder = LadderSpec::All { max: energies.len() };
            let states = ladder
                .dims()
                .into_iter()
                .map(|d| (d, PureState::basis(d, top_level(&energies[..d]))))
                .collect();
            Ok(Theory {
                id: format!("builtin:thermo:{}:{}", parts[1], parts[2]),
                kind: TheoryKind::Thermo { energies: energies.clone(), temperature: t },
                dim: energies.len(),
                free,
                rd_map: Some(RdMapSpec::constant(&tau)),
                family: ReferenceFamily::new(ladder, Constructor::Golden(states))?,
            })
        }
        "superposition" => {
            let angle = match parts.get(1) {
                Some(s) => num(s)?,
                None => PI / 4.0,
            };
            let n = match parts.get(2) {
                Some(s) => s.parse::<usize>().map_err(|_| bad("bad copy count"))?,
                None => 1,
            };
            if !(1..=4).contains(&n) || parts.len() > 3 {
                return Err(bad("copy count must be in 1..=4"));
            }
            let a = PureState::basis(2, 0);
            let b = PureState::normalized(CVec::from_vec(vec![cr(angle.cos()), cr(angle.sin())]))?;
            if (a.vector().dotc(b.vector())).norm() > 1.0 - 1e-9 {
                return Err(bad("the two states must differ"));
            }
            let g = superposition_golden(&a, &b);
            Ok(Theory {
                id: format!("builtin:superposition:{angle}:{n}"),
                kind: TheoryKind::Superposition { a: a.clone(), b: b.clone() },
                dim: 1 << n,
                free: superposition_free_set(&a, &b, n)?,
                rd_map: None,
                family: ReferenceFamily::tensor_power(g, (1 << n).max(8))?,
            })
        }
        "entanglement" | "entanglement_2x2" => {
            if parts.len() > 1 {
                return Err(bad("no parameters expected"));
            }
            let states = BTreeMap::from([(4, bell_state())]);
            Ok(Theory {
                id: "builtin:entanglement".into(),
                kind: TheoryKind::Entanglement,
                dim: 4,
                free: FreeStateSet::SeparablePpt2x2,
                rd_map: Some(RdMapSpec::depolarizing_pseudo(4, 2.0 / 3.0)),
                family: ReferenceFamily::new(LadderSpec::Explicit(vec![4]), Constructor::Golden(states))?,
            })
        }
        _ => Err(bad("unknown theory")),
    }
}

/// Index of the largest energy, lowest index on ties.
pub fn top_level(energies: &[f64]) -> usize {
    let mut best = 0;
    for (i, &e) in energies.iter().enumerate() {
        if e > energies[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub enum MembershipCertificate {
    /// Convex weights over the extreme points.
    Weights(Vec<f64>),
    /// Minimum eigenvalue of the partial transpose.
    PptMinEig(f64),
    /// Hermitian X with Tr(X sigma) <= 1 on the free set and Tr(X rho) > 1.
    Witness { x: CMat, value: f64, free_max: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Membership {
    pub inside: bool,
    /// How far outside: distance-like residual, 0 when inside.
    pub violation: f64,
    pub certificate: MembershipCertificate,
}

fn witness(rho: &CMat, y: &CMat, free_max_of: impl Fn(&CMat) -> f64) -> MembershipCertificate {
    let d = rho.nrows();
    let s = eigvalsh(y).iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut x = CMat::identity(d, d) + y * cr(1.0 / s);
    let fm = free_max_of(&x);
    if fm > 1.0 {
        // renormalize so the free maximum is exactly at most 1
        let shift = fm - 1.0;
        x -= CMat::identity(d, d) * cr(shift);
    }
    let value = tr_prod(&x, rho);
    MembershipCertificate::Witness { free_max: free_max_of(&x), value, x }
}

pub fn membership(rho: &DensityMatrix, f: &FreeStateSet, ctx: &Ctx) -> Result<Membership> {
    if rho.dim() != f.dim() {
        return Err(CoreError::Dimension { expected: f.dim(), got: rho.dim() });
    }
    let tol = ctx.tol.freeness;
    let r = rho.matrix();
    let d = rho.dim();
    match f {
        FreeStateSet::DiagonalSimplex { basis, .. } => {
            let y = basis.adjoint() * r * basis;
            let off = &y - CMat::from_diagonal(&y.diagonal());
            let v = frobenius(&off);
            if v <= tol {
                let w = y.diagonal().iter().map(|z| z.re.max(0.0)).collect();
                return Ok(Membership { inside: true, violation: 0.0, certificate: MembershipCertificate::Weights(w) });
            }
            let yw = basis * off * basis.adjoint();
            let cert = witness(r, &yw, |x| {
                f.extreme_points().unwrap().iter().map(|p| tr_prod(x, p)).fold(f64::MIN, f64::max)
            });
            Ok(Membership { inside: false, violation: v, certificate: cert })
        }
        FreeStateSet::GibbsSingleton { .. } => {
            let tau = f.gibbs_state().unwrap().into_matrix();
            let diff = r - &tau;
            let v = frobenius(&diff);
            if v <= tol {
                return Ok(Membership { inside: true, violation: 0.0, certificate: MembershipCertificate::Weights(vec![1.0]) });
            }
            let y = &diff - CMat::identity(d, d) * cr(tr_prod(&diff, &tau));
            let cert = witness(r, &y, |x| tr_prod(x, &tau));
            Ok(Membership { inside: false, violation: v, certificate: cert })
        }
        FreeStateSet::SeparablePpt2x2 => {
            let pt = partial_transpose(r, 2, 2);
            let (vals, vecs) = eigh(&pt);
            if vals[0] >= -ctx.tol.psd {
                return Ok(Membership { inside: true, violation: 0.0, certificate: MembershipCertificate::PptMinEig(vals[0]) });
            }
            // W = (|v><v|)^Gamma has Tr(W sigma) >= 0 on PPT states
            let v = vecs.column(0);
            let w = partial_transpose(&(&v * v.adjoint()), 2, 2);
            let y = -w;
            let s = eigvalsh(&y).iter().fold(0.0f64, |m, e| m.max(e.abs()));
            let x = CMat::identity(4, 4) + &y * cr(1.0 / s);
            let value = tr_prod(&x, r);
            Ok(Membership {
                inside: false,
                violation: -vals[0],
                certificate: MembershipCertificate::Witness { x, value, free_max: 1.0 },
            })
        }
        FreeStateSet::VertexPolytope { vertices } => polytope_membership(r, vertices, ctx),
    }
}

/// Ray shooting from the centroid c: maximize t with c + t(rho - c) in conv(V).
fn polytope_membership(r: &CMat, vertices: &[DensityMatrix], ctx: &Ctx) -> Result<Membership> {
    let d = r.nrows();
    let n = vertices.len();
    let pts: Vec<CMat> = vertices.iter().map(|v| v.matrix().clone()).collect();
    let centre = pts.iter().fold(CMat::zeros(d, d), |a, v| a + v) * cr(1.0 / n as f64);
    let dir = r - &centre;
    if max_abs(&dir) <= 1e-12 {
        return Ok(Membership {
            inside: true,
            violation: 0.0,
            certificate: MembershipCertificate::Weights(vec![1.0 / n as f64; n]),
        });
    }
    let mut b = Builder::new();
    let w: Vec<usize> = (0..n).map(|_| b.scalar()).collect();
    let t = b.scalar();
    let basis = hermitian_basis(d);
    for g in &basis {
        let mut e = LinearExpr::new();
        for (i, p) in pts.iter().enumerate() {
            e.add_scalar(w[i], tr_prod(g, p));
        }
        e.add_scalar(t, -tr_prod(g, &dir));
        b.eq(&e, tr_prod(g, &centre))?;
    }
    b.minimize(&LinearExpr::new().scalar(t, -1.0))?;
    let rep = b.solve(ctx)?;
    let free_max = |x: &CMat| pts.iter().map(|p| tr_prod(x, p)).fold(f64::MIN, f64::max);
    match rep.status {
        oneshot_conic::Status::Optimal => {
            let tstar = rep.scalars[t];
            if tstar >= 1.0 - 1e-9 {
                let wt: Vec<f64> = w
                    .iter()
                    .map(|&i| (1.0 - 1.0 / tstar) / n as f64 + rep.scalars[i].max(0.0) / tstar)
                    .collect();
                let recon = pts.iter().zip(&wt).fold(CMat::zeros(d, d), |a, (p, &x)| a + p * cr(x));
                let resid = frobenius(&(recon - r));
                if resid <= ctx.tol.freeness {
                    return Ok(Membership { inside: true, violation: 0.0, certificate: MembershipCertificate::Weights(wt) });
                }
            }
            let y = basis.iter().zip(&rep.dual).fold(CMat::zeros(d, d), |a, (g, &yk)| a + g * cr(yk));
            // orient so that rho is on the positive side
            let y = if tr_prod(&y, r) - free_max(&y) >= -tr_prod(&y, r) - free_max(&(-&y)) { y } else { -y };
            let cert = witness(r, &y, free_max);
            let violation = (1.0 - tstar.max(0.0)) * frobenius(&dir);
            Ok(Membership { inside: false, violation, certificate: cert })
        }
        oneshot_conic::Status::Unbounded => Ok(Membership {
            inside: true,
            violation: 0.0,
            certificate: MembershipCertificate::Weights(vec![1.0 / n as f64; n]),
        }),
        s => Err(CoreError::Solver(format!("membership LP: status {}", s.as_str()))),
    }
}

/// Real coordinates in the orthonormal Hermitian basis.
pub fn hvec(m: &CMat) -> Vec<f64> {
    hermitian_basis(m.nrows()).iter().map(|g| tr_prod(g, m)).collect()
}

fn real_rank(rows: &[Vec<f64>], tol: f64) -> (usize, DMatrix<f64>) {
    let cols = rows[0].len();
    let m = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    let svd = m.svd(false, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol * smax.max(1.0)).count();
    (rank, svd.v_t.unwrap())
}

/// Every state has finite free robustness: the free set spans the Hermitian space.
pub fn has_ffr(f: &FreeStateSet) -> bool {
    ffr_rank(f).0
}

/// Product states of Pauli eigenstates on two qubits.
pub fn product_probes() -> Vec<CMat> {
    let p = pauli_eigenstates();
    let mut out = Vec::with_capacity(36);
    for a in &p {
        for b in &p {
            out.push(kron(a, b));
        }
    }
    out
}

/// (spans full Hermitian space, rank).
fn ffr_rank(f: &FreeStateSet) -> (bool, usize) {
    let d = f.dim();
    match f.extreme_points() {
        Some(p) => {
            let rows: Vec<Vec<f64>> = p.iter().map(hvec).collect();
            let (r, _) = real_rank(&rows, 1e-9);
            (r == d * d, r)
        }
        None => (true, 16),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub value: bool,
    pub evidence: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryClassification {
    pub convex: Flag,
    pub affine: Flag,
    pub ffr: Flag,
    pub ch: Flag,
    pub ct: Option<Flag>,
    /// max - min of Tr(phi_d sigma) over free extreme points, per ladder dimension.
    #[serde(with = "crate::io::pairs")]
    pub ct_residuals: Vec<(usize, f64)>,
}

fn flag(value: bool, evidence: impl Into<String>) -> Flag {
    Flag { value, evidence: evidence.into() }
}

/// Affine test for a polytope: conv(V) = aff(V) cap D, compared through
/// support functions along tangent directions of the affine hull.
fn polytope_affine(points: &[CMat], ctx: &Ctx) -> Result<Flag> {
    let d = points[0].nrows();
    let v0 = &points[0];
    if points.len() == 1 {
        return Ok(flag(true, "singleton"));
    }
    let diffs: Vec<Vec<f64>> = points[1..].iter().map(|p| hvec(&(p - v0))).collect();
    let (k, vt) = real_rank(&diffs, 1e-9);
    if k == d * d - 1 {
        return Ok(flag(false, format!("affine hull has full dimension {k}; free set is a proper subset of all states")));
    }
    let basis = hermitian_basis(d);
    let to_mat = |coef: &[f64]| basis.iter().zip(coef).fold(CMat::zeros(d, d), |a, (g, &x)| a + g * cr(x));
    let tangent: Vec<Vec<f64>> = (0..k).map(|i| vt.row(i).iter().cloned().collect()).collect();
    // orthogonal complement of the tangent space
    let mut proj = DMatrix::<f64>::identity(d * d, d * d);
    for t in &tangent {
        let tv = nalgebra::DVector::from_column_slice(t);
        proj -= &tv * tv.transpose();
    }
    let svd = proj.clone().svd(true, false);
    let u = svd.u.unwrap();
    let normals: Vec<CMat> = (0..d * d)
        .filter(|&i| svd.singular_values[i] > 0.5)
        .map(|i| to_mat(u.column(i).as_slice()))
        .collect();
    let mut dirs: Vec<CMat> = Vec::new();
    for t in &tangent {
        let m = to_mat(t);
        dirs.push(m.clone());
        dirs.push(-m);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..16 {
        let coef: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut m = CMat::zeros(d, d);
        for (t, &x) in tangent.iter().zip(&coef) {
            m += to_mat(t) * cr(x);
        }
        dirs.push(m);
    }
    let mut worst: f64 = 0.0;
    for h in &dirs {
        let poly = points.iter().map(|p| tr_prod(h, p)).fold(f64::MIN, f64::max);
        let mut b = Builder::new();
        let s = b.block(d);
        for g in &normals {
            let mut e = LinearExpr::new();
            e.add_block(s, g.clone());
            b.eq(&e, tr_prod(g, v0))?;
        }
        b.minimize(&LinearExpr::new().block(s, -h))?;
        let rep = b.solve_optimal(ctx, "affine support")?;
        worst = worst.max(-rep.objective - poly);
    }
    let ok = worst <= 1e-6;
    Ok(flag(ok, format!("affine hull dimension {k}; max support gap over {} directions {worst:.3e}", dirs.len())))
}

/// Spread of Tr(phi sigma) over the free set.
fn overlap_spread(phi: &CMat, f: &FreeStateSet, ctx: &Ctx) -> Result<f64> {
    match f.extreme_points() {
        Some(p) => {
            let vals: Vec<f64> = p.iter().map(|v| tr_prod(phi, v)).collect();
            let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
            let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
            Ok(hi - lo)
        }
        None => {
            let mut ext = [0.0; 2];
            for (i, sign) in [1.0, -1.0].into_iter().enumerate() {
                let mut b = Builder::new();
                let cv = b.cone_element(f)?;
                let e = cv.expr(4);
                b.trace_eq(&e, 1.0)?;
                let (lin, _) = e.functional(&(phi * cr(-sign)));
                b.minimize(&lin)?;
                let rep = b.solve_optimal(ctx, "overlap bound")?;
                ext[i] = -sign * rep.objective;
            }
            Ok(ext[0] - ext[1])
        }
    }
}

/// Structural flags of a theory; CT is evaluated against `family` when given.
pub fn classify_theory(theory: &Theory, family: Option<&ReferenceFamily>, ctx: &Ctx) -> Result<TheoryClassification> {
    let f = &theory.free;
    let d = f.dim();
    let (ffr_full, rank) = ffr_rank(f);
    let (affine, ffr, ch) = match f {
        FreeStateSet::VertexPolytope { vertices } => {
            let pts: Vec<CMat> = vertices.iter().map(|v| v.matrix().clone()).collect();
            let pure = vertices.iter().all(|v| v.is_pure(1e-9));
            (
                polytope_affine(&pts, ctx)?,
                flag(ffr_full, format!("span rank {rank} of {}", d * d)),
                flag(pure, if pure { "all vertices pure" } else { "mixed vertex present" }),
            )
        }
        FreeStateSet::DiagonalSimplex { .. } => (
            flag(true, "diagonal states are the intersection of an affine subspace with the state space"),
            flag(d == 1, format!("span rank {rank} of {}", d * d)),
            flag(true, "basis states are pure"),
        ),
        FreeStateSet::GibbsSingleton { .. } => (
            flag(true, "singleton"),
            flag(d == 1, format!("span rank 1 of {}", d * d)),
            flag(d == 1, "Gibbs state has full rank"),
        ),
        FreeStateSet::SeparablePpt2x2 => (
            flag(false, "Bell state lies in the affine hull but is not free"),
            flag(true, "product Pauli eigenstates span all 16 dimensions"),
            flag(true, "separable states are mixtures of pure product states"),
        ),
    };
    let mut ct_residuals = Vec::new();
    // CT is a property of (theory, family); default to the theory's own family
    let ct = {
        let fam = family.unwrap_or(&theory.family);
        let thr = if f.extreme_points().is_some() { 1e-10 } else { 1e-6 };
        let mut all = true;
        let mut skipped = Vec::new();
        for &dd in fam.ladder() {
            let Ok(fs) = theory.free_set(dd) else {
                skipped.push(dd);
                continue;
            };
            let phi = fam.reference_state(dd)?;
            let spread = overlap_spread(phi.matrix(), &fs, ctx)?;
            all &= spread <= thr;
            ct_residuals.push((dd, spread));
        }
        let worst = ct_residuals.iter().map(|x| x.1).fold(0.0, f64::max);
        let mut ev = format!("max spread {worst:.3e} over {} ladder dimensions", ct_residuals.len());
        if !skipped.is_empty() {
            ev.push_str(&format!("; no free set at {skipped:?}"));
        }
        Some(flag(all && !ct_residuals.is_empty(), ev))
    };
    Ok(TheoryClassification {
        convex: flag(true, format!("{} sets are convex", f.kind())),
        affine,
        ffr,
        ch,
        ct,
        ct_residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stabilizer_count() {
        let s = two_qubit_stabilizer_states();
        assert_eq!(s.len(), 60);
        for p in &s {
            assert!(max_abs(&(p * p - p)) < 1e-12);
        }
    }

    #[test]
    fn ladders() {
        assert_eq!(LadderSpec::Pow2 { max: 16 }.dims(), vec![2, 4, 8, 16]);
        assert_eq!(LadderSpec::Squares { max: 16 }.dims(), vec![4, 9, 16]);
        assert_eq!(LadderSpec::parse("2,3,5").unwrap().dims(), vec![2, 3, 5]);
        let fam = ReferenceFamily::tensor_power(t_state(), 8).unwrap();
        assert_eq!(fam.neighbors(4).unwrap(), (2, 8));
        assert!(fam.neighbors(2).is_err());
        assert!(fam.reference_state(3).is_err());
    }

    #[test]
    fn gibbs_formula() {
        let t = gibbs_state(&[0.0, 1.0], 1.0);
        let e = (-1.0f64).exp();
        assert!((t.matrix()[(0, 0)].re - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((t.matrix()[(1, 1)].re - e / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn octahedron_membership_matches_bloch_norm() {
        let ctx = Ctx::default();
        let th = builtin_theory("magic1").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let rho = random_density(2, &mut rng);
            let r = bloch_vector(rho.matrix()).unwrap();
            let l1 = r[0].abs() + r[1].abs() + r[2].abs();
            if (l1 - 1.0).abs() < 1e-6 {
                continue;
            }
            let m = membership(&rho, &th.free, &ctx).unwrap();
            assert_eq!(m.inside, l1 <= 1.0, "l1 = {l1}");
            if let MembershipCertificate::Witness { value, free_max, .. } = m.certificate {
                assert!(value > 1.0 && free_max <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn rd_maps_fix_free_states() {
        let ctx = Ctx::default();
        for name in ["coherence:3", "thermo:0,1,3:0.7"] {
            let th = builtin_theory(name).unwrap();
            let spec = th.rd_map.as_ref().unwrap();
            assert!(spec.check_on(&th.free, &ctx).unwrap() < 1e-12);
        }
        let th = builtin_theory("entanglement").unwrap();
        assert!(th.rd_map.as_ref().unwrap().check_on(&th.free, &ctx).unwrap() <= 1e-8);
    }

    #[test]
    fn adjoints_are_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u1 = random_unitary(3, &mut rng);
        let specs = vec![
            RdMapSpec::dephasing(3),
            RdMapSpec::constant(&random_density(3, &mut rng)),
            RdMapSpec::twirl(vec![CMat::identity(3, 3), u1]),
            RdMapSpec::depolarizing_pseudo(3, 0.3),
            RdMapSpec::custom(random_channel(3, 3, &mut rng).j.clone(), false).unwrap(),
        ];
        for s in specs {
            let x = random_density(3, &mut rng).into_matrix();
            let g = hermitian_part(&random_density(3, &mut rng).into_matrix());
            assert!((tr_prod(&g, &s.apply(&x)) - tr_prod(&s.adjoint(&g), &x)).abs() < 1e-12, "{}", s.name());
        }
    }

    #[test]
    fn classification_examples() {
        let ctx = Ctx::default();
        let coh = builtin_theory("coherence:3").unwrap();
        let c = classify_theory(&coh, Some(&coh.family), &ctx).unwrap();
        assert!(c.affine.value && !c.ffr.value && c.ct.unwrap().value);
        let mg = builtin_theory("magic1").unwrap();
        let c = classify_theory(&mg, None, &ctx).unwrap();
        assert!(!c.affine.value && c.ffr.value && !c.ct.unwrap().value);
        let sp = builtin_theory("superposition").unwrap();
        let c = classify_theory(&sp, Some(&sp.family), &ctx).unwrap();
        assert!(c.ct.unwrap().value, "{:?}", c.ct_residuals);
        assert!(c.ct_residuals.iter().all(|r| r.1 <= 1e-10));
        let en = builtin_theory("entanglement").unwrap();
        let c = classify_theory(&en, Some(&en.family), &ctx).unwrap();
        assert!(!c.ct.unwrap().value);
        assert!((c.ct_residuals[0].1 - 0.5).abs() < 1e-6);
    }
}
