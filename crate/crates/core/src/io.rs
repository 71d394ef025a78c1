//! JSON formats.
//!
//! Matrices are `{"dim": d, "entries": [[re, im], ...]}` in row-major order,
//! optionally tagged with `"kind"`. States use kind `"state"` (density
//! matrix) or `"pure"` (entries hold the d amplitudes). Choi matrices use
//! kind `"choi"` plus `"d_in"`/`"d_out"`. Non-finite report numbers are the
//! strings `"inf"`, `"-inf"` and `"nan"`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map, Value};

use crate::error::{CoreError, Result};
use crate::quantum::*;
use crate::theories::{
    builtin_theory, Constructor, FreeStateSet, LadderSpec, RdMapKind, RdMapSpec, ReferenceFamily, Theory,
    TheoryKind,
};
use crate::tolerance::{Ctx, Tolerances};

/// Largest matrix side accepted by the decoders.
pub const MAX_DIM: usize = 256;
/// Largest state dimension accepted in theory files.
pub const MAX_STATE_DIM: usize = 16;
const MAX_VERTICES: usize = 4096;

fn perr(msg: impl Into<String>) -> CoreError {
    CoreError::Parse(msg.into())
}

fn parse_value(s: &str) -> Result<Value> {
    serde_json::from_str(s).map_err(|e| perr(format!("invalid JSON: {e}")))
}

fn get<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| perr(format!("missing field '{key}'")))
}

fn get_usize(v: &Value, key: &str) -> Result<usize> {
    get(v, key)?
        .as_u64()
        .and_then(|x| usize::try_from(x).ok())
        .ok_or_else(|| perr(format!("field '{key}' must be a nonnegative integer")))
}

fn get_f64(v: &Value, key: &str) -> Result<f64> {
    let x = get(v, key)?.as_f64().ok_or_else(|| perr(format!("field '{key}' must be a number")))?;
    if !x.is_finite() {
        return Err(perr(format!("field '{key}' must be finite")));
    }
    Ok(x)
}

fn kind_of(v: &Value) -> Result<Option<&str>> {
    match v.get("kind") {
        None => Ok(None),
        Some(k) => k.as_str().map(Some).ok_or_else(|| perr("field 'kind' must be a string")),
    }
}

fn entries(v: &Value, n: usize) -> Result<Vec<Complex64>> {
    let arr = get(v, "entries")?.as_array().ok_or_else(|| perr("'entries' must be an array"))?;
    if arr.len() != n {
        return Err(perr(format!("expected {n} entries, found {}", arr.len())));
    }
    arr.iter()
        .map(|e| {
            let pair = e.as_array().filter(|p| p.len() == 2).ok_or_else(|| perr("entries must be [re, im] pairs"))?;
            let re = pair[0].as_f64().ok_or_else(|| perr("entry parts must be numbers"))?;
            let im = pair[1].as_f64().ok_or_else(|| perr("entry parts must be numbers"))?;
            if !re.is_finite() || !im.is_finite() {
                return Err(perr("entry parts must be finite"));
            }
            Ok(c(re, im))
        })
        .collect()
}

fn entries_value<'a>(it: impl Iterator<Item = &'a Complex64>) -> Value {
    Value::Array(it.map(|z| json!([z.re, z.im])).collect())
}

pub fn matrix_to_value(m: &CMat, kind: Option<&str>) -> Value {
    let mut o = Map::new();
    if let Some(k) = kind {
        o.insert("kind".into(), json!(k));
    }
    o.insert("dim".into(), json!(m.nrows()));
    // row-major
    o.insert("entries".into(), entries_value(m.transpose().iter()));
    Value::Object(o)
}

pub fn matrix_from_value(v: &Value) -> Result<CMat> {
    let d = get_usize(v, "dim")?;
    if d == 0 || d > MAX_DIM {
        return Err(perr(format!("dim must be in 1..={MAX_DIM}")));
    }
    Ok(CMat::from_row_slice(d, d, &entries(v, d * d)?))
}

pub fn parse_matrix(s: &str) -> Result<CMat> {
    matrix_from_value(&parse_value(s)?)
}

pub fn pure_to_value(p: &PureState) -> Value {
    json!({"kind": "pure", "dim": p.dim(), "entries": entries_value(p.vector().iter())})
}

pub fn state_to_value(rho: &DensityMatrix) -> Value {
    matrix_to_value(rho.matrix(), Some("state"))
}

fn check_state_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_STATE_DIM {
        return Err(perr(format!("state dim must be in 1..={MAX_STATE_DIM}")));
    }
    Ok(())
}

pub fn pure_from_value(v: &Value, tol: &Tolerances) -> Result<PureState> {
    if kind_of(v)? != Some("pure") {
        return Err(perr("expected kind 'pure'"));
    }
    let d = get_usize(v, "dim")?;
    check_state_dim(d)?;
    PureState::new(CVec::from_vec(entries(v, d)?), tol)
}

/// Density matrix or pure vector, validated against `tol`.
pub fn state_from_value(v: &Value, tol: &Tolerances) -> Result<DensityMatrix> {
    match kind_of(v)? {
        Some("pure") => Ok(pure_from_value(v, tol)?.density()),
        None | Some("state") => {
            let d = get_usize(v, "dim")?;
            check_state_dim(d)?;
            DensityMatrix::new(matrix_from_value(v)?, tol)
        }
        Some(k) => Err(perr(format!("expected a state, found kind '{k}'"))),
    }
}

pub fn parse_state(s: &str, tol: &Tolerances) -> Result<DensityMatrix> {
    state_from_value(&parse_value(s)?, tol)
}

pub fn choi_to_value(e: &ChannelChoi) -> Value {
    let mut v = matrix_to_value(&e.j, Some("choi"));
    v["d_in"] = json!(e.d_in);
    v["d_out"] = json!(e.d_out);
    v
}

pub fn choi_from_value(v: &Value) -> Result<ChannelChoi> {
    if kind_of(v)? != Some("choi") {
        return Err(perr("expected kind 'choi'"));
    }
    let (a, b) = (get_usize(v, "d_in")?, get_usize(v, "d_out")?);
    if a == 0 || b == 0 || a > MAX_STATE_DIM || b > MAX_STATE_DIM {
        return Err(perr(format!("channel dimensions must be in 1..={MAX_STATE_DIM}")));
    }
    ChannelChoi::new(a, b, matrix_from_value(v)?)
}

pub fn parse_choi(s: &str) -> Result<ChannelChoi> {
    choi_from_value(&parse_value(s)?)
}

fn ladder_from_value(v: &Value) -> Result<LadderSpec> {
    match v {
        Value::String(s) => LadderSpec::parse(s),
        Value::Array(a) => LadderSpec::parse(
            &a.iter()
                .map(|x| x.as_u64().map(|n| n.to_string()).ok_or_else(|| perr("ladder entries must be integers")))
                .collect::<Result<Vec<_>>>()?
                .join(","),
        ),
        _ => Err(perr("ladder must be a string or an integer array")),
    }
}

fn state_map<T>(v: &Value, f: impl Fn(&Value) -> Result<T>) -> Result<BTreeMap<usize, T>> {
    let o = v.as_object().ok_or_else(|| perr("'states' must map dimensions to states"))?;
    o.iter()
        .map(|(k, s)| {
            let d = k.parse::<usize>().map_err(|_| perr(format!("bad dimension key '{k}'")))?;
            Ok((d, f(s)?))
        })
        .collect()
}

pub fn family_from_value(v: &Value, tol: &Tolerances) -> Result<ReferenceFamily> {
    let ladder = ladder_from_value(get(v, "ladder")?)?;
    let cons = get(v, "constructor")?;
    let constructor = match kind_of(cons)? {
        Some("golden") => Constructor::Golden(state_map(get(cons, "states")?, |s| pure_from_value(s, tol))?),
        Some("explicit") => Constructor::Explicit(state_map(get(cons, "states")?, |s| state_from_value(s, tol))?),
        Some("tensor_power") => Constructor::TensorPower(pure_from_value(get(cons, "seed")?, tol)?),
        Some("uniform") => return ReferenceFamily::uniform(ladder),
        _ => return Err(perr("constructor kind must be golden, explicit, tensor_power or uniform")),
    };
    ReferenceFamily::new(ladder, constructor)
}

pub fn family_to_value(f: &ReferenceFamily) -> Value {
    let cons = match &f.constructor {
        Constructor::Golden(m) => json!({
            "kind": "golden",
            "states": m.iter().map(|(d, p)| (d.to_string(), pure_to_value(p))).collect::<Map<_, _>>(),
        }),
        Constructor::Explicit(m) => json!({
            "kind": "explicit",
            "states": m.iter().map(|(d, s)| (d.to_string(), state_to_value(s))).collect::<Map<_, _>>(),
        }),
        Constructor::TensorPower(p) => json!({"kind": "tensor_power", "seed": pure_to_value(p)}),
    };
    json!({"ladder": f.ladder_spec.label(), "constructor": cons})
}

fn matrices(v: &Value, key: &str) -> Result<Vec<CMat>> {
    let arr = get(v, key)?.as_array().ok_or_else(|| perr(format!("'{key}' must be an array")))?;
    if arr.is_empty() || arr.len() > MAX_VERTICES {
        return Err(perr(format!("'{key}' must hold 1..={MAX_VERTICES} entries")));
    }
    arr.iter().map(matrix_from_value).collect()
}

fn rd_from_value(v: &Value, free: &FreeStateSet, tol: &Tolerances) -> Result<RdMapSpec> {
    let d = free.dim();
    let spec = match kind_of(v)? {
        Some("dephasing") => match free {
            FreeStateSet::DiagonalSimplex { basis, .. } => RdMapSpec {
                kind: RdMapKind::CompleteDephasing { basis: basis.clone() },
                dim: d,
                is_channel: true,
                is_exact: true,
                is_pseudo: false,
            },
            _ => RdMapSpec::dephasing(d),
        },
        Some("constant") => RdMapSpec::constant(&state_from_value(get(v, "sigma")?, tol)?),
        Some("twirl") => {
            let us = matrices(v, "unitaries")?;
            for u in &us {
                if u.nrows() != d || max_abs(&(u.adjoint() * u - CMat::identity(d, d))) > 1e-9 {
                    return Err(perr("twirl elements must be unitaries of the theory dimension"));
                }
            }
            RdMapSpec::twirl(us)
        }
        Some("depolarizing_pseudo") => {
            let p = get_f64(v, "p")?;
            if !(0.0..=1.0).contains(&p) {
                return Err(perr("p must lie in [0, 1]"));
            }
            RdMapSpec::depolarizing_pseudo(d, p)
        }
        Some("custom") => {
            let exact = v.get("exact").and_then(Value::as_bool).unwrap_or(false);
            RdMapSpec::custom(matrix_from_value(get(v, "superop")?)?, exact)?
        }
        _ => return Err(perr("rd_map kind must be dephasing, constant, twirl, depolarizing_pseudo or custom")),
    };
    if spec.dim != d {
        return Err(CoreError::Dimension { expected: d, got: spec.dim });
    }
    Ok(spec)
}

fn rd_to_value(s: &RdMapSpec) -> Value {
    match &s.kind {
        RdMapKind::CompleteDephasing { .. } => json!({"kind": "dephasing"}),
        RdMapKind::ConstantState { sigma } => json!({"kind": "constant", "sigma": matrix_to_value(sigma, Some("state"))}),
        RdMapKind::FiniteGroupTwirl { unitaries } => json!({
            "kind": "twirl",
            "unitaries": unitaries.iter().map(|u| matrix_to_value(u, None)).collect::<Vec<_>>(),
        }),
        RdMapKind::DepolarizingPseudo { p } => json!({"kind": "depolarizing_pseudo", "p": p}),
        RdMapKind::LinearCustom { superop } => {
            json!({"kind": "custom", "exact": s.is_exact, "superop": matrix_to_value(superop, None)})
        }
    }
}

fn free_from_value(v: &Value, tol: &Tolerances) -> Result<FreeStateSet> {
    let f = match kind_of(v)? {
        Some("vertex_polytope") => {
            let arr = get(v, "vertices")?.as_array().ok_or_else(|| perr("'vertices' must be an array"))?;
            if arr.is_empty() || arr.len() > MAX_VERTICES {
                return Err(perr(format!("'vertices' must hold 1..={MAX_VERTICES} states")));
            }
            FreeStateSet::polytope(arr.iter().map(|s| state_from_value(s, tol)).collect::<Result<_>>()?)?
        }
        Some("diagonal") => match v.get("basis") {
            Some(b) => FreeStateSet::diagonal_in(matrix_from_value(b)?)?,
            None => {
                let d = get_usize(v, "dim")?;
                check_state_dim(d)?;
                FreeStateSet::diagonal(d)
            }
        },
        Some("gibbs") => {
            let e = get(v, "energies")?.as_array().ok_or_else(|| perr("'energies' must be an array"))?;
            if e.is_empty() || e.len() > MAX_STATE_DIM {
                return Err(perr(format!("need 1..={MAX_STATE_DIM} energies")));
            }
            let energies = e
                .iter()
                .map(|x| x.as_f64().filter(|x| x.is_finite()).ok_or_else(|| perr("energies must be finite numbers")))
                .collect::<Result<Vec<_>>>()?;
            FreeStateSet::gibbs(energies, get_f64(v, "temperature")?)?
        }
        Some("ppt_2x2") => FreeStateSet::SeparablePpt2x2,
        _ => return Err(perr("theory kind must be vertex_polytope, diagonal, gibbs or ppt_2x2")),
    };
    check_state_dim(f.dim())?;
    if let Some(d) = v.get("dim") {
        if d.as_u64() != Some(f.dim() as u64) {
            return Err(CoreError::Dimension { expected: f.dim(), got: d.as_u64().unwrap_or(0) as usize });
        }
    }
    Ok(f)
}

fn free_to_value(f: &FreeStateSet) -> Value {
    match f {
        FreeStateSet::VertexPolytope { vertices } => json!({
            "kind": "vertex_polytope",
            "dim": f.dim(),
            "vertices": vertices.iter().map(state_to_value).collect::<Vec<_>>(),
        }),
        FreeStateSet::DiagonalSimplex { dim, basis } => {
            json!({"kind": "diagonal", "dim": dim, "basis": matrix_to_value(basis, None)})
        }
        FreeStateSet::GibbsSingleton { energies, temperature } => {
            json!({"kind": "gibbs", "dim": energies.len(), "energies": energies, "temperature": temperature})
        }
        FreeStateSet::SeparablePpt2x2 => json!({"kind": "ppt_2x2", "dim": 4}),
    }
}

/// Theory from JSON: either `{"builtin": "name"}` or an explicit free set
/// with optional `rd_map` and `reference_family`. Without a family, the
/// uniform superposition at the theory dimension is used.
pub fn theory_from_value(v: &Value, ctx: &Ctx) -> Result<Theory> {
    if let Some(b) = v.get("builtin") {
        let name = b.as_str().ok_or_else(|| perr("'builtin' must be a string"))?;
        let mut th = builtin_theory(name)?;
        if let Some(fam) = v.get("reference_family") {
            th.family = family_from_value(fam, &ctx.tol)?;
        }
        return Ok(th);
    }
    let free = free_from_value(v, &ctx.tol)?;
    let rd = v.get("rd_map").filter(|x| !x.is_null()).map(|r| rd_from_value(r, &free, &ctx.tol)).transpose()?;
    let family = match v.get("reference_family") {
        Some(f) => family_from_value(f, &ctx.tol)?,
        None => ReferenceFamily::uniform(LadderSpec::Explicit(vec![free.dim().max(2)]))?,
    };
    let id = match v.get("id") {
        Some(x) => x.as_str().ok_or_else(|| perr("'id' must be a string"))?.to_string(),
        None => "custom".to_string(),
    };
    Theory::custom(&id, free, rd, family, ctx)
}

pub fn parse_theory(s: &str, ctx: &Ctx) -> Result<Theory> {
    theory_from_value(&parse_value(s)?, ctx)
}

pub fn theory_to_value(th: &Theory) -> Value {
    let family = family_to_value(&th.family);
    if th.kind != TheoryKind::Custom {
        let name = th.id.strip_prefix("builtin:").unwrap_or(&th.id);
        return json!({"builtin": name, "reference_family": family});
    }
    let mut v = free_to_value(&th.free);
    v["id"] = json!(th.id);
    if let Some(rd) = &th.rd_map {
        v["rd_map"] = rd_to_value(rd);
    }
    v["reference_family"] = family;
    v
}

/// Theory from a builtin name (`builtin:` prefix optional) or a JSON file path.
pub fn load_theory(source: &str, ctx: &Ctx) -> Result<Theory> {
    if source.ends_with(".json") {
        parse_theory(&read_file(source)?, ctx)
    } else {
        builtin_theory(source)
    }
}

fn read_file(path: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| perr(format!("{path}: {e}")))
}

/// Named states: `plus:d`, `basis:d:i`, `mixed:d`, `T`, `magic`, `bell`.
pub fn named_state(name: &str) -> Result<DensityMatrix> {
    let parts: Vec<&str> = name.split(':').collect();
    let bad = || perr(format!("unknown state name '{name}'"));
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let dim = |s: &str| num(s).and_then(|d| check_state_dim(d).map(|_| d));
    match parts.as_slice() {
        ["plus", d] => Ok(PureState::uniform(dim(d)?).density()),
        ["basis", d, i] => {
            let (d, i) = (dim(d)?, num(i)?);
            if i >= d {
                return Err(bad());
            }
            Ok(DensityMatrix::basis(d, i))
        }
        ["mixed", d] => Ok(DensityMatrix::maximally_mixed(dim(d)?)),
        ["T"] => Ok(crate::theories::t_state().density()),
        ["magic"] => Ok(crate::theories::magic_golden().density()),
        ["bell"] => Ok(crate::theories::bell_state().density()),
        _ => Err(bad()),
    }
}

/// State from a JSON file path or a `builtin:` name.
pub fn load_state(source: &str, tol: &Tolerances) -> Result<DensityMatrix> {
    match source.strip_prefix("builtin:") {
        Some(name) => named_state(name),
        None => parse_state(&read_file(source)?, tol),
    }
}

pub const MAX_RUNS: usize = 10_000;

/// Batch manifest: `{"runs": [["measure", "--theory", ...], ...]}`; each
/// run is a command line without the program name.
pub fn parse_manifest(s: &str) -> Result<Vec<Vec<String>>> {
    let v = parse_value(s)?;
    let runs = get(&v, "runs")?.as_array().ok_or_else(|| perr("'runs' must be an array"))?;
    if runs.len() > MAX_RUNS {
        return Err(perr(format!("at most {MAX_RUNS} runs")));
    }
    runs.iter()
        .map(|r| {
            let args = r.as_array().ok_or_else(|| perr("each run must be an array of strings"))?;
            if args.is_empty() {
                return Err(perr("empty run"));
            }
            args.iter()
                .map(|a| a.as_str().map(str::to_string).ok_or_else(|| perr("run arguments must be strings")))
                .collect()
        })
        .collect()
}

pub fn to_json<T: Serialize>(x: &T) -> Result<String> {
    serde_json::to_string_pretty(x).map_err(|e| perr(e.to_string()))
}

pub fn from_json<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| perr(e.to_string()))
}

/// Number or "inf" / "-inf" / "nan".
pub fn num_value(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

pub fn num_from_value(v: &Value) -> Result<f64> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| perr("bad number")),
        Value::String(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            _ => Err(perr(format!("bad number '{s}'"))),
        },
        _ => Err(perr("expected a number")),
    }
}

/// serde adapter for f64 fields that may be infinite.
pub mod fnum {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        num_value(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        num_from_value(&Value::deserialize(d)?).map_err(D::Error::custom)
    }
}

pub mod opt_fnum {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        x.map(num_value).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
        match Option::<Value>::deserialize(d)? {
            None | Some(Value::Null) => Ok(None),
            Some(v) => num_from_value(&v).map(Some).map_err(D::Error::custom),
        }
    }
}

/// `(d, value)` pairs as `[[d, value], ...]`.
pub mod pairs {
    use super::*;

    pub fn serialize<S: Serializer>(x: &[(usize, f64)], s: S) -> std::result::Result<S::Ok, S::Error> {
        x.iter().map(|(d, v)| json!([d, num_value(*v)])).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(usize, f64)>, D::Error> {
        Vec::<(usize, Value)>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| num_from_value(&v).map(|x| (k, x)).map_err(D::Error::custom))
            .collect()
    }
}

pub mod cmat {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_to_value(m, None).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMat, D::Error> {
        matrix_from_value(&Value::deserialize(d)?).map_err(D::Error::custom)
    }
}

pub mod opt_cmat {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<CMat>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(|m| matrix_to_value(m, None)).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<CMat>, D::Error> {
        match Option::<Value>::deserialize(d)? {
            None | Some(Value::Null) => Ok(None),
            Some(v) => matrix_from_value(&v).map(Some).map_err(D::Error::custom),
        }
    }
}

impl Serialize for DensityMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        state_to_value(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        state_from_value(&Value::deserialize(d)?, &Tolerances::default()).map_err(D::Error::custom)
    }
}

impl Serialize for PureState {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        pure_to_value(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for PureState {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        pure_from_value(&Value::deserialize(d)?, &Tolerances::default()).map_err(D::Error::custom)
    }
}

impl Serialize for ChannelChoi {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        choi_to_value(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ChannelChoi {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        choi_from_value(&Value::deserialize(d)?).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matrix_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density(3, &mut rng);
        let s = state_to_value(&rho).to_string();
        assert_eq!(parse_state(&s, &Tolerances::default()).unwrap(), rho);
        let e = random_channel(2, 3, &mut rng);
        assert_eq!(parse_choi(&choi_to_value(&e).to_string()).unwrap(), e);
    }

    #[test]
    fn pure_input() {
        let s = r#"{"kind": "pure", "dim": 2, "entries": [[0.7071067811865476, 0], [0.7071067811865476, 0]]}"#;
        let rho = parse_state(s, &Tolerances::default()).unwrap();
        assert!((rho.matrix()[(0, 1)].re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let tol = Tolerances::default();
        for s in [
            "",
            "{}",
            r#"{"dim": 2, "entries": [[1, 0]]}"#,
            r#"{"dim": 1, "entries": [[2, 0]]}"#,
            r#"{"dim": 2, "entries": [[1, 0], [1, 0], [0, 0], [0, 0]]}"#,
            r#"{"kind": "choi", "dim": 1, "entries": [[1, 0]]}"#,
            r#"{"dim": 100000000, "entries": []}"#,
        ] {
            assert!(parse_state(s, &tol).is_err(), "{s}");
        }
    }

    #[test]
    fn nonfinite_numbers() {
        for x in [1.5, f64::INFINITY, f64::NEG_INFINITY] {
            assert_eq!(num_from_value(&num_value(x)).unwrap(), x);
        }
        assert!(num_from_value(&num_value(f64::NAN)).unwrap().is_nan());
    }
}
