use oneshot_core::golden::*;
use oneshot_core::io::*;
use oneshot_core::measures::*;
use oneshot_core::quantum::*;
use oneshot_core::tasks::*;
use oneshot_core::theories::*;
use oneshot_core::Ctx;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(x: &T) {
    let s = to_json(x).unwrap();
    let back: T = from_json(&s).unwrap();
    assert_eq!(&back, x);
    assert_eq!(to_json(&back).unwrap(), s);
}

#[test]
fn reports_round_trip() {
    let ctx = Ctx::default();
    let th = builtin_theory("magic1").unwrap();
    let t = t_state().density();
    round_trip(&resource_measure(&t, &th.free, &ResourceKind::Dmax, &ctx).unwrap());
    round_trip(&free_robustness(&t, &th.free, &ctx).unwrap());
    round_trip(&find_golden_state(&th.free, 7, 8, &ctx).unwrap());
    round_trip(&classify_theory(&th, None, &ctx).unwrap());

    let coh = builtin_theory("coherence:2").unwrap();
    let fam = coh.family.with_ladder(LadderSpec::All { max: 3 }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rho = random_density(2, &mut rng);
    let (r, cert) = formation_achievable(&rho, &coh, &fam, 0.01, &FormationAchievableVariant::CtMap, &ctx).unwrap();
    round_trip(&r);
    round_trip(&cert.unwrap());
    round_trip(&sandwich_check(&rho, &coh, &fam, 0.0, Task::Formation, &ctx).unwrap());
    round_trip(&exact_conversion_feasible(&rho, &rho, 0.0, &coh.free, &coh.free, &OpClass::Ng, &ctx).unwrap());
}

#[test]
fn infinite_values_survive() {
    let ctx = Ctx::default();
    let sigma = DensityMatrix::basis(2, 0);
    let r = d_max(&PureState::uniform(2).density(), &sigma, &ctx).unwrap();
    assert!(r.value.is_infinite());
    let s = to_json(&r).unwrap();
    assert!(s.contains("\"inf\""));
    round_trip(&r);
}

#[test]
fn theories_round_trip() {
    let ctx = Ctx::default();
    for name in ["coherence:3", "magic1", "magic2", "thermo:0,1:1", "superposition", "entanglement"] {
        let th = builtin_theory(name).unwrap();
        let back = theory_from_value(&theory_to_value(&th), &ctx).unwrap();
        assert_eq!(back, th, "{name}");
    }
    let text = r#"{
        "id": "two-vertex",
        "kind": "vertex_polytope",
        "dim": 2,
        "vertices": [
            {"kind": "pure", "dim": 2, "entries": [[1, 0], [0, 0]]},
            {"dim": 2, "entries": [[0.5, 0], [0.5, 0], [0.5, 0], [0.5, 0]]}
        ],
        "reference_family": {"ladder": [2], "constructor": {"kind": "golden", "states": {
            "2": {"kind": "pure", "dim": 2, "entries": [[0.3826834323650898, 0], [-0.9238795325112867, 0]]}
        }}}
    }"#;
    let th = parse_theory(text, &ctx).unwrap();
    assert_eq!(th.id, "two-vertex");
    let back = theory_from_value(&theory_to_value(&th), &ctx).unwrap();
    assert_eq!(back, th);

    let gibbs = r#"{"kind": "gibbs", "energies": [0, 1, 3], "temperature": 2, "rd_map": {"kind": "dephasing"}}"#;
    let th = parse_theory(gibbs, &ctx).unwrap();
    assert_eq!(th.dim, 3);
}

#[test]
fn theory_errors() {
    let ctx = Ctx::default();
    for s in [
        r#"{"kind": "diagonal"}"#,
        r#"{"kind": "cube", "dim": 2}"#,
        r#"{"kind": "gibbs", "energies": [], "temperature": 1}"#,
        r#"{"kind": "gibbs", "energies": [0, 1], "temperature": -1}"#,
        r#"{"kind": "vertex_polytope", "vertices": []}"#,
        r#"{"kind": "diagonal", "dim": 2, "rd_map": {"kind": "depolarizing_pseudo", "p": 2}}"#,
        r#"{"kind": "diagonal", "dim": 2, "reference_family": {"ladder": "all:100000", "constructor": {"kind": "uniform"}}}"#,
        r#"{"builtin": "coherence:99"}"#,
    ] {
        assert!(parse_theory(s, &ctx).is_err(), "{s}");
    }
}
