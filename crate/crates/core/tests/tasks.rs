use oneshot_core::measures::*;
use oneshot_core::quantum::*;
use oneshot_core::tasks::*;
use oneshot_core::theories::*;
use oneshot_core::{CoreError, Ctx};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ctx() -> Ctx {
    Ctx::default()
}

#[test]
fn coherence_formation_constructions() {
    let ctx = ctx();
    let th = builtin_theory("coherence:3").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for eps in [0.0, 0.01] {
        let rho = random_density(3, &mut rng);
        let lo = formation_lower_bound(&rho, &th, &th.family, eps, &FormationLowerVariant::Dmax, &ctx).unwrap();
        let (up, cert) =
            formation_achievable(&rho, &th, &th.family, eps, &FormationAchievableVariant::CtMap, &ctx).unwrap();
        let cert = cert.expect("ct map certificate");
        assert!(cert.valid);
        assert!(lo.log_d0.unwrap() <= up.log_d0.unwrap() + 1e-9);
        assert_eq!(lo.recompute_d0(ctx.tol.ladder), lo.d0);
        let spec = th.rd_map.clone().unwrap();
        let (_, c2) = formation_achievable(
            &rho,
            &th,
            &th.family,
            eps,
            &FormationAchievableVariant::CommCtMap(spec),
            &ctx,
        )
        .unwrap();
        let c2 = c2.unwrap();
        assert!(c2.commutation_residual.unwrap() <= 1e-8);
    }
}

#[test]
fn coherence_lr_variant_rejected() {
    let ctx = ctx();
    let th = builtin_theory("coherence:2").unwrap();
    let rho = PureState::uniform(2).density();
    let e = formation_lower_bound(&rho, &th, &th.family, 0.0, &FormationLowerVariant::Lr, &ctx).unwrap_err();
    assert!(matches!(e, CoreError::Precondition(_)));
    let e = formation_achievable(&rho, &th, &th.family, 0.0, &FormationAchievableVariant::FfrMap, &ctx).unwrap_err();
    assert!(matches!(e, CoreError::Precondition(_)));
}

#[test]
fn thermo_formation_ct() {
    let ctx = ctx();
    let th = builtin_theory("thermo:0,1,2:1").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rho = random_density(3, &mut rng);
    let (r, cert) =
        formation_achievable(&rho, &th, &th.family, 0.01, &FormationAchievableVariant::CtMap, &ctx).unwrap();
    assert!(r.d0.is_some());
    assert!(cert.unwrap().valid);
}

#[test]
fn magic_constructions() {
    let ctx = ctx();
    let th = builtin_theory("magic1").unwrap();
    let rho = t_state().density();
    let (r, cert) =
        formation_achievable(&rho, &th, &th.family, 0.0, &FormationAchievableVariant::FfrMap, &ctx).unwrap();
    assert_eq!(r.d0, Some(2));
    assert!(cert.unwrap().valid);
    // robustness map qualifies iff LR(phi) <= D_H^0(phi); both sides come from solvers
    let phi = magic_golden().density();
    let lr = free_robustness(&phi, &th.free, &ctx).unwrap().value;
    let dh = resource_measure(&phi, &th.free, &ResourceKind::Dh(0.0), &ctx).unwrap().value;
    let fam = th.family.with_ladder(LadderSpec::Explicit(vec![2])).unwrap();
    let (r, cert) =
        distillation_achievable(&phi, &th, &fam, 0.0, DistillationAchievableVariant::RobustnessMap, &ctx).unwrap();
    assert_eq!(r.d0.is_some(), lr <= dh + ctx.tol.ladder);
    assert_eq!(r.d0.is_some(), cert.is_some());
    if let Some(c) = cert {
        assert!(c.valid);
    }
    let th2 = builtin_theory("magic2").unwrap();
    let phi2 = magic_golden().kron(&magic_golden()).density();
    let (r, cert) = distillation_achievable(
        &phi2,
        &th2,
        &th2.family,
        0.0,
        DistillationAchievableVariant::RobustnessMap,
        &ctx,
    )
    .unwrap();
    assert_eq!(r.recompute_d0(ctx.tol.ladder), r.d0);
    assert!(cert.unwrap().valid);
}

#[test]
fn isotropic_on_bell() {
    let ctx = ctx();
    let th = builtin_theory("entanglement").unwrap();
    let bell = bell_state().density();
    let pt = isotropic_threshold(bell.matrix(), &th.free, &ctx).unwrap();
    assert!((pt - 2.0 / 3.0).abs() < 1e-6, "{pt}");
    let (r, cert) =
        distillation_achievable(&bell, &th, &th.family, 0.0, DistillationAchievableVariant::IsotropicMap, &ctx)
            .unwrap();
    assert_eq!(r.d0, Some(4));
    let cert = cert.unwrap();
    assert!(cert.valid);
    assert!(cert.fidelity >= 1.0 - 1e-8);
    let out = cert.choi.apply(bell.matrix());
    assert!(max_abs(&(out - bell.matrix())) < 1e-8);

    let coh = builtin_theory("coherence:4").unwrap();
    let e = distillation_achievable(
        &PureState::uniform(4).density(),
        &coh,
        &coh.family,
        0.0,
        DistillationAchievableVariant::IsotropicMap,
        &ctx,
    )
    .unwrap_err();
    assert!(e.to_string().contains("D' is empty"), "{e}");
}

#[test]
fn entanglement_formation_ffr() {
    let ctx = ctx();
    let th = builtin_theory("entanglement").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rho = random_density(4, &mut rng);
    let (r, cert) =
        formation_achievable(&rho, &th, &th.family, 0.01, &FormationAchievableVariant::FfrMap, &ctx).unwrap();
    if r.d0.is_some() {
        assert!(cert.unwrap().valid);
    }
}

#[test]
fn coherence_sandwich_small() {
    let ctx = ctx();
    let th = builtin_theory("coherence:2").unwrap();
    let fam = th.family.with_ladder(LadderSpec::All { max: 4 }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for eps in [0.0, 0.01] {
        let rho = random_density(2, &mut rng);
        let s = sandwich_check(&rho, &th, &fam, eps, Task::Formation, &ctx).unwrap();
        assert!(s.ordered, "{:?}", s.diagnostic);
        assert!(matches!(
            sandwich_check(&rho, &th, &fam, eps, Task::Distillation, &ctx),
            Err(CoreError::Unsupported(_))
        ));
    }
}

#[test]
fn formation_examples() {
    let ctx = ctx();
    let coh = builtin_theory("coherence:2").unwrap();
    let plus = PureState::uniform(2).density();
    let r = formation_lower_bound(&plus, &coh, &coh.family, 0.0, &FormationLowerVariant::Dmax, &ctx).unwrap();
    assert_eq!(r.d0, Some(2));
    assert!((r.bound.unwrap() - 1.0).abs() < 1e-6);

    let th = builtin_theory("thermo:0,1:1").unwrap();
    let excited = DensityMatrix::basis(2, 1);
    let r = formation_lower_bound(&excited, &th, &th.family, 0.0, &FormationLowerVariant::Dmax, &ctx).unwrap();
    assert_eq!(r.d0, Some(2));
    assert!((r.measure - (1.0 + 1f64.exp()).log2()).abs() < 1e-6);
    let (r, cert) =
        formation_achievable(&excited, &th, &th.family, 0.0, &FormationAchievableVariant::CtMap, &ctx).unwrap();
    assert_eq!(r.d0, Some(2));
    let cert = cert.unwrap();
    let phi = th.family.reference_state(2).unwrap();
    assert!(max_abs(&(cert.choi.apply(phi.matrix()) - excited.matrix())) < 1e-8);
    let s = sandwich_check(&excited, &th, &th.family, 0.0, Task::Formation, &ctx).unwrap();
    assert!(s.ordered);
    assert_eq!((s.lower, s.exact, s.upper), (Some(1.0), Some(1.0), Some(1.0)));
}

#[test]
fn distillation_upper_examples() {
    let ctx = ctx();
    let coh = builtin_theory("coherence:2").unwrap();
    let fam = coh.family.with_ladder(LadderSpec::All { max: 4 }).unwrap();
    let plus = PureState::uniform(2).density();
    let r = distillation_upper_bound(&plus, &coh, &fam, 0.0, &DistillationUpperVariant::Ng, &ctx).unwrap();
    assert_eq!(r.d0, Some(2));
    assert!((r.bound.unwrap() - 1.0).abs() < 1e-6);
    let spec = coh.rd_map.clone().unwrap();
    let r = distillation_upper_bound(&plus, &coh, &fam, 0.0, &DistillationUpperVariant::Comm(spec.clone()), &ctx)
        .unwrap();
    assert!((r.measure - 1.0).abs() < 1e-6);
    assert_eq!(r.d0, Some(2));
    assert!((r.bound.unwrap() - 1.0).abs() < 1e-6);
    // large eps makes the comm criterion vacuous
    let r = distillation_upper_bound(&plus, &coh, &fam, 0.3, &DistillationUpperVariant::Comm(spec), &ctx).unwrap();
    assert!(r.d0.is_none() && r.reason.unwrap().contains("unbounded"));
    // pseudo maps are not channels
    let m = builtin_theory("magic1").unwrap();
    let e = distillation_upper_bound(
        &t_state().density(),
        &m,
        &m.family,
        0.0,
        &DistillationUpperVariant::Comm(m.rd_map.clone().unwrap()),
        &ctx,
    )
    .unwrap_err();
    assert!(matches!(e, CoreError::Precondition(_)));
    // free input distills nothing at eps = 0
    let mixed = DensityMatrix::maximally_mixed(2);
    let r = distillation_upper_bound(&mixed, &coh, &fam, 0.0, &DistillationUpperVariant::Ng, &ctx).unwrap();
    assert!(r.d0.is_none());
}

#[test]
fn exact_oracle_examples() {
    let ctx = ctx();
    let f = FreeStateSet::diagonal(2);
    let plus = PureState::uniform(2).density();
    let mixed = DensityMatrix::maximally_mixed(2);
    let yes = exact_conversion_feasible(&plus, &plus, 0.0, &f, &f, &OpClass::Ng, &ctx).unwrap();
    assert!(yes.feasible && yes.witness.is_some());
    let no = exact_conversion_feasible(&mixed, &plus, 0.0, &f, &f, &OpClass::Ng, &ctx).unwrap();
    assert!(!no.feasible);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let target = random_density(2, &mut rng);
        let r = exact_conversion_feasible(&plus, &target, 0.0, &f, &f, &OpClass::Ng, &ctx).unwrap();
        assert!(r.feasible, "{}", r.root_fidelity);
        let w = r.witness.unwrap();
        assert!(verify_freeness(&w, &f, &f, &ctx).unwrap().iter().all(|&x| x < 1e-6));
    }
    let coh = builtin_theory("coherence:2").unwrap();
    let fam = coh.family.with_ladder(LadderSpec::All { max: 4 }).unwrap();
    let r = one_shot_rate_exact(&plus, &coh, &fam, 0.0, Task::Formation, &OpClass::Ng, &ctx).unwrap();
    assert_eq!(r.log_d0, Some(1.0));
    let r = one_shot_rate_exact(&mixed, &coh, &fam, 0.0, Task::Distillation, &OpClass::Ng, &ctx).unwrap();
    assert!(r.d0.is_none());
    let th = builtin_theory("thermo:0,1,2:1").unwrap();
    let tau = th.free.gibbs_state().unwrap();
    let r = one_shot_rate_exact(&tau, &th, &th.family, 0.0, Task::Formation, &OpClass::Ng, &ctx).unwrap();
    assert_eq!(r.d0, Some(th.family.ladder()[0]));
}

#[test]
fn bounds_monotone_in_eps() {
    let ctx = ctx();
    let coh = builtin_theory("coherence:3").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..3 {
        let rho = random_density(3, &mut rng);
        let mut last_lo = f64::INFINITY;
        let mut last_up = f64::NEG_INFINITY;
        for eps in [0.0, 0.01, 0.05] {
            let lo = formation_lower_bound(&rho, &coh, &coh.family, eps, &FormationLowerVariant::Dmax, &ctx).unwrap();
            let up = distillation_upper_bound(&rho, &coh, &coh.family, eps, &DistillationUpperVariant::Ng, &ctx).unwrap();
            let l = lo.log_d0.unwrap_or(f64::INFINITY);
            let u = up.log_d0.unwrap_or(f64::NEG_INFINITY);
            assert!(l <= last_lo + 1e-9 && u >= last_up - 1e-9);
            assert!(lo.measure >= 0.0);
            last_lo = l;
            last_up = u;
        }
    }
}

#[test]
fn input_error_yield_below_output_error_yield() {
    let ctx = ctx();
    let th = builtin_theory("entanglement").unwrap();
    let m = builtin_theory("magic1").unwrap();
    let fam = m.family.with_ladder(LadderSpec::Explicit(vec![2])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut compared = 0;
    for eps in [0.0, 0.01, 0.05] {
        for _ in 0..3 {
            let psi = random_pure(4, &mut rng).density();
            let inp = distillation_achievable(&psi, &th, &th.family, eps, DistillationAchievableVariant::InputErrorIsotropic, &ctx);
            let out = distillation_achievable(&psi, &th, &th.family, eps, DistillationAchievableVariant::IsotropicMap, &ctx);
            if let (Ok((a, _)), Ok((b, _))) = (inp, out) {
                assert!(a.d0.unwrap_or(0) <= b.d0.unwrap_or(0));
                compared += 1;
            }
            let q = random_pure(2, &mut rng).density();
            let inp = distillation_achievable(&q, &m, &fam, eps, DistillationAchievableVariant::InputErrorRobustness, &ctx);
            let out = distillation_achievable(&q, &m, &fam, eps, DistillationAchievableVariant::RobustnessMap, &ctx);
            if let (Ok((a, _)), Ok((b, _))) = (inp, out) {
                assert!(a.d0.unwrap_or(0) <= b.d0.unwrap_or(0));
                compared += 1;
            }
        }
    }
    assert!(compared >= 9, "{compared}");
    let e = distillation_achievable(
        &DensityMatrix::maximally_mixed(4),
        &th,
        &th.family,
        0.0,
        DistillationAchievableVariant::InputErrorIsotropic,
        &ctx,
    )
    .unwrap_err();
    assert!(matches!(e, CoreError::Precondition(_)));
}

#[test]
fn thermo_sandwich() {
    let ctx = ctx();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..3 {
        let th = builtin_theory("thermo:0,0.7,1.5:1").unwrap();
        let rho = random_density(3, &mut rng);
        let s = sandwich_check(&rho, &th, &th.family, 0.01, Task::Formation, &ctx).unwrap();
        assert!(s.ordered, "{:?}", s.diagnostic);
    }
}
