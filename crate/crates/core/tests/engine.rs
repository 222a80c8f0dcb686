use z4ap::certificate::CertKind;
use z4ap::constructions::{a0, max_free_search};
use z4ap::counting::{diagnostics, lambda_family, lambda_fibre};
use z4ap::engine::{high_energy_step, run, small_ms_step, weighted_driver, Branch, EngineConfig, SmallMsOutcome};
use z4ap::group::fibre_decompose;
use z4ap::trace::{verify, Driver, Trace};
use z4ap::{Caps, Error, Family, Rational, Subgroup2, Z2Set, Z4Set};

fn int(n: i64) -> Rational {
    Rational::from_integer(n.into())
}

fn spectral_config() -> EngineConfig {
    let mut cfg = EngineConfig::default();
    cfg.branch_thresholds.direct_factor = int(1000);
    cfg
}

fn branches(events: &[z4ap::trace::TraceEvent]) -> Vec<Branch> {
    events.iter().map(|e| e.branch).collect()
}

#[test]
fn constant_density_family_floors_directly() {
    // Every fibre is the same subgroup, so f is constant and K = 1.
    let b = Z2Set::from_subgroup(&Subgroup2::from_generators(2, [1]).unwrap());
    let f = Family::new(2, vec![b; 4]).unwrap();
    let d = diagnostics(&f).unwrap();
    assert_eq!(d.k, int(1));
    let a = f.to_z4().unwrap();
    for driver in [Driver::Rml, Driver::Weighted] {
        let t = run(driver, &a, &EngineConfig::default(), &Caps::default()).unwrap();
        assert!(t.summary.sound);
        assert!(t.summary.global_floor <= lambda_fibre(&a).unwrap().lambda);
    }
}

#[test]
fn subgroup_fibres_take_the_s0_case() {
    let b = Z2Set::from_subgroup(&Subgroup2::from_generators(2, [1]).unwrap());
    let f = Family::new(2, vec![b; 4]).unwrap();
    let s = Z2Set::full(2).unwrap();
    let exact = lambda_family(&f).unwrap().lambda;
    let r = high_energy_step(
        &f,
        &s,
        &int(1),
        &int(1),
        &int(100),
        &spectral_config(),
        &Caps::default(),
    )
    .unwrap();
    let seen = branches(&r.events);
    assert!(seen.contains(&Branch::CaseS0Floor), "{seen:?}");
    assert!(!seen.contains(&Branch::ProofCheck));
    assert!(r.floor > int(0) && r.floor <= exact);
}

#[test]
fn empty_s_gives_the_zero_floor() {
    let f = fibre_decompose(&a0());
    let r = high_energy_step(
        &f,
        &Z2Set::empty(3).unwrap(),
        &int(1),
        &int(1),
        &int(1),
        &EngineConfig::default(),
        &Caps::default(),
    )
    .unwrap();
    assert_eq!(r.floor, int(0));
    assert!(r.events.is_empty());
}

#[test]
fn spectral_pipeline_reaches_s1() {
    let f: Family =
        serde_json::from_str(r#"{"m":3,"fibres":[[0,3,6,7],[],[],[],[0,1,2,5,7],[0,3,4,6,7],[],[0,1,2,3,4,5,7]]}"#)
            .unwrap();
    let exact = lambda_family(&f).unwrap().lambda;
    let out = small_ms_step(&f, &int(100_000), &spectral_config(), &Caps::default()).unwrap();
    let SmallMsOutcome::Floor { floor, events } = out else {
        panic!("expected a floor");
    };
    let seen = branches(&events);
    for b in [
        Branch::Spectral,
        Branch::HighEnergy,
        Branch::CaseS1,
        Branch::EnergyGrouping,
    ] {
        assert!(seen.contains(&b), "{b:?} missing from {seen:?}");
    }
    let grouping = events.iter().find(|e| e.branch == Branch::EnergyGrouping).unwrap();
    let cert = grouping.certificate.as_ref().expect("grouping is certified");
    assert_eq!(cert.kind, CertKind::EnergyGrouping);
    cert.verify(grouping.step).unwrap();
    assert!(floor <= exact);
}

#[test]
fn small_ms_step_increments_on_a0() {
    let f = fibre_decompose(&a0());
    let k = diagnostics(&f).unwrap().k;
    let l = k.max(int(2));
    let out = small_ms_step(&f, &l, &EngineConfig::default(), &Caps::default()).unwrap();
    let SmallMsOutcome::Increment {
        family, certificate, ..
    } = out
    else {
        panic!("A_0 should increment");
    };
    certificate.verify(0).unwrap();
    assert_eq!(certificate.after_family, family);
    assert!(family.density() > f.density());
}

#[test]
fn small_ms_step_rejects_small_l() {
    let f = fibre_decompose(&a0());
    let err = small_ms_step(&f, &int(1), &EngineConfig::default(), &Caps::default()).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)), "{err}");
}

#[test]
fn forced_small_ms_on_a0_chains_certificates() {
    let mut cfg = EngineConfig::default();
    cfg.branch_thresholds.force_small_ms = true;
    let a = a0();
    let t = weighted_driver(&a, &cfg, &Caps::default()).unwrap();
    assert!(t.summary.certificates >= 1);
    assert!(t.summary.chain_counts.windows(2).all(|w| w[0] >= w[1]));
    assert!(t.summary.sound);
    verify(&t.to_jsonl(), &Caps::default()).unwrap();
}

#[test]
fn tampering_is_caught_and_names_the_step() {
    let mut cfg = EngineConfig::default();
    cfg.branch_thresholds.force_small_ms = true;
    let t = weighted_driver(&a0(), &cfg, &Caps::default()).unwrap();
    let good = t.to_jsonl();
    verify(&good, &Caps::default()).unwrap();

    // A forged floor: internally consistent, but the replay disagrees.
    let mut forged = t.clone();
    let last = forged.events.iter_mut().rev().find(|e| e.floor.is_some()).unwrap();
    let step = last.step;
    let fl = last.floor.as_mut().unwrap();
    fl.local = &fl.local * int(2);
    fl.global = z4ap::certificate::transport_floor(&fl.local, 3, fl.m);
    forged.summary.global_floor = fl.global.clone();
    forged.summary.sound = forged.summary.global_floor <= forged.summary.exact_lambda;
    match verify(&forged.to_jsonl(), &Caps::default()) {
        Err(Error::Certificate { step: s, .. }) => assert_eq!(s, step),
        other => panic!("forgery accepted: {other:?}"),
    }

    // A broken certificate fails on its own, before any replay.
    let mut broken = t.clone();
    let ev = broken.events.iter_mut().find(|e| e.certificate.is_some()).unwrap();
    let step = ev.step;
    ev.certificate.as_mut().unwrap().claimed_gain = int(1);
    match verify(&broken.to_jsonl(), &Caps::default()) {
        Err(Error::Certificate { step: s, .. }) => assert_eq!(s, step),
        other => panic!("broken certificate accepted: {other:?}"),
    }

    let mut lines: Vec<&str> = good.lines().collect();
    lines.swap(1, 2);
    assert!(verify(&(lines.join("\n") + "\n"), &Caps::default()).is_err());
    assert!(Trace::parse("{}").is_err());
}

#[test]
fn search_in_z4_2_is_frozen() {
    let r = max_free_search(2, &Caps::default()).unwrap();
    assert_eq!(r.size, 6);
    assert_eq!(r.set, Z4Set::from_codes(2, [0, 1, 4, 6, 9, 10]).unwrap());
    assert_eq!(r.proven_maximum, Some(true));
}

#[test]
fn config_from_json_rejects_unknown_fields() {
    assert!(EngineConfig::from_json(r#"{"C_S": [1, 4]}"#).is_ok());
    assert!(EngineConfig::from_json(r#"{"C_S": [1, 4], "typo": 1}"#).is_err());
    assert!(EngineConfig::from_json(r#"{"C_S": [0, 1]}"#).is_err());
}
