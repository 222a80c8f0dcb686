//! One line per acceptance criterion. Runs without the test harness so the
//! lines show up in plain `cargo test` output.

use std::time::{Duration, Instant};

use rand::Rng;
use z4ap::constructions::{a0, max_free_search, moser, moser_size, product};
use z4ap::counting::{
    has_proper_progression, lambda_family, lambda_fibre, lambda_fourier, lambda_naive, lev_sum, quadruple_count,
    quadruple_count_wht, trivial_count, trivial_count_enumerated,
};
use z4ap::engine::{run, EngineConfig};
use z4ap::group::{fibre_decompose, subgroup_from_character, z2_order};
use z4ap::harmonic::{spectrum_of_set, sup_nontrivial};
use z4ap::increment::{density_fn_increment, fibre_increment, large_l2_drive, linf_increment};
use z4ap::random::{corpus, family, nonempty_z4_set, rng, unit_fn, z2_set_of_size};
use z4ap::rational::Rational;
use z4ap::regularize::{bsg_oracle, uniformize, BsgResult};
use z4ap::trace::Driver;
use z4ap::{Caps, Error, Family, Z2Set};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn r(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

fn within(limit: Duration, t: Instant, what: &str) -> Result<(), String> {
    let e = t.elapsed();
    if e > limit {
        return Err(format!("{what} took {e:?}, limit {limit:?}"));
    }
    Ok(())
}

fn triple_counts() -> Outcome {
    let t = Instant::now();
    let caps = Caps::default();
    let mut g = rng(1);
    for n in 1..=3 {
        for i in 0..50 {
            let a = nonempty_z4_set(&mut g, n).map_err(|e| e.to_string())?;
            let naive = lambda_naive(&a, &caps).map_err(|e| e.to_string())?.raw_count;
            let fourier = lambda_fourier(&a).map_err(|e| e.to_string())?.raw_count;
            // |G|² = |H|⁴ with H = Z_2^n, so the raw counts coincide.
            let fam = lambda_family(&fibre_decompose(&a))
                .map_err(|e| e.to_string())?
                .raw_count;
            if naive != fourier || naive != fam {
                return Err(format!(
                    "n = {n}, set {i}: naive {naive}, fourier {fourier}, family {fam}"
                ));
            }
        }
    }
    within(Duration::from_secs(60), t, "150 sets")?;
    Ok(format!("150 sets agree in {:?}", t.elapsed()))
}

fn trivial_progressions() -> Outcome {
    for n in 1..=4 {
        if trivial_count(n) != 8u128.pow(n as u32) {
            return Err(format!("T(Z_4^{n}) = {}", trivial_count(n)));
        }
    }
    for n in 1..=3 {
        let e = trivial_count_enumerated(n).map_err(|e| e.to_string())?;
        if e != 8u128.pow(n as u32) {
            return Err(format!("enumeration gives {e} for n = {n}"));
        }
    }
    Ok("8^n for n <= 4, enumeration agrees for n <= 3".into())
}

fn lev_positivity() -> Outcome {
    let mut g = rng(3);
    for i in 0..100 {
        let a = nonempty_z4_set(&mut g, 1 + i % 3).map_err(|e| e.to_string())?;
        let sum = lev_sum(&a).map_err(|e| e.to_string())?;
        let alpha = a.density();
        if sum < &alpha * &alpha {
            return Err(format!("set {i}: sum {sum} < alpha^2 = {}", &alpha * &alpha));
        }
    }
    Ok("100 sets".into())
}

fn linf_identity() -> Outcome {
    let mut g = rng(4);
    for i in 0..200 {
        let m = 1 + i % 6;
        let f = unit_fn(&mut g, m, 12).map_err(|e| e.to_string())?;
        let gamma = g.gen_range(1..z2_order(m) as u32);
        let lin = linf_increment(&f, gamma).map_err(|e| e.to_string())?;
        // Coset averages and the coefficient, straight from the values.
        let h = subgroup_from_character(m, gamma).map_err(|e| e.to_string())?;
        let avg = |rep: u32| {
            h.members().map(|y| f.value(rep ^ y).clone()).sum::<Rational>() / Rational::from_integer(h.order().into())
        };
        let best = avg(0).max(avg(h.least_outside().expect("index 2")));
        let coeff: Rational = (0..z2_order(m) as u32)
            .map(|x| {
                let v = f.value(x).clone();
                if (gamma & x).count_ones() % 2 == 1 {
                    -v
                } else {
                    v
                }
            })
            .sum::<Rational>()
            / Rational::from_integer(z2_order(m).into());
        let expected = f.mean() + num_abs(&coeff);
        if lin.value != best || best != expected {
            return Err(format!("instance {i}: {} vs {best} vs {expected}", lin.value));
        }
    }
    Ok("200 pairs, exact equality".into())
}

fn num_abs(x: &Rational) -> Rational {
    if x < &Rational::from_integer(0.into()) {
        -x.clone()
    } else {
        x.clone()
    }
}

fn increment_certificates() -> Outcome {
    let mut g = rng(5);
    let mut checked = 0;
    for i in 0..100 {
        let m = 1 + i % 4;
        let f = family(&mut g, m).map_err(|e| e.to_string())?;
        let gamma = g.gen_range(1..z2_order(m) as u32);
        for step in [fibre_increment, density_fn_increment] {
            let (after, cert) = step(&f, gamma).map_err(|e| format!("family {i}: {e}"))?;
            cert.verify(0).map_err(|e| format!("family {i}: {e}"))?;
            let before_q = quadruple_count_wht(&f).map_err(|e| e.to_string())?;
            let after_q = quadruple_count_wht(&after).map_err(|e| e.to_string())?;
            // |H|⁴Λ(𝒜) ≥ 2⁴|H'|⁴Λ(𝒜')/2⁴, both sides recounted.
            if before_q != cert.before.raw_count || after_q != cert.after.raw_count || before_q < after_q {
                return Err(format!("family {i}: counts {before_q} -> {after_q}"));
            }
            if after.density() < f.density() + &cert.claimed_gain {
                return Err(format!("family {i}: density gain below the claim"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} certificates, zero failures"))
}

/// Every fibre over a random `S` is a random `k`-set.
fn delta_indicator(g: &mut impl Rng, m: usize) -> z4ap::Result<Family> {
    let q = z2_order(m) as usize;
    let k = g.gen_range(1..=q);
    let size = g.gen_range(1..=q);
    let s = z2_set_of_size(g, m, size)?;
    let fibres = (0..q as u32)
        .map(|h| {
            if s.contains(h) {
                z2_set_of_size(g, m, k)
            } else {
                Z2Set::empty(m)
            }
        })
        .collect::<z4ap::Result<Vec<_>>>()?;
    Family::new(m, fibres)
}

/// A `δ·1_S` family on `Z_2^5` with no progressions beyond `d ∈ ker 2`.
/// For a basis `u_1..u_5`, `S = {h_j}` with `⟨h_j, u_i⟩ = [i ≠ j]` and
/// `A_{h_j} ⊆ {⟨a, u_j⟩ = 1}`, so `A_{h_j} + A_{h_j}` misses every
/// `h_j + h_i`. Then `Λ = 5k²/q⁴ < δ³σ²/2` once `k > 2q/5`, which forces
/// the driver to step.
fn progression_poor(g: &mut impl Rng) -> z4ap::Result<Family> {
    let m = 5;
    let q = z2_order(m) as u32;
    let u: Vec<u32> = loop {
        let u: Vec<u32> = (0..m).map(|_| g.gen_range(1..q)).collect();
        if z4ap::group::rref(u.clone()).len() == m {
            break u;
        }
    };
    let k = g.gen_range(13..=16);
    let mut fibres = vec![Z2Set::empty(m)?; q as usize];
    for j in 0..m {
        let h = (0..q)
            .find(|&h| (0..m).all(|i| z4ap::group::dot2(h, u[i]) == (i != j)))
            .expect("u is a basis");
        let half: Vec<u32> = (0..q).filter(|&a| z4ap::group::dot2(a, u[j])).collect();
        let pick = rand::seq::index::sample(g, half.len(), k);
        fibres[h as usize] = Z2Set::from_codes(m, pick.into_iter().map(|i| half[i]))?;
    }
    Family::new(m, fibres)
}

fn large_l2_driver() -> Outcome {
    let mut g = rng(6);
    let mut steps = 0;
    for i in 0..20 {
        let f = if i % 2 == 0 {
            progression_poor(&mut g)
        } else {
            delta_indicator(&mut g, 1 + i % 5)
        };
        let f = f.map_err(|e| e.to_string())?;
        let d = large_l2_drive(&f, 16).map_err(|e| format!("instance {i}: {e}"))?;
        if d.steps as u64 > d.step_bound {
            return Err(format!("instance {i}: {} steps, bound {}", d.steps, d.step_bound));
        }
        let exact = lambda_family(&f).map_err(|e| e.to_string())?.lambda;
        if d.lambda_floor > exact {
            return Err(format!("instance {i}: floor {} > Λ = {exact}", d.lambda_floor));
        }
        let recount = quadruple_count(&d.final_family);
        if d.certificates.last().is_some_and(|c| c.after.raw_count != recount) {
            return Err(format!("instance {i}: final count does not match"));
        }
        if i % 2 == 0 && d.steps == 0 {
            return Err(format!("instance {i} was built to step but stopped at once"));
        }
        steps += d.steps;
    }
    Ok(format!("20 instances, {steps} steps in total"))
}

fn a0_checks() -> Outcome {
    let t = Instant::now();
    let a = a0();
    if a.len() != 16 || has_proper_progression(&a).is_some() {
        return Err("A_0 is not a free 16-set".into());
    }
    within(Duration::from_secs(1), t, "A_0")?;
    let t = Instant::now();
    let p = product(&a, &a).map_err(|e| e.to_string())?;
    if has_proper_progression(&p).is_some() {
        return Err("A_0 x A_0 has a proper progression".into());
    }
    within(Duration::from_secs(120), t, "A_0 x A_0")?;
    // 256³ = (4⁶)²
    if p.len() != 256 || 256u128.pow(3) != 4096u128.pow(2) {
        return Err(format!("product has {} elements", p.len()));
    }
    Ok("|A_0| = 16, A_0 x A_0 free with 256 = (4^6)^(2/3) elements".into())
}

fn moser_sets() -> Outcome {
    let t = Instant::now();
    if moser_size(4) != 32 || moser_size(5) != 80 {
        return Err(format!("sizes {} and {}", moser_size(4), moser_size(5)));
    }
    for n in 1..=5 {
        let s = moser(n).map_err(|e| e.to_string())?;
        if s.len() as u128 != moser_size(n) || has_proper_progression(&s).is_some() {
            return Err(format!("S_{n} fails"));
        }
    }
    within(Duration::from_secs(300), t, "Moser sets")?;
    Ok("|S_4| = 32, |S_5| = 80, free for n <= 5".into())
}

fn exhaustive_search() -> Outcome {
    let caps = Caps::default();
    let one = max_free_search(1, &caps).map_err(|e| e.to_string())?;
    let two = max_free_search(2, &caps).map_err(|e| e.to_string())?;
    if one.size != 2 || one.proven_maximum != Some(true) {
        return Err(format!("Z_4^1 maximum {}", one.size));
    }
    let frozen = [0u32, 1, 4, 6, 9, 10];
    if two.size != 6 || two.set.members().collect::<Vec<_>>() != frozen || two.proven_maximum != Some(true) {
        return Err(format!("Z_4^2 gives {:?}", two.set.members().collect::<Vec<_>>()));
    }
    Ok("max 2 in Z_4^1, frozen max 6 in Z_4^2 reproduced".into())
}

fn engine_soundness() -> Outcome {
    let caps = Caps::default();
    let inputs = corpus(2024, 30, 3).map_err(|e| e.to_string())?;
    let mut runs = 0;
    for c_s in [r(1, 4), r(1, 1), r(4, 1)] {
        let cfg = EngineConfig {
            c_s,
            ..EngineConfig::default()
        };
        for (i, a) in inputs.iter().enumerate() {
            for driver in [Driver::Rml, Driver::Weighted] {
                let t = match run(driver, a, &cfg, &caps) {
                    Err(e @ Error::Falsification { .. }) => return Err(format!("input {i}: exit-2 event: {e}")),
                    other => other.map_err(|e| format!("input {i}: {e}"))?,
                };
                let exact = lambda_fibre(a).map_err(|e| e.to_string())?.lambda;
                if !t.summary.sound || t.summary.global_floor > exact {
                    return Err(format!(
                        "input {i}, {driver:?}: floor {} > {exact}",
                        t.summary.global_floor
                    ));
                }
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} runs sound"))
}

fn uniformization() -> Outcome {
    let caps = Caps::default();
    let mut g = rng(11);
    let mut runs = 0;
    let mut steps = 0;
    for i in 0..60 {
        let m = 2 + i % 4;
        let size = g.gen_range(1..=z2_order(m) as usize);
        let a = z2_set_of_size(&mut g, m, size).map_err(|e| e.to_string())?;
        // The oracle tends to return cosets that are already uniform, so
        // half the runs start from the whole group instead.
        let start = if i % 2 == 0 {
            match bsg_oracle(&a, &r(1, 8), &r(0, 1), &caps).map_err(|e| e.to_string())? {
                Some(b) => b,
                None => continue,
            }
        } else {
            BsgResult::at(&a, z4ap::Subgroup2::whole(m), 0)
        };
        let eps = r(1, 1 + (i as i64 % 4));
        let u = uniformize(&a, &eps, &start, 16).map_err(|e| format!("set {i}: {e}"))?;
        let out = u.result.restricted(&a);
        if out.ambient_m() > 0 {
            let (_, sup) = sup_nontrivial(&spectrum_of_set(&out)).map_err(|e| e.to_string())?;
            if sup > &eps * out.density() {
                return Err(format!("set {i}: sup {sup} > eps P(A')"));
            }
        }
        for s in &u.steps {
            if s.density_after < &s.density_before * (Rational::from_integer(1.into()) + &eps) {
                return Err(format!("set {i}: density grew by less than 1 + eps"));
            }
        }
        runs += 1;
        steps += u.steps.len();
    }
    if runs == 0 || steps == 0 {
        return Err("the loop was never exercised".into());
    }
    Ok(format!("{runs} runs, {steps} density steps"))
}

fn determinism() -> Outcome {
    let caps = Caps::default();
    let a = corpus(99, 6, 3).map_err(|e| e.to_string())?;
    let traces = |threads: usize| -> Result<Vec<String>, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| {
            let mut out = Vec::new();
            for x in &a {
                let mut cfg = EngineConfig::default();
                cfg.branch_thresholds.force_small_ms = true;
                for d in [Driver::Rml, Driver::Weighted] {
                    out.push(run(d, x, &cfg, &caps).map_err(|e| e.to_string())?.to_jsonl());
                }
            }
            Ok(out)
        })
    };
    let one = traces(1)?;
    if one != traces(1)? || one != traces(4)? {
        return Err("traces differ between runs".into());
    }
    Ok(format!("{} traces identical under 1 and 4 threads", one.len()))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("triple-count agreement", triple_counts),
        ("trivial progressions", trivial_progressions),
        ("Lev positivity", lev_positivity),
        ("coset average identity", linf_identity),
        ("increment certificates", increment_certificates),
        ("delta-indicator driver", large_l2_driver),
        ("A_0 and its square", a0_checks),
        ("Moser sets", moser_sets),
        ("exhaustive search", exhaustive_search),
        ("engine soundness", engine_soundness),
        ("uniformization loop", uniformization),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
