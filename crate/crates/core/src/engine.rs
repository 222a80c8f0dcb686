//! The instrumented drivers.
//!
//! Two top-level iterations run on the fibre decomposition of a set
//! `A ⊂ Z_4^n`. The first is the classical one, `α ↦ α + α²/2` until
//! `Λ ≥ α³/2`. The second is the weighted driver, which switches between
//! the dyadic large-mean-square path and the small-mean-square step (with
//! its high-energy sub-step). Every family change is a verified certificate
//! and every floor is an exact rational lower bound on `Λ` of the family it
//! was computed for, carried back to the input through the chain.
//!
//! Guaranteed inequalities that fail raise a falsification with a dump.
//! The one step whose written justification does not hold in general (the
//! pointwise `/2` bound in the `S₀` case of the high-energy step) is
//! flagged instead, and the exact term replaces the claimed one.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::caps::Caps;
use crate::certificate::{CertKind, IncrementCertificate};
use crate::counting::{density_wht, diagnostics, energy, fibre_inner_product, lev_sum, quadruple_count, raw_to_lambda};
use crate::error::{Error, Result};
use crate::group::{fibre_decompose, rref, Family, Subgroup2, Z2Set, Z4Set};
use crate::harmonic::{dft4, indicator_wht, RealFn2};
use crate::increment::{density_fn_increment, dyadic_select, fibre_increment, large_l2_drive};
use crate::rational::{
    int, ln_lower, ln_upper, log2_ceil, log2_floor, pow2, powi, ratio, serde_rational, sqrt_floor, Rational,
};
use crate::regularize::{bsg_oracle, uniformize, Uniformized};
use crate::trace::{Driver, Recorder, Trace, TraceEvent};

fn default_c_s() -> Rational {
    int(1)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BranchThresholds {
    /// `S_L = {f ≥ large_factor·Kα}`.
    #[serde(with = "serde_rational")]
    pub large_factor: Rational,
    /// `S_S = {f ≤ small_factor·α}`.
    #[serde(with = "serde_rational")]
    pub small_factor: Rational,
    /// First assumption: second moments at most `asm1_factor·Lα³`.
    #[serde(with = "serde_rational")]
    pub asm1_factor: Rational,
    /// Second and third assumptions: at most `asm2_factor·Lα²/K`.
    #[serde(with = "serde_rational")]
    pub asm2_factor: Rational,
    /// The direct term is taken as the floor when it is at least
    /// `direct_factor·αE[1_{S_i}f²]`. Raising it above `1/2` forces the
    /// spectral branch; checks that rely on the direct term being small are
    /// then logged rather than enforced.
    #[serde(with = "serde_rational")]
    pub direct_factor: Rational,
    /// Take the small-mean-square step even when `L_i` is below the
    /// routing threshold.
    pub force_small_ms: bool,
    /// Replaces the solved `L_i` (still raised to `max(K, 2)`).
    #[serde(with = "serde_rational::option")]
    pub l_override: Option<Rational>,
}

impl Default for BranchThresholds {
    fn default() -> Self {
        BranchThresholds {
            large_factor: int(4),
            small_factor: Rational::new(1.into(), 4.into()),
            asm1_factor: int(1),
            asm2_factor: Rational::new(1.into(), 4.into()),
            direct_factor: Rational::new(1.into(), 2.into()),
            force_small_ms: false,
            l_override: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(rename = "C_S", with = "serde_rational")]
    pub c_s: Rational,
    /// The oracle looks for subgroups of density at least this times the
    /// fibre density.
    #[serde(with = "serde_rational")]
    pub bsg_min_subgroup_density: Rational,
    /// Fractional bits for logarithm and square-root bounds.
    pub bits: u32,
    pub max_steps: usize,
    pub branch_thresholds: BranchThresholds,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            c_s: default_c_s(),
            bsg_min_subgroup_density: Rational::new(1.into(), 8.into()),
            bits: 8,
            max_steps: 64,
            branch_thresholds: BranchThresholds::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.c_s.is_positive() {
            return Err(Error::invalid("C_S must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be at least 1"));
        }
        if !(1..=30).contains(&self.bits) {
            return Err(Error::invalid("bits must lie in 1..=30"));
        }
        if self.bsg_min_subgroup_density.is_negative() {
            return Err(Error::invalid("bsg_min_subgroup_density must be non-negative"));
        }
        if let Some(l) = &self.branch_thresholds.l_override {
            if !l.is_positive() {
                return Err(Error::invalid("l_override must be positive"));
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: EngineConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    RmlFloor,
    RmlIncrement,
    FullFamily,
    Diagnostics,
    DyadicSelect,
    LargeL2Step,
    LargeL2Floor,
    SmallMsLevels,
    Asm1Increment,
    Asm2Increment,
    Asm3Increment,
    DirectFloor,
    Spectral,
    HighEnergy,
    Uniformized,
    CaseS0Floor,
    CaseS1,
    EnergyGrouping,
    VacuousFloor,
    ProofCheck,
    MaxSteps,
}

trait J {
    fn j(self) -> Value;
}

impl J for &Rational {
    fn j(self) -> Value {
        serde_rational::to_value(self)
    }
}

impl J for Rational {
    fn j(self) -> Value {
        serde_rational::to_value(&self)
    }
}

impl J for Value {
    fn j(self) -> Value {
        self
    }
}

macro_rules! impl_j {
    ($($t:ty),*) => {$(impl J for $t { fn j(self) -> Value { Value::from(self) } })*};
}
impl_j!(bool, u32, u64, usize, i64, &str);

macro_rules! measured {
    ($($k:expr => $v:expr),* $(,)?) => {{
        #[allow(unused_mut)]
        let mut map: BTreeMap<String, Value> = BTreeMap::new();
        $(map.insert(String::from($k), J::j($v));)*
        map
    }};
}

fn rationals(xs: &[Rational]) -> Value {
    Value::Array(xs.iter().map(serde_rational::to_value).collect())
}

fn dump(f: &Family, extra: Value) -> Value {
    json!({"family": serde_json::to_value(f).unwrap_or(Value::Null), "at": extra})
}

fn ensure(cond: bool, context: &str, detail: impl FnOnce() -> String, f: &Family) -> Result<()> {
    if cond {
        Ok(())
    } else {
        let d = detail();
        Err(Error::falsification(context, d.clone(), dump(f, Value::from(d))))
    }
}

/// Largest `L ≥ 1` on the grid `2^-bits` with `C_S L³ ln²L ≤ ln(α⁻¹)/2`.
/// `ln L` is rounded up and `ln α⁻¹` down, so the returned `L` never
/// exceeds the true solution.
pub fn solve_l(alpha: &Rational, c_s: &Rational, bits: u32) -> Rational {
    let target = ln_lower(&alpha.recip(), bits) / int(2);
    let scale = 1i64 << bits;
    let ok = |k: i64| {
        let l = Rational::new(k.into(), scale.into());
        let ln = ln_upper(&l, bits);
        c_s * powi(&l, 3) * &ln * &ln <= target
    };
    let mut lo = scale;
    let mut hi = 2 * scale;
    while ok(hi) {
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Rational::new(lo.into(), scale.into())
}

/// `2 + K²/(1 + ln K)²` with `ln K` rounded up.
pub fn routing_threshold(k: &Rational, bits: u32) -> Rational {
    let d = int(1) + ln_upper(k, bits);
    int(2) + k * k / (&d * &d)
}

/// Runs `driver` on `a` and returns the full trace.
pub fn run(driver: Driver, a: &Z4Set, cfg: &EngineConfig, caps: &Caps) -> Result<Trace> {
    match driver {
        Driver::Rml => rml_driver(a, cfg, caps),
        Driver::Weighted => weighted_driver(a, cfg, caps),
    }
}

fn start(a: &Z4Set, cfg: &EngineConfig) -> Result<Recorder> {
    cfg.validate()?;
    if a.is_empty() {
        return Err(Error::precondition("the drivers need a non-empty set"));
    }
    Ok(Recorder::new(&fibre_decompose(a)))
}

/// The classical iteration: stop once `Λ ≥ α³/2`, otherwise pass to the
/// denser coset of the kernel of the largest coefficient of `f`.
pub fn rml_driver(a: &Z4Set, cfg: &EngineConfig, _caps: &Caps) -> Result<Trace> {
    let mut rec = start(a, cfg)?;
    for _ in 0..cfg.max_steps {
        let f = rec.current().clone();
        let m = f.ambient_m();
        let alpha = f.density();
        let lambda = raw_to_lambda(quadruple_count(&f), m);
        let z = f.to_z4()?;
        let lev = lev_sum(&z)?;
        let sup4 = dft4(&z).sup_nontrivial_sq();
        let threshold = powi(&alpha, 3) / int(2);
        let mut measured = measured! {
            "alpha" => &alpha,
            "lambda" => &lambda,
            "threshold" => &threshold,
            "lev_sum" => &lev,
            "m" => m,
        };
        if let Some((r, v)) = &sup4 {
            measured.insert("z4_sup_witness".into(), Value::from(*r));
            measured.insert("z4_sup_abs_sq".into(), v.j());
        }
        if lambda >= threshold {
            rec.floor_event(Branch::RmlFloor, measured, threshold);
            return rec.finish(Driver::Rml, cfg, a);
        }
        let diag = diagnostics(&f)?;
        let need = &alpha * &alpha / int(2);
        ensure(
            diag.sup_f_hat >= need,
            "rml_driver",
            || format!("Λ = {lambda} < α³/2 but sup |f^| = {} < α²/2", diag.sup_f_hat),
            &f,
        )?;
        let gamma = diag.sup_witness.expect("positive sup implies a witness");
        let (after, cert) = density_fn_increment(&f, gamma)?;
        let alpha_new = after.density();
        ensure(
            alpha_new >= &alpha + &need,
            "rml_driver",
            || format!("density {alpha_new} below α + α²/2"),
            &f,
        )?;
        measured.insert("gamma".into(), Value::from(gamma));
        measured.insert("sup_f_hat".into(), diag.sup_f_hat.j());
        measured.insert("alpha_new".into(), alpha_new.j());
        rec.certify(Branch::RmlIncrement, measured, cert)?;
    }
    rec.note(Branch::MaxSteps, measured! {"max_steps" => cfg.max_steps});
    rec.finish(Driver::Rml, cfg, a)
}

/// The two-case loop: the dyadic path when `L_i ≤ 2 + K_i²/(1 + ln K_i)²`,
/// otherwise the small-mean-square step with `L = max(L_i, K_i, 2)`.
pub fn weighted_driver(a: &Z4Set, cfg: &EngineConfig, caps: &Caps) -> Result<Trace> {
    let mut rec = start(a, cfg)?;
    let bits = cfg.bits;
    let th = &cfg.branch_thresholds;
    for _ in 0..cfg.max_steps {
        let f = rec.current().clone();
        let alpha = f.density();
        if alpha.is_one() {
            let lambda = raw_to_lambda(quadruple_count(&f), f.ambient_m());
            rec.floor_event(
                Branch::FullFamily,
                measured! {"alpha" => &alpha, "lambda" => &lambda},
                lambda,
            );
            return rec.finish(Driver::Weighted, cfg, a);
        }
        let diag = diagnostics(&f)?;
        let l_i = solve_l(&alpha, &cfg.c_s, bits);
        let route = routing_threshold(&diag.k, bits);
        let dyadic = l_i <= route && !th.force_small_ms;
        rec.note(
            Branch::Diagnostics,
            measured! {
                "alpha" => &alpha,
                "K" => &diag.k,
                "L_i" => &l_i,
                "routing_threshold" => &route,
                "sup_f_hat" => &diag.sup_f_hat,
                "mean_square" => &diag.mean_square,
                "m" => f.ambient_m(),
                "path" => if dyadic { "dyadic" } else { "small_ms" },
            },
        );
        if dyadic {
            dyadic_path(&mut rec, bits)?;
            return rec.finish(Driver::Weighted, cfg, a);
        }
        let l = th.l_override.clone().unwrap_or(l_i).max(diag.k.clone()).max(int(2));
        if small_ms_inner(&mut rec, &l, cfg, caps)? {
            return rec.finish(Driver::Weighted, cfg, a);
        }
    }
    rec.note(Branch::MaxSteps, measured! {"max_steps" => cfg.max_steps});
    rec.finish(Driver::Weighted, cfg, a)
}

fn dyadic_path(rec: &mut Recorder, bits: u32) -> Result<()> {
    let f = rec.current().clone();
    let sel = dyadic_select(&f)?;
    rec.certify(
        Branch::DyadicSelect,
        measured! {
            "level" => sel.level,
            "delta" => &sel.delta,
            "delta_trimmed" => &sel.delta_trimmed,
            "epsilon" => &sel.epsilon,
            "K" => &sel.k,
            "level_masses" => rationals(&sel.level_masses),
            "band_bound_holds" => sel.band_bound_holds,
            "k_below_two" => sel.k_below_two,
            "level_set_size" => sel.level_set.len(),
        },
        sel.certificate,
    )?;
    large_l2_tail(rec, &sel.subfamily, bits)
}

/// Runs the `δ·1_S` iteration from the current family and records its
/// steps and floor.
fn large_l2_tail(rec: &mut Recorder, family: &Family, bits: u32) -> Result<()> {
    let drive = large_l2_drive(family, bits)?;
    let steps = drive.certificates.len();
    for cert in drive.certificates {
        let p = cert.params.clone();
        let mut measured: BTreeMap<String, Value> = p.into_iter().collect();
        measured.insert("gamma".into(), cert.gamma.map_or(Value::Null, Value::from));
        rec.certify(Branch::LargeL2Step, measured, cert)?;
    }
    rec.floor_event(
        Branch::LargeL2Floor,
        measured! {
            "steps" => steps,
            "step_bound" => drive.step_bound,
            "within_bound" => steps as u64 <= drive.step_bound,
            "m" => drive.final_family.ambient_m(),
        },
        drive.final_floor,
    );
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub enum SmallMsOutcome {
    /// A floor on `Λ` of the input family.
    Floor { floor: Rational, events: Vec<TraceEvent> },
    Increment {
        family: Family,
        certificate: Box<IncrementCertificate>,
        events: Vec<TraceEvent>,
    },
}

/// The small-mean-square step on its own, for a family with `α > 0` and
/// `L ≥ max(K, 2)`.
pub fn small_ms_step(f: &Family, l: &Rational, cfg: &EngineConfig, caps: &Caps) -> Result<SmallMsOutcome> {
    cfg.validate()?;
    let diag = diagnostics(f)?;
    if l < &diag.k || l < &int(2) {
        return Err(Error::precondition(format!(
            "L = {l} is below max(K, 2) = max({}, 2)",
            diag.k
        )));
    }
    let mut rec = Recorder::new(f);
    if small_ms_inner(&mut rec, l, cfg, caps)? {
        let floor = rec.floor().cloned().expect("floor recorded");
        Ok(SmallMsOutcome::Floor {
            floor,
            events: rec.into_events(),
        })
    } else {
        let family = rec.current().clone();
        let certificate = rec
            .events()
            .iter()
            .rev()
            .find_map(|e| e.certificate.clone())
            .expect("increment recorded");
        Ok(SmallMsOutcome::Increment {
            family,
            certificate: Box::new(certificate),
            events: rec.into_events(),
        })
    }
}

/// Per-character moments over a set of fibre indices, from the integer
/// transforms `W_h`.
struct Moments {
    /// `E_h 1_S(h) |1_{A_h}^(γ)|`.
    first: Vec<Rational>,
    second: Vec<Rational>,
    fourth: Vec<Rational>,
}

fn moments(f: &Family, s: &Z2Set) -> Moments {
    let q = f.group_order() as usize;
    let m = f.ambient_m() as i64;
    let mut s1 = vec![0i128; q];
    let mut s2 = vec![0i128; q];
    let mut s4 = vec![0i128; q];
    for h in s.members() {
        let w = indicator_wht(f.fibre(h));
        for (g, &v) in w.iter().enumerate() {
            let v = v as i128;
            s1[g] += v.abs();
            s2[g] += v * v;
            s4[g] += v * v * v * v;
        }
    }
    let scale = |xs: Vec<i128>, k: i64| -> Vec<Rational> {
        xs.into_iter()
            .map(|x| Rational::from_integer(x.into()) * pow2(-k * m))
            .collect()
    };
    Moments {
        first: scale(s1, 2),
        second: scale(s2, 3),
        fourth: scale(s4, 5),
    }
}

/// Least nontrivial character attaining the maximum of `xs`.
fn argmax_nontrivial(xs: &[Rational]) -> Option<(u32, Rational)> {
    let mut best: Option<(u32, &Rational)> = None;
    for (g, x) in xs.iter().enumerate().skip(1) {
        if best.is_none_or(|(_, b)| x > b) {
            best = Some((g as u32, x));
        }
    }
    best.map(|(g, x)| (g, x.clone()))
}

/// Returns `true` when a floor was recorded, `false` after an increment.
fn small_ms_inner(rec: &mut Recorder, l: &Rational, cfg: &EngineConfig, caps: &Caps) -> Result<bool> {
    let th = &cfg.branch_thresholds;
    let f = rec.current().clone();
    let m = f.ambient_m();
    let q = f.group_order();
    let diag = diagnostics(&f)?;
    let alpha = diag.alpha.clone();
    let k = diag.k.clone();
    let dens: Vec<Rational> = (0..q as u32).map(|h| f.density_fn(h)).collect();

    let large = &th.large_factor * &k * &alpha;
    let small = &th.small_factor * &alpha;
    let s_large = Z2Set::collect(m, (0..q as u32).filter(|&h| dens[h as usize] >= large))?;
    let s_small = Z2Set::collect(m, (0..q as u32).filter(|&h| dens[h as usize] <= small))?;
    let middle: Vec<u32> = (0..q as u32)
        .filter(|&h| !s_large.contains(h) && !s_small.contains(h))
        .collect();
    let top = (log2_ceil(&k).max(0) + 4) as u32;
    let mut levels = Vec::new();
    for i in 0..=top {
        let lo = pow2(i as i64 - 2) * &alpha;
        let hi = pow2(i as i64 - 1) * &alpha;
        let members = middle
            .iter()
            .copied()
            .filter(|&h| lo <= dens[h as usize] && dens[h as usize] <= hi);
        levels.push(Z2Set::collect(m, members)?);
    }
    // P(S_i)·2^{i-1}α, compared as |S_i|·2^i.
    let weight = |i: usize| (levels[i].len() as u128) << i;
    let level = (0..levels.len()).fold(0, |b, i| if weight(i) > weight(b) { i } else { b });
    let s_i = levels[level].clone();
    let k_i = pow2(level as i64 - 1);
    rec.note(
        Branch::SmallMsLevels,
        measured! {
            "alpha" => &alpha,
            "K" => &k,
            "L" => l,
            "S_L" => s_large.len(),
            "S_S" => s_small.len(),
            "S" => middle.len(),
            "level" => level,
            "level_sizes" => Value::from(levels.iter().map(|s| s.len()).collect::<Vec<_>>()),
            "K_i" => &k_i,
        },
    );

    let mo = moments(&f, &s_i);
    let f_hat: Vec<Rational> = density_wht(&f)
        .into_iter()
        .map(|v| ratio(v.unsigned_abs(), q * q))
        .collect();
    let thr1 = &th.asm1_factor * l * powi(&alpha, 3);
    let thr2 = &th.asm2_factor * l * &alpha * &alpha / &k;

    let checks: [(Branch, &[Rational], &Rational); 3] = [
        (Branch::Asm1Increment, &mo.second, &thr1),
        (Branch::Asm2Increment, &mo.first, &thr2),
        (Branch::Asm3Increment, &f_hat, &thr2),
    ];
    for (branch, values, thr) in checks {
        let Some((gamma, sup)) = argmax_nontrivial(values) else {
            continue;
        };
        if &sup <= thr {
            continue;
        }
        let (after, cert) = if branch == Branch::Asm3Increment {
            density_fn_increment(&f, gamma)?
        } else {
            fibre_increment(&f, gamma)?
        };
        let alpha_new = after.density();
        ensure(
            cert.claimed_gain >= thr2 && alpha_new > alpha,
            "small_ms_step",
            || format!("{branch:?}: gain {} below Lα²/4K = {thr2}", cert.claimed_gain),
            &f,
        )?;
        let measured = measured! {
            "gamma" => gamma,
            "sup" => &sup,
            "threshold" => thr,
            "gain" => &cert.claimed_gain,
            "required_gain" => &thr2,
            "alpha" => &alpha,
            "alpha_new" => &alpha_new,
            "L" => l,
            "K" => &k,
        };
        rec.certify(branch, measured, cert)?;
        return Ok(false);
    }

    let e1f: Rational = s_i.members().map(|h| dens[h as usize].clone()).sum::<Rational>() / int(q as i64);
    let e1f2: Rational = s_i
        .members()
        .map(|h| &dens[h as usize] * &dens[h as usize])
        .sum::<Rational>()
        / int(q as i64);
    let direct: Rational = s_i.members().map(|h| fibre_inner_product(&f, h)).sum::<Rational>() / int(q as i64);
    let half = &alpha * &e1f2 / int(2);
    let cut = &th.direct_factor * &alpha * &e1f2;
    if direct >= cut {
        rec.floor_event(
            Branch::DirectFloor,
            measured! {"direct" => &direct, "threshold" => &cut, "E1f" => &e1f, "E1f2" => &e1f2},
            direct,
        );
        return Ok(true);
    }
    // Below αE1f²/2 the checks that follow are guaranteed; above it (only
    // reachable through `direct_factor`) they are recorded as measured.
    let premise = direct < half;
    let mut checks = BTreeMap::new();
    let mut check = |name: &str, ok: bool, detail: String| -> Result<()> {
        checks.insert(name.to_string(), Value::from(ok));
        if premise {
            ensure(ok, "small_ms_step", || detail, &f)?;
        }
        Ok(())
    };

    // Σ_{γ≠0} |f^(γ)| E 1_{S_i}|c_h(γ)|² ≥ α E1f²/2.
    let weighted = |g: usize| &f_hat[g] * &mo.second[g];
    let rop: Rational = (1..q as usize).map(weighted).sum();
    check(
        "rop",
        rop >= half,
        format!("off-zero mass {rop} below αE1f²/2 = {half}"),
    )?;
    let tau = &e1f2 * &e1f2 / (int(16) * &k * &e1f);
    let spec: Vec<usize> = (1..q as usize).filter(|&g| f_hat[g] >= tau).collect();
    let cla: Rational = spec.iter().map(|&g| weighted(g)).sum();
    let quarter = &alpha * &e1f2 / int(4);
    check(
        "cla",
        cla >= quarter,
        format!("mass on 𝓛 {cla} below αE1f²/4 = {quarter}"),
    )?;
    let (j0, j, bands, band_mass) = match spec.iter().map(|&g| f_hat[g].clone()).max() {
        None => (0, 0, vec![Vec::new()], vec![Rational::zero()]),
        Some(top_coeff) => {
            let j0 = log2_ceil(&(&top_coeff / &tau)).max(0) as usize;
            let bands: Vec<Vec<usize>> = (0..=j0)
                .map(|j| {
                    let hi = &top_coeff * pow2(-(j as i64));
                    let lo = &top_coeff * pow2(-(j as i64) - 1);
                    spec.iter()
                        .copied()
                        .filter(|&g| lo < f_hat[g] && f_hat[g] <= hi)
                        .collect()
                })
                .collect();
            let band_mass: Vec<Rational> = bands.iter().map(|b| b.iter().map(|&g| weighted(g)).sum()).collect();
            let j = (0..band_mass.len()).fold(0, |b, i| if band_mass[i] > band_mass[b] { i } else { b });
            (j0, j, bands, band_mass)
        }
    };
    let avg = &quarter / int(j0 as i64 + 1);
    check(
        "band_average",
        band_mass[j] >= avg,
        format!("best band mass {} below the average {avg}", band_mass[j]),
    )?;
    for &g in &bands[j] {
        let (e1, e2, e4) = (&mo.first[g], &mo.second[g], &mo.fourth[g]);
        if powi(e2, 3) > e1 * e1 * e4 {
            return Err(Error::mismatch("small_ms_step", format!("Hölder fails at γ = {g}")));
        }
        ensure(
            e1 * e1 * e4 <= &thr2 * &thr2 * e4,
            "small_ms_step",
            || format!("convexity bound fails at γ = {g}"),
            &f,
        )?;
    }

    let energies: Vec<(u32, Rational)> = s_i
        .members()
        .map(|h| Ok((h, energy(f.fibre(h))?)))
        .collect::<Result<_>>()?;
    let avg_energy = energies.iter().map(|(_, e)| e.clone()).sum::<Rational>() / int(energies.len() as i64);
    let s_prime = Z2Set::collect(
        m,
        energies
            .iter()
            .filter(|(_, e)| e * int(2) >= avg_energy)
            .map(|(h, _)| *h),
    )?;
    let c = energies
        .iter()
        .filter(|(h, _)| s_prime.contains(*h))
        .map(|(h, e)| e / powi(&dens[*h as usize], 3))
        .min()
        .expect("S_i' is non-empty");
    rec.note(
        Branch::Spectral,
        measured! {
            "direct" => &direct,
            "threshold" => &cut,
            "rop" => &rop,
            "tau" => &tau,
            "spec_size" => spec.len(),
            "spec_mass" => &cla,
            "j0" => j0,
            "j" => j,
            "band_sizes" => Value::from(bands.iter().map(Vec::len).collect::<Vec<_>>()),
            "band_mass" => &band_mass[j],
            "checks" => Value::Object(checks.into_iter().collect()),
            "premise" => premise,
            "S_i_prime" => s_prime.len(),
            "P_S_i_prime" => s_prime.density(),
            "c" => &c,
        },
    );
    high_energy_inner(rec, &s_prime, &c, &k_i, l, cfg, caps)?;
    Ok(true)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HighEnergyReport {
    /// Floor on `Λ` of the input family.
    pub floor: Rational,
    pub events: Vec<TraceEvent>,
}

/// The high-energy step on its own. An empty `S` gives the zero floor and
/// no events.
pub fn high_energy_step(
    f: &Family,
    s: &Z2Set,
    c: &Rational,
    k: &Rational,
    l: &Rational,
    cfg: &EngineConfig,
    caps: &Caps,
) -> Result<HighEnergyReport> {
    cfg.validate()?;
    if s.ambient_m() != f.ambient_m() {
        return Err(Error::DimensionMismatch {
            expected: f.ambient_m(),
            found: s.ambient_m(),
        });
    }
    if s.is_empty() {
        return Ok(HighEnergyReport {
            floor: Rational::zero(),
            events: Vec::new(),
        });
    }
    let mut rec = Recorder::new(f);
    high_energy_inner(&mut rec, s, c, k, l, cfg, caps)?;
    Ok(HighEnergyReport {
        floor: rec.floor().cloned().expect("floor recorded"),
        events: rec.into_events(),
    })
}

struct Piece {
    h: u32,
    u: Uniformized,
    fibre_part: Z2Set,
    conv: Rational,
}

fn high_energy_inner(
    rec: &mut Recorder,
    s: &Z2Set,
    c: &Rational,
    k: &Rational,
    l: &Rational,
    cfg: &EngineConfig,
    caps: &Caps,
) -> Result<()> {
    let f = rec.current().clone();
    let m = f.ambient_m();
    let q = f.group_order();
    let bits = cfg.bits;
    let alpha = f.density();
    let dens = RealFn2::density_of(&f);
    if !c.is_positive() || !k.is_positive() || !l.is_positive() {
        return Err(Error::precondition("c, K and L must be positive"));
    }
    for h in s.members() {
        let v = dens.value(h);
        if v > &(k * &alpha) || v * int(2) < k * &alpha {
            return Err(Error::precondition(format!("f({h}) = {v} outside [Kα/2, Kα]")));
        }
        if energy(f.fibre(h))? < c * powi(v, 3) {
            return Err(Error::precondition(format!("fibre {h} has energy below c·f³")));
        }
    }
    if !s.is_empty() {
        let diag = diagnostics(&f)?;
        if diag.sup_f_hat > l * &alpha * &alpha {
            return Err(Error::precondition(format!(
                "sup |f^| = {} exceeds Lα²",
                diag.sup_f_hat
            )));
        }
    }

    // ε = 2⁻²√(c/K), rounded down.
    let mut epsilon = (sqrt_floor(&(c / k), bits) / int(4)).min(int(1));
    let clamped = epsilon.is_zero();
    if clamped {
        epsilon = pow2(-(bits as i64));
    }
    rec.note(
        Branch::HighEnergy,
        measured! {"S" => s.len(), "c" => c, "K" => k, "L" => l, "epsilon" => &epsilon, "epsilon_clamped" => clamped},
    );
    if s.is_empty() {
        rec.floor_event(
            Branch::VacuousFloor,
            measured! {"reason" => "S is empty"},
            Rational::zero(),
        );
        return Ok(());
    }

    let members: Vec<u32> = s.members().collect();
    let served: Vec<(u32, Option<Uniformized>)> = members
        .par_iter()
        .map(|&h| {
            let a = f.fibre(h);
            let floor = &cfg.bsg_min_subgroup_density * dens.value(h);
            match bsg_oracle(a, c, &floor, caps)? {
                None => Ok((h, None)),
                Some(b) => Ok((h, Some(uniformize(a, &epsilon, &b, bits)?))),
            }
        })
        .collect::<Result<_>>()?;
    let excluded: Vec<u32> = served.iter().filter(|(_, u)| u.is_none()).map(|(h, _)| *h).collect();
    let pieces: Vec<Piece> = served
        .into_iter()
        .filter_map(|(h, u)| u.map(|u| (h, u)))
        .map(|(h, u)| Piece {
            h,
            fibre_part: u.result.restricted(f.fibre(h)),
            conv: dens.coset_average(&u.result.subgroup, h),
            u,
        })
        .collect();
    for p in &pieces {
        let r = &p.u.result;
        if r.sup_coeff > &epsilon * &r.local_density {
            return Err(Error::mismatch(
                "high_energy_step",
                format!("fibre {} left the loop non-uniform", p.h),
            ));
        }
    }
    rec.note(
        Branch::Uniformized,
        measured! {
            "excluded" => Value::from(excluded.clone()),
            "kept" => Value::Array(pieces.iter().map(|p| json!({
                "h": p.h,
                "dim": p.u.result.subgroup.dim(),
                "shift": p.u.result.shift,
                "local_density": serde_rational::to_value(&p.u.result.local_density),
                "steps": p.u.steps.len(),
                "step_bound": p.u.step_bound,
            })).collect()),
        },
    );
    if pieces.is_empty() {
        rec.floor_event(
            Branch::VacuousFloor,
            measured! {"reason" => "the oracle served no fibre"},
            Rational::zero(),
        );
        return Ok(());
    }

    let half_alpha = &alpha / int(2);
    let (s0, s1): (Vec<&Piece>, Vec<&Piece>) = pieces.iter().partition(|p| p.conv >= half_alpha);
    if s0.len() >= s1.len() {
        let mut flagged = Vec::new();
        let mut total = Rational::zero();
        for p in &s0 {
            let hh = &p.u.result.subgroup;
            let size = hh.order() as i64;
            let pts: Vec<u32> = p.fibre_part.members().map(|u| hh.embed(u)).collect();
            let mut acc = Rational::zero();
            for &x in &pts {
                for &y in &pts {
                    acc += dens.value(x ^ y ^ p.h);
                }
            }
            let exact = acc / int(size * size);
            let claimed = powi(&p.u.result.local_density, 2) * &p.conv / int(2);
            if exact < claimed {
                flagged.push(p.h);
            }
            let term = exact.min(claimed);
            total += powi(&hh.density(), 2) * term;
        }
        let floor = total / int(q as i64);
        if !flagged.is_empty() {
            rec.note(
                Branch::ProofCheck,
                measured! {
                    "check" => "pointwise (f*P)(h)/2 bound in the S0 case",
                    "failed_at" => Value::from(flagged.clone()),
                    "resolution" => "exact term used",
                },
            );
        }
        rec.floor_event(
            Branch::CaseS0Floor,
            measured! {"S0" => s0.len(), "S1" => s1.len(), "flagged" => flagged.len(), "floor" => &floor},
            floor,
        );
        return Ok(());
    }

    // Case S₁.
    let f_hat: Vec<Rational> = density_wht(&f)
        .into_iter()
        .map(|v| ratio(v.unsigned_abs(), q * q))
        .collect();
    let need = (&alpha * int(4) * l).recip();
    let d = log2_floor(&need).max(0) as usize;
    let mut by_group: BTreeMap<Subgroup2, Vec<&Piece>> = BTreeMap::new();
    let mut sizes = Vec::new();
    for p in &s1 {
        let hh = &p.u.result.subgroup;
        let cut = hh.density() * &alpha / int(4);
        let perp = Subgroup2::from_generators(m, hh.annihilator().iter().copied())?;
        let spec: Vec<u32> = perp.members().filter(|&g| g != 0 && f_hat[g as usize] >= cut).collect();
        ensure(
            int(spec.len() as i64) >= need,
            "high_energy_step",
            || format!("|𝓛' ∩ H_h^⊥| = {} below α⁻¹/4L = {need} at h = {}", spec.len(), p.h),
            &f,
        )?;
        sizes.push(spec.len());
        let mut chosen: Vec<u32> = Vec::new();
        for &g in &spec {
            if chosen.len() == d {
                break;
            }
            let mut trial = chosen.clone();
            trial.push(g);
            if rref(trial.iter().copied()).len() == trial.len() {
                chosen = trial;
            }
        }
        ensure(
            chosen.len() == d,
            "high_energy_step",
            || format!("only {} independent characters, need {d}", chosen.len()),
            &f,
        )?;
        let grouped = Subgroup2::from_annihilator(m, chosen)?;
        by_group.entry(grouped).or_default().push(p);
    }
    let (target, s2) = by_group
        .iter()
        .fold(None::<(&Subgroup2, &Vec<&Piece>)>, |best, (g, ps)| match best {
            Some((_, b)) if b.len() >= ps.len() => best,
            _ => Some((g, ps)),
        })
        .expect("S1 is non-empty");
    let target = target.clone();
    let parts: BTreeMap<u32, (u32, Z2Set)> = s2
        .iter()
        .map(|p| {
            let x = p.u.result.shift;
            (p.h, (x, f.fibre(p.h).restrict_to_coset(&target, x)))
        })
        .collect();
    let keep = parts.values().map(|(_, b)| b.len()).min().expect("S2 is non-empty");
    let h1 = target
        .coset_reps()
        .into_iter()
        .fold(None::<(u32, usize)>, |best, rep| {
            let n = parts.keys().filter(|&&h| target.coset_rep(h) == rep).count();
            match best {
                Some((_, b)) if b >= n => best,
                _ => Some((rep, n)),
            }
        })
        .map(|(rep, _)| rep)
        .expect("at least one coset");
    let mut shifts = Vec::with_capacity(target.order() as usize);
    let mut fibres = Vec::with_capacity(target.order() as usize);
    for cc in 0..target.order() as u32 {
        let h = h1 ^ target.embed(cc);
        match parts.get(&h) {
            Some((x, b)) => {
                shifts.push(*x);
                fibres.push(b.least(keep));
            }
            None => {
                shifts.push(0);
                fibres.push(Z2Set::empty(target.dim())?);
            }
        }
    }
    let after = Family::new(target.dim(), fibres)?;
    let delta = ratio(keep as u64, target.order());
    let mut params = BTreeMap::new();
    params.insert("delta".into(), serde_rational::to_value(&delta));
    params.insert("d".into(), Value::from(d));
    params.insert("S2".into(), Value::from(s2.len()));
    let gain = after.density() - f.density();
    let cert = IncrementCertificate::build(
        CertKind::EnergyGrouping,
        None,
        target.clone(),
        h1,
        shifts,
        gain,
        params,
        &f,
        &after,
    )?;
    rec.note(
        Branch::CaseS1,
        measured! {
            "S0" => s0.len(),
            "S1" => s1.len(),
            "d" => d,
            "spec_sizes" => Value::from(sizes),
            "required" => &need,
            "groups" => by_group.len(),
        },
    );
    rec.certify(
        Branch::EnergyGrouping,
        measured! {"S2" => s2.len(), "delta" => &delta, "dim" => target.dim(), "h1" => h1},
        cert,
    )?;
    large_l2_tail(rec, &after, bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::a0;
    use crate::counting::lambda_naive;
    use crate::rational::rat;

    #[test]
    fn full_set_stops_at_once() {
        let a = Z4Set::full(2).unwrap();
        let caps = Caps::default();
        for driver in [Driver::Rml, Driver::Weighted] {
            let t = run(driver, &a, &EngineConfig::default(), &caps).unwrap();
            assert_eq!(t.events.len(), 1);
            assert!(t.summary.sound);
        }
        let t = weighted_driver(&a, &EngineConfig::default(), &caps).unwrap();
        assert_eq!(t.summary.global_floor, int(1));
    }

    #[test]
    fn a0_floors_are_sound() {
        let a = a0();
        let caps = Caps::default();
        let exact = lambda_naive(&a, &caps).unwrap().lambda;
        for driver in [Driver::Rml, Driver::Weighted] {
            let t = run(driver, &a, &EngineConfig::default(), &caps).unwrap();
            assert!(t.summary.global_floor.is_positive());
            assert!(t.summary.global_floor <= exact);
            assert_eq!(t.summary.exact_lambda, exact);
        }
    }

    #[test]
    fn solve_l_is_monotone_in_alpha() {
        let a = solve_l(&rat(1, 4), &int(1), 8);
        let b = solve_l(&rat(1, 64), &int(1), 8);
        assert!(a >= int(1) && b >= a);
        let bigger = solve_l(&rat(1, 64), &rat(1, 4), 8);
        assert!(bigger >= b);
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = EngineConfig::default();
        let s = serde_json::to_string(&cfg).unwrap();
        assert_eq!(EngineConfig::from_json(&s).unwrap(), cfg);
        assert_eq!(EngineConfig::from_json("{}").unwrap(), cfg);
        assert!(EngineConfig::from_json(r#"{"C_S": [0, 1]}"#).is_err());
        assert!(EngineConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn empty_input_is_rejected() {
        let e = Z4Set::empty(2).unwrap();
        assert!(weighted_driver(&e, &EngineConfig::default(), &Caps::default()).is_err());
    }
}
