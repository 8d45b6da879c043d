use std::fs;
use std::path::Path;

use kakeya_core::combinatorics::{a_n_bruteforce, a_n_closed, contact_labels, involutions as count_involutions, sym_det_terms, to_u64, BRUTEFORCE_MAX_N};
use kakeya_core::contact::{bourgain_check as check_bourgain, contact_order as find_contact_order, genericity_sweep as sweep_phase, DEFAULT_RANK_TOL};
use kakeya_core::exponents::exponent_report;
use kakeya_core::io::{
    contact4_json, contact_report_json, exponent_report_json, genericity_json, hormander_json, matrix_value, metric_sweep_json,
    parse_family_config, parse_metric, parse_phase, pwa_certificate_json, rescaled_report_json, scalar_value, to_float_phase,
    FamilyConfig, PhaseSource,
};
use kakeya_core::linalg::LinAlg;
use kakeya_core::phase::hormander_check as check_hormander;
use kakeya_core::riemannian::{contact4_condition, metric_genericity_sweep};
use kakeya_core::scalar::{format_float, rat};
use kakeya_core::tubes::{
    build_family, compression_scan as scan, count_histogram, lp_ratio, nominal_tube_volume, tubes_in_set, AnchorRule, FamilySpec,
    ScanConfig, TubeFamily,
};
use kakeya_core::wolff::{certify_pwa, rescaled_floor as floor_scan, PwaSampling, RescaledConfig};
use kakeya_core::{Error, ExactMetric, ExactPhase, MetricJet3, Phase, Rational};
use serde_json::{json, Value};

use crate::{Backend, FamilyArgs, Failure, Output, TestSet};

/// Certificates with `c_star` at or below this value fail verification.
pub const PWA_THRESHOLD: f64 = 1e-3;
/// Largest `n` accepted by phase commands.
pub const MAX_N: usize = 7;
pub const MAX_L: u32 = 40;
pub const MAX_TUBES: f64 = 250_000.0;

const DEFAULT_DELTA: f64 = 1.0 / 32.0;
const DEFAULT_DELTAS: [f64; 4] = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))
}

/// A phase file, or a family config that names one.
struct Loaded {
    phase: ExactPhase,
    config: Option<FamilyConfig>,
}

fn load(path: &Path) -> Result<Loaded, Failure> {
    let text = read(path)?;
    let value: Value = serde_json::from_str(&text)?;
    let loaded = if value.get("anchors").is_some() {
        let config = parse_family_config(&text)?;
        let phase = match &config.phase {
            PhaseSource::Inline(j) => j.to_phase()?,
            PhaseSource::Path(rel) => parse_phase(&read(&path.parent().unwrap_or(Path::new(".")).join(rel))?)?,
        };
        Loaded { phase, config: Some(config) }
    } else {
        Loaded { phase: parse_phase(&text)?, config: None }
    };
    guard_n(loaded.phase.n())?;
    Ok(loaded)
}

fn guard_n(n: usize) -> Result<(), Failure> {
    if n > MAX_N {
        return Err(invalid(format!("n = {n} exceeds the cost guard {MAX_N}")));
    }
    Ok(())
}

fn guard_l(l: u32) -> Result<(), Failure> {
    if l > MAX_L {
        return Err(invalid(format!("l = {l} exceeds the cost guard {MAX_L}")));
    }
    Ok(())
}

fn a_n(n: usize) -> Result<u32, Failure> {
    Ok(contact_labels(n)?.len() as u32)
}

fn big_value(v: &num_bigint::BigUint) -> Value {
    to_u64(v).map_or_else(|| Value::String(v.to_string()), |x| json!(x))
}

pub fn an(n: usize) -> Result<Output, Failure> {
    if n > 64 {
        return Err(invalid(format!("n = {n} exceeds the cost guard 64")));
    }
    let closed = a_n_closed(n)?;
    let oracle = if n <= BRUTEFORCE_MAX_N { Some(a_n_bruteforce(n)?) } else { None };
    let matches = oracle.map(|o| to_u64(&closed) == Some(o as u64));
    let json = json!({ "n": n, "A_n": big_value(&closed), "oracle": oracle, "match": matches });
    Ok(Output { json, table: None, verified: matches != Some(false) })
}

pub fn involutions(k: usize) -> Result<Output, Failure> {
    if k > 2000 {
        return Err(invalid(format!("k = {k} exceeds the cost guard 2000")));
    }
    let rows: Vec<(usize, num_bigint::BigUint, Option<num_bigint::BigUint>)> =
        (0..=k).map(|j| (j, count_involutions(j), sym_det_terms(j).ok())).collect();
    let json = json!({
        "k": k,
        "involutions": big_value(&rows[k].1),
        "sym_det_terms": rows[k].2.as_ref().map(big_value),
    });
    let table = rows
        .iter()
        .map(|(j, i, q)| vec![j.to_string(), i.to_string(), q.as_ref().map_or(String::new(), |q| q.to_string())])
        .collect();
    Ok(Output { json, table: Some((vec!["k", "involutions", "sym_det_terms"], table)), verified: true })
}

pub fn exponents(n: usize, l: u32, k: Option<usize>, m: Option<Rational>) -> Result<Output, Failure> {
    Ok(Output::ok(exponent_report_json(&exponent_report(n, l, k, m)?)))
}

fn hormander_generic<S: LinAlg>(p: &Phase<S>) -> Result<(Value, bool), Failure> {
    let r = check_hormander(p, &p.origin_point())?;
    let ok = r.satisfies_h1 && r.satisfies_h2;
    Ok((hormander_json(&r), ok))
}

pub fn hormander_check(path: &Path, backend: Backend) -> Result<Output, Failure> {
    let p = load(path)?.phase;
    let (json, verified) = match backend {
        Backend::Exact => hormander_generic(&p)?,
        Backend::Float => hormander_generic(&to_float_phase(&p))?,
    };
    Ok(Output { json, table: None, verified })
}

pub fn contact_order(path: &Path, backend: Backend, lmax: u32) -> Result<Output, Failure> {
    guard_l(lmax)?;
    let p = load(path)?.phase;
    let r = match backend {
        Backend::Exact => find_contact_order(&p, &p.origin_point(), lmax, DEFAULT_RANK_TOL)?,
        Backend::Float => {
            let f = to_float_phase(&p);
            find_contact_order(&f, &f.origin_point(), lmax, DEFAULT_RANK_TOL)?
        }
    };
    Ok(Output::ok(contact_report_json(&r)))
}

fn bourgain_generic<S: LinAlg>(p: &Phase<S>) -> Result<Value, Failure> {
    let r = check_bourgain(p, &p.origin_point())?;
    Ok(json!({
        "holds": r.holds,
        "residual": kakeya_core::io::float_value(r.residual),
        "c": r.c.as_ref().map(scalar_value),
        "lhs": matrix_value(&r.lhs),
        "rhs": matrix_value(&r.rhs),
    }))
}

pub fn bourgain_check(path: &Path, backend: Backend) -> Result<Output, Failure> {
    let p = load(path)?.phase;
    let json = match backend {
        Backend::Exact => bourgain_generic(&p)?,
        Backend::Float => bourgain_generic(&to_float_phase(&p))?,
    };
    Ok(Output::ok(json))
}

pub fn pwa_verify(path: &Path, backend: Backend, l: Option<u32>, seed: u64, trials: usize) -> Result<Output, Failure> {
    let p = load(path)?.phase;
    let l = match l {
        Some(l) => l,
        None => a_n(p.n())?,
    };
    guard_l(l)?;
    let cfg = PwaSampling { num_random_u: trials, seed, ..PwaSampling::default() };
    let cert = match backend {
        Backend::Exact => certify_pwa(&p, &p.origin_point(), l, &cfg),
        Backend::Float => {
            let f = to_float_phase(&p);
            certify_pwa(&f, &f.origin_point(), l, &cfg)
        }
    };
    match cert {
        Ok(c) => {
            let verified = c.c_star > PWA_THRESHOLD;
            let mut json = pwa_certificate_json(&c);
            json["threshold"] = kakeya_core::io::float_value(PWA_THRESHOLD);
            json["verified"] = json!(verified);
            Ok(Output { json, table: None, verified })
        }
        Err(Error::NoContactOrder(l)) => {
            let json = json!({ "contact_order": null, "l": l, "verified": false, "reason": Error::NoContactOrder(l).to_string() });
            Ok(Output { json, table: None, verified: false })
        }
        Err(e) => Err(e.into()),
    }
}

pub fn rescaled_floor(path: &Path, backend: Backend, l: Option<u32>, seed: u64, lambdas: &[f64]) -> Result<Output, Failure> {
    let p = load(path)?.phase;
    let l = match l {
        Some(l) => l,
        None => a_n(p.n())?,
    };
    guard_l(l)?;
    let cfg = RescaledConfig { seed, ..RescaledConfig::default() };
    let r = match backend {
        Backend::Exact => floor_scan(&p, &p.origin_point(), lambdas, l, &cfg)?,
        Backend::Float => {
            let f = to_float_phase(&p);
            floor_scan(&f, &f.origin_point(), lambdas, l, &cfg)?
        }
    };
    let rows = r.points.iter().map(|q| vec![format_float(q.lambda), format_float(q.floor)]).collect();
    Ok(Output { json: rescaled_report_json(&r), table: Some((vec!["lambda", "floor"], rows)), verified: true })
}

fn centre_anchor(p: &ExactPhase) -> AnchorRule {
    let n = p.n();
    AnchorRule::Fixed { anchor: p.center()[..n - 1].iter().map(kakeya_core::Scalar::to_f64_lossy).collect() }
}

fn anchors(loaded: &Loaded, seed: Option<u64>) -> AnchorRule {
    match (seed, &loaded.config) {
        (Some(seed), _) => AnchorRule::Random { seed },
        (None, Some(c)) => c.anchors.clone(),
        (None, None) => centre_anchor(&loaded.phase),
    }
}

struct Built {
    family: TubeFamily,
    grid_h: f64,
    eps0: f64,
    x1_centre: f64,
}

fn build(args: &FamilyArgs) -> Result<Built, Failure> {
    let loaded = load(&args.phase)?;
    let config_delta = loaded.config.as_ref().and_then(|c| c.delta);
    let delta = args.delta.or(config_delta).unwrap_or(DEFAULT_DELTA);
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let config_spacing = loaded.config.as_ref().and_then(|c| c.spacing);
    let spacing = args.spacing.or(config_spacing).unwrap_or(delta * 17.0 / 16.0);
    if !(spacing > 0.0) {
        return Err(invalid(format!("spacing must be positive, got {spacing}")));
    }
    let grid_h = args.grid_h.unwrap_or(delta / 4.0);
    let p = &loaded.phase;
    let eps0 = kakeya_core::Scalar::to_f64_lossy(p.eps0());
    let estimate = (2.0 * eps0 / spacing + 1.0).powi(p.n() as i32 - 1);
    if estimate > MAX_TUBES {
        return Err(invalid(format!("about {estimate:.0} tubes exceeds the cost guard {MAX_TUBES}")));
    }
    let spec = FamilySpec::new(delta, spacing, anchors(&loaded, args.seed));
    let family = build_family(&to_float_phase(p), &spec)?;
    let x1_centre = kakeya_core::Scalar::to_f64_lossy(&p.center()[0]);
    Ok(Built { family, grid_h, eps0, x1_centre })
}

pub fn tubes(args: &FamilyArgs, p_exp: f64) -> Result<Output, Failure> {
    let b = build(args)?;
    let fam = &b.family;
    let hist = count_histogram(fam, b.grid_h)?;
    let ratio = lp_ratio(fam, p_exp, b.grid_h)?;
    let fv = kakeya_core::io::float_value;
    let json = json!({
        "n": fam.n,
        "delta": fv(fam.delta),
        "spacing": fv(fam.spacing),
        "grid_h": fv(b.grid_h),
        "tubes": fam.tubes.len(),
        "separation_ok": fam.separation_ok,
        "measure": fv(hist.measure()),
        "nominal_volume": fv(nominal_tube_volume(fam, b.grid_h)),
        "max_overlap": hist.max(),
        "p": fv(p_exp),
        "lp_ratio": fv(ratio),
    });
    let row = vec![format_float(fam.delta), fam.tubes.len().to_string(), format_float(hist.measure()), format_float(ratio)];
    Ok(Output { json, table: Some((vec!["delta", "tubes", "measure", "lp_ratio"], vec![row])), verified: true })
}

pub fn pwa_count(args: &FamilyArgs, set: TestSet) -> Result<Output, Failure> {
    let b = build(args)?;
    let fam = &b.family;
    let n = fam.n;
    let side = 2.0 * b.eps0;
    let delta = fam.delta;
    let r = match set {
        TestSet::Slab => {
            let c = b.x1_centre;
            tubes_in_set(fam, b.grid_h, |pt| (pt[0] - c).abs() <= delta, 2.0 * delta * side.powi(n as i32 - 1))?
        }
        TestSet::Box => tubes_in_set(fam, b.grid_h, |_| true, side.powi(n as i32))?,
    };
    let fv = kakeya_core::io::float_value;
    let name = match set {
        TestSet::Slab => "slab",
        TestSet::Box => "box",
    };
    let json = json!({ "set": name, "delta": fv(delta), "count": r.count, "total": r.total, "ratio": fv(r.ratio) });
    let row = vec![format_float(delta), r.count.to_string(), r.total.to_string(), format_float(r.ratio)];
    Ok(Output { json, table: Some((vec!["delta", "count", "total", "pwa_ratio"], vec![row])), verified: true })
}

pub fn compression_scan(path: &Path, deltas: &[f64], seed: Option<u64>) -> Result<Output, Failure> {
    let loaded = load(path)?;
    let deltas: Vec<f64> = if !deltas.is_empty() {
        deltas.to_vec()
    } else {
        loaded.config.as_ref().and_then(|c| c.deltas.clone()).unwrap_or_else(|| DEFAULT_DELTAS.to_vec())
    };
    let p = &loaded.phase;
    let eps0 = kakeya_core::Scalar::to_f64_lossy(p.eps0());
    let cfg = ScanConfig { anchors: anchors(&loaded, seed), ..ScanConfig::default() };
    if let Some(&d) = deltas.iter().filter(|&&d| d > 0.0).min_by(|a, b| a.total_cmp(b)) {
        let estimate = (2.0 * eps0 / (d * cfg.spacing_factor) + 1.0).powi(p.n() as i32 - 1);
        if estimate > MAX_TUBES {
            return Err(invalid(format!("about {estimate:.0} tubes exceeds the cost guard {MAX_TUBES}")));
        }
    }
    let r = scan(&to_float_phase(p), &deltas, &cfg)?;
    let fv = kakeya_core::io::float_value;
    let expected = loaded.config.as_ref().and_then(|c| c.expected_min_slope);
    let verified = expected.is_none_or(|m| r.slope >= m);
    let json = json!({
        "points": r.points.iter().map(|q| json!({ "delta": fv(q.delta), "tubes": q.tubes, "measure": fv(q.measure) })).collect::<Vec<_>>(),
        "slope": fv(r.slope),
        "expected_min_slope": expected.map(fv),
    });
    let rows = r.points.iter().map(|q| vec![format_float(q.delta), q.tubes.to_string(), format_float(q.measure)]).collect();
    Ok(Output { json, table: Some((vec!["delta", "tubes", "measure"], rows)), verified })
}

fn float_metric(m: &ExactMetric) -> Result<MetricJet3<f64>, Failure> {
    let entries = m.entries().map(|(&(i, j, a), c)| (i, j, a, kakeya_core::Scalar::to_f64_lossy(c)));
    Ok(MetricJet3::new(entries)?)
}

pub fn metric_check(path: &Path, backend: Backend) -> Result<Output, Failure> {
    let m = parse_metric(&read(path)?)?;
    let (json, nonzero) = match backend {
        Backend::Exact => {
            let c = contact4_condition(&m);
            (contact4_json(&c), c.nonzero)
        }
        Backend::Float => {
            let c = contact4_condition(&float_metric(&m)?);
            (contact4_json(&c), c.nonzero)
        }
    };
    Ok(Output { json, table: None, verified: nonzero })
}

#[allow(clippy::too_many_arguments)]
pub fn genericity_sweep(
    phase: Option<&Path>,
    metric: Option<&Path>,
    n: usize,
    degree: u32,
    magnitude: Option<Rational>,
    trials: Option<usize>,
    seed: u64,
    backend: Backend,
) -> Result<Output, Failure> {
    if let Some(path) = metric {
        let m = parse_metric(&read(path)?)?;
        let magnitude = magnitude.unwrap_or_else(|| rat(1, 16));
        let trials = trials.unwrap_or(200);
        let r = match backend {
            Backend::Exact => metric_genericity_sweep(&m, &magnitude, trials, seed)?,
            Backend::Float => metric_genericity_sweep(&float_metric(&m)?, &magnitude, trials, seed)?,
        };
        let rows = r.outcomes.iter().enumerate().map(|(k, o)| vec![k.to_string(), o.to_string()]).collect();
        return Ok(Output { json: metric_sweep_json(&r), table: Some((vec!["trial", "nonzero"], rows)), verified: true });
    }
    let base = match phase {
        Some(path) => load(path)?.phase,
        None => {
            guard_n(n)?;
            ExactPhase::standard(n, a_n(n)? + 2)?
        }
    };
    let magnitude = magnitude.unwrap_or_else(|| rat(1, 8));
    let trials = trials.unwrap_or(100);
    let r = match backend {
        Backend::Exact => sweep_phase(&base, degree, &magnitude, trials, seed)?,
        Backend::Float => sweep_phase(&to_float_phase(&base), degree, &magnitude, trials, seed)?,
    };
    let rows = r
        .outcomes
        .iter()
        .enumerate()
        .map(|(k, o)| vec![k.to_string(), o.map_or(String::new(), |v| v.to_string())])
        .collect();
    Ok(Output { json: genericity_json(&r), table: Some((vec!["trial", "contact_order"], rows)), verified: true })
}
