//! JSON and CSV formats. Rationals are written as `"p/q"` strings and floats
//! are rounded to 12 significant digits; object keys come out sorted, so
//! equal inputs serialise to identical bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::contact::{ContactReport, GenericityReport};
use crate::error::{Error, Result};
use crate::exponents::ExponentReport;
use crate::jet::{Jet, MultiIndex};
use crate::linalg::Mat;
use crate::phase::{default_eps0, ExactPhase, FloatPhase, HormanderReport, Phase};
use crate::riemannian::{Contact4, ExactMetric, MetricSweepReport};
use crate::scalar::{format_float, format_rational, parse_rational, rational_decimal, Rational, Scalar};
use crate::tubes::AnchorRule;
use crate::wolff::{PwaCertificate, RescaledReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermJson {
    pub exps: Vec<u32>,
    pub coef: String,
}

/// `{"n", "order", "center", "eps0", "terms"}`. `center` defaults to the
/// origin and `eps0` to 1/10.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseJson {
    pub n: usize,
    pub order: u32,
    #[serde(default)]
    pub center: Option<Vec<String>>,
    #[serde(default)]
    pub eps0: Option<String>,
    pub terms: Vec<TermJson>,
}

impl PhaseJson {
    pub fn to_phase(&self) -> Result<ExactPhase> {
        let nv = 2 * self.n.max(1) - 1;
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            if t.exps.len() != nv {
                return Err(Error::Arity { expected: nv, got: t.exps.len() });
            }
            terms.push((MultiIndex::new(t.exps.clone()), parse_rational(&t.coef)?));
        }
        let jet = Jet::from_terms(nv, self.order, terms)?;
        let center = match &self.center {
            Some(c) => c.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>()?,
            None => vec![Rational::from_integer(0.into()); nv],
        };
        let eps0 = match &self.eps0 {
            Some(s) => parse_rational(s)?,
            None => default_eps0(),
        };
        Phase::new(self.n, jet, center, eps0)
    }

    pub fn from_phase(p: &ExactPhase) -> Self {
        Self {
            n: p.n(),
            order: p.order(),
            center: Some(p.center().iter().map(format_rational).collect()),
            eps0: Some(format_rational(p.eps0())),
            terms: p.jet().terms().map(|(e, c)| TermJson { exps: e.exps().to_vec(), coef: format_rational(c) }).collect(),
        }
    }
}

pub fn parse_phase(text: &str) -> Result<ExactPhase> {
    serde_json::from_str::<PhaseJson>(text)?.to_phase()
}

pub fn phase_json(p: &ExactPhase) -> Value {
    serde_json::to_value(PhaseJson::from_phase(p)).expect("phase serialises")
}

pub fn to_float_phase(p: &ExactPhase) -> FloatPhase {
    let jet = p.jet().to_float();
    let center = p.center().iter().map(Scalar::to_f64_lossy).collect();
    Phase::new(p.n(), jet, center, p.eps0().to_f64_lossy()).expect("a valid exact phase converts")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricEntryJson {
    pub i: usize,
    pub j: usize,
    pub exps: [u32; 3],
    pub coef: String,
}

/// `{"entries": [{"i", "j", "exps", "coef"}]}` with 1-based indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricJson {
    pub entries: Vec<MetricEntryJson>,
}

pub fn parse_metric(text: &str) -> Result<ExactMetric> {
    let m: MetricJson = serde_json::from_str(text)?;
    let entries = m.entries.iter().map(|e| Ok((e.i, e.j, e.exps, parse_rational(&e.coef)?))).collect::<Result<Vec<_>>>()?;
    ExactMetric::new(entries)
}

pub fn metric_json(m: &ExactMetric) -> Value {
    let entries = m
        .entries()
        .map(|(&(i, j, exps), c)| MetricEntryJson { i, j, exps, coef: format_rational(c) })
        .collect();
    serde_json::to_value(MetricJson { entries }).expect("metric serialises")
}

/// Where a tube-family config takes its phase from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhaseSource {
    Inline(PhaseJson),
    /// Path, relative to the config file.
    Path(String),
}

/// Tube-family configuration: a phase, an anchor rule, and either one
/// `delta` or a list for scans.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub phase: PhaseSource,
    pub anchors: AnchorRule,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub spacing: Option<f64>,
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Free-form provenance note.
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub expected_min_slope: Option<f64>,
}

pub fn parse_family_config(text: &str) -> Result<FamilyConfig> {
    Ok(serde_json::from_str(text)?)
}

/// A float rounded to 12 significant digits; `null` when not finite.
pub fn float_value(v: f64) -> Value {
    if !v.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = format_float(v).parse().unwrap_or(v);
    serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
}

pub fn opt_float_value(v: Option<f64>) -> Value {
    v.map_or(Value::Null, float_value)
}

/// `"p/q"` on the exact backend, a rounded number on float backends.
pub fn scalar_value<S: Scalar>(v: &S) -> Value {
    if S::EXACT {
        Value::String(v.to_string())
    } else {
        float_value(v.to_f64_lossy())
    }
}

pub fn matrix_value<S: Scalar>(m: &Mat<S>) -> Value {
    Value::Array(m.to_rows().iter().map(|r| Value::Array(r.iter().map(scalar_value).collect())).collect())
}

pub fn float_matrix_value(m: &Mat<f64>) -> Value {
    Value::Array(m.to_rows().iter().map(|r| Value::Array(r.iter().map(|&v| float_value(v)).collect())).collect())
}

pub fn contact_report_json(r: &ContactReport) -> Value {
    json!({
        "contact_order": r.contact_order,
        "rank": r.rank_at_lmax,
        "A_n": r.a_n,
        "sigma_min": opt_float_value(r.sigma_min),
        "l_max": r.l_max,
    })
}

/// Each value as `"p/q"` plus a 12-digit decimal under `"decimal"`.
pub fn exponent_report_json(r: &ExponentReport) -> Value {
    let mut exact = Map::new();
    let mut decimal = Map::new();
    for (k, v) in &r.values {
        exact.insert(k.clone(), Value::String(format_rational(v)));
        decimal.insert(k.clone(), Value::String(rational_decimal(v)));
    }
    let mut out = Map::new();
    out.insert("n".into(), json!(r.n));
    out.insert("l".into(), json!(r.l));
    out.insert("k".into(), json!(r.k));
    out.insert("m".into(), Value::String(format_rational(&r.m)));
    for (k, v) in exact {
        out.insert(k, v);
    }
    out.insert("decimal".into(), Value::Object(decimal));
    Value::Object(out)
}

pub fn hormander_json<S: Scalar>(r: &HormanderReport<S>) -> Value {
    json!({
        "backend": S::BACKEND,
        "h1_rank": r.h1_rank,
        "h2_det": scalar_value(&r.h2_det),
        "h2_eigen_min": float_value(r.h2_eigen_min),
        "satisfies_h1": r.satisfies_h1,
        "satisfies_h2": r.satisfies_h2,
        "satisfies_h2_plus": r.satisfies_h2_plus,
        "gauss": r.gauss.iter().map(scalar_value).collect::<Vec<_>>(),
        "curvature": matrix_value(&r.curvature),
    })
}

pub fn pwa_certificate_json(c: &PwaCertificate) -> Value {
    json!({
        "c_star": float_value(c.c_star),
        "num_samples": c.num_samples,
        "worst_u": float_matrix_value(&c.worst_u),
        "quadrature_floor": float_value(c.quadrature_floor),
        "floor_u": float_matrix_value(&c.floor_u),
        "remainder_bound": opt_float_value(c.remainder_bound),
        "contact_order": c.contact_order,
        "l": c.l,
    })
}

pub fn rescaled_report_json(r: &RescaledReport) -> Value {
    json!({
        "points": r.points.iter().map(|p| json!({
            "lambda": float_value(p.lambda),
            "floor": float_value(p.floor),
        })).collect::<Vec<_>>(),
        "slope": opt_float_value(r.slope),
        "predicted": r.predicted,
    })
}

pub fn genericity_json(r: &GenericityReport) -> Value {
    json!({
        "trials": r.trials,
        "successes": r.successes,
        "fraction": opt_float_value(r.fraction()),
        "contact_orders": r.outcomes,
    })
}

pub fn contact4_json<S: Scalar>(c: &Contact4<S>) -> Value {
    json!({ "value": scalar_value(&c.value), "nonzero": c.nonzero })
}

pub fn metric_sweep_json(r: &MetricSweepReport) -> Value {
    json!({ "trials": r.trials, "successes": r.successes, "fraction": opt_float_value(r.fraction()) })
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialise");
    s.push('\n');
    s
}

/// CSV with a header row, `,` separators and `.` decimals. Fields holding
/// separators or quotes are quoted.
pub fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let field = |s: &str| {
        if s.contains([',', '"', '\n']) {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s.to_string()
        }
    };
    let mut out = header.iter().map(|h| field(h)).collect::<Vec<_>>().join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.iter().map(|v| field(v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

/// Sorted map of rational values to `"p/q"` strings.
pub fn rational_map(values: &BTreeMap<String, Rational>) -> Value {
    Value::Object(values.iter().map(|(k, v)| (k.clone(), Value::String(format_rational(v)))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, rat_int};

    const Q_TERM: &str = r#"{
        "n": 3, "order": 6,
        "terms": [
            {"exps": [1,0,0,1,0], "coef": "1"}, {"exps": [0,1,0,0,1], "coef": "1"},
            {"exps": [0,0,1,2,0], "coef": "1"}, {"exps": [0,0,1,0,2], "coef": "1"},
            {"exps": [0,0,2,2,0], "coef": "1"}, {"exps": [0,0,3,1,1], "coef": "1"},
            {"exps": [0,0,4,0,2], "coef": "1"}
        ]
    }"#;

    #[test]
    fn phase_round_trip() {
        let p = parse_phase(Q_TERM).unwrap();
        assert_eq!(p.eps0(), &rat(1, 10));
        assert_eq!(p.jet().coeff_of(&[0, 0, 3, 1, 1]), rat_int(1));
        let back = parse_phase(&phase_json(&p).to_string()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn phase_errors() {
        assert!(matches!(parse_phase("{"), Err(Error::Json(_))));
        let bad = r#"{"n": 3, "order": 4, "terms": [{"exps": [1,0,0,1], "coef": "1"}]}"#;
        assert!(matches!(parse_phase(bad), Err(Error::Arity { .. })));
        let bad = r#"{"n": 3, "order": 4, "terms": [{"exps": [1,0,0,1,0], "coef": "1/0"}]}"#;
        assert!(matches!(parse_phase(bad), Err(Error::Parse(_))));
        let extra = r#"{"n": 3, "order": 4, "terms": [], "colour": 1}"#;
        assert!(parse_phase(extra).is_err());
    }

    #[test]
    fn metric_round_trip() {
        let text = r#"{"entries": [
            {"i": 1, "j": 1, "exps": [0,0,0], "coef": "1"}, {"i": 2, "j": 2, "exps": [0,0,0], "coef": "1"},
            {"i": 3, "j": 3, "exps": [0,0,0], "coef": "1"}, {"i": 3, "j": 3, "exps": [2,0,0], "coef": "1"},
            {"i": 3, "j": 3, "exps": [1,1,1], "coef": "1"}
        ]}"#;
        let m = parse_metric(text).unwrap();
        assert_eq!(crate::riemannian::contact4_condition(&m).value, rat_int(2));
        assert_eq!(parse_metric(&metric_json(&m).to_string()).unwrap(), m);
    }

    #[test]
    fn floats_and_csv() {
        assert_eq!(float_value(1.0 / 3.0).to_string(), "0.333333333333");
        assert_eq!(float_value(f64::NAN), Value::Null);
        let text = csv(&["delta", "measure"], &[vec!["0.5".into(), "1,2".into()]]);
        assert_eq!(text, "delta,measure\n0.5,\"1,2\"\n");
    }

    #[test]
    fn fixture_config_parses() {
        let text = include_str!("../fixtures/bourgain_compressed.json");
        let cfg = parse_family_config(text).unwrap();
        let PhaseSource::Inline(p) = &cfg.phase else { panic!("inline phase expected") };
        let p = p.to_phase().unwrap();
        assert_eq!(p.eps0(), &rat(1, 2));
        assert_eq!(cfg.deltas.as_ref().unwrap().len(), 4);
    }
}
