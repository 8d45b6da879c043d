//! `kakeya`: command-line front end for `kakeya-core`.
//!
//! Every command prints JSON to stdout, or writes it to `--out`. Commands
//! with tabular results write CSV instead when `--out` ends in `.csv`.
//!
//! Exit codes: 0 on success, 2 when the input is rejected or a result cannot
//! be computed, 3 when a verification was computed and failed.

mod commands;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kakeya_core::io::{csv, to_pretty};
use kakeya_core::scalar::parse_rational;
use kakeya_core::Rational;
use serde_json::Value;

#[derive(Parser, Debug)]
#[command(name = "kakeya", version, about = "Contact order, polynomial Wolff certificates and curved Kakeya tube diagnostics")]
struct Cli {
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file. A `.csv` extension selects CSV for tabular commands.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Row count A(n) of the contact matrix, closed form against enumeration.
    An {
        #[arg(long)]
        n: usize,
    },
    /// Involution counts I(j) and symmetric-determinant term counts q(j) for j <= k.
    Involutions {
        #[arg(long)]
        k: usize,
    },
    /// Every exponent formula at (n, l).
    Exponents {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: u32,
        /// Broad-norm parameter; defaults to the smallest admissible value.
        #[arg(long)]
        k: Option<usize>,
        /// Polynomial Wolff dimension parameter, as "p/q".
        #[arg(long, value_parser = rational_arg)]
        m: Option<Rational>,
    },
    /// Rank (H1) and curvature (H2, H2+) conditions at the phase centre.
    HormanderCheck {
        #[command(flatten)]
        phase: PhaseArgs,
    },
    /// Smallest l <= lmax at which the contact matrix has full row rank.
    ContactOrder {
        #[command(flatten)]
        phase: PhaseArgs,
        #[arg(long, default_value_t = 8)]
        lmax: u32,
    },
    /// Bourgain's proportionality condition at the phase centre.
    BourgainCheck {
        #[command(flatten)]
        phase: PhaseArgs,
    },
    /// Sampled lower bound for the determinant-expansion certificate.
    PwaVerify {
        #[command(flatten)]
        phase: PhaseArgs,
        /// Expansion order; defaults to A(n).
        #[arg(long)]
        l: Option<u32>,
        #[arg(long)]
        seed: u64,
        /// Number of random U samples.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Rescaled determinant floor against lambda, with the fitted exponent.
    RescaledFloor {
        #[command(flatten)]
        phase: PhaseArgs,
        #[arg(long)]
        l: Option<u32>,
        #[arg(long)]
        seed: u64,
        /// Comma-separated lambdas, each >= 1.
        #[arg(long, value_delimiter = ',', default_values_t = [16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0])]
        lambdas: Vec<f64>,
    },
    /// Builds one tube family and reports its union measure and L^p ratio.
    Tubes {
        #[command(flatten)]
        family: FamilyArgs,
        /// Exponent of the L^p ratio.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// Counts tubes inside a test set and the resulting Wolff ratio.
    PwaCount {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, value_enum, default_value_t = TestSet::Slab)]
        set: TestSet,
    },
    /// Union measure against delta; a positive slope flags compression.
    CompressionScan {
        /// Phase JSON, or a family config JSON.
        #[arg(long)]
        phase: PathBuf,
        /// Comma-separated deltas in (0, 1); the config's list is the default.
        #[arg(long, value_delimiter = ',')]
        deltas: Vec<f64>,
        /// Seeded random anchors instead of the configured rule.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Third-order metric condition for contact order four of the distance phase.
    MetricCheck {
        #[arg(long)]
        metric: PathBuf,
        #[arg(long, value_enum, default_value_t = Backend::Exact)]
        backend: Backend,
    },
    /// Fraction of random perturbations with generic contact order. Perturbs
    /// the metric when `--metric` is given, the phase otherwise.
    GenericitySweep {
        /// Base phase; defaults to the standard phase in dimension `--n`.
        #[arg(long, conflicts_with = "metric")]
        phase: Option<PathBuf>,
        /// Base metric jet.
        #[arg(long)]
        metric: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Largest power of t in phase perturbations.
        #[arg(long, default_value_t = 4)]
        degree: u32,
        /// Perturbation size, as "p/q". Defaults to 1/8 (phase) or 1/16 (metric).
        #[arg(long, value_parser = rational_arg)]
        magnitude: Option<Rational>,
        /// Defaults to 100 (phase) or 200 (metric).
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Backend::Exact)]
        backend: Backend,
    },
}

#[derive(Args, Debug)]
struct PhaseArgs {
    /// Phase JSON, or a family config JSON whose phase is used.
    #[arg(long)]
    phase: PathBuf,
    #[arg(long, value_enum, default_value_t = Backend::Exact)]
    backend: Backend,
}

#[derive(Args, Debug)]
struct FamilyArgs {
    /// Phase JSON, or a family config JSON.
    #[arg(long)]
    phase: PathBuf,
    /// Tube width; defaults to the config's, else 1/32.
    #[arg(long)]
    delta: Option<f64>,
    /// Direction grid spacing; defaults to delta * 17/16.
    #[arg(long)]
    spacing: Option<f64>,
    /// Raster cell side; defaults to delta / 4.
    #[arg(long)]
    grid_h: Option<f64>,
    /// Seeded random anchors instead of the configured rule.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Backend {
    Exact,
    Float,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TestSet {
    /// The delta-neighbourhood of the hyperplane x1 = centre.
    Slab,
    /// The whole domain box.
    Box,
}

fn rational_arg(s: &str) -> Result<Rational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

/// Result of one command.
#[derive(Debug)]
pub(crate) struct Output {
    json: Value,
    table: Option<(Vec<&'static str>, Vec<Vec<String>>)>,
    /// `false` when a verification was computed and failed.
    verified: bool,
}

impl Output {
    fn ok(json: Value) -> Self {
        Self { json, table: None, verified: true }
    }
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Invalid(e.to_string())
    }
}

fn run(cli: Cli) -> Result<Output, Failure> {
    use Command::*;
    match cli.command {
        An { n } => commands::an(n),
        Involutions { k } => commands::involutions(k),
        Exponents { n, l, k, m } => commands::exponents(n, l, k, m),
        HormanderCheck { phase } => commands::hormander_check(&phase.phase, phase.backend),
        ContactOrder { phase, lmax } => commands::contact_order(&phase.phase, phase.backend, lmax),
        BourgainCheck { phase } => commands::bourgain_check(&phase.phase, phase.backend),
        PwaVerify { phase, l, seed, trials } => commands::pwa_verify(&phase.phase, phase.backend, l, seed, trials),
        RescaledFloor { phase, l, seed, lambdas } => commands::rescaled_floor(&phase.phase, phase.backend, l, seed, &lambdas),
        Tubes { family, p } => commands::tubes(&family, p),
        PwaCount { family, set } => commands::pwa_count(&family, set),
        CompressionScan { phase, deltas, seed } => commands::compression_scan(&phase, &deltas, seed),
        MetricCheck { metric, backend } => commands::metric_check(&metric, backend),
        GenericitySweep { phase, metric, n, degree, magnitude, trials, seed, backend } => {
            commands::genericity_sweep(phase.as_deref(), metric.as_deref(), n, degree, magnitude, trials, seed, backend)
        }
    }
}

/// The text written for `output`: CSV when `out` ends in `.csv`, JSON
/// otherwise.
fn render(output: &Output, out: Option<&Path>) -> Result<String, Failure> {
    let wants_csv = out.is_some_and(|p| p.extension().is_some_and(|e| e == "csv"));
    if !wants_csv {
        return Ok(to_pretty(&output.json));
    }
    match &output.table {
        Some((header, rows)) => Ok(csv(header, rows)),
        None => Err(Failure::Invalid("this command has no tabular output; use a .json path".into())),
    }
}

fn exit_code(output: &Output) -> u8 {
    if output.verified {
        0
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let fail = |msg: String| {
        eprintln!("error: {msg}");
        ExitCode::from(2)
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => return fail(e.to_string()),
    };
    let out = cli.out.clone();
    let output = match pool.install(|| run(cli)) {
        Ok(o) => o,
        Err(Failure::Invalid(msg)) => return fail(msg),
    };
    let text = match render(&output, out.as_deref()) {
        Ok(t) => t,
        Err(Failure::Invalid(msg)) => return fail(msg),
    };
    match &out {
        Some(path) => {
            if let Err(e) = fs::write(path, text) {
                return fail(format!("cannot write {}: {e}", path.display()));
            }
        }
        None => print!("{text}"),
    }
    ExitCode::from(exit_code(&output))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(name: &str) -> String {
        format!("{}/../core/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
    }

    fn exec(args: &[&str]) -> Result<Output, Failure> {
        let cli = Cli::try_parse_from(std::iter::once("kakeya").chain(args.iter().copied())).expect("arguments parse");
        run(cli)
    }

    fn message(r: Result<Output, Failure>) -> String {
        match r {
            Ok(_) => panic!("expected a validation error"),
            Err(Failure::Invalid(m)) => m,
        }
    }

    #[test]
    fn an_example() {
        let o = exec(&["an", "--n", "3"]).unwrap();
        assert_eq!(o.json["A_n"], 4);
        assert_eq!(o.json["oracle"], 4);
        assert_eq!(o.json["match"], true);
        assert_eq!(exit_code(&o), 0);
        // The closed form and the enumeration disagree from n = 5.
        assert_eq!(exit_code(&exec(&["an", "--n", "5"]).unwrap()), 3);
    }

    #[test]
    fn exponents_example() {
        let o = exec(&["exponents", "--n", "3", "--l", "4"]).unwrap();
        assert_eq!(o.json["kakeya_dim"], "15/7");
        assert_eq!(o.json["p_osc"], "33/10");
        let m = exec(&["exponents", "--n", "3", "--l", "4", "--m", "5/2"]).unwrap();
        assert_eq!(m.json["m"], "5/2");
    }

    #[test]
    fn contact_order_example() {
        let std = fixture("standard_r3.json");
        let o = exec(&["contact-order", "--phase", &std, "--lmax", "6"]).unwrap();
        assert_eq!(o.json["contact_order"], Value::Null);
        assert_eq!(o.json["rank"], 2);
        let q = fixture("q_term_r3.json");
        for backend in ["exact", "float"] {
            let o = exec(&["contact-order", "--phase", &q, "--lmax", "6", "--backend", backend]).unwrap();
            assert_eq!(o.json["contact_order"], 4);
        }
    }

    #[test]
    fn verification_failures_exit_3() {
        let std = fixture("standard_r3.json");
        let o = exec(&["pwa-verify", "--phase", &std, "--seed", "1"]).unwrap();
        assert_eq!(exit_code(&o), 3);
        assert_eq!(o.json["verified"], false);
        let o = exec(&["pwa-verify", "--phase", &fixture("q_term_r3.json"), "--seed", "1", "--trials", "200"]).unwrap();
        assert_eq!(exit_code(&o), 0);
        let flat = exec(&["metric-check", "--metric", &fixture("flat_metric.json")]).unwrap();
        assert_eq!(exit_code(&flat), 3);
        let worked = exec(&["metric-check", "--metric", &fixture("worked_metric.json"), "--backend", "float"]).unwrap();
        assert_eq!(exit_code(&worked), 0);
        assert_eq!(worked.json["value"], 2.0);
    }

    #[test]
    fn validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.json");
        fs::write(&bad, "{\"n\": 3, \"order\": 4").unwrap();
        let bad = bad.to_string_lossy().into_owned();
        assert!(!message(exec(&["hormander-check", "--phase", &bad])).is_empty());
        let unknown = dir.path().join("unknown.json");
        fs::write(&unknown, r#"{"n": 3, "order": 4, "terms": [], "colour": 1}"#).unwrap();
        assert!(message(exec(&["contact-order", "--phase", &unknown.to_string_lossy()])).contains("colour"));
        assert!(message(exec(&["an", "--n", "100"])).contains("cost guard"));
        let q = fixture("q_term_r3.json");
        assert!(message(exec(&["contact-order", "--phase", &q, "--lmax", "90"])).contains("cost guard"));
        let line = fixture("straight_line.json");
        assert!(message(exec(&["tubes", "--phase", &line, "--delta", "0.001"])).contains("cost guard"));
        assert!(message(exec(&["compression-scan", "--phase", &line, "--deltas", "0.25,0.125"])).contains("3 distinct"));
    }

    #[test]
    fn rejected_arguments() {
        use clap::error::ErrorKind;
        let parse = |args: &[&str]| Cli::try_parse_from(std::iter::once("kakeya").chain(args.iter().copied()));
        let e = parse(&["an", "--n", "3", "--bogus"]).unwrap_err();
        assert_eq!(e.kind(), ErrorKind::UnknownArgument);
        assert_eq!(e.exit_code(), 2);
        // Randomised commands need an explicit seed.
        let e = parse(&["genericity-sweep"]).unwrap_err();
        assert_eq!(e.kind(), ErrorKind::MissingRequiredArgument);
        assert!(parse(&["rescaled-floor", "--phase", "p.json"]).is_err());
        assert!(parse(&["an", "--n", "3", "--seed", "1"]).is_err());
        assert!(parse(&["genericity-sweep", "--seed", "1", "--magnitude", "x"]).is_err());
    }

    #[test]
    fn csv_rendering() {
        let o = exec(&["involutions", "--k", "4"]).unwrap();
        let text = render(&o, Some(Path::new("out.csv"))).ok().unwrap();
        assert_eq!(text, "k,involutions,sym_det_terms\n0,1,\n1,1,1\n2,2,2\n3,4,5\n4,10,17\n");
        assert!(render(&o, Some(Path::new("out.json"))).ok().unwrap().starts_with('{'));
        let a = exec(&["an", "--n", "3"]).unwrap();
        assert!(render(&a, Some(Path::new("a.csv"))).is_err());
    }

    #[test]
    fn family_commands() {
        let line = fixture("straight_line.json");
        let o = exec(&["tubes", "--phase", &line, "--delta", "0.125", "--p", "1"]).unwrap();
        assert_eq!(o.json["separation_ok"], true);
        let r = o.json["lp_ratio"].as_f64().unwrap();
        assert!((r - 1.0).abs() < 0.05, "{r}");
        let all = exec(&["pwa-count", "--phase", &line, "--delta", "0.125", "--set", "box"]).unwrap();
        assert_eq!(all.json["count"], all.json["total"]);
        let scan = exec(&["compression-scan", "--phase", &fixture("bourgain_compressed.json"), "--deltas", "0.25,0.125,0.0625"]).unwrap();
        assert!(scan.json["slope"].as_f64().unwrap() > 0.4);
        assert_eq!(scan.table.as_ref().unwrap().1.len(), 3);
    }

    #[test]
    fn threads_do_not_change_output() {
        let q = fixture("q_term_r3.json");
        let args = ["rescaled-floor", "--phase", q.as_str(), "--seed", "3", "--lambdas", "16,64"];
        let texts: Vec<String> = [1, 3]
            .iter()
            .map(|&t| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
                let o = pool.install(|| exec(&args)).ok().unwrap();
                render(&o, None).ok().unwrap()
            })
            .collect();
        assert_eq!(texts[0], texts[1]);
    }
}
