use std::fmt::Write as _;
use std::io::{Read, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use z4ap::constructions::{a0, max_free_search, moser, product};
use z4ap::counting::{lambda_fibre, lambda_fourier, lambda_naive, quadruple_count, LambdaReport};
use z4ap::engine::{self, EngineConfig};
use z4ap::format::{self, SetFile};
use z4ap::harmonic::{dft4, int_wht, spectrum_of_set};
use z4ap::increment::{density_fn_increment, fibre_increment};
use z4ap::regularize::{bsg_oracle, uniformize};
use z4ap::trace::{self, Driver};
use z4ap::{Caps, Error, Rational, Result, Z4Set};

#[derive(Parser)]
#[command(
    name = "z4ap",
    version,
    about = "Exact three-term progression counting and certified density increments over Z_4^n"
)]
struct Cli {
    /// Seed for random instances.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Naive,
    Fourier,
    Fibre,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Step {
    /// Every fibre moves to its denser half (alias 6.2).
    #[value(alias = "6.2")]
    Fibre,
    /// The denser coset of the density function (alias 6.3).
    #[value(alias = "6.3")]
    Density,
}

#[derive(Clone, Copy, ValueEnum)]
enum DriverArg {
    Rml,
    Weighted,
}

#[derive(Subcommand)]
enum Verb {
    /// Count three-term progressions in a z4 set.
    Count {
        setfile: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        method: Method,
    },
    /// Dump the Fourier spectrum of a set as JSON.
    Spectrum { setfile: PathBuf },
    /// Apply one increment step to a family.
    Increment {
        familyfile: PathBuf,
        #[arg(long, value_enum)]
        lemma: Step,
        /// Character as a binary string.
        #[arg(long)]
        gamma: String,
        /// Write the new family here; the certificate goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Find a dense subgroup coset of a z2 set and make it uniform.
    Regularize {
        setfile: PathBuf,
        #[arg(long)]
        c: String,
        #[arg(long, default_value = "0")]
        min_density: String,
        #[arg(long)]
        epsilon: Option<String>,
        #[arg(long, default_value_t = 8)]
        bits: u32,
    },
    /// Run a driver and emit its JSON-lines trace.
    Run {
        setfile: PathBuf,
        #[arg(long, value_enum)]
        driver: DriverArg,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the trace here and print only the floor.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a progression-free set: a0, moser:<n> or product:<file>,<file>.
    Construct { what: String },
    /// Largest progression-free set in Z_4^n.
    Search { n: usize },
    /// Re-check every certificate in a trace and replay it.
    Verify { tracefile: PathBuf },
    /// Check a z4 set for proper progressions (`-` reads stdin).
    VerifyFree {
        #[arg(default_value = "-")]
        setfile: PathBuf,
    },
    /// Time the transform and counting kernels.
    Bench {
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))
    }
}

fn parse_rational(s: &str) -> Result<Rational> {
    s.trim()
        .parse::<Rational>()
        .map_err(|_| Error::invalid(format!("{s:?} is not a rational number")))
}

fn parse_bits(s: &str, m: usize) -> Result<u32> {
    if s.len() != m || !s.bytes().all(|b| b == b'0' || b == b'1') {
        return Err(Error::invalid(format!("{s:?} is not a {m}-bit string")));
    }
    Ok(u32::from_str_radix(s, 2).expect("checked"))
}

fn plural(n: usize, word: &str) -> String {
    format!("{n} {word}{}", if n == 1 { "" } else { "s" })
}

fn report_line(r: &LambdaReport) -> String {
    format!(
        "{}: lambda = {}, raw = {}",
        serde_json::to_value(r.method).expect("enum").as_str().unwrap_or("?"),
        r.lambda,
        r.raw_count
    )
}

fn count(a: &Z4Set, method: Method, caps: &Caps) -> Result<String> {
    let reports = match method {
        Method::Naive => vec![lambda_naive(a, caps)?],
        Method::Fourier => vec![lambda_fourier(a)?],
        Method::Fibre => vec![lambda_fibre(a)?],
        Method::All => vec![lambda_naive(a, caps)?, lambda_fourier(a)?, lambda_fibre(a)?],
    };
    if reports.windows(2).any(|w| w[0].raw_count != w[1].raw_count) {
        return Err(Error::mismatch("count", "methods disagree"));
    }
    Ok(reports.iter().map(report_line).collect::<Vec<_>>().join("\n"))
}

fn construct(what: &str) -> Result<Z4Set> {
    if what == "a0" {
        return Ok(a0());
    }
    if let Some(n) = what.strip_prefix("moser:") {
        let n = n.parse().map_err(|_| Error::invalid(format!("bad dimension {n:?}")))?;
        return moser(n);
    }
    if let Some(files) = what.strip_prefix("product:") {
        let (x, y) = files
            .split_once(',')
            .ok_or_else(|| Error::invalid("product needs two files: product:<f1>,<f2>"))?;
        let x = format::parse_z4(&read_input(Path::new(x))?)?;
        let y = format::parse_z4(&read_input(Path::new(y))?)?;
        return product(&x, &y);
    }
    Err(Error::invalid(format!(
        "unknown construction {what:?}; expected a0, moser:<n> or product:<f1>,<f2>"
    )))
}

fn timed(reps: usize, mut f: impl FnMut()) -> Duration {
    (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .min()
        .expect("at least one repetition")
}

struct Row {
    kernel: &'static str,
    size: usize,
    time: Duration,
}

fn bench(reps: usize, seed: u64, caps: &Caps) -> Result<Vec<Row>> {
    let mut rng = z4ap::random::rng(seed);
    let mut rows = Vec::new();
    for m in (4..=18).step_by(2) {
        let v: Vec<i64> = (0..1i64 << m).map(|x| (x * 7 + seed as i64) % 3 - 1).collect();
        rows.push(Row {
            kernel: "wht",
            size: m,
            time: timed(reps, || {
                std::hint::black_box(int_wht(&v));
            }),
        });
    }
    for n in 2..=8 {
        let a = z4ap::random::z4_set(&mut rng, n, 1, 4)?;
        rows.push(Row {
            kernel: "dft4",
            size: n,
            time: timed(reps, || {
                std::hint::black_box(dft4(&a));
            }),
        });
        rows.push(Row {
            kernel: "lambda_fourier",
            size: n,
            time: timed(reps, || {
                std::hint::black_box(lambda_fourier(&a).expect("valid"));
            }),
        });
        if n <= 5.min(caps.naive_n) {
            rows.push(Row {
                kernel: "lambda_naive",
                size: n,
                time: timed(reps, || {
                    std::hint::black_box(lambda_naive(&a, caps).expect("within cap"));
                }),
            });
        }
        if n <= 6 {
            let f = z4ap::group::fibre_decompose(&a);
            rows.push(Row {
                kernel: "quadruple_count",
                size: n,
                time: timed(reps, || {
                    std::hint::black_box(quadruple_count(&f));
                }),
            });
        }
    }
    Ok(rows)
}

fn bench_table(rows: &[Row]) -> String {
    let mut out = format!("{:<16} {:>4} {:>14}\n", "kernel", "dim", "time (us)");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<16} {:>4} {:>14.1}",
            r.kernel,
            r.size,
            r.time.as_secs_f64() * 1e6
        );
    }
    out
}

/// One polyline per kernel, log-scaled time against dimension.
fn bench_svg(rows: &[Row]) -> String {
    let (w, h, pad) = (640.0, 400.0, 40.0);
    let max_dim = rows.iter().map(|r| r.size).max().unwrap_or(1) as f64;
    let log_t = |d: Duration| (d.as_secs_f64() * 1e9).max(1.0).log10();
    let top = rows.iter().map(|r| log_t(r.time)).fold(1.0, f64::max);
    let colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    let mut kernels: Vec<&str> = rows.iter().map(|r| r.kernel).collect();
    kernels.dedup();
    let mut svg = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
    for (i, k) in kernels.iter().enumerate() {
        let pts: Vec<String> = rows
            .iter()
            .filter(|r| r.kernel == *k)
            .map(|r| {
                let x = pad + (w - 2.0 * pad) * r.size as f64 / max_dim;
                let y = h - pad - (h - 2.0 * pad) * log_t(r.time) / top;
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let c = colours[i % colours.len()];
        let _ = write!(
            svg,
            r#"<polyline fill="none" stroke="{c}" points="{}"/><text x="{}" y="{}" fill="{c}">{k}</text>"#,
            pts.join(" "),
            pad + 8.0,
            pad + 16.0 * i as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<String> {
    let caps = Caps::from_env()?;
    match cli.verb {
        Verb::Count { setfile, method } => count(&format::parse_z4(&read_input(&setfile)?)?, method, &caps),
        Verb::Spectrum { setfile } => {
            let v = match format::parse_set(&read_input(&setfile)?)? {
                SetFile::Z4(a) => dft4(&a).to_json(),
                SetFile::Z2(a) => spectrum_of_set(&a).to_json(),
            };
            Ok(serde_json::to_string_pretty(&v)?)
        }
        Verb::Increment {
            familyfile,
            lemma,
            gamma,
            out,
        } => {
            let f = format::parse_family(&read_input(&familyfile)?)?;
            let gamma = parse_bits(&gamma, f.ambient_m())?;
            let (after, cert) = match lemma {
                Step::Fibre => fibre_increment(&f, gamma)?,
                Step::Density => density_fn_increment(&f, gamma)?,
            };
            match out {
                Some(path) => {
                    write_out(&path, &format::write_family(&after))?;
                    Ok(serde_json::to_string(&cert)?)
                }
                None => Ok(format!(
                    "{}{}",
                    format::write_family(&after),
                    serde_json::to_string(&cert)?
                )),
            }
        }
        Verb::Regularize {
            setfile,
            c,
            min_density,
            epsilon,
            bits,
        } => {
            let a = format::parse_z2(&read_input(&setfile)?)?;
            let c = parse_rational(&c)?;
            let min = parse_rational(&min_density)?;
            let Some(found) = bsg_oracle(&a, &c, &min, &caps)? else {
                return Ok(json!({"found": false}).to_string());
            };
            let mut v = json!({"found": true, "oracle": found});
            if let Some(e) = epsilon {
                let e = parse_rational(&e)?;
                v["uniformized"] = serde_json::to_value(uniformize(&a, &e, &found, bits)?)?;
            }
            Ok(serde_json::to_string_pretty(&v)?)
        }
        Verb::Run {
            setfile,
            driver,
            config,
            out,
        } => {
            let a = format::parse_z4(&read_input(&setfile)?)?;
            let cfg = match config {
                Some(p) => EngineConfig::from_json(&read_input(&p)?)?,
                None => EngineConfig::default(),
            };
            let driver = match driver {
                DriverArg::Rml => Driver::Rml,
                DriverArg::Weighted => Driver::Weighted,
            };
            let t = engine::run(driver, &a, &cfg, &caps)?;
            let text = t.to_jsonl();
            let floor = format!(
                "floor: {} <= lambda = {} ({})",
                t.summary.global_floor,
                t.summary.exact_lambda,
                plural(t.summary.certificates, "certificate")
            );
            match out {
                Some(path) => {
                    write_out(&path, &text)?;
                    Ok(floor)
                }
                None => Ok(text.trim_end().to_string()),
            }
        }
        Verb::Construct { what } => Ok(format::write_z4(&construct(&what)?).trim_end().to_string()),
        Verb::Search { n } => {
            let r = max_free_search(n, &caps)?;
            Ok(format!(
                "{}# size {}, proven maximum: {}",
                format::write_z4(&r.set),
                r.size,
                r.proven_maximum == Some(true)
            ))
        }
        Verb::Verify { tracefile } => {
            let text = read_input(&tracefile)?;
            let t = trace::verify(&text, &caps)?;
            Ok(format!(
                "ok: {}, {}, floor {} <= lambda {}",
                plural(t.events.len(), "event"),
                plural(t.summary.certificates, "certificate"),
                t.summary.global_floor,
                t.summary.exact_lambda
            ))
        }
        Verb::VerifyFree { setfile } => {
            let a = format::parse_z4(&read_input(&setfile)?)?;
            match z4ap::counting::has_proper_progression(&a) {
                None => Ok(format!("free: true, size {}", a.len())),
                Some((x, d)) => Err(Error::invalid(format!(
                    "not free: size {}, progression at x = {x}, d = {d}",
                    a.len()
                ))),
            }
        }
        Verb::Bench { reps, svg } => {
            let rows = bench(reps, cli.seed, &caps)?;
            if let Some(p) = svg {
                write_out(&p, &bench_svg(&rows))?;
            }
            Ok(bench_table(&rows).trim_end().to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(out) => {
            // A closed pipe (`| head`) is not an error worth reporting.
            let _ = writeln!(std::io::stdout(), "{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Falsification { dump, .. } = &e {
                eprintln!("{dump}");
                return ExitCode::from(2);
            }
            ExitCode::from(1)
        }
    }
}
