use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use echoprop::diagram::ImplicationDiagram;
use echoprop::flows::{diameter_curve, divergence_curve};
use echoprop::report::{analyze, emit_report, Selection};
use echoprop::systems::{catalog_names, parse_process};
use echoprop::{
    load_system, Error, InputProcessF64, InputWindowF64, Result, StatePoint, SystemSpecF64,
    TestConfig,
};

const EXIT_INVARIANT: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "echoprop", version, about = "Probe memory properties of driven state-space systems")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the testers and check the implication diagram.
    Analyze(AnalyzeArgs),
    /// Emit a divergence or diameter curve as CSV (`n,value`).
    Curve(CurveArgs),
    /// Print the encoded implication diagram.
    Diagram {
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// List catalog systems.
    ListSystems,
}

#[derive(Args)]
struct Source {
    /// Catalog name such as `affine(0.5,1)`, or a path to a JSON system config.
    #[arg(long)]
    system: String,
    /// `iid`, `iid(lo,hi)`, `constant`, `constant(c)`, `observed(rho[,p])`, `observed_cos(rho[,p])`.
    #[arg(long, default_value = "iid")]
    process: String,
    /// Explicit input window literal (JSON); replaces `--process`.
    #[arg(long)]
    input_file: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    source: Source,
    /// Comma-separated properties (esp, fmp, sfp, ifp, ssfp, sifp, uap, steady),
    /// `lemma4` or `lemma4:<item>` for cross-checks, or `all`.
    #[arg(long, default_value = "all")]
    props: String,
    #[arg(long, default_value_t = 200)]
    n_max: usize,
    #[arg(long, default_value_t = 20)]
    tail_window: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Sampled initial states.
    #[arg(long, default_value_t = 64)]
    samples: usize,
    /// Sampled input windows.
    #[arg(long, default_value_t = 32)]
    input_samples: usize,
    #[arg(long, default_value_t = 128)]
    burn_in: usize,
    /// Past horizon of generated windows (default max(256, 2 n_max)).
    #[arg(long)]
    past_horizon: Option<usize>,
    #[arg(long)]
    seed: u64,
    /// Report path (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CurveKind {
    /// `d(psi_n(x, .), psi_n(x', .))` for one pair of states.
    Divergence,
    /// Diameter of the pullback image of the state sample.
    Diameter,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_enum, default_value = "divergence")]
    kind: CurveKind,
    /// Use the pullback flow `psi_n(x, T^n u)` (divergence only).
    #[arg(long)]
    shifted: bool,
    #[arg(long, default_value_t = 60)]
    n_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sampled states for the diameter curve.
    #[arg(long, default_value_t = 64)]
    samples: usize,
    /// Initial states for the divergence curve, comma-separated coordinates
    /// (default: the first two sampled states).
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    x_prime: Option<String>,
    /// CSV path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(|| run(cli.command)),
            Err(e) => Err(Error::InvalidConfig(format!("--workers {w}: {e}"))),
        },
        None => run(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("echoprop: {e}");
            ExitCode::from(match e {
                Error::Invariant(_) => EXIT_INVARIANT,
                _ => EXIT_USAGE,
            })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Analyze(a) => run_analyze(a),
        Command::Curve(c) => run_curve(c),
        Command::Diagram { json } => {
            let d = ImplicationDiagram::standard();
            d.validate()?;
            if json {
                println!("{}", serde_json::to_string_pretty(&d).expect("diagram serialises"));
            } else {
                print!("{}", diagram_text(&d));
            }
            Ok(())
        }
        Command::ListSystems => {
            for (name, about) in catalog_names() {
                println!("{name:<26} {about}");
            }
            Ok(())
        }
    }
}

fn open(source: &Source, seed: u64) -> Result<(SystemSpecF64, InputProcessF64)> {
    let sys: SystemSpecF64 = load_system(&source.system)?;
    let proc = match &source.input_file {
        Some(path) => InputProcessF64::explicit(InputWindowF64::read_file(path)?, seed),
        None => parse_process(&source.process, &sys, seed)?,
    };
    Ok((sys, proc))
}

fn run_analyze(a: AnalyzeArgs) -> Result<()> {
    let (sys, proc) = open(&a.source, a.seed)?;
    let cfg = TestConfig {
        n_max: a.n_max,
        tail_window: a.tail_window,
        tol: a.tol,
        state_samples: a.samples,
        input_samples: a.input_samples,
        burn_in: a.burn_in,
        seed: a.seed,
        past_horizon: a.past_horizon,
    };
    let selection = Selection::parse(&a.props)?;
    let report = analyze(&sys, &proc, &cfg, &selection, &ImplicationDiagram::standard())?;
    print!("{}", report.summary());
    if let Some(out) = &a.out {
        emit_report(&report, out)?;
        println!("report written to {}", out.display());
    }
    Ok(())
}

fn parse_state(sys: &SystemSpecF64, text: &str) -> Result<StatePoint<f64>> {
    let coords = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad state coordinate `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if coords.len() != sys.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.state_dim(),
            found: coords.len(),
        });
    }
    sys.from_representative(&coords)
}

fn run_curve(c: CurveArgs) -> Result<()> {
    let (sys, proc) = open(&c.source, c.seed)?;
    let points: Vec<(usize, f64)> = match c.kind {
        CurveKind::Divergence => {
            let sampled = sys.sample_states(c.seed, 2);
            let x = match &c.x {
                Some(t) => parse_state(&sys, t)?,
                None => sampled[0].clone(),
            };
            let x_prime = match &c.x_prime {
                Some(t) => parse_state(&sys, t)?,
                None => sampled[1].clone(),
            };
            let w = proc.generate_window(c.n_max, c.n_max)?;
            let pair = divergence_curve(&sys, &x, &x_prime, &w, c.n_max, c.shifted, c.seed)?;
            pair.n_values.into_iter().zip(pair.d_values).collect()
        }
        CurveKind::Diameter => {
            let mut states = sys.sample_states(c.seed, c.samples);
            states.extend(sys.hard_states_for_horizon(c.n_max));
            let w = proc.generate_window(c.n_max, 0)?;
            diameter_curve(&sys, &w, &states, c.n_max)?
        }
    };
    let mut csv = String::from("n,value\n");
    for (n, v) in points {
        let _ = writeln!(csv, "{n},{v}");
    }
    match &c.out {
        Some(path) => std::fs::write(path, csv).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        }),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn diagram_text(d: &ImplicationDiagram) -> String {
    let mut s = String::new();
    for e in &d.edges {
        let cond = serde_json::to_value(e.condition).expect("condition serialises");
        let _ = writeln!(
            s,
            "{:<34} {:<24} {}",
            e.id,
            cond.as_str().unwrap_or_default(),
            e.describe()
        );
        let _ = writeln!(s, "{:<34} provenance: {}", "", e.provenance);
        if let Some(w) = &e.witness_system {
            let _ = writeln!(s, "{:<34} witness system: {w}", "");
        }
    }
    s
}
