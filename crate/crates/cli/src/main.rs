mod cases;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use linescatter::darboux::{
    add_bound_state, identity_tsv, integral_identities, remove_bound_state,
};
use linescatter::dispersion::{tzero_integral, ReflectionRatio, TzeroOptions};
use linescatter::inverse::{analyze_with_tol, disambiguate, find_resonances_with_tol, Analysis};
use linescatter::jost::{bound_states, scattering_coefficients};
use linescatter::{Error, Potential, Result};
use num_complex::Complex64;

#[derive(Parser)]
#[command(
    name = "linescatter",
    version,
    about = "Scattering and inverse scattering on the line"
)]
struct Cli {
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for grid evaluation; defaults to the hardware count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Absolute and relative tolerance of the dispersion quadrature.
    #[arg(long, global = true)]
    tol_quad: Option<f64>,
    /// Bracket width at which resonance bisection stops; machine precision by default.
    #[arg(long, global = true)]
    tol_root: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Tsv,
    Json,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Tsv => "tsv",
            Format::Json => "json",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Transmission and reflection coefficients of a potential on a wavenumber grid.
    Forward(ForwardArgs),
    /// Add, remove or check bound states by Darboux transformation.
    #[command(subcommand)]
    Darboux(DarbouxCommand),
    /// Transmission of the bound-state-free potential from ratio data.
    #[command(subcommand)]
    Reconstruct(ReconstructCommand),
    /// Resonances, candidate ladders and selection by a norm bound.
    #[command(subcommand)]
    Inverse(InverseCommand),
    /// Reproduce one of the four square-well cases against the printed values.
    Example(ExampleArgs),
}

#[derive(Args)]
struct Grid {
    #[arg(long, default_value_t = 0.1)]
    kmin: f64,
    #[arg(long, default_value_t = 10.0)]
    kmax: f64,
    #[arg(long, default_value_t = 256)]
    nk: usize,
}

impl Grid {
    fn points(&self) -> Result<Vec<f64>> {
        if !(self.kmin > 0.0 && self.kmax > self.kmin && self.kmax.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < kmin < kmax, got kmin = {}, kmax = {}",
                self.kmin, self.kmax
            )));
        }
        if self.nk < 2 {
            return Err(Error::InvalidArgument(format!(
                "need nk >= 2, got {}",
                self.nk
            )));
        }
        let h = (self.kmax - self.kmin) / (self.nk - 1) as f64;
        Ok((0..self.nk)
            .map(|i| {
                if i + 1 == self.nk {
                    self.kmax
                } else {
                    self.kmin + h * i as f64
                }
            })
            .collect())
    }
}

#[derive(Args)]
struct ForwardArgs {
    #[arg(long)]
    potential: PathBuf,
    #[command(flatten)]
    grid: Grid,
}

#[derive(Subcommand)]
enum DarbouxCommand {
    /// Add a bound state at `i kappa` with dependency constant of modulus `gamma`.
    Add {
        #[arg(long)]
        potential: PathBuf,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        gamma: f64,
    },
    /// Remove the `index`-th bound state (1-based, ascending in kappa).
    Remove {
        #[arg(long)]
        potential: PathBuf,
        #[arg(long)]
        index: usize,
    },
    /// Integral identities of one added state for n = 0..=MAX.
    #[command(alias = "identity")]
    Verify {
        /// Base potential; the zero potential when omitted.
        #[arg(long)]
        potential: Option<PathBuf>,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long = "n", value_name = "MAX", default_value_t = 4)]
        n_max: u32,
    },
}

#[derive(Subcommand)]
enum ReconstructCommand {
    /// `T⁰` along `k + i·im` for `k` on the grid.
    Tzero {
        /// `squarewell:EPS`, `potential:FILE.json` or `sampled:FILE.csv`.
        #[arg(long)]
        model: String,
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value_t = 0.0)]
        im: f64,
    },
}

#[derive(Subcommand)]
enum InverseCommand {
    /// Zeros `−iβ` of `1/T⁰` on the negative imaginary axis.
    Resonances {
        #[arg(long)]
        model: String,
        #[arg(long)]
        window: Option<f64>,
    },
    /// All candidates with their norms, ascending.
    Enumerate {
        #[arg(long)]
        model: String,
        /// Potential with the same data that fixes `C_0`; defaults to the model's own.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        window: Option<f64>,
    },
    /// Candidates whose norm does not exceed the bound.
    Disambiguate {
        #[arg(long)]
        model: String,
        #[arg(long)]
        c_bound: f64,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        window: Option<f64>,
        /// CSV sidecar `index,C_N` over the whole ladder.
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExampleArgs {
    /// `3.1`, `3.2`, `3.3`, `3.4` or `eps5`, `pi2`, `eps20`, `eps130`.
    #[arg(long, alias = "paper")]
    case: String,
    /// Rebuild every candidate and check its data and norm.
    #[arg(long)]
    verify: bool,
}

struct Settings {
    out: Option<PathBuf>,
    format: Option<Format>,
    tzero: TzeroOptions,
    root_tol: f64,
}

impl Settings {
    fn format(&self, allowed: &[Format]) -> Result<Format> {
        match self.format {
            None => Ok(allowed[0]),
            Some(f) if allowed.contains(&f) => Ok(f),
            Some(f) => Err(Error::InvalidArgument(format!(
                "format {} is not available here; use one of {}",
                f.name(),
                allowed
                    .iter()
                    .map(|f| f.name())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))),
        }
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => fs::write(path, text)?,
            None => print!("{text}"),
        }
        Ok(())
    }
}

fn positive(name: &str, value: Option<f64>) -> Result<Option<f64>> {
    match value {
        Some(v) if !(v > 0.0 && v.is_finite()) => Err(Error::InvalidArgument(format!(
            "{name} must be positive, got {v}"
        ))),
        v => Ok(v),
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}

fn model(spec: &str) -> Result<ReflectionRatio> {
    ReflectionRatio::from_spec_str(spec)
}

/// The potential that fixes `C_0`: the given file, or the model's own potential.
fn reference(d: &ReflectionRatio, path: Option<&PathBuf>) -> Result<Potential> {
    match (path, d) {
        (Some(p), _) => Potential::load(p),
        (None, ReflectionRatio::SquareWell(m)) => Potential::square_well(m.epsilon),
        (None, ReflectionRatio::FromPotential(m)) => Ok(m.potential.clone()),
        (None, ReflectionRatio::Sampled(_)) => Err(Error::AnalyticModelRequired),
    }
}

fn forward(s: &Settings, args: &ForwardArgs) -> Result<()> {
    let format = s.format(&[Format::Csv, Format::Json])?;
    let kgrid = args.grid.points()?;
    let v = Potential::load(&args.potential)?;
    let sc = scattering_coefficients(&v, &kgrid)?;
    eprintln!(
        "unitarity residual {:.3e}, reflection asymmetry {:.3e}, step {:.3e}",
        sc.max_unitarity_residual(),
        sc.max_reflection_asymmetry(),
        sc.step
    );
    let text = match format {
        Format::Json => {
            let pairs = |z: &[Complex64]| z.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>();
            json(&serde_json::json!({
                "k": sc.kgrid,
                "T": pairs(&sc.t),
                "L": pairs(&sc.l),
                "R": pairs(&sc.r),
                "step": sc.step,
                "unitarity_residual": sc.max_unitarity_residual(),
            }))
        }
        _ => {
            let mut buf = Vec::new();
            sc.write_csv(&mut buf)?;
            String::from_utf8(buf).expect("ascii output")
        }
    };
    s.emit(&text)
}

fn darboux(s: &Settings, cmd: &DarbouxCommand) -> Result<()> {
    match cmd {
        DarbouxCommand::Add {
            potential,
            kappa,
            gamma,
        } => {
            s.format(&[Format::Json])?;
            let v = Potential::load(potential)?;
            let step = add_bound_state(&v, *kappa, *gamma)?;
            let after = bound_states(&step.potential)?;
            let top = after.kappas.last().copied().unwrap_or(f64::NAN);
            if !((top - kappa).abs() <= 1e-7 * kappa.max(1.0)) {
                return Err(Error::NumericalFailure(format!(
                    "new top bound state at {top}, expected {kappa}"
                )));
            }
            eprintln!("bound states {:?}", after.kappas);
            s.emit(&(step.potential.to_json() + "\n"))
        }
        DarbouxCommand::Remove { potential, index } => {
            s.format(&[Format::Json])?;
            let v = Potential::load(potential)?;
            let reduced = remove_bound_state(&v, *index)?;
            eprintln!("bound states {:?}", bound_states(&reduced)?.kappas);
            s.emit(&(reduced.to_json() + "\n"))
        }
        DarbouxCommand::Verify {
            potential,
            kappa,
            gamma,
            n_max,
        } => {
            let format = s.format(&[Format::Tsv, Format::Json])?;
            let base = match potential {
                Some(p) => Potential::load(p)?,
                None => Potential::zero(),
            };
            let step = add_bound_state(&base, *kappa, *gamma)?;
            let reports = integral_identities(&step, &base, *n_max);
            let worst = reports.iter().map(|r| r.residual).fold(0.0, f64::max);
            eprintln!("largest identity residual {worst:.3e}");
            s.emit(&match format {
                Format::Json => json(&reports),
                _ => identity_tsv(&reports),
            })
        }
    }
}

fn reconstruct(s: &Settings, cmd: &ReconstructCommand) -> Result<()> {
    let ReconstructCommand::Tzero {
        model: spec,
        grid,
        im,
    } = cmd;
    let format = s.format(&[Format::Csv, Format::Json])?;
    if !(*im >= 0.0 && im.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "im must be nonnegative, got {im}"
        )));
    }
    let d = model(spec)?;
    let values = grid
        .points()?
        .into_iter()
        .map(|k| tzero_integral(&d, Complex64::new(k, *im), s.tzero).map(|t| (k, t)))
        .collect::<Result<Vec<_>>>()?;
    let text = match format {
        Format::Json => json(
            &values
                .iter()
                .map(|(k, t)| serde_json::json!({ "k": [k, im], "T0": [t.value.re, t.value.im], "error": t.error }))
                .collect::<Vec<_>>(),
        ),
        _ => {
            let mut out = String::from("rek,imk,reT0,imT0,error\n");
            for (k, t) in &values {
                out += &format!("{k:.16e},{im:.16e},{:.16e},{:.16e},{:.16e}\n", t.value.re, t.value.im, t.error);
            }
            out
        }
    };
    s.emit(&text)
}

fn summarize(a: &Analysis) {
    eprintln!(
        "classification {:?}, odd zeros {}, allowed N {:?}, C_0 {:.16e}, {} candidates",
        a.classification.kind,
        a.zeros.len(),
        a.allowed,
        a.c0,
        a.enumeration.count()
    );
}

fn inverse(s: &Settings, cmd: &InverseCommand) -> Result<()> {
    match cmd {
        InverseCommand::Resonances {
            model: spec,
            window,
        } => {
            let format = s.format(&[Format::Tsv, Format::Csv, Format::Json])?;
            let res =
                find_resonances_with_tol(&model(spec)?, positive("window", *window)?, s.root_tol)?;
            s.emit(&match format {
                Format::Json => json(&res),
                f => {
                    let sep = if f == Format::Csv { ',' } else { '\t' };
                    let mut out = format!("j{sep}beta\n");
                    for (j, b) in res.betas.iter().enumerate() {
                        out += &format!("{}{sep}{b:.16e}\n", j + 1);
                    }
                    out
                }
            })
        }
        InverseCommand::Enumerate {
            model: spec,
            reference: r,
            window,
        } => {
            let format = s.format(&[Format::Tsv, Format::Json])?;
            let d = model(spec)?;
            let a = analyze_with_tol(
                &d,
                &reference(&d, r.as_ref())?,
                positive("window", *window)?,
                s.root_tol,
            )?;
            summarize(&a);
            s.emit(&match format {
                Format::Json => json(&a),
                _ => {
                    let mut buf = Vec::new();
                    a.enumeration.write_ladder(&mut buf)?;
                    String::from_utf8(buf).expect("ascii output")
                }
            })
        }
        InverseCommand::Disambiguate {
            model: spec,
            c_bound,
            reference: r,
            window,
            plot_data,
        } => {
            s.format(&[Format::Json])?;
            let c_bound = positive("c-bound", Some(*c_bound))?.unwrap_or_default();
            let d = model(spec)?;
            let a = analyze_with_tol(
                &d,
                &reference(&d, r.as_ref())?,
                positive("window", *window)?,
                s.root_tol,
            )?;
            summarize(&a);
            if let Some(path) = plot_data {
                let mut out = String::from("index,C_N\n");
                for (i, c) in a.enumeration.candidates.iter().enumerate() {
                    out += &format!("{},{:.16e}\n", i + 1, c.c_n);
                }
                fs::write(path, out)?;
            }
            s.emit(&(disambiguate(&a.enumeration.candidates, c_bound).to_json() + "\n"))
        }
    }
}

fn example(s: &Settings, args: &ExampleArgs) -> Result<()> {
    let format = s.format(&[Format::Tsv, Format::Json])?;
    let case = cases::lookup(&args.case)?;
    let report = cases::run(case, s.root_tol, args.verify)?;
    s.emit(&match format {
        Format::Json => json(&report),
        _ => report.to_tsv(),
    })?;
    match report.verification.iter().find(|v| !v.passed) {
        Some(v) => Err(Error::NumericalFailure(format!(
            "candidate N={} {:?} failed verification",
            v.n, v.kappas
        ))),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::NumericalFailure(format!("cannot start the thread pool: {e}")))?;
    }
    let mut tzero = TzeroOptions::default();
    if let Some(tol) = positive("tol-quad", cli.tol_quad)? {
        tzero.abs_tol = tol;
        tzero.rel_tol = tol;
    }
    let root_tol = positive("tol-root", cli.tol_root)?.unwrap_or(0.0);
    let s = Settings {
        out: cli.out,
        format: cli.format,
        tzero,
        root_tol,
    };
    match &cli.command {
        Command::Forward(args) => forward(&s, args),
        Command::Darboux(cmd) => darboux(&s, cmd),
        Command::Reconstruct(cmd) => reconstruct(&s, cmd),
        Command::Inverse(cmd) => inverse(&s, cmd),
        Command::Example(args) => example(&s, args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
