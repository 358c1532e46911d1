//! `tubelab` command-line runner.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 resource refusal (grid budget).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{evaluate, parse_rational, sweep, EvalOptions, ExponentProfile};
use crate::family::{density_stats, TubeFamily};
use crate::gen::GenSpec;
use crate::geom::{LineSeg, Tube};
use crate::raster::{box_dimension, multiplicity_field, union_box_count, GridSpec, ScalarField, DEFAULT_BUDGET_CELLS};
use crate::structure::{
    best_slab_search, bilinear_split, cordoba_l2, hairbrush, plate_number, two_ends_report, PlateOptions, SlabOptions,
    TwoEndsParams, DEFAULT_C0, DEFAULT_PLATE_C,
};

const DEFAULT_N: usize = 3;
const DEFAULT_DELTA: f64 = 1.0 / 32.0;
const DEFAULT_DELTAS: [f64; 4] = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];

/// Accepts decimals and fractions such as `1/64`.
fn parse_real(s: &str) -> std::result::Result<f64, String> {
    if let Ok(x) = s.trim().parse::<f64>() {
        return Ok(x);
    }
    parse_rational(s)
        .map(|r| *r.numer() as f64 / *r.denom() as f64)
        .map_err(|e| e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "tubelab", version, about = "Experiments with families of delta-tubes")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Ambient dimension (>= 3)
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Tube radius, e.g. 0.03125 or 1/32
    #[arg(long, global = true, value_parser = parse_real)]
    delta: Option<f64>,
    /// Grid cell side (default delta/2)
    #[arg(long, global = true, value_parser = parse_real)]
    cell: Option<f64>,
    /// `squid` or `custom:p,q,r,alpha`
    #[arg(long, global = true)]
    profile: Option<String>,
    #[arg(long, global = true, value_parser = parse_real)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Refuse grids with more cells than this
    #[arg(long = "budget-cells", global = true)]
    budget_cells: Option<u64>,
    /// Output path; secondary files reuse its stem
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML file with any of the flags above; flags win
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a family file from a generator spec such as `bush:count=64`
    Gen { spec: String },
    /// Evaluate both sides of the estimate on a family file (uses the file's n and delta)
    Eval { family: PathBuf },
    /// Evaluate a generator over a descending list of dyadic deltas
    Sweep {
        spec: String,
        #[arg(long, value_delimiter = ',', value_parser = parse_real)]
        deltas: Vec<f64>,
    },
    /// Structural statistics of a family file
    Structure {
        #[command(subcommand)]
        which: StructCmd,
    },
    /// Box counts and fitted dimension of a family's union or a field snapshot
    Dim {
        input: PathBuf,
        #[arg(long, value_delimiter = ',', value_parser = parse_real)]
        scales: Vec<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum StructCmd {
    Plate {
        family: PathBuf,
        #[arg(long = "box-scale", default_value_t = DEFAULT_PLATE_C)]
        box_scale: f64,
    },
    Brush {
        family: PathBuf,
        /// Index of the stem tube in the file
        #[arg(long, default_value_t = 0)]
        stem: usize,
        #[arg(long, default_value = "1/4", value_parser = parse_real)]
        sigma: f64,
        #[arg(long, default_value_t = 1)]
        slack: u32,
    },
    Twoends {
        family: PathBuf,
        #[arg(long, default_value_t = 0)]
        tube: usize,
        #[arg(long = "big-n", default_value_t = 10)]
        big_n: u32,
        #[arg(long, default_value_t = 1.05)]
        slack: f64,
    },
    Bilinear {
        family: PathBuf,
        #[arg(long, default_value_t = DEFAULT_C0, value_parser = parse_real)]
        c0: f64,
    },
    Cordoba { family: PathBuf },
    Slab {
        family: PathBuf,
        #[arg(long, value_delimiter = ',', value_parser = parse_real)]
        thetas: Vec<f64>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    n: Option<usize>,
    delta: Option<f64>,
    cell: Option<f64>,
    profile: Option<String>,
    epsilon: Option<f64>,
    seed: Option<u64>,
    budget_cells: Option<u64>,
    out: Option<PathBuf>,
}

/// Flags merged over the config file over defaults.
#[derive(Debug, Clone, Serialize)]
struct Settings {
    n: usize,
    delta: f64,
    cell: Option<f64>,
    profile: String,
    epsilon: f64,
    seed: u64,
    budget_cells: u64,
    #[serde(skip)]
    out: Option<PathBuf>,
}

impl Settings {
    fn resolve(c: Common) -> Result<Self> {
        let file = match &c.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str::<ConfigFile>(&text).map_err(|e| Error::Parse(format!("config {}: {e}", p.display())))?
            }
            None => ConfigFile::default(),
        };
        Ok(Self {
            n: c.n.or(file.n).unwrap_or(DEFAULT_N),
            delta: c.delta.or(file.delta).unwrap_or(DEFAULT_DELTA),
            cell: c.cell.or(file.cell),
            profile: c.profile.or(file.profile).unwrap_or_else(|| "squid".into()),
            epsilon: c.epsilon.or(file.epsilon).unwrap_or(0.0),
            seed: c.seed.or(file.seed).unwrap_or(0),
            budget_cells: c.budget_cells.or(file.budget_cells).unwrap_or(DEFAULT_BUDGET_CELLS),
            out: c.out.or(file.out),
        })
    }

    fn profile(&self, n: usize) -> Result<ExponentProfile> {
        ExponentProfile::parse(&self.profile, n)
    }

    fn eval_options(&self) -> EvalOptions {
        EvalOptions { cell: self.cell, budget_cells: self.budget_cells }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Budget { .. } => 2,
        _ => 1,
    }
}

/// Writes the primary output to `--out` (atomically) or stdout.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => crate::io::write_atomic(p, bytes),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(bytes)?;
            so.flush()?;
            Ok(())
        }
    }
}

/// Secondary output next to `--out`; skipped when writing to stdout.
fn emit_side(out: Option<&Path>, ext: &str, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => crate::io::write_atomic(&p.with_extension(ext), bytes),
        None => Ok(()),
    }
}

fn json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn init_threads() {
    if let Some(k) = std::env::var("TUBELAB_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()) {
        if k > 0 {
            // a pool may already exist when called twice in one process
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_threads();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let s = Settings::resolve(cli.common)?;
    let out = s.out.clone();
    let out = out.as_deref();
    match cli.cmd {
        Cmd::Gen { spec } => {
            let g = GenSpec::parse(&spec)?;
            let f = g.generate(s.n, s.delta, s.seed)?;
            let mut buf = Vec::new();
            f.write_to(&mut buf)?;
            emit(out, &buf)?;
            Ok(0)
        }
        Cmd::Eval { family } => {
            let f = TubeFamily::load(&family)?;
            let profile = s.profile(f.n)?;
            let rep = evaluate(&f, &profile, s.epsilon, &s.eval_options())?;
            emit(out, &json(&rep)?)?;
            emit_side(out, "csv", &rep.to_csv()?)?;
            Ok(if rep.ratio.is_finite() { 0 } else { 1 })
        }
        Cmd::Sweep { spec, deltas } => {
            let g = GenSpec::parse(&spec)?;
            let deltas = if deltas.is_empty() { DEFAULT_DELTAS.to_vec() } else { deltas };
            let profile = s.profile(s.n)?;
            let rep = sweep(&g, s.n, &deltas, &profile, s.epsilon, s.seed, &s.eval_options())?;
            emit(out, &json(&rep)?)?;
            emit_side(out, "csv", &rep.to_csv()?)?;
            emit_side(out, "dat", rep.to_plot_data().as_bytes())?;
            if rep.aborted {
                eprintln!("error: sweep aborted: {}", rep.error.as_deref().unwrap_or("unknown failure"));
                return Ok(1);
            }
            Ok(0)
        }
        Cmd::Structure { which } => structure(&s, which, out),
        Cmd::Dim { input, scales } => dim(&s, &input, scales, out),
    }
}

#[derive(Serialize)]
struct Labeled<'a, T: Serialize> {
    command: &'a str,
    settings: &'a Settings,
    family_size: usize,
    result: T,
}

#[derive(Serialize)]
struct BrushOut {
    stem: LineSeg,
    sigma: f64,
    slack_dyadic: u32,
    count: usize,
    lines: Vec<LineSeg>,
}

#[derive(Serialize)]
struct TwoEndsOut {
    tube: LineSeg,
    lambda: f64,
    n_big: u32,
    epsilon: f64,
    slack: f64,
    report: crate::structure::TwoEndsReport,
}

#[derive(Serialize)]
struct BilinearOut {
    norm: f64,
    separation: f64,
    cells: (Vec<i64>, Vec<i64>),
    first: Vec<LineSeg>,
    second: Vec<LineSeg>,
}

fn pick_line(f: &TubeFamily, i: usize) -> Result<LineSeg> {
    f.lines
        .get(i)
        .cloned()
        .ok_or_else(|| Error::Domain(format!("tube index {i} out of range (family has {} tubes)", f.len())))
}

fn union_field(f: &TubeFamily, s: &Settings) -> Result<ScalarField> {
    let cell = s.cell.unwrap_or(f.delta / 2.0);
    let spec = GridSpec::covering(f.n, &f.lines, f.delta, cell)?;
    Ok(multiplicity_field(f, &spec, s.budget_cells)?.indicator())
}

fn structure(s: &Settings, which: StructCmd, out: Option<&Path>) -> Result<i32> {
    let path = match &which {
        StructCmd::Plate { family, .. }
        | StructCmd::Brush { family, .. }
        | StructCmd::Twoends { family, .. }
        | StructCmd::Bilinear { family, .. }
        | StructCmd::Cordoba { family }
        | StructCmd::Slab { family, .. } => family.clone(),
    };
    let f = TubeFamily::load(&path)?;
    if f.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let size = f.len();
    let bytes = match which {
        StructCmd::Plate { box_scale, .. } => {
            let r = plate_number(&f, &PlateOptions { c: box_scale, ..Default::default() })?;
            json(&Labeled { command: "plate", settings: s, family_size: size, result: r })?
        }
        StructCmd::Brush { stem, sigma, slack, .. } => {
            let l0 = pick_line(&f, stem)?;
            let b = hairbrush(&f, &l0, sigma, slack);
            let r = BrushOut { stem: l0, sigma, slack_dyadic: slack, count: b.len(), lines: b.lines };
            json(&Labeled { command: "brush", settings: s, family_size: size, result: r })?
        }
        StructCmd::Twoends { tube, big_n, slack, .. } => {
            let l = pick_line(&f, tube)?;
            let e = union_field(&f, s)?;
            let lambda = density_stats(&f, &e)?.lambda;
            let params = TwoEndsParams { n_big: big_n, epsilon: s.epsilon, slack };
            let report = two_ends_report(&Tube::new(l.clone(), f.delta)?, &e, &params, lambda)?;
            let r = TwoEndsOut { tube: l, lambda, n_big: big_n, epsilon: s.epsilon, slack, report };
            json(&Labeled { command: "twoends", settings: s, family_size: size, result: r })?
        }
        StructCmd::Bilinear { c0, .. } => {
            let profile = s.profile(f.n)?;
            let r = bilinear_split(&f, c0, &profile, s.budget_cells)?;
            let r = BilinearOut { norm: r.norm, separation: r.separation, cells: r.cells, first: r.first.lines, second: r.second.lines };
            json(&Labeled { command: "bilinear", settings: s, family_size: size, result: r })?
        }
        StructCmd::Cordoba { .. } => {
            let r = cordoba_l2(&f, None, s.budget_cells)?;
            json(&Labeled { command: "cordoba", settings: s, family_size: size, result: r })?
        }
        StructCmd::Slab { thetas, .. } => {
            let thetas = if thetas.is_empty() {
                let mut t = vec![f.delta];
                while t.last().unwrap() * 2.0 <= 1.0 {
                    t.push(t.last().unwrap() * 2.0);
                }
                t
            } else {
                thetas
            };
            let e = union_field(&f, s)?;
            let r = best_slab_search(&e, &thetas, &f, &SlabOptions::default())?;
            json(&Labeled { command: "slab", settings: s, family_size: size, result: r })?
        }
    };
    emit(out, &bytes)?;
    Ok(0)
}

#[derive(Serialize)]
struct DimOut<'a> {
    source: &'a str,
    cell: f64,
    counts: Vec<(f64, u64)>,
    dimension: Option<f64>,
}

fn is_snapshot(path: &Path) -> Result<bool> {
    use std::io::Read;
    let mut head = [0u8; 8];
    let mut fh = std::fs::File::open(path)?;
    let got = fh.read(&mut head)?;
    Ok(got == 8 && &head == b"TLFIELD1")
}

fn dim(s: &Settings, input: &Path, scales: Vec<f64>, out: Option<&Path>) -> Result<i32> {
    let (source, cell, counts) = if is_snapshot(input)? {
        let field = ScalarField::load(input)?;
        let scales = default_scales(scales, field.spec().cell);
        check_scales(&scales)?;
        ("field", field.spec().cell, field.box_count(&scales)?)
    } else {
        let f = TubeFamily::load(input)?;
        if f.is_empty() {
            return Err(Error::EmptyFamily);
        }
        let cell = s.cell.unwrap_or(f.delta / 2.0);
        let spec = GridSpec::ambient(f.n, cell)?;
        let scales = default_scales(scales, f.delta);
        check_scales(&scales)?;
        ("family", cell, union_box_count(&f, &spec, &scales, s.budget_cells)?)
    };
    let dimension = box_dimension(&counts);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scale", "count"])?;
    for (sc, c) in &counts {
        w.write_record([format!("{sc}"), format!("{c}")])?;
    }
    let table = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let rep = DimOut { source, cell, counts, dimension };
    match out {
        Some(p) => {
            crate::io::write_atomic(p, &table)?;
            emit_side(Some(p), "json", &json(&rep)?)?;
        }
        None => emit(None, &json(&rep)?)?,
    }
    Ok(0)
}

/// Dyadic scales from 1/8 down to `finest` when none are given.
fn default_scales(scales: Vec<f64>, finest: f64) -> Vec<f64> {
    if !scales.is_empty() {
        return scales;
    }
    let mut out = vec![0.125];
    while out.last().unwrap() / 2.0 >= finest * (1.0 - 1e-9) {
        out.push(out.last().unwrap() / 2.0);
    }
    out
}

fn check_scales(scales: &[f64]) -> Result<()> {
    if scales.len() < 3 {
        return Err(Error::Domain(format!("need at least 3 scales, got {}", scales.len())));
    }
    if scales.iter().any(|x| crate::numeric::is_dyadic_multiple(*x, 1.0).is_none()) {
        return Err(Error::Domain("scales must be dyadic".into()));
    }
    Ok(())
}
