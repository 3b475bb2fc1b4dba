//! The `cbg` command line.
//!
//! Exit codes: 0 on success, 1 on invalid input or failed verification,
//! 2 when the projection could not be certified (`cycle_unresolved`).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::game::Game;
use crate::geometry::{self, face_signature, n3_row, n3_verify_projection, N3_CENSUS_ORDER, N3_ROWS};
use crate::mbc::{self, enumerate_mbc_with, EnumerateOptions, MbcCatalog};
use crate::projection::{
    clobis, dykstra_project, project, ClobisOptions, DykstraOptions, Status, WeightProfile,
    DEFAULT_MAX_ITERS, DEFAULT_MAX_RESTARTS, DEFAULT_TIE_TOL,
};
use crate::simulate::{self, round_json, write_csv, ExperimentConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_UNCERTIFIED: u8 = 2;

const SIG_DIGITS: usize = 12;
const GIT_DESCRIBE: &str = env!("CBG_GIT_DESCRIBE");
const RNG_NOTE: &str = "ChaCha8 seeded per trial; trial seeds are SplitMix64(root seed, trial index)";

#[derive(Parser, Debug, Serialize)]
#[command(name = "cbg", version, about = "Closest balanced game of a TU cooperative game")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Project a game onto the balanced games with the same v(N).
    Project(ProjectArgs),
    /// Test whether a game has a nonempty core.
    Check(CheckArgs),
    /// Enumerate minimal balanced collections.
    Mbc(MbcArgs),
    /// Tight facets and point-core test of a balanced game.
    Classify(ClassifyArgs),
    /// Verify the closed-form three-player face projections.
    Analytic3(Analytic3Args),
    /// Simulation studies.
    #[command(subcommand)]
    Simulate(SimCommand),
    /// Iterations and wall time of the solver over a range of n.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Serialize)]
struct ProjectArgs {
    /// Game JSON file.
    #[arg(long)]
    game: PathBuf,
    /// Weights JSON file `{"n": .., "weights": {"12": 2.0}}`; omitted coalitions weigh 1.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Tie tolerance in the active-family test x(S) ≤ v(S) + tol.
    #[arg(long, default_value_t = DEFAULT_TIE_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_RESTARTS)]
    max_restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative singular value cutoff of the pseudoinverse.
    #[arg(long)]
    pinv_tol: Option<f64>,
    /// Also run the half-space projection oracle (n ≤ 6) and report the discrepancy.
    #[arg(long)]
    oracle: bool,
    /// Catalog cache for the oracle (computed on the fly for n ≤ 5 otherwise).
    #[arg(long)]
    mbc: Option<PathBuf>,
    /// Write v* as a game JSON file at full precision.
    #[arg(long)]
    vstar_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CheckArgs {
    #[arg(long)]
    game: PathBuf,
    /// Catalog cache; without it n ≤ 5 uses a fresh catalog and larger n
    /// tests whether the game equals its own projection.
    #[arg(long)]
    mbc: Option<PathBuf>,
    /// Absolute tolerance (default 1e-9 · max(1, max |v(S)|)).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct MbcArgs {
    #[arg(long)]
    n: usize,
    /// Write the catalog cache to this path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep the trivial collection {N}.
    #[arg(long)]
    include_trivial: bool,
    /// Allow n = 6 (long running).
    #[arg(long)]
    long_run: bool,
    /// Print every collection.
    #[arg(long)]
    list: bool,
}

#[derive(Args, Debug, Serialize)]
struct ClassifyArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    mbc: Option<PathBuf>,
    /// Facet tightness tolerance (default 1e-7 · max(1, |v(N)|)).
    #[arg(long)]
    tol: Option<f64>,
    /// Project the game first.
    #[arg(long)]
    project: bool,
    /// For n = 3, also print the bits in the order {1,23}, {1,2,3}, {12,13,23}, {2,13}, {3,12}.
    #[arg(long)]
    census_order: bool,
}

#[derive(Args, Debug, Serialize)]
struct Analytic3Args {
    /// Face row (B1 .. B5, B1B2, ..., B3B4B5) or `all`.
    #[arg(long, default_value = "all")]
    row: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Allowed max-norm gap between the projection and the γ = 0 form.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum SimCommand {
    /// Probability that the projection has a one-point core.
    Singleton(SimGameArgs),
    /// Distribution of the faces reached by projections.
    Faces(SimFacesArgs),
    /// P(A⁻¹1 > 0 | A regular) for random 0/1 matrices.
    Matrices(SimMatricesArgs),
    /// Exhaustive count of 0/1 matrices with A⁻¹1 > 0 (n ≤ 4).
    Mn(MnArgs),
}

#[derive(Args, Debug, Serialize)]
struct SimGameArgs {
    #[arg(long)]
    n: usize,
    /// Values of proper coalitions are uniform on [-L, L].
    #[arg(long = "L", visible_alias = "half-width", default_value_t = 10.0)]
    half_width: f64,
    #[arg(long, default_value_t = 5000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    grand_value: f64,
    #[arg(long, default_value_t = DEFAULT_TIE_TOL)]
    tie_tol: f64,
    #[arg(long)]
    face_tol: Option<f64>,
    #[arg(long)]
    mbc: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SimFacesArgs {
    #[command(flatten)]
    common: SimGameArgs,
    /// Keep catalog facet order for n = 3 signatures.
    #[arg(long)]
    catalog_order: bool,
}

#[derive(Args, Debug, Serialize)]
struct SimMatricesArgs {
    #[arg(long, default_value_t = 2)]
    n_min: usize,
    #[arg(long, default_value_t = 12)]
    n_max: usize,
    /// Regular matrices to observe per n.
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct MnArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    mbc: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct BenchArgs {
    /// Player counts: `3:20`, `12` or `3,5,8`.
    #[arg(long, default_value = "3:20")]
    n: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long = "L", visible_alias = "half-width", default_value_t = 10.0)]
    half_width: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct RunMetadata<'a> {
    tool: &'static str,
    version: &'static str,
    git_describe: &'static str,
    subcommand: &'a str,
    config: &'a Cli,
    rng: &'static str,
    threads: usize,
    started_unix: u64,
    finished_unix: u64,
    elapsed_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<Value>,
}

struct Ctx<'a> {
    cli: &'a Cli,
    started: SystemTime,
    clock: Instant,
}

fn unix(t: SystemTime) -> u64 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl Ctx<'_> {
    fn subcommand(&self) -> &'static str {
        match &self.cli.command {
            Command::Project(_) => "project",
            Command::Check(_) => "check",
            Command::Mbc(_) => "mbc",
            Command::Classify(_) => "classify",
            Command::Analytic3(_) => "analytic3",
            Command::Simulate(SimCommand::Singleton(_)) => "simulate singleton",
            Command::Simulate(SimCommand::Faces(_)) => "simulate faces",
            Command::Simulate(SimCommand::Matrices(_)) => "simulate matrices",
            Command::Simulate(SimCommand::Mn(_)) => "simulate mn",
            Command::Bench(_) => "bench",
        }
    }

    /// Writes `<out>.meta.json` next to an output artifact.
    fn sidecar(&self, out: &Path, summary: Option<Value>) -> Result<()> {
        let meta = RunMetadata {
            tool: "cbg",
            version: env!("CARGO_PKG_VERSION"),
            git_describe: GIT_DESCRIBE,
            subcommand: self.subcommand(),
            config: self.cli,
            rng: RNG_NOTE,
            threads: rayon::current_num_threads(),
            started_unix: unix(self.started),
            finished_unix: unix(SystemTime::now()),
            elapsed_secs: self.clock.elapsed().as_secs_f64(),
            summary,
        };
        let mut path = out.as_os_str().to_owned();
        path.push(".meta.json");
        let mut value = serde_json::to_value(&meta)?;
        round_json(&mut value, SIG_DIGITS);
        fs::write(PathBuf::from(path), serde_json::to_string_pretty(&value)? + "\n")?;
        Ok(())
    }

    /// JSON output: to `out` (with sidecar) or to stdout.
    fn emit_json(&self, mut value: Value, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
        round_json(&mut value, SIG_DIGITS);
        let text = serde_json::to_string_pretty(&value)? + "\n";
        match out {
            Some(path) => {
                fs::write(path, &text)?;
                self.sidecar(path, None)?;
                stdout.write_all(text.as_bytes())?;
            }
            None => stdout.write_all(text.as_bytes())?,
        }
        Ok(())
    }

    /// CSV output: to `out` with a sidecar holding `summary` (also printed),
    /// or the CSV itself to stdout.
    fn emit_csv<T: Serialize>(
        &self,
        rows: &[T],
        summary: Value,
        out: Option<&Path>,
        stdout: &mut dyn Write,
    ) -> Result<()> {
        match out {
            Some(path) => {
                write_csv(rows, fs::File::create(path)?, Some(SIG_DIGITS))?;
                let mut summary = summary;
                round_json(&mut summary, SIG_DIGITS);
                self.sidecar(path, Some(summary.clone()))?;
                stdout.write_all((serde_json::to_string_pretty(&summary)? + "\n").as_bytes())?;
            }
            None => write_csv(rows, &mut *stdout, Some(SIG_DIGITS))?,
        }
        Ok(())
    }
}

fn read_game(path: &Path) -> Result<Game> {
    let text = fs::read_to_string(path)?;
    Game::from_json(&text)
}

fn load_catalog(n: usize, path: Option<&Path>, allow_long: bool) -> Result<MbcCatalog> {
    let catalog = match path {
        Some(p) => MbcCatalog::load(p)?,
        None if n <= mbc::MAX_QUICK_PLAYERS || (allow_long && n <= mbc::MAX_EXHAUSTIVE_PLAYERS) => {
            enumerate_mbc_with(
                n,
                EnumerateOptions {
                    include_trivial: false,
                    allow_long,
                },
            )?
        }
        None => {
            return Err(Error::InvalidArgument(format!(
                "n = {n} needs a catalog cache (--mbc)"
            )))
        }
    };
    if catalog.players() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: catalog.players(),
        });
    }
    Ok(catalog)
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn cmd_project(ctx: &Ctx, a: &ProjectArgs, stdout: &mut dyn Write) -> Result<u8> {
    let v = read_game(&a.game)?;
    let n = v.players();
    let gamma = match &a.weights {
        Some(p) => WeightProfile::from_json(&fs::read_to_string(p)?)?,
        None => WeightProfile::uniform(n),
    };
    let opts = ClobisOptions {
        max_iters: a.max_iters,
        max_restarts: a.max_restarts,
        seed: a.seed,
        tie_tol: a.tol,
        pinv_tol: a.pinv_tol,
    };
    let r = clobis(&v, &gamma, &opts)?;
    let mut value = serde_json::to_value(&r)?;
    let obj = value.as_object_mut().expect("struct");
    obj.insert(
        "x_star_2dp".into(),
        json!(r.x_star.iter().map(|&x| round2(x)).collect::<Vec<_>>()),
    );
    let v2 = Game::from_values(n, r.v_star.values().iter().map(|&x| round2(x)).collect())?;
    obj.insert("v_star_2dp".into(), serde_json::to_value(&v2)?);
    if a.oracle {
        if n > mbc::MAX_EXHAUSTIVE_PLAYERS {
            return Err(Error::InvalidArgument(format!("--oracle needs n ≤ 6, got {n}")));
        }
        let catalog = load_catalog(n, a.mbc.as_deref(), false)?;
        let d = dykstra_project(&v, &gamma, &catalog, &DykstraOptions::default())?;
        obj.insert(
            "oracle".into(),
            json!({
                "max_discrepancy": d.v_star.max_abs_diff(&r.v_star),
                "sweeps": d.sweeps,
                "converged": d.converged,
            }),
        );
    }
    if let Some(p) = &a.vstar_out {
        fs::write(p, r.v_star.to_json() + "\n")?;
    }
    ctx.emit_json(value, a.out.as_deref(), stdout)?;
    Ok(match r.status {
        Status::Converged => EXIT_OK,
        Status::CycleUnresolved => EXIT_UNCERTIFIED,
    })
}

fn cmd_check(ctx: &Ctx, a: &CheckArgs, stdout: &mut dyn Write) -> Result<u8> {
    let v = read_game(&a.game)?;
    let n = v.players();
    let tol = a.tol.unwrap_or_else(|| mbc::default_balance_tol(&v));
    if a.mbc.is_some() || n <= mbc::MAX_QUICK_PLAYERS {
        let catalog = load_catalog(n, a.mbc.as_deref(), false)?;
        let check = mbc::is_balanced(&v, &catalog, Some(tol))?;
        let mut value = serde_json::to_value(&check)?;
        value["method"] = json!("catalog");
        ctx.emit_json(value, a.out.as_deref(), stdout)?;
        return Ok(EXIT_OK);
    }
    // balanced exactly when the game is its own projection
    let r = project(&v)?;
    let distance = r.objective.sqrt();
    let value = json!({
        "balanced": distance <= tol,
        "distance": distance,
        "tol": tol,
        "method": "projection",
        "status": r.status,
    });
    ctx.emit_json(value, a.out.as_deref(), stdout)?;
    Ok(if r.is_converged() { EXIT_OK } else { EXIT_UNCERTIFIED })
}

fn cmd_mbc(ctx: &Ctx, a: &MbcArgs, stdout: &mut dyn Write) -> Result<u8> {
    let start = Instant::now();
    let catalog = enumerate_mbc_with(
        a.n,
        EnumerateOptions {
            include_trivial: a.include_trivial,
            allow_long: a.long_run,
        },
    )?;
    let mut value = serde_json::to_value(catalog.summary())?;
    value["runtime_secs"] = json!(start.elapsed().as_secs_f64());
    if a.list {
        value["labels"] = json!(catalog
            .collections()
            .iter()
            .map(|c| c.label(a.n))
            .collect::<Vec<_>>());
    }
    if let Some(p) = &a.out {
        catalog.save(p)?;
        ctx.sidecar(p, Some(value.clone()))?;
    }
    ctx.emit_json(value, None, stdout)?;
    Ok(EXIT_OK)
}

fn cmd_classify(ctx: &Ctx, a: &ClassifyArgs, stdout: &mut dyn Write) -> Result<u8> {
    let mut v = read_game(&a.game)?;
    let n = v.players();
    let mut status = None;
    if a.project {
        let r = project(&v)?;
        status = Some(r.status);
        v = r.v_star;
    }
    let catalog = load_catalog(n, a.mbc.as_deref(), false)?;
    let tol = a.tol.unwrap_or_else(|| geometry::default_face_tol(&v));
    let sig = face_signature(&v, &catalog, Some(tol))?;
    let facets: Vec<String> = catalog.facets().map(|c| c.label(n)).collect();
    let mut value = serde_json::to_value(&sig)?;
    value["tight"] = json!(sig.tight().map(|i| facets[i].clone()).collect::<Vec<_>>());
    value["tol"] = json!(tol);
    if a.census_order {
        if n != 3 {
            return Err(Error::InvalidArgument("--census-order needs n = 3".into()));
        }
        value["census_bits"] = json!(sig.permuted(&N3_CENSUS_ORDER));
    }
    if let Some(s) = status {
        value["projection_status"] = json!(s);
    }
    ctx.emit_json(value, None, stdout)?;
    Ok(match status {
        Some(Status::CycleUnresolved) => EXIT_UNCERTIFIED,
        _ => EXIT_OK,
    })
}

fn cmd_analytic3(ctx: &Ctx, a: &Analytic3Args, stdout: &mut dyn Write) -> Result<u8> {
    let rows: Vec<_> = if a.row.eq_ignore_ascii_case("all") {
        N3_ROWS.iter().collect()
    } else {
        vec![n3_row(&a.row).ok_or_else(|| Error::InvalidArgument(format!("unknown face row {:?}", a.row)))?]
    };
    let catalog = load_catalog(3, None, false)?;
    let mut reports = Vec::new();
    for row in rows {
        reports.push(n3_verify_projection(row, a.trials, a.seed, &catalog, a.tol, |g| {
            let r = project(g)?;
            if !r.is_converged() {
                return Err(Error::NotCertified(r.status.to_string()));
            }
            Ok(r.v_star)
        })?);
    }
    let passed = reports.iter().all(|r| r.passed());
    let value = json!({ "passed": passed, "rows": reports });
    ctx.emit_json(value, a.out.as_deref(), stdout)?;
    Ok(if passed { EXIT_OK } else { EXIT_INVALID })
}

fn experiment(a: &SimGameArgs) -> ExperimentConfig {
    ExperimentConfig {
        grand_value: a.grand_value,
        tie_tol: a.tie_tol,
        face_tol: a.face_tol,
        ..ExperimentConfig::new(a.n, a.half_width, a.trials, a.seed)
    }
}

#[derive(Serialize)]
struct SingletonRow {
    n: usize,
    half_width: f64,
    trials: usize,
    seed: u64,
    singleton: usize,
    converged: usize,
    p: f64,
    se: f64,
    p_2dp: f64,
    balanced_inputs: usize,
    failures: usize,
    invariant_violations: usize,
    mean_iterations: f64,
}

fn cmd_singleton(ctx: &Ctx, a: &SimGameArgs, stdout: &mut dyn Write) -> Result<u8> {
    if a.n > mbc::MAX_QUICK_PLAYERS && a.mbc.is_none() {
        return Err(Error::InvalidArgument("singleton classification needs n ≤ 5 or --mbc".into()));
    }
    let catalog = load_catalog(a.n, a.mbc.as_deref(), false)?;
    let r = simulate::singleton_core_probability(&experiment(a), &catalog)?;
    let row = SingletonRow {
        n: a.n,
        half_width: a.half_width,
        trials: a.trials,
        seed: a.seed,
        singleton: r.singleton.count,
        converged: r.singleton.trials,
        p: r.singleton.p,
        se: r.singleton.se,
        p_2dp: round2(r.singleton.p),
        balanced_inputs: r.balanced_inputs.count,
        failures: r.failures,
        invariant_violations: r.invariant_violations,
        mean_iterations: r.mean_iterations,
    };
    ctx.emit_csv(&[row], serde_json::to_value(&r)?, a.out.as_deref(), stdout)?;
    Ok(EXIT_OK)
}

fn cmd_faces(ctx: &Ctx, a: &SimFacesArgs, stdout: &mut dyn Write) -> Result<u8> {
    let c = &a.common;
    if !(3..=4).contains(&c.n) {
        return Err(Error::InvalidArgument(format!("face census needs n = 3 or 4, got {}", c.n)));
    }
    let catalog = load_catalog(c.n, c.mbc.as_deref(), false)?;
    let order = (c.n == 3 && !a.catalog_order).then_some(&N3_CENSUS_ORDER[..]);
    let r = simulate::face_distribution(&experiment(c), &catalog, order)?;
    let mut summary = serde_json::to_value(&r)?;
    summary.as_object_mut().expect("struct").remove("rows");
    ctx.emit_csv(&r.rows, summary, c.out.as_deref(), stdout)?;
    Ok(EXIT_OK)
}

fn cmd_matrices(ctx: &Ctx, a: &SimMatricesArgs, stdout: &mut dyn Write) -> Result<u8> {
    if a.n_min < 1 || a.n_min > a.n_max {
        return Err(Error::InvalidArgument("need 1 ≤ n-min ≤ n-max".into()));
    }
    let ns: Vec<usize> = (a.n_min..=a.n_max).collect();
    let rows = simulate::positive_solution_probability(&ns, a.trials, a.seed)?;
    let summary = json!({ "rows": rows.len(), "regular_target": a.trials });
    ctx.emit_csv(&rows, summary, a.out.as_deref(), stdout)?;
    Ok(EXIT_OK)
}

fn cmd_mn(ctx: &Ctx, a: &MnArgs, stdout: &mut dyn Write) -> Result<u8> {
    if !(1..=simulate::MAX_EXHAUSTIVE_MATRIX).contains(&a.n) {
        return Err(Error::InvalidArgument(format!("exhaustive count needs n ≤ 4, got {}", a.n)));
    }
    let catalog = if a.n >= 2 {
        Some(load_catalog(a.n, a.mbc.as_deref(), false)?)
    } else {
        None
    };
    let r = simulate::exhaustive_mn(a.n, catalog.as_ref())?;
    let mut value = serde_json::to_value(&r)?;
    value["matches_catalog"] = json!(r.matches_catalog());
    ctx.emit_json(value, None, stdout)?;
    Ok(if r.matches_catalog() == Some(false) { EXIT_INVALID } else { EXIT_OK })
}

/// Parses `3:20`, `12` or `3,5,8`.
fn parse_players(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidArgument(format!("bad player range {spec:?}"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    let ns: Vec<usize> = if let Some((lo, hi)) = spec.split_once(':') {
        let (lo, hi) = (num(lo)?, num(hi)?);
        if lo > hi {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        spec.split(',').map(num).collect::<Result<_>>()?
    };
    if ns.is_empty() {
        return Err(bad());
    }
    Ok(ns)
}

fn cmd_bench(ctx: &Ctx, a: &BenchArgs, stdout: &mut dyn Write) -> Result<u8> {
    let ns = parse_players(&a.n)?;
    let rows = simulate::timing_profile(&ns, a.trials, a.half_width, a.seed)?;
    let summary = json!({ "rows": rows.len(), "trials": a.trials });
    ctx.emit_csv(&rows, summary, a.out.as_deref(), stdout)?;
    Ok(if rows.iter().any(|r| r.failures > 0) { EXIT_UNCERTIFIED } else { EXIT_OK })
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<u8> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let ctx = Ctx {
        cli,
        started: SystemTime::now(),
        clock: Instant::now(),
    };
    match &cli.command {
        Command::Project(a) => cmd_project(&ctx, a, stdout),
        Command::Check(a) => cmd_check(&ctx, a, stdout),
        Command::Mbc(a) => cmd_mbc(&ctx, a, stdout),
        Command::Classify(a) => cmd_classify(&ctx, a, stdout),
        Command::Analytic3(a) => cmd_analytic3(&ctx, a, stdout),
        Command::Simulate(SimCommand::Singleton(a)) => cmd_singleton(&ctx, a, stdout),
        Command::Simulate(SimCommand::Faces(a)) => cmd_faces(&ctx, a, stdout),
        Command::Simulate(SimCommand::Matrices(a)) => cmd_matrices(&ctx, a, stdout),
        Command::Simulate(SimCommand::Mn(a)) => cmd_mn(&ctx, a, stdout),
        Command::Bench(a) => cmd_bench(&ctx, a, stdout),
    }
}

/// Runs the command line, writing results to `stdout` and diagnostics to
/// stderr; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}
