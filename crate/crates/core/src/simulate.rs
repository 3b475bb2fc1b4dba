//! Simulation studies on random games and random binary matrices.
//!
//! Every trial derives its own seed from the root seed and its index, so
//! results do not depend on the number of worker threads.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{random_game, trial_seed};
use crate::geometry::{face_signature, FaceSignature};
use crate::mbc::MbcCatalog;
use crate::numerics::{det_exact, Lu, Matrix};
use crate::projection::{clobis, verify_result, ClobisOptions, WeightProfile, DEFAULT_TIE_TOL};

/// Absolute tolerance for the per-trial invariant checks.
const INVARIANT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub n: usize,
    /// Proper-coalition values are uniform on `[-half_width, half_width]`.
    pub half_width: f64,
    pub trials: usize,
    pub seed: u64,
    pub grand_value: f64,
    pub tie_tol: f64,
    /// Facet tightness tolerance; `None` means `1e-7 · max(1, |v*(N)|)`.
    pub face_tol: Option<f64>,
    pub max_restarts: usize,
}

impl ExperimentConfig {
    pub fn new(n: usize, half_width: f64, trials: usize, seed: u64) -> Self {
        ExperimentConfig {
            n,
            half_width,
            trials,
            seed,
            grand_value: 0.0,
            tie_tol: DEFAULT_TIE_TOL,
            face_tol: None,
            max_restarts: crate::projection::DEFAULT_MAX_RESTARTS,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "half-width must be positive, got {}",
                self.half_width
            )));
        }
        Ok(())
    }
}

/// A binomial proportion with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub count: usize,
    pub trials: usize,
    pub p: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(count: usize, trials: usize) -> Self {
        let p = if trials == 0 {
            0.0
        } else {
            count as f64 / trials as f64
        };
        let se = if trials == 0 {
            0.0
        } else {
            (p * (1.0 - p) / trials as f64).sqrt()
        };
        Estimate {
            count,
            trials,
            p,
            se,
        }
    }

    /// Standard error of a proportion `target` over the same number of trials.
    pub fn se_at(&self, target: f64) -> f64 {
        (target * (1.0 - target) / self.trials.max(1) as f64).sqrt()
    }
}

struct Trial {
    signature: Option<FaceSignature>,
    failed: bool,
    invariant_ok: bool,
    iterations: usize,
}

fn check_catalog(n: usize, catalog: &MbcCatalog) -> Result<()> {
    if catalog.players() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: catalog.players(),
        });
    }
    Ok(())
}

fn run_trials(cfg: &ExperimentConfig, catalog: &MbcCatalog) -> Result<Vec<Trial>> {
    cfg.validate()?;
    check_catalog(cfg.n, catalog)?;
    let gamma = WeightProfile::uniform(cfg.n);
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(cfg.seed, t as u64);
            let v = random_game(cfg.n, cfg.half_width, seed, Some(cfg.grand_value))?;
            let opts = ClobisOptions {
                seed,
                tie_tol: cfg.tie_tol,
                max_restarts: cfg.max_restarts,
                ..ClobisOptions::default()
            };
            let r = clobis(&v, &gamma, &opts)?;
            let failed = !r.is_converged();
            let invariant_ok = verify_result(&v, &r, INVARIANT_TOL).is_ok();
            let signature = if failed {
                None
            } else {
                Some(face_signature(&r.v_star, catalog, cfg.face_tol)?)
            };
            Ok(Trial {
                signature,
                failed,
                invariant_ok,
                iterations: r.iterations,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingletonReport {
    pub config: ExperimentConfig,
    /// Over converged trials.
    pub singleton: Estimate,
    /// Inputs that were already balanced (no tight facet at the projection).
    pub balanced_inputs: Estimate,
    pub failures: usize,
    pub invariant_violations: usize,
    pub mean_iterations: f64,
    pub runtime_secs: f64,
}

/// Fraction of random games whose closest balanced game has a one-point core.
pub fn singleton_core_probability(cfg: &ExperimentConfig, catalog: &MbcCatalog) -> Result<SingletonReport> {
    let start = Instant::now();
    let trials = run_trials(cfg, catalog)?;
    let sigs: Vec<&FaceSignature> = trials.iter().filter_map(|t| t.signature.as_ref()).collect();
    let ok = sigs.len();
    Ok(SingletonReport {
        config: cfg.clone(),
        singleton: Estimate::new(sigs.iter().filter(|s| s.singleton).count(), ok),
        balanced_inputs: Estimate::new(sigs.iter().filter(|s| s.is_interior()).count(), ok),
        failures: trials.iter().filter(|t| t.failed).count(),
        invariant_violations: trials.iter().filter(|t| !t.invariant_ok).count(),
        mean_iterations: trials.iter().map(|t| t.iterations as f64).sum::<f64>() / trials.len() as f64,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FaceRow {
    pub signature: String,
    pub count: usize,
    pub proportion: f64,
    pub se: f64,
    pub singleton: bool,
    pub tight_union_rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FaceReport {
    pub config: ExperimentConfig,
    /// Facet labels in signature order.
    pub facets: Vec<String>,
    /// Observed signatures by decreasing frequency.
    pub rows: Vec<FaceRow>,
    pub balanced: Estimate,
    pub lineality: Estimate,
    pub singleton_mass: Estimate,
    /// Exactly one tight facet.
    pub facet_mass: Estimate,
    /// Two or more tight facets, all-tight excluded.
    pub lower_face_mass: Estimate,
    /// Signatures observed with both singleton flags (always 0: the flag is a
    /// function of the signature).
    pub inconsistent_signatures: usize,
    pub failures: usize,
    pub invariant_violations: usize,
    pub runtime_secs: f64,
}

/// Census of the faces on which projections of random games land.
///
/// `order` lists catalog facet positions in the order wanted for the
/// signature strings; `None` keeps catalog order.
pub fn face_distribution(
    cfg: &ExperimentConfig,
    catalog: &MbcCatalog,
    order: Option<&[usize]>,
) -> Result<FaceReport> {
    let start = Instant::now();
    let labels: Vec<String> = catalog.facets().map(|c| c.label(cfg.n)).collect();
    let order: Vec<usize> = match order {
        Some(o) => {
            let mut sorted = o.to_vec();
            sorted.sort_unstable();
            if sorted != (0..labels.len()).collect::<Vec<_>>() {
                return Err(Error::InvalidArgument(
                    "facet order must be a permutation of the catalog facets".into(),
                ));
            }
            o.to_vec()
        }
        None => (0..labels.len()).collect(),
    };
    let trials = run_trials(cfg, catalog)?;
    let mut table: BTreeMap<String, (usize, bool, usize, bool)> = BTreeMap::new();
    for sig in trials.iter().filter_map(|t| t.signature.as_ref()) {
        let key = sig.permuted(&order);
        let e = table
            .entry(key)
            .or_insert((0, sig.singleton, sig.tight_union_rank, false));
        e.0 += 1;
        if e.1 != sig.singleton {
            e.3 = true;
        }
    }
    let ok: usize = table.values().map(|e| e.0).sum();
    let mut rows: Vec<FaceRow> = table
        .iter()
        .map(|(sig, &(count, singleton, rank, _))| {
            let est = Estimate::new(count, ok);
            FaceRow {
                signature: sig.clone(),
                count,
                proportion: est.p,
                se: est.se,
                singleton,
                tight_union_rank: rank,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.signature.cmp(&b.signature)));

    let mass = |pred: &dyn Fn(&FaceRow) -> bool| {
        Estimate::new(rows.iter().filter(|r| pred(r)).map(|r| r.count).sum(), ok)
    };
    let ones = |r: &FaceRow| r.signature.bytes().filter(|&b| b == b'1').count();
    let m = labels.len();
    Ok(FaceReport {
        config: cfg.clone(),
        facets: order.iter().map(|&i| labels[i].clone()).collect(),
        balanced: mass(&|r| ones(r) == 0),
        lineality: mass(&|r| ones(r) == m),
        singleton_mass: mass(&|r| r.singleton),
        facet_mass: mass(&|r| ones(r) == 1),
        lower_face_mass: mass(&|r| ones(r) >= 2 && ones(r) < m),
        inconsistent_signatures: table.values().filter(|e| e.3).count(),
        rows,
        failures: trials.iter().filter(|t| t.failed).count(),
        invariant_violations: trials.iter().filter(|t| !t.invariant_ok).count(),
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub n: usize,
    pub trials: usize,
    pub mean_iterations: f64,
    pub max_iterations: usize,
    pub mean_secs: f64,
    pub median_secs: f64,
    pub restarts: usize,
    pub failures: usize,
}

/// Mean CLOBIS iterations and wall time per `n`, one game at a time.
pub fn timing_profile(ns: &[usize], trials: usize, half_width: f64, seed: u64) -> Result<Vec<TimingRow>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let mut out = Vec::new();
    for &n in ns {
        if !(3..=crate::game::MAX_PLAYERS).contains(&n) {
            return Err(Error::PlayerCount(n));
        }
        let gamma = WeightProfile::uniform(n);
        let root = trial_seed(seed, n as u64);
        // warm-up run, not timed
        clobis(&random_game(n, half_width, root, Some(0.0))?, &gamma, &ClobisOptions::default())?;
        let mut secs = Vec::with_capacity(trials);
        let mut iters = Vec::with_capacity(trials);
        let (mut restarts, mut failures) = (0, 0);
        for t in 0..trials {
            let s = trial_seed(root, t as u64);
            let v = random_game(n, half_width, s, Some(0.0))?;
            let opts = ClobisOptions {
                seed: s,
                ..ClobisOptions::default()
            };
            let start = Instant::now();
            let r = clobis(&v, &gamma, &opts)?;
            secs.push(start.elapsed().as_secs_f64());
            iters.push(r.iterations);
            restarts += r.restarts;
            failures += usize::from(!r.is_converged());
        }
        let mut sorted = secs.clone();
        sorted.sort_by(f64::total_cmp);
        let median = if trials % 2 == 1 {
            sorted[trials / 2]
        } else {
            0.5 * (sorted[trials / 2 - 1] + sorted[trials / 2])
        };
        out.push(TimingRow {
            n,
            trials,
            mean_iterations: iters.iter().sum::<usize>() as f64 / trials as f64,
            max_iterations: *iters.iter().max().expect("trials ≥ 1"),
            mean_secs: secs.iter().sum::<f64>() / trials as f64,
            median_secs: median,
            restarts,
            failures,
        });
    }
    Ok(out)
}

/// Outcome of testing one binary matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MatrixClass {
    Singular,
    Regular,
    /// Regular with `A⁻¹ 1 > 0`.
    Positive,
}

fn classify_float(n: usize, entries: &[f64]) -> MatrixClass {
    let a = Matrix::from_vec(n, n, entries.to_vec());
    let lu = match Lu::new(&a) {
        Some(lu) => lu,
        None => return MatrixClass::Singular,
    };
    // integer determinant: nonzero means at least 1 in magnitude
    let det = lu.det().abs();
    if det < 0.5 {
        return MatrixClass::Singular;
    }
    // each coordinate of A⁻¹1 is an integer over det
    let x = lu.solve(&vec![1.0; n]);
    if x.iter().all(|&xi| xi > 0.5 / det) {
        MatrixClass::Positive
    } else {
        MatrixClass::Regular
    }
}

fn classify_exact(n: usize, rows: &[Vec<i64>]) -> MatrixClass {
    let det = det_exact(rows);
    if det == 0 {
        return MatrixClass::Singular;
    }
    // Cramer: x_j = det(A with column j replaced by 1) / det
    for j in 0..n {
        let replaced: Vec<Vec<i64>> = rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r[j] = 1;
                r
            })
            .collect();
        let dj = det_exact(&replaced);
        if dj == 0 || (dj > 0) != (det > 0) {
            return MatrixClass::Regular;
        }
    }
    MatrixClass::Positive
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixRow {
    pub n: usize,
    pub draws: usize,
    pub regular: usize,
    pub p_regular: f64,
    pub positive: usize,
    /// P(A⁻¹1 > 0 | A regular).
    pub p_positive: f64,
    pub se: f64,
    /// `1 / 2^(n-1)`.
    pub reference: f64,
    pub ratio: f64,
}

const MATRIX_BATCH: usize = 1 << 14;

/// Monte Carlo over uniform 0/1 matrices: for each `n`, draws batches until
/// at least `regular_target` regular matrices are seen.
pub fn positive_solution_probability(ns: &[usize], regular_target: usize, seed: u64) -> Result<Vec<MatrixRow>> {
    let mut out = Vec::new();
    for &n in ns {
        if !(1..=24).contains(&n) {
            return Err(Error::InvalidArgument(format!("matrix size {n} out of range 1..=24")));
        }
        let root = trial_seed(seed, n as u64);
        let (mut draws, mut regular, mut positive) = (0usize, 0usize, 0usize);
        while regular < regular_target.max(1) {
            let base = draws;
            let (r, p) = (base..base + MATRIX_BATCH)
                .into_par_iter()
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(root, i as u64));
                    let entries: Vec<f64> = (0..n * n).map(|_| f64::from(u8::from(rng.gen::<bool>()))).collect();
                    match classify_float(n, &entries) {
                        MatrixClass::Singular => (0, 0),
                        MatrixClass::Regular => (1, 0),
                        MatrixClass::Positive => (1, 1),
                    }
                })
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            draws += MATRIX_BATCH;
            regular += r;
            positive += p;
        }
        let est = Estimate::new(positive, regular);
        let reference = 0.5f64.powi(n as i32 - 1);
        out.push(MatrixRow {
            n,
            draws,
            regular,
            p_regular: regular as f64 / draws as f64,
            positive,
            p_positive: est.p,
            se: est.se,
            reference,
            ratio: est.p / reference,
        });
    }
    Ok(out)
}

/// Exact counts over all `2^(n²)` binary matrices.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MnReport {
    pub n: usize,
    pub matrices: u64,
    pub regular: u64,
    /// Regular with `A⁻¹ 1 > 0`.
    pub m_n: u64,
    /// `M_n / n!`.
    pub b_nn: u64,
    pub divisible: bool,
    /// Size-`n` collections in the catalog, when one was given.
    pub catalog_b_nn: Option<usize>,
    /// `M_n / 2^(n² − n + 1)`.
    pub asymptotic_ratio: f64,
}

impl MnReport {
    pub fn matches_catalog(&self) -> Option<bool> {
        self.catalog_b_nn
            .map(|c| self.divisible && c as u64 == self.b_nn)
    }
}

pub const MAX_EXHAUSTIVE_MATRIX: usize = 4;

/// Exhaustive count of binary `n × n` matrices that are invertible with a
/// positive solution of `A x = 1`.
pub fn exhaustive_mn(n: usize, catalog: Option<&MbcCatalog>) -> Result<MnReport> {
    if !(1..=MAX_EXHAUSTIVE_MATRIX).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "exhaustive matrix count needs 1 ≤ n ≤ {MAX_EXHAUSTIVE_MATRIX}, got {n}"
        )));
    }
    if let Some(c) = catalog {
        check_catalog(n, c)?;
    }
    let total = 1u64 << (n * n);
    let (regular, m_n) = (0..total)
        .into_par_iter()
        .map(|code| {
            let rows: Vec<Vec<i64>> = (0..n)
                .map(|r| (0..n).map(|c| (code >> (r * n + c) & 1) as i64).collect())
                .collect();
            match classify_exact(n, &rows) {
                MatrixClass::Singular => (0u64, 0u64),
                MatrixClass::Regular => (1, 0),
                MatrixClass::Positive => (1, 1),
            }
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let fact: u64 = (1..=n as u64).product();
    Ok(MnReport {
        n,
        matrices: total,
        regular,
        m_n,
        b_nn: m_n / fact,
        divisible: m_n % fact == 0,
        catalog_b_nn: catalog.map(|c| c.facets().filter(|b| b.len() == n).count()),
        asymptotic_ratio: m_n as f64 / 2f64.powi((n * n - n + 1) as i32),
    })
}

/// `x` rounded to `digits` significant digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() || digits == 0 {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

/// Rounds every float in a JSON tree to `digits` significant digits.
pub fn round_json(value: &mut serde_json::Value, digits: usize) {
    use serde_json::Value;
    match value {
        Value::Number(num) if num.is_f64() => {
            let x = round_sig(num.as_f64().expect("f64"), digits);
            if let Some(r) = serde_json::Number::from_f64(x) {
                *num = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|v| round_json(v, digits)),
        Value::Object(map) => map.values_mut().for_each(|v| round_json(v, digits)),
        _ => {}
    }
}

/// Writes flat `rows` as CSV with a header line, optionally rounding floats.
pub fn write_csv<T: Serialize, W: std::io::Write>(rows: &[T], out: W, sig_digits: Option<usize>) -> Result<()> {
    use serde_json::Value;
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_writer(out);
    for (k, row) in rows.iter().enumerate() {
        let mut value = serde_json::to_value(row)?;
        if let Some(d) = sig_digits {
            round_json(&mut value, d);
        }
        let Value::Object(map) = value else {
            return Err(Error::InvalidArgument("CSV rows must be structs".into()));
        };
        if k == 0 {
            w.write_record(map.keys()).map_err(csv_err)?;
        }
        let fields = map.values().map(|v| match v {
            Value::Null => String::new(),
            Value::String(s) => s.clone(),
            other => other.to_string(),
        });
        w.write_record(fields).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
