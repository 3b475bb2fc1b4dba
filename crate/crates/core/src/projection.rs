//! Closest balanced game.
//!
//! [`clobis`] alternates a least-squares solve over the currently active
//! coalitions with an update of the active family until the family is
//! stable. [`dykstra_project`] computes the same projection by cyclic
//! projections onto the facet half-spaces and serves as an oracle.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{coalition_sums, Coalition, Game};
use crate::mbc::{BalancedCollection, MbcCatalog};
use crate::numerics::{self, Matrix};

/// Default slack in the test `x(S) ≤ v(S) + tie_tol`.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITERS: usize = 200;
pub const DEFAULT_MAX_RESTARTS: usize = 50;

/// Positive weights γ_S on the proper coalitions.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightProfile {
    n: usize,
    /// Dense by bitmask; entries for ∅ and N are unused and kept at 0.
    gamma: Vec<f64>,
}

impl WeightProfile {
    pub fn uniform(n: usize) -> Self {
        let size = 1usize << n;
        let mut gamma = vec![1.0; size];
        gamma[0] = 0.0;
        gamma[size - 1] = 0.0;
        WeightProfile { n, gamma }
    }

    /// Uniform weights overridden on the given coalitions.
    pub fn from_map<I>(n: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Coalition, f64)>,
    {
        Game::zero(n)?;
        let mut w = WeightProfile::uniform(n);
        for (s, g) in entries {
            if !s.is_proper(n) {
                return Err(Error::InvalidArgument(format!(
                    "weight given for non-proper coalition {s:?}"
                )));
            }
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "weight for {} must be positive and finite, got {g}",
                    s.label(n)
                )));
            }
            w.gamma[s.index()] = g;
        }
        Ok(w)
    }

    /// Parses `{"n": 4, "weights": {"12": 2.0, ...}}`; omitted coalitions weigh 1.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            n: usize,
            #[serde(default)]
            weights: BTreeMap<String, f64>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        let entries = raw
            .weights
            .iter()
            .map(|(k, g)| Ok((Coalition::parse_label(k, raw.n)?, *g)))
            .collect::<Result<Vec<_>>>()?;
        WeightProfile::from_map(raw.n, entries)
    }

    pub fn players(&self) -> usize {
        self.n
    }

    pub fn gamma(&self, s: Coalition) -> f64 {
        self.gamma[s.index()]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        WeightProfile {
            n: self.n,
            gamma: self.gamma.iter().map(|g| g * factor).collect(),
        }
    }

    fn check(&self, game: &Game) -> Result<()> {
        if self.n != game.players() {
            return Err(Error::SizeMismatch {
                expected: game.players(),
                found: self.n,
            });
        }
        Ok(())
    }
}

/// A family of proper coalitions stored as a bitset over bitmasks.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ActiveFamily {
    n: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for ActiveFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.members()).finish()
    }
}

impl ActiveFamily {
    pub fn empty(n: usize) -> Self {
        ActiveFamily {
            n,
            words: vec![0; (1usize << n).div_ceil(64)],
        }
    }

    /// Every proper coalition.
    pub fn all_proper(n: usize) -> Self {
        let mut fam = ActiveFamily::empty(n);
        for s in 1..(1usize << n) - 1 {
            fam.set(s);
        }
        fam
    }

    pub fn from_coalitions(n: usize, coalitions: &[Coalition]) -> Result<Self> {
        let mut fam = ActiveFamily::empty(n);
        for &s in coalitions {
            if !s.is_proper(n) {
                return Err(Error::InvalidCoalition { bits: s.0, n });
            }
            fam.set(s.index());
        }
        Ok(fam)
    }

    /// Each proper coalition included independently with probability 1/2.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut fam = ActiveFamily::empty(n);
        for s in 1..(1usize << n) - 1 {
            if rng.gen::<bool>() {
                fam.set(s);
            }
        }
        fam
    }

    fn set(&mut self, s: usize) {
        self.words[s / 64] |= 1 << (s % 64);
    }

    pub fn players(&self) -> usize {
        self.n
    }

    pub fn contains(&self, s: Coalition) -> bool {
        let i = s.index();
        i < 1 << self.n && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Members in ascending bitmask order.
    pub fn members(&self) -> impl Iterator<Item = Coalition> + '_ {
        self.words.iter().enumerate().flat_map(|(k, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    None
                } else {
                    let b = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    Some(Coalition((k * 64 + b) as u32))
                }
            })
        })
    }

    /// Labels in canonical (size, bitmask) order.
    pub fn labels(&self) -> Vec<String> {
        let mut m: Vec<Coalition> = self.members().collect();
        m.sort_by_key(|s| s.canonical_key());
        m.into_iter().map(|s| s.label(self.n)).collect()
    }
}

impl Serialize for ActiveFamily {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let labels = self.labels();
        let mut seq = serializer.serialize_seq(Some(labels.len()))?;
        for l in &labels {
            seq.serialize_element(l)?;
        }
        seq.end()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    CycleUnresolved,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::CycleUnresolved => "cycle_unresolved",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A repeated family: `family` was produced at iteration `first` and again at `repeat`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CycleEvent {
    /// 0 for the run started from all proper coalitions.
    pub run: usize,
    pub first: usize,
    pub repeat: usize,
    pub family: ActiveFamily,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClobisOptions {
    /// Linear solves allowed per run.
    pub max_iters: usize,
    pub max_restarts: usize,
    pub seed: u64,
    pub tie_tol: f64,
    /// Relative singular value cutoff for the pseudoinverse; `None` uses the default.
    pub pinv_tol: Option<f64>,
}

impl Default for ClobisOptions {
    fn default() -> Self {
        ClobisOptions {
            max_iters: DEFAULT_MAX_ITERS,
            max_restarts: DEFAULT_MAX_RESTARTS,
            seed: 0,
            tie_tol: DEFAULT_TIE_TOL,
            pinv_tol: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionResult {
    pub v_star: Game,
    pub x_star: Vec<f64>,
    pub active_family: ActiveFamily,
    /// Linear solves in the returned run.
    pub iterations: usize,
    pub restarts: usize,
    /// Solves over all runs.
    pub total_iterations: usize,
    pub objective: f64,
    pub status: Status,
    pub cycles: Vec<CycleEvent>,
    pub seed: u64,
    pub tie_tol: f64,
}

impl ProjectionResult {
    pub fn is_converged(&self) -> bool {
        self.status == Status::Converged
    }

    pub fn players(&self) -> usize {
        self.v_star.players()
    }
}

/// Superset sums of `f` evaluated in place: `f[T] ← Σ_{S ⊇ T} f[S]`.
fn superset_zeta(f: &mut [f64], n: usize) {
    for i in 0..n {
        let bit = 1usize << i;
        for s in 0..f.len() {
            if s & bit == 0 {
                f[s] += f[s | bit];
            }
        }
    }
}

/// The n × n stationarity system for minimising
/// `Σ_{S∈A} γ_S (v(S) − x(S))²` subject to `x(N) = v(N)`.
///
/// Rows `1..n` equate player 1's weighted active sum with player `i`'s;
/// the last row is the efficiency constraint.
pub fn clobis_system(v: &Game, gamma: &WeightProfile, family: &ActiveFamily) -> (Matrix, Vec<f64>) {
    let n = v.players();
    let size = 1usize << n;
    let mut f = vec![0.0; size];
    let mut fv = vec![0.0; size];
    for s in family.members() {
        let g = gamma.gamma(s);
        f[s.index()] = g;
        fv[s.index()] = g * v.value(s);
    }
    superset_zeta(&mut f, n);
    superset_zeta(&mut fv, n);
    let h = |i: usize, j: usize| f[(1 << i) | (1 << j)];
    let g = |i: usize| fv[1 << i];

    let mut m = Matrix::zeros(n, n);
    let mut b = vec![0.0; n];
    for i in 1..n {
        for j in 0..n {
            m[(i - 1, j)] = h(0, j) - h(i, j);
        }
        b[i - 1] = g(0) - g(i);
    }
    // Scaling the efficiency row leaves the solution set unchanged and keeps
    // it comparable in magnitude with the others.
    let scale = ((0..n).map(|i| h(i, i)).sum::<f64>() / n as f64).max(1.0);
    for j in 0..n {
        m[(n - 1, j)] = scale;
    }
    b[n - 1] = scale * v.grand_value();
    (m, b)
}

/// One CLOBIS solve: the minimum-norm solution of [`clobis_system`].
pub fn clobis_step(
    v: &Game,
    gamma: &WeightProfile,
    family: &ActiveFamily,
    pinv_tol: Option<f64>,
) -> Result<Vec<f64>> {
    let (m, b) = clobis_system(v, gamma, family);
    Ok(numerics::solve(&m, &b, pinv_tol)?.x)
}

/// `{S proper : x(S) ≤ v(S) + tie_tol}`.
pub fn next_family(v: &Game, x: &[f64], tie_tol: f64) -> ActiveFamily {
    let n = v.players();
    let sums = coalition_sums(x);
    let values = v.values();
    let mut fam = ActiveFamily::empty(n);
    for s in 1..(1usize << n) - 1 {
        if sums[s] <= values[s] + tie_tol {
            fam.set(s);
        }
    }
    fam
}

/// `Σ_S γ_S max(v(S) − x(S), 0)²` over proper coalitions.
pub fn objective_g(v: &Game, gamma: &WeightProfile, x: &[f64]) -> f64 {
    let n = v.players();
    let sums = coalition_sums(x);
    (1..(1usize << n) - 1)
        .map(|s| {
            let d = (v.values()[s] - sums[s]).max(0.0);
            gamma.gamma[s] * d * d
        })
        .sum()
}

/// The game `min(x(S), v(S))` on proper coalitions with `v(N)` kept.
pub fn truncated_game(v: &Game, x: &[f64]) -> Game {
    let n = v.players();
    let size = 1usize << n;
    let sums = coalition_sums(x);
    let mut values: Vec<f64> = v.values().to_vec();
    for s in 1..size - 1 {
        values[s] = values[s].min(sums[s]);
    }
    Game::from_values(n, values).expect("finite by construction")
}

enum RunEnd {
    Converged { x: Vec<f64>, family: ActiveFamily },
    Cycle(CycleEvent),
    Exhausted,
}

struct Run {
    end: RunEnd,
    iterations: usize,
    best: Option<(f64, Vec<f64>, ActiveFamily)>,
}

fn run_from(
    v: &Game,
    gamma: &WeightProfile,
    start: ActiveFamily,
    run: usize,
    opts: &ClobisOptions,
) -> Result<Run> {
    let mut seen: HashMap<ActiveFamily, usize> = HashMap::new();
    let mut family = start;
    seen.insert(family.clone(), 0);
    let mut best: Option<(f64, Vec<f64>, ActiveFamily)> = None;
    for k in 1..=opts.max_iters {
        let x = clobis_step(v, gamma, &family, opts.pinv_tol)?;
        let next = next_family(v, &x, opts.tie_tol);
        if next == family {
            return Ok(Run {
                end: RunEnd::Converged { x, family: next },
                iterations: k,
                best,
            });
        }
        let obj = objective_g(v, gamma, &x);
        if best.as_ref().is_none_or(|(b, _, _)| obj < *b) {
            best = Some((obj, x, next.clone()));
        }
        if let Some(&first) = seen.get(&next) {
            return Ok(Run {
                end: RunEnd::Cycle(CycleEvent {
                    run,
                    first,
                    repeat: k,
                    family: next,
                }),
                iterations: k,
                best,
            });
        }
        seen.insert(next.clone(), k);
        family = next;
    }
    Ok(Run {
        end: RunEnd::Exhausted,
        iterations: opts.max_iters,
        best,
    })
}

/// Closest balanced game to `v` under the γ-weighted distance, with `v(N)` fixed.
///
/// Starts from all proper coalitions; when a family repeats, restarts from
/// a random family drawn from `opts.seed`. If every run cycles the
/// best-objective iterate is returned with status `cycle_unresolved`.
pub fn clobis(v: &Game, gamma: &WeightProfile, opts: &ClobisOptions) -> Result<ProjectionResult> {
    gamma.check(v)?;
    let n = v.players();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut cycles = Vec::new();
    let mut total = 0;
    let mut best: Option<(f64, Vec<f64>, ActiveFamily, usize)> = None;

    for run in 0..=opts.max_restarts {
        let start = if run == 0 {
            ActiveFamily::all_proper(n)
        } else {
            ActiveFamily::random(n, &mut rng)
        };
        let r = run_from(v, gamma, start, run, opts)?;
        total += r.iterations;
        match r.end {
            RunEnd::Converged { x, family } => {
                let objective = objective_g(v, gamma, &x);
                return Ok(ProjectionResult {
                    v_star: truncated_game(v, &x),
                    x_star: x,
                    active_family: family,
                    iterations: r.iterations,
                    restarts: run,
                    total_iterations: total,
                    objective,
                    status: Status::Converged,
                    cycles,
                    seed: opts.seed,
                    tie_tol: opts.tie_tol,
                });
            }
            RunEnd::Cycle(ev) => cycles.push(ev),
            RunEnd::Exhausted => {}
        }
        if let Some((obj, x, fam)) = r.best {
            if best.as_ref().is_none_or(|b| obj < b.0) {
                best = Some((obj, x, fam, r.iterations));
            }
        }
    }

    let (objective, x, family, iterations) = best.expect("every run performs at least one solve");
    Ok(ProjectionResult {
        v_star: truncated_game(v, &x),
        x_star: x,
        active_family: family,
        iterations,
        restarts: opts.max_restarts,
        total_iterations: total,
        objective,
        status: Status::CycleUnresolved,
        cycles,
        seed: opts.seed,
        tie_tol: opts.tie_tol,
    })
}

/// [`clobis`] with unit weights and default options.
pub fn project(v: &Game) -> Result<ProjectionResult> {
    clobis(v, &WeightProfile::uniform(v.players()), &ClobisOptions::default())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DykstraOptions {
    /// Stop when a full sweep moves the iterate less than this (max-norm).
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for DykstraOptions {
    fn default() -> Self {
        DykstraOptions {
            tol: 1e-12,
            max_sweeps: 2_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DykstraResult {
    pub v_star: Game,
    pub sweeps: usize,
    pub converged: bool,
    pub last_change: f64,
}

/// Weighted projection of `v` onto `{w : w(N) = v(N), Σ λ_S w(S) ≤ w(N) for every facet}`
/// by Dykstra's cyclic half-space projections.
pub fn dykstra_project(
    v: &Game,
    gamma: &WeightProfile,
    catalog: &MbcCatalog,
    opts: &DykstraOptions,
) -> Result<DykstraResult> {
    gamma.check(v)?;
    let n = v.players();
    if catalog.players() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: catalog.players(),
        });
    }
    let alpha = v.grand_value();

    struct HalfSpace {
        idx: Vec<usize>,
        a: Vec<f64>,
        // Γ⁻¹a / (aᵀ Γ⁻¹ a)
        step: Vec<f64>,
        corr: Vec<f64>,
    }
    let mut spaces: Vec<HalfSpace> = catalog
        .facets()
        .map(|c| {
            let idx: Vec<usize> = c.coalitions().iter().map(|s| s.index()).collect();
            let a = c.weights_f64();
            let ga: Vec<f64> = idx.iter().zip(&a).map(|(&s, l)| l / gamma.gamma[s]).collect();
            let denom: f64 = a.iter().zip(&ga).map(|(l, g)| l * g).sum();
            let step = ga.iter().map(|g| g / denom).collect();
            let corr = vec![0.0; idx.len()];
            HalfSpace { idx, a, step, corr }
        })
        .collect();

    let mut w: Vec<f64> = v.values().to_vec();
    let mut sweeps = 0;
    let mut last_change = f64::INFINITY;
    let mut converged = spaces.is_empty();
    while !converged && sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut change = 0.0f64;
        for h in spaces.iter_mut() {
            // y = w + p; w' = P(y); p = y − w'
            let mut excess = -alpha;
            for ((&s, a), p) in h.idx.iter().zip(&h.a).zip(&h.corr) {
                excess += a * (w[s] + p);
            }
            let t = excess.max(0.0);
            for ((&s, st), p) in h.idx.iter().zip(&h.step).zip(h.corr.iter_mut()) {
                let y = w[s] + *p;
                let new = y - t * st;
                change = change.max((new - w[s]).abs());
                *p = y - new;
                w[s] = new;
            }
        }
        last_change = change;
        converged = change <= opts.tol;
    }
    Ok(DykstraResult {
        v_star: Game::from_values(n, w)?,
        sweeps,
        converged,
        last_change,
    })
}

/// Checks `v* ≤ v`, `v* = min(x*, v)` on proper coalitions, `v*(N) = v(N)`
/// and `x* ∈ C(v*)`, all within `tol`.
pub fn verify_result(v: &Game, r: &ProjectionResult, tol: f64) -> std::result::Result<(), String> {
    let n = v.players();
    let size = 1usize << n;
    if r.v_star.players() != n || r.x_star.len() != n {
        return Err("size mismatch".into());
    }
    let sums = coalition_sums(&r.x_star);
    let (vs, vv) = (r.v_star.values(), v.values());
    if vs[size - 1] != vv[size - 1] {
        return Err(format!("v*(N) = {} differs from v(N) = {}", vs[size - 1], vv[size - 1]));
    }
    if (sums[size - 1] - vv[size - 1]).abs() > tol {
        return Err(format!("x*(N) = {} differs from v(N)", sums[size - 1]));
    }
    for s in 1..size - 1 {
        let label = || Coalition(s as u32).label(n);
        if vs[s] > vv[s] + tol {
            return Err(format!("v*({}) exceeds v", label()));
        }
        if (vs[s] - sums[s].min(vv[s])).abs() > tol {
            return Err(format!("v*({}) is not min(x*(S), v(S))", label()));
        }
        if sums[s] < vs[s] - tol {
            return Err(format!("x* violates the core constraint of {}", label()));
        }
    }
    Ok(())
}

/// `Σ λ_S v*(S) ≥ v*(N) − tol`.
pub fn is_tight(v_star: &Game, collection: &BalancedCollection, tol: f64) -> bool {
    collection.excess(v_star) >= -tol
}

/// Whether the facet of `collection` contains the projection: every member
/// coalition is in the final active family.
pub fn facet_membership(result: &ProjectionResult, collection: &BalancedCollection) -> Result<bool> {
    if !result.is_converged() {
        return Err(Error::NotCertified(result.status.to_string()));
    }
    Ok(collection
        .coalitions()
        .iter()
        .all(|&s| result.active_family.contains(s)))
}
