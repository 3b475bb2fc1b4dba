//! Minimal balanced collections.
//!
//! A collection of coalitions is minimal balanced exactly when its indicator
//! vectors are linearly independent and `M λ = 1` has a (then unique)
//! strictly positive solution. Enumeration walks coalition subsets in
//! increasing bitmask order, pruning as soon as a column becomes dependent,
//! and certifies every candidate with exact rational arithmetic.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::game::{Coalition, Game};
use crate::numerics::{self, Matrix};

pub type Rational = Ratio<i64>;

/// Largest `n` enumerated without the long-run flag.
pub const MAX_QUICK_PLAYERS: usize = 5;
/// Largest `n` the exhaustive enumerator accepts at all.
pub const MAX_EXHAUSTIVE_PLAYERS: usize = 6;

const FORMAT_HEADER: &str = "mbc-catalog v1";
const GENERATOR: &str = concat!("closest-balanced ", env!("CARGO_PKG_VERSION"), " dfs-exact");

/// Positivity threshold for floating-point balancing weights.
pub const WEIGHT_POSITIVITY: f64 = 1e-12;
/// Residual tolerance for floating-point balancing weights.
pub const WEIGHT_RESIDUAL: f64 = 1e-10;

/// A minimal balanced collection with its (unique) balancing weights.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BalancedCollection {
    coalitions: Vec<Coalition>,
    weights: Vec<Rational>,
}

impl BalancedCollection {
    /// Certifies `coalitions` as minimal balanced on `n` players; the
    /// coalitions are stored in canonical (size, bitmask) order.
    pub fn new(n: usize, coalitions: &[Coalition]) -> Option<Self> {
        let mut sorted = coalitions.to_vec();
        sorted.sort_by_key(|s| s.canonical_key());
        sorted.dedup();
        if sorted.len() != coalitions.len() {
            return None;
        }
        let weights = exact_balancing_weights(n, &sorted)?;
        Some(BalancedCollection {
            coalitions: sorted,
            weights,
        })
    }

    pub fn coalitions(&self) -> &[Coalition] {
        &self.coalitions
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn weights_f64(&self) -> Vec<f64> {
        self.weights.iter().map(ratio_to_f64).collect()
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }

    /// The collection `{N}`.
    pub fn is_trivial(&self, n: usize) -> bool {
        self.coalitions.len() == 1 && self.coalitions[0] == Coalition::grand(n)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Coalition, Rational)> + '_ {
        self.coalitions.iter().copied().zip(self.weights.iter().copied())
    }

    /// `Σ λ_S v(S) − v(N)`; positive means the inequality is violated.
    pub fn excess(&self, game: &Game) -> f64 {
        self.coalitions
            .iter()
            .zip(&self.weights)
            .map(|(&s, w)| ratio_to_f64(w) * game.value(s))
            .sum::<f64>()
            - game.grand_value()
    }

    /// Human-readable form, e.g. `{12,13,23}`.
    pub fn label(&self, n: usize) -> String {
        let parts: Vec<_> = self.coalitions.iter().map(|s| s.label(n)).collect();
        format!("{{{}}}", parts.join(","))
    }

    fn sort_key(&self) -> (usize, Vec<(u32, u32)>) {
        (
            self.coalitions.len(),
            self.coalitions.iter().map(|s| s.canonical_key()).collect(),
        )
    }
}

fn ratio_to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn indicator_matrix(n: usize, coalitions: &[Coalition]) -> Matrix {
    let mut m = Matrix::zeros(n, coalitions.len());
    for (j, s) in coalitions.iter().enumerate() {
        for i in s.members() {
            m[(i, j)] = 1.0;
        }
    }
    m
}

/// Floating-point balancing weights: `Some(λ)` iff the indicator matrix has
/// full column rank and the least-squares solution of `M λ = 1` is exact and
/// strictly positive.
pub fn balancing_weights(n: usize, coalitions: &[Coalition]) -> Option<Vec<f64>> {
    if coalitions.is_empty() || coalitions.iter().any(|s| !s.is_valid(n)) {
        return None;
    }
    let m = indicator_matrix(n, coalitions);
    if numerics::rank(&m, None).ok()? < coalitions.len() {
        return None;
    }
    let pinv = numerics::pseudoinverse(&m, None).ok()?;
    let lambda = pinv.mul_vec(&vec![1.0; n]);
    let residual = m
        .mul_vec(&lambda)
        .iter()
        .fold(0.0f64, |acc, r| acc.max((r - 1.0).abs()));
    if residual > WEIGHT_RESIDUAL || lambda.iter().any(|&l| l <= WEIGHT_POSITIVITY) {
        return None;
    }
    Some(lambda)
}

/// Exact counterpart of [`balancing_weights`] over the rationals.
pub fn exact_balancing_weights(n: usize, coalitions: &[Coalition]) -> Option<Vec<Rational>> {
    let m = coalitions.len();
    if m == 0 || m > n || coalitions.iter().any(|s| !s.is_valid(n)) {
        return None;
    }
    // Augmented n × (m + 1) system [M | 1].
    let zero = Rational::from_integer(0);
    let one = Rational::from_integer(1);
    let mut a: Vec<Vec<Rational>> = (0..n)
        .map(|i| {
            let mut row: Vec<Rational> = coalitions
                .iter()
                .map(|s| if s.contains(i) { one } else { zero })
                .collect();
            row.push(one);
            row
        })
        .collect();
    let mut pivot_row = 0;
    for col in 0..m {
        let p = (pivot_row..n).find(|&r| a[r][col] != zero)?;
        a.swap(pivot_row, p);
        let inv = one / a[pivot_row][col];
        for v in a[pivot_row].iter_mut() {
            *v *= inv;
        }
        for r in 0..n {
            if r != pivot_row && a[r][col] != zero {
                let f = a[r][col];
                for c in col..=m {
                    let t = a[pivot_row][c];
                    a[r][c] -= f * t;
                }
            }
        }
        pivot_row += 1;
    }
    // Consistency: remaining rows must read 0 = 0.
    if a[m..].iter().any(|row| row[m] != zero) {
        return None;
    }
    let lambda: Vec<Rational> = (0..m).map(|j| a[j][m]).collect();
    if lambda.iter().any(|l| *l <= zero) {
        return None;
    }
    Some(lambda)
}

/// Options for [`enumerate_mbc_with`].
#[derive(Clone, Copy, Debug, Default)]
pub struct EnumerateOptions {
    pub include_trivial: bool,
    /// Required for `n = 6` (tens of millions of candidate subsets).
    pub allow_long: bool,
}

/// All minimal balanced collections on `n` players.
#[derive(Clone, Debug, PartialEq)]
pub struct MbcCatalog {
    n: usize,
    include_trivial: bool,
    collections: Vec<BalancedCollection>,
    generator: String,
    verification: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CatalogSummary {
    pub n: usize,
    pub include_trivial: bool,
    pub collections: usize,
    pub excluding_trivial: usize,
    pub including_trivial: usize,
    pub by_size: BTreeMap<usize, usize>,
    pub generator: String,
    pub verification: String,
}

impl MbcCatalog {
    /// Builds a catalog from already certified collections; sorts canonically
    /// and rejects duplicates.
    pub fn from_collections(
        n: usize,
        mut collections: Vec<BalancedCollection>,
        include_trivial: bool,
    ) -> Result<Self> {
        collections.sort_by_cached_key(BalancedCollection::sort_key);
        if let Some(w) = collections.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::WeightVerification {
                index: w + 1,
                reason: "duplicate collection".into(),
            });
        }
        let has_trivial = collections.iter().any(|c| c.is_trivial(n));
        if has_trivial != include_trivial {
            return Err(Error::InvalidArgument(format!(
                "include_trivial = {include_trivial} but catalog {} the trivial collection",
                if has_trivial { "contains" } else { "lacks" }
            )));
        }
        Ok(MbcCatalog {
            n,
            include_trivial,
            collections,
            generator: GENERATOR.to_string(),
            verification: "exact-rational".to_string(),
        })
    }

    pub fn players(&self) -> usize {
        self.n
    }

    pub fn includes_trivial(&self) -> bool {
        self.include_trivial
    }

    pub fn collections(&self) -> &[BalancedCollection] {
        &self.collections
    }

    pub fn len(&self) -> usize {
        self.collections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.collections.is_empty()
    }

    /// Collections other than `{N}`, i.e. the facets of the balanced cone.
    pub fn facets(&self) -> impl Iterator<Item = &BalancedCollection> {
        let n = self.n;
        self.collections.iter().filter(move |c| !c.is_trivial(n))
    }

    /// Histogram of collection sizes.
    pub fn count_by_size(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for c in &self.collections {
            *counts.entry(c.len()).or_insert(0) += 1;
        }
        counts
    }

    pub fn summary(&self) -> CatalogSummary {
        let excluding = self.facets().count();
        CatalogSummary {
            n: self.n,
            include_trivial: self.include_trivial,
            collections: self.len(),
            excluding_trivial: excluding,
            including_trivial: excluding + 1,
            by_size: self.count_by_size(),
            generator: self.generator.clone(),
            verification: self.verification.clone(),
        }
    }

    pub fn position(&self, collection: &BalancedCollection) -> Option<usize> {
        self.collections.iter().position(|c| c == collection)
    }

    /// Serialises to the line-oriented cache format.
    pub fn to_text(&self) -> String {
        let mut body = String::new();
        writeln!(body, "{FORMAT_HEADER}").unwrap();
        writeln!(body, "n {}", self.n).unwrap();
        writeln!(body, "include_trivial {}", u8::from(self.include_trivial)).unwrap();
        writeln!(body, "generator {}", self.generator).unwrap();
        writeln!(body, "verification {}", self.verification).unwrap();
        writeln!(body, "count {}", self.collections.len()).unwrap();
        for c in &self.collections {
            write!(body, "c {}", c.len()).unwrap();
            for (s, w) in c.iter() {
                write!(body, " {} {}/{}", s.bits(), w.numer(), w.denom()).unwrap();
            }
            body.push('\n');
        }
        let digest = hex_digest(body.as_bytes());
        writeln!(body, "checksum sha256 {digest}").unwrap();
        body
    }

    /// Parses the cache format, verifying checksum and per-player weight sums.
    pub fn from_text(text: &str) -> Result<Self> {
        let corrupt = |reason: String| Error::CorruptCatalog {
            path: Default::default(),
            reason,
        };
        let split = text
            .rfind("checksum sha256 ")
            .ok_or_else(|| corrupt("missing checksum line".into()))?;
        let (body, trailer) = text.split_at(split);
        let stored = trailer
            .trim_start_matches("checksum sha256 ")
            .trim()
            .to_string();
        let computed = hex_digest(body.as_bytes());
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }

        let mut lines = body.lines();
        if lines.next() != Some(FORMAT_HEADER) {
            return Err(corrupt("unsupported header".into()));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| corrupt(format!("missing {name}")))?;
            line.strip_prefix(name)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| corrupt(format!("expected {name}, found {line:?}")))
        };
        let n: usize = field("n")?.parse().map_err(|_| corrupt("bad n".into()))?;
        let include_trivial = match field("include_trivial")?.as_str() {
            "0" => false,
            "1" => true,
            other => return Err(corrupt(format!("bad include_trivial {other:?}"))),
        };
        let generator = field("generator")?;
        let verification = field("verification")?;
        let count: usize = field("count")?
            .parse()
            .map_err(|_| corrupt("bad count".into()))?;
        if !(1..=crate::game::MAX_PLAYERS).contains(&n) {
            return Err(Error::PlayerCount(n));
        }

        let mut collections = Vec::with_capacity(count);
        for (index, line) in lines.enumerate() {
            let mut tokens = line.split_whitespace();
            if tokens.next() != Some("c") {
                return Err(corrupt(format!("line {index}: expected collection")));
            }
            let size: usize = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| corrupt(format!("line {index}: bad size")))?;
            let mut coalitions = Vec::with_capacity(size);
            let mut weights = Vec::with_capacity(size);
            for _ in 0..size {
                let bits: u32 = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| corrupt(format!("line {index}: bad coalition")))?;
                let w = tokens
                    .next()
                    .and_then(parse_ratio)
                    .ok_or_else(|| corrupt(format!("line {index}: bad weight")))?;
                coalitions.push(Coalition(bits));
                weights.push(w);
            }
            if tokens.next().is_some() {
                return Err(corrupt(format!("line {index}: trailing tokens")));
            }
            verify_weights(n, &coalitions, &weights)
                .map_err(|reason| Error::WeightVerification { index, reason })?;
            collections.push(BalancedCollection {
                coalitions,
                weights,
            });
        }
        if collections.len() != count {
            return Err(corrupt(format!(
                "count says {count}, found {}",
                collections.len()
            )));
        }
        let mut catalog = MbcCatalog::from_collections(n, collections, include_trivial)?;
        catalog.generator = generator;
        catalog.verification = verification;
        Ok(catalog)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        MbcCatalog::from_text(&text).map_err(|e| match e {
            Error::CorruptCatalog { reason, .. } => Error::CorruptCatalog {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
}

fn parse_ratio(token: &str) -> Option<Rational> {
    let (num, den) = token.split_once('/')?;
    let den: i64 = den.parse().ok()?;
    if den == 0 {
        return None;
    }
    Some(Rational::new(num.parse().ok()?, den))
}

/// Exact check of positivity, per-player sums and uniqueness of the weights.
fn verify_weights(n: usize, coalitions: &[Coalition], weights: &[Rational]) -> Result<(), String> {
    if coalitions.is_empty() {
        return Err("empty collection".into());
    }
    if let Some(s) = coalitions.iter().find(|s| !s.is_valid(n)) {
        return Err(format!("coalition {} out of range", s.bits()));
    }
    if weights.iter().any(|w| *w <= Rational::from_integer(0)) {
        return Err("nonpositive weight".into());
    }
    for i in 0..n {
        let total: Rational = coalitions
            .iter()
            .zip(weights)
            .filter(|(s, _)| s.contains(i))
            .map(|(_, w)| *w)
            .sum();
        if total != Rational::from_integer(1) {
            return Err(format!("player {} covered with weight {total}", i + 1));
        }
    }
    match exact_balancing_weights(n, coalitions) {
        Some(unique) if unique == weights => Ok(()),
        Some(_) => Err("weights differ from the unique solution".into()),
        None => Err("collection is not minimal balanced".into()),
    }
}

/// Exhaustive enumeration of the minimal balanced collections on `n ≤ 5` players.
pub fn enumerate_mbc(n: usize, include_trivial: bool) -> Result<MbcCatalog> {
    enumerate_mbc_with(
        n,
        EnumerateOptions {
            include_trivial,
            allow_long: false,
        },
    )
}

pub fn enumerate_mbc_with(n: usize, opts: EnumerateOptions) -> Result<MbcCatalog> {
    let max = if opts.allow_long {
        MAX_EXHAUSTIVE_PLAYERS
    } else {
        MAX_QUICK_PLAYERS
    };
    if !(2..=max).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "exhaustive enumeration supports 2 <= n <= {max} (n = 6 needs the long-run flag), got {n}"
        )));
    }
    let candidates: Vec<Coalition> = crate::game::proper_coalitions(n).collect();
    let mut collections: Vec<BalancedCollection> = (0..candidates.len())
        .into_par_iter()
        .flat_map_iter(|lead| {
            let mut walker = Walker::new(n, &candidates);
            walker.push(lead);
            walker.descend(lead + 1);
            walker.found
        })
        .collect();
    if opts.include_trivial {
        collections.push(BalancedCollection {
            coalitions: vec![Coalition::grand(n)],
            weights: vec![Rational::from_integer(1)],
        });
    }
    MbcCatalog::from_collections(n, collections, opts.include_trivial)
}

/// Depth-first walk over independent coalition sets.
struct Walker<'a> {
    n: usize,
    full: u32,
    candidates: &'a [Coalition],
    chosen: Vec<Coalition>,
    /// Echelon basis of the chosen indicator vectors: (pivot, integer row).
    basis: Vec<(usize, Vec<i64>)>,
    found: Vec<BalancedCollection>,
}

impl<'a> Walker<'a> {
    fn new(n: usize, candidates: &'a [Coalition]) -> Self {
        Walker {
            n,
            full: Coalition::grand(n).bits(),
            candidates,
            chosen: Vec::with_capacity(n),
            basis: Vec::with_capacity(n),
            found: Vec::new(),
        }
    }

    /// Reduces the indicator of candidate `idx` against the basis; pushes it
    /// and returns true when it is independent.
    fn push(&mut self, idx: usize) -> bool {
        let s = self.candidates[idx];
        let mut v: Vec<i64> = (0..self.n).map(|i| i64::from(s.contains(i))).collect();
        for (pivot, row) in &self.basis {
            let a = v[*pivot];
            if a != 0 {
                let b = row[*pivot];
                for (x, r) in v.iter_mut().zip(row) {
                    *x = *x * b - r * a;
                }
                normalise(&mut v);
            }
        }
        match v.iter().position(|&x| x != 0) {
            Some(pivot) => {
                self.basis.push((pivot, v));
                self.chosen.push(s);
                true
            }
            None => false,
        }
    }

    fn pop(&mut self) {
        self.basis.pop();
        self.chosen.pop();
    }

    fn descend(&mut self, start: usize) {
        let union = self.chosen.iter().fold(0, |acc, s| acc | s.bits());
        if self.chosen.len() >= 2 && union == self.full {
            if let Some(weights) = exact_balancing_weights(self.n, &self.chosen) {
                let mut coalitions = self.chosen.clone();
                let mut pairs: Vec<_> = coalitions.drain(..).zip(weights).collect();
                pairs.sort_by_key(|(s, _)| s.canonical_key());
                let (coalitions, weights) = pairs.into_iter().unzip();
                self.found.push(BalancedCollection {
                    coalitions,
                    weights,
                });
            }
        }
        if self.chosen.len() == self.n {
            return;
        }
        for idx in start..self.candidates.len() {
            if self.push(idx) {
                self.descend(idx + 1);
                self.pop();
            }
        }
    }
}

fn normalise(v: &mut [i64]) {
    let g = v.iter().fold(0i64, |g, &x| gcd(g, x.abs()));
    if g > 1 {
        for x in v.iter_mut() {
            *x /= g;
        }
    }
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Outcome of a Bondareva–Shapley balancedness test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BalanceCheck {
    pub balanced: bool,
    /// Index into the catalog of the collection with the largest excess.
    pub worst_index: Option<usize>,
    pub worst_collection: Option<String>,
    /// Largest `Σ λ_S v(S) − v(N)` over the facets.
    pub worst_excess: f64,
    pub tol: f64,
}

/// Default absolute tolerance used by [`is_balanced`]: `1e-9 · max(1, ‖v‖∞)`.
pub fn default_balance_tol(game: &Game) -> f64 {
    let scale = game.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    1e-9 * scale
}

/// Tests `Σ λ_S v(S) ≤ v(N) + tol` for every collection of the catalog.
pub fn is_balanced(game: &Game, catalog: &MbcCatalog, tol: Option<f64>) -> Result<BalanceCheck> {
    if game.players() != catalog.players() {
        return Err(Error::SizeMismatch {
            expected: catalog.players(),
            found: game.players(),
        });
    }
    let tol = tol.unwrap_or_else(|| default_balance_tol(game));
    let mut worst: Option<(usize, f64)> = None;
    for (i, c) in catalog.collections().iter().enumerate() {
        if c.is_trivial(catalog.players()) {
            continue;
        }
        let e = c.excess(game);
        if worst.is_none_or(|(_, w)| e > w) {
            worst = Some((i, e));
        }
    }
    let worst_excess = worst.map_or(f64::NEG_INFINITY, |(_, e)| e);
    Ok(BalanceCheck {
        balanced: worst_excess <= tol,
        worst_index: worst.map(|(i, _)| i),
        worst_collection: worst.map(|(i, _)| catalog.collections()[i].label(catalog.players())),
        worst_excess,
        tol,
    })
}
