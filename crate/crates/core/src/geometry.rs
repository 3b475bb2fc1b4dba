//! Faces of the polyhedron of balanced games.
//!
//! A projected game is located by the set of facet inequalities it satisfies
//! with equality; its core is a single point exactly when the coalitions of
//! those tight collections span `R^n`. For three players every face has a
//! closed-form family of games projecting onto it, encoded below as data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{Coalition, Game};
use crate::mbc::MbcCatalog;
use crate::numerics::{self, Matrix};

/// Default facet tightness tolerance: `1e-7 · max(1, |v*(N)|)`.
pub fn default_face_tol(v_star: &Game) -> f64 {
    1e-7 * v_star.grand_value().abs().max(1.0)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FaceSignature {
    /// One character per facet in catalog order, `1` = tight.
    pub bits: String,
    pub singleton: bool,
    /// Rank of the indicator vectors of all coalitions in tight collections.
    pub tight_union_rank: usize,
}

impl FaceSignature {
    pub fn tight(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .bytes()
            .enumerate()
            .filter(|(_, b)| *b == b'1')
            .map(|(i, _)| i)
    }

    pub fn is_interior(&self) -> bool {
        !self.bits.contains('1')
    }

    /// The bits rearranged so that position `k` holds facet `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> String {
        let b = self.bits.as_bytes();
        order.iter().map(|&i| b[i] as char).collect()
    }
}

/// Rank of the indicator vectors of `coalitions` on `n` players.
pub fn indicator_rank(n: usize, coalitions: &[Coalition]) -> usize {
    if coalitions.is_empty() {
        return 0;
    }
    let mut m = Matrix::zeros(coalitions.len(), n);
    for (r, s) in coalitions.iter().enumerate() {
        for i in s.members() {
            m[(r, i)] = 1.0;
        }
    }
    numerics::rank(&m, None).expect("0/1 matrices are well conditioned")
}

/// Tight facets of a balanced game and the resulting point-core test.
pub fn face_signature(v_star: &Game, catalog: &MbcCatalog, tol: Option<f64>) -> Result<FaceSignature> {
    let n = v_star.players();
    if catalog.players() != n {
        return Err(Error::SizeMismatch {
            expected: catalog.players(),
            found: n,
        });
    }
    let tol = tol.unwrap_or_else(|| default_face_tol(v_star));
    let mut bits = String::new();
    let mut union = 0u64;
    let mut coalitions = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for c in catalog.facets() {
        let e = c.excess(v_star);
        worst = worst.max(e);
        if e >= -tol {
            bits.push('1');
            for s in c.coalitions() {
                if union >> s.index() & 1 == 0 {
                    union |= 1 << s.index();
                    coalitions.push(*s);
                }
            }
        } else {
            bits.push('0');
        }
    }
    if worst > tol {
        return Err(Error::Unbalanced(worst));
    }
    let tight_union_rank = indicator_rank(n, &coalitions);
    Ok(FaceSignature {
        bits,
        singleton: tight_union_rank == n,
        tight_union_rank,
    })
}

/// Additive game with `v*(i) = v(i)` for `i < n` and `v*(n) = α − Σ_{j<n} v(j)`.
///
/// This is the orthogonal projection onto the lineality space of the
/// balanced games with grand value `α` when distances are measured on the
/// Möbius coefficients other than that of `{n}`.
pub fn lineality_projection(v: &Game, alpha: f64) -> Game {
    let n = v.players();
    let mut p: Vec<f64> = (0..n - 1).map(|i| v.value(Coalition::singleton(i))).collect();
    p.push(alpha - p.iter().sum::<f64>());
    Game::additive(&p).expect("n ≥ 2")
}

/// Facets of the three-player polyhedron, numbered 1 to 5 as in [`N3_ROWS`].
pub const N3_FACETS: [&str; 5] = ["{1,2,3}", "{1,23}", "{2,13}", "{3,12}", "{12,13,23}"];

/// Facet order of the published three-player face census (indices into the
/// canonical catalog order `{1,23}, {2,13}, {3,12}, {1,2,3}, {12,13,23}`).
pub const N3_CENSUS_ORDER: [usize; 5] = [0, 3, 4, 1, 2];

/// One face of the three-player polyhedron with the general game projecting onto it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct N3Row {
    pub name: &'static str,
    /// Facets (1-based, see [`N3_FACETS`]) whose intersection is the face.
    pub facets: &'static [usize],
    /// v(S) for S = 1, 2, 3, 12, 13, 23, 123 as linear forms in
    /// `b1 b2 N g1..g5 a12 a13 a23 a1 a2 a3`.
    pub coords: [&'static str; 7],
    pub point_core: bool,
}

const fn row(
    name: &'static str,
    facets: &'static [usize],
    coords: [&'static str; 7],
    point_core: bool,
) -> N3Row {
    N3Row {
        name,
        facets,
        coords,
        point_core,
    }
}

#[rustfmt::skip]
pub const N3_ROWS: [N3Row; 20] = [
    row("B1", &[1], ["b1+g1", "b2+g1", "-b1-b2+N+g1", "b1+b2-a12", "-b2+N-a13", "-b1+N-a23", "N"], true),
    row("B2", &[2], ["b1+g2", "b2", "-b1-b2+N-a2-a3", "b1+b2-a12+a2", "-b2+N-a13-a2", "-b1+N+g2", "N"], false),
    row("B3", &[3], ["b1", "b2+g3", "-b1-b2+N-a1-a3", "b1+b2-a12+a1", "-b2+N+g3", "-b1+N-a23-a1", "N"], false),
    row("B4", &[4], ["b1", "b2", "-b1-b2+N+g4-a1-a2", "b1+b2+g4+a1+a2", "-b2+N-a13-a2", "-b1+N-a23-a1", "N"], false),
    row("B5", &[5], ["b1", "b2", "-b1-b2+N-a1-a2-a3", "b1+b2+g5+a1+a2", "-b2+N+g5-a2", "-b1+N+g5-a1", "N"], true),
    row("B1B2", &[1, 2], ["b1+g1+g2", "b2+g1", "-b1-b2+N+g1", "b1+b2-a12", "-b2+N-a13", "-b1+N+g2", "N"], true),
    row("B1B3", &[1, 3], ["b1+g1", "b2+g1+g3", "-b1-b2+N+g1", "b1+b2-a12", "-b2+N+g3", "-b1+N-a23", "N"], true),
    row("B1B4", &[1, 4], ["b1+g1", "b2+g1", "-b1-b2+N+g1+g4", "b1+b2+g4", "-b2+N-a13", "-b1+N-a23", "N"], true),
    row("B2B5", &[2, 5], ["b1+g2", "b2", "-b1-b2+N-a2-a3", "b1+b2+g5+a2", "-b2+N+g5-a2", "-b1+N+g2+g5", "N"], true),
    row("B3B5", &[3, 5], ["b1", "b2+g3", "-b1-b2+N-a1-a3", "b1+b2+g5+a1", "-b2+N+g3+g5", "-b1+N+g5-a1", "N"], true),
    row("B4B5", &[4, 5], ["b1", "b2", "-b1-b2+N+g4-a1-a2", "b1+b2+g4+g5+a1+a2", "-b2+N+g5-a2", "-b1+N+g5-a1", "N"], true),
    row("B2B3", &[2, 3], ["b1+g2", "b2+g3", "-b1-b2+N-a3", "b1+b2-a12", "-b2+N+g3", "-b1+N+g2", "N"], true),
    row("B2B4", &[2, 4], ["b1+g2", "b2", "-b1-b2+N+g4-a2", "b1+b2+g4+a2", "-b2+N-a13-a2", "-b1+N+g2", "N"], true),
    row("B3B4", &[3, 4], ["b1", "b2+g3", "-b1-b2+N+g4-a1", "b1+b2+g4+a1", "-b2+N+g3", "-b1+N-a23-a1", "N"], true),
    row("B1B2B3", &[1, 2, 3], ["b1+g1+g2", "b2+g1+g3", "-b1-b2+N+g1", "b1+b2-a12", "-b2+N+g3", "-b1+N+g2", "N"], true),
    row("B1B2B4", &[1, 2, 4], ["b1+g1+g2", "b2+g1", "-b1-b2+N+g1+g4", "b1+b2+g4", "-b2+N-a13", "-b1+N+g2", "N"], true),
    row("B1B3B4", &[1, 3, 4], ["b1+g1", "b2+g1+g3", "-b1-b2+N+g1+g4", "b1+b2+g4", "-b2+N+g3", "-b1+N-a23", "N"], true),
    row("B2B3B5", &[2, 3, 5], ["b1+g2", "b2+g3", "-b1-b2+N-a3", "b1+b2+g5", "-b2+N+g3+g5", "-b1+N+g2+g5", "N"], true),
    row("B2B4B5", &[2, 4, 5], ["b1+g2", "b2", "-b1-b2+N+g4-a2", "b1+b2+g4+g5+a2", "-b2+N+g5-a2", "-b1+N+g2+g5", "N"], true),
    row("B3B4B5", &[3, 4, 5], ["b1", "b2+g3", "-b1-b2+N+g4-a1", "b1+b2+g4+g5+a1", "-b2+N+g3+g5", "-b1+N+g5-a1", "N"], true),
];

pub fn n3_row(name: &str) -> Option<&'static N3Row> {
    N3_ROWS.iter().find(|r| r.name.eq_ignore_ascii_case(name))
}

/// Bitmasks of the seven coordinates of an [`N3Row`].
const N3_COORDS: [u32; 7] = [0b001, 0b010, 0b100, 0b011, 0b101, 0b110, 0b111];

/// Parameters of an [`N3FaceForm`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct N3Params {
    pub beta1: f64,
    pub beta2: f64,
    pub grand: f64,
    /// γ_1..γ_5, one per facet; only those of the row's facets are used.
    pub gamma: [f64; 5],
    pub alpha12: f64,
    pub alpha13: f64,
    pub alpha23: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl N3Params {
    /// β's and v(N) uniform on `[-scale, scale]`, conic parameters on `[0, scale]`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Self {
        let mut u = || rng.gen_range(0.0..=scale);
        let mut p = N3Params {
            gamma: [u(), u(), u(), u(), u()],
            alpha12: u(),
            alpha13: u(),
            alpha23: u(),
            alpha1: u(),
            alpha2: u(),
            alpha3: u(),
            ..N3Params::default()
        };
        p.beta1 = rng.gen_range(-scale..=scale);
        p.beta2 = rng.gen_range(-scale..=scale);
        p.grand = rng.gen_range(-scale..=scale);
        p
    }

    pub fn without_gamma(&self) -> Self {
        N3Params {
            gamma: [0.0; 5],
            ..*self
        }
    }

    fn symbol(&self, name: &str) -> Option<f64> {
        Some(match name {
            "b1" => self.beta1,
            "b2" => self.beta2,
            "N" => self.grand,
            "g1" => self.gamma[0],
            "g2" => self.gamma[1],
            "g3" => self.gamma[2],
            "g4" => self.gamma[3],
            "g5" => self.gamma[4],
            "a12" => self.alpha12,
            "a13" => self.alpha13,
            "a23" => self.alpha23,
            "a1" => self.alpha1,
            "a2" => self.alpha2,
            "a3" => self.alpha3,
            _ => return None,
        })
    }

    fn conic(&self) -> impl Iterator<Item = f64> + '_ {
        self.gamma.iter().copied().chain([
            self.alpha12,
            self.alpha13,
            self.alpha23,
            self.alpha1,
            self.alpha2,
            self.alpha3,
        ])
    }
}

/// Evaluates a signed sum of symbols such as `-b1-b2+N+g1`.
fn eval_form(expr: &str, p: &N3Params) -> f64 {
    let mut total = 0.0;
    let mut rest = expr;
    while !rest.is_empty() {
        let (sign, body) = match rest.as_bytes()[0] {
            b'-' => (-1.0, &rest[1..]),
            b'+' => (1.0, &rest[1..]),
            _ => (1.0, rest),
        };
        let end = body.find(['+', '-']).unwrap_or(body.len());
        let value = p
            .symbol(&body[..end])
            .unwrap_or_else(|| panic!("unknown symbol in {expr:?}"));
        total += sign * value;
        rest = &body[end..];
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct N3FaceForm {
    pub row: &'static N3Row,
    pub params: N3Params,
}

impl N3FaceForm {
    pub fn game(&self) -> Result<Game> {
        if let Some(c) = self.params.conic().find(|c| !(*c >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "conic parameter must be nonnegative, got {c}"
            )));
        }
        let mut values = vec![0.0; 8];
        for (bits, expr) in N3_COORDS.iter().zip(self.row.coords) {
            values[*bits as usize] = eval_form(expr, &self.params);
        }
        Game::from_values(3, values)
    }

    /// The same row with every γ set to 0: the expected projection.
    pub fn projection(&self) -> Result<Game> {
        N3FaceForm {
            row: self.row,
            params: self.params.without_gamma(),
        }
        .game()
    }
}

/// A game drawn from `row` with parameters sampled from `seed`.
pub fn n3_sample_face_game(row: &'static N3Row, seed: u64, scale: f64) -> Result<(N3FaceForm, Game)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let form = N3FaceForm {
        row,
        params: N3Params::sample(&mut rng, scale),
    };
    let game = form.game()?;
    Ok((form, game))
}

/// Catalog positions of the row's facets.
pub fn n3_row_facets(row: &N3Row, catalog: &MbcCatalog) -> Vec<usize> {
    let labels: Vec<String> = catalog.facets().map(|c| c.label(3)).collect();
    row.facets
        .iter()
        .map(|&k| {
            labels
                .iter()
                .position(|l| l == N3_FACETS[k - 1])
                .expect("three-player catalog")
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct N3Mismatch {
    pub seed: u64,
    pub game: Game,
    pub expected: Game,
    pub projected: Game,
    pub singleton: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct N3Report {
    pub row: String,
    pub point_core: bool,
    pub trials: usize,
    pub projection_mismatches: usize,
    pub point_core_mismatches: usize,
    /// Trials whose tight facets differ from the row's face.
    pub face_mismatches: usize,
    pub max_error: f64,
    pub examples: Vec<N3Mismatch>,
}

impl N3Report {
    pub fn passed(&self) -> bool {
        self.projection_mismatches == 0 && self.point_core_mismatches == 0
    }
}

/// Samples `trials` games from `row`, projects them with `projector` and
/// compares against the γ = 0 form and the row's point-core column.
pub fn n3_verify_projection<F>(
    row: &'static N3Row,
    trials: usize,
    seed: u64,
    catalog: &MbcCatalog,
    tol: f64,
    projector: F,
) -> Result<N3Report>
where
    F: Fn(&Game) -> Result<Game>,
{
    if catalog.players() != 3 {
        return Err(Error::SizeMismatch {
            expected: 3,
            found: catalog.players(),
        });
    }
    let face = n3_row_facets(row, catalog);
    let mut report = N3Report {
        row: row.name.to_string(),
        point_core: row.point_core,
        trials,
        projection_mismatches: 0,
        point_core_mismatches: 0,
        face_mismatches: 0,
        max_error: 0.0,
        examples: Vec::new(),
    };
    for t in 0..trials {
        let s = crate::game::trial_seed(seed, t as u64);
        let (form, game) = n3_sample_face_game(row, s, 10.0)?;
        let expected = form.projection()?;
        let projected = projector(&game)?;
        let err = projected.max_abs_diff(&expected);
        report.max_error = report.max_error.max(err);
        let sig = face_signature(&projected, catalog, None)?;
        let bad_projection = err > tol;
        let bad_core = sig.singleton != row.point_core;
        if bad_projection {
            report.projection_mismatches += 1;
        }
        if bad_core {
            report.point_core_mismatches += 1;
        }
        if sig.tight().collect::<Vec<_>>() != sorted(&face) {
            report.face_mismatches += 1;
        }
        if (bad_projection || bad_core) && report.examples.len() < 3 {
            report.examples.push(N3Mismatch {
                seed: s,
                game,
                expected,
                projected,
                singleton: sig.singleton,
            });
        }
    }
    Ok(report)
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{example_companies, random_game};
    use crate::mbc::enumerate_mbc;
    use crate::projection::project;

    fn clobis_projector(g: &Game) -> Result<Game> {
        Ok(project(g)?.v_star)
    }

    #[test]
    fn facet_constants_match_catalog() {
        let cat = enumerate_mbc(3, false).unwrap();
        let labels: Vec<String> = cat.facets().map(|c| c.label(3)).collect();
        let census: Vec<&str> = N3_CENSUS_ORDER.iter().map(|&i| labels[i].as_str()).collect();
        assert_eq!(census, ["{1,23}", "{1,2,3}", "{12,13,23}", "{2,13}", "{3,12}"]);
        for f in N3_FACETS {
            assert!(labels.iter().any(|l| l == f));
        }
    }

    #[test]
    fn companies_projection_is_point_core() {
        let cat = enumerate_mbc(4, false).unwrap();
        let r = project(&example_companies()).unwrap();
        let sig = face_signature(&r.v_star, &cat, None).unwrap();
        assert_eq!(sig.bits.len(), 41);
        assert!(!sig.is_interior());
        assert!(sig.singleton);
        assert!(face_signature(&example_companies(), &cat, None).is_err());
    }

    #[test]
    fn single_facet_examples() {
        let cat = enumerate_mbc(3, false).unwrap();
        // on the facet of {1,2,3} only
        let (_, g) = n3_sample_face_game(n3_row("B1").unwrap(), 5, 10.0).unwrap();
        let v = project(&g).unwrap().v_star;
        let sig = face_signature(&v, &cat, None).unwrap();
        assert_eq!(sig.permuted(&N3_CENSUS_ORDER), "01000");
        assert!(sig.singleton);
        // inside the facet of {1,23} only
        let (_, g) = n3_sample_face_game(n3_row("B2").unwrap(), 5, 10.0).unwrap();
        let v = project(&g).unwrap().v_star;
        let sig = face_signature(&v, &cat, None).unwrap();
        assert_eq!(sig.permuted(&N3_CENSUS_ORDER), "10000");
        assert!(!sig.singleton);
        assert_eq!(sig.tight_union_rank, 2);
    }

    #[test]
    fn interior_is_not_singleton() {
        let cat = enumerate_mbc(3, false).unwrap();
        // x = (5,5,5) strictly inside every core constraint
        let v = Game::from_labels(3, [("1", 0.0), ("2", 0.0), ("3", 0.0), ("123", 15.0)]).unwrap();
        let sig = face_signature(&v, &cat, None).unwrap();
        assert_eq!(sig.bits, "00000");
        assert!(!sig.singleton);
    }

    #[test]
    fn row_formula_substitution() {
        let form = N3FaceForm {
            row: n3_row("B1").unwrap(),
            params: N3Params {
                gamma: [1.0, 0.0, 0.0, 0.0, 0.0],
                ..N3Params::default()
            },
        };
        assert_eq!(form.game().unwrap().values(), &[0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let bad = N3FaceForm {
            row: form.row,
            params: N3Params {
                alpha12: -1.0,
                ..N3Params::default()
            },
        };
        assert!(bad.game().is_err());
    }

    #[test]
    fn every_row_verifies() {
        let cat = enumerate_mbc(3, false).unwrap();
        for row in &N3_ROWS {
            let rep = n3_verify_projection(row, 20, 11, &cat, 1e-6, clobis_projector).unwrap();
            assert!(rep.passed(), "{rep:?}");
            assert_eq!(rep.face_mismatches, 0, "{}", row.name);
        }
    }

    #[test]
    fn lineality_examples() {
        let add = Game::additive(&[1.0, -2.0, 4.0]).unwrap();
        assert!(lineality_projection(&add, 3.0).max_abs_diff(&add) < 1e-12);
        let zero = Game::zero(4).unwrap();
        assert_eq!(lineality_projection(&zero, 0.0), zero);
        let v = Game::from_labels(3, [("1", 1.0), ("2", 2.0), ("12", 7.0)]).unwrap();
        let p = lineality_projection(&v, 0.0);
        assert_eq!(p, Game::additive(&[1.0, 2.0, -3.0]).unwrap());
    }

    /// Distance on Möbius coefficients, the coefficient of `{n}` left out.
    fn mobius_distance(a: &Game, b: &Game) -> f64 {
        let n = a.players();
        let (ma, mb) = (a.mobius(), b.mobius());
        (1..1usize << n)
            .filter(|&s| s != 1 << (n - 1))
            .map(|s| (ma.coeffs()[s] - mb.coeffs()[s]).powi(2))
            .sum()
    }

    #[test]
    fn lineality_is_idempotent_and_closest() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..20 {
            let v = random_game(4, 10.0, seed, None).unwrap();
            let alpha = 2.5;
            let p = lineality_projection(&v, alpha);
            assert!(lineality_projection(&p, alpha).max_abs_diff(&p) < 1e-12);
            assert!((p.grand_value() - alpha).abs() < 1e-12);
            let d = mobius_distance(&v, &p);
            for _ in 0..20 {
                let mut q: Vec<f64> = (0..4).map(|i| p.value(Coalition::singleton(i))).collect();
                for qi in q.iter_mut().take(3) {
                    *qi += rng.gen_range(-1.0..1.0);
                }
                q[3] = alpha - q[..3].iter().sum::<f64>();
                let other = Game::additive(&q).unwrap();
                assert!(mobius_distance(&v, &other) >= d - 1e-9);
            }
        }
    }
}
