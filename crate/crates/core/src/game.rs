//! TU-game data model.
//!
//! A game on `n` players is stored as a dense vector of `2^n` values indexed
//! by coalition bitmask: bit `i` set means player `i + 1` is a member. Index 0
//! is the empty coalition and always holds 0.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::Deserializer;
use serde::ser::{SerializeMap, SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported player count (dense storage of `2^24` values).
pub const MAX_PLAYERS: usize = 24;

/// A coalition encoded as a player bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Coalition(pub u32);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    /// The grand coalition on `n` players.
    pub const fn grand(n: usize) -> Self {
        Coalition(((1u64 << n) - 1) as u32)
    }

    /// Singleton `{i}` for a zero-based player index.
    pub const fn singleton(i: usize) -> Self {
        Coalition(1 << i)
    }

    /// Builds a coalition from one-based player labels.
    pub fn from_players(players: &[usize]) -> Self {
        Coalition(players.iter().fold(0u32, |acc, &p| acc | (1 << (p - 1))))
    }

    pub const fn bits(self) -> u32 {
        self.0
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }

    pub const fn size(self) -> u32 {
        self.0.count_ones()
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Membership test for a zero-based player index.
    pub const fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub const fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    pub const fn is_disjoint(self, other: Coalition) -> bool {
        self.0 & other.0 == 0
    }

    pub const fn union(self, other: Coalition) -> Coalition {
        Coalition(self.0 | other.0)
    }

    /// Zero-based member indices in ascending order.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let i = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(i)
            }
        })
    }

    /// A proper coalition is nonempty and different from `N`.
    pub fn is_proper(self, n: usize) -> bool {
        !self.is_empty() && self != Coalition::grand(n)
    }

    pub fn is_valid(self, n: usize) -> bool {
        !self.is_empty() && self.0 <= Coalition::grand(n).0
    }

    /// Sort key used for canonical orderings: size first, then bitmask.
    pub fn canonical_key(self) -> (u32, u32) {
        (self.size(), self.0)
    }

    /// Brace-free label: `"123"` for players up to 9, comma separated otherwise.
    pub fn label(self, n: usize) -> String {
        let sep = if n > 9 { "," } else { "" };
        self.members()
            .map(|i| (i + 1).to_string())
            .collect::<Vec<_>>()
            .join(sep)
    }

    /// Parses a label produced by [`Coalition::label`].
    pub fn parse_label(label: &str, n: usize) -> Result<Self> {
        let bad = || Error::BadLabel(label.to_string());
        let trimmed = label.trim();
        if trimmed.is_empty() {
            return Err(bad());
        }
        let players: Vec<usize> = if trimmed.contains(',') {
            trimmed
                .split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|_| bad()))
                .collect::<Result<_>>()?
        } else if n > 9 {
            // without separators a label is a single player number
            vec![trimmed.parse::<usize>().map_err(|_| bad())?]
        } else {
            trimmed
                .chars()
                .map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(bad))
                .collect::<Result<_>>()?
        };
        let mut bits = 0u32;
        let mut last = 0usize;
        for p in players {
            if p == 0 || p > n || p <= last {
                return Err(bad());
            }
            last = p;
            bits |= 1 << (p - 1);
        }
        Ok(Coalition(bits))
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.members().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

/// Proper coalitions of an `n`-player game in ascending bitmask order.
pub fn proper_coalitions(n: usize) -> impl Iterator<Item = Coalition> {
    (1..(1u32 << n) - 1).map(Coalition)
}

/// x(S) for every coalition, indexed by bitmask.
pub fn coalition_sums(x: &[f64]) -> Vec<f64> {
    let size = 1usize << x.len();
    let mut sums = vec![0.0; size];
    for s in 1..size {
        let low = s.trailing_zeros() as usize;
        sums[s] = sums[s & (s - 1)] + x[low];
    }
    sums
}

/// x(S) = sum of the coordinates of `x` over the members of `S`.
pub fn coalition_value(x: &[f64], s: Coalition) -> f64 {
    s.members().map(|i| x[i]).sum()
}

/// A transferable-utility game.
#[derive(Clone, PartialEq)]
pub struct Game {
    n: usize,
    values: Vec<f64>,
}

impl fmt::Debug for Game {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut map = f.debug_map();
        for s in 1..self.values.len() {
            map.entry(&Coalition(s as u32), &self.values[s]);
        }
        map.finish()
    }
}

fn check_players(n: usize) -> Result<()> {
    if (2..=MAX_PLAYERS).contains(&n) {
        Ok(())
    } else {
        Err(Error::PlayerCount(n))
    }
}

impl Game {
    /// The zero game.
    pub fn zero(n: usize) -> Result<Self> {
        check_players(n)?;
        Ok(Game {
            n,
            values: vec![0.0; 1 << n],
        })
    }

    /// Builds a game from a full dense vector of `2^n` values.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        check_players(n)?;
        if values.len() != 1 << n {
            return Err(Error::SizeMismatch {
                expected: 1 << n,
                found: values.len(),
            });
        }
        if values[0] != 0.0 {
            return Err(Error::EmptyCoalition);
        }
        if let Some(s) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                label: Coalition(s as u32).label(n),
                value: values[s],
            });
        }
        Ok(Game { n, values })
    }

    /// Builds a game from explicit coalition assignments; unspecified
    /// coalitions are 0.
    pub fn make<I>(n: usize, assignments: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Coalition, f64)>,
    {
        let mut game = Game::zero(n)?;
        for (s, value) in assignments {
            if s.is_empty() {
                if value != 0.0 {
                    return Err(Error::EmptyCoalition);
                }
                continue;
            }
            if !s.is_valid(n) {
                return Err(Error::InvalidCoalition { bits: s.0, n });
            }
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    label: s.label(n),
                    value,
                });
            }
            game.values[s.index()] = value;
        }
        Ok(game)
    }

    /// Same as [`Game::make`] with brace-free string labels (`"12"`, `"1234"`).
    pub fn from_labels<'a, I>(n: usize, assignments: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let pairs = assignments
            .into_iter()
            .map(|(label, v)| Coalition::parse_label(label, n).map(|s| (s, v)))
            .collect::<Result<Vec<_>>>()?;
        Game::make(n, pairs)
    }

    /// Dirac game: 1 at `s`, 0 elsewhere.
    pub fn dirac(n: usize, s: Coalition) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::EmptyCoalition);
        }
        Game::make(n, [(s, 1.0)])
    }

    /// Unanimity game: 1 on every superset of `s`.
    pub fn unanimity(n: usize, s: Coalition) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::EmptyCoalition);
        }
        let mut game = Game::zero(n)?;
        if !s.is_valid(n) {
            return Err(Error::InvalidCoalition { bits: s.0, n });
        }
        for t in 1..game.values.len() {
            if s.is_subset_of(Coalition(t as u32)) {
                game.values[t] = 1.0;
            }
        }
        Ok(game)
    }

    /// Additive game v(S) = p(S).
    pub fn additive(payoffs: &[f64]) -> Result<Self> {
        check_players(payoffs.len())?;
        Game::from_values(payoffs.len(), coalition_sums(payoffs))
    }

    pub fn players(&self) -> usize {
        self.n
    }

    pub fn grand(&self) -> Coalition {
        Coalition::grand(self.n)
    }

    /// v(N).
    pub fn grand_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn value(&self, s: Coalition) -> f64 {
        self.values[s.index()]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn proper_coalitions(&self) -> impl Iterator<Item = Coalition> {
        proper_coalitions(self.n)
    }

    /// Möbius transform (Harsanyi dividends).
    pub fn mobius(&self) -> MobiusVector {
        let mut coeffs = self.values.clone();
        for i in 0..self.n {
            let bit = 1usize << i;
            for s in 0..coeffs.len() {
                if s & bit != 0 {
                    coeffs[s] -= coeffs[s ^ bit];
                }
            }
        }
        MobiusVector { n: self.n, coeffs }
    }

    /// Max-norm distance between two games on the same player set.
    pub fn max_abs_diff(&self, other: &Game) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Game {
        Game {
            n: self.n,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("game serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl std::ops::Index<Coalition> for Game {
    type Output = f64;

    fn index(&self, s: Coalition) -> &f64 {
        &self.values[s.index()]
    }
}

/// Coordinates of a game in the unanimity basis.
#[derive(Clone, Debug, PartialEq)]
pub struct MobiusVector {
    n: usize,
    coeffs: Vec<f64>,
}

impl MobiusVector {
    pub fn new(n: usize, coeffs: Vec<f64>) -> Result<Self> {
        check_players(n)?;
        if coeffs.len() != 1 << n {
            return Err(Error::SizeMismatch {
                expected: 1 << n,
                found: coeffs.len(),
            });
        }
        if coeffs[0] != 0.0 {
            return Err(Error::EmptyCoalition);
        }
        Ok(MobiusVector { n, coeffs })
    }

    pub fn players(&self) -> usize {
        self.n
    }

    pub fn coeff(&self, s: Coalition) -> f64 {
        self.coeffs[s.index()]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn inverse(&self) -> Game {
        let mut values = self.coeffs.clone();
        for i in 0..self.n {
            let bit = 1usize << i;
            for s in 0..values.len() {
                if s & bit != 0 {
                    values[s] += values[s ^ bit];
                }
            }
        }
        Game { n: self.n, values }
    }
}

/// Draws a game with every v(S), S ⊂ N, i.i.d. uniform on `[-half_width, half_width]`.
///
/// Values are drawn in ascending bitmask order from a ChaCha8 stream seeded
/// with `seed`; v(N) is drawn last unless `fix_grand` pins it.
pub fn random_game(n: usize, half_width: f64, seed: u64, fix_grand: Option<f64>) -> Result<Game> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_game_with_rng(n, half_width, fix_grand, &mut rng)
}

pub fn random_game_with_rng<R: Rng + ?Sized>(
    n: usize,
    half_width: f64,
    fix_grand: Option<f64>,
    rng: &mut R,
) -> Result<Game> {
    check_players(n)?;
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "half-width must be positive, got {half_width}"
        )));
    }
    let size = 1usize << n;
    let mut values = vec![0.0; size];
    for v in values.iter_mut().take(size - 1).skip(1) {
        *v = rng.gen_range(-half_width..=half_width);
    }
    values[size - 1] = match fix_grand {
        Some(alpha) => alpha,
        None => rng.gen_range(-half_width..=half_width),
    };
    Game::from_values(n, values)
}

/// Seed for trial `index` of an experiment rooted at `root` (SplitMix64 finalizer).
pub fn trial_seed(root: u64, index: u64) -> u64 {
    let mut z = root
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Serialize for Game {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        struct Values<'a>(&'a Game);

        impl Serialize for Values<'_> {
            fn serialize<S: Serializer>(
                &self,
                serializer: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                let game = self.0;
                let mut order: Vec<Coalition> =
                    (1..game.values.len()).map(|s| Coalition(s as u32)).collect();
                order.sort_by_key(|s| s.canonical_key());
                let mut map = serializer.serialize_map(Some(order.len()))?;
                for s in order {
                    map.serialize_entry(&s.label(game.n), &game.values[s.index()])?;
                }
                map.end()
            }
        }

        let mut st = serializer.serialize_struct("Game", 2)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("values", &Values(self))?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for Game {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            n: usize,
            #[serde(default)]
            values: BTreeMap<String, f64>,
        }

        let raw = Raw::deserialize(deserializer)?;
        Game::from_labels(raw.n, raw.values.iter().map(|(k, v)| (k.as_str(), *v)))
            .map_err(serde::de::Error::custom)
    }
}

/// The four-company game used throughout the examples.
pub fn example_companies() -> Game {
    Game::from_labels(
        4,
        [
            ("1", 32.0),
            ("2", 25.0),
            ("3", 27.0),
            ("4", 16.0),
            ("12", 46.0),
            ("13", 46.0),
            ("14", 38.0),
            ("23", 49.0),
            ("24", 26.0),
            ("34", 54.0),
            ("123", 95.0),
            ("124", 79.0),
            ("134", 64.0),
            ("234", 88.0),
            ("1234", 100.0),
        ],
    )
    .expect("static game is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(label: &str, n: usize) -> Coalition {
        Coalition::parse_label(label, n).unwrap()
    }

    #[test]
    fn labels_round_trip() {
        for n in [3usize, 9, 12] {
            for s in 1..(1u32 << n) {
                let s = Coalition(s);
                assert_eq!(Coalition::parse_label(&s.label(n), n).unwrap(), s);
            }
        }
        assert_eq!(c("13", 3), Coalition(0b101));
        assert_eq!(Coalition::parse_label("1,10", 12).unwrap(), Coalition(0b10_0000_0001));
    }

    #[test]
    fn bad_labels_rejected() {
        for bad in ["", "0", "4", "21", "11", "1a"] {
            assert!(Coalition::parse_label(bad, 3).is_err(), "{bad}");
        }
        assert!(Coalition::parse_label("110", 12).is_err());
        assert_eq!(Coalition::parse_label("12", 12).unwrap(), Coalition(1 << 11));
    }

    #[test]
    fn make_game_matches_table() {
        let g = example_companies();
        assert_eq!(g.value(c("1", 4)), 32.0);
        assert_eq!(g.value(c("34", 4)), 54.0);
        assert_eq!(g.value(c("234", 4)), 88.0);
        assert_eq!(g.grand_value(), 100.0);
        assert_eq!(g.values()[0], 0.0);
    }

    #[test]
    fn make_game_defaults_and_errors() {
        let z = Game::make(3, []).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        assert!(matches!(
            Game::make(3, [(Coalition(8), 1.0)]),
            Err(Error::InvalidCoalition { .. })
        ));
        assert!(matches!(
            Game::make(3, [(Coalition(0), 1.0)]),
            Err(Error::EmptyCoalition)
        ));
        assert!(matches!(
            Game::make(3, [(Coalition(1), f64::NAN)]),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(Game::zero(1), Err(Error::PlayerCount(1))));
        assert!(matches!(Game::zero(25), Err(Error::PlayerCount(25))));
    }

    #[test]
    fn worked_example_game() {
        let g = Game::from_labels(
            3,
            [
                ("123", 77.0),
                ("1", 37.0),
                ("2", 7.0),
                ("3", 92.0),
                ("12", 35.0),
                ("13", 64.0),
                ("23", 19.0),
            ],
        )
        .unwrap();
        assert_eq!(g.values(), &[0.0, 37.0, 7.0, 35.0, 92.0, 64.0, 19.0, 77.0]);
    }

    #[test]
    fn dirac_and_unanimity() {
        let d = Game::dirac(3, c("12", 3)).unwrap();
        assert_eq!(d.value(c("12", 3)), 1.0);
        assert_eq!(d.value(c("123", 3)), 0.0);
        assert!(Game::dirac(3, Coalition::EMPTY).is_err());
        assert!(Game::unanimity(3, Coalition::EMPTY).is_err());

        let u = Game::unanimity(3, c("3", 3)).unwrap();
        let ones: Vec<_> = (1..8u32)
            .filter(|&s| u.values()[s as usize] == 1.0)
            .map(|s| Coalition(s).label(3))
            .collect();
        assert_eq!(ones, ["3", "13", "23", "123"]);

        let un = Game::unanimity(4, Coalition::grand(4)).unwrap();
        assert_eq!(un.values().iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(un.grand_value(), 1.0);
    }

    #[test]
    fn dirac_basis_reconstructs() {
        let g = random_game(4, 5.0, 3, None).unwrap();
        let mut acc = vec![0.0; 16];
        for s in 1..16u32 {
            let d = Game::dirac(4, Coalition(s)).unwrap();
            for (a, dv) in acc.iter_mut().zip(d.values()) {
                *a += g.values()[s as usize] * dv;
            }
        }
        assert_eq!(acc, g.values());
    }

    #[test]
    fn mobius_of_unanimity_is_indicator() {
        for s in 1..8u32 {
            let m = Game::unanimity(3, Coalition(s)).unwrap().mobius();
            for t in 1..8usize {
                let expected = if t == s as usize { 1.0 } else { 0.0 };
                assert_eq!(m.coeffs()[t], expected);
            }
        }
    }

    #[test]
    fn mobius_of_additive_game() {
        let p = [1.5, -2.0, 4.0, 0.25];
        let m = Game::additive(&p).unwrap().mobius();
        for s in 1..16u32 {
            let s = Coalition(s);
            let expected = if s.size() == 1 {
                p[s.0.trailing_zeros() as usize]
            } else {
                0.0
            };
            assert!((m.coeff(s) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn mobius_of_grand_dirac() {
        // m(S) = sum_{T ⊆ S} (-1)^{|S \ T|} δ_N(T), nonzero only at S = N.
        let m = Game::dirac(3, Coalition::grand(3)).unwrap().mobius();
        assert_eq!(m.coeffs(), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        // Dirac at {1,2}: brute-force alternating sum over subsets.
        let d = Game::dirac(3, c("12", 3)).unwrap();
        let m = d.mobius();
        for s in 1..8u32 {
            let mut brute = 0.0;
            for t in 0..8u32 {
                if t & !s == 0 {
                    let sign = if (s ^ t).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                    brute += sign * d.values()[t as usize];
                }
            }
            assert_eq!(m.coeffs()[s as usize], brute);
        }
        assert_eq!(m.coeff(c("12", 3)), 1.0);
        assert_eq!(m.coeff(c("123", 3)), -1.0);
    }

    #[test]
    fn mobius_roundtrip_and_sum() {
        let g = random_game(5, 10.0, 42, None).unwrap();
        let m = g.mobius();
        assert!((m.coeffs().iter().sum::<f64>() - g.grand_value()).abs() < 1e-12);
        assert!(m.inverse().max_abs_diff(&g) <= 1e-12);
    }

    #[test]
    fn coalition_value_basics() {
        let x = [22.26, 32.64, 29.89, 15.21];
        assert!((coalition_value(&x, Coalition::grand(4)) - 100.0).abs() < 1e-9);
        assert_eq!(coalition_value(&x, c("3", 4)), 29.89);
        assert_eq!(coalition_value(&[1.0, 1.0, 1.0], c("13", 3)), 2.0);
        let sums = coalition_sums(&x);
        for s in 0..16u32 {
            assert!((sums[s as usize] - coalition_value(&x, Coalition(s))).abs() < 1e-12);
        }
    }

    #[test]
    fn random_game_contract() {
        let a = random_game(4, 10.0, 9, Some(0.0)).unwrap();
        let b = random_game(4, 10.0, 9, Some(0.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.grand_value(), 0.0);
        assert!(a.values().iter().all(|v| (-10.0..=10.0).contains(v)));
        assert_ne!(a, random_game(4, 10.0, 10, Some(0.0)).unwrap());
        assert!(random_game(4, 0.0, 1, None).is_err());
    }

    #[test]
    fn random_game_mean_near_zero() {
        // 10^5 draws: 6250 games of 16 proper values each on n = 4 (+ N).
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut seed = 0;
        while count < 100_000 {
            let g = random_game(4, 1.0, trial_seed(17, seed), None).unwrap();
            for v in &g.values()[1..] {
                sum += v;
                count += 1;
            }
            seed += 1;
        }
        assert!((sum / count as f64).abs() < 0.01);
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let g = random_game(4, 3.0, 5, None).unwrap();
        let back = Game::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
        let text = r#"{"n": 3, "values": {"1": 2, "23": 1.5}}"#;
        let g = Game::from_json(text).unwrap();
        assert_eq!(g.value(c("23", 3)), 1.5);
        assert_eq!(g.grand_value(), 0.0);
        assert!(Game::from_json(r#"{"n": 3, "values": {"14": 1}}"#).is_err());
        assert!(Game::from_json(r#"{"n": 3, "vals": {}}"#).is_err());
    }
}
