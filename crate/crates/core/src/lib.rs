//! Closest balanced game for TU cooperative games.
//!
//! Given a game with a possibly empty core, [`projection::clobis`] computes
//! the weighted Euclidean projection of the game onto the balanced games with
//! the same grand-coalition value, together with a core allocation of the
//! projection. The remaining modules provide minimal balanced collections,
//! face classification and the simulation studies built on top.

pub mod cli;
pub mod error;
pub mod game;
pub mod geometry;
pub mod mbc;
pub mod numerics;
pub mod projection;
pub mod simulate;

pub use error::{Error, Result};
pub use game::{Coalition, Game, MobiusVector};
