//! Guidance generation pipeline for play-by-post tabletop games.

pub mod action;
pub mod corpus;
pub mod dmpolicy;
pub mod error;
pub mod evalmetrics;
pub mod idm;
pub mod intent;
pub mod linmodel;
pub mod persist;
pub mod player;
pub mod synth;
pub mod textfeat;

pub use action::{ActionLabel, ActionSet, DEFAULT_ACTIONS};
pub use error::{Error, Result};
