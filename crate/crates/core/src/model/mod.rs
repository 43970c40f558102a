//! Domain types shared by every other module.

mod candidates;
mod features;
mod matrix;
mod regret;

pub use candidates::CandidateSet;
pub use features::{Column, ColumnKind, FeatureTable, FeatureValue};
pub use matrix::{find_condorcet_winner, PreferenceMatrix, WinningMatrix};
pub use regret::RegretLedger;

use crate::{Error, Result};

pub(crate) fn check_index(index: usize, k: usize) -> Result<()> {
    if index >= k {
        return Err(Error::IndexOutOfRange { index, k });
    }
    Ok(())
}
