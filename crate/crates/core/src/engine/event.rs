use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::Algorithm;
use crate::{Error, Result};

/// One simulated round. Indices are 0-based here and 1-based on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "EventRecord", try_from = "EventRecord")]
pub struct RoundEvent {
    /// Duels recorded after this round (1 for the first round).
    pub t: u64,
    pub algo: Algorithm,
    pub champion: usize,
    pub challenger: usize,
    pub winner: usize,
    pub regret: Option<f64>,
    pub n_augmented: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct EventRecord {
    t: u64,
    algo: Algorithm,
    champion: usize,
    challenger: usize,
    winner: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    regret: Option<f64>,
    n_augmented: usize,
    seed: u64,
}

impl From<RoundEvent> for EventRecord {
    fn from(e: RoundEvent) -> Self {
        Self {
            t: e.t,
            algo: e.algo,
            champion: e.champion + 1,
            challenger: e.challenger + 1,
            winner: e.winner + 1,
            regret: e.regret,
            n_augmented: e.n_augmented,
            seed: e.seed,
        }
    }
}

impl TryFrom<EventRecord> for RoundEvent {
    type Error = Error;

    fn try_from(r: EventRecord) -> Result<Self> {
        if r.champion == 0 || r.challenger == 0 || r.winner == 0 {
            return Err(Error::data("event indices are 1-based"));
        }
        if r.winner != r.champion && r.winner != r.challenger {
            return Err(Error::data(format!("event at t={} names a winner outside the duel", r.t)));
        }
        Ok(Self {
            t: r.t,
            algo: r.algo,
            champion: r.champion - 1,
            challenger: r.challenger - 1,
            winner: r.winner - 1,
            regret: r.regret,
            n_augmented: r.n_augmented,
            seed: r.seed,
        })
    }
}

impl RoundEvent {
    /// The duel as an unordered pair `(min, max)`.
    pub fn unordered_pair(&self) -> (usize, usize) {
        (self.champion.min(self.challenger), self.champion.max(self.challenger))
    }
}

pub fn write_events_jsonl<W: Write>(events: &[RoundEvent], mut writer: W) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut writer, e)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_events_jsonl<R: BufRead>(reader: R) -> Result<Vec<RoundEvent>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_is_one_based_and_round_trips() {
        let e = RoundEvent {
            t: 1,
            algo: Algorithm::IpeaRucb,
            champion: 0,
            challenger: 4,
            winner: 4,
            regret: Some(0.125),
            n_augmented: 3,
            seed: 9,
        };
        let mut buf = Vec::new();
        write_events_jsonl(std::slice::from_ref(&e), &mut buf).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert!(line.contains("\"champion\":1"));
        assert!(line.contains("\"algo\":\"ipea-rucb\""));
        assert_eq!(read_events_jsonl(buf.as_slice()).unwrap(), vec![e]);
    }
}
