//! Sense-reversing counter barrier built from one region, an arrival
//! counter and a generation flag.

use super::program::ThreadProgram;
use crate::{Addr, RegionId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Barrier {
    pub region: RegionId,
    pub parties: u64,
    pub counter: Addr,
    pub flag: Addr,
    /// Compute cycles between two reads of the flag.
    pub poll_interval: u64,
}

impl Barrier {
    /// Flag value that releases generation `generation` (0-based).
    pub fn sense(generation: u64) -> u64 {
        (generation + 1) & 1
    }

    /// Appends one barrier crossing. The last arriver resets the counter and
    /// flips the flag inside the region; everyone else polls the flag
    /// outside it.
    pub fn append(&self, prog: &mut ThreadProgram, generation: u64) {
        if self.parties <= 1 {
            return;
        }
        let Barrier {
            parties,
            counter,
            flag,
            poll_interval,
            ..
        } = *self;
        let sense = Self::sense(generation);
        prog.enter(self.region)
            .script("barrier arrive", move |cx| {
                let arrived = cx.read_u64(counter)? + 1;
                if arrived == parties {
                    cx.write_u64(counter, 0)?;
                    cx.write_u64(flag, sense)
                } else {
                    cx.write_u64(counter, arrived)
                }
            })
            .exit(self.region)
            .script("barrier wait", move |cx| {
                if cx.read_u64(flag)? == sense {
                    return Ok(());
                }
                cx.compute(poll_interval)?;
                cx.repeat()
            });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_party_is_a_no_op() {
        let b = Barrier {
            region: RegionId(1),
            parties: 1,
            counter: 0,
            flag: 16,
            poll_interval: 4,
        };
        let mut p = ThreadProgram::new();
        b.append(&mut p, 0);
        assert!(p.is_empty());
        b.append(&mut p, 1);
        assert!(p.is_empty());
    }

    #[test]
    fn sense_alternates() {
        assert_eq!([0, 1, 2, 3].map(Barrier::sense), [1, 0, 1, 0]);
    }
}
