use super::EnvironmentEventLog;

/// Effective swap times grouped by bond (compressed row layout).
///
/// An effective swap across a bond flips both end sites, so the occupancy of
/// site `x` at time `t` is its initial value flipped once per swap on bonds
/// `x - 1` and `x` up to `t`.
pub struct BondTimeline<'a> {
    log: &'a EnvironmentEventLog,
    offsets: Vec<usize>,
    times: Vec<f64>,
}

impl<'a> BondTimeline<'a> {
    pub fn new(log: &'a EnvironmentEventLog) -> Self {
        let bonds = log.lattice.len();
        let mut offsets = vec![0usize; bonds + 1];
        for event in &log.events {
            offsets[event.bond as usize + 1] += 1;
        }
        for b in 0..bonds {
            offsets[b + 1] += offsets[b];
        }
        let mut cursor = offsets.clone();
        let mut times = vec![0.0; log.events.len()];
        for event in &log.events {
            let slot = &mut cursor[event.bond as usize];
            times[*slot] = event.time;
            *slot += 1;
        }
        Self {
            log,
            offsets,
            times,
        }
    }

    pub fn log(&self) -> &'a EnvironmentEventLog {
        self.log
    }

    /// Increasing swap times on `bond`.
    #[inline]
    pub fn bond_times(&self, bond: u32) -> &[f64] {
        let b = bond as usize;
        &self.times[self.offsets[b]..self.offsets[b + 1]]
    }

    /// Bond to the left of `site`.
    #[inline]
    pub fn left_bond(&self, site: u32) -> u32 {
        if site == 0 {
            self.log.lattice.sites - 1
        } else {
            site - 1
        }
    }

    /// Occupancy of `site` after all swaps with time `<= t`.
    pub fn occupancy_at(&self, site: u32, t: f64) -> bool {
        let flips = self.bond_times(self.left_bond(site)).partition_point(|&s| s <= t)
            + self.bond_times(site).partition_point(|&s| s <= t);
        self.log.initial.get(site) ^ (flips % 2 == 1)
    }
}
