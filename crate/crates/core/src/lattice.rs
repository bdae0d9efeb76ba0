//! Occupancy of the periodic lattice.

use std::fmt;

use crate::model::LatticeSpec;

/// One byte per site (0 or 1) plus the cached particle count.
#[derive(Clone, PartialEq, Eq)]
pub struct LatticeConfiguration {
    occupancy: Vec<u8>,
    particle_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid occupancy string at column {column}: expected '0' or '1'")]
pub struct ParseOccupancyError {
    pub column: usize,
}

impl LatticeConfiguration {
    pub fn empty(lattice: LatticeSpec) -> Self {
        Self {
            occupancy: vec![0; lattice.len()],
            particle_count: 0,
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let occupancy: Vec<u8> = bits.into_iter().map(u8::from).collect();
        let particle_count = occupancy.iter().map(|&b| b as usize).sum();
        Self {
            occupancy,
            particle_count,
        }
    }

    /// Parses a string of `0`/`1` characters.
    pub fn from_bitstring(s: &str) -> Result<Self, ParseOccupancyError> {
        let bits = s
            .bytes()
            .enumerate()
            .map(|(column, c)| match c {
                b'0' => Ok(false),
                b'1' => Ok(true),
                _ => Err(ParseOccupancyError { column: column + 1 }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_bits(bits))
    }

    pub fn to_bitstring(&self) -> String {
        self.occupancy
            .iter()
            .map(|&b| if b == 1 { '1' } else { '0' })
            .collect()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    #[inline]
    pub fn particle_count(&self) -> usize {
        self.particle_count
    }

    #[inline]
    pub fn get(&self, site: u32) -> bool {
        self.occupancy[site as usize] == 1
    }

    pub fn set(&mut self, site: u32, occupied: bool) {
        let slot = &mut self.occupancy[site as usize];
        let new = u8::from(occupied);
        self.particle_count = self.particle_count + new as usize - *slot as usize;
        *slot = new;
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.occupancy.iter().map(|&b| b == 1)
    }

    /// Exchanges the occupancies across bond `bond`. Returns whether they
    /// differed, i.e. whether the swap changed the configuration.
    #[inline]
    pub fn swap_bond(&mut self, bond: u32) -> bool {
        let left = bond as usize;
        let right = if left + 1 == self.occupancy.len() {
            0
        } else {
            left + 1
        };
        let (a, b) = (self.occupancy[left], self.occupancy[right]);
        self.occupancy[left] = b;
        self.occupancy[right] = a;
        a != b
    }

    /// Recounts the occupied sites and compares with the cached count.
    pub fn count_is_consistent(&self) -> bool {
        self.occupancy.iter().map(|&b| b as usize).sum::<usize>() == self.particle_count
    }
}

impl fmt::Debug for LatticeConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "LatticeConfiguration({} particles, {})",
            self.particle_count,
            self.to_bitstring()
        )
    }
}
