//! Addressable fixed-width buffers standing in for on-chip block memory.

use super::SeedError;
use crate::bits::BitString;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Memory {
    width: usize,
    rows: Vec<BitString>,
}

impl Memory {
    pub fn new(width: usize, depth: usize) -> Self {
        Self {
            width,
            rows: vec![BitString::zeros(width); depth],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.rows.len()
    }

    pub fn read(&self, addr: usize) -> Result<&BitString, SeedError> {
        self.rows.get(addr).ok_or(SeedError::Address {
            addr,
            depth: self.rows.len(),
        })
    }

    /// Writes `data` into row `addr` with the write enable covering lanes
    /// `lane .. lane + data.len()`; lanes past the row width are not enabled.
    pub fn write_enabled(&mut self, addr: usize, lane: usize, data: &BitString) -> Result<(), SeedError> {
        let depth = self.rows.len();
        let row = self
            .rows
            .get_mut(addr)
            .ok_or(SeedError::Address { addr, depth })?;
        let enabled = data.len().min(row.len().saturating_sub(lane));
        for i in 0..enabled {
            row.set(lane + i, data.get(i));
        }
        Ok(())
    }

    pub fn rows(&self) -> &[BitString] {
        &self.rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_write_touches_only_enabled_lanes() {
        let mut mem = Memory::new(5, 2);
        mem.write_enabled(1, 3, &BitString::from_bits(&[1, 1, 1])).unwrap();
        assert_eq!(mem.read(1).unwrap(), &BitString::from_bits(&[0, 0, 0, 1, 1]));
        mem.write_enabled(1, 0, &BitString::from_bits(&[1, 0])).unwrap();
        assert_eq!(mem.read(1).unwrap(), &BitString::from_bits(&[1, 0, 0, 1, 1]));
        assert_eq!(mem.read(0).unwrap(), &BitString::zeros(5));
        assert!(mem.read(2).is_err());
        assert!(mem.write_enabled(7, 0, &BitString::zeros(1)).is_err());
    }
}
