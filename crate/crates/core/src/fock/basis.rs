use std::collections::HashMap;
use std::fmt;

use crate::{Error, Result};

/// Default cap on the number of occupation tuples in a basis.
pub const DEFAULT_MAX_BASIS: usize = 100_000;

/// Photon numbers per mode for one product Fock state.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OccupationTuple(Box<[u8]>);

impl OccupationTuple {
    pub fn new(occupations: impl Into<Box<[u8]>>) -> Self {
        OccupationTuple(occupations.into())
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn modes(&self) -> usize {
        self.0.len()
    }

    /// Total photon number.
    pub fn total(&self) -> usize {
        self.0.iter().map(|&k| k as usize).sum()
    }

    pub fn get(&self, mode: usize) -> usize {
        self.0[mode] as usize
    }
}

impl fmt::Debug for OccupationTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

/// Number of occupation tuples on `modes` modes with total photon number at
/// most `n_max`, i.e. `C(modes + n_max, n_max)`. Saturates at `usize::MAX`.
pub fn basis_size(modes: usize, n_max: usize) -> usize {
    let mut acc: u128 = 1;
    for i in 1..=n_max as u128 {
        acc = acc * (modes as u128 + i) / i;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// Lexicographically ordered occupation-number basis of `modes` bosonic
/// modes truncated at total photon number `n_max`.
///
/// Besides the tuples themselves the basis keeps, for every tuple, the list
/// of occupied modes and the index reached by removing one photon from each
/// occupied mode. Channels use these tables instead of hashing.
#[derive(Clone)]
pub struct Basis {
    modes: usize,
    n_max: usize,
    tuples: Vec<OccupationTuple>,
    index: HashMap<OccupationTuple, usize>,
    occupied: Vec<Vec<(usize, u8)>>,
    lowered: Vec<Vec<usize>>,
}

impl fmt::Debug for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Basis")
            .field("modes", &self.modes)
            .field("n_max", &self.n_max)
            .field("dim", &self.tuples.len())
            .finish()
    }
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        self.modes == other.modes && self.n_max == other.n_max
    }
}

impl Basis {
    pub fn new(modes: usize, n_max: usize) -> Result<Self> {
        Self::with_guard(modes, n_max, DEFAULT_MAX_BASIS)
    }

    pub fn with_guard(modes: usize, n_max: usize, max_size: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::invalid("modes", "at least one mode is required"));
        }
        if n_max > u8::MAX as usize {
            return Err(Error::invalid("n_max", "photon cutoff must fit in a byte"));
        }
        let size = basis_size(modes, n_max);
        if size > max_size {
            return Err(Error::DimensionGuard {
                what: "basis size",
                value: size,
                limit: max_size,
            });
        }

        let mut tuples = Vec::with_capacity(size);
        let mut current = vec![0u8; modes];
        fill(&mut current, 0, n_max, &mut tuples);
        debug_assert_eq!(tuples.len(), size);

        let index: HashMap<_, _> = tuples
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let occupied: Vec<Vec<(usize, u8)>> = tuples
            .iter()
            .map(|t| {
                t.as_slice()
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k > 0)
                    .map(|(m, &k)| (m, k))
                    .collect()
            })
            .collect();
        let lowered = tuples
            .iter()
            .zip(&occupied)
            .map(|(t, occ)| {
                occ.iter()
                    .map(|&(m, _)| {
                        let mut v = t.as_slice().to_vec();
                        v[m] -= 1;
                        index[&OccupationTuple::new(v)]
                    })
                    .collect()
            })
            .collect();

        Ok(Basis {
            modes,
            n_max,
            tuples,
            index,
            occupied,
            lowered,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.tuples.len()
    }

    pub fn tuples(&self) -> &[OccupationTuple] {
        &self.tuples
    }

    pub fn tuple(&self, idx: usize) -> &OccupationTuple {
        &self.tuples[idx]
    }

    pub fn index_of(&self, occupations: &[u8]) -> Option<usize> {
        self.index.get(&OccupationTuple::new(occupations)).copied()
    }

    /// Index of the vacuum tuple (always the first one).
    pub fn vacuum(&self) -> usize {
        0
    }

    /// Index of the tuple with a single photon in `mode`.
    pub fn single_photon(&self, mode: usize) -> Option<usize> {
        if self.n_max == 0 || mode >= self.modes {
            return None;
        }
        let mut v = vec![0u8; self.modes];
        v[mode] = 1;
        self.index_of(&v)
    }

    /// Occupied modes of tuple `idx` with their photon numbers.
    pub fn occupied(&self, idx: usize) -> &[(usize, u8)] {
        &self.occupied[idx]
    }

    /// Index of tuple `idx` with one photon removed from `mode`.
    pub fn lower(&self, idx: usize, mode: usize) -> Option<usize> {
        self.occupied[idx]
            .iter()
            .position(|&(m, _)| m == mode)
            .map(|p| self.lowered[idx][p])
    }
}

fn fill(current: &mut [u8], pos: usize, remaining: usize, out: &mut Vec<OccupationTuple>) {
    if pos == current.len() {
        out.push(OccupationTuple::new(current.to_vec()));
        return;
    }
    for k in 0..=remaining {
        current[pos] = k as u8;
        fill(current, pos + 1, remaining - k, out);
    }
    current[pos] = 0;
}

/// Ordered, duplicate-free list of all occupation tuples on `modes` modes with
/// total photon number at most `n_max`.
pub fn enumerate_basis(modes: usize, n_max: usize) -> Result<Vec<OccupationTuple>> {
    Ok(Basis::new(modes, n_max)?.tuples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_only() {
        let b = enumerate_basis(1, 0).unwrap();
        assert_eq!(b, vec![OccupationTuple::new(vec![0])]);
    }

    #[test]
    fn two_modes_one_photon_in_lexicographic_order() {
        let b = enumerate_basis(2, 1).unwrap();
        let got: Vec<_> = b.iter().map(|t| t.as_slice().to_vec()).collect();
        assert_eq!(got, vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn sizes_match_binomial_count() {
        assert_eq!(enumerate_basis(25, 2).unwrap().len(), 351);
        for modes in 1..7 {
            for n_max in 0..4 {
                let b = enumerate_basis(modes, n_max).unwrap();
                // brute force over the full box {0..n_max}^modes
                let count = (0..(n_max + 1).pow(modes as u32))
                    .filter(|&mut_code| {
                        let mut c = mut_code;
                        let mut tot = 0;
                        for _ in 0..modes {
                            tot += c % (n_max + 1);
                            c /= n_max + 1;
                        }
                        tot <= n_max
                    })
                    .count();
                assert_eq!(b.len(), count);
                assert_eq!(basis_size(modes, n_max), count);
                assert!(b.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn guard_rejects_large_bases() {
        let err = Basis::with_guard(30, 3, 1000).unwrap_err();
        assert!(matches!(err, Error::DimensionGuard { .. }));
        assert!(Basis::new(0, 2).is_err());
    }

    #[test]
    fn lowering_table() {
        let b = Basis::new(3, 2).unwrap();
        let i = b.index_of(&[1, 0, 1]).unwrap();
        assert_eq!(b.lower(i, 0), b.index_of(&[0, 0, 1]));
        assert_eq!(b.lower(i, 2), b.index_of(&[1, 0, 0]));
        assert_eq!(b.lower(i, 1), None);
        assert_eq!(b.single_photon(1), b.index_of(&[0, 1, 0]));
    }
}
