//! Permutations of `{0..n-1}` and exhaustive permutation enumeration.
//!
//! Indices are 0-based everywhere in code; user-facing documentation talks
//! about devices and subsets `1..N` as is conventional, with the shift
//! applied once at the API boundary.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A bijection of `{0..n-1}`, stored as the image list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("permutation length must be at least 1"));
        }
        Ok(Self { map: (0..n).collect() })
    }

    /// Uniform random permutation via Fisher-Yates on the given stream.
    pub fn sample(rng: &mut RngStream, n: usize) -> Result<Self> {
        let mut perm = Self::identity(n)?;
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            perm.map.swap(i, j);
        }
        Ok(perm)
    }

    pub fn from_map(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        if n == 0 {
            return Err(Error::invalid("permutation length must be at least 1"));
        }
        let mut seen = vec![false; n];
        for &v in &map {
            if v >= n || seen[v] {
                return Err(Error::invalid("map is not a bijection of 0..n-1"));
            }
            seen[v] = true;
        }
        Ok(Self { map })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Image of `i`.
    pub fn apply(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }
}

/// Visit every permutation of `{0..n-1}` exactly once (Heap's algorithm).
///
/// Used by the exact-enumeration oracles; callers are responsible for
/// keeping `n` small enough that `n!` visits are affordable.
pub fn for_each_permutation<F: FnMut(&[usize])>(n: usize, mut visit: F) {
    let mut items: Vec<usize> = (0..n).collect();
    if n == 0 {
        return;
    }
    visit(&items);
    let mut counters = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(counters[i], i);
            }
            visit(&items);
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
}

/// Visit every size-`k` subset of `{0..n-1}` as a sorted index slice.
pub fn for_each_subset<F: FnMut(&[usize])>(n: usize, k: usize, mut visit: F) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        // advance to the next combination in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Binomial coefficient as u128, for enumeration budget checks.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut out: u128 = 1;
    for i in 0..k {
        out = out * (n - i) as u128 / (i + 1) as u128;
    }
    out
}
