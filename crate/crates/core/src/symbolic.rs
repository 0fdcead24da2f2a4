//! The dyadic symbolic space `{0,1}^N*` with the ultrametric that gives
//! every depth-`n` cylinder diameter `2^-n`.
//!
//! In this space every ball is a cylinder, so a ball `B(x, r)` is the
//! cylinder of depth `ceil(-log2 r)` containing `x`, and the maximal packing
//! of the whole space by balls of radius in `(δ/2, δ]`, `δ = 2^-n`, is the
//! family of all level-`n` cylinders.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Default maximum depth; large enough for the factorial demo schedule.
pub const DEFAULT_MAX_DEPTH: usize = 6000;

/// Exhaustive enumeration of a level is only allowed up to this depth.
pub const ENUMERATION_LIMIT: usize = 20;

const WORD: usize = 64;

fn words_for(depth: usize) -> usize {
    depth.div_ceil(WORD)
}

/// A finite binary word `ε1…εn`, stored packed. Depth 0 is the whole space.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Cylinder {
    bits: Vec<u64>,
    depth: usize,
}

impl Cylinder {
    pub fn root() -> Self {
        Self::default()
    }

    /// Builds a cylinder from digits; every entry must be 0 or 1.
    pub fn from_digits(digits: &[u8]) -> Result<Self> {
        let mut c = Cylinder { bits: vec![0; words_for(digits.len())], depth: 0 };
        for (i, &d) in digits.iter().enumerate() {
            if d > 1 {
                return Err(Error::Precondition(format!("digit {d} at position {} is not binary", i + 1)));
            }
            c.set(i, d);
        }
        c.depth = digits.len();
        Ok(c)
    }

    /// The cylinder of depth `depth` whose digits are the binary expansion
    /// of `index`, most significant digit first.
    pub fn from_index(index: u64, depth: usize) -> Self {
        assert!(depth <= WORD, "from_index supports depth <= 64");
        let mut c = Cylinder { bits: vec![0; words_for(depth)], depth };
        for i in 0..depth {
            c.set(i, ((index >> (depth - 1 - i)) & 1) as u8);
        }
        c
    }

    fn set(&mut self, i: usize, d: u8) {
        let (w, b) = (i / WORD, i % WORD);
        if d == 1 {
            self.bits[w] |= 1 << b;
        } else {
            self.bits[w] &= !(1 << b);
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Digit `ε_j` for `1 <= j <= depth`.
    pub fn digit(&self, j: usize) -> u8 {
        assert!(j >= 1 && j <= self.depth, "digit index {j} out of range 1..={}", self.depth);
        let i = j - 1;
        ((self.bits[i / WORD] >> (i % WORD)) & 1) as u8
    }

    pub fn digits(&self) -> impl Iterator<Item = u8> + '_ {
        (1..=self.depth).map(move |j| self.digit(j))
    }

    /// Number of zero digits.
    pub fn zeros(&self) -> usize {
        self.depth - self.bits.iter().map(|w| w.count_ones() as usize).sum::<usize>()
    }

    /// `2^-depth`, exact for every depth representable by `f64`.
    pub fn diameter(&self) -> f64 {
        diameter(self.depth)
    }

    /// The child cylinder `c·d`.
    pub fn child(&self, d: u8) -> Self {
        assert!(d <= 1);
        let mut c = self.clone();
        if words_for(c.depth + 1) > c.bits.len() {
            c.bits.push(0);
        }
        c.set(c.depth, d);
        c.depth += 1;
        c
    }

    /// True when `self` is a prefix of (contains) `other`.
    pub fn is_prefix_of(&self, other: &Cylinder) -> bool {
        self.depth <= other.depth && (1..=self.depth).all(|j| self.digit(j) == other.digit(j))
    }

    /// Two cylinders are disjoint iff neither is a prefix of the other.
    pub fn is_disjoint(&self, other: &Cylinder) -> bool {
        !self.is_prefix_of(other) && !other.is_prefix_of(self)
    }
}

/// `2^-depth`. Underflows to zero past depth 1074; use `-(depth as f64)` in
/// log2 form for deep levels.
pub fn diameter(depth: usize) -> f64 {
    match depth {
        0..=1022 => f64::from_bits(((1023 - depth) as u64) << 52),
        1023..=1074 => f64::from_bits(1u64 << (1074 - depth)),
        _ => 0.0,
    }
}

/// Depth of the cylinder identified with a ball of radius `r`.
pub fn depth_for_radius(r: f64) -> usize {
    assert!(r > 0.0, "radius must be positive");
    if r >= 1.0 {
        return 0;
    }
    (-r.log2()).ceil() as usize
}

impl fmt::Display for Cylinder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.digits() {
            f.write_str(if d == 0 { "0" } else { "1" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Cylinder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cylinder[{self}]")
    }
}

impl FromStr for Cylinder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s
            .chars()
            .map(|ch| match ch {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Precondition(format!("invalid cylinder character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Cylinder::from_digits(&digits)
    }
}

/// A point of the symbolic space, materialized to a finite depth.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Path {
    digits: Cylinder,
    seed: Option<u64>,
}

impl Path {
    pub fn from_digits(digits: &[u8]) -> Result<Self> {
        Ok(Path { digits: Cylinder::from_digits(digits)?, seed: None })
    }

    /// Materializes the first `depth` digits of the point `j -> f(j)` (`j >= 1`).
    pub fn from_fn(depth: usize, mut f: impl FnMut(usize) -> u8) -> Result<Self> {
        let digits: Vec<u8> = (1..=depth).map(&mut f).collect();
        Self::from_digits(&digits)
    }

    pub(crate) fn sampled(digits: Cylinder, seed: u64) -> Self {
        Path { digits, seed: Some(seed) }
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Number of materialized digits.
    pub fn len(&self) -> usize {
        self.digits.depth()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Digit `ε_j`, `1 <= j <= len`.
    pub fn digit(&self, j: usize) -> u8 {
        self.digits.digit(j)
    }

    /// The full materialized prefix as a cylinder.
    pub fn as_cylinder(&self) -> &Cylinder {
        &self.digits
    }
}

/// Depth configuration for the space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SymbolicSpace {
    pub max_depth: usize,
}

impl Default for SymbolicSpace {
    fn default() -> Self {
        SymbolicSpace { max_depth: DEFAULT_MAX_DEPTH }
    }
}

impl SymbolicSpace {
    pub fn new(max_depth: usize) -> Self {
        SymbolicSpace { max_depth }
    }

    pub fn check_depth(&self, n: usize) -> Result<()> {
        if n > self.max_depth {
            return Err(Error::DepthOverflow { depth: n, max: self.max_depth });
        }
        Ok(())
    }

    /// All `2^n` level-`n` cylinders in lexicographic order.
    pub fn level_packing(&self, n: usize) -> Result<impl Iterator<Item = Cylinder>> {
        self.check_depth(n)?;
        if n > ENUMERATION_LIMIT {
            return Err(Error::DepthOverflow { depth: n, max: ENUMERATION_LIMIT });
        }
        Ok((0..1u64 << n).map(move |i| Cylinder::from_index(i, n)))
    }

    /// The depth-`n` cylinder containing `x`.
    pub fn prefix(&self, x: &Path, n: usize) -> Result<Cylinder> {
        self.check_depth(n)?;
        if n > x.len() {
            return Err(Error::DepthOverflow { depth: n, max: x.len() });
        }
        let digits: Vec<u8> = (1..=n).map(|j| x.digit(j)).collect();
        Cylinder::from_digits(&digits)
    }
}
