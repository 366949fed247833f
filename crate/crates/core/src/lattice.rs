//! Finite security lattice of classification levels.
//!
//! Built once from a level list and strict order pairs. The constructor
//! computes the reflexive-transitive closure of the order, rejects cycles,
//! and verifies that every pair of levels has a unique least upper bound and
//! greatest lower bound. After construction the lattice is immutable.

use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// A classification level, identified by name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Level(String);

impl Level {
    pub fn new(name: impl Into<String>) -> Self {
        Level(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Level {
    fn from(name: &str) -> Self {
        Level(name.to_string())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("a lattice needs at least one level")]
    EmptyLattice,
    #[error("duplicate level {0}")]
    DuplicateLevel(Level),
    #[error("unknown level {0} in order pair")]
    UnknownLevelInOrder(Level),
    #[error("order cycle through level {0}")]
    CycleDetected(Level),
    #[error("levels {a} and {b} have no unique {bound}")]
    NotALattice { a: Level, b: Level, bound: String },
    #[error("unknown level {0}")]
    UnknownLevel(Level),
}

/// An immutable finite lattice over classification levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    levels: Vec<Level>,
    // leq[i][j] is true iff levels[i] <= levels[j]; reflexive and transitive.
    leq: Vec<Vec<bool>>,
    top: Level,
}

impl Lattice {
    /// Builds a lattice from explicit levels and strict order pairs
    /// `(lower, higher)`.
    pub fn build(
        levels: Vec<Level>,
        order_pairs: Vec<(Level, Level)>,
    ) -> Result<Self, LatticeError> {
        if levels.is_empty() {
            return Err(LatticeError::EmptyLattice);
        }
        let mut seen = BTreeSet::new();
        for l in &levels {
            if !seen.insert(l.clone()) {
                return Err(LatticeError::DuplicateLevel(l.clone()));
            }
        }
        let mut levels: Vec<Level> = levels;
        levels.sort();
        let n = levels.len();
        let index = |l: &Level| levels.binary_search(l).ok();

        let mut leq = vec![vec![false; n]; n];
        for (i, row) in leq.iter_mut().enumerate() {
            row[i] = true;
        }
        for (lo, hi) in &order_pairs {
            let i = index(lo).ok_or_else(|| LatticeError::UnknownLevelInOrder(lo.clone()))?;
            let j = index(hi).ok_or_else(|| LatticeError::UnknownLevelInOrder(hi.clone()))?;
            if i == j {
                return Err(LatticeError::CycleDetected(lo.clone()));
            }
            leq[i][j] = true;
        }
        // Reflexive-transitive closure; rows i and k are read and written
        // together, so plain index loops it is.
        #[allow(clippy::needless_range_loop)]
        for k in 0..n {
            for i in 0..n {
                if leq[i][k] {
                    for j in 0..n {
                        if leq[k][j] {
                            leq[i][j] = true;
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && leq[i][j] && leq[j][i] {
                    return Err(LatticeError::CycleDetected(levels[i.min(j)].clone()));
                }
            }
        }

        let lattice = Lattice {
            levels,
            leq,
            top: Level::new(""),
        };
        // Every pair must have a unique least upper bound and greatest lower
        // bound; this also guarantees a unique top and bottom.
        let mut top = 0;
        for a in 0..n {
            for b in 0..n {
                let j =
                    lattice
                        .bound_index(a, b, true)
                        .ok_or_else(|| LatticeError::NotALattice {
                            a: lattice.levels[a].clone(),
                            b: lattice.levels[b].clone(),
                            bound: "least upper bound".to_string(),
                        })?;
                lattice
                    .bound_index(a, b, false)
                    .ok_or_else(|| LatticeError::NotALattice {
                        a: lattice.levels[a].clone(),
                        b: lattice.levels[b].clone(),
                        bound: "greatest lower bound".to_string(),
                    })?;
                top = lattice
                    .bound_index(top, j, true)
                    .expect("lub is total here");
            }
        }
        let top = lattice.levels[top].clone();
        Ok(Lattice { top, ..lattice })
    }

    /// Unique minimal upper bound (`upper` = true) or maximal lower bound of
    /// the pair, as an index; `None` if it does not exist or is not unique.
    fn bound_index(&self, a: usize, b: usize, upper: bool) -> Option<usize> {
        let n = self.levels.len();
        let bounds: Vec<usize> = (0..n)
            .filter(|&c| {
                if upper {
                    self.leq[a][c] && self.leq[b][c]
                } else {
                    self.leq[c][a] && self.leq[c][b]
                }
            })
            .collect();
        let minimal: Vec<usize> = bounds
            .iter()
            .copied()
            .filter(|&c| {
                bounds.iter().all(|&d| {
                    d == c
                        || !(if upper {
                            self.leq[d][c]
                        } else {
                            self.leq[c][d]
                        })
                })
            })
            .collect();
        if minimal.len() == 1 {
            Some(minimal[0])
        } else {
            None
        }
    }

    fn idx(&self, l: &Level) -> Result<usize, LatticeError> {
        self.levels
            .binary_search(l)
            .map_err(|_| LatticeError::UnknownLevel(l.clone()))
    }

    pub fn contains(&self, l: &Level) -> bool {
        self.levels.binary_search(l).is_ok()
    }

    pub fn levels(&self) -> impl Iterator<Item = &Level> {
        self.levels.iter()
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// True iff `hi` dominates `lo` (hi >= lo in the order).
    pub fn dominates(&self, hi: &Level, lo: &Level) -> Result<bool, LatticeError> {
        Ok(self.leq[self.idx(lo)?][self.idx(hi)?])
    }

    pub fn strictly_dominates(&self, hi: &Level, lo: &Level) -> Result<bool, LatticeError> {
        Ok(hi != lo && self.dominates(hi, lo)?)
    }

    pub fn comparable(&self, a: &Level, b: &Level) -> Result<bool, LatticeError> {
        Ok(self.dominates(a, b)? || self.dominates(b, a)?)
    }

    /// Least upper bound of the pair.
    pub fn lub(&self, a: &Level, b: &Level) -> Result<Level, LatticeError> {
        let (i, j) = (self.idx(a)?, self.idx(b)?);
        let k = self
            .bound_index(i, j, true)
            .expect("verified a lattice at build time");
        Ok(self.levels[k].clone())
    }

    /// Greatest lower bound of the pair.
    pub fn glb(&self, a: &Level, b: &Level) -> Result<Level, LatticeError> {
        let (i, j) = (self.idx(a)?, self.idx(b)?);
        let k = self
            .bound_index(i, j, false)
            .expect("verified a lattice at build time");
        Ok(self.levels[k].clone())
    }

    /// The unique level dominating all others.
    pub fn top(&self) -> &Level {
        &self.top
    }

    /// All levels in a deterministic bottom-up topological order: a level
    /// appears after everything it dominates, with name order breaking ties
    /// among incomparable levels.
    pub fn levels_bottom_up(&self) -> Vec<Level> {
        let n = self.levels.len();
        let mut placed = vec![false; n];
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            // levels are name-sorted, so scanning in index order is the
            // deterministic tie-break.
            for i in 0..n {
                if placed[i] {
                    continue;
                }
                let ready = (0..n).all(|j| j == i || placed[j] || !self.leq[j][i]);
                if ready {
                    placed[i] = true;
                    out.push(self.levels[i].clone());
                }
            }
        }
        out
    }

    /// Hasse edges `(lower, higher)` of the order: the transitive reduction,
    /// sorted by name. Rebuilding from these pairs yields an equal lattice.
    pub fn covering_pairs(&self) -> Vec<(Level, Level)> {
        let n = self.levels.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j || !self.leq[i][j] {
                    continue;
                }
                let direct =
                    (0..n).all(|k| k == i || k == j || !(self.leq[i][k] && self.leq[k][j]));
                if direct {
                    out.push((self.levels[i].clone(), self.levels[j].clone()));
                }
            }
        }
        out.sort();
        out
    }

    // Total variants for levels already validated against this lattice.

    pub(crate) fn ge(&self, hi: &Level, lo: &Level) -> bool {
        self.dominates(hi, lo)
            .expect("level validated against this lattice")
    }

    pub(crate) fn gt(&self, hi: &Level, lo: &Level) -> bool {
        hi != lo && self.ge(hi, lo)
    }

    pub(crate) fn join(&self, a: &Level, b: &Level) -> Level {
        self.lub(a, b)
            .expect("level validated against this lattice")
    }
}
