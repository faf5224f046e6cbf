use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlabError};

/// A vertical strip of interior grid columns eliminated locally.
///
/// Inside a strip unknowns are ordered row-major across the strip
/// (`local = row·width + x`), so the interior block is banded with both
/// bandwidths equal to the strip width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strip {
    /// First grid column (0-based).
    pub col0: usize,
    pub width: usize,
    pub n2: usize,
    /// Interface on the left, if any.
    pub left: Option<usize>,
    /// Interface on the right, if any.
    pub right: Option<usize>,
}

impl Strip {
    pub fn len(&self) -> usize {
        self.width * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn columns(&self) -> Range<usize> {
        self.col0..self.col0 + self.width
    }

    /// Global unknown index of local index `l`.
    #[inline]
    pub fn global(&self, l: usize) -> usize {
        let (row, x) = (l / self.width, l % self.width);
        (self.col0 + x) * self.n2 + row
    }

    /// Local index of global unknown `g` (which must lie in the strip).
    #[inline]
    pub fn local(&self, g: usize) -> usize {
        let (col, row) = (g / self.n2, g % self.n2);
        row * self.width + (col - self.col0)
    }

    /// All global indices in local order.
    pub fn global_indices(&self) -> Vec<usize> {
        (0..self.len()).map(|l| self.global(l)).collect()
    }
}

/// Split of the grid columns into single-column interfaces and interior strips.
///
/// Interfaces sit at 1-based columns `b+1, 2(b+1), …`; the strips between them
/// have width `b` except possibly a thinner last one. Counting from the left
/// with an empty leading interface, strips carry the even labels `2, 4, …`
/// and interfaces the odd labels `3, 5, …`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlabPartition {
    pub n1: usize,
    pub n2: usize,
    pub b: usize,
    /// Grid column (0-based) of each interface, left to right.
    pub interfaces: Vec<usize>,
    pub strips: Vec<Strip>,
}

/// Block of the left-to-right sequence of index sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Strip(usize),
    Interface(usize),
}

/// Partitions an `n1 × n2` grid into strips of width `b` separated by
/// interface columns. `b ≥ n1` gives a single strip without interfaces.
pub fn partition(n1: usize, n2: usize, b: usize) -> Result<SlabPartition> {
    if n1 == 0 || n2 == 0 {
        return Err(SlabError::invalid(format!("empty grid {n1}×{n2}")));
    }
    if b == 0 || b > n1 {
        return Err(SlabError::invalid(format!(
            "slab width must satisfy 1 ≤ b ≤ n1 = {n1}, got {b}"
        )));
    }
    let interfaces: Vec<usize> = (1..).map(|k| k * (b + 1) - 1).take_while(|&c| c < n1).collect();
    let mut strips = Vec::new();
    let mut start = 0;
    for j in 0..=interfaces.len() {
        let end = interfaces.get(j).copied().unwrap_or(n1);
        if end > start {
            strips.push(Strip {
                col0: start,
                width: end - start,
                n2,
                left: j.checked_sub(1),
                right: (j < interfaces.len()).then_some(j),
            });
        }
        start = end + 1;
    }
    Ok(SlabPartition {
        n1,
        n2,
        b,
        interfaces,
        strips,
    })
}

impl SlabPartition {
    pub fn n(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn num_interfaces(&self) -> usize {
        self.interfaces.len()
    }

    pub fn num_strips(&self) -> usize {
        self.strips.len()
    }

    /// Global indices of interface `j` (contiguous: one grid column).
    pub fn interface_range(&self, j: usize) -> Range<usize> {
        let c = self.interfaces[j];
        c * self.n2..(c + 1) * self.n2
    }

    /// Left-to-right sequence of strips and interfaces.
    pub fn block_sequence(&self) -> Vec<Block> {
        let mut blocks: Vec<(usize, Block)> = self
            .strips
            .iter()
            .enumerate()
            .map(|(s, st)| (st.col0, Block::Strip(s)))
            .chain(self.interfaces.iter().enumerate().map(|(j, &c)| (c, Block::Interface(j))))
            .collect();
        blocks.sort_by_key(|b| b.0);
        blocks.into_iter().map(|b| b.1).collect()
    }

    /// Odd/even label of a block with an empty leading interface labelled 1.
    pub fn label(&self, block: Block) -> usize {
        match block {
            Block::Strip(s) => {
                let st = &self.strips[s];
                st.left.map_or(2, |j| 2 * j + 4)
            }
            Block::Interface(j) => 2 * j + 3,
        }
    }

    /// Strip between interfaces `j` and `j + 1`, if any.
    pub fn strip_between(&self, j: usize) -> Option<usize> {
        self.strips
            .iter()
            .position(|s| s.left == Some(j) && s.right == Some(j + 1))
    }

    /// Strips touching interface `j`: `(strip on its left, strip on its right)`.
    pub fn strips_of_interface(&self, j: usize) -> (Option<usize>, Option<usize>) {
        let l = self.strips.iter().position(|s| s.right == Some(j));
        let r = self.strips.iter().position(|s| s.left == Some(j));
        (l, r)
    }

    /// Every unknown belongs to exactly one strip or interface.
    pub fn is_exact_cover(&self) -> bool {
        let mut seen = vec![false; self.n()];
        let mut mark = |g: usize| -> bool { !std::mem::replace(&mut seen[g], true) };
        for s in &self.strips {
            if !(1..=self.b).contains(&s.width) || !s.global_indices().into_iter().all(&mut mark) {
                return false;
            }
        }
        for j in 0..self.num_interfaces() {
            if !self.interface_range(j).all(&mut mark) {
                return false;
            }
        }
        seen.iter().all(|&v| v)
    }
}
