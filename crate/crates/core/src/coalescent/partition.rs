use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A partition of `{1..n}` with blocks ordered by their least elements.
///
/// Elements inside each block are kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderedPartition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl OrderedPartition {
    /// The partition of `{1..n}` into singletons.
    pub fn singletons(n: usize) -> Self {
        Self {
            n,
            blocks: (1..=n).map(|i| vec![i]).collect(),
        }
    }

    /// Build from arbitrary blocks, checking they partition `{1..n}`.
    pub fn from_blocks(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n + 1];
        let mut blocks = blocks;
        for block in &mut blocks {
            if block.is_empty() {
                return Err(Error::out_of_range("partition", "empty block"));
            }
            block.sort_unstable();
            for &e in block.iter() {
                if e == 0 || e > n {
                    return Err(Error::out_of_range("partition", format!("element {e} not in 1..={n}")));
                }
                if std::mem::replace(&mut seen[e], true) {
                    return Err(Error::out_of_range("partition", format!("element {e} repeated")));
                }
            }
        }
        if let Some(missing) = (1..=n).find(|&e| !seen[e]) {
            return Err(Error::out_of_range("partition", format!("element {missing} missing")));
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Ok(Self { n, blocks })
    }

    /// Build from a label vector: `labels[i - 1]` is the block index of `i`.
    /// Blocks are reordered by least element, so any labelling works.
    pub fn from_labels(labels: &[usize]) -> Self {
        let n = labels.len();
        let mut index_of = std::collections::HashMap::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            let idx = *index_of.entry(l).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() - 1
            });
            blocks[idx].push(i + 1);
        }
        // First appearance order is least-element order.
        Self { n, blocks }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Block index (0-based, least-element order) of each element `1..=n`.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.n];
        for (b, block) in self.blocks.iter().enumerate() {
            for &e in block {
                labels[e - 1] = b;
            }
        }
        labels
    }

    /// Restriction to `{1..m}`.
    pub fn restrict(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.n {
            return Err(Error::out_of_range("restriction size", format!("m = {m}, n = {}", self.n)));
        }
        let blocks = self
            .blocks
            .iter()
            .filter_map(|b| {
                let kept: Vec<usize> = b.iter().copied().take_while(|&e| e <= m).collect();
                (!kept.is_empty()).then_some(kept)
            })
            .collect();
        // Least elements are unchanged by the restriction, so order survives.
        Ok(Self { n: m, blocks })
    }

    /// Merge the blocks at the given positions into one.
    pub fn merge(&self, positions: &[usize]) -> Result<Self> {
        let mut take = vec![false; self.blocks.len()];
        for &p in positions {
            if p >= self.blocks.len() || std::mem::replace(&mut take[p], true) {
                return Err(Error::out_of_range("merge positions", format!("{positions:?}")));
            }
        }
        let mut merged = Vec::new();
        let mut rest = Vec::with_capacity(self.blocks.len());
        for (b, block) in self.blocks.iter().enumerate() {
            if take[b] {
                merged.extend_from_slice(block);
            } else {
                rest.push(block.clone());
            }
        }
        merged.sort_unstable();
        let at = rest.partition_point(|b| b[0] < merged[0]);
        rest.insert(at, merged);
        Ok(Self { n: self.n, blocks: rest })
    }

    /// Check the ordering and covering invariants.
    pub fn is_valid(&self) -> bool {
        Self::from_blocks(self.n, self.blocks.clone()).is_ok_and(|p| p == *self)
    }
}

impl fmt::Display for OrderedPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (j, e) in b.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{e}")?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}
