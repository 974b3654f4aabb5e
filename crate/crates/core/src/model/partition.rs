use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("partition has no blocks")]
    Empty,
    #[error("block {0} is empty")]
    EmptyBlock(usize),
    #[error("state {0} appears in more than one block")]
    Overlap(usize),
    #[error("state {0} is not covered by any block")]
    Uncovered(usize),
    #[error("state index {0} out of range")]
    OutOfRange(usize),
}

/// Partition of Γ into metastates `Γ₁ ∪ … ∪ Γ_ℓ`. Edges inside a block are
/// the fast ones.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MetastatePartition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl MetastatePartition {
    pub fn new(n_states: usize, blocks: Vec<Vec<usize>>) -> Result<Self, PartitionError> {
        if blocks.is_empty() {
            return Err(PartitionError::Empty);
        }
        let mut block_of = vec![usize::MAX; n_states];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(PartitionError::EmptyBlock(b));
            }
            for &s in block {
                if s >= n_states {
                    return Err(PartitionError::OutOfRange(s));
                }
                if block_of[s] != usize::MAX {
                    return Err(PartitionError::Overlap(s));
                }
                block_of[s] = b;
            }
        }
        if let Some(s) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(PartitionError::Uncovered(s));
        }
        Ok(Self { blocks, block_of })
    }

    /// Every state in its own block.
    pub fn singletons(n_states: usize) -> Self {
        Self::new(n_states, (0..n_states).map(|s| vec![s]).collect()).expect("singletons partition")
    }

    /// One block containing all states.
    pub fn whole(n_states: usize) -> Self {
        Self::new(n_states, vec![(0..n_states).collect()]).expect("single-block partition")
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_states(&self) -> usize {
        self.block_of.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[usize] {
        &self.blocks[i]
    }

    /// `α(σ)`: index of the block containing `sigma`.
    #[inline]
    pub fn block_of(&self, sigma: usize) -> usize {
        self.block_of[sigma]
    }

    /// True for intra-block (fast) edges.
    #[inline]
    pub fn is_fast(&self, sigma: usize, target: usize) -> bool {
        self.block_of[sigma] == self.block_of[target]
    }
}
