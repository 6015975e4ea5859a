//! Block-partitioned parameter vectors.
//!
//! Every optimizer quantity (parameters, gradients, moments, updates) is a flat
//! `f64` vector carrying a [`BlockLayout`]. Blocks are contiguous; a block may
//! additionally be declared as a row-major matrix so that row and column
//! masking granularities are available for it.

use std::ops::{Index, IndexMut, Range};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    offsets: Vec<usize>,
    sizes: Vec<usize>,
    /// `(rows, cols)` for blocks that hold a row-major matrix.
    shapes: Vec<Option<(usize, usize)>>,
}

impl BlockLayout {
    /// Layout of plain vector blocks with the given lengths.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        Self::build(sizes.to_vec(), vec![None; sizes.len()])
    }

    /// Layout where every block is a row-major `rows x cols` matrix.
    pub fn from_matrices(shapes: &[(usize, usize)]) -> Result<Self> {
        let sizes = shapes.iter().map(|&(r, c)| r * c).collect();
        Self::build(sizes, shapes.iter().copied().map(Some).collect())
    }

    /// `count` vector blocks of equal length `size`.
    pub fn uniform(count: usize, size: usize) -> Result<Self> {
        Self::from_sizes(&vec![size; count])
    }

    fn build(sizes: Vec<usize>, shapes: Vec<Option<(usize, usize)>>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Layout("layout needs at least one block".into()));
        }
        if let Some(b) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Layout(format!("block {b} has size 0")));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        Ok(Self {
            offsets,
            sizes,
            shapes,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn dim(&self) -> usize {
        self.offsets.last().unwrap() + self.sizes.last().unwrap()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn shape(&self, b: usize) -> Option<(usize, usize)> {
        self.shapes.get(b).copied().flatten()
    }

    pub fn range(&self, b: usize) -> Result<Range<usize>> {
        if b >= self.num_blocks() {
            return Err(Error::BlockIndex {
                index: b,
                blocks: self.num_blocks(),
            });
        }
        Ok(self.offsets[b]..self.offsets[b] + self.sizes[b])
    }

    pub(crate) fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.offsets
            .iter()
            .zip(&self.sizes)
            .map(|(&o, &s)| o..o + s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    data: Vec<f64>,
    layout: Arc<BlockLayout>,
}

impl BlockVector {
    pub fn new(data: Vec<f64>, layout: Arc<BlockLayout>) -> Result<Self> {
        check_len(layout.dim(), data.len())?;
        Ok(Self { data, layout })
    }

    pub fn zeros(layout: Arc<BlockLayout>) -> Self {
        Self {
            data: vec![0.0; layout.dim()],
            layout,
        }
    }

    pub fn zeros_like(other: &BlockVector) -> Self {
        Self::zeros(other.layout.clone())
    }

    pub fn layout(&self) -> &Arc<BlockLayout> {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn num_blocks(&self) -> usize {
        self.layout.num_blocks()
    }

    pub fn block(&self, b: usize) -> Result<&[f64]> {
        let r = self.layout.range(b)?;
        Ok(&self.data[r])
    }

    pub fn block_mut(&mut self, b: usize) -> Result<&mut [f64]> {
        let r = self.layout.range(b)?;
        Ok(&mut self.data[r])
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.layout.ranges().map(move |r| &self.data[r])
    }

    pub fn ensure_same_layout(&self, other: &BlockVector) -> Result<()> {
        check_len(self.len(), other.len())?;
        if self.layout.sizes() != other.layout.sizes() {
            return Err(Error::Layout("block layouts differ".into()));
        }
        Ok(())
    }

    pub fn dot(&self, other: &BlockVector) -> Result<f64> {
        self.ensure_same_layout(other)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    /// Euclidean norm of every block.
    pub fn block_norms(&self) -> Vec<f64> {
        self.blocks().map(norm).collect()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &BlockVector) -> Result<()> {
        self.ensure_same_layout(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }
}

impl Index<usize> for BlockVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for BlockVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

pub fn dot(u: &[f64], w: &[f64]) -> f64 {
    u.iter().zip(w).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BlockVector {
        let layout = Arc::new(BlockLayout::from_sizes(&[2, 3]).unwrap());
        BlockVector::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], layout).unwrap()
    }

    #[test]
    fn block_views() {
        let v = sample();
        assert_eq!(v.block(1).unwrap(), &[3.0, 4.0, 5.0]);
        assert_eq!(v.block(0).unwrap(), &[1.0, 2.0]);
        assert!(matches!(
            v.block(2),
            Err(Error::BlockIndex {
                index: 2,
                blocks: 2
            })
        ));
    }

    #[test]
    fn block_mut_writes_through() {
        let mut v = sample();
        v.block_mut(1).unwrap()[0] = -1.0;
        assert_eq!(v.as_slice(), &[1.0, 2.0, -1.0, 4.0, 5.0]);
    }

    #[test]
    fn layout_rejects_bad_sizes() {
        assert!(BlockLayout::from_sizes(&[]).is_err());
        assert!(BlockLayout::from_sizes(&[2, 0]).is_err());
        let l = BlockLayout::from_matrices(&[(2, 3), (4, 1)]).unwrap();
        assert_eq!(l.dim(), 10);
        assert_eq!(l.offsets(), &[0, 6]);
        assert_eq!(l.shape(0), Some((2, 3)));
    }

    #[test]
    fn length_must_match_layout() {
        let layout = Arc::new(BlockLayout::uniform(2, 2).unwrap());
        assert!(BlockVector::new(vec![0.0; 3], layout).is_err());
    }

    proptest::proptest! {
        #[test]
        fn concatenated_blocks_reproduce_vector(
            sizes in proptest::collection::vec(1usize..6, 1..6),
            seed in 0u64..1000,
        ) {
            let layout = Arc::new(BlockLayout::from_sizes(&sizes).unwrap());
            let data: Vec<f64> = (0..layout.dim()).map(|i| (i as f64 + seed as f64).sin()).collect();
            let v = BlockVector::new(data.clone(), layout).unwrap();
            let joined: Vec<f64> = v.blocks().flat_map(|b| b.iter().copied()).collect();
            proptest::prop_assert_eq!(joined, data);
        }
    }
}
