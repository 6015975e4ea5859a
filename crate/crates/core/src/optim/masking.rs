//! Masking units and the per-unit masking primitives.

use rand::RngExt;

use super::config::Granularity;
use crate::error::{check_len, Result};
use crate::numeric::{cossim, sigmoid, BlockLayout, BlockVector, RngStream};

/// Partition of the flat parameter index space into masking units.
///
/// Row and column granularity only split blocks declared as matrices; plain
/// vector blocks stay whole.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskUnits {
    granularity: Granularity,
    members: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl MaskUnits {
    pub fn new(layout: &BlockLayout, granularity: Granularity) -> Self {
        let mut members = Vec::new();
        let mut block_of = Vec::new();
        for b in 0..layout.num_blocks() {
            let range = layout.range(b).expect("block index in range");
            let start = range.start;
            let units: Vec<Vec<usize>> = match (granularity, layout.shape(b)) {
                (Granularity::Element, _) => range.map(|i| vec![i]).collect(),
                (Granularity::Row, Some((rows, cols))) => (0..rows)
                    .map(|r| (0..cols).map(|c| start + r * cols + c).collect())
                    .collect(),
                (Granularity::Column, Some((rows, cols))) => (0..cols)
                    .map(|c| (0..rows).map(|r| start + r * cols + c).collect())
                    .collect(),
                _ => vec![range.collect()],
            };
            block_of.extend(std::iter::repeat_n(b, units.len()));
            members.extend(units);
        }
        Self {
            granularity,
            members,
            block_of,
        }
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self, u: usize) -> &[usize] {
        &self.members[u]
    }

    pub fn block_of(&self, u: usize) -> usize {
        self.block_of[u]
    }

    pub fn gather(&self, u: usize, v: &[f64]) -> Vec<f64> {
        self.members[u].iter().map(|&i| v[i]).collect()
    }

    /// Expand a per-unit value to a per-element vector.
    pub fn expand(&self, per_unit: &[f64], dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (u, idx) in self.members.iter().enumerate() {
            for &i in idx {
                out[i] = per_unit[u];
            }
        }
        out
    }
}

/// One uniform draw per unit. Every wrapper mode consumes exactly this many
/// draws per step so that runs in different modes stay on common random
/// numbers.
pub fn draw_uniforms(units: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..units).map(|_| rng.random::<f64>()).collect()
}

/// i.i.d. Bernoulli(`p`) masks; `p = 1` always keeps.
pub fn draw_masks(units: usize, p: f64, rng: &mut RngStream) -> Vec<bool> {
    draw_uniforms(units, rng)
        .into_iter()
        .map(|u| u < p)
        .collect()
}

/// Unbiased scaled masking: every unit of `delta` is multiplied by `m / p`.
pub fn skip_update(
    delta: &BlockVector,
    units: &MaskUnits,
    masks: &[bool],
    p: f64,
) -> Result<BlockVector> {
    check_len(units.len(), masks.len())?;
    let mut out = delta.clone();
    for (u, &keep) in masks.iter().enumerate() {
        let factor = if keep { 1.0 / p } else { 0.0 };
        for &i in units.members(u) {
            out[i] *= factor;
        }
    }
    Ok(out)
}

/// `sigmoid(cossim(momentum, grad) / temperature)`
pub fn magma_score(momentum: &[f64], grad: &[f64], temperature: f64) -> Result<f64> {
    Ok(sigmoid(cossim(momentum, grad)? / temperature))
}

/// Keep coordinates where the update agrees in sign with the gradient and
/// rescale the survivors by `n / (kept + 1e-12)`.
pub fn cautious_mask(delta: &[f64], grad: &[f64]) -> Result<Vec<f64>> {
    check_len(delta.len(), grad.len())?;
    let keep: Vec<bool> = delta.iter().zip(grad).map(|(d, g)| d * g > 0.0).collect();
    let kept = keep.iter().filter(|&&k| k).count() as f64;
    let scale = delta.len() as f64 / (kept + 1e-12);
    Ok(delta
        .iter()
        .zip(&keep)
        .map(|(&d, &k)| if k { d * scale } else { 0.0 })
        .collect())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;

    fn matrix_layout() -> BlockLayout {
        BlockLayout::from_matrices(&[(2, 3)]).unwrap()
    }

    #[test]
    fn unit_partitions() {
        let l = matrix_layout();
        let rows = MaskUnits::new(&l, Granularity::Row);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows.members(1), &[3, 4, 5]);
        let cols = MaskUnits::new(&l, Granularity::Column);
        assert_eq!(cols.len(), 3);
        assert_eq!(cols.members(2), &[2, 5]);
        let elems = MaskUnits::new(&l, Granularity::Element);
        assert_eq!(elems.len(), 6);
        let vec_layout = BlockLayout::from_sizes(&[3, 2]).unwrap();
        // vector blocks fall back to whole-block units
        assert_eq!(MaskUnits::new(&vec_layout, Granularity::Row).len(), 2);
        assert_eq!(MaskUnits::new(&vec_layout, Granularity::Column).len(), 2);
    }

    #[test]
    fn full_survival_keeps_everything() {
        let mut rng = RngStream::new(0, 0);
        assert!(draw_masks(1000, 1.0, &mut rng).into_iter().all(|m| m));
    }

    #[test]
    fn half_survival_rate() {
        let mut rng = RngStream::new(1, 5);
        let n = 100_000;
        let kept = draw_masks(n, 0.5, &mut rng).into_iter().filter(|&m| m).count();
        let mean = kept as f64 / n as f64;
        assert!((0.495..=0.505).contains(&mean), "{mean}");
    }

    #[test]
    fn masks_deterministic() {
        let a = draw_masks(64, 0.3, &mut RngStream::new(9, 2));
        let b = draw_masks(64, 0.3, &mut RngStream::new(9, 2));
        assert_eq!(a, b);
    }

    #[test]
    fn skip_update_scales_survivors() {
        let layout = Arc::new(BlockLayout::from_sizes(&[2, 1]).unwrap());
        let delta = BlockVector::new(vec![1.0, -3.0, 0.5], layout.clone()).unwrap();
        let units = MaskUnits::new(&layout, Granularity::Block);
        let out = skip_update(&delta, &units, &[true, false], 0.5).unwrap();
        assert_eq!(out.as_slice(), &[2.0, -6.0, 0.0]);
        // averaging both outcomes of each unit recovers delta
        let kept = skip_update(&delta, &units, &[true, true], 0.5).unwrap();
        let dropped = skip_update(&delta, &units, &[false, false], 0.5).unwrap();
        for i in 0..3 {
            assert_eq!(0.5 * kept[i] + 0.5 * dropped[i], delta[i]);
        }
    }

    #[test]
    fn score_cases() {
        let g = [0.3, -1.2, 2.0];
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        assert_eq!(magma_score(&[1.0, 0.0], &[0.0, 5.0], 0.7).unwrap(), 0.5);
        let s = magma_score(&g, &g, 2.0).unwrap();
        assert!((s - 0.622_459_331_201_854_6).abs() < 1e-15);
        let s = magma_score(&neg, &g, 2.0).unwrap();
        assert!((s - 0.377_540_668_798_145_4).abs() < 1e-15);
    }

    #[test]
    fn cautious_cases() {
        let out = cautious_mask(&[1.0, 1.0], &[1.0, -1.0]).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-11 && out[1] == 0.0);
        let d = [0.5, -2.0, 3.0];
        let out = cautious_mask(&d, &d).unwrap();
        for (a, b) in out.iter().zip(&d) {
            assert!((a - b).abs() < 1e-11);
        }
        let out = cautious_mask(&d, &[1.0, -0.1, 4.0]).unwrap();
        for (a, b) in out.iter().zip(&d) {
            assert!((a - b).abs() < 1e-11);
        }
    }
}
