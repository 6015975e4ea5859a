//! Windowed per-block alignment statistics from recorded steps.

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::optim::MaskUnits;

/// Mean alignment and EMA scale per block over one window of steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentWindow {
    /// First and last recorded step of the window.
    pub start: u64,
    pub end: u64,
    /// Mean `cossim(μ, g)` per block.
    pub alignment: Vec<f64>,
    /// Mean `s_t` per block.
    pub scale: Vec<f64>,
}

/// One recorded step: per-unit raw alignment and scale.
#[derive(Debug, Clone, Copy)]
pub struct AlignmentSample<'a> {
    pub step: u64,
    pub alignment: &'a [f64],
    pub scale: &'a [f64],
}

/// Average each unit's alignment and scale into its block, then over
/// consecutive windows of `window` samples (the last window may be shorter).
pub fn alignment_trace<'a, I>(samples: I, units: &MaskUnits, window: usize) -> Result<Vec<AlignmentWindow>>
where
    I: IntoIterator<Item = AlignmentSample<'a>>,
{
    if window == 0 {
        return Err(Error::Diagnostic("alignment window must be at least 1".into()));
    }
    let blocks = (0..units.len()).map(|u| units.block_of(u) + 1).max().unwrap_or(0);
    let mut per_block_units = vec![0usize; blocks];
    for u in 0..units.len() {
        per_block_units[units.block_of(u)] += 1;
    }

    let mut out = Vec::new();
    let mut acc: Option<(u64, u64, Vec<f64>, Vec<f64>, usize)> = None;
    let mut flush = |acc: &mut Option<(u64, u64, Vec<f64>, Vec<f64>, usize)>| {
        if let Some((start, end, a, s, n)) = acc.take() {
            out.push(AlignmentWindow {
                start,
                end,
                alignment: a.iter().map(|x| x / n as f64).collect(),
                scale: s.iter().map(|x| x / n as f64).collect(),
            });
        }
    };
    for sample in samples {
        check_len(units.len(), sample.alignment.len())?;
        check_len(units.len(), sample.scale.len())?;
        let entry = acc.get_or_insert_with(|| (sample.step, sample.step, vec![0.0; blocks], vec![0.0; blocks], 0));
        entry.1 = sample.step;
        for u in 0..units.len() {
            let b = units.block_of(u);
            let w = 1.0 / per_block_units[b] as f64;
            entry.2[b] += w * sample.alignment[u];
            entry.3[b] += w * sample.scale[u];
        }
        entry.4 += 1;
        if entry.4 == window {
            flush(&mut acc);
        }
    }
    flush(&mut acc);
    if out.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(out)
}
