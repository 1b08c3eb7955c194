use std::sync::Arc;

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::features::{Extractor, Schema};
use crate::signal::{segment, AudioClip};

/// Feature rows for segments cut from a list of clips.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTable {
    pub rows: Array2<f64>,
    /// Index into the clip list each row came from.
    pub clip_index: Vec<usize>,
    pub source_ids: Vec<String>,
    pub schema: Arc<Schema>,
}

impl SegmentTable {
    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    /// Rows whose clip index satisfies `keep`, in original order.
    pub fn filter_clips(&self, keep: impl Fn(usize) -> bool) -> SegmentTable {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.clip_index[i])).collect();
        SegmentTable {
            rows: self.rows.select(Axis(0), &idx),
            clip_index: idx.iter().map(|&i| self.clip_index[i]).collect(),
            source_ids: idx.iter().map(|&i| self.source_ids[i].clone()).collect(),
            schema: Arc::clone(&self.schema),
        }
    }
}

/// Cuts `per_clip` segments from every clip and extracts their features.
/// Clip `i` is segmented with seed `derive(seed, i)`; rows are ordered by clip
/// then segment.
pub fn featurize_clips(clips: &[AudioClip], extractor: &Extractor, length_s: f64, per_clip: usize, seed: u64) -> crate::Result<SegmentTable> {
    let per: Vec<Vec<Vec<f64>>> = clips
        .par_iter()
        .enumerate()
        .map(|(i, clip)| -> crate::Result<Vec<Vec<f64>>> {
            let segs = segment(clip, length_s, per_clip, crate::seed::derive(seed, i as u64))?;
            segs.iter().map(|s| Ok(extractor.extract(s)?.values)).collect()
        })
        .collect::<crate::Result<_>>()?;

    let width = extractor.schema().len();
    let mut flat = Vec::with_capacity(clips.len() * per_clip * width);
    let mut clip_index = Vec::new();
    let mut source_ids = Vec::new();
    for (i, rows) in per.into_iter().enumerate() {
        for r in rows {
            flat.extend(r);
            clip_index.push(i);
            source_ids.push(clips[i].source_id().to_string());
        }
    }
    let rows = Array2::from_shape_vec((clip_index.len(), width), flat).expect("fixed-width rows");
    Ok(SegmentTable { rows, clip_index, source_ids, schema: Arc::clone(extractor.schema()) })
}
