//! Per-image visual feature sets: loading, validation, normalization,
//! pooling, congruence remapping, and synthetic generation.

mod congruence;
mod io;
mod synth;

pub use congruence::{remap_order, BlindOrder, CongruenceMode};
pub use io::{load_features, write_features};
pub use synth::synthesize_features;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureLayout {
    /// One C-vector per image (pool5 style).
    Pooled,
    /// C×H×W grid per image; depth vectors live along C.
    Spatial,
}

/// Feature rows aligned to corpus line order. Row data is C×H×W
/// row-major (channel outermost); pooled sets have H = W = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    layout: FeatureLayout,
    rows: usize,
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureSet {
    pub fn new(
        layout: FeatureLayout,
        rows: usize,
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if layout == FeatureLayout::Pooled && (height != 1 || width != 1) {
            return Err(Error::config("pooled features must have H = W = 1"));
        }
        if rows * channels * height * width != data.len() || rows == 0 || channels == 0 {
            return Err(Error::Config(format!(
                "feature data length {} does not match {rows}×{channels}×{height}×{width}",
                data.len()
            )));
        }
        Ok(FeatureSet {
            layout,
            rows,
            channels,
            height,
            width,
            data,
        })
    }

    pub fn layout(&self) -> FeatureLayout {
        self.layout
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    fn row_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Raw C×H×W block of one image.
    pub fn row(&self, i: usize) -> &[f64] {
        let len = self.row_len();
        &self.data[i * len..(i + 1) * len]
    }

    /// Pooled C-vector of one image; spatial sets are a contract error.
    pub fn pooled_row(&self, i: usize) -> Result<&[f64]> {
        if self.layout != FeatureLayout::Pooled {
            return Err(Error::contract(
                "pooled_row on a spatial feature set; pool it first",
            ));
        }
        Ok(self.row(i))
    }

    /// Depth vector (length C) at spatial position `p` of row `i`,
    /// positions numbered h·W + w.
    pub fn position_vector(&self, i: usize, p: usize) -> Vec<f64> {
        let hw = self.height * self.width;
        let row = self.row(i);
        (0..self.channels).map(|c| row[c * hw + p]).collect()
    }

    /// L2-normalize each spatial position's depth vector.
    pub fn normalize_depth(&self) -> Result<FeatureSet> {
        if self.layout != FeatureLayout::Spatial {
            return Err(Error::contract("normalize_depth expects spatial features"));
        }
        let mut out = self.clone();
        let hw = self.height * self.width;
        let len = self.row_len();
        for r in 0..self.rows {
            let row = &mut out.data[r * len..(r + 1) * len];
            for p in 0..hw {
                let mut sq = 0.0;
                for c in 0..self.channels {
                    let v = row[c * hw + p];
                    sq += v * v;
                }
                let norm = sq.sqrt();
                if norm > crate::tensor::ZERO_NORM_EPS {
                    for c in 0..self.channels {
                        row[c * hw + p] /= norm;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Average over the H×W grid, yielding a pooled set.
    pub fn global_average_pool(&self) -> Result<FeatureSet> {
        if self.layout != FeatureLayout::Spatial {
            return Err(Error::contract(
                "global_average_pool expects spatial features",
            ));
        }
        let hw = (self.height * self.width) as f64;
        let len = self.row_len();
        let mut data = Vec::with_capacity(self.rows * self.channels);
        for r in 0..self.rows {
            let row = &self.data[r * len..(r + 1) * len];
            for c in 0..self.channels {
                let s: f64 = row[c * (self.height * self.width)..(c + 1) * (self.height * self.width)]
                    .iter()
                    .sum();
                data.push(s / hw);
            }
        }
        FeatureSet::new(FeatureLayout::Pooled, self.rows, self.channels, 1, 1, data)
    }

    /// Reorder rows by `index_map` (new row i = old row index_map[i]).
    pub fn permuted(&self, index_map: &[usize]) -> Result<FeatureSet> {
        if index_map.len() != self.rows {
            return Err(Error::Config(format!(
                "index map length {} does not match {} rows",
                index_map.len(),
                self.rows
            )));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for &src in index_map {
            data.extend_from_slice(self.row(src));
        }
        FeatureSet::new(
            self.layout,
            self.rows,
            self.channels,
            self.height,
            self.width,
            data,
        )
    }
}
