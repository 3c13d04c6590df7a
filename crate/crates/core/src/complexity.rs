//! DCT-energy complexity features computed from raw 8-bit YUV 4:2:0 clips.
//!
//! Each luma plane is tiled into 32×32 blocks. A block's texture energy is the
//! weighted sum of its absolute DCT-II AC coefficients, with weights growing
//! exponentially towards high frequencies. Frame energy `E` is the mean block
//! energy, temporal energy `h` the mean absolute change of block energies
//! against the previous frame, and luma the mean sample value.
//!
//! Partial blocks at the right and bottom edges are completed by replicating
//! the last column/row, so flat content always has zero energy.

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{Clip, Framerate};
use crate::scalar::Scalar;

pub const BLOCK_SIZE: usize = 32;
pub const BLOCK_LEN: usize = BLOCK_SIZE * BLOCK_SIZE;

#[derive(Debug, Error)]
pub enum ComplexityError {
    #[error("format error: {0}")]
    Format(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Coefficient weight `2^((i + j)/2 - 2)` for row frequency `i`, column frequency `j`.
pub fn coefficient_weight(i: usize, j: usize) -> f64 {
    ((i + j) as f64 / 2.0 - 2.0).exp2()
}

/// Precomputed orthonormal DCT-II basis and coefficient weights for 32×32 blocks.
#[derive(Debug, Clone)]
pub struct BlockTransform<T> {
    // basis[k * N + n] = a(k) cos(pi (2n + 1) k / 2N)
    basis: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> Default for BlockTransform<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> BlockTransform<T> {
    pub fn new() -> Self {
        let n = BLOCK_SIZE;
        let mut basis = Vec::with_capacity(n * n);
        for k in 0..n {
            let a = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            for x in 0..n {
                let arg = std::f64::consts::PI * (2 * x + 1) as f64 * k as f64 / (2 * n) as f64;
                basis.push(T::of(a * arg.cos()));
            }
        }
        let weights = (0..n * n)
            .map(|idx| T::of(coefficient_weight(idx / n, idx % n)))
            .collect();
        Self { basis, weights }
    }

    /// Weighted AC energy of one row-major 32×32 block.
    pub fn energy(&self, block: &[T]) -> T {
        assert_eq!(block.len(), BLOCK_LEN, "block must hold 32x32 samples");
        let n = BLOCK_SIZE;
        // Removing the mean only alters the DC coefficient, which is excluded,
        // and it makes flat blocks transform to exact zeros.
        let mean = block.iter().copied().sum::<T>() / T::of_usize(BLOCK_LEN);
        let centered: Vec<T> = block.iter().map(|&v| v - mean).collect();

        // Row pass: tmp[y][k] = sum_x centered[y][x] basis[k][x]
        let mut tmp = vec![T::zero(); BLOCK_LEN];
        for y in 0..n {
            let row = &centered[y * n..(y + 1) * n];
            for k in 0..n {
                let b = &self.basis[k * n..(k + 1) * n];
                let mut acc = T::zero();
                for x in 0..n {
                    acc += row[x] * b[x];
                }
                tmp[y * n + k] = acc;
            }
        }
        // Column pass: coeff[i][j] = sum_y basis[i][y] tmp[y][j]
        let mut energy = T::zero();
        for i in 0..n {
            let b = &self.basis[i * n..(i + 1) * n];
            for j in 0..n {
                if i == 0 && j == 0 {
                    continue;
                }
                let mut acc = T::zero();
                for y in 0..n {
                    acc += b[y] * tmp[y * n + j];
                }
                energy += self.weights[i * n + j] * acc.abs();
            }
        }
        energy
    }
}

/// Energy of a single block with a freshly built transform.
pub fn block_dct_energy<T: Scalar>(block: &[T]) -> T {
    BlockTransform::<T>::new().energy(block)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameFeatures<T> {
    pub frame_index: usize,
    pub spatial_energy: T,
    /// Zero for the first frame.
    pub temporal_energy: T,
    pub luma: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipComplexity<T> {
    pub frames: Vec<FrameFeatures<T>>,
    pub spatial_energy: T,
    pub temporal_energy: T,
    pub luma: T,
}

/// Clip metadata needed to turn a complexity summary into a features row.
#[derive(Debug, Clone)]
pub struct ClipMetadata {
    pub clip_id: String,
    pub width: u32,
    pub height: u32,
    pub framerate: Framerate,
    pub source_group: String,
}

impl<T: Scalar> ClipComplexity<T> {
    pub fn to_clip(&self, meta: &ClipMetadata) -> Clip {
        Clip {
            clip_id: meta.clip_id.clone(),
            width: meta.width,
            height: meta.height,
            framerate: meta.framerate,
            num_frames: self.frames.len() as u32,
            spatial_energy: self.spatial_energy.to_f64_lossy(),
            temporal_energy: self.temporal_energy.to_f64_lossy(),
            luma: self.luma.to_f64_lossy(),
            source_group: meta.source_group.clone(),
        }
    }

    /// Writes the per-frame table `frame_index,E,h,luma`.
    pub fn write_frames_csv(&self, w: impl Write) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["frame_index", "E", "h", "luma"])?;
        for f in &self.frames {
            wtr.write_record([
                f.frame_index.to_string(),
                f.spatial_energy.to_string(),
                f.temporal_energy.to_string(),
                f.luma.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Bytes in one 8-bit 4:2:0 frame; chroma planes round odd dimensions up.
pub fn yuv420_frame_len(width: usize, height: usize) -> usize {
    width * height + 2 * width.div_ceil(2) * height.div_ceil(2)
}

/// Per-frame analysis over in-memory luma planes.
pub struct FrameAnalyzer<T> {
    width: usize,
    height: usize,
    transform: BlockTransform<T>,
}

impl<T: Scalar> FrameAnalyzer<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            transform: BlockTransform::new(),
        }
    }

    fn blocks_x(&self) -> usize {
        self.width.div_ceil(BLOCK_SIZE)
    }

    fn blocks_y(&self) -> usize {
        self.height.div_ceil(BLOCK_SIZE)
    }

    /// Energy of every block of a luma plane, raster order.
    pub fn block_energies(&self, luma: &[u8]) -> Vec<T> {
        assert_eq!(luma.len(), self.width * self.height);
        let (bx, by) = (self.blocks_x(), self.blocks_y());
        (0..bx * by)
            .into_par_iter()
            .map(|b| {
                let (x0, y0) = ((b % bx) * BLOCK_SIZE, (b / bx) * BLOCK_SIZE);
                let mut block = [T::zero(); BLOCK_LEN];
                for dy in 0..BLOCK_SIZE {
                    let y = (y0 + dy).min(self.height - 1);
                    let row = &luma[y * self.width..(y + 1) * self.width];
                    for dx in 0..BLOCK_SIZE {
                        let x = (x0 + dx).min(self.width - 1);
                        block[dy * BLOCK_SIZE + dx] = T::of(f64::from(row[x]));
                    }
                }
                self.transform.energy(&block)
            })
            .collect()
    }

    pub fn mean_luma(&self, luma: &[u8]) -> T {
        let total: u64 = luma.iter().map(|&v| u64::from(v)).sum();
        T::of(total as f64 / luma.len() as f64)
    }

    /// Analyzes a sequence of luma planes. `h` of the first frame is zero.
    pub fn analyze_planes<'a>(
        &self,
        planes: impl IntoIterator<Item = &'a [u8]>,
    ) -> Result<ClipComplexity<T>, ComplexityError> {
        let mut acc = ClipAccumulator::default();
        for plane in planes {
            if plane.len() != self.width * self.height {
                return Err(ComplexityError::Format(format!(
                    "luma plane holds {} samples, expected {}",
                    plane.len(),
                    self.width * self.height
                )));
            }
            acc.push(self.block_energies(plane), self.mean_luma(plane));
        }
        acc.finish()
    }
}

#[derive(Default)]
struct ClipAccumulator<T> {
    frames: Vec<FrameFeatures<T>>,
    previous: Option<Vec<T>>,
}

impl<T: Scalar> ClipAccumulator<T> {
    fn push(&mut self, energies: Vec<T>, luma: T) {
        let count = T::of_usize(energies.len());
        let spatial = energies.iter().copied().sum::<T>() / count;
        let temporal = match &self.previous {
            Some(prev) => {
                prev.iter()
                    .zip(&energies)
                    .map(|(&a, &b)| (b - a).abs())
                    .sum::<T>()
                    / count
            }
            None => T::zero(),
        };
        self.frames.push(FrameFeatures {
            frame_index: self.frames.len(),
            spatial_energy: spatial,
            temporal_energy: temporal,
            luma,
        });
        self.previous = Some(energies);
    }

    fn finish(self) -> Result<ClipComplexity<T>, ComplexityError> {
        let n = self.frames.len();
        if n == 0 {
            return Err(ComplexityError::Domain("clip has no frames".into()));
        }
        let spatial = self.frames.iter().map(|f| f.spatial_energy).sum::<T>() / T::of_usize(n);
        let luma = self.frames.iter().map(|f| f.luma).sum::<T>() / T::of_usize(n);
        let temporal = if n > 1 {
            self.frames[1..].iter().map(|f| f.temporal_energy).sum::<T>() / T::of_usize(n - 1)
        } else {
            T::zero()
        };
        Ok(ClipComplexity {
            frames: self.frames,
            spatial_energy: spatial,
            temporal_energy: temporal,
            luma,
        })
    }
}

/// Analyzes a raw YUV420p 8-bit file of `num_frames` frames.
pub fn analyze_yuv<T: Scalar>(
    path: &Path,
    width: usize,
    height: usize,
    num_frames: usize,
) -> Result<ClipComplexity<T>, ComplexityError> {
    if num_frames == 0 {
        return Err(ComplexityError::Domain("num_frames must be at least 1".into()));
    }
    if width == 0 || height == 0 {
        return Err(ComplexityError::Domain(format!(
            "frame size {width}x{height} must be at least 1x1"
        )));
    }
    let io_err = |source| ComplexityError::Io {
        path: path.to_path_buf(),
        source,
    };
    let frame_len = yuv420_frame_len(width, height);
    let expected = (frame_len * num_frames) as u64;
    let actual = std::fs::metadata(path).map_err(io_err)?.len();
    if actual != expected {
        return Err(ComplexityError::Format(format!(
            "{} is {actual} bytes, expected {expected} for {num_frames} frames of {width}x{height} yuv420p",
            path.display()
        )));
    }
    let mut reader = BufReader::new(File::open(path).map_err(io_err)?);
    let analyzer = FrameAnalyzer::<T>::new(width, height);
    let mut frame = vec![0u8; frame_len];
    let mut acc = ClipAccumulator::default();
    for _ in 0..num_frames {
        reader.read_exact(&mut frame).map_err(io_err)?;
        let luma = &frame[..width * height];
        acc.push(analyzer.block_energies(luma), analyzer.mean_luma(luma));
    }
    acc.finish()
}
