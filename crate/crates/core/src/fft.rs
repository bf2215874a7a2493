//! Zero-padded n-dimensional FFT convolution on cubic arrays.
//!
//! Arrays are row-major, axis 0 slowest, and live in the low corner of a
//! `size^dim` padded buffer. The last axis uses a real-to-complex transform
//! and keeps `size/2 + 1` frequencies; the other axes are complex. Lines
//! that are known to be zero (forward) or whose results are discarded
//! (inverse) are skipped.

use std::cell::RefCell;
use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<(FftPlanner<f64>, RealFftPlanner<f64>)> =
        RefCell::new((FftPlanner::new(), RealFftPlanner::new()));
    static POOL: RefCell<Vec<Vec<Complex64>>> = const { RefCell::new(Vec::new()) };
}

const POOL_CAP: usize = 8;
/// Columns gathered per batch when transforming a strided axis.
const BATCH: usize = 16;

fn pooled(len: usize) -> Vec<Complex64> {
    let mut v = POOL.with(|p| p.borrow_mut().pop()).unwrap_or_default();
    v.clear();
    v.resize(len, Complex64::new(0.0, 0.0));
    v
}

/// Smallest integer `>= target` whose prime factors are all in {2, 3, 5, 7}.
pub fn fast_size(target: usize) -> usize {
    let mut n = target.max(1);
    loop {
        let mut r = n;
        for p in [2, 3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return n;
        }
        n += 1;
    }
}

/// Half spectrum of a zero-padded real array: `size^(dim−1)·(size/2+1)`
/// entries, the last axis truncated to nonnegative frequencies.
#[derive(Debug, Clone)]
pub struct Spectrum(pub(crate) Vec<Complex64>);

impl Spectrum {
    /// Entrywise `f(self, other)`.
    pub fn zip_with(&self, other: &Spectrum, f: impl Fn(Complex64, Complex64) -> Complex64) -> Spectrum {
        assert_eq!(self.0.len(), other.0.len());
        let mut out = pooled(0);
        out.extend(self.0.iter().zip(&other.0).map(|(a, b)| f(*a, *b)));
        Spectrum(out)
    }
}

impl Drop for Spectrum {
    fn drop(&mut self) {
        let v = std::mem::take(&mut self.0);
        if v.capacity() > 0 {
            // may run during thread teardown, when the pool is gone
            let _ = POOL.try_with(|p| {
                let mut p = p.borrow_mut();
                if p.len() < POOL_CAP {
                    p.push(v);
                }
            });
        }
    }
}

/// FFT plans for one `(dim, size)` padded layout.
#[derive(Clone)]
pub struct ConvEngine {
    dim: usize,
    size: usize,
    half: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

impl std::fmt::Debug for ConvEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvEngine").field("dim", &self.dim).field("size", &self.size).finish()
    }
}

impl ConvEngine {
    /// Engine able to hold the full linear convolution of two `cells^dim`
    /// arrays without wrap-around.
    pub fn for_autoconvolution(dim: usize, cells: usize) -> Self {
        Self::with_size(dim, fast_size(2 * cells - 1))
    }

    pub fn with_size(dim: usize, size: usize) -> Self {
        assert!(dim >= 1 && size >= 1);
        PLANNER.with(|p| {
            let (c, r) = &mut *p.borrow_mut();
            Self {
                dim,
                size,
                half: size / 2 + 1,
                fwd: c.plan_fft_forward(size),
                inv: c.plan_fft_inverse(size),
                r2c: r.plan_fft_forward(size),
                c2r: r.plan_fft_inverse(size),
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn rows(&self) -> usize {
        self.size.pow(self.dim as u32 - 1)
    }

    /// Padded-layout row number of the `r`-th row of a `cells^dim` array.
    fn row_offsets(&self, cells: usize) -> impl Iterator<Item = usize> + '_ {
        let mut idx = vec![0usize; self.dim - 1];
        let size = self.size;
        (0..cells.pow(self.dim as u32 - 1)).map(move |r| {
            if r > 0 {
                crate::grid::increment(&mut idx, cells);
            }
            idx.iter().fold(0, |acc, &i| acc * size + i)
        })
    }

    /// Forward transform of a `cells^dim` real array embedded at the origin.
    pub fn forward(&self, values: &[f64], cells: usize) -> Spectrum {
        assert!(cells <= self.size, "array does not fit padded layout");
        assert_eq!(values.len(), cells.pow(self.dim as u32));
        let half = self.half;
        let mut buf = pooled(self.rows() * half);
        let mut line = vec![0.0; self.size];
        let mut scratch = self.r2c.make_scratch_vec();
        for (row, base) in values.chunks(cells).zip(self.row_offsets(cells)) {
            line[..cells].copy_from_slice(row);
            line[cells..].fill(0.0);
            let out = &mut buf[base * half..(base + 1) * half];
            self.r2c.process_with_scratch(&mut line, out, &mut scratch).expect("consistent lengths");
        }
        // Transforming later axes first means every axis below the current
        // one still only has `cells` nonzero positions.
        for axis in (0..self.dim - 1).rev() {
            self.transform_axis(&mut buf, axis, cells, &*self.fwd);
        }
        Spectrum(buf)
    }

    /// Inverse transform, normalized, returning the low `cells^dim` corner.
    pub fn inverse(&self, mut spectrum: Spectrum, cells: usize) -> Vec<f64> {
        assert!(cells <= self.size);
        let half = self.half;
        let buf = &mut spectrum.0;
        assert_eq!(buf.len(), self.rows() * half);
        // First axis first: afterwards only `cells` positions along it are kept.
        for axis in 0..self.dim - 1 {
            self.transform_axis(buf, axis, cells, &*self.inv);
        }
        let norm = 1.0 / (self.size as f64).powi(self.dim as i32);
        let mut line = vec![0.0; self.size];
        let mut scratch = self.c2r.make_scratch_vec();
        let mut out = Vec::with_capacity(cells.pow(self.dim as u32));
        for base in self.row_offsets(cells) {
            let spec = &mut buf[base * half..(base + 1) * half];
            // exactly real for a Hermitian spectrum; drop rounding residue
            spec[0].im = 0.0;
            if self.size % 2 == 0 {
                spec[half - 1].im = 0.0;
            }
            self.c2r.process_with_scratch(spec, &mut line, &mut scratch).expect("consistent lengths");
            out.extend(line[..cells].iter().map(|v| v * norm));
        }
        out
    }

    /// Transforms every line along the complex `axis` whose indices on
    /// axes before `axis` are all `< limit`.
    fn transform_axis(&self, buf: &mut [Complex64], axis: usize, limit: usize, fft: &dyn Fft<f64>) {
        let size = self.size;
        let stride = size.pow((self.dim - 2 - axis) as u32) * self.half;
        let block = size * stride;
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut outer = vec![0usize; axis];
        let mut lines = vec![Complex64::new(0.0, 0.0); BATCH.min(stride) * size];
        for o in 0..limit.pow(axis as u32) {
            if o > 0 {
                crate::grid::increment(&mut outer, limit);
            }
            let base = outer.iter().fold(0, |acc, &i| acc * size + i) * block;
            let chunk = &mut buf[base..base + block];
            for c0 in (0..stride).step_by(BATCH) {
                let w = BATCH.min(stride - c0);
                let lines = &mut lines[..w * size];
                // gather columns into contiguous lines
                for k in 0..size {
                    for (j, v) in chunk[k * stride + c0..k * stride + c0 + w].iter().enumerate() {
                        lines[j * size + k] = *v;
                    }
                }
                fft.process_with_scratch(lines, &mut scratch);
                for k in 0..size {
                    for (j, v) in chunk[k * stride + c0..k * stride + c0 + w].iter_mut().enumerate() {
                        *v = lines[j * size + k];
                    }
                }
            }
        }
    }
}
