//! Uniform n-dimensional grid functions with discrete L² geometry.
//!
//! A [`GridFn`] stores one value per cell of a [`GridSpec`], in row-major
//! order with axis 0 slowest. The value of cell `i` is the function at the
//! cell midpoint `origin + (i + ½)·h`, and the function is read as piecewise
//! constant on cells. Norms and inner products are midpoint-rule sums
//! weighted by the cell volume.

use crate::error::{Error, Result};

/// Geometry of a uniform grid with `cells` cells along each of `dim` axes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    dim: usize,
    cells: usize,
    origin: Vec<f64>,
    extent: Vec<f64>,
}

impl GridSpec {
    pub fn new(dim: usize, cells: usize, origin: Vec<f64>, extent: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("grid dimension must be at least 1".into()));
        }
        if cells < 2 {
            return Err(Error::Parameter(format!("grid needs at least 2 cells per axis, got {cells}")));
        }
        if origin.len() != dim || extent.len() != dim {
            return Err(Error::Parameter(format!(
                "origin/extent must have length {dim}, got {}/{}",
                origin.len(),
                extent.len()
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Parameter("grid origin must be finite".into()));
        }
        if extent.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::Parameter("grid extent components must be positive".into()));
        }
        // f64 overflow guard for cells^dim
        if cells.checked_pow(dim as u32).is_none() {
            return Err(Error::Parameter(format!("{cells}^{dim} cells overflows")));
        }
        Ok(Self { dim, cells, origin, extent })
    }

    /// The unit cube `[0,1]^dim` split into `cells` cells per axis.
    pub fn unit_cube(dim: usize, cells: usize) -> Result<Self> {
        Self::new(dim, cells, vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    /// Total number of cells, `cells^dim`.
    pub fn len(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mesh_width(&self, axis: usize) -> f64 {
        self.extent[axis] / self.cells as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.mesh_width(a)).product()
    }

    /// Whether this is the unit cube (origin 0, extent 1 on every axis).
    pub fn is_unit_cube(&self) -> bool {
        self.origin.iter().all(|&o| o == 0.0) && self.extent.iter().all(|&e| e == 1.0)
    }

    /// Multi-index of the flat row-major position `flat`.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            idx[a] = flat % self.cells;
            flat /= self.cells;
        }
        idx
    }

    /// Flat row-major position of a multi-index.
    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.cells + i)
    }

    /// Midpoint coordinates of the cell with the given multi-index.
    pub fn midpoint(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(a, &i)| self.origin[a] + (i as f64 + 0.5) * self.mesh_width(a))
            .collect()
    }

    /// Midpoint coordinate along one axis for a one-dimensional cell index.
    pub fn axis_midpoint(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + (i as f64 + 0.5) * self.mesh_width(axis)
    }
}

/// A real function discretized on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridFn {
    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Structure(format!(
                "expected {} values for a {}^{} grid, got {}",
                spec.len(),
                spec.cells(),
                spec.dim(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("grid values must be finite".into()));
        }
        Ok(Self { spec, values })
    }

    /// Construction for values produced inside the crate, whose length is
    /// known to match.
    pub(crate) fn from_raw(spec: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        Self { spec, values }
    }

    pub fn zeros(spec: GridSpec) -> Self {
        let n = spec.len();
        Self { spec, values: vec![0.0; n] }
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        let n = spec.len();
        Self { spec, values: vec![c; n] }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.spec.ravel(idx)]
    }

    /// Discrete L² inner product `(∏h)·Σ a·b`.
    pub fn inner(&self, other: &GridFn) -> Result<f64> {
        ensure_same_spec(&self.spec, &other.spec)?;
        Ok(self.spec.cell_volume() * dot(&self.values, &other.values))
    }

    pub fn scale(&self, a: f64) -> GridFn {
        GridFn::from_raw(self.spec.clone(), self.values.iter().map(|v| a * v).collect())
    }

    /// Maximum absolute value.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn ensure_same_spec(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a != b {
        return Err(Error::Structure(format!(
            "grid mismatch: {}^{} on {:?}+{:?} vs {}^{} on {:?}+{:?}",
            a.cells, a.dim, a.origin, a.extent, b.cells, b.dim, b.origin, b.extent
        )));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Samples `f` at every cell midpoint of `spec`.
pub fn sample<F>(f: F, spec: &GridSpec) -> GridFn
where
    F: Fn(&[f64]) -> f64,
{
    let mut idx = vec![0usize; spec.dim()];
    let mut t = vec![0.0; spec.dim()];
    let mut values = Vec::with_capacity(spec.len());
    for flat in 0..spec.len() {
        if flat > 0 {
            increment(&mut idx, spec.cells());
        }
        for (a, ta) in t.iter_mut().enumerate() {
            *ta = spec.axis_midpoint(a, idx[a]);
        }
        values.push(f(&t));
    }
    GridFn::from_raw(spec.clone(), values)
}

/// Row-major odometer step.
pub(crate) fn increment(idx: &mut [usize], cells: usize) {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < cells {
            return;
        }
        idx[a] = 0;
    }
}

/// Midpoint-rule L² norm `sqrt((∏h)·Σ v²)`.
pub fn l2_norm(x: &GridFn) -> f64 {
    (x.spec.cell_volume() * dot(&x.values, &x.values)).sqrt()
}

/// `a·x + b·z`.
pub fn combine(a: f64, x: &GridFn, b: f64, z: &GridFn) -> Result<GridFn> {
    ensure_same_spec(&x.spec, &z.spec)?;
    let values = x.values.iter().zip(&z.values).map(|(u, v)| a * u + b * v).collect();
    Ok(GridFn::from_raw(x.spec.clone(), values))
}

/// Pointwise clamp at zero from below; the metric projection onto D⁺.
pub fn project_nonneg(x: &GridFn) -> GridFn {
    GridFn::from_raw(x.spec.clone(), x.values.iter().map(|v| v.max(0.0)).collect())
}

/// Multi-indices with `|value| > tol`, in row-major order.
pub fn support_indices(x: &GridFn, tol: f64) -> Vec<Vec<usize>> {
    x.values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > tol)
        .map(|(flat, _)| x.spec.unravel(flat))
        .collect()
}
