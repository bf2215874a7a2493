//! Exact solutions, perturbation sequences and Fresnel integrals.

mod fresnel;

pub use fresnel::{fresnel_c, fresnel_s, FRESNEL_LIMIT};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sample, GridFn, GridSpec};

/// The test densities and their tensor products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomId {
    X1,
    X2,
    X3,
    /// `x₁(t₁)·x₂(t₂)`
    Product2D,
    /// `x₁(t₁)·x₂(t₂)·x₃(t₃)`
    Product3D,
}

impl PhantomId {
    pub fn dim(self) -> usize {
        match self {
            PhantomId::X1 | PhantomId::X2 | PhantomId::X3 => 1,
            PhantomId::Product2D => 2,
            PhantomId::Product3D => 3,
        }
    }

    /// The product phantom used for an `n`-dimensional study.
    pub fn product_for_dim(n: usize) -> Result<Self> {
        match n {
            1 => Ok(PhantomId::X1),
            2 => Ok(PhantomId::Product2D),
            3 => Ok(PhantomId::Product3D),
            _ => Err(Error::Parameter(format!("no product phantom for n = {n}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PhantomId::X1 => "x1",
            PhantomId::X2 => "x2",
            PhantomId::X3 => "x3",
            PhantomId::Product2D => "product2d",
            PhantomId::Product3D => "product3d",
        }
    }
}

impl std::str::FromStr for PhantomId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x1" => Ok(PhantomId::X1),
            "x2" => Ok(PhantomId::X2),
            "x3" => Ok(PhantomId::X3),
            "product2d" => Ok(PhantomId::Product2D),
            "product3d" => Ok(PhantomId::Product3D),
            other => Err(Error::Parameter(format!("unknown phantom '{other}'"))),
        }
    }
}

pub fn x1(t: f64) -> f64 {
    2.0 * (t + 1.0) / 3.0
}

pub fn x2(t: f64) -> f64 {
    PI / (2.0 + PI) * (((t - 0.5) * PI).cos() + 1.0)
}

/// Piecewise density; the point `t = ½` takes the right branch.
pub fn x3(t: f64) -> f64 {
    if t < 0.5 {
        1.25
    } else {
        t
    }
}

/// Tensor-product density without domain checks.
pub(crate) fn density_unchecked(id: PhantomId, t: &[f64]) -> f64 {
    match id {
        PhantomId::X1 => x1(t[0]),
        PhantomId::X2 => x2(t[0]),
        PhantomId::X3 => x3(t[0]),
        PhantomId::Product2D => x1(t[0]) * x2(t[1]),
        PhantomId::Product3D => x1(t[0]) * x2(t[1]) * x3(t[2]),
    }
}

/// Evaluates the phantom at `t ∈ [0,1]^dim`.
pub fn density(id: PhantomId, t: &[f64]) -> Result<f64> {
    if t.len() != id.dim() {
        return Err(Error::Domain(format!("{} takes {} coordinates, got {}", id.name(), id.dim(), t.len())));
    }
    if t.iter().any(|&s| !(0.0..=1.0).contains(&s)) {
        return Err(Error::Domain(format!("{t:?} is outside the unit cube")));
    }
    Ok(density_unchecked(id, t))
}

/// Phantom sampled on the `m`-cell unit cube of its dimension.
pub fn sample_phantom(id: PhantomId, m: usize) -> Result<GridFn> {
    let spec = GridSpec::unit_cube(id.dim(), m)?;
    Ok(sample(|t| density_unchecked(id, t), &spec))
}

fn ensure_unit(spec: &GridSpec) -> Result<()> {
    if !spec.is_unit_cube() {
        return Err(Error::Structure("perturbations live on the unit cube".into()));
    }
    Ok(())
}

/// Oscillating perturbation `√2·r·sin(k²t₁²)`, constant along the other axes.
pub fn fresnel_perturbation(k: u32, r: f64, spec: &GridSpec) -> Result<GridFn> {
    ensure_unit(spec)?;
    if k == 0 {
        return Err(Error::Parameter("k must be positive".into()));
    }
    let k2 = (k as f64).powi(2);
    let amp = std::f64::consts::SQRT_2 * r;
    Ok(sample(|t| amp * (k2 * t[0] * t[0]).sin(), spec))
}

/// Corner bump `k^{n/2}·r` on `[1−1/k, 1]ⁿ`; its discrete norm is exactly `r`.
pub fn corner_perturbation(k: usize, r: f64, spec: &GridSpec) -> Result<GridFn> {
    ensure_unit(spec)?;
    let m = spec.cells();
    if k < 3 {
        return Err(Error::Parameter(format!("corner perturbation needs k ≥ 3, got {k}")));
    }
    if m % k != 0 {
        return Err(Error::Parameter(format!("k = {k} does not divide m = {m}")));
    }
    let first = m - m / k;
    let height = (k as f64).powf(spec.dim() as f64 / 2.0) * r;
    let values = (0..spec.len())
        .map(|flat| if spec.unravel(flat).iter().all(|&i| i >= first) { height } else { 0.0 })
        .collect();
    GridFn::from_values(spec.clone(), values)
}
