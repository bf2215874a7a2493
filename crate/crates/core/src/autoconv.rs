//! The discrete autoconvolution operator `F(x) = x∗x` and its linearization.
//!
//! With mesh width `h = 1/m` on `[0,1]ⁿ` the discrete model is
//! `F(x)[j] = hⁿ · Σᵢ x[i]·x[j−i]`, the full linear convolution of the
//! coefficient arrays scaled by the cell volume. Output entry `j` sits at
//! `s = (j+1)·h` per axis. The full-data case keeps all `2m−1` taps per
//! axis; the limited-data case keeps the first `m`.
//!
//! Because the discrete map is an exact quadratic form, the identities
//! `F(x+d) = F(x) + F′(x)d + F(d)` and `⟨F′(x)d, w⟩ = ⟨d, F′(x)*w⟩` hold to
//! rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{ConvEngine, Spectrum};
use crate::grid::{self, ensure_same_spec, GridFn, GridSpec};

/// Which part of the image `x∗x` is observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataCase {
    /// Observations on all of `[0,2]ⁿ`.
    Full,
    /// Observations on `[0,1]ⁿ` only.
    Limited,
}

impl DataCase {
    pub fn name(self) -> &'static str {
        match self {
            DataCase::Full => "full",
            DataCase::Limited => "limited",
        }
    }

    /// Cells per axis of the output grid for an `m`-cell input.
    pub fn output_cells(self, m: usize) -> usize {
        match self {
            DataCase::Full => 2 * m - 1,
            DataCase::Limited => m,
        }
    }
}

impl std::fmt::Display for DataCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DataCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(DataCase::Full),
            "limited" => Ok(DataCase::Limited),
            other => Err(Error::Parameter(format!("unknown data case '{other}'"))),
        }
    }
}

/// Output grid of `F` for an input on the unit cube.
///
/// Cells have the input's width `h`; cell `j` has midpoint `(j+1)·h`.
pub fn output_spec(input: &GridSpec, case: DataCase) -> Result<GridSpec> {
    ensure_unit_cube(input)?;
    let m = input.cells();
    let h = 1.0 / m as f64;
    let cells = case.output_cells(m);
    GridSpec::new(
        input.dim(),
        cells,
        vec![0.5 * h; input.dim()],
        vec![cells as f64 * h; input.dim()],
    )
}

fn ensure_unit_cube(spec: &GridSpec) -> Result<()> {
    if !spec.is_unit_cube() {
        return Err(Error::Structure(format!(
            "operator input must live on the unit cube, got origin {:?} extent {:?}",
            spec.origin(),
            spec.extent()
        )));
    }
    Ok(())
}

/// The forward operator for a fixed input grid and data case, with FFT
/// plans prepared once.
#[derive(Debug, Clone)]
pub struct Autoconvolution {
    input: GridSpec,
    output: GridSpec,
    case: DataCase,
    engine: ConvEngine,
    volume: f64,
}

impl Autoconvolution {
    pub fn new(input: &GridSpec, case: DataCase) -> Result<Self> {
        let output = output_spec(input, case)?;
        Ok(Self {
            engine: ConvEngine::for_autoconvolution(input.dim(), input.cells()),
            volume: input.cell_volume(),
            input: input.clone(),
            output,
            case,
        })
    }

    pub fn input_spec(&self) -> &GridSpec {
        &self.input
    }

    pub fn output_spec(&self) -> &GridSpec {
        &self.output
    }

    pub fn case(&self) -> DataCase {
        self.case
    }

    fn check_input(&self, x: &GridFn) -> Result<()> {
        ensure_same_spec(&self.input, x.spec())
    }

    /// Spectrum of `x`, reusable by [`Self::apply_spectrum`] and
    /// [`Self::adjoint_spectrum`].
    pub fn spectrum(&self, x: &GridFn) -> Result<Spectrum> {
        self.check_input(x)?;
        Ok(self.engine.forward(x.values(), self.input.cells()))
    }

    pub fn apply(&self, x: &GridFn) -> Result<GridFn> {
        let xs = self.spectrum(x)?;
        Ok(self.apply_spectrum(&xs))
    }

    /// `F(x)` from the spectrum of `x`.
    pub fn apply_spectrum(&self, xs: &Spectrum) -> GridFn {
        let sq = xs.zip_with(xs, |a, _| a * a);
        self.finish(sq, self.volume)
    }

    /// `F′(x)d = 2·x∗d`.
    pub fn derivative(&self, x: &GridFn, d: &GridFn) -> Result<GridFn> {
        let xs = self.spectrum(x)?;
        let ds = self.spectrum(d)?;
        let prod = xs.zip_with(&ds, |a, b| a * b);
        Ok(self.finish(prod, 2.0 * self.volume))
    }

    /// `F′(x)*w`, the transpose of `d ↦ F′(x)d` under the discrete L²
    /// inner products.
    pub fn adjoint(&self, x: &GridFn, w: &GridFn) -> Result<GridFn> {
        let xs = self.spectrum(x)?;
        self.adjoint_spectrum(&xs, w)
    }

    /// `F′(x)*w` from the spectrum of `x`.
    ///
    /// `(F′(x)*w)[i] = 2hⁿ · Σ_j w[j]·x[j−i]`, a circular cross-correlation
    /// that is exact once the padded length is at least `2m−1`.
    pub fn adjoint_spectrum(&self, xs: &Spectrum, w: &GridFn) -> Result<GridFn> {
        ensure_same_spec(&self.output, w.spec())?;
        let ws = self.engine.forward(w.values(), self.output.cells());
        let prod = ws.zip_with(xs, |a, b| a * b.conj());
        let vals = self.engine.inverse(prod, self.input.cells());
        let s = 2.0 * self.volume;
        Ok(GridFn::from_raw(self.input.clone(), vals.into_iter().map(|v| s * v).collect()))
    }

    fn finish(&self, spectrum: Spectrum, scale: f64) -> GridFn {
        let vals = self.engine.inverse(spectrum, self.output.cells());
        GridFn::from_raw(self.output.clone(), vals.into_iter().map(|v| scale * v).collect())
    }
}

/// `F(x)` via FFT.
pub fn autoconvolve(x: &GridFn, case: DataCase) -> Result<GridFn> {
    Autoconvolution::new(x.spec(), case)?.apply(x)
}

/// `F(x)` by direct summation, `O(m²ⁿ)`; reference path for small grids.
pub fn autoconvolve_naive(x: &GridFn, case: DataCase) -> Result<GridFn> {
    let out = output_spec(x.spec(), case)?;
    let vals = direct_convolution(x.values(), x.values(), x.spec().dim(), x.spec().cells(), out.cells());
    let h = x.spec().cell_volume();
    Ok(GridFn::from_raw(out, vals.into_iter().map(|v| h * v).collect()))
}

/// Unscaled linear convolution of two `m^dim` arrays by direct summation,
/// keeping output indices `< out_cells` per axis.
pub(crate) fn direct_convolution(a: &[f64], b: &[f64], dim: usize, m: usize, out_cells: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_cells.pow(dim as u32)];
    let rows = m.pow(dim as u32 - 1);
    let mut ia = vec![0usize; dim - 1];
    for ra in 0..rows {
        if ra > 0 {
            grid::increment(&mut ia, m);
        }
        let mut ib = vec![0usize; dim - 1];
        for rb in 0..rows {
            if rb > 0 {
                grid::increment(&mut ib, m);
            }
            if ia.iter().zip(&ib).any(|(p, q)| p + q >= out_cells) {
                continue;
            }
            let base = ia.iter().zip(&ib).fold(0, |acc, (p, q)| acc * out_cells + p + q) * out_cells;
            let row_b = &b[rb * m..(rb + 1) * m];
            for (i, &av) in a[ra * m..(ra + 1) * m].iter().enumerate() {
                if av == 0.0 || i >= out_cells {
                    continue;
                }
                let len = m.min(out_cells - i);
                let dst = &mut out[base + i..base + i + len];
                for (o, &bv) in dst.iter_mut().zip(&row_b[..len]) {
                    *o += av * bv;
                }
            }
        }
    }
    out
}

/// `F′(x)d = 2·x∗d`, truncated per case.
pub fn derivative_apply(x: &GridFn, d: &GridFn, case: DataCase) -> Result<GridFn> {
    ensure_same_spec(x.spec(), d.spec())?;
    Autoconvolution::new(x.spec(), case)?.derivative(x, d)
}

/// `F′(x)*w` for `w` on the case's output grid.
pub fn derivative_adjoint(x: &GridFn, w: &GridFn, case: DataCase) -> Result<GridFn> {
    Autoconvolution::new(x.spec(), case)?.adjoint(x, w)
}

/// Both sides of the nonlinearity condition
/// `‖F(x̃) − F(x) − F′(x)(x̃−x)‖ ≤ ‖x̃−x‖²`.
pub fn nonlinearity_residual(x: &GridFn, xt: &GridFn, case: DataCase) -> Result<(f64, f64)> {
    ensure_same_spec(x.spec(), xt.spec())?;
    let op = Autoconvolution::new(x.spec(), case)?;
    let diff = grid::combine(1.0, xt, -1.0, x)?;
    let fx = op.apply(x)?;
    let fxt = op.apply(xt)?;
    let lin = op.derivative(x, &diff)?;
    let rem = grid::combine(1.0, &fxt, -1.0, &fx)?;
    let rem = grid::combine(1.0, &rem, -1.0, &lin)?;
    let d = grid::l2_norm(&diff);
    Ok((grid::l2_norm(&rem), d * d))
}

/// Checks `supp(f∗g) ⊆ supp(f) + supp(g)` on the discrete grid.
///
/// Input supports use `tol`; the output support uses `tol` raised to the
/// rounding floor `1e−12·max|f∗g|`.
pub fn support_inclusion_check(f: &GridFn, g: &GridFn, tol: f64) -> Result<bool> {
    ensure_same_spec(f.spec(), g.spec())?;
    ensure_unit_cube(f.spec())?;
    let dim = f.spec().dim();
    let m = f.spec().cells();
    let out_cells = 2 * m - 1;
    let engine = ConvEngine::for_autoconvolution(dim, m);
    let conv = |a: &[f64], b: &[f64]| {
        let sa = engine.forward(a, m);
        let sb = engine.forward(b, m);
        let prod = sa.zip_with(&sb, |p, q| p * q);
        engine.inverse(prod, out_cells)
    };
    let h = f.spec().cell_volume();
    let fg: Vec<f64> = conv(f.values(), g.values()).into_iter().map(|v| h * v).collect();
    let mask = |x: &GridFn| -> Vec<f64> {
        x.values().iter().map(|v| if v.abs() > tol { 1.0 } else { 0.0 }).collect()
    };
    // integer pair counts, so 0.5 separates empty from nonempty
    let sumset = conv(&mask(f), &mask(g));
    let peak = fg.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let out_tol = tol.max(1e-12 * peak);
    Ok(fg.iter().zip(&sumset).all(|(v, c)| v.abs() <= out_tol || *c > 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{l2_norm, sample};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fn(spec: &GridSpec, rng: &mut ChaCha8Rng) -> GridFn {
        let v = (0..spec.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        GridFn::from_values(spec.clone(), v).unwrap()
    }

    #[test]
    fn zero_maps_to_zero() {
        let spec = GridSpec::unit_cube(2, 6).unwrap();
        for case in [DataCase::Full, DataCase::Limited] {
            let y = autoconvolve(&GridFn::zeros(spec.clone()), case).unwrap();
            assert!(y.values().iter().all(|&v| v == 0.0));
            let y = autoconvolve_naive(&GridFn::zeros(spec.clone()), case).unwrap();
            assert!(y.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn output_grids() {
        let spec = GridSpec::unit_cube(2, 50).unwrap();
        let full = output_spec(&spec, DataCase::Full).unwrap();
        assert_eq!(full.cells(), 99);
        assert!((full.axis_midpoint(0, 0) - 0.02).abs() < 1e-15);
        assert!((full.axis_midpoint(1, 98) - 1.98).abs() < 1e-14);
        assert!((full.cell_volume() - spec.cell_volume()).abs() < 1e-18);
        let lim = output_spec(&spec, DataCase::Limited).unwrap();
        assert_eq!(lim.cells(), 50);
        assert!((lim.axis_midpoint(0, 49) - 1.0).abs() < 1e-14);
        let off = GridSpec::new(2, 5, vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        assert!(matches!(output_spec(&off, DataCase::Full), Err(Error::Structure(_))));
    }

    #[test]
    fn length_two_hand_expansion() {
        let (a, b) = (0.7, -1.3);
        let spec = GridSpec::unit_cube(1, 2).unwrap();
        let x = GridFn::from_values(spec, vec![a, b]).unwrap();
        let y = autoconvolve_naive(&x, DataCase::Full).unwrap();
        let h = 0.5;
        let expect = [h * a * a, h * 2.0 * a * b, h * b * b];
        for (u, v) in y.values().iter().zip(expect) {
            assert!((u - v).abs() < 1e-15);
        }
        let yf = autoconvolve(&x, DataCase::Full).unwrap();
        for (u, v) in yf.values().iter().zip(expect) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_one_gives_triangle() {
        let spec = GridSpec::unit_cube(1, 50).unwrap();
        let y = autoconvolve(&GridFn::constant(spec, 1.0), DataCase::Full).unwrap();
        let dev = y
            .values()
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let s = (j + 1) as f64 / 50.0;
                (v - s.min(2.0 - s)).abs()
            })
            .fold(0.0, f64::max);
        assert!(dev <= 1e-12, "max deviation {dev}");
    }

    #[test]
    fn fft_matches_naive_small_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = GridSpec::unit_cube(2, 8).unwrap();
        for case in [DataCase::Full, DataCase::Limited] {
            let x = random_fn(&spec, &mut rng);
            let a = autoconvolve(&x, case).unwrap();
            let b = autoconvolve_naive(&x, case).unwrap();
            let diff = grid::combine(1.0, &a, -1.0, &b).unwrap();
            assert!(l2_norm(&diff) <= 1e-10 * l2_norm(&b));
        }
    }

    #[test]
    fn limited_is_restriction_of_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = GridSpec::unit_cube(2, 7).unwrap();
        let x = random_fn(&spec, &mut rng);
        let full = autoconvolve_naive(&x, DataCase::Full).unwrap();
        let lim = autoconvolve_naive(&x, DataCase::Limited).unwrap();
        for flat in 0..lim.spec().len() {
            let idx = lim.spec().unravel(flat);
            assert_eq!(lim.values()[flat], full.get(&idx));
        }
    }

    #[test]
    fn derivative_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = GridSpec::unit_cube(2, 9).unwrap();
        for case in [DataCase::Full, DataCase::Limited] {
            let x = random_fn(&spec, &mut rng);
            let d1 = random_fn(&spec, &mut rng);
            let d2 = random_fn(&spec, &mut rng);
            let dx = derivative_apply(&x, &x, case).unwrap();
            let fx = autoconvolve(&x, case).unwrap();
            let e = grid::combine(1.0, &dx, -2.0, &fx).unwrap();
            assert!(l2_norm(&e) <= 1e-12 * l2_norm(&fx));

            let (a, b) = (0.3, -2.1);
            let mix = grid::combine(a, &d1, b, &d2).unwrap();
            let lhs = derivative_apply(&x, &mix, case).unwrap();
            let r1 = derivative_apply(&x, &d1, case).unwrap();
            let r2 = derivative_apply(&x, &d2, case).unwrap();
            let rhs = grid::combine(a, &r1, b, &r2).unwrap();
            let e = grid::combine(1.0, &lhs, -1.0, &rhs).unwrap();
            assert!(l2_norm(&e) <= 1e-12 * l2_norm(&rhs));

            let z = derivative_apply(&GridFn::zeros(spec.clone()), &d1, case).unwrap();
            assert!(z.max_abs() == 0.0);
        }
    }

    #[test]
    fn adjoint_of_zero_and_spec_mismatch() {
        let spec = GridSpec::unit_cube(1, 5).unwrap();
        let out = output_spec(&spec, DataCase::Full).unwrap();
        let w = GridFn::constant(out, 1.0);
        let a = derivative_adjoint(&GridFn::zeros(spec.clone()), &w, DataCase::Full).unwrap();
        assert_eq!(a.max_abs(), 0.0);
        assert!(derivative_adjoint(&GridFn::zeros(spec), &w, DataCase::Limited).is_err());
    }

    /// Transpose of the explicit 3×3 limited-data Jacobian.
    #[test]
    fn limited_adjoint_small_matrix() {
        let spec = GridSpec::unit_cube(1, 3).unwrap();
        let x = GridFn::from_values(spec.clone(), vec![1.5, -0.4, 2.0]).unwrap();
        let h = 1.0 / 3.0;
        // (F'(x)d)[j] = 2h Σ_{i≤j} x[j−i] d[i]  =>  J[j][i] = 2h x[j−i]
        let xv = x.values();
        let jac = |j: usize, i: usize| if i <= j { 2.0 * h * xv[j - i] } else { 0.0 };
        let out = output_spec(&spec, DataCase::Limited).unwrap();
        let w = GridFn::from_values(out.clone(), vec![1.0, 0.0, 0.0]).unwrap();
        let a = derivative_adjoint(&x, &w, DataCase::Limited).unwrap();
        // adjoint w.r.t. h-weighted products equals plain transpose (weights equal)
        for i in 0..3 {
            assert!((a.values()[i] - jac(0, i)).abs() < 1e-14);
        }
        assert!(a.values()[0] != 0.0 && a.values()[1].abs() < 1e-15 && a.values()[2].abs() < 1e-15);
        let w = GridFn::from_values(out, vec![0.2, -1.0, 0.7]).unwrap();
        let a = derivative_adjoint(&x, &w, DataCase::Limited).unwrap();
        for i in 0..3 {
            let e: f64 = (0..3).map(|j| jac(j, i) * w.values()[j]).sum();
            assert!((a.values()[i] - e).abs() < 1e-14);
        }
    }

    #[test]
    fn nonlinearity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = GridSpec::unit_cube(2, 20).unwrap();
        let x = random_fn(&spec, &mut rng);
        assert_eq!(nonlinearity_residual(&x, &x, DataCase::Full).unwrap(), (0.0, 0.0));
        for case in [DataCase::Full, DataCase::Limited] {
            let xt = random_fn(&spec, &mut rng);
            let (lhs, rhs) = nonlinearity_residual(&x, &xt, case).unwrap();
            let d = grid::combine(1.0, &xt, -1.0, &x).unwrap();
            let fd = l2_norm(&autoconvolve(&d, case).unwrap());
            assert!((lhs - fd).abs() <= 1e-12 * (1.0 + lhs));
            assert!(lhs <= rhs);
        }
        let d = random_fn(&spec, &mut rng);
        let d = d.scale(1.0 / l2_norm(&d));
        let fd = l2_norm(&autoconvolve(&d, DataCase::Full).unwrap());
        for c in [1.0, 0.5, 0.25] {
            let xt = grid::combine(1.0, &x, c, &d).unwrap();
            let (lhs, _) = nonlinearity_residual(&x, &xt, DataCase::Full).unwrap();
            assert!((lhs - c * c * fd).abs() <= 1e-12 * (1.0 + fd));
        }
    }

    #[test]
    fn support_inclusion_cases() {
        let spec = GridSpec::unit_cube(2, 6).unwrap();
        let mut f = vec![0.0; 36];
        let mut g = vec![0.0; 36];
        f[spec.ravel(&[1, 2])] = 1.0;
        g[spec.ravel(&[3, 0])] = 2.0;
        let f = GridFn::from_values(spec.clone(), f).unwrap();
        let g = GridFn::from_values(spec.clone(), g).unwrap();
        assert!(support_inclusion_check(&f, &g, 0.0).unwrap());
        assert!(support_inclusion_check(&GridFn::zeros(spec.clone()), &g, 0.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let a = random_fn(&spec, &mut rng);
            let b = sample(|t| if t[0] > 0.5 { t[1] } else { 0.0 }, &spec);
            assert!(support_inclusion_check(&a, &b, 1e-12).unwrap());
        }
    }
}
