//! Dyadic maximal functions, square functions and weighted `L^p` norms.

use crate::error::{Error, Result};
use crate::lattice::GridFunction;
use crate::pyramid::{self, AxisKernel};
use crate::weights::Weight;

/// Which rectangles the maximal function ranges over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaximalMode {
    /// All dyadic rectangles.
    Full,
    /// Intervals along one axis, other coordinates frozen.
    Axis(usize),
}

fn check_axis(m: usize, axis: usize) -> Result<()> {
    if axis < m {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("axis {axis} out of range for {m} parameters")))
    }
}

/// Sup of averages over rectangles (in the axes selected) containing each cell.
fn sup_of_averages(f: &GridFunction, axes: &[bool]) -> GridFunction {
    let kernels: Vec<_> = axes
        .iter()
        .map(|&a| if a { AxisKernel::Average } else { AxisKernel::Identity })
        .collect();
    let depths = f.spec().depths();
    let avg = pyramid::analyze(f.array(), depths, &kernels);
    let out = pyramid::descend_max(&avg, depths, axes);
    GridFunction::from_array(f.spec().clone(), out).expect("shape restored")
}

fn mode_axes(m: usize, mode: MaximalMode) -> Result<Vec<bool>> {
    match mode {
        MaximalMode::Full => Ok(vec![true; m]),
        MaximalMode::Axis(t) => {
            check_axis(m, t)?;
            Ok((0..m).map(|s| s == t).collect())
        }
    }
}

/// `M f(x) = sup_{R ∋ x} ⟨|f|⟩_R`.
pub fn maximal(f: &GridFunction, mode: MaximalMode) -> Result<GridFunction> {
    let axes = mode_axes(f.spec().param_count(), mode)?;
    Ok(sup_of_averages(&f.abs(), &axes))
}

/// `M^w f(x) = sup_{R ∋ x} w(R)^{-1} ∫_R |f| w`.
pub fn weighted_maximal(f: &GridFunction, w: &Weight) -> Result<GridFunction> {
    f.spec().ensure_same(w.spec())?;
    let m = f.spec().param_count();
    let depths = f.spec().depths();
    let kernels = vec![AxisKernel::Average; m];
    let num = pyramid::analyze(f.abs().mul(w.function())?.array(), depths, &kernels);
    let ratio = &num / w.rect_averages();
    let out = pyramid::descend_max(&ratio, depths, &vec![true; m]);
    GridFunction::from_array(f.spec().clone(), out)
}

/// A square function: cancellative on `axes`, optionally with the dyadic
/// maximal function applied on the remaining axes before squaring.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SquareMode {
    pub axes: Vec<usize>,
    pub inner_maximal: bool,
}

impl SquareMode {
    /// `S_D`, cancellative in every parameter.
    pub fn full(m: usize) -> Self {
        Self { axes: (0..m).collect(), inner_maximal: false }
    }

    /// `S^t`, one axis.
    pub fn axis(t: usize) -> Self {
        Self { axes: vec![t], inner_maximal: false }
    }

    /// `S^t_{D,M}`, one axis with the maximal function on the others.
    pub fn axis_maximal(t: usize) -> Self {
        Self { axes: vec![t], inner_maximal: true }
    }

    pub fn axes(axes: &[usize]) -> Self {
        Self { axes: axes.to_vec(), inner_maximal: false }
    }
}

/// `(Σ_{I} 1_I/|I| ⊗ |⟨f, h_I⟩_S|^2)^{1/2}` with `I` ranging over rectangles in the axes `S`.
pub fn square_function(f: &GridFunction, mode: &SquareMode) -> Result<GridFunction> {
    let spec = f.spec();
    let m = spec.param_count();
    let mut sel = vec![false; m];
    for &t in &mode.axes {
        check_axis(m, t)?;
        if sel[t] {
            return Err(Error::InvalidArgument(format!("axis {t} repeated in square mode")));
        }
        sel[t] = true;
    }
    if mode.axes.is_empty() {
        return Err(Error::InvalidArgument("square function needs at least one axis".into()));
    }
    if mode.inner_maximal && mode.axes.len() == m {
        return Err(Error::InvalidArgument("inner maximal function needs a complementary axis".into()));
    }
    let depths = spec.depths();
    let haar: Vec<_> = sel
        .iter()
        .map(|&s| if s { AxisKernel::Haar } else { AxisKernel::Identity })
        .collect();
    let mut coefs = pyramid::analyze(f.array(), depths, &haar).mapv(f64::abs);
    if mode.inner_maximal {
        // Sup of averages along the complementary axes, for every fixed I.
        let comp: Vec<bool> = sel.iter().map(|s| !s).collect();
        let avg_kernels: Vec<_> = comp
            .iter()
            .map(|&c| if c { AxisKernel::Average } else { AxisKernel::Identity })
            .collect();
        let avg = pyramid::analyze(&coefs, depths, &avg_kernels);
        coefs = pyramid::descend_max(&avg, depths, &comp);
    }
    let avg_out: Vec<_> = sel
        .iter()
        .map(|&s| if s { AxisKernel::Average } else { AxisKernel::Identity })
        .collect();
    let sq = pyramid::synthesize(&coefs.mapv(|c| c * c), depths, &avg_out);
    GridFunction::from_array(spec.clone(), sq.mapv(f64::sqrt))
}

/// `‖f‖_{L^p(w)} = (Σ |f|^p w · cellvol)^{1/p}`; `p = ∞` is the max over cells.
/// For `p ≤ 1` this is the quasi-norm as written.
pub fn lp_norm(f: &GridFunction, p: f64, w: Option<&Weight>) -> Result<f64> {
    if p.is_nan() || p <= 0.0 {
        return Err(Error::ExponentOutOfRange(p));
    }
    if let Some(w) = w {
        f.spec().ensure_same(w.spec())?;
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let terms: Vec<f64> = match w {
        Some(w) => f.values().iter().zip(w.values()).map(|(v, wv)| v.abs().powf(p) * wv).collect(),
        None => f.values().iter().map(|v| v.abs().powf(p)).collect(),
    };
    Ok((pyramid::pairwise_sum(&terms) * f.spec().cell_volume()).powf(1.0 / p))
}

/// `‖(Σ_j |f_j|^s)^{1/s}‖_{L^p(w)}`.
pub fn vector_lp_norm(fs: &[GridFunction], s: f64, p: f64, w: Option<&Weight>) -> Result<f64> {
    let first = fs.first().ok_or_else(|| Error::InvalidArgument("empty function list".into()))?;
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::ExponentOutOfRange(s));
    }
    let mut acc = GridFunction::zeros(first.spec());
    for f in fs {
        acc = acc.zip_map(f, |a, v| a + v.abs().powf(s))?;
    }
    lp_norm(&acc.map(|v| v.powf(1.0 / s)), p, w)
}

/// Left side of the Fefferman-Stein inequality: `‖(Σ_j (M f_j)^s)^{1/s}‖_{L^p(w)}`.
pub fn fs_vector_maximal(fs: &[GridFunction], s: f64, p: f64, w: Option<&Weight>) -> Result<f64> {
    if fs.is_empty() {
        return Err(Error::InvalidArgument("empty function list".into()));
    }
    if !(s > 1.0 && s.is_finite()) {
        return Err(Error::ExponentOutOfRange(s));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::ExponentOutOfRange(p));
    }
    let maxed = fs.iter().map(|f| maximal(f, MaximalMode::Full)).collect::<Result<Vec<_>>>()?;
    vector_lp_norm(&maxed, s, p, w)
}
