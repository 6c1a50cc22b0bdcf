//! Exponent fits, even moments of exponential sums over a point set, and
//! grid-sampled level sets.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::budget::Budget;
use crate::energy::l_fold_energy;
use crate::error::{LabError, Result};
use crate::lattice::PointSet;
use crate::par;

/// Least-squares line through (log x, log y).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub rms_residual: f64,
    pub rows: Vec<(f64, f64)>,
}

pub const MIN_FIT_ROWS: usize = 4;

pub fn fit_exponent(rows: &[(f64, f64)]) -> Result<FitResult> {
    if rows.len() < MIN_FIT_ROWS {
        return Err(LabError::TooFewPoints { needed: MIN_FIT_ROWS, got: rows.len() });
    }
    if let Some(i) = rows.iter().position(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(LabError::NonPositive(i));
    }
    let logs: Vec<(f64, f64)> = rows.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|r| r.0).sum::<f64>() / k;
    let my = logs.iter().map(|r| r.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|r| (r.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|r| (r.0 - mx) * (r.1 - my)).sum();
    if sxx == 0.0 {
        return Err(LabError::OutOfRange("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms_residual = (logs.iter().map(|r| (r.1 - intercept - slope * r.0).powi(2)).sum::<f64>() / k).sqrt();
    Ok(FitResult { slope, intercept, rms_residual, rows: rows.to_vec() })
}

/// Coefficients a_ξ on the points of a set, stored in the set's order.
#[derive(Clone, Debug)]
pub struct CoefficientMap {
    points: PointSet,
    coeffs: Vec<Complex64>,
}

impl CoefficientMap {
    pub fn ones(points: &PointSet) -> Self {
        CoefficientMap { points: points.clone(), coeffs: vec![Complex64::new(1.0, 0.0); points.len()] }
    }

    pub fn new(points: &PointSet, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != points.len() {
            return Err(LabError::DimensionMismatch { expected: points.len(), got: coeffs.len() });
        }
        Ok(CoefficientMap { points: points.clone(), coeffs })
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_unit(&self) -> bool {
        self.coeffs.iter().all(|c| *c == Complex64::new(1.0, 0.0))
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    /// Scaled to ‖a‖₂ = 1.
    pub fn normalized(&self) -> Self {
        let s = self.l2_norm();
        let coeffs = if s == 0.0 { self.coeffs.clone() } else { self.coeffs.iter().map(|c| c / s).collect() };
        CoefficientMap { points: self.points.clone(), coeffs }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    /// Unit coefficients: the l-fold energy, exactly.
    Exact(u128),
    /// General coefficients: grid quadrature in floating point.
    Estimate(f64),
}

/// ∫_{Tⁿ} |Σ a_ξ e(x·ξ)|^p for p ∈ {4, 6}.
pub fn even_moment(set: &PointSet, coeffs: Option<&CoefficientMap>, p: u32, budget: &Budget) -> Result<Moment> {
    if p != 4 && p != 6 {
        return Err(LabError::BadSpec(format!("moment order must be 4 or 6, got {p}")));
    }
    match coeffs {
        Some(c) if !c.is_unit() => {
            if c.points() != set {
                return Err(LabError::BadSpec("coefficients live on a different point set".into()));
            }
            // The grid is exact once it exceeds the frequency span of |F|^p.
            let span = set.coordinate_bounds().into_iter().max().unwrap_or(0) as usize;
            let m = p as usize * span + 1;
            Ok(Moment::Estimate(grid_moment(c, m, p, budget)?))
        }
        _ => Ok(Moment::Exact(l_fold_energy(set, p / 2, budget)?)),
    }
}

/// Samples of F(k/M) = Σ a_ξ e(k·ξ/M) on the M^n grid, visited one
/// two-dimensional slice at a time: the leading coordinates are summed
/// directly and the last two by a 2-d FFT.
fn for_each_grid_slice<T: Send>(
    c: &CoefficientMap,
    m: usize,
    budget: &Budget,
    init: impl Fn() -> T + Sync + Send,
    visit: impl Fn(&mut T, &[Complex64]) + Sync + Send,
) -> Result<Vec<T>> {
    let n = c.points().dim();
    if n < 2 {
        return Err(LabError::BadDimension { dim: n, min: 2, max: 8 });
    }
    let cells = (m as u128).pow(n as u32);
    if cells > budget.nodes {
        return Err(LabError::budget("grid cells", cells, budget.nodes));
    }
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_inverse(m);
    let lead = n - 2;
    let slices = m.pow(lead as u32);
    let twiddle: Vec<Complex64> =
        (0..m).map(|j| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / m as f64)).collect();
    let wrap = |x: i64| x.rem_euclid(m as i64) as usize;
    let parts = par::map_range(slices, |s| {
        let mut acc = init();
        let mut k = vec![0usize; lead];
        let mut rest = s;
        for slot in k.iter_mut().rev() {
            *slot = rest % m;
            rest /= m;
        }
        let mut grid = vec![Complex64::new(0.0, 0.0); m * m];
        for (xi, a) in c.points().iter().zip(c.coeffs()) {
            let phase: usize = k.iter().zip(xi).map(|(&kk, &x)| kk * wrap(x)).sum::<usize>() % m;
            grid[wrap(xi[lead]) * m + wrap(xi[lead + 1])] += a * twiddle[phase];
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for row in grid.chunks_exact_mut(m) {
            fft.process_with_scratch(row, &mut scratch);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); m];
        for j in 0..m {
            for i in 0..m {
                col[i] = grid[i * m + j];
            }
            fft.process_with_scratch(&mut col, &mut scratch);
            for i in 0..m {
                grid[i * m + j] = col[i];
            }
        }
        visit(&mut acc, &grid);
        acc
    });
    Ok(parts)
}

/// Mean of |F|^p over the M^n grid.
pub fn grid_moment(c: &CoefficientMap, m: usize, p: u32, budget: &Budget) -> Result<f64> {
    let parts = for_each_grid_slice(
        c,
        m,
        budget,
        || 0.0f64,
        |acc, vals| {
            *acc += vals.iter().map(|v| v.norm_sqr().powi(p as i32 / 2)).sum::<f64>();
        },
    )?;
    let cells = (m as f64).powi(c.points().dim() as i32);
    Ok(parts.into_iter().sum::<f64>() / cells)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetRow {
    pub alpha: f64,
    /// Fraction of grid cells with |F| > α.
    pub measure: f64,
    /// α^{−2(n−1)/(n−3)} N^{2/(n−3)}
    pub predicted: f64,
    /// α > N^{(n−1)/4}, the range where the prediction applies up to N^ε.
    pub above_threshold: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetTable {
    pub grid_per_axis: usize,
    #[serde(rename = "N")]
    pub scale: u64,
    pub l1_norm: f64,
    /// Grid quadrature of ∫|F|⁴.
    pub fourth_moment: f64,
    pub rows: Vec<LevelSetRow>,
}

/// Level-set measures of F on the uniform grid for 4-d point sets, with
/// coefficients normalized to ‖a‖₂ = 1. `scale` is the N of the comparison.
pub fn grid_level_sets(
    c: &CoefficientMap,
    scale: u64,
    m: usize,
    thresholds: &[f64],
    budget: &Budget,
) -> Result<LevelSetTable> {
    let n = c.points().dim();
    if n != 4 {
        return Err(LabError::BadDimension { dim: n, min: 4, max: 4 });
    }
    let c = c.normalized();
    let parts = for_each_grid_slice(
        &c,
        m,
        budget,
        || (0.0f64, vec![0u64; thresholds.len()]),
        |acc, vals| {
            for v in vals {
                let a2 = v.norm_sqr();
                acc.0 += a2 * a2;
                for (cnt, &t) in acc.1.iter_mut().zip(thresholds) {
                    if a2 > t * t {
                        *cnt += 1;
                    }
                }
            }
        },
    )?;
    let cells = (m as f64).powi(4);
    let mut moment = 0.0;
    let mut counts = vec![0u64; thresholds.len()];
    for (s, cs) in parts {
        moment += s;
        for (a, b) in counts.iter_mut().zip(cs) {
            *a += b;
        }
    }
    let nf = scale as f64;
    let exp_alpha = -2.0 * (n as f64 - 1.0) / (n as f64 - 3.0);
    let exp_n = 2.0 / (n as f64 - 3.0);
    let threshold = nf.powf((n as f64 - 1.0) / 4.0);
    let rows = thresholds
        .iter()
        .zip(counts)
        .map(|(&alpha, cnt)| LevelSetRow {
            alpha,
            measure: cnt as f64 / cells,
            predicted: alpha.powf(exp_alpha) * nf.powf(exp_n),
            above_threshold: alpha > threshold,
        })
        .collect();
    Ok(LevelSetTable { grid_per_axis: m, scale, l1_norm: c.l1_norm(), fourth_moment: moment / cells, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::additive_energy;
    use crate::lattice::{enumerate_shell, Origin};

    #[test]
    fn exact_power_laws() {
        let rows: Vec<(f64, f64)> = (1..=10).map(|x| (x as f64, (x as f64).powi(3))).collect();
        let fit = fit_exponent(&rows).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-9);
        assert!(fit.intercept.abs() < 1e-9);
        assert!(matches!(fit_exponent(&[(1.0, 1.0)]), Err(LabError::TooFewPoints { .. })));
        assert!(matches!(
            fit_exponent(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0), (4.0, 1.0)]),
            Err(LabError::NonPositive(1))
        ));
    }

    #[test]
    fn unit_moments() {
        let b = Budget::default();
        let f = enumerate_shell(4, 1, &b).unwrap();
        assert_eq!(even_moment(f.points(), None, 4, &b).unwrap(), Moment::Exact(168));
        let e1 = PointSet::new(4, [[1, 0, 0, 0]], Origin::Custom).unwrap();
        assert_eq!(even_moment(&e1, None, 6, &b).unwrap(), Moment::Exact(1));
        let pm = PointSet::new(4, [[1, 0, 0, 0], [-1, 0, 0, 0]], Origin::Custom).unwrap();
        assert_eq!(even_moment(&pm, None, 6, &b).unwrap(), Moment::Exact(20));
        assert!(even_moment(&pm, None, 5, &b).is_err());
    }

    #[test]
    fn grid_moment_is_exact_above_the_alias_limit() {
        let b = Budget::default();
        let f = enumerate_shell(4, 3, &b).unwrap();
        let ones = CoefficientMap::ones(f.points());
        let exact = additive_energy(f.points(), &b).unwrap().energy as f64;
        let g = grid_moment(&ones, 9, 4, &b).unwrap();
        assert!((g - exact).abs() < 1e-6 * exact, "{g} vs {exact}");
        let twisted: Vec<Complex64> = (0..f.len()).map(|i| Complex64::new(1.0, i as f64 * 0.1)).collect();
        let c = CoefficientMap::new(f.points(), twisted).unwrap();
        let Moment::Estimate(a) = even_moment(f.points(), Some(&c), 4, &b).unwrap() else { panic!("grid path") };
        let big = grid_moment(&c, 17, 4, &b).unwrap();
        assert!((a - big).abs() < 1e-6 * big);
    }

    #[test]
    fn level_sets_bracket_the_peak() {
        let b = Budget::default();
        let f = enumerate_shell(4, 2, &b).unwrap();
        let c = CoefficientMap::ones(f.points());
        let peak = c.normalized().l1_norm();
        let t = grid_level_sets(&c, 2, 16, &[peak * 0.999, peak * 1.001], &b).unwrap();
        assert!(t.rows[0].measure > 0.0);
        assert_eq!(t.rows[1].measure, 0.0);
    }
}
