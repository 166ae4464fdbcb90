use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::VariantScore;
use crate::error::{Error, Result};

fn centered_x(points: &[(f64, f64)]) -> Result<(Vec<f64>, f64)> {
    if points.len() < 2 {
        return Err(Error::Precondition(format!("a scaling line needs 2 points, got {}", points.len())));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Numerical("non-finite scaling point".into()));
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let dx: Vec<f64> = points.iter().map(|p| p.0 - mx).collect();
    let sxx: f64 = dx.iter().map(|d| d * d).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition("all scaling points share one abscissa".into()));
    }
    Ok((dx, sxx))
}

/// Ordinary least-squares line through `(x, y)` points: `(slope, intercept)`.
pub fn fit_scaling_line(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let (dx, sxx) = centered_x(points)?;
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = dx.iter().zip(points).map(|(d, p)| d * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationTest {
    pub observed_slope: f64,
    pub p_positive: f64,
    pub p_negative: f64,
    pub n_permutations: usize,
}

/// One-sided permutation p-values for the OLS slope, permuting `y` against
/// fixed `x`. Each tail uses the add-one estimate `(1 + hits) / (n + 1)`.
///
/// Permutation `i` shuffles with ChaCha8 seeded by `seed` on stream `i`, so
/// results do not depend on thread scheduling.
pub fn permutation_test_slope(points: &[(f64, f64)], n: usize, seed: u64) -> Result<PermutationTest> {
    if n < 1 {
        return Err(Error::Config("permutation count must be at least 1".into()));
    }
    if points.len() < 3 {
        return Err(Error::Precondition(format!("permutation test needs 3 points, got {}", points.len())));
    }
    let (dx, sxx) = centered_x(points)?;
    let my = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let dy: Vec<f64> = points.iter().map(|p| p.1 - my).collect();
    let dot = |ys: &[f64]| dx.iter().zip(ys).map(|(a, b)| a * b).sum::<f64>();
    let observed = dot(&dy);

    let (ge, le) = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let mut perm = dy.clone();
            perm.shuffle(&mut rng);
            let s = dot(&perm);
            ((s >= observed) as usize, (s <= observed) as usize)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    let denom = (n + 1) as f64;
    Ok(PermutationTest {
        observed_slope: observed / sxx,
        p_positive: (1 + ge) as f64 / denom,
        p_negative: (1 + le) as f64 / denom,
        n_permutations: n,
    })
}

/// Scores against log10 parameter count, with a fitted line and
/// permutation p-values. Undefined scores are excluded and counted.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub points: Vec<VariantScore>,
    pub slope: f64,
    pub intercept: f64,
    pub p_positive: f64,
    pub p_negative: f64,
    pub n_permutations: usize,
    pub seed: u64,
    pub n_undefined: usize,
}

impl ScalingReport {
    /// `(log10 parameters, r)` for every defined score.
    pub fn xy(&self) -> Vec<(f64, f64)> {
        xy(&self.points)
    }
}

fn xy(points: &[VariantScore]) -> Vec<(f64, f64)> {
    points
        .iter()
        .filter_map(|p| p.pearson_r.map(|r| ((p.parameter_count as f64).log10(), r)))
        .collect()
}

pub fn scaling_report(points: Vec<VariantScore>, n_permutations: usize, seed: u64) -> Result<ScalingReport> {
    let defined = xy(&points);
    let n_undefined = points.len() - defined.len();
    let (slope, intercept) = fit_scaling_line(&defined)?;
    let test = permutation_test_slope(&defined, n_permutations, seed)?;
    Ok(ScalingReport {
        points,
        slope,
        intercept,
        p_positive: test.p_positive,
        p_negative: test.p_negative,
        n_permutations,
        seed,
        n_undefined,
    })
}

/// Separate reports per model family. Families without three defined
/// scores at two or more sizes are skipped.
pub fn scaling_by_family(
    points: &[VariantScore],
    n_permutations: usize,
    seed: u64,
) -> Result<Vec<(String, ScalingReport)>> {
    let mut families: BTreeMap<&str, Vec<VariantScore>> = BTreeMap::new();
    for p in points {
        families.entry(&p.family).or_default().push(p.clone());
    }
    let mut out = Vec::new();
    for (family, pts) in families {
        let defined = xy(&pts);
        let sizes = defined.iter().map(|p| p.0.to_bits()).collect::<std::collections::BTreeSet<_>>();
        if defined.len() < 3 || sizes.len() < 2 {
            continue;
        }
        out.push((family.to_string(), scaling_report(pts, n_permutations, seed)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn two_point_line() {
        let (s, b) = fit_scaling_line(&[(8.0, 0.1), (10.0, 0.3)]).unwrap();
        assert!((s - 0.1).abs() < 1e-12);
        assert!((b + 0.7).abs() < 1e-12);
        let (s, _) = fit_scaling_line(&[(8.0, 0.2), (9.0, 0.2), (10.0, 0.2)]).unwrap();
        assert_eq!(s, 0.0);
        assert!(fit_scaling_line(&[(8.0, 0.1), (8.0, 0.3)]).is_err());
    }

    #[test]
    fn random_points_match_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(2..30);
            let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(6.0..11.0), rng.random_range(-1.0..1.0))).collect();
            // Raw-moment form: slope = (n Sxy - Sx Sy) / (n Sxx - Sx^2).
            let nf = n as f64;
            let (sx, sy) = (pts.iter().map(|p| p.0).sum::<f64>(), pts.iter().map(|p| p.1).sum::<f64>());
            let sxy = pts.iter().map(|p| p.0 * p.1).sum::<f64>();
            let sxx = pts.iter().map(|p| p.0 * p.0).sum::<f64>();
            let slope = (nf * sxy - sx * sy) / (nf * sxx - sx * sx);
            let intercept = (sy - slope * sx) / nf;
            let (s, b) = fit_scaling_line(&pts).unwrap();
            assert!((s - slope).abs() < 1e-10, "{s} vs {slope}");
            assert!((b - intercept).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_scores_tie_everywhere() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 0.25)).collect();
        let t = permutation_test_slope(&pts, 200, 1).unwrap();
        assert_eq!(t.p_positive, 1.0);
        assert_eq!(t.p_negative, 1.0);
    }

    #[test]
    fn reproducible_and_never_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts: Vec<(f64, f64)> = (0..12).map(|i| (i as f64, rng.random())).collect();
        let a = permutation_test_slope(&pts, 500, 42).unwrap();
        assert_eq!(a, permutation_test_slope(&pts, 500, 42).unwrap());
        assert!(a.p_positive > 0.0 && a.p_negative > 0.0);
        assert!(permutation_test_slope(&pts, 0, 42).is_err());
        assert!(permutation_test_slope(&pts[..2], 10, 42).is_err());
    }

    fn heap_permutations(v: &mut Vec<f64>, k: usize, out: &mut Vec<Vec<f64>>) {
        if k == 1 {
            out.push(v.clone());
            return;
        }
        for i in 0..k {
            heap_permutations(v, k - 1, out);
            let j = if k % 2 == 0 { i } else { 0 };
            v.swap(j, k - 1);
        }
    }

    /// Monte-Carlo p-values converge to the exact fraction over all 5! orderings.
    #[test]
    fn matches_exhaustive_enumeration() {
        let pts = [(1.0, 0.3), (2.0, 0.1), (3.0, 0.5), (4.0, 0.2), (5.0, 0.6)];
        let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let mut all = Vec::new();
        heap_permutations(&mut ys, 5, &mut all);
        assert_eq!(all.len(), 120);
        let slope_of = |y: &[f64]| {
            let p: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
            fit_scaling_line(&p).unwrap().0
        };
        let obs = slope_of(&pts.map(|p| p.1));
        let exact = all.iter().filter(|y| slope_of(y) >= obs - 1e-12).count() as f64 / 120.0;
        let mc = permutation_test_slope(&pts, 20_000, 9).unwrap();
        assert!((mc.p_positive - exact).abs() < 0.01, "{} vs {exact}", mc.p_positive);
    }
}
