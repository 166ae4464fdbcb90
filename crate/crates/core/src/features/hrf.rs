use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Double-gamma hemodynamic response.
///
/// `h(t) = g(t; p/dp, dp) - g(t; u/du, du) / ratio` for `t > 0` and 0
/// otherwise, where `g(t; shape, scale)` is the gamma density. With
/// `resolution > 0` the kernel is tabulated on that grid and linearly
/// interpolated; with `resolution == 0` it is evaluated in closed form.
/// Both forms are zero at and beyond `length` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct HrfKernel {
    pub peak_delay: f64,
    pub undershoot_delay: f64,
    pub peak_dispersion: f64,
    pub undershoot_dispersion: f64,
    pub peak_undershoot_ratio: f64,
    pub resolution: f64,
    pub length: f64,
    table: Vec<f64>,
}

impl Default for HrfKernel {
    fn default() -> Self {
        HrfKernel::new(6.0, 16.0, 1.0, 1.0, 6.0, 0.1, 32.0).expect("canonical parameters are valid")
    }
}

impl HrfKernel {
    pub fn new(
        peak_delay: f64,
        undershoot_delay: f64,
        peak_dispersion: f64,
        undershoot_dispersion: f64,
        peak_undershoot_ratio: f64,
        resolution: f64,
        length: f64,
    ) -> Result<Self> {
        let positive = [peak_delay, undershoot_delay, peak_dispersion, undershoot_dispersion, peak_undershoot_ratio, length];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(resolution.is_finite() && resolution >= 0.0) {
            return Err(Error::Config("HRF parameters must be positive and finite (resolution >= 0)".into()));
        }
        let mut k = HrfKernel {
            peak_delay,
            undershoot_delay,
            peak_dispersion,
            undershoot_dispersion,
            peak_undershoot_ratio,
            resolution,
            length,
            table: Vec::new(),
        };
        if resolution > 0.0 {
            let n = (length / resolution).ceil() as usize;
            k.table = (0..=n).map(|i| k.closed_form(i as f64 * resolution)).collect();
        }
        Ok(k)
    }

    fn closed_form(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let g = |delay: f64, disp: f64| {
            let shape = delay / disp;
            ((shape - 1.0) * t.ln() - t / disp - shape * disp.ln() - ln_gamma(shape)).exp()
        };
        g(self.peak_delay, self.peak_dispersion)
            - g(self.undershoot_delay, self.undershoot_dispersion) / self.peak_undershoot_ratio
    }

    /// Kernel value at lag `t` seconds.
    pub fn evaluate(&self, t: f64) -> f64 {
        if !(t > 0.0 && t < self.length) {
            return 0.0;
        }
        if self.table.is_empty() {
            return self.closed_form(t);
        }
        let pos = t / self.resolution;
        let i = pos.floor() as usize;
        if i + 1 >= self.table.len() {
            return self.table[self.table.len() - 1];
        }
        let frac = pos - i as f64;
        self.table[i] + frac * (self.table[i + 1] - self.table[i])
    }
}

/// `n` scan times `start, start + tr, ...`.
pub fn scan_grid(n: usize, tr: f64, start: f64) -> Result<Vec<f64>> {
    if !(tr.is_finite() && tr > 0.0) {
        return Err(Error::Config(format!("TR must be positive, got {tr}")));
    }
    if n == 0 {
        return Err(Error::Config("scan grid is empty".into()));
    }
    Ok((0..n).map(|i| start + i as f64 * tr).collect())
}

/// Convolves event vectors with `kernel` and samples the result at `scan_times`.
///
/// `vectors` holds one event per row; `onsets[i]` is the onset of row `i`.
/// Output row `s`, column `j` is `sum_i vectors[(i, j)] * h(scan_times[s] - onsets[i])`,
/// so events after a scan contribute nothing to it.
pub fn hrf_convolve(
    vectors: &DMatrix<f64>,
    onsets: &[f64],
    scan_times: &[f64],
    kernel: &HrfKernel,
) -> Result<DMatrix<f64>> {
    if scan_times.is_empty() {
        return Err(Error::Config("scan grid is empty".into()));
    }
    if scan_times.windows(2).any(|w| !(w[1] > w[0])) || scan_times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Precondition("scan times must be finite and strictly increasing".into()));
    }
    if onsets.len() != vectors.nrows() {
        return Err(Error::Precondition(format!(
            "{} onsets for {} event vectors",
            onsets.len(),
            vectors.nrows()
        )));
    }
    if onsets.windows(2).any(|w| w[1] < w[0]) || onsets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Precondition("onsets must be finite and non-decreasing".into()));
    }

    let d = vectors.ncols();
    let mut out = DMatrix::<f64>::zeros(scan_times.len(), d);
    let mut lo = 0;
    let mut hi = 0;
    for (s, &t) in scan_times.iter().enumerate() {
        while hi < onsets.len() && onsets[hi] <= t {
            hi += 1;
        }
        while lo < hi && t - onsets[lo] >= kernel.length {
            lo += 1;
        }
        for e in lo..hi {
            let w = kernel.evaluate(t - onsets[e]);
            if w != 0.0 {
                for j in 0..d {
                    out[(s, j)] += w * vectors[(e, j)];
                }
            }
        }
    }
    Ok(out)
}
