use crate::error::{Error, Result};

/// Noise ceiling used to normalize sentence-level fMRI correlations.
pub const PEREIRA_CEILING: f64 = 0.32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreResult {
    /// `None` when either series is constant.
    pub pearson_r: Option<f64>,
    pub n: usize,
    pub normalized_r: Option<f64>,
}

impl ScoreResult {
    pub fn undefined(n: usize) -> Self {
        ScoreResult { pearson_r: None, n, normalized_r: None }
    }

    pub fn is_undefined(&self) -> bool {
        self.pearson_r.is_none()
    }

    pub fn with_ceiling(mut self, ceiling: f64) -> Result<Self> {
        self.normalized_r = self.pearson_r.map(|r| normalize_ceiling(r, ceiling)).transpose()?;
        Ok(self)
    }
}

/// Product-moment correlation of two equal-length series (n >= 2).
pub fn pearson(a: &[f64], b: &[f64]) -> Result<ScoreResult> {
    if a.len() != b.len() {
        return Err(Error::Precondition(format!("pearson over {} and {} values", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Precondition("pearson needs at least two points".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in correlation input".into()));
    }
    let constant = |s: &[f64]| s.iter().all(|v| *v == s[0]);
    if constant(a) || constant(b) {
        return Ok(ScoreResult::undefined(n));
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(ScoreResult::undefined(n));
    }
    let r = (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0);
    Ok(ScoreResult { pearson_r: Some(r), n, normalized_r: None })
}

pub fn normalize_ceiling(r: f64, ceiling: f64) -> Result<f64> {
    if !(ceiling > 0.0 && ceiling.is_finite()) {
        return Err(Error::Config(format!("ceiling must be positive, got {ceiling}")));
    }
    Ok(r / ceiling)
}
