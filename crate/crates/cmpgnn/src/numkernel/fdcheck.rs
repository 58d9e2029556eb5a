//! Central-finite-difference gradient verification.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numkernel::dense::DenseMatrix;

/// Compare an analytic gradient against central differences of `f`.
///
/// `f` evaluates the scalar objective at an arbitrary parameter point;
/// `analytic` holds the gradient at `params`, one matrix per parameter.
/// Returns the maximum over all entries of
///
/// `|g_analytic - g_fd| / max(1, |g_fd|)`
///
/// where `g_fd = (f(p + h) - f(p - h)) / 2h` perturbs one entry at a time.
/// Entries are checked in parallel; the max reduction is exact, so the
/// result does not depend on evaluation order.
pub fn finite_diff_check<F>(
    f: F,
    params: &[DenseMatrix],
    analytic: &[DenseMatrix],
    h: f64,
) -> Result<f64>
where
    F: Fn(&[DenseMatrix]) -> Result<f64> + Sync,
{
    if h <= 0.0 {
        return Err(Error::Validation(format!("step h = {} not > 0", h)));
    }
    if params.len() != analytic.len() {
        return Err(Error::Dimension(format!(
            "{} params but {} gradient matrices",
            params.len(),
            analytic.len()
        )));
    }
    for (p, g) in params.iter().zip(analytic) {
        if p.shape() != g.shape() {
            return Err(Error::Dimension(format!(
                "param {:?} vs gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }

    let mut worst: f64 = 0.0;
    for which in 0..params.len() {
        let n = params[which].len();
        let chunk = 64.min(n.max(1));
        let errs: Result<Vec<f64>> = (0..n)
            .collect::<Vec<_>>()
            .par_chunks(chunk)
            .map(|idxs| {
                let mut point = params.to_vec();
                let mut chunk_worst: f64 = 0.0;
                for &i in idxs {
                    let center = params[which].values()[i];
                    point[which].values_mut()[i] = center + h;
                    let up = f(&point)?;
                    point[which].values_mut()[i] = center - h;
                    let down = f(&point)?;
                    point[which].values_mut()[i] = center;
                    if !up.is_finite() || !down.is_finite() {
                        return Err(Error::Numeric(format!(
                            "objective non-finite near parameter {} entry {}",
                            which, i
                        )));
                    }
                    let fd = (up - down) / (2.0 * h);
                    let rel = (analytic[which].values()[i] - fd).abs() / fd.abs().max(1.0);
                    chunk_worst = chunk_worst.max(rel);
                }
                Ok(chunk_worst)
            })
            .collect();
        for e in errs? {
            worst = worst.max(e);
        }
    }
    Ok(worst)
}
