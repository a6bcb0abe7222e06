//! Mean angular distance between predicted and ground-truth vectors.

use super::FusionError;
use ndarray::Array2;

/// Clamp bound keeping the arccos derivative finite at the poles.
const COS_CLAMP: f64 = 1.0 - 1e-7;

/// Mean over the batch of the angle (radians) between each predicted
/// vector and its unit ground-truth vector.
pub fn mad_loss(pred: &Array2<f64>, truth: &Array2<f64>) -> Result<f64, FusionError> {
    Ok(mad_loss_and_grad(pred, truth)?.0)
}

/// Loss plus its gradient with respect to the predictions. Samples
/// whose cosine lands outside the clamp interval contribute zero
/// gradient (the clamp is flat there).
pub fn mad_loss_and_grad(
    pred: &Array2<f64>,
    truth: &Array2<f64>,
) -> Result<(f64, Array2<f64>), FusionError> {
    assert_eq!(pred.dim(), truth.dim());
    let n = pred.nrows();
    assert!(n > 0);
    let mut loss = 0.0;
    let mut grad = Array2::zeros(pred.dim());
    for i in 0..n {
        let p = [pred[[i, 0]], pred[[i, 1]], pred[[i, 2]]];
        let y = [truth[[i, 0]], truth[[i, 1]], truth[[i, 2]]];
        let np = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if np < 1e-12 {
            return Err(FusionError::ZeroPrediction(i));
        }
        let ny = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        let dot = p[0] * y[0] + p[1] * y[1] + p[2] * y[2];
        let c = dot / (np * ny);
        let cc = c.clamp(-COS_CLAMP, COS_CLAMP);
        loss += cc.acos();
        if c.abs() < COS_CLAMP {
            // d theta / d p = -1/sqrt(1-c^2) * (y/(|p||y|) - c p/|p|^2)
            let scale = -1.0 / (1.0 - c * c).sqrt() / (n as f64);
            for k in 0..3 {
                grad[[i, k]] = scale * (y[k] / (np * ny) - c * p[k] / (np * np));
            }
        }
    }
    Ok((loss / n as f64, grad))
}
