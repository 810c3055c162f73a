use super::{Batch, HeadParams, Loss};
use crate::error::Result;

fn sample_losses(params: &HeadParams, batch: &Batch, loss: &Loss) -> Result<Vec<f64>> {
    let logits = params.forward(&batch.features)?.logits;
    let mut scratch = vec![0.0; params.num_outputs()];
    Ok(logits
        .rows()
        .into_iter()
        .zip(&batch.labels)
        .map(|(row, &label)| loss.sample(&row.to_vec(), label, &mut scratch))
        .collect())
}

/// Central difference of the mean loss, taken per sample before averaging so
/// samples the perturbation leaves untouched add no rounding noise.
fn central_difference(plus: &[f64], minus: &[f64], eps: f64) -> f64 {
    let total: f64 = plus.iter().zip(minus).map(|(p, m)| p - m).sum();
    total / (2.0 * eps * plus.len() as f64)
}

/// Largest relative disagreement between analytic gradients and central
/// finite differences, `|a - n| / max(1e-8, |a| + |n|)`, over every parameter.
pub fn grad_check(params: &HeadParams, batch: &Batch, loss: &Loss, eps: f64) -> Result<f64> {
    let (_, analytic) = params.backward(batch, loss)?;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for i in 0..params.layers.len() {
        let rows = params.layers[i].weight.nrows();
        let cols = params.layers[i].weight.ncols();
        for r in 0..rows {
            for c in 0..cols {
                let orig = params.layers[i].weight[[r, c]];
                probe.layers[i].weight[[r, c]] = orig + eps;
                let plus = sample_losses(&probe, batch, loss)?;
                probe.layers[i].weight[[r, c]] = orig - eps;
                let minus = sample_losses(&probe, batch, loss)?;
                probe.layers[i].weight[[r, c]] = orig;
                let numeric = central_difference(&plus, &minus, eps);
                worst = worst.max(relative_error(analytic.layers[i].weight[[r, c]], numeric));
            }
            let orig = params.layers[i].bias[r];
            probe.layers[i].bias[r] = orig + eps;
            let plus = sample_losses(&probe, batch, loss)?;
            probe.layers[i].bias[r] = orig - eps;
            let minus = sample_losses(&probe, batch, loss)?;
            probe.layers[i].bias[r] = orig;
            let numeric = central_difference(&plus, &minus, eps);
            worst = worst.max(relative_error(analytic.layers[i].bias[r], numeric));
        }
    }
    Ok(worst)
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}
