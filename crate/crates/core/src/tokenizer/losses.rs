use super::quantize::{Codebook, SemanticId};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Mean squared error over all entries.
pub fn reconstruction_loss(x: &Matrix, x_rec: &Matrix) -> Result<f64> {
    x.check_same_shape(x_rec, "reconstruction loss")?;
    let n = x.data().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = x.data().iter().zip(x_rec.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / n as f64)
}

/// Gradient of [`reconstruction_loss`] with respect to `x_rec`.
pub fn reconstruction_grad(x: &Matrix, x_rec: &Matrix) -> Result<Matrix> {
    x.check_same_shape(x_rec, "reconstruction loss")?;
    let n = x.data().len().max(1) as f64;
    let mut g = x_rec.sub(x)?;
    g.scale(2.0 / n);
    Ok(g)
}

/// Residual-quantization loss and its gradients.
#[derive(Debug, Clone)]
pub struct RqLoss {
    pub value: f64,
    /// Commitment-side gradient with respect to the encoder output `z`.
    pub grad_latent: Matrix,
    /// Codeword-side gradient per codebook (`K x d` each).
    pub grad_codebooks: Vec<Matrix>,
}

/// Per item and layer: `|sg(r) - q|^2 + beta * |r - sg(q)|^2`, summed over
/// layers and averaged over items. `r` here is the residual entering the
/// layer; earlier codewords inside `r` are treated as constants.
pub fn rq_loss(sids: &[SemanticId], codebooks: &[Codebook], beta_commit: f64) -> Result<RqLoss> {
    let n = sids.len();
    let d = codebooks.first().map_or(0, Codebook::dim);
    let mut grad_latent = Matrix::zeros(n, d);
    let mut grad_codebooks: Vec<Matrix> = codebooks.iter().map(|cb| Matrix::zeros(cb.size(), cb.dim())).collect();
    if n == 0 {
        return Ok(RqLoss {
            value: 0.0,
            grad_latent,
            grad_codebooks,
        });
    }
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    for (i, sid) in sids.iter().enumerate() {
        if sid.len() != codebooks.len() || sid.residuals.len() != codebooks.len() + 1 {
            return Err(Error::Dimension(format!(
                "semantic id {i} has {} layers, quantizer has {}",
                sid.len(),
                codebooks.len()
            )));
        }
        for (l, cb) in codebooks.iter().enumerate() {
            let k = sid.indices[l];
            let q = cb.codeword(k);
            let r = &sid.residuals[l];
            if r.len() != d {
                return Err(Error::Dimension(format!("residual width {} vs {d}", r.len())));
            }
            let mut sq = 0.0;
            let g_row = grad_latent.row_mut(i);
            for ((&rv, &qv), g) in r.iter().zip(q).zip(g_row.iter_mut()) {
                let diff = rv - qv;
                sq += diff * diff;
                *g += 2.0 * beta_commit * diff * inv_n;
            }
            for ((&rv, &qv), g) in r.iter().zip(q).zip(grad_codebooks[l].row_mut(k)) {
                *g -= 2.0 * (rv - qv) * inv_n;
            }
            total += (1.0 + beta_commit) * sq;
        }
    }
    Ok(RqLoss {
        value: total * inv_n,
        grad_latent,
        grad_codebooks,
    })
}
