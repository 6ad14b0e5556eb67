use crate::error::{Error, Result};
use crate::numeric::{squared_distance, Matrix, Parameter};

/// One quantizer layer: `K` codewords of dimension `d`, stored as a `K x d`
/// trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    /// 0-based layer index.
    pub layer: usize,
    pub codewords: Parameter,
}

impl Codebook {
    pub fn new(layer: usize, codewords: Matrix) -> Result<Self> {
        if codewords.rows() == 0 {
            return Err(Error::Data(format!("codebook {layer} is empty")));
        }
        codewords.ensure_finite(&format!("codebook {layer}"))?;
        Ok(Self {
            layer,
            codewords: Parameter::new(format!("codebook.{layer}"), codewords),
        })
    }

    pub fn size(&self) -> usize {
        self.codewords.value.rows()
    }

    pub fn dim(&self) -> usize {
        self.codewords.value.cols()
    }

    pub fn codeword(&self, k: usize) -> &[f64] {
        self.codewords.value.row(k)
    }

    /// Nearest codeword by squared Euclidean distance; ties go to the lowest
    /// index.
    pub fn nearest(&self, v: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for k in 0..self.size() {
            let d = squared_distance(v, self.codeword(k));
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    }
}

/// Residual-quantization result for one item.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticId {
    /// 0-based code index per layer.
    pub indices: Vec<usize>,
    /// Sum of the selected codewords.
    pub quantized: Vec<f64>,
    /// `r^(0) = z` through `r^(L)`; `L + 1` entries.
    pub residuals: Vec<Vec<f64>>,
}

impl SemanticId {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn quantize_one(z: &[f64], codebooks: &[Codebook]) -> Result<SemanticId> {
    let d = z.len();
    let mut residual = z.to_vec();
    let mut quantized = vec![0.0; d];
    let mut indices = Vec::with_capacity(codebooks.len());
    let mut residuals = Vec::with_capacity(codebooks.len() + 1);
    residuals.push(residual.clone());
    for cb in codebooks {
        if cb.size() == 0 {
            return Err(Error::Data(format!("codebook {} is empty", cb.layer)));
        }
        if cb.dim() != d {
            return Err(Error::Dimension(format!(
                "codebook {} has dimension {}, latent has {d}",
                cb.layer,
                cb.dim()
            )));
        }
        if residual.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite residual entering layer {}",
                cb.layer
            )));
        }
        let (k, _) = cb.nearest(&residual);
        let q = cb.codeword(k);
        for ((r, acc), c) in residual.iter_mut().zip(quantized.iter_mut()).zip(q) {
            *r -= c;
            *acc += c;
        }
        indices.push(k);
        residuals.push(residual.clone());
    }
    Ok(SemanticId {
        indices,
        quantized,
        residuals,
    })
}

/// Quantizes every row of `z` through the codebook stack.
pub fn quantize(z: &Matrix, codebooks: &[Codebook]) -> Result<Vec<SemanticId>> {
    if codebooks.is_empty() {
        return Err(Error::Data("no codebooks".into()));
    }
    z.iter_rows().map(|row| quantize_one(row, codebooks)).collect()
}

/// Stacks the quantized embeddings of `sids` into a matrix.
pub fn quantized_matrix(sids: &[SemanticId]) -> Matrix {
    let d = sids.first().map_or(0, |s| s.quantized.len());
    let data = sids.iter().flat_map(|s| s.quantized.iter().copied()).collect();
    Matrix::from_vec(sids.len(), d, data).expect("uniform latent width")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cb(layer: usize, rows: &[Vec<f64>]) -> Codebook {
        Codebook::new(layer, Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn single_layer_nearest() {
        let books = [cb(0, &[vec![1.0, 0.0], vec![0.0, 1.0]])];
        let sid = quantize_one(&[0.9, 0.1], &books).unwrap();
        assert_eq!(sid.indices, vec![0]);
        assert_eq!(sid.quantized, vec![1.0, 0.0]);
        let r = &sid.residuals[1];
        assert!((r[0] + 0.1).abs() < 1e-15 && (r[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn exact_codeword_has_zero_residual() {
        let rows: Vec<Vec<f64>> = (0..5).map(|k| vec![k as f64, (k * k) as f64 * 0.5]).collect();
        let books = [cb(0, &rows)];
        let sid = quantize_one(&rows[3], &books).unwrap();
        assert_eq!(sid.indices, vec![3]);
        assert_eq!(sid.residuals[1], vec![0.0, 0.0]);
        assert_eq!(sid.quantized, rows[3]);
    }

    #[test]
    fn two_layer_by_hand() {
        let books = [
            cb(0, &[vec![1.0, 0.0], vec![0.0, 1.0]]),
            cb(1, &[vec![0.1, 0.0], vec![-0.1, 0.0]]),
        ];
        let sid = quantize_one(&[1.08, 0.02], &books).unwrap();
        assert_eq!(sid.indices, vec![0, 0]);
        assert!((sid.quantized[0] - 1.1).abs() < 1e-15);
        assert_eq!(sid.quantized[1], 0.0);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let books = [cb(0, &[vec![1.0], vec![-1.0]])];
        assert_eq!(quantize_one(&[0.0], &books).unwrap().indices, vec![0]);
    }

    #[test]
    fn error_paths() {
        assert!(Codebook::new(0, Matrix::zeros(0, 2)).is_err());
        let books = [cb(0, &[vec![1.0, 0.0]])];
        assert!(matches!(quantize_one(&[f64::NAN, 0.0], &books), Err(Error::Numeric(_))));
        assert!(matches!(
            quantize_one(&[0.0, 0.0, 0.0], &books),
            Err(Error::Dimension(_))
        ));
    }
}
