//! k-means initialization of the residual codebooks.

use super::quantize::Codebook;
use crate::error::{Error, Result};
use crate::numeric::{squared_distance, Matrix, RngState};

pub const KMEANS_ITERATIONS: usize = 10;

/// Lloyd's algorithm with k-means++ seeding and a fixed iteration count.
/// Empty clusters are re-seeded from a random data point.
pub fn kmeans(points: &Matrix, k: usize, iterations: usize, rng: &mut RngState) -> Result<Matrix> {
    let n = points.rows();
    if n < k {
        return Err(Error::InsufficientData { needed: k, got: n });
    }
    let d = points.cols();
    let mut centroids = seed_plus_plus(points, k, rng);
    let mut assign = vec![0usize; n];
    for _ in 0..iterations {
        for (i, p) in points.iter_rows().enumerate() {
            assign[i] = nearest(&centroids, p);
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter_rows().enumerate() {
            counts[assign[i]] += 1;
            for (s, v) in sums.row_mut(assign[i]).iter_mut().zip(p) {
                *s += v;
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            if count == 0 {
                let pick = rng.below(n);
                centroids.row_mut(c).copy_from_slice(points.row(pick));
            } else {
                let inv = 1.0 / count as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
    }
    Ok(centroids)
}

fn nearest(centroids: &Matrix, p: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.iter_rows().enumerate() {
        let d = squared_distance(p, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

fn seed_plus_plus(points: &Matrix, k: usize, rng: &mut RngState) -> Matrix {
    let n = points.rows();
    let mut centroids = Matrix::zeros(k, points.cols());
    let first = rng.below(n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut dist: Vec<f64> = points
        .iter_rows()
        .map(|p| squared_distance(p, centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in dist.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc >= target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` just short of `target`
            chosen.unwrap_or_else(|| dist.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            rng.below(n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, p) in points.iter_rows().enumerate() {
            dist[i] = dist[i].min(squared_distance(p, centroids.row(c)));
        }
    }
    centroids
}

/// Layer 1 clusters the latents; each deeper layer clusters the residuals
/// left by the layers above it.
pub fn init_codebooks(
    latents: &Matrix,
    layers: usize,
    codebook_size: usize,
    rng: &mut RngState,
) -> Result<Vec<Codebook>> {
    if latents.rows() < codebook_size {
        return Err(Error::InsufficientData {
            needed: codebook_size,
            got: latents.rows(),
        });
    }
    let mut residuals = latents.clone();
    let mut books = Vec::with_capacity(layers);
    for layer in 0..layers {
        let centroids = kmeans(&residuals, codebook_size, KMEANS_ITERATIONS, rng)?;
        let book = Codebook::new(layer, centroids)?;
        for i in 0..residuals.rows() {
            let (k, _) = book.nearest(residuals.row(i));
            let q = book.codeword(k).to_vec();
            for (r, c) in residuals.row_mut(i).iter_mut().zip(q) {
                *r -= c;
            }
        }
        books.push(book);
    }
    Ok(books)
}
