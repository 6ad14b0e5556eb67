//! Dense linear algebra, trainable layers with explicit gradient
//! accumulation, and the Adam optimizer.

mod adam;
mod layers;
mod matrix;
mod param;
mod rng;

pub use adam::{adam_step, AdamConfig};
pub use layers::{Linear, Mlp};
pub use matrix::{dot, norm, squared_distance, Matrix};
pub use param::Parameter;
pub use rng::RngState;

/// Cosine similarity and its gradients with respect to both arguments.
///
/// Returns `None` when either vector has zero norm.
pub fn cosine_with_grad(a: &[f64], b: &[f64]) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let cos = dot(a, b) / (na * nb);
    let ga = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| y / (na * nb) - cos * x / (na * na))
        .collect();
    let gb = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| x / (na * nb) - cos * y / (nb * nb))
        .collect();
    Some((cos, ga, gb))
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
    }
}
