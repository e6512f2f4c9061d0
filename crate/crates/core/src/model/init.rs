use rand::Rng;

use crate::diffcore::Matrix;

/// Uniform Glorot initialisation of a `rows × cols` weight
/// (fan_out = rows, fan_in = cols).
pub fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-limit..limit))
}
