use ndarray::Array2;

/// n × n orthonormal DCT-II matrix: row k is the k-th basis vector, so
/// `dct_matrix(n).dot(x)` transforms a length-n vector.
pub fn dct_matrix(n: usize) -> Array2<f64> {
    let nf = n as f64;
    Array2::from_shape_fn((n, n), |(k, i)| {
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        scale * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * nf)).cos()
    })
}
