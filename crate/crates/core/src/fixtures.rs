//! Named example operands.

use crate::linalg::Matrix;

/// Near-identity symmetric 4×4 example operand.
pub fn a1() -> Matrix {
    Matrix::from_rows(&[
        [0.92, -0.07, -0.06, -0.06],
        [-0.07, 0.94, -0.05, -0.04],
        [-0.06, -0.05, 0.97, -0.02],
        [-0.06, -0.04, -0.02, 0.99],
    ])
    .expect("valid fixture")
}

/// Tridiagonal 4×4 example operand.
pub fn a2() -> Matrix {
    Matrix::from_rows(&[
        [0.98, -0.26, 0.0, 0.0],
        [-0.19, 0.98, -0.25, 0.0],
        [0.0, -0.2, 0.98, -0.24],
        [0.0, 0.0, -0.21, 0.98],
    ])
    .expect("valid fixture")
}

/// Looks up a fixture by name (`"A1"`/`"a1"`, `"A2"`/`"a2"`).
pub fn by_name(name: &str) -> Option<Matrix> {
    match name.to_ascii_lowercase().as_str() {
        "a1" => Some(a1()),
        "a2" => Some(a2()),
        _ => None,
    }
}
