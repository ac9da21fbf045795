//! Real spherical harmonics up to band 2.

use std::f64::consts::PI;

pub const SH_COUNT: usize = 9;

fn consts() -> [f64; 5] {
    [
        0.5 * (1.0 / PI).sqrt(),
        (3.0 / (4.0 * PI)).sqrt(),
        0.5 * (15.0 / PI).sqrt(),
        0.25 * (5.0 / PI).sqrt(),
        0.25 * (15.0 / PI).sqrt(),
    ]
}

/// Basis values at a unit direction, ordered (0,0), (1,-1), (1,0), (1,1),
/// (2,-2), (2,-1), (2,0), (2,1), (2,2).
pub fn sh_basis(n: [f64; 3]) -> [f64; SH_COUNT] {
    let [c0, c1, c2, c3, c4] = consts();
    let [x, y, z] = n;
    [
        c0,
        c1 * y,
        c1 * z,
        c1 * x,
        c2 * x * y,
        c2 * y * z,
        c3 * (3.0 * z * z - 1.0),
        c2 * x * z,
        c4 * (x * x - y * y),
    ]
}

/// Gradient of each basis function with respect to the (unconstrained) direction.
pub fn sh_basis_grad(n: [f64; 3]) -> [[f64; 3]; SH_COUNT] {
    let [_, c1, c2, c3, c4] = consts();
    let [x, y, z] = n;
    [
        [0.0, 0.0, 0.0],
        [0.0, c1, 0.0],
        [0.0, 0.0, c1],
        [c1, 0.0, 0.0],
        [c2 * y, c2 * x, 0.0],
        [0.0, c2 * z, c2 * y],
        [0.0, 0.0, 6.0 * c3 * z],
        [c2 * z, 0.0, c2 * x],
        [2.0 * c4 * x, -2.0 * c4 * y, 0.0],
    ]
}
