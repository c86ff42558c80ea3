//! Gauss-Legendre rules on [-1, 1] and [0, 1].

/// Nodes and weights on `[-1, 1]`.
pub fn gauss(n: usize) -> &'static [(f64, f64)] {
    const G1: [(f64, f64); 1] = [(0.0, 2.0)];
    const G2: [(f64, f64); 2] = [
        (-0.5773502691896257, 1.0),
        (0.5773502691896257, 1.0),
    ];
    const G3: [(f64, f64); 3] = [
        (-0.7745966692414834, 0.5555555555555556),
        (0.0, 0.8888888888888888),
        (0.7745966692414834, 0.5555555555555556),
    ];
    const G4: [(f64, f64); 4] = [
        (-0.8611363115940526, 0.34785484513745385),
        (-0.3399810435848563, 0.6521451548625461),
        (0.3399810435848563, 0.6521451548625461),
        (0.8611363115940526, 0.34785484513745385),
    ];
    const G5: [(f64, f64); 5] = [
        (-0.9061798459386640, 0.23692688505618908),
        (-0.5384693101056831, 0.47862867049936647),
        (0.0, 0.5688888888888889),
        (0.5384693101056831, 0.47862867049936647),
        (0.9061798459386640, 0.23692688505618908),
    ];
    match n {
        1 => &G1,
        2 => &G2,
        3 => &G3,
        4 => &G4,
        5 => &G5,
        _ => panic!("unsupported quadrature order {n}"),
    }
}

/// Same rule mapped to `[0, 1]` (for reference cells parameterized on the
/// unit interval).
pub fn gauss_unit(n: usize) -> Vec<(f64, f64)> {
    gauss(n)
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}
