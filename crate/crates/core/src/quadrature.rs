//! Gauss-Legendre rules on [-1, 1] and their tensor products.

/// Points and weights of the `n`-point rule, `n` in 1..=4.
pub fn gauss_1d(n: usize) -> (&'static [f64], &'static [f64]) {
    const P1: [f64; 1] = [0.0];
    const W1: [f64; 1] = [2.0];
    // 1/sqrt(3)
    const P2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];
    const W2: [f64; 2] = [1.0, 1.0];
    // sqrt(3/5)
    const P3: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
    const W3: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    const P4: [f64; 4] = [
        -0.861_136_311_594_052_6,
        -0.339_981_043_584_856_3,
        0.339_981_043_584_856_3,
        0.861_136_311_594_052_6,
    ];
    const W4: [f64; 4] = [
        0.347_854_845_137_453_9,
        0.652_145_154_862_546_1,
        0.652_145_154_862_546_1,
        0.347_854_845_137_453_9,
    ];
    match n {
        1 => (&P1, &W1),
        2 => (&P2, &W2),
        3 => (&P3, &W3),
        4 => (&P4, &W4),
        _ => panic!("no {n}-point Gauss rule"),
    }
}

/// Tensor rule on [-1, 1]²: `(xi, eta, weight)`.
pub fn gauss_2d(n: usize) -> Vec<(f64, f64, f64)> {
    let (p, w) = gauss_1d(n);
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push((p[i], p[j], w[i] * w[j]));
        }
    }
    out
}
