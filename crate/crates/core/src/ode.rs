//! Deterministic ODE reference solutions used as oracles by tests and by the
//! mean-dynamics checks: a classical RK4 integrator and the closed-form flow of
//! a 2×2 linear system.

/// Integrates dy/dt = f(t, y) from `t0` with `steps` RK4 steps of size `dt`.
///
/// Global error is O(dt⁴); at dt ≈ 10⁻⁴ the result is an effectively exact
/// reference for the smooth low-dimensional systems it is used on.
pub fn rk4<F: Fn(f64, &[f64], &mut [f64])>(f: F, y0: &[f64], t0: f64, dt: f64, steps: usize) -> Vec<f64> {
    let n = y0.len();
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut t = t0;
    for _ in 0..steps {
        f(t, &y, &mut k1);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * dt * k1[j];
        }
        f(t + 0.5 * dt, &tmp, &mut k2);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * dt * k2[j];
        }
        f(t + 0.5 * dt, &tmp, &mut k3);
        for j in 0..n {
            tmp[j] = y[j] + dt * k3[j];
        }
        f(t + dt, &tmp, &mut k4);
        for j in 0..n {
            y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        t += dt;
    }
    y
}

/// Matrix exponential e^{At} of a 2×2 system, returned column-major as
/// `[[e00, e10], [e01, e11]]`-style rows.
///
/// Splits A = μI + B with μ = tr(A)/2; B is trace-free, so B² = s²·I with
/// s² = μ² − det A, and the flow reduces to cosh/cos closed forms.
pub fn expm2(a: [[f64; 2]; 2], t: f64) -> [[f64; 2]; 2] {
    let mu = 0.5 * (a[0][0] + a[1][1]);
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let b = [[a[0][0] - mu, a[0][1]], [a[1][0], a[1][1] - mu]];
    let s2 = mu * mu - det;
    // (c, k) with e^{Bt} = c·I + k·B.
    let (c, k) = if s2 > 1e-300 {
        let s = s2.sqrt();
        ((s * t).cosh(), (s * t).sinh() / s)
    } else if s2 < -1e-300 {
        let w = (-s2).sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    } else {
        (1.0, t)
    };
    let scale = (mu * t).exp();
    [
        [scale * (c + k * b[0][0]), scale * (k * b[0][1])],
        [scale * (k * b[1][0]), scale * (c + k * b[1][1])],
    ]
}

/// Applies [`expm2`] to a vector: the exact solution of ẏ = Ay at time t.
pub fn linear2_flow(a: [[f64; 2]; 2], y0: [f64; 2], t: f64) -> [f64; 2] {
    let e = expm2(a, t);
    [
        e[0][0] * y0[0] + e[0][1] * y0[1],
        e[1][0] * y0[0] + e[1][1] * y0[1],
    ]
}
