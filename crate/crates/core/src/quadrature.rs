//! Gauss–Legendre rules on `[-1, 1]` and composite line integrals.

use crate::error::Result;

/// Nodes and weights of the `n`-point rule, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (z * p1 - p0) / (z * z - 1.0))
}

/// Integral of the one-form `w` along the polyline through `vertices`,
/// one `n`-point rule per segment.
pub fn line_integral<W>(w: W, vertices: &[Vec<f64>], n: usize) -> Result<f64>
where
    W: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let (x, wt) = gauss_legendre(n);
    let mut total = 0.0;
    for seg in vertices.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        let d: Vec<f64> = b.iter().zip(a).map(|(b, a)| b - a).collect();
        if d.iter().all(|v| *v == 0.0) {
            continue;
        }
        for (xi, wi) in x.iter().zip(&wt) {
            let s = 0.5 * (xi + 1.0);
            let p: Vec<f64> = a.iter().zip(&d).map(|(a, d)| a + s * d).collect();
            let form = w(&p)?;
            let dot: f64 = form.iter().zip(&d).map(|(f, d)| f * d).sum();
            total += 0.5 * wi * dot;
        }
    }
    Ok(total)
}
