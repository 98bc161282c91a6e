//! Characteristic polynomials and polynomial roots for small dense matrices.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Monic characteristic polynomial `[1, c₁, …, cₙ]` of a square matrix,
/// i.e. `det(λI − M) = λⁿ + c₁λⁿ⁻¹ + … + cₙ`, by Faddeev–LeVerrier.
pub fn characteristic_polynomial(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut coeffs = vec![1.0];
    let mut mk = vec![vec![0.0; n]; n];
    for k in 1..=n {
        // M_k = M·M_{k−1} + c_{k−1} I
        let c_prev = coeffs[k - 1];
        let mut next = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += m[i][l] * mk[l][j];
                }
                next[i][j] = s + if i == j { c_prev } else { 0.0 };
            }
        }
        let mut trace = 0.0;
        for i in 0..n {
            for l in 0..n {
                trace += m[i][l] * next[l][i];
            }
        }
        coeffs.push(-trace / k as f64);
        mk = next;
    }
    coeffs
}

fn horner(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

fn derivative(c: &[Complex64]) -> Vec<Complex64> {
    let n = c.len() - 1;
    c[..n]
        .iter()
        .enumerate()
        .map(|(i, &a)| a * (n - i) as f64)
        .collect()
}

fn newton(c: &[Complex64], mut z: Complex64, iters: usize) -> Complex64 {
    let dc = derivative(c);
    for _ in 0..iters {
        let d = horner(&dc, z);
        if d.norm() == 0.0 {
            break;
        }
        let step = horner(c, z) / d;
        if !step.is_finite() {
            break;
        }
        z -= step;
        if step.norm() <= 1e-17 * z.norm().max(1.0) {
            break;
        }
    }
    z
}

fn clean(root: Complex64) -> Complex64 {
    if root.im.abs() < 1e-12 * root.norm().max(1.0) {
        Complex64::new(root.re, 0.0)
    } else {
        root
    }
}

/// A root of multiplicity `m` near `start`: Newton on the `(m − 1)`-th
/// derivative, accepted only if the polynomial and its first `m − 1`
/// derivatives all vanish there to relative precision.
fn multiple_root(c: &[Complex64], m: usize, start: Complex64) -> Option<Complex64> {
    let mut derivs = vec![c.to_vec()];
    for _ in 1..m {
        let next = derivative(derivs.last().unwrap());
        derivs.push(next);
    }
    let top = &derivs[m - 1];
    let root = if top.len() == 2 {
        -top[1] / top[0]
    } else {
        newton(top, start, 50)
    };
    if !root.is_finite() {
        return None;
    }
    let rn = root.norm();
    for p in &derivs[..m - 1] {
        let scale = p.iter().fold(0.0, |acc, a| acc * rn + a.norm());
        if horner(p, root).norm() > 1e-9 * scale {
            return None;
        }
    }
    Some(root)
}

/// Roots of the monic polynomial `[1, c₁, …, cₙ]`, sorted by real then
/// imaginary part.
///
/// Durand–Kerner gives approximations; multiple roots are then located by
/// Newton on higher derivatives (highest multiplicity first) and the rest
/// are polished by Newton on the polynomial itself.
pub fn roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let n = coeffs.len().saturating_sub(1);
    if n == 0 {
        return Ok(Vec::new());
    }
    if coeffs[0] != 1.0 || coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParams(
            "polynomial must be monic with finite coefficients".into(),
        ));
    }
    let c: Vec<Complex64> = coeffs.iter().map(|&a| Complex64::new(a, 0.0)).collect();
    let radius = 1.0 + coeffs[1..].iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32) * radius).collect();

    for _ in 0..2000 {
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= z[i] - z[j];
                }
            }
            if denom.norm() == 0.0 {
                denom = Complex64::new(1e-300, 0.0);
            }
            let step = horner(&c, z[i]) / denom;
            z[i] -= step;
            delta = delta.max(step.norm() / z[i].norm().max(1.0));
        }
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::NoConvergence(n));
        }
        if delta < 1e-15 {
            break;
        }
    }

    let mut remaining = z;
    let mut out = Vec::with_capacity(n);
    for m in (2..=n).rev() {
        let mut k = 0;
        while k < remaining.len() && remaining.len() >= m {
            let Some(root) = multiple_root(&c, m, remaining[k]) else {
                k += 1;
                continue;
            };
            remaining.sort_by(|a, b| (a - root).norm().total_cmp(&(b - root).norm()));
            remaining.drain(..m);
            out.extend(std::iter::repeat_n(clean(root), m));
            k = 0;
        }
    }
    for z0 in remaining {
        let root = newton(&c, z0, 50);
        let scale = c.iter().fold(0.0, |acc, a| acc * root.norm() + a.norm());
        if !root.is_finite() || horner(&c, root).norm() > 1e-8 * scale {
            return Err(Error::NoConvergence(n));
        }
        out.push(clean(root));
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}
