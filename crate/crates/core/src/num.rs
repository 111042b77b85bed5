//! Small numeric routines used across modules: stable log-sum-exp,
//! tabulated-function interpolation, densities, and a dense linear solver
//! for the low-dimensional Newton steps in the adjusted SCCS profile.

/// log(sum(exp(x_i))) computed stably. Returns -inf for an empty slice or
/// all -inf inputs.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// Linear interpolation of a function tabulated at equally spaced points
/// `x_i = x0 + i*step`. Outside the table the edge segment is extended
/// linearly, which matches the asymptotically linear tails of the
/// log-likelihoods handled here.
pub fn interp_linear(values: &[f64], x0: f64, step: f64, x: f64) -> f64 {
    let n = values.len();
    debug_assert!(n >= 2);
    let t = (x - x0) / step;
    let (i, frac) = if t <= 0.0 {
        (0usize, t)
    } else if t >= (n - 1) as f64 {
        (n - 2, t - (n - 2) as f64)
    } else {
        let i = t.floor() as usize;
        (i.min(n - 2), t - t.floor())
    };
    values[i] + frac * (values[i + 1] - values[i])
}

/// Location of a parabola's vertex fitted through three equally spaced
/// points `(x-h, ym), (x, y0), (x+h, yp)`, clamped to the center cell.
/// Used to refine grid maximizers below grid resolution.
pub fn parabolic_peak(x: f64, h: f64, ym: f64, y0: f64, yp: f64) -> f64 {
    let denom = ym - 2.0 * y0 + yp;
    if denom >= -1e-300 {
        return x; // flat or non-concave triple: keep the grid point
    }
    let offset = 0.5 * (ym - yp) / denom;
    x + offset.clamp(-0.5, 0.5) * h
}

/// Log density of N(mu, sigma^2) at x.
pub fn normal_logpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * (2.0 * std::f64::consts::PI).ln() - sigma.ln() - 0.5 * z * z
}

/// Standard normal CDF via erf (Abramowitz & Stegun 7.1.26, |err| < 7.5e-8).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// ln Gamma(z) for z a positive integer or half-integer. Exact recurrence,
/// no series approximation; the t-density normalizer only ever needs these.
pub fn ln_gamma_int_or_half(twice_z: u32) -> f64 {
    assert!(twice_z >= 1, "argument must be >= 1/2");
    if twice_z % 2 == 0 {
        // integer n = twice_z / 2: Gamma(n) = (n-1)!
        let n = twice_z / 2;
        (1..n).map(|k| (k as f64).ln()).sum()
    } else {
        // half-integer z = m + 1/2: Gamma(z) = (2m)! sqrt(pi) / (4^m m!)
        let m = (twice_z - 1) / 2;
        let mut ln = 0.5 * std::f64::consts::PI.ln();
        for k in 1..=m {
            // multiply by (k - 1/2)
            ln += (k as f64 - 0.5).ln();
        }
        ln
    }
}

/// Log density of a location-scale t distribution with `dof` degrees of
/// freedom, location `mu`, scale `sigma`.
pub fn student_t_logpdf(x: f64, dof: u32, mu: f64, sigma: f64) -> f64 {
    let k = dof as f64;
    let z = (x - mu) / sigma;
    student_t_logconst(dof) - sigma.ln() - 0.5 * (k + 1.0) * (z * z / k).ln_1p()
}

/// Normalizing constant of the standard t density with integer dof.
pub fn student_t_logconst(dof: u32) -> f64 {
    let k = dof as f64;
    ln_gamma_int_or_half(dof + 1) - ln_gamma_int_or_half(dof)
        - 0.5 * (k * std::f64::consts::PI).ln()
}

/// Solve `a x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is row-major n x n. Returns None if the matrix is singular to
/// working precision. Dimensions here are at most ~12 (month effects).
pub fn solve_dense(a: &mut [f64], b: &mut [f64]) -> Option<()> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / diag;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col * n + k] * b[k];
        }
        b[col] = s / a[col * n + col];
    }
    Some(())
}
