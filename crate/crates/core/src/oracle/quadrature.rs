use crate::error::{Error, Result};

const KRONROD_X: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const KRONROD_W: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GAUSS_W: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

const MAX_DEPTH: usize = 50;

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = KRONROD_W[7] * fc;
    let mut gauss = GAUSS_W[3] * fc;
    for i in 0..7 {
        let dx = h * KRONROD_X[i];
        let s = f(c - dx) + f(c + dx);
        kronrod += KRONROD_W[i] * s;
        if i % 2 == 1 {
            gauss += GAUSS_W[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> Result<f64> {
    let (v, err) = gk15(f, a, b);
    if !v.is_finite() {
        return Err(Error::Numerical(format!("non-finite integrand on [{a}, {b}]")));
    }
    if err <= tol || depth >= MAX_DEPTH {
        return Ok(v);
    }
    let m = 0.5 * (a + b);
    Ok(adapt(f, a, m, 0.5 * tol, depth + 1)? + adapt(f, m, b, 0.5 * tol, depth + 1)?)
}

/// Adaptive 15-point Gauss-Kronrod integral of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Config("integration needs finite limits and positive tolerance".into()));
    }
    adapt(&f, a, b, tol, 0)
}

/// Iterated adaptive integral of `f(x, y)` over a rectangle.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(f: F, x: (f64, f64), y: (f64, f64), tol: f64) -> Result<f64> {
    let width = (x.1 - x.0).abs().max(1.0);
    let inner_tol = 0.1 * tol / width;
    let failed = std::cell::Cell::new(None);
    let outer = integrate(
        |xv| match integrate(|yv| f(xv, yv), y.0, y.1, inner_tol) {
            Ok(v) => v,
            Err(e) => {
                failed.set(Some(e));
                0.0
            }
        },
        x.0,
        x.1,
        tol,
    )?;
    match failed.into_inner() {
        Some(e) => Err(e),
        None => Ok(outer),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_gaussians() {
        assert!((integrate(|x| x.powi(5) - x, 0.0, 2.0, 1e-12).unwrap() - (64.0 / 6.0 - 2.0)).abs() < 1e-12);
        let g = integrate(|x| (-0.5 * x * x).exp(), -12.0, 12.0, 1e-12).unwrap();
        assert!((g - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-11);
    }

    #[test]
    fn peaked_integrand() {
        let v = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10).unwrap();
        let exact = 2.0 / 1e-2 * (1.0f64 / 1e-2).atan();
        assert!((v - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn two_dimensional() {
        let v = integrate_2d(|x, y| x * y * y, (0.0, 1.0), (0.0, 3.0), 1e-12).unwrap();
        assert!((v - 4.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(integrate(|x| x, 0.0, f64::INFINITY, 1e-6).is_err());
        assert!(integrate(|_| f64::NAN, 0.0, 1.0, 1e-6).is_err());
    }
}
