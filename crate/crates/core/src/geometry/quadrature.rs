use super::GeometryError;

/// Quadrature points and positive weights on a reference cell.
///
/// Triangle rules live on the unit triangle `(0,0), (1,0), (0,1)` (weights
/// sum to 1/2); tensor rules on `[-1, 1]^2` (weights sum to 4).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, Newton on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess for the i-th largest root
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `n x n` tensor Gauss rule on `[-1, 1]^2`.
pub fn tensor_gauss(n: usize) -> QuadratureRule {
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            points.push([x[i], x[j]]);
            weights.push(w[i] * w[j]);
        }
    }
    QuadratureRule {
        points,
        weights,
        degree: 2 * n - 1,
    }
}

/// Collapsed-Gauss rule on the unit triangle exact for total degree `degree`.
///
/// Built from the Duffy map `x = u, y = v (1 - u)` with `ceil((degree+2)/2)`
/// Gauss points per direction, so every weight is positive and every point
/// is interior.
pub fn triangle_quadrature(degree: usize) -> Result<QuadratureRule, GeometryError> {
    if !(1..=10).contains(&degree) {
        return Err(GeometryError::UnsupportedDegree(degree));
    }
    let n = (degree + 2).div_ceil(2);
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        let u = 0.5 * (1.0 + x[i]);
        let wu = 0.5 * w[i];
        for j in 0..n {
            let v = 0.5 * (1.0 + x[j]);
            let wv = 0.5 * w[j];
            points.push([u, v * (1.0 - u)]);
            weights.push(wu * wv * (1.0 - u));
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        degree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Exact integral of x^a y^b over the unit triangle: a! b! / (a+b+2)!.
    fn monomial_exact(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..=8 {
            let (x, w) = gauss_legendre(n);
            for k in 0..(2 * n) as i32 {
                let num: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((num - exact).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn triangle_rules_are_exact_on_monomials() {
        for degree in 1..=10 {
            let rule = triangle_quadrature(degree).unwrap();
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - 0.5).abs() < 1e-15);
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    let num: f64 = rule
                        .iter()
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = monomial_exact(a, b);
                    assert!(
                        ((num - exact) / exact).abs() < 1e-13,
                        "degree {degree}: x^{a} y^{b}"
                    );
                }
            }
        }
    }

    #[test]
    fn degree_six_x3y3() {
        let rule = triangle_quadrature(6).unwrap();
        let num: f64 = rule.iter().map(|(p, w)| w * p[0].powi(3) * p[1].powi(3)).sum();
        // 3! 3! / 8! = 36 / 40320
        assert!((num - 36.0 / 40320.0).abs() < 1e-17);
    }

    #[test]
    fn unsupported_degree() {
        assert_eq!(triangle_quadrature(0), Err(GeometryError::UnsupportedDegree(0)));
        assert_eq!(triangle_quadrature(11), Err(GeometryError::UnsupportedDegree(11)));
    }

    #[test]
    fn degree_one_integrates_one() {
        let rule = triangle_quadrature(1).unwrap();
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 0.5).abs() < 1e-15);
    }
}
