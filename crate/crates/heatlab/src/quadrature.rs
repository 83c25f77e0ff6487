//! Quadrature rules: symmetric triangle rules in barycentric form and
//! 1-D Gauss–Legendre rules used for time integrals.
//!
//! Triangle weights are normalized to sum to 1; multiply by the element
//! area when integrating. The degree-5 rule carries exact radicals, the
//! degree-6 rule the published 15-digit constants.

/// A symmetric quadrature rule on the reference triangle.
#[derive(Debug, Clone)]
pub struct TriRule {
    /// Barycentric coordinates of the nodes.
    pub bary: Vec<[f64; 3]>,
    /// Weights, summing to 1.
    pub weights: Vec<f64>,
    /// Highest polynomial degree integrated exactly.
    pub degree: u32,
}

impl TriRule {
    /// Composite rule on the 4^depth congruent sub-triangles of uniform
    /// refinement, for integrands with features below the element scale.
    pub fn subdivided(&self, depth: u32) -> TriRule {
        let mut children: Vec<[[f64; 3]; 3]> =
            vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]];
        for _ in 0..depth {
            let mut next = Vec::with_capacity(children.len() * 4);
            for [a, b, c] in children {
                let mid = |p: [f64; 3], q: [f64; 3]| {
                    [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, (p[2] + q[2]) / 2.0]
                };
                let (mab, mbc, mca) = (mid(a, b), mid(b, c), mid(c, a));
                next.push([a, mab, mca]);
                next.push([b, mbc, mab]);
                next.push([c, mca, mbc]);
                next.push([mab, mbc, mca]);
            }
            children = next;
        }
        let frac = 1.0 / children.len() as f64;
        let mut out = TriRule { bary: vec![], weights: vec![], degree: self.degree };
        for [a, b, c] in children {
            for (k, &[b0, b1, b2]) in self.bary.iter().enumerate() {
                out.bary.push([
                    b0 * a[0] + b1 * b[0] + b2 * c[0],
                    b0 * a[1] + b1 * b[1] + b2 * c[1],
                    b0 * a[2] + b1 * b[2] + b2 * c[2],
                ]);
                out.weights.push(self.weights[k] * frac);
            }
        }
        out
    }
}

fn orbit3(rule: &mut TriRule, a: f64, b: f64, w: f64) {
    rule.bary.push([a, b, b]);
    rule.bary.push([b, a, b]);
    rule.bary.push([b, b, a]);
    rule.weights.extend_from_slice(&[w, w, w]);
}

fn orbit6(rule: &mut TriRule, a: f64, b: f64, c: f64, w: f64) {
    for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
        rule.bary.push(p);
        rule.weights.push(w);
    }
}

/// Centroid rule, exact for affine integrands.
pub fn tri_rule_centroid() -> TriRule {
    TriRule { bary: vec![[1.0 / 3.0; 3]], weights: vec![1.0], degree: 1 }
}

/// Edge-midpoint rule, exact to degree 2.
pub fn tri_rule_midpoint() -> TriRule {
    let mut r = TriRule { bary: vec![], weights: vec![], degree: 2 };
    orbit3(&mut r, 0.0, 0.5, 1.0 / 3.0);
    r
}

/// Seven-point rule, exact to degree 5.
pub fn tri_rule_deg5() -> TriRule {
    let s15 = 15.0_f64.sqrt();
    let mut r = TriRule { bary: vec![[1.0 / 3.0; 3]], weights: vec![9.0 / 40.0], degree: 5 };
    let b1 = (6.0 - s15) / 21.0;
    orbit3(&mut r, 1.0 - 2.0 * b1, b1, (155.0 - s15) / 1200.0);
    let b2 = (6.0 + s15) / 21.0;
    orbit3(&mut r, 1.0 - 2.0 * b2, b2, (155.0 + s15) / 1200.0);
    r
}

/// Twelve-point rule, exact to degree 6.
pub fn tri_rule_deg6() -> TriRule {
    let mut r = TriRule { bary: vec![], weights: vec![], degree: 6 };
    orbit3(&mut r, 0.873_821_971_016_996, 0.063_089_014_491_502, 0.050_844_906_370_207);
    orbit3(&mut r, 0.501_426_509_658_179, 0.249_286_745_170_910, 0.116_786_275_726_379);
    orbit6(
        &mut r,
        0.636_502_499_121_399,
        0.310_352_451_033_784,
        0.053_145_049_844_817,
        0.082_851_075_618_374,
    );
    r
}

/// Smallest stock rule exact to at least `degree`.
pub fn tri_rule_for_degree(degree: u32) -> TriRule {
    match degree {
        0 | 1 => tri_rule_centroid(),
        2 => tri_rule_midpoint(),
        3..=5 => tri_rule_deg5(),
        _ => tri_rule_deg6(),
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1] for n in 1..=6.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let x = 1.0 / 3.0_f64.sqrt();
            (vec![-x, x], vec![1.0, 1.0])
        }
        3 => {
            let x = (3.0_f64 / 5.0).sqrt();
            (vec![-x, 0.0, x], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => (
            vec![
                -0.861_136_311_594_052_6,
                -0.339_981_043_584_856_3,
                0.339_981_043_584_856_3,
                0.861_136_311_594_052_6,
            ],
            vec![
                0.347_854_845_137_453_86,
                0.652_145_154_862_546_1,
                0.652_145_154_862_546_1,
                0.347_854_845_137_453_86,
            ],
        ),
        5 => (
            vec![
                -0.906_179_845_938_664,
                -0.538_469_310_105_683_1,
                0.0,
                0.538_469_310_105_683_1,
                0.906_179_845_938_664,
            ],
            vec![
                0.236_926_885_056_189_08,
                0.478_628_670_499_366_5,
                0.568_888_888_888_888_9,
                0.478_628_670_499_366_5,
                0.236_926_885_056_189_08,
            ],
        ),
        6 => (
            vec![
                -0.932_469_514_203_152_1,
                -0.661_209_386_466_264_5,
                -0.238_619_186_083_196_9,
                0.238_619_186_083_196_9,
                0.661_209_386_466_264_5,
                0.932_469_514_203_152_1,
            ],
            vec![
                0.171_324_492_379_170_4,
                0.360_761_573_048_138_6,
                0.467_913_934_572_691,
                0.467_913_934_572_691,
                0.360_761_573_048_138_6,
                0.171_324_492_379_170_4,
            ],
        ),
        _ => panic!("gauss_legendre: only 1..=6 nodes are tabulated"),
    }
}

/// A composite 1-D quadrature over (0, T]: a list of (node, weight) pairs.
#[derive(Debug, Clone)]
pub struct TimeGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TimeGrid {
    /// Uniform composite Gauss–Legendre rule on [0, t_end].
    pub fn uniform(t_end: f64, panels: usize, pts: usize) -> Self {
        let (xs, ws) = gauss_legendre(pts);
        let mut nodes = Vec::with_capacity(panels * pts);
        let mut weights = Vec::with_capacity(panels * pts);
        let dt = t_end / panels as f64;
        for p in 0..panels {
            let (a, b) = (p as f64 * dt, (p + 1) as f64 * dt);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for (&x, &w) in xs.iter().zip(&ws) {
                nodes.push(mid + half * x);
                weights.push(half * w);
            }
        }
        TimeGrid { nodes, weights }
    }

    /// Geometrically graded panels toward t = 0 on (0, t_end]: panels
    /// [t_end·2^{-k-1}, t_end·2^{-k}] for k = 0..levels, plus a final
    /// panel [0, t_end·2^{-levels-1}] so the whole interval is covered.
    pub fn graded(t_end: f64, levels: usize, pts: usize) -> Self {
        let (xs, ws) = gauss_legendre(pts);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut push = |a: f64, b: f64| {
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for (&x, &w) in xs.iter().zip(&ws) {
                nodes.push(mid + half * x);
                weights.push(half * w);
            }
        };
        for k in 0..=levels {
            let b = t_end * 0.5_f64.powi(k as i32);
            push(0.5 * b, b);
        }
        push(0.0, t_end * 0.5_f64.powi(levels as i32 + 1));
        TimeGrid { nodes, weights }
    }

    /// Apply the rule to a sampled integrand.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }
}

/// Logarithmically spaced grid on [a, b]; used for sup-over-t sweeps.
pub fn log_spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(a > 0.0 && b > a && n >= 2);
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Exact integral of x^p y^q over the reference triangle.
    fn monomial_exact(p: u32, q: u32) -> f64 {
        let fact = |k: u32| (1..=k as u64).product::<u64>() as f64;
        fact(p) * fact(q) / fact(p + q + 2)
    }

    fn check_rule(rule: &TriRule) {
        assert_abs_diff_eq!(rule.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        for p in 0..=rule.degree {
            for q in 0..=(rule.degree - p) {
                let approx_val: f64 = rule
                    .bary
                    .iter()
                    .zip(&rule.weights)
                    .map(|(b, w)| {
                        // reference triangle (0,0), (1,0), (0,1): x = b1, y = b2
                        let (x, y) = (b[1], b[2]);
                        w * x.powi(p as i32) * y.powi(q as i32)
                    })
                    .sum::<f64>()
                    * 0.5; // reference area
                assert_abs_diff_eq!(approx_val, monomial_exact(p, q), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn triangle_rules_integrate_monomials_exactly() {
        check_rule(&tri_rule_centroid());
        check_rule(&tri_rule_midpoint());
        check_rule(&tri_rule_deg5());
        check_rule(&tri_rule_deg6());
    }

    #[test]
    fn gauss_legendre_polynomial_exactness() {
        for n in 1..=6 {
            let (xs, ws) = gauss_legendre(n);
            for d in 0..(2 * n) {
                let got: f64 =
                    xs.iter().zip(&ws).map(|(&x, &w)| w * x.powi(d as i32)).sum();
                let exact = if d % 2 == 0 { 2.0 / (d as f64 + 1.0) } else { 0.0 };
                assert_abs_diff_eq!(got, exact, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn graded_grid_covers_interval() {
        let g = TimeGrid::graded(1.0, 16, 4);
        // total weight equals interval length
        assert_abs_diff_eq!(g.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        // integrates a polynomial exactly despite grading
        let v = g.integrate(|t| 3.0 * t * t);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        // and resolves an integrable singular-ish integrand decently
        let v = g.integrate(|t| t.powf(-0.5));
        assert!((v - 2.0).abs() < 2e-3, "graded rule mishandles t^-1/2: {v}");
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_spaced(1e-6, 10.0, 40);
        assert_abs_diff_eq!(g[0], 1e-6, epsilon = 1e-18);
        assert_abs_diff_eq!(g[39], 10.0, epsilon = 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
