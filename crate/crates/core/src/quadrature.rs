//! Gauss–Legendre rules and composite panels.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
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
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Shared 20-point rule.
    pub fn g20() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(20))
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let (h, c) = (0.5 * (b - a), 0.5 * (b + a));
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
    }

    /// Scaled nodes and weights for `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (h, c) = (0.5 * (b - a), 0.5 * (b + a));
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (c + h * x, w * h))
    }
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates over `[a, b]` with `panels` equal panels of the rule.
pub fn composite<F: FnMut(f64) -> f64>(rule: &GaussLegendre, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels).map(|k| rule.integrate(a + k as f64 * h, a + (k + 1) as f64 * h, &mut f)).sum()
}

/// Breakpoints on `[0, end]` refined geometrically towards zero: the first
/// panel has width `first`, widths double, and no panel exceeds `max_width`.
pub fn graded_breaks(end: f64, first: f64, max_width: f64) -> Vec<f64> {
    let mut breaks = vec![0.0];
    let mut w = first.min(end).max(end * 1e-300);
    let mut x = 0.0;
    while x < end {
        let step = w.min(max_width);
        x = (x + step).min(end);
        if end - x < 1e-3 * step {
            x = end;
        }
        breaks.push(x);
        w *= 2.0;
    }
    breaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_sum_to_two_and_polynomials_exact() {
        for n in [1, 2, 5, 16, 20, 64] {
            let g = GaussLegendre::new(n);
            assert_relative_eq!(g.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            let deg = 2 * n - 1;
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            let got = g.integrate(-1.0, 1.0, |x| x.powi(deg as i32) + x.powi((deg - 1) as i32));
            let exact2 = exact + if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert_relative_eq!(got, exact2, epsilon = 1e-13);
        }
    }

    #[test]
    fn composite_integrates_smooth_function() {
        let g = GaussLegendre::g20();
        let v = composite(g, 0.0, PI, 4, f64::sin);
        assert_relative_eq!(v, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn graded_breaks_cover_interval() {
        let b = graded_breaks(1.5, 1e-6, 0.2);
        assert_eq!(b[0], 0.0);
        assert_eq!(*b.last().unwrap(), 1.5);
        assert!(b.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.2 + 1e-15));
        assert!(b[1] <= 1e-6);
    }
}
