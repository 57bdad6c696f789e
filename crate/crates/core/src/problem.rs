//! Problem data: exponent, regularization, source and optional exact solution.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::assembly::flux_jacobian;
use crate::error::{Error, Result};

/// A smooth reference solution `u(x, t)`. Points are `(x_1, .., x_d, t)`.
pub trait ExactSolution: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    /// Space-time gradient `(d_x1 u, .., d_xd u, d_t u)`.
    fn gradient(&self, x: &[f64]) -> [f64; 3];
    /// Spatial Hessian; only the leading `d x d` block is meaningful.
    fn space_hessian(&self, x: &[f64]) -> [[f64; 2]; 2];
}

/// `u(x, t) = t^2 e^t prod_i sin(pi x_i)`.
#[derive(Clone, Copy, Debug)]
pub struct Manufactured {
    pub d: usize,
}

impl Manufactured {
    fn sines(&self, x: &[f64]) -> ([f64; 2], [f64; 2]) {
        let mut s = [1.0; 2];
        let mut c = [0.0; 2];
        for i in 0..self.d {
            s[i] = (PI * x[i]).sin();
            c[i] = (PI * x[i]).cos();
        }
        (s, c)
    }

    fn time_factor(&self, x: &[f64]) -> f64 {
        let t = x[self.d];
        t * t * t.exp()
    }
}

impl ExactSolution for Manufactured {
    fn value(&self, x: &[f64]) -> f64 {
        let (s, _) = self.sines(x);
        self.time_factor(x) * s[..self.d].iter().product::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> [f64; 3] {
        let (s, c) = self.sines(x);
        let t = x[self.d];
        let tf = self.time_factor(x);
        let prod: f64 = s[..self.d].iter().product();
        let mut g = [0.0; 3];
        for i in 0..self.d {
            let others: f64 = (0..self.d).filter(|&j| j != i).map(|j| s[j]).product();
            g[i] = tf * PI * c[i] * others;
        }
        g[self.d] = (2.0 * t + t * t) * t.exp() * prod;
        g
    }

    fn space_hessian(&self, x: &[f64]) -> [[f64; 2]; 2] {
        let (_, c) = self.sines(x);
        let tf = self.time_factor(x);
        let u = self.value(x);
        let mut h = [[0.0; 2]; 2];
        for i in 0..self.d {
            h[i][i] = -PI * PI * u;
        }
        if self.d == 2 {
            h[0][1] = tf * PI * PI * c[0] * c[1];
            h[1][0] = h[0][1];
        }
        h
    }
}

pub type SourceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ProblemDefinition {
    pub p: f64,
    pub eps: f64,
    pub d: usize,
    source: SourceFn,
    pub exact: Option<Arc<dyn ExactSolution>>,
    pub exact_goal: Option<f64>,
}

impl std::fmt::Debug for ProblemDefinition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemDefinition")
            .field("p", &self.p)
            .field("eps", &self.eps)
            .field("d", &self.d)
            .field("has_exact", &self.exact.is_some())
            .field("exact_goal", &self.exact_goal)
            .finish()
    }
}

fn validate(d: usize, p: f64, eps: f64) -> Result<()> {
    if !(1..=2).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("p must exceed 1, got {p}")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    Ok(())
}

impl ProblemDefinition {
    pub fn new(d: usize, p: f64, eps: f64, source: SourceFn) -> Result<Self> {
        validate(d, p, eps)?;
        Ok(ProblemDefinition {
            p,
            eps,
            d,
            source,
            exact: None,
            exact_goal: None,
        })
    }

    /// Source `f = d_t u - div_x flux(grad_x u)` for a given smooth `u`.
    pub fn with_exact(d: usize, p: f64, eps: f64, exact: Arc<dyn ExactSolution>) -> Result<Self> {
        validate(d, p, eps)?;
        let u = exact.clone();
        let source: SourceFn = Arc::new(move |x: &[f64]| {
            let g = u.gradient(x);
            let h = u.space_hessian(x);
            let jf = flux_jacobian(&g[..d], p, eps);
            let mut div = 0.0;
            for i in 0..d {
                for j in 0..d {
                    div += jf[i][j] * h[j][i];
                }
            }
            g[d] - div
        });
        Ok(ProblemDefinition {
            p,
            eps,
            d,
            source,
            exact: Some(exact),
            exact_goal: None,
        })
    }

    pub fn manufactured(d: usize, p: f64, eps: f64) -> Result<Self> {
        Self::with_exact(d, p, eps, Arc::new(Manufactured { d }))
    }

    pub fn with_exact_goal(mut self, value: f64) -> Self {
        self.exact_goal = Some(value);
        self
    }

    pub fn source(&self, x: &[f64]) -> f64 {
        (self.source)(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::flux;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn manufactured_derivatives_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for d in 1..=2 {
            let u = Manufactured { d };
            for _ in 0..10 {
                let x: Vec<f64> = (0..=d).map(|_| rng.gen_range(0.05..0.95)).collect();
                let g = u.gradient(&x);
                for a in 0..=d {
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[a] += h;
                    xm[a] -= h;
                    let fd = (u.value(&xp) - u.value(&xm)) / (2.0 * h);
                    assert!((fd - g[a]).abs() < 1e-7);
                }
                let hs = u.space_hessian(&x);
                for a in 0..d {
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[a] += h;
                    xm[a] -= h;
                    for b in 0..d {
                        let fd = (u.gradient(&xp)[b] - u.gradient(&xm)[b]) / (2.0 * h);
                        assert!((fd - hs[a][b]).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn source_matches_difference_divergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for d in 1..=2 {
            for (p, eps) in [(1.5, 1.0), (4.0, 1e-5), (3.0, 0.1)] {
                let prob = ProblemDefinition::manufactured(d, p, eps).unwrap();
                let u = Manufactured { d };
                for _ in 0..10 {
                    let x: Vec<f64> = (0..=d).map(|_| rng.gen_range(0.1..0.9)).collect();
                    let mut div = 0.0;
                    for a in 0..d {
                        let (mut xp, mut xm) = (x.clone(), x.clone());
                        xp[a] += h;
                        xm[a] -= h;
                        let fp = flux(&u.gradient(&xp)[..d], p, eps)[a];
                        let fm = flux(&u.gradient(&xm)[..d], p, eps)[a];
                        div += (fp - fm) / (2.0 * h);
                    }
                    let want = u.gradient(&x)[d] - div;
                    let got = prob.source(&x);
                    assert!((got - want).abs() < 1e-5 * want.abs().max(1.0), "d {d} p {p}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(ProblemDefinition::manufactured(3, 2.0, 1.0), Err(Error::UnsupportedDimension(3))));
        assert!(ProblemDefinition::manufactured(1, 1.0, 1.0).is_err());
        assert!(ProblemDefinition::manufactured(1, 2.0, 0.0).is_err());
    }
}
