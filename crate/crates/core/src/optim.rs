//! Small box-constrained quasi-Newton minimizer.
//!
//! Projected BFGS: the inverse-Hessian approximation acts on the free
//! variables only, variables pinned at a bound with the gradient pushing
//! outward are held fixed, and an Armijo backtracking search runs along the
//! projected path. Intended for problems with a handful of parameters.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Self {
        debug_assert!(lower <= upper);
        Bounds { lower, upper }
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoxQuasiNewton {
    pub max_iters: usize,
    /// Stop when the projected gradient's max-norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative objective decrease falls below this.
    pub f_tol: f64,
}

impl Default for BoxQuasiNewton {
    fn default() -> Self {
        BoxQuasiNewton {
            max_iters: 200,
            grad_tol: 1e-9,
            f_tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimError {
    #[error("objective is not finite at the starting point")]
    NonFiniteStart,
}

impl BoxQuasiNewton {
    /// Minimizes `f` over the box. `f` returns the value and writes the
    /// gradient into its second argument.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], bounds: &[Bounds]) -> Result<Minimum, OptimError>
    where
        F: FnMut(&[f64], &mut [f64]) -> f64,
    {
        let n = x0.len();
        assert_eq!(n, bounds.len());
        let project = |x: &mut [f64]| {
            for (xi, b) in x.iter_mut().zip(bounds) {
                *xi = b.clamp(*xi);
            }
        };

        let mut x = x0.to_vec();
        project(&mut x);
        let mut g = vec![0.0; n];
        let mut fx = f(&x, &mut g);
        if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(OptimError::NonFiniteStart);
        }

        let mut h = identity(n);
        let mut h_is_identity = true;
        let mut x_new = vec![0.0; n];
        let mut g_new = vec![0.0; n];

        for iter in 0..self.max_iters {
            let free: Vec<bool> = (0..n)
                .map(|i| {
                    let at_lower = x[i] <= bounds[i].lower && g[i] > 0.0;
                    let at_upper = x[i] >= bounds[i].upper && g[i] < 0.0;
                    !(at_lower || at_upper)
                })
                .collect();
            let pg_norm = (0..n)
                .map(|i| (x[i] - bounds[i].clamp(x[i] - g[i])).abs())
                .fold(0.0, f64::max);
            if pg_norm < self.grad_tol {
                return Ok(Minimum {
                    x,
                    value: fx,
                    iterations: iter,
                    converged: true,
                });
            }

            let mut d = direction(&h, &g, &free);
            let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            if slope.is_nan() || slope >= 0.0 {
                h = identity(n);
                h_is_identity = true;
                d = direction(&h, &g, &free);
                slope = d.iter().zip(&g).map(|(a, b)| a * b).sum();
                if slope.is_nan() || slope >= 0.0 {
                    break;
                }
            }

            // Armijo search along the projected path
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                for i in 0..n {
                    x_new[i] = x[i] + step * d[i];
                }
                project(&mut x_new);
                let decrease: f64 = (0..n).map(|i| g[i] * (x_new[i] - x[i])).sum();
                let f_try = f(&x_new, &mut g_new);
                if f_try.is_finite() && f_try <= fx + 1e-4 * decrease && g_new.iter().all(|v| v.is_finite()) {
                    accepted = Some(f_try);
                    break;
                }
                step *= 0.5;
            }
            let Some(f_next) = accepted else {
                if h_is_identity {
                    break;
                }
                h = identity(n);
                h_is_identity = true;
                continue;
            };

            let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
            let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
            let f_prev = fx;
            x.copy_from_slice(&x_new);
            g.copy_from_slice(&g_new);
            fx = f_next;

            if (f_prev - fx).abs() <= self.f_tol * f_prev.abs().max(1.0) {
                return Ok(Minimum {
                    x,
                    value: fx,
                    iterations: iter + 1,
                    converged: true,
                });
            }

            let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
            let yy: f64 = y.iter().map(|v| v * v).sum();
            let ss: f64 = s.iter().map(|v| v * v).sum();
            if sy > 1e-12 * (ss * yy).sqrt() {
                if h_is_identity {
                    let gamma = sy / yy;
                    for (i, row) in h.iter_mut().enumerate() {
                        for (j, v) in row.iter_mut().enumerate() {
                            *v = if i == j { gamma } else { 0.0 };
                        }
                    }
                }
                bfgs_update(&mut h, &s, &y, sy);
                h_is_identity = false;
            }
        }

        Ok(Minimum {
            x,
            value: fx,
            iterations: self.max_iters,
            converged: false,
        })
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn direction(h: &[Vec<f64>], g: &[f64], free: &[bool]) -> Vec<f64> {
    let n = g.len();
    (0..n)
        .map(|i| {
            if !free[i] {
                return 0.0;
            }
            -(0..n).filter(|&j| free[j]).map(|j| h[i][j] * g[j]).sum::<f64>()
        })
        .collect()
}

/// Inverse-Hessian BFGS update `H <- (I - r s y') H (I - r y s') + r s s'`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let r = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -r * (hy[i] * s[j] + s[i] * hy[j]) + (r * r * yhy + r) * s[i] * s[j];
        }
    }
}
