//! The nonlocal terms `P` and `Q` in linear time.
//!
//! Both are convolutions of `g = 2 U^2 y_xi + h` against `exp(-|y(xi) - y(eta)|)`
//! over the label line, with `Q` carrying an extra sign. Because `y` is
//! non-decreasing the exponential factors into a product of per-cell decays,
//! so a forward and a backward running sum give both integrals at every node
//! in O(N) total.
//!
//! The trapezoid rule alone is only second-order accurate here: the kernel has
//! a kink on the diagonal. The `Corrected` rule adds the Euler-Maclaurin term
//! for that kink, which is local and brings the error down to fourth order for
//! smooth data.

use serde::{Deserialize, Serialize};

use crate::coords::LagrangianState;
use crate::error::{Error, Result};
use crate::interp::uniform_slopes;
use crate::measures::FOLD_TOL;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    Trapezoid,
    #[default]
    Corrected,
}

/// Reusable buffers so that repeated evaluations do not allocate.
#[derive(Clone, Debug, Default)]
pub struct KernelWorkspace {
    decay: Vec<f64>,
    g: Vec<f64>,
    fwd: Vec<f64>,
    bwd: Vec<f64>,
}

impl KernelWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Writes `P` and `Q` at every node into `p` and `q`.
    #[allow(clippy::too_many_arguments)]
    pub fn eval(
        &mut self,
        dxi: f64,
        zeta: &[f64],
        y_xi: &[f64],
        u: &[f64],
        h: &[f64],
        rule: Quadrature,
        p: &mut [f64],
        q: &mut [f64],
    ) -> Result<()> {
        let n = zeta.len();
        self.decay.resize(n.saturating_sub(1), 0.0);
        self.g.resize(n, 0.0);
        self.fwd.resize(n, 0.0);
        self.bwd.resize(n, 0.0);

        for k in 0..n - 1 {
            let dy = dxi + (zeta[k + 1] - zeta[k]);
            if dy < -FOLD_TOL * dxi {
                return Err(Error::NotMonotone { index: k, drop: -dy });
            }
            self.decay[k] = (-dy.max(0.0)).exp();
        }
        for i in 0..n {
            self.g[i] = 2.0 * u[i] * u[i] * y_xi[i] + h[i];
        }
        let weight = |i: usize| if i == 0 || i == n - 1 { 0.5 * dxi } else { dxi };

        self.fwd[0] = weight(0) * self.g[0];
        for i in 1..n {
            self.fwd[i] = self.fwd[i - 1] * self.decay[i - 1] + weight(i) * self.g[i];
        }
        self.bwd[n - 1] = weight(n - 1) * self.g[n - 1];
        for i in (0..n - 1).rev() {
            self.bwd[i] = self.bwd[i + 1] * self.decay[i] + weight(i) * self.g[i];
        }
        for i in 0..n {
            p[i] = 0.25 * (self.fwd[i] + self.bwd[i] - weight(i) * self.g[i]);
            q[i] = -0.25 * (self.fwd[i] - self.bwd[i]);
        }

        if rule == Quadrature::Corrected {
            let gx = uniform_slopes(&self.g, dxi);
            let c = 0.25 * dxi * dxi / 6.0;
            for i in 0..n {
                p[i] -= c * y_xi[i] * self.g[i];
                q[i] += c * gx[i];
            }
        }
        Ok(())
    }
}

/// `(P, Q)` for a state.
pub fn eval_pq(s: &LagrangianState, rule: Quadrature) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = s.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    KernelWorkspace::new().eval(s.dxi(), &s.zeta, &s.y_xi, &s.u, &s.h, rule, &mut p, &mut q)?;
    Ok((p, q))
}

pub fn eval_p(s: &LagrangianState) -> Result<Vec<f64>> {
    Ok(eval_pq(s, Quadrature::default())?.0)
}

pub fn eval_q(s: &LagrangianState) -> Result<Vec<f64>> {
    Ok(eval_pq(s, Quadrature::default())?.1)
}
