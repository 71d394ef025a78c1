//! Brute-force grid maximization over a free set, for cross-checking solvers.

use crate::error::{CoreError, Result};
use crate::quantum::{cr, CMat};
use crate::theories::FreeStateSet;

#[derive(Clone, Debug)]
pub struct GridResult {
    pub value: f64,
    pub argmax: CMat,
    /// Upper bound on (true optimum - value) given the objective's Lipschitz
    /// constant in trace norm.
    pub gap: f64,
    pub points: usize,
    pub step: usize,
}

const BUDGET: f64 = 250_000.0;

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Maximize `objective` over the free set on a grid of mixing weights with
/// spacing at most `resolution` (coarsened to stay within a fixed budget).
pub fn grid_oracle(
    objective: impl Fn(&CMat) -> f64,
    free: &FreeStateSet,
    resolution: f64,
    lipschitz: f64,
) -> Result<GridResult> {
    let pts = match free {
        FreeStateSet::GibbsSingleton { .. } => {
            let tau = free.gibbs_state().unwrap().into_matrix();
            return Ok(GridResult { value: objective(&tau), argmax: tau, gap: 0.0, points: 1, step: 0 });
        }
        FreeStateSet::SeparablePpt2x2 => {
            return Err(CoreError::Unsupported("grid oracle needs a polytope or singleton free set".into()))
        }
        _ => free.extreme_points().unwrap(),
    };
    let n = pts.len();
    let d = pts[0].nrows();
    if n == 1 {
        return Ok(GridResult { value: objective(&pts[0]), argmax: pts[0].clone(), gap: 0.0, points: 1, step: 0 });
    }
    let mut m = (1.0 / resolution.max(1e-9)).ceil() as usize;
    while m > 1 && binom(m + n - 1, n - 1) > BUDGET {
        m -= 1;
    }
    let mut best = f64::NEG_INFINITY;
    let mut arg = pts[0].clone();
    let mut count = 0;
    let mut comp = vec![0usize; n];
    comp[n - 1] = m;
    loop {
        let mut s = CMat::zeros(d, d);
        for (k, &c) in comp.iter().enumerate() {
            if c > 0 {
                s += &pts[k] * cr(c as f64 / m as f64);
            }
        }
        let v = objective(&s);
        count += 1;
        if v > best {
            best = v;
            arg = s;
        }
        // next composition of m into n parts
        if !next_composition(&mut comp) {
            break;
        }
    }
    // each weight rounds within 1/m; the last absorbs the rest
    let gap = lipschitz * 2.0 * (n - 1) as f64 / m as f64;
    Ok(GridResult { value: best, argmax: arg, gap, points: count, step: m })
}

/// Lexicographic successor among compositions with fixed sum.
fn next_composition(c: &mut [usize]) -> bool {
    let n = c.len();
    if c[n - 1] > 0 {
        c[n - 2] += 1;
        c[n - 1] -= 1;
        return true;
    }
    // carry: zero the rightmost positive prefix entry, bump its left neighbour
    let mut i = n - 2;
    loop {
        if c[i] > 0 {
            if i == 0 {
                return false;
            }
            let v = c[i];
            c[i] = 0;
            c[i - 1] += 1;
            c[n - 1] = v - 1;
            return true;
        }
        if i == 0 {
            return false;
        }
        i -= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_count() {
        let mut c = vec![0, 0, 4];
        let mut k = 1;
        while next_composition(&mut c) {
            assert_eq!(c.iter().sum::<usize>(), 4);
            k += 1;
        }
        assert_eq!(k, 15);
    }
}
