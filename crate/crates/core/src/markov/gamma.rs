use alloc::vec::Vec;

#[allow(unused_imports)] // used without std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::dynamics::SaturatedMotion;
use super::{Discretization, MarkovError};

/// Base input-mixing matrix Ψ, column-major `n × n`: entry `(i, j)` is the
/// weight of moving from input cell `j` to `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputMixing {
    n: usize,
    values: Vec<f64>,
}

impl InputMixing {
    /// Tridiagonal mixing with `stay` on the diagonal and `(1 - stay) / 2` to
    /// each neighbour. Boundary cells keep the missing neighbour's share, so
    /// the matrix is doubly stochastic and its stationary distribution is
    /// uniform.
    pub fn tridiagonal(n: usize, stay: f64) -> Self {
        let side = if n > 1 { (1.0 - stay) / 2.0 } else { 0.0 };
        let mut values = alloc::vec![0.0; n * n];
        for j in 0..n {
            let mut own = 1.0;
            for i in [j.wrapping_sub(1), j + 1] {
                if i < n {
                    values[j * n + i] = side;
                    own -= side;
                }
            }
            values[j * n + j] = own;
        }
        Self { n, values }
    }

    /// Column-normalizes an arbitrary non-negative matrix given column-major.
    pub fn from_column_major(n: usize, mut values: Vec<f64>) -> Result<Self, MarkovError> {
        if values.len() != n * n || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(MarkovError::MalformedMatrix);
        }
        for col in values.chunks_mut(n) {
            let sum: f64 = col.iter().sum();
            if sum <= 0.0 {
                return Err(MarkovError::MalformedMatrix);
            }
            col.iter_mut().for_each(|v| *v /= sum);
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n + i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Blocks {
    /// One block for every (s, v) state.
    Shared(Vec<f64>),
    PerState(Vec<f64>),
}

/// Input transition Γ: a column-stochastic `n_u × n_u` block per (s, v)
/// state, applied after the state transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputTransition {
    n_u: usize,
    blocks: Blocks,
}

fn gamma_block(psi: &InputMixing, lambda: &[f64], out: &mut [f64]) {
    let n = psi.n;
    for j in 0..n {
        let col = &mut out[j * n..(j + 1) * n];
        let mut sum = 0.0;
        for i in 0..n {
            col[i] = psi.get(i, j) * lambda[i];
            sum += col[i];
        }
        if sum > 0.0 {
            col.iter_mut().for_each(|v| *v /= sum);
        } else {
            col.fill(0.0);
            col[0] = 1.0;
        }
    }
}

fn check_lambda(lambda: &[f64], len: usize) -> Result<(), MarkovError> {
    if lambda.len() != len {
        return Err(MarkovError::DimensionMismatch {
            expected: len,
            got: lambda.len(),
        });
    }
    if lambda.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(MarkovError::InvalidLambda);
    }
    Ok(())
}

impl InputTransition {
    pub fn identity(n_u: usize) -> Self {
        let mut b = alloc::vec![0.0; n_u * n_u];
        (0..n_u).for_each(|i| b[i * n_u + i] = 1.0);
        Self {
            n_u,
            blocks: Blocks::Shared(b),
        }
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    /// Column-major block for state `sv`.
    pub fn block(&self, sv: usize) -> &[f64] {
        let m = self.n_u * self.n_u;
        match &self.blocks {
            Blocks::Shared(b) => b,
            Blocks::PerState(b) => &b[sv * m..(sv + 1) * m],
        }
    }

    pub fn is_state_dependent(&self) -> bool {
        matches!(self.blocks, Blocks::PerState(_))
    }

    /// Applies Γ in place to a joint distribution.
    pub fn apply(&self, q: &mut [f64]) -> Result<(), MarkovError> {
        let n = self.n_u;
        if !q.len().is_multiple_of(n) {
            return Err(MarkovError::DimensionMismatch {
                expected: n,
                got: q.len(),
            });
        }
        if let Blocks::PerState(b) = &self.blocks {
            if b.len() / (n * n) != q.len() / n {
                return Err(MarkovError::DimensionMismatch {
                    expected: b.len() / n,
                    got: q.len(),
                });
            }
        }
        let mut tmp = alloc::vec![0.0; n];
        for (sv, chunk) in q.chunks_mut(n).enumerate() {
            if chunk.iter().all(|&x| x == 0.0) {
                continue;
            }
            let g = self.block(sv);
            tmp.fill(0.0);
            for (j, &x) in chunk.iter().enumerate() {
                if x != 0.0 {
                    for i in 0..n {
                        tmp[i] += g[j * n + i] * x;
                    }
                }
            }
            chunk.copy_from_slice(&tmp);
        }
        Ok(())
    }
}

/// Γ from Ψ and a per-state priority vector `lambda` (length
/// `n_sv * n_u`, joint-cell order): `γ_ij ∝ ψ_ij λ_i`. Columns whose weights
/// all vanish fall back to a unit mass on the strongest-braking cell.
pub fn build_gamma_baseline(psi: &InputMixing, lambda: &[f64]) -> Result<InputTransition, MarkovError> {
    let n = psi.n;
    if n == 0 || !lambda.len().is_multiple_of(n) {
        return Err(MarkovError::DimensionMismatch {
            expected: n,
            got: lambda.len(),
        });
    }
    check_lambda(lambda, lambda.len())?;
    let n_sv = lambda.len() / n;
    let mut blocks = alloc::vec![0.0; n_sv * n * n];
    for sv in 0..n_sv {
        gamma_block(psi, &lambda[sv * n..(sv + 1) * n], &mut blocks[sv * n * n..(sv + 1) * n * n]);
    }
    Ok(InputTransition {
        n_u: n,
        blocks: Blocks::PerState(blocks),
    })
}

/// Γ from Ψ and a state-independent input distribution, used in place of λ
/// for every state.
pub fn build_gamma_hybrid(psi: &InputMixing, masses: &[f64]) -> Result<InputTransition, MarkovError> {
    check_lambda(masses, psi.n)?;
    let mut block = alloc::vec![0.0; psi.n * psi.n];
    gamma_block(psi, masses, &mut block);
    Ok(InputTransition {
        n_u: psi.n,
        blocks: Blocks::Shared(block),
    })
}

/// Comfort speed on a curve, `sqrt(a_lat / |κ|)`.
pub fn curve_speed(kappa: f64, a_lat_max: f64) -> f64 {
    if kappa.abs() < 1e-9 {
        f64::INFINITY
    } else {
        (a_lat_max / kappa.abs()).sqrt()
    }
}

/// Layout part of λ: an input cell is forbidden when even its gentlest
/// acceleration takes the cell-centre speed above `allowed[s_i]`. The
/// strongest-braking cell is never forbidden.
pub fn layout_lambda(disc: &Discretization, allowed: &[f64]) -> Result<Vec<f64>, MarkovError> {
    if allowed.len() != disc.s_cells {
        return Err(MarkovError::DimensionMismatch {
            expected: disc.s_cells,
            got: allowed.len(),
        });
    }
    let mut lambda = alloc::vec![1.0; disc.n_states()];
    for s_i in 0..disc.s_cells {
        for v_i in 0..disc.v_cells {
            let v = disc.v_center(v_i);
            for u_i in 1..disc.u_cells {
                let a = disc.accel_bounds(u_i).0;
                let (_, v1) = SaturatedMotion::new(0.0, v, a, disc.v_max()).state_at(disc.tau);
                if v1 > allowed[s_i] && v1 > v - 1e-12 {
                    lambda[disc.index(s_i, v_i, u_i)] = 0.0;
                }
            }
        }
    }
    Ok(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_is_doubly_stochastic() {
        let psi = InputMixing::tridiagonal(5, 0.8);
        for j in 0..5 {
            let col: f64 = (0..5).map(|i| psi.get(i, j)).sum();
            let row: f64 = (0..5).map(|i| psi.get(j, i)).sum();
            assert!((col - 1.0).abs() < 1e-12 && (row - 1.0).abs() < 1e-12);
        }
        assert_eq!(psi.get(0, 0), 0.9);
        assert_eq!(psi.get(2, 2), 0.8);
    }

    #[test]
    fn stationary_distribution_is_uniform() {
        let psi = InputMixing::tridiagonal(5, 0.8);
        let mut p = [1.0, 0.0, 0.0, 0.0, 0.0];
        for _ in 0..2000 {
            let mut q = [0.0; 5];
            for (j, &pj) in p.iter().enumerate() {
                for (i, qi) in q.iter_mut().enumerate() {
                    *qi += psi.get(i, j) * pj;
                }
            }
            p = q;
        }
        assert!(p.iter().all(|&x| (x - 0.2).abs() < 1e-9));
    }

    #[test]
    fn lambda_ones_gives_psi() {
        let psi = InputMixing::tridiagonal(5, 0.8);
        let g = build_gamma_baseline(&psi, &[1.0; 10]).unwrap();
        let b = g.block(1);
        for j in 0..5 {
            for i in 0..5 {
                assert!((b[j * 5 + i] - psi.get(i, j)).abs() < 1e-15);
            }
        }
        let h = build_gamma_hybrid(&psi, &[0.2; 5]).unwrap();
        assert!(h.block(0).iter().zip(g.block(0)).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn zero_lambda_falls_back_to_braking() {
        let psi = InputMixing::tridiagonal(5, 0.8);
        // only cell 4 allowed: columns 0..=2 have no support there
        let g = build_gamma_hybrid(&psi, &[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let b = g.block(0);
        assert_eq!(b[0], 1.0);
        assert_eq!(b[3 * 5 + 4], 1.0);
        let onehot = build_gamma_hybrid(&psi, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((0..5).all(|j| onehot.block(0)[j * 5] == 1.0));
        assert!(build_gamma_hybrid(&psi, &[1.5, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn layout_lambda_respects_limit() {
        let d = Discretization::default();
        let allowed = alloc::vec![10.0; d.s_cells];
        let l = layout_lambda(&d, &allowed).unwrap();
        assert!((0..d.u_cells).all(|u| l[d.index(0, 5, u)] == 1.0));
        // 9.5 m/s: the strongest acceleration overshoots only barely
        assert_eq!(l[d.index(0, 9, 4)], 1.0);
        // 10.5 m/s: inputs that still slow down remain allowed
        assert_eq!(l[d.index(0, 10, 2)], 1.0);
        assert_eq!(l[d.index(0, 10, 3)], 0.0);
        assert_eq!(l[d.index(0, 10, 4)], 0.0);
        assert_eq!(curve_speed(0.02, 2.0), 10.0);
    }
}
