//! Optimal non-causal benchmark: the controller that sees the whole
//! perturbation `δ` in advance, and the quadratic form `δᵀOδ` that prices it.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::StackedDynamics;

#[derive(Debug, Clone)]
pub struct NonCausalOracle {
    n: usize,
    o: DMatrix<f64>,
    middle: Cholesky<f64, Dyn>,
    hessian: Cholesky<f64, Dyn>,
    gain: DMatrix<f64>,
}

/// Factorisation of the regret matrix of any achievable response:
/// `ΦᵀCΦ − O = (Φu − K)ᵀ LᵀL (Φu − K)` with `L` lower triangular.
#[derive(Debug, Clone)]
pub struct RegretFactor {
    /// Optimal non-causal gain `K`, so that `ũ* = K δ`.
    pub gain: DMatrix<f64>,
    /// Lower-triangular `L` with `LᵀL = ℛ + Fᵀ𝒬F`.
    pub l: DMatrix<f64>,
}

impl NonCausalOracle {
    pub fn build(stk: &StackedDynamics) -> Result<Self> {
        let middle_mat = &stk.q_inv + &stk.f * &stk.r_inv * stk.f.transpose();
        let middle = Cholesky::new(linalg::symmetrize(&middle_mat))
            .ok_or_else(|| Error::NotPositiveDefinite("Q^-1 + F R^-1 F^T".into()))?;
        let raw = stk.g.transpose() * middle.solve(&stk.g);
        let skew = linalg::asymmetry(&raw);
        if skew > 1e-9 * (1.0 + raw.amax()) {
            log::warn!("benchmark matrix asymmetry {skew:.3e} before symmetrisation");
        }
        let o = linalg::symmetrize(&raw);

        let h = &stk.r_cost + stk.f.transpose() * &stk.q * &stk.f;
        let hessian =
            Cholesky::new(linalg::symmetrize(&h)).ok_or_else(|| Error::NotPositiveDefinite("R + F^T Q F".into()))?;
        let gain = -hessian.solve(&(stk.f.transpose() * &stk.q * &stk.g));
        Ok(Self { n: stk.n, o, middle, hessian, gain })
    }

    pub fn o(&self) -> &DMatrix<f64> {
        &self.o
    }
    pub fn o1(&self) -> DMatrix<f64> {
        self.o.view((0, 0), (self.n, self.n)).into_owned()
    }
    pub fn o2(&self) -> DMatrix<f64> {
        let rt = self.o.nrows() - self.n;
        self.o.view((self.n, 0), (rt, self.n)).into_owned()
    }
    pub fn o3(&self) -> DMatrix<f64> {
        let rt = self.o.nrows() - self.n;
        self.o.view((self.n, self.n), (rt, rt)).into_owned()
    }

    /// Cholesky factor of `𝒬⁻¹ + Fℛ⁻¹Fᵀ`.
    pub fn middle_factor(&self) -> &Cholesky<f64, Dyn> {
        &self.middle
    }

    /// Gain `K` of the optimal non-causal input `ũ* = K δ`.
    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// `δᵀOδ`.
    pub fn benchmark_cost(&self, delta: &DVector<f64>) -> f64 {
        delta.dot(&(&self.o * delta))
    }

    pub fn regret_factor(&self) -> Result<RegretFactor> {
        let h = self.hessian.l() * self.hessian.l().transpose();
        let l = linalg::reverse_cholesky(&h, "R + F^T Q F")?;
        Ok(RegretFactor { gain: self.gain.clone(), l })
    }
}

/// `ũ* = −(ℛ + Fᵀ𝒬F)⁻¹Fᵀ𝒬Gδ`.
pub fn optimal_sequence(oracle: &NonCausalOracle, stk: &StackedDynamics, delta: &DVector<f64>) -> Result<DVector<f64>> {
    if delta.len() != stk.delta_len() {
        return Err(Error::Dimension(format!("perturbation has length {}, expected {}", delta.len(), stk.delta_len())));
    }
    Ok(-oracle.hessian.solve(&(stk.f.transpose() * (&stk.q * (&stk.g * delta)))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_stacked, CostWeights, LtvSystem};
    use approx::assert_relative_eq;

    fn unit_scalar_system() -> StackedDynamics {
        let one = DMatrix::from_element(1, 1, 1.0);
        let sys = LtvSystem::time_invariant(one.clone(), one.clone(), one.clone(), 1).unwrap();
        let costs = CostWeights::constant(one.clone(), one, 1).unwrap();
        build_stacked(&sys, &costs).unwrap()
    }

    #[test]
    fn scalar_one_step_benchmark() {
        let stk = unit_scalar_system();
        let oracle = NonCausalOracle::build(&stk).unwrap();
        assert_relative_eq!(oracle.o().clone(), DMatrix::from_row_slice(2, 2, &[1.5, 0.5, 0.5, 0.5]), epsilon = 1e-12);
        let d = DVector::from_vec(vec![1.0, 1.0]);
        assert_relative_eq!(oracle.benchmark_cost(&d), 3.0, epsilon = 1e-12);
        let u = optimal_sequence(&oracle, &stk, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_relative_eq!(u, DVector::from_vec(vec![-0.5, 0.0]), epsilon = 1e-12);
        assert_eq!(oracle.benchmark_cost(&DVector::zeros(2)), 0.0);
        assert_eq!(optimal_sequence(&oracle, &stk, &DVector::zeros(2)).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn empty_horizon_prices_initial_state() {
        let sys = LtvSystem::new(1, 1, 1, vec![], vec![], vec![]).unwrap();
        let q = DMatrix::from_element(1, 1, 2.5);
        let costs = CostWeights::constant(q, DMatrix::from_element(1, 1, 1.0), 0).unwrap();
        let stk = build_stacked(&sys, &costs).unwrap();
        let oracle = NonCausalOracle::build(&stk).unwrap();
        assert_relative_eq!(oracle.o()[(0, 0)], 2.5, epsilon = 1e-12);
    }

    #[test]
    fn regret_factor_reproduces_hessian() {
        let stk = unit_scalar_system();
        let oracle = NonCausalOracle::build(&stk).unwrap();
        let rf = oracle.regret_factor().unwrap();
        let h = &stk.r_cost + stk.f.transpose() * &stk.q * &stk.f;
        assert_relative_eq!(rf.l.transpose() * &rf.l, h, epsilon = 1e-12);
        assert_eq!(rf.l[(0, 1)], 0.0);
    }

    #[test]
    fn partition_reassembles() {
        let stk = unit_scalar_system();
        let oracle = NonCausalOracle::build(&stk).unwrap();
        assert_eq!(oracle.o1()[(0, 0)], oracle.o()[(0, 0)]);
        assert_eq!(oracle.o2()[(0, 0)], oracle.o()[(1, 0)]);
        assert_eq!(oracle.o3()[(0, 0)], oracle.o()[(1, 1)]);
    }
}
