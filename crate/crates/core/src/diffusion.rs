//! Linear infection-intensity dynamics on a mixing graph.
//!
//! The per-node backdoor intensity evolves as
//! `s(t+1) = (I - Λ) W s(t) + u`, where `Λ` holds per-node decay rates
//! (zero at malicious nodes) and `u` the injection at malicious sources.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, SpectralEstimate};
use crate::topology::MixingMatrix;
use crate::{Error, Result};

pub const DEFAULT_DECAY: f64 = 0.3;
pub const DEFAULT_INJECTION: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct DiffusionSystem {
    w: DMatrix<f64>,
    decay: Vec<f64>,
    injection: Vec<f64>,
    a: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfectionState {
    pub s: DVector<f64>,
    pub t: usize,
}

impl InfectionState {
    pub fn zero(n: usize) -> Self {
        Self { s: DVector::zeros(n), t: 0 }
    }
}

impl DiffusionSystem {
    pub fn new(w: &MixingMatrix, decay: Vec<f64>, injection: Vec<f64>) -> Result<Self> {
        let n = w.matrix().nrows();
        for len in [decay.len(), injection.len(), w.matrix().ncols()] {
            if len != n {
                return Err(Error::Dimension { expected: n, actual: len });
            }
        }
        if let Some(l) = decay.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::Parameter(format!("decay {l} outside [0, 1]")));
        }
        if let Some(u) = injection.iter().find(|u| !(**u >= 0.0)) {
            return Err(Error::Parameter(format!("negative injection {u}")));
        }
        if w.matrix().iter().any(|&v| v < 0.0) {
            return Err(Error::Parameter("mixing matrix has negative entries".into()));
        }
        let mut a = w.matrix().clone();
        for (i, l) in decay.iter().enumerate() {
            a.row_mut(i).scale_mut(1.0 - l);
        }
        Ok(Self { w: w.matrix().clone(), decay, injection, a })
    }

    /// Benign nodes decay at `lambda`; each malicious node has zero decay
    /// and injects `injection`.
    pub fn from_roles(w: &MixingMatrix, malicious: &[usize], lambda: f64, injection: f64) -> Result<Self> {
        let n = w.matrix().nrows();
        let mut decay = vec![lambda; n];
        let mut u = vec![0.0; n];
        for &m in malicious {
            if m >= n {
                return Err(Error::Parameter(format!("malicious node {m} out of range")));
            }
            decay[m] = 0.0;
            u[m] = injection;
        }
        Self::new(w, decay, u)
    }

    pub fn n(&self) -> usize {
        self.decay.len()
    }

    /// Effective transition matrix `(I - Λ) W`.
    pub fn transition(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    pub fn injection(&self) -> &[f64] {
        &self.injection
    }

    pub fn sources(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.injection[i] > 0.0).collect()
    }

    pub fn step(&self, state: &InfectionState) -> Result<InfectionState> {
        if state.s.len() != self.n() {
            return Err(Error::Dimension { expected: self.n(), actual: state.s.len() });
        }
        let u = DVector::from_column_slice(&self.injection);
        Ok(InfectionState { s: &self.a * &state.s + u, t: state.t + 1 })
    }

    pub fn spectral_radius(&self) -> Result<SpectralEstimate> {
        linalg::spectral_radius(&self.a)
    }

    /// Whether the directed support of `W` is strongly connected.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.n();
        if n == 0 {
            return true;
        }
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0]);
            seen[0] = true;
            while let Some(u) = queue.pop_front() {
                for v in 0..n {
                    let weight = if forward { self.w[(u, v)] } else { self.w[(v, u)] };
                    if weight > 0.0 && !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    fn check_stable(&self) -> Result<()> {
        if !self.is_strongly_connected() {
            return Err(Error::NotConnected);
        }
        let rho = self.spectral_radius()?.value;
        if rho >= 1.0 {
            return Err(Error::Unstable(rho));
        }
        Ok(())
    }

    /// Stationary intensity `s* = (I - A)^{-1} u`.
    pub fn stationary(&self) -> Result<DVector<f64>> {
        self.check_stable()?;
        let n = self.n();
        let m = DMatrix::<f64>::identity(n, n) - &self.a;
        let s = linalg::solve(&m, &DVector::from_column_slice(&self.injection))?;
        // Round-off can leave tiny negatives where the exact answer is zero.
        Ok(s.map(|v| v.max(0.0)))
    }

    /// Closed-form transient `s(t) = (I - A^t) s*` from a clean start.
    pub fn transient(&self, t: usize) -> Result<DVector<f64>> {
        let s_star = self.stationary()?;
        let a_t = self.a.pow(t as u32);
        Ok(&s_star - a_t * &s_star)
    }

    /// `t` applications of [`step`](Self::step) from zero.
    pub fn iterate(&self, t: usize) -> DVector<f64> {
        let mut state = InfectionState::zero(self.n());
        for _ in 0..t {
            state = self.step(&state).expect("dimensions fixed at construction");
        }
        state.s
    }

    /// Partial Neumann sum `sum_{k=0}^{terms-1} A^k u`.
    pub fn neumann_partial(&self, terms: usize) -> DVector<f64> {
        let mut term = DVector::from_column_slice(&self.injection);
        let mut acc = DVector::zeros(self.n());
        for _ in 0..terms {
            acc += &term;
            term = &self.a * term;
        }
        acc
    }

    /// Hop distances in the support graph of `W` from `source`.
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        let n = self.n();
        let mut dist = vec![None; n];
        let mut queue = VecDeque::from([source]);
        dist[source] = Some(0);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for v in 0..n {
                if v != u && self.w[(u, v)] > 0.0 && dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Per-node diffusion bound at round `t`, summed over every malicious
    /// source. Malicious nodes get `None`.
    pub fn bound_profile(&self, t: usize) -> Result<Vec<Option<f64>>> {
        let sources = self.sources();
        let benign: Vec<usize> = (0..self.n()).filter(|&i| self.injection[i] == 0.0).collect();
        let lambda = match benign.first() {
            Some(&i) => self.decay[i],
            None => return Ok(vec![None; self.n()]),
        };
        if benign.iter().any(|&i| self.decay[i] != lambda) {
            return Err(Error::Parameter("bound profile needs a uniform benign decay".into()));
        }
        let mut bound: Vec<Option<f64>> =
            (0..self.n()).map(|i| (self.injection[i] == 0.0).then_some(0.0)).collect();
        if sources.is_empty() {
            return Ok(bound);
        }
        for &s in &sources {
            let dist = self.hop_distances(s);
            for &i in &benign {
                if let Some(d) = dist[i] {
                    *bound[i].as_mut().unwrap() += diffusion_bound(self.injection[s], lambda, d, t)?;
                }
            }
        }
        Ok(bound)
    }
}

/// Single-source spatiotemporal bound
/// `u_s (1 - λ)^d sum_{k=0}^{t-d} (1 - λ)^k`, zero when `t < d`.
pub fn diffusion_bound(injection: f64, lambda: f64, distance: usize, t: usize) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Parameter(format!("decay {lambda} outside (0, 1)")));
    }
    if t < distance {
        return Ok(0.0);
    }
    let keep = 1.0 - lambda;
    let terms = (t - distance + 1) as i32;
    let partial = (1.0 - keep.powi(terms)) / lambda;
    Ok(injection * keep.powi(distance as i32) * partial)
}

/// Limit of [`diffusion_bound`] as `t -> inf`.
pub fn diffusion_bound_limit(injection: f64, lambda: f64, distance: usize) -> f64 {
    injection * (1.0 - lambda).powi(distance as i32) / lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_mixing_matrix, Graph, GraphKind};

    fn k2_system() -> DiffusionSystem {
        let g = Graph::from_edges(2, &[(0, 1)], GraphKind::Custom).unwrap();
        DiffusionSystem::new(&build_mixing_matrix(&g), vec![0.5, 0.0], vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn first_steps_by_hand() {
        let sys = k2_system();
        let s1 = sys.step(&InfectionState::zero(2)).unwrap();
        assert_eq!(s1.s.as_slice(), &[0.0, 1.0]);
        assert_eq!(s1.t, 1);
        let s2 = sys.step(&s1).unwrap();
        assert!((s2.s[0] - 0.25).abs() < 1e-15);
        assert!((s2.s[1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn step_rejects_bad_dimension() {
        let sys = k2_system();
        assert!(matches!(sys.step(&InfectionState::zero(3)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_injection_stationary_is_zero() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)], GraphKind::Custom).unwrap();
        let sys = DiffusionSystem::new(&build_mixing_matrix(&g), vec![0.3; 3], vec![0.0; 3]).unwrap();
        assert!(sys.stationary().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_geometric_series() {
        let w = MixingMatrix(DMatrix::from_element(1, 1, 1.0));
        let sys = DiffusionSystem::new(&w, vec![0.5], vec![1.0]).unwrap();
        assert!((sys.stationary().unwrap()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn k2_stationary_matches_iteration() {
        let sys = k2_system();
        let s_star = sys.stationary().unwrap();
        let iter = sys.iterate(200);
        assert!((s_star - iter).amax() < 1e-8);
    }

    #[test]
    fn transient_endpoints() {
        let sys = k2_system();
        assert!(sys.transient(0).unwrap().amax() == 0.0);
        let far = sys.transient(400).unwrap();
        assert!((far - sys.stationary().unwrap()).amax() < 1e-8);
        let three = sys.transient(3).unwrap();
        assert!((three - sys.neumann_partial(3)).amax() < 1e-10);
    }

    #[test]
    fn unstable_without_decay() {
        let g = Graph::from_edges(2, &[(0, 1)], GraphKind::Custom).unwrap();
        let sys = DiffusionSystem::new(&build_mixing_matrix(&g), vec![0.0, 0.0], vec![0.0, 1.0]).unwrap();
        assert!(matches!(sys.stationary(), Err(Error::Unstable(_))));
    }

    #[test]
    fn disconnected_refused() {
        let g = Graph::from_edges(3, &[(0, 1)], GraphKind::Custom).unwrap();
        let sys = DiffusionSystem::new(&build_mixing_matrix(&g), vec![0.3; 3], vec![0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(sys.stationary(), Err(Error::NotConnected)));
    }

    #[test]
    fn bound_closed_form() {
        assert_eq!(diffusion_bound(1.0, 0.5, 3, 2).unwrap(), 0.0);
        assert!((diffusion_bound(1.0, 0.5, 0, 1).unwrap() - 1.5).abs() < 1e-15);
        let limit = diffusion_bound_limit(2.0, 0.3, 2);
        assert!((diffusion_bound(2.0, 0.3, 2, 10_000).unwrap() - limit).abs() < 1e-12);
        assert!(diffusion_bound(1.0, 0.0, 1, 1).is_err());
        assert!(diffusion_bound(1.0, 1.0, 1, 1).is_err());
    }

    #[test]
    fn bound_profile_cases() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)], GraphKind::Custom).unwrap();
        let w = build_mixing_matrix(&g);
        let clean = DiffusionSystem::from_roles(&w, &[], 0.3, 1.0).unwrap();
        assert!(clean.bound_profile(5).unwrap().iter().all(|b| *b == Some(0.0)));

        let sys = DiffusionSystem::from_roles(&w, &[0], 0.3, 1.0).unwrap();
        let b = sys.bound_profile(5).unwrap();
        assert_eq!(b[0], None);
        assert!(b[1].unwrap() > b[2].unwrap());
        let s = sys.iterate(5);
        assert!(s[1] <= b[1].unwrap() && s[2] <= b[2].unwrap());
    }

    #[test]
    fn construction_validates() {
        let g = Graph::from_edges(2, &[(0, 1)], GraphKind::Custom).unwrap();
        let w = build_mixing_matrix(&g);
        assert!(DiffusionSystem::new(&w, vec![1.5, 0.0], vec![0.0, 1.0]).is_err());
        assert!(DiffusionSystem::new(&w, vec![0.5, 0.0], vec![0.0, -1.0]).is_err());
        assert!(DiffusionSystem::new(&w, vec![0.5], vec![0.0, 1.0]).is_err());
    }
}
