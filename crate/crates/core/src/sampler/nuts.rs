//! Multinomial NUTS transition with the generalised no-U-turn criterion,
//! including the extra checks across subtree boundaries.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::{log_add_exp, Scalar};
use crate::target::LogDensity;

/// Energy error (nats) beyond which a trajectory is declared divergent.
pub const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone)]
pub struct PhasePoint<T> {
    pub q: Vec<T>,
    pub p: Vec<T>,
    pub grad: Vec<T>,
    pub logp: T,
}

impl<T: Scalar> PhasePoint<T> {
    pub fn kinetic(&self, inv_mass: &[T]) -> T {
        self.p.iter().zip(inv_mass).map(|(&p, &m)| p * p * m).sum::<T>() * T::lit(0.5)
    }

    pub fn hamiltonian(&self, inv_mass: &[T]) -> T {
        let h = -self.logp + self.kinetic(inv_mass);
        if h.is_nan() {
            T::infinity()
        } else {
            h
        }
    }
}

/// One velocity-Verlet step of the Hamiltonian `−ln p(q) + ½ pᵀ M⁻¹ p`.
/// `state.grad` must hold the gradient at `state.q` on entry and is updated.
/// Returns `false` when the new log density or gradient is non-finite.
pub fn leapfrog_step<T, F>(state: &mut PhasePoint<T>, step: T, inv_mass: &[T], mut grad_fn: F) -> bool
where
    T: Scalar,
    F: FnMut(&[T], &mut [T]) -> T,
{
    let half = step * T::lit(0.5);
    for (p, &g) in state.p.iter_mut().zip(&state.grad) {
        *p += half * g;
    }
    for ((q, &p), &m) in state.q.iter_mut().zip(&state.p).zip(inv_mass) {
        *q += step * m * p;
    }
    state.logp = grad_fn(&state.q, &mut state.grad);
    for (p, &g) in state.p.iter_mut().zip(&state.grad) {
        *p += half * g;
    }
    state.logp.is_finite() && state.grad.iter().all(|g| g.is_finite())
}

/// Unit-mass leapfrog on `(position, momentum)`; the gradient of the log
/// density is evaluated by `grad_fn`. The flag is `false` on a non-finite gradient.
pub fn leapfrog<T, F>(position: &[T], momentum: &[T], step: T, mut grad_fn: F) -> (Vec<T>, Vec<T>, bool)
where
    T: Scalar,
    F: FnMut(&[T], &mut [T]) -> T,
{
    let mut grad = vec![T::zero(); position.len()];
    let logp = grad_fn(position, &mut grad);
    let mut st = PhasePoint { q: position.to_vec(), p: momentum.to_vec(), grad, logp };
    let unit = vec![T::one(); position.len()];
    let ok = leapfrog_step(&mut st, step, &unit, grad_fn);
    (st.q, st.p, ok)
}

#[derive(Debug, Clone, Copy)]
pub struct TransitionInfo {
    pub accept_stat: f64,
    pub depth: u32,
    pub n_leapfrog: u32,
    pub divergent: bool,
    pub energy: f64,
}

pub(crate) struct Nuts<'a, D: LogDensity> {
    pub target: &'a D,
    pub inv_mass: Vec<f64>,
    pub step: f64,
    pub max_depth: u32,
}

struct TreeAcc {
    n_leapfrog: u32,
    sum_metro: f64,
    divergent: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn criterion(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

impl<'a, D: LogDensity> Nuts<'a, D> {
    fn sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_mass).map(|(p, m)| p * m).collect()
    }

    fn evolve(&self, z: &mut PhasePoint<f64>, sign: f64) -> bool {
        let target = self.target;
        leapfrog_step(z, sign * self.step, &self.inv_mass, |q, g| target.log_density_gradient(q, g))
    }

    pub fn sample_momentum<R: Rng + ?Sized>(&self, z: &mut PhasePoint<f64>, rng: &mut R) {
        for (p, &m) in z.p.iter_mut().zip(&self.inv_mass) {
            *p = rng.sample::<f64, _>(StandardNormal) / m.sqrt();
        }
    }

    /// Returns whether a single step from `z` with fresh momentum has
    /// acceptance above 0.8; used by the step-size heuristic.
    fn heuristic_delta<R: Rng + ?Sized>(&self, z0: &PhasePoint<f64>, rng: &mut R) -> f64 {
        let mut z = z0.clone();
        self.sample_momentum(&mut z, rng);
        let h0 = z.hamiltonian(&self.inv_mass);
        self.evolve(&mut z, 1.0);
        h0 - z.hamiltonian(&self.inv_mass)
    }

    /// Doubles or halves the step until a single leapfrog step crosses 80% acceptance.
    pub fn init_step<R: Rng + ?Sized>(&mut self, z0: &PhasePoint<f64>, rng: &mut R) {
        if self.step == 0.0 || self.step > 1e7 || !self.step.is_finite() {
            return;
        }
        let target = 0.8f64.ln();
        let direction = if self.heuristic_delta(z0, rng) > target { 1 } else { -1 };
        for _ in 0..100 {
            let delta = self.heuristic_delta(z0, rng);
            if (direction == 1 && !(delta > target)) || (direction == -1 && !(delta < target)) {
                break;
            }
            self.step *= if direction == 1 { 2.0 } else { 0.5 };
            if self.step > 1e7 || self.step < 1e-300 {
                break;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree<R: Rng + ?Sized>(
        &self,
        z: &mut PhasePoint<f64>,
        depth: u32,
        z_propose: &mut PhasePoint<f64>,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut [f64],
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        h0: f64,
        sign: f64,
        log_sum_weight: &mut f64,
        acc: &mut TreeAcc,
        rng: &mut R,
    ) -> bool {
        if depth == 0 {
            self.evolve(z, sign);
            acc.n_leapfrog += 1;
            let h = z.hamiltonian(&self.inv_mass);
            if h - h0 > MAX_DELTA_H || !h.is_finite() {
                acc.divergent = true;
            }
            *log_sum_weight = log_add_exp(*log_sum_weight, h0 - h);
            acc.sum_metro += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            z_propose.clone_from(z);
            *p_sharp_beg = self.sharp(&z.p);
            p_sharp_end.clone_from(p_sharp_beg);
            for (r, p) in rho.iter_mut().zip(&z.p) {
                *r += p;
            }
            p_beg.clone_from(&z.p);
            p_end.clone_from(&z.p);
            return !acc.divergent;
        }
        let dim = z.q.len();
        let mut lsw_init = f64::NEG_INFINITY;
        let mut p_init_end = vec![0.0; dim];
        let mut p_sharp_init_end = vec![0.0; dim];
        let mut rho_init = vec![0.0; dim];
        if !self.build_tree(
            z,
            depth - 1,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            h0,
            sign,
            &mut lsw_init,
            acc,
            rng,
        ) {
            return false;
        }
        let mut z_propose_final = z.clone();
        let mut lsw_final = f64::NEG_INFINITY;
        let mut p_final_beg = vec![0.0; dim];
        let mut p_sharp_final_beg = vec![0.0; dim];
        let mut rho_final = vec![0.0; dim];
        if !self.build_tree(
            z,
            depth - 1,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            h0,
            sign,
            &mut lsw_final,
            acc,
            rng,
        ) {
            return false;
        }
        let lsw_subtree = log_add_exp(lsw_init, lsw_final);
        *log_sum_weight = log_add_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree || rng.random::<f64>() < (lsw_final - lsw_subtree).exp() {
            *z_propose = z_propose_final;
        }
        let rho_subtree: Vec<f64> = rho_init.iter().zip(&rho_final).map(|(a, b)| a + b).collect();
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = criterion(p_sharp_beg, p_sharp_end, &rho_subtree);
        let ext: Vec<f64> = rho_init.iter().zip(&p_final_beg).map(|(a, b)| a + b).collect();
        persist &= criterion(p_sharp_beg, &p_sharp_final_beg, &ext);
        let ext: Vec<f64> = rho_final.iter().zip(&p_init_end).map(|(a, b)| a + b).collect();
        persist &= criterion(&p_sharp_init_end, p_sharp_end, &ext);
        persist
    }

    /// One NUTS transition from `current`, which is replaced by the selected state.
    pub fn transition<R: Rng + ?Sized>(&self, current: &mut PhasePoint<f64>, rng: &mut R) -> TransitionInfo {
        let mut z = current.clone();
        self.sample_momentum(&mut z, rng);
        let h0 = z.hamiltonian(&self.inv_mass);
        let mut z_fwd = z.clone();
        let mut z_bck = z.clone();
        let mut z_sample = z.clone();
        let mut z_propose = z.clone();

        let p0 = z.p.clone();
        let ps0 = self.sharp(&z.p);
        let (mut p_fwd_fwd, mut p_sharp_fwd_fwd) = (p0.clone(), ps0.clone());
        let (mut p_fwd_bck, mut p_sharp_fwd_bck) = (p0.clone(), ps0.clone());
        let (mut p_bck_fwd, mut p_sharp_bck_fwd) = (p0.clone(), ps0.clone());
        let (mut p_bck_bck, mut p_sharp_bck_bck) = (p0.clone(), ps0);
        let mut rho = p0;
        let mut log_sum_weight = 0.0;
        let mut acc = TreeAcc { n_leapfrog: 0, sum_metro: 0.0, divergent: false };
        let mut depth = 0;
        let dim = z.q.len();

        while depth < self.max_depth {
            let mut rho_fwd = vec![0.0; dim];
            let mut rho_bck = vec![0.0; dim];
            let mut lsw_subtree = f64::NEG_INFINITY;
            let valid = if rng.random::<f64>() > 0.5 {
                z.clone_from(&z_fwd);
                rho_bck.clone_from(&rho);
                p_bck_fwd.clone_from(&p_fwd_bck);
                p_sharp_bck_fwd.clone_from(&p_sharp_fwd_bck);
                let ok = self.build_tree(
                    &mut z,
                    depth,
                    &mut z_propose,
                    &mut p_sharp_fwd_bck,
                    &mut p_sharp_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    h0,
                    1.0,
                    &mut lsw_subtree,
                    &mut acc,
                    rng,
                );
                z_fwd.clone_from(&z);
                ok
            } else {
                z.clone_from(&z_bck);
                rho_fwd.clone_from(&rho);
                p_fwd_bck.clone_from(&p_bck_fwd);
                p_sharp_fwd_bck.clone_from(&p_sharp_bck_fwd);
                let ok = self.build_tree(
                    &mut z,
                    depth,
                    &mut z_propose,
                    &mut p_sharp_bck_fwd,
                    &mut p_sharp_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    h0,
                    -1.0,
                    &mut lsw_subtree,
                    &mut acc,
                    rng,
                );
                z_bck.clone_from(&z);
                ok
            };
            if !valid {
                break;
            }
            depth += 1;
            if lsw_subtree > log_sum_weight || rng.random::<f64>() < (lsw_subtree - log_sum_weight).exp() {
                z_sample.clone_from(&z_propose);
            }
            log_sum_weight = log_add_exp(log_sum_weight, lsw_subtree);
            for ((r, b), f) in rho.iter_mut().zip(&rho_bck).zip(&rho_fwd) {
                *r = b + f;
            }
            let mut persist = criterion(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
            let ext: Vec<f64> = rho_bck.iter().zip(&p_fwd_bck).map(|(a, b)| a + b).collect();
            persist &= criterion(&p_sharp_bck_bck, &p_sharp_fwd_bck, &ext);
            let ext: Vec<f64> = rho_fwd.iter().zip(&p_bck_fwd).map(|(a, b)| a + b).collect();
            persist &= criterion(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &ext);
            if !persist {
                break;
            }
        }
        let energy = z_sample.hamiltonian(&self.inv_mass);
        *current = z_sample;
        TransitionInfo {
            accept_stat: if acc.n_leapfrog > 0 { acc.sum_metro / acc.n_leapfrog as f64 } else { 0.0 },
            depth,
            n_leapfrog: acc.n_leapfrog,
            divergent: acc.divergent,
            energy,
        }
    }
}
