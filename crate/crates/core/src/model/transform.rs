//! Unconstrained parameterisation and the log joint density with its gradient.
//!
//! Coordinates, in order: active fixed effects; for each random-effect block
//! `ln sd` (k), canonical partial correlations through `atanh` (k(k−1)/2, row-major
//! over the strictly lower triangle), standardised effects (groups × k); and
//! finally `ln σ_resid`.

use super::design::{Effect, Likelihood};
use super::density::{log_likelihood, log_prior};
use super::params::{Dataset, ParameterSet, RandomBlock};
use super::spec::ModelSpec;
use crate::distributions::{lkj_log_normalizer, PriorFamily};
use crate::error::{check_dim, Error, Result};
use crate::linalg::Lower;
use crate::scalar::Scalar;
use crate::target::LogDensity;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub sd: usize,
    pub cpc: usize,
    pub z: usize,
    pub k: usize,
    pub groups: usize,
}

impl BlockLayout {
    fn n_cpc(&self) -> usize {
        self.k * (self.k - 1) / 2
    }

    fn end(&self) -> usize {
        self.z + self.k * self.groups
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub effects: Vec<Effect>,
    /// Coordinate of each design effect's coefficient; `None` when zeroed.
    pub beta: Vec<Option<usize>>,
    pub subject: Option<BlockLayout>,
    pub item: Option<BlockLayout>,
    pub sigma: usize,
    pub dim: usize,
}

impl Layout {
    pub fn new(model: &ModelSpec) -> Layout {
        let d = &model.design;
        let k = d.effects.len();
        let mut next = 0;
        let beta = d
            .effects
            .iter()
            .map(|&e| {
                model.is_active(e).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        let mut block = |present: bool, groups: usize| {
            present.then(|| {
                let b = BlockLayout { sd: next, cpc: next + k, z: next + k + k * (k - 1) / 2, k, groups };
                next = b.end();
                b
            })
        };
        let subject = block(d.subject_effects, d.n_subjects);
        let item = block(d.item_effects, d.n_items);
        Layout { effects: d.effects.clone(), beta, subject, item, sigma: next, dim: next + 1 }
    }

    /// Human-readable coordinate names.
    pub fn names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.dim];
        for (e, idx) in self.effects.iter().zip(&self.beta) {
            if let Some(i) = idx {
                names[*i] = format!("beta[{e}]");
            }
        }
        for (tag, bl) in [("subject", self.subject), ("item", self.item)] {
            let Some(bl) = bl else { continue };
            for a in 0..bl.k {
                names[bl.sd + a] = format!("log_sd_{tag}[{}]", self.effects[a]);
            }
            let mut c = bl.cpc;
            for i in 1..bl.k {
                for j in 0..i {
                    names[c] = format!("atanh_cpc_{tag}[{i},{j}]");
                    c += 1;
                }
            }
            for g in 0..bl.groups {
                for a in 0..bl.k {
                    names[bl.z + g * bl.k + a] = format!("z_{tag}[{g},{}]", self.effects[a]);
                }
            }
        }
        names[self.sigma] = "log_sigma".into();
        names
    }
}

/// `ln(1 − tanh²x)` without cancellation.
#[inline]
fn log_sech2<T: Scalar>(x: T) -> T {
    let ax = x.abs();
    T::lit(2.0) * (T::LN_2() - ax - (-T::lit(2.0) * ax).exp().ln_1p())
}

/// Cholesky factor of a correlation matrix from canonical partial correlations.
pub fn cpc_to_chol<T: Scalar>(k: usize, cpc: &[T]) -> Lower<T> {
    let mut l = Lower::identity(k);
    let mut c = 0;
    for i in 1..k {
        let mut s = T::zero();
        for j in 0..i {
            let v = cpc[c] * (T::one() - s).max(T::zero()).sqrt();
            l.set(i, j, v);
            s += v * v;
            c += 1;
        }
        l.set(i, i, (T::one() - s).max(T::zero()).sqrt());
    }
    l
}

/// Inverse of [`cpc_to_chol`].
pub fn chol_to_cpc<T: Scalar>(l: &Lower<T>) -> Vec<T> {
    let k = l.dim();
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for i in 1..k {
        let mut s = T::zero();
        for j in 0..i {
            let v = l.get(i, j);
            out.push(v / (T::one() - s).sqrt());
            s += v * v;
        }
    }
    out
}

fn lkj_eta(model: &ModelSpec) -> f64 {
    match model.priors.corr_random {
        PriorFamily::Lkj { eta } => eta,
        _ => unreachable!("validated model has an LKJ correlation prior"),
    }
}

/// Maps unconstrained coordinates to parameters; also returns `ln |∂θ/∂x|`
/// (log transforms, tanh, and the vine Jacobian from partial correlations
/// to the correlation matrix).
pub fn from_unconstrained<T: Scalar>(x: &[T], layout: &Layout) -> Result<(ParameterSet<T>, T)> {
    check_dim(layout.dim, x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("non-finite unconstrained coordinate".into()));
    }
    let mut log_jac = T::zero();
    let beta = layout.beta.iter().map(|i| i.map_or(T::zero(), |i| x[i])).collect();
    let mut block = |bl: Option<BlockLayout>| {
        bl.map(|bl| {
            let sd = x[bl.sd..bl.sd + bl.k].iter().map(|v| v.exp()).collect();
            log_jac += x[bl.sd..bl.sd + bl.k].iter().copied().sum::<T>();
            let raw = &x[bl.cpc..bl.cpc + bl.n_cpc()];
            let cpc: Vec<T> = raw.iter().map(|v| v.tanh()).collect();
            let mut c = 0;
            for i in 1..bl.k {
                for j in 0..i {
                    let vine = T::lit((bl.k as f64 - 2.0 - j as f64) / 2.0);
                    log_jac += (T::one() + vine) * log_sech2(raw[c]);
                    c += 1;
                }
            }
            RandomBlock { sd, corr_chol: cpc_to_chol(bl.k, &cpc), z: x[bl.z..bl.end()].to_vec() }
        })
    };
    let subject = block(layout.subject);
    let item = block(layout.item);
    log_jac += x[layout.sigma];
    Ok((ParameterSet { beta, subject, item, sigma: x[layout.sigma].exp() }, log_jac))
}

pub fn to_unconstrained<T: Scalar>(params: &ParameterSet<T>, layout: &Layout) -> Result<Vec<T>> {
    let mut x = vec![T::zero(); layout.dim];
    check_dim(layout.beta.len(), params.beta.len())?;
    for (idx, &b) in layout.beta.iter().zip(&params.beta) {
        if let Some(i) = idx {
            x[*i] = b;
        }
    }
    for (bl, block) in [(layout.subject, &params.subject), (layout.item, &params.item)] {
        match (bl, block) {
            (None, None) => {}
            (Some(bl), Some(b)) => {
                check_dim(bl.k, b.sd.len())?;
                check_dim(bl.k * bl.groups, b.z.len())?;
                for (a, &s) in b.sd.iter().enumerate() {
                    x[bl.sd + a] = s.ln();
                }
                for (c, v) in chol_to_cpc(&b.corr_chol).into_iter().enumerate() {
                    x[bl.cpc + c] = v.atanh();
                }
                x[bl.z..bl.end()].copy_from_slice(&b.z);
            }
            _ => return Err(Error::Parameter("random-effect blocks do not match the layout".into())),
        }
    }
    x[layout.sigma] = params.sigma.ln();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("parameters outside the interior of the support".into()));
    }
    Ok(x)
}

/// Unnormalised posterior of one model given one dataset, on the unconstrained scale.
#[derive(Debug, Clone)]
pub struct Posterior {
    model: ModelSpec,
    data: Dataset,
    layout: Layout,
    /// `y` or `ln y`.
    response: Vec<f64>,
    /// `Σ ln y` for the lognormal likelihood, else 0.
    log_y_sum: f64,
    eta: f64,
}

struct BlockState<T> {
    sd: Vec<T>,
    cpc: Vec<T>,
    chol: Lower<T>,
    /// `L z_g` per group, row-major.
    v: Vec<T>,
    /// Effects `sd ∘ (L z_g)` per group, row-major.
    u: Vec<T>,
}

impl Posterior {
    pub fn new(model: &ModelSpec, data: &Dataset) -> Result<Self> {
        model.validate()?;
        let t = data.table();
        check_dim(model.design.n_rows(), t.n_rows())?;
        check_dim(t.n_rows(), data.y.len())?;
        let (response, log_y_sum) = match model.design.likelihood {
            Likelihood::Normal => (data.y.clone(), 0.0),
            Likelihood::Lognormal => {
                if let Some(bad) = data.y.iter().find(|&&y| !(y > 0.0)) {
                    return Err(Error::Data(format!("lognormal likelihood needs y > 0, got {bad}")));
                }
                let ly: Vec<f64> = data.y.iter().map(|y| y.ln()).collect();
                let s = ly.iter().sum();
                (ly, s)
            }
        };
        Ok(Posterior {
            layout: Layout::new(model),
            eta: lkj_eta(model),
            model: model.clone(),
            data: data.clone(),
            response,
            log_y_sum,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Log joint evaluated through the constrained-space densities:
    /// `log_prior + log_likelihood + log_jacobian`.
    pub fn log_joint_via_constrained<T: Scalar>(&self, x: &[T]) -> Result<T> {
        let (params, log_jac) = from_unconstrained(x, &self.layout)?;
        Ok(log_prior(&params, &self.model) + log_likelihood(&params, &self.data, &self.model)? + log_jac)
    }

    fn block_forward<T: Scalar>(&self, x: &[T], bl: &BlockLayout, lp: &mut T, grad: &mut [T]) -> BlockState<T> {
        let p = &self.model.priors;
        let k = bl.k;
        let eta = T::lit(self.eta);
        let sd: Vec<T> = x[bl.sd..bl.sd + k].iter().map(|v| v.exp()).collect();
        for a in 0..k {
            let s = sd[a];
            *lp += p.sd_random.log_density(s).unwrap_or(T::nan()) + x[bl.sd + a];
            grad[bl.sd + a] += p.sd_random.dlog_density(s) * s + T::one();
        }
        let raw = &x[bl.cpc..bl.cpc + bl.n_cpc()];
        let cpc: Vec<T> = raw.iter().map(|v| v.tanh()).collect();
        // LKJ density, vine Jacobian and tanh Jacobian collapse to
        // Σ (η + (k−2−j)/2) ln(1 − cᵢⱼ²) − ln Z_k(η).
        let mut c = 0;
        for i in 1..k {
            for j in 0..i {
                let w = eta + T::lit((k as f64 - 2.0 - j as f64) / 2.0);
                *lp += w * log_sech2(raw[c]);
                grad[bl.cpc + c] += -T::lit(2.0) * w * cpc[c];
                c += 1;
            }
        }
        *lp -= lkj_log_normalizer(eta, k);
        let chol = cpc_to_chol(k, &cpc);
        let z = &x[bl.z..bl.end()];
        let mut v = vec![T::zero(); z.len()];
        let mut u = vec![T::zero(); z.len()];
        for (g, zg) in z.chunks_exact(k).enumerate() {
            chol.mul_vec(zg, &mut v[g * k..(g + 1) * k]);
            for a in 0..k {
                u[g * k + a] = sd[a] * v[g * k + a];
            }
        }
        for (i, &zi) in z.iter().enumerate() {
            *lp += -T::lit(0.5) * zi * zi - T::half_ln_2pi();
            grad[bl.z + i] -= zi;
        }
        BlockState { sd, cpc, chol, v, u }
    }

    /// Back-propagates `∂ℓ/∂u` (row-major groups × k) into the block coordinates.
    fn block_backward<T: Scalar>(&self, x: &[T], bl: &BlockLayout, st: &BlockState<T>, du: &[T], grad: &mut [T]) {
        let k = bl.k;
        let z = &x[bl.z..bl.end()];
        let mut dsd = vec![T::zero(); k];
        let mut dl = vec![T::zero(); k * k];
        let mut dv = vec![T::zero(); k];
        let mut dz = vec![T::zero(); k];
        for g in 0..bl.groups {
            let dug = &du[g * k..(g + 1) * k];
            let vg = &st.v[g * k..(g + 1) * k];
            let zg = &z[g * k..(g + 1) * k];
            for a in 0..k {
                dsd[a] += dug[a] * vg[a];
                dv[a] = st.sd[a] * dug[a];
            }
            st.chol.tmul_vec(&dv, &mut dz);
            for a in 0..k {
                grad[bl.z + g * k + a] += dz[a];
                for j in 0..=a {
                    dl[a * k + j] += dv[a] * zg[j];
                }
            }
        }
        for a in 0..k {
            grad[bl.sd + a] += dsd[a] * st.sd[a];
        }
        // Reverse the row recursion Lᵢⱼ = cᵢⱼ √(1 − sⱼ), sⱼ₊₁ = sⱼ + Lᵢⱼ², Lᵢᵢ = √(1 − sᵢ).
        let row_start = |i: usize| i * (i - 1) / 2;
        let mut rest = vec![T::zero(); k];
        for i in 1..k {
            let mut s = T::zero();
            for j in 0..i {
                rest[j] = (T::one() - s).max(T::zero()).sqrt();
                let lij = st.chol.get(i, j);
                s += lij * lij;
            }
            let lii = st.chol.get(i, i);
            let mut ds = if lii > T::zero() { -dl[i * k + i] / (T::lit(2.0) * lii) } else { T::zero() };
            for j in (0..i).rev() {
                let lij = st.chol.get(i, j);
                let dlij = dl[i * k + j] + ds * T::lit(2.0) * lij;
                let cidx = row_start(i) + j;
                let c = st.cpc[cidx];
                let dc = dlij * rest[j];
                if rest[j] > T::zero() {
                    ds += -dlij * c / (T::lit(2.0) * rest[j]);
                }
                grad[bl.cpc + cidx] += dc * (T::one() - c * c);
            }
        }
    }

    /// Log joint density on the unconstrained scale; fills `grad` with its gradient.
    pub fn log_joint_gradient<T: Scalar>(&self, x: &[T], grad: &mut [T]) -> T {
        debug_assert_eq!(x.len(), self.layout.dim);
        grad.iter_mut().for_each(|g| *g = T::zero());
        let lay = &self.layout;
        let table = self.data.table();
        let p = &self.model.priors;
        let k = table.n_effects();
        let mut lp = T::zero();

        let beta: Vec<T> = lay.beta.iter().map(|i| i.map_or(T::zero(), |i| x[i])).collect();
        for (e, idx) in lay.beta.iter().enumerate() {
            if let Some(i) = *idx {
                let prior = p.for_effect(lay.effects[e]);
                lp += prior.log_density(beta[e]).unwrap_or(T::nan());
                grad[i] += prior.dlog_density(beta[e]);
            }
        }
        let subject = lay.subject.as_ref().map(|bl| self.block_forward(x, bl, &mut lp, grad));
        let item = lay.item.as_ref().map(|bl| self.block_forward(x, bl, &mut lp, grad));

        let log_sigma = x[lay.sigma];
        let sigma = log_sigma.exp();
        lp += p.sd_residual.log_density(sigma).unwrap_or(T::nan()) + log_sigma;
        grad[lay.sigma] += p.sd_residual.dlog_density(sigma) * sigma + T::one();

        let inv_var = (sigma * sigma).recip();
        let mut dbeta = vec![T::zero(); k];
        let mut du = subject.as_ref().map(|s| vec![T::zero(); s.u.len()]);
        let mut dw = item.as_ref().map(|s| vec![T::zero(); s.u.len()]);
        let mut ssr = T::zero();
        for r in 0..table.n_rows() {
            let codes = table.row_codes(r);
            let (s, it) = (table.subject[r] * k, table.item[r] * k);
            let mut mu = T::zero();
            for e in 0..k {
                let mut coef = beta[e];
                if let Some(st) = &subject {
                    coef += st.u[s + e];
                }
                if let Some(st) = &item {
                    coef += st.u[it + e];
                }
                mu += coef * T::lit(codes[e]);
            }
            let resid = T::lit(self.response[r]) - mu;
            ssr += resid * resid;
            let g = resid * inv_var;
            for e in 0..k {
                let gc = g * T::lit(codes[e]);
                dbeta[e] += gc;
                if let Some(du) = du.as_mut() {
                    du[s + e] += gc;
                }
                if let Some(dw) = dw.as_mut() {
                    dw[it + e] += gc;
                }
            }
        }
        let n = T::lit(table.n_rows() as f64);
        lp += -T::lit(0.5) * ssr * inv_var - n * (log_sigma + T::half_ln_2pi()) - T::lit(self.log_y_sum);
        grad[lay.sigma] += -n + ssr * inv_var;
        for (e, idx) in lay.beta.iter().enumerate() {
            if let Some(i) = *idx {
                grad[i] += dbeta[e];
            }
        }
        if let (Some(bl), Some(st), Some(du)) = (&lay.subject, &subject, &du) {
            self.block_backward(x, bl, st, du, grad);
        }
        if let (Some(bl), Some(st), Some(dw)) = (&lay.item, &item, &dw) {
            self.block_backward(x, bl, st, dw, grad);
        }
        if lp.is_nan() {
            return T::neg_infinity();
        }
        lp
    }

    pub fn log_joint<T: Scalar>(&self, x: &[T]) -> T {
        let mut g = vec![T::zero(); x.len()];
        self.log_joint_gradient(x, &mut g)
    }
}

impl LogDensity for Posterior {
    fn dim(&self) -> usize {
        self.layout.dim
    }

    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.log_joint_gradient(x, grad)
    }
}

/// Gradient of the unconstrained log joint.
pub fn grad_log_joint(x: &[f64], data: &Dataset, model: &ModelSpec) -> Result<Vec<f64>> {
    let post = Posterior::new(model, data)?;
    check_dim(post.layout.dim, x.len())?;
    let mut g = vec![0.0; x.len()];
    post.log_joint_gradient(x, &mut g);
    Ok(g)
}
