//! The CascadeHybrid learner and its baselines.
//!
//! One state machine serves all five policies: the relevance block
//! (`M`, `y`) is a ridge regression on linear features, the topic block
//! (`H`, `u`) a ridge regression on coverage gains, and `B` couples them.
//! `H` and `u` are kept in Schur-complement form so that the joint ridge
//! solution factors into a `d x d` and an `m x m` solve. Baselines are the
//! same machine with one block empty (see [`FeatureKind`]).

mod features;
mod select;
mod snapshot;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::model::{Catalog, ClickFeedback, CoverageTracker, RankedList};

pub use features::{FeatureKind, FeatureMap, XzTransform};
pub use select::select_list;

/// Residual above which an inverse is rebuilt from the raw statistics.
const INVERSE_RESIDUAL_LIMIT: f64 = 1e-6;

/// Sufficient statistics of one learner.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    d: usize,
    m: usize,
    gamma: f64,
    step: u64,
    /// `M = I + sum z z^T`
    rel_gram: DMatrix<f64>,
    rel_gram_inv: DMatrix<f64>,
    /// `B = sum omega z^T`, `d x m`
    cross: DMatrix<f64>,
    /// `H = I + sum omega omega^T - B M^-1 B^T`
    schur: DMatrix<f64>,
    schur_inv: DMatrix<f64>,
    /// `y = sum_{clicked} z`
    rel_clicks: DVector<f64>,
    /// `u = sum_{clicked} omega - B M^-1 y`
    topic_clicks: DVector<f64>,
    // Unadjusted topic statistics, used only to rebuild after a failed
    // inverse check.
    raw_topic_gram: DMatrix<f64>,
    raw_topic_clicks: DVector<f64>,
    rebuilds: u64,
}

/// Point estimates `theta_hat` (topic block) and `beta_hat` (relevance block).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterEstimate {
    pub theta_hat: Vec<f64>,
    pub beta_hat: Vec<f64>,
}

/// Features of one examined item: coverage gain and relevance vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub omega: Vec<f64>,
    pub z: Vec<f64>,
}

impl PolicyState {
    /// Identity Gram matrices and zero click statistics.
    pub fn new(d: usize, m: usize, gamma: f64) -> Result<Self> {
        if d + m == 0 {
            return Err(Error::invalid("policy needs d + m >= 1"));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::invalid(format!(
                "exploration gamma {gamma} must be finite and >= 0"
            )));
        }
        Ok(Self {
            d,
            m,
            gamma,
            step: 1,
            rel_gram: DMatrix::identity(m, m),
            rel_gram_inv: DMatrix::identity(m, m),
            cross: DMatrix::zeros(d, m),
            schur: DMatrix::identity(d, d),
            schur_inv: DMatrix::identity(d, d),
            rel_clicks: DVector::zeros(m),
            topic_clicks: DVector::zeros(d),
            raw_topic_gram: DMatrix::identity(d, d),
            raw_topic_clicks: DVector::zeros(d),
            rebuilds: 0,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_gamma(&mut self, gamma: f64) {
        self.gamma = gamma;
    }

    /// 1-based index of the upcoming interaction.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Number of times an inverse had to be rebuilt after a residual check.
    pub fn rebuilds(&self) -> u64 {
        self.rebuilds
    }

    pub fn rel_gram(&self) -> &DMatrix<f64> {
        &self.rel_gram
    }

    pub fn rel_gram_inv(&self) -> &DMatrix<f64> {
        &self.rel_gram_inv
    }

    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    pub fn schur(&self) -> &DMatrix<f64> {
        &self.schur
    }

    pub fn schur_inv(&self) -> &DMatrix<f64> {
        &self.schur_inv
    }

    pub fn rel_clicks(&self) -> &DVector<f64> {
        &self.rel_clicks
    }

    pub fn topic_clicks(&self) -> &DVector<f64> {
        &self.topic_clicks
    }

    /// `theta_hat = H^-1 u`, `beta_hat = M^-1 (y - B^T theta_hat)`.
    pub fn estimate(&self) -> ParameterEstimate {
        let theta = &self.schur_inv * &self.topic_clicks;
        let beta = &self.rel_gram_inv * (&self.rel_clicks - self.cross.tr_mul(&theta));
        ParameterEstimate {
            theta_hat: theta.as_slice().to_vec(),
            beta_hat: beta.as_slice().to_vec(),
        }
    }

    /// Squared confidence width
    /// `omega^T H^-1 omega - 2 omega^T H^-1 B M^-1 z + z^T M^-1 z + z^T M^-1 B^T H^-1 B M^-1 z`,
    /// which equals `phi^T O^-1 phi` for the joint Gram `O` and `phi = [omega; z]`.
    pub fn confidence_width(&self, omega: &[f64], z: &[f64]) -> Result<f64> {
        check_dim("confidence_width topic", self.d, omega.len())?;
        check_dim("confidence_width relevance", self.m, z.len())?;
        let omega = DVector::from_column_slice(omega);
        let z = DVector::from_column_slice(z);
        let h_omega = &self.schur_inv * &omega;
        let m_z = &self.rel_gram_inv * &z;
        let b_m_z = &self.cross * &m_z;
        let h_b_m_z = &self.schur_inv * &b_m_z;
        let s = omega.dot(&h_omega) - 2.0 * h_omega.dot(&b_m_z) + z.dot(&m_z) + b_m_z.dot(&h_b_m_z);
        Ok(s.max(0.0))
    }

    /// Optimistic attraction estimate `omega^T theta_hat + z^T beta_hat + gamma sqrt(s)`.
    pub fn ucb(&self, omega: &[f64], z: &[f64]) -> Result<f64> {
        let width = self.confidence_width(omega, z)?;
        let est = self.estimate();
        let mean = crate::model::dot(omega, &est.theta_hat) + crate::model::dot(z, &est.beta_hat);
        Ok(mean + self.gamma * width.sqrt())
    }

    /// Folds in one cascade interaction: `observed` are the examined items in
    /// display order and `clicked` indexes the clicked one, if any.
    pub fn observe(&mut self, observed: &[Observation], clicked: Option<usize>) -> Result<()> {
        for obs in observed {
            check_dim("observe topic", self.d, obs.omega.len())?;
            check_dim("observe relevance", self.m, obs.z.len())?;
        }
        if let Some(c) = clicked {
            if c >= observed.len() {
                return Err(Error::invalid(format!(
                    "clicked index {c} but only {} observed items",
                    observed.len()
                )));
            }
        }

        // Undo the Schur adjustment with the current B, M^-1, y.
        let b_minv = &self.cross * &self.rel_gram_inv;
        self.schur += &b_minv * self.cross.transpose();
        self.topic_clicks += &b_minv * &self.rel_clicks;

        for obs in observed {
            let omega = DVector::from_column_slice(&obs.omega);
            let z = DVector::from_column_slice(&obs.z);
            self.rel_gram.ger(1.0, &z, &z, 1.0);
            sherman_morrison(&mut self.rel_gram_inv, &z);
            self.cross.ger(1.0, &omega, &z, 1.0);
            self.schur.ger(1.0, &omega, &omega, 1.0);
            self.raw_topic_gram.ger(1.0, &omega, &omega, 1.0);
        }
        if let Some(c) = clicked {
            let obs = &observed[c];
            for (y, z) in self.rel_clicks.iter_mut().zip(&obs.z) {
                *y += z;
            }
            for (u, w) in self.topic_clicks.iter_mut().zip(&obs.omega) {
                *u += w;
            }
            for (u, w) in self.raw_topic_clicks.iter_mut().zip(&obs.omega) {
                *u += w;
            }
        }

        let b_minv = &self.cross * &self.rel_gram_inv;
        self.schur -= &b_minv * self.cross.transpose();
        self.topic_clicks -= &b_minv * &self.rel_clicks;
        symmetrize(&mut self.schur);
        symmetrize(&mut self.rel_gram_inv);

        self.refresh_schur_inverse();
        self.step += 1;
        Ok(())
    }

    fn refresh_schur_inverse(&mut self) {
        let inverse_ok = |a: &DMatrix<f64>, a_inv: &DMatrix<f64>| inverse_residual(a, a_inv) <= INVERSE_RESIDUAL_LIMIT;
        match spd_inverse(&self.schur) {
            Some(inv) if inverse_ok(&self.schur, &inv) && inverse_ok(&self.rel_gram, &self.rel_gram_inv) => {
                self.schur_inv = inv;
            }
            _ => self.rebuild(),
        }
    }

    /// Recomputes every derived quantity from the raw Gram statistics.
    fn rebuild(&mut self) {
        log::warn!(
            "policy step {}: inverse residual above {INVERSE_RESIDUAL_LIMIT}, rebuilding from raw statistics",
            self.step
        );
        self.rebuilds += 1;
        self.rel_gram_inv = spd_inverse(&self.rel_gram).unwrap_or_else(|| {
            self.rel_gram
                .clone()
                .try_inverse()
                .expect("M = I + sum z z^T is positive definite")
        });
        let b_minv = &self.cross * &self.rel_gram_inv;
        self.schur = &self.raw_topic_gram - &b_minv * self.cross.transpose();
        symmetrize(&mut self.schur);
        self.topic_clicks = &self.raw_topic_clicks - &b_minv * &self.rel_clicks;
        self.schur_inv = spd_inverse(&self.schur).unwrap_or_else(|| {
            self.schur
                .clone()
                .try_inverse()
                .expect("Schur complement of a positive definite matrix is invertible")
        });
    }
}

/// Rank-one Sherman-Morrison update of `inv = A^-1` to `(A + v v^T)^-1`.
pub fn sherman_morrison(inv: &mut DMatrix<f64>, v: &DVector<f64>) {
    let inv_v = &*inv * v;
    let denom = 1.0 + v.dot(&inv_v);
    inv.ger(-1.0 / denom, &inv_v, &inv_v, 1.0);
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Some(a.clone());
    }
    a.clone().cholesky().map(|c| c.inverse())
}

/// Frobenius norm of `A A^-1 - I`.
pub fn inverse_residual(a: &DMatrix<f64>, a_inv: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    (a * a_inv - DMatrix::<f64>::identity(n, n)).norm()
}

/// Folds one displayed list and its cascade feedback into `state`. Coverage
/// gains are recomputed against the prefix that was actually displayed.
pub fn update(
    state: &mut PolicyState,
    features: &FeatureMap,
    list: &RankedList,
    feedback: ClickFeedback,
) -> Result<()> {
    check_dim("update topic", state.d(), features.d())?;
    check_dim("update relevance", state.m(), features.m())?;
    let k = list.len();
    if feedback.click_pos() > k + 1 {
        return Err(Error::invalid(format!(
            "click position {} outside [1, {}]",
            feedback.click_pos(),
            k + 1
        )));
    }
    if let Some(&bad) = list.ids().iter().find(|&&id| id >= features.len()) {
        return Err(Error::invalid(format!("item id {bad} not in catalog")));
    }
    let mut coverage = CoverageTracker::new(features.d());
    let observed: Vec<Observation> = list.ids()[..feedback.observed(k)]
        .iter()
        .map(|&id| {
            let x = features.topic(id);
            let obs = Observation {
                omega: coverage.gain(x),
                z: features.rel(id).to_vec(),
            };
            coverage.push(x);
            obs
        })
        .collect();
    state.observe(&observed, feedback.clicked_index(k))
}

/// Exploration constant of the regret guarantee:
/// `sqrt((m + d) ln(1 + n K / (m + d)) + 2 ln n) + ||w*||`.
pub fn theoretical_gamma(m: usize, d: usize, n: u64, k: usize, w_norm: f64) -> Result<f64> {
    if n == 0 || k == 0 {
        return Err(Error::invalid("theoretical gamma needs n >= 1 and K >= 1"));
    }
    if m + d == 0 {
        return Err(Error::invalid("theoretical gamma needs m + d >= 1"));
    }
    if !(0.0..=1.0).contains(&w_norm) {
        return Err(Error::invalid(format!("||w*|| = {w_norm} must lie in [0, 1]")));
    }
    let dim = (m + d) as f64;
    let n = n as f64;
    Ok((dim * (1.0 + n * k as f64 / dim).ln() + 2.0 * n.ln()).sqrt() + w_norm)
}

/// A policy state bundled with the feature map it learns over.
#[derive(Debug, Clone)]
pub struct CascadeLearner {
    state: PolicyState,
    features: FeatureMap,
}

impl CascadeLearner {
    pub fn new(kind: FeatureKind, catalog: &Catalog, gamma: f64) -> Result<Self> {
        Self::from_features(FeatureMap::new(kind, catalog), gamma)
    }

    pub fn from_features(features: FeatureMap, gamma: f64) -> Result<Self> {
        let state = PolicyState::new(features.d(), features.m(), gamma)?;
        Ok(Self { state, features })
    }

    /// Resumes from a saved state; dimensions must match the feature map.
    pub fn with_state(features: FeatureMap, state: PolicyState) -> Result<Self> {
        check_dim("learner topic", features.d(), state.d())?;
        check_dim("learner relevance", features.m(), state.m())?;
        Ok(Self { state, features })
    }

    pub fn kind(&self) -> FeatureKind {
        self.features.kind()
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn select(&self, k: usize) -> Result<RankedList> {
        select_list(&self.state, &self.features, k)
    }

    pub fn update(&mut self, list: &RankedList, feedback: ClickFeedback) -> Result<()> {
        update(&mut self.state, &self.features, list, feedback)
    }
}
