//! First-order Sugeno ANFIS with generalized Bell membership functions.
//!
//! A model maps an `n`-vector to a scalar. Rules form the full grid over the
//! per-input membership functions; each rule owns a linear consequent
//! `p . x + r`. Training alternates a least-squares solve for all
//! consequents with a gradient step on the Bell parameters.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use nalgebra::{DMatrix, DVector};

use crate::error::invalid;
use crate::{Error, Result};

/// Lower bound kept on `a` and `b` during premise updates.
pub const PARAM_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellMf {
    /// Half-width.
    pub a: f64,
    /// Slope exponent.
    pub b: f64,
    /// Center.
    pub c: f64,
}

impl BellMf {
    pub fn eval(&self, x: f64) -> f64 {
        bell_mf(x, self)
    }

    /// `(d/da, d/db, d/dc)` of the membership at `x`.
    pub fn gradient(&self, x: f64) -> (f64, f64, f64) {
        let z = (x - self.c) / self.a;
        if z == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let p = z.abs().powf(2.0 * self.b);
        let mu = 1.0 / (1.0 + p);
        let mu2p = mu * mu * p;
        if !mu2p.is_finite() || mu2p == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let d_a = 2.0 * self.b * mu2p / self.a;
        let d_b = -2.0 * mu2p * z.abs().ln();
        let d_c = 2.0 * self.b * mu2p / (z * self.a);
        (d_a, d_b, d_c)
    }
}

/// `1 / (1 + |(x - c) / a|^(2b))`.
pub fn bell_mf(x: f64, mf: &BellMf) -> f64 {
    let z = ((x - mf.c) / mf.a).abs();
    1.0 / (1.0 + z.powf(2.0 * mf.b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnfisModel {
    pub mfs: Vec<Vec<BellMf>>,
    /// MF index per input for every rule, lexicographic with the last input
    /// varying fastest.
    pub rules: Vec<Vec<usize>>,
    /// Per rule: input coefficients followed by the bias.
    pub consequents: Vec<Vec<f64>>,
}

impl AnfisModel {
    pub fn new(mfs: Vec<Vec<BellMf>>) -> Result<Self> {
        if mfs.is_empty() || mfs.iter().any(|m| m.is_empty()) {
            return Err(invalid!("every input needs at least one membership function"));
        }
        if mfs.iter().flatten().any(|m| !(m.a > 0.0 && m.b > 0.0)) {
            return Err(invalid!("Bell parameters a and b must be positive"));
        }
        let mut rules: Vec<Vec<usize>> = vec![Vec::new()];
        for per_input in &mfs {
            rules = rules
                .into_iter()
                .flat_map(|prefix| {
                    (0..per_input.len()).map(move |k| {
                        let mut r = prefix.clone();
                        r.push(k);
                        r
                    })
                })
                .collect();
        }
        let n = mfs.len();
        let consequents = vec![vec![0.0; n + 1]; rules.len()];
        Ok(Self { mfs, rules, consequents })
    }

    pub fn n_inputs(&self) -> usize {
        self.mfs.len()
    }

    pub fn n_rules(&self) -> usize {
        self.rules.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_inputs() {
            return Err(invalid!("model takes {} inputs, got {}", self.n_inputs(), x.len()));
        }
        Ok(())
    }

    fn memberships(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.mfs
            .iter()
            .zip(x)
            .map(|(mfs, &xj)| mfs.iter().map(|mf| mf.eval(xj)).collect())
            .collect()
    }

    fn strengths_from(&self, mu: &[Vec<f64>]) -> Vec<f64> {
        self.rules
            .iter()
            .map(|rule| rule.iter().enumerate().map(|(j, &k)| mu[j][k]).product())
            .collect()
    }

    /// `f_k(x) = p_k . x + r_k`.
    pub fn rule_output(&self, rule: usize, x: &[f64]) -> f64 {
        let coef = &self.consequents[rule];
        let n = x.len();
        coef[..n].iter().zip(x).map(|(p, v)| p * v).sum::<f64>() + coef[n]
    }
}

/// Centers evenly spaced over each input range, `a` = half the spacing,
/// `b = 2`, zero consequents.
pub fn grid_partition_init(ranges: &[(f64, f64)], n_mfs: usize) -> Result<AnfisModel> {
    if n_mfs == 0 {
        return Err(invalid!("need at least one membership function per input"));
    }
    let mfs = ranges
        .iter()
        .map(|&(lo, hi)| {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(invalid!("bad input range [{lo}, {hi}]"));
            }
            let (lo, hi) = if hi - lo < 1e-6 { (lo - 5e-7, hi + 5e-7) } else { (lo, hi) };
            if n_mfs == 1 {
                let half = (hi - lo) / 2.0;
                return Ok(vec![BellMf { a: half, b: 2.0, c: lo + half }]);
            }
            let spacing = (hi - lo) / (n_mfs - 1) as f64;
            Ok((0..n_mfs)
                .map(|k| BellMf { a: spacing / 2.0, b: 2.0, c: lo + spacing * k as f64 })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    AnfisModel::new(mfs)
}

/// Rule firing strengths `prod_j mu_j(x_j)`.
pub fn firing_strengths(model: &AnfisModel, x: &[f64]) -> Result<Vec<f64>> {
    model.check_dim(x)?;
    Ok(model.strengths_from(&model.memberships(x)))
}

/// Firing-strength weighted mean of the rule outputs.
pub fn infer(model: &AnfisModel, x: &[f64]) -> Result<f64> {
    let w = firing_strengths(model, x)?;
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NonFinite(format!("all rules have zero firing strength at {x:?}")));
    }
    let num: f64 = w.iter().enumerate().map(|(k, wk)| wk * model.rule_output(k, x)).sum();
    Ok(num / total)
}

fn sse(model: &AnfisModel, xs: &[Vec<f64>], ys: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let e = infer(model, x)? - y;
        total += e * e;
    }
    Ok(total)
}

fn check_samples(model: &AnfisModel, xs: &[Vec<f64>], ys: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(invalid!("training needs at least one sample"));
    }
    if xs.len() != ys.len() {
        return Err(invalid!("{} inputs but {} targets", xs.len(), ys.len()));
    }
    xs.iter().try_for_each(|x| model.check_dim(x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LseReport {
    pub sse_before: f64,
    pub sse_after: f64,
}

/// Least-squares consequents for fixed premises.
///
/// Each sample contributes the row `[wn_1 (x, 1), ..., wn_K (x, 1)]` with
/// normalized strengths `wn_k`; the minimum-norm solution is taken through
/// an SVD. If rounding would make the fit worse the previous consequents are
/// kept, so SSE never increases.
pub fn lse_consequents(model: &mut AnfisModel, xs: &[Vec<f64>], ys: &[f64]) -> Result<LseReport> {
    check_samples(model, xs, ys)?;
    let n = model.n_inputs();
    let k = model.n_rules();
    let cols = k * (n + 1);
    let mut a = DMatrix::<f64>::zeros(xs.len(), cols);
    for (row, x) in xs.iter().enumerate() {
        let w = firing_strengths(model, x)?;
        let total: f64 = w.iter().sum();
        for (rule, wk) in w.iter().enumerate() {
            let wn = wk / total;
            for (j, v) in x.iter().chain(core::iter::once(&1.0)).enumerate() {
                a[(row, rule * (n + 1) + j)] = wn * v;
            }
        }
    }
    let b = DVector::from_column_slice(ys);
    let sse_before = sse(model, xs, ys)?;

    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = max_sv * f64::EPSILON * xs.len().max(cols) as f64;
    let solution = svd
        .solve(&b, eps)
        .map_err(|e| Error::NonFinite(format!("least-squares solve failed: {e}")))?;
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least-squares consequents".into()));
    }

    let previous = core::mem::replace(
        &mut model.consequents,
        (0..k).map(|r| solution.rows(r * (n + 1), n + 1).iter().copied().collect()).collect(),
    );
    let sse_after = sse(model, xs, ys)?;
    if sse_after > sse_before {
        model.consequents = previous;
        return Ok(LseReport { sse_before, sse_after: sse_before });
    }
    Ok(LseReport { sse_before, sse_after })
}

/// Gradient of the training MSE with respect to every Bell parameter, laid
/// out like `model.mfs` as `(d/da, d/db, d/dc)`.
pub fn premise_gradient(model: &AnfisModel, xs: &[Vec<f64>], ys: &[f64]) -> Result<Vec<Vec<(f64, f64, f64)>>> {
    check_samples(model, xs, ys)?;
    let mut grad: Vec<Vec<(f64, f64, f64)>> = model.mfs.iter().map(|m| vec![(0.0, 0.0, 0.0); m.len()]).collect();
    let scale = 2.0 / xs.len() as f64;
    for (x, &target) in xs.iter().zip(ys) {
        let mu = model.memberships(x);
        let w = model.strengths_from(&mu);
        let total: f64 = w.iter().sum();
        let f: Vec<f64> = (0..model.n_rules()).map(|r| model.rule_output(r, x)).collect();
        let y = w.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() / total;
        let err = scale * (y - target);
        for (j, mfs) in model.mfs.iter().enumerate() {
            for (m, mf) in mfs.iter().enumerate() {
                // dy/dmu_jm = sum over rules using (j, m) of (f_k - y) / total * prod_{i != j} mu_i
                let mut dy_dmu = 0.0;
                for (rule, idx) in model.rules.iter().enumerate() {
                    if idx[j] != m {
                        continue;
                    }
                    let others: f64 = idx
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != j)
                        .map(|(i, &k)| mu[i][k])
                        .product();
                    dy_dmu += (f[rule] - y) * others;
                }
                dy_dmu /= total;
                let (da, db, dc) = mf.gradient(x[j]);
                let g = &mut grad[j][m];
                g.0 += err * dy_dmu * da;
                g.1 += err * dy_dmu * db;
                g.2 += err * dy_dmu * dc;
            }
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub rmse_before_lse: f64,
    pub rmse_after_lse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
    /// RMSE of the returned model.
    pub final_rmse: f64,
}

/// Hybrid learning: per epoch a least-squares consequent step, then one
/// full-batch gradient step on the premises. A closing least-squares step
/// refits the consequents to the final premises.
pub fn train_hybrid(
    model: &AnfisModel,
    xs: &[Vec<f64>],
    ys: &[f64],
    epochs: usize,
    lr: f64,
) -> Result<(AnfisModel, TrainTrace)> {
    if epochs == 0 {
        return Err(invalid!("training needs at least one epoch"));
    }
    if !(lr > 0.0) {
        return Err(invalid!("learning rate must be positive, got {lr}"));
    }
    check_samples(model, xs, ys)?;
    let n = xs.len() as f64;
    let rmse = |sse: f64| (sse / n).sqrt();
    let mut model = model.clone();
    let mut stats = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let lse = lse_consequents(&mut model, xs, ys)?;
        stats.push(EpochStats {
            rmse_before_lse: rmse(lse.sse_before),
            rmse_after_lse: rmse(lse.sse_after),
        });
        let grad = premise_gradient(&model, xs, ys)?;
        for (j, (mfs, grads)) in model.mfs.iter_mut().zip(&grad).enumerate() {
            for (m, (mf, &(ga, gb, gc))) in mfs.iter_mut().zip(grads).enumerate() {
                for (name, g) in [("a", ga), ("b", gb), ("c", gc)] {
                    if !g.is_finite() {
                        return Err(Error::NonFinite(param_name(epoch, j, m, name)));
                    }
                }
                mf.a = (mf.a - lr * ga).max(PARAM_FLOOR);
                mf.b = (mf.b - lr * gb).max(PARAM_FLOOR);
                mf.c -= lr * gc;
            }
        }
    }
    let last = lse_consequents(&mut model, xs, ys)?;
    Ok((model, TrainTrace { epochs: stats, final_rmse: rmse(last.sse_after) }))
}

fn param_name(epoch: usize, input: usize, mf: usize, which: &str) -> String {
    format!("gradient of {which} for input {input} MF {mf} at epoch {epoch}")
}

/// Quadrant of the valence-arousal plane. Scores of 5 or more count as
/// positive valence / high arousal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EmotionQuadrant {
    PosHigh,
    PosLow,
    NegHigh,
    NegLow,
}

pub const QUADRANT_THRESHOLD: f64 = 5.0;

impl EmotionQuadrant {
    pub const ALL: [EmotionQuadrant; 4] = [Self::PosHigh, Self::PosLow, Self::NegHigh, Self::NegLow];

    pub fn from_scores(valence: f64, arousal: f64) -> Self {
        match (valence >= QUADRANT_THRESHOLD, arousal >= QUADRANT_THRESHOLD) {
            (true, true) => Self::PosHigh,
            (true, false) => Self::PosLow,
            (false, true) => Self::NegHigh,
            (false, false) => Self::NegLow,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::PosHigh => "pos_high",
            Self::PosLow => "pos_low",
            Self::NegHigh => "neg_high",
            Self::NegLow => "neg_low",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|q| q.as_str() == s)
    }

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, Self::PosHigh | Self::PosLow)
    }

    pub fn is_high(&self) -> bool {
        matches!(self, Self::PosHigh | Self::NegHigh)
    }
}

impl fmt::Display for EmotionQuadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmotionScore {
    pub valence: f64,
    pub arousal: f64,
}

pub const MOS_MIN: f64 = 1.0;
pub const MOS_MAX: f64 = 9.0;

pub fn classify_quadrant(
    valence_model: &AnfisModel,
    arousal_model: &AnfisModel,
    x: &[f64],
) -> Result<(EmotionScore, EmotionQuadrant)> {
    let valence = infer(valence_model, x)?.clamp(MOS_MIN, MOS_MAX);
    let arousal = infer(arousal_model, x)?.clamp(MOS_MIN, MOS_MAX);
    Ok((EmotionScore { valence, arousal }, EmotionQuadrant::from_scores(valence, arousal)))
}
