//! The college admission simulation.
//!
//! Applicants are drawn under the admit-everyone policy. Logistic models
//! fitted on a training sample give plug-in scores, and a test sample is used
//! to pick the weight `w` of the utility `Dᵀ(Y + wS)` at which `S` stops
//! having value of information relative to `{T}`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::regression::{logistic, ols, LogisticFit};
use crate::rng::derive_seed;
use crate::sample::{sample, Dataset};
use crate::scenarios::{build_example, ExampleId, ExampleSpec};

/// Settings for one realization.
#[derive(Clone, Debug, Serialize)]
pub struct CollegeConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub p: f64,
    pub y_noise_sd: f64,
}

impl Default for CollegeConfig {
    fn default() -> Self {
        CollegeConfig { n_train: 100_000, n_test: 100_000, p: 2.0 / 3.0, y_noise_sd: 2.0 }
    }
}

/// Counts under one admission policy on the test sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Attainment {
    pub graduating: usize,
    pub minority_admitted: usize,
    pub minority_graduating: usize,
}

/// Outcome of one realization.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollegeRun {
    pub seed: u64,
    pub w: f64,
    pub original: Attainment,
    pub modified: Attainment,
    /// `E Ũ_w(π^{S,T}) − E Ũ_w(π^{T})` at the chosen `w`.
    pub residual_voi: f64,
}

impl CollegeRun {
    pub fn fewer_graduates(&self) -> i64 {
        self.original.graduating as i64 - self.modified.graduating as i64
    }

    pub fn more_minority_admitted(&self) -> i64 {
        self.modified.minority_admitted as i64 - self.original.minority_admitted as i64
    }

    pub fn more_minority_graduating(&self) -> i64 {
        self.modified.minority_graduating as i64 - self.original.minority_graduating as i64
    }
}

/// The test sample with plug-in predictions.
pub struct Fitted {
    s: Vec<f64>,
    y: Vec<f64>,
    y_t: Vec<f64>,
    y_st: Vec<f64>,
    s_t: Vec<f64>,
    y_str: Vec<f64>,
}

fn spec(config: &CollegeConfig) -> Result<ExampleSpec> {
    let params = BTreeMap::from([("p".to_string(), config.p), ("y_noise_sd".to_string(), config.y_noise_sd)]);
    build_example(ExampleId::College, &params)
}

fn draw(spec: &ExampleSpec, n: usize, seed: u64) -> Result<Dataset> {
    sample(&spec.scm, &spec.utility, &Policy::constant(1, 2), n, seed)
}

fn predict(fit: &LogisticFit, columns: &[&[f64]]) -> Vec<f64> {
    let mut row = vec![0.0; columns.len()];
    (0..columns[0].len())
        .map(|i| {
            for (r, c) in row.iter_mut().zip(columns) {
                *r = c[i];
            }
            fit.predict(&row)
        })
        .collect()
}

/// Draws training and test samples and fits the four logistic models.
pub fn fit(config: &CollegeConfig, seed: u64) -> Result<Fitted> {
    if config.n_test < 2 || !config.n_test.is_multiple_of(2) {
        return Err(Error::InvalidParameter("the test sample size must be even and positive".into()));
    }
    let spec = spec(config)?;
    let train = draw(&spec, config.n_train, derive_seed(seed, "train"))?;
    let test = draw(&spec, config.n_test, derive_seed(seed, "test"))?;
    let cols = |d: &Dataset| -> Result<[Vec<f64>; 4]> {
        Ok([d.column("S")?.to_vec(), d.column("T")?.to_vec(), d.column("R")?.to_vec(), d.column("Y")?.to_vec()])
    };
    let [s, t, r, y] = cols(&train)?;
    let m_y_t = logistic(&[&t], &y)?;
    let m_y_st = logistic(&[&s, &t], &y)?;
    let m_s_t = logistic(&[&t], &s)?;
    let m_y_str = logistic(&[&s, &t, &r], &y)?;
    let [s, t, r, y] = cols(&test)?;
    Ok(Fitted {
        y_t: predict(&m_y_t, &[&t]),
        y_st: predict(&m_y_st, &[&s, &t]),
        s_t: predict(&m_s_t, &[&t]),
        y_str: predict(&m_y_str, &[&s, &t, &r]),
        s,
        y,
    })
}

/// Admits the top half by score, breaking ties by index.
pub fn admit_half(scores: &[f64]) -> Vec<bool> {
    let half = scores.len() / 2;
    let mut d = vec![false; scores.len()];
    if half == 0 {
        return d;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.select_nth_unstable_by(half - 1, |a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));
    for i in &idx[..half] {
        d[*i] = true;
    }
    d
}

impl Fitted {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn utility(&self, d: &[bool], w: f64) -> f64 {
        let total: f64 = (0..self.n()).filter(|i| d[*i]).map(|i| self.y[i] + w * self.s[i]).sum();
        total / self.n() as f64
    }

    fn scored(&self, base: &[f64], extra: &[f64], w: f64) -> Vec<bool> {
        let scores: Vec<f64> = base.iter().zip(extra).map(|(b, e)| b + w * e).collect();
        admit_half(&scores)
    }

    /// Estimated `E Ũ_w(π_w^{S,T}) − E Ũ_w(π_w^{T})` on the test sample.
    pub fn voi_gap(&self, w: f64) -> f64 {
        let with_s = self.scored(&self.y_st, &self.s, w);
        let without = self.scored(&self.y_t, &self.s_t, w);
        self.utility(&with_s, w) - self.utility(&without, w)
    }

    /// Counts under the policy ranking by `p̂(Y | S,T,R) + wS`.
    pub fn attainment(&self, w: f64) -> Attainment {
        let d = self.scored(&self.y_str, &self.s, w);
        let mut a = Attainment { graduating: 0, minority_admitted: 0, minority_graduating: 0 };
        for i in (0..self.n()).filter(|i| d[*i]) {
            let grad = self.y[i] == 1.0;
            let minority = self.s[i] == 0.0;
            a.graduating += grad as usize;
            a.minority_admitted += minority as usize;
            a.minority_graduating += (grad && minority) as usize;
        }
        a
    }

    /// Locates the minimum of [`Fitted::voi_gap`]. The gap is non-negative
    /// in population and touches zero at the fair weight, so the estimate is
    /// the vertex of a parabola fitted to the gap on a fine grid around the
    /// coarse minimizer.
    pub fn solve_w(&self) -> Result<f64> {
        let argmin = |grid: &[f64]| -> (usize, Vec<f64>) {
            let g: Vec<f64> = grid.iter().map(|w| self.voi_gap(*w)).collect();
            let i = (0..g.len()).min_by(|a, b| g[*a].total_cmp(&g[*b])).unwrap_or(0);
            (i, g)
        };
        let coarse: Vec<f64> = (0..=COARSE_STEPS).map(|k| -1.0 + 2.0 * k as f64 / COARSE_STEPS as f64).collect();
        let (i, _) = argmin(&coarse);
        if i == 0 || i == COARSE_STEPS {
            return Err(Error::NonConvergence("VoI gap is smallest at the edge of [-1, 1]".into()));
        }
        let centre = coarse[i];
        let fine: Vec<f64> =
            (0..=FINE_STEPS).map(|k| centre + FINE_HALF_WIDTH * (2.0 * k as f64 / FINE_STEPS as f64 - 1.0)).collect();
        let (_, g) = argmin(&fine);
        let sq: Vec<f64> = fine.iter().map(|w| w * w).collect();
        let fit = ols(&[&fine, &sq], &g)?;
        let (b, a) = (fit.coefficients[1], fit.coefficients[2]);
        if !(a > 0.0) {
            return Err(Error::NonConvergence("VoI gap is not convex near its minimum".into()));
        }
        let w = -b / (2.0 * a);
        Ok(w.clamp(fine[0], fine[FINE_STEPS]))
    }
}

const COARSE_STEPS: usize = 40;
const FINE_STEPS: usize = 20;
const FINE_HALF_WIDTH: f64 = 0.1;

/// Runs one realization with randomness derived from `seed`.
pub fn run(config: &CollegeConfig, seed: u64) -> Result<CollegeRun> {
    let fitted = fit(config, seed)?;
    let w = fitted.solve_w()?;
    Ok(CollegeRun {
        seed,
        w,
        original: fitted.attainment(0.0),
        modified: fitted.attainment(w),
        residual_voi: fitted.voi_gap(w),
    })
}
