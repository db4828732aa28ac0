//! Two-class latent model over agreement patterns.
//!
//! Fields are conditionally independent given the class. A MISSING entry
//! contributes a factor of 1 to both class likelihoods (missing at random),
//! so the EM updates for a field only see pairs where that field was
//! observed. All likelihood products are accumulated in log space.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::compare::{AgreementPattern, Level, PatternCodec};

/// Lower/upper bound every fitted probability is clamped into.
pub const PROB_FLOOR: f64 = 1e-12;
pub const DEFAULT_LAMBDA_INIT: f64 = 0.1;
pub const DEFAULT_TOP_MASS_INIT: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("pattern of length {found} where {expected} fields were expected")]
    WidthMismatch { expected: usize, found: usize },
    #[error("field {field}: level {level} outside 0..{levels}")]
    LevelOutOfRange {
        field: usize,
        level: Level,
        levels: usize,
    },
    #[error("cannot fit a model to zero pairs")]
    EmptyCounts,
    #[error("invalid model parameters: {0}")]
    InvalidParams(&'static str),
    #[error("convergence tolerance must be positive")]
    BadTolerance,
}

/// Multiset of agreement patterns.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PatternCounts {
    width: usize,
    entries: BTreeMap<AgreementPattern, u64>,
    total: u64,
}

impl PatternCounts {
    pub fn new(width: usize) -> Self {
        PatternCounts {
            width,
            entries: BTreeMap::new(),
            total: 0,
        }
    }

    pub fn add(&mut self, pattern: AgreementPattern, count: u64) -> Result<(), ModelError> {
        if self.total == 0 && self.entries.is_empty() {
            self.width = pattern.len();
        }
        if pattern.len() != self.width {
            return Err(ModelError::WidthMismatch {
                expected: self.width,
                found: pattern.len(),
            });
        }
        if count > 0 {
            *self.entries.entry(pattern).or_insert(0) += count;
            self.total += count;
        }
        Ok(())
    }

    /// Rebuild from dense per-code counts (see [`PatternCodec`]).
    pub fn from_dense(codec: &PatternCodec, dense: &[u64]) -> Self {
        let mut out = PatternCounts::new(codec.levels().len());
        for (code, &n) in dense.iter().enumerate() {
            if n > 0 {
                out.entries.insert(codec.decode(code as u32), n);
                out.total += n;
            }
        }
        out
    }

    pub fn merge(&mut self, other: &PatternCounts) -> Result<(), ModelError> {
        for (p, &n) in &other.entries {
            self.add(p.clone(), n)?;
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn get(&self, pattern: &AgreementPattern) -> u64 {
        self.entries.get(pattern).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AgreementPattern, u64)> {
        self.entries.iter().map(|(p, &n)| (p, n))
    }
}

/// Single-pass multiset count. Patterns of differing length are an error.
pub fn count_patterns<I>(patterns: I) -> Result<PatternCounts, ModelError>
where
    I: IntoIterator<Item = AgreementPattern>,
{
    let mut out = PatternCounts::new(0);
    for p in patterns {
        out.add(p, 1)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Match,
    NonMatch,
}

/// Match prevalence plus per-field level distributions for each class.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub lambda: f64,
    /// `m[k][l]`: P(level l on field k | match).
    pub m: Vec<Vec<f64>>,
    /// `u[k][l]`: P(level l on field k | non-match).
    pub u: Vec<Vec<f64>>,
}

impl ModelParams {
    pub fn width(&self) -> usize {
        self.m.len()
    }

    pub fn levels(&self) -> Vec<usize> {
        self.m.iter().map(Vec::len).collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ModelError::InvalidParams("lambda outside [0, 1]"));
        }
        if self.m.len() != self.u.len() {
            return Err(ModelError::InvalidParams("m and u cover different fields"));
        }
        for (m, u) in self.m.iter().zip(&self.u) {
            if m.len() != u.len() || m.len() < 2 {
                return Err(ModelError::InvalidParams("level count mismatch"));
            }
            for dist in [m, u] {
                if dist.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(ModelError::InvalidParams("probability outside [0, 1]"));
                }
                if (dist.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(ModelError::InvalidParams("distribution does not sum to 1"));
                }
            }
        }
        Ok(())
    }

    /// Default starting point: lambda 0.1, match class with 0.8 on the top
    /// level and the rest spread evenly, non-match class at the observed
    /// marginal level frequencies (uniform for a never-observed field).
    pub fn initial(counts: &PatternCounts, levels: &[usize]) -> Result<Self, ModelError> {
        if !counts.is_empty() && counts.width() != levels.len() {
            return Err(ModelError::WidthMismatch {
                expected: levels.len(),
                found: counts.width(),
            });
        }
        let mut marginals: Vec<Vec<f64>> = levels.iter().map(|&l| vec![0.0; l]).collect();
        for (p, n) in counts.iter() {
            for (k, l) in p.levels().iter().enumerate() {
                if let Some(l) = *l {
                    let slot = marginals[k].get_mut(l as usize).ok_or(ModelError::LevelOutOfRange {
                        field: k,
                        level: l,
                        levels: levels[k],
                    })?;
                    *slot += n as f64;
                }
            }
        }
        let u = marginals
            .into_iter()
            .map(|mut row| {
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    row.iter_mut().for_each(|x| *x /= total);
                } else {
                    let l = row.len() as f64;
                    row.iter_mut().for_each(|x| *x = 1.0 / l);
                }
                clamp_distribution(&mut row);
                row
            })
            .collect();
        let m = levels
            .iter()
            .map(|&l| {
                let rest = (1.0 - DEFAULT_TOP_MASS_INIT) / (l - 1) as f64;
                let mut row = vec![rest; l];
                row[l - 1] = DEFAULT_TOP_MASS_INIT;
                row
            })
            .collect();
        Ok(ModelParams {
            lambda: DEFAULT_LAMBDA_INIT,
            m,
            u,
        })
    }

    fn dist(&self, class: Class) -> &[Vec<f64>] {
        match class {
            Class::Match => &self.m,
            Class::NonMatch => &self.u,
        }
    }

    /// Posterior for every code of `codec`, for fast per-pair lookup.
    pub fn xi_table(&self, codec: &PatternCodec) -> Result<Vec<f64>, ModelError> {
        (0..codec.size() as u32)
            .map(|code| posterior(&codec.decode(code), self))
            .collect()
    }

    fn max_abs_diff(&self, other: &ModelParams) -> f64 {
        let mut d = (self.lambda - other.lambda).abs();
        for (a, b) in self.m.iter().flatten().zip(other.m.iter().flatten()) {
            d = d.max((a - b).abs());
        }
        for (a, b) in self.u.iter().flatten().zip(other.u.iter().flatten()) {
            d = d.max((a - b).abs());
        }
        d
    }
}

fn clamp_prob(x: f64) -> f64 {
    x.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

fn clamp_distribution(row: &mut [f64]) {
    row.iter_mut().for_each(|x| *x = clamp_prob(*x));
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= total);
}

fn check_pattern(pattern: &AgreementPattern, params: &ModelParams) -> Result<(), ModelError> {
    if pattern.len() != params.width() {
        return Err(ModelError::WidthMismatch {
            expected: params.width(),
            found: pattern.len(),
        });
    }
    for (k, l) in pattern.levels().iter().enumerate() {
        if let Some(l) = *l {
            if l as usize >= params.m[k].len() {
                return Err(ModelError::LevelOutOfRange {
                    field: k,
                    level: l,
                    levels: params.m[k].len(),
                });
            }
        }
    }
    Ok(())
}

/// `ln P(pattern | class)`; MISSING fields contribute 0.
pub fn log_pattern_likelihood(
    pattern: &AgreementPattern,
    params: &ModelParams,
    class: Class,
) -> Result<f64, ModelError> {
    check_pattern(pattern, params)?;
    let dist = params.dist(class);
    Ok(pattern
        .levels()
        .iter()
        .enumerate()
        .filter_map(|(k, l)| l.map(|l| libm::log(dist[k][l as usize])))
        .sum())
}

pub fn pattern_likelihood(
    pattern: &AgreementPattern,
    params: &ModelParams,
    class: Class,
) -> Result<f64, ModelError> {
    log_pattern_likelihood(pattern, params, class).map(libm::exp)
}

/// Bayes' rule: `lambda L_M / (lambda L_M + (1 - lambda) L_U)`.
pub fn posterior(pattern: &AgreementPattern, params: &ModelParams) -> Result<f64, ModelError> {
    let lm = log_pattern_likelihood(pattern, params, Class::Match)?;
    let lu = log_pattern_likelihood(pattern, params, Class::NonMatch)?;
    Ok(posterior_from_logs(params.lambda, lm, lu))
}

fn posterior_from_logs(lambda: f64, log_lm: f64, log_lu: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    if lambda >= 1.0 {
        return 1.0;
    }
    let a = libm::log(lambda) + log_lm;
    let b = libm::log(1.0 - lambda) + log_lu;
    1.0 / (1.0 + libm::exp(b - a))
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    hi + libm::log(libm::exp(a - hi) + libm::exp(b - hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            tolerance: 1e-6,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    /// Observed-data log-likelihood at the start and after every M-step.
    pub trace: Vec<f64>,
    /// Classes were swapped so that the match class agrees more.
    pub swapped: bool,
    /// Both classes ended up identical and lambda was pushed to a clamp.
    pub collapsed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub params: ModelParams,
    pub diagnostics: EmDiagnostics,
}

struct Compressed {
    patterns: Vec<(Vec<Option<usize>>, f64)>,
    total: f64,
    observed: Vec<bool>,
}

fn compress(counts: &PatternCounts, params: &ModelParams) -> Result<Compressed, ModelError> {
    let mut observed = vec![false; params.width()];
    let mut patterns = Vec::with_capacity(counts.distinct());
    for (p, n) in counts.iter() {
        check_pattern(p, params)?;
        for (k, l) in p.levels().iter().enumerate() {
            observed[k] |= l.is_some();
        }
        patterns.push((p.levels().iter().map(|l| l.map(usize::from)).collect(), n as f64));
    }
    Ok(Compressed {
        patterns,
        total: counts.total() as f64,
        observed,
    })
}

fn class_logs(p: &[Option<usize>], params: &ModelParams) -> (f64, f64) {
    let mut lm = 0.0;
    let mut lu = 0.0;
    for (k, l) in p.iter().enumerate() {
        if let Some(l) = *l {
            lm += libm::log(params.m[k][l]);
            lu += libm::log(params.u[k][l]);
        }
    }
    (lm, lu)
}

fn log_likelihood(data: &Compressed, params: &ModelParams) -> f64 {
    let log_lambda = libm::log(params.lambda);
    let log_rest = libm::log(1.0 - params.lambda);
    data.patterns
        .iter()
        .map(|(p, n)| {
            let (lm, lu) = class_logs(p, params);
            n * log_sum_exp(log_lambda + lm, log_rest + lu)
        })
        .sum()
}

/// Observed-data log-likelihood of `counts` under `params`.
pub fn counts_log_likelihood(counts: &PatternCounts, params: &ModelParams) -> Result<f64, ModelError> {
    Ok(log_likelihood(&compress(counts, params)?, params))
}

fn em_step(data: &Compressed, params: &ModelParams) -> ModelParams {
    let mut m_num: Vec<Vec<f64>> = params.m.iter().map(|r| vec![0.0; r.len()]).collect();
    let mut u_num = m_num.clone();
    let mut match_mass = 0.0;
    for (p, n) in &data.patterns {
        let (lm, lu) = class_logs(p, params);
        let xi = posterior_from_logs(params.lambda, lm, lu);
        let wm = n * xi;
        let wu = n * (1.0 - xi);
        match_mass += wm;
        for (k, l) in p.iter().enumerate() {
            if let Some(l) = *l {
                m_num[k][l] += wm;
                u_num[k][l] += wu;
            }
        }
    }
    let renorm = |num: Vec<Vec<f64>>, old: &[Vec<f64>]| -> Vec<Vec<f64>> {
        num.into_iter()
            .zip(old)
            .map(|(mut row, old_row)| {
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    row.iter_mut().for_each(|x| *x /= total);
                    clamp_distribution(&mut row);
                    row
                } else {
                    old_row.clone()
                }
            })
            .collect()
    };
    ModelParams {
        lambda: clamp_prob(match_mass / data.total),
        m: renorm(m_num, &params.m),
        u: renorm(u_num, &params.u),
    }
}

fn mean_agreement(rows: &[Vec<f64>], observed: &[bool]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (row, _) in rows.iter().zip(observed).filter(|(_, &o)| o) {
        let top = (row.len() - 1) as f64;
        sum += row.iter().enumerate().map(|(l, p)| p * l as f64 / top).sum::<f64>();
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Fits lambda, m and u by EM, starting from `init`.
///
/// Stops when no parameter moves by `tolerance` or more, or after
/// `max_iter` M-steps (`converged = false`). Afterwards the classes are
/// relabeled if the "match" class agrees less than the "non-match" class.
/// If the two classes are indistinguishable on every observed field the
/// posterior carries no information; lambda is then pushed to the upper
/// clamp when the shared distribution mostly agrees and to the lower clamp
/// otherwise.
pub fn em_fit(counts: &PatternCounts, init: &ModelParams, opts: &EmOptions) -> Result<EmFit, ModelError> {
    if counts.is_empty() {
        return Err(ModelError::EmptyCounts);
    }
    if opts.tolerance.is_nan() || opts.tolerance <= 0.0 {
        return Err(ModelError::BadTolerance);
    }
    init.validate()?;
    let data = compress(counts, init)?;

    let mut params = init.clone();
    params.lambda = clamp_prob(params.lambda);
    let mut trace = vec![log_likelihood(&data, &params)];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let next = em_step(&data, &params);
        iterations += 1;
        let delta = next.max_abs_diff(&params);
        params = next;
        trace.push(log_likelihood(&data, &params));
        if delta < opts.tolerance {
            converged = true;
            break;
        }
    }

    let mut swapped = false;
    let mut collapsed = false;
    let mean_m = mean_agreement(&params.m, &data.observed);
    let mean_u = mean_agreement(&params.u, &data.observed);
    let identical = params
        .m
        .iter()
        .zip(&params.u)
        .zip(&data.observed)
        .filter(|(_, &o)| o)
        .all(|((m, u), _)| m.iter().zip(u).all(|(a, b)| (a - b).abs() < 1e-9));
    if identical {
        collapsed = true;
        params.lambda = if mean_m >= 0.5 {
            1.0 - PROB_FLOOR
        } else {
            PROB_FLOOR
        };
    } else if mean_m < mean_u {
        swapped = true;
        core::mem::swap(&mut params.m, &mut params.u);
        params.lambda = 1.0 - params.lambda;
    }

    let log_likelihood = log_likelihood(&data, &params);
    Ok(EmFit {
        params,
        diagnostics: EmDiagnostics {
            iterations,
            converged,
            log_likelihood,
            trace,
            swapped,
            collapsed,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorRates {
    pub fdr: f64,
    pub fnr: f64,
}

impl ErrorRates {
    /// Weighted form of [`estimate_error_rates`]: each item stands for
    /// `weight` pairs sharing one posterior.
    pub fn weighted<I>(items: I) -> ErrorRates
    where
        I: IntoIterator<Item = (f64, bool, f64)>,
    {
        let mut declared_n = 0.0;
        let mut declared_false = 0.0;
        let mut undeclared_xi = 0.0;
        let mut all_xi = 0.0;
        for (xi, declared, w) in items {
            all_xi += w * xi;
            if declared {
                declared_n += w;
                declared_false += w * (1.0 - xi);
            } else {
                undeclared_xi += w * xi;
            }
        }
        ErrorRates {
            fdr: if declared_n > 0.0 {
                declared_false / declared_n
            } else {
                0.0
            },
            fnr: if all_xi > 0.0 { undeclared_xi / all_xi } else { 0.0 },
        }
    }

    /// Error rates over every pair summarized by `counts` at `threshold`.
    pub fn from_counts(
        counts: &PatternCounts,
        params: &ModelParams,
        threshold: f64,
    ) -> Result<ErrorRates, ModelError> {
        let mut items = Vec::with_capacity(counts.distinct());
        for (p, n) in counts.iter() {
            let xi = posterior(p, params)?;
            items.push((xi, xi >= threshold, n as f64));
        }
        Ok(ErrorRates::weighted(items))
    }
}

/// FDR = mean(1 - xi) over declared pairs; FNR = undeclared xi mass over
/// total xi mass. Both are 0 when their denominator is.
pub fn estimate_error_rates(posteriors: &[(f64, bool)]) -> ErrorRates {
    ErrorRates::weighted(posteriors.iter().map(|&(xi, d)| (xi, d, 1.0)))
}
