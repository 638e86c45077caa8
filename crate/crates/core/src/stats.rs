// SPDX-License-Identifier: MIT OR Apache-2.0

//! t-tests, fixed-effects logistic regression and the contrast battery.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF, Hypergeometric};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::evaluation::{Congruence, EvalRecord, HumanObservation, CHANCE};
use crate::numerics::{mean, sample_variance};
use crate::stimuli::{TargetRole, Task};

/// Printed at the top of every contrast report.
pub const DEVIATION_NOTICE: &str = "Random participant and item effects are not estimated: participants enter as fixed indicator columns, items are only counted.";

/// Smallest p-value printed as a number.
pub const P_FLOOR: f64 = 1e-15;

pub fn format_p(p: f64) -> String {
    if p < P_FLOOR {
        "< 1e-15".to_string()
    } else {
        format!("{p:.4e}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

/// Two-sided p for a t statistic with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Welch (unpaired) or paired t-test.
pub fn t_test(a: &[f64], b: &[f64], paired: bool) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::arg("each sample needs at least two values"));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::NumericDomain("t-test input is not finite".into()));
    }
    let (t, df) = if paired {
        if a.len() != b.len() {
            return Err(Error::arg("paired samples differ in length"));
        }
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let n = d.len() as f64;
        let se = (sample_variance(&d) / n).sqrt();
        (ratio(mean(&d), se)?, n - 1.0)
    } else {
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
        let se = (va + vb).sqrt();
        let t = ratio(mean(a) - mean(b), se)?;
        let df = if se == 0.0 {
            na + nb - 2.0
        } else {
            (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0))
        };
        (t, df)
    };
    Ok(TTest {
        t,
        df,
        p: t_two_sided_p(t, df),
    })
}

fn ratio(diff: f64, se: f64) -> Result<f64> {
    if se > 0.0 {
        Ok(diff / se)
    } else if diff == 0.0 {
        Err(Error::UndefinedStatistic("both samples have zero spread and equal means".into()))
    } else {
        Ok(diff.signum() * f64::INFINITY)
    }
}

/// Spearman rank correlation with midranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::arg("spearman needs two equal-length samples of size >= 2"));
    }
    let (rx, ry) = (midranks(x), midranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedStatistic("constant sample in rank correlation".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn midranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

/// Design matrix with named columns, one row per observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Design {
    pub fn new(names: Vec<String>) -> Self {
        Self { names, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.names.len());
        self.rows.push(row);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub log_likelihood: f64,
    /// Log-likelihood after each iteration, starting from the zero vector.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// A ridge term was added to a singular information matrix.
    pub ridge: bool,
}

impl GlmFit {
    pub fn coef(&self, name: &str) -> Option<(f64, f64, f64)> {
        let i = self.names.iter().position(|n| n == name)?;
        Some((self.coefficients[i], self.z[i], self.p[i]))
    }
}

pub const MAX_ITERATIONS: usize = 100;
pub const GRADIENT_TOL: f64 = 1e-6;
pub const RIDGE: f64 = 1e-6;
/// Coefficient magnitude read as divergence towards separation.
const DIVERGENCE: f64 = 30.0;

fn log1pexp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn log_likelihood(x: &[Vec<f64>], y: &[f64], beta: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(row, &yi)| {
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            yi * eta - log1pexp(eta)
        })
        .sum()
}

/// Cholesky factor of a symmetric positive definite matrix, or `None`.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if d <= 1e-12 * a[i][i].abs().max(1.0) {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

fn chol_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut z = vec![0.0; n];
    for i in 0..n {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (z[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

/// Column that by itself splits the outcomes (possibly with ties at the
/// boundary), or `"(all rows)"` when every outcome is the same.
fn separating_column(d: &Design, y: &[f64]) -> Option<String> {
    if y.iter().all(|&v| v == y[0]) {
        return Some("(all rows)".to_string());
    }
    for (j, name) in d.names.iter().enumerate() {
        let col: Vec<f64> = d.rows.iter().map(|r| r[j]).collect();
        if col.iter().all(|&v| v == col[0]) {
            continue;
        }
        let ext = |want: f64, f: fn(f64, f64) -> f64, init: f64| {
            col.iter().zip(y).filter(|(_, &yi)| yi == want).map(|(&x, _)| x).fold(init, f)
        };
        let (max0, min1) = (ext(0.0, f64::max, f64::NEG_INFINITY), ext(1.0, f64::min, f64::INFINITY));
        let (max1, min0) = (ext(1.0, f64::max, f64::NEG_INFINITY), ext(0.0, f64::min, f64::INFINITY));
        if max0 <= min1 || max1 <= min0 {
            return Some(name.clone());
        }
    }
    None
}

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares with step halving. Outcomes must be 0 or 1.
pub fn logistic_fit(design: &Design, y: &[f64]) -> Result<GlmFit> {
    let n = design.rows.len();
    let p = design.names.len();
    if n != y.len() {
        return Err(Error::arg(format!("{n} design rows but {} outcomes", y.len())));
    }
    if n <= p {
        return Err(Error::arg(format!("{n} observations for {p} columns")));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::arg("outcomes must be 0 or 1"));
    }
    for (j, name) in design.names.iter().enumerate() {
        if design.rows.iter().all(|r| r[j] == 0.0) {
            return Err(Error::arg(format!("column {name} is constant zero")));
        }
    }
    if let Some(column) = separating_column(design, y) {
        return Err(Error::Separation { column });
    }
    let x = &design.rows;
    let mut beta = vec![0.0; p];
    let mut ll = log_likelihood(x, y, &beta);
    let mut trace = vec![ll];
    let mut ridge = false;
    let mut info = vec![vec![0.0; p]; p];
    for iter in 1..=MAX_ITERATIONS {
        let mut grad = vec![0.0; p];
        for row in info.iter_mut() {
            row.fill(0.0);
        }
        for (row, &yi) in x.iter().zip(y) {
            let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = crate::numerics::sigmoid(eta);
            let w = mu * (1.0 - mu);
            for a in 0..p {
                grad[a] += row[a] * (yi - mu);
                for b in 0..=a {
                    info[a][b] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[b][a] = info[a][b];
            }
        }
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < GRADIENT_TOL {
            return finish(design, beta, ll, trace, iter - 1, ridge, &info);
        }
        let l = match cholesky(&info) {
            Some(l) => l,
            None => {
                ridge = true;
                let mut r = info.clone();
                for (a, row) in r.iter_mut().enumerate() {
                    row[a] += RIDGE;
                }
                cholesky(&r).ok_or_else(|| Error::NumericDomain("information matrix is not positive definite".into()))?
            }
        };
        let step = chol_solve(&l, &grad);
        let mut scale = 1.0;
        let mut next = beta.clone();
        let mut next_ll = f64::NEG_INFINITY;
        for _ in 0..40 {
            next = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            next_ll = log_likelihood(x, y, &next);
            if next_ll >= ll {
                break;
            }
            scale /= 2.0;
        }
        if next_ll < ll {
            // no ascent direction left at machine precision
            return finish(design, beta, ll, trace, iter, ridge, &info);
        }
        beta = next;
        ll = next_ll;
        trace.push(ll);
        if let Some((j, _)) = beta
            .iter()
            .enumerate()
            .filter(|(_, b)| b.abs() > DIVERGENCE)
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        {
            return Err(Error::Separation {
                column: design.names[j].clone(),
            });
        }
    }
    let grad_norm = {
        let mut g = vec![0.0; p];
        for (row, &yi) in x.iter().zip(y) {
            let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = crate::numerics::sigmoid(eta);
            for a in 0..p {
                g[a] += row[a] * (yi - mu);
            }
        }
        g.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };
    Err(Error::Convergence {
        iterations: MAX_ITERATIONS,
        gradient: grad_norm,
    })
}

fn finish(
    design: &Design,
    beta: Vec<f64>,
    ll: f64,
    trace: Vec<f64>,
    iterations: usize,
    ridge: bool,
    info: &[Vec<f64>],
) -> Result<GlmFit> {
    let p = beta.len();
    let l = cholesky(info).or_else(|| {
        let mut r = info.to_vec();
        for (a, row) in r.iter_mut().enumerate() {
            row[a] += RIDGE;
        }
        cholesky(&r)
    });
    let std_errors: Vec<f64> = match l {
        Some(l) => (0..p)
            .map(|j| {
                let mut e = vec![0.0; p];
                e[j] = 1.0;
                chol_solve(&l, &e)[j].sqrt()
            })
            .collect(),
        None => vec![f64::NAN; p],
    };
    let z: Vec<f64> = beta.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    let pv = z
        .iter()
        .map(|z| if z.is_finite() { erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0) } else { f64::NAN })
        .collect();
    Ok(GlmFit {
        names: design.names.clone(),
        coefficients: beta,
        std_errors,
        z,
        p: pv,
        log_likelihood: ll,
        trace,
        converged: true,
        iterations,
        ridge,
    })
}

/// Exact binomial tails for `k` successes out of `n` against `p0`:
/// `(P(X >= k), P(X <= k), two-sided)`, the two-sided value being twice the
/// smaller tail, capped at 1.
pub fn binomial_tails(k: u64, n: u64, p0: f64) -> Result<(f64, f64, f64)> {
    let b = Binomial::new(p0, n).map_err(|e| Error::arg(e.to_string()))?;
    let upper = if k == 0 { 1.0 } else { b.sf(k - 1) };
    let lower = b.cdf(k);
    Ok((upper, lower, (2.0 * upper.min(lower)).min(1.0)))
}

/// Two-sided Fisher exact test on a 2x2 table `[[a, b], [c, d]]` (rows are
/// groups, columns are error / no error).
pub fn fisher_exact(a: u64, b: u64, c: u64, d: u64) -> Result<f64> {
    let n = a + b + c + d;
    let row1 = a + b;
    let col1 = a + c;
    if n == 0 {
        return Err(Error::arg("empty table"));
    }
    let h = Hypergeometric::new(n, col1, row1).map_err(|e| Error::arg(e.to_string()))?;
    use statrs::distribution::Discrete;
    let lo = row1.saturating_sub(n - col1);
    let hi = row1.min(col1);
    let p_obs = h.pmf(a);
    let p: f64 = (lo..=hi).map(|k| h.pmf(k)).filter(|&q| q <= p_obs * (1.0 + 1e-7)).sum();
    Ok(p.min(1.0))
}

/// One binary outcome for the battery: an agreement error or not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Participant or model identifier.
    pub subject: String,
    pub item: String,
    pub task: Task,
    pub congruence: Congruence,
    pub role: TargetRole,
    pub error: bool,
}

impl Observation {
    pub fn from_eval(subject: &str, r: &EvalRecord) -> Self {
        Self {
            subject: subject.to_string(),
            item: r.trial_id.clone(),
            task: r.task,
            congruence: Congruence::of(&r.condition),
            role: r.role,
            error: r.score == 0,
        }
    }

    pub fn from_human(h: &HumanObservation) -> Self {
        Self {
            subject: h.participant_id.clone(),
            item: h.trial_id.clone(),
            task: h.task,
            congruence: Congruence::of(&h.condition),
            role: h.role,
            error: h.error,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastSpec {
    pub tasks: Vec<Task>,
    /// Significance level used for the yes/no flags.
    pub alpha: f64,
}

impl Default for ContrastSpec {
    fn default() -> Self {
        Self {
            tasks: Task::NESTING.to_vec(),
            alpha: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub task: Task,
    pub role: TargetRole,
    pub congruence: Congruence,
    pub n: usize,
    pub errors: usize,
    pub error_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastTest {
    pub name: String,
    pub method: String,
    /// Log-odds coefficient of the tested term, when estimable.
    pub effect: Option<f64>,
    /// Same contrast computed from the raw cell error rates (log-odds).
    pub raw_effect: f64,
    pub direction: String,
    pub statistic: Option<f64>,
    pub p: Option<f64>,
    pub p_text: String,
    pub one_sided_p: Option<f64>,
    pub agrees_with_means: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastReport {
    pub deviation_notice: String,
    pub design: Vec<CellRow>,
    pub subjects: usize,
    pub items: usize,
    pub tests: Vec<ContrastTest>,
    /// Long-Nested embedded incongruent accuracy below chance.
    pub below_chance: Option<bool>,
    /// Long-Nested embedded incongruent accuracy significantly above chance
    /// (one-sided).
    pub above_chance: Option<bool>,
}

type CellKey = (Task, TargetRole, Congruence);

fn cells(obs: &[Observation]) -> BTreeMap<CellKey, (usize, usize)> {
    let mut m: BTreeMap<CellKey, (usize, usize)> = BTreeMap::new();
    for o in obs {
        let e = m.entry((o.task, o.role, o.congruence)).or_default();
        e.0 += 1;
        e.1 += usize::from(o.error);
    }
    m
}

fn logit(errors: usize, n: usize) -> f64 {
    // half-count correction keeps empty or full cells finite
    let (e, n) = (errors as f64 + 0.5, n as f64 + 1.0);
    (e / (n - e)).ln()
}

/// Effects smaller than this read as "no difference".
const EFFECT_TOL: f64 = 1e-9;

fn direction(effect: f64, positive: &str, negative: &str) -> String {
    if effect > EFFECT_TOL {
        positive.to_string()
    } else if effect < -EFFECT_TOL {
        negative.to_string()
    } else {
        "no difference".to_string()
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Builds a design with intercept, the given terms and subject indicators
/// (first subject as reference).
fn build_design(rows: &[&Observation], terms: &[(&str, &dyn Fn(&Observation) -> f64)]) -> (Design, Vec<f64>) {
    let subjects: BTreeSet<&str> = rows.iter().map(|o| o.subject.as_str()).collect();
    let subjects: Vec<&str> = subjects.into_iter().skip(1).collect();
    let mut names = vec!["(intercept)".to_string()];
    names.extend(terms.iter().map(|t| t.0.to_string()));
    names.extend(subjects.iter().map(|s| format!("subject[{s}]")));
    let mut d = Design::new(names);
    let mut y = Vec::with_capacity(rows.len());
    for o in rows {
        let mut r = vec![1.0];
        r.extend(terms.iter().map(|t| (t.1)(o)));
        r.extend(subjects.iter().map(|s| indicator(o.subject == *s)));
        d.push(r);
        y.push(indicator(o.error));
    }
    (d, y)
}

fn wald_test(name: String, rows: &[&Observation], terms: &[(&str, &dyn Fn(&Observation) -> f64)], tested: &str, raw: f64, labels: (&str, &str), fallback: Option<(u64, u64, u64, u64)>) -> Result<ContrastTest> {
    let (d, y) = build_design(rows, terms);
    let dir = direction(raw, labels.0, labels.1);
    match logistic_fit(&d, &y) {
        Ok(fit) => {
            let (b, z, p) = fit.coef(tested).expect("tested term in design");
            Ok(ContrastTest {
                name,
                method: "logistic Wald".into(),
                effect: Some(b),
                raw_effect: raw,
                direction: direction(b, labels.0, labels.1),
                statistic: Some(z),
                p: Some(p),
                p_text: format_p(p),
                one_sided_p: None,
                agrees_with_means: direction(b, labels.0, labels.1) == dir,
                note: fit.ridge.then(|| "ridge fallback used".to_string()),
            })
        }
        Err(Error::Separation { column }) => {
            let (p, method) = match fallback {
                Some((a, b, c, dd)) => (Some(fisher_exact(a, b, c, dd)?), "Fisher exact (separation)"),
                None => (None, "not estimable"),
            };
            Ok(ContrastTest {
                name,
                method: method.into(),
                effect: None,
                raw_effect: raw,
                direction: dir,
                statistic: None,
                p,
                p_text: p.map_or("NA".to_string(), format_p),
                one_sided_p: None,
                agrees_with_means: true,
                note: Some(format!("complete or quasi-complete separation on {column}")),
            })
        }
        Err(e) => Err(e),
    }
}

/// Runs the fixed battery on per-trial observations.
pub fn contrast_report(obs: &[Observation], spec: &ContrastSpec) -> Result<ContrastReport> {
    let table = cells(obs);
    let mut missing = Vec::new();
    for &t in &spec.tasks {
        for r in t.target_roles() {
            if r == TargetRole::Adjective {
                continue;
            }
            for c in [Congruence::Congruent, Congruence::Incongruent] {
                if !table.contains_key(&(t, r, c)) {
                    missing.push(format!("{t}/{r}/{}", c.code()));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteDesign { missing });
    }
    let design: Vec<CellRow> = table
        .iter()
        .filter(|(k, _)| spec.tasks.contains(&k.0))
        .map(|(&(task, role, congruence), &(n, errors))| CellRow {
            task,
            role,
            congruence,
            n,
            errors,
            error_rate: errors as f64 / n as f64,
        })
        .collect();
    let cell = |t: Task, r: TargetRole, c: Congruence| table[&(t, r, c)];
    let inc = |o: &Observation| indicator(o.congruence == Congruence::Incongruent);
    let mut tests = Vec::new();

    for &t in &spec.tasks {
        for r in t.target_roles() {
            if r == TargetRole::Adjective {
                continue;
            }
            let rows: Vec<&Observation> = obs.iter().filter(|o| o.task == t && o.role == r).collect();
            let (nc, ec) = cell(t, r, Congruence::Congruent);
            let (ni, ei) = cell(t, r, Congruence::Incongruent);
            let raw = logit(ei, ni) - logit(ec, nc);
            let table2 = (ei as u64, (ni - ei) as u64, ec as u64, (nc - ec) as u64);
            tests.push(wald_test(
                format!("congruence effect: {t} {r} verb"),
                &rows,
                &[("incongruent", &inc)],
                "incongruent",
                raw,
                ("incongruent worse", "congruent worse"),
                Some(table2),
            )?);
        }
    }

    let emb = |o: &Observation| indicator(o.role == TargetRole::Embedded);
    let inc_emb = |o: &Observation| inc(o) * emb(o);
    for t in [Task::ShortNested, Task::LongNested] {
        if !spec.tasks.contains(&t) {
            continue;
        }
        let rows: Vec<&Observation> = obs.iter().filter(|o| o.task == t && o.role != TargetRole::Adjective).collect();
        let l = |r, c| {
            let (n, e) = cell(t, r, c);
            logit(e, n)
        };
        let raw = (l(TargetRole::Embedded, Congruence::Incongruent) - l(TargetRole::Embedded, Congruence::Congruent))
            - (l(TargetRole::Main, Congruence::Incongruent) - l(TargetRole::Main, Congruence::Congruent));
        tests.push(wald_test(
            format!("congruence x verb position: {t}"),
            &rows,
            &[("incongruent", &inc), ("embedded", &emb), ("incongruent:embedded", &inc_emb)],
            "incongruent:embedded",
            raw,
            ("larger effect on embedded verb", "larger effect on main verb"),
            None,
        )?);
    }

    if spec.tasks.contains(&Task::ShortNested) && spec.tasks.contains(&Task::LongNested) {
        let long = |o: &Observation| indicator(o.task == Task::LongNested);
        let inc_long = |o: &Observation| inc(o) * long(o);
        let rows: Vec<&Observation> = obs
            .iter()
            .filter(|o| matches!(o.task, Task::ShortNested | Task::LongNested) && o.role == TargetRole::Embedded)
            .collect();
        let l = |t, c| {
            let (n, e) = cell(t, TargetRole::Embedded, c);
            logit(e, n)
        };
        let raw = (l(Task::LongNested, Congruence::Incongruent) - l(Task::LongNested, Congruence::Congruent))
            - (l(Task::ShortNested, Congruence::Incongruent) - l(Task::ShortNested, Congruence::Congruent));
        tests.push(wald_test(
            "congruence x embedded length: embedded verb".into(),
            &rows,
            &[("incongruent", &inc), ("long", &long), ("incongruent:long", &inc_long)],
            "incongruent:long",
            raw,
            ("larger effect with long embedding", "larger effect with short embedding"),
            None,
        )?);
    }

    let (mut below_chance, mut above_chance) = (None, None);
    if spec.tasks.contains(&Task::LongNested) {
        let (n, e) = cell(Task::LongNested, TargetRole::Embedded, Congruence::Incongruent);
        let correct = (n - e) as u64;
        let (upper, _, two) = binomial_tails(correct, n as u64, CHANCE)?;
        let acc = correct as f64 / n as f64;
        below_chance = Some(acc < CHANCE);
        above_chance = Some(acc > CHANCE && upper < spec.alpha);
        tests.push(ContrastTest {
            name: format!("above chance: {} embedded incongruent", Task::LongNested),
            method: "exact binomial vs 0.5".into(),
            effect: Some(acc - CHANCE),
            raw_effect: acc - CHANCE,
            direction: direction(acc - CHANCE, "above chance", "below chance"),
            statistic: Some(acc),
            p: Some(two),
            p_text: format_p(two),
            one_sided_p: Some(upper),
            agrees_with_means: true,
            note: Some("p is two-sided; one_sided_p tests accuracy > 0.5".into()),
        });
    }

    let subjects = obs.iter().map(|o| o.subject.as_str()).collect::<BTreeSet<_>>().len();
    let items = obs.iter().map(|o| o.item.as_str()).collect::<BTreeSet<_>>().len();
    Ok(ContrastReport {
        deviation_notice: DEVIATION_NOTICE.to_string(),
        design,
        subjects,
        items,
        tests,
        below_chance,
        above_chance,
    })
}

impl ContrastReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "NOTE: {}", self.deviation_notice);
        let _ = writeln!(s, "subjects: {}  items: {}", self.subjects, self.items);
        let _ = writeln!(s, "\n{:<16} {:<9} {:<12} {:>6} {:>7} {:>8}", "task", "verb", "subjects", "n", "errors", "rate");
        for c in &self.design {
            let _ = writeln!(
                s,
                "{:<16} {:<9} {:<12} {:>6} {:>7} {:>8.4}",
                c.task.code(),
                c.role.code(),
                c.congruence.code(),
                c.n,
                c.errors,
                c.error_rate
            );
        }
        let _ = writeln!(s);
        for t in &self.tests {
            let stat = t.statistic.map_or("NA".to_string(), |z| format!("{z:.4}"));
            let _ = writeln!(s, "{}: {} [{}] stat={} p={}", t.name, t.direction, t.method, stat, t.p_text);
            if let Some(p1) = t.one_sided_p {
                let _ = writeln!(s, "    one-sided p={}", format_p(p1));
            }
            if let Some(n) = &t.note {
                let _ = writeln!(s, "    note: {n}");
            }
        }
        if let Some(b) = self.below_chance {
            let _ = writeln!(s, "below chance (long nested, embedded, incongruent): {}", if b { "yes" } else { "no" });
        }
        if let Some(a) = self.above_chance {
            let _ = writeln!(s, "above chance (long nested, embedded, incongruent): {}", if a { "yes" } else { "no" });
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let a = [1.0, 4.0, 2.5, 3.0];
        let r = t_test(&a, &a, false).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        assert!(t_test(&[2.0, 2.0], &[2.0, 2.0], false).is_err());
    }

    #[test]
    fn antisymmetric() {
        let (a, b) = ([1.0, 2.0, 4.0, 8.0], [0.5, 1.5, 1.0]);
        let x = t_test(&a, &b, false).unwrap();
        let y = t_test(&b, &a, false).unwrap();
        assert_eq!(x.t, -y.t);
        assert_eq!(x.p, y.p);
    }

    #[test]
    fn spearman_monotone() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 25.0, 99.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn balanced_intercept() {
        let mut d = Design::new(vec!["(intercept)".into()]);
        let y: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
        for _ in 0..10 {
            d.push(vec![1.0]);
        }
        let fit = logistic_fit(&d, &y).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-8);
        assert!(fit.converged);
    }

    #[test]
    fn separation_names_column() {
        let mut d = Design::new(vec!["(intercept)".into(), "x".into()]);
        let mut y = Vec::new();
        for i in 0..20 {
            d.push(vec![1.0, i as f64]);
            y.push(indicator(i >= 10));
        }
        match logistic_fit(&d, &y) {
            Err(Error::Separation { column }) => assert_eq!(column, "x"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn p_formatting() {
        assert_eq!(format_p(1e-20), "< 1e-15");
        assert_eq!(format_p(0.0), "< 1e-15");
        assert!(format_p(0.028).starts_with("2.8"));
    }

    #[test]
    fn binomial_and_fisher() {
        let (up, lo, two) = binomial_tails(5, 10, 0.5).unwrap();
        assert!((up - 638.0 / 1024.0).abs() < 1e-12);
        assert!((lo - 638.0 / 1024.0).abs() < 1e-12);
        assert_eq!(two, 1.0);
        // classic tea-tasting table
        assert!((fisher_exact(3, 1, 1, 3).unwrap() - 34.0 / 70.0).abs() < 1e-12);
    }
}
