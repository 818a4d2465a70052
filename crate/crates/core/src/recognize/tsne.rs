//! Exact t-SNE.

use std::io::{self, Write};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub n_iter: usize,
    pub learning_rate: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    /// KL is recorded every this many iterations.
    pub kl_every: usize,
    pub rng_seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            n_iter: 1000,
            learning_rate: 200.0,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            kl_every: 10,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TsneError {
    #[error("need more than 3 * perplexity points: {n} points, perplexity {perplexity}")]
    TooFewPoints { n: usize, perplexity: f64 },
    #[error("n_iter {n_iter} must exceed exaggeration_iters {exaggeration_iters}")]
    Schedule { n_iter: usize, exaggeration_iters: usize },
    #[error("rows have differing lengths")]
    Ragged,
    #[error("non-finite feature value")]
    NonFinite,
    #[error("all rows are identical")]
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub embedding: Vec<[f64; 2]>,
    /// `(iteration, KL(P || Q))` with the unexaggerated P.
    pub kl_trace: Vec<(usize, f64)>,
    pub initial_kl: f64,
    pub final_kl: f64,
    /// Achieved perplexity of each conditional distribution.
    pub perplexities: Vec<f64>,
}

impl TsneResult {
    pub fn write_embedding_csv<W: Write>(&self, labels: &[String], mut out: W) -> io::Result<()> {
        writeln!(out, "index,label,x,y")?;
        for (i, p) in self.embedding.iter().enumerate() {
            let label = labels.get(i).map_or("", String::as_str);
            writeln!(out, "{i},{label},{},{}", p[0], p[1])?;
        }
        Ok(())
    }

    pub fn write_kl_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "iteration,kl")?;
        for (i, kl) in &self.kl_trace {
            writeln!(out, "{i},{kl}")?;
        }
        Ok(())
    }
}

pub fn squared_distances(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b).powi(2)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Row `i` of the Gaussian conditional P for precision `beta`, and its
/// Shannon entropy in nats.
fn conditional_row(dist: &[f64], i: usize, beta: f64, row: &mut [f64]) -> f64 {
    let min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (&d, p)) in dist.iter().zip(row.iter_mut()).enumerate() {
        *p = if j == i { 0.0 } else { (-(d - min) * beta).exp() };
        sum += *p;
    }
    let mut h = 0.0;
    for p in row.iter_mut() {
        *p /= sum;
        if *p > 0.0 {
            h -= *p * p.ln();
        }
    }
    h
}

/// Row-stochastic conditional P (row-major n x n) with each row's
/// bandwidth set by bisection so its perplexity matches the target.
pub fn conditional_probabilities(dist: &[f64], n: usize, perplexity: f64) -> (Vec<f64>, Vec<f64>) {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    let mut achieved = Vec::with_capacity(n);
    for i in 0..n {
        let d = &dist[i * n..(i + 1) * n];
        let row = &mut p[i * n..(i + 1) * n];
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut beta = 1.0;
        let mut h = conditional_row(d, i, beta, row);
        for _ in 0..200 {
            if (h.exp() - perplexity).abs() < 1e-5 {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
            h = conditional_row(d, i, beta, row);
        }
        achieved.push(h.exp());
    }
    (p, achieved)
}

fn kl(p: &[f64], q_num: &[f64], q_sum: f64) -> f64 {
    p.iter()
        .zip(q_num)
        .filter(|(&pij, _)| pij > 0.0)
        .map(|(&pij, &num)| pij * (pij / (num / q_sum).max(1e-300)).ln())
        .sum()
}

fn student_t(y: &[[f64; 2]], num: &mut [f64]) -> f64 {
    let n = y.len();
    let mut sum = 0.0;
    for i in 0..n {
        num[i * n + i] = 0.0;
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            sum += 2.0 * v;
        }
    }
    sum
}

pub fn tsne(features: &[Vec<f64>], config: &TsneConfig) -> Result<TsneResult, TsneError> {
    let n = features.len();
    if (n as f64) <= 3.0 * config.perplexity {
        return Err(TsneError::TooFewPoints { n, perplexity: config.perplexity });
    }
    if config.n_iter <= config.exaggeration_iters {
        return Err(TsneError::Schedule { n_iter: config.n_iter, exaggeration_iters: config.exaggeration_iters });
    }
    let dim = features[0].len();
    if features.iter().any(|r| r.len() != dim) {
        return Err(TsneError::Ragged);
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(TsneError::NonFinite);
    }
    if features.iter().all(|r| r == &features[0]) {
        return Err(TsneError::Degenerate);
    }

    let dist = squared_distances(features);
    let (cond, perplexities) = conditional_probabilities(&dist, n, config.perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }

    let mut rng = seeded(config.rng_seed);
    let init = Normal::new(0.0, 1e-4).expect("finite std");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];

    let q_sum = student_t(&y, &mut num);
    let initial_kl = kl(&p, &num, q_sum);
    let mut kl_trace = vec![(0, initial_kl)];
    let every = config.kl_every.max(1);

    for iter in 1..=config.n_iter {
        let exaggerating = iter <= config.exaggeration_iters;
        let exag = if exaggerating { config.early_exaggeration } else { 1.0 };
        let momentum = if exaggerating { config.momentum_initial } else { config.momentum_final };
        let q_sum = student_t(&y, &mut num);
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = num[i * n + j];
                let mult = (exag * p[i * n + j] - w / q_sum) * w;
                g[0] += mult * (y[i][0] - y[j][0]);
                g[1] += mult * (y[i][1] - y[j][1]);
            }
            for k in 0..2 {
                let grad = 4.0 * g[k];
                gains[i][k] = if (grad > 0.0) != (update[i][k] > 0.0) {
                    gains[i][k] + 0.2
                } else {
                    (gains[i][k] * 0.8).max(0.01)
                };
                update[i][k] = momentum * update[i][k] - config.learning_rate * gains[i][k] * grad;
            }
        }
        for (yi, u) in y.iter_mut().zip(&update) {
            yi[0] += u[0];
            yi[1] += u[1];
        }
        let mean = y.iter().fold([0.0, 0.0], |m, v| [m[0] + v[0], m[1] + v[1]]);
        for yi in &mut y {
            yi[0] -= mean[0] / n as f64;
            yi[1] -= mean[1] / n as f64;
        }
        if iter % every == 0 || iter == config.n_iter {
            let q_sum = student_t(&y, &mut num);
            kl_trace.push((iter, kl(&p, &num, q_sum)));
        }
    }
    let final_kl = kl_trace.last().expect("recorded").1;
    Ok(TsneResult { embedding: y, kl_trace, initial_kl, final_kl, perplexities })
}

/// Leave-one-out k-nearest-neighbour accuracy with majority vote; ties go
/// to the label of the nearest tied neighbour.
pub fn knn_accuracy(points: &[[f64; 2]], labels: &[usize], k: usize) -> f64 {
    let n = points.len();
    let mut hits = 0;
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| ((points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2), j))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        let neigh = &d[..k.min(d.len())];
        let mut votes: Vec<(usize, usize, usize)> = Vec::new(); // label, count, first rank
        for (rank, &(_, j)) in neigh.iter().enumerate() {
            match votes.iter_mut().find(|v| v.0 == labels[j]) {
                Some(v) => v.1 += 1,
                None => votes.push((labels[j], 1, rank)),
            }
        }
        let best = votes.iter().max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2))).map(|v| v.0);
        if best == Some(labels[i]) {
            hits += 1;
        }
    }
    hits as f64 / n.max(1) as f64
}
