//! Long-format results, their CSV form and the statistics drawn from them.

use std::cmp::Ordering;
use std::fmt::Write as _;

use super::HarnessError;
use crate::streaming::Algorithm;

pub const CSV_HEADER: &str = "trial_id\talgorithm\tcheckpoint_n\tsin2_error\tseed";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub trial_id: usize,
    pub algorithm: Algorithm,
    pub checkpoint_n: usize,
    pub sin2_error: f64,
    /// Per-trial seed.
    pub seed: u64,
}

fn algorithm_rank(a: Algorithm) -> usize {
    Algorithm::ALL.iter().position(|&b| b == a).expect("every algorithm is listed")
}

fn canonical_order(a: &ResultRow, b: &ResultRow) -> Ordering {
    (a.trial_id, algorithm_rank(a.algorithm), a.checkpoint_n).cmp(&(b.trial_id, algorithm_rank(b.algorithm), b.checkpoint_n))
}

/// Rows sorted by `(trial, algorithm, checkpoint)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(mut rows: Vec<ResultRow>) -> Self {
        rows.sort_by(canonical_order);
        Self { rows }
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Algorithms present, in canonical order.
    pub fn algorithms(&self) -> Vec<Algorithm> {
        Algorithm::ALL.into_iter().filter(|a| self.rows.iter().any(|r| r.algorithm == *a)).collect()
    }

    pub fn checkpoints(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.rows.iter().map(|r| r.checkpoint_n).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn trials(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.rows.iter().map(|r| r.trial_id).collect();
        t.sort_unstable();
        t.dedup();
        t
    }

    /// Tab-separated with a header line; floats in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(48 * (self.rows.len() + 1));
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(s, "{}\t{}\t{}\t{}\t{}", r.trial_id, r.algorithm, r.checkpoint_n, r.sin2_error, r.seed)
                .expect("writing to a String");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(HarnessError::Parse("missing or wrong CSV header".into()));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(HarnessError::Parse(format!("line {lineno}: expected 5 fields, got {}", fields.len())));
            }
            let err = |what: &str| HarnessError::Parse(format!("line {lineno}: bad {what}"));
            rows.push(ResultRow {
                trial_id: fields[0].parse().map_err(|_| err("trial_id"))?,
                algorithm: Algorithm::parse(fields[1]).ok_or_else(|| err("algorithm"))?,
                checkpoint_n: fields[2].parse().map_err(|_| err("checkpoint_n"))?,
                sin2_error: fields[3].parse().map_err(|_| err("sin2_error"))?,
                seed: fields[4].parse().map_err(|_| err("seed"))?,
            });
        }
        Ok(Self::new(rows))
    }

    /// Errors of `algorithm` at `checkpoint`, one per trial in trial order.
    pub fn errors_at(&self, algorithm: Algorithm, checkpoint: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.algorithm == algorithm && r.checkpoint_n == checkpoint)
            .map(|r| r.sin2_error)
            .collect()
    }

    /// Errors at the last checkpoint, one per trial.
    pub fn final_errors(&self, algorithm: Algorithm) -> Vec<f64> {
        match self.checkpoints().last() {
            Some(&c) => self.errors_at(algorithm, c),
            None => Vec::new(),
        }
    }

    /// `(checkpoint, mean error across trials)`.
    pub fn mean_curve(&self, algorithm: Algorithm) -> Vec<(usize, f64)> {
        self.curve(algorithm, mean)
    }

    /// `(checkpoint, median error across trials)`.
    pub fn median_curve(&self, algorithm: Algorithm) -> Vec<(usize, f64)> {
        self.curve(algorithm, median)
    }

    fn curve(&self, algorithm: Algorithm, stat: fn(&[f64]) -> f64) -> Vec<(usize, f64)> {
        self.checkpoints()
            .into_iter()
            .filter_map(|c| {
                let e = self.errors_at(algorithm, c);
                (!e.is_empty()).then(|| (c, stat(&e)))
            })
            .collect()
    }

    /// Tab-separated `algorithm checkpoint_n mean median` lines with header.
    pub fn summary_tsv(&self) -> String {
        let mut s = String::from("algorithm\tcheckpoint_n\tmean_sin2\tmedian_sin2\n");
        for a in self.algorithms() {
            for ((c, m), (_, med)) in self.mean_curve(a).into_iter().zip(self.median_curve(a)) {
                writeln!(s, "{a}\t{c}\t{m}\t{med}").expect("writing to a String");
            }
        }
        s
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One-sided paired sign test of "`a` tends to exceed `b`": the probability
/// under a fair coin of at least as many `a > b` pairs as observed, ties
/// dropped.
pub fn sign_test_greater(a: &[f64], b: &[f64]) -> f64 {
    let (mut wins, mut n) = (0u32, 0u32);
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Greater) => {
                wins += 1;
                n += 1;
            }
            Some(Ordering::Less) => n += 1,
            _ => {}
        }
    }
    binomial_upper_tail(n, wins)
}

/// `P(Bin(n, 1/2) ≥ k)`.
pub fn binomial_upper_tail(n: u32, k: u32) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    let mut coef = 1.0_f64;
    for i in 0..=n {
        if i > 0 {
            coef *= (n - i + 1) as f64 / i as f64;
        }
        if i >= k {
            total += coef;
        }
    }
    total * 0.5f64.powi(n as i32)
}

/// Least-squares slope of `ln y` against `ln x` over points with `x` in
/// `[lo, hi]`; `None` with fewer than two such points.
pub fn loglog_slope(points: &[(usize, f64)], lo: usize, hi: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| (lo..=hi).contains(x) && *y > 0.0)
        .map(|&(x, y)| ((x as f64).ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
