//! Rank correlation and accuracy protocols for judging metrics against
//! human (or generated) judgments.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Above this length pair counts come from the merge-sort path.
pub const EXACT_PAIR_LIMIT: usize = 10_000;

/// Classification of all `n(n−1)/2` index pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PairCounts {
    pub n: u64,
    pub concordant: u64,
    pub discordant: u64,
    /// Tied in `a` only.
    pub ties_a: u64,
    /// Tied in `b` only.
    pub ties_b: u64,
    pub ties_both: u64,
}

impl PairCounts {
    pub fn total_pairs(&self) -> u64 {
        self.n * self.n.saturating_sub(1) / 2
    }
}

fn check_lists(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "rank correlation inputs",
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::invalid("rank correlation needs at least 2 observations"));
    }
    if let Some(i) = a.iter().chain(b).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            rows: vec![i % a.len()],
            row: i % a.len(),
            col: i / a.len(),
        });
    }
    Ok(())
}

/// O(n²) enumeration of every pair.
pub fn pair_counts_exhaustive(a: &[f64], b: &[f64]) -> PairCounts {
    let mut c = PairCounts {
        n: a.len() as u64,
        ..Default::default()
    };
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            let da = a[i].partial_cmp(&a[j]).unwrap_or(Ordering::Equal);
            let db = b[i].partial_cmp(&b[j]).unwrap_or(Ordering::Equal);
            match (da, db) {
                (Ordering::Equal, Ordering::Equal) => c.ties_both += 1,
                (Ordering::Equal, _) => c.ties_a += 1,
                (_, Ordering::Equal) => c.ties_b += 1,
                (x, y) if x == y => c.concordant += 1,
                _ => c.discordant += 1,
            }
        }
    }
    c
}

fn tied_pairs_in_runs<T>(sorted: &[T], same: impl Fn(&T, &T) -> bool) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if same(&w[0], &w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// O(n log n) pair counts: sort by `(a, b)`, then count the inversions of
/// `b` with a bottom-up merge sort.
pub fn pair_counts_merge(a: &[f64], b: &[f64]) -> PairCounts {
    let n = a.len();
    let cmp = |x: &f64, y: &f64| x.partial_cmp(y).unwrap_or(Ordering::Equal);
    let mut pairs: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.sort_by(|p, q| cmp(&p.0, &q.0).then(cmp(&p.1, &q.1)));

    let tied_a = tied_pairs_in_runs(&pairs, |p, q| p.0 == q.0);
    let tied_ab = tied_pairs_in_runs(&pairs, |p, q| p.0 == q.0 && p.1 == q.1);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid && j < hi {
                if ys[i] <= ys[j] {
                    buf[k] = ys[i];
                    i += 1;
                } else {
                    buf[k] = ys[j];
                    j += 1;
                    swaps += (mid - i) as u64;
                }
                k += 1;
            }
            buf[k..k + (mid - i)].copy_from_slice(&ys[i..mid]);
            k += mid - i;
            buf[k..k + (hi - j)].copy_from_slice(&ys[j..hi]);
            lo += 2 * width;
        }
        std::mem::swap(&mut ys, &mut buf);
        width *= 2;
    }
    let tied_b = tied_pairs_in_runs(&ys, |p, q| p == q);

    let total = (n as u64) * (n as u64).saturating_sub(1) / 2;
    let ties_a = tied_a - tied_ab;
    let ties_b = tied_b - tied_ab;
    PairCounts {
        n: n as u64,
        concordant: total - swaps - ties_a - ties_b - tied_ab,
        discordant: swaps,
        ties_a,
        ties_b,
        ties_both: tied_ab,
    }
}

pub fn pair_counts(a: &[f64], b: &[f64]) -> PairCounts {
    if a.len() <= EXACT_PAIR_LIMIT {
        pair_counts_exhaustive(a, b)
    } else {
        pair_counts_merge(a, b)
    }
}

/// τ_b from pair counts.
pub fn tau_b_from_counts(c: &PairCounts) -> Result<f64> {
    let s = c.concordant as i64 - c.discordant as i64;
    let untied_a = (c.concordant + c.discordant + c.ties_b) as f64;
    let untied_b = (c.concordant + c.discordant + c.ties_a) as f64;
    let denom = (untied_a * untied_b).sqrt();
    if denom == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(s as f64 / denom)
}

/// τ_c (Stuart) from pair counts and the smaller number of distinct values.
pub fn tau_c_from_counts(c: &PairCounts, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::invalid(format!(
            "tau_c needs at least 2 distinct values in each list, got {m}"
        )));
    }
    let s = c.concordant as i64 - c.discordant as i64;
    let n = c.n as f64;
    let m = m as f64;
    Ok(2.0 * m * s as f64 / (n * n * (m - 1.0)))
}

pub fn distinct_count(values: &[f64]) -> usize {
    let mut v = values.to_vec();
    v.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
    v.dedup_by(|x, y| x == y);
    v.len()
}

pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lists(a, b)?;
    tau_b_from_counts(&pair_counts(a, b))
}

pub fn kendall_tau_c(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lists(a, b)?;
    let m = distinct_count(a).min(distinct_count(b));
    tau_c_from_counts(&pair_counts(a, b), m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TauVariant {
    B,
    C,
}

impl TauVariant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "b" | "B" => Ok(TauVariant::B),
            "c" | "C" => Ok(TauVariant::C),
            other => Err(Error::invalid(format!("unknown tau variant '{other}' (expected b or c)"))),
        }
    }

    pub fn compute(self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            TauVariant::B => kendall_tau_b(a, b),
            TauVariant::C => kendall_tau_c(a, b),
        }
    }
}

/// How to score a comparison whose two scores are exactly equal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TieRule {
    /// Half a point.
    Half,
    /// A coin flip from a generator seeded per call.
    Random { seed: u64 },
}

impl TieRule {
    pub fn parse(name: &str, seed: Option<u64>) -> Result<Self> {
        match (name, seed) {
            ("half", _) => Ok(TieRule::Half),
            ("random", Some(seed)) => Ok(TieRule::Random { seed }),
            ("random", None) => Err(Error::invalid("tie rule 'random' requires a seed")),
            (other, _) => Err(Error::invalid(format!("unknown tie rule '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TieRule::Half => "half",
            TieRule::Random { .. } => "random",
        }
    }
}

struct TieBreaker {
    rule: TieRule,
    rng: Option<ChaCha8Rng>,
}

impl TieBreaker {
    fn new(rule: TieRule) -> Self {
        let rng = match rule {
            TieRule::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            TieRule::Half => None,
        };
        TieBreaker { rule, rng }
    }

    /// Credit for a comparison where `win` says whether the expected side
    /// scored strictly higher; `None` for a tie.
    fn credit(&mut self, win: Option<bool>) -> f64 {
        match win {
            Some(true) => 1.0,
            Some(false) => 0.0,
            None => match self.rule {
                TieRule::Half => 0.5,
                TieRule::Random { .. } => {
                    if self.rng.as_mut().unwrap().random_bool(0.5) {
                        1.0
                    } else {
                        0.0
                    }
                }
            },
        }
    }
}

fn compare(high: f64, low: f64) -> Option<bool> {
    if high > low {
        Some(true)
    } else if high < low {
        Some(false)
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preferred {
    A,
    B,
}

/// One pairwise human preference between two candidates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairPreference {
    pub score_a: f64,
    pub score_b: f64,
    pub preferred: Preferred,
}

/// Fraction of preferences where the metric ranks the preferred candidate
/// higher.
pub fn pairwise_accuracy(prefs: &[PairPreference], tie_rule: TieRule) -> Result<f64> {
    if prefs.is_empty() {
        return Err(Error::invalid("no preference rows"));
    }
    if let Some(i) = prefs
        .iter()
        .position(|p| !p.score_a.is_finite() || !p.score_b.is_finite())
    {
        return Err(Error::NonFinite {
            rows: vec![i],
            row: i,
            col: 0,
        });
    }
    let mut tb = TieBreaker::new(tie_rule);
    let total: f64 = prefs
        .iter()
        .map(|p| {
            let (hi, lo) = match p.preferred {
                Preferred::A => (p.score_a, p.score_b),
                Preferred::B => (p.score_b, p.score_a),
            };
            tb.credit(compare(hi, lo))
        })
        .sum();
    Ok(total / prefs.len() as f64)
}

/// Fraction of items where the ground-truth caption outscores its foil.
pub fn foil_accuracy(gt_scores: &[f64], foil_scores: &[f64], tie_rule: TieRule) -> Result<f64> {
    if gt_scores.len() != foil_scores.len() {
        return Err(Error::DimensionMismatch {
            what: "foil score lists",
            expected: gt_scores.len(),
            actual: foil_scores.len(),
        });
    }
    if gt_scores.is_empty() {
        return Err(Error::invalid("no foil rows"));
    }
    let mut tb = TieBreaker::new(tie_rule);
    let total: f64 = gt_scores
        .iter()
        .zip(foil_scores)
        .map(|(&g, &f)| tb.credit(compare(g, f)))
        .sum();
    Ok(total / gt_scores.len() as f64)
}

/// Fraction of triples where the foiled sample scores strictly lowest.
pub fn lowest_of_three_accuracy(real: &[f64], fake: &[f64], foiled: &[f64]) -> Result<f64> {
    if real.len() != fake.len() || real.len() != foiled.len() {
        return Err(Error::invalid(format!(
            "triple lists differ in length: real {}, fake {}, foiled {}",
            real.len(),
            fake.len(),
            foiled.len()
        )));
    }
    if real.is_empty() {
        return Err(Error::invalid("no triples"));
    }
    let hits = real
        .iter()
        .zip(fake)
        .zip(foiled)
        .filter(|((&r, &f), &o)| o < r && o < f)
        .count();
    Ok(hits as f64 / real.len() as f64)
}

/// One scored item with its ordinal judgment.
#[derive(Clone, Debug, PartialEq)]
pub struct JudgmentRow {
    pub id: String,
    pub score: f64,
    pub judgment: f64,
}

/// How repeated judgments of the same item are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregation {
    /// Each judgment becomes its own row (`id#k`).
    PerJudgment,
    /// One row per item carrying the median judgment.
    Median,
}

impl Aggregation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "per-judgment" => Ok(Aggregation::PerJudgment),
            "median" => Ok(Aggregation::Median),
            other => Err(Error::invalid(format!("unknown aggregation '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JudgmentTable {
    rows: Vec<JudgmentRow>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl JudgmentTable {
    pub fn new(rows: Vec<JudgmentRow>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, r) in rows.iter().enumerate() {
            if !r.score.is_finite() || !r.judgment.is_finite() {
                return Err(Error::NonFinite {
                    rows: vec![i],
                    row: i,
                    col: if r.score.is_finite() { 2 } else { 1 },
                });
            }
            if let Some(prev) = seen.insert(r.id.as_str(), i) {
                return Err(Error::invalid(format!(
                    "duplicate item id '{}' (rows {prev} and {i})",
                    r.id
                )));
            }
        }
        Ok(JudgmentTable { rows })
    }

    /// Parses `id<TAB>score<TAB>judgment` lines. A first line whose numeric
    /// fields do not parse is taken as a header. Repeated ids must carry the
    /// same score; their judgments are combined per `aggregation`.
    pub fn parse_tsv(text: &str, aggregation: Aggregation) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut items: HashMap<String, (f64, Vec<f64>)> = HashMap::new();
        let mut first = true;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Format(format!(
                    "line {}: expected 3 tab-separated fields, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parsed = (fields[1].trim().parse::<f64>(), fields[2].trim().parse::<f64>());
            let (score, judgment) = match parsed {
                (Ok(s), Ok(j)) => (s, j),
                _ if first => {
                    first = false;
                    continue;
                }
                _ => {
                    return Err(Error::Format(format!(
                        "line {}: score and judgment must be numbers",
                        lineno + 1
                    )))
                }
            };
            first = false;
            let id = fields[0].trim().to_owned();
            match items.get_mut(&id) {
                Some((s, js)) => {
                    if *s != score {
                        return Err(Error::Format(format!(
                            "line {}: item '{id}' has conflicting scores {s} and {score}",
                            lineno + 1
                        )));
                    }
                    js.push(judgment);
                }
                None => {
                    order.push(id.clone());
                    items.insert(id, (score, vec![judgment]));
                }
            }
        }
        let mut rows = Vec::new();
        for id in order {
            let (score, mut js) = items.remove(&id).unwrap();
            match aggregation {
                Aggregation::Median => rows.push(JudgmentRow {
                    id,
                    score,
                    judgment: median(&mut js),
                }),
                Aggregation::PerJudgment if js.len() == 1 => rows.push(JudgmentRow {
                    id,
                    score,
                    judgment: js[0],
                }),
                Aggregation::PerJudgment => {
                    for (k, j) in js.into_iter().enumerate() {
                        rows.push(JudgmentRow {
                            id: format!("{id}#{k}"),
                            score,
                            judgment: j,
                        });
                    }
                }
            }
        }
        JudgmentTable::new(rows)
    }

    pub fn rows(&self) -> &[JudgmentRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.score).collect()
    }

    pub fn judgments(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.judgment).collect()
    }

    /// Copy of the table with scores replaced (same order).
    pub fn with_scores(&self, scores: &[f64]) -> Result<Self> {
        if scores.len() != self.rows.len() {
            return Err(Error::DimensionMismatch {
                what: "replacement scores",
                expected: self.rows.len(),
                actual: scores.len(),
            });
        }
        let rows = self
            .rows
            .iter()
            .zip(scores)
            .map(|(r, &s)| JudgmentRow {
                score: s,
                ..r.clone()
            })
            .collect();
        JudgmentTable::new(rows)
    }

    pub fn tau(&self, variant: TauVariant) -> Result<f64> {
        variant.compute(&self.scores(), &self.judgments())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn tau_b_examples() {
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap(), -1.0);
        // pairs of (1,2,2,3) vs (1,3,2,4): C=5, D=0, tied-in-a-only=1
        let v = kendall_tau_b(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(v, 5.0 / (5.0f64 * 6.0).sqrt(), epsilon = 1e-15);
        assert!(matches!(kendall_tau_b(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::ZeroDenominator)));
        assert!(kendall_tau_b(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau_b(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn tau_c_examples() {
        let n = 50;
        let a: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let rev: Vec<f64> = a.iter().rev().copied().collect();
        let same = kendall_tau_c(&a, &a).unwrap();
        // C = n(n-1)/2, m = n
        let expected = 2.0 * n as f64 * (n * (n - 1) / 2) as f64 / ((n * n) as f64 * (n - 1) as f64);
        assert_abs_diff_eq!(same, expected, epsilon = 1e-15);
        assert_eq!(kendall_tau_c(&a, &rev).unwrap(), -same);
        assert!(kendall_tau_c(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn tau_c_on_four_level_fixture() {
        let scores = [
            0.12, 0.5, 0.33, 0.9, 0.71, 0.05, 0.64, 0.28, 0.5, 0.83, 0.41, 0.19, 0.95, 0.6, 0.37,
            0.77, 0.02, 0.55, 0.68, 0.24,
        ];
        let levels = [1., 2., 2., 4., 3., 1., 3., 2., 2., 4., 3., 1., 4., 3., 2., 4., 1., 2., 3., 1.];
        // oracle: sign of the product of differences over all pairs
        let (mut c, mut d) = (0i64, 0i64);
        for i in 0..20 {
            for j in (i + 1)..20 {
                let s: f64 = (scores[i] - scores[j]) * (levels[i] - levels[j]);
                if s > 0.0 {
                    c += 1;
                } else if s < 0.0 {
                    d += 1;
                }
            }
        }
        let expected = 2.0 * 4.0 * (c - d) as f64 / (400.0 * 3.0);
        assert_eq!(kendall_tau_c(&scores, &levels).unwrap(), expected);
    }

    #[test]
    fn merge_path_counts_simple() {
        let a = [3.0, 1.0, 2.0, 2.0, 5.0, 1.0];
        let b = [1.0, 1.0, 4.0, 4.0, 0.0, 2.0];
        assert_eq!(pair_counts_merge(&a, &b), pair_counts_exhaustive(&a, &b));
    }

    #[test]
    fn accuracy_examples() {
        let win = vec![
            PairPreference { score_a: 2.0, score_b: 1.0, preferred: Preferred::A };
            4
        ];
        assert_eq!(pairwise_accuracy(&win, TieRule::Half).unwrap(), 1.0);
        let ties = vec![
            PairPreference { score_a: 1.0, score_b: 1.0, preferred: Preferred::B };
            6
        ];
        assert_eq!(pairwise_accuracy(&ties, TieRule::Half).unwrap(), 0.5);
        assert!(pairwise_accuracy(&[], TieRule::Half).is_err());

        // 10 rows: 6 correct, 2 wrong, 2 ties -> (6 + 1) / 10 under half credit
        let rows: Vec<PairPreference> = [
            (0.9, 0.1, Preferred::A),
            (0.2, 0.8, Preferred::B),
            (0.5, 0.4, Preferred::A),
            (0.3, 0.6, Preferred::B),
            (0.7, 0.2, Preferred::A),
            (0.1, 0.9, Preferred::B),
            (0.4, 0.5, Preferred::A),
            (0.8, 0.3, Preferred::B),
            (0.5, 0.5, Preferred::A),
            (0.6, 0.6, Preferred::B),
        ]
        .iter()
        .map(|&(a, b, p)| PairPreference { score_a: a, score_b: b, preferred: p })
        .collect();
        assert_abs_diff_eq!(pairwise_accuracy(&rows, TieRule::Half).unwrap(), 0.7, epsilon = 1e-15);
        let r1 = pairwise_accuracy(&rows, TieRule::Random { seed: 3 }).unwrap();
        assert_eq!(r1, pairwise_accuracy(&rows, TieRule::Random { seed: 3 }).unwrap());
        assert!([0.6, 0.7, 0.8].iter().any(|v| (v - r1).abs() < 1e-12));
    }

    #[test]
    fn foil_and_reasoning_accuracy() {
        assert_eq!(foil_accuracy(&[2.0, 3.0], &[1.0, 2.0], TieRule::Half).unwrap(), 1.0);
        assert_eq!(foil_accuracy(&[2.0, 3.0], &[2.0, 3.0], TieRule::Half).unwrap(), 0.5);
        assert!(foil_accuracy(&[1.0], &[1.0, 2.0], TieRule::Half).is_err());

        assert_eq!(lowest_of_three_accuracy(&[3.0, 2.0], &[2.0, 5.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(lowest_of_three_accuracy(&[3.0], &[1.0], &[1.0]).unwrap(), 0.0);
        assert!(lowest_of_three_accuracy(&[1.0], &[1.0], &[]).is_err());
    }

    #[test]
    fn random_triples_give_one_third() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 100_000;
        let mut draw = || (0..n).map(|_| rng.random::<f64>()).collect::<Vec<_>>();
        let (a, b, c) = (draw(), draw(), draw());
        let acc = lowest_of_three_accuracy(&a, &b, &c).unwrap();
        assert!((acc - 1.0 / 3.0).abs() < 0.02, "{acc}");
    }

    #[test]
    fn judgment_table_parsing() {
        let t = JudgmentTable::parse_tsv("id\tscore\tjudgment\na\t0.5\t3\nb\t0.1\t1\n", Aggregation::Median)
            .unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.rows()[0], JudgmentRow { id: "a".into(), score: 0.5, judgment: 3.0 });
        let t = JudgmentTable::parse_tsv("a\t0.5\t3\nb\t0.1\t1\n", Aggregation::Median).unwrap();
        assert_eq!(t.scores(), vec![0.5, 0.1]);
        assert!(JudgmentTable::parse_tsv("a\t0.5\n", Aggregation::Median).is_err());
        assert!(JudgmentTable::parse_tsv("a\t0.5\t1\nb\tx\t2\n", Aggregation::Median).is_err());

        let multi = "a\t0.5\t1\na\t0.5\t4\na\t0.5\t2\nb\t0.2\t3\n";
        let med = JudgmentTable::parse_tsv(multi, Aggregation::Median).unwrap();
        assert_eq!(med.judgments(), vec![2.0, 3.0]);
        let flat = JudgmentTable::parse_tsv(multi, Aggregation::PerJudgment).unwrap();
        assert_eq!(flat.len(), 4);
        assert_eq!(flat.rows()[1].id, "a#1");
        assert!(JudgmentTable::parse_tsv("a\t0.5\t1\na\t0.6\t2\n", Aggregation::Median).is_err());
        assert!(JudgmentTable::new(vec![
            JudgmentRow { id: "x".into(), score: 1.0, judgment: 1.0 },
            JudgmentRow { id: "x".into(), score: 2.0, judgment: 1.0 },
        ])
        .is_err());
    }

    fn tied_list() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0u8..6, 2..60).prop_map(|v| v.into_iter().map(f64::from).collect())
    }

    proptest! {
        #[test]
        fn merge_and_exhaustive_counts_agree(pairs in prop::collection::vec((0u8..8, 0u8..8), 0..300)) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let e = pair_counts_exhaustive(&a, &b);
            prop_assert_eq!(pair_counts_merge(&a, &b), e);
            prop_assert_eq!(e.concordant + e.discordant + e.ties_a + e.ties_b + e.ties_both, e.total_pairs());
        }

        #[test]
        fn tau_is_invariant_under_monotone_maps(a in tied_list(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<f64> = a.iter().map(|v| v + rng.random_range(-2.0..2.0f64).round()).collect();
            let fa: Vec<f64> = a.iter().map(|v| (v * 0.7).exp() - 3.0).collect();
            let fb: Vec<f64> = b.iter().map(|v| v.powi(3) + 2.0 * v).collect();
            match (kendall_tau_b(&a, &b), kendall_tau_b(&fa, &fb)) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
                (Err(_), Err(_)) => {}
                (x, y) => prop_assert!(false, "{:?} vs {:?}", x, y),
            }
            match (kendall_tau_c(&a, &b), kendall_tau_c(&fa, &fb)) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
                (Err(_), Err(_)) => {}
                (x, y) => prop_assert!(false, "{:?} vs {:?}", x, y),
            }
        }

        #[test]
        fn tau_stays_in_range(a in tied_list(), b in tied_list()) {
            let n = a.len().min(b.len());
            if let Ok(t) = kendall_tau_b(&a[..n], &b[..n]) {
                prop_assert!((-1.0..=1.0).contains(&t));
            }
        }
    }
}
