//! Holdout evaluation, rank sweeps, and rating-manipulation experiments.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::pipeline::{self, CompletionBlackbox, Mode, PipelineConfig};
use crate::ratings::{DenseMatrix, Entry, RatingsMatrix};

pub const DEFAULT_SPLIT_RATIO: f64 = 0.8;
pub const DEFAULT_TOP_N: usize = 10;

pub const SWEEP_CSV_HEADER: &str = "mode,k,rmse,mae,n_scored,n_unscorable";

/// Train matrix plus held-out cells.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: RatingsMatrix,
    pub test: Vec<Entry>,
    pub seed: u64,
    pub ratio: f64,
}

/// Bernoulli holdout: each observed entry goes to train with probability `ratio`.
pub fn split(m: &RatingsMatrix, ratio: f64, seed: u64) -> Result<SplitPair> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split ratio must lie strictly between 0 and 1, got {ratio}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(m.nnz());
    let mut test = Vec::new();
    for e in m.entries() {
        if rng.random::<f64>() < ratio {
            train.push(*e);
        } else {
            test.push(*e);
        }
    }
    let mut train = RatingsMatrix::build(m.n_rows(), m.n_cols(), train)?;
    if let Some((lo, hi)) = m.rating_range() {
        train = train.with_rating_range(lo, hi)?;
    }
    Ok(SplitPair {
        train,
        test,
        seed,
        ratio,
    })
}

pub fn rmse(pred: &DenseMatrix, test: &[Entry]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::NoScorableCells);
    }
    let sse: f64 = test
        .iter()
        .map(|e| (pred.get(e.row, e.col) - e.value).powi(2))
        .sum();
    Ok((sse / test.len() as f64).sqrt())
}

pub fn mae(pred: &DenseMatrix, test: &[Entry]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::NoScorableCells);
    }
    let sae: f64 = test
        .iter()
        .map(|e| (pred.get(e.row, e.col) - e.value).abs())
        .sum();
    Ok(sae / test.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    pub rmse: f64,
    pub mae: f64,
    pub n_scored: usize,
    pub n_unscorable: usize,
}

/// Scores test cells whose row and column both have training ratings.
pub fn score(pred: &DenseMatrix, train: &RatingsMatrix, test: &[Entry]) -> Result<Scores> {
    let scorable: Vec<Entry> = test
        .iter()
        .filter(|e| train.row_len(e.row) > 0 && train.col_len(e.col) > 0)
        .copied()
        .collect();
    Ok(Scores {
        rmse: rmse(pred, &scorable)?,
        mae: mae(pred, &scorable)?,
        n_scored: scorable.len(),
        n_unscorable: test.len() - scorable.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub k: usize,
    pub rmse: f64,
    pub mae: f64,
    pub n_scored: usize,
    pub n_unscorable: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Rmse,
    Mae,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArgMin {
    pub mode: Mode,
    pub metric: Metric,
    pub k: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    /// Ordered by mode (plain, sc, uc), then ascending k.
    pub reports: Vec<EvalReport>,
    pub argmin: Vec<ArgMin>,
}

impl SweepReport {
    fn new(mut reports: Vec<EvalReport>) -> Self {
        reports.sort_by_key(|r| (r.mode, r.k));
        let mut argmin = Vec::new();
        for mode in Mode::ALL {
            for metric in [Metric::Rmse, Metric::Mae] {
                let best = reports
                    .iter()
                    .filter(|r| r.mode == mode)
                    .map(|r| {
                        let v = match metric {
                            Metric::Rmse => r.rmse,
                            Metric::Mae => r.mae,
                        };
                        (r.k, v)
                    })
                    // first minimum wins, i.e. the smallest k among ties
                    .fold(None, |acc: Option<(usize, f64)>, (k, v)| match acc {
                        Some((_, bv)) if bv <= v => acc,
                        _ => Some((k, v)),
                    });
                if let Some((k, value)) = best {
                    argmin.push(ArgMin {
                        mode,
                        metric,
                        k,
                        value,
                    });
                }
            }
        }
        SweepReport { reports, argmin }
    }

    pub fn for_mode(&self, mode: Mode) -> impl Iterator<Item = &EvalReport> + '_ {
        self.reports.iter().filter(move |r| r.mode == mode)
    }

    pub fn get(&self, mode: Mode, k: usize) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.mode == mode && r.k == k)
    }

    pub fn argmin(&self, mode: Mode, metric: Metric) -> Option<&ArgMin> {
        self.argmin
            .iter()
            .find(|a| a.mode == mode && a.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.reports {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.mode, r.k, r.rmse, r.mae, r.n_scored, r.n_unscorable
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub ks: Vec<usize>,
    pub modes: Vec<Mode>,
    pub ratio: f64,
    /// Mode and k are overridden per cell; everything else is shared.
    pub template: PipelineConfig,
    pub execution: Execution,
}

impl SweepSpec {
    pub fn new(ks: Vec<usize>, modes: Vec<Mode>, template: PipelineConfig) -> Self {
        SweepSpec {
            ks,
            modes,
            ratio: DEFAULT_SPLIT_RATIO,
            template,
            execution: Execution::default(),
        }
    }
}

/// Splits once with the template's seed, then evaluates every (mode, k).
pub fn sweep<B: CompletionBlackbox + ?Sized>(m: &RatingsMatrix, spec: &SweepSpec, bb: &B) -> Result<SweepReport> {
    let pair = split(m, spec.ratio, spec.template.seed)?;
    sweep_split(&pair, spec, bb)
}

pub fn sweep_split<B: CompletionBlackbox + ?Sized>(
    pair: &SplitPair,
    spec: &SweepSpec,
    bb: &B,
) -> Result<SweepReport> {
    if spec.ks.is_empty() || spec.modes.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one k and one mode".into()));
    }
    let mut modes = spec.modes.clone();
    modes.sort();
    modes.dedup();
    let mut ks = spec.ks.clone();
    ks.sort_unstable();
    ks.dedup();

    let prepared = par::map(spec.execution, &modes, |&mode| {
        pipeline::prepare(&pair.train, &spec.template.clone().with_mode(mode))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let cells: Vec<(usize, usize)> = (0..modes.len())
        .flat_map(|mi| ks.iter().map(move |&k| (mi, k)))
        .collect();
    let reports = par::map(spec.execution, &cells, |&(mi, k)| {
        let pred = pipeline::finish(&prepared[mi], &pair.train, k, spec.template.clamp, bb)?;
        let s = score(&pred, &pair.train, &pair.test)?;
        Ok(EvalReport {
            mode: modes[mi],
            k,
            rmse: s.rmse,
            mae: s.mae,
            n_scored: s.n_scored,
            n_unscorable: s.n_unscorable,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport::new(reports))
}

/// Monotone transform one user applies to all of their ratings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "amount", rename_all = "lowercase")]
pub enum AttackTransform {
    Scale(f64),
    Shift(f64),
}

impl AttackTransform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            AttackTransform::Scale(a) => a * x,
            AttackTransform::Shift(d) => x + d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub attacked_user: usize,
    pub transform: AttackTransform,
    pub mode: Mode,
    pub k: usize,
    /// Largest prediction change over all cells of other users.
    pub max_abs_delta_others: f64,
    /// Largest prediction change in the attacked user's own row.
    pub max_abs_delta_attacked: f64,
    pub top_n: usize,
    /// Other users whose top-N recommendation list changed.
    pub topn_changes: usize,
}

/// Items the user has not rated, ranked by prediction (ties by item index).
pub fn top_n(pred: &DenseMatrix, rated: &RatingsMatrix, user: usize, n: usize) -> Vec<usize> {
    let mut items: Vec<usize> = (0..rated.n_cols())
        .filter(|&j| !rated.is_observed(user, j))
        .collect();
    items.sort_by(|&a, &b| {
        pred.get(user, b)
            .total_cmp(&pred.get(user, a))
            .then(a.cmp(&b))
    });
    items.truncate(n);
    items
}

pub fn attack<B: CompletionBlackbox + ?Sized>(
    m: &RatingsMatrix,
    user: usize,
    transform: AttackTransform,
    cfg: &PipelineConfig,
    bb: &B,
    n: usize,
) -> Result<AttackReport> {
    if user >= m.n_rows() {
        return Err(Error::IndexOutOfRange {
            row: user,
            col: 0,
            n_rows: m.n_rows(),
            n_cols: m.n_cols(),
        });
    }
    if cfg.clamp.is_some() {
        return Err(Error::InvalidConfig("attack runs require clamping to be disabled".into()));
    }
    match transform {
        AttackTransform::Scale(a) if !(a > 0.0 && a.is_finite()) => {
            return Err(Error::InvalidConfig(format!("scale factor must be positive, got {a}")));
        }
        AttackTransform::Shift(d) if !d.is_finite() => {
            return Err(Error::InvalidConfig(format!("shift must be finite, got {d}")));
        }
        _ => {}
    }

    let attacked = m.map_entries(|i, _, x| if i == user { transform.apply(x) } else { x })?;
    let before = pipeline::complete(m, cfg, bb)?.full;
    let after = pipeline::complete(&attacked, cfg, bb)?.full;

    let mut max_others = 0.0f64;
    let mut max_self = 0.0f64;
    let mut changed = 0;
    for i in 0..m.n_rows() {
        let delta = (0..m.n_cols())
            .map(|j| (before.get(i, j) - after.get(i, j)).abs())
            .fold(0.0, f64::max);
        if i == user {
            max_self = delta;
            continue;
        }
        max_others = max_others.max(delta);
        if top_n(&before, m, i, n) != top_n(&after, m, i, n) {
            changed += 1;
        }
    }
    Ok(AttackReport {
        attacked_user: user,
        transform,
        mode: cfg.mode,
        k: cfg.k,
        max_abs_delta_others: max_others,
        max_abs_delta_attacked: max_self,
        top_n: n,
        topn_changes: changed,
    })
}

/// The `n_users` most active users and `n_items` most rated items (ties by
/// index), in original index order.
pub fn most_active(m: &RatingsMatrix, n_users: usize, n_items: usize) -> Result<(RatingsMatrix, Vec<usize>, Vec<usize>)> {
    let pick = |n: usize, len: &dyn Fn(usize) -> usize, take: usize| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| len(b).cmp(&len(a)).then(a.cmp(&b)));
        idx.truncate(take);
        idx.sort_unstable();
        idx
    };
    let rows = pick(m.n_rows(), &|i| m.row_len(i), n_users);
    let cols = pick(m.n_cols(), &|j| m.col_len(j), n_items);
    let sub = m.submatrix(&rows, &cols)?;
    Ok((sub, rows, cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::SvdBlackbox;

    fn synthetic(n_rows: usize, n_cols: usize, seed: u64) -> RatingsMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let user: Vec<f64> = (0..n_rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        let item: Vec<f64> = (0..n_cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut t = Vec::new();
        for i in 0..n_rows {
            for j in 0..n_cols {
                if j == i % n_cols || rng.random::<f64>() < 0.5 {
                    let r = 3.0 + user[i] + item[j] + 0.8 * user[i] * item[j] + rng.random_range(-0.5..0.5);
                    t.push((i, j, r.round().clamp(1.0, 5.0)));
                }
            }
        }
        RatingsMatrix::build(n_rows, n_cols, t).unwrap().with_rating_range(1.0, 5.0).unwrap()
    }

    #[test]
    fn metric_arithmetic() {
        let pred = DenseMatrix::from_rows(1, 3, &[2.0, 2.0, 2.0]);
        let exact = [Entry::new(0, 0, 2.0), Entry::new(0, 1, 2.0)];
        assert_eq!(rmse(&pred, &exact).unwrap(), 0.0);
        assert_eq!(mae(&pred, &exact).unwrap(), 0.0);

        let off_by_one = [Entry::new(0, 0, 1.0), Entry::new(0, 2, 1.0)];
        assert_eq!(rmse(&pred, &off_by_one).unwrap(), 1.0);
        assert_eq!(mae(&pred, &off_by_one).unwrap(), 1.0);

        // errors +1, -1, +3
        let mixed = [Entry::new(0, 0, 1.0), Entry::new(0, 1, 3.0), Entry::new(0, 2, -1.0)];
        assert!((mae(&pred, &mixed).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert!((rmse(&pred, &mixed).unwrap() - (11.0f64 / 3.0).sqrt()).abs() < 1e-15);

        assert!(matches!(rmse(&pred, &[]), Err(Error::NoScorableCells)));
    }

    #[test]
    fn unscorable_cells_are_counted() {
        let train = RatingsMatrix::build(3, 3, [(0, 0, 1.0), (1, 1, 2.0)]).unwrap();
        let pred = DenseMatrix::from_fn(3, 3, |_, _| 1.0);
        let test = [Entry::new(0, 1, 2.0), Entry::new(2, 0, 1.0), Entry::new(0, 2, 5.0)];
        let s = score(&pred, &train, &test).unwrap();
        assert_eq!(s.n_scored, 1);
        assert_eq!(s.n_unscorable, 2);
        assert_eq!(s.rmse, 1.0);
        assert!(matches!(
            score(&pred, &train, &test[1..]),
            Err(Error::NoScorableCells)
        ));
    }

    #[test]
    fn split_partitions_and_is_deterministic() {
        let m = synthetic(40, 30, 1);
        let a = split(&m, 0.8, 9).unwrap();
        let b = split(&m, 0.8, 9).unwrap();
        assert_eq!(a.test, b.test);
        assert_eq!(a.train.entries(), b.train.entries());
        assert_eq!(a.train.nnz() + a.test.len(), m.nnz());
        for e in &a.test {
            assert!(!a.train.is_observed(e.row, e.col));
            assert_eq!(m.get(e.row, e.col), Some(e.value));
        }
        assert_eq!(a.train.rating_range(), Some((1.0, 5.0)));
        assert!(split(&m, 1.0, 0).is_err());
        assert!(split(&m, 0.0, 0).is_err());
    }

    #[test]
    fn split_ratio_concentrates() {
        let t: Vec<_> = (0..100_000usize).map(|x| (x / 400, x % 400, 1.0)).collect();
        let m = RatingsMatrix::build(250, 400, t).unwrap();
        let s = split(&m, 0.8, 2024).unwrap();
        assert!((s.train.nnz() as i64 - 80_000).abs() < 500, "{}", s.train.nnz());
    }

    #[test]
    fn sweep_orders_rows_and_writes_csv() {
        let m = synthetic(40, 30, 2);
        let template = PipelineConfig::default().with_seed(5).with_clamp(Some((1.0, 5.0)));
        let mut spec = SweepSpec::new(vec![4, 2, 3], vec![Mode::Uc, Mode::Plain, Mode::Sc], template.clone());
        let bb = SvdBlackbox::from_config(&template);
        let report = sweep(&m, &spec, &bb).unwrap();
        let keys: Vec<_> = report.reports.iter().map(|r| (r.mode, r.k)).collect();
        assert_eq!(keys.len(), 9);
        assert_eq!(keys[0], (Mode::Plain, 2));
        assert_eq!(keys[8], (Mode::Uc, 4));
        let csv = report.to_csv();
        assert!(csv.starts_with("mode,k,rmse,mae,n_scored,n_unscorable\nplain,2,"));
        assert_eq!(csv.lines().count(), 10);
        assert_eq!(report.argmin.len(), 6);

        spec.execution = Execution::Sequential;
        let seq = sweep(&m, &spec, &bb).unwrap();
        assert_eq!(seq, report);
    }

    #[test]
    fn sweep_rejects_empty_ks() {
        let m = synthetic(10, 10, 0);
        let spec = SweepSpec::new(vec![], vec![Mode::Sc], PipelineConfig::default());
        assert!(sweep(&m, &spec, &SvdBlackbox::from_config(&spec.template)).is_err());
    }

    #[test]
    fn identity_attacks_change_nothing() {
        let m = synthetic(30, 30, 3);
        for mode in Mode::ALL {
            let cfg = PipelineConfig::default().with_mode(mode).with_k(3).with_seed(1);
            let bb = SvdBlackbox::from_config(&cfg);
            for t in [AttackTransform::Scale(1.0), AttackTransform::Shift(0.0)] {
                let r = attack(&m, 4, t, &cfg, &bb, DEFAULT_TOP_N).unwrap();
                assert_eq!(r.max_abs_delta_others, 0.0);
                assert_eq!(r.topn_changes, 0);
            }
        }
    }

    #[test]
    fn uc_scale_attack_is_contained() {
        let m = synthetic(30, 30, 3);
        let cfg = PipelineConfig::default().with_mode(Mode::Uc).with_k(3).with_seed(1);
        let bb = SvdBlackbox::from_config(&cfg);
        for a in [0.5, 2.0, 10.0] {
            let r = attack(&m, 7, AttackTransform::Scale(a), &cfg, &bb, DEFAULT_TOP_N).unwrap();
            assert!(r.max_abs_delta_others <= 1e-6, "{a}: {}", r.max_abs_delta_others);
            assert_eq!(r.topn_changes, 0);
        }
    }

    #[test]
    fn sc_shift_attack_is_contained() {
        let m = synthetic(30, 30, 3);
        let cfg = PipelineConfig::default().with_mode(Mode::Sc).with_k(3).with_seed(1);
        let bb = SvdBlackbox::from_config(&cfg);
        for d in [-2.0, 1.0, 3.0] {
            let r = attack(&m, 7, AttackTransform::Shift(d), &cfg, &bb, DEFAULT_TOP_N).unwrap();
            assert!(r.max_abs_delta_others <= 1e-6);
        }
    }

    #[test]
    fn plain_scale_attack_leaks() {
        let m = synthetic(30, 30, 3);
        let cfg = PipelineConfig::default().with_mode(Mode::Plain).with_k(3).with_seed(1);
        let bb = SvdBlackbox::from_config(&cfg);
        let r = attack(&m, 7, AttackTransform::Scale(2.0), &cfg, &bb, DEFAULT_TOP_N).unwrap();
        assert!(r.max_abs_delta_others > 0.01, "{}", r.max_abs_delta_others);
    }

    #[test]
    fn attack_preconditions() {
        let m = synthetic(10, 10, 0);
        let cfg = PipelineConfig::default().with_mode(Mode::Uc).with_k(2);
        let bb = SvdBlackbox::from_config(&cfg);
        assert!(attack(&m, 10, AttackTransform::Scale(2.0), &cfg, &bb, 5).is_err());
        assert!(attack(&m, 0, AttackTransform::Scale(0.0), &cfg, &bb, 5).is_err());
        let clamped = cfg.clone().with_clamp(Some((1.0, 5.0)));
        assert!(attack(&m, 0, AttackTransform::Scale(2.0), &clamped, &bb, 5).is_err());
    }

    #[test]
    fn top_n_skips_rated_and_breaks_ties_by_index() {
        let rated = RatingsMatrix::build(1, 5, [(0, 1, 3.0)]).unwrap();
        let pred = DenseMatrix::from_rows(1, 5, &[2.0, 9.0, 4.0, 2.0, 4.0]);
        assert_eq!(top_n(&pred, &rated, 0, 3), vec![2, 4, 0]);
    }

    #[test]
    fn most_active_picks_dense_corner() {
        let m = RatingsMatrix::build(3, 3, [(0, 0, 1.), (1, 0, 1.), (1, 1, 1.), (2, 2, 1.), (1, 2, 1.)]).unwrap();
        let (sub, rows, cols) = most_active(&m, 2, 2).unwrap();
        assert_eq!(rows, vec![0, 1]);
        assert_eq!(cols, vec![0, 2]);
        assert_eq!(sub.nnz(), 3);
    }

    #[test]
    fn attack_report_json_shape() {
        let t = serde_json::to_value(AttackTransform::Scale(2.0)).unwrap();
        assert_eq!(t, serde_json::json!({"kind": "scale", "amount": 2.0}));
    }
}
