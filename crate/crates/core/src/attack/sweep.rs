use std::io::{Read, Write};

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{perturb, pipeline_gradient, AttackError, AttackKind, AttackSpec, Loss, Result, Target};
use crate::model::ModelStack;
use crate::pursuit::{classify, Classifier, Pipeline};

/// Local accuracy upticks tolerated by [`trend_violations`].
pub const TREND_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepItem {
    pub signal: Array1<f64>,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub kind: AttackKind,
    pub loss: Loss,
    /// Attack budgets; strictly increasing and non-negative.
    pub grid: Vec<f64>,
    /// Master seed, echoed into every row.
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl SweepOptions {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(AttackError::InvalidSpec("empty ε grid".into()));
        }
        for eps in &self.grid {
            AttackSpec { kind: self.kind, epsilon: *eps, loss: self.loss }.validate()?;
        }
        if let Some(pair) = self.grid.windows(2).find(|p| p[0] >= p[1]) {
            return Err(AttackError::InvalidSpec(format!(
                "ε grid must be strictly increasing, found {} then {}",
                pair[0], pair[1]
            )));
        }
        if self.jobs == Some(0) {
            return Err(AttackError::InvalidSpec("jobs must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub pipeline: String,
    pub eps: f64,
    pub norm_kind: String,
    pub n_signals: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub seed: u64,
}

/// Solver health of one pipeline over a sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepStats {
    pub pipeline: String,
    /// Clean-signal gradients taken through a capped solver.
    pub approximate_gradients: usize,
    /// Attacked evaluations whose solver hit its iteration cap.
    pub nonconverged_runs: usize,
    /// Signals whose margin gradient vanished, so no budget moved them.
    pub zero_gradients: usize,
}

struct Outcome {
    correct: Vec<bool>,
    approximate: bool,
    nonconverged: usize,
    zero_gradient: bool,
}

/// Accuracy of each pipeline on `items` under the attack at every budget of
/// the grid. The gradient does not depend on the budget, so it is taken once
/// per signal and pipeline at the clean signal; the perturbed signal is then
/// re-encoded at every budget. Results are independent of the thread count.
pub fn accuracy_sweep(
    items: &[SweepItem],
    stack: &ModelStack,
    pipelines: &[Pipeline],
    clf: &Classifier,
    options: &SweepOptions,
) -> Result<(Vec<SweepRow>, Vec<SweepStats>)> {
    options.validate()?;
    let run = || -> Result<Vec<Vec<Outcome>>> {
        pipelines
            .iter()
            .map(|p| items.par_iter().map(|item| attack_one(item, stack, p, clf, options)).collect())
            .collect()
    };
    let outcomes = match options.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| AttackError::InvalidSpec(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let mut rows = Vec::with_capacity(pipelines.len() * options.grid.len());
    let mut stats = Vec::with_capacity(pipelines.len());
    for (p, per_item) in pipelines.iter().zip(&outcomes) {
        let flat = per_item.iter().filter(|o| o.zero_gradient).count();
        if flat > 0 {
            log::warn!("{}: {flat} of {} signals have a zero gradient and were left unperturbed", p.name(), items.len());
        }
        for (e, &eps) in options.grid.iter().enumerate() {
            let n_correct = per_item.iter().filter(|o| o.correct[e]).count();
            rows.push(SweepRow {
                pipeline: p.name().to_string(),
                eps,
                norm_kind: options.kind.norm_kind().to_string(),
                n_signals: items.len(),
                n_correct,
                accuracy: n_correct as f64 / items.len().max(1) as f64,
                seed: options.seed,
            });
        }
        stats.push(SweepStats {
            pipeline: p.name().to_string(),
            approximate_gradients: per_item.iter().filter(|o| o.approximate).count(),
            nonconverged_runs: per_item.iter().map(|o| o.nonconverged).sum(),
            zero_gradients: per_item.iter().filter(|o| o.zero_gradient).count(),
        });
    }
    Ok((rows, stats))
}

fn attack_one(item: &SweepItem, stack: &ModelStack, p: &Pipeline, clf: &Classifier, options: &SweepOptions) -> Result<Outcome> {
    let gradient = pipeline_gradient(item.signal.view(), stack, p, clf, item.target, options.loss)?;
    if gradient.grad.iter().all(|&g| g == 0.0) {
        // every budget leaves the signal where it is
        let trace = p.run(item.signal.view(), stack)?;
        let hit = item.target.matches(&classify(&trace, clf)?);
        let nonconverged = if trace.converged() { 0 } else { options.grid.len() };
        return Ok(Outcome {
            correct: vec![hit; options.grid.len()],
            approximate: gradient.approximate,
            nonconverged,
            zero_gradient: true,
        });
    }
    let mut correct = Vec::with_capacity(options.grid.len());
    let mut nonconverged = 0;
    for &eps in &options.grid {
        let spec = AttackSpec { kind: options.kind, epsilon: eps, loss: options.loss };
        let attacked = perturb(item.signal.view(), gradient.grad.view(), &spec)?;
        let trace = p.run(attacked.view(), stack)?;
        if !trace.converged() {
            nonconverged += 1;
        }
        correct.push(item.target.matches(&classify(&trace, clf)?));
    }
    Ok(Outcome { correct, approximate: gradient.approximate, nonconverged, zero_gradient: false })
}

/// Writes rows with the header `pipeline,eps,norm_kind,n_signals,n_correct,accuracy,seed`.
pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for row in rows {
        writer.serialize(row)?;
    }
    if rows.is_empty() {
        writer.write_record(["pipeline", "eps", "norm_kind", "n_signals", "n_correct", "accuracy", "seed"])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_reader(r);
    reader.deserialize().map(|row| row.map_err(AttackError::from)).collect()
}

/// Indices `i` at which the 3-point moving average of `accuracy` rises from
/// window `i` to window `i + 1` by more than `tolerance`.
pub fn trend_violations(accuracy: &[f64], tolerance: f64) -> Vec<usize> {
    let averages: Vec<f64> = accuracy.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).collect();
    averages
        .windows(2)
        .enumerate()
        .filter(|(_, pair)| pair[1] > pair[0] + tolerance)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BinaryLabel, Dictionary, LinearClassifier};
    use crate::pursuit::{BpSchedule, SolverSettings, ThresholdSchedule};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn setup() -> (Vec<SweepItem>, ModelStack, Vec<Pipeline>, Classifier) {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = Dictionary::normalized(Array2::from_shape_simple_fn((20, 10), || rng.sample(StandardNormal))).unwrap();
        let w: Array1<f64> = Array1::from_shape_simple_fn(10, || rng.sample(StandardNormal));
        let clf = LinearClassifier::new(&w / w.dot(&w).sqrt(), 0.0).unwrap();
        let items = (0..30)
            .map(|_| {
                let code: Array1<f64> =
                    Array1::from_shape_fn(10, |j| if j % 4 == 0 { rng.random_range(1.0..2.0) } else { 0.0 });
                let label = BinaryLabel::from_score(clf.score(code.view()));
                SweepItem { signal: d.synthesis(code.view()), target: Target::Binary(label) }
            })
            .collect();
        let pipelines = vec![
            Pipeline::Thr { schedule: ThresholdSchedule::new(vec![0.3]).unwrap(), nonneg: false },
            Pipeline::Bp { schedule: BpSchedule::new(vec![0.1], SolverSettings::default()).unwrap() },
        ];
        (items, ModelStack::single(d), pipelines, clf.into())
    }

    fn options(jobs: Option<usize>) -> SweepOptions {
        SweepOptions { kind: AttackKind::GradAscentL2, loss: Loss::NegMargin, grid: vec![0.0, 0.1, 0.5, 1.0, 3.0], seed: 4, jobs }
    }

    #[test]
    fn rows_cover_grid_for_each_pipeline() {
        let (items, stack, pipelines, clf) = setup();
        let (rows, stats) = accuracy_sweep(&items, &stack, &pipelines, &clf, &options(None)).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[0].pipeline, "THR");
        assert_eq!(rows[5].pipeline, "BP");
        assert!(rows.iter().all(|r| r.n_signals == 30 && r.norm_kind == "l2" && r.seed == 4));
        assert_eq!(stats.len(), 2);
        // large budgets must hurt
        assert!(rows[4].accuracy < rows[0].accuracy);
    }

    #[test]
    fn zero_budget_row_is_clean_accuracy() {
        let (items, stack, pipelines, clf) = setup();
        let (rows, _) = accuracy_sweep(&items, &stack, &pipelines, &clf, &options(None)).unwrap();
        for (p, row) in pipelines.iter().zip([&rows[0], &rows[5]]) {
            let clean = items
                .iter()
                .filter(|it| it.target.matches(&classify(&p.run(it.signal.view(), &stack).unwrap(), &clf).unwrap()))
                .count();
            assert_eq!(row.n_correct, clean);
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let (items, stack, pipelines, clf) = setup();
        let a = accuracy_sweep(&items, &stack, &pipelines, &clf, &options(Some(1))).unwrap();
        let b = accuracy_sweep(&items, &stack, &pipelines, &clf, &options(Some(3))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_must_increase() {
        let (items, stack, pipelines, clf) = setup();
        let bad = SweepOptions { grid: vec![0.0, 0.2, 0.2], ..options(None) };
        assert!(matches!(accuracy_sweep(&items, &stack, &pipelines, &clf, &bad), Err(AttackError::InvalidSpec(_))));
    }

    #[test]
    fn csv_round_trip() {
        let (items, stack, pipelines, clf) = setup();
        let (rows, _) = accuracy_sweep(&items, &stack, &pipelines, &clf, &options(None)).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("pipeline,eps,norm_kind,n_signals,n_correct,accuracy,seed\n"));
        assert_eq!(read_sweep_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn trend_detection() {
        assert!(trend_violations(&[1.0, 1.0, 0.9, 0.8, 0.5, 0.2], TREND_TOLERANCE).is_empty());
        assert_eq!(trend_violations(&[1.0, 0.5, 0.5, 0.5, 1.0], TREND_TOLERANCE), vec![1]);
        // a 1pp bump is tolerated
        assert!(trend_violations(&[1.0, 0.9, 0.9, 0.93, 0.9], TREND_TOLERANCE).is_empty());
    }
}
