//! The full merge: constant offsets, then harmonic corrections in
//! descending overlap degree, then a per-point average.
//!
//! Round `P` works on the values every partition had after round `P + 1`
//! (after the offsets for the first round). Each partition's values after
//! each round are stored in set-once slots, so a partition may run round `P`
//! as soon as it and its overlap neighbors have finished round `P + 1`
//! without changing the result. All execution modes therefore produce
//! identical output.

mod events;
mod report;

pub use events::{EventLog, EventSink, MergeEvent, NullSink, SolveRecord};
pub use report::{disagreement, Checkpoint, DisagreementStats, SeamReport, SeamSnapshot};

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::dirichlet::{solve_dirichlet, DirichletProblem, DEFAULT_TOLERANCE};
use crate::error::{Error, MergeError, Result, Stage, StageExt};
use crate::graph::{GraphLaplacian, GraphOptions, LaplacianCache, PartitionGraph};
use crate::offsets::{apply_offsets, pairwise_means, solve_offsets_weighted, OffsetSolution, PairWeighting};
use crate::overlap::{compute_overlaps, OverlapIndex};
use crate::point::{assign_global_ids, GlobalPointId, IdScheme, MembershipStats, MergedDataset, PointCloudPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    #[default]
    Sequential,
    /// Every stage and round is a barrier across partitions.
    ParallelBarrier,
    /// A partition starts round `P` once its overlap neighbors finished `P + 1`.
    ParallelRelaxed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeConfig {
    pub tolerance: f64,
    pub max_iterations: Option<usize>,
    pub pair_weighting: PairWeighting,
    pub mode: ExecutionMode,
    pub id_scheme: IdScheme,
    pub graph: GraphOptions,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: None,
            pair_weighting: PairWeighting::Unweighted,
            mode: ExecutionMode::Sequential,
            id_scheme: IdScheme::default(),
            graph: GraphOptions::default(),
        }
    }
}

impl MergeConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MergeOutput {
    pub merged: MergedDataset,
    pub report: SeamReport,
    /// Input partitions with all corrections applied.
    pub partitions: Vec<PointCloudPartition>,
    pub offsets: Option<OffsetSolution>,
    pub timings: Vec<(Stage, Duration)>,
}

impl MergeOutput {
    pub fn timing(&self, stage: Stage) -> Option<Duration> {
        self.timings.iter().find(|(s, _)| *s == stage).map(|(_, d)| *d)
    }
}

/// Merges with default diagnostics (no cache, no event sink).
pub fn merge(partitions: Vec<PointCloudPartition>, config: &MergeConfig) -> Result<MergeOutput, MergeError> {
    Merger::new(config.clone()).run(partitions)
}

/// Mean of each degree `>= degree` point's current value across all
/// partitions containing it.
pub fn consensus_at_degree(
    partitions: &[PointCloudPartition],
    index: &OverlapIndex,
    degree: u32,
) -> HashMap<GlobalPointId, f64> {
    index
        .shared_points()
        .filter(|(_, m)| m.len() as u32 >= degree)
        .map(|(id, m)| (id, member_mean(m, |p| partitions[p].values())))
        .collect()
}

fn member_mean<'a>(members: &[(usize, usize)], values: impl Fn(usize) -> &'a [f64]) -> f64 {
    let sum: f64 = members.iter().map(|&(p, l)| values(p)[l]).sum();
    sum / members.len() as f64
}

/// One correction round at degree `degree` applied to all partitions, reading
/// the values they hold on entry.
pub fn correction_round(
    partitions: &mut [PointCloudPartition],
    index: &OverlapIndex,
    degree: u32,
    laplacians: &[&GraphLaplacian],
    config: &MergeConfig,
) -> Result<Vec<SolveRecord>> {
    if degree < 2 {
        return Err(Error::InvalidConfig(format!("round degree must be >= 2, got {degree}")));
    }
    let current: Vec<&[f64]> = partitions.iter().map(|p| p.values()).collect();
    let results = (0..partitions.len())
        .map(|i| round_task(i, degree, index, laplacians[i], config, |p| current[p]))
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::new();
    for (part, result) in partitions.iter_mut().zip(results) {
        if let Some((values, record)) = result {
            part.values_mut().copy_from_slice(&values);
            records.push(record);
        }
    }
    Ok(records)
}

/// Corrected values for partition `i` at round `degree`, or `None` if it has
/// no point of that degree or higher.
fn round_task<'a>(
    i: usize,
    degree: u32,
    index: &OverlapIndex,
    laplacian: &GraphLaplacian,
    config: &MergeConfig,
    values_of: impl Fn(usize) -> &'a [f64],
) -> Result<Option<(Vec<f64>, SolveRecord)>> {
    let local_degree = index.local_degrees(i);
    let boundary: Vec<usize> = (0..local_degree.len())
        .filter(|&k| local_degree[k] >= degree)
        .collect();
    if boundary.is_empty() {
        return Ok(None);
    }
    let current = values_of(i);
    let bvals = boundary_corrections(index, i, &boundary, values_of, current)?;

    let (bmin, bmax) = min_max(&bvals);
    let (correction, solved, iterations, residual, interior_count) = if boundary.len() == current.len() {
        let mut c = vec![0.0; current.len()];
        for (&k, &b) in boundary.iter().zip(&bvals) {
            c[k] = b;
        }
        (c, false, 0, 0.0, 0)
    } else {
        let h = solve_dirichlet(&DirichletProblem {
            laplacian,
            boundary_indices: &boundary,
            boundary_values: &bvals,
            tolerance: config.tolerance,
            max_iterations: config.max_iterations,
        })?;
        (h.values, true, h.iterations_used, h.achieved_residual, h.interior_count)
    };
    let (cmin, cmax) = min_max(&correction);
    let values: Vec<f64> = current.iter().zip(&correction).map(|(v, c)| v + c).collect();
    Ok(Some((
        values,
        SolveRecord {
            partition: i,
            degree,
            boundary_count: boundary.len(),
            interior_count,
            solved,
            iterations,
            residual,
            boundary_min: bmin,
            boundary_max: bmax,
            correction_min: cmin,
            correction_max: cmax,
        },
    )))
}

/// Boundary correction values: consensus minus the partition's own value.
fn boundary_corrections<'a>(
    index: &OverlapIndex,
    i: usize,
    boundary: &[usize],
    values_of: impl Fn(usize) -> &'a [f64],
    current: &[f64],
) -> Result<Vec<f64>> {
    let ids = index.partition_ids(i);
    boundary
        .iter()
        .map(|&k| {
            let members = index.memberships(ids[k]).ok_or_else(|| {
                Error::InvalidProblem(format!("point {k} of partition {i} has no memberships"))
            })?;
            Ok(member_mean(members, &values_of) - current[k])
        })
        .collect()
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Merge driver with optional Laplacian cache and event sink.
pub struct Merger<'a> {
    config: MergeConfig,
    cache: Option<&'a LaplacianCache>,
    sink: &'a dyn EventSink,
}

impl<'a> Merger<'a> {
    pub fn new(config: MergeConfig) -> Self {
        Self {
            config,
            cache: None,
            sink: &NullSink,
        }
    }

    pub fn with_cache(mut self, cache: &'a LaplacianCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_events(mut self, sink: &'a dyn EventSink) -> Self {
        self.sink = sink;
        self
    }

    pub fn config(&self) -> &MergeConfig {
        &self.config
    }

    fn timed<T>(
        &self,
        stage: Stage,
        timings: &mut Vec<(Stage, Duration)>,
        f: impl FnOnce() -> Result<T>,
    ) -> Result<T, MergeError> {
        self.sink.emit(MergeEvent::StageStarted { stage });
        let start = Instant::now();
        let out = f().stage(stage)?;
        let elapsed = start.elapsed();
        timings.push((stage, elapsed));
        self.sink.emit(MergeEvent::StageFinished { stage, elapsed });
        Ok(out)
    }

    /// Runs the merge. Partitions are processed in a canonical order derived
    /// from their contents, so permuting the input permutes the per-partition
    /// outputs and leaves every value bit-identical.
    pub fn run(&self, partitions: Vec<PointCloudPartition>) -> Result<MergeOutput, MergeError> {
        let order = canonical_order(&partitions);
        let mut inputs: Vec<Option<PointCloudPartition>> = partitions.into_iter().map(Some).collect();
        let canonical = order.iter().map(|&k| inputs[k].take().unwrap()).collect();
        let sink = RemapSink {
            inner: self.sink,
            order: &order,
        };
        let inner = Merger {
            config: self.config.clone(),
            cache: self.cache,
            sink: &sink,
        };
        Ok(inner.run_canonical(canonical)?.restore_order(&order))
    }

    fn run_canonical(&self, partitions: Vec<PointCloudPartition>) -> Result<MergeOutput, MergeError> {
        let config = &self.config;
        config.validate().stage(Stage::AssignIds)?;
        let mut timings = Vec::new();
        if partitions.is_empty() {
            return Err(MergeError::new(
                Stage::AssignIds,
                Error::InvalidConfig("no partitions given".into()),
            ));
        }
        let mut partitions =
            self.timed(Stage::AssignIds, &mut timings, || assign_global_ids(partitions, &config.id_scheme))?;
        let m = partitions.len();

        let index = self.timed(Stage::Overlaps, &mut timings, || compute_overlaps(&partitions))?;
        let max_degree = index.max_degree();
        self.sink.emit(MergeEvent::OverlapsComputed {
            partitions: m,
            pairs: index.pair_maps().len(),
            max_degree,
            extra_memberships: MembershipStats::of(&partitions).extra_memberships(),
        });

        if m == 1 {
            let merged = finalize(&index, &[partitions[0].values()], &partitions);
            self.sink.emit(MergeEvent::Finished { points: merged.len() });
            return Ok(MergeOutput {
                merged,
                report: SeamReport::default(),
                partitions,
                offsets: None,
                timings,
            });
        }

        let parallel = config.mode != ExecutionMode::Sequential;
        let graphs: Vec<Arc<PartitionGraph>> = self.timed(Stage::Graphs, &mut timings, || {
            let build = |p: &PointCloudPartition| match self.cache {
                Some(c) => c.get_or_build(p.points(), &config.graph),
                None => PartitionGraph::build(p.points(), &config.graph).map(Arc::new),
            };
            if parallel {
                partitions.par_iter().map(build).collect()
            } else {
                partitions.iter().map(build).collect()
            }
        })?;

        let mut snapshots = vec![SeamSnapshot {
            checkpoint: Checkpoint::Input,
            by_degree: disagreement(&index, &value_refs(&partitions)),
        }];

        let pairs = self.timed(Stage::PairMeans, &mut timings, || Ok(pairwise_means(&partitions, &index)))?;
        let solution = self.timed(Stage::Offsets, &mut timings, || {
            solve_offsets_weighted(&pairs, m, config.pair_weighting)
        })?;
        self.sink.emit(MergeEvent::OffsetsSolved {
            offsets: solution.offsets.clone(),
            residual_norm: solution.residual_norm,
        });
        self.timed(Stage::ApplyOffsets, &mut timings, || {
            apply_offsets(&mut partitions, &solution);
            Ok(())
        })?;
        snapshots.push(SeamSnapshot {
            checkpoint: Checkpoint::AfterOffsets,
            by_degree: disagreement(&index, &value_refs(&partitions)),
        });

        let degrees: Vec<u32> = (2..=max_degree).rev().collect();
        let laplacians: Vec<&GraphLaplacian> = graphs.iter().map(|g| &g.laplacian).collect();
        let engine = RoundEngine {
            index: &index,
            laplacians: &laplacians,
            config,
            degrees: &degrees,
            slots: (0..m)
                .map(|i| {
                    let s: Vec<OnceLock<Arc<Vec<f64>>>> = (0..=degrees.len()).map(|_| OnceLock::new()).collect();
                    s[0].set(Arc::new(partitions[i].values().to_vec())).unwrap();
                    s
                })
                .collect(),
            records: Mutex::new(Vec::new()),
        };

        match config.mode {
            ExecutionMode::Sequential | ExecutionMode::ParallelBarrier => {
                for r in 1..=degrees.len() {
                    let degree = degrees[r - 1];
                    let stage = Stage::Correction { degree };
                    self.sink.emit(MergeEvent::RoundStarted { degree });
                    self.timed(stage, &mut timings, || {
                        if parallel {
                            (0..m).into_par_iter().try_for_each(|i| engine.run_task(i, r))
                        } else {
                            (0..m).try_for_each(|i| engine.run_task(i, r))
                        }
                    })?;
                    let (snap, event) = engine.round_summary(r);
                    for rec in engine.take_records(r) {
                        self.sink.emit(rec);
                    }
                    self.sink.emit(event);
                    snapshots.push(snap);
                }
            }
            ExecutionMode::ParallelRelaxed => {
                let stage = Stage::Correction {
                    degree: degrees.last().copied().unwrap_or(2),
                };
                self.timed(stage, &mut timings, || engine.run_relaxed())?;
                for r in 1..=degrees.len() {
                    self.sink.emit(MergeEvent::RoundStarted { degree: degrees[r - 1] });
                    let (snap, event) = engine.round_summary(r);
                    for rec in engine.take_records(r) {
                        self.sink.emit(rec);
                    }
                    self.sink.emit(event);
                    snapshots.push(snap);
                }
            }
        }

        let last = degrees.len();
        let finals: Vec<Arc<Vec<f64>>> = (0..m).map(|i| Arc::clone(engine.slot(i, last))).collect();
        for (part, v) in partitions.iter_mut().zip(&finals) {
            part.values_mut().copy_from_slice(v);
        }
        let merged = self.timed(Stage::Finalize, &mut timings, || {
            Ok(finalize(&index, &value_refs(&partitions), &partitions))
        })?;
        let report = SeamReport {
            snapshots,
            pair_residuals: pairwise_means(&partitions, &index),
        };
        self.sink.emit(MergeEvent::Finished { points: merged.len() });
        Ok(MergeOutput {
            merged,
            report,
            partitions,
            offsets: Some(solution),
            timings,
        })
    }
}

/// `order[c]` is the input position of the partition processed `c`-th.
fn canonical_order(partitions: &[PointCloudPartition]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..partitions.len()).collect();
    order.sort_by(|&a, &b| content_cmp(&partitions[a], &partitions[b]));
    order
}

// Ties only between partitions with identical points and values, which are
// interchangeable.
fn content_cmp(a: &PointCloudPartition, b: &PointCloudPartition) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        let points = a.points().iter().zip(b.points()).map(|(p, q)| p.bits().cmp(&q.bits()));
        let values = (a.values().iter().zip(b.values())).map(|(u, v)| u.to_bits().cmp(&v.to_bits()));
        points
            .chain(values)
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

/// Translates canonical partition positions in events back to input positions.
struct RemapSink<'a> {
    inner: &'a dyn EventSink,
    order: &'a [usize],
}

impl EventSink for RemapSink<'_> {
    fn emit(&self, event: MergeEvent) {
        let event = match event {
            MergeEvent::DirichletSolved(mut rec) => {
                rec.partition = self.order[rec.partition];
                MergeEvent::DirichletSolved(rec)
            }
            MergeEvent::PartitionSkipped { partition, degree } => MergeEvent::PartitionSkipped {
                partition: self.order[partition],
                degree,
            },
            MergeEvent::OffsetsSolved { offsets, residual_norm } => MergeEvent::OffsetsSolved {
                offsets: unpermute(&offsets, self.order),
                residual_norm,
            },
            other => other,
        };
        self.inner.emit(event);
    }
}

fn unpermute<T: Clone + Default>(canonical: &[T], order: &[usize]) -> Vec<T> {
    let mut out = vec![T::default(); canonical.len()];
    for (c, v) in canonical.iter().enumerate() {
        out[order[c]] = v.clone();
    }
    out
}

impl MergeOutput {
    fn restore_order(self, order: &[usize]) -> Self {
        let mut slots: Vec<Option<PointCloudPartition>> = vec![None; order.len()];
        for (c, p) in self.partitions.into_iter().enumerate() {
            slots[order[c]] = Some(p);
        }
        let partitions: Vec<PointCloudPartition> = slots.into_iter().map(Option::unwrap).collect();

        // first appearance in input order
        let pos: HashMap<GlobalPointId, usize> =
            self.merged.global_ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let mut merged = MergedDataset::default();
        let mut taken = vec![false; pos.len()];
        for part in &partitions {
            for id in part.global_ids() {
                let k = pos[id];
                if !std::mem::replace(&mut taken[k], true) {
                    merged.global_ids.push(*id);
                    merged.points.push(self.merged.points[k]);
                    merged.values.push(self.merged.values[k]);
                    merged.overlap_degree.push(self.merged.overlap_degree[k]);
                }
            }
        }

        let mut report = self.report;
        for p in &mut report.pair_residuals {
            let (a, b) = (order[p.i], order[p.j]);
            if a < b {
                (p.i, p.j) = (a, b);
            } else {
                (p.i, p.j, p.mean_diff) = (b, a, -p.mean_diff);
            }
        }
        report.pair_residuals.sort_by_key(|p| (p.i, p.j));

        let offsets = self.offsets.map(|o| OffsetSolution {
            offsets: unpermute(&o.offsets, order),
            ..o
        });
        MergeOutput {
            merged,
            report,
            partitions,
            offsets,
            timings: self.timings,
        }
    }
}

fn value_refs(partitions: &[PointCloudPartition]) -> Vec<&[f64]> {
    partitions.iter().map(|p| p.values()).collect()
}

/// Per-point average, points in order of first appearance.
fn finalize(index: &OverlapIndex, values: &[&[f64]], partitions: &[PointCloudPartition]) -> MergedDataset {
    let distinct = index.degrees().len();
    let mut out = MergedDataset {
        global_ids: Vec::with_capacity(distinct),
        points: Vec::with_capacity(distinct),
        values: Vec::with_capacity(distinct),
        overlap_degree: Vec::with_capacity(distinct),
    };
    for (pi, part) in partitions.iter().enumerate() {
        let degrees = index.local_degrees(pi);
        for (k, &id) in part.global_ids().iter().enumerate() {
            let value = if degrees[k] == 1 {
                values[pi][k]
            } else {
                let members = index.memberships(id).expect("shared point has memberships");
                if members[0].0 != pi {
                    continue;
                }
                member_mean(members, |p| values[p])
            };
            out.global_ids.push(id);
            out.points.push(part.points()[k]);
            out.values.push(value);
            out.overlap_degree.push(degrees[k]);
        }
    }
    out
}

struct RoundEngine<'a> {
    index: &'a OverlapIndex,
    laplacians: &'a [&'a GraphLaplacian],
    config: &'a MergeConfig,
    degrees: &'a [u32],
    /// `slots[i][r]`: values of partition `i` after round `r` (0 = offsets).
    slots: Vec<Vec<OnceLock<Arc<Vec<f64>>>>>,
    records: Mutex<Vec<(usize, MergeEvent)>>,
}

impl RoundEngine<'_> {
    fn slot(&self, i: usize, r: usize) -> &Arc<Vec<f64>> {
        self.slots[i][r].get().expect("round dependency not satisfied")
    }

    fn run_task(&self, i: usize, r: usize) -> Result<()> {
        let degree = self.degrees[r - 1];
        let result = round_task(i, degree, self.index, self.laplacians[i], self.config, |p| {
            self.slot(p, r - 1).as_slice()
        })?;
        let (values, event) = match result {
            Some((v, rec)) => (Arc::new(v), MergeEvent::DirichletSolved(rec)),
            None => (
                Arc::clone(self.slot(i, r - 1)),
                MergeEvent::PartitionSkipped { partition: i, degree },
            ),
        };
        self.slots[i][r]
            .set(values)
            .map_err(|_| Error::InvalidProblem(format!("round {r} of partition {i} ran twice")))?;
        self.records.lock().unwrap().push((r, event));
        Ok(())
    }

    fn take_records(&self, r: usize) -> Vec<MergeEvent> {
        let mut all = self.records.lock().unwrap();
        let (mut mine, rest): (Vec<_>, Vec<_>) = all.drain(..).partition(|(rr, _)| *rr == r);
        *all = rest;
        mine.sort_by_key(|(_, e)| match e {
            MergeEvent::DirichletSolved(rec) => rec.partition,
            MergeEvent::PartitionSkipped { partition, .. } => *partition,
            _ => usize::MAX,
        });
        mine.into_iter().map(|(_, e)| e).collect()
    }

    fn round_summary(&self, r: usize) -> (SeamSnapshot, MergeEvent) {
        let degree = self.degrees[r - 1];
        let values: Vec<&[f64]> = (0..self.slots.len()).map(|i| self.slot(i, r).as_slice()).collect();
        let snap = SeamSnapshot {
            checkpoint: Checkpoint::AfterRound(degree),
            by_degree: disagreement(self.index, &values),
        };
        let event = MergeEvent::RoundFinished {
            degree,
            max_disagreement: snap.max_at_or_above(degree),
            rms_disagreement: snap.rms(),
        };
        (snap, event)
    }

    /// Dependency-driven schedule: task `(i, r)` waits for `(j, r - 1)` for
    /// `j` in `{i} ∪ neighbors(i)`.
    fn run_relaxed(&self) -> Result<()> {
        let m = self.slots.len();
        let rounds = self.degrees.len();
        if rounds == 0 {
            return Ok(());
        }
        let pending: Vec<Vec<AtomicUsize>> = (0..m)
            .map(|i| {
                let deps = self.index.neighbors(i).len() + 1;
                (0..=rounds)
                    .map(|r| AtomicUsize::new(if r <= 1 { 0 } else { deps }))
                    .collect()
            })
            .collect();
        let failed = AtomicBool::new(false);
        let first_error: Mutex<Option<Error>> = Mutex::new(None);

        fn spawn<'s>(
            scope: &rayon::Scope<'s>,
            engine: &'s RoundEngine<'_>,
            pending: &'s [Vec<AtomicUsize>],
            failed: &'s AtomicBool,
            first_error: &'s Mutex<Option<Error>>,
            i: usize,
            r: usize,
        ) {
            scope.spawn(move |scope| {
                if failed.load(Ordering::Acquire) {
                    return;
                }
                if let Err(e) = engine.run_task(i, r) {
                    failed.store(true, Ordering::Release);
                    first_error.lock().unwrap().get_or_insert(e);
                    return;
                }
                if r == engine.degrees.len() {
                    return;
                }
                let ready = std::iter::once(i).chain(engine.index.neighbors(i).iter().copied());
                for d in ready {
                    if pending[d][r + 1].fetch_sub(1, Ordering::AcqRel) == 1 {
                        spawn(scope, engine, pending, failed, first_error, d, r + 1);
                    }
                }
            });
        }

        rayon::scope(|scope| {
            for i in 0..m {
                spawn(scope, self, &pending, &failed, &first_error, i, 1);
            }
        });
        match first_error.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}
