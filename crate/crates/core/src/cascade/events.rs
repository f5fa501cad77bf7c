use std::sync::Mutex;
use std::time::Duration;

use crate::error::Stage;

/// Diagnostics for one partition in one correction round.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveRecord {
    pub partition: usize,
    pub degree: u32,
    pub boundary_count: usize,
    pub interior_count: usize,
    /// `false` when every point was on the boundary and the consensus was
    /// adopted directly.
    pub solved: bool,
    pub iterations: usize,
    pub residual: f64,
    pub boundary_min: f64,
    pub boundary_max: f64,
    pub correction_min: f64,
    pub correction_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MergeEvent {
    StageStarted {
        stage: Stage,
    },
    StageFinished {
        stage: Stage,
        elapsed: Duration,
    },
    OverlapsComputed {
        partitions: usize,
        pairs: usize,
        max_degree: u32,
        extra_memberships: usize,
    },
    OffsetsSolved {
        offsets: Vec<f64>,
        residual_norm: f64,
    },
    RoundStarted {
        degree: u32,
    },
    DirichletSolved(SolveRecord),
    /// Partition had no point of degree >= `degree`.
    PartitionSkipped {
        partition: usize,
        degree: u32,
    },
    RoundFinished {
        degree: u32,
        max_disagreement: f64,
        rms_disagreement: f64,
    },
    Finished {
        points: usize,
    },
}

/// Receives [`MergeEvent`]s. May be called from worker threads.
pub trait EventSink: Sync {
    fn emit(&self, event: MergeEvent);
}

impl<F: Fn(MergeEvent) + Sync> EventSink for F {
    fn emit(&self, event: MergeEvent) {
        self(event)
    }
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&self, _: MergeEvent) {}
}

/// Collects events in emission order.
#[derive(Debug, Default)]
pub struct EventLog {
    events: Mutex<Vec<MergeEvent>>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> Vec<MergeEvent> {
        self.events.lock().unwrap().clone()
    }

    /// Degrees of the correction rounds, in execution order.
    pub fn rounds(&self) -> Vec<u32> {
        self.events
            .lock()
            .unwrap()
            .iter()
            .filter_map(|e| match e {
                MergeEvent::RoundStarted { degree } => Some(*degree),
                _ => None,
            })
            .collect()
    }

    pub fn solves(&self) -> Vec<SolveRecord> {
        self.events
            .lock()
            .unwrap()
            .iter()
            .filter_map(|e| match e {
                MergeEvent::DirichletSolved(r) => Some(r.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn stage_time(&self, stage: Stage) -> Option<Duration> {
        self.events.lock().unwrap().iter().find_map(|e| match e {
            MergeEvent::StageFinished { stage: s, elapsed } if *s == stage => Some(*elapsed),
            _ => None,
        })
    }
}

impl EventSink for EventLog {
    fn emit(&self, event: MergeEvent) {
        self.events.lock().unwrap().push(event);
    }
}
