//! Synthetic scenes with known ground truth.
//!
//! Points are sampled uniformly in the unit square and cut into overlapping
//! rectangular tiles. Each tile's data is the truth plus a per-tile constant
//! and, optionally, a per-tile quadratic trend. Scoring compares a merged
//! result against the truth after removing the best global constant.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::delaunay_edges;
use crate::overlap::compute_overlaps;
use crate::point::{GlobalPointId, MergedDataset, Point, PointCloudPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruthModel {
    #[default]
    GaussianBumps,
    Polynomial,
    Plane,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArtifactModel {
    Constant,
    #[default]
    ConstantPlusSmooth,
}

/// Tile arrangement over the unit square.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TileLayout {
    /// `nx` by `ny` aligned tiles; four tiles meet at interior corners.
    Grid { nx: usize, ny: usize },
    /// Rows from bottom to top, each split into the given number of tiles.
    /// Rows with different counts give staggered seams, e.g. `[2, 3]` is a
    /// five-tile scene whose maximum overlap degree is three.
    Rows(Vec<usize>),
}

impl TileLayout {
    fn rows(&self) -> Vec<usize> {
        match self {
            TileLayout::Grid { nx, ny } => vec![*nx; *ny],
            TileLayout::Rows(r) => r.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub seed: u64,
    pub point_count: usize,
    pub layout: TileLayout,
    /// Width of the overlap between neighboring tiles as a fraction of the
    /// nominal tile size, in `(0, 0.5]`.
    pub overlap_fraction: f64,
    pub truth_model: TruthModel,
    pub artifact_model: ArtifactModel,
    pub artifact_scale: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            point_count: 60_000,
            layout: TileLayout::Grid { nx: 3, ny: 2 },
            overlap_fraction: 0.25,
            truth_model: TruthModel::GaussianBumps,
            artifact_model: ArtifactModel::ConstantPlusSmooth,
            artifact_scale: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }
}

/// Quadratic trend in tile-normalized coordinates `u, v` in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothArtifact {
    pub center: Point,
    pub half_width: f64,
    pub half_height: f64,
    /// Coefficients of `u, v, u^2, u v, v^2`.
    pub coeffs: [f64; 5],
}

impl SmoothArtifact {
    pub const ZERO: SmoothArtifact = SmoothArtifact {
        center: Point::new(0.0, 0.0),
        half_width: 1.0,
        half_height: 1.0,
        coeffs: [0.0; 5],
    };

    pub fn eval(&self, p: &Point) -> f64 {
        let u = (p.x - self.center.x) / self.half_width;
        let v = (p.y - self.center.y) / self.half_height;
        let c = &self.coeffs;
        c[0] * u + c[1] * v + c[2] * u * u + c[3] * u * v + c[4] * v * v
    }
}

/// Known answer for a synthetic scene.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneTruth {
    pub points: Vec<Point>,
    pub ground_truth: Vec<f64>,
    /// Bit `i` set when the point belongs to partition `i`.
    pub membership: Vec<u64>,
    pub tiles: Vec<Rect>,
    pub injected_offsets: Vec<f64>,
    pub injected_smooth: Vec<SmoothArtifact>,
}

impl SceneTruth {
    pub fn global_ids(&self) -> Vec<GlobalPointId> {
        self.points.iter().map(GlobalPointId::of).collect()
    }

    /// Largest membership count over all points.
    pub fn max_overlap_degree(&self) -> u32 {
        self.membership.iter().map(|m| m.count_ones()).max().unwrap_or(0)
    }
}

fn truth_field(model: TruthModel, rng: &mut ChaCha8Rng) -> Box<dyn Fn(&Point) -> f64> {
    match model {
        TruthModel::GaussianBumps => {
            let bumps: Vec<(f64, f64, f64, f64)> = (0..6)
                .map(|k| {
                    let cx = rng.random_range(0.1..0.9);
                    let cy = rng.random_range(0.1..0.9);
                    let sigma = rng.random_range(0.08..0.2);
                    let amp = if k == 0 { 100.0 } else { rng.random_range(-60.0..60.0) };
                    (cx, cy, sigma, amp)
                })
                .collect();
            Box::new(move |p| {
                bumps
                    .iter()
                    .map(|&(cx, cy, s, a)| {
                        let r2 = (p.x - cx).powi(2) + (p.y - cy).powi(2);
                        a * (-r2 / (2.0 * s * s)).exp()
                    })
                    .sum()
            })
        }
        TruthModel::Polynomial => {
            let c: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0) * 30.0).collect();
            Box::new(move |p| {
                let (x, y) = (p.x, p.y);
                c[0] + c[1] * x
                    + c[2] * y
                    + c[3] * x * x
                    + c[4] * x * y
                    + c[5] * y * y
                    + c[6] * x * x * x
                    + c[7] * x * x * y
                    + c[8] * x * y * y
                    + c[9] * y * y * y
            })
        }
        TruthModel::Plane => {
            let a = rng.random_range(-10.0..10.0);
            let b = rng.random_range(-50.0..50.0);
            let c = rng.random_range(-50.0..50.0);
            Box::new(move |p| a + b * p.x + c * p.y)
        }
    }
}

fn tiles_for(layout: &TileLayout, overlap: f64) -> Vec<Rect> {
    let rows = layout.rows();
    let nrows = rows.len();
    let h = 1.0 / nrows as f64;
    let mut tiles = Vec::new();
    for (r, &ncols) in rows.iter().enumerate() {
        let w = 1.0 / ncols as f64;
        let y0 = if r == 0 { 0.0 } else { r as f64 * h - 0.5 * overlap * h };
        let y1 = if r + 1 == nrows { 1.0 } else { (r + 1) as f64 * h + 0.5 * overlap * h };
        for c in 0..ncols {
            let x0 = if c == 0 { 0.0 } else { c as f64 * w - 0.5 * overlap * w };
            let x1 = if c + 1 == ncols { 1.0 } else { (c + 1) as f64 * w + 0.5 * overlap * w };
            tiles.push(Rect { x0, x1, y0, y1 });
        }
    }
    tiles
}

impl SceneConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let rows = self.layout.rows();
        if rows.is_empty() || rows.contains(&0) {
            return bad(format!("layout {:?} has an empty row", self.layout));
        }
        let m: usize = rows.iter().sum();
        if m > 64 {
            return bad(format!("{m} tiles, at most 64 supported"));
        }
        if m > 1 && !(self.overlap_fraction > 0.0 && self.overlap_fraction <= 0.5) {
            return bad(format!(
                "overlap fraction {} outside (0, 0.5]; tiles would not connect",
                self.overlap_fraction
            ));
        }
        if !(self.artifact_scale >= 0.0 && self.artifact_scale.is_finite()) {
            return bad(format!("artifact scale {} must be finite and >= 0", self.artifact_scale));
        }
        if self.point_count < 3 * m {
            return bad(format!("{} points is too few for {m} tiles", self.point_count));
        }
        Ok(())
    }
}

/// Builds the partitions and the truth they were derived from. Deterministic
/// in `config.seed`.
pub fn generate_scene(config: &SceneConfig) -> Result<(Vec<PointCloudPartition>, SceneTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let truth_fn = truth_field(config.truth_model, &mut rng);
    let tiles = tiles_for(&config.layout, config.overlap_fraction);
    let m = tiles.len();

    let scale = config.artifact_scale;
    let injected_offsets: Vec<f64> = (0..m)
        .map(|_| if scale > 0.0 { rng.random_range(-scale..=scale) } else { 0.0 })
        .collect();
    let injected_smooth: Vec<SmoothArtifact> = tiles
        .iter()
        .map(|t| match config.artifact_model {
            ArtifactModel::Constant => SmoothArtifact::ZERO,
            ArtifactModel::ConstantPlusSmooth => {
                let mut coeffs = [0.0; 5];
                for c in &mut coeffs {
                    *c = if scale > 0.0 { 0.4 * scale * rng.random_range(-1.0..1.0) } else { 0.0 };
                }
                SmoothArtifact {
                    center: t.center(),
                    half_width: 0.5 * (t.x1 - t.x0),
                    half_height: 0.5 * (t.y1 - t.y0),
                    coeffs,
                }
            }
        })
        .collect();

    let mut points = Vec::with_capacity(config.point_count);
    let mut seen = std::collections::HashSet::with_capacity(config.point_count);
    while points.len() < config.point_count {
        let p = Point::new(rng.random::<f64>(), rng.random::<f64>());
        if seen.insert(p.bits()) {
            points.push(p);
        }
    }
    let ground_truth: Vec<f64> = points.iter().map(&truth_fn).collect();
    let membership: Vec<u64> = points
        .iter()
        .map(|p| {
            tiles
                .iter()
                .enumerate()
                .filter(|(_, t)| t.contains(p))
                .fold(0u64, |acc, (i, _)| acc | (1 << i))
        })
        .collect();

    let mut partitions = Vec::with_capacity(m);
    for (i, tile) in tiles.iter().enumerate() {
        let mut pts = Vec::new();
        let mut vals = Vec::new();
        for (k, p) in points.iter().enumerate() {
            if membership[k] & (1 << i) != 0 {
                pts.push(*p);
                vals.push(ground_truth[k] + injected_offsets[i] + injected_smooth[i].eval(p));
            }
        }
        let part = PointCloudPartition::new(i, pts, vals).map_err(|e| {
            Error::InvalidConfig(format!("tile {i} {tile:?} is unusable: {e}"))
        })?;
        partitions.push(part);
    }
    if let Err(e) = compute_overlaps(&partitions) {
        return Err(Error::InvalidConfig(format!("generated tiling is not usable: {e}")));
    }

    Ok((
        partitions,
        SceneTruth {
            points,
            ground_truth,
            membership,
            tiles,
            injected_offsets,
            injected_smooth,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRecord {
    /// Constant removed before computing errors (`mean(merged - truth)`).
    pub gauge_constant: f64,
    pub rmse: f64,
    pub max_error: f64,
    /// Max `|merged(a) - merged(b)|` over Delaunay edges whose endpoints
    /// belong to different sets of tiles. Edges longer than
    /// [`SEAM_EDGE_FACTOR`] times the median edge length are skipped: they
    /// are hull slivers joining distant points, not neighbors.
    pub seam_max_jump: f64,
    /// Same statistic for the truth on the same edges.
    pub truth_seam_max_jump: f64,
    pub seam_edges: usize,
}

pub const SEAM_EDGE_FACTOR: f64 = 5.0;

/// Scores `merged` against the truth after removing the best global constant.
pub fn score(merged: &MergedDataset, truth: &SceneTruth) -> Result<ScoreRecord> {
    let truth_ids = truth.global_ids();
    if merged.len() != truth_ids.len() {
        return Err(Error::IdMismatch(format!(
            "merged has {} points, truth has {}",
            merged.len(),
            truth_ids.len()
        )));
    }
    let by_id: HashMap<GlobalPointId, f64> = merged.value_map();
    let mut values = Vec::with_capacity(truth_ids.len());
    for (k, id) in truth_ids.iter().enumerate() {
        match by_id.get(id) {
            Some(v) => values.push(*v),
            None => {
                let p = truth.points[k];
                return Err(Error::IdMismatch(format!(
                    "truth point ({}, {}) missing from merged data",
                    p.x, p.y
                )));
            }
        }
    }
    let n = values.len() as f64;
    let diffs: Vec<f64> = values.iter().zip(&truth.ground_truth).map(|(m, t)| m - t).collect();
    let gauge_constant = diffs.iter().sum::<f64>() / n;
    let (ss, max_error) = diffs.iter().fold((0.0, 0.0f64), |(ss, mx), d| {
        let e = d - gauge_constant;
        (ss + e * e, mx.max(e.abs()))
    });

    let edges = delaunay_edges(&truth.points)?;
    let length = |(a, b): (usize, usize)| truth.points[a].distance(&truth.points[b]);
    let mut lengths: Vec<f64> = edges.iter().map(length).collect();
    let mid = lengths.len() / 2;
    let max_len = SEAM_EDGE_FACTOR * *lengths.select_nth_unstable_by(mid, f64::total_cmp).1;
    let (mut seam_max_jump, mut truth_seam_max_jump, mut seam_edges) = (0.0f64, 0.0f64, 0usize);
    for (a, b) in edges.iter() {
        if truth.membership.get(a) != truth.membership.get(b) && length((a, b)) <= max_len {
            seam_edges += 1;
            seam_max_jump = seam_max_jump.max((values[a] - values[b]).abs());
            truth_seam_max_jump =
                truth_seam_max_jump.max((truth.ground_truth[a] - truth.ground_truth[b]).abs());
        }
    }
    Ok(ScoreRecord {
        gauge_constant,
        rmse: (ss / n).sqrt(),
        max_error,
        seam_max_jump,
        truth_seam_max_jump,
        seam_edges,
    })
}

/// Per-point average of the raw partitions, with no correction at all.
pub fn naive_average(partitions: &[PointCloudPartition]) -> MergedDataset {
    let mut order: Vec<GlobalPointId> = Vec::new();
    let mut acc: HashMap<GlobalPointId, (Point, f64, u32)> = HashMap::new();
    for part in partitions {
        for ((id, p), v) in part.global_ids().iter().zip(part.points()).zip(part.values()) {
            let e = acc.entry(*id).or_insert_with(|| {
                order.push(*id);
                (*p, 0.0, 0)
            });
            e.1 += v;
            e.2 += 1;
        }
    }
    let mut out = MergedDataset::default();
    for id in order {
        let (p, sum, count) = acc[&id];
        out.global_ids.push(id);
        out.points.push(p);
        out.values.push(sum / count as f64);
        out.overlap_degree.push(count);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(layout: TileLayout) -> SceneConfig {
        SceneConfig {
            point_count: 3000,
            layout,
            ..Default::default()
        }
    }

    #[test]
    fn zero_scale_reproduces_truth() {
        let cfg = SceneConfig {
            artifact_scale: 0.0,
            ..small(TileLayout::Grid { nx: 2, ny: 2 })
        };
        let (parts, truth) = generate_scene(&cfg).unwrap();
        let t: HashMap<_, _> = truth.global_ids().into_iter().zip(truth.ground_truth.clone()).collect();
        for p in &parts {
            for (id, v) in p.global_ids().iter().zip(p.values()) {
                assert_eq!(*v, t[id]);
            }
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let cfg = small(TileLayout::Rows(vec![2, 3]));
        let a = generate_scene(&cfg).unwrap();
        let b = generate_scene(&cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = generate_scene(&SceneConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn grid_three_by_two_has_degree_four_corners() {
        let (parts, truth) = generate_scene(&small(TileLayout::Grid { nx: 3, ny: 2 })).unwrap();
        assert_eq!(parts.len(), 6);
        assert_eq!(truth.max_overlap_degree(), 4);
        // degree-4 points sit where the corner overlap squares are
        for (p, m) in truth.points.iter().zip(&truth.membership) {
            if m.count_ones() == 4 {
                let near_x = [1.0 / 3.0, 2.0 / 3.0].iter().any(|c| (p.x - c).abs() <= 0.125 / 3.0 + 1e-12);
                assert!(near_x && (p.y - 0.5).abs() <= 0.0625 + 1e-12);
            }
        }
    }

    #[test]
    fn staggered_rows_cap_degree_at_three() {
        let (parts, truth) = generate_scene(&small(TileLayout::Rows(vec![2, 3]))).unwrap();
        assert_eq!(parts.len(), 5);
        assert_eq!(truth.max_overlap_degree(), 3);
    }

    #[test]
    fn data_is_truth_plus_artifacts() {
        let (parts, truth) = generate_scene(&small(TileLayout::Grid { nx: 2, ny: 1 })).unwrap();
        let idx: HashMap<_, _> = truth.global_ids().into_iter().enumerate().map(|(k, id)| (id, k)).collect();
        for (i, part) in parts.iter().enumerate() {
            for ((id, p), v) in part.global_ids().iter().zip(part.points()).zip(part.values()) {
                let k = idx[id];
                let expected = truth.ground_truth[k] + truth.injected_offsets[i] + truth.injected_smooth[i].eval(p);
                assert_eq!(*v, expected);
            }
        }
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            SceneConfig { overlap_fraction: 0.0, ..small(TileLayout::Grid { nx: 2, ny: 1 }) },
            SceneConfig { overlap_fraction: 0.6, ..small(TileLayout::Grid { nx: 2, ny: 1 }) },
            SceneConfig { artifact_scale: -1.0, ..small(TileLayout::Grid { nx: 2, ny: 1 }) },
            SceneConfig { point_count: 5, ..small(TileLayout::Grid { nx: 2, ny: 1 }) },
            small(TileLayout::Rows(vec![2, 0])),
        ] {
            assert!(matches!(generate_scene(&cfg), Err(Error::InvalidConfig(_))), "{cfg:?}");
        }
    }

    #[test]
    fn score_gauge_and_mismatch() {
        let (_, truth) = generate_scene(&small(TileLayout::Grid { nx: 2, ny: 1 })).unwrap();
        let exact = MergedDataset {
            global_ids: truth.global_ids(),
            points: truth.points.clone(),
            values: truth.ground_truth.clone(),
            overlap_degree: truth.membership.iter().map(|m| m.count_ones()).collect(),
        };
        let s = score(&exact, &truth).unwrap();
        assert_eq!(s.rmse, 0.0);
        assert_eq!(s.seam_max_jump, s.truth_seam_max_jump);
        assert!(s.seam_edges > 0);

        let shifted = MergedDataset {
            values: exact.values.iter().map(|v| v + 7.0).collect(),
            ..exact.clone()
        };
        let s = score(&shifted, &truth).unwrap();
        assert!(s.rmse < 1e-12 && (s.gauge_constant - 7.0).abs() < 1e-12);

        let mut short = exact.clone();
        short.global_ids.pop();
        short.points.pop();
        short.values.pop();
        assert!(matches!(score(&short, &truth), Err(Error::IdMismatch(_))));
    }
}
