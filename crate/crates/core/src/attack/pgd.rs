use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ranking::Candidate;
use super::search::{evaluate_config, SearchTrace, TraceEntry};
use super::{AttackError, ObjectiveSpec};
use crate::interference::{AttackConfig, PatchSpec};
use crate::oracle::MapOracle;
use crate::raster::Image;
use crate::scene::{SceneFrame, ASPHALT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PgdParams {
    pub cell_rows: u32,
    pub cell_cols: u32,
    /// Initial per-iteration update magnitude in pattern units.
    pub step_size: f64,
    /// Oracle queries per position, the initial evaluation included.
    pub iters_per_position: usize,
    /// Smallest step backtracking may shrink to.
    pub fd_epsilon: f64,
    pub backtracking: bool,
    /// Start from uniform noise instead of the road-surface color.
    pub random_init: bool,
    /// Pattern pixels per cell side.
    pub cell_px: u32,
    pub patch_width: f64,
    pub patch_height: f64,
    pub patch_alpha: f64,
    pub seed: u64,
}

impl Default for PgdParams {
    fn default() -> Self {
        Self {
            cell_rows: 16,
            cell_cols: 16,
            step_size: 0.1,
            iters_per_position: 10,
            fd_epsilon: 0.0125,
            backtracking: true,
            random_init: false,
            cell_px: 4,
            patch_width: 3.0,
            patch_height: 2.0,
            patch_alpha: 0.0,
            seed: 0,
        }
    }
}

impl PgdParams {
    pub fn validate(&self) -> Result<(), AttackError> {
        if self.cell_rows == 0 || self.cell_cols == 0 || self.cell_px == 0 {
            return Err(AttackError::Config("cell grid must be non-empty".into()));
        }
        if !(self.step_size > 0.0 && self.fd_epsilon > 0.0) {
            return Err(AttackError::Config(
                "step_size and fd_epsilon must be positive".into(),
            ));
        }
        if self.iters_per_position == 0 {
            return Err(AttackError::Config(
                "iters_per_position must be at least 1".into(),
            ));
        }
        if !(self.patch_width > 0.0 && self.patch_height > 0.0) {
            return Err(AttackError::Config("patch size must be positive".into()));
        }
        Ok(())
    }

    fn n_cells(&self) -> usize {
        (self.cell_rows * self.cell_cols) as usize
    }
}

/// Nearest-neighbor upsampling of `rows x cols` RGB cells.
pub fn cells_to_pattern(cells: &[f64], rows: u32, cols: u32, px: u32) -> Image {
    let mut img = Image::filled(cols * px, rows * px, [0.0; 3]);
    for y in 0..rows * px {
        for x in 0..cols * px {
            let c = ((y / px) * cols + x / px) as usize * 3;
            img.set(
                x,
                y,
                [cells[c] as f32, cells[c + 1] as f32, cells[c + 2] as f32],
            );
        }
    }
    img
}

/// Mean Euclidean RGB distance of the cells to the renderer's road color.
pub fn road_color_distance(cells: &[f64]) -> f64 {
    let n = cells.len() / 3;
    cells
        .chunks_exact(3)
        .map(|c| {
            (0..3)
                .map(|k| (c[k] - ASPHALT[k] as f64).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / n as f64
}

fn init_cells(pgd: &PgdParams, seed: u64) -> Vec<f64> {
    let n = pgd.n_cells() * 3;
    if pgd.random_init {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect()
    } else {
        (0..n).map(|i| ASPHALT[i % 3] as f64).collect()
    }
}

/// Sign-estimate schedule: coordinates are split into 1, 2, 4, ... blocks,
/// cycling through the blocks of each level before refining.
fn block(j: usize, dim: usize) -> std::ops::Range<usize> {
    let mut level = 0u32;
    let mut j = j;
    loop {
        let blocks = 1usize << level;
        if blocks >= dim || j < blocks {
            let blocks = blocks.min(dim);
            let j = j % blocks;
            let size = dim.div_ceil(blocks);
            return (j * size).min(dim)..((j + 1) * size).min(dim);
        }
        j -= blocks;
        level += 1;
    }
}

/// Result of one position's PGD run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgdRun {
    pub position: [f64; 3],
    pub initial_cells: Vec<f64>,
    pub best_cells: Vec<f64>,
    pub best_loss: f64,
}

/// Coarse zero-order projected descent on the patch cells at one position.
///
/// Every iteration costs exactly one oracle query. The first evaluates the
/// initialization; each later one tries `x - eta * s`, where `s` is the
/// current gradient-sign estimate with one block of coordinates flipped. A
/// step that does not increase the loss is accepted along with its sign
/// block. With backtracking a rejected step halves `eta` (floored at
/// `fd_epsilon`); without it every step is accepted.
pub fn pgd_at_position(
    oracle: &mut dyn MapOracle,
    frame: &SceneFrame,
    spec: &ObjectiveSpec,
    position: [f64; 3],
    pgd: &PgdParams,
    seed: u64,
    trace: &mut Vec<TraceEntry>,
    query_base: u64,
) -> Result<PgdRun, AttackError> {
    let make = |cells: &[f64]| {
        AttackConfig::patch(PatchSpec::new(
            position,
            pgd.patch_width,
            pgd.patch_height,
            pgd.patch_alpha,
            cells_to_pattern(cells, pgd.cell_rows, pgd.cell_cols, pgd.cell_px),
        ))
    };
    let mut x = init_cells(pgd, seed);
    let initial_cells = x.clone();
    let (mut loss, _) = evaluate_config(oracle, frame, spec, &make(&x))?;
    let entry = |loss: f64, it: usize, accepted: bool, oracle: &dyn MapOracle| TraceEntry {
        position,
        loss,
        queries: oracle.query_count() - query_base,
        rank: None,
        iteration: Some(it),
        accepted: Some(accepted),
    };
    trace.push(entry(loss, 0, true, oracle));
    let (mut best, mut best_loss) = (x.clone(), loss);
    let dim = x.len();
    let mut sign = vec![1.0f64; dim];
    let mut eta = pgd.step_size;
    for it in 1..pgd.iters_per_position {
        // The first proposal uses the initial estimate unchanged.
        let mut s = sign.clone();
        if it > 1 {
            for v in &mut s[block(it - 2, dim)] {
                *v = -*v;
            }
        }
        let cand: Vec<f64> = x
            .iter()
            .zip(&s)
            .map(|(v, g)| (v - eta * g).clamp(0.0, 1.0))
            .collect();
        let (l, _) = evaluate_config(oracle, frame, spec, &make(&cand))?;
        let accept = !pgd.backtracking || l <= loss;
        trace.push(entry(l, it, accept, oracle));
        if l < best_loss {
            best_loss = l;
            best.clone_from(&cand);
        }
        if accept {
            x = cand;
            loss = l;
            sign = s;
        } else {
            eta = (eta * 0.5).max(pgd.fd_epsilon);
        }
    }
    Ok(PgdRun {
        position,
        initial_cells,
        best_cells: best,
        best_loss,
    })
}

/// Hybrid search: PGD on the patch pattern at each of the top
/// `budget / iters_per_position` ranked positions.
pub fn optimize_patch(
    oracle: &mut dyn MapOracle,
    frame: &SceneFrame,
    spec: &ObjectiveSpec,
    candidates: &[Candidate],
    pgd: &PgdParams,
    budget: usize,
) -> Result<(AttackConfig, SearchTrace), AttackError> {
    pgd.validate()?;
    if budget < pgd.iters_per_position {
        return Err(AttackError::Config(format!(
            "budget {budget} cannot cover one position of {} iterations",
            pgd.iters_per_position
        )));
    }
    if candidates.is_empty() {
        return Err(AttackError::Config("no candidates to search".into()));
    }
    let positions = (budget / pgd.iters_per_position).min(candidates.len());
    let base = oracle.query_count();
    let mut entries = Vec::new();
    let mut best: Option<PgdRun> = None;
    for c in &candidates[..positions] {
        let seed = pgd.seed.wrapping_add(c.rank as u64);
        let run = pgd_at_position(
            oracle,
            frame,
            spec,
            c.position,
            pgd,
            seed,
            &mut entries,
            base,
        )?;
        if let Some(e) = entries.last_mut() {
            e.rank = Some(c.rank);
        }
        if best.as_ref().is_none_or(|b| run.best_loss < b.best_loss) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one position");
    let cfg = AttackConfig::patch(PatchSpec::new(
        run.position,
        pgd.patch_width,
        pgd.patch_height,
        pgd.patch_alpha,
        cells_to_pattern(&run.best_cells, pgd.cell_rows, pgd.cell_cols, pgd.cell_px),
    ));
    let trace = SearchTrace {
        seed: pgd.seed,
        total_queries: oracle.query_count() - base,
        entries,
        best: cfg.clone(),
        best_loss: run.best_loss,
    };
    Ok((cfg, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_refine() {
        assert_eq!(block(0, 12), 0..12);
        assert_eq!(block(1, 12), 0..6);
        assert_eq!(block(2, 12), 6..12);
        assert_eq!(block(3, 12), 0..3);
        let covered: usize = (3..7).map(|j| block(j, 12).len()).sum();
        assert_eq!(covered, 12);
    }

    #[test]
    fn upsampling() {
        let cells = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let img = cells_to_pattern(&cells, 1, 2, 3);
        assert_eq!((img.width, img.height), (6, 3));
        assert_eq!(img.get(2, 2), [0.0; 3]);
        assert_eq!(img.get(3, 0), [1.0; 3]);
    }
}
