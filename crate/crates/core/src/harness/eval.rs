use super::config::{Cell, ContextKind, Split};
use crate::datagen::{make_oobd, sample_example_with, BaseDistributionSpec, Conditioning, ContextSpec};
use crate::error::Result;
use crate::gating::GatedLearner;
use crate::rng::{streams, RngSpec};
use crate::simplex::{cross_entropy_label, zero_one};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub err01: f64,
    pub ce: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub cells: Vec<CellResult>,
}

impl EvalReport {
    pub fn get(&self, cell: &Cell) -> Option<&CellResult> {
        self.cells.iter().find(|c| &c.cell == cell)
    }
}

/// Mean 0-1 error and cross-entropy on `n_per_cell` fresh examples per cell. The query
/// class is uniform within the cell's group. Both splits of a cell see the same draws,
/// with labels shifted for the out-of-base split.
pub fn evaluate(
    learner: &GatedLearner,
    base: &BaseDistributionSpec,
    ctx: &ContextSpec,
    cells: &[Cell],
    n_per_cell: usize,
    rng: RngSpec,
) -> Result<EvalReport> {
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        let stream = rng.substream(streams::EVAL_BASE + cell.stream_index());
        let classes = base.classes_in(cell.class_group);
        let (mut err, mut ce) = (0u64, 0.0);
        for i in 0..n_per_cell {
            let mut r = stream.draw(i as u64);
            let class = classes[r.random_range(0..classes.len())];
            let cond = Conditioning { class: Some(class), relevant: Some(cell.context == ContextKind::Relevant) };
            let mut ex = sample_example_with(base, ctx, cond, &mut r)?.example;
            if cell.split == Split::Oobd {
                ex = make_oobd(&ex, base)?;
            }
            let pred = learner.predict(&ex)?;
            err += u64::from(zero_one(&pred, ex.target_label));
            ce += cross_entropy_label(&pred, ex.target_label)?;
        }
        let n = n_per_cell.max(1) as f64;
        out.push(CellResult { cell: *cell, err01: err as f64 / n, ce: ce / n, n: n_per_cell });
    }
    Ok(EvalReport { cells: out })
}
