use super::config::Cell;
use super::sweep::{read_results_csv, ResultRow};
use crate::bounds::bound_curves;
use crate::error::{Error, Result};
use crate::plot::{render_panels, Panel, Series};
use crate::simplex::SimplexVector;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Seed mean and sample standard deviation, skipping NaN entries.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Some((mean, var.sqrt()))
}

/// `(model, N) -> (mean, std)` of err01 for one cell.
pub fn cell_curves(rows: &[ResultRow], cell: &Cell) -> BTreeMap<(String, u64), (f64, f64)> {
    let mut grouped: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| {
        r.split == cell.split.as_str() && r.context == cell.context.as_str() && r.class_group == cell.class_group.as_str()
    }) {
        grouped.entry((r.model.as_str().to_string(), r.n)).or_default().push(r.err01);
    }
    grouped.into_iter().filter_map(|(k, v)| mean_std(&v).map(|s| (k, s))).collect()
}

fn cell_panel(rows: &[ResultRow], cell: &Cell) -> Panel {
    let curves = cell_curves(rows, cell);
    let mut by_model: BTreeMap<String, Series> = BTreeMap::new();
    for ((model, n), (mean, std)) in curves {
        let x = (n as f64).log2();
        let s = by_model.entry(model.clone()).or_insert_with(|| Series { name: model, ..Series::default() });
        s.points.push((x, mean));
        s.band.push((x, mean - std, mean + std));
    }
    Panel {
        title: format!("{} / {} context / {}", cell.split.as_str(), cell.context.as_str(), cell.class_group.as_str()),
        x_label: "log2 N".into(),
        y_label: "0-1 error".into(),
        series: by_model.into_values().collect(),
        y_range: Some((-0.02, 1.02)),
    }
}

/// One SVG per evaluation cell, a grid of all cells, and the bound-curve panel.
pub fn emit_plots(results_csv: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_results_csv(std::fs::File::open(results_csv)?)?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut panels = Vec::new();
    for cell in Cell::all() {
        let panel = cell_panel(&rows, &cell);
        let path = out_dir.join(format!("{cell}.svg"));
        render_panels(&path, std::slice::from_ref(&panel), 1, (520, 380))?;
        written.push(path);
        panels.push(panel);
    }
    let grid = out_dir.join("cells.svg");
    render_panels(&grid, &panels, 4, (420, 320))?;
    written.push(grid);

    let bounds = out_dir.join("bounds.svg");
    reference_bound_curves()?.write_svg(&bounds)?;
    written.push(bounds);
    Ok(written)
}

/// Bound curves at L = 8, eps = 0.001, B = 1, C = 10 with `y*` putting 0.999 on one class.
pub fn reference_bound_curves() -> Result<crate::bounds::BoundCurveTable> {
    let mut y = vec![0.001 / 9.0; 10];
    y[0] = 0.999;
    let y_star = SimplexVector::new(y).map_err(|e| Error::Malformed(e.to_string()))?;
    let ks: Vec<usize> = (0..=8).collect();
    let ns: Vec<u64> = (0..=40).map(|i| 10f64.powf(i as f64 / 10.0).round() as u64).collect();
    bound_curves(8, 0.001, 1.0, 10, &y_star, &ks, &ns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::IC_CE_UPPER;
    use crate::gating::ModelVariant;
    use crate::harness::sweep::write_results_csv;

    fn row(n: u64, seed: u64, err01: f64) -> ResultRow {
        ResultRow {
            n,
            seed,
            model: ModelVariant::Gated,
            split: "IBD".into(),
            context: "relevant".into(),
            class_group: "C_H".into(),
            err01,
            ce: 0.0,
            n_samples: 1,
            error: String::new(),
        }
    }

    #[test]
    fn stats_skip_nan() {
        assert_eq!(mean_std(&[0.5]), Some((0.5, 0.0)));
        assert_eq!(mean_std(&[f64::NAN]), None);
        let (m, s) = mean_std(&[0.0, 1.0, f64::NAN]).unwrap();
        assert_eq!(m, 0.5);
        assert!((s - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn emits_panels() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("r.csv");
        write_results_csv(&[row(64, 0, 0.2), row(256, 0, 0.1)], std::fs::File::create(&csv).unwrap()).unwrap();
        let files = emit_plots(&csv, &dir.path().join("plots")).unwrap();
        assert_eq!(files.len(), 10);
        assert!(files.iter().all(|f| f.exists()));
        let t = reference_bound_curves().unwrap();
        assert!((t.value(IC_CE_UPPER, 8.0).unwrap() - 6.907755).abs() < 1e-6);
    }

    #[test]
    fn malformed_csv_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("r.csv");
        std::fs::write(&csv, "a,b\n1,2\n").unwrap();
        assert!(emit_plots(&csv, dir.path()).is_err());
    }
}
