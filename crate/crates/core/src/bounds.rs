//! Closed-form error curves for the two predictor classes and label-noise tradeoffs.

use crate::error::{Error, Result};
use crate::plot::{render_panels, Panel, Series};
use crate::predictors::in_context::ic_ce_bounds;
use crate::predictors::in_weight::kt_excess_bound;
use crate::simplex::SimplexVector;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const IC_CE_LOWER: &str = "ic_ce_lower";
pub const IC_CE_UPPER: &str = "ic_ce_upper";
pub const IW_EXCESS_LEADING: &str = "iw_excess_leading";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub x: f64,
    pub curve: String,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    #[serde(rename = "L")]
    pub context_len: usize,
    pub epsilon: f64,
    #[serde(rename = "B")]
    pub bound: f64,
    #[serde(rename = "C")]
    pub num_classes: usize,
    pub y_star: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurveTable {
    pub params: CurveParams,
    /// Sorted by curve name, then x.
    pub rows: Vec<CurveRow>,
    /// Entropy of `y*`, the asymptote of the in-weight curve.
    pub entropy_floor: f64,
}

impl BoundCurveTable {
    pub fn curve(&self, name: &str) -> impl Iterator<Item = &CurveRow> {
        let name = name.to_owned();
        self.rows.iter().filter(move |r| r.curve == name)
    }

    pub fn value(&self, name: &str, x: f64) -> Option<f64> {
        self.curve(name).find(|r| r.x == x).map(|r| r.y)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Two panels: in-context bounds against `k`, in-weight curve against `N_x`.
    pub fn write_svg(&self, path: &Path) -> Result<()> {
        let line = |name: &str, dashed| Series {
            name: name.to_owned(),
            points: self.curve(name).map(|r| (r.x, r.y)).collect(),
            band: Vec::new(),
            dashed,
        };
        let ic = Panel {
            title: format!("in-context CE bounds (L={}, eps={})", self.params.context_len, self.params.epsilon),
            x_label: "irrelevant context labels k".into(),
            y_label: "cross-entropy".into(),
            series: vec![line(IC_CE_LOWER, false), line(IC_CE_UPPER, false)],
            y_range: None,
        };
        let n_points: Vec<f64> = self.curve(IW_EXCESS_LEADING).map(|r| r.x).collect();
        let mut floor = Series { name: "entropy(y*)".into(), dashed: true, ..Series::default() };
        if let (Some(&a), Some(&b)) = (n_points.first(), n_points.last()) {
            floor.points = vec![(a.log10(), self.entropy_floor), (b.log10(), self.entropy_floor)];
        }
        let iw = Panel {
            title: "in-weight CE (leading term)".into(),
            x_label: "log10 N_x".into(),
            y_label: "cross-entropy".into(),
            series: vec![
                Series {
                    name: IW_EXCESS_LEADING.into(),
                    points: self.curve(IW_EXCESS_LEADING).map(|r| (r.x.log10(), r.y)).collect(),
                    ..Series::default()
                },
                floor,
            ],
            y_range: None,
        };
        render_panels(path, &[ic, iw], 2, (480, 360))
    }
}

/// In-context cross-entropy bounds over `k_range` and the in-weight curve
/// `entropy(y*) + kt_excess_bound(N_x, C)` over `n_range`.
pub fn bound_curves(
    context_len: usize,
    epsilon: f64,
    bound: f64,
    num_classes: usize,
    y_star: &SimplexVector,
    k_range: &[usize],
    n_range: &[u64],
) -> Result<BoundCurveTable> {
    if y_star.num_classes() != num_classes {
        return Err(Error::DimensionMismatch { expected: num_classes, actual: y_star.num_classes() });
    }
    let entropy_floor = y_star.entropy();
    let mut rows = Vec::with_capacity(2 * k_range.len() + n_range.len());
    for &k in k_range {
        let b = ic_ce_bounds(k, context_len, bound, epsilon, num_classes)?;
        rows.push(CurveRow { x: k as f64, curve: IC_CE_LOWER.into(), y: b.lower });
        rows.push(CurveRow { x: k as f64, curve: IC_CE_UPPER.into(), y: b.upper });
    }
    for &n in n_range {
        let y = entropy_floor + kt_excess_bound(n, num_classes)?;
        rows.push(CurveRow { x: n as f64, curve: IW_EXCESS_LEADING.into(), y });
    }
    rows.sort_by(|a, b| a.curve.cmp(&b.curve).then(a.x.total_cmp(&b.x)));
    rows.dedup_by(|a, b| a.curve == b.curve && a.x == b.x);
    Ok(BoundCurveTable {
        params: CurveParams { context_len, epsilon, bound, num_classes, y_star: y_star.probs().to_vec() },
        rows,
        entropy_floor,
    })
}

/// Binary in-context error floor with `B = 1` and at least one irrelevant label:
/// `(1 - 2 eps) / (1 + (L - 1) e^2) + eps`.
pub fn icl_floor_binary(context_len: usize, epsilon: f64) -> Result<f64> {
    if context_len == 0 {
        return Err(Error::InvalidSpec("L must be at least 1".into()));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidSpec(format!("epsilon={epsilon} must lie in (0, 1/2)")));
    }
    let e2 = std::f64::consts::E.powi(2);
    Ok((1.0 - 2.0 * epsilon) / (1.0 + (context_len as f64 - 1.0) * e2) + epsilon)
}

fn binary_entropy(p: f64) -> f64 {
    -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
}

/// The `p` in `(0, 1/2)` whose binary entropy equals the in-context floor.
pub fn entropy_threshold(context_len: usize, epsilon: f64) -> Result<f64> {
    let floor = icl_floor_binary(context_len, epsilon)?;
    if floor >= std::f64::consts::LN_2 {
        return Err(Error::ThresholdUndefined { floor });
    }
    let (mut lo, mut hi) = (1e-15, 0.5 - 1e-15);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if binary_entropy(mid) < floor {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Zero-one errors under a binary label flip with probability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseTradeoff {
    pub p: f64,
    /// Always predicting the majority label.
    pub iwl_err: f64,
    /// Copying a context label whose noise is independent of the query's.
    pub icl_independent: f64,
    /// Copying a context label that is flipped exactly when the query's is not.
    pub icl_anticorrelated: f64,
    /// Copying a context label that shares the query's flip.
    pub icl_correlated: f64,
}

pub fn noise_tradeoff(p: f64) -> Result<NoiseTradeoff> {
    if !(0.0..0.5).contains(&p) {
        return Err(Error::InvalidSpec(format!("flip probability {p} must lie in [0, 1/2)")));
    }
    Ok(NoiseTradeoff {
        p,
        iwl_err: p,
        icl_independent: 2.0 * p * (1.0 - p),
        icl_anticorrelated: 2.0 * p,
        icl_correlated: 0.0,
    })
}
