use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{Condition, ConditionKind, Orientation};
use crate::error::{Error, Result};
use crate::model::Domain;

/// Tensor-product sample grid over a box, plus the inputs used for
/// conditions that depend on `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    counts: Vec<usize>,
    u_samples: Vec<Vec<f64>>,
}

impl SampleGrid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != counts.len() {
            return Err(Error::DimensionMismatch {
                what: "grid bounds and counts",
                expected: lower.len(),
                found: if lower.len() != upper.len() { upper.len() } else { counts.len() },
            });
        }
        for i in 0..lower.len() {
            if !(lower[i] < upper[i]) || counts[i] < 2 {
                return Err(Error::InvalidArgument(alloc::format!(
                    "grid axis {i}: need lower < upper and count >= 2, got {}:{}:{}",
                    lower[i],
                    upper[i],
                    counts[i]
                )));
            }
        }
        Ok(Self {
            lower,
            upper,
            counts,
            u_samples: Vec::new(),
        })
    }

    pub fn interval(lo: f64, hi: f64, count: usize) -> Result<Self> {
        Self::new(vec![lo], vec![hi], vec![count])
    }

    /// Same per-axis count over a box.
    pub fn uniform(lower: Vec<f64>, upper: Vec<f64>, count: usize) -> Result<Self> {
        let n = lower.len();
        Self::new(lower, upper, vec![count; n])
    }

    pub fn from_domain(d: &Domain, count: usize) -> Result<Self> {
        Self::uniform(d.lower().to_vec(), d.upper().to_vec(), count)
    }

    pub fn with_u_samples(mut self, u_samples: Vec<Vec<f64>>) -> Self {
        self.u_samples = u_samples;
        self
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn u_samples(&self) -> &[Vec<f64>] {
        &self.u_samples
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn n_points(&self) -> usize {
        self.counts.iter().product()
    }

    /// Point `k` in row-major order (last axis fastest).
    pub fn point(&self, mut k: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for axis in (0..self.dim()).rev() {
            let c = self.counts[axis];
            let j = k % c;
            k /= c;
            let (lo, hi) = (self.lower[axis], self.upper[axis]);
            x[axis] = if j + 1 == c {
                hi
            } else {
                lo + (hi - lo) * j as f64 / (c - 1) as f64
            };
        }
        x
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.n_points()).map(|k| self.point(k))
    }
}

/// `0` and `+-e_j` for each input direction.
pub fn default_u_samples(m: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; m]];
    for j in 0..m {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; m];
            e[j] = s;
            out.push(e);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    /// Largest margin within `(-tol, tol]`. Counts as satisfied.
    Boundary,
    Fail,
    /// More than 1% of the sample points could not be evaluated.
    Invalid,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Boundary => "boundary",
            Verdict::Fail => "fail",
            Verdict::Invalid => "invalid",
        }
    }

    pub fn is_satisfied(self) -> bool {
        matches!(self, Verdict::Pass | Verdict::Boundary)
    }

    /// Worst of several verdicts: invalid, then fail, then boundary.
    pub fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
        let rank = |v: Verdict| match v {
            Verdict::Pass => 0,
            Verdict::Boundary => 1,
            Verdict::Fail => 2,
            Verdict::Invalid => 3,
        };
        verdicts.into_iter().fold(Verdict::Pass, |a, b| if rank(b) > rank(a) { b } else { a })
    }
}

/// Outcome at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    /// Normalized so that the condition holds when `margin <= tol`.
    pub margin: f64,
    pub value: f64,
    /// Input attaining the worst margin for input-dependent conditions.
    pub worst_u: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub condition_id: String,
    pub kind: ConditionKind,
    pub orientation: Orientation,
    pub tolerance: f64,
    pub grid: SampleGrid,
    /// Successfully evaluated points, in grid order.
    pub sample_points: Vec<Vec<f64>>,
    /// Normalized margins (inequality conditions).
    pub margins: Vec<f64>,
    /// Residuals (equality conditions).
    pub residuals: Vec<f64>,
    /// Raw checker values at the sample points.
    pub values: Vec<f64>,
    pub worst_point: Vec<f64>,
    pub worst_u: Option<Vec<f64>>,
    /// Largest normalized margin (or residual).
    pub max_margin: f64,
    /// Raw value at the worst point.
    pub worst_value: f64,
    pub failures: Vec<(Vec<f64>, Error)>,
    pub verdict: Verdict,
}

impl ConditionReport {
    pub fn n_points(&self) -> usize {
        self.sample_points.len() + self.failures.len()
    }

    /// Smallest and largest raw values over the sampled points.
    pub fn value_range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
    }
}

/// Evaluates the condition at `x`, taking the worst case over `u_samples`
/// (or the default samples when empty) for input-dependent conditions.
pub fn evaluate_point(cond: &dyn Condition, x: &[f64], u_samples: &[Vec<f64>]) -> Result<PointResult> {
    let orientation = cond.orientation();
    let finite = |v: f64| {
        if v.is_nan() {
            Err(Error::NonFinite { context: "condition value" }.at(x))
        } else {
            Ok(v)
        }
    };
    match cond.input_dim() {
        None => {
            let value = finite(cond.value(x, &[])?)?;
            Ok(PointResult {
                margin: orientation.normalize(value),
                value,
                worst_u: None,
            })
        }
        Some(m) => {
            let defaults;
            let samples = if u_samples.is_empty() {
                defaults = default_u_samples(m);
                &defaults
            } else {
                u_samples
            };
            let mut best: Option<PointResult> = None;
            for u in samples {
                let value = finite(cond.value(x, u)?)?;
                let margin = orientation.normalize(value);
                if best.as_ref().map_or(true, |b| margin > b.margin) {
                    best = Some(PointResult {
                        margin,
                        value,
                        worst_u: Some(u.clone()),
                    });
                }
            }
            best.ok_or_else(|| Error::InvalidArgument("no input samples".into()))
        }
    }
}

/// Deterministic reduction of per-point results (in grid order) into a
/// report.
pub fn assemble_report(
    cond: &dyn Condition,
    grid: &SampleGrid,
    tol: f64,
    results: Vec<(Vec<f64>, Result<PointResult>)>,
) -> ConditionReport {
    let kind = cond.kind();
    let mut report = ConditionReport {
        condition_id: cond.id(),
        kind,
        orientation: cond.orientation(),
        tolerance: tol,
        grid: grid.clone(),
        sample_points: Vec::new(),
        margins: Vec::new(),
        residuals: Vec::new(),
        values: Vec::new(),
        worst_point: Vec::new(),
        worst_u: None,
        max_margin: f64::NEG_INFINITY,
        worst_value: f64::NAN,
        failures: Vec::new(),
        verdict: Verdict::Invalid,
    };
    for (x, r) in results {
        match r {
            Ok(p) => {
                if p.margin > report.max_margin || report.worst_point.is_empty() {
                    report.max_margin = p.margin;
                    report.worst_value = p.value;
                    report.worst_point = x.clone();
                    report.worst_u = p.worst_u.clone();
                }
                match kind {
                    ConditionKind::Inequality => report.margins.push(p.margin),
                    ConditionKind::Equality => report.residuals.push(p.margin),
                }
                report.values.push(p.value);
                report.sample_points.push(x);
            }
            Err(e) => report.failures.push((x, e)),
        }
    }
    let total = report.n_points();
    report.verdict = if report.sample_points.is_empty() || report.failures.len() * 100 > total {
        Verdict::Invalid
    } else {
        match kind {
            ConditionKind::Equality if report.max_margin <= tol => Verdict::Pass,
            ConditionKind::Equality => Verdict::Fail,
            ConditionKind::Inequality if report.max_margin > tol => Verdict::Fail,
            ConditionKind::Inequality if report.max_margin > -tol => Verdict::Boundary,
            ConditionKind::Inequality => Verdict::Pass,
        }
    };
    report
}

/// Evaluates the condition at every grid point (and input sample) and
/// aggregates. Points outside a system's declared domain are evaluated
/// like any other.
pub fn scan_region(cond: &dyn Condition, grid: &SampleGrid, tol: f64) -> ConditionReport {
    let results = grid
        .points()
        .map(|x| {
            let r = evaluate_point(cond, &x, grid.u_samples());
            (x, r)
        })
        .collect();
    assemble_report(cond, grid, tol, results)
}

/// Largest normalized margin along a list of states, with its index.
pub fn trajectory_margin(cond: &dyn Condition, points: &[Vec<f64>]) -> Result<(f64, usize)> {
    let mut worst = (f64::NEG_INFINITY, 0);
    for (k, x) in points.iter().enumerate() {
        let m = evaluate_point(cond, x, &[])?.margin;
        if m > worst.0 {
            worst = (m, k);
        }
    }
    Ok(worst)
}

fn strictly_holds(cond: &dyn Condition, grid: &SampleGrid) -> bool {
    let r = scan_region(cond, grid, 0.0);
    r.failures.is_empty() && r.max_margin <= 0.0
}

/// Largest `s` in `[0, s_max]` such that every point of the grid over the
/// box `[-s shape, s shape]` has margin `<= 0`, found by bisection. Returns
/// 0 when the condition already fails at the origin.
pub fn largest_certified_scale(
    cond: &dyn Condition,
    shape: &[f64],
    count: usize,
    s_max: f64,
    iterations: usize,
) -> Result<f64> {
    let grid_at = |s: f64| {
        SampleGrid::uniform(
            shape.iter().map(|a| -s * a).collect(),
            shape.iter().map(|a| s * a).collect(),
            count,
        )
    };
    let origin = vec![0.0; shape.len()];
    if evaluate_point(cond, &origin, &[])?.margin > 0.0 {
        return Ok(0.0);
    }
    if strictly_holds(cond, &grid_at(s_max)?) {
        return Ok(s_max);
    }
    let (mut lo, mut hi) = (0.0, s_max);
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if strictly_holds(cond, &grid_at(mid)?) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Smallest parameter in `[lo, hi]` for which the condition built by `make`
/// holds with margin `<= 0` on the whole grid, assuming monotonicity.
/// `None` when even `hi` fails.
pub fn smallest_passing_parameter<C, F>(make: F, grid: &SampleGrid, lo: f64, hi: f64, iterations: usize) -> Result<Option<f64>>
where
    C: Condition,
    F: Fn(f64) -> Result<C>,
{
    if !strictly_holds(&make(hi)?, grid) {
        return Ok(None);
    }
    if strictly_holds(&make(lo)?, grid) {
        return Ok(Some(lo));
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..iterations {
        let mid = 0.5 * (a + b);
        if strictly_holds(&make(mid)?, grid) {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(Some(b))
}
