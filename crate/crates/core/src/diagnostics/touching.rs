use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hull::lower_hull_membership;
use crate::error::{LabError, Result};
use crate::io::{csv_table, fmt_num};
use crate::meshsolve::{GridSpec, ScalarField};

pub const DEFAULT_THETA_M0: f64 = 1.0 / 16.0;
pub const DEFAULT_THETA_KMAX: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Touched by a concave paraboloid from below.
    Below,
    /// Touched by a convex paraboloid from above.
    Above,
    Both,
}

impl Side {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "below" => Ok(Self::Below),
            "above" => Ok(Self::Above),
            "both" => Ok(Self::Both),
            other => Err(LabError::InvalidParameter(format!("unknown side `{other}`"))),
        }
    }
}

/// Closed box `[lo₁, hi₁] × [lo₂, hi₂]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubSquare {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl SubSquare {
    pub fn centered(c: [f64; 2], half: f64) -> Self {
        Self { lo: [c[0] - half, c[1] - half], hi: [c[0] + half, c[1] + half] }
    }

    pub fn whole(grid: &GridSpec) -> Self {
        Self { lo: [grid.a; 2], hi: [grid.b; 2] }
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        let eps = 1e-12 * (1.0 + self.hi[0].abs().max(self.hi[1].abs()));
        (0..2).all(|k| x[k] >= self.lo[k] - eps && x[k] <= self.hi[k] + eps)
    }
}

fn interior_index(n: usize, i: usize, j: usize) -> usize {
    (j - 1) * n + (i - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchingMask {
    pub opening: f64,
    pub side: Side,
    pub grid: GridSpec,
    /// Interior nodes row-major, `true` when in `G_M`.
    pub membership: Vec<bool>,
    pub subsquare: SubSquare,
    /// Area of `A_M` (interior nodes outside `G_M`) within the subsquare.
    pub measure: f64,
}

impl TouchingMask {
    pub fn member(&self, i: usize, j: usize) -> bool {
        self.membership[interior_index(self.grid.n, i, j)]
    }

    pub fn count(&self) -> usize {
        self.membership.iter().filter(|&&m| m).count()
    }

    /// Columns `x1,x2,member` over interior nodes.
    pub fn to_csv(&self) -> String {
        let n = self.grid.n;
        let mut rows = Vec::with_capacity(n * n);
        for j in 1..=n {
            for i in 1..=n {
                let [x, y] = self.grid.point(i, j);
                rows.push(vec![fmt_num(x), fmt_num(y), u8::from(self.member(i, j)).to_string()]);
            }
        }
        csv_table(&["x1", "x2", "member"], &rows)
    }

    /// One line per interior row `j = 1..n`, runs as `<bit>x<length>` separated by spaces,
    /// after a header `rows=<n> cols=<n>`.
    pub fn to_rle(&self) -> String {
        let n = self.grid.n;
        let mut out = format!("rows={n} cols={n}\n");
        for j in 1..=n {
            let mut runs: Vec<String> = Vec::new();
            let mut i = 1;
            while i <= n {
                let bit = self.member(i, j);
                let start = i;
                while i <= n && self.member(i, j) == bit {
                    i += 1;
                }
                runs.push(format!("{}x{}", u8::from(bit), i - start));
            }
            out.push_str(&runs.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Membership over all nodes, ring included, for one side.
fn side_membership(u: &ScalarField, opening: f64, sign: f64) -> Vec<bool> {
    let g = u.grid;
    let side = g.side();
    let z: Vec<f64> = (0..g.len())
        .map(|k| {
            let [x, y] = g.point(k % side, k / side);
            sign * u.values[k] + 0.5 * opening * (x * x + y * y)
        })
        .collect();
    lower_hull_membership(side, &z)
}

fn interior_membership(u: &ScalarField, opening: f64, side: Side) -> Vec<bool> {
    let all = match side {
        Side::Below => side_membership(u, opening, 1.0),
        Side::Above => side_membership(u, opening, -1.0),
        Side::Both => {
            let (a, b) = rayon::join(|| side_membership(u, opening, 1.0), || side_membership(u, opening, -1.0));
            a.into_iter().zip(b).map(|(x, y)| x && y).collect()
        }
    };
    let g = u.grid;
    let n = g.n;
    let mut out = Vec::with_capacity(n * n);
    for j in 1..=n {
        for i in 1..=n {
            out.push(all[g.index(i, j)]);
        }
    }
    out
}

fn check_field(u: &ScalarField) -> Result<()> {
    if u.values.iter().any(|v| !v.is_finite()) {
        return Err(LabError::InvalidParameter("touching sets need a finite field".into()));
    }
    Ok(())
}

fn check_opening(m: f64) -> Result<()> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(LabError::InvalidParameter(format!("opening must be positive, got {m}")));
    }
    Ok(())
}

/// Node `x₀` is in `G_M` from below when `u + (M/2)|x|²` has a supporting affine function at
/// `x₀` over the whole grid, which is exactly membership in the lower hull of the lifted cloud.
pub fn touching_sets(u: &ScalarField, opening: f64, side: Side, subsquare: SubSquare) -> Result<TouchingMask> {
    check_field(u)?;
    check_opening(opening)?;
    let membership = interior_membership(u, opening, side);
    let measure = complement_measure(&u.grid, &subsquare, |k| membership[k]);
    Ok(TouchingMask { opening, side, grid: u.grid, membership, subsquare, measure })
}

fn complement_measure(grid: &GridSpec, q: &SubSquare, member: impl Fn(usize) -> bool) -> f64 {
    let n = grid.n;
    let h2 = grid.h() * grid.h();
    let mut count = 0usize;
    for j in 1..=n {
        for i in 1..=n {
            if q.contains(grid.point(i, j)) && !member(interior_index(n, i, j)) {
                count += 1;
            }
        }
    }
    count as f64 * h2
}

fn subsquare_measure(grid: &GridSpec, q: &SubSquare) -> f64 {
    complement_measure(grid, q, |_| false)
}

/// `M₀·ratioᵏ` for `k = 0..=k_max`.
pub fn opening_schedule(m0: f64, ratio: f64, k_max: usize) -> Vec<f64> {
    (0..=k_max).map(|k| m0 * ratio.powi(k as i32)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaField {
    pub grid: GridSpec,
    pub schedule: Vec<f64>,
    /// Interior nodes row-major: the smallest scheduled opening touching from both sides, or
    /// `+∞` when even the largest fails.
    pub theta: Vec<f64>,
}

impl ThetaField {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.theta[interior_index(self.grid.n, i, j)]
    }

    /// Columns `x1,x2,theta`; the sentinel prints as `inf`.
    pub fn to_csv(&self) -> String {
        let n = self.grid.n;
        let mut rows = Vec::with_capacity(n * n);
        for j in 1..=n {
            for i in 1..=n {
                let [x, y] = self.grid.point(i, j);
                let t = self.get(i, j);
                rows.push(vec![fmt_num(x), fmt_num(y), if t.is_finite() { fmt_num(t) } else { "inf".into() }]);
            }
        }
        csv_table(&["x1", "x2", "theta"], &rows)
    }
}

fn check_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() || schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LabError::InvalidParameter("opening schedule must be nonempty and increasing".into()));
    }
    schedule.iter().try_for_each(|&m| check_opening(m))
}

/// Both-sided masks at every scheduled opening (computed concurrently), then a per-node binary
/// search for the first opening that touches.
pub fn theta_field(u: &ScalarField, schedule: &[f64]) -> Result<ThetaField> {
    check_field(u)?;
    check_schedule(schedule)?;
    let masks: Vec<Vec<bool>> = schedule.par_iter().map(|&m| interior_membership(u, m, Side::Both)).collect();
    let n = u.grid.n;
    let theta = (0..n * n)
        .map(|k| {
            let first = masks.partition_point(|mask| !mask[k]);
            schedule.get(first).copied().unwrap_or(f64::INFINITY)
        })
        .collect();
    Ok(ThetaField { grid: u.grid, schedule: schedule.to_vec(), theta })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `−slope` of `log |A_t|` against `log t`.
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    /// Thresholds used in the fit.
    pub t_range: Vec<f64>,
    pub measures: Vec<f64>,
}

/// Least squares of `log m` on `log t`; needs at least four points with positive measure.
pub fn fit_power_law(ts: &[f64], ms: &[f64]) -> Result<DecayFit> {
    if ts.len() != ms.len() || ts.len() < 4 {
        return Err(LabError::Precondition(format!("power-law fit needs at least 4 usable thresholds, got {}", ts.len())));
    }
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = ms.iter().map(|m| m.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(DecayFit {
        exponent: -slope,
        prefactor: intercept.exp(),
        r_squared,
        t_range: ts.to_vec(),
        measures: ms.to_vec(),
    })
}

/// `(t, |A_t ∩ Q|)` for every threshold, with `A_t = {Θ > t}`, and `|Q|`.
pub fn decay_curve(theta: &ThetaField, subsquare: &SubSquare) -> (Vec<(f64, f64)>, f64) {
    let grid = theta.grid;
    let curve = theta
        .schedule
        .iter()
        .map(|&t| (t, complement_measure(&grid, subsquare, |k| theta.theta[k] <= t)))
        .collect();
    (curve, subsquare_measure(&grid, subsquare))
}

/// Θ on the threshold schedule itself, then a power-law fit of `|A_t ∩ Q|` over the thresholds
/// with `0 < |A_t ∩ Q| < |Q|`.
pub fn decay_fit(u: &ScalarField, t_schedule: &[f64], subsquare: SubSquare) -> Result<DecayFit> {
    let theta = theta_field(u, t_schedule)?;
    let (curve, total) = decay_curve(&theta, &subsquare);
    let (ts, ms): (Vec<f64>, Vec<f64>) = curve.into_iter().filter(|&(_, m)| m > 0.0 && m < total).unzip();
    fit_power_law(&ts, &ms)
}
