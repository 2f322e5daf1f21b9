//! Gridded Bayesian phase posterior.
//!
//! A [`LogPosterior`] holds one log-weight per grid point and accumulates
//! per-measurement log-likelihoods, so products of hundreds of fringe
//! factors never underflow. [`LogPosterior::normalize`] turns it into a
//! [`Density`], from which the MAP estimate and the symmetric 68.27%
//! confidence half-width are extracted.
//!
//! Conventions:
//! - Quadrature is the trapezoid rule on the grid; between grid points the
//!   density is the linear interpolant, so window masses are continuous in
//!   the window half-width.
//! - The confidence window wraps around `±π` only when the grid spans the
//!   full circle `[−π, π]`; otherwise it is truncated at the grid ends.
//! - MAP ties (equal grid values, or distinct peaks whose refined heights
//!   agree to [`TIE_RTOL`]) go to the smallest `|φ|`, then to negative `φ`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fringe::{FringeModel, Outcome};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Probability mass enclosed by the reported confidence window.
pub const CONFIDENCE_MASS: f64 = 0.6827;

/// Relative height difference below which two peaks count as tied.
pub const TIE_RTOL: f64 = 1e-6;

/// Default number of grid points for a plan using `n_total` particles:
/// `max(4096, 200·N_T)`, so a central peak of width `~1/N_T` spans
/// a few hundred points.
pub fn default_grid_points(n_total: u64) -> usize {
    let scaled = n_total.saturating_mul(200);
    usize::try_from(scaled).unwrap_or(usize::MAX).max(4096)
}

/// Uniform discretisation of `[lower, upper]` with both ends included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid<T> {
    lower: T,
    upper: T,
    n_points: usize,
}

impl<T: Real> PhaseGrid<T> {
    pub fn new(lower: T, upper: T, n_points: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::InvalidGrid(format!(
                "bounds [{lower}, {upper}] are not an increasing finite interval"
            )));
        }
        if lower < -T::PI() || upper > T::PI() {
            return Err(Error::InvalidGrid(format!(
                "bounds [{lower}, {upper}] leave [-pi, pi]"
            )));
        }
        if n_points < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 points, got {n_points}"
            )));
        }
        Ok(PhaseGrid {
            lower,
            upper,
            n_points,
        })
    }

    /// The full circle `[−π, π]`.
    pub fn full(n_points: usize) -> Result<Self> {
        Self::new(-T::PI(), T::PI(), n_points)
    }

    pub fn lower(&self) -> T {
        self.lower
    }

    pub fn upper(&self) -> T {
        self.upper
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> T {
        self.upper - self.lower
    }

    pub fn spacing(&self) -> T {
        self.width() / from_usize::<T>(self.n_points - 1)
    }

    /// Grid point `i`, `lower + i·h`.
    pub fn point(&self, i: usize) -> T {
        self.lower + from_usize::<T>(i) * self.spacing()
    }

    pub fn points(&self) -> impl Iterator<Item = T> + '_ {
        let h = self.spacing();
        (0..self.n_points).map(move |i| self.lower + from_usize::<T>(i) * h)
    }

    /// Whether the grid covers one full period, so that `lower` and `upper`
    /// are the same physical phase.
    pub fn is_full_circle(&self) -> bool {
        self.lower == -T::PI() && self.upper == T::PI()
    }

    pub fn contains(&self, phi: T) -> bool {
        phi >= self.lower && phi <= self.upper
    }
}

/// Prior knowledge `θ ∈ [−π/L, π/L]`.
///
/// Every fringe law is even in the phase, so `θ` and `−θ` are
/// indistinguishable from data. A *folded* window restricts the support to
/// `[0, π/L]`, i.e. it adds the prior knowledge `θ ≥ 0`; this is the only way
/// to obtain a sign-resolved estimate when `θ ≠ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorWindow<T> {
    l: T,
    folded: bool,
}

impl<T: Real> PriorWindow<T> {
    pub fn symmetric(l: T) -> Result<Self> {
        Self::new(l, false)
    }

    pub fn folded(l: T) -> Result<Self> {
        Self::new(l, true)
    }

    pub fn new(l: T, folded: bool) -> Result<Self> {
        if !l.is_finite() || l < T::one() {
            return Err(Error::InvalidPrior(to_f64(l)));
        }
        Ok(PriorWindow { l, folded })
    }

    pub fn l(&self) -> T {
        self.l
    }

    pub fn is_folded(&self) -> bool {
        self.folded
    }

    pub fn bounds(&self) -> (T, T) {
        let hi = T::PI() / self.l;
        if self.folded {
            (T::zero(), hi)
        } else {
            (-hi, hi)
        }
    }

    pub fn contains(&self, theta: T) -> bool {
        let (lo, hi) = self.bounds();
        theta >= lo && theta <= hi
    }

    pub fn grid(&self, n_points: usize) -> Result<PhaseGrid<T>> {
        let (lo, hi) = self.bounds();
        PhaseGrid::new(lo, hi, n_points)
    }
}

/// Precomputed `ln P(outcome | N, φ)` over a grid, shared across posteriors
/// that see the same cat size on the same grid.
#[derive(Debug, Clone)]
pub struct LikelihoodTable<T> {
    grid: PhaseGrid<T>,
    values: Vec<T>,
}

impl<T: Real> LikelihoodTable<T> {
    pub fn new(model: &FringeModel<T>, outcome: Outcome, grid: &PhaseGrid<T>) -> Self {
        let values = grid
            .points()
            .map(|phi| model.log_likelihood(outcome, phi))
            .collect();
        LikelihoodTable {
            grid: *grid,
            values,
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Unnormalised log posterior on a phase grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPosterior<T> {
    grid: PhaseGrid<T>,
    log_weights: Vec<T>,
    update_count: u64,
}

/// Flat prior over `[−π/L, π/L]` on `n_points` grid points.
pub fn uniform_prior<T: Real>(l: T, n_points: usize) -> Result<LogPosterior<T>> {
    Ok(LogPosterior::uniform(
        PriorWindow::symmetric(l)?.grid(n_points)?,
    ))
}

impl<T: Real> LogPosterior<T> {
    pub fn uniform(grid: PhaseGrid<T>) -> Self {
        LogPosterior {
            log_weights: vec![T::zero(); grid.len()],
            grid,
            update_count: 0,
        }
    }

    pub fn grid(&self) -> &PhaseGrid<T> {
        &self.grid
    }

    pub fn log_weights(&self) -> &[T] {
        &self.log_weights
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    /// Multiplies in the likelihood of one measurement.
    pub fn update(&mut self, model: &FringeModel<T>, outcome: Outcome) {
        self.update_repeated(model, outcome, 1);
    }

    /// Multiplies in `count` identical measurements at once.
    pub fn update_repeated(&mut self, model: &FringeModel<T>, outcome: Outcome, count: u64) {
        if count == 0 {
            return;
        }
        let k = crate::scalar::from_u64::<T>(count);
        for (w, phi) in self.log_weights.iter_mut().zip(self.grid.points()) {
            *w = *w + k * model.log_likelihood(outcome, phi);
        }
        self.update_count += count;
    }

    /// Same as [`update_repeated`](Self::update_repeated) with a precomputed table.
    pub fn apply(&mut self, table: &LikelihoodTable<T>, count: u64) -> Result<()> {
        if table.grid != self.grid {
            return Err(Error::InvalidGrid(
                "likelihood table was built for a different grid".into(),
            ));
        }
        if count == 0 {
            return Ok(());
        }
        let k = crate::scalar::from_u64::<T>(count);
        for (w, &l) in self.log_weights.iter_mut().zip(&table.values) {
            *w = *w + k * l;
        }
        self.update_count += count;
        Ok(())
    }

    /// Exponentiates relative to the largest weight and rescales to unit
    /// trapezoid integral.
    pub fn normalize(&self) -> Result<Density<T>> {
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(T::neg_infinity(), T::max);
        if !max.is_finite() {
            return Err(Error::DegeneratePosterior);
        }
        let values = self.log_weights.iter().map(|&w| (w - max).exp()).collect();
        Density::from_values(self.grid, values)
    }
}

/// One refined local maximum of a density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak<T> {
    /// Grid index of the discrete maximum.
    pub index: usize,
    /// Vertex of the parabola through the maximum and its two neighbours.
    pub phi: T,
    pub height: T,
}

/// Result of the confidence-window search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub half_width: T,
    /// Set when no window narrower than the full support reaches the mass;
    /// `half_width` is then half the support width.
    pub saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorSummary<T> {
    pub map_estimate: T,
    pub half_width: T,
    pub secondary_peak_ratio: T,
    pub saturated: bool,
}

/// Normalised posterior density on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Density<T> {
    grid: PhaseGrid<T>,
    values: Vec<T>,
    cumulative: Vec<T>,
}

impl<T: Real> Density<T> {
    /// Normalises arbitrary non-negative values to unit trapezoid integral.
    pub fn from_values(grid: PhaseGrid<T>, mut values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| v.is_nan() || *v < T::zero()) {
            return Err(Error::InvalidArgument(
                "density values must be non-negative numbers".into(),
            ));
        }
        let cumulative = cumulative_trapezoid(&values, grid.spacing());
        let total = *cumulative.last().expect("grid has points");
        if total <= T::zero() || !total.is_finite() {
            return Err(Error::DegeneratePosterior);
        }
        for v in values.iter_mut() {
            *v = *v / total;
        }
        let cumulative = cumulative_trapezoid(&values, grid.spacing());
        Ok(Density {
            grid,
            values,
            cumulative,
        })
    }

    /// Samples `f` on the grid and normalises.
    pub fn from_fn<F: Fn(T) -> T>(grid: PhaseGrid<T>, f: F) -> Result<Self> {
        let values = grid.points().map(f).collect();
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> &PhaseGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Trapezoid integral over the whole grid.
    pub fn integral(&self) -> T {
        *self.cumulative.last().expect("grid has points")
    }

    /// Integral of the interpolated density from `lower` to `x`.
    fn cdf(&self, x: T) -> T {
        let g = &self.grid;
        if x <= g.lower() {
            return T::zero();
        }
        if x >= g.upper() {
            return self.integral();
        }
        let h = g.spacing();
        let n = g.len();
        let i = ((x - g.lower()) / h)
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(n - 2);
        let u = x - g.point(i);
        let (a, b) = (self.values[i], self.values[i + 1]);
        self.cumulative[i] + a * u + (b - a) * u * u / (lit::<T>(2.0) * h)
    }

    /// Mass inside `[center − half_width, center + half_width]`, wrapped on
    /// full-circle grids and truncated otherwise.
    pub fn window_mass(&self, center: T, half_width: T) -> T {
        let g = &self.grid;
        let total = self.integral();
        let (a, b) = (center - half_width, center + half_width);
        if g.is_full_circle() {
            let period = g.width();
            if half_width + half_width >= period {
                return total;
            }
            if a < g.lower() {
                self.cdf(b) + total - self.cdf(a + period)
            } else if b > g.upper() {
                total - self.cdf(a) + self.cdf(b - period)
            } else {
                self.cdf(b) - self.cdf(a)
            }
        } else {
            self.cdf(b) - self.cdf(a)
        }
    }

    /// Smallest symmetric half-width around `estimate` enclosing `mass`,
    /// located by bisection to well below one grid step.
    pub fn confidence_interval(&self, estimate: T, mass: T) -> Interval<T> {
        let cap = self.grid.width() / lit(2.0);
        let target = mass * self.integral();
        if self.window_mass(estimate, cap) < target {
            return Interval {
                half_width: cap,
                saturated: true,
            };
        }
        let tol = self.grid.spacing() / lit(1024.0);
        let (mut lo, mut hi) = (T::zero(), cap);
        for _ in 0..200 {
            if hi - lo <= tol {
                break;
            }
            let mid = (lo + hi) / lit(2.0);
            if self.window_mass(estimate, mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Interval {
            half_width: hi,
            saturated: hi >= cap,
        }
    }

    /// Discrete local maxima with parabolic refinement of position and height.
    ///
    /// A point is a maximum when it strictly exceeds its left neighbour and is
    /// not below its right one (one report per plateau). On full-circle grids
    /// the last point duplicates the first and neighbours wrap; otherwise the
    /// ends count only when strictly above their single neighbour.
    pub fn local_maxima(&self) -> Vec<Peak<T>> {
        let d = &self.values;
        let n = d.len();
        let h = self.grid.spacing();
        let mut peaks = Vec::new();
        let cyclic = self.grid.is_full_circle();
        let m = if cyclic { n - 1 } else { n };
        for i in 0..m {
            let (left, right) = if cyclic {
                (Some(d[(i + m - 1) % m]), Some(d[(i + 1) % m]))
            } else {
                (
                    if i > 0 { Some(d[i - 1]) } else { None },
                    if i + 1 < n { Some(d[i + 1]) } else { None },
                )
            };
            let b = d[i];
            let is_max = match (left, right) {
                (Some(a), Some(c)) => b > a && b >= c,
                (None, Some(c)) => b > c,
                (Some(a), None) => b > a,
                (None, None) => false,
            };
            if !is_max || b <= T::zero() {
                continue;
            }
            let (phi, height) = match (left, right) {
                (Some(a), Some(c)) => {
                    let denom = a - b - b + c;
                    if denom < T::zero() {
                        let half = lit::<T>(0.5);
                        let delta = (half * (a - c) / denom).max(-half).min(half);
                        let height = b - lit::<T>(0.25) * (a - c) * delta;
                        (self.grid.point(i) + delta * h, height.max(b))
                    } else {
                        (self.grid.point(i), b)
                    }
                }
                _ => (self.grid.point(i), b),
            };
            peaks.push(Peak {
                index: i,
                phi,
                height,
            });
        }
        peaks
    }

    /// Grid index of the MAP estimate under the documented tie-breaking rule.
    pub fn map_index(&self) -> usize {
        let d = &self.values;
        let dmax = d.iter().copied().fold(T::zero(), T::max);
        let point_tol = dmax * (T::one() - lit(1e-12));
        let mut candidates: Vec<usize> = (0..d.len()).filter(|&i| d[i] >= point_tol).collect();
        let peaks = self.local_maxima();
        let hmax = peaks.iter().map(|p| p.height).fold(dmax, T::max);
        let peak_tol = hmax * (T::one() - lit(TIE_RTOL));
        candidates.extend(
            peaks
                .iter()
                .filter(|p| p.height >= peak_tol)
                .map(|p| p.index),
        );
        let g = &self.grid;
        candidates
            .into_iter()
            .min_by(|&i, &j| {
                let (pi, pj) = (g.point(i), g.point(j));
                pi.abs()
                    .partial_cmp(&pj.abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(pi.partial_cmp(&pj).unwrap_or(std::cmp::Ordering::Equal))
            })
            .expect("density has at least one maximal point")
    }

    pub fn map_estimate(&self) -> T {
        self.grid.point(self.map_index())
    }

    /// Index reached from `start` by steepest ascent over grid neighbours.
    fn climb(&self, start: usize) -> usize {
        let d = &self.values;
        let n = d.len();
        let cyclic = self.grid.is_full_circle();
        let m = if cyclic { n - 1 } else { n };
        let mut i = if cyclic { start % m } else { start };
        loop {
            let left = if cyclic {
                Some((i + m - 1) % m)
            } else {
                i.checked_sub(1)
            };
            let right = if cyclic {
                Some((i + 1) % m)
            } else if i + 1 < n {
                Some(i + 1)
            } else {
                None
            };
            let best = [left, right]
                .into_iter()
                .flatten()
                .filter(|&j| d[j] > d[i])
                .max_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap_or(std::cmp::Ordering::Equal));
            match best {
                Some(j) => i = j,
                None => return i,
            }
        }
    }

    /// Height of the tallest local maximum other than the one the MAP
    /// estimate sits on, relative to the MAP peak; 0 when unimodal.
    pub fn secondary_peak_ratio(&self, map_index: usize) -> T {
        let top = self.climb(map_index);
        let peaks = self.local_maxima();
        let map_height = peaks
            .iter()
            .find(|p| p.index == top)
            .map(|p| p.height)
            .unwrap_or(self.values[top]);
        let second = peaks
            .iter()
            .filter(|p| p.index != top)
            .map(|p| p.height)
            .fold(T::zero(), T::max);
        if map_height <= T::zero() {
            return T::zero();
        }
        (second / map_height).min(T::one())
    }

    pub fn summarize(&self, mass: T) -> PosteriorSummary<T> {
        let idx = self.map_index();
        let estimate = self.grid.point(idx);
        let interval = self.confidence_interval(estimate, mass);
        PosteriorSummary {
            map_estimate: estimate,
            half_width: interval.half_width,
            secondary_peak_ratio: self.secondary_peak_ratio(idx),
            saturated: interval.saturated,
        }
    }

    /// Writes `phi,density` records, one per grid point, after a header line.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "phi,density")?;
        for (phi, d) in self.grid.points().zip(&self.values) {
            writeln!(out, "{phi},{d}")?;
        }
        Ok(())
    }
}

fn cumulative_trapezoid<T: Real>(values: &[T], h: T) -> Vec<T> {
    let half = lit::<T>(0.5);
    let mut acc = T::zero();
    let mut out = Vec::with_capacity(values.len());
    out.push(acc);
    for w in values.windows(2) {
        acc = acc + half * h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Large-`M` limit of the replicated posterior: each fringe contributes its
/// outcome log-likelihoods weighted by `M·P(outcome | N, θ_true)`.
///
/// `m` enters only as an exponent and may be non-integer. Outcomes with
/// zero probability at `θ_true` contribute nothing (`0·ln 0 = 0`).
pub fn asymptotic_posterior<T: Real>(
    models: &[FringeModel<T>],
    theta_true: T,
    m: T,
    grid: &PhaseGrid<T>,
) -> Result<Density<T>> {
    if models.is_empty() {
        return Err(Error::InvalidArgument(
            "asymptotic posterior needs at least one fringe model".into(),
        ));
    }
    if m <= T::zero() || !m.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "replica exponent must be positive, got {m}"
        )));
    }
    let mut log_weights = vec![T::zero(); grid.len()];
    for model in models {
        for outcome in [Outcome::Yes, Outcome::No] {
            let weight = m * model.prob(outcome, theta_true);
            if weight <= T::zero() {
                continue;
            }
            for (w, phi) in log_weights.iter_mut().zip(grid.points()) {
                *w = *w + weight * model.log_likelihood(outcome, phi);
            }
        }
    }
    LogPosterior {
        grid: *grid,
        log_weights,
        update_count: 0,
    }
    .normalize()
}
