//! Sensitivity baselines, gains, closed-form predictions and the sweeps
//! built on deterministic (all-"yes") and asymptotic posteriors.
//!
//! Gains are quoted in decibels as `10·log10(ΔΘ_ref / ΔΘ)`, i.e. ten times
//! the log of the *amplitude* ratio of sensitivities, not of its square.

use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fringe::{CalibrationTable, FringeModel, Outcome};
use crate::posterior::{
    asymptotic_posterior, default_grid_points, LogPosterior, PosteriorSummary, PriorWindow,
    CONFIDENCE_MASS,
};
use crate::scalar::{from_u64, from_usize, lit, to_f64, Real};
use crate::schedule::Schedule;

/// Large-`p` numerical prefactor of the geometric (`r = 2`) protocol, `ΔΘ·N_T`.
pub const GEOMETRIC_PREFACTOR: f64 = 2.55;
/// Large-`p` numerical prefactor of the arithmetic protocol, `ΔΘ·N_T^{3/4}`.
pub const ARITHMETIC_PREFACTOR: f64 = 1.44;

fn check_total<T: Real>(n_total: T) -> Result<()> {
    if n_total < T::one() || !n_total.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "total particle number must be >= 1, got {n_total}"
        )));
    }
    Ok(())
}

/// `1/√N_T`.
pub fn shot_noise_limit<T: Real>(n_total: T) -> Result<T> {
    check_total(n_total)?;
    Ok(n_total.sqrt().recip())
}

/// `1/N_T`.
pub fn heisenberg_limit<T: Real>(n_total: T) -> Result<T> {
    check_total(n_total)?;
    Ok(n_total.recip())
}

/// Gain over the shot-noise limit in dB: `10·log10(ΔΘ_sn / ΔΘ)`.
pub fn gain_db<T: Real>(delta_theta: T, n_total: T) -> Result<T> {
    gain_db_vs(Baseline::ShotNoise, delta_theta, n_total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Baseline {
    ShotNoise,
    Heisenberg,
}

impl Baseline {
    pub fn limit<T: Real>(&self, n_total: T) -> Result<T> {
        match self {
            Baseline::ShotNoise => shot_noise_limit(n_total),
            Baseline::Heisenberg => heisenberg_limit(n_total),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Baseline::ShotNoise => "shot_noise",
            Baseline::Heisenberg => "heisenberg",
        }
    }
}

/// `10·log10(limit(N_T) / ΔΘ)` for the chosen baseline.
pub fn gain_db_vs<T: Real>(baseline: Baseline, delta_theta: T, n_total: T) -> Result<T> {
    if delta_theta <= T::zero() || !delta_theta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "phase uncertainty must be positive, got {delta_theta}"
        )));
    }
    let limit = baseline.limit(n_total)?;
    Ok(lit::<T>(10.0) * (limit / delta_theta).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityReport<T> {
    pub n_total: T,
    pub delta_theta: T,
    pub gain_db: T,
    pub baseline: Baseline,
}

impl<T: Real> SensitivityReport<T> {
    pub fn new(n_total: T, delta_theta: T, baseline: Baseline) -> Result<Self> {
        Ok(SensitivityReport {
            n_total,
            delta_theta,
            gain_db: gain_db_vs(baseline, delta_theta, n_total)?,
            baseline,
        })
    }
}

/// Schedule families with a closed-form Gaussian-approximation width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussianFamily {
    /// `Ñ, 2Ñ, …, pÑ`: `(9/2)^{1/4} / (Ñ^{1/4} N_T^{3/4})`.
    Arithmetic { p: u64, n_tilde: u64 },
    /// `1, 2, …, 2^{p−1}`: `√6 / N_T`.
    Geometric { p: u64 },
    /// `1, …, n_max`, each `m` times: `(9/8)^{1/4} / (N_p^{3/4} √m)`.
    Ions { n_max: u64, m: u64 },
    /// `m` shots at fixed `Ñ`: `1 / (√Ñ √N_T)`.
    Fixed { n_tilde: u64, m: u64 },
    /// Geometric `r = 2` plan, each step `m` times, using the numerical
    /// prefactor: `2.55 / (√N_p √N_T)`.
    GeometricReplicated { p: u64, m: u64 },
}

impl GaussianFamily {
    pub fn schedule(&self) -> Result<Schedule> {
        match *self {
            GaussianFamily::Arithmetic { p, n_tilde } => Schedule::arithmetic(p, n_tilde),
            GaussianFamily::Geometric { p } => Schedule::geometric(p, 2, 1),
            GaussianFamily::Ions { n_max, m } => Schedule::ion_sequence(n_max, m),
            GaussianFamily::Fixed { n_tilde, m } => Schedule::fixed(n_tilde, m),
            GaussianFamily::GeometricReplicated { p, m } => Schedule::geometric(p, 2, m),
        }
    }
}

impl FromStr for GaussianFamily {
    type Err = Error;

    /// Accepts the schedule literal syntax for the matching family, e.g.
    /// `geom:p=10`, `arith:p=40,nt=2`, `ions:nmax=6,m=4`, `fixed:n=3,m=10`;
    /// `geom` with `m > 1` selects the replicated form. `r ≠ 2` and
    /// `single:` have no closed form and are rejected.
    fn from_str(s: &str) -> Result<Self> {
        use crate::schedule::ScheduleSpec;
        match s.parse::<ScheduleSpec>()? {
            ScheduleSpec::Arithmetic { p, n_tilde } => {
                Ok(GaussianFamily::Arithmetic { p, n_tilde })
            }
            ScheduleSpec::Geometric { p, r: 2, m: 1 } => Ok(GaussianFamily::Geometric { p }),
            ScheduleSpec::Geometric { p, r: 2, m } => {
                Ok(GaussianFamily::GeometricReplicated { p, m })
            }
            ScheduleSpec::Fixed { n_tilde, m } => Ok(GaussianFamily::Fixed { n_tilde, m }),
            ScheduleSpec::Ions { n_max, m } => Ok(GaussianFamily::Ions { n_max, m }),
            other => Err(Error::InvalidArgument(format!(
                "no closed-form prediction for `{other}`"
            ))),
        }
    }
}

/// Closed-form width predicted for a schedule family.
pub fn gaussian_prediction<T: Real>(family: GaussianFamily) -> Result<T> {
    let n_total = from_u64::<T>(family.schedule()?.total_particles()?);
    let quarter = lit::<T>(0.25);
    let value = match family {
        GaussianFamily::Arithmetic { n_tilde, .. } => {
            lit::<T>(4.5).powf(quarter)
                / (from_u64::<T>(n_tilde).powf(quarter) * n_total.powf(lit(0.75)))
        }
        GaussianFamily::Geometric { .. } => lit::<T>(6.0).sqrt() / n_total,
        GaussianFamily::Ions { n_max, m } => {
            let n_p = from_u64::<T>(n_max * (n_max + 1) / 2);
            lit::<T>(1.125).powf(quarter) / (n_p.powf(lit(0.75)) * from_u64::<T>(m).sqrt())
        }
        GaussianFamily::Fixed { n_tilde, .. } => {
            (from_u64::<T>(n_tilde).sqrt() * n_total.sqrt()).recip()
        }
        GaussianFamily::GeometricReplicated { p, .. } => {
            let n_p = from_u64::<T>(Schedule::geometric(p, 2, 1)?.total_particles()?);
            lit::<T>(GEOMETRIC_PREFACTOR) / (n_p.sqrt() * n_total.sqrt())
        }
    };
    Ok(value)
}

/// Fit of `ln ΔΘ = ln c − α·ln N_T` with `α` held fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit<T> {
    pub exponent: T,
    pub prefactor: T,
    /// RMS deviation in log space.
    pub residual: T,
    pub n_points: usize,
}

/// Least-squares prefactor for fixed exponent. With `α` fixed the optimum is
/// the geometric mean of `ΔΘ·N_T^α`.
pub fn fit_prefactor<T: Real>(points: &[(T, T)], exponent: T) -> Result<ScalingFit<T>> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 points to fit, got {}",
            points.len()
        )));
    }
    if points
        .iter()
        .any(|&(n, d)| !(n > T::zero() && d > T::zero() && n.is_finite() && d.is_finite()))
    {
        return Err(Error::InvalidArgument(
            "fit points must have positive finite N_T and ΔΘ".into(),
        ));
    }
    for (i, a) in points.iter().enumerate() {
        if points[i + 1..].iter().any(|b| b.0 == a.0) {
            return Err(Error::InvalidArgument(format!(
                "duplicate N_T = {} in fit points",
                a.0
            )));
        }
    }
    let k = from_usize::<T>(points.len());
    let logs: Vec<T> = points
        .iter()
        .map(|&(n, d)| d.ln() + exponent * n.ln())
        .collect();
    let log_c = logs.iter().copied().fold(T::zero(), |a, b| a + b) / k;
    let ss = logs
        .iter()
        .map(|&l| (l - log_c) * (l - log_c))
        .fold(T::zero(), |a, b| a + b);
    Ok(ScalingFit {
        exponent,
        prefactor: log_c.exp(),
        residual: (ss / k).sqrt(),
        n_points: points.len(),
    })
}

/// Posterior after every measurement of `schedule` returned "yes" under
/// ideal fringes, which is what happens with certainty at `θ = 0`.
pub fn all_yes_posterior<T: Real>(
    schedule: &Schedule,
    window: PriorWindow<T>,
    grid_points: Option<usize>,
) -> Result<LogPosterior<T>> {
    let n = match grid_points {
        Some(n) => n,
        None => default_grid_points(schedule.total_particles()?),
    };
    let mut posterior = LogPosterior::uniform(window.grid(n)?);
    for step in schedule.steps() {
        posterior.update_repeated(
            &FringeModel::ideal(step.n_particles)?,
            Outcome::Yes,
            step.replicas,
        );
    }
    Ok(posterior)
}

pub fn all_yes_summary<T: Real>(
    schedule: &Schedule,
    window: PriorWindow<T>,
    grid_points: Option<usize>,
) -> Result<PosteriorSummary<T>> {
    Ok(all_yes_posterior(schedule, window, grid_points)?
        .normalize()?
        .summarize(lit(CONFIDENCE_MASS)))
}

/// Protocol families for the deterministic scaling study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingFamily {
    Geometric { r: u64, m: u64 },
    Arithmetic { n_tilde: u64 },
}

impl ScalingFamily {
    pub fn schedule(&self, p: u64) -> Result<Schedule> {
        match *self {
            ScalingFamily::Geometric { r, m } => Schedule::geometric(p, r, m),
            ScalingFamily::Arithmetic { n_tilde } => Schedule::arithmetic(p, n_tilde),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow<T> {
    pub p: u64,
    pub n_total: u64,
    pub delta_theta: T,
    pub saturated: bool,
    pub report: SensitivityReport<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingStudy<T> {
    pub rows: Vec<ScalingRow<T>>,
    /// Fit over the non-saturated rows.
    pub fit: ScalingFit<T>,
}

/// All-"yes" widths for each `p`, and the fixed-exponent prefactor fit.
/// Saturated widths are listed but left out of the fit.
pub fn scaling_study<T: Real>(
    family: ScalingFamily,
    ps: &[u64],
    exponent: T,
    window: PriorWindow<T>,
    grid_points: Option<usize>,
) -> Result<ScalingStudy<T>> {
    let rows = ps
        .par_iter()
        .map(|&p| {
            let schedule = family.schedule(p)?;
            let n_total = schedule.total_particles()?;
            let s = all_yes_summary(&schedule, window, grid_points)?;
            Ok(ScalingRow {
                p,
                n_total,
                delta_theta: s.half_width,
                saturated: s.saturated,
                report: SensitivityReport::new(
                    from_u64(n_total),
                    s.half_width,
                    Baseline::ShotNoise,
                )?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(T, T)> = rows
        .iter()
        .filter(|r| !r.saturated)
        .map(|r| (from_u64::<T>(r.n_total), r.delta_theta))
        .collect();
    let fit = fit_prefactor(&points, exponent)?;
    Ok(ScalingStudy { rows, fit })
}

/// Number of geometric steps used for ratio `r` in the replica sweep when the
/// caller does not choose one.
pub fn default_fig_m_depth(r: u64) -> u64 {
    match r {
        3 => 6,
        4 => 4,
        5 => 3,
        _ => 4,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FigMRow<T> {
    pub r: u64,
    pub p: u64,
    pub m: u64,
    pub n_total: u64,
    pub delta_theta: T,
    /// `ΔΘ·N_T`, the resource-normalised sensitivity compared across `M`.
    pub normalized: T,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigMSweep<T> {
    pub rows: Vec<FigMRow<T>>,
    /// `(r, M)` minimising `ΔΘ·N_T` for each ratio, in input order.
    pub optima: Vec<(u64, u64)>,
}

/// Sensitivity of `geometric(p, r, M)` plans at `θ = 0` for each `(r, p)` and
/// every `M`, with the `M` minimising `ΔΘ·N_T` per ratio. Ties go to the
/// smaller `M`.
pub fn fig_m_sweep<T: Real>(
    plans: &[(u64, u64)],
    ms: &[u64],
    grid_points: Option<usize>,
) -> Result<FigMSweep<T>> {
    if plans.is_empty() || ms.is_empty() {
        return Err(Error::InvalidArgument(
            "replica sweep needs at least one ratio and one replica count".into(),
        ));
    }
    let window = PriorWindow::symmetric(T::one())?;
    let jobs: Vec<(u64, u64, u64)> = plans
        .iter()
        .flat_map(|&(r, p)| ms.iter().map(move |&m| (r, p, m)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(r, p, m)| {
            let schedule = Schedule::geometric(p, r, m)?;
            let n_total = schedule.total_particles()?;
            let s = all_yes_summary(&schedule, window, grid_points)?;
            Ok(FigMRow {
                r,
                p,
                m,
                n_total,
                delta_theta: s.half_width,
                normalized: s.half_width * from_u64::<T>(n_total),
                saturated: s.saturated,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let optima = plans
        .iter()
        .map(|&(r, p)| {
            let best = rows
                .iter()
                .filter(|row| row.r == r && row.p == p)
                .fold(None::<&FigMRow<T>>, |best, row| match best {
                    Some(b) if b.normalized <= row.normalized => Some(b),
                    _ => Some(row),
                })
                .expect("every plan has rows");
            (r, best.m)
        })
        .collect();
    Ok(FigMSweep { rows, optima })
}

/// Plans with closed-form asymptotic posteriors for the gain scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainFamily {
    /// Cats of `1..=n_max` particles under a full prior.
    Ions { n_max: u64 },
    /// A single cat size `Ñ` under the prior `[−π/Ñ, π/Ñ]`.
    Fixed { n_tilde: u64 },
}

impl GainFamily {
    pub fn particle_numbers(&self) -> Vec<u64> {
        match *self {
            GainFamily::Ions { n_max } => (1..=n_max).collect(),
            GainFamily::Fixed { n_tilde } => vec![n_tilde],
        }
    }

    /// Folded prior window: `[0, π]` for ions, `[0, π/Ñ]` for fixed cats.
    pub fn window<T: Real>(&self) -> Result<PriorWindow<T>> {
        match *self {
            GainFamily::Ions { .. } => PriorWindow::folded(T::one()),
            GainFamily::Fixed { n_tilde } => PriorWindow::folded(from_u64(n_tilde)),
        }
    }

    /// Upper end of the phase range that can be estimated unambiguously.
    pub fn prior_bound<T: Real>(&self) -> Option<T> {
        match *self {
            GainFamily::Ions { .. } => None,
            GainFamily::Fixed { n_tilde } => Some(T::PI() / from_u64::<T>(n_tilde)),
        }
    }
}

/// Evenly spaced interior phases `[δ, π/L − δ]` with `δ = (π/L)/64`, keeping
/// clear of the window edges where the fringe touches 0 or 1.
pub fn default_theta_scan<T: Real>(window: &PriorWindow<T>, n: usize) -> Vec<T> {
    let (lo, hi) = window.bounds();
    let margin = (hi - lo) / lit(64.0);
    let (a, b) = (lo + margin, hi - margin);
    match n {
        0 => Vec::new(),
        1 => vec![(a + b) / lit(2.0)],
        _ => (0..n)
            .map(|i| a + (b - a) * from_usize::<T>(i) / from_usize::<T>(n - 1))
            .collect(),
    }
}

/// Grid size resolving the asymptotic peak, whose width is about
/// `1/√(M·ΣN²)`: 200 points per unit of that scale over `2π`, at least 4096.
pub fn asymptotic_grid_points<T: Real>(
    particle_numbers: &[u64],
    m: T,
    window: &PriorWindow<T>,
) -> usize {
    let info: f64 = particle_numbers
        .iter()
        .map(|&n| (n as f64) * (n as f64))
        .sum();
    let (lo, hi) = window.bounds();
    let span = to_f64(hi - lo) / (2.0 * std::f64::consts::PI);
    let n = (200.0 * (to_f64(m) * info).sqrt() * span).ceil();
    if n.is_finite() && n > 4096.0 {
        n as usize
    } else {
        4096
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainRow<T> {
    pub theta: T,
    pub delta_theta: T,
    pub gain_db: T,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainScan<T> {
    pub rows: Vec<GainRow<T>>,
    pub n_total: T,
    pub prior_bound: Option<T>,
}

/// Gain over shot noise versus the true phase, from the asymptotic
/// posterior with `m` replicas of each measurement.
pub fn gain_scan<T: Real>(
    family: GainFamily,
    models: &CalibrationTable<T>,
    thetas: &[T],
    m: T,
    grid_points: Option<usize>,
) -> Result<GainScan<T>> {
    let ns = family.particle_numbers();
    let fringes = ns
        .iter()
        .map(|&n| models.get(n).copied())
        .collect::<Result<Vec<_>>>()?;
    let window = family.window::<T>()?;
    let grid =
        window.grid(grid_points.unwrap_or_else(|| asymptotic_grid_points(&ns, m, &window)))?;
    let n_total = m * from_u64::<T>(ns.iter().sum());
    let rows = thetas
        .par_iter()
        .map(|&theta| {
            let s =
                asymptotic_posterior(&fringes, theta, m, &grid)?.summarize(lit(CONFIDENCE_MASS));
            Ok(GainRow {
                theta,
                delta_theta: s.half_width,
                gain_db: gain_db(s.half_width, n_total)?,
                saturated: s.saturated,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GainScan {
        rows,
        n_total,
        prior_bound: family.prior_bound(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baselines() {
        assert_eq!(shot_noise_limit(100.0).unwrap(), 0.1);
        assert_eq!(shot_noise_limit(1.0).unwrap(), 1.0);
        assert!((shot_noise_limit(15.0).unwrap() - 15f64.sqrt().recip()).abs() < 1e-16);
        assert_eq!(heisenberg_limit(100.0).unwrap(), 0.01);
        assert_eq!(heisenberg_limit(15.0).unwrap(), 1.0 / 15.0);
        assert_eq!(heisenberg_limit(1.0).unwrap(), 1.0);
        assert!(shot_noise_limit(0.5).is_err());
        assert!(heisenberg_limit(0.0).is_err());
    }

    #[test]
    fn gain_examples() {
        let n = 210.0f64;
        assert_eq!(gain_db(shot_noise_limit(n).unwrap(), n).unwrap(), 0.0);
        // Ideal ion protocol, N_p = 21: (9/8)^{1/4} / (N_p^{1/4} √N_T).
        let ion = 1.125f64.powf(0.25) / (21f64.powf(0.25) * n.sqrt());
        assert!((gain_db(ion, n).unwrap() - 3.18).abs() < 0.01);
        // Fixed Ñ = 3: 10·log10(√3).
        let fixed = 1.0 / (3f64.sqrt() * 30f64.sqrt());
        assert!((gain_db(fixed, 30.0).unwrap() - 2.386).abs() < 1e-3);
        assert!(gain_db(0.0, 10.0).is_err());
        assert!(gain_db(-1.0, 10.0).is_err());
    }

    #[test]
    fn heisenberg_gain_identity() {
        for n in [2u64, 3, 15, 1023, 1 << 20] {
            let nt = n as f64;
            let g = gain_db(heisenberg_limit(nt).unwrap(), nt).unwrap();
            assert!((g - 5.0 * nt.log10()).abs() < 1e-12);
        }
    }

    #[test]
    fn report_uses_baseline() {
        let r = SensitivityReport::new(100.0f64, 0.01, Baseline::Heisenberg).unwrap();
        assert_eq!(r.gain_db, 0.0);
        let r = SensitivityReport::new(100.0f64, 0.01, Baseline::ShotNoise).unwrap();
        assert!((r.gain_db - 10.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_predictions() {
        let g: f64 = gaussian_prediction(GaussianFamily::Geometric { p: 10 }).unwrap();
        assert!((g - 6f64.sqrt() / 1023.0).abs() < 1e-15);
        let p = 200u64;
        let nt = (p * (p + 1) / 2) as f64;
        let a: f64 = gaussian_prediction(GaussianFamily::Arithmetic { p, n_tilde: 1 }).unwrap();
        assert!((a - 4.5f64.powf(0.25) / nt.powf(0.75)).abs() < 1e-15);
        let ion: f64 = gaussian_prediction(GaussianFamily::Ions { n_max: 6, m: 4 }).unwrap();
        assert!((ion - 1.125f64.powf(0.25) / (21f64.powf(0.75) * 2.0)).abs() < 1e-15);
        let f: f64 = gaussian_prediction(GaussianFamily::Fixed { n_tilde: 3, m: 10 }).unwrap();
        assert!((f - 1.0 / 90f64.sqrt()).abs() < 1e-15);
        let r: f64 =
            gaussian_prediction(GaussianFamily::GeometricReplicated { p: 4, m: 9 }).unwrap();
        assert!((r - 2.55 / (15f64.sqrt() * 135f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn family_names() {
        assert_eq!(
            "geom:p=10".parse::<GaussianFamily>().unwrap(),
            GaussianFamily::Geometric { p: 10 }
        );
        assert_eq!(
            "geom:p=4,m=3".parse::<GaussianFamily>().unwrap(),
            GaussianFamily::GeometricReplicated { p: 4, m: 3 }
        );
        assert!("geom:p=4,r=3".parse::<GaussianFamily>().is_err());
        assert!("single:4".parse::<GaussianFamily>().is_err());
        assert!("cubic:p=4".parse::<GaussianFamily>().is_err());
    }

    #[test]
    fn exact_fit() {
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&n| (n, 2.55 / n))
            .collect();
        let fit = fit_prefactor(&pts, 1.0).unwrap();
        assert!((fit.prefactor - 2.55).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn fit_rejects_degenerate_points() {
        assert!(fit_prefactor(&[(10.0, 0.1)], 1.0).is_err());
        assert!(fit_prefactor(&[(10.0, 0.1), (10.0, 0.2)], 1.0).is_err());
        assert!(fit_prefactor(&[(10.0, 0.1), (20.0, -0.2)], 1.0).is_err());
    }

    #[test]
    fn fit_scales_with_data() {
        let pts: [(f64, f64); 3] = [(7.0, 0.31), (31.0, 0.09), (127.0, 0.021)];
        let base = fit_prefactor(&pts, 1.0).unwrap();
        let scaled: Vec<_> = pts.iter().map(|&(n, d)| (n, 3.0 * d)).collect();
        let fit = fit_prefactor(&scaled, 1.0).unwrap();
        assert!((fit.prefactor / base.prefactor - 3.0).abs() < 1e-12);
        assert!((fit.residual - base.residual).abs() < 1e-12);
    }

    #[test]
    fn fig_m_sweep_small() {
        let sweep = fig_m_sweep::<f64>(&[(2, 4)], &[1, 2, 3], None).unwrap();
        assert_eq!(sweep.rows.len(), 3);
        assert_eq!(sweep.optima, vec![(2, 1)]);
        let again = fig_m_sweep::<f64>(&[(2, 4)], &[1, 2, 3], None).unwrap();
        assert_eq!(sweep, again);
        assert!(fig_m_sweep::<f64>(&[], &[1], None).is_err());
    }

    #[test]
    fn theta_scan_stays_inside() {
        let w = PriorWindow::<f64>::folded(3.0).unwrap();
        let t = default_theta_scan(&w, 50);
        assert_eq!(t.len(), 50);
        let (lo, hi) = w.bounds();
        assert!(t.iter().all(|&x| x > lo && x < hi));
        assert!(t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn fixed_ideal_gain_is_flat() {
        let table = CalibrationTable::ideal([3]).unwrap();
        let family = GainFamily::Fixed { n_tilde: 3 };
        let thetas = default_theta_scan(&family.window::<f64>().unwrap(), 12);
        let scan = gain_scan(family, &table, &thetas, 1e4, None).unwrap();
        let target = 10.0 * 3f64.sqrt().log10();
        for row in &scan.rows {
            assert!((row.gain_db / target - 1.0).abs() < 0.02, "{row:?}");
        }
        assert_eq!(scan.prior_bound, Some(std::f64::consts::PI / 3.0));
    }

    #[test]
    fn gain_scan_requires_calibration_entries() {
        let table = CalibrationTable::ideal([1, 2, 3]).unwrap();
        let r = gain_scan(GainFamily::Ions { n_max: 6 }, &table, &[0.5], 10.0, None);
        assert!(matches!(r, Err(Error::MissingCalibration(4))));
    }
}
