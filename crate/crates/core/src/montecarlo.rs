//! Simulated estimation experiments.
//!
//! A trial draws yes/no outcomes at a hidden phase for every step and replica
//! of a schedule, folds them into a gridded posterior with the same fringe
//! models used for sampling, and reports the MAP estimate and its 68.27%
//! half-width. Trials are seeded by `(master_seed, trial_index)` through a
//! ChaCha8 stream, so any subset can run in any order or in parallel and
//! still reproduce bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fringe::{CalibrationTable, FringeModel, Outcome};
use crate::posterior::{
    default_grid_points, LikelihoodTable, LogPosterior, PhaseGrid, PriorWindow, CONFIDENCE_MASS,
};
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::schedule::Schedule;

/// Upper bound on memory spent caching per-cat-size likelihood tables.
const TABLE_CACHE_BYTES: usize = 256 << 20;

/// Identifies one trial's random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub trial_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        SeedSpec {
            master_seed,
            trial_index,
        }
    }

    /// Fresh generator positioned at the start of this trial's stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.trial_index);
        rng
    }
}

/// Draws one outcome at `theta_true`. Consumes exactly one `f64` from `rng`.
pub fn sample_outcome<T: Real, R: Rng + ?Sized>(
    model: &FringeModel<T>,
    theta_true: T,
    rng: &mut R,
) -> Outcome {
    let u: f64 = rng.gen();
    if u < to_f64(model.prob_yes(theta_true)) {
        Outcome::Yes
    } else {
        Outcome::No
    }
}

/// Where fringe models come from: the ideal law, or a calibration table.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource<T> {
    Ideal,
    Calibrated(CalibrationTable<T>),
}

impl<T: Real> ModelSource<T> {
    pub fn model_for(&self, n: u64) -> Result<FringeModel<T>> {
        match self {
            ModelSource::Ideal => FringeModel::ideal(n),
            ModelSource::Calibrated(table) => table.get(n).copied(),
        }
    }
}

/// Everything that defines a trial except its seed.
#[derive(Debug, Clone)]
pub struct TrialConfig<T> {
    pub schedule: Schedule,
    pub models: ModelSource<T>,
    pub theta_true: T,
    pub window: PriorWindow<T>,
    /// Overrides `max(4096, 200·N_T)`.
    pub grid_points: Option<usize>,
}

impl<T: Real> TrialConfig<T> {
    /// Ideal models, full symmetric prior, default grid.
    pub fn ideal(schedule: Schedule, theta_true: T) -> Self {
        TrialConfig {
            schedule,
            models: ModelSource::Ideal,
            theta_true,
            window: PriorWindow::symmetric(T::one()).expect("L = 1 is valid"),
            grid_points: None,
        }
    }

    pub fn grid(&self) -> Result<PhaseGrid<T>> {
        let n = match self.grid_points {
            Some(n) => n,
            None => default_grid_points(self.schedule.total_particles()?),
        };
        self.window.grid(n)
    }
}

/// Every measurement in schedule order: `(N, outcome)`.
pub type OutcomeLog = Vec<(u64, Outcome)>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult<T> {
    pub theta_true: T,
    pub estimate: T,
    pub half_width: T,
    pub outcomes: OutcomeLog,
    pub saturated: bool,
    pub secondary_peak_ratio: T,
    pub n_total: u64,
}

impl<T: Real> TrialResult<T> {
    /// `estimate − θ_true`, reduced to `(−π, π]` when `periodic`.
    pub fn error(&self, periodic: bool) -> T {
        let e = self.estimate - self.theta_true;
        if periodic {
            wrap_phase(e)
        } else {
            e
        }
    }
}

fn wrap_phase<T: Real>(x: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut y = x % two_pi;
    if y > T::PI() {
        y = y - two_pi;
    } else if y <= -T::PI() {
        y = y + two_pi;
    }
    y
}

struct StepModels<T> {
    model: FringeModel<T>,
    tables: Option<(LikelihoodTable<T>, LikelihoodTable<T>)>,
}

/// A trial configuration with models resolved and the grid fixed, reusable
/// across seeds.
pub struct Simulator<T> {
    config: TrialConfig<T>,
    grid: PhaseGrid<T>,
    steps: Vec<StepModels<T>>,
    n_total: u64,
}

impl<T: Real> Simulator<T> {
    pub fn new(config: TrialConfig<T>) -> Result<Self> {
        let grid = config.grid()?;
        let n_total = config.schedule.total_particles()?;
        let distinct = config.schedule.particle_numbers().len();
        let cache = 2 * distinct * grid.len() * std::mem::size_of::<T>() <= TABLE_CACHE_BYTES;
        let mut steps = Vec::with_capacity(config.schedule.steps().len());
        for step in config.schedule.steps() {
            let model = config.models.model_for(step.n_particles)?;
            let tables = cache.then(|| {
                (
                    LikelihoodTable::new(&model, Outcome::Yes, &grid),
                    LikelihoodTable::new(&model, Outcome::No, &grid),
                )
            });
            steps.push(StepModels { model, tables });
        }
        Ok(Simulator {
            config,
            grid,
            steps,
            n_total,
        })
    }

    pub fn config(&self) -> &TrialConfig<T> {
        &self.config
    }

    pub fn grid(&self) -> &PhaseGrid<T> {
        &self.grid
    }

    /// Samples all outcomes for `seed` and returns them with the posterior.
    pub fn simulate(&self, seed: SeedSpec) -> Result<(OutcomeLog, LogPosterior<T>)> {
        let mut rng = seed.rng();
        let theta = self.config.theta_true;
        let mut outcomes = Vec::with_capacity(self.config.schedule.measurement_count() as usize);
        let mut posterior = LogPosterior::uniform(self.grid);
        for (step, sm) in self.config.schedule.steps().iter().zip(&self.steps) {
            let mut yes = 0u64;
            for _ in 0..step.replicas {
                let o = sample_outcome(&sm.model, theta, &mut rng);
                if o == Outcome::Yes {
                    yes += 1;
                }
                outcomes.push((step.n_particles, o));
            }
            let no = step.replicas - yes;
            match &sm.tables {
                Some((ty, tn)) => {
                    posterior.apply(ty, yes)?;
                    posterior.apply(tn, no)?;
                }
                None => {
                    posterior.update_repeated(&sm.model, Outcome::Yes, yes);
                    posterior.update_repeated(&sm.model, Outcome::No, no);
                }
            }
        }
        Ok((outcomes, posterior))
    }

    pub fn run(&self, seed: SeedSpec) -> Result<TrialResult<T>> {
        let (outcomes, posterior) = self.simulate(seed)?;
        let summary = posterior.normalize()?.summarize(lit(CONFIDENCE_MASS));
        Ok(TrialResult {
            theta_true: self.config.theta_true,
            estimate: summary.map_estimate,
            half_width: summary.half_width,
            outcomes,
            saturated: summary.saturated,
            secondary_peak_ratio: summary.secondary_peak_ratio,
            n_total: self.n_total,
        })
    }

    /// Runs trials `0..n_trials` in parallel; results are in trial order.
    pub fn run_many(&self, n_trials: u64, master_seed: u64) -> Result<Vec<TrialResult<T>>> {
        (0..n_trials)
            .into_par_iter()
            .map(|i| {
                self.run(SeedSpec::new(master_seed, i))
                    .map_err(|e| Error::Trial {
                        index: i,
                        source: Box::new(e),
                    })
            })
            .collect()
    }
}

/// One complete simulated experiment.
pub fn run_trial<T: Real>(config: &TrialConfig<T>, seed: SeedSpec) -> Result<TrialResult<T>> {
    Simulator::new(config.clone())?.run(seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleStats<T> {
    pub n_trials: u64,
    pub mean_half_width: T,
    pub rms_error: T,
    pub mean_bias: T,
    pub saturation_fraction: T,
}

impl<T: Real> EnsembleStats<T> {
    /// Aggregates in slice order. Errors are wrapped to `(−π, π]` when `periodic`.
    pub fn from_trials(trials: &[TrialResult<T>], periodic: bool) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::InvalidArgument("no trials to aggregate".into()));
        }
        let n = from_usize::<T>(trials.len());
        let (mut width, mut sq, mut bias, mut sat) = (T::zero(), T::zero(), T::zero(), 0usize);
        for t in trials {
            let e = t.error(periodic);
            width = width + t.half_width;
            sq = sq + e * e;
            bias = bias + e;
            sat += usize::from(t.saturated);
        }
        Ok(EnsembleStats {
            n_trials: trials.len() as u64,
            mean_half_width: width / n,
            rms_error: (sq / n).sqrt(),
            mean_bias: bias / n,
            saturation_fraction: from_usize::<T>(sat) / n,
        })
    }
}

/// `n_trials` independent trials seeded from `master_seed`, aggregated.
pub fn run_ensemble<T: Real>(
    n_trials: u64,
    config: &TrialConfig<T>,
    master_seed: u64,
) -> Result<EnsembleStats<T>> {
    if n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    let sim = Simulator::new(config.clone())?;
    let trials = sim.run_many(n_trials, master_seed)?;
    EnsembleStats::from_trials(&trials, sim.grid().is_full_circle())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn certain_outcomes() {
        let mut rng = SeedSpec::new(1, 0).rng();
        let m1 = FringeModel::<f64>::ideal(1).unwrap();
        let m2 = FringeModel::<f64>::ideal(2).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_outcome(&m1, 0.0, &mut rng), Outcome::Yes);
            assert_eq!(sample_outcome(&m2, PI / 2.0, &mut rng), Outcome::No);
        }
    }

    #[test]
    fn half_fringe_frequency() {
        // prob_yes = 1/2: 3σ binomial bound for 1e5 draws is 3·0.5/√1e5 ≈ 4.7e-3.
        let m = FringeModel::<f64>::ideal(1).unwrap();
        let mut rng = SeedSpec::new(2024, 0).rng();
        let n = 100_000;
        let yes = (0..n)
            .filter(|_| sample_outcome(&m, PI / 2.0, &mut rng) == Outcome::Yes)
            .count();
        assert!((yes as f64 / n as f64 - 0.5).abs() < 5e-3);
    }

    #[test]
    fn seed_streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| SeedSpec::new(9, 3).rng().gen()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let b: u64 = SeedSpec::new(9, 4).rng().gen();
        assert_ne!(a[0], b);
    }

    #[test]
    fn geometric_at_zero_is_all_yes() {
        let cfg = TrialConfig::ideal(Schedule::geometric(4, 2, 1).unwrap(), 0.0f64);
        for seed in 0..5 {
            let t = run_trial(&cfg, SeedSpec::new(seed, 0)).unwrap();
            assert!(t.outcomes.iter().all(|(_, o)| *o == Outcome::Yes));
            assert_eq!(t.outcomes.len(), 4);
            assert_eq!(t.n_total, 15);
            assert!(t.estimate.abs() <= cfg.grid().unwrap().spacing());
        }
    }

    #[test]
    fn single_fifteen_is_fully_multimodal() {
        let cfg = TrialConfig::ideal(Schedule::single(15).unwrap(), 0.0f64);
        let t = run_trial(&cfg, SeedSpec::new(1, 0)).unwrap();
        assert!(t.estimate.abs() <= cfg.grid().unwrap().spacing());
        assert!((t.secondary_peak_ratio - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fixed_single_particle_width_shrinks() {
        let w = |k: u64| {
            let cfg = TrialConfig::ideal(Schedule::fixed(1, k).unwrap(), 0.0f64);
            run_trial(&cfg, SeedSpec::new(0, 0)).unwrap().half_width
        };
        let (a, b) = (w(16), w(64));
        assert!(b < a);
        assert!((a / b / 2.0 - 1.0).abs() < 0.05, "{a} {b}");
    }

    #[test]
    fn missing_calibration_is_reported() {
        let mut table = CalibrationTable::new();
        table
            .insert(FringeModel::new(1, 0.5, 0.9).unwrap())
            .unwrap();
        let mut cfg = TrialConfig::ideal(Schedule::ion_sequence(2, 1).unwrap(), 0.3f64);
        cfg.models = ModelSource::Calibrated(table);
        assert!(matches!(
            run_trial(&cfg, SeedSpec::new(0, 0)),
            Err(Error::MissingCalibration(2))
        ));
    }

    #[test]
    fn one_trial_ensemble_equals_trial() {
        let mut cfg = TrialConfig::ideal(Schedule::geometric(3, 2, 4).unwrap(), 0.4f64);
        cfg.window = PriorWindow::folded(1.0).unwrap();
        let stats = run_ensemble(1, &cfg, 77).unwrap();
        let t = run_trial(&cfg, SeedSpec::new(77, 0)).unwrap();
        assert_eq!(stats.n_trials, 1);
        assert_eq!(stats.mean_half_width, t.half_width);
        assert_eq!(stats.mean_bias, t.estimate - 0.4);
        assert_eq!(stats.rms_error, (t.estimate - 0.4).abs());
        assert_eq!(
            stats.saturation_fraction,
            if t.saturated { 1.0 } else { 0.0 }
        );
    }

    #[test]
    fn ensemble_is_deterministic() {
        let cfg = TrialConfig::ideal(Schedule::geometric(3, 2, 3).unwrap(), 0.7f64);
        let a = run_ensemble(40, &cfg, 5).unwrap();
        let b = run_ensemble(40, &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.rms_error * a.rms_error >= a.mean_bias * a.mean_bias * (1.0 - 1e-12));
        assert!(run_ensemble(0, &cfg, 5).is_err());
    }

    #[test]
    fn table_and_direct_paths_agree() {
        let mut cfg = TrialConfig::ideal(Schedule::ion_sequence(3, 4).unwrap(), 1.1f64);
        cfg.grid_points = Some(3001);
        let sim = Simulator::new(cfg.clone()).unwrap();
        let (_, with_tables) = sim.simulate(SeedSpec::new(3, 8)).unwrap();
        let (outcomes, _) = sim.simulate(SeedSpec::new(3, 8)).unwrap();
        let mut direct = LogPosterior::uniform(*sim.grid());
        for (n, o) in outcomes {
            direct.update(&FringeModel::ideal(n).unwrap(), o);
        }
        for (a, b) in with_tables.log_weights().iter().zip(direct.log_weights()) {
            assert!(a == b || (a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wrap_phase_range() {
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_phase(-3.0 * PI / 2.0) - PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_phase(0.25), 0.25);
    }
}
