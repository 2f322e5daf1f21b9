//! Measurement plans: which cat sizes are used, in what order, and how many
//! times each measurement is repeated.
//!
//! # Literal grammar
//!
//! ```text
//! literal  := family ":" params
//! single   := "single:" N                      e.g. single:15
//! arith    := "arith:" "p=" P ["," "nt=" Ñ]     e.g. arith:p=6,nt=1   (nt defaults to 1)
//! geom     := "geom:" "p=" P ["," "r=" R] ["," "m=" M]
//!                                              e.g. geom:p=4,r=2,m=1 (r=2, m=1 by default)
//! fixed    := "fixed:" "n=" Ñ "," "m=" M         e.g. fixed:n=3,m=10
//! ions     := "ions:" ["nmax=" K ","] "m=" M    e.g. ions:nmax=6,m=10 (nmax defaults to 6)
//! ```
//!
//! Keys may appear in any order; unknown or repeated keys are rejected and
//! every value is a positive decimal integer. [`ScheduleSpec`]'s `Display`
//! prints the canonical form with all keys spelled out.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One entry of a plan: `replicas` measurements with an `n_particles` cat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Step {
    pub n_particles: u64,
    pub replicas: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Schedule {
    steps: Vec<Step>,
}

impl Schedule {
    /// Arbitrary plan. Steps must be non-empty with positive entries.
    pub fn from_steps(steps: Vec<Step>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidSchedule(
                "a schedule needs at least one step".into(),
            ));
        }
        if let Some(s) = steps.iter().find(|s| s.n_particles == 0 || s.replicas == 0) {
            return Err(Error::InvalidSchedule(format!(
                "step ({}, {}) has a zero entry",
                s.n_particles, s.replicas
            )));
        }
        let schedule = Schedule { steps };
        schedule.total_particles()?;
        Ok(schedule)
    }

    /// One measurement with all `n_total` particles.
    pub fn single(n_total: u64) -> Result<Self> {
        positive("n_total", n_total)?;
        Self::from_steps(vec![Step {
            n_particles: n_total,
            replicas: 1,
        }])
    }

    /// `Ñ, 2Ñ, …, pÑ`, one shot each.
    pub fn arithmetic(p: u64, n_tilde: u64) -> Result<Self> {
        positive("p", p)?;
        positive("n_tilde", n_tilde)?;
        let steps = (1..=p)
            .map(|k| {
                k.checked_mul(n_tilde)
                    .map(|n| Step {
                        n_particles: n,
                        replicas: 1,
                    })
                    .ok_or_else(|| Error::Overflow(format!("{k}·{n_tilde} exceeds u64")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_steps(steps)
    }

    /// `1, r, r², …, r^{p−1}`, each repeated `m` times.
    pub fn geometric(p: u64, r: u64, m: u64) -> Result<Self> {
        positive("p", p)?;
        positive("r", r)?;
        positive("m", m)?;
        let mut steps = Vec::new();
        let mut n: u64 = 1;
        for k in 0..p {
            if k > 0 {
                n = n
                    .checked_mul(r)
                    .ok_or_else(|| Error::Overflow(format!("{r}^{k} exceeds u64")))?;
            }
            steps.push(Step {
                n_particles: n,
                replicas: m,
            });
        }
        Self::from_steps(steps)
    }

    /// `m` replicas of a fixed `Ñ`-particle measurement.
    pub fn fixed(n_tilde: u64, m: u64) -> Result<Self> {
        positive("n_tilde", n_tilde)?;
        positive("m", m)?;
        Self::from_steps(vec![Step {
            n_particles: n_tilde,
            replicas: m,
        }])
    }

    /// `1, 2, …, n_max`, each repeated `m` times.
    pub fn ion_sequence(n_max: u64, m: u64) -> Result<Self> {
        positive("n_max", n_max)?;
        positive("m", m)?;
        Self::from_steps(
            (1..=n_max)
                .map(|n| Step {
                    n_particles: n,
                    replicas: m,
                })
                .collect(),
        )
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// `Σ n_particles · replicas`, with overflow reported as an error.
    pub fn total_particles(&self) -> Result<u64> {
        self.steps.iter().try_fold(0u64, |acc, s| {
            s.n_particles
                .checked_mul(s.replicas)
                .and_then(|x| acc.checked_add(x))
                .ok_or_else(|| Error::Overflow("total particle count exceeds u64".into()))
        })
    }

    /// Total number of measurements, `Σ replicas`.
    pub fn measurement_count(&self) -> u64 {
        self.steps.iter().map(|s| s.replicas).sum()
    }

    /// Distinct cat sizes in order of first use.
    pub fn particle_numbers(&self) -> Vec<u64> {
        let mut out: Vec<u64> = Vec::new();
        for s in &self.steps {
            if !out.contains(&s.n_particles) {
                out.push(s.n_particles);
            }
        }
        out
    }
}

fn positive(name: &str, v: u64) -> Result<()> {
    if v == 0 {
        Err(Error::InvalidSchedule(format!("{name} must be at least 1")))
    } else {
        Ok(())
    }
}

/// A parsed schedule literal: the family and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleSpec {
    Single { n: u64 },
    Arithmetic { p: u64, n_tilde: u64 },
    Geometric { p: u64, r: u64, m: u64 },
    Fixed { n_tilde: u64, m: u64 },
    Ions { n_max: u64, m: u64 },
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<Schedule> {
        match *self {
            ScheduleSpec::Single { n } => Schedule::single(n),
            ScheduleSpec::Arithmetic { p, n_tilde } => Schedule::arithmetic(p, n_tilde),
            ScheduleSpec::Geometric { p, r, m } => Schedule::geometric(p, r, m),
            ScheduleSpec::Fixed { n_tilde, m } => Schedule::fixed(n_tilde, m),
            ScheduleSpec::Ions { n_max, m } => Schedule::ion_sequence(n_max, m),
        }
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ScheduleSpec::Single { n } => write!(f, "single:{n}"),
            ScheduleSpec::Arithmetic { p, n_tilde } => write!(f, "arith:p={p},nt={n_tilde}"),
            ScheduleSpec::Geometric { p, r, m } => write!(f, "geom:p={p},r={r},m={m}"),
            ScheduleSpec::Fixed { n_tilde, m } => write!(f, "fixed:n={n_tilde},m={m}"),
            ScheduleSpec::Ions { n_max, m } => write!(f, "ions:nmax={n_max},m={m}"),
        }
    }
}

fn syntax(token: &str, reason: impl Into<String>) -> Error {
    Error::ScheduleSyntax {
        token: token.to_string(),
        reason: reason.into(),
    }
}

fn parse_count(token: &str, value: &str) -> Result<u64> {
    if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
        return Err(syntax(token, "value must be a positive integer"));
    }
    match value.parse::<u64>() {
        Ok(0) => Err(syntax(token, "value must be at least 1")),
        Ok(v) => Ok(v),
        Err(_) => Err(syntax(token, "value out of range")),
    }
}

/// Parses `key=value,...` against the allowed key set.
fn parse_params<'a>(body: &'a str, allowed: &[&str]) -> Result<Vec<(&'a str, u64)>> {
    let mut out: Vec<(&str, u64)> = Vec::new();
    if body.is_empty() {
        return Ok(out);
    }
    for token in body.split(',') {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| syntax(token, "expected key=value"))?;
        if !allowed.contains(&key) {
            return Err(syntax(
                token,
                format!("unknown key `{key}` (allowed: {})", allowed.join(", ")),
            ));
        }
        if out.iter().any(|(k, _)| *k == key) {
            return Err(syntax(token, format!("key `{key}` given twice")));
        }
        out.push((key, parse_count(token, value)?));
    }
    Ok(out)
}

fn lookup(params: &[(&str, u64)], key: &str) -> Option<u64> {
    params.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

fn require(params: &[(&str, u64)], key: &str, literal: &str) -> Result<u64> {
    lookup(params, key).ok_or_else(|| syntax(literal, format!("missing required key `{key}`")))
}

impl FromStr for ScheduleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (family, body) = s
            .split_once(':')
            .ok_or_else(|| syntax(s, "expected `family:parameters`"))?;
        let spec = match family {
            "single" => {
                let n = match body.split_once('=') {
                    Some(("n", v)) => parse_count(body, v)?,
                    Some(_) => return Err(syntax(body, "expected a particle count or n=<count>")),
                    None => parse_count(body, body)?,
                };
                ScheduleSpec::Single { n }
            }
            "arith" => {
                let p = parse_params(body, &["p", "nt"])?;
                ScheduleSpec::Arithmetic {
                    p: require(&p, "p", s)?,
                    n_tilde: lookup(&p, "nt").unwrap_or(1),
                }
            }
            "geom" => {
                let p = parse_params(body, &["p", "r", "m"])?;
                ScheduleSpec::Geometric {
                    p: require(&p, "p", s)?,
                    r: lookup(&p, "r").unwrap_or(2),
                    m: lookup(&p, "m").unwrap_or(1),
                }
            }
            "fixed" => {
                let p = parse_params(body, &["n", "m"])?;
                ScheduleSpec::Fixed {
                    n_tilde: require(&p, "n", s)?,
                    m: require(&p, "m", s)?,
                }
            }
            "ions" => {
                let p = parse_params(body, &["nmax", "m"])?;
                ScheduleSpec::Ions {
                    n_max: lookup(&p, "nmax").unwrap_or(6),
                    m: require(&p, "m", s)?,
                }
            }
            other => {
                return Err(syntax(
                    other,
                    "unknown schedule family (expected single, arith, geom, fixed or ions)",
                ))
            }
        };
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steps(s: &Schedule) -> Vec<(u64, u64)> {
        s.steps()
            .iter()
            .map(|s| (s.n_particles, s.replicas))
            .collect()
    }

    #[test]
    fn single_schedules() {
        let s = Schedule::single(15).unwrap();
        assert_eq!(steps(&s), vec![(15, 1)]);
        assert_eq!(s.total_particles().unwrap(), 15);
        assert_eq!(steps(&Schedule::single(1).unwrap()), vec![(1, 1)]);
        assert!(Schedule::single(0).is_err());
    }

    #[test]
    fn arithmetic_schedules() {
        assert_eq!(
            Schedule::arithmetic(6, 1)
                .unwrap()
                .total_particles()
                .unwrap(),
            21
        );
        assert_eq!(steps(&Schedule::arithmetic(1, 1).unwrap()), vec![(1, 1)]);
        let s = Schedule::arithmetic(4, 3).unwrap();
        assert_eq!(steps(&s), vec![(3, 1), (6, 1), (9, 1), (12, 1)]);
        assert_eq!(s.total_particles().unwrap(), 30);
    }

    #[test]
    fn geometric_schedules() {
        let s = Schedule::geometric(4, 2, 1).unwrap();
        assert_eq!(steps(&s), vec![(1, 1), (2, 1), (4, 1), (8, 1)]);
        assert_eq!(s.total_particles().unwrap(), 15);
        assert_eq!(
            Schedule::geometric(3, 3, 4)
                .unwrap()
                .total_particles()
                .unwrap(),
            52
        );
        assert_eq!(steps(&Schedule::geometric(1, 5, 1).unwrap()), vec![(1, 1)]);
        assert!(matches!(
            Schedule::geometric(65, 2, 1),
            Err(Error::Overflow(_))
        ));
        assert_eq!(
            Schedule::geometric(64, 2, 1)
                .unwrap()
                .total_particles()
                .unwrap(),
            u64::MAX
        );
        assert!(matches!(
            Schedule::geometric(64, 2, 2),
            Err(Error::Overflow(_))
        ));
        assert!(Schedule::geometric(0, 2, 1).is_err());
    }

    #[test]
    fn fixed_and_ion_schedules() {
        assert_eq!(
            Schedule::fixed(3, 10).unwrap().total_particles().unwrap(),
            30
        );
        assert_eq!(Schedule::fixed(6, 1).unwrap().total_particles().unwrap(), 6);
        assert_eq!(
            Schedule::fixed(1, 100).unwrap().total_particles().unwrap(),
            100
        );
        assert_eq!(
            Schedule::ion_sequence(6, 1)
                .unwrap()
                .total_particles()
                .unwrap(),
            21
        );
        assert_eq!(
            Schedule::ion_sequence(6, 10)
                .unwrap()
                .total_particles()
                .unwrap(),
            210
        );
        assert_eq!(
            Schedule::ion_sequence(1, 5)
                .unwrap()
                .total_particles()
                .unwrap(),
            5
        );
        assert_eq!(
            Schedule::ion_sequence(6, 10).unwrap().measurement_count(),
            60
        );
    }

    #[test]
    fn literal_examples() {
        let cases = [
            ("single:15", ScheduleSpec::Single { n: 15 }),
            (
                "arith:p=6,nt=1",
                ScheduleSpec::Arithmetic { p: 6, n_tilde: 1 },
            ),
            ("arith:p=6", ScheduleSpec::Arithmetic { p: 6, n_tilde: 1 }),
            (
                "geom:p=4,r=2,m=1",
                ScheduleSpec::Geometric { p: 4, r: 2, m: 1 },
            ),
            ("geom:m=3,p=4", ScheduleSpec::Geometric { p: 4, r: 2, m: 3 }),
            ("fixed:n=3,m=10", ScheduleSpec::Fixed { n_tilde: 3, m: 10 }),
            ("ions:nmax=6,m=10", ScheduleSpec::Ions { n_max: 6, m: 10 }),
            ("ions:m=2", ScheduleSpec::Ions { n_max: 6, m: 2 }),
        ];
        for (text, spec) in cases {
            assert_eq!(text.parse::<ScheduleSpec>().unwrap(), spec, "{text}");
            assert_eq!(spec.to_string().parse::<ScheduleSpec>().unwrap(), spec);
        }
    }

    #[test]
    fn malformed_literals_name_the_token() {
        let cases = [
            ("geom:p=4,q=2", "q=2"),
            ("geom:p=4,p=5", "p=5"),
            ("geom:p=x", "p=x"),
            ("fixed:n=3", "fixed:n=3"),
            ("ions:nmax=6,m=0", "m=0"),
            ("spiral:p=3", "spiral"),
            ("single:abc", "abc"),
            ("geom", "geom"),
            ("arith:p6", "p6"),
        ];
        for (text, token) in cases {
            match text.parse::<ScheduleSpec>() {
                Err(Error::ScheduleSyntax { token: t, .. }) => assert_eq!(t, token, "{text}"),
                other => panic!("{text}: unexpected {other:?}"),
            }
        }
    }
}
