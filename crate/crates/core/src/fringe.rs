//! Outcome probabilities for a single interferometric measurement with an
//! `N`-particle cat state.
//!
//! The calibrated fringe is `P(yes | N, θ) = A + (C/2)·cos(Nθ)`; the ideal
//! interferometer has `A = 1/2`, `C = 1`, which reduces to `cos²(Nθ/2)`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{from_u64, lit, to_f64, Real};

/// Binary measurement result: projection onto the all-up state or not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Yes,
    No,
}

impl Outcome {
    pub fn flip(self) -> Outcome {
        match self {
            Outcome::Yes => Outcome::No,
            Outcome::No => Outcome::Yes,
        }
    }
}

/// Probability law `A + (C/2)·cos(Nθ)` for one cat size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeModel<T> {
    n_particles: u64,
    offset: T,
    contrast: T,
}

impl<T: Real> FringeModel<T> {
    /// Validated constructor. Rejects any `(A, C)` for which the law leaves `[0, 1]`.
    pub fn new(n_particles: u64, offset: T, contrast: T) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidModel {
            n: n_particles,
            reason,
        };
        if n_particles == 0 {
            return Err(invalid("particle number must be at least 1".into()));
        }
        if !offset.is_finite() || !contrast.is_finite() {
            return Err(invalid("offset and contrast must be finite".into()));
        }
        if contrast < T::zero() {
            return Err(invalid(format!("contrast {contrast} is negative")));
        }
        let half = contrast / lit(2.0);
        if offset - half < T::zero() {
            return Err(invalid(format!(
                "A - C/2 = {} is below 0",
                to_f64(offset - half)
            )));
        }
        if offset + half > T::one() {
            return Err(invalid(format!(
                "A + C/2 = {} exceeds 1",
                to_f64(offset + half)
            )));
        }
        Ok(FringeModel {
            n_particles,
            offset,
            contrast,
        })
    }

    /// Perfect-fidelity fringe, `A = 1/2`, `C = 1`.
    pub fn ideal(n_particles: u64) -> Result<Self> {
        Self::new(n_particles, lit(0.5), T::one())
    }

    pub fn n_particles(&self) -> u64 {
        self.n_particles
    }

    pub fn offset(&self) -> T {
        self.offset
    }

    pub fn contrast(&self) -> T {
        self.contrast
    }

    pub fn is_ideal(&self) -> bool {
        self.offset == lit(0.5) && self.contrast == T::one()
    }

    /// `A + (C/2)·cos(Nθ)`, evaluated as `(A − C/2) + C·cos²(Nθ/2)` so both
    /// terms are non-negative and the result keeps full relative precision
    /// near fringe minima.
    pub fn prob_yes(&self, theta: T) -> T {
        let c = (self.half_angle(theta)).cos();
        let floor = self.offset - self.contrast / lit(2.0);
        floor + self.contrast * c * c
    }

    /// Complement of [`prob_yes`](Self::prob_yes); the two always sum to exactly one.
    pub fn prob_no(&self, theta: T) -> T {
        T::one() - self.prob_yes(theta)
    }

    pub fn prob(&self, outcome: Outcome, theta: T) -> T {
        match outcome {
            Outcome::Yes => self.prob_yes(theta),
            Outcome::No => self.prob_no(theta),
        }
    }

    /// Natural log of `P(outcome | N, φ)`; `-∞` where the probability is exactly 0.
    ///
    /// The "no" branch uses `(1 − A − C/2) + C·sin²(Nφ/2)` rather than
    /// `1 − P(yes)` so that deep fringe minima are not lost to cancellation.
    pub fn log_likelihood(&self, outcome: Outcome, phi: T) -> T {
        let x = self.half_angle(phi);
        let half = self.contrast / lit(2.0);
        let p = match outcome {
            Outcome::Yes => {
                let c = x.cos();
                (self.offset - half) + self.contrast * c * c
            }
            Outcome::No => {
                let s = x.sin();
                (T::one() - self.offset - half) + self.contrast * s * s
            }
        };
        p.ln()
    }

    fn half_angle(&self, theta: T) -> T {
        from_u64::<T>(self.n_particles) * theta / lit(2.0)
    }
}

/// Squared overlap `|⟨Ψ_N|Ψ_N(θ)⟩|²` computed from the explicit two-amplitude
/// NOON state `(|N,0⟩ + |0,N⟩)/√2` evolved under `exp(−iθĴ_z)`.
///
/// Independent of [`FringeModel::prob_yes`]; used to cross-check the closed form.
pub fn noon_overlap_oracle<T: Real>(n: u64, theta: T) -> Result<T> {
    if n == 0 {
        return Err(Error::InvalidModel {
            n,
            reason: "particle number must be at least 1".into(),
        });
    }
    let amp = T::FRAC_1_SQRT_2();
    let initial = [Complex::new(amp, T::zero()), Complex::new(amp, T::zero())];
    // Ĵ_z eigenvalues: +N/2 on |N,0⟩, −N/2 on |0,N⟩.
    let jz = [from_u64::<T>(n) / lit(2.0), -from_u64::<T>(n) / lit(2.0)];
    let evolved: Vec<Complex<T>> = initial
        .iter()
        .zip(jz)
        .map(|(a, m)| a * Complex::from_polar(T::one(), -m * theta))
        .collect();
    let overlap: Complex<T> = initial
        .iter()
        .zip(&evolved)
        .map(|(a, b)| a.conj() * b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, z| acc + z);
    Ok(overlap.norm_sqr())
}

/// Per-cat-size `(A, C)` values measured for a real interferometer.
///
/// Lookups of an absent `N` fail; there is no fallback to the ideal fringe.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable<T> {
    entries: BTreeMap<u64, FringeModel<T>>,
}

impl<T: Real> Default for CalibrationTable<T> {
    fn default() -> Self {
        CalibrationTable {
            entries: BTreeMap::new(),
        }
    }
}

impl<T: Real> CalibrationTable<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a validated entry. Duplicate `N` is rejected.
    pub fn insert(&mut self, model: FringeModel<T>) -> Result<()> {
        let n = model.n_particles();
        if self.entries.contains_key(&n) {
            return Err(Error::CalibrationParse(format!(
                "duplicate entry for n={n}"
            )));
        }
        self.entries.insert(n, model);
        Ok(())
    }

    pub fn get(&self, n: u64) -> Result<&FringeModel<T>> {
        self.entries.get(&n).ok_or(Error::MissingCalibration(n))
    }

    pub fn contains(&self, n: u64) -> bool {
        self.entries.contains_key(&n)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FringeModel<T>> {
        self.entries.values()
    }

    /// Table with the ideal fringe for every `N` in `ns`.
    pub fn ideal<I: IntoIterator<Item = u64>>(ns: I) -> Result<Self> {
        let mut table = Self::new();
        for n in ns {
            table.insert(FringeModel::ideal(n)?)?;
        }
        Ok(table)
    }

    /// Writes the calibration document (see [`load_calibration`]).
    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(CALIBRATION_HEADER).map_err(csv_error)?;
        for m in self.entries.values() {
            out.write_record([
                m.n_particles().to_string(),
                m.offset().to_string(),
                m.contrast().to_string(),
            ])
            .map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }
}

const CALIBRATION_HEADER: [&str; 3] = ["n", "offset", "contrast"];

fn csv_error(e: csv::Error) -> Error {
    Error::CalibrationParse(e.to_string())
}

/// Parses a calibration document.
///
/// The document is comma-separated text. The first non-empty line is the
/// header `n,offset,contrast` (exactly these columns, in this order); each
/// following line is one cat size, e.g. `3,0.5,0.81`. `n` is a positive
/// integer and both reals use plain decimal notation (no exponents, no
/// `inf`/`nan`). Duplicate `n` is an error. An empty document, or one holding
/// only the header, yields an empty table.
pub fn load_calibration<T: Real, R: Read>(source: R) -> Result<CalibrationTable<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let mut table = CalibrationTable::new();
    if headers.is_empty() {
        return Ok(table);
    }
    if headers.iter().ne(CALIBRATION_HEADER) {
        return Err(Error::CalibrationParse(format!(
            "header must be exactly `n,offset,contrast`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let n: u64 = record[0].parse().map_err(|_| {
            Error::CalibrationParse(format!(
                "line {line}: `{}` is not a positive integer",
                &record[0]
            ))
        })?;
        if n == 0 {
            return Err(Error::CalibrationConstraint {
                n,
                reason: "particle number must be at least 1".into(),
            });
        }
        let offset = parse_decimal::<T>(&record[1], line)?;
        let contrast = parse_decimal::<T>(&record[2], line)?;
        let model = FringeModel::new(n, offset, contrast).map_err(|e| match e {
            Error::InvalidModel { n, reason } => Error::CalibrationConstraint { n, reason },
            other => other,
        })?;
        table.insert(model)?;
    }
    Ok(table)
}

fn parse_decimal<T: Real>(field: &str, line: u64) -> Result<T> {
    let ok_chars = field
        .chars()
        .all(|c| c.is_ascii_digit() || c == '.' || c == '-' || c == '+');
    let value = if ok_chars && field.chars().any(|c| c.is_ascii_digit()) {
        field.parse::<f64>().ok()
    } else {
        None
    };
    value.and_then(T::from_f64).ok_or_else(|| {
        Error::CalibrationParse(format!("line {line}: `{field}` is not a decimal real"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ideal_fringe_values() {
        let m1 = FringeModel::<f64>::ideal(1).unwrap();
        assert_eq!(m1.prob_yes(0.0), 1.0);
        let m2 = FringeModel::<f64>::ideal(2).unwrap();
        assert!(m2.prob_yes(PI / 2.0).abs() < 1e-15);
        let m6 = FringeModel::<f64>::ideal(6).unwrap();
        assert!(m6.prob_yes(PI / 6.0).abs() < 1e-15);
    }

    #[test]
    fn degraded_fringe_peak() {
        let m = FringeModel::<f64>::new(3, 0.5, 0.8).unwrap();
        assert!((m.prob_yes(0.0) - 0.9).abs() < 1e-15);
        assert!((m.prob_no(0.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_models() {
        assert!(FringeModel::<f64>::new(0, 0.5, 1.0).is_err());
        assert!(FringeModel::<f64>::new(2, 0.5, 1.2).is_err());
        assert!(FringeModel::<f64>::new(2, 0.3, 0.7).is_err());
        assert!(FringeModel::<f64>::new(2, 0.5, -0.1).is_err());
        assert!(FringeModel::<f64>::new(2, f64::NAN, 0.5).is_err());
    }

    #[test]
    fn oracle_examples() {
        assert!(noon_overlap_oracle(1, PI).unwrap().abs() < 1e-15);
        assert!(noon_overlap_oracle(4, PI / 4.0).unwrap().abs() < 1e-15);
        let expected = 0.75f64.cos().powi(2);
        let oracle = noon_overlap_oracle(5, 0.3).unwrap();
        let closed = FringeModel::ideal(5).unwrap().prob_yes(0.3);
        assert!((oracle - expected).abs() < 1e-14);
        assert!((closed - expected).abs() < 1e-14);
        assert!(noon_overlap_oracle::<f64>(0, 0.1).is_err());
    }

    #[test]
    fn log_likelihood_zero_is_neg_infinity() {
        let m = FringeModel::<f64>::ideal(1).unwrap();
        assert_eq!(m.log_likelihood(Outcome::No, 0.0), f64::NEG_INFINITY);
        assert_eq!(m.log_likelihood(Outcome::Yes, 0.0), 0.0);
    }

    #[test]
    fn log_likelihood_matches_probability() {
        let m = FringeModel::<f64>::new(4, 0.47, 0.81).unwrap();
        for i in 0..50 {
            let phi = -3.0 + 0.12 * i as f64;
            for o in [Outcome::Yes, Outcome::No] {
                let direct = m.prob(o, phi).ln();
                assert!((m.log_likelihood(o, phi) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_entry_calibration() {
        let doc = "n,offset,contrast\n1,0.5,0.98\n";
        let t = load_calibration::<f64, _>(doc.as_bytes()).unwrap();
        assert_eq!(t.len(), 1);
        let m = t.get(1).unwrap();
        assert_eq!(m.offset(), 0.5);
        assert_eq!(m.contrast(), 0.98);
    }

    #[test]
    fn calibration_constraint_names_n() {
        let doc = "n,offset,contrast\n2,0.5,1.2\n";
        match load_calibration::<f64, _>(doc.as_bytes()) {
            Err(Error::CalibrationConstraint { n, .. }) => assert_eq!(n, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_calibration_then_missing_lookup() {
        let t = load_calibration::<f64, _>("".as_bytes()).unwrap();
        assert!(t.is_empty());
        assert!(matches!(t.get(3), Err(Error::MissingCalibration(3))));
        let t = load_calibration::<f64, _>("n,offset,contrast\n".as_bytes()).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn calibration_parse_errors() {
        for doc in [
            "n,offset,contrast\n1,0.5,0.9\n1,0.5,0.8\n",
            "n,offset\n1,0.5\n",
            "n,contrast,offset\n1,0.5,0.9\n",
            "n,offset,contrast,extra\n1,0.5,0.9,1\n",
            "n,offset,contrast\n1,5e-1,0.9\n",
            "n,offset,contrast\nx,0.5,0.9\n",
            "n,offset,contrast\n1,0.5\n",
        ] {
            let r = load_calibration::<f64, _>(doc.as_bytes());
            assert!(
                matches!(r, Err(Error::CalibrationParse(_))),
                "{doc:?} gave {r:?}"
            );
        }
    }

    #[test]
    fn calibration_round_trip() {
        let mut t = CalibrationTable::<f64>::new();
        t.insert(FringeModel::new(1, 0.5, 0.98).unwrap()).unwrap();
        t.insert(FringeModel::new(3, 0.49, 0.8123456789012345).unwrap())
            .unwrap();
        t.insert(FringeModel::new(6, 0.51, 0.1 + 0.2).unwrap())
            .unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = load_calibration::<f64, _>(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn f32_fringe() {
        let m = FringeModel::<f32>::ideal(3).unwrap();
        assert!((m.prob_yes(0.2) - (0.3f32).cos().powi(2)).abs() < 1e-6);
    }
}
