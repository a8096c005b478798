//! Random orthonormal-basis measurements and count simulation.
//!
//! A setting is a unitary whose columns are the measurement vectors. Measuring
//! in the rotated frame (`U^dag rho U` in the computational basis) is the same
//! experiment: `Tr(U^dag rho U E_jj) = <u_j|rho|u_j>`.

use std::io::{Read, Write};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use crate::error::{Result, TomoError};
use crate::linalg::{self, CMatrix};
use crate::qstate::{DensityMatrix, UNITARY_TOL};
use crate::rng::stream_rng;

/// Probabilities in `[-PROB_CLAMP, 0)` are treated as round-off and set to 0.
pub const PROB_CLAMP: f64 = 1e-12;

/// One orthonormal basis; column `j` is the vector for outcome `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSetting {
    basis: CMatrix,
}

impl MeasurementSetting {
    pub fn new(basis: CMatrix) -> Result<Self> {
        if !basis.is_square() {
            return Err(TomoError::DimensionMismatch { expected: basis.nrows(), found: basis.ncols() });
        }
        let deviation = linalg::unitarity_defect(&basis);
        if deviation > UNITARY_TOL {
            return Err(TomoError::NonUnitaryBasis { deviation });
        }
        Ok(Self { basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn vector(&self, outcome: usize) -> DVector<Complex64> {
        self.basis.column(outcome).into_owned()
    }
}

/// Draws a Haar-distributed unitary: QR of a complex Ginibre matrix with the
/// phases of `diag(R)` moved into `Q`.
pub fn haar_sample<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<MeasurementSetting> {
    if d < 2 {
        return Err(TomoError::BadParameters(format!("Haar sampling needs d >= 2, got {d}")));
    }
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    loop {
        let z = CMatrix::from_fn(d, d, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        });
        let qr = z.qr();
        let r = qr.r();
        if (0..d).any(|j| r[(j, j)].norm() < 1e-300) {
            continue;
        }
        let mut q = qr.q();
        for j in 0..d {
            let phase = r[(j, j)] / r[(j, j)].norm();
            for i in 0..d {
                q[(i, j)] *= phase;
            }
        }
        return Ok(MeasurementSetting { basis: q });
    }
}

/// Qubit basis with `|e+> = cos(t/2)|0> + e^{i phi} sin(t/2)|1>` and
/// `|e-> = -e^{-i phi} sin(t/2)|0> + cos(t/2)|1>`.
pub fn bloch_setting(theta: f64, phi: f64) -> MeasurementSetting {
    let (s, c) = (theta / 2.0).sin_cos();
    let e = Complex64::from_polar(1.0, phi);
    let basis = CMatrix::from_row_slice(
        2,
        2,
        &[Complex64::new(c, 0.0), -e.conj() * s, e * s, Complex64::new(c, 0.0)],
    );
    MeasurementSetting { basis }
}

/// Bloch angles `(theta, phi)` of the first vector of a qubit setting, with
/// the global phase removed.
pub fn bloch_angles(s: &MeasurementSetting) -> (f64, f64) {
    let a = s.basis[(0, 0)];
    let b = s.basis[(1, 0)];
    let theta = 2.0 * b.norm().atan2(a.norm());
    let phi = (b.arg() - a.arg()).rem_euclid(std::f64::consts::TAU);
    (theta, phi)
}

/// `p_j = <v_j|rho|v_j>`.
pub fn outcome_probabilities(rho: &DensityMatrix, s: &MeasurementSetting) -> Result<Vec<f64>> {
    if rho.dim() != s.dim() {
        return Err(TomoError::DimensionMismatch { expected: rho.dim(), found: s.dim() });
    }
    probabilities_of(rho.matrix(), &s.basis)
}

pub(crate) fn probabilities_of(rho: &CMatrix, basis: &CMatrix) -> Result<Vec<f64>> {
    let rv = rho * basis;
    let mut out = Vec::with_capacity(basis.ncols());
    for j in 0..basis.ncols() {
        let p: Complex64 = basis.column(j).iter().zip(rv.column(j).iter()).map(|(v, w)| v.conj() * w).sum();
        let mut p = p.re;
        if p < 0.0 {
            if p < -PROB_CLAMP {
                return Err(TomoError::NegativeProbability { value: p });
            }
            p = 0.0;
        }
        out.push(p);
    }
    Ok(out)
}

/// An ordered list of `k` settings, with the seed they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementDesign {
    settings: Vec<MeasurementSetting>,
    seed: u64,
}

impl MeasurementDesign {
    pub fn new(settings: Vec<MeasurementSetting>, seed: u64) -> Result<Self> {
        let first = settings
            .first()
            .ok_or_else(|| TomoError::BadParameters("a design needs at least one setting".into()))?;
        let d = first.dim();
        if let Some(bad) = settings.iter().find(|s| s.dim() != d) {
            return Err(TomoError::DimensionMismatch { expected: d, found: bad.dim() });
        }
        Ok(Self { settings, seed })
    }

    /// `k` independent Haar settings drawn from stream `(seed, 0)`.
    pub fn haar(d: usize, k: usize, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, 0);
        let settings = (0..k).map(|_| haar_sample(d, &mut rng)).collect::<Result<Vec<_>>>()?;
        Self::new(settings, seed)
    }

    pub fn settings(&self) -> &[MeasurementSetting] {
        &self.settings
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.settings[0].dim()
    }

    pub fn len(&self) -> usize {
        self.settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }

    /// CSV of `setting_index,row,col,re,im` preceded by
    /// `# seed=<u64> d=<int> k=<int>`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# seed={} d={} k={}", self.seed, self.dim(), self.len())?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["setting_index", "row", "col", "re", "im"])?;
        for (si, s) in self.settings.iter().enumerate() {
            for row in 0..s.dim() {
                for col in 0..s.dim() {
                    let z = s.basis[(row, col)];
                    w.write_record(&[si.to_string(), row.to_string(), col.to_string(), z.re.to_string(), z.im.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let (meta, body) = text.split_once('\n').ok_or_else(|| TomoError::Parse("empty design file".into()))?;
        let fields = parse_meta(meta)?;
        let get = |key: &str| -> Result<u64> {
            fields
                .iter()
                .find(|(k, _)| k == key)
                .ok_or_else(|| TomoError::Parse(format!("missing `{key}` in design metadata")))?
                .1
                .parse::<u64>()
                .map_err(|e| TomoError::Parse(format!("bad `{key}`: {e}")))
        };
        let (seed, d, k) = (get("seed")?, get("d")? as usize, get("k")? as usize);
        let mut bases = vec![CMatrix::zeros(d, d); k];
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        for rec in rdr.records() {
            let rec = rec?;
            let idx = |i: usize| -> Result<usize> {
                rec.get(i).unwrap_or("").trim().parse().map_err(|e| TomoError::Parse(format!("{e}")))
            };
            let val = |i: usize| -> Result<f64> {
                rec.get(i).unwrap_or("").trim().parse().map_err(|e| TomoError::Parse(format!("{e}")))
            };
            let (si, row, col) = (idx(0)?, idx(1)?, idx(2)?);
            if si >= k || row >= d || col >= d {
                return Err(TomoError::Parse(format!("entry ({si},{row},{col}) out of range")));
            }
            bases[si][(row, col)] = Complex64::new(val(3)?, val(4)?);
        }
        let settings = bases.into_iter().map(MeasurementSetting::new).collect::<Result<Vec<_>>>()?;
        Self::new(settings, seed)
    }
}

pub(crate) fn parse_meta(line: &str) -> Result<Vec<(String, String)>> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| TomoError::Parse(format!("expected metadata line, got `{line}`")))?;
    body.split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| TomoError::Parse(format!("bad metadata field `{kv}`")))
        })
        .collect()
}

/// `d x k` outcome counts, one column per setting; each column sums to `m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountsTable {
    columns: Vec<Vec<u64>>,
    reps: u64,
}

impl CountsTable {
    /// `columns[s][o]` is the count of outcome `o` in setting `s`.
    pub fn new(columns: Vec<Vec<u64>>, reps: u64) -> Result<Self> {
        if columns.is_empty() {
            return Err(TomoError::InconsistentCounts("no settings".into()));
        }
        let d = columns[0].len();
        for (s, col) in columns.iter().enumerate() {
            if col.len() != d {
                return Err(TomoError::InconsistentCounts(format!("setting {s} has {} outcomes, expected {d}", col.len())));
            }
            let total: u64 = col.iter().sum();
            if total != reps {
                return Err(TomoError::InconsistentCounts(format!("setting {s} sums to {total}, expected {reps}")));
            }
        }
        Ok(Self { columns, reps })
    }

    pub fn reps(&self) -> u64 {
        self.reps
    }

    pub fn num_settings(&self) -> usize {
        self.columns.len()
    }

    pub fn dim(&self) -> usize {
        self.columns[0].len()
    }

    pub fn column(&self, setting: usize) -> &[u64] {
        &self.columns[setting]
    }

    pub fn get(&self, outcome: usize, setting: usize) -> u64 {
        self.columns[setting][outcome]
    }

    /// Total number of measured systems `N = m k`.
    pub fn total(&self) -> u64 {
        self.reps * self.columns.len() as u64
    }

    /// CSV with header `setting_index,outcome_index,count`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["setting_index", "outcome_index", "count"])?;
        for (s, col) in self.columns.iter().enumerate() {
            for (o, c) in col.iter().enumerate() {
                w.write_record(&[s.to_string(), o.to_string(), c.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).from_reader(input);
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let field = |i: usize| -> Result<u64> {
                rec.get(i).unwrap_or("").trim().parse().map_err(|e| TomoError::Parse(format!("{e}")))
            };
            entries.push((field(0)? as usize, field(1)? as usize, field(2)?));
        }
        let k = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
        let d = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
        let mut columns = vec![vec![0u64; d]; k];
        for (s, o, c) in entries {
            columns[s][o] = c;
        }
        let reps = columns.first().map(|c| c.iter().sum()).unwrap_or(0);
        Self::new(columns, reps)
    }
}

/// One multinomial draw via sequential conditional binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(m: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut remaining = m;
    let mut mass = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = remaining;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let c = if q >= 1.0 {
            remaining
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(remaining, q).expect("valid binomial").sample(rng)
        };
        out[i] = c;
        remaining -= c;
        mass -= p;
    }
    out
}

/// Simulates `m` repetitions in every setting of the design.
pub fn simulate_counts<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    design: &MeasurementDesign,
    m: u64,
    rng: &mut R,
) -> Result<CountsTable> {
    if m == 0 {
        return Err(TomoError::BadParameters("m must be at least 1".into()));
    }
    let columns = design
        .settings
        .iter()
        .map(|s| outcome_probabilities(rho, s).map(|p| sample_multinomial(m, &p, rng)))
        .collect::<Result<Vec<_>>>()?;
    CountsTable::new(columns, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::make_rank_r_state;
    use std::f64::consts::PI;

    #[test]
    fn haar_is_unitary() {
        let mut rng = stream_rng(1, 0);
        for d in 2..=6 {
            for _ in 0..50 {
                let u = haar_sample(d, &mut rng).unwrap();
                assert!(linalg::unitarity_defect(u.basis()) <= 1e-10);
            }
        }
        assert!(haar_sample(1, &mut rng).is_err());
    }

    fn mean_u11_sq(d: usize, n: usize, seed: u64) -> f64 {
        let mut rng = stream_rng(seed, 0);
        (0..n).map(|_| haar_sample(d, &mut rng).unwrap().basis()[(0, 0)].norm_sqr()).sum::<f64>() / n as f64
    }

    #[test]
    fn haar_first_moment() {
        assert!((mean_u11_sq(2, 100_000, 2) - 0.5).abs() < 0.01);
        assert!((mean_u11_sq(4, 100_000, 3) - 0.25).abs() < 0.01);
    }

    #[test]
    fn haar_invariance_smoke() {
        // <v_1|rho|v_1> for pure rho has mean 1/d under U and under VU.
        let d = 3;
        let n = 100_000;
        let mut rng = stream_rng(4, 0);
        let v = haar_sample(d, &mut rng).unwrap();
        let rho = make_rank_r_state(&[1.0], &CMatrix::identity(d, d)).unwrap();
        let (mut a, mut a2, mut b, mut b2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let u = haar_sample(d, &mut rng).unwrap();
            let x = outcome_probabilities(&rho, &u).unwrap()[0];
            let vu = MeasurementSetting::new(v.basis() * u.basis()).unwrap();
            let y = outcome_probabilities(&rho, &vu).unwrap()[0];
            a += x;
            a2 += x * x;
            b += y;
            b2 += y * y;
        }
        let nf = n as f64;
        for (s, s2) in [(a, a2), (b, b2)] {
            let mean = s / nf;
            let se = ((s2 / nf - mean * mean) / nf).sqrt();
            assert!((mean - 1.0 / d as f64).abs() < 3.0 * se, "mean {mean} se {se}");
        }
        let mixed = DensityMatrix::maximally_mixed(d);
        let u = haar_sample(d, &mut rng).unwrap();
        for p in outcome_probabilities(&mixed, &u).unwrap() {
            assert!((p - 1.0 / d as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn bloch_settings() {
        let s = bloch_setting(0.0, 0.0);
        assert!(linalg::max_abs_diff(s.basis(), &CMatrix::identity(2, 2)) < 1e-15);
        let x = bloch_setting(PI / 2.0, 0.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = CMatrix::from_row_slice(2, 2, &[Complex64::new(h, 0.0), Complex64::new(-h, 0.0), Complex64::new(h, 0.0), Complex64::new(h, 0.0)]);
        assert!(linalg::max_abs_diff(x.basis(), &expected) < 1e-15);

        let mut rng = stream_rng(5, 0);
        for _ in 0..1000 {
            let theta = rng.random::<f64>() * PI;
            let phi = rng.random::<f64>() * 2.0 * PI;
            let s = bloch_setting(theta, phi);
            assert!(MeasurementSetting::new(s.basis().clone()).is_ok());
            let (t2, p2) = bloch_angles(&s);
            assert!((t2 - theta).abs() < 1e-10);
            if theta > 1e-6 && theta < PI - 1e-6 {
                let dphi = (p2 - phi).rem_euclid(2.0 * PI);
                assert!(dphi.min(2.0 * PI - dphi) < 1e-8);
            }
        }
    }

    #[test]
    fn qubit_probability_formula() {
        let l2 = 0.3;
        let rho = make_rank_r_state(&[1.0 - l2, l2], &CMatrix::identity(2, 2)).unwrap();
        for &(theta, phi) in &[(0.3, 1.0), (2.0, 4.0), (PI, 0.2)] {
            let p = outcome_probabilities(&rho, &bloch_setting(theta, phi)).unwrap();
            let c2 = (theta / 2.0).cos().powi(2);
            assert!((p[0] - ((1.0 - l2) * c2 + l2 * (1.0 - c2))).abs() < 1e-14);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn pure_state_in_own_basis() {
        let mut rng = stream_rng(6, 0);
        let u = haar_sample(3, &mut rng).unwrap();
        let rho = make_rank_r_state(&[1.0], u.basis()).unwrap();
        let p = outcome_probabilities(&rho, &u).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] < 1e-12 && p[2] < 1e-12);
        let design = MeasurementDesign::new(vec![u], 0).unwrap();
        let counts = simulate_counts(&rho, &design, 100, &mut rng).unwrap();
        assert_eq!(counts.column(0), &[100, 0, 0]);
    }

    #[test]
    fn probabilities_are_distributions() {
        let mut rng = stream_rng(8, 0);
        for _ in 0..200 {
            let u = haar_sample(4, &mut rng).unwrap();
            let rho = make_rank_r_state(&[0.5, 0.3, 0.2], haar_sample(4, &mut rng).unwrap().basis()).unwrap();
            let p = outcome_probabilities(&rho, &u).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn binomial_concentration_of_counts() {
        let rho = DensityMatrix::maximally_mixed(2);
        let design = MeasurementDesign::new(vec![bloch_setting(0.7, 0.1)], 0).unwrap();
        let counts = simulate_counts(&rho, &design, 1_000_000, &mut stream_rng(9, 0)).unwrap();
        for o in 0..2 {
            assert!((counts.get(o, 0) as f64 - 5e5).abs() < 5.0 * 500.0);
        }
    }

    #[test]
    fn counts_reproducible_and_column_sums() {
        let design = MeasurementDesign::haar(3, 20, 42).unwrap();
        let rho = make_rank_r_state(&[0.6, 0.4], MeasurementDesign::haar(3, 1, 1).unwrap().settings()[0].basis()).unwrap();
        let a = simulate_counts(&rho, &design, 777, &mut stream_rng(10, 1)).unwrap();
        let b = simulate_counts(&rho, &design, 777, &mut stream_rng(10, 1)).unwrap();
        assert_eq!(a, b);
        for s in 0..a.num_settings() {
            assert_eq!(a.column(s).iter().sum::<u64>(), 777);
        }
        assert!(simulate_counts(&rho, &design, 0, &mut stream_rng(10, 1)).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let rho = DensityMatrix::maximally_mixed(3);
        assert!(matches!(outcome_probabilities(&rho, &bloch_setting(0.1, 0.2)), Err(TomoError::DimensionMismatch { .. })));
    }

    #[test]
    fn csv_round_trips() {
        let design = MeasurementDesign::haar(3, 4, 99).unwrap();
        let mut buf = Vec::new();
        design.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# seed=99 d=3 k=4\nsetting_index,row,col,re,im\n"));
        assert_eq!(MeasurementDesign::read_csv(&buf[..]).unwrap(), design);

        let rho = DensityMatrix::maximally_mixed(3);
        let counts = simulate_counts(&rho, &design, 50, &mut stream_rng(1, 1)).unwrap();
        let mut buf = Vec::new();
        counts.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("setting_index,outcome_index,count\n"));
        assert_eq!(CountsTable::read_csv(&buf[..]).unwrap(), counts);
    }

    #[test]
    fn counts_table_validation() {
        assert!(CountsTable::new(vec![vec![3, 2], vec![4, 0]], 5).is_err());
        assert!(CountsTable::new(vec![vec![3, 2], vec![4, 1]], 5).is_ok());
    }
}
