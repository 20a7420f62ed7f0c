//! Supervision objectives in double precision with analytic gradients.
//!
//! All reductions are means over masked rows, accumulated sequentially in
//! row order. Loss values are computed in double-double arithmetic; the
//! low-order part is kept on [`LossResult`] so finite-difference checks can
//! difference two nearby evaluations without f64 rounding noise.

mod dd;

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::record_rng;
use dd::{log_softmax_scaled, Dd};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("{0}")]
    Argument(String),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape((usize, usize), (usize, usize)),
    #[error("matrix file {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, LossError>;

/// Dense `(n_positions, vocab_size)` logits, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix(Array2<f64>);

impl LogitMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, v) = values.dim();
        if n < 1 || v < 2 {
            return Err(LossError::Argument(format!(
                "logit matrix {n}x{v}: need at least 1 row and 2 columns"
            )));
        }
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return Err(LossError::Argument(format!("non-finite logit {x}")));
        }
        Ok(LogitMatrix(values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let v = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != v) {
            return Err(LossError::Argument("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let a = Array2::from_shape_vec((rows.len(), v), flat).map_err(|e| LossError::Argument(e.to_string()))?;
        Self::new(a)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    /// Copy with one entry replaced; used by the finite-difference check.
    pub fn with_entry(&self, i: usize, j: usize, x: f64) -> LogitMatrix {
        let mut m = self.0.clone();
        m[[i, j]] = x;
        LogitMatrix(m)
    }

    /// Writes `rows: u64 LE`, `cols: u64 LE`, then row-major `f64 LE`.
    pub fn write_binary(&self, w: &mut impl Write) -> std::io::Result<()> {
        let (n, v) = self.dim();
        w.write_all(&(n as u64).to_le_bytes())?;
        w.write_all(&(v as u64).to_le_bytes())?;
        for x in self.0.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: String| LossError::Format {
            path: "<bytes>".into(),
            reason,
        };
        if bytes.len() < 16 {
            return Err(bad(format!("{} bytes, shorter than the header", bytes.len())));
        }
        let n = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
        let v = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let expected = n.checked_mul(v).and_then(|c| c.checked_mul(8)).map(|b| b + 16);
        if expected != Some(bytes.len()) {
            return Err(bad(format!(
                "header says {n}x{v} but body has {} bytes",
                bytes.len() - 16
            )));
        }
        let vals = bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let a = Array2::from_shape_vec((n, v), vals).map_err(|e| bad(e.to_string()))?;
        Self::new(a)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| LossError::Io {
                path: path.display().to_string(),
                source,
            })?;
        Self::read_binary(&bytes).map_err(|e| match e {
            LossError::Format { reason, .. } => LossError::Format {
                path: path.display().to_string(),
                reason,
            },
            other => other,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub loss: f64,
    /// Low-order part: `loss + loss_lo` carries about 106 significant bits.
    pub loss_lo: f64,
    pub grad: Array2<f64>,
}

impl LossResult {
    pub fn new(loss: f64, grad: Array2<f64>) -> Self {
        LossResult {
            loss,
            loss_lo: 0.0,
            grad,
        }
    }

    fn from_dd(loss: Dd, grad: Array2<f64>) -> Self {
        LossResult {
            loss: loss.hi,
            loss_lo: loss.lo,
            grad,
        }
    }

    fn exact(&self) -> Dd {
        Dd::from_f64(self.loss) + Dd::from_f64(self.loss_lo)
    }
}

/// Sum in a fixed pairwise tree.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

fn log_softmax_view(row: ArrayView1<f64>) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = row.iter().map(|x| x - max).collect();
    let exps: Vec<f64> = shifted.iter().map(|x| x.exp()).collect();
    let lse = pairwise_sum(&exps).ln();
    shifted.into_iter().map(|x| x - lse).collect()
}

/// Numerically stable log-softmax of one row.
pub fn log_softmax(row: &[f64]) -> Result<Vec<f64>> {
    if row.is_empty() {
        return Err(LossError::Argument("empty row".into()));
    }
    if let Some(x) = row.iter().find(|x| !x.is_finite()) {
        return Err(LossError::Argument(format!("non-finite logit {x}")));
    }
    Ok(log_softmax_view(ArrayView1::from(row)))
}

fn check_mask(n: usize, mask: &[bool]) -> Result<usize> {
    if mask.len() != n {
        return Err(LossError::Argument(format!(
            "mask has {} entries for {n} rows",
            mask.len()
        )));
    }
    Ok(mask.iter().filter(|&&m| m).count())
}

/// Mean negative log-likelihood of `targets` over masked rows.
pub fn masked_ce(logits: &LogitMatrix, targets: &[usize], mask: &[bool]) -> Result<LossResult> {
    let (n, v) = logits.dim();
    if targets.len() != n {
        return Err(LossError::Argument(format!("{} targets for {n} rows", targets.len())));
    }
    let count = check_mask(n, mask)?;
    if let Some(t) = targets.iter().find(|&&t| t >= v) {
        return Err(LossError::Argument(format!("target {t} outside vocabulary of {v}")));
    }
    let mut grad = Array2::zeros((n, v));
    if count == 0 {
        return Ok(LossResult::new(0.0, grad));
    }
    let scale = 1.0 / count as f64;
    let mut total = Dd::ZERO;
    for i in (0..n).filter(|&i| mask[i]) {
        let ls = log_softmax_scaled(logits.0.row(i).iter().copied(), 1.0);
        total = total - ls[targets[i]];
        for (j, l) in ls.iter().enumerate() {
            grad[[i, j]] = l.hi.exp() * scale;
        }
        grad[[i, targets[i]]] -= scale;
    }
    Ok(LossResult::from_dd(total.div(Dd::from_f64(count as f64)), grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// KL(teacher ‖ student)
    #[default]
    Forward,
    /// KL(student ‖ teacher)
    Reverse,
}

/// Temperature-scaled KL divergence between teacher and student, times
/// `T²`, averaged over masked rows. Gradient is with respect to the
/// student logits.
pub fn kl_distill(teacher: &LogitMatrix, student: &LogitMatrix, temperature: f64, mask: &[bool]) -> Result<LossResult> {
    kl_distill_with(teacher, student, temperature, mask, KlDirection::Forward)
}

pub fn kl_distill_with(
    teacher: &LogitMatrix,
    student: &LogitMatrix,
    temperature: f64,
    mask: &[bool],
    direction: KlDirection,
) -> Result<LossResult> {
    if teacher.dim() != student.dim() {
        return Err(LossError::Shape(teacher.dim(), student.dim()));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(LossError::Argument(format!(
            "temperature {temperature} must be positive"
        )));
    }
    let (n, v) = student.dim();
    let count = check_mask(n, mask)?;
    let mut grad = Array2::zeros((n, v));
    if count == 0 {
        return Ok(LossResult::new(0.0, grad));
    }
    let t = temperature;
    let scale = 1.0 / count as f64;
    let mut total = Dd::ZERO;
    for i in (0..n).filter(|&i| mask[i]) {
        let lp = log_softmax_scaled(teacher.0.row(i).iter().copied(), t);
        let lq = log_softmax_scaled(student.0.row(i).iter().copied(), t);
        let (p, q): (Vec<f64>, Vec<f64>) = lp.iter().zip(&lq).map(|(a, b)| (a.hi.exp(), b.hi.exp())).unzip();
        match direction {
            KlDirection::Forward => {
                for (a, b) in lp.iter().zip(&lq) {
                    total = total + a.exp() * (*a - *b);
                }
                for j in 0..v {
                    grad[[i, j]] = t * (q[j] - p[j]) * scale;
                }
            }
            KlDirection::Reverse => {
                let mut row = Dd::ZERO;
                for (a, b) in lp.iter().zip(&lq) {
                    row = row + b.exp() * (*b - *a);
                }
                total = total + row;
                let row = row.to_f64();
                for j in 0..v {
                    grad[[i, j]] = t * q[j] * ((lq[j] - lp[j]).to_f64() - row) * scale;
                }
            }
        }
    }
    let loss = (total * (t * t)).div(Dd::from_f64(count as f64));
    Ok(LossResult::from_dd(loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointLoss {
    pub total: f64,
    /// Low-order part of `total`.
    pub total_lo: f64,
    /// Gradient with respect to the Thinker logits.
    pub thinker_grad: Array2<f64>,
    /// Gradient with respect to the Talker logits, when present.
    pub talker_grad: Option<Array2<f64>>,
}

/// `ce + lambda_kl * kl + lambda_talker * talker_ce`, with gradients
/// combined the same way.
pub fn joint_loss(
    ce: &LossResult,
    kl: &LossResult,
    lambda_kl: f64,
    talker_ce: Option<&LossResult>,
    lambda_talker: f64,
) -> Result<JointLoss> {
    if !(lambda_kl >= 0.0 && lambda_talker >= 0.0) {
        return Err(LossError::Argument(format!(
            "weights must be non-negative (lambda_kl {lambda_kl}, lambda_talker {lambda_talker})"
        )));
    }
    if ce.grad.dim() != kl.grad.dim() {
        return Err(LossError::Shape(ce.grad.dim(), kl.grad.dim()));
    }
    let mut total = ce.exact() + kl.exact() * lambda_kl;
    if let Some(t) = talker_ce {
        total = total + t.exact() * lambda_talker;
    }
    Ok(JointLoss {
        total: total.hi,
        total_lo: total.lo,
        thinker_grad: &ce.grad + &(&kl.grad * lambda_kl),
        talker_grad: talker_ce.map(|t| &t.grad * lambda_talker),
    })
}

/// Max over coordinates of `|analytic − numeric| / max(|analytic|, |numeric|, 1e-12)`
/// using central differences of step `epsilon`.
pub fn finite_diff_check<F>(loss_fn: F, point: &LogitMatrix, epsilon: f64) -> Result<f64>
where
    F: Fn(&LogitMatrix) -> Result<LossResult>,
{
    if !(epsilon > 0.0) {
        return Err(LossError::Argument(format!("epsilon {epsilon} must be positive")));
    }
    let analytic = loss_fn(point)?.grad;
    if analytic.dim() != point.dim() {
        return Err(LossError::Shape(analytic.dim(), point.dim()));
    }
    let (n, v) = point.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..v {
            let x = point.0[[i, j]];
            let (xp, xm) = (x + epsilon, x - epsilon);
            let fp = loss_fn(&point.with_entry(i, j, xp))?.exact();
            let fm = loss_fn(&point.with_entry(i, j, xm))?.exact();
            // divide by the step actually taken after rounding
            let numeric = (fp - fm).to_f64() / (xp - xm);
            let a = analytic[[i, j]];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub cases: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub ce_max_error: f64,
    /// `(temperature, max error)` per temperature.
    pub kl_max_error: Vec<(f64, f64)>,
}

impl GradientReport {
    pub fn worst(&self) -> f64 {
        self.kl_max_error
            .iter()
            .map(|(_, e)| *e)
            .fold(self.ce_max_error, f64::max)
    }
}

pub const CHECK_TEMPERATURES: [f64; 3] = [0.5, 1.0, 2.0];

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, v: usize) -> LogitMatrix {
    let vals = (0..n * v).map(|_| rng.gen_range(-3.0..3.0)).collect();
    LogitMatrix::new(Array2::from_shape_vec((n, v), vals).unwrap()).unwrap()
}

fn random_mask(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    let mut m: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
    let k = rng.gen_range(0..n);
    m[k] = true;
    m
}

/// Finite-difference suite over `cases` random problems per objective.
pub fn gradient_suite(cases: usize, seed: u64, epsilon: f64) -> Result<GradientReport> {
    let mut ce_max: f64 = 0.0;
    let mut kl_max = CHECK_TEMPERATURES.map(|t| (t, 0.0f64)).to_vec();
    for case in 0..cases {
        let mut rng = record_rng(seed, &case.to_string(), "loss-check");
        let n = rng.gen_range(1..=6);
        let v = rng.gen_range(2..=9);
        let logits = random_matrix(&mut rng, n, v);
        let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..v)).collect();
        let mask = random_mask(&mut rng, n);
        let e = finite_diff_check(|m| masked_ce(m, &targets, &mask), &logits, epsilon)?;
        ce_max = ce_max.max(e);

        let teacher = random_matrix(&mut rng, n, v);
        for (t, worst) in kl_max.iter_mut() {
            let e = finite_diff_check(|m| kl_distill(&teacher, m, *t, &mask), &logits, epsilon)?;
            *worst = worst.max(e);
        }
    }
    Ok(GradientReport {
        cases,
        seed,
        epsilon,
        ce_max_error: ce_max,
        kl_max_error: kl_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> LogitMatrix {
        LogitMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn log_softmax_symmetric_pair() {
        let out = log_softmax(&[0.0, 0.0]).unwrap();
        assert!((out[0] + std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn log_softmax_large_gap_does_not_overflow() {
        let out = log_softmax(&[1000.0, 0.0]).unwrap();
        // exact: -log1p(e^-1000) and -1000 - log1p(e^-1000); e^-1000 underflows to 0
        assert_eq!(out[0], -(-1000f64).exp().ln_1p());
        assert_eq!(out[1], -1000.0 - (-1000f64).exp().ln_1p());
    }

    #[test]
    fn log_softmax_rejects_non_finite() {
        assert!(log_softmax(&[f64::NAN, 0.0]).is_err());
        assert!(log_softmax(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn ce_confident_logits() {
        let r = masked_ce(&m(&[&[10.0, -10.0]]), &[0], &[true]).unwrap();
        let expect = (-20f64).exp().ln_1p();
        assert!((r.loss - expect).abs() <= 1e-15 * expect);
        assert!((r.loss - 2.06e-9).abs() < 1e-11);
    }

    #[test]
    fn ce_uniform_is_ln_v() {
        for v in 2..20 {
            let logits = LogitMatrix::new(Array2::from_elem((3, v), 0.7)).unwrap();
            let r = masked_ce(&logits, &[0, 1, v - 1], &[true, true, true]).unwrap();
            assert!((r.loss - (v as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn ce_empty_mask() {
        let r = masked_ce(&m(&[&[1.0, 2.0], &[3.0, 4.0]]), &[0, 1], &[false, false]).unwrap();
        assert_eq!(r.loss, 0.0);
        assert!(r.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn ce_errors() {
        let x = m(&[&[1.0, 2.0]]);
        assert!(masked_ce(&x, &[2], &[true]).is_err());
        assert!(masked_ce(&x, &[0, 0], &[true]).is_err());
        assert!(masked_ce(&x, &[0], &[true, false]).is_err());
    }

    #[test]
    fn kl_identical_is_zero() {
        let x = m(&[&[0.3, -1.2, 2.0], &[5.0, 5.0, -4.0]]);
        for t in CHECK_TEMPERATURES {
            let r = kl_distill(&x, &x, t, &[true, true]).unwrap();
            assert!(r.loss.abs() <= 1e-12);
            assert!(r.grad.iter().all(|g| g.abs() <= 1e-10));
        }
    }

    #[test]
    fn kl_hard_teacher_against_uniform_student() {
        let r = kl_distill(&m(&[&[40.0, -40.0]]), &m(&[&[0.0, 0.0]]), 1.0, &[true]).unwrap();
        // p = (1 - e^-80, e^-80) to double precision; KL = ln 2 - H(p)
        assert!((r.loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn kl_errors() {
        let a = m(&[&[1.0, 2.0]]);
        let b = m(&[&[1.0, 2.0, 3.0]]);
        assert!(matches!(kl_distill(&a, &b, 1.0, &[true]), Err(LossError::Shape(..))));
        assert!(kl_distill(&a, &a, 0.0, &[true]).is_err());
        assert!(kl_distill(&a, &a, -1.0, &[true]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let report = gradient_suite(20, 11, 1e-6).unwrap();
        assert!(report.worst() < 1e-5, "{report:?}");
    }

    #[test]
    fn ce_on_fixed_4x7() {
        let mut rng = record_rng(3, "4x7", "test");
        let x = random_matrix(&mut rng, 4, 7);
        let e = finite_diff_check(|p| masked_ce(p, &[0, 3, 6, 2], &[true, true, false, true]), &x, 1e-6).unwrap();
        assert!(e < 1e-5);
    }

    #[test]
    fn reverse_kl_gradient() {
        let mut rng = record_rng(4, "rev", "test");
        let t = random_matrix(&mut rng, 3, 5);
        let s = random_matrix(&mut rng, 3, 5);
        for temp in CHECK_TEMPERATURES {
            let e = finite_diff_check(
                |p| kl_distill_with(&t, p, temp, &[true, false, true], KlDirection::Reverse),
                &s,
                1e-6,
            )
            .unwrap();
            assert!(e < 1e-5, "T={temp}: {e}");
        }
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let x = m(&[&[1.0, 2.0]]);
        let e = finite_diff_check(|p| Ok(LossResult::new(4.0, Array2::zeros(p.dim()))), &x, 1e-6).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn joint_examples() {
        let g = Array2::zeros((1, 2));
        let ce = LossResult::new(1.0, g.clone());
        let kl = LossResult::new(0.5, g);
        assert_eq!(joint_loss(&ce, &kl, 0.0, None, 1.0).unwrap().total, 1.0);
        assert_eq!(joint_loss(&ce, &kl, 1.0, None, 1.0).unwrap().total, 1.5);
        assert!(joint_loss(&ce, &kl, -1.0, None, 1.0).is_err());
    }

    #[test]
    fn joint_gradient_matches_finite_differences() {
        let mut rng = record_rng(5, "joint", "test");
        let teacher = random_matrix(&mut rng, 3, 4);
        let x = random_matrix(&mut rng, 3, 4);
        let targets = [1, 0, 3];
        let mask = [true, true, false];
        let joint = |p: &LogitMatrix| {
            let ce = masked_ce(p, &targets, &mask)?;
            let kl = kl_distill(&teacher, p, 2.0, &mask)?;
            let j = joint_loss(&ce, &kl, 0.7, None, 0.0)?;
            Ok(LossResult {
                loss: j.total,
                loss_lo: j.total_lo,
                grad: j.thinker_grad,
            })
        };
        assert!(finite_diff_check(joint, &x, 1e-6).unwrap() < 1e-5);
    }

    #[test]
    fn binary_round_trip() {
        let x = m(&[&[1.5, -2.25, 3.0], &[0.0, 1e-300, -7.0]]);
        let mut buf = Vec::new();
        x.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 6 * 8);
        assert_eq!(LogitMatrix::read_binary(&buf).unwrap(), x);
        assert!(LogitMatrix::read_binary(&buf[..buf.len() - 1]).is_err());
    }

    fn arb_case() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<bool>)> {
        (1usize..5, 2usize..7).prop_flat_map(|(n, v)| {
            (
                prop::collection::vec(prop::collection::vec(-20.0..20.0f64, v), n),
                prop::collection::vec(prop::collection::vec(-20.0..20.0f64, v), n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn kl_non_negative((t, s, mask) in arb_case(), temp in 0.1..4.0f64) {
            let r = kl_distill(&LogitMatrix::from_rows(&t).unwrap(), &LogitMatrix::from_rows(&s).unwrap(), temp, &mask).unwrap();
            prop_assert!(r.loss >= -1e-12);
        }

        #[test]
        fn gradient_rows_sum_to_zero((t, s, mask) in arb_case(), temp in 0.1..4.0f64) {
            let s = LogitMatrix::from_rows(&s).unwrap();
            let kl = kl_distill(&LogitMatrix::from_rows(&t).unwrap(), &s, temp, &mask).unwrap();
            let targets = vec![0; mask.len()];
            let ce = masked_ce(&s, &targets, &mask).unwrap();
            for g in [&kl.grad, &ce.grad] {
                for row in g.rows() {
                    prop_assert!(row.sum().abs() < 1e-10);
                }
            }
        }

        #[test]
        fn losses_are_shift_invariant((t, s, mask) in arb_case(), shift in -50.0..50.0f64) {
            let shifted: Vec<Vec<f64>> = s.iter().map(|r| r.iter().map(|x| x + shift).collect()).collect();
            let (t, a, b) = (
                LogitMatrix::from_rows(&t).unwrap(),
                LogitMatrix::from_rows(&s).unwrap(),
                LogitMatrix::from_rows(&shifted).unwrap(),
            );
            let targets: Vec<usize> = (0..mask.len()).map(|i| i % a.dim().1).collect();
            let ce = (masked_ce(&a, &targets, &mask).unwrap().loss, masked_ce(&b, &targets, &mask).unwrap().loss);
            prop_assert!((ce.0 - ce.1).abs() < 1e-10);
            let kl = (kl_distill(&t, &a, 1.0, &mask).unwrap().loss, kl_distill(&t, &b, 1.0, &mask).unwrap().loss);
            prop_assert!((kl.0 - kl.1).abs() < 1e-10);
        }

        #[test]
        fn ce_non_negative((_t, s, mask) in arb_case()) {
            let s = LogitMatrix::from_rows(&s).unwrap();
            let targets = vec![1; mask.len()];
            prop_assert!(masked_ce(&s, &targets, &mask).unwrap().loss >= 0.0);
        }

        #[test]
        fn log_softmax_normalizes(row in prop::collection::vec(-700.0..700.0f64, 1..12)) {
            let out = log_softmax(&row).unwrap();
            let s = pairwise_sum(&out.iter().map(|x| x.exp()).collect::<Vec<_>>());
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
