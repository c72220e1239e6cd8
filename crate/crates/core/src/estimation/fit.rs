//! Exponential-decay fits `A e^{−γt/2} + B` by Levenberg–Marquardt.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::sig17;

pub const MAX_FIT_ITERATIONS: usize = 200;
const MIN_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Parameter names and values, in the order of the covariance matrix.
    pub params: Vec<(String, f64)>,
    /// Row-major covariance scaled by the residual variance.
    pub covariance: Vec<Vec<f64>>,
    pub residual_rms: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// One-sigma uncertainty from the covariance diagonal.
    pub fn sigma(&self, name: &str) -> Option<f64> {
        let i = self.params.iter().position(|(n, _)| n == name)?;
        Some(self.covariance[i][i].max(0.0).sqrt())
    }
}

/// `model(p, t)` returns the value and its gradient with respect to `p`.
fn levenberg_marquardt<F>(model: F, t: &[f64], y: &[f64], p0: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>, Vec<f64>, usize)>
where
    F: Fn(&[f64], f64) -> (f64, Vec<f64>),
{
    let (n, k) = (t.len(), p0.len());
    let residuals = |p: &[f64]| -> Vec<f64> { t.iter().zip(y).map(|(&ti, &yi)| yi - model(p, ti).0).collect() };
    let cost = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    let scale = y.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);

    let mut p = p0.to_vec();
    let mut r = residuals(&p);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_FIT_ITERATIONS {
        iterations += 1;
        let mut jac = DMatrix::<f64>::zeros(n, k);
        for (i, &ti) in t.iter().enumerate() {
            let (_, g) = model(&p, ti);
            for j in 0..k {
                jac[(i, j)] = g[j];
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * DVector::from_column_slice(&r);
        if jtr.amax() <= 1e-15 * scale.sqrt() * jtj.diagonal().amax().sqrt() || c <= 1e-30 * scale {
            converged = true;
            break;
        }
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for j in 0..k {
                a[(j, j)] += lambda * jtj[(j, j)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|ch| ch.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let r_new = residuals(&trial);
            let c_new = cost(&r_new);
            if c_new.is_finite() && c_new <= c {
                let small_step = step.iter().zip(&p).all(|(d, v)| d.abs() <= 1e-12 * (v.abs() + 1e-300));
                let small_gain = c - c_new <= 1e-15 * c;
                p = trial;
                r = r_new;
                c = c_new;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if small_step || small_gain {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No downhill step at any damping: a local minimum to machine precision.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::FitFailed {
            iterations,
            reason: format!("no convergence; cost {c:e}, parameters {p:?}"),
        });
    }
    let mut jac = DMatrix::<f64>::zeros(n, k);
    for (i, &ti) in t.iter().enumerate() {
        let (_, g) = model(&p, ti);
        for j in 0..k {
            jac[(i, j)] = g[j];
        }
    }
    let dof = n.saturating_sub(k).max(1) as f64;
    let cov = (jac.transpose() * &jac)
        .try_inverse()
        .map(|inv| inv * (c / dof))
        .unwrap_or_else(|| DMatrix::from_element(k, k, f64::NAN));
    Ok((p, cov, r, iterations))
}

/// Fits `A e^{−γt/2} + B`, starting from a log-linear regression of
/// `|y − y_last|` against `t`.
pub fn fit_decay(times: &[f64], values: &[f64]) -> Result<FitResult> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), found: values.len() });
    }
    let n = times.len();
    if n < MIN_POINTS {
        return Err(Error::param("times", format!("need at least {MIN_POINTS} points, got {n}")));
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::param("values", "all samples must be finite"));
    }
    let last = values[n - 1];
    let span = times[n - 1] - times[0];
    if !(span > 0.0) {
        return Err(Error::param("times", "need increasing sample times"));
    }
    let pts: Vec<(f64, f64)> = times[..n - 1]
        .iter()
        .zip(&values[..n - 1])
        .filter(|(_, v)| (*v - last).abs() > 0.0)
        .map(|(t, v)| (*t, (v - last).abs().ln()))
        .collect();
    let (mut gamma0, mut a0) = (2.0 / span, values[0] - last);
    if pts.len() >= 2 {
        let m = pts.len() as f64;
        let (mt, mz) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mz)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
        let slope = sxy / sxx;
        if slope < 0.0 && slope.is_finite() {
            gamma0 = -2.0 * slope;
            a0 = (values[0] - last).signum() * (mz - slope * mt).exp();
        }
    }
    let model = |p: &[f64], t: f64| {
        let e = (-0.5 * p[1] * t).exp();
        (p[0] * e + p[2], vec![e, -0.5 * t * p[0] * e, 1.0])
    };
    let (p, cov, r, iterations) = levenberg_marquardt(model, times, values, &[a0, gamma0, last])?;
    if p[1] < 0.0 {
        return Err(Error::FitFailed { iterations, reason: format!("negative decay rate {:e}", p[1]) });
    }
    let rms = (r.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    Ok(FitResult {
        params: vec![("A".into(), p[0]), ("gamma".into(), p[1]), ("B".into(), p[2])],
        covariance: (0..3).map(|i| (0..3).map(|j| cov[(i, j)]).collect()).collect(),
        residual_rms: rms,
        residuals: r,
        iterations,
    })
}

/// Fits `A e^{−κt} cos(Ωt + φ) + B`. The starting frequency is the dominant
/// FFT peak of the mean-removed samples, `κ` comes from the RMS ratio of the
/// two halves, and `A`, `φ` from a linear fit at those values. Samples must be
/// uniformly spaced.
pub fn fit_damped_cosine(times: &[f64], values: &[f64]) -> Result<FitResult> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), found: values.len() });
    }
    let n = times.len();
    if n < 8 {
        return Err(Error::param("times", format!("need at least 8 points, got {n}")));
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::param("values", "all samples must be finite"));
    }
    let (t0, t1) = (times[0], times[n - 1]);
    let span = t1 - t0;
    if !(span > 0.0) {
        return Err(Error::param("times", "need increasing sample times"));
    }
    let tail = &values[3 * n / 4..];
    let b0 = tail.iter().sum::<f64>() / tail.len() as f64;
    let centred: Vec<f64> = values.iter().map(|v| v - b0).collect();
    let spec = crate::labframe::spectrum(times, &centred, (t0, t1), crate::labframe::Taper::Hann)?;
    let omega0 = spec.dominant_peak().map(|p| p.0).filter(|w| *w > 0.0).ok_or_else(|| Error::FitFailed {
        iterations: 0,
        reason: "no oscillation in the spectrum".into(),
    })?;
    let rms = |xs: &[f64]| (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt();
    let ratio = rms(&centred[..n / 2]) / rms(&centred[n / 2..]).max(f64::MIN_POSITIVE);
    let kappa0 = (2.0 * ratio.ln() / span).max(0.0);
    // a cos + b sin by least squares under the starting envelope.
    let (mut saa, mut sab, mut sbb, mut sya, mut syb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&t, &y) in times.iter().zip(&centred) {
        let e = (-kappa0 * (t - t0)).exp();
        let (s, c) = (omega0 * t).sin_cos();
        let (a, b) = (e * c, e * s);
        saa += a * a;
        sab += a * b;
        sbb += b * b;
        sya += y * a;
        syb += y * b;
    }
    let det = saa * sbb - sab * sab;
    let (ca, cb) = if det.abs() > 0.0 { ((sya * sbb - syb * sab) / det, (syb * saa - sya * sab) / det) } else { (0.0, 0.0) };
    let amp0 = ca.hypot(cb) * (kappa0 * t0).exp();
    let phase0 = (-cb).atan2(ca);
    let model = |p: &[f64], t: f64| {
        let e = (-p[1] * t).exp();
        let (s, c) = (p[2] * t + p[3]).sin_cos();
        (
            p[0] * e * c + p[4],
            vec![e * c, -t * p[0] * e * c, -t * p[0] * e * s, -p[0] * e * s, 1.0],
        )
    };
    let (p, cov, r, iterations) = levenberg_marquardt(model, times, values, &[amp0, kappa0, omega0, phase0, b0])?;
    let (mut amp, mut phase) = (p[0], p[3]);
    if amp < 0.0 {
        amp = -amp;
        phase += std::f64::consts::PI;
    }
    let rms_res = (r.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    Ok(FitResult {
        params: vec![
            ("A".into(), amp),
            ("kappa".into(), p[1]),
            ("omega".into(), p[2].abs()),
            ("phase".into(), crate::quantum::wrap_pi(if p[2] < 0.0 { -phase } else { phase })),
            ("B".into(), p[4]),
        ],
        covariance: (0..5).map(|i| (0..5).map(|j| cov[(i, j)]).collect()).collect(),
        residual_rms: rms_res,
        residuals: r,
        iterations,
    })
}

pub fn write_decay_csv<W: Write>(times: &[f64], values: &[f64], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,p")?;
    for (t, p) in times.iter().zip(values) {
        writeln!(w, "{},{}", sig17(*t), sig17(*p))?;
    }
    Ok(())
}

/// Reads `t,p` rows; a header line is optional.
pub fn read_decay_csv<R: BufRead>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut ts, mut ps) = (vec![], vec![]);
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::param("csv", e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with(|c: char| c.is_ascii_alphabetic())) {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let mut next = || -> Result<f64> {
            cols.next()
                .ok_or_else(|| Error::param("csv", format!("line {}: expected two columns", i + 1)))?
                .parse()
                .map_err(|e| Error::param("csv", format!("line {}: {e}", i + 1)))
        };
        ts.push(next()?);
        ps.push(next()?);
    }
    Ok((ts, ps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(a: f64, g: f64, b: f64, n: usize, span: f64) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..n).map(|i| span * i as f64 / (n - 1) as f64).collect();
        let y = t.iter().map(|&t| a * (-0.5 * g * t).exp() + b).collect();
        (t, y)
    }

    #[test]
    fn recovers_noiseless_decay() {
        let (t, y) = sample(-0.98, 7.98e3, 0.99, 30, 1e-3);
        let f = fit_decay(&t, &y).unwrap();
        assert!((f.get("gamma").unwrap() / 7.98e3 - 1.0).abs() < 1e-9);
        assert!(f.residual_rms < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let (t, y) = sample(1.0, 1.0, 0.0, 4, 1.0);
        assert!(fit_decay(&t, &y).is_err());
    }

    #[test]
    fn pure_noise_does_not_panic() {
        let t: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let _ = fit_decay(&t, &y);
    }

    #[test]
    fn csv_round_trip() {
        let (t, y) = sample(0.5, 2.0, 0.1, 6, 1.0);
        let mut buf = Vec::new();
        write_decay_csv(&t, &y, &mut buf).unwrap();
        let (t2, y2) = read_decay_csv(buf.as_slice()).unwrap();
        assert_eq!((t, y), (t2, y2));
        assert!(read_decay_csv("0.1,abc\n".as_bytes()).is_err());
    }

    #[test]
    fn recovers_damped_cosine() {
        let (a, k, w, ph, b) = (0.4, 3.0e4, 2.0e5, 0.7, -0.6);
        let t: Vec<f64> = (0..2000).map(|i| i as f64 * 5e-7).collect();
        let y: Vec<f64> = t.iter().map(|&t| a * (-k * t).exp() * (w * t + ph).cos() + b).collect();
        let f = fit_damped_cosine(&t, &y).unwrap();
        for (name, want) in [("A", a), ("kappa", k), ("omega", w), ("phase", ph), ("B", b)] {
            let got = f.get(name).unwrap();
            assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "{name}: {got} vs {want}");
        }
    }

    #[test]
    fn flat_trace_has_no_oscillation() {
        let t: Vec<f64> = (0..100).map(f64::from).collect();
        assert!(fit_damped_cosine(&t, &vec![0.25; 100]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn unbiased_at_zero_noise(a in -1.0f64..1.0, g in 1e3f64..1e5, b in -0.5f64..0.5) {
            prop_assume!(a.abs() > 0.05);
            let (t, y) = sample(a, g, b, 30, 6.0 / g);
            let f = fit_decay(&t, &y).unwrap();
            prop_assert!((f.get("gamma").unwrap() / g - 1.0).abs() < 1e-8);
            prop_assert!((f.get("A").unwrap() - a).abs() < 1e-8);
            prop_assert!((f.get("B").unwrap() - b).abs() < 1e-8);
        }
    }
}
