//! Fitting of limits, rates, periods and convergence orders from diagnostic
//! time series.

use thiserror::Error;

use crate::fields::{raw_mean, FieldState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {needed} samples in the fit window, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-positive or non-finite value {value} at tau = {tau}")]
    NonPositive { tau: f64, value: f64 },
    #[error("found {found} trend crossings, need at least 4")]
    TooFewCrossings { found: usize },
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("invalid window [{0}, {1}]")]
    BadWindow(f64, f64),
}

/// Closed τ-interval selecting the samples used by a fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Result<Self, AnalysisError> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(AnalysisError::BadWindow(lo, hi))
        }
    }

    /// Last half of the sampled span, excluding the final 2%.
    pub fn late_half(taus: &[f64]) -> Result<Self, AnalysisError> {
        Self::fraction(taus, 0.5, 0.98)
    }

    /// `[t0 + a·span, t0 + b·span]` for `0 ≤ a < b ≤ 1`.
    pub fn fraction(taus: &[f64], a: f64, b: f64) -> Result<Self, AnalysisError> {
        let (t0, t1) = match (taus.first(), taus.last()) {
            (Some(&t0), Some(&t1)) => (t0, t1),
            _ => return Err(AnalysisError::InsufficientSamples { needed: 2, got: 0 }),
        };
        let span = t1 - t0;
        Self::new(t0 + a * span, t0 + b * span)
    }

    pub fn contains(&self, tau: f64) -> bool {
        tau >= self.lo && tau <= self.hi
    }
}

/// Result of a rate or limit fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Fitted exponent (log-slope, decay rate, or `C_V` for linear fits).
    pub exponent: f64,
    pub amplitude: f64,
    /// Asymptotic constant; NaN where a fit has none.
    pub limit: f64,
    pub window: (f64, f64),
    pub residual_rms: f64,
    /// Set when the fit fell back to a cruder estimate.
    pub flagged: bool,
}

fn select(
    taus: &[f64],
    values: &[f64],
    window: Window,
    needed: usize,
) -> Result<(Vec<f64>, Vec<f64>), AnalysisError> {
    if taus.len() != values.len() {
        return Err(AnalysisError::LengthMismatch(taus.len(), values.len()));
    }
    let (t, v): (Vec<f64>, Vec<f64>) = taus
        .iter()
        .zip(values)
        .filter(|(t, _)| window.contains(**t))
        .map(|(t, v)| (*t, *v))
        .unzip();
    if t.len() < needed {
        return Err(AnalysisError::InsufficientSamples {
            needed,
            got: t.len(),
        });
    }
    Ok((t, v))
}

/// Ordinary least squares `y ≈ slope·x + intercept`; returns
/// `(slope, intercept, residual_rms)`. `x` is centered internally.
fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mx = raw_mean(x);
    let my = raw_mean(y);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let rms = (x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (yi - my - slope * (xi - mx)).powi(2))
        .sum::<f64>()
        / x.len() as f64)
        .sqrt();
    (slope, my - slope * mx, rms)
}

/// Least-squares line through `(τ, ln value)`.
pub fn fit_log_slope(taus: &[f64], values: &[f64], window: Window) -> Result<RateFit, AnalysisError> {
    let (t, v) = select(taus, values, window, 8)?;
    let mut logs = Vec::with_capacity(v.len());
    for (ti, vi) in t.iter().zip(&v) {
        if !(*vi > 0.0 && vi.is_finite()) {
            return Err(AnalysisError::NonPositive { tau: *ti, value: *vi });
        }
        logs.push(vi.ln());
    }
    let (slope, intercept, rms) = ols(&t, &logs);
    Ok(RateFit {
        exponent: slope,
        amplitude: intercept.exp(),
        limit: f64::NAN,
        window: (window.lo, window.hi),
        residual_rms: rms,
        flagged: false,
    })
}

/// Fits `L + A·e^{kτ}` with `k < 0` by variable projection: for each `k`
/// the pair `(L, A)` solves a linear least-squares problem, and `k` is found
/// by a grid scan refined with golden-section search. Falls back to the
/// tail mean (flagged) when no decaying exponent fits.
pub fn estimate_limit(taus: &[f64], values: &[f64], window: Window) -> Result<RateFit, AnalysisError> {
    let (t, v) = select(taus, values, window, 8)?;
    let t0 = t[0];
    let x: Vec<f64> = t.iter().map(|ti| ti - t0).collect();
    let span = x[x.len() - 1].max(f64::MIN_POSITIVE);
    let project = |k: f64| -> (f64, f64, f64) {
        let basis: Vec<f64> = x.iter().map(|xi| (k * xi).exp()).collect();
        let (amp, lim, rms) = ols(&basis, &v);
        (lim, amp, rms)
    };
    let tail_mean = raw_mean(&v[v.len() / 2..]);
    let tail_fit = |flag: bool| {
        let rms = (v.iter().map(|y| (y - tail_mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        RateFit {
            exponent: 0.0,
            amplitude: 0.0,
            limit: tail_mean,
            window: (window.lo, window.hi),
            residual_rms: rms,
            flagged: flag,
        }
    };
    let spread = v.iter().fold(0.0f64, |m, y| m.max((y - tail_mean).abs()));
    if spread == 0.0 {
        return Ok(tail_fit(false));
    }

    // Rates between a tenth of an e-fold and fifty e-folds over the window.
    let (k_min, k_max) = (-50.0 / span, -0.1 / span);
    let to_k = |u: f64| -(k_min.abs().ln() + u * (k_max.abs().ln() - k_min.abs().ln())).exp();
    let cost = |u: f64| project(to_k(u)).2;
    let scan: usize = 64;
    let (mut best_i, mut best) = (0, f64::INFINITY);
    for i in 0..=scan {
        let c = cost(i as f64 / scan as f64);
        if c < best {
            best = c;
            best_i = i;
        }
    }
    let mut a = (best_i.saturating_sub(1)) as f64 / scan as f64;
    let mut b = ((best_i + 1).min(scan)) as f64 / scan as f64;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c1 = b - g * (b - a);
    let mut c2 = a + g * (b - a);
    let (mut f1, mut f2) = (cost(c1), cost(c2));
    for _ in 0..200 {
        if (b - a).abs() < 1e-15 {
            break;
        }
        if f1 < f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - g * (b - a);
            f1 = cost(c1);
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + g * (b - a);
            f2 = cost(c2);
        }
    }
    let u = 0.5 * (a + b);
    let k = to_k(u);
    let (lim, amp, rms) = project(k);
    let at_edge = best_i == scan && u > 1.0 - 1e-6;
    if !lim.is_finite() || at_edge || (lim - tail_mean).abs() > 10.0 * spread {
        return Ok(tail_fit(true));
    }
    Ok(RateFit {
        exponent: k,
        amplitude: amp * (-k * t0).exp(),
        limit: lim,
        window: (window.lo, window.hi),
        residual_rms: rms,
        flagged: false,
    })
}

/// Linear fit `⟨V⟩ ≈ C_V·τ + a`; `exponent` carries `C_V`, `limit` and
/// `amplitude` carry `a`.
pub fn fit_cv(taus: &[f64], v_mean: &[f64], window: Window) -> Result<RateFit, AnalysisError> {
    let (t, v) = select(taus, v_mean, window, 8)?;
    let (slope, intercept, rms) = ols(&t, &v);
    Ok(RateFit {
        exponent: slope,
        amplitude: intercept,
        limit: intercept,
        window: (window.lo, window.hi),
        residual_rms: rms,
        flagged: false,
    })
}

/// Series minus its centered moving mean of width `width` (in τ). Near the
/// ends the window shrinks symmetrically so it stays centered.
fn detrend(t: &[f64], v: &[f64], width: f64) -> (Vec<f64>, Vec<f64>) {
    let mut prefix = Vec::with_capacity(v.len() + 1);
    prefix.push(0.0);
    for x in v {
        prefix.push(prefix[prefix.len() - 1] + x);
    }
    let (first, last) = (t[0], t[t.len() - 1]);
    let out_v = t
        .iter()
        .zip(v)
        .map(|(&ti, &vi)| {
            let half = (0.5 * width).min(ti - first).min(last - ti);
            let lo = t.partition_point(|&x| x < ti - half);
            let hi = t.partition_point(|&x| x <= ti + half);
            vi - (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();
    (t.to_vec(), out_v)
}

/// Zero crossings of `v` with hysteresis `delta`, located by linear interpolation.
fn crossings(t: &[f64], v: &[f64], delta: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut state = 0i8;
    let mut last_idx = 0usize;
    for i in 0..v.len() {
        let s = if v[i] > delta {
            1
        } else if v[i] < -delta {
            -1
        } else {
            0
        };
        if s == 0 {
            continue;
        }
        if state != 0 && s != state {
            // sign change happened somewhere in (last_idx, i]
            let mut j = last_idx;
            while j < i && (v[j + 1] > 0.0) == (v[last_idx] > 0.0) {
                j += 1;
            }
            let (t0, t1, v0, v1) = (t[j], t[j + 1], v[j], v[j + 1]);
            out.push(t0 + (t1 - t0) * v0 / (v0 - v1));
        }
        state = s;
        last_idx = i;
    }
    out
}

fn detrended(
    t: &[f64],
    v: &[f64],
    width: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), AnalysisError> {
    let (dt, dv) = detrend(t, v, width);
    if dt.len() < 8 {
        return Err(AnalysisError::InsufficientSamples {
            needed: 8,
            got: dt.len(),
        });
    }
    let rms = (dv.iter().map(|x| x * x).sum::<f64>() / dv.len() as f64).sqrt();
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if rms <= 1e-9 * scale || rms == 0.0 {
        return Err(AnalysisError::TooFewCrossings { found: 0 });
    }
    let cross = crossings(&dt, &dv, 0.1 * rms);
    Ok((dt, dv, cross))
}

fn period_from(cross: &[f64]) -> Result<f64, AnalysisError> {
    if cross.len() < 4 {
        return Err(AnalysisError::TooFewCrossings { found: cross.len() });
    }
    Ok(2.0 * (cross[cross.len() - 1] - cross[0]) / (cross.len() - 1) as f64)
}

/// Period from the mean spacing of zero crossings of the series minus its
/// moving mean. The moving-mean width starts at a quarter of the window and
/// is then matched to the measured period.
pub fn oscillation_period(taus: &[f64], values: &[f64], window: Window) -> Result<f64, AnalysisError> {
    let (t, v) = select(taus, values, window, 8)?;
    let span = t[t.len() - 1] - t[0];
    let (_, _, cross) = detrended(&t, &v, 0.25 * span)?;
    let first = period_from(&cross)?;
    if first < 0.5 * span {
        let (_, _, cross) = detrended(&t, &v, first)?;
        if let Ok(p) = period_from(&cross) {
            return Ok(p);
        }
    }
    Ok(first)
}

/// Ratio of the peak-to-peak amplitude in the second half of the window to
/// that in the first half, after removing a least-squares line.
pub fn amplitude_ratio(taus: &[f64], values: &[f64], window: Window) -> Result<f64, AnalysisError> {
    let (t, v) = select(taus, values, window, 8)?;
    let (slope, intercept, _) = ols(&t, &v);
    let mid = 0.5 * (t[0] + t[t.len() - 1]);
    let p2p = |first: bool| {
        let (mn, mx) = t
            .iter()
            .zip(&v)
            .filter(|(ti, _)| (**ti <= mid) == first)
            .map(|(ti, vi)| vi - slope * ti - intercept)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        mx - mn
    };
    let (early, late) = (p2p(true), p2p(false));
    if !(early > 0.0) {
        return Err(AnalysisError::TooFewCrossings { found: 0 });
    }
    Ok(late / early)
}

/// Local maxima of `|values|` inside the window, as `(τ, |value|)`.
pub fn envelope_peaks(taus: &[f64], values: &[f64], window: Window) -> Result<(Vec<f64>, Vec<f64>), AnalysisError> {
    let (t, v) = select(taus, values, window, 3)?;
    let a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    Ok((1..a.len() - 1)
        .filter(|&i| a[i] > a[i - 1] && a[i] >= a[i + 1])
        .map(|i| (t[i], a[i]))
        .unzip())
}

/// Self-convergence estimate from three resolutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceOrder {
    pub order: f64,
    pub coarse_diff: f64,
    pub fine_diff: f64,
    /// Differences sit at the floating-point floor; `order` is meaningless.
    pub round_off_limited: bool,
}

fn restrict(u: &[f64], n: usize) -> Result<Vec<f64>, AnalysisError> {
    if u.len() == n {
        return Ok(u.to_vec());
    }
    if !u.len().is_multiple_of(n) || n == 0 {
        return Err(AnalysisError::Misaligned(format!(
            "length {} is not a multiple of {n}",
            u.len()
        )));
    }
    let r = u.len() / n;
    Ok(u.iter().step_by(r).copied().collect())
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

/// `p = log₂(‖u_N − u_{2N}‖ / ‖u_{2N} − u_{4N}‖)` in the discrete L² norm.
/// Grid arrays of lengths `N, 2N, 4N` are compared at the coarse points;
/// equal-length inputs are compared directly.
pub fn convergence_order(
    coarse: &[f64],
    medium: &[f64],
    fine: &[f64],
) -> Result<ConvergenceOrder, AnalysisError> {
    let n = coarse.len();
    if n == 0 {
        return Err(AnalysisError::InsufficientSamples { needed: 1, got: 0 });
    }
    let equal = medium.len() == n && fine.len() == n;
    let nested = medium.len() == 2 * n && fine.len() == 4 * n;
    if !(equal || nested) {
        return Err(AnalysisError::Misaligned(format!(
            "lengths {}, {}, {}",
            n,
            medium.len(),
            fine.len()
        )));
    }
    let m = restrict(medium, n)?;
    let f = restrict(fine, n)?;
    let coarse_diff = l2(coarse, &m);
    let fine_diff = l2(&m, &f);
    let scale = (f.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt().max(1.0);
    let floor = 1e3 * f64::EPSILON * scale;
    Ok(ConvergenceOrder {
        order: (coarse_diff / fine_diff).log2(),
        coarse_diff,
        fine_diff,
        round_off_limited: coarse_diff < floor || fine_diff < floor,
    })
}

/// Observed order from errors measured at successive grid doublings
/// (least-squares slope of `−log₂ error` against refinement level).
pub fn refinement_order(errors: &[f64]) -> Result<f64, AnalysisError> {
    if errors.len() < 2 {
        return Err(AnalysisError::InsufficientSamples {
            needed: 2,
            got: errors.len(),
        });
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(AnalysisError::NonPositive {
            tau: f64::NAN,
            value: *e,
        });
    }
    let x: Vec<f64> = (0..errors.len()).map(|i| i as f64).collect();
    let y: Vec<f64> = errors.iter().map(|e| -e.log2()).collect();
    Ok(ols(&x, &y).0)
}

/// Normalized volume profile `e^ρ / ⟨e^ρ⟩`.
pub fn volume_profile(state: &FieldState) -> Vec<f64> {
    let w: Vec<f64> = state.rho.iter().map(|r| r.exp()).collect();
    let pi = raw_mean(&w);
    w.into_iter().map(|x| x / pi).collect()
}

/// Last `Π⁻¹e^ρ` profile and the log-slope of successive max-norm differences.
/// Sample the states at a uniform τ spacing for the slope to equal the decay rate.
pub fn rho_profile_limit(states: &[FieldState]) -> Result<(Vec<f64>, RateFit), AnalysisError> {
    let taus: Vec<f64> = states.iter().map(|s| s.tau).collect();
    let profiles: Vec<Vec<f64>> = states.iter().map(volume_profile).collect();
    profile_cauchy_rate(&taus, &profiles)
}

/// Differences at this level are rounding noise of the normalization.
const PROFILE_FLOOR: f64 = 64.0 * f64::EPSILON;

/// As [`rho_profile_limit`] for precomputed profiles.
pub fn profile_cauchy_rate(taus: &[f64], profiles: &[Vec<f64>]) -> Result<(Vec<f64>, RateFit), AnalysisError> {
    if profiles.len() < 3 {
        return Err(AnalysisError::InsufficientSamples {
            needed: 3,
            got: profiles.len(),
        });
    }
    if taus.len() != profiles.len() {
        return Err(AnalysisError::LengthMismatch(taus.len(), profiles.len()));
    }
    if taus.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(AnalysisError::Misaligned("times must not decrease".into()));
    }
    let n = profiles[0].len();
    if profiles.iter().any(|p| p.len() != n) {
        return Err(AnalysisError::Misaligned("profiles differ in length".into()));
    }
    let mut t = Vec::new();
    let mut d = Vec::new();
    for k in 1..profiles.len() {
        let diff = profiles[k]
            .iter()
            .zip(&profiles[k - 1])
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        t.push(taus[k]);
        d.push(diff);
    }
    let window = (taus[1], taus[taus.len() - 1]);
    let last = profiles[profiles.len() - 1].clone();
    let positive: Vec<(f64, f64)> = t
        .iter()
        .zip(&d)
        .filter(|(_, x)| **x > PROFILE_FLOOR)
        .map(|(a, b)| (*a, *b))
        .collect();
    if positive.len() < 2 {
        return Ok((
            last,
            RateFit {
                exponent: f64::NEG_INFINITY,
                amplitude: 0.0,
                limit: f64::NAN,
                window,
                residual_rms: 0.0,
                flagged: true,
            },
        ));
    }
    let (pt, pd): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
    let logs: Vec<f64> = pd.iter().map(|x| x.ln()).collect();
    let (slope, intercept, rms) = ols(&pt, &logs);
    Ok((
        last,
        RateFit {
            exponent: slope,
            amplitude: intercept.exp(),
            limit: f64::NAN,
            window,
            residual_rms: rms,
            flagged: pd.len() < d.len(),
        },
    ))
}

/// Norm of `(c, d)` in coordinates where the linearized flow at the sink is
/// a uniform rotation with decay; it decays like `e^{−τ/4}` near the sink.
pub fn spiral_norm(c: f64, d: f64) -> f64 {
    let beta = 39f64.sqrt() / 4.0;
    (c * c + ((d - 0.25 * c) / beta).powi(2)).sqrt()
}
