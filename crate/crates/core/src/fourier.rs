//! Fourier-series oracles for `|x|` on `[-π, π]` and for the indicator of the
//! unit ball on the torus `[-π, π]^d`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use crate::error::{Error, Result};
use crate::numerics::{loglog_fit, CompensatedSum, LogLogFit};

/// Largest lattice search box `(2⌊R⌋ + 1)^d` we are willing to scan.
pub const LATTICE_BOX_LIMIT: u64 = 1 << 24;

/// Truncated cosine series of `|x|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AbsSeries {
    pub n: usize,
}

impl AbsSeries {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    /// `a_k = -4 / (π (2k-1)²)` for `k ≥ 1`.
    pub fn coefficient(k: usize) -> f64 {
        assert!(k >= 1);
        let m = (2 * k - 1) as f64;
        -4.0 / (PI * m * m)
    }

    pub fn eval(&self, x: f64) -> f64 {
        abs_partial_sum(x, self.n)
    }

    pub fn tail_error(&self) -> f64 {
        abs_tail_error(self.n)
    }
}

pub fn abs_partial_sum(x: f64, n: usize) -> f64 {
    let mut s = CompensatedSum::new();
    s.add(FRAC_PI_2);
    for k in 1..=n {
        s.add(AbsSeries::coefficient(k) * ((2 * k - 1) as f64 * x).cos());
    }
    s.value()
}

/// `‖|x| − S_n‖²` over one period: `(16/π) Σ_{k>n} (2k−1)⁻⁴`.
///
/// The first [`TAIL_EXPLICIT_TERMS`] terms are summed directly; the rest by
/// Euler–Maclaurin, whose first omitted correction is below `1e-16` of the
/// remainder once `2k−1 > 2·TAIL_EXPLICIT_TERMS`.
pub fn abs_tail_error(n: usize) -> f64 {
    let mut s = CompensatedSum::new();
    let first = n as u64 + 1;
    let stop = first + TAIL_EXPLICIT_TERMS;
    for k in first..stop {
        let m = (2 * k - 1) as f64;
        s.add((m * m).powi(2).recip());
    }
    let m = (2 * stop - 1) as f64;
    // ∫ f + f/2 − f′/12 + f‴/720 − f⁽⁵⁾/30240 at k = stop, f(k) = (2k−1)⁻⁴.
    let remainder = 1.0 / (6.0 * m.powi(3)) + 0.5 / m.powi(4) + 2.0 / (3.0 * m.powi(5))
        - 4.0 / (3.0 * m.powi(7))
        + 64.0 / (9.0 * m.powi(9));
    s.add(remainder);
    16.0 / PI * s.value()
}

/// Directly summed terms of [`abs_tail_error`] before the asymptotic remainder.
pub const TAIL_EXPLICIT_TERMS: u64 = 128;

/// One row of the `|x|` tail sandwich check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lemma1Row {
    pub n: usize,
    pub tail: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Lemma1Row {
    pub fn passed(&self) -> bool {
        self.lower <= self.tail && self.tail <= self.upper
    }
}

/// Integral bounds `16/(6π(2n±1)³)` on the tail for `n ≥ 1`.
pub fn abs_tail_bounds(n: usize) -> (f64, f64) {
    assert!(n >= 1);
    let lo = (2 * n + 1) as f64;
    let hi = (2 * n - 1) as f64;
    (
        16.0 / (6.0 * PI * lo * lo * lo),
        16.0 / (6.0 * PI * hi * hi * hi),
    )
}

pub fn verify_lemma1(ns: impl IntoIterator<Item = usize>) -> Result<Vec<Lemma1Row>> {
    ns.into_iter()
        .map(|n| {
            if n == 0 {
                return Err(Error::Domain("tail sandwich needs n ≥ 1".into()));
            }
            let (lower, upper) = abs_tail_bounds(n);
            Ok(Lemma1Row {
                n,
                tail: abs_tail_error(n),
                lower,
                upper,
            })
        })
        .collect()
}

/// Log-log slope of the tail against `n`.
pub fn abs_tail_rate(ns: &[usize]) -> Result<LogLogFit> {
    let points: Vec<(f64, f64)> = ns.iter().map(|&n| (n as f64, abs_tail_error(n))).collect();
    loglog_fit(&points)
}

pub fn write_lemma1_csv(out: &mut impl Write, rows: &[Lemma1Row]) -> Result<()> {
    writeln!(out, "n,tail,lower,upper,passed")?;
    for r in rows {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{}",
            r.n,
            r.tail,
            r.lower,
            r.upper,
            r.passed()
        )?;
    }
    Ok(())
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> Result<f64> {
    match d {
        1 => Ok(2.0),
        2 => Ok(PI),
        3 => Ok(4.0 * PI / 3.0),
        _ => Err(Error::UnsupportedDimension(d)),
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !r.is_finite() || r < 0.0 {
        return Err(Error::Domain(format!(
            "radius must be finite and ≥ 0, got {r}"
        )));
    }
    Ok(())
}

/// Integer points with `‖k‖₂ ≤ radius`, lexicographic in `(k₁, k₂, …)`.
pub fn lattice_points_in_ball(radius: f64, d: usize) -> Result<Vec<Vec<i64>>> {
    if !(1..=3).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    check_radius(radius)?;
    let m = radius.floor() as i64;
    let side = 2 * m as u64 + 1;
    let bound = side.checked_pow(d as u32).unwrap_or(u64::MAX);
    if bound > LATTICE_BOX_LIMIT {
        return Err(Error::Resource {
            bound,
            limit: LATTICE_BOX_LIMIT,
        });
    }
    let r2 = radius * radius;
    let inside = |sq: i64| (sq as f64) <= r2;
    let mut out = Vec::new();
    match d {
        1 => {
            for a in -m..=m {
                if inside(a * a) {
                    out.push(vec![a]);
                }
            }
        }
        2 => {
            for a in -m..=m {
                for b in -m..=m {
                    if inside(a * a + b * b) {
                        out.push(vec![a, b]);
                    }
                }
            }
        }
        _ => {
            for a in -m..=m {
                for b in -m..=m {
                    for c in -m..=m {
                        if inside(a * a + b * b + c * c) {
                            out.push(vec![a, b, c]);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Fourier coefficient of the unit-ball indicator at frequency norm `r`,
/// normalized by `(2π)^{-d}`.
pub fn ball_coefficient(r: f64, d: usize) -> Result<f64> {
    check_radius(r)?;
    match d {
        2 => Ok(disk_integral(r) / (4.0 * PI * PI)),
        3 => Ok(ball3_integral(r) / (8.0 * PI * PI * PI)),
        _ => Err(Error::UnsupportedDimension(d)),
    }
}

/// `∫_{|y|≤1} cos(r y₁) dy` in the plane, written as
/// `2 ∫ cos(r sin θ) cos²θ dθ` over one period of length π. The integrand is
/// smooth and periodic, so the trapezoid rule converges geometrically once
/// the node count passes `r`; we double until two levels agree.
fn disk_integral(r: f64) -> f64 {
    let g = |t: f64| {
        let c = t.cos();
        (r * t.sin()).cos() * c * c
    };
    let mut n = 16 + 2 * (r.ceil() as usize);
    let mut sum: f64 = (0..n).map(|j| g(PI * j as f64 / n as f64)).sum();
    let mut prev = PI / n as f64 * sum;
    loop {
        let mids: f64 = (0..n).map(|j| g(PI * (j as f64 + 0.5) / n as f64)).sum();
        sum += mids;
        n *= 2;
        let cur = PI / n as f64 * sum;
        if (cur - prev).abs() <= 1e-15 || n >= 1 << 22 {
            return 2.0 * cur;
        }
        prev = cur;
    }
}

/// `∫_{|y|≤1} cos(r y₁) dy` in space: `4π (sin r − r cos r) / r³`. Below
/// `r = 0.5` the closed form cancels, so we sum its Taylor series
/// `Σ_{j≥1} (−1)^{j+1} 2j r^{2j−2} / (2j+1)!` instead.
fn ball3_integral(r: f64) -> f64 {
    if r < 0.5 {
        let r2 = r * r;
        let mut sum = 0.0;
        let mut power = 1.0;
        let mut fact = 6.0;
        for j in 1..=12u32 {
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            sum += sign * 2.0 * j as f64 * power / fact;
            power *= r2;
            fact *= ((2 * j + 2) * (2 * j + 3)) as f64;
        }
        4.0 * PI * sum
    } else {
        4.0 * PI * (r.sin() - r * r.cos()) / (r * r * r)
    }
}

/// Lattice points sharing one value of `‖k‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct Shell {
    pub norm_sq: u64,
    pub coefficient: f64,
    pub points: Vec<Vec<i64>>,
}

/// Coefficients of the ball indicator on `{k : ‖k‖ ≤ R}`, grouped by shell in
/// ascending `‖k‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct BallSpectrum {
    pub d: usize,
    pub radius: f64,
    pub shells: Vec<Shell>,
}

impl BallSpectrum {
    pub fn new(d: usize, radius: f64) -> Result<Self> {
        if !(2..=3).contains(&d) {
            return Err(Error::UnsupportedDimension(d));
        }
        let mut points = lattice_points_in_ball(radius, d)?;
        let sq = |k: &[i64]| k.iter().map(|&c| (c * c) as u64).sum::<u64>();
        points.sort_by_key(|k| sq(k));
        let mut shells: Vec<Shell> = Vec::new();
        for k in points {
            let s = sq(&k);
            match shells.last_mut() {
                Some(shell) if shell.norm_sq == s => shell.points.push(k),
                _ => shells.push(Shell {
                    norm_sq: s,
                    coefficient: ball_coefficient((s as f64).sqrt(), d)?,
                    points: vec![k],
                }),
            }
        }
        Ok(Self { d, radius, shells })
    }

    pub fn len(&self) -> usize {
        self.shells.iter().map(|s| s.points.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.shells.is_empty()
    }

    /// Every `(k, f̂_k)` in shell order.
    pub fn terms(&self) -> impl Iterator<Item = (&[i64], f64)> + '_ {
        self.shells
            .iter()
            .flat_map(|s| s.points.iter().map(move |k| (k.as_slice(), s.coefficient)))
    }

    /// `(‖k‖², lattice count, squared error)` after each shell is added.
    pub fn error_profile(&self) -> Result<Vec<(u64, usize, f64)>> {
        let volume = unit_ball_volume(self.d)?;
        let scale = (2.0 * PI).powi(self.d as i32);
        let mut energy = CompensatedSum::new();
        let mut count = 0;
        let mut out = Vec::with_capacity(self.shells.len());
        for s in &self.shells {
            let c2 = s.coefficient * s.coefficient;
            for _ in &s.points {
                energy.add(c2);
            }
            count += s.points.len();
            out.push((
                s.norm_sq,
                count,
                checked_error(volume - scale * energy.value())?,
            ));
        }
        Ok(out)
    }
}

fn checked_error(se: f64) -> Result<f64> {
    if se < -1e-10 {
        return Err(Error::NumericalConsistency(se));
    }
    Ok(se.max(0.0))
}

/// `S_R(x) = Σ f̂_k cos⟨k, x⟩`.
pub fn ball_partial_sum(x: &[f64], spectrum: &BallSpectrum) -> Result<f64> {
    if x.len() != spectrum.d {
        return Err(Error::DimensionMismatch {
            context: "ball partial sum point",
            expected: spectrum.d,
            found: x.len(),
        });
    }
    let mut s = CompensatedSum::new();
    for shell in &spectrum.shells {
        let mut inner = 0.0;
        for k in &shell.points {
            let phase: f64 = k.iter().zip(x).map(|(&ki, &xi)| ki as f64 * xi).sum();
            inner += phase.cos();
        }
        s.add(shell.coefficient * inner);
    }
    Ok(s.value())
}

/// Parseval error `V_d − (2π)^d Σ |f̂_k|²`.
pub fn ball_sq_error(spectrum: &BallSpectrum) -> Result<f64> {
    match spectrum.error_profile()?.last() {
        Some(&(_, _, se)) => Ok(se),
        None => unit_ball_volume(spectrum.d),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lemma2Row {
    pub radius: f64,
    pub lattice_count: usize,
    pub sq_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lemma2Table {
    pub d: usize,
    pub rows: Vec<Lemma2Row>,
    pub fit: LogLogFit,
}

impl Lemma2Table {
    /// Accepted range of the fitted slope around `-1/d`. Small radii sit in
    /// the pre-asymptotic regime, so the window is wide.
    pub fn slope_window(&self) -> (f64, f64) {
        match self.d {
            2 => (-0.9, -0.3),
            _ => (-0.63, -0.13),
        }
    }

    pub fn passed(&self) -> bool {
        let (lo, hi) = self.slope_window();
        (lo..=hi).contains(&self.fit.slope)
    }

    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "R,n_lattice,sq_error")?;
        for r in &self.rows {
            writeln!(out, "{},{},{:e}", r.radius, r.lattice_count, r.sq_error)?;
        }
        writeln!(out, "slope={}", self.fit.slope)?;
        Ok(())
    }
}

/// Squared error against lattice count for each radius, from one spectrum
/// built at the largest radius.
pub fn verify_lemma2(d: usize, radii: &[f64]) -> Result<Lemma2Table> {
    if !(2..=3).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    if radii.is_empty() {
        return Err(Error::Empty("radius list"));
    }
    if radii.iter().any(|r| !r.is_finite() || *r < 1.0) {
        return Err(Error::Domain("every radius must be ≥ 1".into()));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("radii must be strictly ascending".into()));
    }
    let spectrum = BallSpectrum::new(d, *radii.last().unwrap())?;
    let profile = spectrum.error_profile()?;
    let mut rows = Vec::with_capacity(radii.len());
    for &radius in radii {
        let r2 = radius * radius;
        let &(_, lattice_count, sq_error) = profile
            .iter()
            .take_while(|(s, _, _)| (*s as f64) <= r2)
            .last()
            .expect("origin shell is always inside");
        rows.push(Lemma2Row {
            radius,
            lattice_count,
            sq_error,
        });
    }
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.lattice_count as f64, r.sq_error))
        .collect();
    let fit = loglog_fit(&points)?;
    Ok(Lemma2Table { d, rows, fit })
}
