//! Exponent bookkeeping and evaluation of the tube-family estimate
//! `||sum_l chi_{T_l}||_{p'} <= C delta^{-n/p+1-eps} m^{1/q-1/r} (delta^{n-1}|A|)^{1/q'}`.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::family::{build_net, validate_family, NetMode, TubeFamily};
use crate::gen::{gen_ball, GenSpec};
use crate::numeric::{is_dyadic_multiple, least_squares_slope};
use crate::raster::{mixed_norm_xray, multiplicity_histogram, GridSpec, DEFAULT_BUDGET_CELLS};

/// A Lebesgue exponent in `[1, inf]`, kept exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exponent {
    Finite(Rational64),
    Infinite,
}

impl Exponent {
    pub fn int(k: i64) -> Self {
        Exponent::Finite(Rational64::from_integer(k))
    }

    pub fn ratio(a: i64, b: i64) -> Self {
        Exponent::Finite(Rational64::new(a, b))
    }

    /// `1/p`, with `1/inf = 0`.
    pub fn recip(self) -> Rational64 {
        match self {
            Exponent::Finite(x) => x.recip(),
            Exponent::Infinite => Rational64::zero(),
        }
    }

    /// Hölder conjugate `p / (p - 1)`.
    pub fn conjugate(self) -> Self {
        match self {
            Exponent::Infinite => Exponent::int(1),
            Exponent::Finite(x) if x.is_one() => Exponent::Infinite,
            Exponent::Finite(x) => Exponent::Finite(x / (x - Rational64::one())),
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Exponent::Finite(x) => x.to_f64().unwrap_or(f64::NAN),
            Exponent::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        self == Exponent::Infinite
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(x) => write!(f, "{x}"),
            Exponent::Infinite => write!(f, "inf"),
        }
    }
}

/// Parses `inf`, an integer, a fraction `a/b`, or a terminating decimal exactly.
pub fn parse_rational(s: &str) -> Result<Rational64> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational number: `{s}`"));
    if let Some((a, b)) = s.split_once('/') {
        let a: i64 = a.trim().parse().map_err(|_| bad())?;
        let b: i64 = b.trim().parse().map_err(|_| bad())?;
        if b == 0 {
            return Err(bad());
        }
        return Ok(Rational64::new(a, b));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if (int.is_empty() && frac.is_empty()) || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 17 {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let num: i64 = digits.parse().map_err(|_| bad())?;
    let den = 10i64.checked_pow(frac.len() as u32).ok_or_else(bad)?;
    let r = Rational64::new(num, den);
    Ok(if neg { -r } else { r })
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if matches!(t, "inf" | "infinity" | "∞") {
            return Ok(Exponent::Infinite);
        }
        let x = parse_rational(t)?;
        if x < Rational64::one() {
            return Err(Error::Domain(format!("exponent {t} must be >= 1")));
        }
        Ok(Exponent::Finite(x))
    }
}

/// The exponents `(p, q, r, alpha)` of the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExponentProfile {
    pub p: Exponent,
    pub q: Exponent,
    pub r: Exponent,
    pub alpha: Rational64,
}

impl ExponentProfile {
    pub fn new(p: Exponent, q: Exponent, r: Exponent, alpha: Rational64) -> Result<Self> {
        for e in [p, q, r] {
            if let Exponent::Finite(x) = e {
                if x < Rational64::one() {
                    return domain(format!("exponent {x} must be >= 1"));
                }
            }
        }
        if alpha.is_negative() {
            return domain("alpha must be >= 0");
        }
        Ok(Self { p, q, r, alpha })
    }

    pub fn p_conj(&self) -> Exponent {
        self.p.conjugate()
    }

    pub fn q_conj(&self) -> Exponent {
        self.q.conjugate()
    }

    pub fn with_alpha(&self, alpha: Rational64) -> Self {
        Self { alpha, ..*self }
    }

    /// `squid` or `custom:p,q,r,alpha`.
    pub fn parse(s: &str, n: usize) -> Result<Self> {
        let s = s.trim();
        if s == "squid" {
            return squid_profile(n);
        }
        let body = s
            .strip_prefix("custom:")
            .or_else(|| s.strip_prefix("custom "))
            .ok_or_else(|| Error::Parse(format!("unknown profile `{s}` (expected squid or custom:p,q,r,alpha)")))?;
        let parts: Vec<&str> = body.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Parse("custom profile needs p,q,r,alpha".into()));
        }
        Self::new(parts[0].parse()?, parts[1].parse()?, parts[2].parse()?, parse_rational(parts[3])?)
    }

    pub fn view(&self) -> ProfileView {
        ProfileView {
            p: self.p.to_string(),
            q: self.q.to_string(),
            r: self.r.to_string(),
            alpha: self.alpha.to_string(),
            p_conj: self.p_conj().to_string(),
            q_conj: self.q_conj().to_string(),
        }
    }
}

impl fmt::Display for ExponentProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "custom:{},{},{},{}", self.p, self.q, self.r, self.alpha)
    }
}

/// Serialized form of a profile, exponents as exact strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileView {
    pub p: String,
    pub q: String,
    pub r: String,
    pub alpha: String,
    pub p_conj: String,
    pub q_conj: String,
}

/// `p = (n+2)/2`, `q = (n-1)(n+2)/n`, `r = 2(n+2)`, `alpha = (n-3)/(2(n+2))`.
pub fn squid_profile(n: usize) -> Result<ExponentProfile> {
    if n < 3 {
        return domain(format!("n = {n} must be >= 3"));
    }
    let n = n as i64;
    ExponentProfile::new(
        Exponent::ratio(n + 2, 2),
        Exponent::ratio((n - 1) * (n + 2), n),
        Exponent::int(2 * (n + 2)),
        Rational64::new(n - 3, 2 * (n + 2)),
    )
}

/// Both sides of the three necessary conditions, exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Admissibility {
    pub scaling_ok: bool,
    pub knapp_ok: bool,
    pub besicovitch_ok: bool,
    /// `1 + (n-1)/r` and `n/p - alpha`.
    pub scaling: (Rational64, Rational64),
    /// `(n-1)/q + (n-1)/r` and `(n-1)/p - alpha`.
    pub knapp: (Rational64, Rational64),
}

impl Admissibility {
    pub fn all(&self) -> bool {
        self.scaling_ok && self.knapp_ok && self.besicovitch_ok
    }

    pub fn scaling_tight(&self) -> bool {
        self.scaling.0 == self.scaling.1
    }

    pub fn knapp_tight(&self) -> bool {
        self.knapp.0 == self.knapp.1
    }
}

pub fn admissible(profile: &ExponentProfile, n: usize) -> Admissibility {
    let n = Rational64::from_integer(n as i64);
    let h = n - Rational64::one();
    let (ip, iq, ir) = (profile.p.recip(), profile.q.recip(), profile.r.recip());
    let scaling = (Rational64::one() + h * ir, n * ip - profile.alpha);
    let knapp = (h * iq + h * ir, h * ip - profile.alpha);
    Admissibility {
        scaling_ok: scaling.0 >= scaling.1,
        knapp_ok: knapp.0 >= knapp.1,
        besicovitch_ok: !(profile.r.is_infinite() && profile.alpha.is_zero()),
        scaling,
        knapp,
    }
}

fn rf(x: Rational64) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// `delta^{-n/p+1-eps} m^{1/q-1/r} (delta^{n-1} |A|)^{1/q'}`.
pub fn rhs_bound(n: usize, delta: f64, m: usize, family_size: usize, epsilon: f64, profile: &ExponentProfile) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("delta = {delta} outside (0, 1)"));
    }
    if m < 1 || family_size < 1 {
        return domain("m and family size must be >= 1");
    }
    let nn = Rational64::from_integer(n as i64);
    let delta_exp = rf(Rational64::one() - nn * profile.p.recip()) - epsilon;
    let m_exp = rf(profile.q.recip() - profile.r.recip());
    let mass_exp = rf(profile.q_conj().recip());
    let mass = delta.powi(n as i32 - 1) * family_size as f64;
    Ok(delta.powf(delta_exp) * (m as f64).powf(m_exp) * mass.powf(mass_exp))
}

/// Grid and budget settings for an evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Cell side; `None` means `delta / 2`.
    pub cell: Option<f64>,
    pub budget_cells: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { cell: None, budget_cells: DEFAULT_BUDGET_CELLS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub n: usize,
    pub delta: f64,
    pub cell: f64,
    /// Realized maximum direction multiplicity, the `m` used in the bound.
    pub m: usize,
    pub declared_m: usize,
    pub family_size: usize,
    pub epsilon: f64,
    pub seed: Option<u64>,
    pub generator: Option<String>,
    pub profile: ProfileView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub family_size: usize,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Least-squares slope of `log ratio` against `log(1/delta)` for sweeps.
    pub slope: Option<f64>,
    pub params: ReportParams,
    pub sweep: Option<Vec<SweepPoint>>,
    /// Set when a sweep stopped early; `sweep` then holds the points before the failure.
    pub aborted: bool,
    pub error: Option<String>,
}

impl EstimateReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flat `delta,lhs,rhs,ratio` table of the sweep (or the single evaluation).
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["delta", "lhs", "rhs", "ratio"])?;
        let single = [SweepPoint {
            delta: self.params.delta,
            lhs: self.lhs,
            rhs: self.rhs,
            ratio: self.ratio,
            family_size: self.params.family_size,
            m: self.params.m,
        }];
        let pts = self.sweep.as_deref().unwrap_or(&single);
        for p in pts {
            w.write_record([p.delta, p.lhs, p.rhs, p.ratio].map(|x| format!("{x}")))?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// Whitespace-separated columns for gnuplot.
    pub fn to_plot_data(&self) -> String {
        let mut s = String::from("# log2(1/delta) log2(ratio) delta ratio\n");
        let single = [SweepPoint {
            delta: self.params.delta,
            lhs: self.lhs,
            rhs: self.rhs,
            ratio: self.ratio,
            family_size: self.params.family_size,
            m: self.params.m,
        }];
        for p in self.sweep.as_deref().unwrap_or(&single) {
            s.push_str(&format!("{} {} {} {}\n", -p.delta.log2(), p.ratio.log2(), p.delta, p.ratio));
        }
        s
    }
}

/// Evaluates both sides of the estimate on a grid covering the family.
pub fn evaluate(f: &TubeFamily, profile: &ExponentProfile, epsilon: f64, opts: &EvalOptions) -> Result<EstimateReport> {
    if f.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let report = validate_family(f);
    if !report.is_valid() {
        return Err(Error::InvalidFamily(report.summary()));
    }
    let cell = opts.cell.unwrap_or(f.delta / 2.0);
    let spec = GridSpec::covering(f.n, &f.lines, f.delta, cell)?;
    let hist = multiplicity_histogram(f, &spec, opts.budget_cells)?;
    let lhs = match profile.p_conj() {
        Exponent::Infinite => hist.max_multiplicity() as f64,
        e => hist.lp_norm(e.to_f64()),
    };
    let m = report.max_multiplicity;
    let rhs = rhs_bound(f.n, f.delta, m, f.len(), epsilon, profile)?;
    Ok(EstimateReport {
        lhs,
        rhs,
        ratio: lhs / rhs,
        slope: None,
        params: ReportParams {
            n: f.n,
            delta: f.delta,
            cell,
            m,
            declared_m: f.m,
            family_size: f.len(),
            epsilon,
            seed: f.seed,
            generator: None,
            profile: profile.view(),
        },
        sweep: None,
        aborted: false,
        error: None,
    })
}

/// Slope of `log ratio` against `log(1/delta)`.
pub fn sweep_slope(points: &[SweepPoint]) -> Option<f64> {
    let xs: Vec<f64> = points.iter().map(|p| -p.delta.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.ratio.ln()).collect();
    least_squares_slope(&xs, &ys)
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return domain("empty delta list");
    }
    for d in deltas {
        if !(*d > 0.0 && *d < 1.0) || is_dyadic_multiple(*d, 1.0).is_none() {
            return domain(format!("delta {d} is not a dyadic value in (0, 1)"));
        }
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return domain("deltas must be strictly descending");
    }
    Ok(())
}

/// Evaluates the generator at each `delta` and fits the growth of the ratio.
/// Evaluations run concurrently; points are reported in the order given.
pub fn sweep(
    gen: &GenSpec,
    n: usize,
    deltas: &[f64],
    profile: &ExponentProfile,
    epsilon: f64,
    seed: u64,
    opts: &EvalOptions,
) -> Result<EstimateReport> {
    check_deltas(deltas)?;
    let results: Vec<Result<EstimateReport>> = deltas
        .par_iter()
        .map(|&d| {
            let f = gen.generate(n, d, seed)?;
            evaluate(&f, profile, epsilon, opts)
        })
        .collect();
    let mut points = Vec::new();
    let mut last: Option<EstimateReport> = None;
    let mut failure = None;
    for r in results {
        match r {
            Ok(rep) => {
                points.push(SweepPoint {
                    delta: rep.params.delta,
                    lhs: rep.lhs,
                    rhs: rep.rhs,
                    ratio: rep.ratio,
                    family_size: rep.params.family_size,
                    m: rep.params.m,
                });
                last = Some(rep);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let Some(mut rep) = last else {
        return Err(failure.unwrap_or_else(|| Error::Domain("empty sweep".into())));
    };
    rep.slope = sweep_slope(&points);
    rep.sweep = Some(points);
    rep.params.generator = Some(gen.to_string());
    rep.params.seed = Some(seed);
    if let Some(e) = failure {
        rep.aborted = true;
        rep.error = Some(e.to_string());
    }
    Ok(rep)
}

/// Measured exponent `s` in `||X_delta chi_B||_{L^q_v L^r_x} ~ delta^s` for a
/// `delta`-ball `B`, fitted over `deltas`. The scaling example predicts
/// `s = 1 + (n-1)/r`.
pub fn ball_scaling_exponent(n: usize, deltas: &[f64], q: f64, r: f64) -> Result<f64> {
    check_deltas(deltas)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &d in deltas {
        let ball = gen_ball(n, d)?;
        let dirs = build_net(n - 1, d, 0, NetMode::Lattice)?;
        let val = mixed_norm_xray(&ball, &dirs, &dirs, q, r)?;
        xs.push(d.ln());
        ys.push(val.ln());
    }
    least_squares_slope(&xs, &ys).ok_or_else(|| Error::Domain("need at least two deltas".into()))
}

/// `1 + (n-1)/r`.
pub fn predicted_ball_exponent(profile: &ExponentProfile, n: usize) -> f64 {
    rf(Rational64::one() + Rational64::from_integer(n as i64 - 1) * profile.r.recip())
}
