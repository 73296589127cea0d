//! Truncated Karhunen-Loève expansion of the viscosity for the separable
//! exponential covariance exp(-|x1 - z1| / b1 - |x2 - z2| / b2).

use serde::{Deserialize, Serialize};

use crate::error::{Result, SgfeError};

/// Sample points per direction used for the sup-norm estimate of each mode.
pub const SUP_GRID: usize = 201;

/// Eigenfunction of the 1D exponential kernel on [-a, a].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mode1d {
    /// `amp * cos(omega x)`
    Even { omega: f64, amp: f64 },
    /// `amp * sin(omega x)`
    Odd { omega: f64, amp: f64 },
}

impl Mode1d {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Mode1d::Even { omega, amp } => amp * (omega * x).cos(),
            Mode1d::Odd { omega, amp } => amp * (omega * x).sin(),
        }
    }

    pub fn omega(&self) -> f64 {
        match *self {
            Mode1d::Even { omega, .. } | Mode1d::Odd { omega, .. } => omega,
        }
    }

    /// sup |mode| over [-a, a]: grid samples plus the analytic extremum.
    pub fn sup_norm(&self, half_width: f64) -> f64 {
        let grid = (0..SUP_GRID)
            .map(|i| -half_width + 2.0 * half_width * i as f64 / (SUP_GRID - 1) as f64)
            .map(|x| self.eval(x).abs())
            .fold(0.0, f64::max);
        let analytic = match *self {
            // cos attains 1 at x = 0
            Mode1d::Even { amp, .. } => amp.abs(),
            Mode1d::Odd { omega, amp } => {
                if omega * half_width >= std::f64::consts::FRAC_PI_2 {
                    amp.abs()
                } else {
                    (amp * (omega * half_width).sin()).abs()
                }
            }
        };
        grid.max(analytic).max(self.eval(half_width).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair1d {
    pub lambda: f64,
    pub mode: Mode1d,
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Leading `count` eigenpairs of ∫ exp(-|x - z| / b) φ(z) dz on [-a, a], descending.
///
/// With c = 1/b, even modes cos(ωx) satisfy c - ω tan(ωa) = 0 and odd modes
/// sin(ωx) satisfy ω + c tan(ωa) = 0; eigenvalues are 2c / (ω² + c²). Each
/// root is bracketed between consecutive zeros/poles of tan.
pub fn solve_1d_eigenpairs(
    corr_length: f64,
    half_width: f64,
    count: usize,
) -> Result<Vec<Eigenpair1d>> {
    if !(corr_length > 0.0) || !(half_width > 0.0) || count == 0 {
        return Err(SgfeError::InvalidParameter(format!(
            "need corr_length > 0, half_width > 0, count >= 1 (got {corr_length}, {half_width}, {count})"
        )));
    }
    let c = 1.0 / corr_length;
    let a = half_width;
    let pi = std::f64::consts::PI;
    let mut out = Vec::with_capacity(count);
    for idx in 0..count {
        let k = (idx / 2) as f64;
        let pair = if idx % 2 == 0 {
            // ωa in (kπ, kπ + π/2): ω sin(ωa) - c cos(ωa) changes sign
            let f = |w: f64| w * (w * a).sin() - c * (w * a).cos();
            let omega = bisect(f, k * pi / a, (k * pi + 0.5 * pi) / a).ok_or(
                SgfeError::RootBracketing {
                    family: "even",
                    index: idx / 2,
                },
            )?;
            let norm2 = a + (2.0 * omega * a).sin() / (2.0 * omega);
            Eigenpair1d {
                lambda: 2.0 * c / (omega * omega + c * c),
                mode: Mode1d::Even {
                    omega,
                    amp: 1.0 / norm2.sqrt(),
                },
            }
        } else {
            // ωa in (kπ + π/2, (k+1)π): c sin(ωa) + ω cos(ωa) changes sign
            let f = |w: f64| c * (w * a).sin() + w * (w * a).cos();
            let omega = bisect(f, (k * pi + 0.5 * pi) / a, (k + 1.0) * pi / a).ok_or(
                SgfeError::RootBracketing {
                    family: "odd",
                    index: idx / 2,
                },
            )?;
            let norm2 = a - (2.0 * omega * a).sin() / (2.0 * omega);
            Eigenpair1d {
                lambda: 2.0 * c / (omega * omega + c * c),
                mode: Mode1d::Odd {
                    omega,
                    amp: 1.0 / norm2.sqrt(),
                },
            }
        };
        out.push(pair);
    }
    Ok(out)
}

/// One retained 2D term: λ = λ1 λ2, ν(x) = φ1(x1) φ2(x2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlTerm {
    pub lambda: f64,
    pub index: [usize; 2],
    pub mode_x1: Mode1d,
    pub mode_x2: Mode1d,
    /// sup |√λ ν|
    pub chi: f64,
}

impl KlTerm {
    pub fn eval_mode(&self, x1: f64, x2: f64) -> f64 {
        self.mode_x1.eval(x1) * self.mode_x2.eval(x2)
    }
}

/// Truncated KLE ν_M(x, y) = ν0 + σ Σ_m √λ_m ν_m(x) y_m with y_m uniform on [-√3, √3].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KleExpansion {
    pub nu0: f64,
    pub sigma: f64,
    pub corr_lengths: [f64; 2],
    pub half_width: f64,
    pub terms: Vec<KlTerm>,
    /// Σ χ_m over the retained terms.
    pub chi_total: f64,
    /// Fraction of the covariance trace captured by the retained terms.
    pub captured_variance: f64,
}

impl KleExpansion {
    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn chi(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.chi).collect()
    }

    /// Coefficient of y_m: σ √λ_m ν_m(x).
    pub fn fluctuation(&self, m: usize, x1: f64, x2: f64) -> f64 {
        let t = &self.terms[m];
        self.sigma * t.lambda.sqrt() * t.eval_mode(x1, x2)
    }

    /// Viscosity sample for a parameter vector y.
    pub fn eval(&self, x1: f64, x2: f64, y: &[f64]) -> f64 {
        self.nu0
            + self
                .terms
                .iter()
                .zip(y)
                .map(|(t, &ym)| self.sigma * t.lambda.sqrt() * t.eval_mode(x1, x2) * ym)
                .sum::<f64>()
    }

    /// Boxed fluctuation coefficient functions for assembly.
    pub fn fluctuation_fns(&self) -> Vec<Box<dyn Fn(f64, f64) -> f64 + Send + Sync>> {
        (0..self.terms.len())
            .map(|m| {
                let t = self.terms[m];
                let s = self.sigma * t.lambda.sqrt();
                Box::new(move |x1: f64, x2: f64| s * t.eval_mode(x1, x2))
                    as Box<dyn Fn(f64, f64) -> f64 + Send + Sync>
            })
            .collect()
    }
}

/// Builds the M leading 2D terms on [-0.5, 0.5]^2 from products of 1D eigenpairs.
pub fn build_kle_2d(b1: f64, b2: f64, m: usize, nu0: f64, sigma: f64) -> Result<KleExpansion> {
    build_kle_2d_on(b1, b2, m, nu0, sigma, 0.5)
}

pub fn build_kle_2d_on(
    b1: f64,
    b2: f64,
    m: usize,
    nu0: f64,
    sigma: f64,
    half_width: f64,
) -> Result<KleExpansion> {
    if !(nu0 > 0.0) || !(sigma >= 0.0) {
        return Err(SgfeError::InvalidParameter(format!(
            "need nu0 > 0 and sigma >= 0 (got {nu0}, {sigma})"
        )));
    }
    // The M largest products can all lie along one axis when the correlation
    // lengths differ a lot, so take M modes per direction.
    let per_dir = m.max(1);
    let e1 = solve_1d_eigenpairs(b1, half_width, per_dir)?;
    let e2 = solve_1d_eigenpairs(b2, half_width, per_dir)?;
    let mut pool: Vec<(f64, usize, usize)> = Vec::with_capacity(per_dir * per_dir);
    for (i, p) in e1.iter().enumerate() {
        for (j, q) in e2.iter().enumerate() {
            pool.push((p.lambda * q.lambda, i, j));
        }
    }
    if m > pool.len() {
        return Err(SgfeError::InvalidParameter(format!(
            "requested {m} KLE terms but only {} products are available",
            pool.len()
        )));
    }
    pool.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let terms: Vec<KlTerm> = pool[..m]
        .iter()
        .map(|&(lambda, i, j)| {
            let (m1, m2) = (e1[i].mode, e2[j].mode);
            KlTerm {
                lambda,
                index: [i, j],
                mode_x1: m1,
                mode_x2: m2,
                chi: lambda.sqrt() * m1.sup_norm(half_width) * m2.sup_norm(half_width),
            }
        })
        .collect();
    let chi_total = terms.iter().map(|t| t.chi).sum();
    let trace = (2.0 * half_width).powi(2);
    let captured_variance = terms.iter().map(|t| t.lambda).sum::<f64>() / trace;
    Ok(KleExpansion {
        nu0,
        sigma,
        corr_lengths: [b1, b2],
        half_width,
        terms,
        chi_total,
        captured_variance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityCheck {
    pub is_positive: bool,
    pub nu_lower: f64,
    pub nu_upper: f64,
}

/// Uniform bounds ν0 ∓ √3 σ χ with χ the truncated sum.
pub fn check_positivity(kle: &KleExpansion) -> PositivityCheck {
    let spread = 3f64.sqrt() * kle.sigma * kle.chi_total;
    let nu_lower = kle.nu0 - spread;
    PositivityCheck {
        is_positive: nu_lower > 0.0,
        nu_lower,
        nu_upper: kle.nu0 + spread,
    }
}

/// The standard deviation at which the lower viscosity bound reaches zero.
pub fn critical_sigma(kle: &KleExpansion) -> f64 {
    kle.nu0 / (3f64.sqrt() * kle.chi_total)
}

/// JSON-friendly summary of an expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KleSummary {
    pub lambda: Vec<f64>,
    pub chi: Vec<f64>,
    pub chi_total: f64,
    pub captured_variance: f64,
    pub nu_lower: f64,
    pub nu_upper: f64,
    pub positivity_margin: f64,
    pub critical_sigma: f64,
}

impl KleSummary {
    pub fn new(kle: &KleExpansion) -> Self {
        let pos = check_positivity(kle);
        Self {
            lambda: kle.terms.iter().map(|t| t.lambda).collect(),
            chi: kle.chi(),
            chi_total: kle.chi_total,
            captured_variance: kle.captured_variance,
            nu_lower: pos.nu_lower,
            nu_upper: pos.nu_upper,
            positivity_margin: pos.nu_lower,
            critical_sigma: critical_sigma(kle),
        }
    }
}
