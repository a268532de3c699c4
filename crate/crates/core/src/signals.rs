//! Random unit-energy waveforms and their projection geometry.
//!
//! Waveforms are drawn uniformly from the unit sphere in N dimensions by
//! normalizing i.i.d. standard normals. Two such vectors have
//! E[(a·b)²] = 1/N, and the squared projection of a fresh vector onto a
//! k-dimensional random subspace averages k/N; [`angle_density`] gives the
//! exact density of the angle to the subspace that these moments follow from.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

/// Unit-energy waveform in N dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    coefficients: Vec<f64>,
}

impl Waveform {
    /// Wrap raw samples, normalizing to unit energy.
    pub fn from_samples(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidDimension("waveform needs at least one sample".into()));
        }
        let norm = samples.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidDimension("cannot normalize a zero or non-finite vector".into()));
        }
        for v in &mut samples {
            *v /= norm;
        }
        Ok(Self { coefficients: samples })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn dot(&self, other: &Waveform) -> f64 {
        dot(&self.coefficients, other.coefficients())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Isotropic unit vector: n standard normals, normalized.
pub fn sample_unit_vector(n: usize, stream: RngStream) -> Result<Waveform> {
    let mut rng = stream.rng();
    sample_unit_vector_with(n, &mut rng)
}

pub(crate) fn sample_unit_vector_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Waveform> {
    if n == 0 {
        return Err(Error::InvalidDimension("dimension must be >= 1".into()));
    }
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(w) = Waveform::from_samples(v) {
            return Ok(w);
        }
        // astronomically unlikely all-zero draw; redraw
    }
}

/// `m` mutually orthonormal, isotropically oriented vectors: a random
/// Gaussian matrix orthonormalized by modified Gram-Schmidt (with redraw on
/// numerically degenerate columns).
pub fn sample_orthogonal_fragment_basis(n: usize, m: usize, stream: RngStream) -> Result<Vec<Waveform>> {
    let mut rng = stream.rng();
    sample_orthogonal_basis_with(n, m, &mut rng)
}

pub(crate) fn sample_orthogonal_basis_with<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    rng: &mut R,
) -> Result<Vec<Waveform>> {
    if n == 0 {
        return Err(Error::InvalidDimension("dimension must be >= 1".into()));
    }
    if m > n {
        return Err(Error::InvalidDimension(format!("cannot fit {m} orthonormal vectors in {n} dimensions")));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    while basis.len() < m {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for q in &basis {
            let c = dot(&v, q);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * qi;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        for x in &mut v {
            *x /= norm;
        }
        basis.push(v);
    }
    Ok(basis.into_iter().map(|coefficients| Waveform { coefficients }).collect())
}

/// ln of the unit-ball volume C_n = π^{n/2} / Γ(n/2 + 1).
fn ln_ball_volume(n: usize) -> f64 {
    let nf = n as f64;
    0.5 * nf * std::f64::consts::PI.ln() - ln_gamma(nf / 2.0 + 1.0)
}

/// Density (in φ) of the angle between a uniform unit vector in n dimensions
/// and a fixed k-dimensional subspace:
///
///   p(φ) = k C_k cos^{k-1}(φ) · (n-k) C_{n-k} sin^{n-k-1}(φ) / (n C_n),
///
/// supported on [0, π/2].
pub fn angle_density(phi: f64, n: usize, k: usize) -> Result<f64> {
    if k == 0 || k >= n {
        return Err(Error::InvalidSubspace { k, n });
    }
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&phi) {
        return Err(Error::Domain(format!("angle {phi} outside [0, π/2]")));
    }
    let (kf, nf) = (k as f64, n as f64);
    let ln_coeff = kf.ln() + ln_ball_volume(k) + (nf - kf).ln() + ln_ball_volume(n - k) - nf.ln() - ln_ball_volume(n);
    let c = phi.cos();
    let s = phi.sin();
    // cos^{k-1} sin^{n-k-1} in log form where both factors are positive
    if c == 0.0 {
        return Ok(if k == 1 { ln_coeff.exp() * s.powi((n - k) as i32 - 1) } else { 0.0 });
    }
    if s == 0.0 {
        return Ok(if n - k == 1 { ln_coeff.exp() * c.powi(k as i32 - 1) } else { 0.0 });
    }
    Ok((ln_coeff + (kf - 1.0) * c.ln() + (nf - kf - 1.0) * s.ln()).exp())
}

/// Squared projection of `x` onto the span of `span` (orthonormalized
/// internally by Gram-Schmidt; this is the plain-enumeration oracle for the
/// k/n projection law).
pub fn projection_power_onto_span(x: &Waveform, span: &[Waveform]) -> Result<f64> {
    if span.is_empty() {
        return Ok(0.0);
    }
    let n = x.dim();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(span.len());
    for w in span {
        if w.dim() != n {
            return Err(Error::InvalidDimension("span dimension mismatch".into()));
        }
        let mut v = w.coefficients().to_vec();
        for q in &basis {
            let c = dot(&v, q);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * qi;
            }
        }
        let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm < 1e-10 {
            continue; // dependent direction, measure-zero event
        }
        for t in &mut v {
            *t /= norm;
        }
        basis.push(v);
    }
    Ok(basis.iter().map(|q| dot(x.coefficients(), q).powi(2)).sum())
}
