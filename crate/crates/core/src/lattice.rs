//! Nested lattice codes and the compute-and-forward relay round trip.
//!
//! Lattices are described by a full-rank generator matrix whose columns are
//! basis vectors. Scaled integer lattices `sZⁿ` quantize by coordinate-wise
//! rounding; other generators use Babai rounding on a reduced basis followed
//! by a small exhaustive window.
//!
//! Voronoi boundary ties go to the lattice point that leaves the
//! lexicographically smallest residual `p − λ`. In one dimension this makes
//! the Voronoi cell of `sZ` the half-open interval `[−s/2, s/2)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::numerics::ComplexVector;

const INTEGRALITY_TOL: f64 = 1e-9;
const TIE_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Structure {
    /// Diagonal generator: independent scaled-integer coordinates.
    Diagonal(Vec<f64>),
    /// Reduced basis used for Babai rounding, and its inverse.
    General { reduced: DMatrix<f64>, reduced_inv: DMatrix<f64> },
}

/// An n-dimensional lattice `{G k : k ∈ Zⁿ}`.
#[derive(Debug, Clone)]
pub struct Lattice {
    generator: DMatrix<f64>,
    inverse: DMatrix<f64>,
    structure: Structure,
}

impl Lattice {
    pub fn new(generator: DMatrix<f64>) -> Result<Self> {
        check_dim(generator.nrows(), generator.ncols())?;
        let n = generator.nrows();
        if n == 0 || generator.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("generator must be a finite non-empty matrix".into()));
        }
        let inverse = generator.clone().try_inverse().ok_or_else(|| Error::Domain("generator is singular".into()))?;
        let cond = generator.norm() * inverse.norm();
        if !cond.is_finite() || cond > 1e12 {
            return Err(Error::Domain(format!("generator is ill-conditioned (cond ≈ {cond:.3e})")));
        }
        let is_diag = (0..n).all(|j| (0..n).all(|k| j == k || generator[(j, k)] == 0.0));
        let structure = if is_diag {
            Structure::Diagonal((0..n).map(|k| generator[(k, k)].abs()).collect())
        } else {
            let reduced = if n == 2 { gauss_reduce(&generator) } else { generator.clone() };
            let reduced_inv = reduced.clone().try_inverse().expect("unimodular transform of invertible basis");
            Structure::General { reduced, reduced_inv }
        };
        Ok(Self { generator, inverse, structure })
    }

    /// `s·Zⁿ`.
    pub fn scaled_integer(scale: f64, dim: usize) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Domain(format!("lattice scale must be positive, got {scale}")));
        }
        Self::new(DMatrix::from_diagonal_element(dim, dim, scale))
    }

    pub fn dim(&self) -> usize {
        self.generator.nrows()
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    /// Volume of the fundamental cell, `|det G|`.
    pub fn volume(&self) -> f64 {
        self.generator.determinant().abs()
    }

    /// Integer coordinates of `p` in this basis, if `p` is a lattice point.
    pub fn coordinates(&self, p: &[f64]) -> Option<Vec<i64>> {
        let k = &self.inverse * nalgebra::DVector::from_column_slice(p);
        k.iter()
            .map(|&x| ((x - x.round()).abs() <= INTEGRALITY_TOL * (1.0 + x.abs())).then_some(x.round() as i64))
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && self.coordinates(p).is_some()
    }

    /// Nearest lattice point to `p`.
    pub fn quantize(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), p.len())?;
        match &self.structure {
            Structure::Diagonal(scales) => Ok(p.iter().zip(scales).map(|(&x, &s)| (x / s + 0.5).floor() * s).collect()),
            Structure::General { reduced, reduced_inv } => Ok(window_search(reduced, reduced_inv, p)),
        }
    }

    /// `p mod Λ = p − Q(p)`, the representative in the Voronoi cell.
    pub fn mod_lattice(&self, p: &[f64]) -> Result<Vec<f64>> {
        let q = self.quantize(p)?;
        Ok(p.iter().zip(&q).map(|(a, b)| a - b).collect())
    }

    pub fn in_voronoi(&self, p: &[f64]) -> Result<bool> {
        Ok(self.quantize(p)?.iter().all(|&x| x == 0.0))
    }

    /// Lattice point with integer coordinates `k`.
    pub fn point(&self, k: &[i64]) -> Vec<f64> {
        let kv = nalgebra::DVector::from_iterator(k.len(), k.iter().map(|&x| x as f64));
        (&self.generator * kv).iter().copied().collect()
    }

    /// Radius of a ball that contains the Voronoi cell.
    fn covering_bound(&self) -> f64 {
        0.5 * self.generator.column_iter().map(|c| c.norm()).sum::<f64>()
    }
}

/// Lagrange–Gauss reduction of a 2-D basis (columns).
fn gauss_reduce(g: &DMatrix<f64>) -> DMatrix<f64> {
    let mut b1 = g.column(0).into_owned();
    let mut b2 = g.column(1).into_owned();
    if b1.norm_squared() > b2.norm_squared() {
        std::mem::swap(&mut b1, &mut b2);
    }
    for _ in 0..1000 {
        let mu = (b1.dot(&b2) / b1.norm_squared()).round();
        b2 -= &b1 * mu;
        if b2.norm_squared() >= b1.norm_squared() {
            break;
        }
        std::mem::swap(&mut b1, &mut b2);
    }
    DMatrix::from_columns(&[b1, b2])
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Babai rounding followed by exhaustive search of the ±2 (n ≤ 2) or ±1
/// integer window around the rounded coordinates.
fn window_search(basis: &DMatrix<f64>, basis_inv: &DMatrix<f64>, p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let pv = nalgebra::DVector::from_column_slice(p);
    let center: Vec<i64> = (basis_inv * &pv).iter().map(|x| x.round() as i64).collect();
    let w: i64 = if n <= 2 { 2 } else { 1 };
    let span = (2 * w + 1) as usize;
    let total = span.pow(n as u32);

    let mut best_point = vec![0.0; n];
    let mut best_resid = vec![0.0; n];
    let mut best_d = f64::INFINITY;
    let mut k = vec![0i64; n];
    for idx in 0..total {
        let mut r = idx;
        for (j, kj) in k.iter_mut().enumerate() {
            *kj = center[j] + (r % span) as i64 - w;
            r /= span;
        }
        let kv = nalgebra::DVector::from_iterator(n, k.iter().map(|&x| x as f64));
        let lam = basis * kv;
        let resid: Vec<f64> = p.iter().zip(lam.iter()).map(|(a, b)| a - b).collect();
        let d: f64 = resid.iter().map(|x| x * x).sum();
        let tie_eps = TIE_REL_TOL * (1.0 + best_d.min(d));
        let better = d < best_d - tie_eps || ((d - best_d).abs() <= tie_eps && lex_less(&resid, &best_resid));
        if better {
            best_d = d;
            best_resid = resid;
            best_point = lam.iter().copied().collect();
        }
    }
    best_point
}

/// Monte Carlo estimate of a per-dimension second moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Second moment per dimension of the uniform distribution on the Voronoi
/// cell, estimated by reducing uniform samples of the fundamental
/// parallelepiped modulo the lattice.
pub fn second_moment(lat: &Lattice, samples: usize, seed: u64) -> Result<MomentEstimate> {
    if samples < 1000 {
        return Err(Error::Domain(format!("need at least 1000 samples, got {samples}")));
    }
    let n = lat.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let r = nalgebra::DVector::from_fn(n, |_, _| rng.random::<f64>());
        let p: Vec<f64> = (lat.generator() * r).iter().copied().collect();
        let v = lat.mod_lattice(&p)?;
        let e = v.iter().map(|x| x * x).sum::<f64>() / n as f64;
        sum += e;
        sum_sq += e * e;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = (sum_sq / m - mean * mean).max(0.0) * m / (m - 1.0);
    Ok(MomentEstimate { mean, std_err: (var / m).sqrt() })
}

/// Second moment the shaping lattice of user i must have so that the
/// precompensated transmit signal meets power `P_i`: `σ²(Λᵢ) = Pᵢ|g hᵢ|²`.
pub fn shaping_second_moment(power: f64, effective_gain: Complex64) -> f64 {
    power * effective_gain.norm_sqr()
}

/// Whether every basis vector of `coarse` is a point of `fine`.
pub fn is_nested(coarse: &Lattice, fine: &Lattice) -> bool {
    coarse.dim() == fine.dim() && coarse.generator().column_iter().all(|c| fine.contains(c.as_slice()))
}

/// Doubly nested chain `Λ₁ ⊆ Λ₂ ⊆ Λ`.
#[derive(Debug, Clone)]
pub struct NestedChain {
    pub fine: Lattice,
    pub mid: Lattice,
    pub coarse: Lattice,
}

impl NestedChain {
    pub fn new(fine: Lattice, mid: Lattice, coarse: Lattice) -> Result<Self> {
        check_dim(fine.dim(), mid.dim())?;
        check_dim(fine.dim(), coarse.dim())?;
        if !is_nested(&mid, &fine) {
            return Err(Error::NestingViolated("Λ₂ is not a sublattice of Λ".into()));
        }
        if !is_nested(&coarse, &mid) {
            return Err(Error::NestingViolated("Λ₁ is not a sublattice of Λ₂".into()));
        }
        Ok(Self { fine, mid, coarse })
    }

    /// `sΛ Zⁿ ⊇ s₂ Zⁿ ⊇ s₁ Zⁿ`.
    pub fn scaled_integer(fine: f64, mid: f64, coarse: f64, dim: usize) -> Result<Self> {
        Self::new(
            Lattice::scaled_integer(fine, dim)?,
            Lattice::scaled_integer(mid, dim)?,
            Lattice::scaled_integer(coarse, dim)?,
        )
    }

    /// Shaping lattice of user 1 (Λ₁) or user 2 (Λ₂).
    pub fn shaping(&self, user: usize) -> &Lattice {
        if user == 1 {
            &self.coarse
        } else {
            &self.mid
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookEntry {
    pub point: Vec<f64>,
    pub index: usize,
}

/// Codebook `Λ ∩ V(Λᵢ)`, sorted lexicographically and indexed from zero.
pub fn enumerate_codebook(fine: &Lattice, shaping: &Lattice) -> Result<Vec<CodebookEntry>> {
    check_dim(fine.dim(), shaping.dim())?;
    if !is_nested(shaping, fine) {
        return Err(Error::NestingViolated("shaping lattice is not a sublattice of the fine lattice".into()));
    }
    let size = (shaping.volume() / fine.volume()).round() as usize;
    let n = fine.dim();
    let radius = shaping.covering_bound();
    let bounds: Vec<i64> = fine.inverse.row_iter().map(|row| (row.norm() * radius).ceil() as i64 + 1).collect();

    let mut points = Vec::with_capacity(size);
    let mut k: Vec<i64> = bounds.iter().map(|b| -b).collect();
    loop {
        let p = fine.point(&k);
        if shaping.in_voronoi(&p)? {
            points.push(p);
        }
        // odometer increment over the box
        let mut j = 0;
        loop {
            if j == n {
                points.sort_by(|a, b| {
                    a.iter()
                        .zip(b.iter())
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
                if points.len() != size {
                    return Err(Error::Domain(format!("enumerated {} codewords, expected {size}", points.len())));
                }
                return Ok(points
                    .into_iter()
                    .enumerate()
                    .map(|(index, point)| CodebookEntry { point, index })
                    .collect());
            }
            k[j] += 1;
            if k[j] > bounds[j] {
                k[j] = -bounds[j];
                j += 1;
            } else {
                break;
            }
        }
    }
}

/// MMSE scaling at the relay: `(P₁g₁ + P₂g₂) / (P₁g₁ + P₂g₂ + σ²)`.
pub fn mmse_alpha(p1g1: f64, p2g2: f64, sigma2: f64) -> Result<f64> {
    if [p1g1, p2g2, sigma2].iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Domain("MMSE inputs must be finite and non-negative".into()));
    }
    let signal = p1g1 + p2g2;
    if signal + sigma2 <= 0.0 {
        return Err(Error::Domain("MMSE coefficient undefined for all-zero powers".into()));
    }
    Ok(signal / (signal + sigma2))
}

/// Trace of one noiseless or noisy compute-and-forward exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct CofExchange {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub alpha: f64,
    /// `[w₁ + w₂ − Q_{Λ₂}(w₂ + u₂)] mod Λ₁`.
    pub t_expected: Vec<f64>,
    /// `(α·y − u₁ − u₂) mod Λ₁` at the relay.
    pub t_decoded: Vec<f64>,
}

impl CofExchange {
    pub fn matches(&self, tol: f64) -> bool {
        self.t_expected.iter().zip(&self.t_decoded).all(|(a, b)| (a - b).abs() <= tol)
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Runs the multiple-access phase on effective (post-combiner) signals:
/// user i sends `(wᵢ + uᵢ) mod Λᵢ`, the relay sees their sum plus `noise`,
/// scales by the MMSE coefficient, strips the dithers and reduces mod Λ₁.
#[allow(clippy::too_many_arguments)]
pub fn cof_roundtrip(
    chain: &NestedChain,
    w1: &[f64],
    w2: &[f64],
    u1: &[f64],
    u2: &[f64],
    p1g1: f64,
    p2g2: f64,
    sigma2: f64,
    noise: &[f64],
) -> Result<CofExchange> {
    let n = chain.fine.dim();
    for v in [w1, w2, u1, u2, noise] {
        check_dim(n, v.len())?;
    }
    let alpha = mmse_alpha(p1g1, p2g2, sigma2)?;

    let q2 = chain.mid.quantize(&add(w2, u2))?;
    let t_expected = chain.coarse.mod_lattice(&sub(&add(w1, w2), &q2))?;

    let x1 = chain.coarse.mod_lattice(&add(w1, u1))?;
    let x2 = chain.mid.mod_lattice(&add(w2, u2))?;
    let y = add(&add(&x1, &x2), noise);
    let scaled: Vec<f64> = y.iter().map(|v| alpha * v).collect();
    let t_decoded = chain.coarse.mod_lattice(&sub(&sub(&scaled, u1), u2))?;

    Ok(CofExchange { w1: w1.to_vec(), w2: w2.to_vec(), u1: u1.to_vec(), u2: u2.to_vec(), alpha, t_expected, t_decoded })
}

/// Interleaved real vector `(re₀, im₀, re₁, im₁, …)` as complex symbols.
pub fn to_complex(v: &[f64]) -> Result<Vec<Complex64>> {
    if !v.len().is_multiple_of(2) {
        return Err(Error::Domain("interleaved vector must have even length".into()));
    }
    Ok(v.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect())
}

pub fn to_real(v: &[Complex64]) -> Vec<f64> {
    v.iter().flat_map(|z| [z.re, z.im]).collect()
}

/// Channel precompensation at user i: `xᵢ = (g hᵢ)⁻¹ · sᵢ`, where `sᵢ` is the
/// dithered codeword reduced mod Λᵢ in interleaved real form.
pub fn precompensate(shaped: &[f64], effective_gain: Complex64) -> Result<Vec<Complex64>> {
    if effective_gain.norm_sqr() == 0.0 {
        return Err(Error::Domain("zero effective channel g·hᵢ".into()));
    }
    let inv = effective_gain.inv();
    Ok(to_complex(shaped)?.into_iter().map(|s| s * inv).collect())
}

/// Relay observation after receive combining,
/// `y_r = g (h₁x₁ + h₂x₂ + N_r)`, returned in interleaved real form.
/// `noise[t]` is the N-antenna noise column for symbol t.
pub fn relay_observation(
    g: &ComplexVector,
    h1: &ComplexVector,
    h2: &ComplexVector,
    x1: &[Complex64],
    x2: &[Complex64],
    noise: Option<&[ComplexVector]>,
) -> Result<Vec<f64>> {
    check_dim(x1.len(), x2.len())?;
    let gh1 = g.bilinear(h1)?;
    let gh2 = g.bilinear(h2)?;
    let mut out = Vec::with_capacity(x1.len());
    for t in 0..x1.len() {
        let mut y = gh1 * x1[t] + gh2 * x2[t];
        if let Some(nz) = noise {
            y += g.bilinear(&nz[t])?;
        }
        out.push(y);
    }
    Ok(to_real(&out))
}
