//! Transceiver and power-splitter design for one channel realization.
//!
//! With the lattice second-moment ratios γᵢ relaxed to zero, the rate targets
//! and the harvested-power budget collapse into one constraint per user:
//!
//! ```text
//! P_r |hᵢᵀf|² ≥ aᵢ(g),   aᵢ(g) = σ²θᵢᵣ/(η|g hᵢ|²) + σ²(θᵣᵢ − 1) + 2P_c/η
//! ```
//!
//! so the minimum relay power for fixed `(f, g)` is `maxᵢ aᵢ/|hᵢᵀf|²`. The
//! beamformer sub-problem (fixed g) and the combiner sub-problem (fixed f)
//! are both solved as semidefinite relaxations followed by dominant
//! eigenvector projection.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::mmse_alpha;
use crate::numerics::{eig_hermitian, ComplexVector, HermitianMatrix};
use crate::scenario::ChannelRealization;
use crate::sdp::{bisect_level, solve_sdp, Relation, SdpInstance, Tolerances};

/// Rank ratio above which an SDP solution is treated as not rank one.
pub const RANK_ONE_THRESHOLD: f64 = 1e-6;
/// Slack on the trace budget when testing a combiner level for feasibility.
const LEVEL_TRACE_SLACK: f64 = 1e-9;
/// Relative bisection tolerance on the combiner level.
const LEVEL_REL_TOL: f64 = 1e-10;
/// Rounding allowance when the splitting-ratio interval degenerates to a point.
const BETA_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub n_antennas: usize,
    /// Energy conversion efficiency η ∈ (0, 1].
    pub eta: f64,
    /// Circuit power per symbol, linear units.
    pub p_c: f64,
    /// Total receiver noise power σ².
    pub sigma2: f64,
    /// Noise before the splitter.
    pub sigma2_a: f64,
    /// Noise after the splitter; `sigma2_a + sigma2_p = sigma2`.
    pub sigma2_p: f64,
    /// Rate targets `(R̄₁, R̄₂)` in bits/s/Hz.
    pub rate_targets: [f64; 2],
}

impl SystemParams {
    /// Parameters with all noise after the splitter (`σ_a² = 0`).
    pub fn new(n_antennas: usize, eta: f64, p_c: f64, sigma2: f64, rate_targets: [f64; 2]) -> Result<Self> {
        let p = Self { n_antennas, eta, p_c, sigma2, sigma2_a: 0.0, sigma2_p: sigma2, rate_targets };
        p.validate()?;
        Ok(p)
    }

    /// Moves `sigma2_a` of the noise in front of the splitter.
    pub fn with_splitter_noise(mut self, sigma2_a: f64) -> Result<Self> {
        self.sigma2_a = sigma2_a;
        self.sigma2_p = self.sigma2 - sigma2_a;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Domain(m.to_string()));
        if self.n_antennas == 0 {
            return bad("need at least one relay antenna");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("conversion efficiency must lie in (0, 1]");
        }
        if !(self.p_c.is_finite() && self.p_c >= 0.0) {
            return bad("circuit power must be finite and non-negative");
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return bad("noise power must be positive");
        }
        if self.sigma2_a < 0.0
            || self.sigma2_p < 0.0
            || (self.sigma2_a + self.sigma2_p - self.sigma2).abs() > 1e-12 * self.sigma2
        {
            return bad("splitter noise must partition the total noise power");
        }
        if self.rate_targets.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("rate targets must be positive");
        }
        Ok(())
    }
}

/// SINR thresholds implied by the rate targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// `θᵢᵣ = 2^(2R̄ᵢ)`, user i to relay.
    pub uplink: [f64; 2],
    /// `θᵣᵢ = 2^(2R̄₃₋ᵢ)`, relay to user i (carries the other user's message).
    pub downlink: [f64; 2],
}

pub fn rate_thresholds(params: &SystemParams) -> Thresholds {
    let [r1, r2] = params.rate_targets;
    let th = |r: f64| 2f64.powf(2.0 * r);
    Thresholds { uplink: [th(r1), th(r2)], downlink: [th(r2), th(r1)] }
}

/// `|g hᵢ|²` for both users.
pub fn uplink_gains(g: &ComplexVector, ch: &ChannelRealization) -> Result<[f64; 2]> {
    Ok([g.bilinear(&ch.h1)?.norm_sqr(), g.bilinear(&ch.h2)?.norm_sqr()])
}

/// `|hᵢᵀ f|²` for both users.
pub fn downlink_gains(f: &ComplexVector, ch: &ChannelRealization) -> Result<[f64; 2]> {
    Ok([ch.h1.bilinear(f)?.norm_sqr(), ch.h2.bilinear(f)?.norm_sqr()])
}

fn rhs_from_gains(params: &SystemParams, gains: [f64; 2]) -> Result<[f64; 2]> {
    let th = rate_thresholds(params);
    let mut a = [0.0; 2];
    for i in 0..2 {
        if !(gains[i] > 0.0) {
            return Err(Error::DegenerateChannel(format!("zero effective uplink gain for user {}", i + 1)));
        }
        a[i] = params.sigma2 * th.uplink[i] / (params.eta * gains[i])
            + params.sigma2 * (th.downlink[i] - 1.0)
            + 2.0 * params.p_c / params.eta;
    }
    Ok(a)
}

/// Per-user right-hand side `aᵢ` of the beamformer constraints for combiner `g`.
pub fn constraint_rhs(params: &SystemParams, g: &ComplexVector, ch: &ChannelRealization) -> Result<[f64; 2]> {
    rhs_from_gains(params, uplink_gains(g, ch)?)
}

/// Smallest relay power for which both users admit a splitting ratio in [0, 1].
pub fn required_power(
    f: &ComplexVector,
    g: &ComplexVector,
    ch: &ChannelRealization,
    params: &SystemParams,
) -> Result<f64> {
    let a = constraint_rhs(params, g, ch)?;
    let h = downlink_gains(f, ch)?;
    if h.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::DegenerateChannel("zero downlink gain to a user".into()));
    }
    Ok((a[0] / h[0]).max(a[1] / h[1]))
}

/// Dominant eigenpair of a PSD matrix.
#[derive(Debug, Clone)]
pub struct RankOne {
    /// Largest eigenvalue λ₁.
    pub scale: f64,
    /// Unit dominant eigenvector.
    pub v: ComplexVector,
    /// `λ₂/λ₁` (0 when N = 1).
    pub rank_ratio: f64,
}

pub fn rank_one_extract(m: &HermitianMatrix) -> Result<RankOne> {
    let e = eig_hermitian(m)?;
    let scale = e.values[0];
    let rank_ratio = match e.values.get(1) {
        Some(l2) if scale > 0.0 => l2.max(0.0) / scale,
        Some(_) => 1.0,
        None => 0.0,
    };
    Ok(RankOne { scale, v: e.vectors[0].clone(), rank_ratio })
}

/// Rank reduction that keeps `Tr(Mₖ X)` fixed for every `Mₖ` in `mats`.
///
/// With `X = V V†` of rank r, any Hermitian r×r `Δ` orthogonal to all
/// `V†MₖV` gives `X' = V(I − Δ/λ_max(Δ))V†`, which is PSD, matches every
/// trace and has lower rank. Such a `Δ` exists while `r² > mats.len()`.
pub fn purify_rank(x: &HermitianMatrix, mats: &[&HermitianMatrix]) -> Result<HermitianMatrix> {
    use nalgebra::{DMatrix, SymmetricEigen};
    let n = x.dim();
    for m in mats {
        crate::error::check_dim(n, m.dim())?;
    }
    let mut current = x.clone();
    for _ in 0..n {
        let e = eig_hermitian(&current)?;
        let top = e.values[0].max(0.0);
        let keep: Vec<usize> = (0..n).filter(|&k| e.values[k] > RANK_ONE_THRESHOLD * top).collect();
        let r = keep.len();
        if r <= 1 || r * r <= mats.len() {
            break;
        }
        let v = DMatrix::<Complex64>::from_fn(n, r, |row, col| {
            let k = keep[col];
            e.vectors[k][row] * e.values[k].sqrt()
        });
        // Hermitian basis of r×r matrices.
        let mut basis = Vec::with_capacity(r * r);
        for a in 0..r {
            for b in a..r {
                let mut m = DMatrix::<Complex64>::zeros(r, r);
                if a == b {
                    m[(a, a)] = Complex64::new(1.0, 0.0);
                    basis.push(m);
                } else {
                    m[(a, b)] = Complex64::new(1.0, 0.0);
                    m[(b, a)] = Complex64::new(1.0, 0.0);
                    basis.push(m.clone());
                    m[(a, b)] = Complex64::new(0.0, 1.0);
                    m[(b, a)] = Complex64::new(0.0, -1.0);
                    basis.push(m);
                }
            }
        }
        let reduced: Vec<DMatrix<Complex64>> = mats.iter().map(|m| v.adjoint() * m.inner() * &v).collect();
        let c = DMatrix::<f64>::from_fn(mats.len(), basis.len(), |k, j| (reduced[k].clone() * &basis[j]).trace().re);
        let gram = c.transpose() * &c;
        let se = SymmetricEigen::new(gram);
        let j_min = se.eigenvalues.imin();
        let coef = se.eigenvectors.column(j_min);
        let mut delta = DMatrix::<Complex64>::zeros(r, r);
        for (j, b) in basis.iter().enumerate() {
            delta += b * Complex64::new(coef[j], 0.0);
        }
        let d = eig_hermitian(&HermitianMatrix::hermitian_part(&delta)?)?;
        let lam_pos = d.values[0];
        let lam_neg = d.values[r - 1];
        let lam = if lam_pos.abs() >= lam_neg.abs() { lam_pos } else { lam_neg };
        if lam == 0.0 {
            break;
        }
        let step = DMatrix::<Complex64>::identity(r, r) - delta / Complex64::new(lam, 0.0);
        current = HermitianMatrix::hermitian_part(&(&v * step * v.adjoint()))?;
    }
    Ok(current)
}

#[derive(Debug, Clone)]
pub struct BeamformerSolution {
    /// Relaxed solution `F ≈ P_r f f†`.
    pub f_matrix: HermitianMatrix,
    /// Minimal relay power for the projected beamformer.
    pub p_r: f64,
    pub f: ComplexVector,
    pub rank_ratio: f64,
    /// The SDP returned a higher-rank optimum that was reduced to rank one.
    pub purified: bool,
}

fn solve_optimal(inst: &SdpInstance, tol: &Tolerances) -> Result<crate::sdp::SdpSolution> {
    let first = solve_sdp(inst, tol)?;
    if first.is_optimal() {
        return Ok(first);
    }
    // One retry with a larger iteration budget and the default targets.
    let relaxed = Tolerances { max_iter: tol.max_iter * 2, ..Tolerances::default() };
    solve_sdp(inst, &relaxed)?.require_optimal()
}

/// Minimum-trace beamformer meeting `Tr(AᵢF) ≥ aᵢ` with `Aᵢ = hᵢ* hᵢᵀ`.
/// Users with `aᵢ ≤ 0` impose no constraint.
pub fn beamformer_for_targets(channels: &[&ComplexVector], a: &[f64], tol: &Tolerances) -> Result<BeamformerSolution> {
    let n = channels.first().map(|h| h.len()).ok_or_else(|| Error::Domain("no users".into()))?;
    let active: Vec<usize> = (0..channels.len()).filter(|&i| a[i] > 0.0).collect();
    if active.is_empty() {
        return Ok(BeamformerSolution {
            f_matrix: HermitianMatrix::zeros(n),
            p_r: 0.0,
            f: ComplexVector::uniform(n),
            rank_ratio: 0.0,
            purified: false,
        });
    }
    let mut inst = SdpInstance::minimize(HermitianMatrix::identity(n));
    for &i in &active {
        if channels[i].norm_sqr() == 0.0 {
            return Err(Error::DegenerateChannel(format!("user {} has a zero channel", i + 1)));
        }
        inst = inst.subject_to(HermitianMatrix::outer(&channels[i].conj()), Relation::Ge, a[i]);
    }
    let sol = solve_optimal(&inst, tol)?;
    let mats: Vec<HermitianMatrix> = active.iter().map(|&i| HermitianMatrix::outer(&channels[i].conj())).collect();
    let identity = HermitianMatrix::identity(n);
    let mut refs: Vec<&HermitianMatrix> = mats.iter().collect();
    refs.push(&identity);
    let mut f_matrix = sol.x;
    let mut r1 = rank_one_extract(&f_matrix)?;
    let purified = r1.rank_ratio > RANK_ONE_THRESHOLD;
    if purified {
        log::debug!("beamformer SDP optimum has rank ratio {:.3e}; reducing rank", r1.rank_ratio);
        f_matrix = purify_rank(&f_matrix, &refs)?;
        r1 = rank_one_extract(&f_matrix)?;
    }
    if r1.rank_ratio > RANK_ONE_THRESHOLD {
        log::warn!("beamformer SDP solution not rank one (ratio {:.3e}); projecting", r1.rank_ratio);
    }
    let f = r1.v;
    let mut p_r: f64 = 0.0;
    for &i in &active {
        let gain = channels[i].bilinear(&f)?.norm_sqr();
        if !(gain > 0.0) {
            return Err(Error::SolverFailure("projected beamformer has zero gain to an active user".into()));
        }
        p_r = p_r.max(a[i] / gain);
    }
    Ok(BeamformerSolution { f_matrix, p_r, f, rank_ratio: r1.rank_ratio, purified })
}

/// Beamformer sub-problem for a fixed combiner.
pub fn solve_beamformer(
    g: &ComplexVector,
    ch: &ChannelRealization,
    params: &SystemParams,
) -> Result<BeamformerSolution> {
    solve_beamformer_with(g, ch, params, &design_tolerances())
}

pub fn solve_beamformer_with(
    g: &ComplexVector,
    ch: &ChannelRealization,
    params: &SystemParams,
    tol: &Tolerances,
) -> Result<BeamformerSolution> {
    let a = constraint_rhs(params, g, ch)?;
    beamformer_for_targets(&[&ch.h1, &ch.h2], &a, tol)
}

/// Tolerances used by the design sub-problems: tight enough that the
/// relaxed solutions are numerically rank one.
pub fn design_tolerances() -> Tolerances {
    Tolerances { feas: 1e-10, gap: 1e-10, ..Tolerances::default() }
}

/// Coefficients of the combiner sub-problem
/// `min_g maxᵢ ρᵢ/|g hᵢ|² + μᵢ` for a fixed beamformer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinerCoefficients {
    pub rho: [f64; 2],
    pub mu: [f64; 2],
}

pub fn combiner_coefficients(
    f: &ComplexVector,
    ch: &ChannelRealization,
    params: &SystemParams,
) -> Result<CombinerCoefficients> {
    let h = downlink_gains(f, ch)?;
    if h.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::DegenerateChannel("zero downlink gain to a user".into()));
    }
    let th = rate_thresholds(params);
    let mut rho = [0.0; 2];
    let mut mu = [0.0; 2];
    for i in 0..2 {
        rho[i] = params.sigma2 * th.uplink[i] / (params.eta * h[i]);
        mu[i] = (params.sigma2 * (th.downlink[i] - 1.0) + 2.0 * params.p_c / params.eta) / h[i];
    }
    Ok(CombinerCoefficients { rho, mu })
}

#[derive(Debug, Clone)]
pub struct CombinerSolution {
    /// Relaxed solution `G ≈ g†g` with unit trace.
    pub g_matrix: HermitianMatrix,
    pub g: ComplexVector,
    /// Min-max objective at the projected combiner; equals the relay power
    /// required by the fixed beamformer with this combiner.
    pub p_r_implied: f64,
    pub rank_ratio: f64,
}

/// Min-max objective `maxᵢ ρᵢ/|g hᵢ|² + μᵢ` over active users.
pub fn combiner_objective(g: &ComplexVector, channels: &[&ComplexVector], rho: &[f64], mu: &[f64]) -> Result<f64> {
    let mut v = f64::NEG_INFINITY;
    for i in 0..channels.len() {
        if rho[i] == 0.0 && mu[i] == 0.0 {
            continue;
        }
        let gain = g.bilinear(channels[i])?.norm_sqr();
        v = v.max(if gain > 0.0 { rho[i] / gain + mu[i] } else { f64::INFINITY });
    }
    Ok(v)
}

/// Solves `min_G maxᵢ ρᵢ/Tr(hᵢhᵢ†G) + μᵢ, Tr(G) = 1, G ⪰ 0` by bisection on
/// the level s: a level is feasible when the minimum trace of G subject to
/// `Tr(hᵢhᵢ†G) ≥ ρᵢ/(s − μᵢ)` is at most one. Users with `ρᵢ = μᵢ = 0` are
/// dropped. The result never exceeds the objective at `incumbent`.
pub fn combiner_for_coefficients(
    channels: &[&ComplexVector],
    rho: &[f64],
    mu: &[f64],
    incumbent: Option<&ComplexVector>,
    tol: &Tolerances,
) -> Result<CombinerSolution> {
    let n = channels.first().map(|h| h.len()).ok_or_else(|| Error::Domain("no users".into()))?;
    let active: Vec<usize> = (0..channels.len()).filter(|&i| rho[i] != 0.0 || mu[i] != 0.0).collect();
    if active.is_empty() {
        let g = incumbent.cloned().unwrap_or_else(|| ComplexVector::uniform(n));
        return Ok(CombinerSolution {
            g_matrix: HermitianMatrix::outer(&g.conj()),
            g,
            p_r_implied: 0.0,
            rank_ratio: 0.0,
        });
    }
    for &i in &active {
        if channels[i].norm_sqr() == 0.0 {
            return Err(Error::DegenerateChannel(format!("user {} has a zero channel", i + 1)));
        }
    }

    // Starting point: best of the incumbent, the uniform combiner and the
    // matched filters of each active user.
    let mut start: Option<(f64, ComplexVector)> = None;
    let mut candidates: Vec<ComplexVector> = incumbent.into_iter().cloned().collect();
    candidates.push(ComplexVector::uniform(n));
    for &i in &active {
        candidates.push(channels[i].conj().normalized()?);
    }
    for c in candidates {
        let v = combiner_objective(&c, channels, rho, mu)?;
        if v.is_finite() && start.as_ref().is_none_or(|(best, _)| v < *best) {
            start = Some((v, c));
        }
    }
    let (hi, start_g) = start.ok_or_else(|| Error::DegenerateChannel("no combiner reaches both users".into()))?;
    let lo = active.iter().map(|&i| mu[i]).fold(f64::NEG_INFINITY, f64::max);

    let level_instance = |s: f64| -> Option<SdpInstance> {
        let mut inst = SdpInstance::minimize(HermitianMatrix::identity(n));
        for &i in &active {
            if rho[i] == 0.0 {
                continue;
            }
            if s <= mu[i] {
                return None;
            }
            inst = inst.subject_to(HermitianMatrix::outer(channels[i]), Relation::Ge, rho[i] / (s - mu[i]));
        }
        Some(inst)
    };
    let min_trace = |s: f64| -> Result<Option<crate::sdp::SdpSolution>> {
        match level_instance(s) {
            None => Ok(None),
            Some(inst) => solve_optimal(&inst, tol).map(Some),
        }
    };

    let fallback = |g: ComplexVector, v: f64| CombinerSolution {
        g_matrix: HermitianMatrix::outer(&g.conj()),
        g,
        p_r_implied: v,
        rank_ratio: 0.0,
    };

    if hi <= lo {
        return Ok(fallback(start_g, hi));
    }
    let level = match bisect_level(
        |s| Ok(min_trace(s)?.is_some_and(|sol| sol.objective_value <= 1.0 + LEVEL_TRACE_SLACK)),
        lo,
        hi,
        LEVEL_REL_TOL * hi.abs().max(1e-300),
    ) {
        Ok(s) => s,
        Err(Error::Bracket(msg)) => {
            log::debug!("combiner bisection kept the starting point: {msg}");
            return Ok(fallback(start_g, hi));
        }
        Err(e) => return Err(e),
    };
    let Some(sol) = min_trace(level)? else {
        return Ok(fallback(start_g, hi));
    };
    let trace = sol.x.trace();
    let mut g_matrix = if trace > 0.0 { sol.x.scaled(1.0 / trace) } else { sol.x };
    let mut r1 = rank_one_extract(&g_matrix)?;
    if r1.rank_ratio > RANK_ONE_THRESHOLD {
        let mats: Vec<HermitianMatrix> = active.iter().map(|&i| HermitianMatrix::outer(channels[i])).collect();
        let identity = HermitianMatrix::identity(n);
        let mut refs: Vec<&HermitianMatrix> = mats.iter().collect();
        refs.push(&identity);
        g_matrix = purify_rank(&g_matrix, &refs)?;
        r1 = rank_one_extract(&g_matrix)?;
    }
    if r1.rank_ratio > RANK_ONE_THRESHOLD {
        log::warn!("combiner SDP solution not rank one (ratio {:.3e}); projecting", r1.rank_ratio);
    }
    let g = r1.v.conj();
    let value = combiner_objective(&g, channels, rho, mu)?;
    if !(value <= hi) {
        return Ok(fallback(start_g, hi));
    }
    Ok(CombinerSolution { g_matrix, g, p_r_implied: value, rank_ratio: r1.rank_ratio })
}

/// Combiner sub-problem for a fixed beamformer.
pub fn solve_combiner(f: &ComplexVector, ch: &ChannelRealization, params: &SystemParams) -> Result<CombinerSolution> {
    solve_combiner_with(f, ch, params, None, &design_tolerances())
}

pub fn solve_combiner_with(
    f: &ComplexVector,
    ch: &ChannelRealization,
    params: &SystemParams,
    incumbent: Option<&ComplexVector>,
    tol: &Tolerances,
) -> Result<CombinerSolution> {
    let c = combiner_coefficients(f, ch, params)?;
    combiner_for_coefficients(&[&ch.h1, &ch.h2], &c.rho, &c.mu, incumbent, tol)
}

/// Feasible splitting-ratio interval `[lowerᵢ, upperᵢ]` of each user at relay
/// power `p_r`: the downlink rate needs `β ≥ lower`, the harvested energy for
/// the uplink needs `β ≤ upper`.
pub fn beta_interval(
    p_r: f64,
    f: &ComplexVector,
    g: &ComplexVector,
    ch: &ChannelRealization,
    params: &SystemParams,
) -> Result<[(f64, f64); 2]> {
    let h = downlink_gains(f, ch)?;
    let gu = uplink_gains(g, ch)?;
    if h.iter().chain(gu.iter()).any(|x| !(*x > 0.0)) || !(p_r > 0.0) {
        return Err(Error::DegenerateChannel("splitting interval needs positive gains and power".into()));
    }
    let th = rate_thresholds(params);
    let mut out = [(0.0, 0.0); 2];
    for i in 0..2 {
        let rx = p_r * h[i];
        let lower = params.sigma2 * (th.downlink[i] - 1.0) / rx;
        let upper =
            1.0 - params.sigma2 * th.uplink[i] / (params.eta * rx * gu[i]) - 2.0 * params.p_c / (params.eta * rx);
        out[i] = (lower, upper);
    }
    Ok(out)
}

/// Power-splitting ratios: the midpoint of each user's feasible interval.
pub fn recover_beta(
    p_r: f64,
    f: &ComplexVector,
    g: &ComplexVector,
    ch: &ChannelRealization,
    params: &SystemParams,
) -> Result<[f64; 2]> {
    let intervals = beta_interval(p_r, f, g, ch, params)?;
    let h = downlink_gains(f, ch)?;
    let gu = uplink_gains(g, ch)?;
    let th = rate_thresholds(params);
    let (eta, s2, pc) = (params.eta, params.sigma2, params.p_c);
    let mut beta = [0.0; 2];
    for i in 0..2 {
        let (lower, upper) = intervals[i];
        if lower > upper + BETA_TOL {
            return Err(Error::Infeasible(format!(
                "relay power {p_r} below requirement for user {} (β interval [{lower}, {upper}])",
                i + 1
            )));
        }
        let denom = eta * p_r * h[i];
        let b =
            0.5 * (1.0 + (eta * s2 * (th.downlink[i] - 1.0) - 2.0 * pc) / denom - s2 * th.uplink[i] / (denom * gu[i]));
        beta[i] = if (-BETA_TOL..0.0).contains(&b) {
            0.0
        } else if b > 1.0 && b <= 1.0 + BETA_TOL {
            1.0
        } else if (0.0..=1.0).contains(&b) {
            b
        } else {
            return Err(Error::Infeasible(format!("splitting ratio {b} outside [0, 1] for user {}", i + 1)));
        };
    }
    Ok(beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransceiverDesign {
    pub f: ComplexVector,
    pub g: ComplexVector,
    pub p_r: f64,
    pub beta: [f64; 2],
    /// Uplink powers funded by harvested energy.
    pub p_uplink: [f64; 2],
    /// Achieved second-moment ratios (reported, not optimized).
    pub gamma: [f64; 2],
}

/// Second-moment ratios `γᵢ = Pᵢ|g hᵢ|² / Σⱼ Pⱼ|g hⱼ|²` (zero when no user transmits).
pub fn gamma_ratios(p_uplink: [f64; 2], gu: [f64; 2]) -> [f64; 2] {
    let s = [p_uplink[0].max(0.0) * gu[0], p_uplink[1].max(0.0) * gu[1]];
    let total = s[0] + s[1];
    if total > 0.0 {
        [s[0] / total, s[1] / total]
    } else {
        [0.0, 0.0]
    }
}

/// Fills in splitting ratios, uplink powers and γ for given `(f, g, P_r)`.
pub fn complete_design(
    f: ComplexVector,
    g: ComplexVector,
    p_r: f64,
    ch: &ChannelRealization,
    params: &SystemParams,
) -> Result<TransceiverDesign> {
    let beta = recover_beta(p_r, &f, &g, ch, params)?;
    let h = downlink_gains(&f, ch)?;
    let gu = uplink_gains(&g, ch)?;
    let p_uplink = [
        params.eta * (1.0 - beta[0]) * p_r * h[0] - 2.0 * params.p_c,
        params.eta * (1.0 - beta[1]) * p_r * h[1] - 2.0 * params.p_c,
    ];
    let gamma = gamma_ratios(p_uplink, gu);
    Ok(TransceiverDesign { f, g, p_r, beta, p_uplink, gamma })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// `Rᵢᵣ = ½[log₂(γᵢ + Pᵢ|g hᵢ|²/σ²)]⁺`.
    pub uplink: [f64; 2],
    /// `Rᵣᵢ = ½log₂(1 + βᵢP_r|hᵢᵀf|²/σ²)`.
    pub downlink: [f64; 2],
    /// Downlink rates with the pre/post splitter noise kept separate.
    pub downlink_exact: [f64; 2],
    /// `R₁ = min(R₁ᵣ, Rᵣ₂)`, `R₂ = min(R₂ᵣ, Rᵣ₁)`.
    pub end_to_end: [f64; 2],
    /// `Rᵢᵣ − R̄ᵢ`.
    pub uplink_margin: [f64; 2],
    /// `Rᵣᵢ − R̄₃₋ᵢ`.
    pub downlink_margin: [f64; 2],
    pub alpha: f64,
    pub gamma: [f64; 2],
}

impl RateReport {
    /// Margins in the order (uplink 1, uplink 2, downlink 1, downlink 2).
    pub fn margins(&self) -> [f64; 4] {
        [self.uplink_margin[0], self.uplink_margin[1], self.downlink_margin[0], self.downlink_margin[1]]
    }

    pub fn min_margin(&self) -> f64 {
        self.margins().into_iter().fold(f64::INFINITY, f64::min)
    }
}

pub fn verify_rates(design: &TransceiverDesign, ch: &ChannelRealization, params: &SystemParams) -> Result<RateReport> {
    let h = downlink_gains(&design.f, ch)?;
    let gu = uplink_gains(&design.g, ch)?;
    let s2 = params.sigma2;
    let gamma = gamma_ratios(design.p_uplink, gu);
    let mut uplink = [0.0; 2];
    let mut downlink = [0.0; 2];
    let mut downlink_exact = [0.0; 2];
    for i in 0..2 {
        let snr = gamma[i] + design.p_uplink[i] * gu[i] / s2;
        uplink[i] = if snr > 0.0 { (0.5 * snr.log2()).max(0.0) } else { 0.0 };
        let rx = design.beta[i] * design.p_r * h[i];
        downlink[i] = 0.5 * (1.0 + rx / s2).log2();
        downlink_exact[i] = 0.5 * (1.0 + rx / (design.beta[i] * params.sigma2_a + params.sigma2_p)).log2();
    }
    let [r1, r2] = params.rate_targets;
    let alpha = mmse_alpha(design.p_uplink[0].max(0.0) * gu[0], design.p_uplink[1].max(0.0) * gu[1], s2)?;
    Ok(RateReport {
        uplink,
        downlink,
        downlink_exact,
        end_to_end: [uplink[0].min(downlink[1]), uplink[1].min(downlink[0])],
        uplink_margin: [uplink[0] - r1, uplink[1] - r2],
        downlink_margin: [downlink[0] - r2, downlink[1] - r1],
        alpha,
        gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::trace_inner;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar_channel() -> ChannelRealization {
        ChannelRealization::new(ComplexVector::from_real(&[1.0]).unwrap(), ComplexVector::from_real(&[1.0]).unwrap(), 0)
            .unwrap()
    }

    fn unit_params(n: usize) -> SystemParams {
        SystemParams::new(n, 1.0, 0.0, 1.0, [0.5, 0.5]).unwrap()
    }

    fn orthogonal_channel() -> ChannelRealization {
        ChannelRealization::new(ComplexVector::basis(2, 0), ComplexVector::basis(2, 1), 0).unwrap()
    }

    #[test]
    fn thresholds_examples() {
        let p = SystemParams::new(4, 1.0, 0.0, 1.0, [2.0, 2.0]).unwrap();
        let t = rate_thresholds(&p);
        assert_eq!(t.uplink, [16.0, 16.0]);
        assert_eq!(t.downlink, [16.0, 16.0]);
        assert_eq!(rate_thresholds(&unit_params(1)).uplink, [2.0, 2.0]);
        let p = SystemParams::new(4, 1.0, 0.0, 1.0, [1.0, 2.0]).unwrap();
        let t = rate_thresholds(&p);
        assert_eq!(t.uplink, [4.0, 16.0]);
        assert_eq!(t.downlink, [16.0, 4.0]);
    }

    #[test]
    fn constraint_rhs_examples() {
        let ch = scalar_channel();
        let g = ComplexVector::from_real(&[1.0]).unwrap();
        assert_eq!(constraint_rhs(&unit_params(1), &g, &ch).unwrap(), [3.0, 3.0]);
        let g = ComplexVector::from_real(&[1.0 / 2f64.sqrt()]).unwrap();
        let a = constraint_rhs(&unit_params(1), &g, &ch).unwrap();
        assert!((a[0] - 5.0).abs() < 1e-12 && (a[1] - 5.0).abs() < 1e-12);
        let p = SystemParams::new(1, 0.5, 1.0, 1.0, [1.0, 1.0]).unwrap();
        let g = ComplexVector::from_real(&[1.0]).unwrap();
        assert_eq!(constraint_rhs(&p, &g, &ch).unwrap(), [15.0, 15.0]);
    }

    #[test]
    fn constraint_rhs_degenerate() {
        let ch = orthogonal_channel();
        let g = ComplexVector::basis(2, 0);
        assert!(matches!(constraint_rhs(&unit_params(2), &g, &ch), Err(Error::DegenerateChannel(_))));
    }

    #[test]
    fn required_power_examples() {
        let ch = scalar_channel();
        let one = ComplexVector::from_real(&[1.0]).unwrap();
        assert_eq!(required_power(&one, &one, &ch, &unit_params(1)).unwrap(), 3.0);

        let ch = orthogonal_channel();
        let u = ComplexVector::uniform(2);
        let p = required_power(&u, &u, &ch, &unit_params(2)).unwrap();
        assert!((p - 10.0).abs() < 1e-12);
        let doubled = SystemParams::new(2, 1.0, 0.0, 2.0, [0.5, 0.5]).unwrap();
        let p2 = required_power(&u, &u, &ch, &doubled).unwrap();
        assert!((p2 - 2.0 * p).abs() < 1e-12);

        let e1 = ComplexVector::basis(2, 0);
        assert!(matches!(required_power(&e1, &u, &ch, &unit_params(2)), Err(Error::DegenerateChannel(_))));
    }

    #[test]
    fn beamformer_scalar() {
        let ch = ChannelRealization::new(
            ComplexVector::from_real(&[2.0]).unwrap(),
            ComplexVector::from_real(&[0.5]).unwrap(),
            0,
        )
        .unwrap();
        let g = ComplexVector::from_real(&[1.0]).unwrap();
        let params = unit_params(1);
        let a = constraint_rhs(&params, &g, &ch).unwrap();
        let bf = solve_beamformer(&g, &ch, &params).unwrap();
        let want = (a[0] / 4.0).max(a[1] / 0.25);
        assert!((bf.p_r - want).abs() < 1e-9 * want);
        assert!((bf.f[0].norm() - 1.0).abs() < 1e-12);
        assert_eq!(bf.rank_ratio, 0.0);
    }

    #[test]
    fn purify_keeps_traces() {
        let x = HermitianMatrix::diag(&[5.0, 5.0]);
        let a1 = HermitianMatrix::diag(&[2.0, 0.0]);
        let a2 = HermitianMatrix::diag(&[0.0, 2.0]);
        let id = HermitianMatrix::identity(2);
        let y = purify_rank(&x, &[&a1, &a2, &id]).unwrap();
        for m in [&a1, &a2, &id] {
            assert!((trace_inner(m, &y).unwrap() - trace_inner(m, &x).unwrap()).abs() < 1e-9);
        }
        assert!(rank_one_extract(&y).unwrap().rank_ratio < 1e-9);
    }

    #[test]
    fn beamformer_orthogonal_symmetric() {
        let ch = orthogonal_channel();
        let bf = solve_beamformer(&ComplexVector::uniform(2), &ch, &unit_params(2)).unwrap();
        assert!((bf.p_r - 10.0).abs() < 1e-7, "{}", bf.p_r);
        for k in 0..2 {
            assert!((bf.f[k].norm() - 1.0 / 2f64.sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn beamformer_single_active_user_is_matched() {
        let h1 = ComplexVector::new(vec![c(0.3, -0.4), c(1.0, 0.2), c(-0.5, 0.5)]).unwrap();
        let h2 = ComplexVector::new(vec![c(0.7, 0.1), c(-0.2, 0.9), c(0.4, -0.3)]).unwrap();
        let bf = beamformer_for_targets(&[&h1, &h2], &[0.0, 2.5], &design_tolerances()).unwrap();
        assert!((bf.p_r - 2.5 / h2.norm_sqr()).abs() < 1e-8);
        let matched = h2.conj().normalized().unwrap();
        assert!((matched.dot(&bf.f).unwrap().norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn combiner_scalar() {
        let ch = ChannelRealization::new(
            ComplexVector::from_real(&[1.5]).unwrap(),
            ComplexVector::from_real(&[0.8]).unwrap(),
            0,
        )
        .unwrap();
        let f = ComplexVector::from_real(&[1.0]).unwrap();
        let params = unit_params(1);
        let co = combiner_coefficients(&f, &ch, &params).unwrap();
        let sol = solve_combiner(&f, &ch, &params).unwrap();
        let want = (co.rho[0] / 2.25 + co.mu[0]).max(co.rho[1] / 0.64 + co.mu[1]);
        assert!((sol.p_r_implied - want).abs() < 1e-9 * want);
    }

    #[test]
    fn combiner_orthogonal_symmetric() {
        let ch = orthogonal_channel();
        let f = ComplexVector::uniform(2);
        let co = combiner_coefficients(&f, &ch, &unit_params(2)).unwrap();
        assert!((co.rho[0] - 4.0).abs() < 1e-12 && (co.mu[0] - 2.0).abs() < 1e-12);
        let sol = solve_combiner(&f, &ch, &unit_params(2)).unwrap();
        assert!((sol.p_r_implied - 10.0).abs() < 1e-7, "{}", sol.p_r_implied);
        assert!((sol.g_matrix.get(0, 0).re - 0.5).abs() < 1e-5);
        assert!((sol.g_matrix.get(1, 1).re - 0.5).abs() < 1e-5);
    }

    #[test]
    fn combiner_single_user_is_matched() {
        let h1 = ComplexVector::new(vec![c(0.3, -0.4), c(1.0, 0.2)]).unwrap();
        let h2 = ComplexVector::new(vec![c(0.7, 0.1), c(-0.2, 0.9)]).unwrap();
        let sol = combiner_for_coefficients(&[&h1, &h2], &[2.0, 0.0], &[1.0, 0.0], None, &design_tolerances()).unwrap();
        let want = 2.0 / h1.norm_sqr() + 1.0;
        assert!((sol.p_r_implied - want).abs() < 1e-8 * want);
    }

    #[test]
    fn rank_one_examples() {
        let v = ComplexVector::new(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let r = rank_one_extract(&HermitianMatrix::outer(&v).scaled(5.0)).unwrap();
        assert!((r.scale - 5.0).abs() < 1e-12);
        assert!(r.rank_ratio < 1e-14);
        assert!((v.dot(&r.v).unwrap().norm() - 1.0).abs() < 1e-12);

        let r = rank_one_extract(&HermitianMatrix::diag(&[4.0, 1.0])).unwrap();
        assert_eq!((r.scale, r.rank_ratio), (4.0, 0.25));
        assert_eq!(r.v, ComplexVector::basis(2, 0));
        assert_eq!(rank_one_extract(&HermitianMatrix::identity(2)).unwrap().rank_ratio, 1.0);
        assert_eq!(rank_one_extract(&HermitianMatrix::diag(&[3.0])).unwrap().rank_ratio, 0.0);
    }

    #[test]
    fn beta_examples() {
        let ch = scalar_channel();
        let one = ComplexVector::from_real(&[1.0]).unwrap();
        let params = unit_params(1);
        let b = recover_beta(3.0, &one, &one, &ch, &params).unwrap();
        assert!((b[0] - 1.0 / 3.0).abs() < 1e-12);
        let iv = beta_interval(3.0, &one, &one, &ch, &params).unwrap();
        assert!((iv[0].0 - iv[0].1).abs() < 1e-12);

        let b = recover_beta(6.0, &one, &one, &ch, &params).unwrap();
        assert!((b[0] - 5.0 / 12.0).abs() < 1e-12);
        let iv = beta_interval(6.0, &one, &one, &ch, &params).unwrap();
        assert!((iv[0].0 - 1.0 / 6.0).abs() < 1e-12 && (iv[0].1 - 2.0 / 3.0).abs() < 1e-12);

        let heavy = SystemParams::new(1, 1.0, 5.0, 1.0, [0.5, 0.5]).unwrap();
        assert!(matches!(recover_beta(6.0, &one, &one, &ch, &heavy), Err(Error::Infeasible(_))));
    }

    #[test]
    fn rates_examples() {
        // β = 1 and P_r|hᵀf|²/σ² = 15 → downlink rate 2.
        let ch = scalar_channel();
        let one = ComplexVector::from_real(&[1.0]).unwrap();
        let params = unit_params(1);
        let d = TransceiverDesign {
            f: one.clone(),
            g: one,
            p_r: 15.0,
            beta: [1.0, 1.0],
            p_uplink: [2.0, 2.0],
            gamma: [0.5, 0.5],
        };
        let r = verify_rates(&d, &ch, &params).unwrap();
        assert!((r.downlink[0] - 2.0).abs() < 1e-12);
        assert_eq!(r.gamma, [0.5, 0.5]);
        assert!((r.alpha - 4.0 / 5.0).abs() < 1e-12);
        assert_eq!(r.downlink, r.downlink_exact);
    }

    #[test]
    fn splitter_noise_validation() {
        let p = unit_params(1);
        assert!(p.with_splitter_noise(0.25).is_ok());
        assert!(p.with_splitter_noise(2.0).is_err());
        assert!(SystemParams::new(1, 1.5, 0.0, 1.0, [1.0, 1.0]).is_err());
        assert!(SystemParams::new(1, 1.0, 0.0, 0.0, [1.0, 1.0]).is_err());
    }
}
