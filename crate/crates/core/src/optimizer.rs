//! Alternating transceiver optimization and the baseline schemes.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::design::{
    complete_design, design_tolerances, required_power, solve_beamformer_with, solve_combiner_with, verify_rates,
    BeamformerSolution, CombinerSolution, SystemParams, TransceiverDesign,
};
use crate::error::{Error, Result};
use crate::numerics::ComplexVector;
use crate::scenario::ChannelRealization;
use crate::sdp::Tolerances;

/// Rate margin below which a finished design is rejected.
pub const MARGIN_TOL: f64 = 1e-6;

/// The four compared schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeId {
    /// Beamformer, combiner and splitters jointly (alternating).
    JointTransceiverPs,
    /// Optimized beamformer, equal-gain combining receiver.
    BfPsEgcReceiver,
    /// Optimized combiner, equal-gain beamformer.
    ReceiverPsEqualGainBf,
    /// Fixed equal-gain beamformer and combiner; splitters only.
    PsOnly,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] =
        [Self::JointTransceiverPs, Self::BfPsEgcReceiver, Self::ReceiverPsEqualGainBf, Self::PsOnly];

    pub fn number(self) -> u8 {
        match self {
            Self::JointTransceiverPs => 1,
            Self::BfPsEgcReceiver => 2,
            Self::ReceiverPsEqualGainBf => 3,
            Self::PsOnly => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::JointTransceiverPs => "joint",
            Self::BfPsEgcReceiver => "bf_egc",
            Self::ReceiverPsEqualGainBf => "rx_egb",
            Self::PsOnly => "ps_only",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|id| s == id.name() || s == id.number().to_string())
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}' (use 1-4 or joint, bf_egc, rx_egb, ps_only)")))
    }
}

/// How the fixed equal-gain vectors of the baseline schemes are phased.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EqualGainConvention {
    /// Unit-modulus entries phase-matched to the sum channel `h₁ + h₂`.
    #[default]
    Phased,
    /// `(1/√N)(1, …, 1)` regardless of the channel.
    Unphased,
}

impl FromStr for EqualGainConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "phased" => Ok(Self::Phased),
            "unphased" => Ok(Self::Unphased),
            other => Err(Error::Config(format!("unknown equal-gain convention '{other}'"))),
        }
    }
}

impl fmt::Display for EqualGainConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Phased => "phased",
            Self::Unphased => "unphased",
        })
    }
}

fn sum_channel_phases(ch: &ChannelRealization, conv: EqualGainConvention) -> ComplexVector {
    let n = ch.h1.len();
    match conv {
        EqualGainConvention::Unphased => ComplexVector::uniform(n),
        EqualGainConvention::Phased => {
            let amp = 1.0 / (n as f64).sqrt();
            ComplexVector::from_fn(n, |k| Complex64::from_polar(amp, -(ch.h1[k] + ch.h2[k]).arg()))
        }
    }
}

/// Equal-gain combiner `gₙ = e^{−j·arg(h₁ₙ + h₂ₙ)}/√N`.
pub fn egc_receiver(ch: &ChannelRealization, conv: EqualGainConvention) -> ComplexVector {
    sum_channel_phases(ch, conv)
}

/// Equal-gain beamformer `fₙ = e^{j·arg(conj(h₁ₙ + h₂ₙ))}/√N`.
pub fn equal_gain_beamformer(ch: &ChannelRealization, conv: EqualGainConvention) -> ComplexVector {
    sum_channel_phases(ch, conv)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlternateOptions {
    pub max_iter: usize,
    /// Stop when the relative change of P_r over one iteration drops below this.
    pub rel_tol: f64,
    pub equal_gain: EqualGainConvention,
}

impl Default for AlternateOptions {
    fn default() -> Self {
        Self { max_iter: 50, rel_tol: 1e-5, equal_gain: EqualGainConvention::Phased }
    }
}

#[derive(Debug, Clone)]
pub struct AlternationTrace {
    /// `(P_r after the beamformer step, P_r after the combiner step)` per iteration.
    pub iterations: Vec<(f64, f64)>,
    pub converged: bool,
    pub final_design: TransceiverDesign,
}

impl AlternationTrace {
    /// All recorded powers in order.
    pub fn powers(&self) -> impl Iterator<Item = f64> + '_ {
        self.iterations.iter().flat_map(|&(a, b)| [a, b])
    }

    /// Whether the recorded powers never increase by more than `rel_slack`.
    pub fn is_non_increasing(&self, rel_slack: f64) -> bool {
        let p: Vec<f64> = self.powers().collect();
        p.windows(2).all(|w| w[1] <= w[0] * (1.0 + rel_slack))
    }
}

fn with_retry<T>(mut step: impl FnMut(&Tolerances) -> Result<T>) -> Result<T> {
    match step(&design_tolerances()) {
        Err(Error::SolverFailure(msg)) | Err(Error::Infeasible(msg)) => {
            log::debug!("sub-problem failed ({msg}); retrying with tight tolerances");
            step(&Tolerances::tight())
        }
        other => other,
    }
}

fn beamformer_step(g: &ComplexVector, ch: &ChannelRealization, params: &SystemParams) -> Result<BeamformerSolution> {
    with_retry(|tol| solve_beamformer_with(g, ch, params, tol))
}

fn combiner_step(
    f: &ComplexVector,
    g: Option<&ComplexVector>,
    ch: &ChannelRealization,
    params: &SystemParams,
) -> Result<CombinerSolution> {
    with_retry(|tol| solve_combiner_with(f, ch, params, g, tol))
}

/// Builds the final design at the minimum power for `(f, g)` and checks the
/// rate targets.
fn finish(
    f: ComplexVector,
    g: ComplexVector,
    ch: &ChannelRealization,
    params: &SystemParams,
) -> Result<TransceiverDesign> {
    let p_r = required_power(&f, &g, ch, params)?;
    let design = complete_design(f, g, p_r, ch, params)?;
    let report = verify_rates(&design, ch, params)?;
    if report.min_margin() < -MARGIN_TOL {
        return Err(Error::SolverFailure(format!("design misses a rate target by {:.3e}", -report.min_margin())));
    }
    Ok(design)
}

/// Alternates the beamformer and combiner sub-problems starting from the
/// uniform combiner. Each half-step keeps the incumbent vector when the new
/// one would need more power, so the recorded powers never increase.
pub fn alternate(ch: &ChannelRealization, params: &SystemParams, opts: &AlternateOptions) -> Result<AlternationTrace> {
    alternate_from(ch, params, opts, ComplexVector::uniform(params.n_antennas), None)
}

/// Alternation from combiner `g0`. A starting beamformer `f0`, if given, is
/// the incumbent of the first beamformer step.
pub fn alternate_from(
    ch: &ChannelRealization,
    params: &SystemParams,
    opts: &AlternateOptions,
    g0: ComplexVector,
    f0: Option<ComplexVector>,
) -> Result<AlternationTrace> {
    ch.check_dim(params.n_antennas)?;
    ch.check_dim(g0.len())?;
    if let Some(f) = &f0 {
        ch.check_dim(f.len())?;
    }
    if opts.max_iter == 0 {
        return Err(Error::Domain("max_iter must be at least 1".into()));
    }
    let mut g = g0;
    let mut f: Option<ComplexVector> = f0;
    let mut iterations = Vec::new();
    let mut converged = false;

    for _ in 0..opts.max_iter {
        let bf = beamformer_step(&g, ch, params)?;
        let (f_new, p_bf) = match &f {
            Some(old) => {
                let p_old = required_power(old, &g, ch, params)?;
                if p_old < bf.p_r {
                    (old.clone(), p_old)
                } else {
                    (bf.f, bf.p_r)
                }
            }
            None => (bf.f, bf.p_r),
        };

        let cb = combiner_step(&f_new, Some(&g), ch, params)?;
        let p_new = required_power(&f_new, &cb.g, ch, params)?;
        let p_cb = if p_new <= p_bf {
            g = cb.g;
            p_new
        } else {
            p_bf
        };
        f = Some(f_new);

        let reference = iterations.last().map_or(p_bf, |&(_, prev)| prev);
        iterations.push((p_bf, p_cb));
        if (reference - p_cb).abs() < opts.rel_tol * reference {
            converged = true;
            break;
        }
    }

    let f = f.expect("at least one iteration ran");
    let final_design = finish(f, g, ch, params)?;
    Ok(AlternationTrace { iterations, converged, final_design })
}

/// Result of running one scheme on one channel.
#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub design: TransceiverDesign,
    /// Alternation iterations (1 for the single-shot baselines, 0 for PS only).
    pub iterations: usize,
    pub converged: bool,
}

pub fn run_scheme_detailed(
    scheme: SchemeId,
    ch: &ChannelRealization,
    params: &SystemParams,
    opts: &AlternateOptions,
) -> Result<SchemeRun> {
    ch.check_dim(params.n_antennas)?;
    match scheme {
        SchemeId::JointTransceiverPs => {
            // Algorithm start plus warm starts at the two restricted designs,
            // so the joint result never loses to either baseline.
            let f_eg = equal_gain_beamformer(ch, opts.equal_gain);
            let g_egc = egc_receiver(ch, opts.equal_gain);
            let g_rx = combiner_step(&f_eg, Some(&g_egc), ch, params)?.g;
            let starts =
                [(ComplexVector::uniform(params.n_antennas), None), (g_egc, Some(f_eg.clone())), (g_rx, Some(f_eg))];
            let mut best: Option<AlternationTrace> = None;
            for (g0, f0) in starts {
                let trace = alternate_from(ch, params, opts, g0, f0)?;
                if best.as_ref().is_none_or(|b| trace.final_design.p_r < b.final_design.p_r) {
                    best = Some(trace);
                }
            }
            let trace = best.expect("three starts ran");
            Ok(SchemeRun { iterations: trace.iterations.len(), converged: trace.converged, design: trace.final_design })
        }
        SchemeId::BfPsEgcReceiver => {
            let g = egc_receiver(ch, opts.equal_gain);
            let bf = beamformer_step(&g, ch, params)?;
            // The equal-gain beamformer is feasible for this sub-problem too.
            let f_eg = equal_gain_beamformer(ch, opts.equal_gain);
            let f = if required_power(&f_eg, &g, ch, params)? < bf.p_r { f_eg } else { bf.f };
            Ok(SchemeRun { design: finish(f, g, ch, params)?, iterations: 1, converged: true })
        }
        SchemeId::ReceiverPsEqualGainBf => {
            let f = equal_gain_beamformer(ch, opts.equal_gain);
            let g0 = egc_receiver(ch, opts.equal_gain);
            let cb = combiner_step(&f, Some(&g0), ch, params)?;
            Ok(SchemeRun { design: finish(f, cb.g, ch, params)?, iterations: 1, converged: true })
        }
        SchemeId::PsOnly => {
            let f = equal_gain_beamformer(ch, opts.equal_gain);
            let g = egc_receiver(ch, opts.equal_gain);
            Ok(SchemeRun { design: finish(f, g, ch, params)?, iterations: 0, converged: true })
        }
    }
}

pub fn run_scheme(
    scheme: SchemeId,
    ch: &ChannelRealization,
    params: &SystemParams,
    opts: &AlternateOptions,
) -> Result<TransceiverDesign> {
    run_scheme_detailed(scheme, ch, params, opts).map(|r| r.design)
}
