//! Small dense semidefinite programs over Hermitian PSD matrices.
//!
//! ```text
//! minimize (or maximize)  Tr(C X)
//! subject to              Tr(Aₖ X) {≥, =, ≤} bₖ,   X ⪰ 0
//! ```
//!
//! The complex instance is mapped to a real symmetric one through
//! [`real_embed`]; inequality rows get a non-negative slack scalar. The real
//! problem is solved by an infeasible primal-dual interior-point method using
//! the HKM search direction with a Mehrotra predictor-corrector. All residuals
//! are relative: the primal residual is scaled by `1 + ‖b‖`, the dual residual
//! by `1 + ‖C‖`, and the gap by `1 + |primal| + |dual|`.
//!
//! [`bisect_level`] drives a monotone feasibility oracle, which is how the
//! quasi-convex min-max combiner problem is reduced to plain linear SDPs.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{real_embed, real_unembed, trace_inner, HermitianMatrix};

pub const MAX_DIM: usize = 16;
pub const MAX_CONSTRAINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Ge,
    Eq,
    Le,
}

#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub matrix: HermitianMatrix,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct SdpInstance {
    pub objective: HermitianMatrix,
    pub sense: Sense,
    pub constraints: Vec<LinearConstraint>,
}

impl SdpInstance {
    pub fn minimize(objective: HermitianMatrix) -> Self {
        Self { objective, sense: Sense::Minimize, constraints: Vec::new() }
    }

    pub fn maximize(objective: HermitianMatrix) -> Self {
        Self { objective, sense: Sense::Maximize, constraints: Vec::new() }
    }

    pub fn subject_to(mut self, matrix: HermitianMatrix, relation: Relation, rhs: f64) -> Self {
        self.constraints.push(LinearConstraint { matrix, relation, rhs });
        self
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    /// Same problem with every matrix replaced by its real embedding
    /// (as a Hermitian matrix with zero imaginary part).
    pub fn real_embedded(&self) -> Self {
        let lift = |m: &HermitianMatrix| {
            let r = real_embed(m);
            HermitianMatrix::from_upper(r.nrows(), |j, k| num_complex::Complex64::new(r[(j, k)], 0.0))
        };
        Self {
            objective: lift(&self.objective).scaled(0.5),
            sense: self.sense,
            constraints: self
                .constraints
                .iter()
                .map(|c| LinearConstraint { matrix: lift(&c.matrix).scaled(0.5), relation: c.relation, rhs: c.rhs })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub feas: f64,
    pub gap: f64,
    pub psd: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { feas: 1e-8, gap: 1e-7, psd: 1e-9, max_iter: 200 }
    }
}

impl Tolerances {
    /// Tighter feasibility and gap targets, used for retries and when a
    /// near-exact rank-one solution is needed.
    pub fn tight() -> Self {
        Self { feas: 1e-11, gap: 1e-11, psd: 1e-9, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: HermitianMatrix,
    /// `Tr(C X)` in the instance's own sense.
    pub objective_value: f64,
    /// `bᵀy`: a lower bound on the optimum for minimization (upper for maximization).
    pub dual_bound: f64,
    /// Constraint multipliers `y`, in minimization form.
    pub multipliers: Vec<f64>,
    pub status: SdpStatus,
    pub residuals: KktResiduals,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }

    /// Turns any non-optimal status into an error.
    pub fn require_optimal(self) -> Result<Self> {
        match self.status {
            SdpStatus::Optimal => Ok(self),
            SdpStatus::Infeasible => Err(Error::Infeasible("SDP is primal infeasible".into())),
            SdpStatus::Unbounded => Err(Error::SolverFailure("SDP is unbounded".into())),
            SdpStatus::NumericalFailure => Err(Error::SolverFailure(format!(
                "SDP did not converge in {} iterations (residuals {:?})",
                self.iterations, self.residuals
            ))),
        }
    }
}

const INFEASIBILITY_TOL: f64 = 1e-8;
const STEP_FRACTION: f64 = 0.98;

/// Real symmetric problem in the solver's standard form:
/// `min ⟨C,X⟩ s.t. ⟨Aₖ,X⟩ + Σₗ Bₖₗ sₗ = bₖ, X ⪰ 0, s ≥ 0`.
struct RealProblem {
    c: DMatrix<f64>,
    a: Vec<DMatrix<f64>>,
    /// m × p slack coefficients.
    slack: DMatrix<f64>,
    b: DVector<f64>,
}

fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

impl RealProblem {
    fn from_instance(inst: &SdpInstance) -> Self {
        let sign = if inst.sense == Sense::Maximize { -1.0 } else { 1.0 };
        let c = real_embed(&inst.objective) * (0.5 * sign);
        let a: Vec<_> = inst.constraints.iter().map(|k| real_embed(&k.matrix) * 0.5).collect();
        let m = a.len();
        let p = inst.constraints.iter().filter(|k| k.relation != Relation::Eq).count();
        let mut slack = DMatrix::zeros(m, p);
        let mut l = 0;
        for (k, con) in inst.constraints.iter().enumerate() {
            match con.relation {
                Relation::Ge => {
                    slack[(k, l)] = -1.0;
                    l += 1;
                }
                Relation::Le => {
                    slack[(k, l)] = 1.0;
                    l += 1;
                }
                Relation::Eq => {}
            }
        }
        let b = DVector::from_iterator(m, inst.constraints.iter().map(|k| k.rhs));
        Self { c, a, slack, b }
    }

    fn apply(&self, x: &DMatrix<f64>, s: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.slack * s;
        for (k, ak) in self.a.iter().enumerate() {
            out[k] += frob(ak, x);
        }
        out
    }

    fn adjoint(&self, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.c.nrows();
        let mut m = DMatrix::zeros(n, n);
        for (k, ak) in self.a.iter().enumerate() {
            m += ak * y[k];
        }
        (m, self.slack.transpose() * y)
    }
}

/// Largest step `α` with `X + αΔX ⪰ 0`, given a Cholesky factor of X.
fn max_step_psd(chol_l_inv: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let w = sym(&(chol_l_inv * dx * chol_l_inv.transpose()));
    let lmin = w.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter().zip(dx.iter()).filter(|(_, d)| **d < 0.0).map(|(v, d)| -v / d).fold(f64::INFINITY, f64::min)
}

fn lower_inverse(x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = x.clone().cholesky()?;
    chol.l().try_inverse()
}

fn validate(inst: &SdpInstance) -> Result<()> {
    let n = inst.dim();
    if n == 0 || n > MAX_DIM {
        return Err(Error::Domain(format!("SDP dimension must be in 1..={MAX_DIM}, got {n}")));
    }
    if inst.constraints.len() > MAX_CONSTRAINTS {
        return Err(Error::Domain(format!(
            "at most {MAX_CONSTRAINTS} constraints supported, got {}",
            inst.constraints.len()
        )));
    }
    for con in &inst.constraints {
        check_dim(n, con.matrix.dim())?;
        if !con.rhs.is_finite() {
            return Err(Error::Domain("non-finite constraint right-hand side".into()));
        }
    }
    Ok(())
}

/// Solves an SDP instance. Returns `Err` only for malformed input; the
/// solution's `status` reports optimality, infeasibility, unboundedness or
/// numerical failure.
/// `(ΔX, Δs, Δy, ΔZ, Δz)`.
type Direction = (DMatrix<f64>, DVector<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>);

pub fn solve_sdp(inst: &SdpInstance, tol: &Tolerances) -> Result<SdpSolution> {
    validate(inst)?;
    let prob = RealProblem::from_instance(inst);
    let n = prob.c.nrows();
    let m = prob.a.len();
    let p = prob.slack.ncols();
    let nu = (n + p) as f64;

    let norm_b = prob.b.norm();
    let norm_c = prob.c.norm();
    let max_a = prob.a.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let xi = (0..m)
        .map(|k| n as f64 * (1.0 + prob.b[k].abs()) / (1.0 + prob.a[k].norm()))
        .fold(10f64.max((n as f64).sqrt()), f64::max);
    let zeta = 10f64.max((n as f64).sqrt()).max(norm_c).max(max_a);

    let mut x = DMatrix::identity(n, n) * xi;
    let mut xs = DVector::from_element(p, xi);
    let mut y = DVector::zeros(m);
    let mut z = DMatrix::identity(n, n) * zeta;
    let mut zs = DVector::from_element(p, zeta);

    let mut residuals = KktResiduals::default();
    let mut status = SdpStatus::NumericalFailure;
    let mut iterations = 0;

    for iter in 0..=tol.max_iter {
        iterations = iter;
        let rp = &prob.b - prob.apply(&x, &xs);
        let (aty, bty) = prob.adjoint(&y);
        let rd = &prob.c - &aty - &z;
        let rds = -&bty - &zs;
        let pobj = frob(&prob.c, &x);
        let dobj = prob.b.dot(&y);
        let comp = frob(&x, &z) + xs.dot(&zs);

        residuals = KktResiduals {
            primal: rp.norm() / (1.0 + norm_b),
            dual: (rd.norm_squared() + rds.norm_squared()).sqrt() / (1.0 + norm_c),
            gap: (pobj - dobj).abs().max(comp) / (1.0 + pobj.abs() + dobj.abs()),
        };
        if residuals.primal <= tol.feas && residuals.dual <= tol.feas && residuals.gap <= tol.gap {
            status = SdpStatus::Optimal;
            break;
        }
        // Farkas-type rays: dual ray certifies primal infeasibility, primal
        // ray certifies unboundedness.
        if dobj > 0.0 && residuals.primal > tol.feas {
            let ray = ((&aty + &z).norm_squared() + (&bty + &zs).norm_squared()).sqrt() / dobj;
            if ray < INFEASIBILITY_TOL {
                status = SdpStatus::Infeasible;
                break;
            }
        }
        if pobj < 0.0 && residuals.dual > tol.feas {
            let ray = (&prob.b - &rp).norm() / -pobj;
            if ray < INFEASIBILITY_TOL {
                status = SdpStatus::Unbounded;
                break;
            }
        }
        if iter == tol.max_iter {
            break;
        }

        let Some(z_chol) = z.clone().cholesky() else { break };
        let z_inv = z_chol.inverse();
        let (Some(lx_inv), Some(lz_inv)) = (lower_inverse(&x), lower_inverse(&z)) else { break };

        // Schur complement of the HKM system.
        let d_lp = xs.component_div(&zs);
        let x_a_zinv: Vec<DMatrix<f64>> = prob.a.iter().map(|aj| &x * aj * &z_inv).collect();
        let mut schur = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                schur[(i, j)] = frob(&prob.a[i], &x_a_zinv[j]);
            }
        }
        schur += &prob.slack * DMatrix::from_diagonal(&d_lp) * prob.slack.transpose();
        let schur = sym(&schur);
        let schur_chol = schur.clone().cholesky();
        let schur_lu = schur.clone().lu();
        let solve = |rhs: &DVector<f64>| -> Option<DVector<f64>> {
            match &schur_chol {
                Some(c) => Some(c.solve(rhs)),
                None => schur_lu.solve(rhs),
            }
        };

        let x_rd_zinv = &x * &rd * &z_inv;
        let mu = comp / nu;

        // Returns (ΔX, Δs, Δy, ΔZ, Δz) for centering target σμ and corrector terms.
        let direction = |sigma_mu: f64, corr: Option<(&DMatrix<f64>, &DVector<f64>)>| -> Option<Direction> {
            let mut k = &z_inv * sigma_mu - &x - &x_rd_zinv;
            let mut kl = zs.map(|v| sigma_mu / v) - &xs - xs.component_mul(&rds).component_div(&zs);
            if let Some((cm, cl)) = corr {
                k -= cm;
                kl -= cl;
            }
            let mut rhs = &rp - &prob.slack * &kl;
            for (i, ai) in prob.a.iter().enumerate() {
                rhs[i] -= frob(ai, &k);
            }
            let dy = solve(&rhs)?;
            let (at_dy, bt_dy) = prob.adjoint(&dy);
            let dz = &rd - &at_dy;
            let dzs = &rds - &bt_dy;
            let dx = sym(&(k + &x * &at_dy * &z_inv));
            let dxs = kl + d_lp.component_mul(&bt_dy);
            Some((dx, dxs, dy, dz, dzs))
        };

        // Predictor.
        let Some((dx_a, dxs_a, _, dz_a, dzs_a)) = direction(0.0, None) else { break };
        let ap = 1f64.min(max_step_psd(&lx_inv, &dx_a)).min(max_step_lp(&xs, &dxs_a));
        let ad = 1f64.min(max_step_psd(&lz_inv, &dz_a)).min(max_step_lp(&zs, &dzs_a));
        let mu_aff =
            (frob(&(&x + &dx_a * ap), &(&z + &dz_a * ad)) + (&xs + &dxs_a * ap).dot(&(&zs + &dzs_a * ad))) / nu;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let corr_m = &dx_a * &dz_a * &z_inv;
        let corr_l = dxs_a.component_mul(&dzs_a).component_div(&zs);
        let Some((dx, dxs, dy, dz, dzs)) = direction(sigma * mu, Some((&corr_m, &corr_l))) else { break };
        let ap = 1f64.min(STEP_FRACTION * max_step_psd(&lx_inv, &dx)).min(STEP_FRACTION * max_step_lp(&xs, &dxs));
        let ad = 1f64.min(STEP_FRACTION * max_step_psd(&lz_inv, &dz)).min(STEP_FRACTION * max_step_lp(&zs, &dzs));

        x = sym(&(&x + &dx * ap));
        xs += &dxs * ap;
        y += &dy * ad;
        z = sym(&(&z + &dz * ad));
        zs += &dzs * ad;
    }

    let x_c = real_unembed(&x)?;
    let sign = if inst.sense == Sense::Maximize { -1.0 } else { 1.0 };
    let objective_value = trace_inner(&inst.objective, &x_c)?;
    Ok(SdpSolution {
        x: x_c,
        objective_value,
        dual_bound: sign * prob.b.dot(&y),
        multipliers: y.iter().copied().collect(),
        status,
        residuals,
        iterations,
    })
}

/// Bisection on a monotone level oracle (infeasible below the threshold,
/// feasible above). Returns the smallest feasible level found, within `tol`
/// of the last infeasible one.
///
/// The endpoints are probed first: a feasible `lo` is returned as-is and an
/// infeasible `hi` is a bracket error. Beyond those two probes the loop makes
/// at most `⌈log₂((hi − lo)/tol)⌉` oracle calls.
pub fn bisect_level<F>(mut oracle: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<bool>,
{
    if !(lo.is_finite() && hi.is_finite() && hi > lo && tol > 0.0) {
        return Err(Error::Bracket(format!("invalid bracket [{lo}, {hi}] with tol {tol}")));
    }
    if oracle(lo)? {
        return Ok(lo);
    }
    if !oracle(hi)? {
        return Err(Error::Bracket(format!("oracle infeasible at upper end {hi}")));
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if oracle(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
