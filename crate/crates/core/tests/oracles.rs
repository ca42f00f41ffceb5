//! Reference values checked against independent brute-force oracles.

use nalgebra::DMatrix;
use num_complex::Complex64;

use twrc_core::design::{
    combiner_objective, recover_beta, required_power, solve_beamformer, solve_combiner, verify_rates, SystemParams,
};
use twrc_core::harness::{oracle_grid, sweep_with};
use twrc_core::lattice::{cof_roundtrip, enumerate_codebook, second_moment, Lattice, NestedChain};
use twrc_core::optimizer::{alternate, run_scheme, AlternateOptions, SchemeId};
use twrc_core::scenario::{gen_channel, units_from_config, ChannelRealization, ScenarioConfig, SweepAxis};
use twrc_core::sdp::{solve_sdp, Relation};
use twrc_core::{ComplexVector, HermitianMatrix, SdpInstance, Tolerances};

fn unit_params(n: usize) -> SystemParams {
    SystemParams::new(n, 1.0, 0.0, 1.0, [0.5, 0.5]).unwrap()
}

fn orthogonal() -> ChannelRealization {
    ChannelRealization::new(ComplexVector::basis(2, 0), ComplexVector::basis(2, 1), 0).unwrap()
}

fn ones(n: usize) -> ChannelRealization {
    let v = ComplexVector::from_real(&vec![1.0; n]).unwrap();
    ChannelRealization::new(v.clone(), v, 0).unwrap()
}

#[test]
fn orthogonal_required_power_and_grid_optimum() {
    let ch = orthogonal();
    let p = unit_params(2);
    let u = ComplexVector::uniform(2);
    assert!((required_power(&u, &u, &ch, &p).unwrap() - 10.0).abs() < 1e-12);
    // Resolution 64 contains t = π/4, so the grid hits the symmetric point.
    let grid = oracle_grid(&ch, &p, 64).unwrap();
    assert!((grid - 10.0).abs() < 1e-9, "{grid}");
    // Equal-split argument: a_i = 2/|g_i|² + 1 with |g₁|² + |g₂|² = 1 and
    // h_i = |f_i|², so P = max(a₁/x, a₂/(1−x)) is minimized at x = ½ with a = 5.
    let mut best = f64::INFINITY;
    for k in 1..1000 {
        let gx = k as f64 / 1000.0;
        let a = [2.0 / gx + 1.0, 2.0 / (1.0 - gx) + 1.0];
        for j in 1..1000 {
            let fx = j as f64 / 1000.0;
            best = best.min((a[0] / fx).max(a[1] / (1.0 - fx)));
        }
    }
    assert!((best - 10.0).abs() < 1e-9);
}

#[test]
fn beamformer_matches_power_split_sweep() {
    let ch = orthogonal();
    let bf = solve_beamformer(&ComplexVector::uniform(2), &ch, &unit_params(2)).unwrap();
    let sweep_min =
        (1..10_000).map(|k| k as f64 / 10_000.0).map(|x| (5.0 / x).max(5.0 / (1.0 - x))).fold(f64::INFINITY, f64::min);
    assert!((bf.p_r - sweep_min).abs() < 1e-7);
    assert!((bf.f_matrix.trace() - 10.0).abs() < 1e-6);
    for k in 0..2 {
        assert!((bf.f[k].norm() - 0.5f64.sqrt()).abs() < 1e-6);
    }
}

#[test]
fn combiner_matches_diagonal_sweep() {
    let ch = orthogonal();
    let cb = solve_combiner(&ComplexVector::uniform(2), &ch, &unit_params(2)).unwrap();
    let sweep_min = (1..10_000)
        .map(|k| k as f64 / 10_000.0)
        .map(|x| (4.0 / x + 2.0).max(4.0 / (1.0 - x) + 2.0))
        .fold(f64::INFINITY, f64::min);
    assert!((cb.p_r_implied - sweep_min).abs() < 1e-7, "{}", cb.p_r_implied);
    assert!((cb.g_matrix.get(0, 0).re - 0.5).abs() < 1e-6);
    assert!((cb.g_matrix.trace() - 1.0).abs() < 1e-9);
}

#[test]
fn combiner_beats_dense_grid_on_random_channel() {
    let ch = gen_channel(99, 2).unwrap();
    let p = SystemParams::new(2, 1.0, 0.5, 0.1, [1.0, 1.5]).unwrap();
    let f = ComplexVector::new(vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]).unwrap();
    let cb = solve_combiner(&f, &ch, &p).unwrap();
    let h = [(ch.h1[0] * f[0] + ch.h1[1] * f[1]).norm_sqr(), (ch.h2[0] * f[0] + ch.h2[1] * f[1]).norm_sqr()];
    let th = [4.0, 8.0];
    let rho = [p.sigma2 * th[0] / h[0], p.sigma2 * th[1] / h[1]];
    let mu = [(p.sigma2 * (th[1] - 1.0) + 2.0 * p.p_c) / h[0], (p.sigma2 * (th[0] - 1.0) + 2.0 * p.p_c) / h[1]];
    let mut best = f64::INFINITY;
    for k in 0..=200 {
        let t = k as f64 * std::f64::consts::FRAC_PI_2 / 200.0;
        for m in 0..200 {
            let g = ComplexVector::new(vec![
                Complex64::new(t.cos(), 0.0),
                Complex64::from_polar(t.sin(), 2.0 * std::f64::consts::PI * m as f64 / 200.0),
            ])
            .unwrap();
            best = best.min(combiner_objective(&g, &[&ch.h1, &ch.h2], &rho, &mu).unwrap());
        }
    }
    assert!(cb.p_r_implied <= best + 1e-6, "{} vs grid {best}", cb.p_r_implied);
    assert!(cb.p_r_implied >= best - 1e-2 * best);
}

#[test]
fn alternation_reaches_grid_optimum_on_orthogonal_channel() {
    let trace = alternate(&orthogonal(), &unit_params(2), &AlternateOptions::default()).unwrap();
    assert!((trace.final_design.p_r - 10.0).abs() < 1e-6);
}

#[test]
fn scalar_chain_closed_form() {
    let ch = ones(1);
    let p = unit_params(1);
    let trace = alternate(&ch, &p, &AlternateOptions::default()).unwrap();
    assert_eq!(trace.iterations.len(), 1);
    assert!((trace.final_design.p_r - 3.0).abs() < 1e-9);
    let one = ComplexVector::from_real(&[1.0]).unwrap();
    // Both bounds of the β interval evaluate to 1/3 at the binding power.
    let beta = recover_beta(3.0, &one, &one, &ch, &p).unwrap();
    assert!((beta[0] - 1.0 / 3.0).abs() < 1e-12);
    let beta = recover_beta(6.0, &one, &one, &ch, &p).unwrap();
    assert!((beta[0] - 5.0 / 12.0).abs() < 1e-12);
}

#[test]
fn scheme_four_sweep_row_on_scalar_channel() {
    let cfg = ScenarioConfig {
        n_antennas: 1,
        snr_db: 0.0,
        pc_dbm: -400.0,
        rate_targets: [0.5, 0.5],
        trials: 1,
        schemes: vec![SchemeId::PsOnly],
        axis: SweepAxis::Snr(vec![0.0]),
        ..ScenarioConfig::default()
    };
    let out = sweep_with(&cfg, &|_, n| Ok(ones(n))).unwrap();
    assert_eq!(out.records.len(), 1);
    assert!((out.records[0].p_r_db - 10.0 * 3f64.log10()).abs() < 1e-12);
}

#[test]
fn codebooks_match_brute_force_counts() {
    // Z over 4Z: half-open cell [−2, 2).
    let fine = Lattice::scaled_integer(1.0, 1).unwrap();
    let coarse = Lattice::scaled_integer(4.0, 1).unwrap();
    let book: Vec<f64> = enumerate_codebook(&fine, &coarse).unwrap().iter().map(|c| c.point[0]).collect();
    let brute: Vec<f64> = (-10..10).map(f64::from).filter(|&x| (-2.0..2.0).contains(&x)).collect();
    assert_eq!(book, brute);

    // Z² over 2Z²: square cell [−1, 1)².
    let fine = Lattice::scaled_integer(1.0, 2).unwrap();
    let coarse = Lattice::scaled_integer(2.0, 2).unwrap();
    let book = enumerate_codebook(&fine, &coarse).unwrap();
    let mut brute = Vec::new();
    for x in -5..5 {
        for y in -5..5 {
            if (-1..1).contains(&x) && (-1..1).contains(&y) {
                brute.push(vec![x as f64, y as f64]);
            }
        }
    }
    brute.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(book.iter().map(|c| c.point.clone()).collect::<Vec<_>>(), brute);

    // Hexagonal lattice over 3× itself: 9 codewords, one per coset.
    let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 3f64.sqrt() / 2.0]);
    let fine = Lattice::new(g.clone()).unwrap();
    let coarse = Lattice::new(g * 3.0).unwrap();
    let book = enumerate_codebook(&fine, &coarse).unwrap();
    assert_eq!(book.len(), 9);
    for (i, a) in book.iter().enumerate() {
        for b in &book[i + 1..] {
            let d: Vec<f64> = a.point.iter().zip(&b.point).map(|(x, y)| x - y).collect();
            assert!(!coarse.contains(&d));
        }
    }
}

#[test]
fn cof_hand_evaluation() {
    let chain = NestedChain::scaled_integer(1.0, 4.0, 8.0, 1).unwrap();
    // t = (3 + 1 − Q_{4Z}(1)) mod 8Z = 4 mod 8Z; the half-open cell [−4, 4)
    // holds the representative −4.
    let e = cof_roundtrip(&chain, &[3.0], &[1.0], &[0.0], &[0.0], 1.0, 1.0, 0.0, &[0.0]).unwrap();
    assert_eq!(e.t_expected, vec![-4.0]);
    assert_eq!(e.t_decoded, vec![-4.0]);
    let e = cof_roundtrip(&chain, &[3.0], &[1.0], &[0.0], &[0.5], 1.0, 1.0, 0.0, &[0.0]).unwrap();
    // Q_{4Z}(1.5) = 0, so t = 4 mod 8Z again.
    assert!(e.matches(1e-12));
    assert_eq!(e.t_expected, vec![-4.0]);
}

#[test]
fn rayleigh_statistics() {
    let ch = gen_channel(2024, 50_000).unwrap();
    let samples: Vec<Complex64> = ch.h1.as_slice().iter().chain(ch.h2.as_slice()).copied().collect();
    let n = samples.len() as f64;
    let mean_re = samples.iter().map(|z| z.re).sum::<f64>() / n;
    let mean_im = samples.iter().map(|z| z.im).sum::<f64>() / n;
    let var = samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
    let var_re = samples.iter().map(|z| z.re * z.re).sum::<f64>() / n;
    assert!(mean_re.abs() < 0.02 && mean_im.abs() < 0.02);
    assert!((0.97..=1.03).contains(&var), "{var}");
    assert!((var_re - 0.5).abs() < 0.015, "{var_re}");
}

#[test]
fn second_moment_of_integers() {
    let est = second_moment(&Lattice::scaled_integer(1.0, 1).unwrap(), 100_000, 5).unwrap();
    assert!((est.mean - 1.0 / 12.0).abs() <= 3.0 * est.std_err, "{est:?}");
    let scaled = second_moment(&Lattice::scaled_integer(3.0, 1).unwrap(), 100_000, 6).unwrap();
    assert!((scaled.mean - 9.0 / 12.0).abs() <= 3.0 * scaled.std_err);
}

#[test]
fn sdp_matched_constraint_against_rank_one_grid() {
    let h = ComplexVector::new(vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]).unwrap();
    let inst =
        SdpInstance::minimize(HermitianMatrix::identity(2)).subject_to(HermitianMatrix::outer(&h), Relation::Ge, 1.0);
    let sol = solve_sdp(&inst, &Tolerances::default()).unwrap();
    // X = t·vv† with unit v needs t ≥ 1/|h†v|².
    let mut best = f64::INFINITY;
    for k in 0..=400 {
        let t = k as f64 * std::f64::consts::FRAC_PI_2 / 400.0;
        for m in 0..400 {
            let v = ComplexVector::new(vec![
                Complex64::new(t.cos(), 0.0),
                Complex64::from_polar(t.sin(), 2.0 * std::f64::consts::PI * m as f64 / 400.0),
            ])
            .unwrap();
            best = best.min(1.0 / h.dot(&v).unwrap().norm_sqr());
        }
    }
    assert!((sol.objective_value - 1.0).abs() < 1e-6);
    assert!((best - 1.0).abs() < 1e-4);
    assert!(sol.objective_value <= best + 1e-6);
}

#[test]
fn optimizer_designs_meet_targets_at_default_operating_point() {
    let cfg = ScenarioConfig::default();
    let params = units_from_config(&cfg).unwrap();
    for seed in 0..5 {
        let ch = gen_channel(seed, 4).unwrap();
        let d = run_scheme(SchemeId::JointTransceiverPs, &ch, &params, &cfg.alternate_options()).unwrap();
        let r = verify_rates(&d, &ch, &params).unwrap();
        assert!(r.min_margin() >= -1e-6);
        assert!(r.uplink_margin.iter().all(|m| *m > 0.0));
    }
}
