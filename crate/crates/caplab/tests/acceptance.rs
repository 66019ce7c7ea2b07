//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers (run with `cargo test --test acceptance -- --nocapture`
//! to see them). Tolerances are pinned in the assertions.

use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use caplab::constants::{
    ascend_r, comparison_report, estimate_r_p, verdict, AscentConfig, ComparisonConfig, Verdict,
};
use caplab::decomposition::{
    extract_profiles, first_decomposition, generate_planted, orthogonality_report,
    ExtractionConfig, FirstDecompositionConfig, PlantConfig, SearchLattice,
};
use caplab::extension::{
    even_norm_via_convolution, extend_at, qnorm_rescaled, rescale_factorize,
};
use caplab::geometry::{
    build_cap_net, candidate_sequence, sphere_sample, whitney_pairs, CapSpec,
};
use caplab::quadrature::{BallGrid, DiskGrid, SpaceTimeGrid, SurfaceDensity};
use caplab::refinement::{bilinear_interaction, decay_fit, separated_cap_pair};

fn random_cap(dim: usize, radius: f64, rng: &mut ChaCha8Rng) -> CapSpec {
    // center displaced from the pole but with the cap inside the chart zone
    let max_off = (0.5 - radius).max(0.05).min(0.2);
    if dim == 1 {
        let c: f64 = rng.gen_range(-max_off..max_off);
        CapSpec::with_dim(1, [c, (1.0 - c * c).sqrt(), 0.0], radius).unwrap()
    } else {
        let cx: f64 = rng.gen_range(-max_off..max_off);
        let cy: f64 = rng.gen_range(-max_off..max_off);
        let cz = (1.0 - cx * cx - cy * cy).sqrt();
        CapSpec::with_dim(2, [cx, cy, cz], radius).unwrap()
    }
}

#[test]
fn criterion_1_rescaling_identity() {
    let start = Instant::now();
    let radii = [0.1, 0.25, 0.4];
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut case = 0;
    for dim in [1usize, 2] {
        for k in 0..5 {
            case += 1;
            let r = radii[k % 3];
            let cap = random_cap(dim, r, &mut rng);
            let ball_n = if dim == 1 { 128 } else { 20 };
            let ball = BallGrid::new(dim, ball_n, 1.0).unwrap();
            let grid = Arc::new(DiskGrid::cap_adapted(&cap, &ball).unwrap());
            let f = SurfaceDensity::random_cap_bump(grid, &ball, 500 + case, 2.0);
            let fac = rescale_factorize(&f, &cap).unwrap();
            let st = SpaceTimeGrid::new(dim, 4.0, 4.0, 21, 21).unwrap();
            let pts = st.points();
            let lhs = extend_at(&f, &pts);
            for ((x, t), l) in pts.iter().zip(&lhs) {
                let rhs = fac.field_at(x, *t);
                worst = worst.max((l.norm() - rhs.norm()).abs());
            }
        }
    }
    assert!(case == 10);
    assert!(worst < 1e-8, "max pointwise residual {worst}");
    assert!(start.elapsed().as_secs() < 60);
    println!(
        "PASS criterion 1: rescaling identity residual {:.3e} (< 1e-8) over 10 densities in {:.1?}",
        worst,
        start.elapsed()
    );
}

#[test]
fn criterion_2_norm_oracle_agreement() {
    let start = Instant::now();
    let r = 0.15;
    let mut rels = Vec::new();
    for seed in 1u64..=20 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let cap = random_cap(2, r, &mut rng);
        let ball = BallGrid::new(2, 48, 1.0).unwrap();
        let grid = Arc::new(DiskGrid::cap_adapted(&cap, &ball).unwrap());
        let f = SurfaceDensity::random_cap_bump(grid, &ball, seed, 1.0);
        let conv = even_norm_via_convolution(&f).unwrap();
        let st = qnorm_rescaled(&f, r, 4.0, 14.0, 96).unwrap();
        let diff = (conv.value - st.value).abs();
        assert!(
            diff <= conv.uncertainty + st.uncertainty,
            "seed {seed}: |{} - {}| > {} + {}",
            conv.value,
            st.value,
            conv.uncertainty,
            st.uncertainty
        );
        rels.push(diff / st.value);
    }
    rels.sort_by(f64::total_cmp);
    let median = rels[rels.len() / 2];
    assert!(median <= 0.01, "median relative difference {median}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 300, "runtime {elapsed:?}");
    println!(
        "PASS criterion 2: 20/20 within combined bars; median rel diff {:.4} (target 1e-2), max {:.4}, in {:.1?}",
        median,
        rels[rels.len() - 1],
        elapsed
    );
}

#[test]
fn criterion_3_gaussian_strichartz_cross_check() {
    let start = Instant::now();
    let grid = SpaceTimeGrid::new(1, 40.0, 40.0, 161, 161).unwrap();
    let est = estimate_r_p(1, &grid, 2048).unwrap();
    let diff = (est.analytic_lattice - est.quadrature_lattice).abs();
    assert!(diff < 1e-6, "two-path lattice disagreement {diff}");
    let exact = caplab::constants::gaussian_strichartz_quotient(1);
    assert!((est.bare.value - exact).abs() < 1e-14);
    assert!((est.paper_form - 1.0 / 3.0f64.sqrt()).abs() < 1e-12);
    assert!(start.elapsed().as_secs() < 60);
    println!(
        "PASS criterion 3: analytic vs quadrature lattice norms differ by {:.3e} (< 1e-6) at T = X = 40 in {:.1?}",
        diff,
        start.elapsed()
    );
}

#[test]
fn criterion_4_geometry_certificates() {
    let start = Instant::now();
    // cap nets, levels 1..5, d = 2
    let sample = sphere_sample(2, 100_000, 404);
    let mut overlaps = Vec::new();
    for level in 1..=5u32 {
        let net = build_cap_net(2, level).unwrap();
        let sep = net.separation;
        assert!(
            net.min_pairwise_distance() > sep,
            "level {level} separation violated"
        );
        // exact covering certificate on the candidate sequence
        let candidates = candidate_sequence(2, 1 << 15);
        let cover = net.covering_radius(&candidates);
        assert!(
            cover <= sep + net.candidate_mesh,
            "level {level} covering radius {cover}"
        );
        overlaps.push(net.overlap_census(&sample).unwrap());
    }
    for w in overlaps.windows(2) {
        assert!(
            w[1] <= w[0],
            "overlap census increased across levels: {overlaps:?}"
        );
    }
    // whitney tiling, d = 1 and d = 2, depth ≤ 4
    let mut rng = ChaCha8Rng::seed_from_u64(405);
    for (dim, depth, samples) in [(1usize, 4u32, 10_000usize), (2, 3, 4_000)] {
        let dec = whitney_pairs(dim, depth).unwrap();
        let mut covered = 0;
        for _ in 0..samples {
            let a: [f64; 2] = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let b: [f64; 2] = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let sep = if dim == 1 {
                (a[0] - b[0]).abs()
            } else {
                (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
            };
            let hits = dec.locate(&a, &b);
            assert!(hits.len() <= 1, "product cells overlap at ({a:?}, {b:?})");
            if sep > dec.unresolved_width {
                assert_eq!(hits.len(), 1, "uncovered pair at separation {sep}");
                covered += 1;
            }
        }
        assert!(covered > samples / 2);
    }
    assert!(start.elapsed().as_secs() < 60);
    println!(
        "PASS criterion 4: nets (levels 1-5) separation/covering/overlap {overlaps:?} and Whitney tiling certified in {:.1?}",
        start.elapsed()
    );
}

#[test]
fn criterion_5_first_decomposition_planted() {
    let start = Instant::now();
    let net = build_cap_net(2, 2).unwrap();
    let ball = BallGrid::new(2, 16, 1.0).unwrap();

    let bump_on = |center_idx: usize, radius: f64| {
        let cap = CapSpec::with_dim(2, net.centers[center_idx], radius).unwrap();
        let grid = Arc::new(DiskGrid::cap_adapted(&cap, &ball).unwrap());
        let mut f = SurfaceDensity::new(
            grid,
            ball.nodes
                .iter()
                .map(|y| {
                    let y2 = y[0] * y[0] + y[1] * y[1];
                    Complex64::new((1.0 - y2).max(0.0).powi(2), 0.0)
                })
                .collect(),
        );
        let n = f.l2_sigma_norm();
        f.scale(Complex64::new(1.0 / n, 0.0));
        (cap, f)
    };

    // one planted cap
    let (cap1, f1) = bump_on(net.centers.len() / 2, 0.25);
    let cfg = FirstDecompositionConfig {
        delta: 0.3,
        max_level: 3,
        max_pieces: 4,
        ..Default::default()
    };
    let dec1 = first_decomposition(&f1, &cfg).unwrap();
    assert_eq!(dec1.pieces.len(), 1, "single-cap piece count");
    let spacing1 = dec1.pieces[0].cap.radius / 2.0;
    let d1 = caplab::util::dist3(&dec1.pieces[0].cap.center, &cap1.center);
    assert!(d1 <= spacing1.max(0.3), "single-cap center offset {d1}");
    let pyth1 = (dec1
        .pieces
        .iter()
        .map(|p| p.density.l2_sigma_norm().powi(2))
        .sum::<f64>()
        + dec1.remainder.l2_sigma_norm().powi(2)
        - 1.0)
        .abs();
    assert!(pyth1 < 1e-12, "single-cap pythagoras {pyth1}");

    // two far-separated planted caps
    let far = (0..net.centers.len())
        .max_by(|&i, &j| {
            let di = caplab::util::dist3(&net.centers[i], &cap1.center);
            let dj = caplab::util::dist3(&net.centers[j], &cap1.center);
            di.total_cmp(&dj)
        })
        .unwrap();
    let (cap2, f2) = bump_on(far, 0.25);
    // disjoint union of two unit bumps, renormalized
    let mut nodes_u = f1.grid.nodes_u.clone();
    let mut weights = f1.grid.weights.clone();
    let mut sigma_weights = f1.grid.sigma_weights.clone();
    let mut sphere_nodes = f1.grid.sphere_nodes.clone();
    nodes_u.extend_from_slice(&f2.grid.nodes_u);
    weights.extend_from_slice(&f2.grid.weights);
    sigma_weights.extend_from_slice(&f2.grid.sigma_weights);
    sphere_nodes.extend_from_slice(&f2.grid.sphere_nodes);
    let union = Arc::new(DiskGrid {
        dim: 2,
        radius: 0.25,
        nodes_u,
        weights,
        sigma_weights,
        sphere_nodes,
    });
    let mut values = f1.values.clone();
    values.extend_from_slice(&f2.values);
    let mut f12 = SurfaceDensity::new(union, values);
    let n12 = f12.l2_sigma_norm();
    f12.scale(Complex64::new(1.0 / n12, 0.0));
    let dec2 = first_decomposition(&f12, &cfg).unwrap();
    assert_eq!(dec2.pieces.len(), 2, "two-cap piece count");
    for planted in [&cap1, &cap2] {
        let best = dec2
            .pieces
            .iter()
            .map(|p| caplab::util::dist3(&p.cap.center, &planted.center))
            .fold(f64::INFINITY, f64::min);
        let spacing = dec2.pieces[0].cap.radius / 2.0;
        assert!(best <= spacing.max(0.3), "two-cap center offset {best}");
    }
    let pyth2 = (dec2
        .pieces
        .iter()
        .map(|p| p.density.l2_sigma_norm().powi(2))
        .sum::<f64>()
        + dec2.remainder.l2_sigma_norm().powi(2)
        - 1.0)
        .abs();
    assert!(pyth2 < 1e-12, "two-cap pythagoras {pyth2}");
    println!(
        "PASS criterion 5: planted 1-cap and 2-cap recovered (offsets ≤ one net spacing), pythagoras residuals {:.1e}, {:.1e} (< 1e-12) in {:.1?}",
        pyth1,
        pyth2,
        start.elapsed()
    );
}

#[test]
fn criterion_6_profile_extraction_planted() {
    let start = Instant::now();
    let cfg = PlantConfig::two_profile_default(1, 7);
    let planted = generate_planted(&cfg).unwrap();
    let ex_cfg = ExtractionConfig {
        epsilon: 5e-2,
        max_profiles: 3,
        lattice: SearchLattice {
            x_half: 72.0,
            t_half: 16.0,
            nx: 145,
            nt: 33,
        },
        tail_fraction: 0.5,
        merge_cells: 2.0,
    };
    let ex = extract_profiles(&planted.sequence, &planted.cap, &ex_cfg).unwrap();
    assert_eq!(ex.tracks.len(), 2, "profile count; mu {:?}", ex.mu_history);
    assert!(!ex.boundary_flag);
    let dx = ex_cfg.lattice.dx();
    let dt = ex_cfg.lattice.dt();
    let mut worst_param = 0.0f64;
    for truth in &planted.tracks {
        let best = ex
            .tracks
            .iter()
            .map(|t| {
                t.trajectory
                    .iter()
                    .zip(&truth.trajectory)
                    .map(|(a, b)| a.lattice_distance(b))
                    .fold(0.0f64, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        worst_param = worst_param.max(best);
        assert!(best <= dx + dt + 1e-9, "parameter distance {best}");
    }
    // L² bookkeeping at the largest ν
    let last = cfg.nu_count - 1;
    let g2 = planted.sequence[last].l2_norm().powi(2);
    let phi2: f64 = ex.tracks.iter().map(|t| t.phi.l2_norm().powi(2)).sum();
    let e2 = ex.residuals[last].l2_norm().powi(2);
    let resid = (g2 - phi2 - e2).abs();
    assert!(resid < 1e-2, "orthogonality residual {resid}");
    // pairwise product norms strictly decreasing across ν
    let rep = orthogonality_report(
        &ex.tracks,
        &planted.sequence,
        &ex.residuals,
        &planted.ball,
        12.0,
        48,
    )
    .unwrap();
    let norms = &rep.pairwise_bilinear[0];
    for w in norms.windows(2) {
        assert!(
            w[1] < w[0],
            "product norms not strictly decreasing: {norms:?}"
        );
    }
    println!(
        "PASS criterion 6: 2 profiles, params within one cell (worst {:.2}), orthogonality residual {:.2e} (< 1e-2), product norms strictly decreasing over ν in {:.1?}",
        worst_param,
        resid,
        start.elapsed()
    );
}

#[test]
fn criterion_7_bilinear_decay() {
    let start = Instant::now();
    // synthetic power law recovered exactly
    let synthetic: Vec<(f64, f64)> = [4.0, 8.0, 16.0, 32.0]
        .iter()
        .map(|&n: &f64| (n, n.powf(-0.7)))
        .collect();
    let fit0 = decay_fit(&synthetic).unwrap();
    assert!((fit0.alpha_hat - 0.7).abs() < 1e-10 && (fit0.r2 - 1.0).abs() < 1e-10);

    // measured interaction decay, d = 2
    let r = 1.0 / 36.0;
    let mut points = Vec::new();
    for &n_sep in &[4.0, 8.0, 16.0, 32.0] {
        let ((g1, c1), (g2, c2)) = separated_cap_pair(2, r, n_sep, 20).unwrap();
        let v = bilinear_interaction(&g1, &c1, &g2, &c2, None, 10.0, 40).unwrap();
        points.push((n_sep, v.value));
    }
    for w in points.windows(2) {
        assert!(
            w[1].1 < w[0].1,
            "interaction norms not strictly decreasing: {points:?}"
        );
    }
    let fit = decay_fit(&points).unwrap();
    assert!(fit.alpha_hat > 0.0, "alpha_hat {}", fit.alpha_hat);
    assert!(fit.r2 > 0.9, "r² {}", fit.r2);
    println!(
        "PASS criterion 7: measured decay alpha_hat {:.3} > 0 with r² {:.3} > 0.9; synthetic law exact; in {:.1?}",
        fit.alpha_hat,
        fit.r2,
        start.elapsed()
    );
}

#[test]
fn criterion_8_superadditivity() {
    let start = Instant::now();
    let cfg = PlantConfig::two_profile_default(1, 11);
    let planted = generate_planted(&cfg).unwrap();
    let ex_cfg = ExtractionConfig {
        epsilon: 5e-2,
        max_profiles: 3,
        lattice: SearchLattice {
            x_half: 72.0,
            t_half: 16.0,
            nx: 145,
            nt: 33,
        },
        tail_fraction: 0.5,
        merge_cells: 2.0,
    };
    let ex = extract_profiles(&planted.sequence, &planted.cap, &ex_cfg).unwrap();
    let rep = orthogonality_report(
        &ex.tracks,
        &planted.sequence,
        &ex.residuals,
        &planted.ball,
        12.0,
        48,
    )
    .unwrap();
    let gap = rep.superadditivity_lhs - rep.superadditivity_rhs;
    assert!(
        gap <= 1e-3,
        "superadditivity violated: lhs {} rhs {}",
        rep.superadditivity_lhs,
        rep.superadditivity_rhs
    );
    println!(
        "PASS criterion 8: superadditivity lhs {:.6} ≤ rhs {:.6} + 1e-3 (gap {:.2e}) in {:.1?}",
        rep.superadditivity_lhs,
        rep.superadditivity_rhs,
        gap,
        start.elapsed()
    );
}

#[test]
fn criterion_9_constants_pipeline() {
    let start = Instant::now();
    let ccfg = ComparisonConfig::default_for(1).unwrap();

    // ascent monotonicity and restart stability
    let gamma = Arc::new(DiskGrid::gamma(1, ccfg.gamma_n).unwrap());
    let init = SurfaceDensity::constant(gamma, Complex64::new(1.0, 0.0))
        .normalized()
        .unwrap();
    let ascent_cfg = AscentConfig::default_for(1);
    let state = ascend_r(&init, &ascent_cfg).unwrap();
    for w in state.step_history.windows(2) {
        assert!(w[1].quotient >= w[0].quotient - 1e-12, "ascent not monotone");
    }
    let restart = ascend_r(&state.density, &ascent_cfg).unwrap();
    let drift = (restart.quotient - state.quotient).abs();
    assert!(
        drift <= 1e-6 * state.quotient,
        "restart fixed point drifted by {drift}"
    );

    // full comparison
    let rep = comparison_report(1, &ccfg).unwrap();
    // curve approaches R_P_est monotonically over the stated radii
    let diffs: Vec<f64> = rep
        .concentration_curve
        .iter()
        .map(|p| (p.quotient - rep.r_p_est.value).abs())
        .collect();
    for w in diffs.windows(2) {
        assert!(
            w[1] <= w[0] + 1e-9,
            "curve differences not decreasing: {diffs:?}"
        );
    }
    // verdict obeys the uncertainty rule
    let expected = verdict(&rep.r_est, &rep.r_p_est);
    assert_eq!(rep.verdict, expected);
    if rep.verdict == Verdict::RGreater {
        assert!(rep.r_est.value - rep.r_est.uncertainty > rep.r_p_est.value + rep.r_p_est.uncertainty);
    }
    // certified lower bound dominates every evaluated trial
    for &t in &rep.trial_quotients_on_grid {
        assert!(rep.r_est.value >= t - 1e-12);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 300, "runtime {elapsed:?}");
    println!(
        "PASS criterion 9: ascent monotone (final {:.4}), restart drift {:.1e}, curve → R_P diffs {:?}, verdict {:?}, in {:.1?}",
        state.quotient,
        drift,
        diffs.iter().map(|d| (d * 1e4).round() / 1e4).collect::<Vec<_>>(),
        rep.verdict,
        elapsed
    );
}
