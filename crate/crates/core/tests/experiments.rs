mod common;

use common::random_field;
use nested_bregman::experiments::{
    add_gaussian_noise, gen_exp1, gen_exp1_with, gen_exp2, gen_exp3, parse_grid, run_experiment, sweep_alphas,
    sweep_csv, write_run, AlgoChoice, ExperimentId, ExperimentSpec, RunRecord, SweepMode, EXP1_SPIKES,
};
use nested_bregman::{Field, Grid, Regularizer};

fn bits(f: &Field) -> Vec<u64> {
    f.values().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn exp1_has_one_sine_period_and_seven_spikes() {
    let t = gen_exp1(300, 7).unwrap();
    assert_eq!(t.v_true.count_nonzero(), EXP1_SPIKES);
    assert_eq!(EXP1_SPIKES, 7);
    let u = t.u_true.values();
    assert!(u[0].abs() <= 1e-12 && u[299].abs() <= 1e-12);
    assert!(t.v_true.values().iter().all(|&s| s == 0.0 || (0.5..=1.5).contains(&s.abs())));
    assert!(t.x_true.sub(&t.u_true.add(&t.v_true)).norm() == 0.0);
}

#[test]
fn delta_is_the_norm_of_the_realized_noise() {
    for t in [gen_exp1(300, 1).unwrap(), gen_exp2(48, 2).unwrap(), gen_exp3(16, 3).unwrap()] {
        let noise = t.f_delta.sub(&t.f_clean).norm();
        assert!((noise - t.delta).abs() <= 1e-12 * (1.0 + t.delta));
    }
}

#[test]
fn exp2_indicator_and_blur() {
    let side = 96;
    let t = gen_exp2(side, 4).unwrap();
    assert!(t.v_true.values().iter().all(|&x| x == 0.0 || x == 1.0));
    assert_eq!(t.v_true.count_nonzero(), (side / 3) * (side / 3));
    assert!((t.f_clean.mean() - t.x_true.mean()).abs() <= 1e-12);
    assert!(t.u_true.values().iter().all(|&x| (0.0..=0.75 + 1e-12).contains(&x)));
}

#[test]
fn exp2_total_variation_matches_direct_summation() {
    for side in [33, 48, 96] {
        let v = gen_exp2(side, 0).unwrap().v_true;
        let (rows, cols) = v.grid().shape();
        let mut tv = 0.0;
        for i in 0..rows {
            for j in 0..cols {
                let dx = if i + 1 < rows { v.at(i + 1, j) - v.at(i, j) } else { 0.0 };
                let dy = if j + 1 < cols { v.at(i, j + 1) - v.at(i, j) } else { 0.0 };
                tv += (dx * dx + dy * dy).sqrt();
            }
        }
        let value = Regularizer::tv(1.0).unwrap().eval(&v).unwrap();
        assert!((value - tv).abs() <= 1e-12 * tv, "side {side}: {value} vs {tv}");
    }
}

#[test]
fn exp3_blocks() {
    let m = 16;
    let t = gen_exp3(m, 5).unwrap();
    for i in 0..3 * m {
        for j in 0..3 * m {
            let centre = (m..2 * m).contains(&i) && (m..2 * m).contains(&j);
            if centre {
                assert_eq!(t.v_true.at(i, j), 0.0);
            } else {
                assert_eq!(t.u_true.at(i, j), 0.0);
            }
        }
    }
    assert!(t.v_true.values().iter().all(|x| x.abs() <= 2f64.sqrt() + 1e-12));
}

#[test]
fn exp3_texture_is_near_the_oscillation_kernel() {
    let t = gen_exp3(16, 6).unwrap();
    let reg = Regularizer::tgv_osci(1.0, 1.0, &[0.25, 0.5]).unwrap();
    let texture = reg.eval(&t.v_true).unwrap();
    let noise = random_field(t.v_true.grid(), 60);
    let noise = noise.scale(t.v_true.norm() / noise.norm());
    let baseline = reg.eval(&noise).unwrap();
    assert!(texture * 10.0 < baseline, "{texture} vs {baseline}");
}

#[test]
fn generators_are_deterministic() {
    let a = gen_exp2(40, 9).unwrap();
    let b = gen_exp2(40, 9).unwrap();
    assert_eq!(bits(&a.f_delta), bits(&b.f_delta));
    assert_eq!(a.delta.to_bits(), b.delta.to_bits());
    let c = gen_exp2(40, 10).unwrap();
    assert_ne!(bits(&a.f_delta), bits(&c.f_delta));
    let (x, y) = (gen_exp1(64, 3).unwrap(), gen_exp1(64, 3).unwrap());
    assert_eq!(bits(&x.v_true), bits(&y.v_true));
}

#[test]
fn noise_free_generation_and_zero_std() {
    let t = gen_exp1_with(64, 1, 0.0).unwrap();
    assert_eq!(t.delta, 0.0);
    assert_eq!(t.f_delta, t.f_clean);
    let f = random_field(Grid::line(10).unwrap(), 2);
    let (g, delta) = add_gaussian_noise(&f, 0.0, 3).unwrap();
    assert_eq!((g, delta), (f.clone(), 0.0));
    assert!(add_gaussian_noise(&f, -1.0, 3).is_err());
    assert!(gen_exp1(8, 1).is_err() && gen_exp2(16, 1).is_err() && gen_exp3(4, 1).is_err());
}

#[test]
fn noise_has_the_requested_std() {
    let n = 1_000_000;
    let zero = Field::zeros(Grid::line(n).unwrap());
    for std in [0.05, 2.0] {
        let (noisy, delta) = add_gaussian_noise(&zero, std, 11).unwrap();
        let mean = noisy.mean();
        let var = noisy.values().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() / std - 1.0).abs() < 0.01, "std {std}: {}", var.sqrt());
        assert!((delta - noisy.norm()).abs() <= 1e-12 * delta);
        let (again, _) = add_gaussian_noise(&zero, std, 11).unwrap();
        assert_eq!(bits(&noisy), bits(&again));
    }
}

#[test]
fn log_grid_endpoints() {
    let g = parse_grid("1e-2:1e4:log:7").unwrap();
    assert_eq!(g.len(), 7);
    assert!((g[0] - 1e-2).abs() < 1e-15 && (g[6] - 1e4).abs() < 1e-9);
    for w in g.windows(2) {
        assert!((w[1] / w[0] - 10.0).abs() < 1e-9);
    }
    assert_eq!(parse_grid("1,2.5,3").unwrap(), vec![1.0, 2.5, 3.0]);
    assert!(parse_grid("1:2:cubic:3").is_err());
}

fn small_exp1(algo: AlgoChoice) -> ExperimentSpec {
    let mut spec = ExperimentSpec::defaults(ExperimentId::Exp1L1H1);
    spec.size = 120;
    spec.algo = algo;
    spec.max_outer = 6;
    spec
}

#[test]
fn run_directory_reproduces_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_exp1(AlgoChoice::Morozov);
    let first = run_experiment(&spec).unwrap();
    write_run(&first, dir.path(), None).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.lines().count() <= spec.max_outer + 1);
    for name in ["config.txt", "summary.txt", "u.field", "v.field", "x.field", "u.pgm", "f_delta.field"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let echoed = ExperimentSpec::parse(&std::fs::read_to_string(dir.path().join("config.txt")).unwrap()).unwrap();
    let second = run_experiment(&echoed).unwrap();
    let again = tempfile::tempdir().unwrap();
    write_run(&second, again.path(), None).unwrap();
    for name in ["trajectory.csv", "summary.txt", "u.field", "v.field"] {
        let a = std::fs::read(dir.path().join(name)).unwrap();
        let b = std::fs::read(again.path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn bregman_type_runs_report_their_records() {
    let spec = small_exp1(AlgoChoice::ClassicBregman);
    let out = run_experiment(&spec).unwrap();
    match &out.record {
        RunRecord::Bregman { run, psnr } => {
            assert_eq!(run.states.len(), psnr.len());
            assert_eq!(out.summary.stop_rule, "discrepancy");
            assert!(run.stopped().residual < spec.tau * out.truth.delta);
        }
        RunRecord::Nested(_) => panic!("expected a Bregman record"),
    }
    let single = run_experiment(&small_exp1(AlgoChoice::SingleStepTikhonov)).unwrap();
    assert_eq!(single.summary.steps, 1);
    let inner = run_experiment(&small_exp1(AlgoChoice::BregmanInner)).unwrap();
    assert!(matches!(inner.record, RunRecord::Nested(_)));
    assert!(inner.summary.stop_index <= inner.summary.steps);
}

#[test]
fn swapped_roles_swap_the_components() {
    let mut spec = small_exp1(AlgoChoice::SingleStepMorozov);
    let plain = run_experiment(&spec).unwrap();
    spec.swap_roles = true;
    let swapped = run_experiment(&spec).unwrap();
    let close = |a: &Field, b: &Field| a.sub(b).norm() <= 1e-3 * (1.0 + b.norm());
    assert!(close(&swapped.u, &plain.v) && close(&swapped.v, &plain.u));
    assert!((plain.summary.psnr_at_stop - swapped.summary.psnr_at_stop).abs() <= 1e-2);
}

#[test]
fn sweep_covers_the_grid() {
    let spec = small_exp1(AlgoChoice::SingleStepMorozov);
    let alphas = parse_grid("1e-1:1e3:log:5").unwrap();
    let rows = sweep_alphas(&spec, &alphas, SweepMode::MorozovSingleStep).unwrap();
    assert_eq!(rows.len(), 5);
    let delta = spec.ground_truth().unwrap().delta;
    for (row, alpha) in rows.iter().zip(&alphas) {
        assert_eq!(row.alpha, *alpha);
        assert!((row.residual - delta).abs() <= 1e-3 * delta);
    }
    let csv = sweep_csv(&rows);
    assert!(csv.starts_with("alpha,lambda,residual,psnr_u,psnr_v,psnr_sum,psnr_x\n"));
    assert_eq!(csv.lines().count(), 6);
    let tik = sweep_alphas(&spec, &alphas, SweepMode::TikhonovSingleStep).unwrap();
    assert!(tik.iter().all(|r| r.lambda == 1.0));
}
