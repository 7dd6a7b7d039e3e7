//! Acceptance suite: one test per release criterion, one PASS/FAIL line
//! each (visible with `cargo test --test acceptance -- --nocapture`).

use std::panic::AssertUnwindSafe;
use std::time::Instant;

use nalgebra::{dmatrix, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use osad::bench::{make_subject, transfer_set, BenchConfig};
use osad::config::RunConfig;
use osad::design::{
    design_w, make_online_filter, pattern_from_period, run_observer, verify_decoupling,
    PeriodExpansion,
};
use osad::detect::{calibrate, cusum_step, AlertInterval, CusumConfig, StreamKind};
use osad::eval::{
    delay_stats, interval_precision, interval_recall, transfer_grid, LabelClass, LabelSet,
    TransferSubject,
};
use osad::model::{LdsModel, SampleInterval};
use osad::pipeline;
use osad::sysid::{identify, rank_sweep, IdMethod, IdentificationConfig};

fn criterion(name: &str, body: impl FnOnce()) {
    let outcome = std::panic::catch_unwind(AssertUnwindSafe(body));
    match &outcome {
        Ok(()) => println!("{name}: PASS"),
        Err(_) => println!("{name}: FAIL"),
    }
    if let Err(e) = outcome {
        std::panic::resume_unwind(e);
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[test]
fn acceptance_1_golden_design() {
    criterion("criterion 1: golden 2x2 decoupling design", || {
        let start = Instant::now();
        let a = dmatrix![0.5, 0.3; 0.3, 0.2];
        let c = DMatrix::identity(2, 2);
        let p = dmatrix![1.0, 1.0; 2.0, 2.0];

        // designed W spans the left null space of C P: direction [2, -1]
        let w = design_w(&c, &p, None).unwrap();
        assert_eq!(w.nrows(), 1);
        assert!((-w[(0, 0)] - w[(0, 1)] * 2.0).abs() <= 1e-12);
        assert!(max_abs(&(&w * &c * &p)) <= 1e-12);

        // the printed example gains satisfy both conditions to 1e-12
        let w_golden = dmatrix![2.0, -1.0; 2.0, -1.0];
        let f_golden = dmatrix![0.0, 0.2; -0.7, 0.0];
        let report = verify_decoupling(&a, &c, &p, &w_golden, &f_golden).unwrap();
        assert!(report.pass);
        assert!(report.cfp_norm <= 1e-12, "C_f P = {}", report.cfp_norm);
        assert!(report.cfaf_norm <= 1e-12, "C_f A_f = {}", report.cfaf_norm);

        assert!(start.elapsed().as_secs_f64() < 1.0);
    });
}

#[test]
fn acceptance_2_decoupling_suppression() {
    criterion("criterion 2: suppression over 100 seeded runs", || {
        let start = Instant::now();
        for seed in 0..100u64 {
            let cfg = BenchConfig {
                seed,
                basis_seed: seed,
                noise_std: 0.0,
                ..BenchConfig::default()
            };
            let subject = make_subject(&cfg).unwrap();
            let x0 = DVector::zeros(6);

            let y_pat = subject.pattern_only_series().unwrap();
            let (r, e) = run_observer(&subject.design, &subject.model, &y_pat, &x0).unwrap();
            let (r_max, e_max) = (max_abs(&r), max_abs(&e));
            assert!(e_max > 0.0, "seed {seed}: silent pattern run");
            assert!(
                r_max <= 1e-6 * e_max,
                "seed {seed}: pattern leak r {r_max} vs e {e_max}"
            );

            let y_orth = subject.orthogonal_only_series().unwrap();
            let (r, e) = run_observer(&subject.design, &subject.model, &y_orth, &x0).unwrap();
            let (r_max, e_max) = (max_abs(&r), max_abs(&e));
            assert!(
                r_max >= 0.1 * e_max,
                "seed {seed}: orthogonal events lost, r {r_max} vs e {e_max}"
            );
        }
        let elapsed = start.elapsed().as_secs_f64();
        assert!(elapsed < 30.0, "took {elapsed:.1} s");
    });
}

#[test]
fn acceptance_3_two_tap_equivalence() {
    criterion("criterion 3: two-tap filter equals observer", || {
        for seed in 0..10u64 {
            let cfg = BenchConfig {
                seed,
                basis_seed: seed,
                ..BenchConfig::default()
            };
            let subject = make_subject(&cfg).unwrap();
            assert!(subject.design.two_tap_valid());
            let x0 = DVector::zeros(6);
            let (r_obs, _) =
                run_observer(&subject.design, &subject.model, &subject.series, &x0).unwrap();
            let mut filter = make_online_filter(&subject.design).unwrap();
            let r_tap = filter.run(&subject.series).unwrap();
            let scale = max_abs(&r_obs);
            assert!(scale > 0.0);
            let diff = &r_obs - &r_tap;
            assert!(
                max_abs(&diff) <= 1e-10 * scale,
                "seed {seed}: max diff {} vs scale {scale}",
                max_abs(&diff)
            );
        }
    });
}

#[test]
fn acceptance_4_selectivity_end_to_end() {
    criterion("criterion 4: full pipeline selectivity per seed", || {
        for seed in [7u64, 8, 9, 10, 11] {
            let dir = tempfile::tempdir().unwrap();
            let cfg = RunConfig {
                data_dir: dir.path().to_path_buf(),
                seed,
                ..RunConfig::default()
            };
            pipeline::cmd_synth(&cfg).unwrap();
            pipeline::cmd_learn(&cfg).unwrap();
            pipeline::cmd_design(&cfg).unwrap();
            pipeline::cmd_run(&cfg).unwrap();
            let summary = pipeline::cmd_eval(&cfg).unwrap();
            let subject = &summary.subjects[0];
            assert_eq!(
                subject.sel_pattern_overlap, 0,
                "seed {seed}: selective stream overlaps pattern labels"
            );
            let recall = subject.sel_recall.expect("selective recall defined");
            assert!(
                recall >= 0.95,
                "seed {seed}: selective recall {recall:.4} < 0.95"
            );
        }
    });
}

#[test]
fn acceptance_5_identification() {
    criterion("criterion 5: rank-4 identification and rank sweep", || {
        // random stable rank-4 system: two damped rotation modes in a
        // random orthogonal basis, rectangular C
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let g = DMatrix::from_fn(4, 4, |_, _| normal.sample(&mut rng));
        let q = g.qr().q();
        let blocks = [(0.8_f64, 0.9_f64), (0.6, 2.1)];
        let mut b = DMatrix::zeros(4, 4);
        for (k, &(d, th)) in blocks.iter().enumerate() {
            b[(2 * k, 2 * k)] = d * th.cos();
            b[(2 * k, 2 * k + 1)] = -d * th.sin();
            b[(2 * k + 1, 2 * k)] = d * th.sin();
            b[(2 * k + 1, 2 * k + 1)] = d * th.cos();
        }
        let a = &q * b * q.transpose();
        let c = DMatrix::from_fn(5, 4, |_, _| normal.sample(&mut rng));
        let model = LdsModel::new(a.clone(), c).unwrap();
        let x0 = DVector::from_fn(4, |_, _| normal.sample(&mut rng));
        let sim = osad::model::simulate_lds(&model, &x0, 400, None, 0.0, 0).unwrap();

        let mut truth: Vec<(f64, f64)> = a
            .complex_eigenvalues()
            .iter()
            .map(|l| (l.re, l.im))
            .collect();
        truth.sort_by(|x, y| x.partial_cmp(y).unwrap());

        for method in [IdMethod::Subspace, IdMethod::Spectral] {
            let cfg = IdentificationConfig {
                rank: 4,
                hankel_rows: 10,
                method,
            };
            let identified = identify(&sim.series, &cfg).unwrap();
            let mut eigs: Vec<(f64, f64)> = identified
                .a()
                .clone()
                .complex_eigenvalues()
                .iter()
                .map(|l| (l.re, l.im))
                .collect();
            eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (got, want) in eigs.iter().zip(&truth) {
                assert!(
                    (got.0 - want.0).abs() <= 1e-6 && (got.1 - want.1).abs() <= 1e-6,
                    "{method}: eigenvalue {got:?} vs {want:?}"
                );
            }

            let sweep = rank_sweep(&sim.series, 4, &cfg).unwrap();
            for pair in sweep.windows(2) {
                assert!(
                    pair[1].1 <= pair[0].1 + 1e-8,
                    "{method}: rmse not non-increasing: {sweep:?}"
                );
            }
        }
    });
}

#[test]
fn acceptance_6_cusum_design() {
    criterion("criterion 6: CUSUM delay and false-alarm budget", || {
        // calibration window with exact mean 0 and exact unbiased std 1
        let mut window = vec![0.0];
        for _ in 0..50 {
            window.push(1.0);
            window.push(-1.0);
        }
        let cfg = CusumConfig {
            alpha: 1e-4,
            beta: 1e-4,
            delta: 1.0,
            calibration_len: 101,
        };

        // +1 sigma sustained shift flags within 25 samples
        let mut state = calibrate(&window, &cfg).unwrap();
        let mut delay = None;
        for t in 1..=40 {
            if cusum_step(&mut state, 1.0).unwrap() {
                delay = Some(t);
                break;
            }
        }
        assert!(delay.unwrap() <= 25, "delay {delay:?}");

        // noise-free null: a million samples at the mean, zero flags
        let mut state = calibrate(&window, &cfg).unwrap();
        for _ in 0..1_000_000 {
            assert!(!cusum_step(&mut state, 0.0).unwrap());
        }

        // N(mu0, sigma) noise: empirical false-alarm rate <= 10 * alpha
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let calib: Vec<f64> = (0..2000).map(|_| normal.sample(&mut rng)).collect();
        let cfg_noise = CusumConfig {
            calibration_len: 2000,
            ..cfg
        };
        let mut state = calibrate(&calib, &cfg_noise).unwrap();
        let mut flags = 0usize;
        for _ in 0..1_000_000 {
            if cusum_step(&mut state, normal.sample(&mut rng)).unwrap() {
                flags += 1;
            }
        }
        let rate = flags as f64 / 1e6;
        assert!(
            rate <= 10.0 * cfg.alpha,
            "false-alarm rate {rate:.2e} > {:.2e}",
            10.0 * cfg.alpha
        );
    });
}

#[test]
fn acceptance_7_interval_metrics() {
    criterion("criterion 7: hand-computed interval metrics", || {
        let iv = |a, b| SampleInterval::new(a, b).unwrap();
        let pred = |a, b| AlertInterval {
            interval: iv(a, b),
            stream: StreamKind::AllAnomalies,
            peak_stat: 0.0,
        };
        let labels1 = LabelSet::new(vec![iv(0, 10)], LabelClass::Other).unwrap();
        assert_eq!(interval_precision(&labels1, &[pred(0, 10)]).unwrap(), 1.0);
        assert_eq!(interval_recall(&labels1, &[pred(0, 10)]).unwrap(), 1.0);
        assert_eq!(interval_precision(&labels1, &[pred(5, 15)]).unwrap(), 0.5);
        assert_eq!(interval_recall(&labels1, &[pred(5, 15)]).unwrap(), 0.5);
        let labels2 = LabelSet::new(vec![iv(0, 4), iv(10, 14)], LabelClass::Other).unwrap();
        assert_eq!(
            interval_precision(&labels2, &[pred(0, 14)]).unwrap(),
            8.0 / 14.0
        );
        assert_eq!(interval_recall(&labels2, &[pred(0, 14)]).unwrap(), 1.0);

        let d = delay_stats(&[(iv(100, 200), iv(98, 204))], 200.0).unwrap();
        assert!((d.mean_a - 0.01).abs() <= 1e-12);
        assert!((d.mean_b + 0.02).abs() <= 1e-12);
        let d = delay_stats(
            &[(iv(100, 200), iv(98, 200)), (iv(300, 400), iv(302, 400))],
            200.0,
        )
        .unwrap();
        assert!(d.mean_a.abs() <= 1e-12);
        assert!((d.std_a - 0.01 * 2.0_f64.sqrt()).abs() <= 1e-12);
    });
}

#[test]
fn acceptance_8_transfer_trend() {
    criterion("criterion 8: cross-subject transfer trend", || {
        for base_seed in [40u64, 41] {
            let set = transfer_set(base_seed, 3).unwrap();
            let subjects: Vec<TransferSubject> = set
                .iter()
                .map(|s| TransferSubject {
                    model: s.model.clone(),
                    design: s.design.clone(),
                    series: s.series.clone(),
                    labels: s.all_labels().unwrap(),
                })
                .collect();
            let cfg = RunConfig::default().detection_config();
            let grid = transfer_grid(&subjects, &cfg).unwrap();
            let diag = grid.diagonal_mean_recall();
            let off = grid.off_diagonal_mean_recall();
            let avg = grid.averaged_mean_recall();
            assert!(
                diag > off,
                "seed {base_seed}: diagonal {diag:.4} <= off-diagonal {off:.4}"
            );
            assert!(
                avg > off && avg < diag,
                "seed {base_seed}: averaged {avg:.4} outside ({off:.4}, {diag:.4})"
            );
        }
    });
}

#[test]
fn acceptance_9_period_expansion_identity() {
    criterion("criterion 9: period expansion coefficient identity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let t = rng.gen_range(1e-3..1e3f64);
            let e = PeriodExpansion::new(t).unwrap();
            let sum = e.alpha + e.beta + e.gamma;
            let scale = e.alpha.abs().max(e.beta.abs()).max(e.gamma.abs()).max(1.0);
            assert!(sum.abs() <= 1e-9 * scale, "T = {t}: sum {sum}");
        }
        // spot values
        let e = PeriodExpansion::new(4.0).unwrap();
        assert_eq!((e.alpha, e.beta, e.gamma), (2.0, 6.0, -8.0));
        // pattern blocks follow the coefficients
        let p = pattern_from_period(&DMatrix::identity(2, 2), 3.0).unwrap();
        assert_eq!(p.matrix()[(0, 2)], 3.0);
        assert_eq!(p.matrix()[(0, 4)], -3.0);
    });
}
