use super::*;
use crate::WindowSpec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn cfg(mode: RecurrenceMode, eps: Threshold, theiler: usize) -> RecurrenceConfig {
    RecurrenceConfig { mode, epsilon: eps, rescale: Rescale::Mean, theiler, l_min: 2 }
}

fn sine(n: usize, period: f64) -> Series<f64> {
    Series::new((0..n).map(|k| (2.0 * std::f64::consts::PI * k as f64 / period).sin()).collect(), 100.0).unwrap()
}

fn random_points(n: usize, dim: usize, seed: u64) -> EmbeddedPoints<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    EmbeddedPoints::new(dim, (0..n * dim).map(|_| rng.random::<f64>()).collect()).unwrap()
}

/// Brute-force run lengths along each diagonal (or column) of a dense matrix.
fn brute_runs(rows: usize, cols: usize, get: impl Fn(usize, usize) -> bool, vertical: bool) -> Vec<usize> {
    let mut lens = Vec::new();
    let mut scan = |cells: Vec<(usize, usize)>| {
        let mut run = 0;
        for (i, j) in cells {
            if get(i, j) {
                run += 1;
            } else if run > 0 {
                lens.push(run);
                run = 0;
            }
        }
        if run > 0 {
            lens.push(run);
        }
    };
    if vertical {
        for j in 0..cols {
            scan((0..rows).map(|i| (i, j)).collect());
        }
    } else {
        for off in -(rows as isize - 1)..cols as isize {
            scan((0..rows).filter_map(|i| {
                let j = i as isize + off;
                (0..cols as isize).contains(&j).then_some((i, j as usize))
            }).collect());
        }
    }
    lens.sort_unstable();
    lens
}

fn hist_lengths(h: &LineHistogram) -> Vec<usize> {
    let mut v = Vec::new();
    for (l, c) in h.iter_from(1) {
        v.extend(std::iter::repeat_n(l, c as usize));
    }
    v
}

#[test]
fn infinite_radius_fills_eligible_cells() {
    let p = random_points(40, 2, 1);
    let m = build_matrix(&p, None, &cfg(RecurrenceMode::Auto, Threshold::Fixed(1e300), 3)).unwrap();
    assert_eq!(m.n_recurrent(), m.n_eligible());
    assert_eq!(m.n_eligible(), 40 * 40 - (40 + 2 * (39 + 38 + 37)));
    assert_eq!(rqa(&m, 2).rr, 100.0);
}

#[test]
fn auto_matrix_symmetric_with_empty_band() {
    let p = random_points(80, 3, 2);
    let m = build_matrix(&p, None, &cfg(RecurrenceMode::Auto, Threshold::Fixed(0.5), 4)).unwrap();
    assert!(m.is_symmetric());
    for i in 0..80usize {
        for j in 0..80 {
            if i.abs_diff(j) <= 4 {
                assert!(!m.get(i, j));
            }
        }
    }
}

#[test]
fn coincident_points_are_degenerate() {
    let p = EmbeddedPoints::new(2, vec![1.0; 40]).unwrap();
    let r = build_matrix(&p, None, &cfg(RecurrenceMode::Auto, Threshold::Fixed(0.2), 1));
    assert!(matches!(r, Err(Error::Degenerate(_))));
}

#[test]
fn mode_and_input_must_agree() {
    let p = random_points(20, 2, 3);
    assert!(build_matrix(&p, None, &cfg(RecurrenceMode::Cross, Threshold::Fixed(0.2), 0)).is_err());
    assert!(build_matrix(&p, Some(&p), &cfg(RecurrenceMode::Auto, Threshold::Fixed(0.2), 0)).is_err());
    let q = random_points(20, 3, 3);
    assert!(build_matrix(&p, Some(&q), &cfg(RecurrenceMode::Cross, Threshold::Fixed(0.2), 0)).is_err());
}

#[test]
fn target_rate_is_met() {
    for seed in 0..5 {
        let p = random_points(300, 2, seed);
        let m = build_matrix(&p, None, &cfg(RecurrenceMode::Auto, Threshold::TargetRr(0.025), 5)).unwrap();
        assert!((m.recurrence_rate() - 0.025).abs() < 0.001, "{}", m.recurrence_rate());
        let q = random_points(250, 2, seed + 100);
        let c = build_matrix(&p, Some(&q), &cfg(RecurrenceMode::Cross, Threshold::TargetRr(0.025), 5)).unwrap();
        assert!((c.recurrence_rate() - 0.025).abs() < 0.001);
    }
}

#[test]
fn cross_matrix_keeps_main_diagonal_and_may_be_asymmetric() {
    let a = delay_embed(&sine(300, 50.0), &EmbeddingSpec::new(2, 12, 0, 2).unwrap()).unwrap();
    let m = build_matrix(&a, Some(&a), &cfg(RecurrenceMode::Cross, Threshold::Fixed(0.1), 10)).unwrap();
    assert!((0..a.len()).all(|i| m.get(i, i)));
    let b = random_points(a.len(), 2, 9);
    let c = build_matrix(&a, Some(&b), &cfg(RecurrenceMode::Cross, Threshold::Fixed(0.3), 0)).unwrap();
    assert!(!c.is_symmetric());
}

#[test]
fn joint_identities() {
    let p = random_points(60, 2, 4);
    let q = random_points(60, 2, 5);
    let c = cfg(RecurrenceMode::Auto, Threshold::Fixed(0.5), 2);
    let ra = build_matrix(&p, None, &c).unwrap();
    let rb = build_matrix(&q, None, &c).unwrap();
    let same = joint_matrix(&ra, &ra).unwrap();
    assert_eq!(same.row_words(7), ra.row_words(7));
    assert_eq!(same.n_recurrent(), ra.n_recurrent());
    let ones = RecurrenceMatrix::<f64>::from_fn(60, 60, Some(2), |_, _| true);
    assert_eq!(joint_matrix(&ra, &ones).unwrap().n_recurrent(), ra.n_recurrent());
    let j = joint_matrix(&ra, &rb).unwrap();
    for i in 0..60 {
        for k in 0..60 {
            assert_eq!(j.get(i, k), ra.get(i, k) && rb.get(i, k));
        }
    }
    assert_eq!(j.thresholds.len(), 2);
    let small = build_matrix(&random_points(50, 2, 6), None, &c).unwrap();
    assert!(joint_matrix(&ra, &small).is_err());
}

#[test]
fn multi_embed_reduces_to_stacking() {
    let a = sine(200, 40.0);
    let spec = EmbeddingSpec::new(3, 4, 4, 2).unwrap();
    let single = multi_embed(std::slice::from_ref(&a), &spec).unwrap();
    let z = normalize(&a, NormMode::ZScore).unwrap();
    assert_eq!(single, delay_embed(&z, &spec).unwrap());
    let b = sine(200, 23.0);
    let c = sine(200, 17.0);
    let spec1 = EmbeddingSpec::new(1, 1, 0, 2).unwrap();
    let w = multi_embed(&[a.clone(), b.clone(), c.clone()], &spec1).unwrap();
    assert_eq!(w.dim, 3);
    let zs: Vec<Series<f64>> = [a, b, c].iter().map(|s| normalize(s, NormMode::ZScore).unwrap()).collect();
    for i in [0, 57, 199] {
        assert_eq!(w.point(i), &[zs[0].values[i], zs[1].values[i], zs[2].values[i]]);
    }
    assert!(multi_embed(&[sine(100, 10.0), sine(99, 10.0)], &spec1).is_err());
}

#[test]
fn quadrature_sines_recur_at_the_period() {
    let period = 40.0;
    let a = sine(400, period);
    let b = Series::new((0..400).map(|k| (2.0 * std::f64::consts::PI * k as f64 / period).cos()).collect(), 100.0).unwrap();
    let w = multi_embed(&[a, b], &EmbeddingSpec::new(1, 1, 0, 2).unwrap()).unwrap();
    let m = build_matrix(&w, None, &cfg(RecurrenceMode::Multi, Threshold::Fixed(0.05), 5)).unwrap();
    for i in 0..400 - 40 {
        assert!(m.get(i, i + 40));
        assert!(!m.get(i, i + 20));
    }
}

#[test]
fn full_diagonal_is_one_line() {
    let m = RecurrenceMatrix::<f64>::from_fn(25, 25, None, |i, j| i == j);
    let lines = diagonal_lines(&m);
    assert_eq!(lines, vec![DiagonalLine { offset: 0, start: 0, length: 25 }]);
    assert_eq!(vertical_histogram(&m).n_lines(2), 0);
}

#[test]
fn checkerboard_has_no_vertical_lines_but_full_diagonals() {
    // parity is constant along diagonals, so a checkerboard only breaks columns
    let m = RecurrenceMatrix::<f64>::from_fn(20, 20, None, |i, j| (i + j) % 2 == 1);
    assert_eq!(vertical_histogram(&m).n_lines(2), 0);
    assert_eq!(diagonal_histogram(&m).n_points(2), m.n_recurrent() - 2);
}

#[test]
fn row_stripes_have_no_diagonal_lines() {
    let m = RecurrenceMatrix::<f64>::from_fn(20, 20, None, |i, _| i % 2 == 0);
    assert_eq!(diagonal_histogram(&m).n_lines(2), 0);
    assert_eq!(vertical_histogram(&m).n_lines(2), 0);
}

#[test]
fn full_column_is_one_vertical_line() {
    let m = RecurrenceMatrix::<f64>::from_fn(17, 9, None, |_, j| j == 4);
    let v = vertical_histogram(&m);
    assert_eq!(v.n_lines(1), 1);
    assert_eq!(v.count(17), 1);
}

#[test]
fn histograms_match_brute_force_on_random_matrices() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    for &(r, c) in &[(20, 20), (13, 70), (70, 13), (65, 129)] {
        let cells: Vec<bool> = (0..r * c).map(|_| rng.random_bool(0.4)).collect();
        let m = RecurrenceMatrix::<f64>::from_fn(r, c, None, |i, j| cells[i * c + j]);
        let get = |i: usize, j: usize| cells[i * c + j];
        assert_eq!(hist_lengths(&diagonal_histogram(&m)), brute_runs(r, c, get, false));
        assert_eq!(hist_lengths(&vertical_histogram(&m)), brute_runs(r, c, get, true));
    }
}

#[test]
fn single_length_distribution_has_zero_entropy() {
    // two separate diagonal segments of length 3
    let m = RecurrenceMatrix::<f64>::from_fn(10, 10, None, |i, j| i == j && (i < 3 || (5..8).contains(&i)));
    let r = rqa(&m, 2);
    assert_eq!(r.entr, Some(0.0));
    assert_eq!(r.l_mean, Some(3.0));
    assert_eq!(r.l_sd, Some(0.0));
    assert_eq!(r.det, 100.0);
    assert_eq!(r.div, Some(1.0 / 3.0));
}

#[test]
fn no_lines_gives_absent_statistics() {
    let m = RecurrenceMatrix::<f64>::from_fn(10, 10, None, |i, _| i % 2 == 0);
    let r = rqa(&m, 2);
    assert_eq!((r.det, r.lam), (0.0, 0.0));
    assert!(r.l_mean.is_none() && r.l_max.is_none() && r.entr.is_none() && r.tt.is_none() && r.div.is_none());
}

#[test]
fn noiseless_sine_is_deterministic() {
    let spec = EmbeddingSpec::new(3, 25, 25, 2).unwrap();
    let e = delay_embed(&sine(1000, 100.0), &spec).unwrap();
    let m = build_matrix(&e, None, &cfg(RecurrenceMode::Auto, Threshold::Fixed(0.2), 25)).unwrap();
    let r = rqa(&m, 2);
    assert!(r.det >= 99.0, "det {}", r.det);
    assert!(r.tt.unwrap().is_finite());
}

#[test]
fn stationary_sine_windows_agree() {
    let s = sine(6000, 100.0);
    let spec = EmbeddingSpec::new(3, 25, 25, 2).unwrap();
    let c = cfg(RecurrenceMode::Auto, Threshold::Fixed(0.2), 25);
    let w = windowed_rqa(&RqaInput::Auto(&s), &WindowSpec::new(1500, 0.5).unwrap(), &spec, &c, NormMode::ZScore).unwrap();
    assert_eq!(w.len(), 7);
    assert_eq!(w.iter().map(|x| x.start).collect::<Vec<_>>(), vec![0, 750, 1500, 2250, 3000, 3750, 4500]);
    for pick in [|m: &RqaMetrics<f64>| m.rr, |m: &RqaMetrics<f64>| m.det] {
        let v: Vec<f64> = w.iter().map(|x| pick(x.metrics.as_ref().unwrap())).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        assert!(var < 0.01 * mean, "var {var} mean {mean}");
    }
}

#[test]
fn failed_windows_are_recorded_not_fatal() {
    let mut s = sine(2000, 100.0);
    s.mask[100] = false;
    let spec = EmbeddingSpec::new(2, 10, 10, 2).unwrap();
    let c = cfg(RecurrenceMode::Auto, Threshold::Fixed(0.2), 10);
    let w = windowed_rqa(&RqaInput::Auto(&s), &WindowSpec::new(1000, 0.0).unwrap(), &spec, &c, NormMode::ZScore).unwrap();
    assert!(w[0].metrics.is_none() && w[0].error.is_some());
    assert!(w[1].metrics.is_some());
    let short = WindowSpec::new(12, 0.0).unwrap();
    assert!(windowed_rqa(&RqaInput::Auto(&s), &short, &spec, &c, NormMode::ZScore).is_err());
}

#[test]
fn metric_names_cover_nine_columns() {
    let m = RecurrenceMatrix::<f64>::from_fn(10, 10, None, |i, j| i == j);
    assert_eq!(rqa(&m, 2).values().len(), RqaMetrics::<f64>::NAMES.len());
}

proptest! {
    #[test]
    fn det_and_lam_monotone_in_lmin(seed in 0u64..500, density in 0.1f64..0.9) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cells: Vec<bool> = (0..900).map(|_| rng.random_bool(density)).collect();
        let m = RecurrenceMatrix::<f64>::from_fn(30, 30, None, |i, j| cells[i * 30 + j]);
        let (d, v) = (diagonal_histogram(&m), vertical_histogram(&m));
        let mut prev = compute_metrics(&m, &d, &v, 2);
        for l in 3..8 {
            let cur = compute_metrics(&m, &d, &v, l);
            prop_assert!(cur.det <= prev.det && cur.lam <= prev.lam);
            prev = cur;
        }
    }

    #[test]
    fn diagonal_points_are_conserved(seed in 0u64..500, theiler in 0usize..5) {
        let p = random_points(50, 2, seed);
        let m = build_matrix(&p, None, &cfg(RecurrenceMode::Auto, Threshold::Fixed(0.4), theiler)).unwrap();
        prop_assert_eq!(diagonal_histogram(&m).n_points(1), m.n_recurrent());
        prop_assert_eq!(vertical_histogram(&m).n_points(1), m.n_recurrent());
        let r = rqa(&m, 2);
        prop_assert!((0.0..=100.0).contains(&r.det) && (0.0..=100.0).contains(&r.lam));
        if let (Some(mean), Some(max)) = (r.l_mean, r.l_max) {
            prop_assert!(max as f64 >= mean && mean >= 2.0);
            prop_assert_eq!(r.div.unwrap(), 1.0 / max as f64);
        }
    }
}
