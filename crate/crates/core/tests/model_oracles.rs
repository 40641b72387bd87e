mod common;

use std::f64::consts::PI;

use bliss_core::grid::CumulativeIntegral;
use bliss_core::model::{design_matrix, log_likelihood, log_prior, prior_alpha};
use bliss_core::rng::rng_from_seed;
use bliss_core::{Hyperparameters, ParamState, Span, TimeGrid};
use nalgebra::DVector;
use rand::Rng;

use common::{design, random_dataset, realized, regular, ridge};

fn hp(k: usize) -> Hyperparameters {
    Hyperparameters {
        k,
        a: 0.4,
        b: 2.0,
        v: 5.0,
        v0: 12.0,
        gamma: 0.5,
        k0: k,
        epsilon: 0.05,
    }
}

#[test]
fn design_matrix_matches_refined_trapezoid() {
    let t = vec![0.0, 0.07, 0.2, 0.31, 0.5, 0.52, 0.8, 0.9, 1.0];
    let ds = random_dataset(t.clone(), 12, 1);
    let mut rng = rng_from_seed(2);
    for _ in 0..50 {
        let spans: Vec<(f64, f64)> = (0..3)
            .map(|_| {
                let a: f64 = rng.random_range(0.0..0.9);
                (a, rng.random_range(a + 0.01..1.0))
            })
            .collect();
        let lib = design_matrix(&ds, &spans.iter().map(|&(a, b)| Span::new(a, b)).collect::<Vec<_>>()).unwrap();
        let oracle = design(&t, ds.curves(), &spans);
        assert!((lib - &oracle).amax() < 1e-12);
        for (i, x) in ds.curves().iter().enumerate() {
            let cum = CumulativeIntegral::new(ds.grid(), x).unwrap();
            for (k, &(a, b)) in spans.iter().enumerate() {
                let m = cum.mean_over(ds.grid(), x, &Span::new(a, b)).unwrap();
                assert!((m - oracle[(i, k)]).abs() < 1e-10);
            }
        }
    }
}

/// Log density of the prior, assembled from dense Gaussian densities.
fn oracle_log_prior(theta: &ParamState, hp: &Hyperparameters, ds: &bliss_core::FunctionalDataset) -> f64 {
    let t = ds.grid().points();
    let n = ds.n() as f64;
    let k = theta.k();
    let spans: Vec<(f64, f64)> = (0..k).map(|j| realized(t, theta.centers[j], theta.half_lengths[j])).collect();
    let r = ridge(&design(t, ds.curves(), &spans), hp.v);
    let s2 = theta.variance;
    let mu = -0.5 * (2.0 * PI * hp.v0 * s2).ln() - theta.intercept.powi(2) / (2.0 * hp.v0 * s2);
    // β ~ N(0, n σ² R⁻¹)
    let cov = r.clone().try_inverse().unwrap() * (n * s2);
    let beta = DVector::from_column_slice(&theta.coefficients);
    let quad = (beta.transpose() * cov.clone().try_inverse().unwrap() * &beta)[(0, 0)];
    let logdet_cov = cov.determinant().ln();
    let b = -0.5 * (k as f64 * (2.0 * PI).ln() + logdet_cov + quad);
    let mut lengths = 0.0;
    for (&m, &l) in theta.centers.iter().zip(&theta.half_lengths) {
        let c = t.iter().position(|&v| (v - m).abs() < 1e-12).unwrap();
        let mut adm: Vec<f64> = (0..t.len()).filter(|&j| j != c).map(|j| (t[j] - t[c]).abs()).collect();
        adm.sort_by(f64::total_cmp);
        adm.dedup_by(|x, y| (*x - *y).abs() < 1e-9);
        let dens = |x: f64| ((hp.a - 1.0) * x.ln() - hp.b * x).exp();
        lengths += (dens(l) / adm.iter().map(|&x| dens(x)).sum::<f64>()).ln();
    }
    mu + b - s2.ln() - k as f64 * (t.len() as f64).ln() + lengths
}

#[test]
fn log_prior_matches_dense_oracle() {
    let t = regular(15);
    let ds = random_dataset(t.clone(), 20, 3);
    let hp = hp(3);
    let theta = ParamState {
        centers: vec![t[2], t[7], t[13]],
        half_lengths: vec![t[2], t[3], t[4]],
        coefficients: vec![0.4, -1.3, 2.0],
        intercept: 0.7,
        variance: 1.7,
    };
    let lib = log_prior(&theta, &hp, &ds).unwrap();
    let oracle = oracle_log_prior(&theta, &hp, &ds);
    assert!((lib - oracle).abs() < 1e-9, "{lib} vs {oracle}");
}

#[test]
fn doubling_variance_shifts_log_prior_in_closed_form() {
    let t = regular(15);
    let ds = random_dataset(t.clone(), 20, 4);
    let hp = hp(2);
    let theta = ParamState {
        centers: vec![t[4], t[10]],
        half_lengths: vec![t[2], t[3]],
        coefficients: vec![1.1, -0.6],
        intercept: 0.9,
        variance: 0.8,
    };
    let mut doubled = theta.clone();
    doubled.variance *= 2.0;
    let spans: Vec<(f64, f64)> = (0..2).map(|j| realized(&t, theta.centers[j], theta.half_lengths[j])).collect();
    let r = ridge(&design(&t, ds.curves(), &spans), hp.v);
    let beta = DVector::from_column_slice(&theta.coefficients);
    let q = (beta.transpose() * r * &beta)[(0, 0)];
    let (s2, n) = (theta.variance, ds.n() as f64);
    let expected = -0.5 * 2f64.ln() + theta.intercept.powi(2) / (4.0 * hp.v0 * s2) // μ term
        - 2f64.ln() + q / (4.0 * n * s2) // β term, K = 2
        - 2f64.ln(); // 1/σ²
    let got = log_prior(&doubled, &hp, &ds).unwrap() - log_prior(&theta, &hp, &ds).unwrap();
    assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
}

#[test]
fn relabelling_intervals_changes_nothing() {
    let t = regular(12);
    let ds = random_dataset(t.clone(), 15, 5);
    let hp = hp(3);
    let theta = ParamState {
        centers: vec![t[1], t[6], t[9]],
        half_lengths: vec![t[1], t[2], t[3]],
        coefficients: vec![0.3, -0.8, 1.5],
        intercept: 0.1,
        variance: 0.9,
    };
    let order = [2, 0, 1];
    let permuted = ParamState {
        centers: order.iter().map(|&i| theta.centers[i]).collect(),
        half_lengths: order.iter().map(|&i| theta.half_lengths[i]).collect(),
        coefficients: order.iter().map(|&i| theta.coefficients[i]).collect(),
        ..theta.clone()
    };
    let a = log_prior(&theta, &hp, &ds).unwrap();
    let b = log_prior(&permuted, &hp, &ds).unwrap();
    assert!((a - b).abs() < 1e-10);
    let a = log_likelihood(&theta, &ds).unwrap();
    let b = log_likelihood(&permuted, &ds).unwrap();
    assert!((a - b).abs() < 1e-10);
}

/// Exact prior support probabilities by enumerating centers and lengths.
fn enumerated_alpha(t: &[f64], hp: &Hyperparameters) -> Vec<f64> {
    let p = t.len();
    let mut q = vec![0.0; p];
    for c in 0..p {
        let mut adm: Vec<f64> = (0..p).filter(|&j| j != c).map(|j| (t[j] - t[c]).abs()).collect();
        adm.sort_by(f64::total_cmp);
        adm.dedup_by(|x, y| (*x - *y).abs() < 1e-9);
        let dens: Vec<f64> = adm.iter().map(|&x| ((hp.a - 1.0) * x.ln() - hp.b * x).exp()).collect();
        let total: f64 = dens.iter().sum();
        for (&l, d) in adm.iter().zip(&dens) {
            let (s, e) = realized(t, t[c], l);
            for j in 0..p {
                let probe = if j + 1 < p { 0.5 * (t[j] + t[j + 1]) } else { t[j] };
                if probe >= s - 1e-12 && probe <= e + 1e-12 {
                    q[j] += d / total / p as f64;
                }
            }
        }
    }
    // intervals are independent and carry nonzero coefficients almost surely
    q.iter().map(|qj| 1.0 - (1.0 - qj).powi(hp.k as i32)).collect()
}

#[test]
fn prior_alpha_matches_enumeration() {
    let t = regular(11);
    let grid = TimeGrid::new(t.clone()).unwrap();
    for k in [1, 3] {
        let mut h = hp(k);
        h.a = 0.2 / k as f64;
        h.b = 1.0;
        let draws = 40_000;
        let mc = prior_alpha(&h, &grid, draws, 11 + k as u64).unwrap();
        let exact = enumerated_alpha(&t, &h);
        for (j, (&m, &e)) in mc.values().iter().zip(&exact).enumerate() {
            let se = (e * (1.0 - e) / draws as f64).sqrt().max(1e-12);
            assert!((m - e).abs() <= 4.0 * se, "K = {k}, point {j}: {m} vs {e}");
        }
    }
}

#[test]
fn prior_alpha_is_symmetric_on_a_symmetric_grid() {
    let grid = TimeGrid::regular(0.0, 1.0, 21).unwrap();
    let draws = 40_000;
    let alpha = prior_alpha(&hp(2), &grid, draws, 9).unwrap();
    let v = alpha.values();
    let cells = v.len() - 1;
    for j in 0..cells {
        let (a, b) = (v[j], v[cells - 1 - j]);
        let se = (2.0 * 0.25 / draws as f64).sqrt();
        assert!((a - b).abs() <= 5.0 * se, "cell {j}: {a} vs {b}");
        assert!((0.0..=1.0).contains(&a));
    }
}
