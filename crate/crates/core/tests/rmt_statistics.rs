use ndarray::Array2;
use qsb_core::rmt::*;
use qsb_core::scalar::rat;
use qsb_core::{NcPoly, Polynomial, C64};

fn multi_index(mut flat: usize, d: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for slot in out.iter_mut().rev() {
        *slot = flat % d;
        flat /= d;
    }
    out
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn check_covariance(sampler: &HermitianSampler, sigma: &SigmaFamily, seed: u64) {
    let dim = sigma.dim();
    let samples: Vec<Array2<C64>> = (0..10_000).map(|i| sampler.sample(1.0, &mut sample_rng(seed, i))).collect();
    for a in 0..dim * dim {
        for b in 0..dim * dim {
            let (i, j, k, l) = (a / dim, a % dim, b / dim, b % dim);
            let products: Vec<C64> = samples.iter().map(|x| x[[i, j]] * x[[k, l]]).collect();
            let (re, re_se) = mean_and_stderr(&products.iter().map(|v| v.re).collect::<Vec<_>>());
            let (im, im_se) = mean_and_stderr(&products.iter().map(|v| v.im).collect::<Vec<_>>());
            let n = sigma.n_legs;
            let expect = covariance_entry(
                sigma,
                &multi_index(i, sigma.d, n),
                &multi_index(j, sigma.d, n),
                &multi_index(k, sigma.d, n),
                &multi_index(l, sigma.d, n),
            )
            .unwrap();
            assert!((re - expect).abs() <= 4.0 * re_se + 1e-12, "({i},{j},{k},{l}): {re} vs {expect} ± {re_se}");
            assert!(im.abs() <= 4.0 * im_se + 1e-12, "({i},{j},{k},{l}): imaginary {im} ± {im_se}");
        }
    }
}

#[test]
fn sampler_reproduces_covariance() {
    for n in [1, 2] {
        let binomial = sigma_binomial(&rat(1, 1), 2, n).unwrap();
        check_covariance(&HermitianSampler::new(&binomial).unwrap(), &binomial, 100 + n as u64);
        check_covariance(&HermitianSampler::embedded(&binomial).unwrap(), &binomial, 200 + n as u64);
        let layer = sigma_layer(&rat(1, 1), 2, n).unwrap();
        check_covariance(&HermitianSampler::new(&layer).unwrap(), &layer, 300 + n as u64);
    }
}

fn trace_powers(sampler: &HermitianSampler, seed: u64, count: usize) -> (Vec<f64>, Vec<f64>) {
    let mut two = Vec::with_capacity(count);
    let mut four = Vec::with_capacity(count);
    for i in 0..count {
        let x = sampler.sample(1.0, &mut sample_rng(seed, i));
        let x2 = x.dot(&x);
        let dim = x.nrows() as f64;
        two.push(x2.diag().iter().map(|v| v.re).sum::<f64>() / dim);
        four.push(x2.iter().map(|v| v.norm_sqr()).sum::<f64>() / dim);
    }
    (two, four)
}

#[test]
fn factorized_and_embedded_samplers_agree() {
    let sigma = sigma_binomial(&rat(1, 1), 2, 3).unwrap();
    let (a2, a4) = trace_powers(&HermitianSampler::new(&sigma).unwrap(), 1, 20_000);
    let (b2, b4) = trace_powers(&HermitianSampler::embedded(&sigma).unwrap(), 2, 20_000);
    let q_hat = q_hat_binomial(&rat(1, 1), 2, 3);
    let q_hat = num_traits::ToPrimitive::to_f64(&q_hat).unwrap();
    for (a, b, exact) in [(&a2, &b2, 1.0), (&a4, &b4, 2.0 + q_hat)] {
        let (ma, sa) = mean_and_stderr(a);
        let (mb, sb) = mean_and_stderr(b);
        assert!((ma - mb).abs() < 5.0 * sa.hypot(sb), "{ma} ± {sa} vs {mb} ± {sb}");
        assert!((ma - exact).abs() < 5.0 * sa, "{ma} ± {sa} vs {exact}");
        assert!((mb - exact).abs() < 5.0 * sb, "{mb} ± {sb} vs {exact}");
    }
}

#[test]
fn second_moment_is_t() {
    let sigma = SigmaSpec { kind: FamilyKind::Binomial, c: rat(1, 1), d: 2 };
    let x2 = NcPoly::word(vec![0, 0]);
    let r = moment_convergence(&x2.scale(&1.0), &sigma, &[vec![1.5]], &McPlan::uniform(&[1, 2, 3], 2_000, 5)).unwrap();
    assert!((r.reference - 1.5).abs() < 1e-12);
    for rec in &r.records {
        assert!((rec.estimate - 1.5).abs() < 3.0 * rec.stderr, "N={}: {} ± {}", rec.n_legs, rec.estimate, rec.stderr);
    }
}

#[test]
fn theorem2_estimates_are_real() {
    let sigma = SigmaSpec { kind: FamilyKind::Binomial, c: rat(1, 1), d: 2 };
    let p = Polynomial::new(vec![0.0, 1.0, 0.5, 1.0]);
    let r = theorem2_error(&p, &sigma, 1.0, 0.8, &McPlan::uniform(&[2, 3], 3_000, 9)).unwrap();
    for rec in &r.records {
        assert!(rec.imag_estimate.abs() <= 4.0 * rec.imag_stderr + 1e-12, "{} ± {}", rec.imag_estimate, rec.imag_stderr);
    }
}

#[test]
fn experiments_are_deterministic() {
    let sigma = SigmaSpec { kind: FamilyKind::Layer, c: rat(1, 1), d: 2 };
    let p = Polynomial::monomial(2);
    let plan = McPlan::uniform(&[2, 4], 50, 77).with_antithetic(true);
    let mut a = theorem2_error(&p, &sigma, 1.0, 1.0, &plan).unwrap();
    let mut b = theorem2_error(&p, &sigma, 1.0, 1.0, &plan).unwrap();
    for r in a.records.iter_mut().chain(b.records.iter_mut()) {
        r.seconds = 0.0;
    }
    assert_eq!(a, b);
}

#[test]
fn q_hat_approaches_target() {
    let q = target_q(1.0, 2);
    let gaps: Vec<f64> = [16, 64, 256]
        .iter()
        .map(|&n| (num_traits::ToPrimitive::to_f64(&q_hat_binomial(&rat(1, 1), 2, n)).unwrap() - q).abs())
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}
