//! The acceptance suite: eleven numbered checks, each returning a pass/fail [`Outcome`].
//!
//! [`Profile::Full`] runs every check at its stated size. [`Profile::Quick`] shrinks the
//! Monte Carlo checks (fewer N, fewer samples) and keeps the exact ones unchanged.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::combinat::q_factorial;
use crate::mixedfock::{
    annihilate, create, fock_inner_vec, mean_by_n, mixed_moment, mixing_experiment, vacuum_expectation, EntryMode,
    MixedQSpec,
};
use crate::qalgebra::{
    generator_letters, moment_of_word, wick_closed, wick_recursive, wick_word, EllipticLayout, GaussianFamily,
    HeatKernelChecker,
};
use crate::qfun::{hermite, hermite_values, mehler, mehler_domain, mehler_leading_factor, mehler_series, mehler_zero_locus, moment, quadrature, QMeasureParams};
use crate::rmt::{
    check_hypotheses, moment_convergence, q_hat_binomial, target_q, theorem2_error, theorem3_error, ExperimentResult,
    FamilyKind, McPlan, NRecord, SigmaSpec,
};
use crate::scalar::{crat, rat, Real};
use crate::{ComplexRational, NcPoly, Polynomial, Rational, Result};

pub const COUNT: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {} ({:.1}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.seconds,
            self.detail
        )
    }
}

pub fn title(id: usize) -> &'static str {
    match id {
        1 => "Hermite orthogonality",
        2 => "moment oracle equivalence",
        3 => "q-Mehler identity",
        4 => "Wick consistency",
        5 => "heat-kernel identity",
        6 => "Fock layer exactness",
        7 => "sigma family diagnostics",
        8 => "one-dimensional random matrix limit",
        9 => "multidirectional random matrix limit",
        10 => "mixed Q limit",
        11 => "moment convergence",
        _ => "unknown",
    }
}

/// Runs criterion `id` (1-based).
pub fn run(id: usize, profile: Profile) -> Result<Outcome> {
    let start = Instant::now();
    let (passed, detail) = match id {
        1 => hermite_orthogonality()?,
        2 => moment_equivalence()?,
        3 => mehler_identity()?,
        4 => wick_consistency()?,
        5 => heat_kernel()?,
        6 => fock_exactness()?,
        7 => sigma_diagnostics()?,
        8 => {
            let plan = theorem2_plan(profile);
            theorem2_verdict(&run_theorem2(&plan)?, profile)
        }
        9 => {
            let plan = theorem3_plan(profile);
            theorem3_verdict(&run_theorem3(&plan)?)
        }
        10 => mixed_limit()?,
        11 => moment_limits(profile)?,
        _ => return Err(crate::QsbError::invalid(format!("no criterion {id}; valid ids are 1..={COUNT}"))),
    };
    Ok(Outcome { id, title: title(id), passed, detail, seconds: start.elapsed().as_secs_f64() })
}

pub fn run_all(profile: Profile) -> Result<Vec<Outcome>> {
    (1..=COUNT).map(|id| run(id, profile)).collect()
}

const ONE_DIM_Q: [f64; 4] = [-0.5, 0.0, 0.3, 0.7];
const ONE_DIM_T: [f64; 3] = [0.5, 1.0, 2.0];
const GRID_NODES: usize = 4096;

fn hermite_orthogonality() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for q in ONE_DIM_Q {
        for t in ONE_DIM_T {
            let rule = quadrature(&QMeasureParams::new(q, t)?, GRID_NODES)?;
            let mut gram = [[0.0f64; 9]; 9];
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let h = hermite_values(8, &q, &t, x);
                for m in 0..9 {
                    for n in 0..9 {
                        gram[m][n] += w * h[m] * h[n];
                    }
                }
            }
            for (m, row) in gram.iter().enumerate() {
                for (n, v) in row.iter().enumerate() {
                    let expect = if m == n { q_factorial(n, &q) * t.powi(n as i32) } else { 0.0 };
                    worst = worst.max((v - expect).abs());
                }
            }
        }
    }
    Ok((worst < 1e-8, format!("max |<H_m,H_n> - delta [n]! t^n| = {worst:.3e} (tol 1e-8)")))
}

fn rational_grid() -> (Vec<Rational>, Vec<Rational>) {
    (vec![rat(-1, 2), rat(0, 1), rat(3, 10), rat(7, 10)], vec![rat(1, 2), rat(1, 1), rat(2, 1)])
}

fn moment_equivalence() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for q in ONE_DIM_Q {
        for t in ONE_DIM_T {
            let quad = quadrature(&QMeasureParams::new(q, t)?, GRID_NODES)?.moments(12);
            for (n, m) in quad.iter().enumerate() {
                worst = worst.max((m - moment(n, &q, &t)?).abs());
            }
        }
    }
    let (qs, ts) = rational_grid();
    let mut exact = true;
    for q in &qs {
        for t in &ts {
            let four = (rat(2, 1) + q.clone()) * t * t;
            let six = (rat(5, 1) + rat(6, 1) * q + rat(3, 1) * q * q + q * q * q) * t * t * t;
            exact &= moment(4, q, t)? == four && moment(6, q, t)? == six;
        }
    }
    Ok((
        worst < 1e-8 && exact,
        format!("max quadrature vs pairing gap {worst:.3e} (tol 1e-8); closed forms n=4,6 exact: {exact}"),
    ))
}

fn random_mehler_tuple(rng: &mut ChaCha8Rng) -> (Complex64, f64, Complex64, f64) {
    let a = rng.random_range(0.05..0.8);
    let r = if rng.random_bool(0.5) { Complex64::new(a, 0.0) } else { Complex64::new(0.0, a) };
    let x = rng.random_range(-1.0..=1.0);
    let q = rng.random_range(-0.8..0.8);
    let dom = mehler_domain(r);
    let rho = 0.95 * rng.random::<f64>().sqrt();
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let y = Complex64::new(rho * dom.semi_major * phi.cos(), rho * dom.semi_minor * phi.sin());
    let y = if dom.major_axis_direction == crate::qfun::Axis::Real { y } else { Complex64::new(y.im, y.re) };
    (r, x, y, q)
}

fn mehler_identity() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d65686c6572);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (r, x, y, q) = random_mehler_tuple(&mut rng);
        let a = mehler(r, x, y, q)?;
        let b = mehler_series(r, x, y, q)?;
        worst = worst.max((a - b).norm());
    }
    let mut locus = 0.0f64;
    for r in [Complex64::new(0.45, 0.0), Complex64::new(0.0, 0.6), Complex64::new(-0.3, 0.0)] {
        for q in [-0.5f64, 0.3, 0.7] {
            for k in 0..4u32 {
                let rk = r * q.powi(k as i32);
                if rk.norm() == 0.0 {
                    continue;
                }
                for x in [-1.0, -0.6, 0.0, 0.25, 0.9] {
                    for y in mehler_zero_locus(r, x, q, k) {
                        locus = locus.max(mehler_leading_factor(rk, x, y).norm());
                    }
                }
            }
        }
    }
    Ok((
        worst < 1e-9 && locus < 1e-10,
        format!("product vs series over 100 tuples {worst:.3e} (tol 1e-9); root locus residual {locus:.3e} (tol 1e-10)"),
    ))
}

fn wick_consistency() -> Result<(bool, String)> {
    let fam = GaussianFamily::new(rat(3, 7), vec![vec![rat(3, 2), rat(-1, 3)], vec![rat(-1, 3), rat(1, 1)]])?;
    let mut words = 0;
    let mut agree = true;
    for w in NcPoly::<Rational>::all_words(&[0, 1], 7) {
        let letters = generator_letters(&w, 2);
        agree &= wick_closed(&letters, &fam)? == wick_recursive(&letters, &fam)?;
        words += 1;
    }
    let mut hermite_ok = true;
    for (q, s) in [(rat(3, 7), rat(3, 2)), (rat(-1, 2), rat(2, 1)), (rat(0, 1), rat(1, 1))] {
        let one = GaussianFamily::new(q.clone(), vec![vec![s.clone()]])?;
        for n in 0..=8 {
            let h = hermite(n, &q, &s).poly;
            let mut expect = NcPoly::zero();
            for (k, c) in h.coeffs().iter().enumerate() {
                expect = expect.add(&NcPoly::term(vec![0; k], c.clone()));
            }
            hermite_ok &= wick_word(&vec![0; n], &one)? == expect;
        }
    }
    Ok((
        agree && hermite_ok,
        format!("closed = recursive on {words} words: {agree}; g^<>n = H_n for n <= 8: {hermite_ok}"),
    ))
}

fn heat_kernel() -> Result<(bool, String)> {
    let c = |r: Rational| crat(r, rat(0, 1));
    let mut worst = 0.0f64;
    let mut checked = 0;
    let layout = EllipticLayout { k: 2 };
    for q in [rat(0, 1), rat(3, 10), rat(7, 10)] {
        for (s, t) in [(rat(1, 1), rat(1, 1)), (rat(1, 1), rat(3, 5)), (rat(2, 1), rat(1, 1))] {
            let (q, s, t) = (c(q.clone()), c(s), c(t));
            let fam = layout.family(&q, &s, &t)?;
            let mut checker = HeatKernelChecker::new(&fam, layout, q.clone(), s, t, 4)?;
            for w in NcPoly::<ComplexRational>::all_words(&[0, 1], 4) {
                worst = worst.max(checker.deviation(&NcPoly::word(w))?);
                checked += 1;
            }
        }
    }
    Ok((worst < 1e-10, format!("{checked} monomial checks, max coefficient deviation {worst:.3e} (tol 1e-10)")))
}

fn fock_spec() -> Result<MixedQSpec<Rational>> {
    MixedQSpec::new(vec![
        vec![rat(1, 3), rat(-1, 2), rat(2, 5), rat(0, 1)],
        vec![rat(-1, 2), rat(-1, 4), rat(1, 1), rat(3, 7)],
        vec![rat(2, 5), rat(1, 1), rat(5, 6), rat(-1, 1)],
        vec![rat(0, 1), rat(3, 7), rat(-1, 1), rat(1, 8)],
    ])
}

fn content(w: &[usize]) -> Vec<usize> {
    let mut c = w.to_vec();
    c.sort_unstable();
    c
}

fn fock_exactness() -> Result<(bool, String)> {
    const D: usize = 6;
    let spec = fock_spec()?;
    let alphabet = [0, 1, 2, 3];
    let words = NcPoly::<Rational>::all_words(&alphabet, D);
    let mut classes: BTreeMap<Vec<usize>, Vec<Vec<usize>>> = BTreeMap::new();
    for w in &words {
        classes.entry(content(w)).or_default().push(w.clone());
    }

    let mut commutation = true;
    let mut adjoint = true;
    for v in words.iter().filter(|v| v.len() < D) {
        let vec = NcPoly::word(v.clone());
        for i in alphabet {
            for j in alphabet {
                let lhs = annihilate(i, &create(j, &vec, D), &spec).sub(&create(j, &annihilate(i, &vec, &spec), D).scale(spec.get(i, j)));
                let rhs = if i == j { vec.clone() } else { NcPoly::zero() };
                commutation &= lhs == rhs;
            }
            let raised = create(i, &vec, D);
            let mut target = v.clone();
            target.push(i);
            for u in &classes[&content(&target)] {
                let u = NcPoly::word(u.clone());
                adjoint &= fock_inner_vec(&annihilate(i, &u, &spec), &vec, &spec)? == fock_inner_vec(&u, &raised, &spec)?;
            }
        }
    }

    let mut moments = true;
    let mut bridge = true;
    let q = rat(2, 5);
    let constant = MixedQSpec::constant(4, q.clone())?;
    let fam = GaussianFamily::identity(q, 4, rat(1, 1))?;
    for w in &words {
        moments &= mixed_moment(w, &spec)? == vacuum_expectation(w, &spec)?;
        bridge &= mixed_moment(w, &constant)? == moment_of_word(w, &fam)?;
    }
    Ok((
        commutation && adjoint && moments && bridge,
        format!(
            "{} words: commutation {commutation}, adjointness {adjoint}, moment = vacuum expectation {moments}, constant-Q bridge {bridge}",
            words.len()
        ),
    ))
}

fn sigma_diagnostics() -> Result<(bool, String)> {
    let c = rat(1, 1);
    let mut h1 = true;
    for n in 1..=64 {
        for kind in [FamilyKind::Binomial, FamilyKind::Layer] {
            let sigma = SigmaSpec { kind, c: c.clone(), d: 2 }.at(n)?;
            h1 &= check_hypotheses(&sigma)?.h1_exact == Some(true);
        }
    }
    let q256 = q_hat_binomial(&c, 2, 256).to_f64();
    let gap = (q256 - target_q(1.0, 2)).abs();
    Ok((h1 && gap < 0.01, format!("pair covariance law exact for N <= 64, both kinds: {h1}; |q_hat(256) - e^(-3/4)| = {gap:.3e} (tol 0.01)")))
}

/// The slack rule: each estimate may exceed its predecessor by at most 2 combined stderrs.
pub fn monotone_with_slack(records: &[NRecord]) -> bool {
    records.windows(2).all(|w| w[1].estimate <= w[0].estimate + 2.0 * w[0].stderr.hypot(w[1].stderr))
}

fn describe(records: &[NRecord]) -> String {
    records.iter().map(|r| format!("N={}: {:.4}±{:.4}", r.n_legs, r.estimate, r.stderr)).collect::<Vec<_>>().join(", ")
}

pub fn sigma_spec() -> SigmaSpec {
    SigmaSpec { kind: FamilyKind::Binomial, c: rat(1, 1), d: 2 }
}

const MC_SEED: u64 = 20_240_601;

pub fn theorem2_plan(profile: Profile) -> McPlan {
    match profile {
        Profile::Full => McPlan {
            n_list: vec![2, 4, 6, 8],
            samples: vec![500_000, 100_000, 20_000, 4_000],
            seed: MC_SEED,
            antithetic: true,
        },
        Profile::Quick => McPlan { n_list: vec![2, 4], samples: vec![50_000, 10_000], seed: MC_SEED, antithetic: true },
    }
}

pub fn run_theorem2(plan: &McPlan) -> Result<ExperimentResult> {
    theorem2_error(&Polynomial::monomial(3), &sigma_spec(), 1.0, 1.0, plan)
}

/// Full: halving from N=2 to N=8 plus the slack rule. Quick runs too few N to halve, so only the slack rule applies.
pub fn theorem2_verdict(r: &ExperimentResult, profile: Profile) -> (bool, String) {
    let recs = &r.records;
    let trend = monotone_with_slack(recs);
    let first = &recs[0];
    let last = &recs[recs.len() - 1];
    match profile {
        Profile::Full => {
            let halved = last.estimate < first.estimate / 2.0;
            (trend && halved, format!("{}; halved: {halved}; monotone within slack: {trend}", describe(recs)))
        }
        Profile::Quick => (trend, format!("{}; monotone within slack: {trend}", describe(recs))),
    }
}

pub fn theorem3_plan(profile: Profile) -> McPlan {
    match profile {
        Profile::Full => McPlan { n_list: vec![2, 4, 6], samples: vec![50_000, 20_000, 5_000], seed: MC_SEED, antithetic: true },
        Profile::Quick => McPlan { n_list: vec![2, 4], samples: vec![20_000, 5_000], seed: MC_SEED, antithetic: true },
    }
}

pub fn theorem3_polynomial() -> NcPoly<f64> {
    NcPoly::word(vec![0, 1, 0])
}

pub fn run_theorem3(plan: &McPlan) -> Result<ExperimentResult> {
    theorem3_error(&theorem3_polynomial(), &sigma_spec(), 1.0, 1.0, plan)
}

pub fn theorem3_verdict(r: &ExperimentResult) -> (bool, String) {
    let recs = &r.records;
    let trend = monotone_with_slack(recs);
    let down = recs[recs.len() - 1].estimate < recs[0].estimate;
    (trend && down, format!("{}; decreasing overall: {down}; monotone within slack: {trend}", describe(recs)))
}

pub const MIXING_N: [usize; 3] = [2, 4, 8];
pub const MIXING_DRAWS: usize = 5;

/// Mean mixed-Q error of `p` per n at q = 1/2, s = t = 1, diagonal q_ii = 1.
pub fn mixing_means(p: &Polynomial<Rational>, mode: EntryMode) -> Result<BTreeMap<usize, Rational>> {
    let one = rat(1, 1);
    let rows = mixing_experiment(p, 0.5, mode, one.clone(), &one, &one, &MIXING_N, MIXING_DRAWS, MC_SEED)?;
    Ok(mean_by_n(&rows))
}

fn mixed_limit() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for mode in [EntryMode::Pm1, EntryMode::ZeroOne] {
        let sq = mixing_means(&Polynomial::monomial(2), mode)?;
        let decreasing = sq[&8] < sq[&2];
        let trivial = [Polynomial::monomial(1), Polynomial::constant(rat(1, 1))]
            .iter()
            .map(|p| mixing_means(p, mode))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .all(|m| m.values().all(|v| *v == rat(0, 1)));
        let cube = mixing_means(&Polynomial::monomial(3), mode)?;
        pass &= decreasing && trivial;
        parts.push(format!(
            "{mode}: x^2 errors {} (error(8) < error(2): {decreasing}); x and 1 exactly 0: {trivial}; x^3 errors {}",
            fmt_means(&sq),
            fmt_means(&cube)
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn fmt_means(m: &BTreeMap<usize, Rational>) -> String {
    m.iter().map(|(n, v)| format!("n={n}: {:.4}", v.to_f64())).collect::<Vec<_>>().join(" ")
}

pub fn moment_plan(profile: Profile) -> McPlan {
    match profile {
        Profile::Full => McPlan { n_list: vec![2, 4, 8], samples: vec![100_000, 30_000, 10_000], seed: MC_SEED, antithetic: false },
        Profile::Quick => McPlan { n_list: vec![2, 4], samples: vec![20_000, 5_000], seed: MC_SEED, antithetic: false },
    }
}

fn gap_shrinks(r: &ExperimentResult) -> (bool, String) {
    let first = &r.records[0];
    let last = &r.records[r.records.len() - 1];
    let g0 = (first.estimate - r.reference).abs();
    let g1 = (last.estimate - r.reference).abs();
    (g1 < g0, format!("{} vs limit {:.4}: gap {g0:.4} -> {g1:.4}", describe(&r.records), r.reference))
}

fn moment_limits(profile: Profile) -> Result<(bool, String)> {
    let plan = moment_plan(profile);
    let sigma = sigma_spec();
    let quartic = moment_convergence(&NcPoly::word(vec![0; 4]), &sigma, &[vec![1.0]], &plan)?;
    let crossing = moment_convergence(&NcPoly::word(vec![0, 1, 0, 1]), &sigma, &[vec![1.0, 0.0], vec![0.0, 1.0]], &plan)?;
    let (a, da) = gap_shrinks(&quartic);
    let (b, db) = gap_shrinks(&crossing);
    Ok((a && b, format!("x^4: {da}; x1x2x1x2: {db}")))
}
