//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the summary is always
//! printed; the process fails if any criterion fails.

use cocycle_stability::base::{BaseSystem, MeasurableSet};
use cocycle_stability::cocycle::{CocycleHandle, Generator};
use cocycle_stability::datko::{check_discretization_bound, datko_integral, datko_sum, random_directions, DatkoOptions};
use cocycle_stability::experiment::{registry_list, run_experiment};
use cocycle_stability::fixtures;
use cocycle_stability::induced::{
    adapted_norm, build_induced_orbit, calibrate_certificate, exponent_transfer_check, induced_contraction_check,
    one_step_contraction_check, sample_in_set,
};
use cocycle_stability::linalg::{max_real_eigenvalue, spectral_norm, Matrix, Vector};
use cocycle_stability::lyapunov::{closed_form_exponent, estimate_exponent, estimate_exponent_flow};
use cocycle_stability::tempering::{build_tempered_envelope, drift_check};
use cocycle_stability::uniform::{decide_uniform_stability, fekete_upper_bounds, periodic_lower_bounds, Decision, Sampling, Witness};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(started: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let e = started.elapsed();
    ensure(e < limit, || format!("{what} took {e:?}, limit {limit:?}"))
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Constant `a = 0.5`: exact exponent and geometric p-sums.
fn scalar_forward() -> Check {
    let started = Instant::now();
    let h = fixtures::constant_scalar(0.5);
    let est = estimate_exponent(&h, 16, 4096, 1).map_err(err)?;
    ensure(est.value == 0.5f64.ln() && est.dispersion == 0.0, || {
        format!("exponent {} (dispersion {}), expected log 0.5 exactly", est.value, est.dispersion)
    })?;
    let opts = DatkoOptions::default();
    let x = Vector::from_vec(vec![1.0]);
    let mut worst: f64 = 0.0;
    for (i, q) in (0..8).map(|s| (s, h.base().sample_point(s))) {
        for p in [1.0, 2.0] {
            // Σ 0.5^{pn} = 1/(1 − 0.5^p)
            let oracle = (1.0 / (1.0 - 0.5f64.powf(p))).powf(1.0 / p);
            let r = datko_sum(&h, &q, &x, p, &opts).map_err(err)?;
            let e = (r.directions[0].value - oracle).abs();
            worst = worst.max(e);
            ensure(r.converged && e <= 1e-9, || format!("point {i}, p = {p}: sum {} vs {oracle}", r.directions[0].value))?;
        }
    }
    within(started, Duration::from_secs(1), "scalar forward")?;
    Ok(format!("exponent = log 0.5 exactly; max |S - closed form| = {worst:.1e}; {:?}", started.elapsed()))
}

/// p-sum of a diagonal cocycle along `q`, accumulated in plain `f64`.
fn diagonal_sum_oracle(h: &CocycleHandle, q: &cocycle_stability::base::BasePoint, x: &Vector) -> f64 {
    let mut v = x.clone();
    let mut point = q.clone();
    let mut sum = 0.0;
    for _ in 0..100_000 {
        let n = v.norm();
        sum += n;
        if n < 1e-18 * sum {
            break;
        }
        let a = h.one_step(&point).unwrap();
        for i in 0..v.len() {
            v[i] *= a[(i, i)];
        }
        point = h.base().step(&point).unwrap();
    }
    sum
}

/// Adapted norm, one-step and induced contraction on the diagonal fixture.
fn converse_machinery() -> Check {
    let started = Instant::now();
    let h = fixtures::diagonal_bernoulli();
    let system = h.base();
    let set = MeasurableSet::cylinder(system, &[0]).map_err(err)?;
    let opts = DatkoOptions::default();
    let p = 1.0;
    let cert = calibrate_certificate(&h, &set, p, 256, 8, 21, &opts).map_err(err)?;

    // sandwich |x| <= |x|_q <= K|x| at 10^3 sampled (q, x)
    let points = sample_in_set(system, &set, 100, 22).map_err(err)?;
    let dirs = random_directions(2, 10, 23);
    let mut sandwiches = 0;
    let mut oracle_err: f64 = 0.0;
    for q in &points {
        for x in &dirs {
            let a = adapted_norm(&h, q, x, p, &opts).map_err(err)?;
            let n = x.norm();
            ensure(a.value >= n * (1.0 - 1e-12) && a.value <= cert.k * n, || {
                format!("sandwich fails at {q}: |x| = {n}, |x|_q = {}, K = {}", a.value, cert.k)
            })?;
            let oracle = diagonal_sum_oracle(&h, q, x);
            oracle_err = oracle_err.max((a.value - oracle).abs() / oracle);
            sandwiches += 1;
        }
    }
    ensure(oracle_err < 1e-9, || format!("adapted norm differs from direct sum by {oracle_err:.2e}"))?;

    // one-step, n-step and operator-norm contraction along induced orbits
    let starts = sample_in_set(system, &set, 50, 24).map_err(err)?;
    let xs = random_directions(2, 50, 25);
    let (mut one_min, mut adapted_min, mut operator_min, mut returns) = (f64::INFINITY, f64::INFINITY, f64::INFINITY, 0);
    for (q, x) in starts.iter().zip(&xs) {
        let mut rec = build_induced_orbit(&h, q, &set, 30).map_err(err)?;
        let one = one_step_contraction_check(&h, q, rec.return_times[0], x, &cert, &opts).map_err(err)?;
        one_min = one_min.min(one);
        let check = induced_contraction_check(&h, &mut rec, &cert, x, 30, &opts).map_err(err)?;
        adapted_min = check.adapted_slacks.iter().copied().fold(adapted_min, f64::min);
        operator_min = check.operator_slacks.iter().copied().fold(operator_min, f64::min);
        // ‖𝒜̄(q,n)‖ ≤ Kγ^n recomputed from the stored products
        for n in 1..=rec.returns() {
            let lhs = rec.product(n).log_norm();
            let rhs = cert.k.ln() + n as f64 * cert.log_gamma();
            ensure(lhs <= rhs + 1e-9, || format!("operator bound fails at n = {n}: {lhs} > {rhs}"))?;
        }
        returns += rec.returns();
    }
    ensure(one_min >= -1e-9, || format!("one-step slack {one_min}"))?;
    ensure(adapted_min >= -1e-9, || format!("n-step slack {adapted_min}"))?;
    ensure(operator_min >= -1e-9, || format!("operator slack {operator_min}"))?;
    within(started, Duration::from_secs(30), "converse machinery")?;
    Ok(format!(
        "{sandwiches} sandwiches (K = {:.3}, gamma = {:.4}); min slacks one-step {one_min:.3e}, n-step {adapted_min:.3e}, operator {operator_min:.3e} over {returns} returns; {:?}",
        cert.k,
        cert.gamma,
        started.elapsed()
    ))
}

fn mean_return_ratio(h: &CocycleHandle, set: &MeasurableSet, orbits: usize, returns: usize, seed: u64) -> Result<Vec<f64>, String> {
    let starts = sample_in_set(h.base(), set, orbits, seed).map_err(err)?;
    starts
        .iter()
        .map(|q| build_induced_orbit(h, q, set, returns).map(|r| r.kac_ratio()).map_err(err))
        .collect()
}

/// Mean return time equals `1/μ(E)`.
fn kac() -> Check {
    let h = fixtures::constant_scalar(0.5);
    let set = MeasurableSet::cylinder(h.base(), &[0]).map_err(err)?;
    let ratios = mean_return_ratio(&h, &set, 100, 1000, 31)?;
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    // return times are geometric(½): variance (1 − μ)/μ² = 2 per return
    let sigma = (2.0 / (1000.0 * 100.0f64)).sqrt();
    ensure((mean - 2.0).abs() <= 3.0 * sigma, || format!("Bernoulli mean {mean}, sigma {sigma}"))?;

    let rot = BaseSystem::rotation(0.25).map_err(err)?;
    let hr = CocycleHandle::discrete(rot, Generator::scalar_identity(0.5, 1)).map_err(err)?;
    let iset = MeasurableSet::intervals(hr.base(), vec![(0.0, 0.25)]).map_err(err)?;
    let r = mean_return_ratio(&hr, &iset, 20, 1000, 32)?;
    let rmean = r.iter().sum::<f64>() / r.len() as f64;
    ensure((rmean - 4.0).abs() <= 1e-2, || format!("rotation mean {rmean}"))?;
    Ok(format!(
        "Bernoulli E=[0]: {mean:.4} (|dev| = {:.2} sigma); rotation 1/4, E=[0,1/4): {rmean}",
        (mean - 2.0).abs() / sigma
    ))
}

/// `λ̂ ≈ μ(E)·λ̂(𝒜̄)` at 10⁴ returns.
fn exponent_transfer() -> Check {
    let h = fixtures::diagonal_bernoulli();
    let set = MeasurableSet::cylinder(h.base(), &[0]).map_err(err)?;
    let est = estimate_exponent(&h, 32, 1 << 15, 41).map_err(err)?;
    let starts = sample_in_set(h.base(), &set, 8, 42).map_err(err)?;
    let records = starts
        .iter()
        .map(|q| build_induced_orbit(&h, q, &set, 10_000))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let t = exponent_transfer_check(&records, est.value, set.measure());
    ensure(t.residual <= 0.02, || format!("residual {}", t.residual))?;
    let exact = fixtures::diagonal_bernoulli_exponent();
    Ok(format!(
        "lambda = {:.5} (closed form {exact:.5}), mu(E) * induced = {:.5}, residual {:.2e}",
        est.value,
        t.measure * t.induced_exponent,
        t.residual
    ))
}

/// Both tempered inequalities at 10³ sampled `(q, n)` and the drift rate at `n = 2¹⁰`.
fn tempering() -> Check {
    let h = fixtures::diagonal_bernoulli();
    let est = estimate_exponent(&h, 32, 1 << 14, 51).map_err(err)?;
    let lambda = est.value;
    let eps = lambda.abs() / 2.0;
    let horizon = 512;
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let (mut decay_max, mut growth_max, mut drift_max) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0f64);
    let mut sampled = 0;
    for s in 0..4 {
        let q = h.base().sample_point(53 + s);
        let env = build_tempered_envelope(&h, &q, lambda, eps, horizon, 2048).map_err(err)?;
        for _ in 0..250 {
            let j = rng.random_range(0..=horizon as usize / 2);
            let n = rng.random_range(1..=horizon as usize / 2);
            let qj = h.base().step_n(&q, j as u64).map_err(err)?;
            // direct product, independent of the envelope scan
            let direct = h.evaluate_product(&qj, n as u64).map_err(err)?.log_norm();
            decay_max = decay_max.max(direct - env.log_t[j] - (lambda + eps) * n as f64);
            growth_max = growth_max.max(env.log_t[j + n] - env.log_t[j] - eps * n as f64);
            sampled += 1;
        }
        let drift = drift_check(&h, &q, lambda, eps, 1024, 2048).map_err(err)?;
        drift_max = drift_max.max(drift.final_rate.abs());
    }
    ensure(decay_max <= 1e-9, || format!("decay inequality exceeded by {decay_max} (log)"))?;
    ensure(growth_max <= 1e-9, || format!("tempering inequality exceeded by {growth_max} (log)"))?;
    ensure(drift_max <= 0.05, || format!("drift rate {drift_max}"))?;
    Ok(format!(
        "{sampled} pairs, eps = {eps:.4}: max log excess decay {decay_max:.3e}, growth {growth_max:.3e}; |(1/n) log C(f^n q)| at n=1024: {drift_max:.4}"
    ))
}

fn m2(r: [f64; 4]) -> Matrix {
    Matrix::from_row_slice(2, 2, &r)
}

/// Exact certificate on the contractive pair, checked against every word.
fn uniform_stability() -> Check {
    let started = Instant::now();
    let h = fixtures::contractive_pair();
    let cert = decide_uniform_stability(&h, 16, 8, Sampling::Exact).map_err(err)?;
    ensure(cert.decision == Decision::UniformlyStable, || format!("decision {:?}", cert.decision))?;
    let Some(Witness::Stable { n_star, d, lambda, .. }) = cert.witness else {
        return Err("missing stable witness".into());
    };
    let n_star = n_star as usize;
    ensure(n_star <= 16, || format!("n* = {n_star}"))?;
    // brute force over all words up to length max(2n*, 16)
    let mats = [m2([0.5, 0.4, 0.0, 0.5]), m2([0.5, 0.0, 0.4, 0.5])];
    let horizon = (2 * n_star).max(16);
    let mut layer = vec![Matrix::identity(2, 2)];
    let (mut checked, mut violations) = (0u64, 0u64);
    for n in 1..=horizon {
        layer = layer.iter().flat_map(|p| mats.iter().map(move |a| a * p)).collect();
        let bound = d * (-lambda * n as f64).exp();
        for p in &layer {
            checked += 1;
            violations += u64::from(spectral_norm(p) > bound * (1.0 + 1e-12));
        }
    }
    ensure(violations == 0, || format!("{violations} of {checked} products violate the bound"))?;
    let v = cert.verification.as_ref().ok_or("no built-in verification")?;
    ensure(v.violations == 0, || format!("built-in verification: {} violations", v.violations))?;

    let e = fixtures::expanding_pair();
    let ce = decide_uniform_stability(&e, 16, 8, Sampling::Exact).map_err(err)?;
    ensure(ce.decision == Decision::NotUniformlyStable, || format!("expanding decision {:?}", ce.decision))?;
    let Some(Witness::Unstable { orbit, rate, .. }) = ce.witness else {
        return Err("expanding fixture lacks a periodic witness".into());
    };
    // 2·Id on the fixed point 1^∞ grows at rate log 2
    ensure(rate >= 2f64.ln() - 1e-12, || format!("witness rate {rate}"))?;
    within(started, Duration::from_secs(60), "uniform stability")?;
    Ok(format!(
        "n* = {n_star}, D = {d:.4}, lambda = {lambda:.4}; 0 violations over {checked} words up to length {horizon}; expanding witness {orbit} at rate {rate:.4}; {:?}",
        started.elapsed()
    ))
}

/// `a_n` by enumerating admissible words, from one-step matrices at fixed points.
fn brute_force_growth(h: &CocycleHandle, n_max: usize) -> Vec<f64> {
    let base = h.base();
    let k = base.alphabet().unwrap() as u8;
    let live: Vec<u8> = (0..k).filter(|&a| base.allowed(a, a) || (0..k).any(|b| base.allowed(a, b))).collect();
    let mats: Vec<Matrix> = live
        .iter()
        .map(|&a| h.one_step(&base.point_from_word(&[a], 0).unwrap()).unwrap())
        .collect();
    let mut layer: Vec<(u8, Matrix)> = live.iter().zip(&mats).map(|(&a, m)| (a, m.clone())).collect();
    let mut out = Vec::new();
    for n in 1..=n_max {
        out.push(layer.iter().map(|(_, p)| spectral_norm(p).ln()).fold(f64::NEG_INFINITY, f64::max));
        if n == n_max {
            break;
        }
        layer = layer
            .iter()
            .flat_map(|(last, p)| {
                live.iter()
                    .zip(&mats)
                    .filter(|(b, _)| base.allowed(*last, **b))
                    .map(|(&b, a)| (b, a * p))
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    out
}

/// Periodic rates never exceed Fekete bounds; `a_n` is subadditive.
fn subadditivity() -> Check {
    let mut lines = Vec::new();
    let n_max = 12;
    for (name, h) in fixtures::shift_fixtures() {
        let n_list: Vec<usize> = (1..=n_max).collect();
        let upper = fekete_upper_bounds(&h, &n_list, Sampling::Exact).map_err(err)?;
        let lower = periodic_lower_bounds(&h, 8).map_err(err)?;
        let max_lower = lower.iter().map(|r| r.rate).fold(f64::NEG_INFINITY, f64::max);
        ensure(max_lower <= upper.min_rate + 1e-9, || {
            format!("{name}: periodic rate {max_lower} > Fekete bound {}", upper.min_rate)
        })?;
        let a: Vec<f64> = upper.entries.iter().map(|e| e.a_n).collect();
        let mut pairs = 0;
        for n in 1..=n_max {
            for m in 1..=n_max - n {
                pairs += 1;
                ensure(a[n + m - 1] <= a[n - 1] + a[m - 1] + 1e-9, || {
                    format!("{name}: a_{} = {} > a_{n} + a_{m}", n + m, a[n + m - 1])
                })?;
            }
        }
        let oracle = brute_force_growth(&h, 8);
        let dev = oracle.iter().zip(&a).map(|(o, v)| (o - v).abs()).fold(0.0, f64::max);
        ensure(dev <= 1e-9, || format!("{name}: a_n differs from enumeration by {dev}"))?;
        lines.push(format!("{name} ({pairs} pairs, max periodic {max_lower:.4} <= {:.4})", upper.min_rate));
    }
    Ok(lines.join("; "))
}

/// Continuous time: exact decay, discretization slack and time-one agreement.
fn continuous_time() -> Check {
    let decay = fixtures::flow_decay();
    let est = estimate_exponent_flow(&decay, 4, 64.0, 61).map_err(err)?;
    ensure((est.value + 1.0).abs() <= 1e-8, || format!("exponent {}", est.value))?;
    let q = decay.base().sample_point(62);
    let x = Vector::from_vec(vec![1.0]);
    let opts = DatkoOptions {
        tolerance: 1e-12,
        n_max: 4096,
    };
    // ∫_0^∞ e^{−t} dt = 1
    let integral = datko_integral(&decay, &q, &x, 1.0, &opts).map_err(err)?.directions[0].value;
    ensure((integral - 1.0).abs() <= 1e-8, || format!("p-integral {integral}"))?;

    let mut min_slack = f64::INFINITY;
    for (name, h) in fixtures::continuous_fixtures() {
        let bound = h.fit_exponential_bound(32, 8.0, 63).map_err(err)?;
        let xs = random_directions(h.dim(), 20, 64);
        for (i, x) in xs.iter().enumerate() {
            let q = h.base().sample_point(65 + i as u64);
            let c = check_discretization_bound(&h, &q, x, 1.0, &bound, &opts).map_err(|e| format!("{name}: {e}"))?;
            ensure(c.slack >= 0.0, || format!("{name}: slack {} at point {i}", c.slack))?;
            min_slack = min_slack.min(c.slack / c.scale);
        }
    }

    let mut time_one_dev: f64 = 0.0;
    for h in [fixtures::flow_decay(), fixtures::flow_random_stable(3)] {
        let est = estimate_exponent_flow(&h, 4, 256.0, 66).map_err(err)?;
        let restricted = h.time_one_restriction().map_err(err)?;
        let discrete = estimate_exponent(&restricted, 4, 256, 66).map_err(err)?;
        let dev = (discrete.value - est.value).abs();
        time_one_dev = time_one_dev.max(dev);
        ensure(dev <= 1e-6, || format!("time-one exponent {} vs {}", discrete.value, est.value))?;
        let oracle = max_real_eigenvalue(&h.generator().constant_value().expect("constant field"));
        let closed = closed_form_exponent(&h).map_err(err)?.value;
        ensure((closed - oracle).abs() <= 1e-12, || format!("closed form {closed} vs abscissa {oracle}"))?;
    }
    Ok(format!(
        "exponent {:.10}, integral {integral:.10}; min relative discretization slack {min_slack:.3e} over 20 points x {} fixtures; time-one deviation {time_one_dev:.1e}",
        est.value,
        fixtures::continuous_fixtures().len()
    ))
}

fn digest_run(config: &cocycle_stability::experiment::ExperimentConfig, threads: usize, dir: &std::path::Path) -> Result<Vec<String>, String> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(err)?;
    let record = pool.install(|| run_experiment(config, dir)).map_err(err)?;
    Ok(record.outputs.iter().map(|o| o.sha256.clone()).collect())
}

/// Every template twice with one seed, on 1 and 4 worker threads.
fn determinism() -> Check {
    let root = tempfile::tempdir().map_err(err)?;
    let mut files = 0;
    for t in registry_list() {
        let config = t.config().map_err(err)?.smoke();
        let a = digest_run(&config, 1, &root.path().join(t.name).join("a"))?;
        let b = digest_run(&config, 4, &root.path().join(t.name).join("b"))?;
        ensure(a == b, || format!("{}: outputs differ between runs", t.name))?;
        for name in std::fs::read_dir(root.path().join(t.name).join("a")).map_err(err)? {
            let name = name.map_err(err)?.file_name();
            let x = std::fs::read(root.path().join(t.name).join("a").join(&name)).map_err(err)?;
            let y = std::fs::read(root.path().join(t.name).join("b").join(&name)).map_err(err)?;
            ensure(x == y, || format!("{}: {:?} differs", t.name, name))?;
            files += 1;
        }
    }
    Ok(format!("{} templates, {files} files byte-identical on 1 and 4 threads", registry_list().len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("scalar forward direction", scalar_forward),
        ("converse direction machinery", converse_machinery),
        ("Kac ratio", kac),
        ("exponent transfer", exponent_transfer),
        ("tempering", tempering),
        ("uniform stability", uniform_stability),
        ("subadditivity ordering", subadditivity),
        ("continuous time", continuous_time),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
