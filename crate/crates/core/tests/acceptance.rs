//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.
//!
//! Run alone with `cargo test -p mfce-core --test acceptance -- --nocapture`.

use std::time::Instant;

use mfce::engines::{
    run_multifidelity_ce_observed, run_preconditioned_ce, run_standard_ce, CeConfig, CeOutcome,
    UpdateEvent, UpdateKind,
};
use mfce::estimators::{empirical_scv, is_estimate, mean_and_standard_error, theoretical_scv};
use mfce::experiment::{
    build_pod, run_built, run_experiment, runs_csv, BuiltProblem, ExperimentConfig, ProblemConfig,
};
use mfce::families::{
    CategoricalFamily, CategoricalParams, GaussianFamily, GaussianParams, ProposalFamily,
};
use mfce::hierarchy::{LevelSubset, ScoreHierarchy};
use mfce::models::pde::{norm2, sup_norm_score, BoundProvider, PodHierarchy};
use mfce::models::{LinearGaussianProblem, BENCHMARK_FLOOR};
use mfce::quantile::empirical_quantile;
use mfce::rng::derive_substream;

const PDE_STANDARD: &str = include_str!("../../../configs/pde_standard.json");
const PDE_MULTIFIDELITY: &str = include_str!("../../../configs/pde_multifidelity.json");

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Iteration counts `(J, Ĵ_max)` of every successful run, for criterion 4.
#[derive(Default)]
struct Bounds {
    analytic: Vec<(usize, usize)>,
    pde: Vec<(usize, usize)>,
}

fn jj<P>(out: &CeOutcome<P>) -> (usize, usize) {
    (out.trace.iterations(), out.trace.jmax())
}

fn analytic_config(m: usize, seed: u64) -> CeConfig {
    CeConfig {
        m,
        gamma_star: 4.0,
        floor: BENCHMARK_FLOOR,
        seed,
        ..CeConfig::default()
    }
}

/// Counts points of the exact intermediate (or target) event that the
/// engine's membership test dropped.
fn nesting_violations(
    e: &UpdateEvent<'_>,
    gamma_star: f64,
    exact: impl Fn(&[f64]) -> f64 + Sync,
) -> usize {
    use rayon::prelude::*;
    let phi: Vec<f64> = e.points.par_iter().map(|x| exact(x)).collect();
    let threshold = match e.kind {
        UpdateKind::Intermediate => empirical_quantile(&phi, e.rho).min(gamma_star),
        UpdateKind::Final => gamma_star,
    };
    phi.iter()
        .zip(e.members)
        .filter(|(&s, &keep)| s >= threshold && !keep)
        .count()
}

/// Criteria 1 and 2, plus the multifidelity nesting counts for criterion 7.
fn analytic_accuracy(bounds: &mut Bounds, nesting: &mut (usize, usize)) -> (Verdict, Verdict) {
    let pb = LinearGaussianProblem::benchmark();
    let exact = pb.exact_probability();
    let fam = GaussianFamily {
        floor: BENCHMARK_FLOOR,
    };
    let hf = LevelSubset::high_fidelity_only(&pb);
    let start = Instant::now();
    let (mut st, mut pc, mut mf) = (vec![], vec![], vec![]);
    for seed in 0..20 {
        let cfg = analytic_config(2000, 1000 + seed);
        let s = run_standard_ce(&cfg, &fam, &hf, &pb.mu).unwrap();
        let p = run_preconditioned_ce(&cfg, &fam, &pb, &pb.mu).unwrap();
        let mut v = 0;
        let mut obs =
            |e: &UpdateEvent<'_>| v += nesting_violations(e, pb.gamma_star, |x| pb.score(x));
        let m = run_multifidelity_ce_observed(&cfg, &fam, &pb, &pb.mu, &mut obs).unwrap();
        nesting.0 += 1;
        nesting.1 += v;
        for out in [&s, &p, &m] {
            bounds.analytic.push(jj(out));
        }
        st.push(s.p_hat);
        pc.push(p.p_hat);
        mf.push(m.p_hat);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let mut pass = elapsed < 60.0;
    let mut detail = format!("p_A = {exact:.5e};");
    for (name, xs) in [
        ("standard", &st),
        ("preconditioned", &pc),
        ("multifidelity", &mf),
    ] {
        let (mean, se) = mean_and_standard_error(xs);
        let z = (mean - exact) / se;
        pass &= z.abs() <= 3.0;
        detail += &format!(" {name} {mean:.4e} ({z:+.2} SE);");
    }
    detail += &format!(" {elapsed:.1} s");
    let scv = empirical_scv(&mf, exact);
    let naive = 1.0 / (2000.0 * exact);
    let worst = mf.iter().fold(0.0f64, |a, &p| a.max(p / exact));
    let c2 = verdict(
        scv <= 0.16,
        format!(
            "multifidelity SCV {scv:.4} vs naive MC {naive:.2} ({:.1}x lower); largest run {worst:.1} p_A",
            naive / scv
        ),
    );
    (verdict(pass, detail), c2)
}

/// Criterion 3 on a 12-point categorical law.
fn zero_variance() -> Verdict {
    let start = Instant::now();
    // Index 11 is the target event A; 9 and 10 extend it to the relaxed set,
    // 7 and 8 to the next surrogate's relaxed set.
    let mut probs = vec![0.9 / 7.0; 7];
    probs.extend([0.025, 0.025, 0.02, 0.02, 0.01]);
    let mu = CategoricalParams::on_indices(probs.clone()).unwrap();
    let fam = CategoricalFamily::new(mu.support.clone());
    let p_a = mu.probability_of(|i| i == 11);
    let in_a = |x: &[f64]| x[0] == 11.0;
    let restricted = |set: &dyn Fn(usize) -> bool| {
        let mass = mu.probability_of(set);
        let p: Vec<f64> = (0..12)
            .map(|i| if set(i) { probs[i] / mass } else { 0.0 })
            .collect();
        CategoricalParams::on_indices(p).unwrap()
    };
    let nu_a = restricted(&|i| i == 11);
    let nu_k = restricted(&|i| i >= 7);

    let mut worst = 0.0f64;
    for r in 0..1000 {
        let pts = fam
            .sample(&nu_a, &mut derive_substream(r, &[0]), 100)
            .unwrap();
        let p = is_estimate(&fam, &mu, &nu_a, &pts, in_a).unwrap();
        worst = worst.max(((p - p_a) / p_a).abs());
    }

    let m = 100;
    let reps = 100_000u64;
    let estimates: Vec<f64> = {
        use rayon::prelude::*;
        (0..reps)
            .into_par_iter()
            .map(|r| {
                let pts = fam
                    .sample(&nu_k, &mut derive_substream(r, &[1]), m)
                    .unwrap();
                is_estimate(&fam, &mu, &nu_k, &pts, in_a).unwrap()
            })
            .collect()
    };
    let scv = empirical_scv(&estimates, p_a);
    let theory = theoretical_scv(m, p_a, 0.04, 0.05);
    let rel = (scv - theory).abs() / theory;
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-12 && rel <= 0.2 && elapsed < 120.0,
        format!(
            "nu*_A max rel. error {worst:.1e}; SCV {scv:.5} vs theory {theory:.5} ({:.1}% off); {elapsed:.1} s",
            100.0 * rel
        ),
    )
}

fn pde_configs() -> (ExperimentConfig, ExperimentConfig) {
    (
        ExperimentConfig::from_json(PDE_STANDARD).unwrap(),
        ExperimentConfig::from_json(PDE_MULTIFIDELITY).unwrap(),
    )
}

fn pde_hierarchy(cfg: &ExperimentConfig) -> PodHierarchy {
    let ProblemConfig::Pde(c) = &cfg.problem else {
        unreachable!()
    };
    assert_eq!(c.bound, BoundProvider::Coercive);
    build_pod(c, &cfg.reduced_levels()).unwrap()
}

fn pde_mu(cfg: &ExperimentConfig) -> GaussianParams {
    let ProblemConfig::Pde(c) = &cfg.problem else {
        unreachable!()
    };
    GaussianParams::isotropic(c.mean(), c.variance)
}

/// Criterion 5 on both benchmarks.
fn structural_reductions(pod: &PodHierarchy, mu: &GaussianParams, bounds: &mut Bounds) -> Verdict {
    let mut mismatches = 0;
    let mut runs = 0;
    let pb = LinearGaussianProblem::benchmark();
    let hf = LevelSubset::high_fidelity_only(&pb);
    let fam = GaussianFamily {
        floor: BENCHMARK_FLOOR,
    };
    for seed in 0..3 {
        let cfg = analytic_config(1000, 2000 + seed);
        let s = run_standard_ce(&cfg, &fam, &hf, &pb.mu).unwrap();
        let p = run_preconditioned_ce(&cfg, &fam, &hf, &pb.mu).unwrap();
        let m = mfce::engines::run_multifidelity_ce(&cfg, &fam, &hf, &pb.mu).unwrap();
        for out in [&s, &p, &m] {
            bounds.analytic.push(jj(out));
        }
        mismatches += usize::from(s.trace != p.trace || s.p_hat.to_bits() != p.p_hat.to_bits());
        mismatches += usize::from(s.trace != m.trace || s.p_hat.to_bits() != m.p_hat.to_bits());
        runs += 1;
    }
    let hf = LevelSubset::high_fidelity_only(pod);
    let fam = GaussianFamily::default();
    for seed in 0..2 {
        let cfg = CeConfig {
            m: 1000,
            gamma_star: 0.95,
            seed: 3000 + seed,
            ..CeConfig::default()
        };
        let s = run_standard_ce(&cfg, &fam, &hf, mu).unwrap();
        let p = run_preconditioned_ce(&cfg, &fam, &hf, mu).unwrap();
        let m = mfce::engines::run_multifidelity_ce(&cfg, &fam, &hf, mu).unwrap();
        for out in [&s, &p, &m] {
            bounds.pde.push(jj(out));
        }
        mismatches += usize::from(s.trace != p.trace || s.p_hat.to_bits() != p.p_hat.to_bits());
        mismatches += usize::from(s.trace != m.trace || s.p_hat.to_bits() != m.p_hat.to_bits());
        runs += 1;
    }
    verdict(
        mismatches == 0,
        format!("{runs} seeds x 2 reductions, {mismatches} differing traces"),
    )
}

/// Criterion 6: residual bounds against exact errors, and the score chain.
fn certified_bounds(pod: &PodHierarchy, mu: &GaussianParams) -> Verdict {
    use rayon::prelude::*;
    let mut stream = derive_substream(4242, &[0]);
    let factored = mu.factor().unwrap();
    let xs: Vec<Vec<f64>> = (0..200)
        .map(|_| factored.sample(&mut stream).coords().to_vec())
        .collect();
    let levels = pod.dims().len();
    let checks: Vec<(usize, usize, f64)> = xs
        .par_iter()
        .map(|x| {
            let hf = pod.solve_high_fidelity(x).unwrap();
            let phi = sup_norm_score(&hf);
            let (mut bound_viol, mut chain_viol, mut ratio) = (0, 0, f64::INFINITY);
            for k in 0..levels {
                let rb = pod.rb_solve(x, k).unwrap();
                let eps = pod.error_bound(x, k, BoundProvider::Residual).unwrap();
                let diff: Vec<f64> = hf.iter().zip(&rb.field).map(|(a, b)| a - b).collect();
                let err = norm2(&diff);
                bound_viol += usize::from(err > eps);
                chain_viol += usize::from((phi - sup_norm_score(&rb.field)).abs() > eps);
                ratio = ratio.min(eps / err);
            }
            (bound_viol, chain_viol, ratio)
        })
        .collect();
    let bound_viol: usize = checks.iter().map(|c| c.0).sum();
    let chain_viol: usize = checks.iter().map(|c| c.1).sum();
    let ratio = checks.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    verdict(
        bound_viol == 0 && chain_viol == 0,
        format!(
            "200 points x {levels} levels: {bound_viol} bound and {chain_viol} chain violations; min bound/error {ratio:.2}"
        ),
    )
}

/// Criterion 7 on PDE runs, added to the analytic counts.
fn pde_nesting(pod: &PodHierarchy, mu: &GaussianParams, nesting: &mut (usize, usize)) {
    let fam = GaussianFamily::default();
    for seed in 0..2 {
        let cfg = CeConfig {
            m: 2000,
            gamma_star: 0.95,
            alpha_substitution: true,
            seed: 5000 + seed,
            ..CeConfig::default()
        };
        let mut v = 0;
        let mut obs = |e: &UpdateEvent<'_>| {
            v += nesting_violations(e, cfg.gamma_star, |x| pod.high_fidelity(x))
        };
        run_multifidelity_ce_observed(&cfg, &fam, pod, mu, &mut obs).unwrap();
        nesting.0 += 1;
        nesting.1 += v;
    }
}

/// Criterion 8 from the shipped PDE benchmark configurations.
fn efficiency(
    std_cfg: &ExperimentConfig,
    mf_cfg: &ExperimentConfig,
    pod: PodHierarchy,
    bounds: &mut Bounds,
) -> Verdict {
    let st = run_experiment(std_cfg).unwrap();
    let built = BuiltProblem::Pde {
        hierarchy: pod,
        mu: pde_mu(mf_cfg),
    };
    let mf = run_built(mf_cfg, &built).unwrap();
    assert!(st.succeeded() && mf.succeeded());
    for r in st.report.runs.iter().chain(&mf.report.runs) {
        bounds.pde.push((r.iterations, r.jmax));
    }
    let hf = |r: &mfce::experiment::ExperimentReport| {
        r.report.runs.iter().map(|x| x.hf_evals).sum::<u64>()
    };
    let wall = |r: &mfce::experiment::ExperimentReport| {
        r.report
            .runs
            .iter()
            .map(|x| x.wall_clock_s.total)
            .sum::<f64>()
    };
    let (hf_st, hf_mf) = (hf(&st), hf(&mf));
    let (t_st, t_mf) = (wall(&st), wall(&mf));
    let ci = |r: &mfce::experiment::ExperimentReport| {
        let e = &r.report;
        (
            e.p_hat - 1.96 * e.p_hat_standard_error,
            e.p_hat + 1.96 * e.p_hat_standard_error,
        )
    };
    let (a, b) = (ci(&st), ci(&mf));
    let overlap = a.0 <= b.1 && b.0 <= a.1;

    let csv = runs_csv(&mf.report).unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    let surrogate_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("iters_d"))
        .map(|(i, _)| i)
        .collect();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    let idle: Vec<&str> = surrogate_cols
        .iter()
        .filter(|&&c| rows.iter().any(|r| &r[c] == "0"))
        .map(|&c| &header[c][6..])
        .collect();

    let ratio = hf_st as f64 / hf_mf as f64;
    verdict(
        ratio >= 2.0 && t_mf <= t_st && overlap && !idle.is_empty(),
        format!(
            "hf evals {hf_st} vs {hf_mf} ({ratio:.2}x); wall {t_st:.1} s vs {t_mf:.1} s; p_hat {:.3e} ± {:.1e} vs {:.3e} ± {:.1e}; idle levels {idle:?}",
            st.report.p_hat, st.report.p_hat_standard_error, mf.report.p_hat, mf.report.p_hat_standard_error
        ),
    )
}

/// Criterion 9: high-fidelity-rescored quantile nesting of multifidelity
/// runs on the analytic benchmark, as a function of `m`.
fn consistency_in_m(bounds: &mut Bounds, nesting: &mut (usize, usize)) -> Verdict {
    let pb = LinearGaussianProblem::benchmark();
    let fam = GaussianFamily {
        floor: BENCHMARK_FLOOR,
    };
    let mut rates = vec![];
    for m in [500, 1000, 4000] {
        let mut violated = 0;
        for seed in 0..100 {
            let cfg = analytic_config(m, 7000 + seed);
            let mut gammas = vec![];
            let mut v = 0;
            let mut obs = |e: &UpdateEvent<'_>| {
                v += nesting_violations(e, pb.gamma_star, |x| pb.score(x));
                let phi: Vec<f64> = e.points.iter().map(|x| pb.score(x)).collect();
                // Intermediate events carry batches 0..J−2, the final one batch J−1.
                gammas.push(empirical_quantile(&phi, e.rho));
            };
            let out = run_multifidelity_ce_observed(&cfg, &fam, &pb, &pb.mu, &mut obs).unwrap();
            bounds.analytic.push(jj(&out));
            nesting.0 += 1;
            nesting.1 += v;
            let ok = gammas
                .windows(2)
                .all(|w| w[1] >= pb.gamma_star.min(w[0] + cfg.delta));
            violated += usize::from(!ok);
        }
        rates.push(violated as f64 / 100.0);
    }
    let monotone = rates.windows(2).all(|w| w[1] <= w[0]);
    verdict(
        rates[2] <= 0.05 && monotone,
        format!("violation rate at m = 500, 1000, 4000: {rates:?}"),
    )
}

#[test]
fn acceptance() {
    let mut bounds = Bounds::default();
    let mut nesting = (0, 0);
    let mut results: Vec<(u32, Verdict)> = vec![];

    let (c1, c2) = analytic_accuracy(&mut bounds, &mut nesting);
    results.push((1, c1));
    results.push((2, c2));
    results.push((3, zero_variance()));

    let (std_cfg, mf_cfg) = pde_configs();
    let pod = pde_hierarchy(&mf_cfg);
    let mu = pde_mu(&mf_cfg);
    let c5 = structural_reductions(&pod, &mu, &mut bounds);
    let c6 = certified_bounds(&pod, &mu);
    pde_nesting(&pod, &mu, &mut nesting);
    let c9 = consistency_in_m(&mut bounds, &mut nesting);
    let c8 = efficiency(&std_cfg, &mf_cfg, pod, &mut bounds);

    let over = |v: &[(usize, usize)]| v.iter().filter(|(j, jmax)| j > jmax).count();
    let total = bounds.analytic.len() + bounds.pde.len();
    let violations = over(&bounds.analytic) + over(&bounds.pde);
    let c4 = verdict(
        total >= 100 && !bounds.pde.is_empty() && violations == 0,
        format!(
            "{} analytic + {} PDE runs, {violations} with J > Jmax",
            bounds.analytic.len(),
            bounds.pde.len()
        ),
    );
    let c7 = verdict(
        nesting.1 == 0,
        format!(
            "{} multifidelity runs, {} exact-event points rejected by the relaxed test",
            nesting.0, nesting.1
        ),
    );
    results.push((4, c4));
    results.push((5, c5));
    results.push((6, c6));
    results.push((7, c7));
    results.push((8, c8));
    results.push((9, c9));
    results.sort_by_key(|r| r.0);

    for (n, v) in &results {
        println!(
            "criterion {n}: {}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    let failed: Vec<u32> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
