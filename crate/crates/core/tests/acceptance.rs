//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fail.

use std::error::Error;
use std::time::{Duration, Instant};

use memsep::model::{flux_constant_pressure, FeedSpec, PoreProfile, ShapeFunction};
use memsep::multistage::{run_protocol, sweep_stage_ratios, StagePlan, StageSpec};
use memsep::optim::{
    evaluate_slow, multistart, Fidelity, Method, OptimizationResult, ProblemSpec, RemovalBound,
    SearchConfig,
};
use memsep::sim::{
    compute_metrics, min_lambda_for_removal, purity_from_removal, run, run_constant_flux,
    run_constant_pressure, SimConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Box<dyn Error>>;

const SEED: u64 = 2024;

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

fn survey() -> Option<Fidelity> {
    Some(Fidelity { n_x: 50, dt: 1e-2 })
}

fn slow_search(n_starts: usize, seed: u64) -> SearchConfig {
    let mut s = SearchConfig::linear(n_starts, seed);
    s.survey = survey();
    s
}

fn optimize(
    problem: &ProblemSpec,
    search: &SearchConfig,
) -> Result<OptimizationResult, Box<dyn Error>> {
    let r = multistart(problem, search)?;
    if !r.feasible {
        return Err(format!("no feasible optimum for {:?}", problem.kind).into());
    }
    Ok(r)
}

fn transport_oracle() -> Outcome {
    let clock = Instant::now();
    let feed = FeedSpec::two_species(0.5, 0.1, 1.0)?;
    let mut worst = 0.0f64;
    for (d0, d1) in [(1.0, -0.6), (0.6, 0.3), (0.8, 0.0)] {
        let shape = ShapeFunction::linear(d0, d1);
        let area = d0 + d1 / 2.0;
        for cfg in [SimConfig::constant_pressure(), SimConfig::constant_flux(10)] {
            let r = run(&shape, &feed, &cfg)?;
            let u = r.u[0];
            for (s, c) in feed.species().iter().zip(&r.c_ins) {
                let oracle = s.xi * (-s.lambda * std::f64::consts::FRAC_PI_4 / u * area).exp();
                worst = worst.max((c[0] - oracle).abs() / oracle);
            }
        }
    }
    let elapsed = clock.elapsed();
    Ok((
        worst <= 1e-6 && elapsed < Duration::from_secs(1),
        format!("max rel error {worst:.2e}, {:.3} s", elapsed.as_secs_f64()),
    ))
}

fn flux_oracle() -> Outcome {
    let shape = ShapeFunction::linear(1.0, -0.6);
    let exact = 1.0 / 8.125;
    let flux = |n| flux_constant_pressure(&PoreProfile::from_shape(&shape, n)?);
    let fine = flux(6400)?;
    let errors: Vec<f64> = [100, 200, 400, 800]
        .iter()
        .map(|&n| flux(n).map(|u| (u - exact).abs()))
        .collect::<Result<_, _>>()?;
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let pass = (fine - 0.123077).abs() <= 1e-6
        && (fine - exact).abs() <= 1e-6
        && ratios.iter().all(|r| (r - 4.0).abs() <= 0.5);
    Ok((
        pass,
        format!("u = {fine:.7} on 6400 cells, error ratios {ratios:.3?}"),
    ))
}

fn removal_bound() -> Outcome {
    let open = ShapeFunction::linear(1.0, 0.0);
    let cfg = SimConfig::constant_flux(1);
    let base = run_constant_flux(&open, &FeedSpec::two_species(0.5, 0.1, 1.0)?, &cfg)?;
    let r1 = base.removal[0][0];
    let lambda = min_lambda_for_removal(0.9)?;
    let check = run_constant_flux(&open, &FeedSpec::two_species(0.5, 0.1, lambda)?, &cfg)?;
    let r90 = check.removal[0][0];
    Ok((
        (r1 - 0.54406).abs() <= 1e-4
            && (lambda - 2.9316).abs() <= 1e-3
            && (r90 - 0.9).abs() <= 1e-9,
        format!(
            "R1(0) = {r1:.5}, lambda(90%) = {lambda:.4}, simulated R1(0) at that lambda = {r90:.6}"
        ),
    ))
}

fn purity_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let xi = rng.random_range(0.05..0.95);
        let beta = rng.random_range(0.01..1.0);
        let d0 = rng.random_range(0.5..=1.0);
        let end = rng.random_range(0.3..=1.0);
        let feed = FeedSpec::two_species(xi, beta, 1.0)?;
        let r = run_constant_pressure(
            &ShapeFunction::linear(d0, end - d0),
            &feed,
            &SimConfig::constant_pressure(),
        )?;
        let m = compute_metrics(&r, &feed.inlet())?;
        let k2 = purity_from_removal(xi, m.cum_removal[0], m.cum_removal[1]);
        worst = worst.max((k2 - m.purity[1]).abs());
    }
    Ok((
        worst <= 1e-12,
        format!("100 runs, max |k2 difference| {worst:.2e}"),
    ))
}

fn optimum_recovery() -> Outcome {
    let feed = FeedSpec::two_species(0.5, 0.1, 1.0)?;
    let problem = ProblemSpec::weighted_throughput(1.0, 0.0, feed);
    let in_box = |r: &OptimizationResult| {
        let d = &r.best.coefficients;
        let r0 = r.evaluation.feasibility.initial_removal[0];
        (-0.65..=-0.55).contains(&d[1])
            && (0.95..=1.0).contains(&d[0])
            && (0.99..=0.995).contains(&r0)
    };
    let describe = |r: &OptimizationResult| {
        format!(
            "d = ({:.4}, {:.4}), R1(0) = {:.4}, {:.1} s",
            r.best.coefficients[0],
            r.best.coefficients[1],
            r.evaluation.feasibility.initial_removal[0],
            r.elapsed.as_secs_f64()
        )
    };
    let fast_problem = problem.clone().with_method(Method::Fast);
    let fast = optimize(&fast_problem, &SearchConfig::linear(1_000, SEED))?;
    let slow = optimize(&problem, &slow_search(10_000, SEED))?;
    let other = optimize(&fast_problem, &SearchConfig::linear(10_000, SEED + 1))?;
    let again = optimize(&fast_problem, &SearchConfig::linear(10_000, SEED + 2))?;
    let stable = other
        .best
        .coefficients
        .iter()
        .zip(&again.best.coefficients)
        .all(|(a, b)| (a - b).abs() <= 0.01);
    let pass = in_box(&fast)
        && in_box(&slow)
        && stable
        && fast.elapsed <= Duration::from_secs(300)
        && slow.elapsed <= Duration::from_secs(3600);
    Ok((
        pass,
        format!(
            "fast 1000: {}; slow 10000: {}; seeds agree within 0.01: {stable}",
            describe(&fast),
            describe(&slow)
        ),
    ))
}

fn fast_dominance() -> Outcome {
    const STARTS: usize = 300;
    let mut cases: Vec<(String, ProblemSpec)> = Vec::new();
    for (w1, w2) in [(1.0, 0.0), (0.5, 0.5), (0.0, 1.0)] {
        let feed = FeedSpec::two_species(0.5, 0.1, 1.0)?;
        cases.push((
            format!("P1 w=({w1},{w2})"),
            ProblemSpec::weighted_throughput(w1, w2, feed),
        ));
    }
    let mut feeds = vec![(0.1, 0.1), (0.5, 0.1), (0.9, 0.1)];
    feeds.extend([(0.5, 0.5), (0.5, 0.7), (0.5, 0.9)]);
    for (xi, beta) in feeds {
        let feed = FeedSpec::two_species(xi, beta, 1.0)?;
        cases.push((
            format!("P2 xi={xi} beta={beta}"),
            ProblemSpec::product_yield(feed),
        ));
    }
    let mut failures = Vec::new();
    let mut worst = f64::INFINITY;
    for (name, problem) in &cases {
        let slow = optimize(problem, &slow_search(STARTS, SEED))?;
        let fast = optimize(
            &problem.clone().with_method(Method::Fast),
            &SearchConfig::linear(STARTS, SEED),
        )?;
        let at_fast = evaluate_slow(&fast.best_shape(), problem)?;
        let margin =
            (at_fast.objective - slow.evaluation.objective) / slow.evaluation.objective.abs();
        worst = worst.min(margin);
        if !(at_fast.feasibility.is_feasible() && margin >= -0.01) {
            failures.push(format!("{name}: {margin:+.4}"));
        }
    }
    Ok((
        failures.is_empty(),
        format!(
            "{} problems, {STARTS} starts each, worst relative margin {worst:+.4}{}",
            cases.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failing {failures:?}")
            }
        ),
    ))
}

/// Shapes optimized for product yield at each design removal, then staged.
fn staged_designs() -> Result<Vec<(f64, ShapeFunction)>, Box<dyn Error>> {
    let feed = FeedSpec::two_species(0.9, 0.1, 1.0)?;
    [0.99, 0.7, 0.5]
        .iter()
        .map(|&r| {
            let p = ProblemSpec::product_yield(feed.clone())
                .with_method(Method::Fast)
                .with_initial_removal(r);
            Ok((
                r,
                optimize(&p, &SearchConfig::linear(1_000, SEED))?.best_shape(),
            ))
        })
        .collect()
}

fn table_two(designs: &[(f64, ShapeFunction)]) -> Outcome {
    let feed = FeedSpec::two_species(0.9, 0.1, 1.0)?;
    let cfg = SimConfig::constant_pressure();
    let mut yields = Vec::new();
    let mut lines = Vec::new();
    let mut pass = true;
    for (r, shape) in designs {
        let res = run_protocol(&StagePlan::adaptive(*r, 1), shape, &feed, &cfg)?;
        lines.push(format!(
            "R={r}: d=({:.3}, {:.3}) M={} uses={:?} j={:.4} k2={:.3} yield/filter={:.5}",
            shape.intercept(),
            shape.slope(),
            res.total_filters,
            res.stage_uses,
            res.throughput(),
            res.purity[1],
            res.yield_per_filter
        ));
        pass &= res.target_met;
        if *r == 0.99 {
            pass &= within(res.throughput(), 0.089, 0.15)
                && within(res.yield_per_filter, 0.00528, 0.15)
                && (res.purity[1] - 0.904).abs() <= 0.02;
        }
        if *r == 0.5 {
            pass &= within(res.yield_per_filter, 0.00905, 0.15)
                && res.stage_uses.len() == 2
                && res.stage_uses[1] == 4;
        }
        yields.push(res.yield_per_filter);
    }
    pass &= yields[2] > yields[1] && yields[1] > yields[0];
    Ok((pass, lines.join("; ")))
}

fn table_four(designs: &[(f64, ShapeFunction)]) -> Outcome {
    let feed = FeedSpec::two_species(0.9, 0.1, 1.0)?;
    let counts: Vec<Vec<usize>> = vec![
        vec![1, 1],
        vec![2, 1],
        vec![3, 1],
        vec![3, 1, 1],
        vec![4, 1, 1],
        vec![6, 2, 1],
        vec![9, 3, 1, 1],
        vec![12, 4, 1, 1],
        vec![18, 6, 2, 1],
        vec![21, 7, 2, 1],
        vec![24, 8, 2, 1],
        vec![27, 9, 3, 1],
        vec![30, 10, 3, 1],
    ];
    let candidates: Vec<Vec<StageSpec>> = counts.iter().map(|c| StageSpec::chain(c)).collect();
    let shape = &designs
        .iter()
        .find(|(r, _)| *r == 0.5)
        .ok_or("no R = 0.5 design")?
        .1;
    let rows = sweep_stage_ratios(
        &candidates,
        0.5,
        shape,
        &feed,
        &SimConfig::constant_pressure(),
    )?;
    let best = &rows[0];
    let target = rows
        .iter()
        .position(|r| counts[r.candidate] == [18, 6, 2, 1])
        .ok_or("candidate missing")?;
    let ypf = rows[target].result.yield_per_filter;
    Ok((
        counts[best.candidate] == [18, 6, 2, 1] && within(ypf, 0.013, 0.15),
        format!(
            "best {:?} at {:.5}; (18, 6, 2, 1) ranks {} of {} at {ypf:.5} with uses {:?}",
            counts[best.candidate],
            best.result.yield_per_filter,
            target + 1,
            rows.len(),
            rows[target].result.stage_uses
        ),
    ))
}

fn constant_flux_shapes() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for (xi, steps, v_shape) in [
        (0.9, 1000, true),
        (0.1, 100, false),
        (0.5, 100, false),
        (0.9, 100, false),
    ] {
        let feed = FeedSpec::two_species(xi, 0.1, 10.0)?;
        let problem = ProblemSpec::constant_flux_yield(feed, steps);
        let r = optimize(&problem, &SearchConfig::linear(200, SEED))?;
        let slope = r.best.coefficients[1];
        pass &= if v_shape { slope < 0.0 } else { slope > 0.0 };
        lines.push(format!(
            "xi={xi} N={steps}: d=({:.3}, {slope:.3})",
            r.best.coefficients[0]
        ));
    }
    Ok((pass, lines.join("; ")))
}

fn monotone_matrix() -> Outcome {
    let mut failures = Vec::new();
    let mut runs = 0;
    let nonincreasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
    let nondecreasing = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]);
    for xi in [0.1, 0.5, 0.9] {
        for beta in [0.1, 0.5, 0.9] {
            let feed = FeedSpec::two_species(xi, beta, 1.0)?;
            let p =
                ProblemSpec::weighted_throughput(1.0, 0.0, feed.clone()).with_method(Method::Fast);
            let optimum = optimize(&p, &SearchConfig::linear(200, SEED))?.best_shape();
            for shape in [optimum, ShapeFunction::linear(1.0, 0.0)] {
                let tag = format!(
                    "xi={xi} beta={beta} d=({:.3}, {:.3})",
                    shape.intercept(),
                    shape.slope()
                );
                let cp = run_constant_pressure(&shape, &feed, &SimConfig::constant_pressure())?;
                if !(nonincreasing(&cp.u) && nondecreasing(&cp.removal[0])) {
                    failures.push(format!("pressure {tag}"));
                }
                let cf = run_constant_flux(&shape, &feed, &SimConfig::constant_flux(1000))?;
                if !(nondecreasing(&cf.p0) && nonincreasing(&cf.removal[0])) {
                    failures.push(format!("flux {tag}"));
                }
                let ms = run_protocol(
                    &StagePlan::adaptive(0.5, 1),
                    &shape,
                    &feed,
                    &SimConfig::constant_pressure(),
                )?;
                let balance = (ms.final_batch.volume + ms.discarded - ms.stage1_volume).abs()
                    / ms.stage1_volume;
                if balance > 1e-6 {
                    failures.push(format!("volume {tag}: {balance:.2e}"));
                }
                runs += 3;
            }
        }
    }
    Ok((
        failures.is_empty(),
        if failures.is_empty() {
            format!("{runs} runs over 9 feeds")
        } else {
            format!("failing {failures:?}")
        },
    ))
}

fn three_species() -> Outcome {
    let feed = FeedSpec::coupled(&[0.3, 0.35, 0.35], &[1.0, 0.1, 0.5], 1.0)?;
    let mut problem = ProblemSpec::product_yield(feed.clone());
    problem.removal_bounds = vec![
        RemovalBound {
            species: 1,
            min: None,
            max: Some(0.5),
        },
        RemovalBound {
            species: 2,
            min: Some(0.9),
            max: None,
        },
    ];
    let r = optimize(&problem, &slow_search(500, SEED))?;
    let rec = run_constant_pressure(&r.best_shape(), &feed, &SimConfig::constant_pressure())?;
    let m = compute_metrics(&rec, &feed.inlet())?;
    let rbar = &m.cum_removal;
    let pass = rbar[0] >= 0.99
        && rbar[2] >= 0.9
        && rbar[1] <= 0.5
        && (m.purity[1] - 0.896).abs() <= 0.02
        && within(m.throughput, 0.131, 0.15);
    Ok((
        pass,
        format!(
            "d=({:.3}, {:.3}) Rbar={:.4?} k2={:.3} j={:.4}",
            r.best.coefficients[0], r.best.coefficients[1], rbar, m.purity[1], m.throughput
        ),
    ))
}

fn main() {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, outcome: Outcome| {
        let (pass, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !pass {
            failed += 1;
        }
        println!(
            "{} [{id:>2}] {name}: {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    };
    report(1, "transport oracle", transport_oracle());
    report(2, "flux oracle", flux_oracle());
    report(3, "constant-flux removal bound", removal_bound());
    report(4, "purity identity", purity_identity());
    report(5, "optimum recovery", optimum_recovery());
    report(6, "fast-vs-slow dominance", fast_dominance());
    let designs = staged_designs();
    match &designs {
        Ok(d) => {
            report(7, "two-stage protocol table", table_two(d));
            report(8, "stage-ratio sweep", table_four(d));
        }
        Err(e) => {
            report(7, "two-stage protocol table", Err(e.to_string().into()));
            report(8, "stage-ratio sweep", Err(e.to_string().into()));
        }
    }
    report(9, "constant-flux shape classes", constant_flux_shapes());
    report(10, "monotone regression matrix", monotone_matrix());
    report(11, "three-species run", three_species());
    println!("{} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
