//! Acceptance run: one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_traits::{One, Signed, Zero};
use oblivious_bab::aggregation::RoutedTree;
use oblivious_bab::exact::{exact_oblivious_ratio, ExactOptima};
use oblivious_bab::framework::{r_max, separation_oracle, solve_oblivious, DualPoint, FrameworkConfig};
use oblivious_bab::gmm::gmm_tree;
use oblivious_bab::instance::{generate_instance, Instance, Model};
use oblivious_bab::pipes::{
    alpha_to_pipes, is_gamma_regular, pipes_to_alpha, thresholds, working_pipes, AlphaJson, AlphaVector,
    PipeSchedule,
};
use oblivious_bab::rational::{int, parse, pow2, ratio, to_f64, Rational};
use oblivious_bab::regularize::{cap_capacity, regularize, regularize_delta, regularize_sigma};
use oblivious_bab::subroutines::facility::lbfl;
use oblivious_bab::subroutines::rent_or_buy::{rent_or_buy, rob_lower_bounds};
use oblivious_bab::subroutines::steiner::steiner_tree;
use oblivious_bab::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODELS: [Model; 4] = [Model::RandomGeometric, Model::Grid, Model::Star, Model::Path];

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn random_alpha(rng: &mut ChaCha8Rng, d: u64) -> AlphaVector {
    let log_d = d.trailing_zeros();
    loop {
        let mut entries: Vec<(u32, Rational)> = Vec::new();
        for i in 0..=log_d {
            if rng.gen_bool(0.6) {
                entries.push((i, ratio(rng.gen_range(1..500), rng.gen_range(1..60))));
            }
        }
        if !entries.is_empty() {
            return AlphaVector::new(d, entries).unwrap();
        }
    }
}

fn random_d(rng: &mut ChaCha8Rng) -> u64 {
    1u64 << rng.gen_range(0..=6)
}

/// `Σ α_i min(x, 2^i)` computed term by term.
fn direct_eval(alpha: &AlphaVector, x: u64) -> Rational {
    alpha.entries().map(|(i, a)| a * int(x.min(1u64 << i) as i64)).fold(Rational::zero(), |s, t| s + t)
}

/// `min_k σ_k + δ_k x` computed directly from the pipe list.
fn direct_envelope(p: &PipeSchedule, x: u64) -> Rational {
    let x = int(x as i64);
    p.pipes().iter().map(|q| &q.sigma + &q.delta * &x).min().expect("nonempty schedule")
}

/// `max_{x ∈ [1, D]} f(x) / g(x)` over every integer.
fn integer_distortion(f: &AlphaVector, g: &AlphaVector) -> Rational {
    (1..=f.d()).map(|x| direct_eval(f, x) / direct_eval(g, x)).max().expect("D >= 1")
}

/// `A_i(T)` recomputed from the routed flows.
fn tree_level_cost(tree: &RoutedTree, inst: &Instance, i: u32) -> f64 {
    tree.edge_pairs().map(|(e, x)| inst.edge(e).length * x.min(1u64 << i) as f64).sum()
}

fn small_instances(rng: &mut ChaCha8Rng, count: usize, demand_range: (usize, usize)) -> Vec<Instance> {
    let mut out = Vec::new();
    while out.len() < count {
        let model = MODELS[rng.gen_range(0..MODELS.len())];
        let n = rng.gen_range(3..=7usize);
        let lo = demand_range.0.min(n - 1);
        let hi = demand_range.1.min(n - 1);
        let demands = rng.gen_range(lo..=hi);
        if let Ok(inst) = generate_instance(model, n, demands, rng.gen()) {
            out.push(inst);
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut points, mut bad_points, mut bad_trips) = (0usize, 0usize, 0usize);
    for _ in 0..500 {
        let d = random_d(&mut rng);
        let alpha = random_alpha(&mut rng, d);
        let schedule = alpha_to_pipes(&alpha);
        for x in 0..=alpha.d() {
            points += 1;
            let direct = direct_eval(&alpha, x);
            if direct != direct_envelope(&schedule, x) || direct != alpha.eval(x) {
                bad_points += 1;
            }
        }
        if pipes_to_alpha(&schedule).ok().as_ref() != Some(&alpha) {
            bad_trips += 1;
        }
    }
    outcome(
        bad_points == 0 && bad_trips == 0,
        format!("500 vectors, {points} points, {bad_points} mismatches, {bad_trips} failed round trips"),
    )
}

/// Checks `u_k ≤ b_k ≤ u_{k+1}` on pairs where `b_k` exists and both regularity conditions hold,
/// plus `g_k ≤ b_k ≤ ((1 − 2γ²)/γ) g_k` when the whole vector is γ-regular.
fn threshold_checks(alpha: &AlphaVector, gamma: &Rational, tol: f64) -> (usize, usize, usize) {
    let pipes = working_pipes(alpha);
    // `σ/δ`; `None` is the unbounded capacity of a flat pipe.
    let cap = |k: usize| -> Option<f64> {
        Some(to_f64(&if k == 0 {
            Rational::zero()
        } else if pipes[k].delta.is_zero() {
            return None;
        } else {
            &pipes[k].sigma / &pipes[k].delta
        }))
    };
    let two_gamma = gamma * int(2);
    let (mut checked, mut skipped, mut bad) = (0, 0, 0);
    for k in 0..pipes.len().saturating_sub(1) {
        let (a, c) = (&pipes[k], &pipes[k + 1]);
        let regular_pair = c.delta < gamma * &a.delta && a.sigma < gamma * &c.sigma;
        let denom = &two_gamma * &a.delta - &c.delta;
        if !regular_pair || denom <= Rational::zero() {
            skipped += 1;
            continue;
        }
        let b = to_f64(&((&c.sigma - &two_gamma * &a.sigma) / denom));
        checked += 1;
        let below = cap(k).is_some_and(|u| u <= b + tol);
        let above = cap(k + 1).is_none_or(|u| b <= u + tol);
        if !(below && above) {
            bad += 1;
        }
    }
    if is_gamma_regular(alpha, gamma).regular {
        let t = thresholds(&PipeSchedule::new(alpha.d(), pipes.clone()).unwrap(), gamma).unwrap();
        let factor = to_f64(&((Rational::one() - &two_gamma * gamma) / gamma));
        for k in 0..t.g.len() {
            checked += 1;
            let (g, b) = (to_f64(&t.g[k]), to_f64(&t.b[k]));
            if !(g <= b + tol && b <= factor * g + tol) {
                bad += 1;
            }
        }
    }
    (checked, skipped, bad)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gamma = ratio(1, 4);
    let (mut checked, mut skipped, mut bad, mut regular) = (0, 0, 0, 0);
    for _ in 0..500 {
        let d = random_d(&mut rng);
        let alpha = random_alpha(&mut rng, d);
        let (reg, _) = regularize(&alpha, &gamma).unwrap();
        for a in [&alpha, &reg] {
            if is_gamma_regular(a, &gamma).regular {
                regular += 1;
            }
            let (c, s, b) = threshold_checks(a, &gamma, 1e-9);
            checked += c;
            skipped += s;
            bad += b;
        }
    }
    outcome(
        bad == 0 && checked > 0,
        format!(
            "1000 vectors ({regular} regular), {checked} inequalities checked, {skipped} irregular pairs skipped, {bad} violations"
        ),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gamma = ratio(1, 4);
    let limits = [int(1), int(3), ratio(5, 2)];
    let mut worst = [Rational::zero(), Rational::zero(), Rational::zero()];
    let (mut bad, mut rotations, mut errors) = (Vec::new(), [0usize; 2], 0usize);
    for n in 0..200 {
        let d = random_d(&mut rng);
        let alpha = random_alpha(&mut rng, d);
        let run = (|| -> oblivious_bab::Result<()> {
            let (a1, _) = cap_capacity(&alpha)?;
            let (a2, s2) = regularize_delta(&a1, &gamma)?;
            let (a3, s3) = regularize_sigma(&a2, &gamma)?;
            for (s, (f, g)) in [(&alpha, &a1), (&a1, &a2), (&a2, &a3)].into_iter().enumerate() {
                let dist = integer_distortion(f, g);
                if dist > limits[s] {
                    bad.push(format!("vector {n} stage {s} distortion {}", to_f64(&dist)));
                }
                if dist > worst[s] {
                    worst[s] = dist;
                }
            }
            if !is_gamma_regular(&a3, &gamma).regular {
                bad.push(format!("vector {n} output not regular"));
            }
            if regularize(&alpha, &gamma)?.0 != a3 {
                bad.push(format!("vector {n} composite differs from staged run"));
            }
            for r in &s2.rotations {
                rotations[0] += 1;
                let (d0, d1) = (parse(&r.delta_before)?, parse(&r.delta_after)?);
                if d1 < d0 * ratio(1, 3) {
                    bad.push(format!("vector {n} delta rotation shrank delta below a third"));
                }
            }
            for r in &s3.rotations {
                rotations[1] += 1;
                let (s0, s1) = (parse(&r.sigma_before)?, parse(&r.sigma_after)?);
                let (d0, d1) = (parse(&r.delta_before)?, parse(&r.delta_after)?);
                if s1 < s0 * ratio(2, 5) || d1 > d0 * ratio(8, 5) {
                    bad.push(format!("vector {n} sigma rotation outside its bounds"));
                }
            }
            Ok(())
        })();
        if let Err(e) = run {
            errors += 1;
            bad.push(format!("vector {n}: {e}"));
        }
    }
    let elapsed = start.elapsed();
    let fast = elapsed < Duration::from_secs(60);
    outcome(
        bad.is_empty() && fast,
        format!(
            "200 vectors, worst stage distortions {:.4}/{:.4}/{:.4}, {} delta and {} sigma rotations, {errors} errors, {:.2} s{}",
            to_f64(&worst[0]),
            to_f64(&worst[1]),
            to_f64(&worst[2]),
            rotations[0],
            rotations[1],
            elapsed.as_secs_f64(),
            if bad.is_empty() { String::new() } else { format!("; first problem: {}", bad[0]) }
        ),
    )
}

fn criterion_4(corpus: &[(Instance, ExactOptima)]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut pairs, mut capped, mut bad) = (0, 0, 0);
    let mut worst = Rational::zero();
    for (inst, optima) in corpus {
        for _ in 0..10 {
            let alpha = random_alpha(&mut rng, inst.demand_profile().d);
            let (capped_alpha, report) = cap_capacity(&alpha).unwrap();
            let l = optima.multi_level_cost(&alpha);
            let l2 = optima.multi_level_cost(&capped_alpha);
            pairs += 1;
            if report.changed() {
                capped += 1;
            }
            if l2 > &l * int(2) {
                bad += 1;
            }
            if l.is_positive() {
                worst = worst.max(l2 / l);
            }
        }
    }
    outcome(
        bad == 0,
        format!(
            "{} instances, {pairs} vectors ({capped} changed by the cap), worst L'/L = {:.4}, {bad} violations",
            corpus.len(),
            to_f64(&worst)
        ),
    )
}

fn criterion_5(corpus: &[&ExactOptima]) -> Outcome {
    let mut bad = 0;
    let mut checks = 0;
    for optima in corpus {
        let values: Vec<&Rational> = optima.levels.iter().map(|l| &l.exact).collect();
        for i in 0..values.len() {
            for k in 1..values.len() - i {
                checks += 1;
                let (lo, hi) = (values[i], values[i + k]);
                if !(lo <= hi && *hi <= pow2(k as u32) * lo) {
                    bad += 1;
                }
            }
        }
        if optima.chain_violation().is_some() {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{} instances, {checks} level pairs, {bad} violations", corpus.len()))
}

fn gmm_instance() -> Instance {
    Instance::new(
        &["r", "a", "b", "c", "d", "e"],
        &[
            ("r", "a", 1.0),
            ("r", "b", 2.5),
            ("a", "b", 1.0),
            ("a", "c", 1.5),
            ("b", "d", 1.0),
            ("c", "d", 0.5),
            ("c", "e", 1.0),
            ("d", "e", 2.0),
        ],
        &[("a", 12), ("b", 20), ("c", 9), ("d", 27), ("e", 15)],
        "r",
    )
    .unwrap()
}

fn criterion_6() -> Outcome {
    let inst = gmm_instance();
    let gamma = ratio(1, 4);
    let d = inst.demand_profile().d;
    // Three γ-regular pipes with capacities 0, 18/5 and 82; b_1 < 83 so every stage runs.
    let alpha = AlphaVector::new(d, [(0, int(18)), (4, int(4)), (7, int(1))]).unwrap();
    const RUNS: usize = 2000;
    // (stage, step, node) -> samples
    let mut samples: BTreeMap<(usize, usize, String), Vec<f64>> = BTreeMap::new();
    for seed in 0..RUNS as u64 {
        let out = gmm_tree(&inst, &alpha, &gamma, seed).unwrap();
        for s in &out.stages {
            let mut steps = vec![(0, &s.demand_after_steiner)];
            if !s.delivered {
                steps.push((1, &s.demand_after_facility));
            }
            for (step, map) in steps {
                for v in inst.demand_nodes() {
                    let id = inst.id(v).to_string();
                    let x = map.get(&id).copied().unwrap_or(0) as f64;
                    samples.entry((s.k, step, id)).or_default().push(x);
                }
            }
        }
    }
    let (mut checked, mut random, mut bad) = (0, 0, Vec::new());
    let mut worst_z: f64 = 0.0;
    for ((k, step, id), xs) in &samples {
        if xs.len() != RUNS {
            bad.push(format!("stage {k} reached in only {} runs", xs.len()));
            continue;
        }
        let target = inst.demand(inst.node_index(id).unwrap()) as f64;
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        checked += 1;
        if se == 0.0 {
            if mean != target {
                bad.push(format!("stage {k} step {step} node {id}: constant {mean} != {target}"));
            }
            continue;
        }
        random += 1;
        let z = (mean - target).abs() / se;
        worst_z = worst_z.max(z);
        if z > 3.0 {
            bad.push(format!("stage {k} step {step} node {id}: mean {mean:.4} vs {target}, z = {z:.2}"));
        }
    }
    outcome(
        bad.is_empty() && random > 0,
        format!(
            "{RUNS} runs, {checked} (stage, step, node) means, {random} with randomness, worst |z| = {worst_z:.2}{}",
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }
        ),
    )
}

fn criterion_7(corpus: &[(Instance, ExactOptima)]) -> Outcome {
    let start = Instant::now();
    let mut bad = Vec::new();
    let (mut worst_ratio, mut worst_theta): (f64, f64) = (0.0, 0.0);
    for (n, (inst, optima)) in corpus.iter().enumerate() {
        let cfg = FrameworkConfig { seed: n as u64, ..FrameworkConfig::default() };
        let sol = match solve_oblivious(inst, &cfg) {
            Ok(s) => s,
            Err(e) => {
                bad.push(format!("instance {n}: {e}"));
                continue;
            }
        };
        let profile = inst.demand_profile();
        let support = sol.distribution.support();
        if support.len() > profile.levels {
            bad.push(format!("instance {n}: support {} > {}", support.len(), profile.levels));
        }
        let theta = sol.report.theta_star;
        let tilde: Vec<f64> = sol.report.tilde.iter().map(|b| b.value).collect();
        let consistency = (0..profile.levels as u32)
            .map(|i| {
                support.iter().map(|(t, x)| x * tree_level_cost(t, inst, i)).sum::<f64>() / tilde[i as usize]
            })
            .fold(0.0, f64::max);
        if consistency > theta + 1e-7 {
            bad.push(format!("instance {n}: max ratio to the bounds {consistency} > theta {theta}"));
        }
        let (ratio, _) = exact_oblivious_ratio(inst, &sol.distribution, 8).unwrap();
        let slack = optima.values().iter().zip(&tilde).map(|(a, t)| t / a).fold(0.0, f64::max);
        let bound = theta * slack;
        if !(ratio.is_finite() && ratio >= 1.0 - 1e-9 && ratio <= bound + 1e-7) {
            bad.push(format!("instance {n}: exact ratio {ratio} outside [1, {bound}]"));
        }
        worst_ratio = worst_ratio.max(ratio);
        worst_theta = worst_theta.max(theta);
    }
    let elapsed = start.elapsed();
    let fast = elapsed < Duration::from_secs(300);
    outcome(
        bad.is_empty() && fast,
        format!(
            "{} instances, max theta* {worst_theta:.4}, max exact ratio {worst_ratio:.4}, {:.2} s{}",
            corpus.len(),
            elapsed.as_secs_f64(),
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }
        ),
    )
}

/// Optimal Steiner tree cost: the cheapest MST over node sets containing the terminals.
fn brute_steiner(inst: &Instance, terminals: &[usize]) -> f64 {
    let n = inst.node_count();
    let required: u32 = terminals.iter().map(|&t| 1u32 << t).sum();
    let mut best = f64::INFINITY;
    for set in 0u32..(1 << n) {
        if set & required != required {
            continue;
        }
        let mut edges: Vec<(f64, usize, usize)> = inst
            .edges()
            .iter()
            .filter(|e| set >> e.u & 1 == 1 && set >> e.v & 1 == 1)
            .map(|e| (e.length, e.u, e.v))
            .collect();
        edges.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut comp: Vec<usize> = (0..n).collect();
        fn find(c: &mut [usize], x: usize) -> usize {
            let mut x = x;
            while c[x] != x {
                c[x] = c[c[x]];
                x = c[x];
            }
            x
        }
        let (mut cost, mut joined) = (0.0, 0);
        for (l, u, v) in edges {
            let (a, b) = (find(&mut comp, u), find(&mut comp, v));
            if a != b {
                comp[a] = b;
                cost += l;
                joined += 1;
            }
        }
        if joined + 1 == set.count_ones() as usize {
            best = best.min(cost);
        }
    }
    best
}

fn criterion_8(corpus: &[(Instance, ExactOptima)]) -> Outcome {
    let mut bad = Vec::new();
    let (mut steiner_cases, mut worst_steiner): (usize, f64) = (0, 0.0);
    for model in MODELS {
        for n in 2..=8 {
            for seed in 0..3 {
                let Ok(inst) = generate_instance(model, n, n - 1, seed) else { continue };
                let lengths = inst.lengths();
                for mask in 1u32..(1 << n) {
                    if mask.count_ones() < 2 {
                        continue;
                    }
                    let terminals: Vec<usize> = (0..n).filter(|&v| mask >> v & 1 == 1).collect();
                    let opt = brute_steiner(&inst, &terminals);
                    let sol = steiner_tree(&inst, &terminals, &lengths).unwrap();
                    steiner_cases += 1;
                    if opt > 0.0 {
                        worst_steiner = worst_steiner.max(sol.cost / opt);
                    }
                    if sol.cost > 2.0 * opt + 1e-9 {
                        bad.push(format!("steiner {} n={n} seed={seed} mask={mask:b}", model.name()));
                    }
                }
            }
        }
    }
    let (mut rob_cases, mut worst_rob): (usize, f64) = (0, 0.0);
    for (idx, (inst, optima)) in corpus.iter().enumerate() {
        for level in &optima.levels {
            if level.value <= 0.0 {
                continue;
            }
            let m = (1u64 << level.i) as f64;
            let mean = (0..50u64)
                .map(|s| rent_or_buy(inst, m, s).unwrap().cost_under_f)
                .sum::<f64>()
                / 50.0;
            let r = mean / level.value;
            rob_cases += 1;
            worst_rob = worst_rob.max(r);
            if r > 4.0 {
                bad.push(format!("rent-or-buy instance {idx} level {}: mean ratio {r:.3}", level.i));
            }
        }
    }
    let (mut lbfl_cases, mut facilities, mut worst_load): (usize, usize, f64) = (0, 0, f64::INFINITY);
    for (idx, (inst, _)) in corpus.iter().enumerate() {
        let total = inst.total_demand();
        let lengths = inst.lengths();
        for l in 1..=total {
            let sol = lbfl(inst, inst.demands(), l as f64, &lengths).unwrap();
            lbfl_cases += 1;
            let mut load: BTreeMap<usize, u64> = sol.open.iter().map(|&f| (f, 0)).collect();
            for (&v, &f) in &sol.assignment {
                *load.entry(f).or_default() += inst.demand(v);
            }
            for (&f, &x) in &load {
                facilities += 1;
                worst_load = worst_load.min(x as f64 / l as f64);
                if (x as f64) < l as f64 / 3.0 {
                    bad.push(format!("lbfl instance {idx} L={l}: facility {} has load {x}", inst.id(f)));
                }
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "steiner {steiner_cases} terminal sets, worst ratio {worst_steiner:.4}; rent-or-buy {rob_cases} (instance, M) pairs, worst mean ratio {worst_rob:.4}; lbfl {lbfl_cases} runs, {facilities} open facilities, min load/L {worst_load:.4}{}",
            if bad.is_empty() { String::new() } else { format!("; {}", bad.iter().take(5).cloned().collect::<Vec<_>>().join("; ")) }
        ),
    )
}

/// Runs the oracle at 200 random dual points; returns (within cap, within `short`, exceeded, calls, other errors).
fn oracle_trials(inst: &Instance, tilde: &[f64], c_target: f64, short: usize) -> (usize, usize, usize, usize, Vec<String>) {
    let gamma = ratio(1, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut within, mut quick, mut exceeded, mut calls) = (0, 0, 0, 0);
    let mut other = Vec::new();
    for t in 0..200u64 {
        let raw: Vec<f64> = tilde.iter().map(|_| rng.gen::<f64>()).collect();
        let mass: f64 = rng.gen_range(0.05..1.0);
        let sum: f64 = raw.iter().sum();
        let alpha: Vec<f64> = raw.iter().zip(tilde).map(|(r, tl)| r / sum * mass / tl).collect();
        let beta = rng.gen_range(0.0..4.0);
        match separation_oracle(&DualPoint { alpha, beta }, tilde, c_target, inst, &gamma, t) {
            Ok(res) => {
                within += 1;
                calls += res.invocations;
                if res.invocations <= short {
                    quick += 1;
                }
            }
            Err(Error::OracleCapExceeded { .. }) => exceeded += 1,
            Err(e) => other.push(e.to_string()),
        }
    }
    (within, quick, exceeded, calls, other)
}

fn criterion_9() -> Outcome {
    let inst = generate_instance(Model::RandomGeometric, 7, 4, 9).unwrap();
    let tilde: Vec<f64> = rob_lower_bounds(&inst, 9, 4).unwrap().iter().map(|b| b.value).collect();
    let cap = r_max(inst.node_count());
    let short = (2.0 * (inst.node_count() as f64).log2()).ceil() as usize;
    let (within, quick, exceeded, calls, other) = oracle_trials(&inst, &tilde, 4.0, short);
    let (tight_within, tight_quick, _, tight_calls, _) = oracle_trials(&inst, &tilde, 1.0, short);
    outcome(
        within >= 190 && quick >= 190 && other.is_empty(),
        format!(
            "R_max = {cap}; c = 4: {within}/200 within R_max, {quick}/200 within {short}, {exceeded} exceeded, {calls} invocations; c = 1: {tight_within}/200 within R_max, {tight_quick}/200 within {short}, {tight_calls} invocations{}",
            if other.is_empty() { String::new() } else { format!("; errors: {}", other.join("; ")) }
        ),
    )
}

struct RunCapture {
    code: Option<i32>,
    stdout: Vec<u8>,
    files: BTreeMap<String, Vec<u8>>,
}

fn run_cli(dir: &Path, args: &[&str], outputs: &[&str]) -> RunCapture {
    let out = Command::new(env!("CARGO_BIN_EXE_obab")).args(args).current_dir(dir).output().expect("binary runs");
    let files = outputs
        .iter()
        .map(|f| (f.to_string(), std::fs::read(dir.join(f)).unwrap_or_default()))
        .collect();
    RunCapture { code: out.status.code(), stdout: out.stdout, files }
}

fn criterion_10() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let inst_text = generate_instance(Model::RandomGeometric, 6, 3, 21).unwrap().to_json_string();
        std::fs::write(dir.path().join("fixed.json"), inst_text).unwrap();
        let d = generate_instance(Model::RandomGeometric, 6, 3, 21).unwrap().demand_profile().d;
        let alpha = AlphaVector::new(d, (0..=d.trailing_zeros()).map(|i| (i, ratio(1, 1 + i as i64)))).unwrap();
        let text = serde_json::to_string(&AlphaJson::from_alpha(&alpha)).unwrap();
        std::fs::write(dir.path().join("alpha.json"), text).unwrap();
        std::fs::write(dir.path().join("run.toml"), "seed = 13\nbeta_steps = 4\n").unwrap();
    }
    let commands: Vec<(&str, Vec<&str>, Vec<&str>)> = vec![
        ("gen", vec!["gen", "--model", "grid", "--nodes", "6", "--demands", "3", "--seed", "5", "--out", "gen.json"], vec!["gen.json"]),
        ("solve", vec!["solve", "fixed.json", "--seed", "5", "--out", "dist.json", "--report", "report.json"], vec!["dist.json", "report.json"]),
        ("solve-config", vec!["--config", "run.toml", "solve", "fixed.json"], vec![]),
        ("eval", vec!["eval", "fixed.json", "dist.json", "--seed", "5", "--exact", "--out", "eval.json"], vec!["eval.json"]),
        ("regularize", vec!["regularize", "alpha.json", "--out", "reg.json"], vec!["reg.json"]),
        ("pipes", vec!["pipes", "alpha.json"], vec![]),
        ("gmm", vec!["gmm", "fixed.json", "alpha.json", "--seed", "5", "--regularize", "--out", "gmm.json"], vec!["gmm.json"]),
        ("brute", vec!["brute", "fixed.json", "--out", "brute.json"], vec!["brute.json"]),
        ("brute-tsv", vec!["brute", "fixed.json", "--format", "tsv"], vec![]),
        ("bench", vec!["bench", "--family", "star", "--sizes", "4,5", "--seeds", "1,2", "--out", "bench.tsv"], vec!["bench.tsv"]),
        ("bench-empty", vec!["bench", "--family", "star", "--sizes", "4"], vec![]),
        ("error", vec!["solve", "fixed.json"], vec![]),
    ];
    let mut bad = Vec::new();
    for (name, args, outputs) in &commands {
        let a = run_cli(dirs[0].path(), args, outputs);
        let b = run_cli(dirs[1].path(), args, outputs);
        let expected_code = if *name == "error" { Some(2) } else { Some(0) };
        if a.code != expected_code {
            bad.push(format!("{name} exited with {:?}", a.code));
        }
        if a.code != b.code || a.stdout != b.stdout || a.files != b.files {
            bad.push(format!("{name} differs between runs"));
        }
        if a.files.values().any(|f| f.is_empty()) {
            bad.push(format!("{name} wrote an empty artifact"));
        }
    }
    outcome(
        bad.is_empty(),
        format!("{} commands run twice{}", commands.len(), if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }),
    )
}

fn timed(label: u32, name: &str, results: &mut Vec<bool>, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let out = f();
    let tag = if out.ok { "PASS" } else { "FAIL" };
    println!("{tag} criterion {label} ({name}): {} [{:.2} s]", out.detail, start.elapsed().as_secs_f64());
    results.push(out.ok);
}

fn main() {
    let mut results = Vec::new();
    timed(1, "function representations", &mut results, || {
        let start = Instant::now();
        let mut out = criterion_1();
        let elapsed = start.elapsed();
        out.ok &= elapsed < Duration::from_secs(10);
        out.detail.push_str(&format!(", {:.2} s", elapsed.as_secs_f64()));
        out
    });
    timed(2, "threshold sanity", &mut results, criterion_2);
    timed(3, "regularization certificates", &mut results, criterion_3);

    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let l_corpus: Vec<(Instance, ExactOptima)> = small_instances(&mut rng, 20, (1, 6))
        .into_iter()
        .map(|i| {
            let o = ExactOptima::compute(&i, 8).unwrap();
            (i, o)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let f_corpus: Vec<(Instance, ExactOptima)> = small_instances(&mut rng, 20, (2, 4))
        .into_iter()
        .map(|i| {
            let o = ExactOptima::compute(&i, 8).unwrap();
            (i, o)
        })
        .collect();

    timed(4, "capacity cap keeps L within 2L", &mut results, || criterion_4(&l_corpus));
    timed(5, "multi-level chain", &mut results, || {
        let all: Vec<&ExactOptima> = l_corpus.iter().chain(&f_corpus).map(|(_, o)| o).collect();
        criterion_5(&all)
    });
    timed(6, "consolidation unbiasedness", &mut results, criterion_6);
    timed(7, "framework guarantees", &mut results, || criterion_7(&f_corpus));
    timed(8, "subroutine ratios", &mut results, || criterion_8(&l_corpus));
    timed(9, "oracle termination", &mut results, criterion_9);
    timed(10, "CLI determinism", &mut results, criterion_10);

    let passed = results.iter().filter(|&&ok| ok).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
