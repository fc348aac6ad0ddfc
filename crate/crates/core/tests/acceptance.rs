//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::time::Instant;

use common::protocols::*;
use common::{context, cut_free, top_uf, Gen, Top, LMRL_TOPS};
use multirole::kernel::{Calculus, CutStats, Kernel};
use multirole::logic::{multiset_eq, Formula, IFormula};
use multirole::roles::{Endo, RoleSet, Ultrafilter, Universe};
use multirole::runtime::script::{follow, parse_script, PARTY_VAR};
use multirole::runtime::{explore, Config, Outcome as RunOutcome, Pool, Rule, RunReport, TieBreak};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

const CASES: usize = 500;

/// Criterion 1: transformer soundness fuzz over LMRL.
fn kernel_fuzz() -> Outcome {
    let start = Instant::now();
    let mut bad = Vec::new();
    let mut ran = [0usize; 4];
    for n in [2, 3] {
        for case in 0..CASES as u64 {
            let mut g = Gen::new(n, Calculus::Lmrl, 1_000 * n as u64 + case);
            let a = g.formula(4);
            let ok = |d: &multirole::kernel::Derivation, k: &Kernel| k.check(d).is_ok() && cut_free(d, Calculus::Lmrl);

            let r = g.roleset();
            let (d, i) = g.derivation(&a, r).unwrap();
            let parts = g.parts(r, 2);
            match g.kernel.split_roles(&d, i, parts[0], parts[1]) {
                Ok(out) if ok(&out, &g.kernel) => ran[0] += 1,
                other => bad.push(format!("split n={n} case={case}: {:?}", other.err())),
            }

            let (d, i) = g.derivation(&a, RoleSet::default()).unwrap();
            match g.kernel.cut1(&d, i) {
                Ok(out) if ok(&out, &g.kernel) && multiset_eq(&out.conclusion, &context(&d, i)) => ran[1] += 1,
                other => bad.push(format!("cut1 n={n} case={case}: {:?}", other.err())),
            }

            let (r1, r2) = g.cut_roles(None, 3);
            let (d1, i1) = g.derivation(&a, r1).unwrap();
            let (d2, i2) = g.derivation(&a, r2).unwrap();
            let mut expected = context(&d1, i1);
            expected.extend(context(&d2, i2));
            expected.push(IFormula::new(r1.intersect(r2), a.clone()));
            match g.kernel.cut2_residual(&d1, i1, &d2, i2) {
                Ok(out) if ok(&out, &g.kernel) && multiset_eq(&out.conclusion, &expected) => ran[2] += 1,
                other => bad.push(format!("cut2 n={n} case={case}: {:?}", other.err())),
            }

            let m = g.rng.gen_range(1..=3);
            let complements = g.parts(g.full(), m);
            let mut premises = Vec::new();
            let mut expected = Vec::new();
            for c in &complements {
                let (d, i) = g.derivation(&a, g.co(*c)).unwrap();
                expected.extend(context(&d, i));
                premises.push((d, i));
            }
            match g.kernel.mp_cut(&premises) {
                Ok(out) if ok(&out, &g.kernel) && multiset_eq(&out.conclusion, &expected) => ran[3] += 1,
                other => bad.push(format!("mp_cut n={n} case={case}: {:?}", other.err())),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = bad.is_empty() && secs < 60.0;
    let mut detail = format!(
        "split={} cut1={} cut2={} mpcut={} ok of {} each, {secs:.1}s",
        ran[0],
        ran[1],
        ran[2],
        ran[3],
        2 * CASES
    );
    if let Some(first) = bad.first() {
        detail.push_str(&format!("; first failure: {first}"));
    }
    outcome(pass, detail)
}

/// Criterion 2: every reduction case of the 2-cut fires at least 20 times.
fn case_coverage() -> Outcome {
    let mut stats = CutStats::default();
    let mut seed = 0u64;
    for top in LMRL_TOPS {
        for mode in 0..3u8 {
            for _ in 0..120 {
                seed += 1;
                let n = 2 + (seed % 2) as usize;
                let mut g = Gen::new(n, Calculus::Lmrl, 77_000 + seed);
                let size = if top == Top::Atom { 0 } else { g.rng.gen_range(1..=4) };
                let a = g.formula_top(top, size);
                let (r1, r2) = g.cut_roles(top_uf(&a), mode);
                let (d1, i1) = g.derivation(&a, r1).unwrap();
                let (d2, i2) = g.derivation(&a, r2).unwrap();
                if g.kernel.cut2_residual_stats(&d1, i1, &d2, i2, &mut stats).is_err() {
                    return outcome(false, format!("cut failed at seed {seed}"));
                }
            }
        }
    }
    let cases: [(&str, &[&str]); 14] = [
        ("primitive", &["primitive"]),
        ("neg", &["neg"]),
        ("tensor pos/neg", &["tensor_pos_neg"]),
        ("tensor neg/pos", &["tensor_neg_pos"]),
        ("tensor pos/pos", &["tensor_pos_pos"]),
        ("with pos/neg", &["with_pos_neg"]),
        ("with neg/pos", &["with_neg_pos"]),
        ("with pos/pos", &["with_pos_pos"]),
        ("bang weaken", &["bang_weaken"]),
        ("bang derelict", &["bang_derelict"]),
        ("bang contract", &["bang_contract"]),
        ("bang pos/pos", &["bang_pos_pos"]),
        ("forall pos/neg", &["forall_pos_neg", "forall_neg_pos"]),
        ("commutative", &["commutative"]),
    ];
    let mut low = Vec::new();
    let mut parts = Vec::new();
    for (name, keys) in cases {
        let hits: usize = keys.iter().map(|k| stats.get(k)).sum();
        parts.push(format!("{name}={hits}"));
        if hits < 20 {
            low.push(name);
        }
    }
    let detail = if low.is_empty() { parts.join(" ") } else { format!("below 20: {low:?}; {}", parts.join(" ")) };
    outcome(low.is_empty(), detail)
}

/// Criterion 3: order identities and their entailment witnesses.
fn identities() -> Outcome {
    let u2 = Universe::new(2).unwrap();
    let swap = Endo::swap(2, 0, 1);
    let cycle = Endo::rotation(3, 1);
    let mut notes = Vec::new();
    let mut pass = swap.order() == Ok(2) && cycle.order() == Ok(3);
    notes.push(format!("order(swap)={:?} order(3-cycle)={:?}", swap.order(), cycle.order()));

    let k = Kernel::new(u2, Calculus::Lmrl);
    let mut g = Gen::new(2, Calculus::Lmrl, 3);
    let mut witnessed = 0;
    for i in 0..20 {
        let a = if i % 2 == 0 { g.formula_top(Top::Atom, 0) } else { Formula::neg(g.endo(), g.formula_top(Top::Atom, 0)) };
        let nn = Formula::neg(swap.clone(), Formula::neg(swap.clone(), a.clone()));
        let r = g.roleset();
        if k.entailment(&a, &nn, r, 6).is_found() && k.entailment(&nn, &a, r, 6).is_found() {
            witnessed += 1;
        }
    }
    pass &= witnessed == 20;
    notes.push(format!("double negation witnessed {witnessed}/20"));

    let mrl = Kernel::new(u2, Calculus::Mrl);
    let (a, b): (Formula, Formula) = ("a".parse().unwrap(), "b".parse().unwrap());
    let mut dm = 0;
    let mut total = 0;
    for f in u2.endos() {
        for uf in [Ultrafilter(0), Ultrafilter(1)] {
            let lhs = Formula::neg(f.clone(), Formula::conj(uf, a.clone(), b.clone()));
            let rhs = Formula::conj(f.push_ultrafilter(uf), Formula::neg(f.clone(), a.clone()), Formula::neg(f.clone(), b.clone()));
            for r in u2.subsets() {
                total += 1;
                if mrl.entailment(&lhs, &rhs, r, 6).is_found() && mrl.entailment(&rhs, &lhs, r, 6).is_found() {
                    dm += 1;
                }
            }
        }
    }
    pass &= dm == total;
    notes.push(format!("De Morgan unification {dm}/{total} both directions"));
    outcome(pass, notes.join("; "))
}

/// Criterion 4: merged role sets stay underivable.
fn non_theorems() -> Outcome {
    let k = Kernel::new(Universe::new(3).unwrap(), Calculus::Lmrl);
    let item = |r: &str| IFormula::new(r.parse().unwrap(), "a".parse().unwrap());
    let split = k.search(&[item("{0}"), item("{1}"), item("{2}")], 4).is_found();
    let merged = k.search(&[item("{0,1}")], 12).is_found();
    outcome(split && !merged, format!("|- <0>a,<1>a,<2>a found={split}; |- <0,1>a found={merged} (depth 12)"))
}

fn sync_labels(r: &RunReport) -> Vec<String> {
    r.sync_events()
        .iter()
        .map(|e| format!("{}:{}", e.action, e.label.clone().unwrap_or_default()))
        .collect()
}

fn seeded(seed: u64) -> Config {
    Config { tie: TieBreak::Seeded(seed), ..Config::default() }
}

/// Criterion 5: Example 1 on both branches, identical across interleavings.
fn example1() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (accept, want) in [(true, 7), (false, 5)] {
        let script = example1_script(accept);
        let reference = example_pool(3, EXAMPLE1, &script, Config::default()).run();
        let labels = sync_labels(&reference);
        let mut expected: Vec<String> =
            ["msg:title", "msg:quote", "msg:quote", "msg:contrib"].iter().map(|s| s.to_string()).collect();
        if accept {
            expected.extend(["choose:left", "msg:proof", "msg:receipt"].map(String::from));
        } else {
            expected.push("choose:right".into());
        }
        ok &= reference.outcome == RunOutcome::Completed && labels == expected && labels.len() == want;
        let mut same = 0;
        for seed in 0..100 {
            let r = example_pool(3, EXAMPLE1, &script, seeded(seed)).run();
            if r.outcome == RunOutcome::Completed && sync_labels(&r) == labels {
                same += 1;
            }
        }
        ok &= same == 100;
        notes.push(format!("{}: {} sync events, {same}/100 seeds identical", if accept { "accept" } else { "decline" }, labels.len()));
    }
    outcome(ok, notes.join("; "))
}

/// Criterion 6: Example 2 loop counts.
fn example2() -> Outcome {
    let mut notes = Vec::new();
    let mut completed = true;
    let mut matches_claim = true;
    for k in [0, 1, 5] {
        let r = example_pool(3, EXAMPLE2, &example2_script(k), Config::default()).run();
        let events = r.sync_events();
        let messages = events.iter().filter(|e| e.action == "msg").count();
        completed &= r.outcome == RunOutcome::Completed && events.len() == 4 + 3 * k && messages == 3 + 2 * k;
        matches_claim &= events.len() == 4 + 2 * k;
        notes.push(format!("k={k}: {} sync ({} messages, {} choice events)", events.len(), messages, events.len() - messages));
    }
    let analysis = "expected 4+2k; counting every choice as criterion 5 does gives 3 + 2k messages + (k+1) loop choices = 4+3k, \
                    counting messages only gives 3+2k, and 4+2k needs the exit choice counted but not the k continue choices";
    outcome(completed && matches_claim, format!("{}; {analysis}", notes.join(", ")))
}

/// Criterion 7: Example 3 under every firing order.
fn example3() -> Outcome {
    let pool = example_pool(3, EXAMPLE3, EXAMPLE3_SCRIPT, Config::default());
    let mut bad = Vec::new();
    let report = explore(&pool, 10_000, &mut |r| {
        let pr5: Vec<_> = r.trace.iter().filter(|e| e.rule == Rule::PR5).collect();
        let fine = r.outcome == RunOutcome::Completed
            && pr5.len() == 1
            && pr5[0].channels.len() == 2
            && pr5[0].spawned.len() == 2
            && {
                let (before, after) = (r.counters[pr5[0].step - 1], r.counters[pr5[0].step]);
                after.chans == before.chans + 1 && before.endpts == 3 && after.endpts == 6
            };
        if !fine {
            bad.push(format!("{:?}", r.outcome));
        }
    });
    let pass = bad.is_empty() && !report.truncated && report.completed == report.runs && report.runs > 1;
    outcome(
        pass,
        format!(
            "{} firing orders explored, {} completed; PR5: 1 channel of 3 endpoints -> 2 channels of 3, 2 threads spawned{}",
            report.runs,
            report.completed,
            if bad.is_empty() { String::new() } else { format!("; bad: {}", bad.join(", ")) }
        ),
    )
}

/// Criterion 8: relaxedness along every step, and the two-channel counterexample.
fn relaxedness() -> Outcome {
    let mut runs: Vec<RunReport> = Vec::new();
    for seed in 0..100 {
        for accept in [true, false] {
            runs.push(example_pool(3, EXAMPLE1, &example1_script(accept), seeded(seed)).run());
        }
        for k in [0, 1, 5] {
            runs.push(example_pool(3, EXAMPLE2, &example2_script(k), seeded(seed)).run());
        }
        runs.push(example_pool(3, EXAMPLE3, EXAMPLE3_SCRIPT, seeded(seed)).run());
    }
    explore(&example_pool(3, EXAMPLE3, EXAMPLE3_SCRIPT, Config::default()), 10_000, &mut |r| runs.push(r.clone()));
    let examples = runs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for k in 0..200u64 {
        let n = rng.gen_range(2..=4);
        let s = random_session(&mut rng, n, 3);
        let parts = random_partition(&mut rng, n);
        let parties: Vec<_> = parts.iter().map(|r| (*r, follow(&s, *r, PARTY_VAR, 2, &mut rng))).collect();
        let pool = Pool::bootstrap(Universe::new(n).unwrap(), &s, &parties, &[], seeded(k)).unwrap();
        runs.push(pool.run());
    }
    let steps: usize = runs.iter().map(|r| r.counters.len()).sum();
    let violations: usize = runs.iter().map(|r| r.relaxed_violations().len()).sum();
    let zero: usize = runs.iter().map(|r| r.zero_convention_steps()).sum();
    let not_completed = runs.iter().filter(|r| r.outcome != RunOutcome::Completed).count();

    let demo = |src: &str| {
        let script = parse_script(src, None).unwrap();
        let config = Config { allow_demo: true, ..Config::default() };
        Pool::from_script(Universe::new(2).unwrap(), &script, None, config).unwrap().run()
    };
    let recv_first = demo("main: chan2 x y {1} {1} \"a(0, 1)\" \"b(1, 0)\" as u v { recv u; send v }; recv y; send x");
    let send_first = demo("main: chan2 x y {1} {1} \"a(0, 1)\" \"b(1, 0)\" as u v { recv u; send v }; send x; recv y");
    let c = *recv_first.counters.last().unwrap();
    let demo_ok = matches!(recv_first.outcome, RunOutcome::Deadlock { .. })
        && (c.holders, c.chans, c.endpts) == (2, 2, 4)
        && !c.relaxed()
        && send_first.outcome == RunOutcome::Completed;
    outcome(
        violations == 0 && not_completed == 0 && demo_ok,
        format!(
            "{} runs ({examples} from examples 1-3, 200 random), {steps} states checked, {violations} violations, \
             {zero} relying on the zero-endpoint convention, {not_completed} not completed; chan2 demo: {}+{}={} < {}, \
             recv-first {}, send-first {}",
            runs.len(),
            c.holders,
            c.chans,
            c.holders + c.chans,
            c.endpts + 1,
            if matches!(recv_first.outcome, RunOutcome::Deadlock { .. }) { "deadlocks" } else { "does not deadlock" },
            if send_first.outcome == RunOutcome::Completed { "completes" } else { "does not complete" },
        ),
    )
}

/// Criterion 9: per-role observations through forwarders equal the direct run.
fn transparency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut differ = Vec::new();
    let mut splits = 0;
    for case in 0..50 {
        let s = random_session(&mut rng, 3, 3);
        let programs = singleton_programs(&s, &mut rng);
        let direct = direct_run(&s, &programs);
        splits += direct.trace.iter().filter(|e| e.rule == Rule::PR5).count();
        for (name, routed) in [("cut3", cut3_run(&s, &programs)), ("cutres", cutres_run(&s, &programs))] {
            if direct.outcome != RunOutcome::Completed || routed.outcome != RunOutcome::Completed || routed.observations != direct.observations {
                differ.push(format!("case {case} {name}: {s}"));
            }
        }
    }
    outcome(
        differ.is_empty(),
        format!("50 protocols x 2 topologies, {splits} multiplicative splits forwarded, {} differences{}", differ.len(), differ.first().map(|d| format!(" ({d})")).unwrap_or_default()),
    )
}

/// Criterion 10: resources, the golden corpus, and retyped pool runs.
fn mtlc_suite() -> Outcome {
    use common::mtlc::*;
    use multirole::mtlc::eval_pool;

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let rho_bad = (0..100)
        .map(|_| random_expr(&mut rng, 5))
        .filter(|e| bag(e) != oracle_rho(e))
        .count();

    let cases = corpus();
    let verdict_bad: Vec<String> = cases.iter().filter_map(|c| c.check().err()).collect();
    let has = |name: &str, rule: &str| cases.iter().any(|c| c.name == name && c.expect == Expect::Reject(rule.into()));
    let required = has("reject_if_resources", "ty-if") && has("reject_closed_value_holds_resource", "ty-lam-i");

    let mut pools = 0;
    let mut pool_bad = Vec::new();
    let mut record = |label: String, r: Result<multirole::mtlc::EvalReport, String>| {
        pools += 1;
        if let Err(e) = r.and_then(|r| clean(&r)) {
            pool_bad.push(format!("{label}: {e}"));
        }
    };
    for c in &cases {
        if let Some(r) = c.run(0) {
            record(c.name.clone(), r);
        }
    }
    for case in 0..40u64 {
        let n = 2 + (case % 2) as usize;
        let s = random_finite_session(&mut rng, n, 3);
        let term = party_program(&mut rng, n, &s);
        let config = Config { seed: case, ..Config::default() };
        record(format!("party pool {case}"), eval_pool(&Universe::new(n).unwrap(), &term, config, true).map_err(|e| e.to_string()));
    }
    for case in 0..10 {
        let term = pure_program(&mut rng);
        record(format!("pure pool {case}"), eval_pool(&Universe::new(2).unwrap(), &term, Config::default(), true).map_err(|e| e.to_string()));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = rho_bad == 0 && verdict_bad.is_empty() && required && cases.len() >= 40 && pools >= 50 && pool_bad.is_empty() && secs < 120.0;
    outcome(
        pass,
        format!(
            "rho mismatches {rho_bad}/100, corpus {} programs with {} wrong verdicts, required rejections present {required}, \
             {pools} retyped pools with {} failures {:?}, {secs:.1}s",
            cases.len(),
            verdict_bad.len(),
            pool_bad.len(),
            pool_bad.iter().chain(&verdict_bad).take(3).collect::<Vec<_>>()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1 kernel soundness fuzz", kernel_fuzz),
        ("2 cut case coverage", case_coverage),
        ("3 order and De Morgan identities", identities),
        ("4 non-theorems stay unprovable", non_theorems),
        ("5 example 1 traces", example1),
        ("6 example 2 loop counts", example2),
        ("7 example 3 multiplicative split", example3),
        ("8 relaxedness preservation", relaxedness),
        ("9 forwarder transparency", transparency),
        ("10 MTLC suite", mtlc_suite),
    ];
    // Red with analysis: the stated count contradicts the counting rule of criterion 5.
    let known_red = ["6 example 2 loop counts"];
    let mut unexpected = 0;
    for (name, run) in criteria {
        let o = run();
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass && !known_red.contains(&name) {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        std::process::exit(1);
    }
}
