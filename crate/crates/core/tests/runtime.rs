use multirole::roles::{RoleSet, Universe};
use multirole::runtime::script::{follow, parse_commands, parse_script};
use multirole::runtime::{explore, Config, Outcome, Pool, Rule, RunReport, TieBreak, Value};
use multirole::session::{parse_session, SessionType};
use proptest::prelude::*;

mod common;
use common::protocols::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rs(s: &str) -> RoleSet {
    s.parse().unwrap()
}

fn run_parties(n: usize, session: &str, script: &str, tie: TieBreak) -> RunReport {
    let s = parse_session(session).unwrap();
    let script = parse_script(script, None).unwrap();
    let config = Config { tie, ..Config::default() };
    Pool::from_script(Universe::new(n).unwrap(), &script, Some(&s), config).unwrap().run()
}

fn run_main(n: usize, src: &str, config: Config) -> RunReport {
    let script = parse_script(src, None).unwrap();
    Pool::from_script(Universe::new(n).unwrap(), &script, None, config).unwrap().run()
}

fn sync_labels(r: &RunReport) -> Vec<String> {
    r.sync_events()
        .iter()
        .map(|e| match &e.label {
            Some(l) => format!("{}:{l}", e.action),
            None => e.action.clone(),
        })
        .collect()
}

fn fault(r: &RunReport) -> String {
    match &r.outcome {
        Outcome::Fault { error, .. } => error.clone(),
        other => panic!("expected a fault, got {other:?}"),
    }
}

#[test]
fn example1_accept_and_decline() {
    let accept = run_parties(3, EXAMPLE1, &example1_script(true), TieBreak::Lowest);
    assert_eq!(accept.outcome, Outcome::Completed);
    assert_eq!(
        sync_labels(&accept),
        ["msg:title", "msg:quote", "msg:quote", "msg:contrib", "choose:left", "msg:proof", "msg:receipt"]
    );
    let decline = run_parties(3, EXAMPLE1, &example1_script(false), TieBreak::Lowest);
    assert_eq!(decline.outcome, Outcome::Completed);
    assert_eq!(sync_labels(&decline), ["msg:title", "msg:quote", "msg:quote", "msg:contrib", "choose:right"]);
}

#[test]
fn example1_is_deterministic_across_seeds() {
    let reference = sync_labels(&run_parties(3, EXAMPLE1, &example1_script(true), TieBreak::Lowest));
    for seed in 0..100 {
        let r = run_parties(3, EXAMPLE1, &example1_script(true), TieBreak::Seeded(seed));
        assert_eq!(r.outcome, Outcome::Completed);
        assert_eq!(sync_labels(&r), reference, "seed {seed}");
        assert!(r.relaxed_violations().is_empty());
    }
}

#[test]
fn payloads_reach_the_receiver() {
    let script = "party {1}: send ch \"war and peace\"; recv ch as price; send ch price\n\
                  party {0}: recv ch as t; send ch 42; sync ch\n\
                  party {2}: sync ch; sync ch; recv ch as p\n";
    let r = run_parties(3, "title(1, 0, str)@quote(0, 1, int)@contrib(1, 2, int)", script, TieBreak::Lowest);
    assert_eq!(r.outcome, Outcome::Completed);
    let payloads: Vec<_> = r.sync_events().iter().map(|e| e.payload.clone().unwrap()).collect();
    assert_eq!(payloads, [Value::Str("war and peace".into()), Value::Int(42), Value::Int(42)]);
    let seen_by_2 = &r.observations[&(2, String::new())];
    assert_eq!(seen_by_2[0].payload, None);
    assert_eq!(seen_by_2[2].payload, Some(Value::Int(42)));
}

fn example2_flat_script(k: usize) -> String {
    format!(
        "party {{0}}: send ch; sync ch; loop {{ offer ch {{ recv ch; send ch }} else {{ break }} }}; sync ch\n\
         party {{1}}: recv ch; send ch; loop {{ offer ch {{ sync ch; sync ch }} else {{ break }} }}; recv ch\n\
         party {{2}}: sync ch; recv ch; repeat {k} {{ choose ch left; send ch; recv ch }}; choose ch right; send ch\n"
    )
}

#[test]
fn example2_counts_choices_as_sync_events() {
    for k in [0, 1, 5] {
        let r = run_parties(3, EXAMPLE2, &example2_flat_script(k), TieBreak::Lowest);
        assert_eq!(r.outcome, Outcome::Completed, "k = {k}");
        let events = r.sync_events();
        assert_eq!(events.len(), 4 + 3 * k, "k = {k}");
        let messages = events.iter().filter(|e| e.action == "msg").count();
        assert_eq!(messages, 3 + 2 * k);
    }
}

#[test]
fn example2_with_explicit_append() {
    let r = run_parties(3, EXAMPLE2, &example2_script(2), TieBreak::Lowest);
    assert_eq!(r.outcome, Outcome::Completed);
    assert_eq!(r.sync_events().len(), 10);
}

#[test]
fn example3_splits_the_channel() {
    let r = run_parties(3, EXAMPLE3, EXAMPLE3_SCRIPT, TieBreak::Lowest);
    assert_eq!(r.outcome, Outcome::Completed);
    let pr5: Vec<_> = r.trace.iter().filter(|e| e.rule == Rule::PR5).collect();
    assert_eq!(pr5.len(), 1);
    assert_eq!(pr5[0].channels.len(), 2);
    assert_eq!(pr5[0].spawned.len(), 2);
    let before = r.counters[pr5[0].step - 1];
    let after = r.counters[pr5[0].step];
    assert_eq!(after.endpts, 2 * before.endpts);
    assert_eq!(after.holders, before.holders + 2);
    assert!(r.relaxed_violations().is_empty());
}

#[test]
fn example3_completes_under_every_firing_order() {
    let s = parse_session(EXAMPLE3).unwrap();
    let script = parse_script(EXAMPLE3_SCRIPT, None).unwrap();
    let pool = Pool::bootstrap(Universe::new(3).unwrap(), &s, &script.parties, &[], Config::default()).unwrap();
    let mut checked = 0;
    let report = explore(&pool, 10_000, &mut |r| {
        assert_eq!(r.outcome, Outcome::Completed);
        assert!(r.relaxed_violations().is_empty());
        checked += 1;
    });
    assert!(!report.truncated);
    assert!(report.runs > 1, "{report:?}");
    assert_eq!(report.completed, checked);
}

#[test]
fn wrong_primitive_is_a_protocol_mismatch() {
    let r = run_parties(2, "option(1, a(0, 1))", "party {0}: sync ch\nparty {1}: choose ch right\n", TieBreak::Lowest);
    assert!(fault(&r).contains("protocol mismatch"), "{r:?}");
}

#[test]
fn role_side_conditions_are_enforced() {
    let r = run_parties(2, "a(0, 1)", "party {0}: recv ch\nparty {1}: recv ch\n", TieBreak::Lowest);
    assert!(fault(&r).contains("role mismatch"));
    let r = run_parties(2, "option(1, a(0, 1))", "party {0}: choose ch left; sync ch\nparty {1}: offer ch { } else { }\n", TieBreak::Lowest);
    assert!(fault(&r).contains("role mismatch"));
    let r = run_parties(2, "mconj(1, a(0, 1), b(0, 1))", "party {0}: mconj ch -> x, y\nparty {1}: mdisj_l ch -> x | y { }\n", TieBreak::Lowest);
    assert!(fault(&r).contains("role mismatch"));
}

#[test]
fn payload_types_are_checked() {
    let r = run_parties(2, "a(0, 1, int)", "party {0}: send ch \"no\"\nparty {1}: recv ch\n", TieBreak::Lowest);
    assert!(fault(&r).contains("does not fit"));
}

#[test]
fn unfinished_append_body_is_reported() {
    let r = run_parties(2, "(a(0, 1)@b(1, 0))@c(0, 1)", "party {0}: append ch { send ch }; send ch\nparty {1}: recv ch; send ch; recv ch\n", TieBreak::Lowest);
    assert!(fault(&r).contains("append body finished"));
}

#[test]
fn append_with_nil_rest() {
    let r = run_parties(2, "a(0, 1)@nil", "party {0}: append ch { send ch }\nparty {1}: recv ch\n", TieBreak::Lowest);
    assert_eq!(r.outcome, Outcome::Completed);
}

#[test]
fn overlapping_split_is_rejected() {
    let r = run_main(3, "main: create c {0,1} \"a(0, 1)\" as d { split d {1,2} as e { } }", Config::default());
    assert!(fault(&r).contains("cannot split"));
}

#[test]
fn empty_split_then_one_cut() {
    let src = "main: create c {1,2} \"a(0, 1)@b(2, 0)\" as d { split d {} as e { cut1 e }; split d {2} as f { sync f; send f }; recv d; sync d }; send c; recv c";
    let r = run_main(3, src, Config::default());
    assert_eq!(r.outcome, Outcome::Completed, "{r:?}");
    assert!(r.trace.iter().any(|e| e.action == "cut1"));
}

#[test]
fn one_cut_needs_empty_roles() {
    let r = run_main(2, "main: create c {1} \"a(0, 1)\" as d { recv d }; cut1 c", Config::default());
    assert!(fault(&r).contains("1-cut"));
}

#[test]
fn reusing_a_consumed_endpoint_faults() {
    let r = run_main(2, "main: create c {1} \"nil\" as d { close d }; close c; close c", Config::default());
    assert!(fault(&r).contains("already consumed"));
}

#[test]
fn dropping_a_live_endpoint_faults() {
    let r = run_main(2, "main: create c {1} \"a(0, 1)\" as d { recv d }", Config::default());
    assert!(fault(&r).contains("ended holding"));
}

#[test]
fn nested_create_gives_two_channels_three_threads() {
    let src = "main: create c {1} \"a(0, 1)\" as d { create e {0} \"b(1, 0)\" as f { recv f }; send e; recv d }; send c";
    let r = run_main(2, src, Config::default());
    assert_eq!(r.outcome, Outcome::Completed);
    let creates: Vec<_> = r.trace.iter().filter(|e| e.rule == Rule::PR3).collect();
    assert_eq!(creates.len(), 2);
    let peak = r.counters.iter().map(|c| c.chans).max().unwrap();
    assert_eq!(peak, 2);
    assert!(r.counters.iter().any(|c| c.holders == 3));
}

#[test]
fn bcast_reaches_a_multi_role_endpoint_once() {
    let r = run_main(3, "main: create c {1,2} \"ping(0, str)\" as d { recv d as v }; send c \"hi\"", Config::default());
    assert_eq!(r.outcome, Outcome::Completed);
    let ev = r.sync_events();
    assert_eq!(ev.len(), 1);
    assert_eq!(ev[0].action, "bcast");
}

const DEMO_RECV_FIRST: &str = "main: chan2 x y {1} {1} \"a(0, 1)\" \"b(1, 0)\" as u v { recv u; send v }; recv y; send x";
const DEMO_SEND_FIRST: &str = "main: chan2 x y {1} {1} \"a(0, 1)\" \"b(1, 0)\" as u v { recv u; send v }; send x; recv y";

#[test]
fn chan2_demo_deadlocks_recv_first() {
    let config = Config { allow_demo: true, ..Config::default() };
    let r = run_main(2, DEMO_RECV_FIRST, config.clone());
    assert!(matches!(r.outcome, Outcome::Deadlock { .. }), "{r:?}");
    let c = *r.counters.last().unwrap();
    assert_eq!((c.holders, c.chans, c.endpts), (2, 2, 4));
    assert!(!c.relaxed());
    let r = run_main(2, DEMO_SEND_FIRST, config);
    assert_eq!(r.outcome, Outcome::Completed);
    assert!(!r.relaxed_violations().is_empty());
}

#[test]
fn chan2_demo_needs_the_flag() {
    let r = run_main(2, DEMO_RECV_FIRST, Config::default());
    assert!(fault(&r).contains("allow-demo"));
}

#[test]
fn services_create_fresh_channels() {
    let src = "service echo {0} \"a(0, 1, int)@b(1, 0, int)\" as s { recv s as v; send s v }\n\
               main: request c echo; send c 7; recv c as w; request d echo; send d 8; recv d";
    let r = run_main(2, src, Config::default());
    assert_eq!(r.outcome, Outcome::Completed);
    let chans: std::collections::BTreeSet<_> = r.sync_events().iter().map(|e| e.chan).collect();
    assert_eq!(chans.len(), 2);
    let r = run_main(2, "main: request c nothing", Config::default());
    assert!(fault(&r).contains("unknown service"));
}

#[test]
fn three_party_bootstrap_through_cutres() {
    let src = "service left {1,2} \"a(0, 1, int)@b(1, 2, int)@c(2, 0, int)\" as s { send s 5; sync s; recv s }\n\
               service right {0,2} \"a(0, 1, int)@b(1, 2, int)@c(2, 0, int)\" as s { recv s as v; send s v; sync s }\n\
               main: request p left; request q right; cutres p q -> r; sync r; recv r as v; send r 9";
    let r = run_main(3, src, Config::default());
    assert_eq!(r.outcome, Outcome::Completed, "{r:?}");
    let labels: Vec<_> = r.sync_events().iter().filter(|e| e.tid.is_none()).map(|e| e.label.clone().unwrap()).collect();
    assert!(labels.contains(&"a".to_string()));
    assert!(r.relaxed_violations().is_empty());
    let seen: Vec<_> = r.observations[&(2, String::new())].iter().map(|o| o.payload.clone()).collect();
    assert_eq!(seen, [None, Some(Value::Int(5)), Some(Value::Int(9))]);
}

#[test]
fn cut_side_conditions() {
    let bad = "main: create c {1} \"a(0, 1)\" as d { recv d }; create e {1} \"a(0, 1)\" as f { recv f }; cut2 c e";
    let r = run_main(2, bad, Config::default());
    assert!(fault(&r).contains("cut side condition"), "{r:?}");
    let mismatch = "main: create c {1} \"a(0, 1)\" as d { recv d }; create e {0} \"b(0, 1)\" as f { send f }; cut2 c e";
    assert!(fault(&run_main(2, mismatch, Config::default())).contains("session mismatch"));
}

#[test]
fn cut2_forwards_between_two_channels() {
    let src = "main: create c {1} \"a(0, 1, int)@b(1, 0, int)\" as d { recv d as v; send d v }; \
               create e {0} \"a(0, 1, int)@b(1, 0, int)\" as f { send f 3; recv f }; cut2 c e";
    let r = run_main(2, src, Config::default());
    assert_eq!(r.outcome, Outcome::Completed, "{r:?}");
    assert!(r.relaxed_violations().is_empty());
    let three = r.trace.iter().filter(|e| e.payload == Some(Value::Int(3))).count();
    assert_eq!(three, 4);
}

#[test]
fn identical_seeds_give_identical_traces() {
    let a = run_parties(3, EXAMPLE3, EXAMPLE3_SCRIPT, TieBreak::Seeded(77));
    let b = run_parties(3, EXAMPLE3, EXAMPLE3_SCRIPT, TieBreak::Seeded(77));
    assert_eq!(a.to_jsonl(), b.to_jsonl());
}

#[test]
fn finished_main_alone_completes() {
    let r = run_main(2, "main: ", Config::default());
    assert_eq!(r.outcome, Outcome::Completed);
    assert_eq!(r.zero_convention_steps(), r.counters.len());
}

#[test]
fn step_limit_stops_a_spinning_thread() {
    let r = run_main(2, "main: loop { }", Config { max_steps: 50, ..Config::default() });
    assert_eq!(r.outcome, Outcome::StepLimit);
}

#[test]
fn break_outside_a_loop_faults() {
    let block = parse_commands("break", None).unwrap();
    let r = Pool::new(Universe::new(2).unwrap(), block, &[], Config::default()).run();
    assert!(fault(&r).contains("outside a loop"));
}

fn arb_session(n: usize) -> impl Strategy<Value = SessionType> {
    let atom = prop_oneof![
        4 => (0..n, 1..n).prop_map(move |(a, d)| SessionType::msg("m", a, (a + d) % n)),
        1 => (0..n).prop_map(|a| parse_session(&format!("b({a})")).unwrap()),
        1 => Just(SessionType::Nil),
    ];
    let body = atom.prop_recursive(3, 12, 3, move |inner| {
        prop_oneof![
            3 => (inner.clone(), inner.clone()).prop_map(|(a, b)| SessionType::append(a, b)),
            1 => (0..n, inner.clone(), inner.clone()).prop_map(|(r, a, b)| SessionType::AConj(r, Box::new(a), Box::new(b))),
            1 => (0..n, inner.clone()).prop_map(|(r, a)| SessionType::Option(r, Box::new(a))),
            1 => (0..n, inner.clone()).prop_map(|(r, a)| SessionType::Repseq(r, Box::new(a))),
        ]
    });
    (body.clone(), proptest::option::of((0..n, body.clone(), body))).prop_map(|(s, tail)| match tail {
        Some((r, a, b)) => SessionType::append(s, SessionType::MConj(r, Box::new(a), Box::new(b))),
        None => s,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_parties_complete_and_stay_relaxed(s in arb_session(3), seed in 0u64..1000, split in 0usize..3) {
        let parties: Vec<RoleSet> = match split {
            0 => vec![rs("{0}"), rs("{1}"), rs("{2}")],
            1 => vec![rs("{0,2}"), rs("{1}")],
            _ => vec![rs("{}"), rs("{2}"), rs("{0,1}")],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let progs: Vec<_> = parties.iter().map(|r| (*r, follow(&s, *r, "ch", 2, &mut rng))).collect();
        let config = Config { tie: TieBreak::Seeded(seed), ..Config::default() };
        let r = Pool::bootstrap(Universe::new(3).unwrap(), &s, &progs, &[], config).unwrap().run();
        prop_assert_eq!(&r.outcome, &Outcome::Completed, "{}", s);
        prop_assert!(r.relaxed_violations().is_empty());
    }
}

#[test]
fn forwarders_are_transparent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let s = random_session(&mut rng, 3, 3);
        let programs = singleton_programs(&s, &mut rng);
        let direct = direct_run(&s, &programs);
        assert_eq!(direct.outcome, Outcome::Completed, "{s}");
        for routed in [cut3_run(&s, &programs), cutres_run(&s, &programs)] {
            assert_eq!(routed.outcome, Outcome::Completed, "{s}");
            assert_eq!(routed.observations, direct.observations, "{s}");
            assert!(routed.relaxed_violations().is_empty());
        }
    }
}
