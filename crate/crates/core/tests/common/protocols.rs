//! Random protocols, the worked example scripts, and the cut topologies used
//! to compare forwarded runs with direct ones.

use std::rc::Rc;

use multirole::roles::{RoleSet, Universe};
use multirole::runtime::script::{follow, parse_script, Block, Cmd, PARTY_VAR};
use multirole::runtime::{Config, Pool, RunReport};
use multirole::session::{parse_session, Payload, SessionType};
use rand::Rng;

pub const EXAMPLE1: &str = "title(1, 0)@quote(0, 1)@quote(0, 2)@contrib(1, 2)@option(2, proof(2, 0)@receipt(0, 2))";
pub const EXAMPLE2: &str = "userid(0,1)@userid(1,2)@repseq(2,query(2,0)@answer(0,2))@result(2,1)";
pub const EXAMPLE3: &str = "query(0)@(mconj(0, answer(1,0)@score(0,1), answer(2,0)@score(0,2)))";

pub fn example1_script(accept: bool) -> String {
    let (choice, b2_tail) = if accept { ("left", "send ch; recv ch") } else { ("right", "") };
    format!(
        "party {{0}}: recv ch; send ch; send ch; sync ch; offer ch {{ recv ch; send ch }} else {{ }}\n\
         party {{1}}: send ch; recv ch; sync ch; send ch; offer ch {{ sync ch; sync ch }} else {{ }}\n\
         party {{2}}: sync ch; sync ch; recv ch; recv ch; choose ch {choice}; {b2_tail}\n"
    )
}

pub fn example2_script(k: usize) -> String {
    format!(
        "party {{0}}: send ch; sync ch; loop {{ offer ch {{ append ch {{ recv ch; send ch }} }} else {{ break }} }}; sync ch\n\
         party {{1}}: recv ch; send ch; loop {{ offer ch {{ append ch {{ sync ch; sync ch }} }} else {{ break }} }}; recv ch\n\
         party {{2}}: sync ch; recv ch; repeat {k} {{ choose ch left; append ch {{ send ch; recv ch }} }}; choose ch right; send ch\n"
    )
}

pub const EXAMPLE3_SCRIPT: &str = "party {0}: send ch; mconj ch -> a, b; spawn b { recv b; send b }; recv a; send a\n\
                                   party {1}: recv ch; mdisj_l ch -> a | b { sync b; sync b }; send a; recv a\n\
                                   party {2}: recv ch; mdisj_r ch -> b | a { sync a; sync a }; send b; recv b\n";

pub fn example_pool(n: usize, session: &str, script: &str, config: Config) -> Pool {
    let s = parse_session(session).unwrap();
    let script = parse_script(script, None).unwrap();
    Pool::from_script(Universe::new(n).unwrap(), &script, Some(&s), config).unwrap()
}

fn payload<R: Rng>(rng: &mut R) -> Payload {
    match rng.gen_range(0..3) {
        0 => Payload::Unit,
        1 => Payload::Int,
        _ => Payload::Str,
    }
}

fn body<R: Rng>(rng: &mut R, n: usize, depth: usize, fresh: &mut usize) -> SessionType {
    let leaf = depth == 0 || rng.gen_bool(0.3);
    let pick = if leaf { rng.gen_range(0..6) } else { rng.gen_range(0..12) };
    *fresh += 1;
    let label = format!("m{fresh}");
    match pick {
        0..=3 => {
            let from = rng.gen_range(0..n);
            let to = (from + rng.gen_range(1..n)) % n;
            SessionType::Msg { label, from, to, payload: payload(rng) }
        }
        4 => SessionType::Bcast { label, from: rng.gen_range(0..n), payload: payload(rng) },
        5 => SessionType::Nil,
        6..=8 => SessionType::append(body(rng, n, depth - 1, fresh), body(rng, n, depth - 1, fresh)),
        9 => SessionType::AConj(rng.gen_range(0..n), Box::new(body(rng, n, depth - 1, fresh)), Box::new(body(rng, n, depth - 1, fresh))),
        10 => SessionType::Option(rng.gen_range(0..n), Box::new(body(rng, n, depth - 1, fresh))),
        _ => SessionType::Repseq(rng.gen_range(0..n), Box::new(body(rng, n, depth - 1, fresh))),
    }
}

/// A random protocol without gathers. Multiplicative splits and `repeat`
/// appear only in tail position, where the runtime can execute them.
pub fn random_session<R: Rng>(rng: &mut R, n: usize, depth: usize) -> SessionType {
    let mut fresh = 0;
    with_tail(rng, n, depth, &mut fresh)
}

fn with_tail<R: Rng>(rng: &mut R, n: usize, depth: usize, fresh: &mut usize) -> SessionType {
    let head = body(rng, n, depth, fresh);
    if depth == 0 || !rng.gen_bool(0.3) {
        return head;
    }
    let r = rng.gen_range(0..n);
    let tail = if rng.gen_bool(0.7) {
        SessionType::MConj(r, Box::new(with_tail(rng, n, depth - 1, fresh)), Box::new(with_tail(rng, n, depth - 1, fresh)))
    } else {
        SessionType::Repeat(r, Box::new(body(rng, n, depth - 1, fresh)))
    };
    SessionType::append(head, tail)
}

/// A random partition of the roles `0..n` into nonempty parts.
pub fn random_partition<R: Rng>(rng: &mut R, n: usize) -> Vec<RoleSet> {
    let k = rng.gen_range(1..=n);
    let mut parts = vec![RoleSet::default(); k];
    for r in 0..n {
        let slot = if r < k { r } else { rng.gen_range(0..k) };
        parts[slot] = parts[slot].union(RoleSet::singleton(r));
    }
    parts
}

/// One program per role for a three-role protocol, with fixed random choices.
pub fn singleton_programs<R: Rng>(s: &SessionType, rng: &mut R) -> Vec<Block> {
    (0..3).map(|r| follow(s, RoleSet::singleton(r), PARTY_VAR, 2, rng)).collect()
}

pub fn direct_run(s: &SessionType, programs: &[Block]) -> RunReport {
    let parties: Vec<(RoleSet, Block)> = programs.iter().enumerate().map(|(r, b)| (RoleSet::singleton(r), b.clone())).collect();
    Pool::bootstrap(Universe::new(3).unwrap(), s, &parties, &[], Config::default()).unwrap().run()
}

fn create(var: &str, role: usize, s: &SessionType, body: &Block) -> Cmd {
    Cmd::Create { var: var.into(), roles: RoleSet::singleton(role), session: s.clone(), give: PARTY_VAR.into(), body: body.clone() }
}

/// Each role on its own two-endpoint channel; the main thread merges the
/// three channels with a 3-cut.
pub fn cut3_run(s: &SessionType, programs: &[Block]) -> RunReport {
    let main = vec![
        create("c0", 0, s, &programs[0]),
        create("c1", 1, s, &programs[1]),
        create("c2", 2, s, &programs[2]),
        Cmd::Cut3("c0".into(), "c1".into(), "c2".into()),
    ];
    Pool::new(Universe::new(3).unwrap(), Rc::new(main), &[], Config::default()).run()
}

/// Roles 0 and 1 on their own channels, merged by a 2-cut with residual
/// whose `{2}` endpoint the main thread then plays.
pub fn cutres_run(s: &SessionType, programs: &[Block]) -> RunReport {
    let mut main = vec![
        create("c0", 0, s, &programs[0]),
        create("c1", 1, s, &programs[1]),
        Cmd::CutRes { a: "c0".into(), b: "c1".into(), residual: PARTY_VAR.into() },
    ];
    main.extend(programs[2].iter().cloned());
    Pool::new(Universe::new(3).unwrap(), Rc::new(main), &[], Config::default()).run()
}
