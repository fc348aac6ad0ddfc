//! The remaining protocol at an endpoint, kept in head-normal form.
//!
//! `nil` on the left of `@` disappears and derived constructors at the head
//! are unfolded one step, so the head is always a primitive constructor.
//! The left spine of `@` is never reassociated, so an explicit append sees
//! the grouping written in the protocol.

use crate::session::SessionType;

pub fn normalize(s: &SessionType) -> SessionType {
    match s {
        SessionType::Append(a, c) => {
            let a = normalize(a);
            if a == SessionType::Nil {
                normalize(c)
            } else {
                SessionType::Append(Box::new(a), c.clone())
            }
        }
        SessionType::Option(..) | SessionType::Repseq(..) | SessionType::Repeat(..) => s.unfold(),
        other => other.clone(),
    }
}

/// Leftmost non-`@` constructor of a normalized cursor.
pub fn head(s: &SessionType) -> &SessionType {
    match s {
        SessionType::Append(a, _) => head(a),
        other => other,
    }
}

fn replace_head(s: &SessionType, f: &dyn Fn(&SessionType) -> SessionType) -> SessionType {
    match s {
        SessionType::Append(a, c) => SessionType::Append(Box::new(replace_head(a, f)), c.clone()),
        other => f(other),
    }
}

/// The cursor after its head message has been exchanged.
pub fn advance_atom(s: &SessionType) -> SessionType {
    normalize(&replace_head(s, &|_| SessionType::Nil))
}

/// The cursor after an additive choice at its head. A loop body chosen
/// under a continuation `C` becomes `body@(loop@C)`, so an explicit append
/// inside one iteration sees exactly that iteration's body.
pub fn choose_branch(s: &SessionType, left: bool) -> SessionType {
    let pick = |h: &SessionType| match h {
        SessionType::AConj(_, a, b) => {
            if left {
                (**a).clone()
            } else {
                (**b).clone()
            }
        }
        other => other.clone(),
    };
    fn splice(s: &SessionType, pick: &dyn Fn(&SessionType) -> SessionType) -> SessionType {
        match s {
            SessionType::Append(a, c) if matches!(**a, SessionType::Append(..)) => {
                SessionType::Append(Box::new(splice(a, pick)), c.clone())
            }
            SessionType::Append(h, c) => match pick(h) {
                SessionType::Append(body, tail) if matches!(*tail, SessionType::Repseq(..)) => {
                    SessionType::Append(body, Box::new(SessionType::Append(tail, c.clone())))
                }
                chosen => SessionType::Append(Box::new(chosen), c.clone()),
            },
            other => pick(other),
        }
    }
    normalize(&splice(s, &pick))
}
