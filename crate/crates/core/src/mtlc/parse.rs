//! S-expression reader for terms and types.
//!
//! ```text
//! e ::= x | n | "s" | true | false | () | (rc n)
//!     | (pair e e) | (fst e) | (snd e) | (letp (x y) e e) | (let x e e) | (seq e ... e)
//!     | (lam (x T) e) | (app e e) | (fix (f T) e) | (if e e e)
//!     | (inl T e) | (inr T e) | (case e (x e) (y e)) | (the T e) | (c e ...)
//! T ::= bool | int | (int n) | str | unit | (* T T) | (tensor T T) | (+ T T)
//!     | (-> T T) | (-o T T) | (chan {R} "S") | (service {R} "S")
//! ```
//!
//! A program is any number of `(resource n T)` declarations followed by one term.

use std::collections::BTreeMap;

use super::{Const, Expr, MtlcError, Ty};
use crate::roles::RoleSet;
use crate::session::parse_session;

#[derive(Debug, Clone, PartialEq)]
enum Sx {
    Atom(String, usize),
    Str(String, usize),
    List(Vec<Sx>, usize),
}

impl Sx {
    fn pos(&self) -> usize {
        match self {
            Sx::Atom(_, p) | Sx::Str(_, p) | Sx::List(_, p) => *p,
        }
    }
}

fn err<T>(pos: usize, msg: impl Into<String>) -> Result<T, MtlcError> {
    Err(MtlcError::Parse { pos, msg: msg.into() })
}

fn read_all(src: &str) -> Result<Vec<Sx>, MtlcError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut i = 0;
    let mut stack: Vec<(Vec<Sx>, usize)> = vec![(Vec::new(), 0)];
    while i < chars.len() {
        let (pos, c) = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            ';' => {
                while i < chars.len() && chars[i].1 != '\n' {
                    i += 1;
                }
            }
            '(' => {
                if i + 1 < chars.len() && chars[i + 1].1 == ')' {
                    stack.last_mut().expect("stack has a root").0.push(Sx::Atom("()".into(), pos));
                    i += 2;
                } else {
                    stack.push((Vec::new(), pos));
                    i += 1;
                }
            }
            ')' => {
                if stack.len() == 1 {
                    return err(pos, "unbalanced ')'");
                }
                let (items, start) = stack.pop().expect("checked above");
                stack.last_mut().expect("stack has a root").0.push(Sx::List(items, start));
                i += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return err(pos, "unterminated string"),
                        Some((_, '"')) => break,
                        Some((_, '\\')) => {
                            match chars.get(i + 1) {
                                Some((_, 'n')) => s.push('\n'),
                                Some((_, c)) => s.push(*c),
                                None => return err(pos, "unterminated string"),
                            }
                            i += 2;
                        }
                        Some((_, c)) => {
                            s.push(*c);
                            i += 1;
                        }
                    }
                }
                i += 1;
                stack.last_mut().expect("stack has a root").0.push(Sx::Str(s, pos));
            }
            '{' => {
                let mut s = String::new();
                while i < chars.len() && chars[i].1 != '}' {
                    s.push(chars[i].1);
                    i += 1;
                }
                if i == chars.len() {
                    return err(pos, "unterminated role set");
                }
                s.push('}');
                i += 1;
                stack.last_mut().expect("stack has a root").0.push(Sx::Atom(s, pos));
            }
            _ => {
                let mut s = String::new();
                while i < chars.len() && !chars[i].1.is_whitespace() && !"()\";".contains(chars[i].1) {
                    s.push(chars[i].1);
                    i += 1;
                }
                stack.last_mut().expect("stack has a root").0.push(Sx::Atom(s, pos));
            }
        }
    }
    if stack.len() > 1 {
        return err(stack.last().expect("nonempty").1, "unclosed '('");
    }
    Ok(stack.pop().expect("root").0)
}

fn ident(sx: &Sx) -> Result<String, MtlcError> {
    match sx {
        Sx::Atom(a, p) => {
            let ok = a.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
                && a.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '\'');
            if ok {
                Ok(a.clone())
            } else {
                err(*p, format!("expected a variable, got {a:?}"))
            }
        }
        other => err(other.pos(), "expected a variable"),
    }
}

fn roles(sx: &Sx) -> Result<RoleSet, MtlcError> {
    match sx {
        Sx::Atom(a, p) => a.parse().or_else(|e| err(*p, format!("{e}"))),
        other => err(other.pos(), "expected a role set"),
    }
}

fn session(sx: &Sx) -> Result<crate::session::SessionType, MtlcError> {
    match sx {
        Sx::Str(s, p) => parse_session(s).or_else(|e| err(*p, format!("{e}"))),
        other => err(other.pos(), "expected a quoted session type"),
    }
}

fn ty(sx: &Sx) -> Result<Ty, MtlcError> {
    match sx {
        Sx::Atom(a, p) => match a.as_str() {
            "bool" => Ok(Ty::Bool),
            "int" => Ok(Ty::Int),
            "str" => Ok(Ty::Str),
            "unit" | "1" => Ok(Ty::Unit),
            _ => err(*p, format!("unknown type {a:?}")),
        },
        Sx::Str(_, p) => err(*p, "expected a type"),
        Sx::List(items, p) => {
            let head = match items.first() {
                Some(Sx::Atom(h, _)) => h.as_str(),
                _ => return err(*p, "expected a type constructor"),
            };
            let arity = |n: usize| {
                if items.len() == n + 1 {
                    Ok(())
                } else {
                    err(*p, format!("{head} takes {n} arguments"))
                }
            };
            match head {
                "int" => {
                    arity(1)?;
                    match &items[1] {
                        Sx::Atom(n, q) => n.parse().map(Ty::IntIdx).or_else(|_| err(*q, "expected an integer")),
                        other => err(other.pos(), "expected an integer"),
                    }
                }
                "*" | "tensor" | "+" | "->" | "-o" => {
                    arity(2)?;
                    let (a, b) = (ty(&items[1])?, ty(&items[2])?);
                    Ok(match head {
                        "*" => Ty::prod(a, b),
                        "tensor" => Ty::tensor(a, b),
                        "+" => Ty::sum(a, b),
                        "->" => Ty::fun_i(a, b),
                        _ => Ty::fun_l(a, b),
                    })
                }
                "chan" | "service" => {
                    arity(2)?;
                    let (r, s) = (roles(&items[1])?, session(&items[2])?);
                    Ok(if head == "chan" { Ty::chan(r, &s) } else { Ty::service(r, &s) })
                }
                _ => err(*p, format!("unknown type constructor {head:?}")),
            }
        }
    }
}

fn binder(sx: &Sx) -> Result<(String, Ty), MtlcError> {
    match sx {
        Sx::List(items, _) if items.len() == 2 => Ok((ident(&items[0])?, ty(&items[1])?)),
        other => err(other.pos(), "expected (name type)"),
    }
}

fn expr(sx: &Sx) -> Result<Expr, MtlcError> {
    match sx {
        Sx::Str(s, _) => Ok(Expr::Str(s.clone())),
        Sx::Atom(a, p) => match a.as_str() {
            "()" => Ok(Expr::Unit),
            "true" => Ok(Expr::Bool(true)),
            "false" => Ok(Expr::Bool(false)),
            _ if a.starts_with(|c: char| c.is_ascii_digit() || c == '-') => {
                a.parse().map(Expr::Int).or_else(|_| err(*p, format!("bad integer {a:?}")))
            }
            _ => {
                if Const::from_name(a).is_some() {
                    return err(*p, format!("constant {a} must be applied"));
                }
                Ok(Expr::Var(ident(sx)?))
            }
        },
        Sx::List(items, p) => {
            let p = *p;
            let Some(Sx::Atom(head, _)) = items.first() else {
                return err(p, "expected a form");
            };
            let args = &items[1..];
            let arity = |n: usize| {
                if args.len() == n {
                    Ok(())
                } else {
                    err(p, format!("{head} takes {n} arguments, got {}", args.len()))
                }
            };
            let sub = |k: usize| expr(&args[k]).map(Box::new);
            match head.as_str() {
                "rc" => {
                    arity(1)?;
                    match &args[0] {
                        Sx::Atom(n, q) => n.parse().map(Expr::Res).or_else(|_| err(*q, "expected a resource number")),
                        other => err(other.pos(), "expected a resource number"),
                    }
                }
                "pair" => {
                    arity(2)?;
                    Ok(Expr::Pair(sub(0)?, sub(1)?))
                }
                "fst" => {
                    arity(1)?;
                    Ok(Expr::Fst(sub(0)?))
                }
                "snd" => {
                    arity(1)?;
                    Ok(Expr::Snd(sub(0)?))
                }
                "letp" => {
                    arity(3)?;
                    let (a, b) = match &args[0] {
                        Sx::List(xs, _) if xs.len() == 2 => (ident(&xs[0])?, ident(&xs[1])?),
                        other => return err(other.pos(), "expected (x y)"),
                    };
                    Ok(Expr::LetPair(a, b, sub(1)?, sub(2)?))
                }
                "let" => {
                    arity(3)?;
                    Ok(Expr::Let(ident(&args[0])?, sub(1)?, sub(2)?))
                }
                "seq" => {
                    if args.is_empty() {
                        return err(p, "seq needs at least one term");
                    }
                    let mut parts: Vec<Expr> = args.iter().map(expr).collect::<Result<_, _>>()?;
                    let mut acc = parts.pop().expect("nonempty");
                    while let Some(e) = parts.pop() {
                        acc = Expr::let_("_", e, acc);
                    }
                    Ok(acc)
                }
                "lam" => {
                    arity(2)?;
                    let (param, ty) = binder(&args[0])?;
                    Ok(Expr::Lam { param, ty, body: sub(1)? })
                }
                "app" => {
                    if args.len() < 2 {
                        return err(p, "app takes a function and at least one argument");
                    }
                    let mut acc = expr(&args[0])?;
                    for a in &args[1..] {
                        acc = Expr::app(acc, expr(a)?);
                    }
                    Ok(acc)
                }
                "fix" => {
                    arity(2)?;
                    let (name, ty) = binder(&args[0])?;
                    Ok(Expr::Fix { name, ty, body: sub(1)? })
                }
                "if" => {
                    arity(3)?;
                    Ok(Expr::If(sub(0)?, sub(1)?, sub(2)?))
                }
                "inl" | "inr" => {
                    arity(2)?;
                    Ok(Expr::Inj { left: head == "inl", other: ty(&args[0])?, body: sub(1)? })
                }
                "case" => {
                    arity(3)?;
                    let branch = |sx: &Sx| match sx {
                        Sx::List(xs, _) if xs.len() == 2 => Ok((ident(&xs[0])?, Box::new(expr(&xs[1])?))),
                        other => err(other.pos(), "expected (x e)"),
                    };
                    Ok(Expr::Case { scrut: sub(0)?, left: branch(&args[1])?, right: branch(&args[2])? })
                }
                "the" => {
                    arity(2)?;
                    Ok(Expr::The(ty(&args[0])?, sub(1)?))
                }
                "chan_append_exit" => {
                    arity(2)?;
                    Ok(Expr::Call(Const::AppendExit(session(&args[0])?), vec![expr(&args[1])?]))
                }
                name => match Const::from_name(name) {
                    Some(c) => {
                        arity(c.arity())?;
                        Ok(Expr::Call(c, args.iter().map(expr).collect::<Result<_, _>>()?))
                    }
                    None => err(p, format!("unknown form {name:?}")),
                },
            }
        }
    }
}

/// Declared resource signatures and the main term.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub resources: BTreeMap<usize, Ty>,
    pub main: Expr,
}

pub fn parse_program(src: &str) -> Result<Program, MtlcError> {
    let forms = read_all(src)?;
    let Some((last, decls)) = forms.split_last() else {
        return err(0, "empty program");
    };
    let mut resources = BTreeMap::new();
    for d in decls {
        match d {
            Sx::List(items, p) if matches!(items.first(), Some(Sx::Atom(h, _)) if h == "resource") => {
                if items.len() != 3 {
                    return err(*p, "expected (resource n type)");
                }
                let n = match &items[1] {
                    Sx::Atom(n, q) => n.parse().or_else(|_| err(*q, "expected a resource number"))?,
                    other => return err(other.pos(), "expected a resource number"),
                };
                resources.insert(n, ty(&items[2])?);
            }
            other => return err(other.pos(), "only resource declarations may precede the main term"),
        }
    }
    Ok(Program { resources, main: expr(last)? })
}

pub fn parse_expr(src: &str) -> Result<Expr, MtlcError> {
    let forms = read_all(src)?;
    match forms.as_slice() {
        [one] => expr(one),
        _ => err(0, format!("expected one term, found {}", forms.len())),
    }
}

pub fn parse_ty(src: &str) -> Result<Ty, MtlcError> {
    let forms = read_all(src)?;
    match forms.as_slice() {
        [one] => ty(one),
        _ => err(0, "expected one type"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_terms_read_back() {
        let src = r#"(letp (a b) (pair 1 "x") (seq (chan_1_cut (rc 3)) (app (lam (y (chan {0,1} "m(0, 1)@n(1, 0)")) y) (rc 4))))"#;
        let e = parse_expr(src).unwrap();
        assert_eq!(parse_expr(&e.to_string()).unwrap(), e);
    }

    #[test]
    fn types_read_back() {
        for t in ["(-> (* int (int -3)) (-o (tensor bool str) unit))", "(+ (chan {} \"nil\") (service {2} \"m(0, 2)\"))"] {
            let ty = parse_ty(t).unwrap();
            assert_eq!(parse_ty(&ty.to_string()).unwrap(), ty);
        }
    }

    #[test]
    fn errors_carry_positions() {
        assert!(matches!(parse_expr("(pair 1"), Err(MtlcError::Parse { pos: 0, .. })));
        assert!(matches!(parse_expr("(iadd 1)"), Err(MtlcError::Parse { .. })));
        assert!(matches!(parse_expr("(frob 1)"), Err(MtlcError::Parse { .. })));
    }
}
