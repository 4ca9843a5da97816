use num_traits::Signed;

use crate::ast::{CmpOp, DlFormula, FolFormula, HybridProgram, Term};
use crate::model::{Domain, Model};
use crate::real::{format_rational, terminating_decimal};

// Term precedence levels.
const T_SUM: u8 = 1;
const T_PRODUCT: u8 = 2;
const T_UNARY: u8 = 3;
const T_POWER: u8 = 4;
const T_ATOM: u8 = 5;

pub fn print_term(t: &Term) -> String {
    term(t, T_SUM)
}

fn term_level(t: &Term) -> u8 {
    match t {
        Term::Var(_) => T_ATOM,
        Term::Const(c) => {
            if c.is_negative() {
                T_UNARY
            } else {
                T_ATOM
            }
        }
        Term::Add(..) | Term::Sub(..) => T_SUM,
        Term::Mul(..) | Term::Div(..) => T_PRODUCT,
        Term::Neg(_) => T_UNARY,
        Term::Pow(..) => T_POWER,
    }
}

fn term(t: &Term, min: u8) -> String {
    let text = match t {
        Term::Var(v) => v.clone(),
        Term::Const(c) => match terminating_decimal(c) {
            Some(s) => s,
            // Not re-readable as a single constant; parses back as a quotient.
            None => format!("({})", format_rational(c)),
        },
        Term::Add(a, b) => format!("{} + {}", term(a, T_SUM), term(b, T_PRODUCT)),
        Term::Sub(a, b) => format!("{} - {}", term(a, T_SUM), term(b, T_PRODUCT)),
        Term::Mul(a, b) => format!("{}*{}", term(a, T_PRODUCT), term(b, T_UNARY)),
        Term::Div(a, b) => format!("{}/{}", term(a, T_PRODUCT), term(b, T_UNARY)),
        Term::Neg(a) => match &**a {
            Term::Const(c) if !c.is_negative() => format!("-({})", term(a, T_SUM)),
            _ => format!("-{}", term(a, T_UNARY)),
        },
        Term::Pow(a, n) => format!("{}^{}", term(a, T_ATOM), n),
    };
    if term_level(t) < min {
        format!("({text})")
    } else {
        text
    }
}

// Formula precedence levels.
const F_IFF: u8 = 1;
const F_IMPLIES: u8 = 2;
const F_OR: u8 = 3;
const F_AND: u8 = 4;
const F_UNARY: u8 = 5;

pub fn print_fol(f: &FolFormula) -> String {
    fol(f, F_IFF, true)
}

pub fn print_dl(f: &DlFormula) -> String {
    dl(f, F_IFF, true)
}

fn paren_if(cond: bool, text: String) -> String {
    if cond {
        format!("({text})")
    } else {
        text
    }
}

fn cmp(op: CmpOp, a: &Term, b: &Term) -> String {
    format!("{} {} {}", print_term(a), op.symbol(), print_term(b))
}

fn fol(f: &FolFormula, min: u8, rightmost: bool) -> String {
    match f {
        FolFormula::True => "true".into(),
        FolFormula::False => "false".into(),
        FolFormula::Cmp(op, a, b) => cmp(*op, a, b),
        FolFormula::Not(a) => match &**a {
            FolFormula::Cmp(op, l, r) => format!("!({})", cmp(*op, l, r)),
            _ => format!("!{}", fol(a, F_UNARY, rightmost)),
        },
        FolFormula::And(a, b) => {
            paren_if(min > F_AND, format!("{} & {}", fol(a, F_AND, false), fol(b, F_UNARY, rightmost || min > F_AND)))
        }
        FolFormula::Or(a, b) => {
            paren_if(min > F_OR, format!("{} | {}", fol(a, F_OR, false), fol(b, F_AND, rightmost || min > F_OR)))
        }
        FolFormula::Implies(a, b) => paren_if(
            min > F_IMPLIES,
            format!("{} -> {}", fol(a, F_OR, false), fol(b, F_IMPLIES, rightmost || min > F_IMPLIES)),
        ),
        FolFormula::Iff(a, b) => {
            paren_if(min > F_IFF, format!("{} <-> {}", fol(a, F_IFF, false), fol(b, F_IMPLIES, rightmost || min > F_IFF)))
        }
        FolFormula::Forall(v, body) => paren_if(!rightmost, format!("forall {v} {}", fol(body, F_IFF, true))),
        FolFormula::Exists(v, body) => paren_if(!rightmost, format!("exists {v} {}", fol(body, F_IFF, true))),
    }
}

fn dl(f: &DlFormula, min: u8, rightmost: bool) -> String {
    match f {
        DlFormula::Lifted(g) => fol(g, min, rightmost),
        DlFormula::Box(p, post) => paren_if(!rightmost, format!("[{}] {}", print_program(p), dl(post, F_IFF, true))),
        DlFormula::Diamond(p, post) => paren_if(!rightmost, format!("<{}> {}", print_program(p), dl(post, F_IFF, true))),
        DlFormula::Not(a) => format!("!{}", dl(a, F_UNARY, rightmost)),
        DlFormula::And(a, b) => {
            paren_if(min > F_AND, format!("{} & {}", dl(a, F_AND, false), dl(b, F_UNARY, rightmost || min > F_AND)))
        }
        DlFormula::Or(a, b) => {
            paren_if(min > F_OR, format!("{} | {}", dl(a, F_OR, false), dl(b, F_AND, rightmost || min > F_OR)))
        }
        DlFormula::Implies(a, b) => paren_if(
            min > F_IMPLIES,
            format!("{} -> {}", dl(a, F_OR, false), dl(b, F_IMPLIES, rightmost || min > F_IMPLIES)),
        ),
        DlFormula::Forall(v, body) => paren_if(!rightmost, format!("forall {v} {}", dl(body, F_IFF, true))),
        DlFormula::Exists(v, body) => paren_if(!rightmost, format!("exists {v} {}", dl(body, F_IFF, true))),
    }
}

// Program precedence levels.
const P_CHOICE: u8 = 1;
const P_SEQ: u8 = 2;
const P_ATOM: u8 = 3;

pub fn print_program(p: &HybridProgram) -> String {
    program(p, P_CHOICE)
}

fn program(p: &HybridProgram, min: u8) -> String {
    let (level, text) = match p {
        HybridProgram::Assign(x, t) => (P_ATOM, format!("{x} := {}", print_term(t))),
        HybridProgram::RandomAssign(x) => (P_ATOM, format!("{x} := *")),
        HybridProgram::Test(FolFormula::True) => (P_ATOM, "?true".into()),
        HybridProgram::Test(FolFormula::False) => (P_ATOM, "?false".into()),
        HybridProgram::Test(q) => (P_ATOM, format!("?({})", print_fol(q))),
        HybridProgram::Ode(ode) => {
            let eqs: Vec<String> = ode.equations.iter().map(|(x, t)| format!("{x}' = {}", print_term(t))).collect();
            let text = match &ode.domain {
                FolFormula::True => format!("{{{}}}", eqs.join(", ")),
                q => format!("{{{} & {}}}", eqs.join(", "), print_fol(q)),
            };
            (P_ATOM, text)
        }
        HybridProgram::Choice(a, b) => match p.as_if() {
            Some((cond, body)) => (P_ATOM, format!("if ({}) {{{}}}", print_fol(cond), print_program(body))),
            None => (P_CHOICE, format!("{} ++ {}", program(a, P_SEQ), program(b, P_CHOICE))),
        },
        HybridProgram::Seq(a, b) => (P_SEQ, format!("{}; {}", program(a, P_ATOM), program(b, P_SEQ))),
        HybridProgram::Loop(a) => match &**a {
            HybridProgram::Ode(_) => (P_ATOM, format!("{}*", program(a, P_ATOM))),
            _ => (P_ATOM, format!("{{{}}}*", print_program(a))),
        },
    };
    if level < min {
        format!("{{{text}}}")
    } else {
        text
    }
}

/// Render a model in the sectioned file format accepted by
/// [`super::parse_model`].
pub fn print_model(model: &Model) -> String {
    let mut out = String::new();
    out.push_str("CONSTANTS\n");
    for c in &model.constants {
        out.push_str(&format!("  {} = {}\n", c.name, format_rational(&c.value)));
    }
    if !model.domains.is_empty() {
        out.push_str("DOMAINS\n");
        for (name, domain) in &model.domains {
            let text = match domain {
                Domain::Interval { lo, hi } => format!("[{}, {}]", print_term(lo), print_term(hi)),
                Domain::Finite(values) => {
                    let items: Vec<String> = values.iter().map(print_term).collect();
                    format!("{{{}}}", items.join(", "))
                }
            };
            out.push_str(&format!("  {name} in {text}\n"));
        }
    }
    let sections = [
        ("INIT", print_fol(&model.init)),
        ("GUARANTEE", print_fol(&model.guarantee)),
        ("ENV", print_program(&model.env)),
        ("AUX", print_program(&model.aux)),
        ("CTRL", print_program(&model.ctrl)),
        ("PLANT", print_program(&model.plant)),
    ];
    for (name, body) in sections {
        out.push_str(&format!("{name}\n  {body}\n"));
    }
    for (name, zeta) in &model.invariants {
        out.push_str(&format!("INVARIANT {name}\n  {}\n", print_fol(zeta)));
    }
    if let Some(rel) = &model.relation {
        out.push_str(&format!("RELATION {} {}\n  {}\n", rel.env_var, rel.successor, print_fol(&rel.formula)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_formula, parse_program, parse_term};

    #[test]
    fn terms_print_minimally() {
        for text in ["x + y*z", "(x + y)*z", "x - (y - z)", "-x^2", "(-3)^2", "-(3)", "x*-y", "v^2/(2*anmin)", "(x^2)^3", "a - -1"] {
            let t = parse_term(text).unwrap();
            assert_eq!(print_term(&t), text);
        }
    }

    #[test]
    fn formulas_print_minimally() {
        for text in [
            "x >= 0 & y >= 0 -> z >= 0",
            "(x >= 0 -> y >= 0) -> z >= 0",
            "!(x >= 0) | y = 1",
            "(forall x x >= y) & y >= 0",
            "x >= 0 & forall y y >= x",
            "[x := 1; y := *] x > y",
            "([x := 1] x > 0) & <{x' = 1 & x <= 2}*> x = 2",
            "x >= 0 <-> y >= 0 <-> z >= 0",
        ] {
            let f = parse_formula(text).unwrap();
            assert_eq!(print_dl(&f), text);
        }
    }

    #[test]
    fn programs_print_minimally() {
        for text in [
            "x := 1; y := 2; z := 3",
            "{x := 1; y := 2}; z := 3",
            "x := 1 ++ y := 2 ++ z := 3",
            "{x := 1 ++ y := 2} ++ z := 3",
            "{x := 1 ++ y := 2}; z := 3",
            "if (x > 0) {y := 1}",
            "{x := *}*",
            "tau := 0; {x' = v, v' = a, tau' = 1 & v >= 0 & tau <= T}",
            "?true; ?(x >= 0)",
        ] {
            let p = parse_program(text).unwrap();
            assert_eq!(print_program(&p), text);
        }
    }
}
