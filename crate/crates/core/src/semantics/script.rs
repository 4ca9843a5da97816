//! Choice scripts: the resolved nondeterminism of one execution.
//!
//! Text form, one decision per line (`#` starts a comment):
//!
//! ```text
//! state x=0 v=0      optional, first line only
//! loop 2
//! random xc 1        the variable name is optional
//! branch left
//! duration 1/3       or `duration max`
//! ```
//!
//! Inexact values print with a leading `~`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::real::{parse_rational, Real, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decision {
    Branch(Side),
    Random { var: Option<String>, value: Real },
    Duration(Real),
    /// The supremum of admissible durations, computed during replay.
    MaxDuration,
    LoopCount(usize),
}

impl Decision {
    pub fn kind(&self) -> &'static str {
        match self {
            Decision::Branch(_) => "branch",
            Decision::Random { .. } => "random",
            Decision::Duration(_) | Decision::MaxDuration => "duration",
            Decision::LoopCount(_) => "loop",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Branch(Side::Left) => f.write_str("branch left"),
            Decision::Branch(Side::Right) => f.write_str("branch right"),
            Decision::Random { var: Some(x), value } => write!(f, "random {x} {value}"),
            Decision::Random { var: None, value } => write!(f, "random {value}"),
            Decision::Duration(d) => write!(f, "duration {d}"),
            Decision::MaxDuration => f.write_str("duration max"),
            Decision::LoopCount(n) => write!(f, "loop {n}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChoiceScript {
    pub decisions: Vec<Decision>,
}

/// A script file: an optional initial assignment plus decisions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScriptFile {
    pub state: Vec<(String, Real)>,
    pub script: ChoiceScript,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("script line {line}: {message}")]
pub struct ScriptParseError {
    pub line: usize,
    pub message: String,
}

pub fn parse_value(text: &str) -> Option<Real> {
    match text.strip_prefix('~') {
        Some(rest) => rest.parse::<f64>().ok().filter(|x| x.is_finite()).map(Real::inexact),
        None => parse_rational(text).map(Real::Exact),
    }
}

fn parse_decision(words: &[&str]) -> Result<Decision, String> {
    let value = |w: &str| parse_value(w).ok_or_else(|| format!("bad number `{w}`"));
    match words {
        ["branch", "left"] => Ok(Decision::Branch(Side::Left)),
        ["branch", "right"] => Ok(Decision::Branch(Side::Right)),
        ["branch", other] => Err(format!("expected `left` or `right`, found `{other}`")),
        ["random", v] => Ok(Decision::Random { var: None, value: value(v)? }),
        ["random", x, v] => Ok(Decision::Random { var: Some(x.to_string()), value: value(v)? }),
        ["duration", "max"] => Ok(Decision::MaxDuration),
        ["duration", v] => {
            let d = value(v)?;
            if d.is_negative() {
                Err(format!("negative duration `{v}`"))
            } else {
                Ok(Decision::Duration(d))
            }
        }
        ["loop", n] => n.parse().map(Decision::LoopCount).map_err(|_| format!("bad loop count `{n}`")),
        [kw, ..] if ["branch", "random", "duration", "loop"].contains(kw) => Err(format!("wrong number of arguments to `{kw}`")),
        [kw, ..] => Err(format!("unknown decision `{kw}`")),
        [] => Err("empty decision".into()),
    }
}

impl ScriptFile {
    pub fn parse(text: &str) -> Result<ScriptFile, ScriptParseError> {
        let mut file = ScriptFile::default();
        let mut seen_decision = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ScriptParseError { line: i + 1, message };
            let words: Vec<&str> = line.split_whitespace().collect();
            if words[0] == "state" {
                if seen_decision || !file.state.is_empty() {
                    return Err(err("`state` must be the first line".into()));
                }
                for w in &words[1..] {
                    let (name, v) = w.split_once('=').ok_or_else(|| err(format!("expected name=value, found `{w}`")))?;
                    let v = parse_value(v).ok_or_else(|| err(format!("bad number `{v}`")))?;
                    file.state.push((name.to_string(), v));
                }
                continue;
            }
            seen_decision = true;
            file.script.decisions.push(parse_decision(&words).map_err(err)?);
        }
        Ok(file)
    }
}

impl fmt::Display for ScriptFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.state.is_empty() {
            let parts: Vec<String> = self.state.iter().map(|(n, v)| format!("{n}={v}")).collect();
            writeln!(f, "state {}", parts.join(" "))?;
        }
        write!(f, "{}", self.script)
    }
}

impl ChoiceScript {
    pub fn new(decisions: Vec<Decision>) -> Self {
        ChoiceScript { decisions }
    }

    pub fn parse(text: &str) -> Result<ChoiceScript, ScriptParseError> {
        let file = ScriptFile::parse(text)?;
        if !file.state.is_empty() {
            return Err(ScriptParseError { line: 1, message: "unexpected `state` line".into() });
        }
        Ok(file.script)
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn lines(&self) -> Vec<String> {
        self.decisions.iter().map(|d| d.to_string()).collect()
    }

    pub fn concat(&self, other: &ChoiceScript) -> ChoiceScript {
        let mut decisions = self.decisions.clone();
        decisions.extend(other.decisions.iter().cloned());
        ChoiceScript { decisions }
    }

    pub fn is_exact(&self) -> bool {
        self.decisions.iter().all(|d| match d {
            Decision::Random { value, .. } | Decision::Duration(value) => value.is_exact(),
            _ => true,
        })
    }
}

impl fmt::Display for ChoiceScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.decisions {
            writeln!(f, "{d}")?;
        }
        Ok(())
    }
}

impl Serialize for ChoiceScript {
    fn serialize<Ser: Serializer>(&self, s: Ser) -> Result<Ser::Ok, Ser::Error> {
        self.lines().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ChoiceScript {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let lines = Vec::<String>::deserialize(d)?;
        ChoiceScript::parse(&lines.join("\n")).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let text = "state x=0 v=1/3\nloop 2\nrandom xc 1\nrandom ~0.5\nbranch right\nduration 1.25\nduration max\n";
        let file = ScriptFile::parse(text).unwrap();
        assert_eq!(file.script.len(), 6);
        assert_eq!(file.to_string(), text);
        assert_eq!(ScriptFile::parse(&file.to_string()).unwrap(), file);
    }

    #[test]
    fn comments_and_errors() {
        let s = ChoiceScript::parse("# hello\nbranch left # inline\n").unwrap();
        assert_eq!(s.decisions, vec![Decision::Branch(Side::Left)]);
        assert_eq!(ChoiceScript::parse("branch up").unwrap_err().line, 1);
        assert!(ChoiceScript::parse("loop 1\nduration -1").unwrap_err().message.contains("negative"));
        assert!(ChoiceScript::parse("jump").is_err());
        assert!(ScriptFile::parse("loop 1\nstate x=1").is_err());
    }

    #[test]
    fn json_is_list_of_lines() {
        let s = ChoiceScript::new(vec![Decision::LoopCount(1), Decision::Duration(Real::from_int(2))]);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"["loop 1","duration 2"]"#);
        assert_eq!(serde_json::from_str::<ChoiceScript>(&json).unwrap(), s);
    }
}
