use super::{ParseError, SourceSpan};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Number(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    Amp,
    Bar,
    Bang,
    Arrow,
    Iff,
    Assign,
    Star,
    Question,
    Semi,
    PlusPlus,
    Comma,
    Plus,
    Minus,
    Slash,
    Caret,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Eq => "=",
            Tok::Ne => "!=",
            Tok::Amp => "&",
            Tok::Bar => "|",
            Tok::Bang => "!",
            Tok::Arrow => "->",
            Tok::Iff => "<->",
            Tok::Assign => ":=",
            Tok::Star => "*",
            Tok::Question => "?",
            Tok::Semi => ";",
            Tok::PlusPlus => "++",
            Tok::Comma => ",",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Slash => "/",
            Tok::Caret => "^",
            Tok::Ident(_) | Tok::Number(_) | Tok::Eof => "",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub start: usize,
    pub end: usize,
}

/// Tokenise `text`; offsets are shifted by `base` so spans refer to the
/// enclosing document.
pub fn tokenize(text: &str, base: usize, doc: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            while i < bytes.len() && bytes[i] == b'\'' {
                i += 1;
            }
            Tok::Ident(text[start..i].to_string())
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            Tok::Number(text[start..i].to_string())
        } else {
            let next = bytes.get(i + 1).copied();
            let (tok, len) = match (c, next) {
                (b'<', Some(b'-')) if bytes.get(i + 2) == Some(&b'>') => (Tok::Iff, 3),
                (b'<', Some(b'=')) => (Tok::Le, 2),
                (b'>', Some(b'=')) => (Tok::Ge, 2),
                (b'!', Some(b'=')) => (Tok::Ne, 2),
                (b'-', Some(b'>')) => (Tok::Arrow, 2),
                (b':', Some(b'=')) => (Tok::Assign, 2),
                (b'+', Some(b'+')) => (Tok::PlusPlus, 2),
                (b'<', _) => (Tok::Lt, 1),
                (b'>', _) => (Tok::Gt, 1),
                (b'=', _) => (Tok::Eq, 1),
                (b'!', _) => (Tok::Bang, 1),
                (b'(', _) => (Tok::LParen, 1),
                (b')', _) => (Tok::RParen, 1),
                (b'[', _) => (Tok::LBracket, 1),
                (b']', _) => (Tok::RBracket, 1),
                (b'{', _) => (Tok::LBrace, 1),
                (b'}', _) => (Tok::RBrace, 1),
                (b'&', _) => (Tok::Amp, 1),
                (b'|', _) => (Tok::Bar, 1),
                (b'*', _) => (Tok::Star, 1),
                (b'?', _) => (Tok::Question, 1),
                (b';', _) => (Tok::Semi, 1),
                (b',', _) => (Tok::Comma, 1),
                (b'+', _) => (Tok::Plus, 1),
                (b'-', _) => (Tok::Minus, 1),
                (b'/', _) => (Tok::Slash, 1),
                (b'^', _) => (Tok::Caret, 1),
                _ => {
                    let ch = text[i..].chars().next().unwrap_or('?');
                    return Err(ParseError::new(
                        format!("unexpected character `{ch}`"),
                        SourceSpan::locate(doc, base + i, base + i + ch.len_utf8()),
                    ));
                }
            };
            i += len;
            tok
        };
        out.push(Token { tok, start: base + start, end: base + i });
    }
    out.push(Token { tok: Tok::Eof, start: base + bytes.len(), end: base + bytes.len() });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s, 0, s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn longest_match_operators() {
        assert_eq!(toks("a<->b"), vec![Tok::Ident("a".into()), Tok::Iff, Tok::Ident("b".into()), Tok::Eof]);
        assert_eq!(toks("x <-1"), vec![Tok::Ident("x".into()), Tok::Lt, Tok::Minus, Tok::Number("1".into()), Tok::Eof]);
        assert_eq!(toks("x' = v"), vec![Tok::Ident("x'".into()), Tok::Eq, Tok::Ident("v".into()), Tok::Eof]);
        assert_eq!(toks("a ++ b # note"), vec![Tok::Ident("a".into()), Tok::PlusPlus, Tok::Ident("b".into()), Tok::Eof]);
    }

    #[test]
    fn bad_character_has_span() {
        let err = tokenize("x := $", 0, "x := $").unwrap_err();
        assert_eq!(err.span.start, 5);
        assert_eq!(err.span.col, 6);
    }
}
