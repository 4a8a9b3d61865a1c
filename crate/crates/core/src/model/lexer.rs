//! Tokenizer shared by the system DSL and the property language.

use std::fmt;

use num_bigint::BigInt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(BigInt),
    Semi,
    Comma,
    Colon,
    Assign,
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
    Ne,
    AndAnd,
    OrOr,
    Bang,
    Arrow,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(i) => write!(f, "`{i}`"),
            other => {
                let s = match other {
                    Tok::Semi => ";",
                    Tok::Comma => ",",
                    Tok::Colon => ":",
                    Tok::Assign => ":=",
                    Tok::LParen => "(",
                    Tok::RParen => ")",
                    Tok::Plus => "+",
                    Tok::Minus => "-",
                    Tok::Star => "*",
                    Tok::Le => "<=",
                    Tok::Lt => "<",
                    Tok::Ge => ">=",
                    Tok::Gt => ">",
                    Tok::Eq => "=",
                    Tok::Ne => "!=",
                    Tok::AndAnd => "&&",
                    Tok::OrOr => "||",
                    Tok::Bang => "!",
                    Tok::Arrow => "->",
                    Tok::Ident(_) | Tok::Int(_) => unreachable!(),
                };
                write!(f, "`{s}`")
            }
        }
    }
}

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spanned {
    pub tok: Tok,
    pub pos: Pos,
}

/// Splits `src` into tokens. `#` and `//` start line comments.
pub fn tokenize(src: &str) -> Result<Vec<Spanned>, (Pos, String)> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        let next = chars.get(i + 1).copied();
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' || (c == '/' && next == Some('/')) {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Spanned { tok: Tok::Int(text.parse().expect("digits")), pos });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Spanned { tok: Tok::Ident(text), pos });
            continue;
        }
        let (tok, width) = match (c, next) {
            (':', Some('=')) => (Tok::Assign, 2),
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('!', Some('=')) => (Tok::Ne, 2),
            ('=', Some('=')) => (Tok::Eq, 2),
            ('&', Some('&')) => (Tok::AndAnd, 2),
            ('|', Some('|')) => (Tok::OrOr, 2),
            ('-', Some('>')) => (Tok::Arrow, 2),
            (';', _) => (Tok::Semi, 1),
            (',', _) => (Tok::Comma, 1),
            (':', _) => (Tok::Colon, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            ('=', _) => (Tok::Eq, 1),
            ('!', _) => (Tok::Bang, 1),
            _ => return Err((pos, format!("unexpected character `{c}`"))),
        };
        out.push(Spanned { tok, pos });
        i += width;
        col += width;
    }
    Ok(out)
}

/// Cursor over a token stream.
pub(crate) struct Cursor {
    toks: Vec<Spanned>,
    at: usize,
    end: Pos,
}

impl Cursor {
    pub(crate) fn new(toks: Vec<Spanned>, src: &str) -> Cursor {
        let line = src.lines().count().max(1);
        let col = src.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
        Cursor { toks, at: 0, end: Pos { line, col } }
    }

    pub(crate) fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|s| &s.tok)
    }

    pub(crate) fn pos(&self) -> Pos {
        self.toks.get(self.at).map(|s| s.pos).unwrap_or(self.end)
    }

    pub(crate) fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|s| s.tok.clone());
        if t.is_some() {
            self.at += 1;
        }
        t
    }

    pub(crate) fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    pub(crate) fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == kw) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    pub(crate) fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    pub(crate) fn offset(&self) -> usize {
        self.at
    }

    pub(crate) fn seek(&mut self, at: usize) {
        self.at = at;
    }

    pub(crate) fn at_end(&self) -> bool {
        self.at >= self.toks.len()
    }

    pub(crate) fn describe_next(&self) -> String {
        match self.peek() {
            Some(t) => t.to_string(),
            None => "end of input".to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_positions() {
        let toks = tokenize("x := 2*x - y; # comment\n  b <= 3").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(kinds[1], Tok::Assign);
        assert_eq!(kinds[3], Tok::Star);
        assert_eq!(toks.last().unwrap().pos, Pos { line: 2, col: 8 });
    }

    #[test]
    fn rejects_stray_characters() {
        let err = tokenize("x @ y").unwrap_err();
        assert_eq!(err.0, Pos { line: 1, col: 3 });
    }
}
