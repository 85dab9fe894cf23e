//! Tokenizer for the action-script language.

use crate::ast::Pos;
use crate::error::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokKind {
    Num(f64),
    Str(String),
    /// Template literal: cooked string chunks interleaved with raw expression
    /// sources. `chunks.len() == exprs.len() + 1`.
    Template {
        chunks: Vec<String>,
        exprs: Vec<(String, Pos)>,
    },
    Ident(String),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub kind: TokKind,
    pub pos: Pos,
    /// A line terminator appeared between the previous token and this one.
    pub nl_before: bool,
}

// Longest first so greedy matching works.
const PUNCTS: &[&str] = &[
    ">>>=", "...", "===", "!==", "**=", "<<=", ">>=", ">>>", "&&=", "||=", "??=", "=>", "==",
    "!=", "<=", ">=", "&&", "||", "??", "?.", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=",
    "|=", "^=", "**", "<<", ">>", "{", "}", "(", ")", "[", "]", ";", ",", "<", ">", "+", "-",
    "*", "/", "%", "&", "|", "^", "!", "~", "?", ":", "=", ".", "@", "#",
];

pub struct Lexer<'a> {
    src: &'a [u8],
    text: &'a str,
    i: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    pub fn new(text: &'a str) -> Self {
        Self::with_origin(text, Pos { line: 1, col: 1 })
    }

    /// Lexes `text` as if it started at `origin` (used for template
    /// substitutions so reported positions point into the outer source).
    pub fn with_origin(text: &'a str, origin: Pos) -> Self {
        Lexer {
            src: text.as_bytes(),
            text,
            i: 0,
            line: origin.line,
            col: origin.col,
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn err(&self, message: impl Into<String>) -> SyntaxError {
        SyntaxError::new(message, self.pos())
    }

    fn peek_char(&self) -> Option<char> {
        self.text[self.i..].chars().next()
    }

    fn peek_char_at(&self, offset: usize) -> Option<char> {
        self.text[self.i..].chars().nth(offset)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek_char()?;
        self.i += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    pub fn tokenize(mut self) -> Result<Vec<Token>, SyntaxError> {
        let mut out = Vec::new();
        loop {
            let nl_before = self.skip_trivia()?;
            let pos = self.pos();
            let Some(c) = self.peek_char() else {
                out.push(Token {
                    kind: TokKind::Eof,
                    pos,
                    nl_before: true,
                });
                return Ok(out);
            };
            let kind = if is_ident_start(c) {
                TokKind::Ident(self.ident())
            } else if c.is_ascii_digit()
                || (c == '.' && self.peek_char_at(1).is_some_and(|d| d.is_ascii_digit()))
            {
                TokKind::Num(self.number()?)
            } else if c == '"' || c == '\'' {
                TokKind::Str(self.string(c)?)
            } else if c == '`' {
                self.template()?
            } else {
                self.punct()?
            };
            out.push(Token {
                kind,
                pos,
                nl_before,
            });
        }
    }

    /// Skips whitespace and comments; reports whether a newline was crossed.
    fn skip_trivia(&mut self) -> Result<bool, SyntaxError> {
        let mut nl = false;
        loop {
            match self.peek_char() {
                Some('\n') | Some('\u{2028}') | Some('\u{2029}') => {
                    nl = true;
                    self.bump();
                }
                Some(c) if c.is_whitespace() || c == '\u{feff}' => {
                    self.bump();
                }
                Some('/') if self.peek_char_at(1) == Some('/') => {
                    while let Some(c) = self.peek_char() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                Some('/') if self.peek_char_at(1) == Some('*') => {
                    let start = self.pos();
                    self.bump();
                    self.bump();
                    loop {
                        match self.bump() {
                            None => {
                                return Err(SyntaxError::new("Unterminated comment", start));
                            }
                            Some('\n') => nl = true,
                            Some('*') if self.peek_char() == Some('/') => {
                                self.bump();
                                break;
                            }
                            _ => {}
                        }
                    }
                }
                _ => return Ok(nl),
            }
        }
    }

    fn ident(&mut self) -> String {
        let start = self.i;
        while let Some(c) = self.peek_char() {
            if is_ident_part(c) {
                self.bump();
            } else {
                break;
            }
        }
        self.text[start..self.i].to_string()
    }

    fn number(&mut self) -> Result<f64, SyntaxError> {
        if self.peek_char() == Some('0') {
            let radix = match self.peek_char_at(1) {
                Some('x') | Some('X') => Some(16),
                Some('o') | Some('O') => Some(8),
                Some('b') | Some('B') => Some(2),
                _ => None,
            };
            if let Some(radix) = radix {
                self.bump();
                self.bump();
                let mut digits = String::new();
                while let Some(c) = self.peek_char() {
                    if c == '_' {
                        self.bump();
                    } else if c.is_digit(radix) {
                        digits.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                if digits.is_empty() {
                    return Err(self.err("Invalid or unexpected token"));
                }
                let mut value = 0f64;
                for d in digits.chars() {
                    value = value * radix as f64 + d.to_digit(radix).unwrap_or(0) as f64;
                }
                return self.finish_number(value);
            }
        }
        let mut s = String::new();
        let mut seen_dot = false;
        let mut seen_exp = false;
        while let Some(c) = self.peek_char() {
            match c {
                '0'..='9' => s.push(c),
                '_' => {}
                '.' if !seen_dot && !seen_exp => {
                    seen_dot = true;
                    s.push(c);
                }
                'e' | 'E' if !seen_exp => {
                    let next = self.peek_char_at(1);
                    let next2 = self.peek_char_at(2);
                    let signed = matches!(next, Some('+') | Some('-'))
                        && next2.is_some_and(|d| d.is_ascii_digit());
                    if !(next.is_some_and(|d| d.is_ascii_digit()) || signed) {
                        break;
                    }
                    seen_exp = true;
                    s.push('e');
                    self.bump();
                    if signed {
                        s.push(self.bump().unwrap_or('+'));
                    }
                    continue;
                }
                _ => break,
            }
            self.bump();
        }
        let value: f64 = s
            .parse()
            .map_err(|_| SyntaxError::new("Invalid number literal", self.pos()))?;
        self.finish_number(value)
    }

    fn finish_number(&mut self, value: f64) -> Result<f64, SyntaxError> {
        match self.peek_char() {
            Some('n') => Err(self.err("BigInt literals are not supported")),
            Some(c) if is_ident_start(c) || c.is_ascii_digit() => {
                Err(self.err("Invalid or unexpected token"))
            }
            _ => Ok(value),
        }
    }

    fn escape(&mut self, out: &mut String) -> Result<(), SyntaxError> {
        let c = self
            .bump()
            .ok_or_else(|| self.err("Invalid or unexpected token"))?;
        match c {
            'n' => out.push('\n'),
            't' => out.push('\t'),
            'r' => out.push('\r'),
            'b' => out.push('\u{8}'),
            'f' => out.push('\u{c}'),
            'v' => out.push('\u{b}'),
            '0' if !self.peek_char().is_some_and(|d| d.is_ascii_digit()) => out.push('\0'),
            'x' => {
                let code = self.hex_digits(2)?;
                out.push(char::from_u32(code).unwrap_or('\u{fffd}'));
            }
            'u' => {
                let code = if self.peek_char() == Some('{') {
                    self.bump();
                    let mut code = 0u32;
                    let mut n = 0;
                    while let Some(c) = self.peek_char() {
                        if c == '}' {
                            break;
                        }
                        let d = c
                            .to_digit(16)
                            .ok_or_else(|| self.err("Invalid Unicode escape sequence"))?;
                        code = code.saturating_mul(16).saturating_add(d);
                        n += 1;
                        self.bump();
                    }
                    if n == 0 || self.bump() != Some('}') {
                        return Err(self.err("Invalid Unicode escape sequence"));
                    }
                    code
                } else {
                    let hi = self.hex_digits(4)?;
                    // Surrogate pair written as two \u escapes.
                    if (0xD800..0xDC00).contains(&hi)
                        && self.peek_char() == Some('\\')
                        && self.peek_char_at(1) == Some('u')
                    {
                        let save = (self.i, self.line, self.col);
                        self.bump();
                        self.bump();
                        let lo = self.hex_digits(4)?;
                        if (0xDC00..0xE000).contains(&lo) {
                            0x10000 + ((hi - 0xD800) << 10) + (lo - 0xDC00)
                        } else {
                            (self.i, self.line, self.col) = save;
                            hi
                        }
                    } else {
                        hi
                    }
                };
                out.push(char::from_u32(code).unwrap_or('\u{fffd}'));
            }
            '\r' => {
                if self.peek_char() == Some('\n') {
                    self.bump();
                }
            }
            '\n' | '\u{2028}' | '\u{2029}' => {}
            other => out.push(other),
        }
        Ok(())
    }

    fn hex_digits(&mut self, n: usize) -> Result<u32, SyntaxError> {
        let mut code = 0u32;
        for _ in 0..n {
            let d = self
                .peek_char()
                .and_then(|c| c.to_digit(16))
                .ok_or_else(|| self.err("Invalid hexadecimal escape sequence"))?;
            code = code * 16 + d;
            self.bump();
        }
        Ok(code)
    }

    fn string(&mut self, quote: char) -> Result<String, SyntaxError> {
        let start = self.pos();
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(SyntaxError::new("Invalid or unexpected token", start)),
                Some('\\') => self.escape(&mut out)?,
                Some(c) if c == quote => return Ok(out),
                Some(c) => out.push(c),
            }
        }
    }

    fn template(&mut self) -> Result<TokKind, SyntaxError> {
        let start = self.pos();
        self.bump();
        let mut chunks = Vec::new();
        let mut exprs = Vec::new();
        let mut cur = String::new();
        loop {
            match self.peek_char() {
                None => return Err(SyntaxError::new("Unterminated template literal", start)),
                Some('`') => {
                    self.bump();
                    chunks.push(cur);
                    return Ok(TokKind::Template { chunks, exprs });
                }
                Some('\\') => {
                    self.bump();
                    self.escape(&mut cur)?;
                }
                Some('$') if self.peek_char_at(1) == Some('{') => {
                    self.bump();
                    self.bump();
                    chunks.push(std::mem::take(&mut cur));
                    let expr_pos = self.pos();
                    let expr_start = self.i;
                    self.skip_balanced_braces(start)?;
                    let src = self.text[expr_start..self.i].to_string();
                    self.bump(); // closing brace
                    exprs.push((src, expr_pos));
                }
                Some(_) => {
                    let c = self.bump().unwrap_or_default();
                    if c == '\r' {
                        if self.peek_char() == Some('\n') {
                            self.bump();
                        }
                        cur.push('\n');
                    } else {
                        cur.push(c);
                    }
                }
            }
        }
    }

    /// Advances to the `}` closing a template substitution, stepping over
    /// nested braces, strings, comments and nested templates.
    fn skip_balanced_braces(&mut self, template_start: Pos) -> Result<(), SyntaxError> {
        let mut depth = 0usize;
        loop {
            let Some(c) = self.peek_char() else {
                return Err(SyntaxError::new(
                    "Unterminated template literal",
                    template_start,
                ));
            };
            match c {
                '{' => {
                    depth += 1;
                    self.bump();
                }
                '}' => {
                    if depth == 0 {
                        return Ok(());
                    }
                    depth -= 1;
                    self.bump();
                }
                '"' | '\'' => {
                    self.string(c)?;
                }
                '`' => {
                    self.template()?;
                }
                '/' if matches!(self.peek_char_at(1), Some('/') | Some('*')) => {
                    self.skip_trivia()?;
                }
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn punct(&mut self) -> Result<TokKind, SyntaxError> {
        let rest = &self.src[self.i..];
        for p in PUNCTS {
            if rest.starts_with(p.as_bytes()) {
                // `a?.5:b` is a conditional, not optional chaining.
                if *p == "?." && rest.get(2).is_some_and(|b| b.is_ascii_digit()) {
                    continue;
                }
                for _ in 0..p.len() {
                    self.bump();
                }
                return Ok(TokKind::Punct(p));
            }
        }
        let c = self.peek_char().unwrap_or('?');
        Err(self.err(format!("Invalid or unexpected token '{c}'")))
    }
}

fn is_ident_start(c: char) -> bool {
    c == '$' || c == '_' || c.is_alphabetic()
}

fn is_ident_part(c: char) -> bool {
    is_ident_start(c) || c.is_alphanumeric() || c == '\u{200c}' || c == '\u{200d}'
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokKind> {
        Lexer::new(src)
            .tokenize()
            .unwrap()
            .into_iter()
            .map(|t| t.kind)
            .collect()
    }

    #[test]
    fn numbers_and_punctuation() {
        assert_eq!(
            kinds("x+=0x1F;.5e1 1_000"),
            vec![
                TokKind::Ident("x".into()),
                TokKind::Punct("+="),
                TokKind::Num(31.0),
                TokKind::Punct(";"),
                TokKind::Num(5.0),
                TokKind::Num(1000.0),
                TokKind::Eof
            ]
        );
    }

    #[test]
    fn optional_chain_vs_conditional() {
        assert_eq!(kinds("a?.b")[1], TokKind::Punct("?."));
        assert_eq!(kinds("a?.5:1")[1], TokKind::Punct("?"));
    }

    #[test]
    fn string_escapes() {
        assert_eq!(
            kinds(r#"'a\nA\x42\u{1F600}'"#)[0],
            TokKind::Str("a\nAB\u{1F600}".into())
        );
    }

    #[test]
    fn template_with_nested_braces() {
        let toks = kinds("`a${ {x:1}.x }b${`c${d}`}`");
        match &toks[0] {
            TokKind::Template { chunks, exprs } => {
                assert_eq!(chunks, &vec!["a".to_string(), "b".into(), "".into()]);
                assert_eq!(exprs[0].0.trim(), "{x:1}.x");
                assert_eq!(exprs[1].0, "`c${d}`");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn newline_flag_and_positions() {
        let toks = Lexer::new("a\n  /* c\n */ b").tokenize().unwrap();
        assert!(toks[1].nl_before);
        assert_eq!(toks[1].pos, Pos { line: 3, col: 5 });
    }

    #[test]
    fn unterminated_string_is_error() {
        let err = Lexer::new("'abc").tokenize().unwrap_err();
        assert_eq!(err.pos, Pos { line: 1, col: 1 });
    }
}
