//! Tokenizer. The parser drives regex and template re-scanning, so the lexer
//! itself never guesses whether `/` starts a regular expression.

use crate::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident,
    PrivateName,
    Num,
    Str,
    /// Template chunk. `tail` is true when it ends with a backtick.
    Template {
        tail: bool,
    },
    Regex,
    Punct,
    Eof,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: Tok,
    pub start: usize,
    pub end: usize,
    /// A line terminator occurs between the previous token and this one.
    pub nl_before: bool,
    /// Identifier text with escapes decoded; punctuator text otherwise.
    pub text: String,
    /// Identifier contained a unicode escape (so it cannot act as a keyword).
    pub escaped: bool,
}

impl Token {
    pub fn is(&self, punct: &str) -> bool {
        self.kind == Tok::Punct && self.text == punct
    }

    pub fn is_word(&self, word: &str) -> bool {
        self.kind == Tok::Ident && !self.escaped && self.text == word
    }
}

const PUNCTUATORS: &[&str] = &[
    ">>>=", "...", "===", "!==", "**=", "<<=", ">>=", ">>>", "&&=", "||=", "??=", "=>", "==", "!=",
    "<=", ">=", "&&", "||", "??", "?.", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "<<", ">>", "**", "{", "}", "(", ")", "[", "]", ";", ",", "<", ">", "+", "-", "*", "/", "%",
    "&", "|", "^", "!", "~", "?", ":", "=", ".", "@",
];

pub(crate) struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

fn is_line_terminator(c: char) -> bool {
    matches!(c, '\n' | '\r' | '\u{2028}' | '\u{2029}')
}

fn is_id_start(c: char) -> bool {
    c == '$' || c == '_' || c.is_ascii_alphabetic() || (!c.is_ascii() && c.is_alphabetic())
}

fn is_id_continue(c: char) -> bool {
    is_id_start(c)
        || c.is_ascii_digit()
        || c == '\u{200c}'
        || c == '\u{200d}'
        || (!c.is_ascii() && c.is_alphanumeric())
}

impl<'a> Lexer<'a> {
    pub fn new(src: &'a str) -> Self {
        let mut lexer = Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
        };
        if src.starts_with("#!") {
            while let Some(c) = lexer.peek_char() {
                if is_line_terminator(c) {
                    break;
                }
                lexer.pos += c.len_utf8();
            }
        }
        lexer
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn reset(&mut self, pos: usize) {
        self.pos = pos;
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn char_at(&self, offset: usize) -> Option<char> {
        self.src.get(self.pos + offset..)?.chars().next()
    }

    fn err(&self, offset: usize, msg: impl Into<String>) -> ParseError {
        ParseError::new(offset, msg)
    }

    /// Skips whitespace and comments; returns whether a newline was crossed.
    fn skip_trivia(&mut self) -> Result<bool, ParseError> {
        let mut nl = false;
        while let Some(c) = self.peek_char() {
            if is_line_terminator(c) {
                nl = true;
                self.pos += c.len_utf8();
            } else if c.is_whitespace() || c == '\u{feff}' {
                self.pos += c.len_utf8();
            } else if c == '/' && self.char_at(1) == Some('/') {
                self.skip_line();
            } else if c == '/' && self.char_at(1) == Some('*') {
                let start = self.pos;
                let rest = &self.src[self.pos + 2..];
                match rest.find("*/") {
                    Some(idx) => {
                        if rest[..idx].chars().any(is_line_terminator) {
                            nl = true;
                        }
                        self.pos += 2 + idx + 2;
                    }
                    None => return Err(self.err(start, "unterminated comment")),
                }
            } else if (c == '<' && self.src[self.pos..].starts_with("<!--"))
                || (c == '-' && nl && self.src[self.pos..].starts_with("-->"))
            {
                // HTML-like comments run to the end of the line.
                self.skip_line();
            } else {
                break;
            }
        }
        Ok(nl)
    }

    fn skip_line(&mut self) {
        while let Some(c) = self.peek_char() {
            if is_line_terminator(c) {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    pub fn next_token(&mut self) -> Result<Token, ParseError> {
        let nl_before = self.skip_trivia()?;
        let start = self.pos;
        let Some(c) = self.peek_char() else {
            return Ok(self.token(Tok::Eof, start, nl_before, String::new()));
        };
        if is_id_start(c) || c == '\\' {
            let (text, escaped) = self.read_ident_name()?;
            let mut tok = self.token(Tok::Ident, start, nl_before, text);
            tok.escaped = escaped;
            return Ok(tok);
        }
        if c == '#' {
            self.pos += 1;
            match self.peek_char() {
                Some(n) if is_id_start(n) || n == '\\' => {
                    let (text, _) = self.read_ident_name()?;
                    return Ok(self.token(Tok::PrivateName, start, nl_before, text));
                }
                _ => return Err(self.err(start, "unexpected `#`")),
            }
        }
        if c.is_ascii_digit() || (c == '.' && self.char_at(1).is_some_and(|d| d.is_ascii_digit())) {
            self.read_number()?;
            let text = self.src[start..self.pos].to_string();
            return Ok(self.token(Tok::Num, start, nl_before, text));
        }
        if c == '"' || c == '\'' {
            self.read_string(c)?;
            return Ok(self.token(Tok::Str, start, nl_before, String::new()));
        }
        if c == '`' {
            self.pos += 1;
            let tail = self.read_template_chars(start)?;
            return Ok(self.token(Tok::Template { tail }, start, nl_before, String::new()));
        }
        let rest = &self.src[self.pos..];
        for p in PUNCTUATORS {
            if rest.starts_with(p) {
                // `?.5` is a conditional followed by a number
                if *p == "?." && rest[2..].starts_with(|d: char| d.is_ascii_digit()) {
                    continue;
                }
                self.pos += p.len();
                return Ok(self.token(Tok::Punct, start, nl_before, (*p).to_string()));
            }
        }
        Err(self.err(start, format!("unexpected character {c:?}")))
    }

    fn token(&self, kind: Tok, start: usize, nl_before: bool, text: String) -> Token {
        Token {
            kind,
            start,
            end: self.pos,
            nl_before,
            text,
            escaped: false,
        }
    }

    fn read_ident_name(&mut self) -> Result<(String, bool), ParseError> {
        let mut out = String::new();
        let mut escaped = false;
        let mut first = true;
        while let Some(c) = self.peek_char() {
            if c == '\\' {
                let at = self.pos;
                if self.char_at(1) != Some('u') {
                    return Err(self.err(at, "invalid escape in identifier"));
                }
                self.pos += 2;
                let decoded = self.read_unicode_escape_body(at)?;
                let ok = if first {
                    is_id_start(decoded)
                } else {
                    is_id_continue(decoded)
                };
                if !ok {
                    return Err(self.err(at, "invalid identifier escape"));
                }
                out.push(decoded);
                escaped = true;
            } else if (first && is_id_start(c)) || (!first && is_id_continue(c)) {
                out.push(c);
                self.pos += c.len_utf8();
            } else {
                break;
            }
            first = false;
        }
        Ok((out, escaped))
    }

    /// Reads `XXXX` or `{X...}` after `\u`.
    fn read_unicode_escape_body(&mut self, at: usize) -> Result<char, ParseError> {
        let digits: &str;
        if self.peek_char() == Some('{') {
            let rest = &self.src[self.pos + 1..];
            let close = rest
                .find('}')
                .ok_or_else(|| self.err(at, "unterminated unicode escape"))?;
            digits = &rest[..close];
            self.pos += close + 2;
        } else {
            digits = self
                .src
                .get(self.pos..self.pos + 4)
                .ok_or_else(|| self.err(at, "short unicode escape"))?;
            self.pos += 4;
        }
        if digits.is_empty() || !digits.chars().all(|d| d.is_ascii_hexdigit()) {
            return Err(self.err(at, "malformed unicode escape"));
        }
        u32::from_str_radix(digits, 16)
            .ok()
            .and_then(char::from_u32)
            .ok_or_else(|| self.err(at, "unicode escape out of range"))
    }

    fn read_number(&mut self) -> Result<(), ParseError> {
        let start = self.pos;
        let b = self.bytes;
        let digits = |lexer: &mut Self, pred: fn(u8) -> bool| {
            while lexer.pos < b.len() && (pred(b[lexer.pos]) || b[lexer.pos] == b'_') {
                lexer.pos += 1;
            }
        };
        if b[self.pos] == b'0'
            && self.pos + 1 < b.len()
            && matches!(b[self.pos + 1] | 0x20, b'x' | b'o' | b'b')
        {
            let radix = b[self.pos + 1] | 0x20;
            self.pos += 2;
            let before = self.pos;
            match radix {
                b'x' => digits(self, |c| c.is_ascii_hexdigit()),
                b'o' => digits(self, |c| (b'0'..=b'7').contains(&c)),
                _ => digits(self, |c| c == b'0' || c == b'1'),
            }
            if self.pos == before {
                return Err(self.err(start, "missing digits after radix prefix"));
            }
            if self.pos < b.len() && b[self.pos] == b'n' {
                self.pos += 1;
            }
        } else {
            digits(self, |c| c.is_ascii_digit());
            if self.pos < b.len() && b[self.pos] == b'n' {
                self.pos += 1;
            } else {
                if self.pos < b.len() && b[self.pos] == b'.' {
                    self.pos += 1;
                    digits(self, |c| c.is_ascii_digit());
                }
                if self.pos < b.len() && (b[self.pos] | 0x20) == b'e' {
                    let save = self.pos;
                    self.pos += 1;
                    if self.pos < b.len() && (b[self.pos] == b'+' || b[self.pos] == b'-') {
                        self.pos += 1;
                    }
                    let before = self.pos;
                    digits(self, |c| c.is_ascii_digit());
                    if self.pos == before {
                        self.pos = save;
                        return Err(self.err(start, "missing exponent digits"));
                    }
                }
            }
        }
        if let Some(c) = self.peek_char() {
            if is_id_start(c) || c.is_ascii_digit() {
                return Err(self.err(self.pos, "identifier directly after number"));
            }
        }
        Ok(())
    }

    fn read_string(&mut self, quote: char) -> Result<(), ParseError> {
        let start = self.pos;
        self.pos += 1;
        loop {
            let Some(c) = self.peek_char() else {
                return Err(self.err(start, "unterminated string"));
            };
            self.pos += c.len_utf8();
            if c == quote {
                return Ok(());
            }
            if c == '\\' {
                match self.peek_char() {
                    Some('\r') if self.char_at(1) == Some('\n') => self.pos += 2,
                    Some(e) => self.pos += e.len_utf8(),
                    None => return Err(self.err(start, "unterminated string")),
                }
            } else if c == '\n' || c == '\r' {
                return Err(self.err(start, "unterminated string"));
            }
        }
    }

    /// Scans template characters up to and including the closing backtick
    /// (returns true) or `${` (returns false).
    fn read_template_chars(&mut self, start: usize) -> Result<bool, ParseError> {
        loop {
            let Some(c) = self.peek_char() else {
                return Err(self.err(start, "unterminated template"));
            };
            self.pos += c.len_utf8();
            match c {
                '`' => return Ok(true),
                '$' if self.peek_char() == Some('{') => {
                    self.pos += 1;
                    return Ok(false);
                }
                '\\' => match self.peek_char() {
                    Some(e) => self.pos += e.len_utf8(),
                    None => return Err(self.err(start, "unterminated template")),
                },
                _ => {}
            }
        }
    }

    /// Re-scans from a `}` token as the continuation of a template literal.
    pub fn template_continuation(
        &mut self,
        brace: usize,
        nl_before: bool,
    ) -> Result<Token, ParseError> {
        self.pos = brace + 1;
        let tail = self.read_template_chars(brace)?;
        Ok(self.token(Tok::Template { tail }, brace, nl_before, String::new()))
    }

    /// Re-scans from a `/` or `/=` token as a regular expression literal.
    pub fn regex(&mut self, slash: usize, nl_before: bool) -> Result<Token, ParseError> {
        self.pos = slash + 1;
        let mut in_class = false;
        loop {
            let Some(c) = self.peek_char() else {
                return Err(self.err(slash, "unterminated regular expression"));
            };
            if is_line_terminator(c) {
                return Err(self.err(slash, "unterminated regular expression"));
            }
            self.pos += c.len_utf8();
            match c {
                '\\' => match self.peek_char() {
                    Some(e) if !is_line_terminator(e) => self.pos += e.len_utf8(),
                    _ => return Err(self.err(slash, "unterminated regular expression")),
                },
                '[' => in_class = true,
                ']' => in_class = false,
                '/' if !in_class => break,
                _ => {}
            }
        }
        while let Some(c) = self.peek_char() {
            if !is_id_continue(c) {
                break;
            }
            self.pos += c.len_utf8();
        }
        Ok(self.token(Tok::Regex, slash, nl_before, String::new()))
    }
}
