//! Parser for the config-text grammar.
//!
//! ```text
//! file    := { assign } ;  assign := IDENT "=" expr NEWLINE
//! expr    := dictcall | list | tuple | STRING | NUMBER | "True" | "False" | "None"
//! dictcall:= "dict" "(" [ pair { "," pair } [","] ] ")" ;  pair := IDENT "=" expr
//! list    := "[" [ expr { "," expr } [","] ] "]"
//! tuple   := "(" [ expr { "," expr } [","] ] ")"
//! ```
//!
//! Newlines are only significant outside brackets. `# ...` comments are dropped.

use super::address::NodeAddress;
use super::value::{ArchNode, ArchTree, ConfigValue};
use super::ConfigError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Float(f64),
    Eq,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(_) => "string".into(),
            Tok::Int(_) | Tok::Float(_) => "number".into(),
            Tok::Eq => "`=`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Newline => "newline".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
    /// Byte offset just past the token.
    end: usize,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col: usize,
    depth: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src,
            pos: 0,
            line: 1,
            col: 1,
            depth: 0,
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_char_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek_char()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, line: usize, col: usize, expected: impl Into<String>) -> ConfigError {
        ConfigError::Syntax {
            line,
            col,
            expected: expected.into(),
        }
    }

    fn next_token(&mut self) -> Result<Spanned, ConfigError> {
        loop {
            match self.peek_char() {
                Some('#') => {
                    while let Some(c) = self.peek_char() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                Some('\\') if self.peek_char_at(1) == Some('\n') => {
                    self.bump();
                    self.bump();
                }
                Some('\n') if self.depth == 0 => {
                    let (line, col) = (self.line, self.col);
                    self.bump();
                    return Ok(self.spanned(Tok::Newline, line, col));
                }
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                _ => break,
            }
        }
        let (line, col) = (self.line, self.col);
        let c = match self.peek_char() {
            None => return Ok(self.spanned(Tok::Eof, line, col)),
            Some(c) => c,
        };
        let tok = match c {
            '=' => {
                self.bump();
                Tok::Eq
            }
            ',' => {
                self.bump();
                Tok::Comma
            }
            '(' | '[' => {
                self.bump();
                self.depth += 1;
                if c == '(' {
                    Tok::LParen
                } else {
                    Tok::LBracket
                }
            }
            ')' | ']' => {
                self.bump();
                self.depth = self.depth.saturating_sub(1);
                if c == ')' {
                    Tok::RParen
                } else {
                    Tok::RBracket
                }
            }
            '\'' | '"' => self.lex_string(c, line, col)?,
            c if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' => {
                self.lex_number(line, col)?
            }
            c if c == '_' || c.is_alphabetic() => {
                let start = self.pos;
                while let Some(c) = self.peek_char() {
                    if c == '_' || c.is_alphanumeric() {
                        self.bump();
                    } else {
                        break;
                    }
                }
                Tok::Ident(self.src[start..self.pos].to_string())
            }
            other => return Err(self.err(line, col, format!("a token, found `{other}`"))),
        };
        Ok(self.spanned(tok, line, col))
    }

    fn spanned(&self, tok: Tok, line: usize, col: usize) -> Spanned {
        Spanned {
            tok,
            line,
            col,
            end: self.pos,
        }
    }

    fn lex_string(&mut self, quote: char, line: usize, col: usize) -> Result<Tok, ConfigError> {
        self.bump();
        let mut out = String::new();
        loop {
            let c = match self.bump() {
                None | Some('\n') => return Err(self.err(line, col, "closing quote")),
                Some(c) => c,
            };
            if c == quote {
                return Ok(Tok::Str(out));
            }
            if c != '\\' {
                out.push(c);
                continue;
            }
            let e = self
                .bump()
                .ok_or_else(|| self.err(line, col, "closing quote"))?;
            match e {
                'n' => out.push('\n'),
                't' => out.push('\t'),
                'r' => out.push('\r'),
                '0' => out.push('\0'),
                '\\' | '\'' | '"' => out.push(e),
                '\n' => {}
                'x' | 'u' => {
                    let width = if e == 'x' { 2 } else { 4 };
                    let mut hex = String::new();
                    for _ in 0..width {
                        match self.bump() {
                            Some(h) if h.is_ascii_hexdigit() => hex.push(h),
                            _ => return Err(self.err(self.line, self.col, "hex escape digits")),
                        }
                    }
                    let code = u32::from_str_radix(&hex, 16).unwrap();
                    let ch = char::from_u32(code)
                        .ok_or_else(|| self.err(self.line, self.col, "valid escape"))?;
                    out.push(ch);
                }
                other => {
                    out.push('\\');
                    out.push(other);
                }
            }
        }
    }

    fn lex_number(&mut self, line: usize, col: usize) -> Result<Tok, ConfigError> {
        let start = self.pos;
        if matches!(self.peek_char(), Some('-') | Some('+')) {
            self.bump();
        }
        let mut digits = 0;
        let mut is_float = false;
        while let Some(c) = self.peek_char() {
            if c.is_ascii_digit() || c == '_' {
                digits += 1;
                self.bump();
            } else {
                break;
            }
        }
        if self.peek_char() == Some('.') {
            is_float = true;
            self.bump();
            while let Some(c) = self.peek_char() {
                if c.is_ascii_digit() || c == '_' {
                    digits += 1;
                    self.bump();
                } else {
                    break;
                }
            }
        }
        if digits == 0 {
            return Err(self.err(line, col, "a number"));
        }
        if matches!(self.peek_char(), Some('e') | Some('E')) {
            is_float = true;
            self.bump();
            if matches!(self.peek_char(), Some('-') | Some('+')) {
                self.bump();
            }
            let mut exp_digits = 0;
            while let Some(c) = self.peek_char() {
                if c.is_ascii_digit() {
                    exp_digits += 1;
                    self.bump();
                } else {
                    break;
                }
            }
            if exp_digits == 0 {
                return Err(self.err(line, col, "exponent digits"));
            }
        }
        let text: String = self.src[start..self.pos].chars().filter(|c| *c != '_').collect();
        if is_float {
            let v: f64 = text
                .parse()
                .map_err(|_| self.err(line, col, "a number"))?;
            if !v.is_finite() {
                return Err(self.err(line, col, "a finite number"));
            }
            Ok(Tok::Float(v))
        } else {
            text.parse::<i64>()
                .map(Tok::Int)
                .map_err(|_| self.err(line, col, "an integer within 64-bit range"))
        }
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    cur: Spanned,
    prev_end: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ConfigError> {
        let mut lexer = Lexer::new(src);
        let cur = lexer.next_token()?;
        Ok(Self {
            lexer,
            cur,
            prev_end: 0,
        })
    }

    fn advance(&mut self) -> Result<Spanned, ConfigError> {
        let next = self.lexer.next_token()?;
        let old = std::mem::replace(&mut self.cur, next);
        self.prev_end = old.end;
        Ok(old)
    }

    fn error(&self, expected: &str) -> ConfigError {
        ConfigError::Syntax {
            line: self.cur.line,
            col: self.cur.col,
            expected: format!("{expected}, found {}", self.cur.tok.describe()),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ConfigError> {
        if self.cur.tok == tok {
            self.advance()?;
            Ok(())
        } else {
            Err(self.error(what))
        }
    }

    fn skip_newlines(&mut self) -> Result<(), ConfigError> {
        while self.cur.tok == Tok::Newline {
            self.advance()?;
        }
        Ok(())
    }

    fn expr(&mut self, at: &NodeAddress) -> Result<ConfigValue, ConfigError> {
        let tok = self.cur.tok.clone();
        match tok {
            Tok::Str(s) => {
                self.advance()?;
                Ok(ConfigValue::Str(s))
            }
            Tok::Int(i) => {
                self.advance()?;
                Ok(ConfigValue::Int(i))
            }
            Tok::Float(f) => {
                self.advance()?;
                Ok(ConfigValue::Float(f))
            }
            Tok::Ident(id) => match id.as_str() {
                "True" => {
                    self.advance()?;
                    Ok(ConfigValue::Bool(true))
                }
                "False" => {
                    self.advance()?;
                    Ok(ConfigValue::Bool(false))
                }
                "None" => {
                    self.advance()?;
                    Ok(ConfigValue::None)
                }
                "dict" => {
                    self.advance()?;
                    self.dict_call(at)
                }
                _ => Err(self.error("an expression")),
            },
            Tok::LBracket => {
                self.advance()?;
                Ok(ConfigValue::List(self.sequence(Tok::RBracket, "`]`", at)?))
            }
            Tok::LParen => {
                self.advance()?;
                Ok(ConfigValue::Tuple(self.sequence(Tok::RParen, "`)`", at)?))
            }
            _ => Err(self.error("an expression")),
        }
    }

    fn sequence(
        &mut self,
        close: Tok,
        close_name: &str,
        at: &NodeAddress,
    ) -> Result<Vec<ConfigValue>, ConfigError> {
        let mut items = Vec::new();
        loop {
            if self.cur.tok == close {
                self.advance()?;
                return Ok(items);
            }
            let item = self.expr(&at.index(items.len()))?;
            items.push(item);
            if self.cur.tok == Tok::Comma {
                self.advance()?;
            } else if self.cur.tok == close {
                continue;
            } else {
                return Err(self.error(&format!("`,` or {close_name}")));
            }
        }
    }

    fn dict_call(&mut self, at: &NodeAddress) -> Result<ConfigValue, ConfigError> {
        self.expect(Tok::LParen, "`(` after `dict`")?;
        let mut node = ArchNode::new();
        loop {
            if self.cur.tok == Tok::RParen {
                self.advance()?;
                return Ok(ConfigValue::Node(node));
            }
            let key = match &self.cur.tok {
                Tok::Ident(k) => k.clone(),
                _ => return Err(self.error("a keyword argument name")),
            };
            self.advance()?;
            self.expect(Tok::Eq, "`=`")?;
            let child = at.key(key.clone());
            let value = self.expr(&child)?;
            if node.contains_key(&key) {
                return Err(ConfigError::DuplicateKey(child.to_string()));
            }
            node.insert(key, value);
            if self.cur.tok == Tok::Comma {
                self.advance()?;
            } else if self.cur.tok != Tok::RParen {
                return Err(self.error("`,` or `)`"));
            }
        }
    }

    fn file(&mut self) -> Result<ArchTree, ConfigError> {
        let mut model: Option<ConfigValue> = None;
        loop {
            self.skip_newlines()?;
            let (name, line) = match &self.cur.tok {
                Tok::Eof => break,
                Tok::Ident(n) => (n.clone(), self.cur.line),
                _ => return Err(self.error("an assignment")),
            };
            self.advance()?;
            self.expect(Tok::Eq, "`=`")?;
            let value = self.expr(&NodeAddress::root())?;
            match self.cur.tok {
                Tok::Newline | Tok::Eof => {}
                _ => return Err(self.error("end of line")),
            }
            if name == "model" {
                if model.is_some() {
                    return Err(ConfigError::DuplicateKey("model".into()));
                }
                model = Some(value);
            } else {
                log::warn!("ignoring top-level assignment `{name}` on line {line}");
            }
        }
        match model {
            Some(ConfigValue::Node(n)) => ArchTree::new(n),
            Some(_) => Err(ConfigError::RootNotModule),
            None => Err(ConfigError::MissingModel),
        }
    }
}

/// Parses a whole config file (the `Dict()` direction).
pub fn parse_config(text: &str) -> Result<ArchTree, ConfigError> {
    Parser::new(text)?.file()
}

/// Parses a single bare expression such as `dict(type='Identity')`.
pub fn parse_expr(text: &str) -> Result<ConfigValue, ConfigError> {
    let (v, used) = parse_expr_prefix(text)?;
    let mut tail = Parser::new(&text[used..])?;
    tail.skip_newlines()?;
    if tail.cur.tok != Tok::Eof {
        return Err(tail.error("end of input"));
    }
    Ok(v)
}

/// Parses one expression from the start of `text`, returning it together with
/// the number of bytes consumed. Trailing text is left alone.
pub fn parse_expr_prefix(text: &str) -> Result<(ConfigValue, usize), ConfigError> {
    let mut p = Parser::new(text)?;
    p.skip_newlines()?;
    let value = p.expr(&NodeAddress::root())?;
    Ok((value, p.prev_end))
}
