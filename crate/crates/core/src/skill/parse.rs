use thiserror::Error;

use super::{Atom, BinOp, Expr, Param, ParamKind, Pos, SkillCall, SkillScript, Stmt, Value, MAX_REPEAT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {line}:{col}: expected {expected}, found {found}")]
pub struct SyntaxError {
    pub line: u32,
    pub col: u32,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    Sym(char),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(n) => format!("number {n}"),
            Tok::Str(_) => "string".into(),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

const KEYWORDS: &[&str] = &["skill", "doc", "call", "repeat"];

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let err = |line, col, expected: &str, found: String| SyntaxError { line, col, expected: expected.into(), found };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        let advance = |n: usize, i: &mut usize, col: &mut u32| {
            *i += n;
            *col += n as u32;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
        } else if c.is_whitespace() {
            advance(1, &mut i, &mut col);
        } else if c == '/' && chars.get(i + 1) == Some(&'/') || c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                advance(1, &mut i, &mut col);
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance(1, &mut i, &mut col);
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                advance(1, &mut i, &mut col);
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    advance(j - i, &mut i, &mut col);
                }
            }
            let text: String = chars[start..i].iter().collect();
            let n = text.parse::<f64>().map_err(|_| err(pos.line, pos.col, "number", format!("`{text}`")))?;
            out.push((Tok::Num(n), pos));
        } else if c == '"' {
            advance(1, &mut i, &mut col);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(err(line, col, "closing `\"`", "end of line".into())),
                    Some('"') => {
                        advance(1, &mut i, &mut col);
                        break;
                    }
                    Some('\\') => {
                        let e = match chars.get(i + 1) {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            other => {
                                return Err(err(line, col + 1, "escape sequence", format!("{other:?}")));
                            }
                        };
                        s.push(e);
                        advance(2, &mut i, &mut col);
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(1, &mut i, &mut col);
                    }
                }
            }
            out.push((Tok::Str(s), pos));
        } else if "(){}[],:;+-*/".contains(c) {
            out.push((Tok::Sym(c), pos));
            advance(1, &mut i, &mut col);
        } else {
            return Err(err(line, col, "token", format!("`{c}`")));
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, SyntaxError> {
        Ok(Self { toks: lex(src)?, at: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at < self.toks.len() - 1 {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, SyntaxError> {
        let p = self.pos();
        Err(SyntaxError { line: p.line, col: p.col, expected: expected.into(), found: self.peek().describe() })
    }

    fn sym(&mut self, c: char) -> Result<(), SyntaxError> {
        if *self.peek() == Tok::Sym(c) {
            self.next();
            Ok(())
        } else {
            self.fail(&format!("`{c}`"))
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.next();
            true
        } else {
            false
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), SyntaxError> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.next();
                Ok(())
            }
            _ => self.fail(&format!("`{kw}`")),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, SyntaxError> {
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => self.fail(what),
        }
    }

    fn string(&mut self, what: &str) -> Result<String, SyntaxError> {
        match self.peek() {
            Tok::Str(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => self.fail(what),
        }
    }

    fn script(&mut self) -> Result<SkillScript, SyntaxError> {
        self.keyword("skill")?;
        let name = self.ident("skill name")?;
        self.sym('(')?;
        let mut params = Vec::new();
        if !self.eat(')') {
            loop {
                let pname = self.ident("parameter name")?;
                self.sym(':')?;
                let kind = match self.peek() {
                    Tok::Ident(k) => match ParamKind::parse(k) {
                        Some(kind) => kind,
                        None => return self.fail("parameter kind (number, string, point, label)"),
                    },
                    _ => return self.fail("parameter kind (number, string, point, label)"),
                };
                self.next();
                params.push(Param { name: pname, kind });
                if self.eat(')') {
                    break;
                }
                self.sym(',')?;
            }
        }
        self.keyword("doc")?;
        let doc = self.string("doc string")?;
        let body = self.block()?;
        Ok(SkillScript { name, params, doc, body })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        self.sym('{')?;
        let mut body = Vec::new();
        while !self.eat('}') {
            body.push(self.stmt()?);
        }
        if body.is_empty() {
            let p = self.toks[self.at - 1].1;
            return Err(SyntaxError { line: p.line, col: p.col, expected: "at least one statement".into(), found: "`}`".into() });
        }
        Ok(body)
    }

    fn stmt(&mut self) -> Result<Stmt, SyntaxError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(kw) if kw == "repeat" => {
                self.next();
                let count = match self.peek() {
                    Tok::Num(n) if n.fract() == 0.0 && *n >= 1.0 && *n <= MAX_REPEAT as f64 => *n as u32,
                    _ => return self.fail(&format!("repeat count between 1 and {MAX_REPEAT}")),
                };
                self.next();
                let body = self.block()?;
                Ok(Stmt::Repeat { count, body, pos })
            }
            Tok::Ident(kw) if kw == "call" => {
                self.next();
                let callee = self.ident("skill name")?;
                let args = self.args()?;
                self.eat(';');
                Ok(Stmt::Call { callee, args, pos })
            }
            Tok::Ident(_) => {
                let name = self.ident("primitive name")?;
                let args = self.args()?;
                self.eat(';');
                Ok(Stmt::Prim { name, args, pos })
            }
            _ => self.fail("statement"),
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>, SyntaxError> {
        self.sym('(')?;
        let mut args = Vec::new();
        if self.eat(')') {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(')') {
                return Ok(args);
            }
            self.sym(',')?;
        }
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let a = self.atom()?;
        let op = match self.peek() {
            Tok::Sym('+') => BinOp::Add,
            Tok::Sym('-') => BinOp::Sub,
            Tok::Sym('*') => BinOp::Mul,
            Tok::Sym('/') => BinOp::Div,
            _ => return Ok(Expr::Atom(a)),
        };
        self.next();
        let b = self.atom()?;
        Ok(Expr::Binary(op, a, b))
    }

    fn number(&mut self) -> Option<f64> {
        match (self.peek().clone(), self.peek2().clone()) {
            (Tok::Num(n), _) => {
                self.next();
                Some(n)
            }
            (Tok::Sym('-'), Tok::Num(n)) => {
                self.next();
                self.next();
                Some(-n)
            }
            _ => None,
        }
    }

    fn atom(&mut self) -> Result<Atom, SyntaxError> {
        if let Some(n) = self.number() {
            return Ok(Atom::Number(n));
        }
        match self.peek().clone() {
            Tok::Str(s) => {
                self.next();
                Ok(Atom::Str(s))
            }
            Tok::Ident(_) => Ok(Atom::Var(self.ident("variable")?)),
            Tok::Sym('(') => {
                self.next();
                let x = self.coord()?;
                self.sym(',')?;
                let y = self.coord()?;
                self.sym(')')?;
                Ok(Atom::Point(Box::new(x), Box::new(y)))
            }
            Tok::Sym('[') => {
                self.next();
                Ok(Atom::List(self.string_list()?))
            }
            _ => self.fail("expression"),
        }
    }

    fn coord(&mut self) -> Result<Atom, SyntaxError> {
        if let Some(n) = self.number() {
            return Ok(Atom::Number(n));
        }
        Ok(Atom::Var(self.ident("number or parameter")?))
    }

    fn string_list(&mut self) -> Result<Vec<String>, SyntaxError> {
        let mut items = Vec::new();
        if self.eat(']') {
            return Ok(items);
        }
        loop {
            items.push(self.string("string")?);
            if self.eat(']') {
                return Ok(items);
            }
            self.sym(',')?;
        }
    }

    fn value(&mut self) -> Result<Value, SyntaxError> {
        if let Some(n) = self.number() {
            return Ok(Value::Number(n));
        }
        match self.peek().clone() {
            Tok::Str(s) => {
                self.next();
                Ok(Value::Str(s))
            }
            Tok::Sym('(') => {
                self.next();
                let x = self.number().map_or_else(|| self.fail("number"), Ok)?;
                self.sym(',')?;
                let y = self.number().map_or_else(|| self.fail("number"), Ok)?;
                self.sym(')')?;
                Ok(Value::Point(x, y))
            }
            Tok::Sym('[') => {
                self.next();
                Ok(Value::List(self.string_list()?))
            }
            _ => self.fail("literal value"),
        }
    }

    fn end(&mut self) -> Result<(), SyntaxError> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            self.fail("end of input")
        }
    }
}

/// Parses exactly one skill definition.
pub fn parse(text: &str) -> Result<SkillScript, SyntaxError> {
    let mut p = Parser::new(text)?;
    let s = p.script()?;
    p.end()?;
    Ok(s)
}

/// Parses a file holding any number of skill definitions.
pub fn parse_many(text: &str) -> Result<Vec<SkillScript>, SyntaxError> {
    let mut p = Parser::new(text)?;
    let mut out = Vec::new();
    while *p.peek() != Tok::Eof {
        out.push(p.script()?);
    }
    Ok(out)
}

/// Parses a call with literal arguments such as `turn(90)` or
/// `click_at_position((0.5, 0.5))`.
pub fn parse_call(text: &str) -> Result<SkillCall, SyntaxError> {
    let mut p = Parser::new(text.trim())?;
    let name = p.ident("skill name")?;
    p.sym('(')?;
    let mut args = Vec::new();
    if !p.eat(')') {
        loop {
            args.push(p.value()?);
            if p.eat(')') {
                break;
            }
            p.sym(',')?;
        }
    }
    p.eat(';');
    p.end()?;
    Ok(SkillCall { name, args })
}

/// Bodies of all fenced blocks tagged `skill`, in document order.
pub fn extract_code_blocks(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Option<(bool, Vec<&str>)> = None;
    for line in text.lines() {
        let t = line.trim();
        match current.take() {
            None => {
                if let Some(info) = t.strip_prefix("```") {
                    current = Some((info.trim() == "skill", Vec::new()));
                }
            }
            Some((keep, mut lines)) => {
                if t == "```" {
                    if keep {
                        out.push(lines.join("\n"));
                    }
                } else {
                    lines.push(line);
                    current = Some((keep, lines));
                }
            }
        }
    }
    out
}
