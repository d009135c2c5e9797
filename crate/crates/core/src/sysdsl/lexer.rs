use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Num(f64),
    LBracket,
    RBracket,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Eq,
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Newline,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Num(v) => format!("number {v}"),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

/// Newlines inside `[...]` or `(...)` are dropped so literals may span lines.
pub fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            let line = lineno + 1;
            let push = |out: &mut Vec<Spanned>, tok| out.push(Spanned { tok, line, col });
            match c {
                '#' => break,
                ' ' | '\t' | '\r' => {
                    i += 1;
                    continue;
                }
                '[' | '(' => {
                    depth += 1;
                    push(&mut out, if c == '[' { Tok::LBracket } else { Tok::LParen });
                }
                ']' | ')' => {
                    depth = depth.saturating_sub(1);
                    push(&mut out, if c == ']' { Tok::RBracket } else { Tok::RParen });
                }
                '{' => push(&mut out, Tok::LBrace),
                '}' => push(&mut out, Tok::RBrace),
                ',' => push(&mut out, Tok::Comma),
                ';' => push(&mut out, Tok::Semi),
                '=' => push(&mut out, Tok::Eq),
                '+' => push(&mut out, Tok::Plus),
                '-' => push(&mut out, Tok::Minus),
                '*' => push(&mut out, Tok::Star),
                '/' => push(&mut out, Tok::Slash),
                '<' => push(&mut out, Tok::Lt),
                c if c.is_ascii_digit() || c == '.' => {
                    let start = i;
                    while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                        i += 1;
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
                            i = j;
                        }
                    }
                    let s: String = chars[start..i].iter().collect();
                    let v: f64 = s.parse().map_err(|_| ParseError::Syntax {
                        line,
                        col,
                        found: format!("`{s}`"),
                        expected: "a number".into(),
                    })?;
                    push(&mut out, Tok::Num(v));
                    continue;
                }
                c if c.is_alphabetic() || c == '_' => {
                    let start = i;
                    while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                        i += 1;
                    }
                    let s: String = chars[start..i].iter().collect();
                    push(&mut out, Tok::Ident(s));
                    continue;
                }
                other => {
                    return Err(ParseError::Syntax {
                        line,
                        col,
                        found: format!("`{other}`"),
                        expected: "a token".into(),
                    })
                }
            }
            i += 1;
        }
        if depth == 0 {
            out.push(Spanned {
                tok: Tok::Newline,
                line: lineno + 1,
                col: chars.len() + 1,
            });
        }
    }
    let line = text.lines().count() + 1;
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        col: 1,
    });
    Ok(out)
}
