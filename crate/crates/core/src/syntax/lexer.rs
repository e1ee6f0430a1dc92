use crate::error::ParseError;

pub const KEYWORDS: &[&str] = &[
    "if", "then", "else", "sum", "avg", "uniq", "ifp", "at", "exists", "forall", "bot", "true", "false", "relu", "rel",
    "fun", "answer",
];

// Longest operators first so that prefixes never win.
const SYMBOLS: &[&str] = &[
    "<->", "---", "<-", "<=", ">=", "!=", "->", "<", ">", "=", "&", "|", "!", "+", "-", "*", "/", ":", ";", ",", "(", ")",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// `p` or `p/q` written without spaces.
    Num(String),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) if KEYWORDS.contains(&s.as_str()) => format!("keyword `{s}`"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Num(s) => format!("number `{s}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
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
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start_col = col;
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Token { tok: Tok::Ident(s), line, col: start_col });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '/' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Token { tok: Tok::Num(s), line, col: start_col });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                i += s.len();
                col += s.len();
                out.push(Token { tok: Tok::Sym(s), line, col: start_col });
            }
            None => {
                return Err(ParseError {
                    line,
                    col,
                    expected: vec!["a token".to_string()],
                    found: format!("character `{c}`"),
                })
            }
        }
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn fraction_literals_need_adjacent_digits() {
        assert_eq!(kinds("1/2"), vec![Tok::Num("1/2".into()), Tok::Eof]);
        assert_eq!(kinds("1 / 2"), vec![Tok::Num("1".into()), Tok::Sym("/"), Tok::Num("2".into()), Tok::Eof]);
    }

    #[test]
    fn comments_and_positions() {
        let toks = tokenize("# c\n  R(x) <- x")
            .unwrap();
        assert_eq!((toks[0].line, toks[0].col), (2, 3));
        assert_eq!(toks[4].tok, Tok::Sym("<-"));
    }

    #[test]
    fn stray_character_is_an_error() {
        let e = tokenize("R(x) $").unwrap_err();
        assert_eq!((e.line, e.col), (1, 6));
    }
}
