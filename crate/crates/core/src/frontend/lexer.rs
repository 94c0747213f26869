//! Tokenizer for the MJB textual format.

use super::{FrontendError, Result};
use std::rc::Rc;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(Rc<str>),
    Int(i32),
    Str(Rc<[u16]>),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Semi,
    Comma,
    Dot,
    At,
    Arrow,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

pub fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut toks = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line: u32 = 1;
    let mut col: u32 = 1;

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }
    // digits never span lines, so plain col bumps suffice
    macro_rules! lex_int {
        ($neg:expr, $tline:expr, $tcol:expr) => {{
            let mut v: i64 = 0;
            let mut ok = true;
            while let Some(&d) = chars.peek() {
                if let Some(dv) = d.to_digit(10) {
                    bump!();
                    v = v * 10 + dv as i64;
                    if v > i32::MAX as i64 + 1 {
                        ok = false;
                        break;
                    }
                } else {
                    break;
                }
            }
            let signed = if $neg { -v } else { v };
            match i32::try_from(signed) {
                Ok(x) if ok => x,
                _ => {
                    return Err(FrontendError::Syntax {
                        line: $tline,
                        col: $tcol,
                        msg: "integer literal out of 32-bit range".into(),
                    })
                }
            }
        }};
    }

    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '/' => {
                bump!();
                if chars.peek() == Some(&'/') {
                    while let Some(&n) = chars.peek() {
                        if n == '\n' {
                            break;
                        }
                        bump!();
                    }
                } else {
                    return Err(FrontendError::Syntax {
                        line: tline,
                        col: tcol,
                        msg: "unexpected character '/'".into(),
                    });
                }
            }
            '{' => {
                bump!();
                toks.push(Token { tok: Tok::LBrace, line: tline, col: tcol });
            }
            '}' => {
                bump!();
                toks.push(Token { tok: Tok::RBrace, line: tline, col: tcol });
            }
            '(' => {
                bump!();
                toks.push(Token { tok: Tok::LParen, line: tline, col: tcol });
            }
            ')' => {
                bump!();
                toks.push(Token { tok: Tok::RParen, line: tline, col: tcol });
            }
            '[' => {
                bump!();
                toks.push(Token { tok: Tok::LBracket, line: tline, col: tcol });
            }
            ']' => {
                bump!();
                toks.push(Token { tok: Tok::RBracket, line: tline, col: tcol });
            }
            ':' => {
                bump!();
                toks.push(Token { tok: Tok::Colon, line: tline, col: tcol });
            }
            ';' => {
                bump!();
                toks.push(Token { tok: Tok::Semi, line: tline, col: tcol });
            }
            ',' => {
                bump!();
                toks.push(Token { tok: Tok::Comma, line: tline, col: tcol });
            }
            '.' => {
                bump!();
                toks.push(Token { tok: Tok::Dot, line: tline, col: tcol });
            }
            '@' => {
                bump!();
                toks.push(Token { tok: Tok::At, line: tline, col: tcol });
            }
            '-' => {
                bump!();
                match chars.peek() {
                    Some('>') => {
                        bump!();
                        toks.push(Token { tok: Tok::Arrow, line: tline, col: tcol });
                    }
                    Some(d) if d.is_ascii_digit() => {
                        let v = lex_int!(true, tline, tcol);
                        toks.push(Token { tok: Tok::Int(v), line: tline, col: tcol });
                    }
                    _ => {
                        return Err(FrontendError::Syntax {
                            line: tline,
                            col: tcol,
                            msg: "expected '>' or digit after '-'".into(),
                        })
                    }
                }
            }
            d if d.is_ascii_digit() => {
                let v = lex_int!(false, tline, tcol);
                toks.push(Token { tok: Tok::Int(v), line: tline, col: tcol });
            }
            '"' => {
                bump!();
                let mut units: Vec<u16> = Vec::new();
                loop {
                    let c = bump!().ok_or(FrontendError::Syntax {
                        line: tline,
                        col: tcol,
                        msg: "unterminated string literal".into(),
                    })?;
                    match c {
                        '"' => break,
                        '\\' => {
                            let e = bump!().ok_or(FrontendError::Syntax {
                                line: tline,
                                col: tcol,
                                msg: "unterminated escape".into(),
                            })?;
                            match e {
                                'n' => units.push(b'\n' as u16),
                                't' => units.push(b'\t' as u16),
                                'r' => units.push(b'\r' as u16),
                                '0' => units.push(0),
                                '\\' => units.push(b'\\' as u16),
                                '"' => units.push(b'"' as u16),
                                'u' => {
                                    let mut v: u16 = 0;
                                    for _ in 0..4 {
                                        let h = bump!().and_then(|h| h.to_digit(16)).ok_or(
                                            FrontendError::Syntax {
                                                line: tline,
                                                col: tcol,
                                                msg: "expected 4 hex digits after \\u".into(),
                                            },
                                        )?;
                                        v = (v << 4) | h as u16;
                                    }
                                    units.push(v);
                                }
                                other => {
                                    return Err(FrontendError::Syntax {
                                        line: tline,
                                        col: tcol,
                                        msg: format!("unknown escape '\\{other}'"),
                                    })
                                }
                            }
                        }
                        other => {
                            let mut buf = [0u16; 2];
                            units.extend_from_slice(other.encode_utf16(&mut buf));
                        }
                    }
                }
                toks.push(Token { tok: Tok::Str(units.into()), line: tline, col: tcol });
            }
            a if a.is_ascii_alphabetic() || a == '_' || a == '$' => {
                let mut s = String::new();
                while let Some(&n) = chars.peek() {
                    if n.is_ascii_alphanumeric() || n == '_' || n == '$' {
                        s.push(n);
                        bump!();
                    } else {
                        break;
                    }
                }
                toks.push(Token { tok: Tok::Ident(s.into()), line: tline, col: tcol });
            }
            other => {
                return Err(FrontendError::Syntax {
                    line: tline,
                    col: tcol,
                    msg: format!("unexpected character '{other}'"),
                })
            }
        }
    }
    Ok(toks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_basic_stream() {
        let toks = tokenize("class A { const -5 @ 3 } // end").unwrap();
        assert_eq!(toks.len(), 8);
        assert_eq!(toks[4].tok, Tok::Int(-5));
        assert_eq!(toks[5].tok, Tok::At);
    }

    #[test]
    fn lexes_min_int() {
        let toks = tokenize("-2147483648").unwrap();
        assert_eq!(toks[0].tok, Tok::Int(i32::MIN));
        assert!(tokenize("2147483648").is_err());
    }

    #[test]
    fn lexes_unicode_escape() {
        let toks = tokenize("\"a\\ua775\"").unwrap();
        match &toks[0].tok {
            Tok::Str(u) => assert_eq!(**u, [0x61, 0xa775]),
            _ => panic!(),
        }
    }

    #[test]
    fn reports_position() {
        let err = tokenize("class A {\n  ?\n}").unwrap_err();
        match err {
            FrontendError::Syntax { line, col, .. } => {
                assert_eq!((line, col), (2, 3));
            }
            _ => panic!(),
        }
    }
}
