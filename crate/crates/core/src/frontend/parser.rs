//! Recursive-descent parser over the token stream.

use super::lexer::{Tok, Token};
use super::{
    ClassDef, CmpKind, ExcEntry, FieldDecl, FrontendError, Instruction, Label, MemberRef,
    MethodDef, MjbType, Opcode, Result,
};
use std::collections::BTreeMap;
use std::rc::Rc;

pub fn parse_classes(toks: &[Token], file: &str) -> Result<Vec<ClassDef>> {
    let mut p = Parser { toks, pos: 0, file: file.into() };
    let mut classes = Vec::new();
    while !p.at_end() {
        classes.push(p.classdef()?);
    }
    Ok(classes)
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    file: Rc<str>,
}

impl<'a> Parser<'a> {
    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|t| &t.tok)
    }

    fn here(&self) -> (u32, u32) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1))
    }

    fn err(&self, msg: impl Into<String>) -> FrontendError {
        let (line, col) = self.here();
        FrontendError::Syntax { line, col, msg: msg.into() }
    }

    fn next(&mut self) -> Result<Token> {
        self.next_tok("token")
    }

    fn next_tok(&mut self, what: &str) -> Result<Token> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(self.err(format!("expected {what}, found end of input"))),
        }
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<()> {
        let t = self.next_tok(what)?;
        if &t.tok == want {
            Ok(())
        } else {
            Err(self.err_at(t.line, t.col, format!("expected {what}")))
        }
    }

    fn err_at(&self, line: u32, col: u32, msg: String) -> FrontendError {
        FrontendError::Syntax { line, col, msg }
    }

    fn ident(&mut self, what: &str) -> Result<(Rc<str>, u32)> {
        let t = self.next_tok(what)?;
        match &t.tok {
            Tok::Ident(s) => Ok((s.clone(), t.line)),
            _ => Err(self.err_at(t.line, t.col, format!("expected {what}"))),
        }
    }

    fn int(&mut self, what: &str) -> Result<i32> {
        let t = self.next_tok(what)?;
        match &t.tok {
            Tok::Int(v) => Ok(*v),
            _ => Err(self.err_at(t.line, t.col, format!("expected {what}"))),
        }
    }

    fn eat_ident(&mut self, kw: &str) -> bool {
        if let Some(Tok::Ident(s)) = self.peek() {
            if &**s == kw {
                self.pos += 1;
                return true;
            }
        }
        false
    }

    fn classdef(&mut self) -> Result<ClassDef> {
        let (line, _) = self.here();
        if !self.eat_ident("class") {
            return Err(self.err("expected 'class'"));
        }
        let (name, _) = self.ident("class name")?;
        let super_name = if self.eat_ident("extends") {
            Some(self.ident("superclass name")?.0)
        } else {
            None
        };
        let is_exception = self.eat_ident("exception");
        self.expect(&Tok::LBrace, "'{'")?;
        let mut fields = Vec::new();
        let mut methods = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.pos += 1;
                    break;
                }
                Some(Tok::Ident(s)) if &**s == "field" => {
                    self.pos += 1;
                    let (fname, _) = self.ident("field name")?;
                    self.expect(&Tok::Colon, "':'")?;
                    let ty = self.ty()?;
                    self.expect(&Tok::Semi, "';'")?;
                    fields.push(FieldDecl { name: fname, ty });
                }
                Some(Tok::Ident(s)) if &**s == "method" || &**s == "static" => {
                    methods.push(self.methoddef()?);
                }
                _ => return Err(self.err("expected 'field', 'method' or '}'")),
            }
        }
        Ok(ClassDef {
            name,
            super_name,
            is_exception,
            fields,
            methods,
            decl_line: line,
            source_file: self.file.clone(),
        })
    }

    fn ty(&mut self) -> Result<MjbType> {
        let (name, _) = self.ident("type")?;
        match &*name {
            "int" => {
                if self.peek() == Some(&Tok::LBracket) {
                    self.pos += 1;
                    self.expect(&Tok::RBracket, "']'")?;
                    Ok(MjbType::IntArray)
                } else {
                    Ok(MjbType::Int)
                }
            }
            "string" => Ok(MjbType::Str),
            _ => Ok(MjbType::Class(name)),
        }
    }

    fn methoddef(&mut self) -> Result<MethodDef> {
        let (decl_line, _) = self.here();
        let is_static = self.eat_ident("static");
        if !self.eat_ident("method") {
            return Err(self.err("expected 'method'"));
        }
        let (name, _) = self.ident("method name")?;
        self.expect(&Tok::LParen, "'('")?;
        let mut params = Vec::new();
        if self.peek() != Some(&Tok::RParen) {
            loop {
                params.push(self.ty()?);
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(&Tok::RParen, "')'")?;
        let ret = if self.peek() == Some(&Tok::Colon) {
            self.pos += 1;
            Some(self.ty()?)
        } else {
            None
        };
        if !self.eat_ident("locals") {
            return Err(self.err("expected 'locals'"));
        }
        let max_locals = self.int("locals count")?;
        if !(0..=u16::MAX as i32).contains(&max_locals) {
            return Err(self.err("locals count out of range"));
        }
        self.expect(&Tok::LBrace, "'{'")?;

        let mut body: Vec<(Opcode, u32)> = Vec::new();
        let mut labels: BTreeMap<Rc<str>, usize> = BTreeMap::new();
        let mut pending_labels: Vec<(Rc<str>, u32)> = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.pos += 1;
                    break;
                }
                Some(Tok::Ident(s)) => {
                    let text = s.clone();
                    if !is_opcode(&text) && self.peek2() == Some(&Tok::Colon) {
                        let (line, _) = self.here();
                        self.pos += 2;
                        pending_labels.push((text, line));
                    } else {
                        for (lbl, line) in pending_labels.drain(..) {
                            if labels.insert(lbl.clone(), body.len()).is_some() {
                                return Err(self.err_at(
                                    line,
                                    1,
                                    format!("duplicate label '{lbl}'"),
                                ));
                            }
                        }
                        body.push(self.instr()?);
                    }
                }
                _ => return Err(self.err("expected instruction, label or '}'")),
            }
        }
        // trailing labels mark the method end
        for (lbl, line) in pending_labels.drain(..) {
            if labels.insert(lbl.clone(), body.len()).is_some() {
                return Err(self.err_at(line, 1, format!("duplicate label '{lbl}'")));
            }
        }

        // resolve branch targets now that all labels are known
        let mut instrs = Vec::with_capacity(body.len());
        for (op, line) in body {
            let op = match op {
                Opcode::If(k, l) => Opcode::If(k, self.resolve_label(&labels, l, line)?),
                Opcode::Goto(l) => Opcode::Goto(self.resolve_label(&labels, l, line)?),
                other => other,
            };
            instrs.push(Instruction { op, line });
        }

        let mut exception_table = Vec::new();
        while self.eat_ident("catch") {
            self.expect(&Tok::LParen, "'('")?;
            let (start_label, sline) = self.ident("start label")?;
            self.expect(&Tok::Comma, "','")?;
            let (end_label, _) = self.ident("end label")?;
            self.expect(&Tok::RParen, "')'")?;
            self.expect(&Tok::Arrow, "'->'")?;
            let (handler_label, _) = self.ident("handler label")?;
            self.expect(&Tok::Colon, "':'")?;
            let (class_name, _) = self.ident("exception class")?;
            let lookup = |l: &Rc<str>| {
                labels.get(l).copied().ok_or(FrontendError::Resolve {
                    line: sline,
                    msg: format!("unknown label '{l}' in catch clause"),
                })
            };
            let (start, end, handler) =
                (lookup(&start_label)?, lookup(&end_label)?, lookup(&handler_label)?);
            if start >= end {
                return Err(FrontendError::Resolve {
                    line: sline,
                    msg: "catch range start must precede end".into(),
                });
            }
            if handler >= instrs.len() {
                return Err(FrontendError::Resolve {
                    line: sline,
                    msg: "catch handler label points past the method end".into(),
                });
            }
            exception_table.push(ExcEntry {
                start_label,
                end_label,
                handler_label,
                class_name,
                start,
                end,
                handler,
            });
        }

        Ok(MethodDef {
            name,
            is_static,
            params,
            ret,
            max_locals: max_locals as u16,
            body: instrs,
            labels,
            exception_table,
            decl_line,
            flow: Vec::new(),
        })
    }

    fn resolve_label(
        &self,
        labels: &BTreeMap<Rc<str>, usize>,
        l: Label,
        line: u32,
    ) -> Result<Label> {
        match labels.get(&l.name) {
            Some(&target) => Ok(Label { name: l.name, target }),
            None => Err(FrontendError::Resolve {
                line,
                msg: format!("unknown label '{}'", l.name),
            }),
        }
    }

    fn instr(&mut self) -> Result<(Opcode, u32)> {
        let t = self.next()?;
        let (line, col) = (t.line, t.col);
        let name = match &t.tok {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.err_at(line, col, "expected opcode".into())),
        };
        let op = match &*name {
            "const" => Opcode::Const(self.int("integer operand")?),
            "sconst" => {
                let t = self.next()?;
                match &t.tok {
                    Tok::Str(s) => Opcode::SConst(s.clone()),
                    _ => return Err(self.err("expected string literal")),
                }
            }
            "null" => Opcode::Null,
            "load" => Opcode::Load(self.slot()?),
            "store" => Opcode::Store(self.slot()?),
            "dup" => Opcode::Dup,
            "pop" => Opcode::Pop,
            "add" => Opcode::Add,
            "sub" => Opcode::Sub,
            "mul" => Opcode::Mul,
            "div" => Opcode::Div,
            "rem" => Opcode::Rem,
            "neg" => Opcode::Neg,
            "if_eq" => self.branch(CmpKind::Eq)?,
            "if_ne" => self.branch(CmpKind::Ne)?,
            "if_lt" => self.branch(CmpKind::Lt)?,
            "if_le" => self.branch(CmpKind::Le)?,
            "if_gt" => self.branch(CmpKind::Gt)?,
            "if_ge" => self.branch(CmpKind::Ge)?,
            "goto" => {
                let (l, _) = self.ident("branch label")?;
                Opcode::Goto(Label { name: l, target: 0 })
            }
            "new" => Opcode::New(self.ident("class name")?.0),
            "getfield" => Opcode::GetField(self.member()?),
            "putfield" => Opcode::PutField(self.member()?),
            "invokestatic" => Opcode::InvokeStatic(self.member()?),
            "invokevirtual" => Opcode::InvokeVirtual(self.member()?),
            "return" => Opcode::Return,
            "newarray" => Opcode::NewArray,
            "aload" => Opcode::ALoad,
            "astore" => Opcode::AStore,
            "arraylength" => Opcode::ArrayLength,
            "athrow" => Opcode::AThrow,
            "assert" => Opcode::Assert,
            "assume" => Opcode::Assume,
            "nondet_int" => Opcode::NondetInt,
            "nondet_string" => Opcode::NondetString,
            "s_len" => Opcode::SLen,
            "s_charat" => Opcode::SCharAt,
            "s_indexof" => Opcode::SIndexOf,
            "s_substring" => Opcode::SSubstring,
            "s_concat" => Opcode::SConcat,
            "s_equals" => Opcode::SEquals,
            "s_startswith" => Opcode::SStartsWith,
            "s_insert" => Opcode::SInsert,
            "s_of_int" => Opcode::SOfInt,
            other => return Err(self.err_at(line, col, format!("unknown opcode '{other}'"))),
        };
        let src_line = if self.peek() == Some(&Tok::At) {
            self.pos += 1;
            let v = self.int("source line")?;
            if v < 0 {
                return Err(self.err("source line must be non-negative"));
            }
            v as u32
        } else {
            line
        };
        Ok((op, src_line))
    }

    fn slot(&mut self) -> Result<u16> {
        let v = self.int("slot index")?;
        if !(0..=u16::MAX as i32).contains(&v) {
            return Err(self.err("slot index out of range"));
        }
        Ok(v as u16)
    }

    fn branch(&mut self, k: CmpKind) -> Result<Opcode> {
        let (l, _) = self.ident("branch label")?;
        Ok(Opcode::If(k, Label { name: l, target: 0 }))
    }

    fn member(&mut self) -> Result<MemberRef> {
        let (class, _) = self.ident("class name")?;
        self.expect(&Tok::Dot, "'.'")?;
        let (member, _) = self.ident("member name")?;
        Ok(MemberRef { class, member })
    }
}

fn is_opcode(s: &str) -> bool {
    matches!(
        s,
        "const"
            | "sconst"
            | "null"
            | "load"
            | "store"
            | "dup"
            | "pop"
            | "add"
            | "sub"
            | "mul"
            | "div"
            | "rem"
            | "neg"
            | "if_eq"
            | "if_ne"
            | "if_lt"
            | "if_le"
            | "if_gt"
            | "if_ge"
            | "goto"
            | "new"
            | "getfield"
            | "putfield"
            | "invokestatic"
            | "invokevirtual"
            | "return"
            | "newarray"
            | "aload"
            | "astore"
            | "arraylength"
            | "athrow"
            | "assert"
            | "assume"
            | "nondet_int"
            | "nondet_string"
            | "s_len"
            | "s_charat"
            | "s_indexof"
            | "s_substring"
            | "s_concat"
            | "s_equals"
            | "s_startswith"
            | "s_insert"
            | "s_of_int"
    )
}
