//! Mini-C frontend: a single-function C subset parsed straight into a
//! [`Cpg`].
//!
//! Grammar (one function per input):
//!
//! ```text
//! function  := type ident '(' params? ')' block
//! type      := ('void'|'int'|'char'|'float') '*'*
//! param     := type ident ('[' ']')?
//! block     := '{' stmt* '}'
//! stmt      := decl ';' | assign ';' | call ';' | 'return' expr? ';'
//!            | 'if' '(' expr ')' block ('else' block)?
//!            | 'while' '(' expr ')' block
//!            | 'for' '(' (decl|assign)? ';' expr ';' (assign|call)? ')' block
//! decl      := type ident ('[' expr ']')? ('=' expr)?
//! assign    := (ident | ident '[' expr ']' | '*' ident) '=' expr
//! expr      := relational over (+ - * / %), unary (- ! * &), calls,
//!              subscripts, parentheses, int/float/char/string literals
//! ```
//!
//! Pointers only appear as declarations, dereference and address-of.
//! Control bodies must be non-empty blocks so every condition node keeps
//! exactly two control-flow successors; the function body itself may be
//! empty. When control flow can fall off a dangling branch, a synthetic
//! `return` statement node is appended as the target.
//!
//! Node ids are assigned in source order, so parsing is deterministic.

use super::{Cpg, CpgEdge, CpgNode, EdgeKind, NodeId, NodeKind, ParseError};
use std::collections::{BTreeMap, BTreeSet};

const TYPE_KEYWORDS: [&str; 4] = ["void", "int", "char", "float"];

// ---------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokKind {
    Ident,
    Number,
    StringLit,
    CharLit,
    Punct,
}

#[derive(Debug, Clone)]
struct Tok {
    text: String,
    kind: TokKind,
    line: u32,
    col: u32,
}

fn lex(source: &str) -> Result<Vec<Tok>, ParseError> {
    let mut toks = Vec::new();
    let chars: Vec<char> = source.chars().collect();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;
    let err = |line: u32, col: u32, msg: &str| ParseError {
        line,
        column: col,
        message: msg.to_string(),
    };

    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        // Comments.
        if c == '/' && i + 1 < chars.len() && chars[i + 1] == '/' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && i + 1 < chars.len() && chars[i + 1] == '*' {
            let (sl, sc) = (line, col);
            i += 2;
            col += 2;
            loop {
                if i + 1 >= chars.len() {
                    return Err(err(sl, sc, "unterminated block comment"));
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    i += 2;
                    col += 2;
                    break;
                }
                if chars[i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
            continue;
        }
        let start_col = col;
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                i += 1;
                col += 1;
            }
            toks.push(Tok {
                text: s,
                kind: TokKind::Ident,
                line,
                col: start_col,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                s.push(chars[i]);
                i += 1;
                col += 1;
            }
            toks.push(Tok {
                text: s,
                kind: TokKind::Number,
                line,
                col: start_col,
            });
            continue;
        }
        if c == '"' || c == '\'' {
            let quote = c;
            let mut s = String::from(c);
            i += 1;
            col += 1;
            loop {
                if i >= chars.len() || chars[i] == '\n' {
                    return Err(err(line, start_col, "unterminated literal"));
                }
                let ch = chars[i];
                s.push(ch);
                i += 1;
                col += 1;
                if ch == '\\' && i < chars.len() {
                    s.push(chars[i]);
                    i += 1;
                    col += 1;
                    continue;
                }
                if ch == quote {
                    break;
                }
            }
            toks.push(Tok {
                text: s,
                kind: if quote == '"' {
                    TokKind::StringLit
                } else {
                    TokKind::CharLit
                },
                line,
                col: start_col,
            });
            continue;
        }
        // Two-character operators first.
        if i + 1 < chars.len() {
            let two: String = chars[i..i + 2].iter().collect();
            if matches!(two.as_str(), "==" | "!=" | "<=" | ">=") {
                toks.push(Tok {
                    text: two,
                    kind: TokKind::Punct,
                    line,
                    col: start_col,
                });
                i += 2;
                col += 2;
                continue;
            }
        }
        if "(){}[];,=<>+-*/%&!".contains(c) {
            toks.push(Tok {
                text: c.to_string(),
                kind: TokKind::Punct,
                line,
                col: start_col,
            });
            i += 1;
            col += 1;
            continue;
        }
        return Err(err(line, start_col, &format!("unexpected character `{c}`")));
    }
    Ok(toks)
}

// ---------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------

/// Variable names defined/used by one statement-level node, plus its
/// surface tokens. `weak_def` marks array-element writes, which generate
/// a definition without killing earlier ones.
#[derive(Debug, Clone)]
struct Draft {
    kind: NodeKind,
    tokens: Vec<String>,
    line: u32,
    def: Option<String>,
    weak_def: bool,
    uses: BTreeSet<String>,
    is_return: bool,
}

#[derive(Debug)]
enum Stmt {
    Simple(Draft),
    If {
        cond: Draft,
        then_body: Vec<Stmt>,
        else_body: Option<Vec<Stmt>>,
    },
    While {
        cond: Draft,
        body: Vec<Stmt>,
    },
    For {
        init: Option<Draft>,
        cond: Draft,
        update: Option<Draft>,
        body: Vec<Stmt>,
    },
}

// ---------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

/// Accumulates uses while an expression is parsed.
#[derive(Default)]
struct ExprInfo {
    uses: BTreeSet<String>,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn error_here(&self, msg: &str) -> ParseError {
        match self.peek() {
            Some(t) => ParseError {
                line: t.line,
                column: t.col,
                message: format!("{msg} (found `{}`)", t.text),
            },
            None => {
                let (line, column) = self
                    .toks
                    .last()
                    .map(|t| (t.line, t.col + t.text.len() as u32))
                    .unwrap_or((1, 1));
                ParseError {
                    line,
                    column,
                    message: format!("{msg} (found end of input)"),
                }
            }
        }
    }

    fn advance(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, text: &str) -> Result<Tok, ParseError> {
        match self.peek() {
            Some(t) if t.text == text => Ok(self.advance().unwrap()),
            _ => Err(self.error_here(&format!("expected `{text}`"))),
        }
    }

    fn at(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.text == text)
    }

    fn at_type_keyword(&self) -> bool {
        self.peek()
            .is_some_and(|t| t.kind == TokKind::Ident && TYPE_KEYWORDS.contains(&t.text.as_str()))
    }

    fn texts(&self, start: usize, end: usize) -> Vec<String> {
        self.toks[start..end].iter().map(|t| t.text.clone()).collect()
    }

    // function := type ident '(' params? ')' block
    fn function(&mut self) -> Result<(Vec<Draft>, Vec<Stmt>, u32, u32), ParseError> {
        if !self.at_type_keyword() {
            return Err(self.error_here("expected return type"));
        }
        let entry_line = self.peek().unwrap().line;
        self.advance();
        while self.at("*") {
            self.advance();
        }
        match self.peek() {
            Some(t) if t.kind == TokKind::Ident => self.advance(),
            _ => return Err(self.error_here("expected function name")),
        };
        self.expect("(")?;
        let mut params = Vec::new();
        if !self.at(")") {
            loop {
                params.push(self.param()?);
                if self.at(",") {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(")")?;
        self.expect("{")?;
        let body = self.stmt_list()?;
        let close = self.expect("}")?;
        if self.peek().is_some() {
            return Err(self.error_here("trailing input after function body"));
        }
        Ok((params, body, entry_line, close.line))
    }

    fn param(&mut self) -> Result<Draft, ParseError> {
        let start = self.pos;
        if !self.at_type_keyword() {
            return Err(self.error_here("expected parameter type"));
        }
        let line = self.peek().unwrap().line;
        self.advance();
        while self.at("*") {
            self.advance();
        }
        let name = match self.peek() {
            Some(t) if t.kind == TokKind::Ident => self.advance().unwrap().text,
            _ => return Err(self.error_here("expected parameter name")),
        };
        if self.at("[") {
            self.advance();
            self.expect("]")?;
        }
        Ok(Draft {
            kind: NodeKind::Statement,
            tokens: self.texts(start, self.pos),
            line,
            def: Some(name),
            weak_def: false,
            uses: BTreeSet::new(),
            is_return: false,
        })
    }

    fn stmt_list(&mut self) -> Result<Vec<Stmt>, ParseError> {
        let mut out = Vec::new();
        while !self.at("}") {
            if self.peek().is_none() {
                return Err(self.error_here("expected `}`"));
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn nonempty_block(&mut self, what: &str) -> Result<Vec<Stmt>, ParseError> {
        let open = self.expect("{")?;
        let body = self.stmt_list()?;
        self.expect("}")?;
        if body.is_empty() {
            return Err(ParseError {
                line: open.line,
                column: open.col,
                message: format!("{what} body must contain at least one statement"),
            });
        }
        Ok(body)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let keyword = self
            .peek()
            .map(|t| t.text.clone())
            .ok_or_else(|| self.error_here("expected statement"))?;
        match keyword.as_str() {
            "if" => self.if_stmt(),
            "while" => self.while_stmt(),
            "for" => self.for_stmt(),
            "return" => {
                let d = self.return_stmt()?;
                Ok(Stmt::Simple(d))
            }
            _ => {
                let d = self.simple_stmt()?;
                self.expect(";")?;
                Ok(Stmt::Simple(d))
            }
        }
    }

    fn if_stmt(&mut self) -> Result<Stmt, ParseError> {
        self.expect("if")?;
        let cond = self.condition_draft()?;
        let then_body = self.nonempty_block("if")?;
        let else_body = if self.at("else") {
            self.advance();
            Some(self.nonempty_block("else")?)
        } else {
            None
        };
        Ok(Stmt::If {
            cond,
            then_body,
            else_body,
        })
    }

    fn while_stmt(&mut self) -> Result<Stmt, ParseError> {
        self.expect("while")?;
        let cond = self.condition_draft()?;
        let body = self.nonempty_block("while")?;
        Ok(Stmt::While { cond, body })
    }

    fn for_stmt(&mut self) -> Result<Stmt, ParseError> {
        self.expect("for")?;
        self.expect("(")?;
        let init = if self.at(";") {
            None
        } else {
            Some(self.simple_stmt()?)
        };
        self.expect(";")?;
        let cond_start = self.pos;
        let line = self.peek().map(|t| t.line).unwrap_or(1);
        let mut info = ExprInfo::default();
        self.expr(&mut info)?;
        let cond = Draft {
            kind: NodeKind::Condition,
            tokens: self.texts(cond_start, self.pos),
            line,
            def: None,
            weak_def: false,
            uses: info.uses,
            is_return: false,
        };
        self.expect(";")?;
        let update = if self.at(")") {
            None
        } else {
            Some(self.simple_stmt()?)
        };
        self.expect(")")?;
        let body = self.nonempty_block("for")?;
        Ok(Stmt::For {
            init,
            cond,
            update,
            body,
        })
    }

    fn condition_draft(&mut self) -> Result<Draft, ParseError> {
        self.expect("(")?;
        let start = self.pos;
        let line = self.peek().map(|t| t.line).unwrap_or(1);
        let mut info = ExprInfo::default();
        self.expr(&mut info)?;
        let end = self.pos;
        self.expect(")")?;
        Ok(Draft {
            kind: NodeKind::Condition,
            tokens: self.texts(start, end),
            line,
            def: None,
            weak_def: false,
            uses: info.uses,
            is_return: false,
        })
    }

    fn return_stmt(&mut self) -> Result<Draft, ParseError> {
        let start = self.pos;
        let line = self.peek().unwrap().line;
        self.expect("return")?;
        let mut info = ExprInfo::default();
        if !self.at(";") {
            self.expr(&mut info)?;
        }
        let end = self.pos;
        self.expect(";")?;
        Ok(Draft {
            kind: NodeKind::Statement,
            tokens: self.texts(start, end),
            line,
            def: None,
            weak_def: false,
            uses: info.uses,
            is_return: true,
        })
    }

    // decl, assignment or call statement (no trailing `;` consumed).
    fn simple_stmt(&mut self) -> Result<Draft, ParseError> {
        if self.at_type_keyword() {
            return self.decl_stmt();
        }
        let start = self.pos;
        let line = self.peek().map(|t| t.line).unwrap_or(1);
        let mut info = ExprInfo::default();

        // `*ident = expr` writes through a pointer: uses the pointer.
        if self.at("*") {
            self.advance();
            let name = match self.peek() {
                Some(t) if t.kind == TokKind::Ident => self.advance().unwrap().text,
                _ => return Err(self.error_here("expected identifier after `*`")),
            };
            info.uses.insert(name);
            self.expect("=")?;
            self.expr(&mut info)?;
            return Ok(Draft {
                kind: NodeKind::Statement,
                tokens: self.texts(start, self.pos),
                line,
                def: None,
                weak_def: false,
                uses: info.uses,
                is_return: false,
            });
        }

        let name = match self.peek() {
            Some(t) if t.kind == TokKind::Ident => self.advance().unwrap().text,
            _ => return Err(self.error_here("expected statement")),
        };

        if self.at("(") {
            // Call statement.
            self.call_args(&mut info)?;
            return Ok(Draft {
                kind: NodeKind::Statement,
                tokens: self.texts(start, self.pos),
                line,
                def: None,
                weak_def: false,
                uses: info.uses,
                is_return: false,
            });
        }

        let weak = if self.at("[") {
            self.advance();
            self.expr(&mut info)?;
            self.expect("]")?;
            true
        } else {
            false
        };
        self.expect("=")?;
        self.expr(&mut info)?;
        Ok(Draft {
            kind: NodeKind::Statement,
            tokens: self.texts(start, self.pos),
            line,
            def: Some(name),
            weak_def: weak,
            uses: info.uses,
            is_return: false,
        })
    }

    fn decl_stmt(&mut self) -> Result<Draft, ParseError> {
        let start = self.pos;
        let line = self.peek().unwrap().line;
        self.advance(); // type keyword
        while self.at("*") {
            self.advance();
        }
        let name = match self.peek() {
            Some(t) if t.kind == TokKind::Ident => self.advance().unwrap().text,
            _ => return Err(self.error_here("expected identifier in declaration")),
        };
        let mut info = ExprInfo::default();
        if self.at("[") {
            self.advance();
            if !self.at("]") {
                self.expr(&mut info)?;
            }
            self.expect("]")?;
        }
        if self.at("=") {
            self.advance();
            self.expr(&mut info)?;
        }
        Ok(Draft {
            kind: NodeKind::Statement,
            tokens: self.texts(start, self.pos),
            line,
            def: Some(name),
            weak_def: false,
            uses: info.uses,
            is_return: false,
        })
    }

    fn call_args(&mut self, info: &mut ExprInfo) -> Result<(), ParseError> {
        self.expect("(")?;
        if !self.at(")") {
            loop {
                self.expr(info)?;
                if self.at(",") {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok(())
    }

    // Precedence: relational < additive < multiplicative < unary < postfix.
    fn expr(&mut self, info: &mut ExprInfo) -> Result<(), ParseError> {
        self.additive(info)?;
        while self
            .peek()
            .is_some_and(|t| matches!(t.text.as_str(), "<" | ">" | "<=" | ">=" | "==" | "!="))
        {
            self.advance();
            self.additive(info)?;
        }
        Ok(())
    }

    fn additive(&mut self, info: &mut ExprInfo) -> Result<(), ParseError> {
        self.multiplicative(info)?;
        while self.at("+") || self.at("-") {
            self.advance();
            self.multiplicative(info)?;
        }
        Ok(())
    }

    fn multiplicative(&mut self, info: &mut ExprInfo) -> Result<(), ParseError> {
        self.unary(info)?;
        while self.at("*") || self.at("/") || self.at("%") {
            self.advance();
            self.unary(info)?;
        }
        Ok(())
    }

    fn unary(&mut self, info: &mut ExprInfo) -> Result<(), ParseError> {
        if self.at("-") || self.at("!") || self.at("*") || self.at("&") {
            self.advance();
            return self.unary(info);
        }
        self.postfix(info)
    }

    fn postfix(&mut self, info: &mut ExprInfo) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if t.kind == TokKind::Number => {
                self.advance();
            }
            Some(t) if matches!(t.kind, TokKind::StringLit | TokKind::CharLit) => {
                self.advance();
            }
            Some(t) if t.text == "(" => {
                self.advance();
                self.expr(info)?;
                self.expect(")")?;
            }
            Some(t) if t.kind == TokKind::Ident => {
                let name = self.advance().unwrap().text;
                if self.at("(") {
                    // Call within an expression: arguments are uses, the
                    // callee name is not a variable.
                    self.call_args(info)?;
                } else {
                    info.uses.insert(name);
                }
            }
            _ => return Err(self.error_here("expected expression")),
        }
        while self.at("[") {
            self.advance();
            self.expr(info)?;
            self.expect("]")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------
// CPG construction
// ---------------------------------------------------------------------

struct Builder {
    nodes: Vec<CpgNode>,
    ast: Vec<(NodeId, NodeId)>,
    cfg: Vec<(NodeId, NodeId)>,
    cdg: Vec<(NodeId, NodeId)>,
    // node -> (var, weak)
    defs: BTreeMap<NodeId, (String, bool)>,
    uses: BTreeMap<NodeId, BTreeSet<String>>,
}

impl Builder {
    fn add(&mut self, d: &Draft, ast_parent: NodeId, ctrl: Option<NodeId>) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(CpgNode {
            node_id: id,
            kind: d.kind,
            tokens: d.tokens.clone(),
            line: d.line,
        });
        self.ast.push((ast_parent, id));
        if let Some(c) = ctrl {
            self.cdg.push((c, id));
        }
        if let Some(v) = &d.def {
            self.defs.insert(id, (v.clone(), d.weak_def));
        }
        if !d.uses.is_empty() {
            self.uses.insert(id, d.uses.clone());
        }
        id
    }

    /// Wires a statement sequence. `preds` flow into the first statement;
    /// the returned set flows out. Return statements leave the chain.
    fn wire(
        &mut self,
        stmts: &[Stmt],
        mut preds: Vec<NodeId>,
        ast_parent: NodeId,
        ctrl: Option<NodeId>,
        returns: &mut Vec<NodeId>,
    ) -> Vec<NodeId> {
        for stmt in stmts {
            match stmt {
                Stmt::Simple(d) => {
                    let id = self.add(d, ast_parent, ctrl);
                    for p in &preds {
                        self.cfg.push((*p, id));
                    }
                    if d.is_return {
                        returns.push(id);
                        preds = Vec::new();
                    } else {
                        preds = vec![id];
                    }
                }
                Stmt::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    let c = self.add(cond, ast_parent, ctrl);
                    for p in &preds {
                        self.cfg.push((*p, c));
                    }
                    let then_out = self.wire(then_body, vec![c], c, Some(c), returns);
                    preds = match else_body {
                        Some(body) => {
                            let else_out = self.wire(body, vec![c], c, Some(c), returns);
                            then_out.into_iter().chain(else_out).collect()
                        }
                        None => then_out.into_iter().chain([c]).collect(),
                    };
                }
                Stmt::While { cond, body } => {
                    let c = self.add(cond, ast_parent, ctrl);
                    for p in &preds {
                        self.cfg.push((*p, c));
                    }
                    let body_out = self.wire(body, vec![c], c, Some(c), returns);
                    for b in body_out {
                        self.cfg.push((b, c));
                    }
                    preds = vec![c];
                }
                Stmt::For {
                    init,
                    cond,
                    update,
                    body,
                } => {
                    if let Some(d) = init {
                        let i = self.add(d, ast_parent, ctrl);
                        for p in &preds {
                            self.cfg.push((*p, i));
                        }
                        preds = vec![i];
                    }
                    let c = self.add(cond, ast_parent, ctrl);
                    // init is syntactically part of the loop; reparent it
                    // under the condition node after the fact.
                    if init.is_some() {
                        let i = c - 1;
                        if let Some(slot) = self.ast.iter_mut().find(|(_, n)| *n == i) {
                            slot.0 = c;
                        }
                    }
                    for p in &preds {
                        self.cfg.push((*p, c));
                    }
                    let u = update.as_ref().map(|d| self.add(d, c, Some(c)));
                    let body_out = self.wire(body, vec![c], c, Some(c), returns);
                    let back_target = u.unwrap_or(c);
                    for b in body_out {
                        self.cfg.push((b, back_target));
                    }
                    if let Some(u) = u {
                        self.cfg.push((u, c));
                    }
                    preds = vec![c];
                }
            }
        }
        preds
    }
}

/// Parses one mini-C function into its code property graph.
pub fn parse_function(source: &str) -> Result<Cpg, ParseError> {
    let toks = lex(source)?;
    let mut parser = Parser { toks, pos: 0 };
    let (params, body, entry_line, close_line) = parser.function()?;

    let mut b = Builder {
        nodes: Vec::new(),
        ast: Vec::new(),
        cfg: Vec::new(),
        cdg: Vec::new(),
        defs: BTreeMap::new(),
        uses: BTreeMap::new(),
    };
    let entry = 0 as NodeId;
    b.nodes.push(CpgNode {
        node_id: entry,
        kind: NodeKind::Entry,
        tokens: Vec::new(),
        line: entry_line,
    });

    let mut preds = vec![entry];
    for p in &params {
        let id = b.add(p, entry, None);
        for pr in &preds {
            b.cfg.push((*pr, id));
        }
        preds = vec![id];
    }

    let mut returns = Vec::new();
    let exits = b.wire(&body, preds, entry, None, &mut returns);

    // A dangling condition branch needs a real target to keep both of its
    // control-flow successors; materialize the implicit `return`.
    if exits.iter().any(|id| b.nodes[*id as usize].kind == NodeKind::Condition)
        && !exits.is_empty()
    {
        let ret = b.nodes.len() as NodeId;
        b.nodes.push(CpgNode {
            node_id: ret,
            kind: NodeKind::Statement,
            tokens: vec!["return".to_string()],
            line: close_line,
        });
        b.ast.push((entry, ret));
        for e in exits {
            b.cfg.push((e, ret));
        }
    }

    let ddg = reaching_definition_edges(&b);

    let mut edges = BTreeSet::new();
    // The entry node never carries a self AST edge; it is the root.
    for (s, d) in &b.ast {
        edges.insert(CpgEdge {
            src: *s,
            dst: *d,
            kind: EdgeKind::AST,
        });
    }
    for (s, d) in &b.cfg {
        edges.insert(CpgEdge {
            src: *s,
            dst: *d,
            kind: EdgeKind::CFG,
        });
    }
    for (s, d) in &b.cdg {
        edges.insert(CpgEdge {
            src: *s,
            dst: *d,
            kind: EdgeKind::CDG,
        });
    }
    for (s, d) in ddg {
        edges.insert(CpgEdge {
            src: s,
            dst: d,
            kind: EdgeKind::DDG,
        });
    }

    let cpg = Cpg {
        function_id: String::new(),
        nodes: b.nodes,
        edges: edges.into_iter().collect(),
    };
    debug_assert!(cpg.validate().is_ok());
    Ok(cpg)
}

/// Iterative reaching-definitions dataflow over the CFG. Each definition
/// is a (variable, node) fact; scalar writes kill earlier facts for the
/// variable, array-element writes do not (arrays are one variable per
/// name, updated weakly).
fn reaching_definition_edges(b: &Builder) -> Vec<(NodeId, NodeId)> {
    let n = b.nodes.len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, d) in &b.cfg {
        preds[*d as usize].push(*s as usize);
    }

    type Fact = (String, NodeId);
    let mut in_sets: Vec<BTreeSet<Fact>> = vec![BTreeSet::new(); n];
    let mut out_sets: Vec<BTreeSet<Fact>> = vec![BTreeSet::new(); n];

    let mut changed = true;
    while changed {
        changed = false;
        for id in 0..n {
            let mut input: BTreeSet<Fact> = BTreeSet::new();
            for p in &preds[id] {
                input.extend(out_sets[*p].iter().cloned());
            }
            let mut output = input.clone();
            if let Some((var, weak)) = b.defs.get(&(id as NodeId)) {
                if !*weak {
                    output.retain(|(v, _)| v != var);
                }
                output.insert((var.clone(), id as NodeId));
            }
            if input != in_sets[id] || output != out_sets[id] {
                in_sets[id] = input;
                out_sets[id] = output;
                changed = true;
            }
        }
    }

    let mut edges = BTreeSet::new();
    for id in 0..n {
        if let Some(used) = b.uses.get(&(id as NodeId)) {
            for (var, def_node) in &in_sets[id] {
                if used.contains(var) {
                    edges.insert((*def_node, id as NodeId));
                }
            }
        }
    }
    edges.into_iter().collect()
}
