//! Recursive-descent parser producing [`crate::ast`] trees.

use std::rc::Rc;

use crate::ast::*;
use crate::error::SyntaxError;
use crate::lexer::{Lexer, TokKind, Token};
use crate::number::format_number;

/// Nesting limit for statements and expressions. Keeps parser recursion well
/// inside the default 2 MiB thread stack.
const MAX_NESTING: usize = 128;

const RESERVED: &[&str] = &[
    "break", "case", "catch", "class", "const", "continue", "debugger", "default", "delete",
    "do", "else", "export", "extends", "finally", "for", "function", "if", "import", "in",
    "instanceof", "new", "return", "super", "switch", "this", "throw", "try", "typeof", "var",
    "void", "while", "with", "yield", "null", "true", "false",
];

/// Parses a complete script.
pub fn parse(src: &str) -> Result<Program, SyntaxError> {
    let toks = Lexer::new(src).tokenize()?;
    let mut p = Parser::new(toks);
    let mut body = Vec::new();
    while !p.at_eof() {
        body.push(p.statement()?);
    }
    Ok(Program { body })
}

fn parse_embedded_expr(src: &str, origin: Pos, depth: usize) -> Result<Expr, SyntaxError> {
    let toks = Lexer::with_origin(src, origin).tokenize()?;
    let mut p = Parser::new(toks);
    p.depth = depth;
    let e = p.expression(false)?;
    if !p.at_eof() {
        return Err(p.unexpected());
    }
    Ok(e)
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    depth: usize,
}

impl Parser {
    fn new(toks: Vec<Token>) -> Self {
        Parser { toks, i: 0, depth: 0 }
    }

    // ---- token helpers -------------------------------------------------

    fn peek(&self) -> &Token {
        &self.toks[self.i.min(self.toks.len() - 1)]
    }

    fn peek_at(&self, n: usize) -> &Token {
        &self.toks[(self.i + n).min(self.toks.len() - 1)]
    }

    fn pos(&self) -> Pos {
        self.peek().pos
    }

    fn advance(&mut self) -> Token {
        let t = self.peek().clone();
        if self.i < self.toks.len() - 1 {
            self.i += 1;
        }
        t
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek().kind, TokKind::Eof)
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(&self.peek().kind, TokKind::Punct(q) if *q == p)
    }

    fn is_punct_at(&self, n: usize, p: &str) -> bool {
        matches!(&self.peek_at(n).kind, TokKind::Punct(q) if *q == p)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), SyntaxError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(&self.peek().kind, TokKind::Ident(s) if s == w)
    }

    fn is_word_at(&self, n: usize, w: &str) -> bool {
        matches!(&self.peek_at(n).kind, TokKind::Ident(s) if s == w)
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, w: &str) -> Result<(), SyntaxError> {
        if self.eat_word(w) {
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn unexpected(&self) -> SyntaxError {
        let t = self.peek();
        let what = match &t.kind {
            TokKind::Eof => "Unexpected end of input".to_string(),
            TokKind::Num(n) => format!("Unexpected number '{}'", format_number(*n)),
            TokKind::Str(_) => "Unexpected string".to_string(),
            TokKind::Template { .. } => "Unexpected template string".to_string(),
            TokKind::Ident(s) if RESERVED.contains(&s.as_str()) => {
                format!("Unexpected token '{s}'")
            }
            TokKind::Ident(s) => format!("Unexpected identifier '{s}'"),
            TokKind::Punct(p) => format!("Unexpected token '{p}'"),
        };
        SyntaxError::new(what, t.pos)
    }

    fn binding_ident(&mut self) -> Result<(String, Pos), SyntaxError> {
        let t = self.peek().clone();
        match t.kind {
            TokKind::Ident(name) if !RESERVED.contains(&name.as_str()) => {
                self.advance();
                Ok((name, t.pos))
            }
            _ => Err(self.unexpected()),
        }
    }

    /// Automatic semicolon insertion.
    fn semicolon(&mut self) -> Result<(), SyntaxError> {
        if self.eat_punct(";") || self.is_punct("}") || self.at_eof() || self.peek().nl_before {
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn enter(&mut self) -> Result<(), SyntaxError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(SyntaxError::new(
                format!("nesting deeper than {MAX_NESTING} levels"),
                self.pos(),
            ));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    // ---- statements ----------------------------------------------------

    fn statement(&mut self) -> Result<Stmt, SyntaxError> {
        self.enter()?;
        let r = self.statement_inner();
        self.leave();
        r
    }

    fn statement_inner(&mut self) -> Result<Stmt, SyntaxError> {
        let pos = self.pos();
        let kind = match self.peek().kind.clone() {
            TokKind::Punct("{") => StmtKind::Block(self.block()?),
            TokKind::Punct(";") => {
                self.advance();
                StmtKind::Empty
            }
            TokKind::Ident(w) => match w.as_str() {
                "var" | "const" => {
                    let d = self.var_decl(false)?;
                    self.semicolon()?;
                    StmtKind::Decl(d)
                }
                "let" if self.let_starts_decl() => {
                    let d = self.var_decl(false)?;
                    self.semicolon()?;
                    StmtKind::Decl(d)
                }
                "function" => StmtKind::Function(self.function(false, false)?),
                "async" if self.is_word_at(1, "function") && !self.peek_at(1).nl_before => {
                    self.advance();
                    StmtKind::Function(self.function(true, false)?)
                }
                "if" => {
                    self.advance();
                    self.expect_punct("(")?;
                    let test = self.expression(false)?;
                    self.expect_punct(")")?;
                    let cons = self.statement()?;
                    let alt = if self.eat_word("else") {
                        Some(Box::new(self.statement()?))
                    } else {
                        None
                    };
                    StmtKind::If(test, Box::new(cons), alt)
                }
                "for" => self.for_statement()?,
                "while" => {
                    self.advance();
                    self.expect_punct("(")?;
                    let test = self.expression(false)?;
                    self.expect_punct(")")?;
                    StmtKind::While(test, Box::new(self.statement()?))
                }
                "do" => {
                    self.advance();
                    let body = self.statement()?;
                    self.expect_word("while")?;
                    self.expect_punct("(")?;
                    let test = self.expression(false)?;
                    self.expect_punct(")")?;
                    self.eat_punct(";");
                    StmtKind::DoWhile(Box::new(body), test)
                }
                "return" => {
                    self.advance();
                    let arg = if self.is_punct(";")
                        || self.is_punct("}")
                        || self.at_eof()
                        || self.peek().nl_before
                    {
                        None
                    } else {
                        Some(self.expression(false)?)
                    };
                    self.semicolon()?;
                    StmtKind::Return(arg)
                }
                "break" | "continue" => {
                    self.advance();
                    let label = match &self.peek().kind {
                        TokKind::Ident(l)
                            if !self.peek().nl_before && !RESERVED.contains(&l.as_str()) =>
                        {
                            let l = l.clone();
                            self.advance();
                            Some(l)
                        }
                        _ => None,
                    };
                    self.semicolon()?;
                    if w == "break" {
                        StmtKind::Break(label)
                    } else {
                        StmtKind::Continue(label)
                    }
                }
                "throw" => {
                    self.advance();
                    if self.peek().nl_before {
                        return Err(SyntaxError::new("Illegal newline after throw", pos));
                    }
                    let e = self.expression(false)?;
                    self.semicolon()?;
                    StmtKind::Throw(e)
                }
                "try" => self.try_statement()?,
                "switch" => self.switch_statement()?,
                "class" => {
                    return Err(SyntaxError::new("class declarations are not supported", pos))
                }
                "import" | "export" => {
                    return Err(SyntaxError::new(
                        "Cannot use import statement outside a module",
                        pos,
                    ))
                }
                "with" => return Err(SyntaxError::new("with statements are not supported", pos)),
                "debugger" => {
                    self.advance();
                    self.semicolon()?;
                    StmtKind::Empty
                }
                _ if self.is_punct_at(1, ":") && !RESERVED.contains(&w.as_str()) => {
                    self.advance();
                    self.advance();
                    StmtKind::Labeled(w, Box::new(self.statement()?))
                }
                _ => {
                    let e = self.expression(false)?;
                    self.semicolon()?;
                    StmtKind::Expr(e)
                }
            },
            _ => {
                let e = self.expression(false)?;
                self.semicolon()?;
                StmtKind::Expr(e)
            }
        };
        Ok(Stmt { pos, kind })
    }

    fn let_starts_decl(&self) -> bool {
        match &self.peek_at(1).kind {
            TokKind::Ident(n) => !RESERVED.contains(&n.as_str()) || n == "yield",
            TokKind::Punct("[") | TokKind::Punct("{") => true,
            _ => false,
        }
    }

    fn block(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        self.expect_punct("{")?;
        let mut body = Vec::new();
        while !self.is_punct("}") {
            if self.at_eof() {
                return Err(self.unexpected());
            }
            body.push(self.statement()?);
        }
        self.advance();
        Ok(body)
    }

    fn decl_kind(&mut self) -> Option<DeclKind> {
        let k = match &self.peek().kind {
            TokKind::Ident(w) if w == "var" => DeclKind::Var,
            TokKind::Ident(w) if w == "let" => DeclKind::Let,
            TokKind::Ident(w) if w == "const" => DeclKind::Const,
            _ => return None,
        };
        self.advance();
        Some(k)
    }

    fn var_decl(&mut self, no_in: bool) -> Result<VarDecl, SyntaxError> {
        let kind = self.decl_kind().ok_or_else(|| self.unexpected())?;
        let mut decls = Vec::new();
        loop {
            let pat_pos = self.pos();
            let pattern = self.binding_pattern()?;
            let init = if self.eat_punct("=") {
                Some(self.assignment(no_in)?)
            } else {
                None
            };
            if init.is_none() {
                let in_for_head = self.is_word("of") || self.is_word("in");
                if !in_for_head {
                    if kind == DeclKind::Const {
                        return Err(SyntaxError::new(
                            "Missing initializer in const declaration",
                            pat_pos,
                        ));
                    }
                    if !matches!(pattern, Pattern::Ident(..)) {
                        return Err(SyntaxError::new(
                            "Missing initializer in destructuring declaration",
                            pat_pos,
                        ));
                    }
                }
            }
            decls.push((pattern, init));
            if !self.eat_punct(",") {
                break;
            }
        }
        Ok(VarDecl { kind, decls })
    }

    fn for_statement(&mut self) -> Result<StmtKind, SyntaxError> {
        self.advance();
        if self.is_word("await") {
            return Err(SyntaxError::new("for await is not supported", self.pos()));
        }
        self.expect_punct("(")?;
        let mut init = None;
        if self.eat_punct(";") {
            // no init
        } else {
            let is_decl = self.is_word("var")
                || self.is_word("const")
                || (self.is_word("let") && self.let_starts_decl());
            if is_decl {
                let decl = self.var_decl(true)?;
                if self.is_word("of") || self.is_word("in") {
                    let is_of = self.is_word("of");
                    self.advance();
                    if decl.decls.len() != 1 || decl.decls[0].1.is_some() {
                        return Err(SyntaxError::new(
                            "Invalid left-hand side in for-loop head",
                            self.pos(),
                        ));
                    }
                    let pattern = decl.decls.into_iter().next().map(|d| d.0).unwrap_or_else(
                        || Pattern::Ident(String::new(), Pos::default()),
                    );
                    let head = ForHead::Decl(decl.kind, pattern);
                    return self.for_in_of_rest(head, is_of);
                }
                init = Some(ForInit::Decl(decl));
            } else {
                let e = self.expression(true)?;
                if self.is_word("of") || self.is_word("in") {
                    let is_of = self.is_word("of");
                    self.advance();
                    let head = ForHead::Target(expr_to_pattern(e)?);
                    return self.for_in_of_rest(head, is_of);
                }
                init = Some(ForInit::Expr(e));
            }
            self.expect_punct(";")?;
        }
        let test = if self.is_punct(";") {
            None
        } else {
            Some(self.expression(false)?)
        };
        self.expect_punct(";")?;
        let update = if self.is_punct(")") {
            None
        } else {
            Some(self.expression(false)?)
        };
        self.expect_punct(")")?;
        let body = Box::new(self.statement()?);
        Ok(StmtKind::For {
            init,
            test,
            update,
            body,
        })
    }

    fn for_in_of_rest(&mut self, head: ForHead, is_of: bool) -> Result<StmtKind, SyntaxError> {
        let object = if is_of {
            self.assignment(false)?
        } else {
            self.expression(false)?
        };
        self.expect_punct(")")?;
        let body = Box::new(self.statement()?);
        Ok(if is_of {
            StmtKind::ForOf(head, object, body)
        } else {
            StmtKind::ForIn(head, object, body)
        })
    }

    fn try_statement(&mut self) -> Result<StmtKind, SyntaxError> {
        self.advance();
        let block = self.block()?;
        let mut handler = None;
        if self.eat_word("catch") {
            let param = if self.eat_punct("(") {
                let p = self.binding_pattern()?;
                self.expect_punct(")")?;
                Some(p)
            } else {
                None
            };
            handler = Some((param, self.block()?));
        }
        let finalizer = if self.eat_word("finally") {
            Some(self.block()?)
        } else {
            None
        };
        if handler.is_none() && finalizer.is_none() {
            return Err(SyntaxError::new("Missing catch or finally after try", self.pos()));
        }
        Ok(StmtKind::Try {
            block,
            handler,
            finalizer,
        })
    }

    fn switch_statement(&mut self) -> Result<StmtKind, SyntaxError> {
        self.advance();
        self.expect_punct("(")?;
        let disc = self.expression(false)?;
        self.expect_punct(")")?;
        self.expect_punct("{")?;
        let mut cases = Vec::new();
        let mut seen_default = false;
        while !self.eat_punct("}") {
            let test = if self.eat_word("case") {
                Some(self.expression(false)?)
            } else if self.is_word("default") {
                if seen_default {
                    return Err(SyntaxError::new(
                        "More than one default clause in switch statement",
                        self.pos(),
                    ));
                }
                seen_default = true;
                self.advance();
                None
            } else {
                return Err(self.unexpected());
            };
            self.expect_punct(":")?;
            let mut body = Vec::new();
            while !(self.is_word("case") || self.is_word("default") || self.is_punct("}")) {
                if self.at_eof() {
                    return Err(self.unexpected());
                }
                body.push(self.statement()?);
            }
            cases.push(SwitchCase { test, body });
        }
        Ok(StmtKind::Switch(disc, cases))
    }

    // ---- functions and patterns ---------------------------------------

    /// Parses `function name?(...) {...}` starting at the `function` keyword.
    fn function(&mut self, is_async: bool, is_expr: bool) -> Result<Rc<Function>, SyntaxError> {
        let pos = self.pos();
        self.expect_word("function")?;
        if self.is_punct("*") {
            return Err(SyntaxError::new("generator functions are not supported", self.pos()));
        }
        let name = if self.is_punct("(") && is_expr {
            None
        } else {
            Some(self.binding_ident()?.0)
        };
        let params = self.params()?;
        let body = FuncBody::Block(self.block()?);
        Ok(Rc::new(Function {
            name,
            params,
            body,
            is_arrow: false,
            is_async,
            pos,
        }))
    }

    fn params(&mut self) -> Result<Vec<Param>, SyntaxError> {
        self.expect_punct("(")?;
        let mut params = Vec::new();
        while !self.is_punct(")") {
            let rest = self.eat_punct("...");
            let pattern = self.binding_pattern()?;
            let default = if !rest && self.eat_punct("=") {
                Some(self.assignment(false)?)
            } else {
                None
            };
            params.push(Param {
                pattern,
                default,
                rest,
            });
            if rest {
                break;
            }
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(")")?;
        Ok(params)
    }

    fn binding_pattern(&mut self) -> Result<Pattern, SyntaxError> {
        self.enter()?;
        let r = self.binding_pattern_inner();
        self.leave();
        r
    }

    fn binding_pattern_inner(&mut self) -> Result<Pattern, SyntaxError> {
        if self.eat_punct("[") {
            let mut elems = Vec::new();
            let mut rest = None;
            while !self.is_punct("]") {
                if self.eat_punct(",") {
                    elems.push(None);
                    continue;
                }
                if self.eat_punct("...") {
                    rest = Some(Box::new(self.binding_pattern()?));
                    break;
                }
                let pattern = self.binding_pattern()?;
                let default = if self.eat_punct("=") {
                    Some(self.assignment(false)?)
                } else {
                    None
                };
                elems.push(Some(PatElem { pattern, default }));
                if !self.is_punct("]") {
                    self.expect_punct(",")?;
                }
            }
            self.expect_punct("]")?;
            return Ok(Pattern::Array(elems, rest));
        }
        if self.eat_punct("{") {
            let mut props = Vec::new();
            let mut rest = None;
            while !self.is_punct("}") {
                if self.eat_punct("...") {
                    rest = Some(Box::new(self.binding_pattern()?));
                    break;
                }
                let key_pos = self.pos();
                let (key, shorthand) = self.prop_key()?;
                let value = if self.eat_punct(":") {
                    let pattern = self.binding_pattern()?;
                    let default = if self.eat_punct("=") {
                        Some(self.assignment(false)?)
                    } else {
                        None
                    };
                    PatElem { pattern, default }
                } else {
                    let name = shorthand.ok_or_else(|| self.unexpected())?;
                    if RESERVED.contains(&name.as_str()) {
                        return Err(SyntaxError::new(
                            format!("Unexpected token '{name}'"),
                            key_pos,
                        ));
                    }
                    let default = if self.eat_punct("=") {
                        Some(self.assignment(false)?)
                    } else {
                        None
                    };
                    PatElem {
                        pattern: Pattern::Ident(name, key_pos),
                        default,
                    }
                };
                props.push(PatProp { key, value });
                if !self.is_punct("}") {
                    self.expect_punct(",")?;
                }
            }
            self.expect_punct("}")?;
            return Ok(Pattern::Object(props, rest));
        }
        let (name, pos) = self.binding_ident()?;
        Ok(Pattern::Ident(name, pos))
    }

    /// Property key in object literals and patterns. Returns the key plus the
    /// identifier text when it could be a shorthand.
    fn prop_key(&mut self) -> Result<(PropKey, Option<String>), SyntaxError> {
        let t = self.advance();
        Ok(match t.kind {
            TokKind::Ident(name) => (PropKey::Name(name.as_str().into()), Some(name)),
            TokKind::Str(s) => (PropKey::Name(s.into()), None),
            TokKind::Num(n) => (PropKey::Name(format_number(n).into()), None),
            TokKind::Punct("[") => {
                let e = self.assignment(false)?;
                self.expect_punct("]")?;
                (PropKey::Computed(Box::new(e)), None)
            }
            _ => {
                self.i -= 1;
                return Err(self.unexpected());
            }
        })
    }

    // ---- expressions ---------------------------------------------------

    fn expression(&mut self, no_in: bool) -> Result<Expr, SyntaxError> {
        let pos = self.pos();
        let first = self.assignment(no_in)?;
        if !self.is_punct(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_punct(",") {
            items.push(self.assignment(no_in)?);
        }
        Ok(Expr::new(pos, ExprKind::Seq(items)))
    }

    fn assignment(&mut self, no_in: bool) -> Result<Expr, SyntaxError> {
        self.enter()?;
        let r = self.assignment_inner(no_in);
        self.leave();
        r
    }

    fn assignment_inner(&mut self, no_in: bool) -> Result<Expr, SyntaxError> {
        if let Some(arrow) = self.try_arrow(no_in)? {
            return Ok(arrow);
        }
        let pos = self.pos();
        let lhs = self.conditional(no_in)?;
        let op = match &self.peek().kind {
            TokKind::Punct(p) => match *p {
                "=" => Some(AssignOp::Assign),
                "+=" => Some(AssignOp::Compound(BinOp::Add)),
                "-=" => Some(AssignOp::Compound(BinOp::Sub)),
                "*=" => Some(AssignOp::Compound(BinOp::Mul)),
                "/=" => Some(AssignOp::Compound(BinOp::Div)),
                "%=" => Some(AssignOp::Compound(BinOp::Rem)),
                "**=" => Some(AssignOp::Compound(BinOp::Exp)),
                "<<=" => Some(AssignOp::Compound(BinOp::Shl)),
                ">>=" => Some(AssignOp::Compound(BinOp::Shr)),
                ">>>=" => Some(AssignOp::Compound(BinOp::UShr)),
                "&=" => Some(AssignOp::Compound(BinOp::BitAnd)),
                "|=" => Some(AssignOp::Compound(BinOp::BitOr)),
                "^=" => Some(AssignOp::Compound(BinOp::BitXor)),
                "&&=" => Some(AssignOp::Logical(LogicalOp::And)),
                "||=" => Some(AssignOp::Logical(LogicalOp::Or)),
                "??=" => Some(AssignOp::Logical(LogicalOp::Nullish)),
                _ => None,
            },
            _ => None,
        };
        let Some(op) = op else {
            return Ok(lhs);
        };
        let target = if op == AssignOp::Assign {
            expr_to_pattern(lhs)?
        } else {
            simple_target(lhs)?
        };
        self.advance();
        let value = self.assignment(no_in)?;
        Ok(Expr::new(
            pos,
            ExprKind::Assign {
                op,
                target: Box::new(target),
                value: Box::new(value),
            },
        ))
    }

    /// Recognizes arrow functions by looking ahead for `=>`.
    fn try_arrow(&mut self, no_in: bool) -> Result<Option<Expr>, SyntaxError> {
        let pos = self.pos();
        let mut offset = 0;
        let is_async = self.is_word("async")
            && !self.peek_at(1).nl_before
            && (matches!(self.peek_at(1).kind, TokKind::Ident(_)) && self.is_punct_at(2, "=>")
                || self.is_punct_at(1, "(") && self.arrow_after_parens(1));
        if is_async {
            offset = 1;
        }
        let single = matches!(&self.peek_at(offset).kind, TokKind::Ident(n) if !RESERVED.contains(&n.as_str()))
            && self.is_punct_at(offset + 1, "=>")
            && !self.peek_at(offset + 1).nl_before;
        let parens = self.is_punct_at(offset, "(") && self.arrow_after_parens(offset);
        if !single && !parens {
            return Ok(None);
        }
        if is_async {
            self.advance();
        }
        let params = if single {
            let (name, p) = self.binding_ident()?;
            vec![Param {
                pattern: Pattern::Ident(name, p),
                default: None,
                rest: false,
            }]
        } else {
            self.params()?
        };
        self.expect_punct("=>")?;
        let body = if self.is_punct("{") {
            FuncBody::Block(self.block()?)
        } else {
            FuncBody::Expr(Box::new(self.assignment(no_in)?))
        };
        Ok(Some(Expr::new(
            pos,
            ExprKind::Function(Rc::new(Function {
                name: None,
                params,
                body,
                is_arrow: true,
                is_async,
                pos,
            })),
        )))
    }

    /// True when the `(` at `offset` closes with `)` immediately followed by `=>`.
    fn arrow_after_parens(&self, offset: usize) -> bool {
        let mut depth = 0usize;
        let mut k = self.i + offset;
        while k < self.toks.len() {
            match &self.toks[k].kind {
                TokKind::Punct("(") | TokKind::Punct("[") | TokKind::Punct("{") => depth += 1,
                TokKind::Punct(")") | TokKind::Punct("]") | TokKind::Punct("}") => {
                    depth = depth.saturating_sub(1);
                    if depth == 0 {
                        return k + 1 < self.toks.len()
                            && matches!(self.toks[k + 1].kind, TokKind::Punct("=>"))
                            && !self.toks[k + 1].nl_before;
                    }
                }
                TokKind::Eof => return false,
                _ => {}
            }
            k += 1;
        }
        false
    }

    fn conditional(&mut self, no_in: bool) -> Result<Expr, SyntaxError> {
        let pos = self.pos();
        let test = self.binary(0, no_in)?;
        if !self.eat_punct("?") {
            return Ok(test);
        }
        let cons = self.assignment(false)?;
        self.expect_punct(":")?;
        let alt = self.assignment(no_in)?;
        Ok(Expr::new(
            pos,
            ExprKind::Cond(Box::new(test), Box::new(cons), Box::new(alt)),
        ))
    }

    fn binary_op(&self, no_in: bool) -> Option<(u8, BinaryKind)> {
        let kind = match &self.peek().kind {
            TokKind::Punct(p) => match *p {
                "??" => BinaryKind::Logical(LogicalOp::Nullish),
                "||" => BinaryKind::Logical(LogicalOp::Or),
                "&&" => BinaryKind::Logical(LogicalOp::And),
                "|" => BinaryKind::Bin(BinOp::BitOr),
                "^" => BinaryKind::Bin(BinOp::BitXor),
                "&" => BinaryKind::Bin(BinOp::BitAnd),
                "==" => BinaryKind::Bin(BinOp::Eq),
                "!=" => BinaryKind::Bin(BinOp::NotEq),
                "===" => BinaryKind::Bin(BinOp::StrictEq),
                "!==" => BinaryKind::Bin(BinOp::StrictNotEq),
                "<" => BinaryKind::Bin(BinOp::Lt),
                "<=" => BinaryKind::Bin(BinOp::LtEq),
                ">" => BinaryKind::Bin(BinOp::Gt),
                ">=" => BinaryKind::Bin(BinOp::GtEq),
                "<<" => BinaryKind::Bin(BinOp::Shl),
                ">>" => BinaryKind::Bin(BinOp::Shr),
                ">>>" => BinaryKind::Bin(BinOp::UShr),
                "+" => BinaryKind::Bin(BinOp::Add),
                "-" => BinaryKind::Bin(BinOp::Sub),
                "*" => BinaryKind::Bin(BinOp::Mul),
                "/" => BinaryKind::Bin(BinOp::Div),
                "%" => BinaryKind::Bin(BinOp::Rem),
                "**" => BinaryKind::Bin(BinOp::Exp),
                _ => return None,
            },
            TokKind::Ident(w) if w == "instanceof" => BinaryKind::Bin(BinOp::InstanceOf),
            TokKind::Ident(w) if w == "in" && !no_in => BinaryKind::Bin(BinOp::In),
            _ => return None,
        };
        let prec = match kind {
            BinaryKind::Logical(LogicalOp::Nullish) => 1,
            BinaryKind::Logical(LogicalOp::Or) => 2,
            BinaryKind::Logical(LogicalOp::And) => 3,
            BinaryKind::Bin(op) => match op {
                BinOp::BitOr => 4,
                BinOp::BitXor => 5,
                BinOp::BitAnd => 6,
                BinOp::Eq | BinOp::NotEq | BinOp::StrictEq | BinOp::StrictNotEq => 7,
                BinOp::Lt
                | BinOp::LtEq
                | BinOp::Gt
                | BinOp::GtEq
                | BinOp::In
                | BinOp::InstanceOf => 8,
                BinOp::Shl | BinOp::Shr | BinOp::UShr => 9,
                BinOp::Add | BinOp::Sub => 10,
                BinOp::Mul | BinOp::Div | BinOp::Rem => 11,
                BinOp::Exp => 12,
            },
        };
        Some((prec, kind))
    }

    /// Precedence climbing over all binary and logical operators.
    fn binary(&mut self, min_prec: u8, no_in: bool) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        while let Some((prec, kind)) = self.binary_op(no_in) {
            if prec < min_prec || prec == 0 {
                break;
            }
            let pos = self.pos();
            self.advance();
            // `**` is right-associative.
            let next_min = if matches!(kind, BinaryKind::Bin(BinOp::Exp)) {
                prec
            } else {
                prec + 1
            };
            self.enter()?;
            let rhs = self.binary(next_min, no_in);
            self.leave();
            let rhs = rhs?;
            lhs = match kind {
                BinaryKind::Bin(op) => Expr::new(pos, ExprKind::Binary(op, Box::new(lhs), Box::new(rhs))),
                BinaryKind::Logical(op) => {
                    Expr::new(pos, ExprKind::Logical(op, Box::new(lhs), Box::new(rhs)))
                }
            };
            // Re-anchor the position at the left operand for nicer messages.
            if let ExprKind::Binary(_, l, _) | ExprKind::Logical(_, l, _) = &lhs.kind {
                lhs.pos = l.pos;
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        let pos = self.pos();
        let op = match &self.peek().kind {
            TokKind::Punct("!") => Some(UnaryOp::Not),
            TokKind::Punct("-") => Some(UnaryOp::Neg),
            TokKind::Punct("+") => Some(UnaryOp::Plus),
            TokKind::Punct("~") => Some(UnaryOp::BitNot),
            TokKind::Ident(w) if w == "typeof" => Some(UnaryOp::TypeOf),
            TokKind::Ident(w) if w == "void" => Some(UnaryOp::Void),
            TokKind::Ident(w) if w == "delete" => Some(UnaryOp::Delete),
            _ => None,
        };
        if let Some(op) = op {
            self.advance();
            self.enter()?;
            let arg = self.unary();
            self.leave();
            return Ok(Expr::new(pos, ExprKind::Unary(op, Box::new(arg?))));
        }
        if self.is_word("await") && self.await_is_operator() {
            self.advance();
            self.enter()?;
            let arg = self.unary();
            self.leave();
            return Ok(Expr::new(pos, ExprKind::Await(Box::new(arg?))));
        }
        if self.is_punct("++") || self.is_punct("--") {
            let increment = self.is_punct("++");
            self.advance();
            self.enter()?;
            let target = self.unary();
            self.leave();
            let target = target?;
            check_update_target(&target)?;
            return Ok(Expr::new(
                pos,
                ExprKind::Update {
                    increment,
                    prefix: true,
                    target: Box::new(target),
                },
            ));
        }
        self.postfix()
    }

    fn await_is_operator(&self) -> bool {
        let next = self.peek_at(1);
        if next.nl_before {
            return false;
        }
        !matches!(
            next.kind,
            TokKind::Punct(")")
                | TokKind::Punct("]")
                | TokKind::Punct("}")
                | TokKind::Punct(";")
                | TokKind::Punct(",")
                | TokKind::Punct("=")
                | TokKind::Punct(":")
                | TokKind::Punct("=>")
                | TokKind::Eof
        )
    }

    fn postfix(&mut self) -> Result<Expr, SyntaxError> {
        let pos = self.pos();
        let e = self.call_member()?;
        if (self.is_punct("++") || self.is_punct("--")) && !self.peek().nl_before {
            let increment = self.is_punct("++");
            check_update_target(&e)?;
            self.advance();
            return Ok(Expr::new(
                pos,
                ExprKind::Update {
                    increment,
                    prefix: false,
                    target: Box::new(e),
                },
            ));
        }
        Ok(e)
    }

    fn call_member(&mut self) -> Result<Expr, SyntaxError> {
        let mut e = if self.is_word("new") {
            self.new_expr()?
        } else {
            self.primary()?
        };
        loop {
            let pos = e.pos;
            if self.eat_punct(".") {
                let name = self.member_name()?;
                e = Expr::new(
                    pos,
                    ExprKind::Member {
                        object: Box::new(e),
                        prop: MemberProp::Name(name.into()),
                        optional: false,
                    },
                );
            } else if self.eat_punct("?.") {
                if self.is_punct("(") {
                    let args = self.args()?;
                    e = Expr::new(
                        pos,
                        ExprKind::Call {
                            callee: Box::new(e),
                            args,
                            optional: true,
                        },
                    );
                } else if self.eat_punct("[") {
                    let idx = self.expression(false)?;
                    self.expect_punct("]")?;
                    e = Expr::new(
                        pos,
                        ExprKind::Member {
                            object: Box::new(e),
                            prop: MemberProp::Computed(Box::new(idx)),
                            optional: true,
                        },
                    );
                } else {
                    let name = self.member_name()?;
                    e = Expr::new(
                        pos,
                        ExprKind::Member {
                            object: Box::new(e),
                            prop: MemberProp::Name(name.into()),
                            optional: true,
                        },
                    );
                }
            } else if self.eat_punct("[") {
                let idx = self.expression(false)?;
                self.expect_punct("]")?;
                e = Expr::new(
                    pos,
                    ExprKind::Member {
                        object: Box::new(e),
                        prop: MemberProp::Computed(Box::new(idx)),
                        optional: false,
                    },
                );
            } else if self.is_punct("(") {
                let args = self.args()?;
                e = Expr::new(
                    pos,
                    ExprKind::Call {
                        callee: Box::new(e),
                        args,
                        optional: false,
                    },
                );
            } else if matches!(self.peek().kind, TokKind::Template { .. }) {
                return Err(SyntaxError::new(
                    "tagged templates are not supported",
                    self.pos(),
                ));
            } else {
                return Ok(e);
            }
        }
    }

    fn new_expr(&mut self) -> Result<Expr, SyntaxError> {
        let pos = self.pos();
        self.expect_word("new")?;
        self.enter()?;
        let callee = if self.is_word("new") {
            self.new_expr()
        } else {
            self.primary()
        };
        self.leave();
        let mut callee = callee?;
        // Member accesses bind tighter than `new`, calls do not.
        loop {
            let cpos = callee.pos;
            if self.eat_punct(".") {
                let name = self.member_name()?;
                callee = Expr::new(
                    cpos,
                    ExprKind::Member {
                        object: Box::new(callee),
                        prop: MemberProp::Name(name.into()),
                        optional: false,
                    },
                );
            } else if self.eat_punct("[") {
                let idx = self.expression(false)?;
                self.expect_punct("]")?;
                callee = Expr::new(
                    cpos,
                    ExprKind::Member {
                        object: Box::new(callee),
                        prop: MemberProp::Computed(Box::new(idx)),
                        optional: false,
                    },
                );
            } else {
                break;
            }
        }
        let args = if self.is_punct("(") {
            self.args()?
        } else {
            Vec::new()
        };
        Ok(Expr::new(
            pos,
            ExprKind::New {
                callee: Box::new(callee),
                args,
            },
        ))
    }

    fn member_name(&mut self) -> Result<String, SyntaxError> {
        match self.peek().kind.clone() {
            TokKind::Ident(name) => {
                self.advance();
                Ok(name)
            }
            TokKind::Punct("#") => Err(SyntaxError::new(
                "private fields are not supported",
                self.pos(),
            )),
            _ => Err(self.unexpected()),
        }
    }

    fn args(&mut self) -> Result<Vec<Arg>, SyntaxError> {
        self.expect_punct("(")?;
        let mut args = Vec::new();
        while !self.is_punct(")") {
            if self.eat_punct("...") {
                args.push(Arg::Spread(self.assignment(false)?));
            } else {
                args.push(Arg::Item(self.assignment(false)?));
            }
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(")")?;
        Ok(args)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let t = self.peek().clone();
        let pos = t.pos;
        let kind = match t.kind {
            TokKind::Num(n) => {
                self.advance();
                ExprKind::Num(n)
            }
            TokKind::Str(s) => {
                self.advance();
                ExprKind::Str(s.into())
            }
            TokKind::Template { chunks, exprs } => {
                self.advance();
                let mut parsed = Vec::with_capacity(exprs.len());
                for (src, origin) in exprs {
                    parsed.push(parse_embedded_expr(&src, origin, self.depth + 1)?);
                }
                ExprKind::Template(chunks.into_iter().map(Rc::from).collect(), parsed)
            }
            TokKind::Punct("(") => {
                self.advance();
                let inner = self.expression(false)?;
                self.expect_punct(")")?;
                ExprKind::Paren(Box::new(inner))
            }
            TokKind::Punct("[") => {
                self.advance();
                let mut items = Vec::new();
                while !self.is_punct("]") {
                    if self.eat_punct(",") {
                        items.push(ArrayItem::Hole);
                        continue;
                    }
                    if self.eat_punct("...") {
                        items.push(ArrayItem::Spread(self.assignment(false)?));
                    } else {
                        items.push(ArrayItem::Item(self.assignment(false)?));
                    }
                    if !self.is_punct("]") {
                        self.expect_punct(",")?;
                    }
                }
                self.advance();
                ExprKind::Array(items)
            }
            TokKind::Punct("{") => {
                self.advance();
                ExprKind::Object(self.object_literal()?)
            }
            TokKind::Punct("/") | TokKind::Punct("/=") => {
                return Err(SyntaxError::new(
                    "regular expression literals are not supported",
                    pos,
                ))
            }
            TokKind::Ident(w) => match w.as_str() {
                "true" => {
                    self.advance();
                    ExprKind::Bool(true)
                }
                "false" => {
                    self.advance();
                    ExprKind::Bool(false)
                }
                "null" => {
                    self.advance();
                    ExprKind::Null
                }
                "this" => {
                    self.advance();
                    ExprKind::This
                }
                "function" => ExprKind::Function(self.function(false, true)?),
                "async" if self.is_word_at(1, "function") && !self.peek_at(1).nl_before => {
                    self.advance();
                    ExprKind::Function(self.function(true, true)?)
                }
                "class" => {
                    return Err(SyntaxError::new("class expressions are not supported", pos))
                }
                "import" => {
                    return Err(SyntaxError::new(
                        "Cannot use import statement outside a module",
                        pos,
                    ))
                }
                "super" => return Err(SyntaxError::new("'super' keyword unexpected here", pos)),
                _ if RESERVED.contains(&w.as_str()) => return Err(self.unexpected()),
                _ => {
                    self.advance();
                    ExprKind::Ident(w)
                }
            },
            _ => return Err(self.unexpected()),
        };
        Ok(Expr::new(pos, kind))
    }

    fn object_literal(&mut self) -> Result<Vec<ObjProp>, SyntaxError> {
        let mut props = Vec::new();
        while !self.is_punct("}") {
            if self.eat_punct("...") {
                props.push(ObjProp::Spread(self.assignment(false)?));
            } else {
                let key_pos = self.pos();
                // get/set accessors
                if (self.is_word("get") || self.is_word("set"))
                    && !matches!(
                        self.peek_at(1).kind,
                        TokKind::Punct(",") | TokKind::Punct(":") | TokKind::Punct("(") | TokKind::Punct("}")
                    )
                {
                    return Err(SyntaxError::new(
                        "getter and setter properties are not supported",
                        key_pos,
                    ));
                }
                let is_async = self.is_word("async")
                    && !matches!(
                        self.peek_at(1).kind,
                        TokKind::Punct(",") | TokKind::Punct(":") | TokKind::Punct("(") | TokKind::Punct("}")
                    );
                if is_async {
                    self.advance();
                }
                let (key, shorthand) = self.prop_key()?;
                if self.is_punct("(") {
                    let fpos = self.pos();
                    let params = self.params()?;
                    let body = FuncBody::Block(self.block()?);
                    let name = match &key {
                        PropKey::Name(n) => Some(n.to_string()),
                        PropKey::Computed(_) => None,
                    };
                    let f = Rc::new(Function {
                        name,
                        params,
                        body,
                        is_arrow: false,
                        is_async,
                        pos: fpos,
                    });
                    props.push(ObjProp::KeyValue(key, Expr::new(fpos, ExprKind::Function(f))));
                } else if self.eat_punct(":") {
                    let v = self.assignment(false)?;
                    props.push(ObjProp::KeyValue(key, v));
                } else {
                    let name = shorthand.ok_or_else(|| self.unexpected())?;
                    if RESERVED.contains(&name.as_str()) {
                        return Err(SyntaxError::new(format!("Unexpected token '{name}'"), key_pos));
                    }
                    if self.is_punct("=") {
                        // Cover grammar: `{ a = 1 } = obj`.
                        self.advance();
                        let default = self.assignment(false)?;
                        props.push(ObjProp::KeyValue(
                            key,
                            Expr::new(
                                key_pos,
                                ExprKind::Assign {
                                    op: AssignOp::Assign,
                                    target: Box::new(Pattern::Ident(name, key_pos)),
                                    value: Box::new(default),
                                },
                            ),
                        ));
                    } else {
                        props.push(ObjProp::Shorthand(name, key_pos));
                    }
                }
            }
            if !self.is_punct("}") {
                self.expect_punct(",")?;
            }
        }
        self.advance();
        Ok(props)
    }
}

enum BinaryKind {
    Bin(BinOp),
    Logical(LogicalOp),
}

fn check_update_target(e: &Expr) -> Result<(), SyntaxError> {
    match &e.kind {
        ExprKind::Ident(_) | ExprKind::Member { .. } => Ok(()),
        ExprKind::Paren(inner) => check_update_target(inner),
        _ => Err(SyntaxError::new(
            "Invalid left-hand side expression in postfix operation",
            e.pos,
        )),
    }
}

fn simple_target(e: Expr) -> Result<Pattern, SyntaxError> {
    match e.kind {
        ExprKind::Ident(name) => Ok(Pattern::Ident(name, e.pos)),
        ExprKind::Member { optional: false, .. } => Ok(Pattern::Expr(Box::new(e))),
        ExprKind::Paren(inner) => simple_target(*inner),
        _ => Err(SyntaxError::new("Invalid left-hand side in assignment", e.pos)),
    }
}

/// Reinterprets an expression as an assignment target (destructuring).
fn expr_to_pattern(e: Expr) -> Result<Pattern, SyntaxError> {
    let pos = e.pos;
    match e.kind {
        ExprKind::Ident(_) | ExprKind::Member { .. } | ExprKind::Paren(_) => simple_target(e),
        ExprKind::Array(items) => {
            let mut elems = Vec::new();
            let mut rest = None;
            let n = items.len();
            for (idx, item) in items.into_iter().enumerate() {
                match item {
                    ArrayItem::Hole => elems.push(None),
                    ArrayItem::Item(x) => elems.push(Some(expr_to_elem(x)?)),
                    ArrayItem::Spread(x) if idx + 1 == n => {
                        rest = Some(Box::new(expr_to_pattern(x)?));
                    }
                    ArrayItem::Spread(_) => {
                        return Err(SyntaxError::new("Rest element must be last element", pos))
                    }
                }
            }
            Ok(Pattern::Array(elems, rest))
        }
        ExprKind::Object(props) => {
            let mut out = Vec::new();
            let mut rest = None;
            let n = props.len();
            for (idx, p) in props.into_iter().enumerate() {
                match p {
                    ObjProp::KeyValue(key, value) => out.push(PatProp {
                        key,
                        value: expr_to_elem(value)?,
                    }),
                    ObjProp::Shorthand(name, npos) => out.push(PatProp {
                        key: PropKey::Name(name.as_str().into()),
                        value: PatElem {
                            pattern: Pattern::Ident(name, npos),
                            default: None,
                        },
                    }),
                    ObjProp::Spread(x) if idx + 1 == n => {
                        rest = Some(Box::new(expr_to_pattern(x)?));
                    }
                    ObjProp::Spread(_) => {
                        return Err(SyntaxError::new("Rest element must be last element", pos))
                    }
                }
            }
            Ok(Pattern::Object(out, rest))
        }
        _ => Err(SyntaxError::new("Invalid left-hand side in assignment", pos)),
    }
}

fn expr_to_elem(e: Expr) -> Result<PatElem, SyntaxError> {
    match e.kind {
        ExprKind::Assign {
            op: AssignOp::Assign,
            target,
            value,
        } => Ok(PatElem {
            pattern: *target,
            default: Some(*value),
        }),
        _ => Ok(PatElem {
            pattern: expr_to_pattern(e)?,
            default: None,
        }),
    }
}
