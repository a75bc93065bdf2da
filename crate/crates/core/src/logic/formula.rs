//! Parser and sort checker for the z3py-style formula subset produced by the
//! translation prompt, lowering to SMT-LIB v2 terms.
//!
//! Supported: `Int`/`Real`/`Bool` constants (singular and plural forms),
//! `DeclareSort`, `EnumSort`, `Function`, `Const`/`Consts`, linear and
//! nonlinear arithmetic, comparisons (chained too), the boolean connectives,
//! `If`, `Distinct`, `Sum`, and `ForAll`/`Exists` over enumerated sorts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("undeclared symbol `{0}`")]
    UndeclaredSymbol(String),
    #[error("sort mismatch: {0}")]
    SortMismatch(String),
    #[error("wrong number of arguments: {0}")]
    Arity(String),
    #[error("unsupported construct: {0}")]
    Unsupported(String),
}

impl FormulaError {
    fn context(self, label: &str) -> FormulaError {
        match self {
            FormulaError::Syntax(m) => FormulaError::Syntax(format!("{label}: {m}")),
            FormulaError::SortMismatch(m) => FormulaError::SortMismatch(format!("{label}: {m}")),
            FormulaError::Arity(m) => FormulaError::Arity(format!("{label}: {m}")),
            FormulaError::Unsupported(m) => FormulaError::Unsupported(format!("{label}: {m}")),
            // the bare symbol name is what repair prompts and callers key on
            undeclared @ FormulaError::UndeclaredSymbol(_) => undeclared,
        }
    }
}

fn syntax(msg: impl Into<String>) -> FormulaError {
    FormulaError::Syntax(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    Int,
    Real,
    Bool,
    Named(String),
}

impl Sort {
    fn is_numeric(&self) -> bool {
        matches!(self, Sort::Int | Sort::Real)
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Int => f.write_str("Int"),
            Sort::Real => f.write_str("Real"),
            Sort::Bool => f.write_str("Bool"),
            Sort::Named(n) => f.write_str(n),
        }
    }
}

// ---------------------------------------------------------------- lexing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(String),
    Dec(String),
    Str(String),
    Op(&'static str),
}

const OPS: &[&str] = &[
    "**", "//", "==", "!=", "<=", ">=", "<", ">", "+", "-", "*", "/", "%", "&", "|", "^", "~", "(", ")", "[", "]",
    ",", "=",
];

fn lex(src: &str) -> Result<Vec<Tok>, FormulaError> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() || c == '\\' {
            i += 1;
        } else if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            // z3 module prefixes such as `z3.And`
            let word = word.strip_prefix("z3.").map(str::to_string).unwrap_or(word);
            if word.contains('.') {
                return Err(syntax(format!("attribute access `{word}`")));
            }
            toks.push(Tok::Ident(word));
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '_') {
                i += 1;
            }
            let mut is_dec = false;
            if i < chars.len() && chars[i] == '.' {
                is_dec = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i].is_alphabetic() || chars[i] == '_') {
                return Err(syntax(format!("malformed number near `{}`", chars[start..=i].iter().collect::<String>())));
            }
            let text: String = chars[start..i].iter().filter(|c| **c != '_').collect();
            toks.push(if is_dec { Tok::Dec(normalize_decimal(&text)) } else { Tok::Int(strip_leading_zeros(&text)) });
        } else if c == '\'' || c == '"' {
            let quote = c;
            let start = i + 1;
            i += 1;
            while i < chars.len() && chars[i] != quote {
                i += 1;
            }
            if i == chars.len() {
                return Err(syntax("unterminated string"));
            }
            toks.push(Tok::Str(chars[start..i].iter().collect()));
            i += 1;
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let op = OPS
                .iter()
                .find(|op| rest.starts_with(**op))
                .ok_or_else(|| syntax(format!("unexpected character `{c}`")))?;
            toks.push(Tok::Op(op));
            i += op.chars().count();
        }
    }
    Ok(toks)
}

fn strip_leading_zeros(s: &str) -> String {
    let t = s.trim_start_matches('0');
    if t.is_empty() { "0".into() } else { t.into() }
}

fn normalize_decimal(s: &str) -> String {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    let int = strip_leading_zeros(int);
    let frac = if frac.is_empty() { "0" } else { frac };
    format!("{int}.{frac}")
}

// ---------------------------------------------------------------- parsing

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Int(String),
    Dec(String),
    Bool(bool),
    Str(String),
    Var(String),
    List(Vec<Expr>),
    Call(String, Vec<Expr>),
    Unary(&'static str, Box<Expr>),
    Binary(&'static str, Box<Expr>, Box<Expr>),
    Compare(Vec<Expr>, Vec<&'static str>),
    Not(Box<Expr>),
    Logic(&'static str, Vec<Expr>),
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn parse(src: &str) -> Result<Expr, FormulaError> {
        let toks = lex(src)?;
        if toks.is_empty() {
            return Err(syntax("empty formula"));
        }
        let mut p = Parser { toks, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(syntax(format!("unexpected trailing input at token {}", p.pos + 1)));
        }
        Ok(e)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_op(&self, op: &str) -> bool {
        matches!(self.peek(), Some(Tok::Op(o)) if *o == op)
    }

    fn peek_word(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if w == word)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.peek_op(op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<(), FormulaError> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(syntax(format!("expected `{op}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr, FormulaError> {
        let mut items = vec![self.and_expr()?];
        while self.peek_word("or") {
            self.pos += 1;
            items.push(self.and_expr()?);
        }
        Ok(if items.len() == 1 { items.pop().expect("one item") } else { Expr::Logic("or", items) })
    }

    fn and_expr(&mut self) -> Result<Expr, FormulaError> {
        let mut items = vec![self.not_expr()?];
        while self.peek_word("and") {
            self.pos += 1;
            items.push(self.not_expr()?);
        }
        Ok(if items.len() == 1 { items.pop().expect("one item") } else { Expr::Logic("and", items) })
    }

    fn not_expr(&mut self) -> Result<Expr, FormulaError> {
        if self.peek_word("not") {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, FormulaError> {
        let first = self.bit_or()?;
        let mut operands = vec![first];
        let mut ops = Vec::new();
        while let Some(Tok::Op(op @ ("==" | "!=" | "<" | "<=" | ">" | ">="))) = self.peek() {
            ops.push(*op);
            self.pos += 1;
            operands.push(self.bit_or()?);
        }
        Ok(if ops.is_empty() { operands.pop().expect("one operand") } else { Expr::Compare(operands, ops) })
    }

    fn bit_or(&mut self) -> Result<Expr, FormulaError> {
        self.left_assoc(&["|"], Self::bit_xor)
    }

    fn bit_xor(&mut self) -> Result<Expr, FormulaError> {
        self.left_assoc(&["^"], Self::bit_and)
    }

    fn bit_and(&mut self) -> Result<Expr, FormulaError> {
        self.left_assoc(&["&"], Self::arith)
    }

    fn arith(&mut self) -> Result<Expr, FormulaError> {
        self.left_assoc(&["+", "-"], Self::term)
    }

    fn term(&mut self) -> Result<Expr, FormulaError> {
        self.left_assoc(&["*", "/", "//", "%"], Self::factor)
    }

    fn left_assoc(
        &mut self,
        ops: &[&'static str],
        next: fn(&mut Self) -> Result<Expr, FormulaError>,
    ) -> Result<Expr, FormulaError> {
        let mut lhs = next(self)?;
        while let Some(Tok::Op(op)) = self.peek() {
            let Some(op) = ops.iter().find(|o| *o == op).copied() else { break };
            self.pos += 1;
            let rhs = next(self)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, FormulaError> {
        for op in ["-", "+", "~"] {
            if self.eat_op(op) {
                let inner = self.factor()?;
                return Ok(if op == "+" { inner } else { Expr::Unary(op, Box::new(inner)) });
            }
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, FormulaError> {
        let base = self.primary()?;
        if self.eat_op("**") {
            let exp = self.factor()?;
            return Ok(Expr::Binary("**", Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, FormulaError> {
        let tok = self.peek().cloned().ok_or_else(|| syntax("unexpected end of formula"))?;
        self.pos += 1;
        match tok {
            Tok::Int(n) => Ok(Expr::Int(n)),
            Tok::Dec(d) => Ok(Expr::Dec(d)),
            Tok::Str(s) => Ok(Expr::Str(s)),
            Tok::Ident(name) => match name.as_str() {
                "True" => Ok(Expr::Bool(true)),
                "False" => Ok(Expr::Bool(false)),
                _ if self.peek_op("(") => {
                    self.pos += 1;
                    let args = self.sequence(")")?;
                    Ok(Expr::Call(name, args))
                }
                _ => Ok(Expr::Var(name)),
            },
            Tok::Op("(") => {
                let mut items = self.sequence(")")?;
                // `(a)` is grouping, `(a, b)` and `()` are tuples
                let last_was_comma = matches!(self.toks.get(self.pos - 2), Some(Tok::Op(",")));
                if items.len() == 1 && !last_was_comma {
                    Ok(items.pop().expect("one item"))
                } else {
                    Ok(Expr::List(items))
                }
            }
            Tok::Op("[") => Ok(Expr::List(self.sequence("]")?)),
            Tok::Op(op) => Err(syntax(format!("unexpected `{op}`"))),
        }
    }

    /// Comma-separated expressions up to and including `close`.
    fn sequence(&mut self, close: &str) -> Result<Vec<Expr>, FormulaError> {
        let mut items = Vec::new();
        loop {
            if self.eat_op(close) {
                return Ok(items);
            }
            items.push(self.expr()?);
            if !self.eat_op(",") {
                self.expect_op(close)?;
                return Ok(items);
            }
        }
    }
}

// ---------------------------------------------------------------- symbols

const RESERVED: &[&str] = &[
    "_", "and", "or", "not", "xor", "ite", "true", "false", "distinct", "let", "forall", "exists", "match", "par",
    "as", "div", "mod", "rem", "abs", "to_real", "to_int", "is_int", "Int", "Real", "Bool", "select", "store",
    "assert", "push", "pop", "exit",
];

#[derive(Debug, Clone, PartialEq)]
enum SortDef {
    Uninterpreted,
    Enum(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
enum Decl {
    Sort(String),
    Enum(String),
    Const(String),
    Fun(String),
}

/// Declared sorts, constants and functions, in declaration order.
#[derive(Debug, Clone, Default)]
pub struct Symbols {
    sorts: BTreeMap<String, SortDef>,
    consts: BTreeMap<String, Sort>,
    funcs: BTreeMap<String, (Vec<Sort>, Sort)>,
    smt_names: BTreeMap<String, String>,
    order: Vec<Decl>,
}

impl Symbols {
    pub fn from_declarations(declarations: &[String]) -> Result<Self, FormulaError> {
        let mut symbols = Symbols::default();
        for (i, decl) in declarations.iter().enumerate() {
            for line in decl.split(['\n', ';']) {
                symbols
                    .declare_line(line)
                    .map_err(|e| e.context(&format!("declaration {}", i + 1)))?;
            }
        }
        Ok(symbols)
    }

    pub fn names(&self) -> BTreeSet<String> {
        self.smt_names.keys().cloned().collect()
    }

    fn is_declared(&self, name: &str) -> bool {
        self.smt_names.contains_key(name)
    }

    fn add_name(&mut self, name: &str) -> Result<(), FormulaError> {
        if self.is_declared(name) {
            return Err(FormulaError::Unsupported(format!("`{name}` declared twice")));
        }
        let mut smt = name.to_string();
        while RESERVED.contains(&smt.as_str()) || self.smt_names.values().any(|v| *v == smt) {
            smt.push('_');
        }
        self.smt_names.insert(name.to_string(), smt);
        Ok(())
    }

    fn smt(&self, name: &str) -> String {
        self.smt_names.get(name).cloned().unwrap_or_else(|| name.to_string())
    }

    fn add_sort(&mut self, name: &str, def: SortDef) -> Result<(), FormulaError> {
        self.add_name(name)?;
        let is_enum = matches!(def, SortDef::Enum(_));
        self.sorts.insert(name.to_string(), def);
        self.order.push(if is_enum { Decl::Enum(name.into()) } else { Decl::Sort(name.into()) });
        Ok(())
    }

    fn add_const(&mut self, name: &str, sort: Sort) -> Result<(), FormulaError> {
        self.add_name(name)?;
        self.consts.insert(name.to_string(), sort);
        self.order.push(Decl::Const(name.into()));
        Ok(())
    }

    fn add_fun(&mut self, name: &str, domain: Vec<Sort>, range: Sort) -> Result<(), FormulaError> {
        self.add_name(name)?;
        self.funcs.insert(name.to_string(), (domain, range));
        self.order.push(Decl::Fun(name.into()));
        Ok(())
    }

    fn declare_line(&mut self, line: &str) -> Result<(), FormulaError> {
        let line = line.trim();
        if line.is_empty()
            || line.starts_with('#')
            || line.starts_with("from ")
            || line.starts_with("import ")
        {
            return Ok(());
        }
        if line.starts_with('(') && line.contains("declare-") {
            return self.declare_smtlib(line);
        }
        let toks = lex(line)?;
        let eq = toks
            .iter()
            .position(|t| *t == Tok::Op("="))
            .ok_or_else(|| syntax(format!("not a declaration: `{line}`")))?;
        let lhs: Vec<String> = toks[..eq]
            .iter()
            .filter_map(|t| match t {
                Tok::Ident(n) => Some(Ok(n.clone())),
                Tok::Op("," | "(" | ")" | "[" | "]") => None,
                other => Some(Err(syntax(format!("unexpected {other:?} on declaration left side")))),
            })
            .collect::<Result<_, _>>()?;
        if lhs.is_empty() {
            return Err(syntax(format!("declaration without a name: `{line}`")));
        }
        let mut p = Parser { toks: toks[eq + 1..].to_vec(), pos: 0 };
        let rhs = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(syntax(format!("unexpected trailing input in `{line}`")));
        }
        let Expr::Call(ctor, args) = rhs else {
            return Err(FormulaError::Unsupported(format!("declaration `{line}`")));
        };
        let str_arg = |i: usize| -> Result<String, FormulaError> {
            match args.get(i) {
                Some(Expr::Str(s)) => Ok(s.clone()),
                _ => Err(syntax(format!("{ctor} expects a string name as argument {}", i + 1))),
            }
        };
        let expect_names = |n: usize| -> Result<(), FormulaError> {
            if lhs.len() == n {
                Ok(())
            } else {
                Err(FormulaError::Arity(format!("{ctor} binds {n} names, left side has {}", lhs.len())))
            }
        };
        match ctor.as_str() {
            "Int" | "Real" | "Bool" => {
                str_arg(0)?;
                expect_names(1)?;
                self.add_const(&lhs[0], basic_sort(&ctor))
            }
            "Ints" | "Reals" | "Bools" => {
                let count = str_arg(0)?.split([' ', ',']).filter(|s| !s.is_empty()).count();
                expect_names(count)?;
                let sort = basic_sort(ctor.trim_end_matches('s'));
                lhs.iter().try_for_each(|n| self.add_const(n, sort.clone()))
            }
            "DeclareSort" => {
                str_arg(0)?;
                expect_names(1)?;
                self.add_sort(&lhs[0], SortDef::Uninterpreted)
            }
            "EnumSort" => {
                str_arg(0)?;
                let members = match args.get(1) {
                    Some(Expr::List(items)) => items
                        .iter()
                        .map(|e| match e {
                            Expr::Str(s) => Ok(s.clone()),
                            _ => Err(syntax("EnumSort members must be strings")),
                        })
                        .collect::<Result<Vec<_>, _>>()?,
                    _ => return Err(syntax("EnumSort expects a list of member names")),
                };
                if members.is_empty() {
                    return Err(FormulaError::Unsupported("empty EnumSort".into()));
                }
                expect_names(members.len() + 1)?;
                let sort_name = lhs[0].clone();
                self.add_sort(&sort_name, SortDef::Enum(lhs[1..].to_vec()))?;
                lhs[1..]
                    .iter()
                    .try_for_each(|m| self.add_name(m).map(|_| {
                        self.consts.insert(m.clone(), Sort::Named(sort_name.clone()));
                    }))
            }
            "Function" => {
                str_arg(0)?;
                expect_names(1)?;
                let sorts = args[1..]
                    .iter()
                    .map(|a| self.sort_expr(a))
                    .collect::<Result<Vec<_>, _>>()?;
                let (range, domain) = sorts
                    .split_last()
                    .ok_or_else(|| FormulaError::Arity("Function needs a range sort".into()))?;
                self.add_fun(&lhs[0], domain.to_vec(), range.clone())
            }
            "Const" => {
                str_arg(0)?;
                expect_names(1)?;
                let sort = self.sort_expr(args.get(1).ok_or_else(|| FormulaError::Arity("Const needs a sort".into()))?)?;
                self.add_const(&lhs[0], sort)
            }
            "Consts" => {
                let count = str_arg(0)?.split([' ', ',']).filter(|s| !s.is_empty()).count();
                expect_names(count)?;
                let sort = self.sort_expr(args.get(1).ok_or_else(|| FormulaError::Arity("Consts needs a sort".into()))?)?;
                lhs.iter().try_for_each(|n| self.add_const(n, sort.clone()))
            }
            other => Err(FormulaError::Unsupported(format!("declaration constructor `{other}`"))),
        }
    }

    fn sort_expr(&self, e: &Expr) -> Result<Sort, FormulaError> {
        match e {
            Expr::Call(name, args) if args.is_empty() => match name.as_str() {
                "IntSort" => Ok(Sort::Int),
                "RealSort" => Ok(Sort::Real),
                "BoolSort" => Ok(Sort::Bool),
                other => Err(FormulaError::Unsupported(format!("sort `{other}()`"))),
            },
            Expr::Var(name) => self.named_sort(name),
            other => Err(syntax(format!("expected a sort, found {other:?}"))),
        }
    }

    fn named_sort(&self, name: &str) -> Result<Sort, FormulaError> {
        match name {
            "Int" => Ok(Sort::Int),
            "Real" => Ok(Sort::Real),
            "Bool" => Ok(Sort::Bool),
            _ if self.sorts.contains_key(name) => Ok(Sort::Named(name.to_string())),
            _ => Err(FormulaError::UndeclaredSymbol(name.to_string())),
        }
    }

    /// `(declare-const x Int)`, `(declare-fun f (A B) C)`, `(declare-sort S 0)`.
    fn declare_smtlib(&mut self, line: &str) -> Result<(), FormulaError> {
        let spaced = line.replace('(', " ( ").replace(')', " ) ");
        let words: Vec<&str> = spaced.split_whitespace().filter(|w| *w != "(" && *w != ")").collect();
        match words.as_slice() {
            ["declare-const", name, sort] => {
                let sort = self.named_sort(sort)?;
                self.add_const(name, sort)
            }
            ["declare-sort", name] | ["declare-sort", name, "0"] => self.add_sort(name, SortDef::Uninterpreted),
            ["declare-fun", name, rest @ ..] if !rest.is_empty() => {
                let sorts = rest.iter().map(|s| self.named_sort(s)).collect::<Result<Vec<_>, _>>()?;
                let (range, domain) = sorts.split_last().expect("non-empty");
                if domain.is_empty() {
                    self.add_const(name, range.clone())
                } else {
                    self.add_fun(name, domain.to_vec(), range.clone())
                }
            }
            _ => Err(FormulaError::Unsupported(format!("declaration `{line}`"))),
        }
    }

    /// SMT-LIB commands declaring every symbol, plus enum axioms.
    pub fn smt_declarations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for decl in &self.order {
            match decl {
                Decl::Sort(s) => out.push(format!("(declare-sort {} 0)", self.smt(s))),
                Decl::Enum(s) => {
                    let SortDef::Enum(members) = &self.sorts[s] else { unreachable!("enum decl") };
                    let sort = self.smt(s);
                    out.push(format!("(declare-sort {sort} 0)"));
                    let names: Vec<String> = members.iter().map(|m| self.smt(m)).collect();
                    for m in &names {
                        out.push(format!("(declare-const {m} {sort})"));
                    }
                    if names.len() > 1 {
                        out.push(format!("(assert (distinct {}))", names.join(" ")));
                    }
                    let cases: Vec<String> = names.iter().map(|m| format!("(= x!e {m})")).collect();
                    let closure = if cases.len() == 1 { cases[0].clone() } else { format!("(or {})", cases.join(" ")) };
                    out.push(format!("(assert (forall ((x!e {sort})) {closure}))"));
                }
                Decl::Const(c) => out.push(format!("(declare-const {} {})", self.smt(c), self.sort_smt(&self.consts[c]))),
                Decl::Fun(f) => {
                    let (domain, range) = &self.funcs[f];
                    let domain: Vec<String> = domain.iter().map(|s| self.sort_smt(s)).collect();
                    out.push(format!("(declare-fun {} ({}) {})", self.smt(f), domain.join(" "), self.sort_smt(range)));
                }
            }
        }
        out
    }

    fn sort_smt(&self, sort: &Sort) -> String {
        match sort {
            Sort::Named(n) => self.smt(n),
            other => other.to_string(),
        }
    }

    fn is_enum_sort(&self, sort: &Sort) -> bool {
        matches!(sort, Sort::Named(n) if matches!(self.sorts.get(n), Some(SortDef::Enum(_))))
    }
}

fn basic_sort(name: &str) -> Sort {
    match name {
        "Int" => Sort::Int,
        "Real" => Sort::Real,
        _ => Sort::Bool,
    }
}

// ---------------------------------------------------------------- lowering

#[derive(Debug, Clone)]
struct Term {
    smt: String,
    sort: Sort,
    /// Built only from numeric literals, so Python would fold it itself.
    literal: bool,
}

impl Term {
    fn new(smt: impl Into<String>, sort: Sort) -> Self {
        Term { smt: smt.into(), sort, literal: false }
    }
}

/// Parses `formula` and lowers it to an SMT-LIB boolean term.
pub fn lower_formula(symbols: &Symbols, formula: &str) -> Result<String, FormulaError> {
    let expr = Parser::parse(formula)?;
    let term = Lowerer { symbols, bound: Vec::new() }.lower(&expr)?;
    if term.sort != Sort::Bool {
        return Err(FormulaError::SortMismatch(format!("formula has sort {}, expected Bool", term.sort)));
    }
    Ok(term.smt)
}

struct Lowerer<'a> {
    symbols: &'a Symbols,
    bound: Vec<(String, Sort)>,
}

impl Lowerer<'_> {
    fn lower(&mut self, e: &Expr) -> Result<Term, FormulaError> {
        match e {
            Expr::Int(n) => Ok(Term { smt: n.clone(), sort: Sort::Int, literal: true }),
            Expr::Dec(d) => Ok(Term { smt: d.clone(), sort: Sort::Real, literal: true }),
            Expr::Bool(b) => Ok(Term::new(b.to_string(), Sort::Bool)),
            Expr::Str(s) => Err(FormulaError::Unsupported(format!("string literal '{s}'"))),
            Expr::List(_) => Err(FormulaError::Unsupported("list outside a call".into())),
            Expr::Var(name) => self.var(name),
            Expr::Unary("-", inner) => {
                let t = self.numeric(inner, "unary minus")?;
                Ok(Term { smt: format!("(- {})", t.smt), sort: t.sort, literal: t.literal })
            }
            Expr::Unary(_, inner) => {
                let t = self.boolean(inner, "~")?;
                Ok(Term::new(format!("(not {})", t.smt), Sort::Bool))
            }
            Expr::Not(inner) => {
                let t = self.boolean(inner, "not")?;
                Ok(Term::new(format!("(not {})", t.smt), Sort::Bool))
            }
            Expr::Logic(op, items) => self.connective(op, items),
            Expr::Binary(op @ ("&" | "|"), a, b) => {
                self.connective(if *op == "&" { "and" } else { "or" }, &[(**a).clone(), (**b).clone()])
            }
            Expr::Binary("^", a, b) => {
                let (a, b) = (self.boolean(a, "^")?, self.boolean(b, "^")?);
                Ok(Term::new(format!("(xor {} {})", a.smt, b.smt), Sort::Bool))
            }
            Expr::Binary(op, a, b) => self.arith(op, a, b),
            Expr::Compare(operands, ops) => {
                let terms = operands.iter().map(|o| self.lower(o)).collect::<Result<Vec<_>, _>>()?;
                let mut parts = Vec::new();
                for (i, op) in ops.iter().enumerate() {
                    parts.push(self.compare(op, &terms[i], &terms[i + 1])?);
                }
                Ok(Term::new(if parts.len() == 1 { parts.remove(0) } else { format!("(and {})", parts.join(" ")) }, Sort::Bool))
            }
            Expr::Call(name, args) => self.call(name, args),
        }
    }

    fn var(&self, name: &str) -> Result<Term, FormulaError> {
        if let Some((_, sort)) = self.bound.iter().rev().find(|(n, _)| n == name) {
            return Ok(Term::new(self.symbols.smt(name), sort.clone()));
        }
        if let Some(sort) = self.symbols.consts.get(name) {
            return Ok(Term::new(self.symbols.smt(name), sort.clone()));
        }
        if let Some((domain, range)) = self.symbols.funcs.get(name) {
            if domain.is_empty() {
                return Ok(Term::new(self.symbols.smt(name), range.clone()));
            }
            return Err(FormulaError::Arity(format!("function `{name}` used without arguments")));
        }
        Err(FormulaError::UndeclaredSymbol(name.to_string()))
    }

    fn boolean(&mut self, e: &Expr, what: &str) -> Result<Term, FormulaError> {
        let t = self.lower(e)?;
        if t.sort != Sort::Bool {
            return Err(FormulaError::SortMismatch(format!("{what} expects Bool, found {}", t.sort)));
        }
        Ok(t)
    }

    fn numeric(&mut self, e: &Expr, what: &str) -> Result<Term, FormulaError> {
        let t = self.lower(e)?;
        if !t.sort.is_numeric() {
            return Err(FormulaError::SortMismatch(format!("{what} expects a number, found {}", t.sort)));
        }
        Ok(t)
    }

    fn connective(&mut self, op: &str, items: &[Expr]) -> Result<Term, FormulaError> {
        let items = flatten(items);
        let terms = items.iter().map(|i| self.boolean(i, op)).collect::<Result<Vec<_>, _>>()?;
        Ok(Term::new(
            match terms.len() {
                0 => (op == "and").to_string(),
                1 => terms[0].smt.clone(),
                _ => format!("({op} {})", terms.iter().map(|t| t.smt.as_str()).collect::<Vec<_>>().join(" ")),
            },
            Sort::Bool,
        ))
    }

    fn arith(&mut self, op: &str, a: &Expr, b: &Expr) -> Result<Term, FormulaError> {
        let a = self.numeric(a, op)?;
        let b = self.numeric(b, op)?;
        let literal = a.literal && b.literal;
        let (a, b, sort) = if op == "/" && literal {
            // Python folds literal division into a float
            (to_real(a), to_real(b), Sort::Real)
        } else {
            unify_numeric(a, b)
        };
        let smt = match (op, &sort) {
            ("+", _) => format!("(+ {} {})", a.smt, b.smt),
            ("-", _) => format!("(- {} {})", a.smt, b.smt),
            ("*", _) => format!("(* {} {})", a.smt, b.smt),
            ("/" | "//", Sort::Int) => format!("(div {} {})", a.smt, b.smt),
            ("/", _) => format!("(/ {} {})", a.smt, b.smt),
            ("//", _) => format!("(to_real (to_int (/ {} {})))", a.smt, b.smt),
            ("%", Sort::Int) => format!("(mod {} {})", a.smt, b.smt),
            ("%", _) => return Err(FormulaError::Unsupported("% on reals".into())),
            ("**", _) => format!("(^ {} {})", a.smt, b.smt),
            (other, _) => return Err(FormulaError::Unsupported(format!("operator `{other}`"))),
        };
        Ok(Term { smt, sort, literal })
    }

    fn compare(&self, op: &str, a: &Term, b: &Term) -> Result<String, FormulaError> {
        let (a, b) = if a.sort.is_numeric() && b.sort.is_numeric() {
            let (a, b, _) = unify_numeric(a.clone(), b.clone());
            (a, b)
        } else if a.sort == b.sort {
            if !matches!(op, "==" | "!=") {
                return Err(FormulaError::SortMismatch(format!("`{op}` on {}", a.sort)));
            }
            (a.clone(), b.clone())
        } else {
            return Err(FormulaError::SortMismatch(format!("cannot compare {} with {}", a.sort, b.sort)));
        };
        Ok(match op {
            "==" => format!("(= {} {})", a.smt, b.smt),
            "!=" => format!("(not (= {} {}))", a.smt, b.smt),
            _ => format!("({op} {} {})", a.smt, b.smt),
        })
    }

    fn call(&mut self, name: &str, args: &[Expr]) -> Result<Term, FormulaError> {
        let arity = |n: usize| -> Result<(), FormulaError> {
            if args.len() == n {
                Ok(())
            } else {
                Err(FormulaError::Arity(format!("{name} takes {n} argument(s), got {}", args.len())))
            }
        };
        match name {
            "And" => self.connective("and", args),
            "Or" => self.connective("or", args),
            "Not" => {
                arity(1)?;
                let t = self.boolean(&args[0], "Not")?;
                Ok(Term::new(format!("(not {})", t.smt), Sort::Bool))
            }
            "Implies" | "Xor" => {
                arity(2)?;
                let a = self.boolean(&args[0], name)?;
                let b = self.boolean(&args[1], name)?;
                let op = if name == "Implies" { "=>" } else { "xor" };
                Ok(Term::new(format!("({op} {} {})", a.smt, b.smt), Sort::Bool))
            }
            "If" => {
                arity(3)?;
                let c = self.boolean(&args[0], "If")?;
                let a = self.lower(&args[1])?;
                let b = self.lower(&args[2])?;
                let (a, b, sort) = if a.sort.is_numeric() && b.sort.is_numeric() {
                    unify_numeric(a, b)
                } else if a.sort == b.sort {
                    let sort = a.sort.clone();
                    (a, b, sort)
                } else {
                    return Err(FormulaError::SortMismatch(format!("If branches {} and {}", a.sort, b.sort)));
                };
                Ok(Term::new(format!("(ite {} {} {})", c.smt, a.smt, b.smt), sort))
            }
            "Distinct" => {
                let items = flatten(args);
                if items.len() < 2 {
                    return Err(FormulaError::Arity("Distinct needs at least 2 arguments".into()));
                }
                let terms = self.unified(&items, "Distinct")?;
                Ok(Term::new(format!("(distinct {})", join(&terms)), Sort::Bool))
            }
            "Sum" | "Product" => {
                let items = flatten(args);
                let is_sum = name == "Sum";
                if items.is_empty() {
                    return Ok(Term::new(if is_sum { "0" } else { "1" }, Sort::Int));
                }
                let terms = self.unified(&items, name)?;
                let sort = terms[0].sort.clone();
                if !sort.is_numeric() {
                    return Err(FormulaError::SortMismatch(format!("{name} over {sort}")));
                }
                if terms.len() == 1 {
                    return Ok(terms.into_iter().next().expect("one term"));
                }
                Ok(Term::new(format!("({} {})", if is_sum { "+" } else { "*" }, join(&terms)), sort))
            }
            "IntVal" | "RealVal" => {
                arity(1)?;
                let raw = match &args[0] {
                    Expr::Int(n) | Expr::Dec(n) | Expr::Str(n) => n.trim().to_string(),
                    Expr::Unary("-", inner) => match &**inner {
                        Expr::Int(n) | Expr::Dec(n) => format!("-{n}"),
                        _ => return Err(syntax(format!("{name} expects a literal"))),
                    },
                    _ => return Err(syntax(format!("{name} expects a literal"))),
                };
                let toks = lex(raw.trim_start_matches('-'))?;
                let magnitude = match (toks.as_slice(), name) {
                    ([Tok::Int(n)], "IntVal") => n.clone(),
                    ([Tok::Int(n)], _) => format!("{n}.0"),
                    ([Tok::Dec(d)], "RealVal") => d.clone(),
                    _ => return Err(syntax(format!("bad {name} literal `{raw}`"))),
                };
                let sort = if name == "IntVal" { Sort::Int } else { Sort::Real };
                let smt = if raw.starts_with('-') { format!("(- {magnitude})") } else { magnitude };
                Ok(Term { smt, sort, literal: true })
            }
            "ToReal" => {
                arity(1)?;
                let t = self.numeric(&args[0], name)?;
                Ok(to_real(t))
            }
            "ToInt" => {
                arity(1)?;
                let t = self.numeric(&args[0], name)?;
                Ok(if t.sort == Sort::Int { t } else { Term::new(format!("(to_int {})", t.smt), Sort::Int) })
            }
            "Abs" => {
                arity(1)?;
                let t = self.numeric(&args[0], name)?;
                let zero = if t.sort == Sort::Int { "0" } else { "0.0" };
                Ok(Term::new(format!("(ite (>= {0} {zero}) {0} (- {0}))", t.smt), t.sort))
            }
            "ForAll" | "Exists" => self.quantifier(name, args),
            _ => self.apply(name, args),
        }
    }

    fn unified(&mut self, items: &[Expr], what: &str) -> Result<Vec<Term>, FormulaError> {
        let terms = items.iter().map(|i| self.lower(i)).collect::<Result<Vec<_>, _>>()?;
        if terms.iter().all(|t| t.sort.is_numeric()) {
            let any_real = terms.iter().any(|t| t.sort == Sort::Real);
            return Ok(terms.into_iter().map(|t| if any_real { to_real(t) } else { t }).collect());
        }
        let sort = &terms[0].sort;
        if let Some(bad) = terms.iter().find(|t| t.sort != *sort) {
            return Err(FormulaError::SortMismatch(format!("{what} mixes {sort} and {}", bad.sort)));
        }
        Ok(terms)
    }

    fn quantifier(&mut self, name: &str, args: &[Expr]) -> Result<Term, FormulaError> {
        if args.len() != 2 {
            return Err(FormulaError::Arity(format!("{name} takes a variable list and a body")));
        }
        let vars = match &args[0] {
            Expr::List(items) => items.clone(),
            single => vec![single.clone()],
        };
        if vars.is_empty() {
            return Err(FormulaError::Arity(format!("{name} with no variables")));
        }
        let mut binders = Vec::new();
        for v in &vars {
            let Expr::Var(v) = v else {
                return Err(syntax(format!("{name} variables must be names")));
            };
            let sort = self
                .symbols
                .consts
                .get(v)
                .ok_or_else(|| FormulaError::UndeclaredSymbol(v.clone()))?;
            if !self.symbols.is_enum_sort(sort) {
                return Err(FormulaError::Unsupported(format!(
                    "quantified variable `{v}` has sort {sort}; only enumerated sorts may be quantified"
                )));
            }
            binders.push((v.clone(), sort.clone()));
        }
        let depth = self.bound.len();
        self.bound.extend(binders.iter().cloned());
        let body = self.boolean(&args[1], name);
        self.bound.truncate(depth);
        let body = body?;
        let decls: Vec<String> = binders
            .iter()
            .map(|(v, s)| format!("({} {})", self.symbols.smt(v), self.symbols.sort_smt(s)))
            .collect();
        let q = if name == "ForAll" { "forall" } else { "exists" };
        Ok(Term::new(format!("({q} ({}) {})", decls.join(" "), body.smt), Sort::Bool))
    }

    fn apply(&mut self, name: &str, args: &[Expr]) -> Result<Term, FormulaError> {
        let Some((domain, range)) = self.symbols.funcs.get(name).cloned() else {
            if self.symbols.consts.contains_key(name) {
                return Err(FormulaError::SortMismatch(format!("constant `{name}` applied like a function")));
            }
            return Err(FormulaError::UndeclaredSymbol(name.to_string()));
        };
        if domain.len() != args.len() {
            return Err(FormulaError::Arity(format!("`{name}` takes {} argument(s), got {}", domain.len(), args.len())));
        }
        if domain.is_empty() {
            return Ok(Term::new(self.symbols.smt(name), range));
        }
        let mut rendered = Vec::new();
        for (param, arg) in domain.iter().zip(args) {
            let t = self.lower(arg)?;
            let t = match (param, &t.sort) {
                (Sort::Real, Sort::Int) => to_real(t),
                (p, s) if p == s => t,
                (p, s) => {
                    return Err(FormulaError::SortMismatch(format!("`{name}` expects {p}, argument has sort {s}")))
                }
            };
            rendered.push(t.smt);
        }
        Ok(Term::new(format!("({} {})", self.symbols.smt(name), rendered.join(" ")), range))
    }
}

/// A single list argument stands for its elements, as in `And([a, b])`.
fn flatten(args: &[Expr]) -> Vec<Expr> {
    match args {
        [Expr::List(items)] => items.clone(),
        _ => args.to_vec(),
    }
}

fn join(terms: &[Term]) -> String {
    terms.iter().map(|t| t.smt.as_str()).collect::<Vec<_>>().join(" ")
}

fn to_real(t: Term) -> Term {
    match t.sort {
        Sort::Real => t,
        _ if t.literal && t.smt.chars().all(|c| c.is_ascii_digit()) => {
            Term { smt: format!("{}.0", t.smt), sort: Sort::Real, literal: true }
        }
        _ => Term { smt: format!("(to_real {})", t.smt), sort: Sort::Real, literal: t.literal },
    }
}

fn unify_numeric(a: Term, b: Term) -> (Term, Term, Sort) {
    if a.sort == Sort::Real || b.sort == Sort::Real {
        (to_real(a), to_real(b), Sort::Real)
    } else {
        (a, b, Sort::Int)
    }
}
