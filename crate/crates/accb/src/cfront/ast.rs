//! Declaration-structure parser for the supported C subset.
//!
//! This is not a full expression parser: translation needs declarations
//! (names, element types, array extents), function definition spans, the
//! block structure of locals, and the call names inside each body. Statement
//! bodies stay opaque token runs. The input is normalized source, so every
//! control body is brace-enclosed and statements start after `{`, `}`, `;`,
//! a directive line, or a for-header `(`.

use std::collections::HashMap;

use crate::cfront::lexer::{Token, TokenKind};
use crate::cfront::normalize::NormalizedSource;
use crate::cfront::TokSpan;
use crate::diag::{Diagnostic, ErrorCode, Location};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaseType {
    Void,
    Char,
    UChar,
    Short,
    UShort,
    Int,
    UInt,
    Long,
    ULong,
    Float,
    Double,
    /// Typedef or tagged-struct spelling usable verbatim in C (`point`,
    /// `struct node`).
    Named(String),
}

impl BaseType {
    pub fn byte_size(&self) -> Option<u64> {
        match self {
            BaseType::Void => None,
            BaseType::Char | BaseType::UChar => Some(1),
            BaseType::Short | BaseType::UShort => Some(2),
            BaseType::Int | BaseType::UInt => Some(4),
            BaseType::Long | BaseType::ULong => Some(8),
            BaseType::Float => Some(4),
            BaseType::Double => Some(8),
            BaseType::Named(_) => None,
        }
    }

    pub fn spelling(&self) -> String {
        match self {
            BaseType::Void => "void".into(),
            BaseType::Char => "char".into(),
            BaseType::UChar => "unsigned char".into(),
            BaseType::Short => "short".into(),
            BaseType::UShort => "unsigned short".into(),
            BaseType::Int => "int".into(),
            BaseType::UInt => "unsigned int".into(),
            BaseType::Long => "long".into(),
            BaseType::ULong => "unsigned long".into(),
            BaseType::Float => "float".into(),
            BaseType::Double => "double".into(),
            BaseType::Named(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CType {
    pub base: BaseType,
    pub ptr: u8,
}

impl CType {
    pub fn new(base: BaseType) -> Self {
        CType { base, ptr: 0 }
    }

    pub fn pointer(base: BaseType, ptr: u8) -> Self {
        CType { base, ptr }
    }

    /// Size of one value of this type, when statically known.
    pub fn byte_size(&self) -> Option<u64> {
        if self.ptr > 0 {
            Some(8)
        } else {
            self.base.byte_size()
        }
    }

    pub fn spelling(&self) -> String {
        let mut s = self.base.spelling();
        for _ in 0..self.ptr {
            s.push('*');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Extent {
    /// Integer-literal constant extent.
    Lit(u64),
    /// Extent given by a (non-constant) expression.
    Expr(String),
    /// `[]`: no extent recorded.
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    /// Element type: pointer depth included, array extents stripped.
    pub ty: CType,
    pub extents: Vec<Extent>,
    /// All extents are integer-literal constants (and there is at least one).
    pub fixed_size: bool,
    pub loc: Location,
}

impl VarDecl {
    pub fn is_array_like(&self) -> bool {
        !self.extents.is_empty() || self.ty.ptr > 0
    }

    /// Total element count when every extent is a literal.
    pub fn fixed_elem_count(&self) -> Option<u64> {
        if !self.fixed_size {
            return None;
        }
        let mut n = 1u64;
        for e in &self.extents {
            match e {
                Extent::Lit(v) => n = n.checked_mul(*v)?,
                _ => return None,
            }
        }
        Some(n)
    }
}

#[derive(Debug, Clone)]
pub struct LocalDecl {
    pub var: VarDecl,
    /// Token index of the declared name.
    pub decl_tok: usize,
    /// Span of the innermost enclosing block.
    pub block: TokSpan,
    pub depth: u32,
}

#[derive(Debug, Clone)]
pub struct FunctionDef {
    pub name: String,
    pub ret: CType,
    pub params: Vec<VarDecl>,
    pub span: TokSpan,
    /// `{` .. one past matching `}`.
    pub body_span: TokSpan,
    pub locals: Vec<LocalDecl>,
    /// Names invoked with call syntax inside the body, in order, deduplicated.
    pub calls: Vec<String>,
    /// Typedef/struct spellings referenced by signature, locals, or body.
    pub type_uses: Vec<String>,
    pub loc: Location,
}

#[derive(Debug, Clone)]
pub struct TypeDef {
    /// Usable spelling: the typedef name, or `struct Tag` for bare tags.
    pub name: String,
    pub span: TokSpan,
    pub loc: Location,
    /// Other named types this definition depends on.
    pub uses: Vec<String>,
}

#[derive(Debug, Clone)]
pub enum Item {
    Function(FunctionDef),
    Global(VarDecl),
    Type(TypeDef),
}

#[derive(Debug, Clone, Default)]
pub struct Ast {
    pub items: Vec<Item>,
}

impl Ast {
    pub fn functions(&self) -> impl Iterator<Item = &FunctionDef> {
        self.items.iter().filter_map(|i| match i {
            Item::Function(f) => Some(f),
            _ => None,
        })
    }

    pub fn globals(&self) -> impl Iterator<Item = &VarDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Global(v) => Some(v),
            _ => None,
        })
    }

    pub fn typedefs(&self) -> impl Iterator<Item = &TypeDef> {
        self.items.iter().filter_map(|i| match i {
            Item::Type(t) => Some(t),
            _ => None,
        })
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions().find(|f| f.name == name)
    }

    pub fn typedef(&self, name: &str) -> Option<&TypeDef> {
        self.typedefs().find(|t| t.name == name)
    }

    pub fn global(&self, name: &str) -> Option<&VarDecl> {
        self.globals().find(|g| g.name == name)
    }

    /// Function whose body contains the given token index.
    pub fn enclosing_function(&self, tok: usize) -> Option<&FunctionDef> {
        self.functions()
            .find(|f| f.body_span.0 <= tok && tok < f.body_span.1)
    }
}

pub fn parse_ast(src: &NormalizedSource) -> Result<Ast, Diagnostic> {
    let mut p = Parser {
        toks: &src.tokens,
        pos: 0,
        typedefs: Vec::new(),
        items: Vec::new(),
        defined: HashMap::new(),
    };
    p.parse_translation_unit()?;
    Ok(Ast { items: p.items })
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    typedefs: Vec<String>,
    items: Vec<Item>,
    defined: HashMap<String, Location>,
}

const TYPE_WORDS: &[&str] = &[
    "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned",
];
const QUALIFIER_WORDS: &[&str] = &[
    "const", "volatile", "static", "extern", "register", "inline", "restrict", "auto",
];

impl<'a> Parser<'a> {
    fn loc_at(&self, i: usize) -> Location {
        self.toks
            .get(i.min(self.toks.len().saturating_sub(1)))
            .map(|t| t.loc)
            .unwrap_or_default()
    }

    fn err(&self, i: usize, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::error(ErrorCode::EParse, self.loc_at(i), msg)
    }

    /// Next significant token index at or after `i`; directive lines are
    /// transparent here.
    fn sig(&self, mut i: usize) -> usize {
        while i < self.toks.len()
            && (!self.toks[i].is_significant() || self.toks[i].kind == TokenKind::PragmaLine)
        {
            i += 1;
        }
        i
    }

    fn tok(&self, i: usize) -> Option<&Token> {
        self.toks.get(i)
    }

    fn is_type_start(&self, i: usize) -> bool {
        match self.tok(i) {
            Some(t) if t.kind == TokenKind::Keyword => {
                TYPE_WORDS.contains(&t.text.as_str())
                    || QUALIFIER_WORDS.contains(&t.text.as_str())
                    || matches!(t.text.as_str(), "struct" | "union" | "enum" | "typedef")
            }
            Some(t) if t.kind == TokenKind::Identifier => {
                self.typedefs.iter().any(|n| *n == t.text)
            }
            _ => false,
        }
    }

    fn parse_translation_unit(&mut self) -> Result<(), Diagnostic> {
        loop {
            self.pos = self.sig(self.pos);
            if self.pos >= self.toks.len() {
                return Ok(());
            }
            if self.toks[self.pos].is_punct(";") {
                self.pos += 1;
                continue;
            }
            self.parse_external_item()?;
        }
    }

    fn define_name(&mut self, name: &str, loc: Location) -> Result<(), Diagnostic> {
        if self.defined.insert(name.to_string(), loc).is_some() {
            return Err(Diagnostic::error(
                ErrorCode::EDup,
                loc,
                format!("duplicate top-level definition of '{name}'"),
            ));
        }
        Ok(())
    }

    fn parse_external_item(&mut self) -> Result<(), Diagnostic> {
        let start = self.pos;
        if !self.is_type_start(start) {
            return Err(self.err(start, "expected a declaration at top level"));
        }
        if self.toks[start].is_kw("typedef") {
            return self.parse_typedef(start);
        }

        let spec = self.parse_type_spec(start)?;
        self.pos = spec.next;
        if let Some(td) = spec.tag_def.clone().filter(|t| !t.name.is_empty()) {
            // `struct Tag { ... }` defines the tag even when declarators follow.
            self.define_name(&td.name, td.loc)?;
            self.items.push(Item::Type(td));
        }
        // Bare `struct Tag { ... };`
        let i = self.sig(self.pos);
        if self.tok(i).is_some_and(|t| t.is_punct(";")) {
            self.pos = i + 1;
            return Ok(());
        }

        loop {
            let d = self.parse_declarator(self.pos, &spec.base)?;
            self.pos = d.next;
            let i = self.sig(self.pos);
            match self.tok(i) {
                Some(t) if t.is_punct("(") => {
                    return self.parse_function_tail(start, spec.base.clone(), d, i);
                }
                _ => {
                    let (extents, after) = self.parse_extents(i)?;
                    let after_init = self.skip_initializer(after)?;
                    let fixed =
                        !extents.is_empty() && extents.iter().all(|e| matches!(e, Extent::Lit(_)));
                    let var = VarDecl {
                        name: d.name.clone(),
                        ty: CType::pointer(spec.base.clone(), d.ptr),
                        extents,
                        fixed_size: fixed,
                        loc: self.loc_at(d.name_tok),
                    };
                    self.define_name(&var.name, var.loc)?;
                    self.items.push(Item::Global(var));
                    let j = self.sig(after_init);
                    match self.tok(j) {
                        Some(t) if t.is_punct(",") => self.pos = self.sig(j + 1),
                        Some(t) if t.is_punct(";") => {
                            self.pos = j + 1;
                            return Ok(());
                        }
                        _ => return Err(self.err(j, "expected ',' or ';' in declaration")),
                    }
                }
            }
        }
    }

    fn parse_typedef(&mut self, start: usize) -> Result<(), Diagnostic> {
        let spec = self.parse_type_spec(self.sig(start + 1))?;
        let mut uses = spec.uses.clone();
        uses.retain(|u| !u.is_empty());
        if let BaseType::Named(n) = &spec.base {
            if !n.is_empty() && !uses.contains(n) {
                uses.push(n.clone());
            }
        }
        let d = self.parse_declarator(spec.next, &spec.base)?;
        let (extents, after) = self.parse_extents(self.sig(d.next))?;
        let _ = extents;
        let j = self.sig(after);
        if !self.tok(j).is_some_and(|t| t.is_punct(";")) {
            return Err(self.err(j, "expected ';' after typedef"));
        }
        self.pos = j + 1;
        let td = TypeDef {
            name: d.name.clone(),
            span: (start, self.pos),
            loc: self.loc_at(start),
            uses,
        };
        self.define_name(&td.name, td.loc)?;
        self.typedefs.push(td.name.clone());
        self.items.push(Item::Type(td));
        Ok(())
    }

    fn parse_function_tail(
        &mut self,
        item_start: usize,
        ret_base: BaseType,
        d: Declarator,
        open_paren: usize,
    ) -> Result<(), Diagnostic> {
        let (params, after_params) = self.parse_params(open_paren)?;
        let i = self.sig(after_params);
        match self.tok(i) {
            Some(t) if t.is_punct(";") => {
                // Prototype: visible to calls but not a definition.
                self.pos = i + 1;
                Ok(())
            }
            Some(t) if t.is_punct("{") => {
                let body = self.scan_function_body(i)?;
                self.pos = body.close + 1;
                let mut type_uses = body.type_uses.clone();
                for p in &params {
                    if let BaseType::Named(n) = &p.ty.base {
                        if !type_uses.contains(n) {
                            type_uses.push(n.clone());
                        }
                    }
                }
                if let BaseType::Named(n) = &ret_base {
                    if !type_uses.contains(n) {
                        type_uses.push(n.clone());
                    }
                }
                let f = FunctionDef {
                    name: d.name.clone(),
                    ret: CType::pointer(ret_base, d.ptr),
                    params,
                    span: (item_start, self.pos),
                    body_span: (i, body.close + 1),
                    locals: body.locals,
                    calls: body.calls,
                    type_uses,
                    loc: self.loc_at(d.name_tok),
                };
                self.define_name(&f.name, f.loc)?;
                self.items.push(Item::Function(f));
                Ok(())
            }
            _ => Err(self.err(i, "expected ';' or function body")),
        }
    }

    fn parse_params(&mut self, open_paren: usize) -> Result<(Vec<VarDecl>, usize), Diagnostic> {
        let mut params = Vec::new();
        let mut i = self.sig(open_paren + 1);
        if self.tok(i).is_some_and(|t| t.is_punct(")")) {
            return Ok((params, i + 1));
        }
        if self.tok(i).is_some_and(|t| t.is_kw("void")) {
            let j = self.sig(i + 1);
            if self.tok(j).is_some_and(|t| t.is_punct(")")) {
                return Ok((params, j + 1));
            }
        }
        loop {
            if self.tok(i).is_some_and(|t| t.is_punct("...")) {
                return Err(self.err(i, "variadic functions are outside the supported C subset"));
            }
            let spec = self.parse_type_spec(i)?;
            let d = self.parse_declarator(spec.next, &spec.base)?;
            let (extents, after) = self.parse_extents(self.sig(d.next))?;
            // Array parameters decay to pointers.
            let extra = if extents.is_empty() { 0 } else { 1 };
            params.push(VarDecl {
                name: d.name.clone(),
                ty: CType::pointer(spec.base.clone(), d.ptr + extra),
                extents: Vec::new(),
                fixed_size: false,
                loc: self.loc_at(d.name_tok),
            });
            let j = self.sig(after);
            match self.tok(j) {
                Some(t) if t.is_punct(",") => i = self.sig(j + 1),
                Some(t) if t.is_punct(")") => return Ok((params, j + 1)),
                _ => return Err(self.err(j, "expected ',' or ')' in parameter list")),
            }
        }
    }

    fn parse_extents(&self, mut i: usize) -> Result<(Vec<Extent>, usize), Diagnostic> {
        let mut extents = Vec::new();
        loop {
            i = self.sig(i);
            if !self.tok(i).is_some_and(|t| t.is_punct("[")) {
                return Ok((extents, i));
            }
            let mut j = i + 1;
            let mut depth = 1;
            let mut text = String::new();
            while j < self.toks.len() {
                let t = &self.toks[j];
                if t.is_punct("[") {
                    depth += 1;
                } else if t.is_punct("]") {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                }
                if t.is_significant() {
                    text.push_str(&t.text);
                }
                j += 1;
            }
            if j >= self.toks.len() {
                return Err(self.err(i, "unbalanced '['"));
            }
            if text.is_empty() {
                extents.push(Extent::Unknown);
            } else {
                // Constant extents stay constant after macro substitution
                // turned names into literals, so fold expressions too.
                match eval_const_expr(&text).filter(|v| *v >= 0) {
                    Some(v) => extents.push(Extent::Lit(v as u64)),
                    None => extents.push(Extent::Expr(text)),
                }
            }
            i = j + 1;
        }
    }

    /// Skip `= initializer` up to (not including) the closing `,` or `;`.
    fn skip_initializer(&self, i: usize) -> Result<usize, Diagnostic> {
        let j = self.sig(i);
        if !self.tok(j).is_some_and(|t| t.is_punct("=")) {
            return Ok(i);
        }
        let mut k = j + 1;
        let mut paren = 0i32;
        let mut brace = 0i32;
        let mut bracket = 0i32;
        while k < self.toks.len() {
            let t = &self.toks[k];
            if t.kind == TokenKind::Punctuator {
                match t.text.as_str() {
                    "(" => paren += 1,
                    ")" => paren -= 1,
                    "[" => bracket += 1,
                    "]" => bracket -= 1,
                    "{" => brace += 1,
                    "}" => brace -= 1,
                    "," | ";" if paren == 0 && brace == 0 && bracket == 0 => return Ok(k),
                    _ => {}
                }
            }
            k += 1;
        }
        Err(self.err(j, "unterminated initializer"))
    }

    fn parse_declarator(&self, mut i: usize, _base: &BaseType) -> Result<Declarator, Diagnostic> {
        i = self.sig(i);
        let mut ptr = 0u8;
        while self.tok(i).is_some_and(|t| t.is_punct("*")) {
            ptr += 1;
            i = self.sig(i + 1);
            while self
                .tok(i)
                .is_some_and(|t| QUALIFIER_WORDS.contains(&t.text.as_str()))
            {
                i = self.sig(i + 1);
            }
        }
        match self.tok(i) {
            Some(t) if t.kind == TokenKind::Identifier => Ok(Declarator {
                name: t.text.clone(),
                name_tok: i,
                ptr,
                next: i + 1,
            }),
            _ => Err(self.err(i, "expected declarator name")),
        }
    }

    fn parse_type_spec(&mut self, mut i: usize) -> Result<TypeSpec, Diagnostic> {
        let start = i;
        let mut unsigned = false;
        let mut base: Option<BaseType> = None;
        let mut tag_def: Option<TypeDef> = None;
        let mut uses: Vec<String> = Vec::new();
        let mut long_count = 0;
        let mut saw_word = false;
        loop {
            i = self.sig(i);
            let Some(t) = self.tok(i) else { break };
            match (t.kind, t.text.as_str()) {
                (TokenKind::Keyword, w) if QUALIFIER_WORDS.contains(&w) => {
                    i += 1;
                }
                (TokenKind::Keyword, "unsigned") => {
                    unsigned = true;
                    saw_word = true;
                    i += 1;
                }
                (TokenKind::Keyword, "signed") => {
                    saw_word = true;
                    i += 1;
                }
                (TokenKind::Keyword, "long") => {
                    long_count += 1;
                    saw_word = true;
                    i += 1;
                }
                (TokenKind::Keyword, w @ ("void" | "char" | "short" | "int" | "float" | "double")) => {
                    saw_word = true;
                    let b = match w {
                        "void" => BaseType::Void,
                        "char" => BaseType::Char,
                        "short" => BaseType::Short,
                        "int" => BaseType::Int,
                        "float" => BaseType::Float,
                        "double" => BaseType::Double,
                        _ => unreachable!(),
                    };
                    if b != BaseType::Int || base.is_none() {
                        base = Some(b);
                    }
                    i += 1;
                }
                (TokenKind::Keyword, "struct" | "union" | "enum") => {
                    saw_word = true;
                    let kw = t.text.clone();
                    let (b, def, next) = self.parse_tag_type(i, &kw)?;
                    if let Some(d) = &def {
                        uses.extend(d.uses.iter().cloned());
                    }
                    if let BaseType::Named(n) = &b {
                        if !n.is_empty() && !uses.contains(n) {
                            uses.push(n.clone());
                        }
                    }
                    base = Some(b);
                    tag_def = def;
                    i = next;
                }
                (TokenKind::Identifier, name)
                    if base.is_none()
                        && !saw_word
                        && self.typedefs.iter().any(|n| n == name) =>
                {
                    base = Some(BaseType::Named(name.to_string()));
                    uses.push(name.to_string());
                    saw_word = true;
                    i += 1;
                }
                _ => break,
            }
        }
        let base = match (base, long_count, unsigned) {
            (Some(BaseType::Char), _, true) => BaseType::UChar,
            (Some(BaseType::Short), _, true) => BaseType::UShort,
            (Some(BaseType::Int), 0, true) => BaseType::UInt,
            (Some(BaseType::Int), _, false) if long_count > 0 => BaseType::Long,
            (Some(BaseType::Int), _, true) => BaseType::ULong,
            (Some(b), _, _) => b,
            (None, n, u) if n > 0 => {
                if u {
                    BaseType::ULong
                } else {
                    BaseType::Long
                }
            }
            (None, _, true) => BaseType::UInt,
            (None, _, false) if saw_word => BaseType::Int,
            (None, _, false) => return Err(self.err(start, "expected type specifier")),
        };
        Ok(TypeSpec {
            base,
            tag_def,
            uses,
            next: i,
        })
    }

    /// `struct`/`union`/`enum` with optional tag and optional body.
    fn parse_tag_type(
        &mut self,
        kw_at: usize,
        kw: &str,
    ) -> Result<(BaseType, Option<TypeDef>, usize), Diagnostic> {
        let mut i = self.sig(kw_at + 1);
        let tag = match self.tok(i) {
            Some(t) if t.kind == TokenKind::Identifier => {
                let name = t.text.clone();
                i = self.sig(i + 1);
                Some(name)
            }
            _ => None,
        };
        let spelling = tag.as_ref().map(|t| format!("{kw} {t}"));
        if self.tok(i).is_some_and(|t| t.is_punct("{")) {
            let (uses, close) = self.scan_aggregate_body(i)?;
            let def = spelling.as_ref().map(|s| TypeDef {
                name: s.clone(),
                span: (kw_at, close + 1),
                loc: self.loc_at(kw_at),
                uses: uses.clone(),
            });
            let base = match &spelling {
                Some(s) => BaseType::Named(s.clone()),
                // Anonymous body (typedef struct {...} name): the enclosing
                // typedef names it; carry uses through.
                None => BaseType::Named(String::new()),
            };
            let mut def = def;
            if def.is_none() {
                def = Some(TypeDef {
                    name: String::new(),
                    span: (kw_at, close + 1),
                    loc: self.loc_at(kw_at),
                    uses,
                });
            }
            Ok((base, def, close + 1))
        } else {
            match spelling {
                Some(s) => Ok((BaseType::Named(s), None, i)),
                None => Err(self.err(kw_at, format!("expected tag or body after '{kw}'"))),
            }
        }
    }

    /// Aggregate body: collect named-type member uses, return close index.
    fn scan_aggregate_body(&self, open_at: usize) -> Result<(Vec<String>, usize), Diagnostic> {
        let mut uses = Vec::new();
        let mut depth = 0i32;
        let mut i = open_at;
        while i < self.toks.len() {
            let t = &self.toks[i];
            if t.is_punct("{") {
                depth += 1;
            } else if t.is_punct("}") {
                depth -= 1;
                if depth == 0 {
                    return Ok((uses, i));
                }
            } else if t.kind == TokenKind::Identifier && self.typedefs.iter().any(|n| *n == t.text)
            {
                if !uses.contains(&t.text) {
                    uses.push(t.text.clone());
                }
            } else if t.is_kw("struct") || t.is_kw("union") {
                let j = self.sig(i + 1);
                if let Some(id) = self.tok(j).filter(|t| t.kind == TokenKind::Identifier) {
                    let s = format!("{} {}", t.text, id.text);
                    if !uses.contains(&s) {
                        uses.push(s);
                    }
                }
            }
            i += 1;
        }
        Err(self.err(open_at, "unbalanced '{'"))
    }

    fn scan_function_body(&mut self, open_at: usize) -> Result<BodyScan, Diagnostic> {
        // Match braces first.
        let mut match_of: HashMap<usize, usize> = HashMap::new();
        {
            let mut stack = Vec::new();
            let mut i = open_at;
            while i < self.toks.len() {
                let t = &self.toks[i];
                if t.is_punct("{") {
                    stack.push(i);
                } else if t.is_punct("}") {
                    let open = stack
                        .pop()
                        .ok_or_else(|| self.err(i, "unbalanced '}'"))?;
                    match_of.insert(open, i);
                    if stack.is_empty() {
                        break;
                    }
                }
                i += 1;
            }
            if !stack.is_empty() {
                return Err(self.err(open_at, "unbalanced '{'"));
            }
        }
        let close = match_of[&open_at];

        let mut locals = Vec::new();
        let mut calls: Vec<String> = Vec::new();
        let mut type_uses: Vec<String> = Vec::new();
        let mut block_stack = vec![open_at];
        let mut stmt_start = true;
        let mut pending_for_paren = false;
        let mut i = open_at + 1;
        while i < close {
            let t = &self.toks[i];
            if !t.is_significant() {
                i += 1;
                continue;
            }
            if t.kind == TokenKind::PragmaLine {
                stmt_start = true;
                i += 1;
                continue;
            }
            if t.is_kw("goto") {
                return Err(self.err(i, "'goto' is outside the supported C subset"));
            }
            if t.is_punct("{") {
                block_stack.push(i);
                stmt_start = true;
                i += 1;
                continue;
            }
            if t.is_punct("}") {
                block_stack.pop();
                stmt_start = true;
                i += 1;
                continue;
            }
            if t.is_punct(";") {
                stmt_start = true;
                i += 1;
                continue;
            }
            if t.is_kw("for") {
                pending_for_paren = true;
                stmt_start = false;
                i += 1;
                continue;
            }
            if t.is_punct("(") {
                if pending_for_paren {
                    pending_for_paren = false;
                    stmt_start = true;
                } else {
                    stmt_start = false;
                }
                i += 1;
                continue;
            }

            if stmt_start && self.is_type_start(i) && !self.toks[i].is_kw("typedef") {
                let end = self.parse_local_declaration(
                    i,
                    &mut locals,
                    &mut type_uses,
                    &block_stack,
                    &match_of,
                )?;
                // Initializers may call functions.
                for k in i..end {
                    let t = &self.toks[k];
                    if t.kind == TokenKind::Identifier {
                        let j = self.sig(k + 1);
                        if self.tok(j).is_some_and(|u| u.is_punct("("))
                            && !calls.contains(&t.text)
                        {
                            calls.push(t.text.clone());
                        }
                    }
                }
                i = end;
                stmt_start = true;
                continue;
            }
            stmt_start = false;

            if t.kind == TokenKind::Identifier {
                if self.typedefs.iter().any(|n| *n == t.text) && !type_uses.contains(&t.text) {
                    type_uses.push(t.text.clone());
                }
                let j = self.sig(i + 1);
                if self.tok(j).is_some_and(|u| u.is_punct("(")) && !calls.contains(&t.text) {
                    calls.push(t.text.clone());
                }
            }
            i += 1;
        }

        Ok(BodyScan {
            close,
            locals,
            calls,
            type_uses,
        })
    }

    /// Local declaration (including for-header declarations); returns the
    /// index one past its terminating `;`.
    fn parse_local_declaration(
        &mut self,
        start: usize,
        locals: &mut Vec<LocalDecl>,
        type_uses: &mut Vec<String>,
        block_stack: &[usize],
        match_of: &HashMap<usize, usize>,
    ) -> Result<usize, Diagnostic> {
        let spec = self.parse_type_spec(start)?;
        if let BaseType::Named(n) = &spec.base {
            if !type_uses.contains(n) {
                type_uses.push(n.clone());
            }
        }
        let block_open = *block_stack.last().unwrap();
        let block = (block_open, match_of.get(&block_open).copied().unwrap_or(block_open) + 1);
        let mut pos = spec.next;
        loop {
            let d = self.parse_declarator(pos, &spec.base)?;
            let (extents, after) = self.parse_extents(self.sig(d.next))?;
            let after_init = self.skip_initializer(after)?;
            let fixed =
                !extents.is_empty() && extents.iter().all(|e| matches!(e, Extent::Lit(_)));
            locals.push(LocalDecl {
                var: VarDecl {
                    name: d.name.clone(),
                    ty: CType::pointer(spec.base.clone(), d.ptr),
                    extents,
                    fixed_size: fixed,
                    loc: self.loc_at(d.name_tok),
                },
                decl_tok: d.name_tok,
                block,
                depth: block_stack.len() as u32,
            });
            let j = self.sig(after_init);
            match self.tok(j) {
                Some(t) if t.is_punct(",") => pos = self.sig(j + 1),
                Some(t) if t.is_punct(";") => return Ok(j + 1),
                _ => return Err(self.err(j, "expected ',' or ';' in declaration")),
            }
        }
    }
}

struct Declarator {
    name: String,
    name_tok: usize,
    ptr: u8,
    next: usize,
}

struct TypeSpec {
    base: BaseType,
    tag_def: Option<TypeDef>,
    uses: Vec<String>,
    next: usize,
}

struct BodyScan {
    close: usize,
    locals: Vec<LocalDecl>,
    calls: Vec<String>,
    type_uses: Vec<String>,
}

/// Evaluate an integer constant expression over `+ - * / % ( )` and integer
/// literals. Used for array extents, loop steps, and block-size clauses.
pub fn eval_const_expr(text: &str) -> Option<i64> {
    let mut ev = ConstEval {
        bytes: text.as_bytes(),
        pos: 0,
    };
    let v = ev.expr()?;
    ev.skip_ws();
    if ev.pos == ev.bytes.len() {
        Some(v)
    } else {
        None
    }
}

struct ConstEval<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ConstEval<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expr(&mut self) -> Option<i64> {
        let mut v = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            v = if op == b'+' {
                v.checked_add(rhs)?
            } else {
                v.checked_sub(rhs)?
            };
        }
        Some(v)
    }

    fn term(&mut self) -> Option<i64> {
        let mut v = self.factor()?;
        while let Some(op @ (b'*' | b'/' | b'%')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            v = match op {
                b'*' => v.checked_mul(rhs)?,
                b'/' => v.checked_div(rhs)?,
                _ => v.checked_rem(rhs)?,
            };
        }
        Some(v)
    }

    fn factor(&mut self) -> Option<i64> {
        match self.peek()? {
            b'(' => {
                self.pos += 1;
                let v = self.expr()?;
                if self.peek()? != b')' {
                    return None;
                }
                self.pos += 1;
                Some(v)
            }
            b'-' => {
                self.pos += 1;
                Some(-self.factor()?)
            }
            b'+' => {
                self.pos += 1;
                self.factor()
            }
            c if c.is_ascii_digit() => {
                let start = self.pos;
                while self.pos < self.bytes.len()
                    && (self.bytes[self.pos].is_ascii_alphanumeric())
                {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.bytes[start..self.pos]).ok()?;
                parse_int_literal(text).map(|v| v as i64)
            }
            _ => None,
        }
    }
}

pub fn parse_int_literal(text: &str) -> Option<u64> {
    let t = text.trim_end_matches(|c| matches!(c, 'u' | 'U' | 'l' | 'L'));
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()
    } else if t.len() > 1 && t.starts_with('0') && t.bytes().all(|b| b.is_ascii_digit()) {
        u64::from_str_radix(&t[1..], 8).ok()
    } else if t.bytes().all(|b| b.is_ascii_digit()) && !t.is_empty() {
        t.parse().ok()
    } else {
        None
    }
}
