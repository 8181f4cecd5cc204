//! The three-tag intermediate document and its reversion to host code.
//!
//! A document is an ordered tree of exactly three tag kinds: plain C code,
//! directive, and for-loop. `build_intermediate` constructs it from
//! normalized source, `serialize_ir`/`deserialize_ir` give it a stable XML
//! form for inspection, and `revert` flattens it back to host code where
//! every outermost accelerator construct is replaced by a dummy call and
//! recorded in a [`RegionTable`].

use std::fmt::Write as _;

use crate::accvalidate::{
    Clause, ClauseKind, ClauseVar, DirectiveKind, DirectiveNode, ReductionOp, SubarrayBounds,
};
use crate::cfront::{Ast, NormalizedSource, TokSpan, TokenKind};
use crate::diag::{Diagnostic, ErrorCode, Location};

#[derive(Debug, Clone, PartialEq)]
pub struct ForHeader {
    pub init: String,
    pub cond: String,
    pub step: String,
    pub loc: Location,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IrTag {
    CCode(String),
    Pragma {
        directive: DirectiveNode,
        children: Vec<IrTag>,
    },
    ForLoop {
        header: ForHeader,
        body: Vec<IrTag>,
        /// The loop directive governing this statement, when one attaches.
        governing: Option<Box<DirectiveNode>>,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IrDocument {
    pub tags: Vec<IrTag>,
}

impl IrDocument {
    pub fn count_pragmas(&self) -> usize {
        fn walk(tags: &[IrTag]) -> usize {
            tags.iter()
                .map(|t| match t {
                    IrTag::CCode(_) => 0,
                    IrTag::Pragma { children, .. } => 1 + walk(children),
                    IrTag::ForLoop { body, .. } => walk(body),
                })
                .sum()
        }
        walk(&self.tags)
    }

    pub fn count_for_loops(&self) -> usize {
        fn walk(tags: &[IrTag]) -> usize {
            tags.iter()
                .map(|t| match t {
                    IrTag::CCode(_) => 0,
                    IrTag::Pragma { children, .. } => walk(children),
                    IrTag::ForLoop { body, .. } => 1 + walk(body),
                })
                .sum()
        }
        walk(&self.tags)
    }
}

/// Re-render tags as C text. For-loop headers and pragma lines are
/// re-rendered canonically; everything else is verbatim.
pub fn render_tags(tags: &[IrTag]) -> String {
    let mut out = String::new();
    render_into(tags, &mut out);
    out
}

fn render_into(tags: &[IrTag], out: &mut String) {
    for tag in tags {
        match tag {
            IrTag::CCode(text) => out.push_str(text),
            IrTag::Pragma {
                directive,
                children,
            } => {
                out.push_str(&directive.raw);
                render_into(children, out);
            }
            IrTag::ForLoop { header, body, .. } => {
                let _ = write!(out, "for({};{};{})", header.init, header.cond, header.step);
                out.push('{');
                render_into(body, out);
                out.push('}');
            }
        }
    }
}

/// Build the intermediate document from normalized source and its scanned
/// directives. Requires validation to have passed.
pub fn build_intermediate(
    src: &NormalizedSource,
    directives: &[DirectiveNode],
) -> Result<IrDocument, Diagnostic> {
    let builder = Builder { src, directives };
    let tags = builder.build_range(0, src.tokens.len())?;
    Ok(IrDocument { tags })
}

struct Builder<'a> {
    src: &'a NormalizedSource,
    directives: &'a [DirectiveNode],
}

impl<'a> Builder<'a> {
    fn directive_at(&self, tok: usize) -> Option<&DirectiveNode> {
        self.directives.iter().find(|d| d.pragma_tok == tok)
    }

    fn build_range(&self, lo: usize, hi: usize) -> Result<Vec<IrTag>, Diagnostic> {
        let mut tags = Vec::new();
        let mut ccode = String::new();
        let mut i = lo;
        while i < hi {
            let tok = &self.src.tokens[i];
            if tok.kind == TokenKind::PragmaLine && tok.is_acc_pragma() {
                let directive = self.directive_at(i).ok_or_else(|| {
                    Diagnostic::error(
                        ErrorCode::EInternal,
                        tok.loc,
                        "acc pragma with no scanned directive",
                    )
                })?;
                if directive.attached.1 > hi {
                    return Err(Diagnostic::error(
                        ErrorCode::EInternal,
                        tok.loc,
                        "directive attachment crosses an enclosing statement",
                    ));
                }
                flush(&mut ccode, &mut tags);
                let mut children = self.build_range(i + 1, directive.attached.1)?;
                if directive.kind == DirectiveKind::Loop {
                    mark_governing(&mut children, directive);
                }
                tags.push(IrTag::Pragma {
                    directive: directive.clone(),
                    children,
                });
                i = directive.attached.1;
                continue;
            }
            if tok.is_kw("for") {
                flush(&mut ccode, &mut tags);
                let (tag, next) = self.build_for(i, hi)?;
                tags.push(tag);
                i = next;
                continue;
            }
            ccode.push_str(&tok.text);
            i += 1;
        }
        flush(&mut ccode, &mut tags);
        Ok(tags)
    }

    fn build_for(&self, for_at: usize, hi: usize) -> Result<(IrTag, usize), Diagnostic> {
        let toks = &self.src.tokens;
        let loc = toks[for_at].loc;
        let mut i = for_at + 1;
        while i < hi && !toks[i].is_significant() {
            i += 1;
        }
        if i >= hi || !toks[i].is_punct("(") {
            return Err(Diagnostic::error(
                ErrorCode::EInternal,
                loc,
                "for statement without header parentheses",
            ));
        }
        let open = i;
        let mut depth = 0i32;
        let mut semis = Vec::new();
        let mut close = None;
        while i < hi {
            let t = &toks[i];
            if t.is_punct("(") {
                depth += 1;
            } else if t.is_punct(")") {
                depth -= 1;
                if depth == 0 {
                    close = Some(i);
                    break;
                }
            } else if t.is_punct(";") && depth == 1 {
                semis.push(i);
            }
            i += 1;
        }
        let close = close
            .ok_or_else(|| Diagnostic::error(ErrorCode::EInternal, loc, "unbalanced for header"))?;
        if semis.len() != 2 {
            return Err(Diagnostic::error(
                ErrorCode::EParse,
                loc,
                "for header must have init;cond;step",
            ));
        }
        let seg =
            |a: usize, b: usize| -> String { toks[a..b].iter().map(|t| t.text.as_str()).collect() };
        let header = ForHeader {
            init: seg(open + 1, semis[0]).trim().to_string(),
            cond: seg(semis[0] + 1, semis[1]).trim().to_string(),
            step: seg(semis[1] + 1, close).trim().to_string(),
            loc,
        };

        let mut j = close + 1;
        while j < hi && !toks[j].is_significant() {
            j += 1;
        }
        if j < hi && toks[j].is_punct("{") {
            let mut depth = 0i32;
            let mut k = j;
            let mut end = None;
            while k < hi {
                if toks[k].is_punct("{") {
                    depth += 1;
                } else if toks[k].is_punct("}") {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(k);
                        break;
                    }
                }
                k += 1;
            }
            let end = end.ok_or_else(|| {
                Diagnostic::error(ErrorCode::EInternal, loc, "unbalanced for body")
            })?;
            let body = self.build_range(j + 1, end)?;
            Ok((
                IrTag::ForLoop {
                    header,
                    body,
                    governing: None,
                },
                end + 1,
            ))
        } else {
            // Normalization braces loop bodies; treat a bare statement
            // defensively as the body.
            let end = crate::cfront::statement_end(toks, j)
                .map_err(|d| Diagnostic::error(ErrorCode::EInternal, loc, d.message))?;
            let body = self.build_range(j, end)?;
            Ok((
                IrTag::ForLoop {
                    header,
                    body,
                    governing: None,
                },
                end,
            ))
        }
    }
}

fn flush(ccode: &mut String, tags: &mut Vec<IrTag>) {
    if !ccode.is_empty() {
        tags.push(IrTag::CCode(std::mem::take(ccode)));
    }
}

fn mark_governing(children: &mut [IrTag], directive: &DirectiveNode) {
    for tag in children {
        if let IrTag::ForLoop { governing, .. } = tag {
            *governing = Some(Box::new(directive.clone()));
            return;
        }
    }
}

// ---------------------------------------------------------------------------
// Regions

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    Data,
    Kernels,
}

impl RegionKind {
    pub fn name(&self) -> &'static str {
        match self {
            RegionKind::Data => "data",
            RegionKind::Kernels => "kernels",
        }
    }
}

/// One accelerator construct, outlined from host code.
#[derive(Debug, Clone)]
pub struct Region {
    pub id: u32,
    pub kind: RegionKind,
    pub dummy_name: String,
    /// This region's own directive.
    pub directive: DirectiveNode,
    /// Enclosing data directives, outermost first (the governing pragma
    /// stack above this region).
    pub inherited: Vec<DirectiveNode>,
    /// Region body; nested accelerator constructs appear as dummy calls.
    pub body: Vec<IrTag>,
    /// Ids of directly nested regions.
    pub children: Vec<u32>,
    pub enclosing_function: String,
    /// Token span of pragma line through attached statement end, in the
    /// normalized stream.
    pub span: TokSpan,
}

impl Region {
    pub fn dummy_call(&self) -> String {
        format!("{}();", self.dummy_name)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RegionTable {
    regions: Vec<Region>,
}

impl RegionTable {
    pub fn get(&self, dummy_name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.dummy_name == dummy_name)
    }

    pub fn by_id(&self, id: u32) -> Option<&Region> {
        self.regions.iter().find(|r| r.id == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Region> {
        self.regions.iter()
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// Flatten the document to host code, replacing each outermost accelerator
/// construct with a dummy call; nested constructs become dummy calls inside
/// their parent region's body. Region ids count up in source order.
pub fn revert(doc: &IrDocument, ast: &Ast) -> Result<(String, RegionTable), Diagnostic> {
    let mut table = RegionTable::default();
    let mut next_id = 0u32;
    let tags = extract(&doc.tags, &[], &mut table, &mut next_id, ast)?;
    Ok((render_tags(&tags), table))
}

fn extract(
    tags: &[IrTag],
    inherited: &[DirectiveNode],
    table: &mut RegionTable,
    next_id: &mut u32,
    ast: &Ast,
) -> Result<Vec<IrTag>, Diagnostic> {
    let mut out = Vec::new();
    for tag in tags {
        match tag {
            IrTag::CCode(t) => out.push(IrTag::CCode(t.clone())),
            IrTag::ForLoop {
                header,
                body,
                governing,
            } => out.push(IrTag::ForLoop {
                header: header.clone(),
                body: extract(body, inherited, table, next_id, ast)?,
                governing: governing.clone(),
            }),
            IrTag::Pragma {
                directive,
                children,
            } => match directive.kind {
                DirectiveKind::Data | DirectiveKind::Kernels => {
                    let id = *next_id;
                    *next_id += 1;
                    let kind = if directive.kind == DirectiveKind::Data {
                        RegionKind::Data
                    } else {
                        RegionKind::Kernels
                    };
                    let mut stack: Vec<DirectiveNode> = inherited.to_vec();
                    stack.push(directive.clone());
                    let before = table.regions.len();
                    let body = if kind == RegionKind::Data {
                        // Data region bodies keep running on the host and may
                        // contain further constructs.
                        extract(children, &stack, table, next_id, ast)?
                    } else {
                        children.clone()
                    };
                    let child_ids: Vec<u32> = table.regions[before..]
                        .iter()
                        .filter(|r| {
                            r.inherited.last().map(|d| d.pragma_tok) == Some(directive.pragma_tok)
                        })
                        .map(|r| r.id)
                        .collect();
                    let enclosing_function = ast
                        .enclosing_function(directive.pragma_tok)
                        .map(|f| f.name.clone())
                        .unwrap_or_default();
                    let region = Region {
                        id,
                        kind,
                        dummy_name: format!("__accb_region_{id}"),
                        directive: directive.clone(),
                        inherited: inherited.to_vec(),
                        body,
                        children: child_ids,
                        enclosing_function,
                        span: (directive.pragma_tok, directive.attached.1),
                    };
                    out.push(IrTag::CCode(region.dummy_call()));
                    table.regions.push(region);
                    table.regions.sort_by_key(|r| r.id);
                }
                DirectiveKind::Loop => {
                    // Loop directives live inside kernels bodies; at host
                    // level (already rejected by validation) keep them inert.
                    out.push(tag.clone());
                }
            },
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// XML form

/// Serialize to the stable XML inspection format (`--keep-ir`).
pub fn serialize_ir(doc: &IrDocument) -> String {
    let mut out = String::from("<accir>");
    for tag in &doc.tags {
        write_tag(tag, &mut out);
    }
    out.push_str("</accir>");
    out
}

fn write_tag(tag: &IrTag, out: &mut String) {
    match tag {
        IrTag::CCode(text) => {
            out.push_str("<ccode>");
            out.push_str(&escape_text(text));
            out.push_str("</ccode>");
        }
        IrTag::Pragma {
            directive,
            children,
        } => {
            write_directive_open(directive, "pragma", out);
            for c in children {
                write_tag(c, out);
            }
            out.push_str("</pragma>");
        }
        IrTag::ForLoop {
            header,
            body,
            governing,
        } => {
            let _ = write!(
                out,
                "<forloop init=\"{}\" cond=\"{}\" step=\"{}\" line=\"{}\" col=\"{}\">",
                escape_attr(&header.init),
                escape_attr(&header.cond),
                escape_attr(&header.step),
                header.loc.line,
                header.loc.col
            );
            if let Some(g) = governing {
                out.push_str("<governing>");
                write_directive_open(g, "pragma", out);
                out.push_str("</pragma></governing>");
            }
            for c in body {
                write_tag(c, out);
            }
            out.push_str("</forloop>");
        }
    }
}

fn write_directive_open(d: &DirectiveNode, elem: &str, out: &mut String) {
    let _ = write!(
        out,
        "<{elem} directive=\"{}\" line=\"{}\" col=\"{}\" tok=\"{}\" alo=\"{}\" ahi=\"{}\" raw=\"{}\">",
        d.kind.name(),
        d.loc.line,
        d.loc.col,
        d.pragma_tok,
        d.attached.0,
        d.attached.1,
        escape_attr(&d.raw)
    );
    for c in &d.clauses {
        let _ = write!(out, "<clause kind=\"{}\"", c.kind.name());
        if let Some(op) = c.reduction_op {
            let _ = write!(out, " op=\"{}\"", escape_attr(op.name()));
        }
        if let Some(size) = &c.size {
            let _ = write!(out, " size=\"{}\"", escape_attr(size));
        }
        let _ = write!(out, " line=\"{}\" col=\"{}\">", c.loc.line, c.loc.col);
        for v in &c.vars {
            let _ = write!(out, "<var name=\"{}\"", escape_attr(&v.name));
            if let Some(b) = &v.bounds {
                let _ = write!(
                    out,
                    " start=\"{}\" count=\"{}\"",
                    escape_attr(&b.start),
                    escape_attr(&b.count)
                );
            }
            let _ = write!(out, " line=\"{}\" col=\"{}\"/>", v.loc.line, v.loc.col);
        }
        out.push_str("</clause>");
    }
}

fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            c if (c as u32) < 0x20 && c != '\n' && c != '\t' => {
                let _ = write!(out, "&#{};", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "&#{};", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

/// Exact inverse of [`serialize_ir`].
pub fn deserialize_ir(text: &str) -> Result<IrDocument, Diagnostic> {
    let mut p = XmlParser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    p.expect_open("accir")?;
    let tags = p.parse_children("accir")?;
    Ok(IrDocument { tags })
}

struct XmlParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> XmlParser<'a> {
    fn fail<T>(&self, msg: &str) -> Result<T, Diagnostic> {
        Err(Diagnostic::error(
            ErrorCode::EParse,
            Location::new(1, (self.pos + 1) as u32),
            format!("IR XML: {msg}"),
        ))
    }

    fn rest(&self) -> &'a str {
        std::str::from_utf8(&self.bytes[self.pos..]).unwrap_or("")
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect_open(&mut self, name: &str) -> Result<(), Diagnostic> {
        if self.eat(&format!("<{name}>")) {
            Ok(())
        } else {
            self.fail(&format!("expected <{name}>"))
        }
    }

    /// Element name at an opening `<`, without consuming.
    fn peek_element(&self) -> Option<&'a str> {
        let rest = self.rest();
        let rest = rest.strip_prefix('<')?;
        if rest.starts_with('/') {
            return None;
        }
        let end = rest.find(|c: char| c == ' ' || c == '>' || c == '/')?;
        Some(&rest[..end])
    }

    /// Children of `parent` until its close tag.
    fn parse_children(&mut self, parent: &str) -> Result<Vec<IrTag>, Diagnostic> {
        let mut tags = Vec::new();
        loop {
            if self.eat(&format!("</{parent}>")) {
                return Ok(tags);
            }
            if self.pos >= self.bytes.len() {
                return self.fail(&format!("missing </{parent}>"));
            }
            match self.peek_element() {
                Some("ccode") => {
                    self.eat("<ccode>");
                    let end = match self.rest().find("</ccode>") {
                        Some(e) => e,
                        None => return self.fail("missing </ccode>"),
                    };
                    let text = unescape(&self.rest()[..end]);
                    self.pos += end + "</ccode>".len();
                    tags.push(IrTag::CCode(text));
                }
                Some("pragma") => {
                    let directive = self.parse_directive_open("pragma")?;
                    let children = self.parse_children("pragma")?;
                    tags.push(IrTag::Pragma {
                        directive,
                        children,
                    });
                }
                Some("forloop") => {
                    let attrs = self.parse_open_attrs("forloop")?;
                    let header = ForHeader {
                        init: attr(&attrs, "init")?,
                        cond: attr(&attrs, "cond")?,
                        step: attr(&attrs, "step")?,
                        loc: loc_of(&attrs)?,
                    };
                    let governing = if self.eat("<governing>") {
                        let d = self.parse_directive_open("pragma")?;
                        if !self.eat("</pragma>") {
                            return self.fail("missing </pragma> in governing");
                        }
                        if !self.eat("</governing>") {
                            return self.fail("missing </governing>");
                        }
                        Some(Box::new(d))
                    } else {
                        None
                    };
                    let body = self.parse_children("forloop")?;
                    tags.push(IrTag::ForLoop {
                        header,
                        body,
                        governing,
                    });
                }
                _ => return self.fail("unexpected content"),
            }
        }
    }

    fn parse_directive_open(&mut self, elem: &str) -> Result<DirectiveNode, Diagnostic> {
        let attrs = self.parse_open_attrs(elem)?;
        let kind = match attr(&attrs, "directive")?.as_str() {
            "data" => DirectiveKind::Data,
            "kernels" => DirectiveKind::Kernels,
            "loop" => DirectiveKind::Loop,
            other => return self.fail(&format!("unknown directive kind '{other}'")),
        };
        let mut clauses = Vec::new();
        while self.peek_element() == Some("clause") {
            clauses.push(self.parse_clause()?);
        }
        Ok(DirectiveNode {
            kind,
            clauses,
            loc: loc_of(&attrs)?,
            pragma_tok: num(&attrs, "tok")?,
            attached: (num(&attrs, "alo")?, num(&attrs, "ahi")?),
            raw: attr(&attrs, "raw")?,
        })
    }

    fn parse_clause(&mut self) -> Result<Clause, Diagnostic> {
        let attrs = self.parse_open_attrs("clause")?;
        let kind = match attr(&attrs, "kind")?.as_str() {
            "copy" => ClauseKind::Copy,
            "copyin" => ClauseKind::Copyin,
            "copyout" => ClauseKind::Copyout,
            "create" => ClauseKind::Create,
            "present" => ClauseKind::Present,
            "independent" => ClauseKind::Independent,
            "private" => ClauseKind::Private,
            "reduction" => ClauseKind::Reduction,
            "gang" => ClauseKind::Gang,
            "worker" => ClauseKind::Worker,
            "vector" => ClauseKind::Vector,
            other => return self.fail(&format!("unknown clause kind '{other}'")),
        };
        let reduction_op = match attrs.iter().find(|(k, _)| k == "op").map(|(_, v)| v.as_str()) {
            None => None,
            Some("+") => Some(ReductionOp::Add),
            Some("*") => Some(ReductionOp::Mul),
            Some("max") => Some(ReductionOp::Max),
            Some("min") => Some(ReductionOp::Min),
            Some(other) => return self.fail(&format!("unknown reduction op '{other}'")),
        };
        let size = attrs
            .iter()
            .find(|(k, _)| k == "size")
            .map(|(_, v)| v.clone());
        let loc = loc_of(&attrs)?;
        let mut vars = Vec::new();
        while self.peek_element() == Some("var") {
            let vattrs = self.parse_open_attrs_selfclosing("var")?;
            let bounds = match (
                vattrs.iter().find(|(k, _)| k == "start"),
                vattrs.iter().find(|(k, _)| k == "count"),
            ) {
                (Some((_, s)), Some((_, c))) => Some(SubarrayBounds {
                    start: s.clone(),
                    count: c.clone(),
                }),
                _ => None,
            };
            vars.push(ClauseVar {
                name: attr(&vattrs, "name")?,
                bounds,
                loc: loc_of(&vattrs)?,
            });
        }
        if !self.eat("</clause>") {
            return self.fail("missing </clause>");
        }
        Ok(Clause {
            kind,
            vars,
            reduction_op,
            size,
            loc,
        })
    }

    fn parse_open_attrs(&mut self, elem: &str) -> Result<Vec<(String, String)>, Diagnostic> {
        if !self.eat(&format!("<{elem}")) {
            return self.fail(&format!("expected <{elem}>"));
        }
        let attrs = self.parse_attrs()?;
        if !self.eat(">") {
            return self.fail(&format!("expected '>' closing <{elem}>"));
        }
        Ok(attrs)
    }

    fn parse_open_attrs_selfclosing(
        &mut self,
        elem: &str,
    ) -> Result<Vec<(String, String)>, Diagnostic> {
        if !self.eat(&format!("<{elem}")) {
            return self.fail(&format!("expected <{elem}>"));
        }
        let attrs = self.parse_attrs()?;
        if !self.eat("/>") {
            return self.fail(&format!("expected '/>' closing <{elem}>"));
        }
        Ok(attrs)
    }

    fn parse_attrs(&mut self) -> Result<Vec<(String, String)>, Diagnostic> {
        let mut attrs = Vec::new();
        loop {
            while self.rest().starts_with(' ') {
                self.pos += 1;
            }
            let rest = self.rest();
            if rest.starts_with('>') || rest.starts_with("/>") {
                return Ok(attrs);
            }
            let eq = match rest.find('=') {
                Some(e) => e,
                None => return self.fail("malformed attribute"),
            };
            let name = rest[..eq].trim().to_string();
            self.pos += eq + 1;
            if !self.eat("\"") {
                return self.fail("attribute value must be quoted");
            }
            let rest = self.rest();
            let end = match rest.find('"') {
                Some(e) => e,
                None => return self.fail("unterminated attribute value"),
            };
            let value = unescape(&rest[..end]);
            self.pos += end + 1;
            attrs.push((name, value));
        }
    }
}

fn attr(attrs: &[(String, String)], name: &str) -> Result<String, Diagnostic> {
    attrs
        .iter()
        .find(|(k, _)| k == name)
        .map(|(_, v)| v.clone())
        .ok_or_else(|| {
            Diagnostic::error(
                ErrorCode::EParse,
                Location::new(1, 1),
                format!("IR XML: missing attribute '{name}'"),
            )
        })
}

fn num(attrs: &[(String, String)], name: &str) -> Result<usize, Diagnostic> {
    attr(attrs, name)?.parse().map_err(|_| {
        Diagnostic::error(
            ErrorCode::EParse,
            Location::new(1, 1),
            format!("IR XML: attribute '{name}' must be an integer"),
        )
    })
}

fn loc_of(attrs: &[(String, String)]) -> Result<Location, Diagnostic> {
    Ok(Location::new(
        num(attrs, "line")? as u32,
        num(attrs, "col")? as u32,
    ))
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'&' {
            let rest = &s[i..];
            if let Some(end) = rest.find(';') {
                let entity = &rest[1..end];
                let replaced = match entity {
                    "amp" => Some('&'),
                    "lt" => Some('<'),
                    "gt" => Some('>'),
                    "quot" => Some('"'),
                    "apos" => Some('\''),
                    _ => entity
                        .strip_prefix('#')
                        .and_then(|n| n.parse::<u32>().ok())
                        .and_then(char::from_u32),
                };
                if let Some(c) = replaced {
                    out.push(c);
                    i += end + 1;
                    continue;
                }
            }
        }
        let c = s[i..].chars().next().unwrap();
        out.push(c);
        i += c.len_utf8();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accvalidate::scan_directives;
    use crate::cfront::{normalize, parse_ast, tokenize};

    fn build(src: &str) -> (IrDocument, NormalizedSource, Ast) {
        let norm = normalize(&tokenize(src).unwrap()).unwrap();
        let ast = parse_ast(&norm).unwrap();
        let (dirs, diags) = scan_directives(&norm);
        assert!(diags.is_empty(), "{diags:?}");
        let doc = build_intermediate(&norm, &dirs).unwrap();
        (doc, norm, ast)
    }

    const LISTING: &str = "\
int main(){
  float *a, *b, *c;
  int i, j, LEN;
#pragma acc data copy(a[0:LEN*LEN],b[0:LEN*LEN],c[0:LEN*LEN])
#pragma acc kernels
#pragma acc loop independent
  for(i=0; i<LEN; ++i){
#pragma acc loop independent
    for(j=0; j<LEN; ++j){
      float sum=0;
      for(int l=0; l<LEN; ++l){ sum += a[i*LEN+l]*b[l*LEN+j]; }
      c[i*LEN+j]=sum;
    }
  }
  return 0;
}
";

    #[test]
    fn listing_structure_nests_three_pragmas() {
        let (doc, _, _) = build(LISTING);
        assert_eq!(doc.count_pragmas(), 4);
        assert_eq!(doc.count_for_loops(), 3);
        let data = doc
            .tags
            .iter()
            .find_map(|t| match t {
                IrTag::Pragma {
                    directive,
                    children,
                } if directive.kind == DirectiveKind::Data => Some(children),
                _ => None,
            })
            .expect("data pragma");
        let kernels = data
            .iter()
            .find_map(|t| match t {
                IrTag::Pragma {
                    directive,
                    children,
                } if directive.kind == DirectiveKind::Kernels => Some(children),
                _ => None,
            })
            .expect("kernels inside data");
        let outer_loop = kernels
            .iter()
            .find_map(|t| match t {
                IrTag::Pragma {
                    directive,
                    children,
                } if directive.kind == DirectiveKind::Loop => Some(children),
                _ => None,
            })
            .expect("loop inside kernels");
        let for_tag = outer_loop
            .iter()
            .find(|t| matches!(t, IrTag::ForLoop { .. }))
            .expect("for inside loop pragma");
        match for_tag {
            IrTag::ForLoop {
                header, governing, ..
            } => {
                assert_eq!(header.init, "i=0");
                assert_eq!(header.cond, "i<LEN");
                assert_eq!(header.step, "++i");
                assert!(governing.is_some());
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn source_without_pragmas_or_loops_is_single_ccode() {
        let (doc, _, _) = build("int x; int main(){ x = 1; return x; }");
        assert_eq!(doc.tags.len(), 1);
        assert!(matches!(&doc.tags[0], IrTag::CCode(_)));
    }

    #[test]
    fn undirected_for_has_no_governing_directive() {
        let (doc, _, _) =
            build("int main(){ int i,n; float a[4]; for(i=0;i<n;++i){ a[i]=0; } return 0; }");
        assert_eq!(doc.count_for_loops(), 1);
        fn find_for(tags: &[IrTag]) -> Option<&IrTag> {
            tags.iter().find_map(|t| match t {
                IrTag::ForLoop { .. } => Some(t),
                IrTag::Pragma { children, .. } => find_for(children),
                _ => None,
            })
        }
        match find_for(&doc.tags).unwrap() {
            IrTag::ForLoop { governing, .. } => assert!(governing.is_none()),
            _ => unreachable!(),
        }
    }

    #[test]
    fn render_reproduces_token_sequence() {
        let (doc, norm, _) = build(LISTING);
        let rendered = render_tags(&doc.tags);
        let orig: Vec<String> = norm
            .tokens
            .iter()
            .filter(|t| t.kind != TokenKind::Whitespace)
            .map(|t| t.text.clone())
            .collect();
        let re: Vec<String> = tokenize(&rendered)
            .unwrap()
            .iter()
            .filter(|t| t.kind != TokenKind::Whitespace)
            .map(|t| t.text.clone())
            .collect();
        assert_eq!(orig, re);
    }

    #[test]
    fn serialize_single_ccode() {
        let doc = IrDocument {
            tags: vec![IrTag::CCode("int x;".into())],
        };
        assert_eq!(serialize_ir(&doc), "<accir><ccode>int x;</ccode></accir>");
    }

    #[test]
    fn serialize_escapes_comparison() {
        let doc = IrDocument {
            tags: vec![IrTag::CCode("a<b && c>d".into())],
        };
        assert_eq!(
            serialize_ir(&doc),
            "<accir><ccode>a&lt;b &amp;&amp; c&gt;d</ccode></accir>"
        );
    }

    #[test]
    fn serialize_kernels_wrapping_loop_shape() {
        let (doc, _, _) = build(
            "int main(){ int i,n; float a[8];\n#pragma acc kernels copy(a[0:n])\n#pragma acc loop independent\nfor(i=0;i<n;++i){ a[i]=1; }\nreturn 0; }",
        );
        let xml = serialize_ir(&doc);
        assert!(xml.contains("<pragma directive=\"kernels\""));
        assert!(xml.contains("<clause kind=\"copy\""));
        assert!(xml.contains("<forloop init=\"i=0\""));
        assert!(xml.starts_with("<accir>") && xml.ends_with("</accir>"));
    }

    #[test]
    fn round_trip_listing() {
        let (doc, _, _) = build(LISTING);
        let xml = serialize_ir(&doc);
        let back = deserialize_ir(&xml).unwrap();
        assert_eq!(doc, back);
    }

    #[test]
    fn revert_listing_produces_nested_regions() {
        let (doc, norm, ast) = build(LISTING);
        let (host, table) = revert(&doc, &ast).unwrap();
        assert!(host.contains("__accb_region_0();"));
        assert!(!host.contains("#pragma acc"));
        assert_eq!(table.len(), 2);
        let outer = table.by_id(0).unwrap();
        assert_eq!(outer.kind, RegionKind::Data);
        assert_eq!(outer.enclosing_function, "main");
        assert_eq!(outer.children, vec![1]);
        let inner = table.by_id(1).unwrap();
        assert_eq!(inner.kind, RegionKind::Kernels);
        assert_eq!(inner.inherited.len(), 1);
        let outer_body = render_tags(&outer.body);
        assert!(outer_body.contains("__accb_region_1();"));

        // Re-inlining the outer region restores the original token sequence.
        let toks = |s: &str| -> Vec<String> {
            tokenize(s)
                .unwrap()
                .iter()
                .filter(|t| t.kind != TokenKind::Whitespace)
                .map(|t| t.text.clone())
                .collect()
        };
        let once = host.replace(&outer.dummy_call(), &norm.render(outer.span));
        assert_eq!(toks(&once), toks(&norm.text));
    }

    #[test]
    fn revert_no_pragmas_is_identity_with_empty_table() {
        let src = "int main(){ int x; x=2; return x; }";
        let (doc, norm, ast) = build(src);
        let (host, table) = revert(&doc, &ast).unwrap();
        assert!(table.is_empty());
        assert_eq!(host, norm.text);
    }

    #[test]
    fn sibling_kernels_get_source_order_ids() {
        let src = "\
int main(){ int i; float a[4], b[4];
#pragma acc kernels copy(a[0:4])
#pragma acc loop independent
for(i=0;i<4;++i){ a[i]=1; }
#pragma acc kernels copy(b[0:4])
#pragma acc loop independent
for(i=0;i<4;++i){ b[i]=2; }
return 0; }
";
        let (doc, _, ast) = build(src);
        let (host, table) = revert(&doc, &ast).unwrap();
        assert_eq!(table.len(), 2);
        let p0 = host.find("__accb_region_0();").unwrap();
        let p1 = host.find("__accb_region_1();").unwrap();
        assert!(p0 < p1);
        assert_eq!(table.by_id(0).unwrap().kind, RegionKind::Kernels);
        assert_eq!(table.by_id(1).unwrap().kind, RegionKind::Kernels);
    }

    #[test]
    fn tag_counts_match_directives_and_fors() {
        let (doc, norm, _) = build(LISTING);
        let (dirs, _) = scan_directives(&norm);
        assert_eq!(doc.count_pragmas(), dirs.len());
        let fors = norm.tokens.iter().filter(|t| t.is_kw("for")).count();
        assert_eq!(doc.count_for_loops(), fors);
    }
}
