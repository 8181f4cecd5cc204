//! Scope resolution for kernels regions.
//!
//! The scope of a region is the global scope plus the scope of the function
//! the region's dummy call sits in; every identifier used in the region body
//! must resolve there (or be declared inside the region itself), otherwise
//! translation fails with E_UNBOUND. Array bindings carry the transfer size
//! inferred from the governing data clauses.

use std::collections::BTreeMap;

use crate::accvalidate::{ClauseKind, ClauseVar, SubarrayBounds};
use crate::cfront::ast::eval_const_expr;
use crate::cfront::{Ast, CType, Extent, FunctionDef, NormalizedSource, TokenKind, VarDecl};
use crate::diag::{Diagnostic, ErrorCode, Location};
use crate::irdoc::Region;

use super::geometry::analyze_nest;

/// Functions callable from device code without a hoisted definition.
pub const BUILTIN_DEVICE_FNS: &[&str] = &[
    "sqrt", "sqrtf", "fabs", "fabsf", "exp", "expf", "log", "logf", "pow", "powf", "sin", "sinf",
    "cos", "cosf", "tan", "tanf", "fmin", "fminf", "fmax", "fmaxf", "floor", "floorf", "ceil",
    "ceilf", "abs",
];

/// Host-only names: calling these inside a kernels region is rejected.
pub const HOST_ONLY_FNS: &[&str] = &[
    "printf", "fprintf", "sprintf", "snprintf", "scanf", "fscanf", "puts", "putchar", "getchar",
    "fopen", "fclose", "fread", "fwrite", "malloc", "calloc", "realloc", "free", "memcpy",
    "memset", "exit", "rand", "srand",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SizeExpr {
    Lit(i64),
    Expr(String),
}

impl SizeExpr {
    pub fn from_text(text: &str) -> Self {
        match eval_const_expr(text) {
            Some(v) => SizeExpr::Lit(v),
            None => SizeExpr::Expr(text.to_string()),
        }
    }

    pub fn render(&self) -> String {
        match self {
            SizeExpr::Lit(v) => v.to_string(),
            SizeExpr::Expr(e) => format!("({e})"),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SizeExpr::Lit(0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ElemSize {
    Bytes(u64),
    Sizeof(String),
}

impl ElemSize {
    pub fn render(&self) -> String {
        match self {
            ElemSize::Bytes(n) => n.to_string(),
            ElemSize::Sizeof(ty) => format!("sizeof({ty})"),
        }
    }
}

/// Byte accounting for one transferred array section `[start:count]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferSize {
    pub start: SizeExpr,
    pub count: SizeExpr,
    pub elem: ElemSize,
}

impl TransferSize {
    /// Bytes moved by one transfer.
    pub fn transfer_bytes(&self) -> String {
        match (&self.count, &self.elem) {
            (SizeExpr::Lit(c), ElemSize::Bytes(b)) => (*c as u64 * b).to_string(),
            _ => format!("{}*{}", self.count.render(), self.elem.render()),
        }
    }

    /// Byte offset of the section start from the array base.
    pub fn offset_bytes(&self) -> String {
        match (&self.start, &self.elem) {
            (SizeExpr::Lit(s), ElemSize::Bytes(b)) => (*s as u64 * b).to_string(),
            _ => format!("{}*{}", self.start.render(), self.elem.render()),
        }
    }

    /// Device allocation covers elements `[0, start+count)` so the kernel's
    /// absolute indexing stays valid; only the section is transferred.
    pub fn alloc_bytes(&self) -> String {
        if self.start.is_zero() {
            return self.transfer_bytes();
        }
        match (&self.start, &self.count, &self.elem) {
            (SizeExpr::Lit(s), SizeExpr::Lit(c), ElemSize::Bytes(b)) => {
                ((*s as u64 + *c as u64) * b).to_string()
            }
            _ => format!(
                "({}+{})*{}",
                self.start.render(),
                self.count.render(),
                self.elem.render()
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BindingKind {
    Scalar {
        ty: CType,
    },
    Array {
        elem: CType,
        extents: Vec<Extent>,
        fixed_size: bool,
        /// Size inferred from the governing data clause, when any.
        transfer: Option<TransferSize>,
        /// Innermost data clause naming this array.
        clause: Option<ClauseKind>,
    },
    /// Control variable of a geometry-mapped parallel loop.
    LoopIndex {
        ty: CType,
    },
    UserFunction,
    UserType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindingOrigin {
    Global,
    Param,
    ParentLocal,
    /// Declared inside the region body itself.
    RegionLocal,
    Item,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    pub kind: BindingKind,
    pub origin: BindingOrigin,
    pub loc: Location,
}

impl Binding {
    pub fn scalar_type(&self) -> Option<&CType> {
        match &self.kind {
            BindingKind::Scalar { ty } | BindingKind::LoopIndex { ty } => Some(ty),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScopeBindings {
    map: BTreeMap<String, Binding>,
    /// First-appearance order of identifiers in the region body.
    order: Vec<String>,
}

impl ScopeBindings {
    pub fn get(&self, name: &str) -> Option<&Binding> {
        self.map.get(name)
    }

    pub fn names_in_order(&self) -> &[String] {
        &self.order
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Binding)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn insert(&mut self, name: &str, binding: Binding) {
        if !self.map.contains_key(name) {
            self.order.push(name.to_string());
            self.map.insert(name.to_string(), binding);
        }
    }
}

/// Variable declaration visible at token position `at` inside function `f`,
/// innermost block first, declarations before use only.
pub fn visible_local<'a>(
    f: &'a FunctionDef,
    name: &str,
    at: usize,
) -> Option<&'a crate::cfront::LocalDecl> {
    f.locals
        .iter()
        .filter(|l| {
            l.var.name == name && l.decl_tok < at && l.block.0 <= at && at < l.block.1
        })
        .max_by_key(|l| (l.depth, l.decl_tok))
}

/// Declaration of `name` visible at token `at`: parent-function locals and
/// parameters, then globals.
pub fn find_decl_at<'a>(ast: &'a Ast, at: usize, name: &str) -> Option<(&'a VarDecl, BindingOrigin)> {
    if let Some(f) = ast.enclosing_function(at) {
        if let Some(l) = visible_local(f, name, at) {
            return Some((&l.var, BindingOrigin::ParentLocal));
        }
        if let Some(p) = f.params.iter().find(|p| p.name == name) {
            return Some((p, BindingOrigin::Param));
        }
    }
    ast.global(name).map(|g| (g, BindingOrigin::Global))
}

/// Size of the section a data clause moves for `decl`, when determinable:
/// explicit `[start:count]` bounds win, otherwise fixed-size arrays are
/// sized from their extents; anything else is unknown.
pub fn infer_transfer_size(decl: &VarDecl, clause_var: &ClauseVar) -> Option<TransferSize> {
    let elem_ty = element_type(decl);
    let elem = match elem_ty.byte_size() {
        Some(n) => ElemSize::Bytes(n),
        None => ElemSize::Sizeof(elem_ty.spelling()),
    };
    match &clause_var.bounds {
        Some(SubarrayBounds { start, count }) => Some(TransferSize {
            start: SizeExpr::from_text(start),
            count: SizeExpr::from_text(count),
            elem,
        }),
        None => {
            let count = decl.fixed_elem_count()?;
            Some(TransferSize {
                start: SizeExpr::Lit(0),
                count: SizeExpr::Lit(count as i64),
                elem,
            })
        }
    }
}

/// Element type behind an array or pointer declaration.
pub fn element_type(decl: &VarDecl) -> CType {
    if !decl.extents.is_empty() {
        decl.ty.clone()
    } else if decl.ty.ptr > 0 {
        CType::pointer(decl.ty.base.clone(), decl.ty.ptr - 1)
    } else {
        decl.ty.clone()
    }
}

/// Resolve every identifier used in a kernels region body.
pub fn resolve_scope(
    region: &Region,
    ast: &Ast,
    src: &NormalizedSource,
) -> Result<ScopeBindings, Diagnostic> {
    let mut scope = ScopeBindings::default();
    let at = region.span.0;
    let parent = ast.enclosing_function(at);

    // Parallel-loop control variables get loop-index bindings.
    let nest = analyze_nest(region);
    let mut parallel_indices: Vec<String> = Vec::new();
    for lp in &nest.loops {
        parallel_indices.push(lp.index.clone());
    }

    // Data environment clauses, innermost last.
    let env_clauses = region_clause_vars(region);

    let toks = &src.tokens[region.span.0..region.span.1];
    let mut prev_sig: Option<&crate::cfront::Token> = None;
    for (off, tok) in toks.iter().enumerate() {
        if !tok.is_significant() || tok.kind == TokenKind::PragmaLine {
            if tok.kind == TokenKind::PragmaLine {
                prev_sig = Some(tok);
            }
            continue;
        }
        if tok.kind != TokenKind::Identifier {
            prev_sig = Some(tok);
            continue;
        }
        let name = tok.text.as_str();
        // Member accesses resolve through their base, and tag names through
        // the tag keyword.
        if let Some(p) = prev_sig {
            if p.is_punct(".") || p.is_punct("->") {
                prev_sig = Some(tok);
                continue;
            }
            if p.is_kw("struct") || p.is_kw("union") || p.is_kw("enum") {
                let spelled = format!("{} {}", p.text, name);
                if ast.typedef(&spelled).is_some() {
                    scope.insert(
                        &spelled,
                        Binding {
                            kind: BindingKind::UserType,
                            origin: BindingOrigin::Item,
                            loc: tok.loc,
                        },
                    );
                }
                prev_sig = Some(tok);
                continue;
            }
        }
        let global_idx = region.span.0 + off;
        let is_call = next_is_open_paren(&src.tokens, global_idx + 1);
        if let Err(d) = resolve_one(
            &mut scope,
            name,
            tok.loc,
            is_call,
            at,
            region,
            ast,
            parent,
            &parallel_indices,
            &env_clauses,
        ) {
            return Err(d);
        }
        prev_sig = Some(tok);
    }

    // Private and reduction clause variables must be in scope even when the
    // body text never mentions them elsewhere.
    for d in std::iter::once(&region.directive).chain(nest.directives.iter().copied()) {
        for c in &d.clauses {
            if matches!(c.kind, ClauseKind::Private | ClauseKind::Reduction) {
                for v in &c.vars {
                    resolve_one(
                        &mut scope,
                        &v.name,
                        v.loc,
                        false,
                        at,
                        region,
                        ast,
                        parent,
                        &parallel_indices,
                        &env_clauses,
                    )?;
                }
            }
        }
    }

    Ok(scope)
}

/// All data-clause vars governing a region: inherited directives outermost
/// first, then the region's own directive.
fn region_clause_vars(region: &Region) -> Vec<(ClauseKind, ClauseVar)> {
    let mut out = Vec::new();
    for d in region.inherited.iter().chain(std::iter::once(&region.directive)) {
        for c in &d.clauses {
            if c.kind.is_data_clause() {
                for v in &c.vars {
                    out.push((c.kind, v.clone()));
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn resolve_one(
    scope: &mut ScopeBindings,
    name: &str,
    loc: Location,
    is_call: bool,
    region_start: usize,
    region: &Region,
    ast: &Ast,
    parent: Option<&FunctionDef>,
    parallel_indices: &[String],
    env_clauses: &[(ClauseKind, ClauseVar)],
) -> Result<(), Diagnostic> {
    if scope.get(name).is_some() {
        return Ok(());
    }
    if is_call {
        if ast.function(name).is_some() {
            scope.insert(
                name,
                Binding {
                    kind: BindingKind::UserFunction,
                    origin: BindingOrigin::Item,
                    loc,
                },
            );
        }
        // Builtins and host-only calls carry no binding; kernel
        // construction decides their fate.
        return Ok(());
    }
    if ast.typedef(name).is_some() {
        scope.insert(
            name,
            Binding {
                kind: BindingKind::UserType,
                origin: BindingOrigin::Item,
                loc,
            },
        );
        return Ok(());
    }

    // Declared inside the region body itself?
    let region_local = parent.and_then(|f| {
        f.locals
            .iter()
            .filter(|l| {
                l.var.name == name && l.decl_tok >= region.span.0 && l.decl_tok < region.span.1
            })
            .min_by_key(|l| l.decl_tok)
    });

    let (decl, origin) = match region_local {
        Some(l) => (&l.var, BindingOrigin::RegionLocal),
        None => match find_decl_at(ast, region_start, name) {
            Some(found) => found,
            None => {
                return Err(Diagnostic::error(
                    ErrorCode::EUnbound,
                    loc,
                    format!("'{name}' is not declared in any scope enclosing the region"),
                ));
            }
        },
    };

    let kind = if parallel_indices.iter().any(|i| i == name) {
        BindingKind::LoopIndex {
            ty: decl.ty.clone(),
        }
    } else if decl.is_array_like() {
        let clause = env_clauses
            .iter()
            .rev()
            .find(|(_, v)| v.name == name);
        let transfer = clause.and_then(|(_, v)| infer_transfer_size(decl, v));
        BindingKind::Array {
            elem: element_type(decl),
            extents: decl.extents.clone(),
            fixed_size: decl.fixed_size,
            transfer,
            clause: clause.map(|(k, _)| *k),
        }
    } else {
        BindingKind::Scalar {
            ty: decl.ty.clone(),
        }
    };
    scope.insert(
        name,
        Binding {
            kind,
            origin,
            loc,
        },
    );
    Ok(())
}

fn next_is_open_paren(tokens: &[crate::cfront::Token], mut i: usize) -> bool {
    while i < tokens.len() && !tokens[i].is_significant() {
        i += 1;
    }
    i < tokens.len() && tokens[i].is_punct("(")
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::accvalidate::{scan_directives, validate};
    use crate::cfront::{normalize, parse_ast, tokenize, BaseType};
    use crate::irdoc::{build_intermediate, revert, RegionTable};

    pub(crate) fn pipeline(src: &str) -> (NormalizedSource, Ast, RegionTable) {
        let norm = normalize(&tokenize(src).unwrap()).unwrap();
        let ast = parse_ast(&norm).unwrap();
        let (dirs, diags) = scan_directives(&norm);
        assert!(diags.is_empty(), "{diags:?}");
        let diags = validate(&dirs, &ast);
        assert!(diags.iter().all(|d| !d.is_error()), "{diags:?}");
        let doc = build_intermediate(&norm, &dirs).unwrap();
        let (_, table) = revert(&doc, &ast).unwrap();
        (norm, ast, table)
    }

    const LISTING: &str = "\
int main(){
  float *a, *b, *c;
  float sum;
  int i, j, l, LEN;
#pragma acc data copy(a[0:LEN*LEN],b[0:LEN*LEN],c[0:LEN*LEN])
#pragma acc kernels
#pragma acc loop independent
  for(i=0; i<LEN; ++i){
#pragma acc loop independent
    for(j=0; j<LEN; ++j){
      sum=0;
      for(l=0; l<LEN; ++l){ sum += a[i*LEN+l]*b[l*LEN+j]; }
      c[i*LEN+j]=sum;
    }
  }
  return 0;
}
";

    #[test]
    fn listing_bindings() {
        let (norm, ast, table) = pipeline(LISTING);
        let kernels = table.by_id(1).unwrap();
        let scope = resolve_scope(kernels, &ast, &norm).unwrap();
        for arr in ["a", "b", "c"] {
            match &scope.get(arr).unwrap().kind {
                BindingKind::Array {
                    elem,
                    transfer,
                    clause,
                    ..
                } => {
                    assert_eq!(elem.base, BaseType::Float);
                    assert_eq!(*clause, Some(ClauseKind::Copy));
                    let t = transfer.as_ref().unwrap();
                    assert_eq!(t.transfer_bytes(), "(LEN*LEN)*4");
                    assert_eq!(t.offset_bytes(), "0");
                }
                other => panic!("expected array binding for {arr}, got {other:?}"),
            }
        }
        for idx in ["i", "j"] {
            assert!(matches!(
                scope.get(idx).unwrap().kind,
                BindingKind::LoopIndex { .. }
            ));
        }
        for sc in ["l", "sum"] {
            assert!(matches!(
                scope.get(sc).unwrap().kind,
                BindingKind::Scalar { .. }
            ));
        }
        assert!(matches!(
            scope.get("LEN").unwrap().kind,
            BindingKind::Scalar { .. }
        ));
    }

    #[test]
    fn user_function_binding() {
        let src = "\
float dist(float x, float y){ return x*y; }
int main(){ int i; float a[8], b[8];
#pragma acc kernels copy(a[0:8],b[0:8])
#pragma acc loop independent
for(i=0;i<8;++i){ a[i] = dist(a[i], b[i]); }
return 0; }
";
        let (norm, ast, table) = pipeline(src);
        let region = table.by_id(0).unwrap();
        let scope = resolve_scope(region, &ast, &norm).unwrap();
        assert!(matches!(
            scope.get("dist").unwrap().kind,
            BindingKind::UserFunction
        ));
    }

    #[test]
    fn undeclared_identifier_is_e_unbound() {
        let src = "\
int main(){ int i; float a[8];
#pragma acc kernels copy(a[0:8])
#pragma acc loop independent
for(i=0;i<8;++i){ a[i] = q; }
return 0; }
";
        let (norm, ast, table) = pipeline(src);
        let region = table.by_id(0).unwrap();
        let err = resolve_scope(region, &ast, &norm).unwrap_err();
        assert_eq!(err.code, ErrorCode::EUnbound);
        assert!(err.message.contains("'q'"));
    }

    #[test]
    fn region_local_declarations_bind_locally() {
        let src = "\
int main(){ int i; float a[8];
#pragma acc kernels copy(a[0:8])
#pragma acc loop independent
for(i=0;i<8;++i){ float t = 1.0f; a[i] = t; }
return 0; }
";
        let (norm, ast, table) = pipeline(src);
        let region = table.by_id(0).unwrap();
        let scope = resolve_scope(region, &ast, &norm).unwrap();
        let b = scope.get("t").unwrap();
        assert_eq!(b.origin, BindingOrigin::RegionLocal);
    }

    #[test]
    fn transfer_sizes() {
        use crate::cfront::Extent;
        let fixed = VarDecl {
            name: "t".into(),
            ty: CType::new(BaseType::Float),
            extents: vec![Extent::Lit(10)],
            fixed_size: true,
            loc: Location::default(),
        };
        let cv = ClauseVar {
            name: "t".into(),
            bounds: None,
            loc: Location::default(),
        };
        let t = infer_transfer_size(&fixed, &cv).unwrap();
        assert_eq!(t.transfer_bytes(), "40");

        let ptr = VarDecl {
            name: "p".into(),
            ty: CType::pointer(BaseType::Float, 1),
            extents: vec![],
            fixed_size: false,
            loc: Location::default(),
        };
        assert!(infer_transfer_size(&ptr, &cv).is_none(), "unknown size");

        let bounded = ClauseVar {
            name: "p".into(),
            bounds: Some(SubarrayBounds {
                start: "0".into(),
                count: "LEN*LEN".into(),
            }),
            loc: Location::default(),
        };
        let t = infer_transfer_size(&ptr, &bounded).unwrap();
        assert_eq!(t.transfer_bytes(), "(LEN*LEN)*4");
        assert_eq!(t.alloc_bytes(), "(LEN*LEN)*4");

        let offset = ClauseVar {
            name: "p".into(),
            bounds: Some(SubarrayBounds {
                start: "100".into(),
                count: "50".into(),
            }),
            loc: Location::default(),
        };
        let t = infer_transfer_size(&ptr, &offset).unwrap();
        assert_eq!(t.transfer_bytes(), "200");
        assert_eq!(t.offset_bytes(), "400");
        assert_eq!(t.alloc_bytes(), "600");
    }
}
