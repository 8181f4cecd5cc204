//! Kernel outlining: turn a kernels region into a device procedure spec with
//! loop indices rewritten to global-thread-index definitions.

use crate::accvalidate::{ClauseKind, ReductionOp};
use crate::cfront::{tokenize, CType, Token, TokenKind};
use crate::diag::{Diagnostic, ErrorCode, Location};
use crate::irdoc::{IrTag, Region};

use super::geometry::{analyze_nest, LaunchGeometry};
use super::scope::{BindingKind, BindingOrigin, ScopeBindings, BUILTIN_DEVICE_FNS, HOST_ONLY_FNS};

#[derive(Debug, Clone, PartialEq)]
pub struct KernelParam {
    pub name: String,
    /// Element type for arrays (rendered as `ty*`), value type for scalars.
    pub ty: CType,
    pub is_array: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionSpec {
    pub var: String,
    pub ty: CType,
    pub op: ReductionOp,
    /// Device array of one partial per block.
    pub partials: String,
}

/// One loop index rewritten as `name = lower + step * global_id(dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexDef {
    pub ty: String,
    pub name: String,
    pub lower: String,
    pub step: i64,
    pub dim: u8,
}

#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub name: String,
    pub region_id: u32,
    pub params: Vec<KernelParam>,
    pub index_defs: Vec<IndexDef>,
    /// Conjunction of the parallel loops' original bound conditions; absent
    /// for single-thread kernels.
    pub guard: Option<String>,
    pub body: String,
    pub private_decls: Vec<String>,
    pub reductions: Vec<ReductionSpec>,
    pub geometry: LaunchGeometry,
    /// Verbatim definition texts hoisted for device compilation.
    pub hoisted: Vec<String>,
}

/// Build the kernel for a kernels region: parallel loop headers are removed,
/// their indices become thread-index definitions behind a bound guard,
/// private variables are redeclared locally, and parameters are every
/// referenced array plus every scalar the body or guard reads.
pub fn construct_kernel(
    region: &Region,
    scope: &ScopeBindings,
    geometry: &LaunchGeometry,
) -> Result<KernelSpec, Diagnostic> {
    let nest = analyze_nest(region);
    let body = render_kernel_body(&nest.inner_body);
    let body_tokens = tokenize(&body).map_err(|mut d| {
        d.code = ErrorCode::EInternal;
        d
    })?;

    check_body_constructs(&body_tokens, scope, region.directive.loc)?;

    // Index definitions and the guard, one per geometry dimension.
    let mut index_defs = Vec::new();
    let mut conds = Vec::new();
    for (dim, lp) in geometry.loops.iter().enumerate() {
        let ty = match lp.decl_ty.clone() {
            Some(t) => t,
            None => scope
                .get(&lp.index)
                .and_then(|b| b.scalar_type())
                .map(|t| t.spelling())
                .unwrap_or_else(|| "int".to_string()),
        };
        index_defs.push(IndexDef {
            ty,
            name: lp.index.clone(),
            lower: lp.lower.clone(),
            step: lp.step,
            dim: dim as u8,
        });
        conds.push(format!("({})", lp.cond));
    }
    let guard = if conds.is_empty() {
        None
    } else {
        Some(conds.join(" && "))
    };

    // Reductions and privates come from the nest's loop directives.
    let mut reductions = Vec::new();
    let mut private_decls = Vec::new();
    let mut private_names = Vec::new();
    for d in &nest.directives {
        for c in &d.clauses {
            match c.kind {
                ClauseKind::Reduction => {
                    let op = c.reduction_op.ok_or_else(|| {
                        Diagnostic::error(ErrorCode::EInternal, c.loc, "reduction without operator")
                    })?;
                    if !matches!(
                        op,
                        ReductionOp::Add | ReductionOp::Mul | ReductionOp::Max | ReductionOp::Min
                    ) {
                        return Err(Diagnostic::error(
                            ErrorCode::ERedOp,
                            c.loc,
                            "unsupported reduction operator",
                        ));
                    }
                    for v in &c.vars {
                        let ty = scalar_type_of(scope, &v.name, v.loc)?;
                        reductions.push(ReductionSpec {
                            var: v.name.clone(),
                            ty,
                            op,
                            partials: format!("{}__partials", v.name),
                        });
                    }
                }
                ClauseKind::Private => {
                    for v in &c.vars {
                        let ty = scalar_type_of(scope, &v.name, v.loc)?;
                        private_decls.push(format!("{} {};", ty.spelling(), v.name));
                        private_names.push(v.name.clone());
                    }
                }
                _ => {}
            }
        }
    }

    let params = select_params(
        scope,
        geometry,
        &body_tokens,
        &reductions,
        &private_names,
    )?;

    Ok(KernelSpec {
        name: format!("__accb_kernel_{}", region.id),
        region_id: region.id,
        params,
        index_defs,
        guard,
        body,
        private_decls,
        reductions,
        geometry: geometry.clone(),
        hoisted: Vec::new(),
    })
}

/// Render region-body tags to C text, dropping directive lines (their
/// semantics are already applied) and keeping loops and code verbatim.
fn render_kernel_body(tags: &[IrTag]) -> String {
    fn walk(tags: &[IrTag], out: &mut String) {
        for tag in tags {
            match tag {
                IrTag::CCode(text) => out.push_str(text),
                IrTag::Pragma { children, .. } => walk(children, out),
                IrTag::ForLoop { header, body, .. } => {
                    out.push_str(&format!(
                        "for({};{};{})",
                        header.init, header.cond, header.step
                    ));
                    out.push('{');
                    walk(body, out);
                    out.push('}');
                }
            }
        }
    }
    let mut out = String::new();
    walk(tags, &mut out);
    out.trim().to_string()
}

/// Reject constructs that cannot run inside a kernel.
fn check_body_constructs(
    tokens: &[Token],
    scope: &ScopeBindings,
    region_loc: Location,
) -> Result<(), Diagnostic> {
    let sig: Vec<&Token> = tokens.iter().filter(|t| t.is_significant()).collect();
    for (i, t) in sig.iter().enumerate() {
        if t.is_kw("switch") {
            return Err(Diagnostic::error(
                ErrorCode::EUnsupported,
                t.loc_or(region_loc),
                "'switch' is not supported inside accelerator regions",
            ));
        }
        if t.kind == TokenKind::Identifier
            && sig.get(i + 1).is_some_and(|n| n.is_punct("("))
            && !(i > 0 && (sig[i - 1].is_punct(".") || sig[i - 1].is_punct("->")))
        {
            let name = t.text.as_str();
            let bound_fn = matches!(
                scope.get(name).map(|b| &b.kind),
                Some(BindingKind::UserFunction)
            );
            if bound_fn || BUILTIN_DEVICE_FNS.contains(&name) {
                continue;
            }
            if HOST_ONLY_FNS.contains(&name) {
                return Err(Diagnostic::error(
                    ErrorCode::EUnsupported,
                    t.loc_or(region_loc),
                    format!("input/output or host-only call '{name}' inside a kernels region"),
                ));
            }
            return Err(Diagnostic::error(
                ErrorCode::EUnsupported,
                t.loc_or(region_loc),
                format!("call to unbound function '{name}' inside a kernels region"),
            ));
        }
    }
    Ok(())
}

trait LocOr {
    fn loc_or(&self, fallback: Location) -> Location;
}

impl LocOr for Token {
    fn loc_or(&self, fallback: Location) -> Location {
        if self.loc.line == 0 {
            fallback
        } else {
            self.loc
        }
    }
}

fn scalar_type_of(
    scope: &ScopeBindings,
    name: &str,
    loc: Location,
) -> Result<CType, Diagnostic> {
    match scope.get(name).map(|b| &b.kind) {
        Some(BindingKind::Scalar { ty }) | Some(BindingKind::LoopIndex { ty }) => Ok(ty.clone()),
        Some(_) => Err(Diagnostic::error(
            ErrorCode::ERedType,
            loc,
            format!("'{name}' must be a scalar declared outside the region"),
        )),
        None => Err(Diagnostic::error(
            ErrorCode::EUnbound,
            loc,
            format!("'{name}' is not declared"),
        )),
    }
}

/// Parameter selection: every referenced device array (in data-environment
/// order), then every scalar the guard or body reads (first-appearance
/// order). Loop indices, privates, reduction variables, and region-local
/// declarations stay internal.
fn select_params(
    scope: &ScopeBindings,
    geometry: &LaunchGeometry,
    body_tokens: &[Token],
    reductions: &[ReductionSpec],
    private_names: &[String],
) -> Result<Vec<KernelParam>, Diagnostic> {
    // Identifier mentions: guard expressions first, then the body.
    let mut mentioned: Vec<String> = Vec::new();
    let mut mention = |name: &str| {
        if !mentioned.iter().any(|m| m == name) {
            mentioned.push(name.to_string());
        }
    };
    for lp in &geometry.loops {
        for tok in tokenize(&lp.cond).unwrap_or_default() {
            if tok.kind == TokenKind::Identifier {
                mention(&tok.text);
            }
        }
        for tok in tokenize(&lp.lower).unwrap_or_default() {
            if tok.kind == TokenKind::Identifier {
                mention(&tok.text);
            }
        }
    }
    let sig: Vec<&Token> = body_tokens.iter().filter(|t| t.is_significant()).collect();
    for (i, t) in sig.iter().enumerate() {
        if t.kind == TokenKind::Identifier
            && !(i > 0 && (sig[i - 1].is_punct(".") || sig[i - 1].is_punct("->")))
        {
            mention(&t.text);
        }
    }

    let mut params = Vec::new();
    // Arrays first, ordered by the data environment via scope's clause
    // bookkeeping: stable order = first appearance among mentions.
    for name in &mentioned {
        let Some(binding) = scope.get(name) else { continue };
        if binding.origin == BindingOrigin::RegionLocal {
            continue;
        }
        if let BindingKind::Array { elem, clause, .. } = &binding.kind {
            if clause.is_none() {
                return Err(Diagnostic::error(
                    ErrorCode::ENoClause,
                    binding.loc,
                    format!("array '{name}' is referenced in the region but named in no data clause"),
                ));
            }
            params.push(KernelParam {
                name: name.clone(),
                ty: elem.clone(),
                is_array: true,
            });
        }
    }
    for name in &mentioned {
        let Some(binding) = scope.get(name) else { continue };
        if binding.origin == BindingOrigin::RegionLocal {
            continue;
        }
        if reductions.iter().any(|r| &r.var == name)
            || private_names.iter().any(|p| p == name)
            || geometry.loops.iter().any(|l| &l.index == name)
        {
            continue;
        }
        if let BindingKind::Scalar { ty } = &binding.kind {
            params.push(KernelParam {
                name: name.clone(),
                ty: ty.clone(),
                is_array: false,
            });
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfront::BaseType;
    use super::super::geometry::map_parallelism;
    use super::super::scope::{resolve_scope, tests::pipeline};

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
    fn listing_kernel_spec() {
        let (norm, ast, table) = pipeline(LISTING);
        let region = table.by_id(1).unwrap();
        let scope = resolve_scope(region, &ast, &norm).unwrap();
        let geom = map_parallelism(region).unwrap();
        let spec = construct_kernel(region, &scope, &geom).unwrap();

        assert_eq!(spec.name, "__accb_kernel_1");
        let names: Vec<&str> = spec.params.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, vec!["a", "b", "c", "LEN"]);
        assert!(spec.params[0].is_array);
        assert_eq!(spec.params[3].ty, CType::new(BaseType::Int));

        assert_eq!(spec.index_defs.len(), 2);
        assert_eq!(spec.index_defs[0].name, "i");
        assert_eq!(spec.index_defs[0].dim, 0);
        assert_eq!(spec.guard.as_deref(), Some("(i<LEN) && (j<LEN)"));
        assert!(spec.body.contains("float sum=0;"));
        assert!(spec.body.contains("sum += a[i*LEN+l]*b[l*LEN+j];"));
        assert!(spec.body.contains("c[i*LEN+j]=sum;"));
        assert!(!spec.body.contains("#pragma"));
    }

    #[test]
    fn private_clause_declares_locally_not_parameter() {
        let src = "\
int main(){ int i,n; float tmp; float a[64];
#pragma acc kernels copy(a[0:n])
#pragma acc loop independent private(tmp)
for(i=0;i<n;++i){ tmp = a[i]; a[i] = tmp*2.0f; }
return 0; }
";
        let (norm, ast, table) = pipeline(src);
        let region = table.by_id(0).unwrap();
        let scope = resolve_scope(region, &ast, &norm).unwrap();
        let geom = map_parallelism(region).unwrap();
        let spec = construct_kernel(region, &scope, &geom).unwrap();
        assert!(spec.private_decls.contains(&"float tmp;".to_string()));
        assert!(!spec.params.iter().any(|p| p.name == "tmp"));
    }

    #[test]
    fn empty_loop_body_is_legal() {
        let src = "\
int main(){ int i,n; float a[4];
#pragma acc kernels copy(a[0:n])
#pragma acc loop independent
for(i=0;i<n;++i){ }
return 0; }
";
        let (norm, ast, table) = pipeline(src);
        let region = table.by_id(0).unwrap();
        let scope = resolve_scope(region, &ast, &norm).unwrap();
        let geom = map_parallelism(region).unwrap();
        let spec = construct_kernel(region, &scope, &geom).unwrap();
        assert!(spec.body.is_empty());
        assert_eq!(spec.guard.as_deref(), Some("(i<n)"));
    }

    #[test]
    fn io_call_in_region_is_e_unsupported() {
        let src = "\
int main(){ int i,n; float a[4];
#pragma acc kernels copy(a[0:n])
#pragma acc loop independent
for(i=0;i<n;++i){ printf(\"%d\", i); }
return 0; }
";
        let (norm, ast, table) = pipeline(src);
        let region = table.by_id(0).unwrap();
        let scope = resolve_scope(region, &ast, &norm).unwrap();
        let geom = map_parallelism(region).unwrap();
        let err = construct_kernel(region, &scope, &geom).unwrap_err();
        assert_eq!(err.code, ErrorCode::EUnsupported);
        assert!(err.message.contains("printf"));
    }

    #[test]
    fn unbound_call_is_e_unsupported() {
        let src = "\
int main(){ int i,n; float a[4];
#pragma acc kernels copy(a[0:n])
#pragma acc loop independent
for(i=0;i<n;++i){ a[i] = mystery(i); }
return 0; }
";
        let (norm, ast, table) = pipeline(src);
        let region = table.by_id(0).unwrap();
        let scope = resolve_scope(region, &ast, &norm).unwrap();
        let geom = map_parallelism(region).unwrap();
        let err = construct_kernel(region, &scope, &geom).unwrap_err();
        assert_eq!(err.code, ErrorCode::EUnsupported);
        assert!(err.message.contains("mystery"));
    }

    #[test]
    fn array_without_clause_is_e_noclause() {
        let src = "\
int main(){ int i,n; float a[4]; float b[4];
#pragma acc kernels copy(a[0:4])
#pragma acc loop independent
for(i=0;i<4;++i){ a[i] = b[i]; }
return 0; }
";
        let (norm, ast, table) = pipeline(src);
        let region = table.by_id(0).unwrap();
        let scope = resolve_scope(region, &ast, &norm).unwrap();
        let geom = map_parallelism(region).unwrap();
        let err = construct_kernel(region, &scope, &geom).unwrap_err();
        assert_eq!(err.code, ErrorCode::ENoClause);
        assert!(err.message.contains("'b'"));
    }

    #[test]
    fn closure_property_params_cover_free_identifiers() {
        let (norm, ast, table) = pipeline(LISTING);
        let region = table.by_id(1).unwrap();
        let scope = resolve_scope(region, &ast, &norm).unwrap();
        let geom = map_parallelism(region).unwrap();
        let spec = construct_kernel(region, &scope, &geom).unwrap();

        let mut covered: Vec<String> = spec.params.iter().map(|p| p.name.clone()).collect();
        covered.extend(spec.index_defs.iter().map(|d| d.name.clone()));
        covered.extend(spec.reductions.iter().map(|r| r.var.clone()));
        // Region-local declarations.
        let local_decls = ["sum", "l"];
        let toks = tokenize(&spec.body).unwrap();
        let sig: Vec<&Token> = toks.iter().filter(|t| t.is_significant()).collect();
        for (i, t) in sig.iter().enumerate() {
            if t.kind != TokenKind::Identifier {
                continue;
            }
            if i > 0 && (sig[i - 1].is_punct(".") || sig[i - 1].is_punct("->")) {
                continue;
            }
            if sig.get(i + 1).is_some_and(|n| n.is_punct("(")) {
                continue;
            }
            let name = t.text.as_str();
            assert!(
                covered.iter().any(|c| c == name) || local_decls.contains(&name),
                "free identifier '{name}' not covered"
            );
        }
    }
}
