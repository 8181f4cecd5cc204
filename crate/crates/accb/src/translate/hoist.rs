//! Hoisting of user-defined functions and types referenced by a region, in
//! dependency order (types before functions, callees before callers).

use std::collections::BTreeSet;

use crate::cfront::{Ast, NormalizedSource};
use crate::diag::{Diagnostic, ErrorCode};
use crate::irdoc::Region;

use super::scope::{BindingKind, ScopeBindings};

#[derive(Debug, Clone, PartialEq)]
pub struct HoistedDecl {
    pub name: String,
    /// Verbatim definition text from the source.
    pub text: String,
    pub is_type: bool,
    /// Prototype (functions only), for targets that keep one shared
    /// definition in the host part.
    pub prototype: Option<String>,
}

/// Collect the transitive closure of user functions/types the region uses,
/// ordered types-first and dependency-first within each class.
pub fn hoist_declarations(
    region: &Region,
    scope: &ScopeBindings,
    ast: &Ast,
    src: &NormalizedSource,
) -> Result<Vec<HoistedDecl>, Diagnostic> {
    let mut fn_seeds: Vec<String> = Vec::new();
    let mut ty_seeds: Vec<String> = Vec::new();
    for (name, binding) in scope.iter() {
        match binding.kind {
            BindingKind::UserFunction => fn_seeds.push(name.clone()),
            BindingKind::UserType => ty_seeds.push(name.clone()),
            _ => {}
        }
    }
    let _ = region;

    // Transitive closure over calls and type uses.
    let mut funcs: Vec<String> = Vec::new();
    let mut types: BTreeSet<String> = ty_seeds.iter().cloned().collect();
    let mut work = fn_seeds.clone();
    while let Some(name) = work.pop() {
        if funcs.contains(&name) {
            continue;
        }
        let Some(f) = ast.function(&name) else { continue };
        funcs.push(name.clone());
        for callee in &f.calls {
            if ast.function(callee).is_some() && !funcs.contains(callee) {
                work.push(callee.clone());
            }
        }
        for ty in &f.type_uses {
            if ast.typedef(ty).is_some() {
                types.insert(ty.clone());
            }
        }
    }
    // Close over type-to-type dependencies.
    loop {
        let mut added = false;
        for name in types.clone() {
            if let Some(td) = ast.typedef(&name) {
                for u in &td.uses {
                    if ast.typedef(u).is_some() && types.insert(u.clone()) {
                        added = true;
                    }
                }
            }
        }
        if !added {
            break;
        }
    }

    check_no_recursion(&funcs, ast)?;

    let mut out = Vec::new();
    for name in order_types(&types, ast) {
        let td = ast.typedef(&name).unwrap();
        out.push(HoistedDecl {
            name: name.clone(),
            text: src.render(td.span).trim().to_string(),
            is_type: true,
            prototype: None,
        });
    }
    for name in order_functions(&funcs, ast) {
        let f = ast.function(&name).unwrap();
        let params: Vec<String> = f.params.iter().map(|p| p.ty.spelling()).collect();
        out.push(HoistedDecl {
            name: name.clone(),
            text: src.render(f.span).trim().to_string(),
            is_type: false,
            prototype: Some(format!(
                "{} {}({});",
                f.ret.spelling(),
                f.name,
                params.join(", ")
            )),
        });
    }
    Ok(out)
}

fn check_no_recursion(funcs: &[String], ast: &Ast) -> Result<(), Diagnostic> {
    // DFS over call edges restricted to hoisted functions.
    fn visit(
        name: &str,
        ast: &Ast,
        funcs: &[String],
        path: &mut Vec<String>,
        done: &mut BTreeSet<String>,
    ) -> Result<(), Diagnostic> {
        if done.contains(name) {
            return Ok(());
        }
        if let Some(pos) = path.iter().position(|p| p == name) {
            let cycle = path[pos..].join(" -> ");
            let f = ast.function(name).unwrap();
            return Err(Diagnostic::error(
                ErrorCode::ERecurse,
                f.loc,
                format!("recursive function cannot run in a kernel: {cycle} -> {name}"),
            ));
        }
        let Some(f) = ast.function(name) else {
            return Ok(());
        };
        path.push(name.to_string());
        for callee in &f.calls {
            if funcs.iter().any(|x| x == callee) || callee == name {
                visit(callee, ast, funcs, path, done)?;
            }
        }
        path.pop();
        done.insert(name.to_string());
        Ok(())
    }
    let mut done = BTreeSet::new();
    for f in funcs {
        visit(f, ast, funcs, &mut Vec::new(), &mut done)?;
    }
    Ok(())
}

/// Types in dependency order (used-by-others first), stable by source order.
fn order_types(types: &BTreeSet<String>, ast: &Ast) -> Vec<String> {
    let mut names: Vec<String> = ast
        .typedefs()
        .filter(|t| types.contains(&t.name))
        .map(|t| t.name.clone())
        .collect();
    // Source order already places dependencies first in well-formed C, but
    // re-sort defensively using recorded uses.
    let mut out: Vec<String> = Vec::new();
    while !names.is_empty() {
        let mut progressed = false;
        let mut i = 0;
        while i < names.len() {
            let deps_done = ast
                .typedef(&names[i])
                .map(|t| {
                    t.uses
                        .iter()
                        .filter(|u| types.contains(*u) && **u != names[i])
                        .all(|u| out.contains(u))
                })
                .unwrap_or(true);
            if deps_done {
                out.push(names.remove(i));
                progressed = true;
            } else {
                i += 1;
            }
        }
        if !progressed {
            // Cyclic type references: keep source order.
            out.extend(names.drain(..));
        }
    }
    out
}

/// Functions in callee-before-caller order, stable by source order.
fn order_functions(funcs: &[String], ast: &Ast) -> Vec<String> {
    let mut names: Vec<String> = ast
        .functions()
        .filter(|f| funcs.iter().any(|x| *x == f.name))
        .map(|f| f.name.clone())
        .collect();
    let mut out: Vec<String> = Vec::new();
    while !names.is_empty() {
        let mut progressed = false;
        let mut i = 0;
        while i < names.len() {
            let deps_done = ast
                .function(&names[i])
                .map(|f| {
                    f.calls
                        .iter()
                        .filter(|c| funcs.iter().any(|x| x == *c) && **c != names[i])
                        .all(|c| out.contains(c))
                })
                .unwrap_or(true);
            if deps_done {
                out.push(names.remove(i));
                progressed = true;
            } else {
                i += 1;
            }
        }
        if !progressed {
            out.extend(names.drain(..));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::translate::scope::tests::pipeline;
    use crate::translate::scope::resolve_scope;

    #[test]
    fn hoists_called_function_verbatim() {
        let src = "\
static float sq(float x){ return x*x; }
int main(){ int i; float a[8];
#pragma acc kernels copy(a[0:8])
#pragma acc loop independent
for(i=0;i<8;++i){ a[i] = sq(a[i]); }
return 0; }
";
        let (norm, ast, table) = pipeline(src);
        let region = table.by_id(0).unwrap();
        let scope = resolve_scope(region, &ast, &norm).unwrap();
        let decls = hoist_declarations(region, &scope, &ast, &norm).unwrap();
        assert_eq!(decls.len(), 1);
        assert_eq!(decls[0].name, "sq");
        assert_eq!(decls[0].text, "static float sq(float x){ return x*x; }");
        assert_eq!(decls[0].prototype.as_deref(), Some("float sq(float);"));
    }

    #[test]
    fn builtin_arithmetic_hoists_nothing() {
        let src = "\
int main(){ int i; float a[8];
#pragma acc kernels copy(a[0:8])
#pragma acc loop independent
for(i=0;i<8;++i){ a[i] = a[i]*2.0f + 1.0f; }
return 0; }
";
        let (norm, ast, table) = pipeline(src);
        let region = table.by_id(0).unwrap();
        let scope = resolve_scope(region, &ast, &norm).unwrap();
        let decls = hoist_declarations(region, &scope, &ast, &norm).unwrap();
        assert!(decls.is_empty());
    }

    #[test]
    fn type_precedes_function_that_uses_it() {
        let src = "\
typedef struct { float x; float y; } point;
static float dist2(point p, point q){ float dx = p.x-q.x; float dy = p.y-q.y; return dx*dx+dy*dy; }
int main(){ int i; point ps[8]; float d[8];
#pragma acc kernels copyin(ps[0:8]) copyout(d[0:8])
#pragma acc loop independent
for(i=0;i<8;++i){ d[i] = dist2(ps[i], ps[0]); }
return 0; }
";
        let (norm, ast, table) = pipeline(src);
        let region = table.by_id(0).unwrap();
        let scope = resolve_scope(region, &ast, &norm).unwrap();
        let decls = hoist_declarations(region, &scope, &ast, &norm).unwrap();
        let names: Vec<&str> = decls.iter().map(|d| d.name.as_str()).collect();
        // Expected order verified against brute-force topological sorts of
        // the two-node dependency graph: the type must precede its user.
        let expected = {
            let nodes = ["point", "dist2"];
            let edges = [("point", "dist2")];
            let mut valid = Vec::new();
            for perm in [["point", "dist2"], ["dist2", "point"]] {
                let ok = edges.iter().all(|(a, b)| {
                    perm.iter().position(|n| n == a) < perm.iter().position(|n| n == b)
                });
                if ok {
                    valid.push(perm);
                }
            }
            assert_eq!(valid.len(), 1);
            let _ = nodes;
            valid[0]
        };
        assert_eq!(names, expected);
        assert!(decls[0].is_type);
    }

    #[test]
    fn transitive_callee_is_hoisted_before_caller() {
        let src = "\
static float sq(float x){ return x*x; }
static float quad(float x){ return sq(sq(x)); }
int main(){ int i; float a[8];
#pragma acc kernels copy(a[0:8])
#pragma acc loop independent
for(i=0;i<8;++i){ a[i] = quad(a[i]); }
return 0; }
";
        let (norm, ast, table) = pipeline(src);
        let region = table.by_id(0).unwrap();
        let scope = resolve_scope(region, &ast, &norm).unwrap();
        let decls = hoist_declarations(region, &scope, &ast, &norm).unwrap();
        let names: Vec<&str> = decls.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, vec!["sq", "quad"]);
    }

    #[test]
    fn direct_recursion_is_e_recurse() {
        let src = "\
static int fact(int n){ if (n <= 1) { return 1; } return n * fact(n-1); }
int main(){ int i; int a[8];
#pragma acc kernels copy(a[0:8])
#pragma acc loop independent
for(i=0;i<8;++i){ a[i] = fact(i); }
return 0; }
";
        let (norm, ast, table) = pipeline(src);
        let region = table.by_id(0).unwrap();
        let scope = resolve_scope(region, &ast, &norm).unwrap();
        let err = hoist_declarations(region, &scope, &ast, &norm).unwrap_err();
        assert_eq!(err.code, ErrorCode::ERecurse);
    }

    #[test]
    fn mutual_recursion_is_e_recurse() {
        let src = "\
static int oddp(int n);
static int evenp(int n){ if (n == 0) { return 1; } return oddp(n-1); }
static int oddp(int n){ if (n == 0) { return 0; } return evenp(n-1); }
int main(){ int i; int a[8];
#pragma acc kernels copy(a[0:8])
#pragma acc loop independent
for(i=0;i<8;++i){ a[i] = evenp(i); }
return 0; }
";
        let (norm, ast, table) = pipeline(src);
        let region = table.by_id(0).unwrap();
        let scope = resolve_scope(region, &ast, &norm).unwrap();
        let err = hoist_declarations(region, &scope, &ast, &norm).unwrap_err();
        assert_eq!(err.code, ErrorCode::ERecurse);
    }
}
