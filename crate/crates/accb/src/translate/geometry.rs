//! Launch geometry: mapping independent loop nests onto grid/block shapes.

use crate::accvalidate::{ClauseKind, DirectiveNode};
use crate::cfront::ast::eval_const_expr;
use crate::cfront::tokenize;
use crate::diag::{Diagnostic, ErrorCode, Location};
use crate::irdoc::{IrTag, Region};

/// The four parallelism levels of the directive API.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccLevel {
    Gang,
    Worker,
    Vector,
    Thread,
}

/// Fixed correspondence from directive parallelism levels to device
/// execution concepts. Gang and worker carry no intra-kernel geometry here;
/// only vector influences block extents.
pub struct ParallelismMapping;

impl ParallelismMapping {
    pub const TABLE: [(AccLevel, &'static str); 4] = [
        (AccLevel::Gang, "kernel"),
        (AccLevel::Worker, "thread block"),
        (AccLevel::Vector, "warp-width grouping"),
        (AccLevel::Thread, "thread"),
    ];

    pub fn target_concept(level: AccLevel) -> &'static str {
        Self::TABLE
            .iter()
            .find(|(l, _)| *l == level)
            .map(|(_, c)| *c)
            .unwrap()
    }

    /// Whether a size argument on this level changes launch geometry.
    pub fn shapes_block(level: AccLevel) -> bool {
        matches!(level, AccLevel::Vector)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn as_str(&self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// One geometry-mapped loop dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelLoop {
    pub index: String,
    pub lower: String,
    pub upper: String,
    pub cmp: CmpOp,
    /// Signed compile-time constant step.
    pub step: i64,
    /// Original condition text, reused verbatim as the guard.
    pub cond: String,
    /// Type words of a loop-header declaration (`int` in `for(int i=...`),
    /// empty when the index is declared outside the loop.
    pub decl_ty: Option<String>,
    pub loc: Location,
}

impl ParallelLoop {
    /// Host-side iteration count expression (a C long expression; may be
    /// non-positive for zero-trip loops, which skip the launch).
    pub fn count_expr(&self) -> String {
        let l = &self.lower;
        let u = &self.upper;
        match self.cmp {
            CmpOp::Lt => format!("((long)({u}) - (long)({l}) + {s} - 1) / {s}", s = self.step),
            CmpOp::Le => format!("((long)({u}) - (long)({l}) + {s}) / {s}", s = self.step),
            CmpOp::Gt => format!(
                "((long)({l}) - (long)({u}) + {s} - 1) / {s}",
                s = -self.step
            ),
            CmpOp::Ge => format!("((long)({l}) - (long)({u}) + {s}) / {s}", s = -self.step),
        }
    }
}

/// Grid/block shape for one kernel launch. Dimension 0 is the outer loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LaunchGeometry {
    pub dims: u8,
    /// Compile-time block extent per dimension; product <= 1024.
    pub block: Vec<u32>,
    /// Geometry-mapped loops, one per dimension; empty for a single-thread
    /// region.
    pub loops: Vec<ParallelLoop>,
}

impl LaunchGeometry {
    pub fn single_thread() -> Self {
        LaunchGeometry {
            dims: 1,
            block: vec![1],
            loops: Vec::new(),
        }
    }

    pub fn block_threads(&self) -> u32 {
        self.block.iter().product()
    }

    /// Grid extent expression given a variable holding the iteration count.
    pub fn grid_expr(&self, dim: usize, count_var: &str) -> String {
        let b = self.block[dim];
        format!("({count_var} + {b} - 1) / {b}")
    }
}

/// The perfect chain of independent loops a region maps onto geometry, plus
/// the loop directives along it and the innermost loop body.
#[derive(Debug, Default)]
pub struct NestInfo<'a> {
    pub loops: Vec<ParallelLoop>,
    pub directives: Vec<&'a DirectiveNode>,
    /// Body of the innermost geometry-mapped loop; the whole region body
    /// when no loop maps.
    pub inner_body: Vec<IrTag>,
    pub body_is_whole_region: bool,
}

/// Identify the geometry nest of a kernels region: the region body must be a
/// sole `loop independent` directive on a for statement, optionally
/// containing exactly one more as its sole statement (depth 2). Anything
/// else runs inside the kernel as-is.
pub fn analyze_nest(region: &Region) -> NestInfo<'_> {
    let mut info = NestInfo {
        inner_body: region.body.clone(),
        body_is_whole_region: true,
        ..Default::default()
    };
    let mut level: &[IrTag] = &region.body;
    loop {
        if info.loops.len() == 2 {
            break;
        }
        let Some((directive, for_header, for_body)) = sole_independent_loop(level) else {
            break;
        };
        let Ok(parsed) = parse_parallel_header(for_header) else {
            break;
        };
        info.loops.push(parsed);
        info.directives.push(directive);
        info.inner_body = for_body.to_vec();
        info.body_is_whole_region = false;
        level = for_body;
    }
    info
}

/// The sole significant statement of `tags`, when it is an
/// independent-marked loop directive wrapping a for.
fn sole_independent_loop<'a>(
    tags: &'a [IrTag],
) -> Option<(&'a DirectiveNode, &'a crate::irdoc::ForHeader, &'a [IrTag])> {
    let mut found = None;
    for tag in tags {
        match tag {
            IrTag::CCode(text) => {
                if !is_trivia(text) {
                    return None;
                }
            }
            IrTag::Pragma {
                directive,
                children,
            } => {
                if found.is_some() || directive.kind != crate::accvalidate::DirectiveKind::Loop {
                    return None;
                }
                if !directive.has_clause(ClauseKind::Independent) {
                    return None;
                }
                let inner = children.iter().find_map(|c| match c {
                    IrTag::ForLoop { header, body, .. } => Some((header, body.as_slice())),
                    _ => None,
                })?;
                found = Some((directive, inner.0, inner.1));
            }
            IrTag::ForLoop { .. } => return None,
        }
    }
    found
}

fn is_trivia(text: &str) -> bool {
    // Whitespace and comments only.
    match tokenize(text) {
        Ok(toks) => toks.iter().all(|t| !t.is_significant()),
        Err(_) => false,
    }
}

/// Parse `index = lower`, `index < upper`, `++index`-style header segments.
fn parse_parallel_header(
    header: &crate::irdoc::ForHeader,
) -> Result<ParallelLoop, Diagnostic> {
    let loc = header.loc;
    let unsupported = |what: &str| {
        Diagnostic::error(
            ErrorCode::EUnsupported,
            loc,
            format!("parallel loop {what} is not in the supported form"),
        )
    };

    // init: [type-words] index '=' lower
    let init_toks: Vec<(String, bool)> = tokenize(&header.init)
        .map_err(|_| unsupported("header"))?
        .into_iter()
        .filter(|t| t.is_significant())
        .map(|t| (t.text, t.kind == crate::cfront::TokenKind::Keyword))
        .collect();
    let eq_pos = init_toks
        .iter()
        .position(|(t, _)| t == "=")
        .ok_or_else(|| unsupported("initializer"))?;
    if eq_pos == 0 {
        return Err(unsupported("initializer"));
    }
    let index = init_toks[eq_pos - 1].0.clone();
    let decl_ty = if eq_pos > 1 {
        Some(
            init_toks[..eq_pos - 1]
                .iter()
                .map(|(t, _)| t.as_str())
                .collect::<Vec<_>>()
                .join(" "),
        )
    } else {
        None
    };
    let lower = init_toks[eq_pos + 1..]
        .iter()
        .map(|(t, _)| t.as_str())
        .collect::<Vec<_>>()
        .join("");
    if lower.is_empty() {
        return Err(unsupported("initializer"));
    }

    // cond: index OP upper
    let cond = header.cond.trim().to_string();
    let (cmp, op_str) = if let Some(p) = cond.find("<=") {
        (CmpOp::Le, (p, 2))
    } else if let Some(p) = cond.find(">=") {
        (CmpOp::Ge, (p, 2))
    } else if let Some(p) = cond.find('<') {
        (CmpOp::Lt, (p, 1))
    } else if let Some(p) = cond.find('>') {
        (CmpOp::Gt, (p, 1))
    } else {
        return Err(unsupported("condition"));
    };
    let (lhs, rest) = cond.split_at(op_str.0);
    if lhs.trim() != index {
        return Err(unsupported("condition"));
    }
    let upper = rest[op_str.1..].trim().to_string();
    if upper.is_empty() {
        return Err(unsupported("condition"));
    }

    let step = parse_step(&header.step, &index).ok_or_else(|| {
        Diagnostic::error(
            ErrorCode::EStep,
            loc,
            format!("step of parallel loop over '{index}' must be a compile-time constant"),
        )
    })?;
    if step == 0 {
        return Err(Diagnostic::error(
            ErrorCode::EStep,
            loc,
            "parallel loop step must be nonzero",
        ));
    }
    let ascending = matches!(cmp, CmpOp::Lt | CmpOp::Le);
    if ascending != (step > 0) {
        return Err(Diagnostic::error(
            ErrorCode::EStep,
            loc,
            "parallel loop step direction disagrees with its bound",
        ));
    }

    Ok(ParallelLoop {
        index,
        lower,
        upper,
        cmp,
        step,
        cond,
        decl_ty,
        loc,
    })
}

fn parse_step(step_text: &str, index: &str) -> Option<i64> {
    let s = step_text.trim();
    if s == format!("++{index}") || s == format!("{index}++") {
        return Some(1);
    }
    if s == format!("--{index}") || s == format!("{index}--") {
        return Some(-1);
    }
    if let Some(rest) = s.strip_prefix(index) {
        let rest = rest.trim_start();
        if let Some(v) = rest.strip_prefix("+=") {
            return eval_const_expr(v);
        }
        if let Some(v) = rest.strip_prefix("-=") {
            return eval_const_expr(v).map(|v| -v);
        }
        if let Some(v) = rest.strip_prefix('=') {
            // index = index + k / index - k
            let v = v.trim_start();
            if let Some(r) = v.strip_prefix(index) {
                let r = r.trim_start();
                if let Some(k) = r.strip_prefix('+') {
                    return eval_const_expr(k);
                }
                if let Some(k) = r.strip_prefix('-') {
                    return eval_const_expr(k).map(|k| -k);
                }
            }
        }
    }
    None
}

/// Geometry of a kernels region: depth-1 independent nests map to 1-D
/// launches (block 256), depth-2 to 2-D (block 16x16); `vector(k)` on a
/// nest loop overrides that dimension's extent. A region with statements
/// but no mappable nest becomes a single-thread launch.
pub fn map_parallelism(region: &Region) -> Result<LaunchGeometry, Diagnostic> {
    let nest = analyze_nest(region);
    if nest.loops.is_empty() {
        if region_body_is_empty(region) {
            return Err(Diagnostic::error(
                ErrorCode::ENoLoop,
                region.directive.loc,
                "kernels region is empty: no parallelizable loop and no statements",
            ));
        }
        return Ok(LaunchGeometry::single_thread());
    }

    let dims = nest.loops.len() as u8;
    let default = if dims == 1 { 256 } else { 16 };
    let mut block = Vec::new();
    for (d, directive) in nest.directives.iter().enumerate() {
        let extent = match directive.clause(ClauseKind::Vector).and_then(|c| c.size.as_ref()) {
            Some(text) => {
                let v = eval_const_expr(text).ok_or_else(|| {
                    Diagnostic::error(
                        ErrorCode::EGeom,
                        directive.loc,
                        "vector size must be a compile-time integer constant",
                    )
                })?;
                if v <= 0 || v > 1024 {
                    return Err(Diagnostic::error(
                        ErrorCode::EGeom,
                        directive.loc,
                        format!("vector size {v} is outside 1..=1024"),
                    ));
                }
                v as u32
            }
            None => default,
        };
        let _ = d;
        block.push(extent);
    }
    let geom = LaunchGeometry {
        dims,
        block,
        loops: nest.loops,
    };
    if geom.block_threads() > 1024 {
        return Err(Diagnostic::error(
            ErrorCode::EGeom,
            region.directive.loc,
            format!(
                "block extents {:?} exceed 1024 threads per block",
                geom.block
            ),
        ));
    }
    Ok(geom)
}

fn region_body_is_empty(region: &Region) -> bool {
    fn tags_empty(tags: &[IrTag]) -> bool {
        tags.iter().all(|t| match t {
            IrTag::CCode(text) => is_trivia_or_braces(text),
            _ => false,
        })
    }
    fn is_trivia_or_braces(text: &str) -> bool {
        match tokenize(text) {
            Ok(toks) => toks
                .iter()
                .filter(|t| t.is_significant())
                .all(|t| t.is_punct("{") || t.is_punct("}") || t.is_punct(";")),
            Err(_) => false,
        }
    }
    tags_empty(&region.body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accvalidate::scan_directives;
    use crate::cfront::{normalize, parse_ast, tokenize as lex};
    use crate::irdoc::{build_intermediate, revert};

    fn region_of(src: &str, id: u32) -> Region {
        let norm = normalize(&lex(src).unwrap()).unwrap();
        let ast = parse_ast(&norm).unwrap();
        let (dirs, diags) = scan_directives(&norm);
        assert!(diags.is_empty(), "{diags:?}");
        let doc = build_intermediate(&norm, &dirs).unwrap();
        let (_, table) = revert(&doc, &ast).unwrap();
        table.by_id(id).unwrap().clone()
    }

    #[test]
    fn mapping_table_is_total() {
        assert_eq!(ParallelismMapping::target_concept(AccLevel::Gang), "kernel");
        assert_eq!(
            ParallelismMapping::target_concept(AccLevel::Worker),
            "thread block"
        );
        assert_eq!(
            ParallelismMapping::target_concept(AccLevel::Vector),
            "warp-width grouping"
        );
        assert_eq!(ParallelismMapping::target_concept(AccLevel::Thread), "thread");
        assert!(ParallelismMapping::shapes_block(AccLevel::Vector));
        assert!(!ParallelismMapping::shapes_block(AccLevel::Gang));
    }

    #[test]
    fn two_level_nest_is_2d_16x16() {
        let src = "\
int main(){ int i,j,LEN; float a[64];
#pragma acc kernels copy(a[0:LEN])
#pragma acc loop independent
for(i=0; i<LEN; ++i){
#pragma acc loop independent
for(j=0; j<LEN; ++j){ a[i]=1; }
}
return 0; }
";
        let geom = map_parallelism(&region_of(src, 0)).unwrap();
        assert_eq!(geom.dims, 2);
        assert_eq!(geom.block, vec![16, 16]);
        assert_eq!(geom.loops[0].index, "i");
        assert_eq!(geom.loops[1].index, "j");
        assert_eq!(geom.loops[0].cond, "i<LEN");
    }

    #[test]
    fn single_loop_is_1d_256() {
        let src = "\
int main(){ int i,n; float a[8];
#pragma acc kernels copy(a[0:n])
#pragma acc loop independent
for(i=0;i<n;++i){ a[i]=0; }
return 0; }
";
        let geom = map_parallelism(&region_of(src, 0)).unwrap();
        assert_eq!(geom.dims, 1);
        assert_eq!(geom.block, vec![256]);
        let n0 = geom.loops[0].count_expr();
        assert_eq!(n0, "((long)(n) - (long)(0) + 1 - 1) / 1");
        assert_eq!(geom.grid_expr(0, "__accb_n0"), "(__accb_n0 + 256 - 1) / 256");
    }

    #[test]
    fn vector_clause_sets_block_extent() {
        let src = "\
int main(){ int i,n; float a[8];
#pragma acc kernels copy(a[0:n])
#pragma acc loop vector(128) independent
for(i=0;i<n;++i){ a[i]=0; }
return 0; }
";
        let geom = map_parallelism(&region_of(src, 0)).unwrap();
        assert_eq!(geom.block, vec![128]);
    }

    #[test]
    fn non_constant_step_is_e_step() {
        let src = "\
int main(){ int i,n,s; float a[8];
#pragma acc kernels copy(a[0:n])
#pragma acc loop independent
for(i=0;i<n;i+=s){ a[i]=0; }
return 0; }
";
        let err = map_parallelism(&region_of(src, 0)).unwrap_err();
        assert_eq!(err.code, ErrorCode::EStep);
    }

    #[test]
    fn empty_region_is_e_noloop() {
        let src = "int main(){\n#pragma acc kernels\n{ }\nreturn 0; }";
        let err = map_parallelism(&region_of(src, 0)).unwrap_err();
        assert_eq!(err.code, ErrorCode::ENoLoop);
    }

    #[test]
    fn statements_without_nest_become_single_thread() {
        let src = "int main(){ int x[1];\n#pragma acc kernels copy(x[0:1])\n{ x[0]=41; x[0]=x[0]+1; }\nreturn 0; }";
        let geom = map_parallelism(&region_of(src, 0)).unwrap();
        assert_eq!(geom.block, vec![1]);
        assert!(geom.loops.is_empty());
    }

    #[test]
    fn deeper_nests_stop_at_two_dims() {
        let src = "\
int main(){ int i,j,k,n; float a[8];
#pragma acc kernels copy(a[0:n])
#pragma acc loop independent
for(i=0;i<n;++i){
#pragma acc loop independent
for(j=0;j<n;++j){
#pragma acc loop independent
for(k=0;k<n;++k){ a[i]=1; }
}
}
return 0; }
";
        let geom = map_parallelism(&region_of(src, 0)).unwrap();
        assert_eq!(geom.dims, 2);
    }

    #[test]
    fn step_two_and_le_bound_count_exprs() {
        let lp = ParallelLoop {
            index: "i".into(),
            lower: "1".into(),
            upper: "1024".into(),
            cmp: CmpOp::Le,
            step: 1,
            cond: "i<=1024".into(),
            decl_ty: None,
            loc: Location::default(),
        };
        // Evaluates to exactly 1024 iterations.
        assert_eq!(lp.count_expr(), "((long)(1024) - (long)(1) + 1) / 1");
        let lp2 = ParallelLoop {
            step: 2,
            cmp: CmpOp::Lt,
            cond: "i<9".into(),
            upper: "9".into(),
            lower: "0".into(),
            ..lp
        };
        assert_eq!(lp2.count_expr(), "((long)(9) - (long)(0) + 2 - 1) / 2");
    }

    #[test]
    fn descending_loop_supported() {
        let src = "\
int main(){ int i,n; float a[8];
#pragma acc kernels copy(a[0:n])
#pragma acc loop independent
for(i=n-1;i>=0;--i){ a[i]=0; }
return 0; }
";
        let geom = map_parallelism(&region_of(src, 0)).unwrap();
        assert_eq!(geom.loops[0].step, -1);
        assert_eq!(geom.loops[0].cmp, CmpOp::Ge);
        assert_eq!(
            geom.loops[0].count_expr(),
            "((long)(n-1) - (long)(0) + 1) / 1"
        );
    }

    #[test]
    fn block_budget_enforced() {
        let src = "\
int main(){ int i,j,n; float a[8];
#pragma acc kernels copy(a[0:n])
#pragma acc loop vector(64) independent
for(i=0;i<n;++i){
#pragma acc loop vector(64) independent
for(j=0;j<n;++j){ a[i]=1; }
}
return 0; }
";
        let err = map_parallelism(&region_of(src, 0)).unwrap_err();
        assert_eq!(err.code, ErrorCode::EGeom);
    }
}
