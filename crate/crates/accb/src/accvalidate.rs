//! Directive scanning and validation.
//!
//! `scan_directives` turns every `#pragma acc` line into a structured
//! [`DirectiveNode`] with parsed clauses and a resolved attached-statement
//! span. `validate` then checks clause legality per directive kind, nesting
//! restrictions, and declaration requirements. Non-acc pragmas pass through
//! untouched as ordinary code.

use crate::cfront::{statement_end, Ast, NormalizedSource, TokSpan, TokenKind};
use crate::diag::{Diagnostic, ErrorCode, Location, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectiveKind {
    Data,
    Kernels,
    Loop,
}

impl DirectiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            DirectiveKind::Data => "data",
            DirectiveKind::Kernels => "kernels",
            DirectiveKind::Loop => "loop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClauseKind {
    Copy,
    Copyin,
    Copyout,
    Create,
    Present,
    Independent,
    Private,
    Reduction,
    Gang,
    Worker,
    Vector,
}

impl ClauseKind {
    pub fn name(&self) -> &'static str {
        match self {
            ClauseKind::Copy => "copy",
            ClauseKind::Copyin => "copyin",
            ClauseKind::Copyout => "copyout",
            ClauseKind::Create => "create",
            ClauseKind::Present => "present",
            ClauseKind::Independent => "independent",
            ClauseKind::Private => "private",
            ClauseKind::Reduction => "reduction",
            ClauseKind::Gang => "gang",
            ClauseKind::Worker => "worker",
            ClauseKind::Vector => "vector",
        }
    }

    pub fn is_data_clause(&self) -> bool {
        matches!(
            self,
            ClauseKind::Copy
                | ClauseKind::Copyin
                | ClauseKind::Copyout
                | ClauseKind::Create
                | ClauseKind::Present
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionOp {
    Add,
    Mul,
    Max,
    Min,
}

impl ReductionOp {
    pub fn name(&self) -> &'static str {
        match self {
            ReductionOp::Add => "+",
            ReductionOp::Mul => "*",
            ReductionOp::Max => "max",
            ReductionOp::Min => "min",
        }
    }
}

/// `[start:count]` subarray selection on a data-clause variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubarrayBounds {
    pub start: String,
    pub count: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClauseVar {
    pub name: String,
    pub bounds: Option<SubarrayBounds>,
    pub loc: Location,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub kind: ClauseKind,
    pub vars: Vec<ClauseVar>,
    /// Present exactly on reduction clauses.
    pub reduction_op: Option<ReductionOp>,
    /// Argument of gang/worker/vector, when given.
    pub size: Option<String>,
    pub loc: Location,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectiveNode {
    pub kind: DirectiveKind,
    pub clauses: Vec<Clause>,
    pub loc: Location,
    /// Index of the pragma-line token in the normalized stream.
    pub pragma_tok: usize,
    /// Attached statement: token span starting after the pragma line.
    pub attached: TokSpan,
    /// Verbatim pragma line.
    pub raw: String,
}

impl DirectiveNode {
    pub fn clause(&self, kind: ClauseKind) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.kind == kind)
    }

    pub fn has_clause(&self, kind: ClauseKind) -> bool {
        self.clause(kind).is_some()
    }

    pub fn contains_tok(&self, tok: usize) -> bool {
        self.attached.0 <= tok && tok < self.attached.1
    }
}

const UNSUPPORTED_DIRECTIVES: &[&str] = &[
    "parallel", "update", "cache", "routine", "async", "wait", "atomic", "declare", "enter",
    "exit", "host_data", "init", "shutdown", "set", "serial",
];

/// Scan every `#pragma acc` line into a directive. Each acc pragma yields
/// either one node or exactly one error diagnostic, never both.
pub fn scan_directives(src: &NormalizedSource) -> (Vec<DirectiveNode>, Vec<Diagnostic>) {
    let mut directives = Vec::new();
    let mut diags = Vec::new();
    for (i, tok) in src.tokens.iter().enumerate() {
        if tok.kind != TokenKind::PragmaLine || !tok.is_acc_pragma() {
            continue;
        }
        match scan_one(src, i) {
            Ok(node) => directives.push(node),
            Err(d) => diags.push(d),
        }
    }
    (directives, diags)
}

fn scan_one(src: &NormalizedSource, pragma_tok: usize) -> Result<DirectiveNode, Diagnostic> {
    let tok = &src.tokens[pragma_tok];
    let mut line = PragmaCursor::new(&tok.text, tok.loc);
    line.skip_word(); // pragma (after '#')
    line.skip_word(); // acc

    let (name, name_loc) = line
        .word()
        .ok_or_else(|| Diagnostic::error(ErrorCode::EDirective, tok.loc, "missing directive name"))?;
    let kind = match name.as_str() {
        "data" => DirectiveKind::Data,
        "kernels" => DirectiveKind::Kernels,
        "loop" => DirectiveKind::Loop,
        _ if UNSUPPORTED_DIRECTIVES.contains(&name.as_str()) => {
            return Err(Diagnostic::error(
                ErrorCode::EUnsupported,
                name_loc,
                format!("directive '{name}' is not supported; use data, kernels, or loop"),
            ));
        }
        _ => {
            return Err(Diagnostic::error(
                ErrorCode::EDirective,
                name_loc,
                format!("unknown directive '{name}'"),
            ));
        }
    };

    let clauses = parse_clauses(&mut line)?;

    // Attached statement: next significant token through its statement end.
    let mut j = pragma_tok + 1;
    while j < src.tokens.len() && !src.tokens[j].is_significant() {
        j += 1;
    }
    if j >= src.tokens.len() || src.tokens[j].is_punct("}") {
        return Err(Diagnostic::error(
            ErrorCode::EDirective,
            tok.loc,
            format!("'{}' directive has no statement to attach to", kind.name()),
        ));
    }
    if kind == DirectiveKind::Loop && !src.tokens[j].is_kw("for") {
        return Err(Diagnostic::error(
            ErrorCode::EDirective,
            tok.loc,
            "'loop' directive must immediately precede a for statement",
        ));
    }
    let end = statement_end(&src.tokens, j).map_err(|mut d| {
        d.code = ErrorCode::EDirective;
        d
    })?;

    Ok(DirectiveNode {
        kind,
        clauses,
        loc: tok.loc,
        pragma_tok,
        attached: (j, end),
        raw: tok.text.clone(),
    })
}

fn parse_clauses(line: &mut PragmaCursor) -> Result<Vec<Clause>, Diagnostic> {
    let mut clauses = Vec::new();
    loop {
        line.skip_separators();
        let Some((word, loc)) = line.word() else {
            if let Some((c, l)) = line.rest_nonblank() {
                return Err(Diagnostic::error(
                    ErrorCode::EClause,
                    l,
                    format!("unexpected '{c}' in clause list"),
                ));
            }
            return Ok(clauses);
        };
        let kind = match word.as_str() {
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
            _ => {
                return Err(Diagnostic::error(
                    ErrorCode::EClause,
                    loc,
                    format!("unknown clause '{word}'"),
                ));
            }
        };
        let clause = match kind {
            ClauseKind::Independent => Clause {
                kind,
                vars: Vec::new(),
                reduction_op: None,
                size: None,
                loc,
            },
            ClauseKind::Gang | ClauseKind::Worker | ClauseKind::Vector => {
                let size = if line.peek_nonblank() == Some('(') {
                    let (args, args_loc) = line.paren_group(loc)?;
                    let text = args.trim().to_string();
                    if text.is_empty() {
                        return Err(Diagnostic::error(
                            ErrorCode::EClause,
                            args_loc,
                            format!("empty argument to '{}'", kind.name()),
                        ));
                    }
                    Some(text)
                } else {
                    None
                };
                Clause {
                    kind,
                    vars: Vec::new(),
                    reduction_op: None,
                    size,
                    loc,
                }
            }
            ClauseKind::Reduction => {
                let (args, args_loc) = line.paren_group(loc)?;
                let (op_text, vars_text) = args.split_once(':').ok_or_else(|| {
                    Diagnostic::error(
                        ErrorCode::EClause,
                        args_loc,
                        "reduction clause requires 'operator:variable' arguments",
                    )
                })?;
                let op = match op_text.trim() {
                    "+" => ReductionOp::Add,
                    "*" => ReductionOp::Mul,
                    "max" => ReductionOp::Max,
                    "min" => ReductionOp::Min,
                    other => {
                        return Err(Diagnostic::error(
                            ErrorCode::ERedOp,
                            args_loc,
                            format!("unsupported reduction operator '{other}'"),
                        ));
                    }
                };
                let vars = parse_name_list(vars_text, args_loc)?;
                if vars.is_empty() {
                    return Err(Diagnostic::error(
                        ErrorCode::EClause,
                        args_loc,
                        "reduction clause requires at least one variable",
                    ));
                }
                Clause {
                    kind,
                    vars,
                    reduction_op: Some(op),
                    size: None,
                    loc,
                }
            }
            ClauseKind::Private => {
                let (args, args_loc) = line.paren_group(loc)?;
                let vars = parse_name_list(&args, args_loc)?;
                if vars.is_empty() {
                    return Err(Diagnostic::error(
                        ErrorCode::EClause,
                        args_loc,
                        "private clause requires at least one variable",
                    ));
                }
                Clause {
                    kind,
                    vars,
                    reduction_op: None,
                    size: None,
                    loc,
                }
            }
            _ => {
                // Data clauses: var[, var]* with optional [start:count].
                let (args, args_loc) = line.paren_group(loc)?;
                let vars = parse_subarray_list(&args, args_loc)?;
                if vars.is_empty() {
                    return Err(Diagnostic::error(
                        ErrorCode::EClause,
                        args_loc,
                        format!("'{}' clause requires at least one variable", kind.name()),
                    ));
                }
                Clause {
                    kind,
                    vars,
                    reduction_op: None,
                    size: None,
                    loc,
                }
            }
        };
        clauses.push(clause);
    }
}

fn parse_name_list(text: &str, loc: Location) -> Result<Vec<ClauseVar>, Diagnostic> {
    let mut vars = Vec::new();
    for part in text.split(',') {
        let name = part.trim();
        if name.is_empty() {
            continue;
        }
        if !is_identifier(name) {
            return Err(Diagnostic::error(
                ErrorCode::EClause,
                loc,
                format!("'{name}' is not a variable name"),
            ));
        }
        vars.push(ClauseVar {
            name: name.to_string(),
            bounds: None,
            loc,
        });
    }
    Ok(vars)
}

/// `a[0:n], b, c[start:count]` — commas inside brackets do not split.
fn parse_subarray_list(text: &str, loc: Location) -> Result<Vec<ClauseVar>, Diagnostic> {
    let mut vars = Vec::new();
    let mut depth = 0i32;
    let mut item = String::new();
    let mut items = Vec::new();
    for c in text.chars() {
        match c {
            '[' | '(' => depth += 1,
            ']' | ')' => depth -= 1,
            ',' if depth == 0 => {
                items.push(std::mem::take(&mut item));
                continue;
            }
            _ => {}
        }
        item.push(c);
    }
    if !item.trim().is_empty() || !items.is_empty() {
        items.push(item);
    }
    for raw in items {
        let part = raw.trim();
        if part.is_empty() {
            return Err(Diagnostic::error(
                ErrorCode::EClause,
                loc,
                "empty variable entry in clause",
            ));
        }
        let (name, bounds) = match part.find('[') {
            None => (part, None),
            Some(open) => {
                let name = part[..open].trim();
                let inner = part[open..]
                    .strip_prefix('[')
                    .and_then(|s| s.strip_suffix(']'))
                    .ok_or_else(|| {
                        Diagnostic::error(
                            ErrorCode::EClause,
                            loc,
                            format!("malformed subarray bounds on '{name}'"),
                        )
                    })?;
                let (start, count) = inner.split_once(':').ok_or_else(|| {
                    Diagnostic::error(
                        ErrorCode::EClause,
                        loc,
                        format!("subarray bounds on '{name}' must be [start:count]"),
                    )
                })?;
                if start.trim().is_empty() || count.trim().is_empty() {
                    return Err(Diagnostic::error(
                        ErrorCode::EClause,
                        loc,
                        format!("subarray bounds on '{name}' must be [start:count]"),
                    ));
                }
                (
                    name,
                    Some(SubarrayBounds {
                        start: start.trim().to_string(),
                        count: count.trim().to_string(),
                    }),
                )
            }
        };
        if !is_identifier(name) {
            return Err(Diagnostic::error(
                ErrorCode::EClause,
                loc,
                format!("'{name}' is not a variable name"),
            ));
        }
        vars.push(ClauseVar {
            name: name.to_string(),
            bounds,
            loc,
        });
    }
    Ok(vars)
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Character cursor over a pragma line that tracks source locations through
/// backslash-newline continuations.
struct PragmaCursor {
    chars: Vec<(char, Location)>,
    pos: usize,
}

impl PragmaCursor {
    fn new(text: &str, start: Location) -> Self {
        let mut chars = Vec::with_capacity(text.len());
        let mut line = start.line;
        let mut col = start.col;
        for c in text.chars() {
            chars.push((c, Location::new(line, col)));
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        // '#' first; step past it so word scans see names.
        let mut cur = PragmaCursor { chars, pos: 0 };
        if cur.peek() == Some('#') {
            cur.pos += 1;
        }
        cur
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|(c, _)| *c)
    }

    fn skip_blank(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace() || c == '\\') {
            self.pos += 1;
        }
    }

    fn skip_separators(&mut self) {
        loop {
            self.skip_blank();
            if self.peek() == Some(',') {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn peek_nonblank(&mut self) -> Option<char> {
        self.skip_blank();
        self.peek()
    }

    fn word(&mut self) -> Option<(String, Location)> {
        self.skip_blank();
        let (c, loc) = *self.chars.get(self.pos)?;
        if !(c.is_ascii_alphabetic() || c == '_') {
            return None;
        }
        let mut s = String::new();
        while let Some((c, _)) = self.chars.get(self.pos) {
            if c.is_ascii_alphanumeric() || *c == '_' {
                s.push(*c);
                self.pos += 1;
            } else {
                break;
            }
        }
        Some((s, loc))
    }

    fn skip_word(&mut self) {
        let _ = self.word();
    }

    /// `( ... )` group; returns interior text and its start location.
    fn paren_group(&mut self, clause_loc: Location) -> Result<(String, Location), Diagnostic> {
        self.skip_blank();
        match self.peek() {
            Some('(') => {}
            _ => {
                return Err(Diagnostic::error(
                    ErrorCode::EClause,
                    clause_loc,
                    "expected '(' after clause name",
                ));
            }
        }
        self.pos += 1;
        let start_loc = self
            .chars
            .get(self.pos)
            .map(|(_, l)| *l)
            .unwrap_or(clause_loc);
        let mut depth = 1;
        let mut text = String::new();
        while let Some((c, _)) = self.chars.get(self.pos) {
            match c {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth == 0 {
                        self.pos += 1;
                        return Ok((text, start_loc));
                    }
                }
                _ => {}
            }
            if *c != '\\' {
                text.push(*c);
            }
            self.pos += 1;
        }
        Err(Diagnostic::error(
            ErrorCode::EClause,
            clause_loc,
            "unbalanced '(' in clause arguments",
        ))
    }

    fn rest_nonblank(&mut self) -> Option<(char, Location)> {
        self.skip_blank();
        self.chars.get(self.pos).copied()
    }
}

/// Check directive/clause legality, nesting restrictions, and declaration
/// requirements. Returns an ordered diagnostic list; empty means the program
/// may be translated.
pub fn validate(directives: &[DirectiveNode], ast: &Ast) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    for d in directives {
        for c in &d.clauses {
            let legal = match d.kind {
                DirectiveKind::Data | DirectiveKind::Kernels => c.kind.is_data_clause(),
                DirectiveKind::Loop => !c.kind.is_data_clause(),
            };
            if !legal {
                diags.push(Diagnostic::error(
                    ErrorCode::EClause,
                    c.loc,
                    format!(
                        "clause '{}' is not allowed on '{}' directive",
                        c.kind.name(),
                        d.kind.name()
                    ),
                ));
            }
        }
    }

    // Nesting restrictions over attached spans.
    for inner in directives {
        let enclosing: Vec<&DirectiveNode> = directives
            .iter()
            .filter(|outer| outer.contains_tok(inner.pragma_tok))
            .collect();
        match inner.kind {
            DirectiveKind::Kernels | DirectiveKind::Data => {
                if enclosing.iter().any(|o| o.kind == DirectiveKind::Kernels) {
                    diags.push(Diagnostic::error(
                        ErrorCode::ENest,
                        inner.loc,
                        format!(
                            "'{}' directive may not be nested inside a kernels region",
                            inner.kind.name()
                        ),
                    ));
                }
            }
            DirectiveKind::Loop => {
                if !enclosing.iter().any(|o| o.kind == DirectiveKind::Kernels) {
                    diags.push(Diagnostic::error(
                        ErrorCode::ENest,
                        inner.loc,
                        "'loop' directive must be inside a kernels region",
                    ));
                }
            }
        }
    }

    // Declaration checks for data clauses and reduction targets.
    for d in directives {
        let parent = ast.enclosing_function(d.pragma_tok);
        for c in &d.clauses {
            if c.kind.is_data_clause() {
                for v in &c.vars {
                    match find_decl(ast, parent, &v.name) {
                        None => diags.push(Diagnostic::error(
                            ErrorCode::EUnbound,
                            v.loc,
                            format!("'{}' in data clause is not declared in an enclosing scope", v.name),
                        )),
                        Some(decl) if !decl.is_array_like() => diags.push(Diagnostic::error(
                            ErrorCode::EClause,
                            v.loc,
                            format!("data clause variable '{}' must be an array or pointer", v.name),
                        )),
                        Some(_) => {}
                    }
                }
            }
            if c.kind == ClauseKind::Reduction {
                for v in &c.vars {
                    match find_decl(ast, parent, &v.name) {
                        None => diags.push(Diagnostic::error(
                            ErrorCode::EUnbound,
                            v.loc,
                            format!("reduction variable '{}' is not declared", v.name),
                        )),
                        Some(decl) if decl.is_array_like() => diags.push(Diagnostic::error(
                            ErrorCode::ERedType,
                            v.loc,
                            format!("reduction target '{}' must be a scalar", v.name),
                        )),
                        Some(_) => {}
                    }
                }
            }
        }
    }

    // Independent-loop nesting depth beyond the 2-D geometry limit.
    for d in directives {
        if d.kind != DirectiveKind::Loop || !d.has_clause(ClauseKind::Independent) {
            continue;
        }
        let depth = 1 + directives
            .iter()
            .filter(|o| {
                o.kind == DirectiveKind::Loop
                    && o.has_clause(ClauseKind::Independent)
                    && o.contains_tok(d.pragma_tok)
            })
            .count();
        if depth > 2 {
            diags.push(Diagnostic::warning(
                ErrorCode::WDeepNest,
                d.loc,
                "independent nesting deeper than 2 levels; extra levels run sequentially",
            ));
        }
    }

    diags.sort_by_key(|d| (d.location, d.severity == Severity::Warning));
    diags
}

fn find_decl<'a>(
    ast: &'a Ast,
    parent: Option<&'a crate::cfront::FunctionDef>,
    name: &str,
) -> Option<&'a crate::cfront::VarDecl> {
    if let Some(f) = parent {
        if let Some(l) = f.locals.iter().rev().find(|l| l.var.name == name) {
            return Some(&l.var);
        }
        if let Some(p) = f.params.iter().find(|p| p.name == name) {
            return Some(p);
        }
    }
    ast.global(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfront::{normalize, parse_ast, tokenize};

    fn prep(src: &str) -> (NormalizedSource, Ast) {
        let norm = normalize(&tokenize(src).unwrap()).unwrap();
        let ast = parse_ast(&norm).unwrap();
        (norm, ast)
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
    fn kernels_without_clauses() {
        let (norm, _) = prep("int main(){\n#pragma acc kernels\n{ int x; x=1; }\nreturn 0; }");
        let (dirs, diags) = scan_directives(&norm);
        assert!(diags.is_empty());
        assert_eq!(dirs.len(), 1);
        assert_eq!(dirs[0].kind, DirectiveKind::Kernels);
        assert!(dirs[0].clauses.is_empty());
    }

    #[test]
    fn data_copy_with_bounds() {
        let (norm, _) = prep(LISTING);
        let (dirs, diags) = scan_directives(&norm);
        assert!(diags.is_empty(), "{diags:?}");
        assert_eq!(dirs.len(), 4);
        let data = &dirs[0];
        assert_eq!(data.kind, DirectiveKind::Data);
        let copy = data.clause(ClauseKind::Copy).unwrap();
        assert_eq!(copy.vars.len(), 3);
        for v in &copy.vars {
            let b = v.bounds.as_ref().unwrap();
            assert_eq!(b.start, "0");
            assert_eq!(b.count, "LEN*LEN");
        }
    }

    #[test]
    fn misspelled_clause_is_e_clause_with_location() {
        let (norm, _) = prep(
            "int main(){ int i,n;\n#pragma acc kernels\n#pragma acc loop independant\nfor(i=0;i<n;++i){ }\nreturn 0; }",
        );
        let (_, diags) = scan_directives(&norm);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, ErrorCode::EClause);
        assert_eq!(diags[0].location.line, 3);
        assert!(diags[0].message.contains("independant"));
    }

    #[test]
    fn unknown_directive_and_unsupported_directive() {
        let (norm, _) = prep("int main(){\n#pragma acc kernelss\n{ }\n#pragma acc parallel\n{ }\nreturn 0; }");
        let (dirs, diags) = scan_directives(&norm);
        assert!(dirs.is_empty());
        assert_eq!(diags.len(), 2);
        assert_eq!(diags[0].code, ErrorCode::EDirective);
        assert_eq!(diags[1].code, ErrorCode::EUnsupported);
    }

    #[test]
    fn non_acc_pragma_passes_through() {
        let (norm, _) = prep("int main(){\n#pragma omp parallel\n{ }\nreturn 0; }");
        let (dirs, diags) = scan_directives(&norm);
        assert!(dirs.is_empty() && diags.is_empty());
    }

    #[test]
    fn listing_program_validates_clean() {
        let (norm, ast) = prep(LISTING);
        let (dirs, scan_diags) = scan_directives(&norm);
        assert!(scan_diags.is_empty());
        let diags = validate(&dirs, &ast);
        assert!(diags.is_empty(), "{diags:?}");
    }

    #[test]
    fn nested_kernels_is_e_nest() {
        let src = "int main(){ int x;\n#pragma acc kernels\n{\n#pragma acc kernels\n{ x=1; }\n}\nreturn 0; }";
        let (norm, ast) = prep(src);
        let (dirs, _) = scan_directives(&norm);
        let diags = validate(&dirs, &ast);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, ErrorCode::ENest);
        assert_eq!(diags[0].location.line, 4);
    }

    #[test]
    fn loop_outside_kernels_is_e_nest() {
        let src = "int main(){ int i,n;\n#pragma acc loop independent\nfor(i=0;i<n;++i){ }\nreturn 0; }";
        let (norm, ast) = prep(src);
        let (dirs, _) = scan_directives(&norm);
        let diags = validate(&dirs, &ast);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, ErrorCode::ENest);
    }

    #[test]
    fn array_reduction_target_is_e_redtype() {
        let src = "int main(){ float a[10]; int i;\n#pragma acc kernels\n#pragma acc loop independent reduction(+:a)\nfor(i=0;i<10;++i){ }\nreturn 0; }";
        let (norm, ast) = prep(src);
        let (dirs, _) = scan_directives(&norm);
        let diags = validate(&dirs, &ast);
        assert!(diags.iter().any(|d| d.code == ErrorCode::ERedType));
    }

    #[test]
    fn illegal_clause_for_directive() {
        let src = "int main(){ float a[4]; int i;\n#pragma acc data independent\n{ }\nreturn 0; }";
        let (norm, ast) = prep(src);
        let (dirs, _) = scan_directives(&norm);
        let diags = validate(&dirs, &ast);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, ErrorCode::EClause);
    }

    #[test]
    fn undeclared_data_clause_var_is_e_unbound() {
        let src = "int main(){\n#pragma acc data copy(q[0:4])\n{ }\nreturn 0; }";
        let (norm, ast) = prep(src);
        let (dirs, _) = scan_directives(&norm);
        let diags = validate(&dirs, &ast);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, ErrorCode::EUnbound);
    }

    #[test]
    fn deep_independent_nest_warns() {
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
return 0; }";
        let (norm, ast) = prep(src);
        let (dirs, scan) = scan_directives(&norm);
        assert!(scan.is_empty());
        let diags = validate(&dirs, &ast);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, ErrorCode::WDeepNest);
        assert!(!diags[0].is_error());
    }

    #[test]
    fn unsupported_reduction_operator_is_e_redop() {
        let src = "int main(){ int i,s;\n#pragma acc kernels\n#pragma acc loop independent reduction(^:s)\nfor(i=0;i<4;++i){ }\nreturn 0; }";
        let (norm, _) = prep(src);
        let (_, diags) = scan_directives(&norm);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, ErrorCode::ERedOp);
    }

    #[test]
    fn determinism_same_input_same_diags() {
        let src = "int main(){ int x;\n#pragma acc kernels\n{\n#pragma acc kernels\n{ x=1; }\n}\nreturn 0; }";
        let (norm, ast) = prep(src);
        let (dirs, _) = scan_directives(&norm);
        let a = validate(&dirs, &ast);
        let b = validate(&dirs, &ast);
        assert_eq!(a, b);
    }
}
