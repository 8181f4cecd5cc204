//! Source normalization: force every `if`/`else`/`while`/`for` body into a
//! braced block so later stages can treat statement scopes uniformly.
//!
//! The pass is token-preserving: the output token sequence is the input
//! sequence with only balanced `{`/`}` punctuators inserted. An opening
//! brace lands directly after the control header (so a directive line that
//! begins the body keeps its line start), the closing brace directly after
//! the body's last token.

use crate::cfront::lexer::{Token, TokenKind};
use crate::diag::{Diagnostic, ErrorCode, Location};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Original(Location),
    Inserted,
}

#[derive(Debug, Clone)]
pub struct NormalizedSource {
    pub text: String,
    pub tokens: Vec<Token>,
    /// One entry per token in `tokens`.
    pub provenance: Vec<Provenance>,
}

impl NormalizedSource {
    /// Location for diagnostics at token index `i` (nearest original).
    pub fn loc(&self, i: usize) -> Location {
        self.tokens
            .get(i.min(self.tokens.len().saturating_sub(1)))
            .map(|t| t.loc)
            .unwrap_or_default()
    }

    pub fn render(&self, span: (usize, usize)) -> String {
        self.tokens[span.0..span.1]
            .iter()
            .map(|t| t.text.as_str())
            .collect()
    }
}

pub fn normalize(tokens: &[Token]) -> Result<NormalizedSource, Diagnostic> {
    let mut scanner = Scanner {
        tokens,
        inserts: Vec::new(),
    };
    scanner.scan_top_level()?;

    let mut out_tokens = Vec::with_capacity(tokens.len() + scanner.inserts.len());
    let mut provenance = Vec::with_capacity(tokens.len() + scanner.inserts.len());
    let mut ins_iter = scanner.inserts.into_iter().peekable();
    for (i, tok) in tokens.iter().enumerate() {
        while ins_iter.peek().is_some_and(|(pos, _)| *pos == i) {
            let (_, brace) = ins_iter.next().unwrap();
            out_tokens.push(Token {
                kind: TokenKind::Punctuator,
                text: brace.to_string(),
                loc: tok.loc,
            });
            provenance.push(Provenance::Inserted);
        }
        out_tokens.push(tok.clone());
        provenance.push(Provenance::Original(tok.loc));
    }
    let end_loc = tokens.last().map(|t| t.loc).unwrap_or_default();
    for (_, brace) in ins_iter {
        out_tokens.push(Token {
            kind: TokenKind::Punctuator,
            text: brace.to_string(),
            loc: end_loc,
        });
        provenance.push(Provenance::Inserted);
    }

    let text = out_tokens.iter().map(|t| t.text.as_str()).collect();
    Ok(NormalizedSource {
        text,
        tokens: out_tokens,
        provenance,
    })
}

/// One past the final token of the statement starting at `start` (a
/// significant token). Directive lines prefix the statement they precede.
/// Intended for already-normalized token streams, where it never inserts.
pub fn statement_end(tokens: &[Token], start: usize) -> Result<usize, Diagnostic> {
    let mut s = Scanner {
        tokens,
        inserts: Vec::new(),
    };
    s.scan_stmt(start)
}

struct Scanner<'a> {
    tokens: &'a [Token],
    /// (insert before original token index, brace char); positions are
    /// recorded in nesting order, inner closers first.
    inserts: Vec<(usize, char)>,
}

impl<'a> Scanner<'a> {
    fn loc(&self, i: usize) -> Location {
        self.tokens
            .get(i.min(self.tokens.len().saturating_sub(1)))
            .map(|t| t.loc)
            .unwrap_or_default()
    }

    fn err(&self, i: usize, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::error(ErrorCode::EParse, self.loc(i), msg)
    }

    fn skip_trivia(&self, mut i: usize) -> usize {
        while i < self.tokens.len() && !self.tokens[i].is_significant() {
            i += 1;
        }
        i
    }

    fn scan_top_level(&mut self) -> Result<(), Diagnostic> {
        let mut i = self.skip_trivia(0);
        while i < self.tokens.len() {
            i = self.scan_item(i)?;
            i = self.skip_trivia(i);
        }
        Ok(())
    }

    /// One top-level item: function definition, declaration, or type
    /// definition. Only function bodies are entered; aggregate and
    /// initializer braces are skipped opaquely.
    fn scan_item(&mut self, start: usize) -> Result<usize, Diagnostic> {
        let mut i = start;
        if self.tokens[i].kind == TokenKind::PragmaLine {
            return Ok(i + 1);
        }
        let aggregate = matches!(
            self.tokens[i].text.as_str(),
            "typedef" | "struct" | "union" | "enum"
        ) && self.tokens[i].kind == TokenKind::Keyword;
        let mut seen_eq = false;
        while i < self.tokens.len() {
            let tok = &self.tokens[i];
            if !tok.is_significant() {
                i += 1;
                continue;
            }
            match (tok.kind, tok.text.as_str()) {
                (TokenKind::Punctuator, ";") => return Ok(i + 1),
                (TokenKind::Punctuator, "=") => {
                    seen_eq = true;
                    i += 1;
                }
                (TokenKind::Punctuator, "(") => i = self.skip_balanced(i, "(", ")")?,
                (TokenKind::Punctuator, "[") => i = self.skip_balanced(i, "[", "]")?,
                (TokenKind::Punctuator, "{") => {
                    if seen_eq || aggregate {
                        i = self.skip_balanced(i, "{", "}")?;
                    } else {
                        // Function body.
                        return self.scan_block(i);
                    }
                }
                (TokenKind::Punctuator, ")") | (TokenKind::Punctuator, "}")
                | (TokenKind::Punctuator, "]") => {
                    return Err(self.err(i, format!("unbalanced '{}'", tok.text)));
                }
                _ => i += 1,
            }
        }
        Err(self.err(start, "unterminated top-level item"))
    }

    /// Skip a balanced token group starting at the `open` punctuator.
    fn skip_balanced(&self, open_at: usize, open: &str, close: &str) -> Result<usize, Diagnostic> {
        let mut depth = 0usize;
        let mut i = open_at;
        while i < self.tokens.len() {
            let t = &self.tokens[i];
            if t.is_punct(open) {
                depth += 1;
            } else if t.is_punct(close) {
                depth -= 1;
                if depth == 0 {
                    return Ok(i + 1);
                }
            }
            i += 1;
        }
        Err(self.err(open_at, format!("unbalanced '{open}'")))
    }

    /// Block starting at `{`; returns index past the matching `}`.
    fn scan_block(&mut self, open_at: usize) -> Result<usize, Diagnostic> {
        debug_assert!(self.tokens[open_at].is_punct("{"));
        let mut i = self.skip_trivia(open_at + 1);
        loop {
            if i >= self.tokens.len() {
                return Err(self.err(open_at, "unbalanced '{'"));
            }
            if self.tokens[i].is_punct("}") {
                return Ok(i + 1);
            }
            i = self.scan_stmt(i)?;
            i = self.skip_trivia(i);
        }
    }

    /// One statement starting at a significant token; returns index one past
    /// its final token. Directive lines prefix the statement they precede.
    fn scan_stmt(&mut self, start: usize) -> Result<usize, Diagnostic> {
        let mut i = start;
        while i < self.tokens.len() && self.tokens[i].kind == TokenKind::PragmaLine {
            i = self.skip_trivia(i + 1);
            // A dangling directive at block end is left for the directive
            // scanner to diagnose.
            if i >= self.tokens.len() || self.tokens[i].is_punct("}") {
                return Ok(i);
            }
        }
        let tok = &self.tokens[i];
        match (tok.kind, tok.text.as_str()) {
            (TokenKind::Punctuator, "{") => self.scan_block(i),
            (TokenKind::Keyword, "if") => {
                let after_cond = self.expect_paren_group(i + 1)?;
                let body_end = self.scan_braced_body(after_cond)?;
                let j = self.skip_trivia(body_end);
                if j < self.tokens.len() && self.tokens[j].is_kw("else") {
                    self.scan_braced_body(j + 1)
                } else {
                    Ok(body_end)
                }
            }
            (TokenKind::Keyword, "while") | (TokenKind::Keyword, "for")
            | (TokenKind::Keyword, "switch") => {
                let after_cond = self.expect_paren_group(i + 1)?;
                self.scan_braced_body(after_cond)
            }
            (TokenKind::Keyword, "do") => {
                let body_end = self.scan_braced_body(i + 1)?;
                let j = self.skip_trivia(body_end);
                if j >= self.tokens.len() || !self.tokens[j].is_kw("while") {
                    return Err(self.err(j, "expected 'while' after do body"));
                }
                let after_cond = self.expect_paren_group(j + 1)?;
                let k = self.skip_trivia(after_cond);
                if k >= self.tokens.len() || !self.tokens[k].is_punct(";") {
                    return Err(self.err(k, "expected ';' after do-while"));
                }
                Ok(k + 1)
            }
            (TokenKind::Punctuator, p @ (")" | "}" | "]")) => {
                Err(self.err(i, format!("unexpected '{p}'")))
            }
            _ => self.scan_simple_stmt(i),
        }
    }

    /// Expression/declaration statement: runs to the `;` that closes it at
    /// zero bracket depth (initializer braces are balanced through).
    fn scan_simple_stmt(&mut self, start: usize) -> Result<usize, Diagnostic> {
        let mut i = start;
        let mut paren = 0i32;
        let mut bracket = 0i32;
        let mut brace = 0i32;
        while i < self.tokens.len() {
            let t = &self.tokens[i];
            if t.kind == TokenKind::Punctuator {
                match t.text.as_str() {
                    "(" => paren += 1,
                    ")" => paren -= 1,
                    "[" => bracket += 1,
                    "]" => bracket -= 1,
                    "{" => brace += 1,
                    "}" => brace -= 1,
                    ";" if paren == 0 && bracket == 0 && brace == 0 => return Ok(i + 1),
                    _ => {}
                }
                if paren < 0 || bracket < 0 || brace < 0 {
                    return Err(self.err(i, format!("unbalanced '{}'", t.text)));
                }
            }
            i += 1;
        }
        Err(self.err(start, "unterminated statement"))
    }

    /// Body of a control statement starting after its header; ensures it is
    /// brace-enclosed, inserting a pair when it is not.
    fn scan_braced_body(&mut self, after_header: usize) -> Result<usize, Diagnostic> {
        let body_start = self.skip_trivia(after_header);
        if body_start >= self.tokens.len() {
            return Err(self.err(after_header, "missing statement body"));
        }
        if self.tokens[body_start].is_punct("{") {
            return self.scan_block(body_start);
        }
        self.inserts.push((after_header, '{'));
        let end = self.scan_stmt(body_start)?;
        self.inserts.push((end, '}'));
        Ok(end)
    }

    /// `( ... )` group starting at the next significant token.
    fn expect_paren_group(&self, from: usize) -> Result<usize, Diagnostic> {
        let i = self.skip_trivia(from);
        if i >= self.tokens.len() || !self.tokens[i].is_punct("(") {
            return Err(self.err(i, "expected '('"));
        }
        self.skip_balanced(i, "(", ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfront::lexer::tokenize;

    fn norm(src: &str) -> NormalizedSource {
        normalize(&tokenize(src).unwrap()).unwrap()
    }

    #[test]
    fn braces_if_body() {
        let n = norm("int f(int x){ if (x) y=1; }");
        assert_eq!(n.text, "int f(int x){ if (x){ y=1;} }");
    }

    #[test]
    fn braces_for_body() {
        let n = norm("int f(){ for(i=0;i<n;++i) s+=a[i]; return s; }");
        assert_eq!(n.text, "int f(){ for(i=0;i<n;++i){ s+=a[i];} return s; }");
    }

    #[test]
    fn braces_else_and_nested_if() {
        let n = norm("void f(){ if (a) if (b) x=1; else y=2; }");
        assert_eq!(n.text, "void f(){ if (a){ if (b){ x=1;} else{ y=2;}} }");
    }

    #[test]
    fn already_braced_is_identity() {
        let src = "int f(){ if (x) { y=1; } while (z) { y=2; } return y; }";
        assert_eq!(norm(src).text, src);
    }

    #[test]
    fn idempotent() {
        let first = norm("void f(){ for(;;) while(c) x=1; }");
        let second = normalize(&first.tokens).unwrap();
        assert_eq!(first.text, second.text);
        assert_eq!(first.tokens.len(), second.tokens.len());
    }

    #[test]
    fn pragma_body_keeps_line_start() {
        let n = norm("void f(){ for(i=0;i<n;++i)\n#pragma acc loop\nfor(j=0;j<n;++j) x=1; }");
        assert_eq!(
            n.text,
            "void f(){ for(i=0;i<n;++i){\n#pragma acc loop\nfor(j=0;j<n;++j){ x=1;}} }"
        );
    }

    #[test]
    fn insertions_are_marked() {
        let n = norm("void f(){ if (x) y=1; }");
        let inserted: Vec<&str> = n
            .tokens
            .iter()
            .zip(&n.provenance)
            .filter(|(_, p)| **p == Provenance::Inserted)
            .map(|(t, _)| t.text.as_str())
            .collect();
        assert_eq!(inserted, vec!["{", "}"]);
    }

    #[test]
    fn initializer_braces_are_not_blocks() {
        let src = "int a[2] = {1,2}; struct p { int x; };";
        assert_eq!(norm(src).text, src);
    }

    #[test]
    fn unbalanced_is_e_parse() {
        let err = normalize(&tokenize("void f(){ if (x { y=1; }").unwrap()).unwrap_err();
        assert_eq!(err.code, ErrorCode::EParse);
    }

    #[test]
    fn token_subsequence_preserved() {
        let src = "void f(){ if (x) y=1; else y=2; }";
        let orig = tokenize(src).unwrap();
        let n = norm(src);
        // Original tokens appear in order within the normalized stream.
        let mut it = n.tokens.iter();
        for t in &orig {
            assert!(it.any(|u| u.text == t.text && u.kind == t.kind));
        }
    }
}
