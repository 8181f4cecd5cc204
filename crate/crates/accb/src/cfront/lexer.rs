//! Tokenizer for the supported C subset.
//!
//! The token stream is lossless: concatenating every token's text reproduces
//! the input byte-for-byte. Preprocessor lines are isolated as single
//! line-spanning tokens so later stages can treat `#pragma acc` lines as
//! units; non-pragma preprocessor lines (`#include`, retained `#define`s)
//! are classified as comments, i.e. opaque text carried through unchanged.

use crate::diag::{Diagnostic, ErrorCode, Location};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Identifier,
    Keyword,
    Literal,
    Punctuator,
    /// A `#pragma ...` line, including backslash continuations, excluding
    /// the terminating newline.
    PragmaLine,
    Comment,
    Whitespace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub loc: Location,
}

impl Token {
    pub fn is_significant(&self) -> bool {
        !matches!(self.kind, TokenKind::Whitespace | TokenKind::Comment)
    }

    pub fn is_punct(&self, s: &str) -> bool {
        self.kind == TokenKind::Punctuator && self.text == s
    }

    pub fn is_kw(&self, s: &str) -> bool {
        self.kind == TokenKind::Keyword && self.text == s
    }

    pub fn is_acc_pragma(&self) -> bool {
        if self.kind != TokenKind::PragmaLine {
            return false;
        }
        let mut words = self.text[1..].split_whitespace();
        words.next() == Some("pragma") && words.next() == Some("acc")
    }
}

const KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while",
];

// Longest match first.
const PUNCTUATORS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "^=", "|=", "[", "]", "(", ")", "{", "}", ".", "&", "*", "+",
    "-", "~", "!", "/", "%", "<", ">", "^", "|", "?", ":", ";", ",", "=", "#",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn loc(&self) -> Location {
        Location::new(self.line, self.col)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<u8> {
        self.src.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn starts_with(&self, s: &str) -> bool {
        self.src[self.pos..].starts_with(s.as_bytes())
    }
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_ident_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Tokenize raw C text. The concatenation of the returned tokens' text is
/// exactly the input.
pub fn tokenize(source: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut cur = Cursor::new(source);
    let mut tokens = Vec::new();
    // True when only horizontal whitespace has been seen since the last
    // newline: a `#` here opens a preprocessor line.
    let mut at_line_start = true;

    while let Some(b) = cur.peek() {
        let loc = cur.loc();
        let start = cur.pos;

        if b == b'#' && at_line_start {
            // Preprocessor line: spans to end of line, honoring backslash
            // continuations. The newline itself stays out of the token.
            while let Some(c) = cur.peek() {
                if c == b'\n' {
                    break;
                }
                if c == b'\\' && cur.peek_at(1) == Some(b'\n') {
                    cur.bump();
                    cur.bump();
                    continue;
                }
                cur.bump();
            }
            let text = source[start..cur.pos].to_string();
            let kind = if directive_word(&text) == Some("pragma") {
                TokenKind::PragmaLine
            } else {
                // Passthrough line (#include, retained #define, ...).
                TokenKind::Comment
            };
            tokens.push(Token { kind, text, loc });
            continue;
        }

        if b.is_ascii_whitespace() {
            while cur.peek().is_some_and(|c| c.is_ascii_whitespace()) {
                if cur.bump() == Some(b'\n') {
                    at_line_start = true;
                }
            }
            tokens.push(Token {
                kind: TokenKind::Whitespace,
                text: source[start..cur.pos].to_string(),
                loc,
            });
            continue;
        }
        at_line_start = false;

        if cur.starts_with("//") {
            while cur.peek().is_some_and(|c| c != b'\n') {
                cur.bump();
            }
            tokens.push(Token {
                kind: TokenKind::Comment,
                text: source[start..cur.pos].to_string(),
                loc,
            });
            continue;
        }

        if cur.starts_with("/*") {
            cur.bump();
            cur.bump();
            loop {
                if cur.starts_with("*/") {
                    cur.bump();
                    cur.bump();
                    break;
                }
                if cur.bump().is_none() {
                    return Err(Diagnostic::error(
                        ErrorCode::ELex,
                        loc,
                        "unterminated block comment",
                    ));
                }
            }
            tokens.push(Token {
                kind: TokenKind::Comment,
                text: source[start..cur.pos].to_string(),
                loc,
            });
            continue;
        }

        if b == b'"' || b == b'\'' {
            let quote = b;
            cur.bump();
            loop {
                match cur.peek() {
                    None | Some(b'\n') => {
                        let what = if quote == b'"' { "string" } else { "char" };
                        return Err(Diagnostic::error(
                            ErrorCode::ELex,
                            loc,
                            format!("unterminated {what} literal"),
                        ));
                    }
                    Some(b'\\') => {
                        cur.bump();
                        cur.bump();
                    }
                    Some(c) if c == quote => {
                        cur.bump();
                        break;
                    }
                    Some(_) => {
                        cur.bump();
                    }
                }
            }
            tokens.push(Token {
                kind: TokenKind::Literal,
                text: source[start..cur.pos].to_string(),
                loc,
            });
            continue;
        }

        if is_ident_start(b) {
            while cur.peek().is_some_and(is_ident_char) {
                cur.bump();
            }
            let text = &source[start..cur.pos];
            let kind = if is_keyword(text) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
            tokens.push(Token {
                kind,
                text: text.to_string(),
                loc,
            });
            continue;
        }

        if b.is_ascii_digit() || (b == b'.' && cur.peek_at(1).is_some_and(|c| c.is_ascii_digit()))
        {
            // pp-number: digits, letters, dots, and sign characters that
            // follow an exponent marker.
            cur.bump();
            while let Some(c) = cur.peek() {
                if c.is_ascii_alphanumeric() || c == b'.' || c == b'_' {
                    let exp = matches!(c, b'e' | b'E' | b'p' | b'P');
                    cur.bump();
                    if exp && matches!(cur.peek(), Some(b'+') | Some(b'-')) {
                        cur.bump();
                    }
                } else {
                    break;
                }
            }
            tokens.push(Token {
                kind: TokenKind::Literal,
                text: source[start..cur.pos].to_string(),
                loc,
            });
            continue;
        }

        let rest = &source[cur.pos..];
        if let Some(p) = PUNCTUATORS.iter().find(|p| rest.starts_with(**p)) {
            for _ in 0..p.len() {
                cur.bump();
            }
            tokens.push(Token {
                kind: TokenKind::Punctuator,
                text: p.to_string(),
                loc,
            });
            continue;
        }

        return Err(Diagnostic::error(
            ErrorCode::ELex,
            loc,
            format!("unexpected character {:?}", b as char),
        ));
    }

    Ok(tokens)
}

/// First word after `#` on a preprocessor line, tolerating `#  pragma`.
fn directive_word(line: &str) -> Option<&str> {
    let rest = line.strip_prefix('#')?.trim_start();
    let end = rest
        .find(|c: char| !c.is_ascii_alphanumeric() && c != '_')
        .unwrap_or(rest.len());
    if end == 0 {
        None
    } else {
        Some(&rest[..end])
    }
}

/// Pre-tokenize pass that resolves `#define NAME <integer>` object macros by
/// substituting the literal for every identifier occurrence of NAME outside
/// strings, comments, and non-pragma preprocessor lines. The `#define` lines
/// themselves are retained (and later carried through verbatim) so line
/// numbers stay stable.
pub fn substitute_defines(source: &str) -> String {
    let mut defines: Vec<(String, String)> = Vec::new();
    for line in source.lines() {
        if let Some((name, value)) = parse_int_define(line) {
            if let Some(slot) = defines.iter_mut().find(|(n, _)| *n == name) {
                slot.1 = value;
            } else {
                defines.push((name, value));
            }
        }
    }
    if defines.is_empty() {
        return source.to_string();
    }

    let bytes = source.as_bytes();
    let mut out = String::with_capacity(source.len());
    let mut i = 0;
    let mut at_line_start = true;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'#' && at_line_start {
            // Copy the preprocessor line; substitute only inside pragmas.
            let start = i;
            while i < bytes.len() && bytes[i] != b'\n' {
                if bytes[i] == b'\\' && bytes.get(i + 1) == Some(&b'\n') {
                    i += 2;
                } else {
                    i += 1;
                }
            }
            let line = &source[start..i];
            if directive_word(line) == Some("pragma") {
                out.push_str(&substitute_in_plain_text(line, &defines));
            } else {
                out.push_str(line);
            }
            continue;
        }
        match b {
            b'\n' => {
                at_line_start = true;
                out.push('\n');
                i += 1;
            }
            b' ' | b'\t' | b'\r' => {
                out.push(b as char);
                i += 1;
            }
            b'"' | b'\'' => {
                at_line_start = false;
                let start = i;
                i += 1;
                while i < bytes.len() && bytes[i] != b && bytes[i] != b'\n' {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b {
                    i += 1;
                }
                out.push_str(&source[start..i]);
            }
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                at_line_start = false;
                let start = i;
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                out.push_str(&source[start..i]);
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                at_line_start = false;
                let start = i;
                i += 2;
                while i < bytes.len() && !source[i..].starts_with("*/") {
                    i += 1;
                }
                i = (i + 2).min(bytes.len());
                out.push_str(&source[start..i]);
            }
            _ if is_ident_start(b) => {
                at_line_start = false;
                let start = i;
                while i < bytes.len() && is_ident_char(bytes[i]) {
                    i += 1;
                }
                let word = &source[start..i];
                match defines.iter().find(|(n, _)| n == word) {
                    Some((_, value)) => out.push_str(value),
                    None => out.push_str(word),
                }
            }
            _ => {
                at_line_start = false;
                out.push(b as char);
                i += 1;
            }
        }
    }
    out
}

fn substitute_in_plain_text(text: &str, defines: &[(String, String)]) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < bytes.len() {
        if is_ident_start(bytes[i]) {
            let start = i;
            while i < bytes.len() && is_ident_char(bytes[i]) {
                i += 1;
            }
            let word = &text[start..i];
            match defines.iter().find(|(n, _)| n == word) {
                Some((_, value)) => out.push_str(value),
                None => out.push_str(word),
            }
        } else {
            out.push(bytes[i] as char);
            i += 1;
        }
    }
    out
}

fn parse_int_define(line: &str) -> Option<(String, String)> {
    let rest = line.trim_start().strip_prefix('#')?.trim_start();
    let rest = rest.strip_prefix("define")?;
    if !rest.starts_with(|c: char| c.is_ascii_whitespace()) {
        return None;
    }
    let rest = rest.trim_start();
    let name_end = rest
        .find(|c: char| !c.is_ascii_alphanumeric() && c != '_')
        .unwrap_or(rest.len());
    if name_end == 0 || !rest.as_bytes()[0].is_ascii_alphabetic() && rest.as_bytes()[0] != b'_' {
        return None;
    }
    // `NAME(` is a function-like macro, not ours.
    let (name, tail) = rest.split_at(name_end);
    if tail.starts_with('(') {
        return None;
    }
    let value = tail.trim();
    let is_int = !value.is_empty()
        && (value
            .strip_prefix("0x")
            .or_else(|| value.strip_prefix("0X"))
            .map(|h| !h.is_empty() && h.bytes().all(|b| b.is_ascii_hexdigit()))
            .unwrap_or_else(|| value.bytes().all(|b| b.is_ascii_digit())));
    if is_int {
        Some((name.to_string(), value.to_string()))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(tokens: &[Token]) -> Vec<(&TokenKind, &str)> {
        tokens
            .iter()
            .filter(|t| t.is_significant())
            .map(|t| (&t.kind, t.text.as_str()))
            .collect::<Vec<_>>()
    }

    #[test]
    fn simple_declaration() {
        let toks = tokenize("int a=1;").unwrap();
        assert_eq!(
            texts(&toks),
            vec![
                (&TokenKind::Keyword, "int"),
                (&TokenKind::Identifier, "a"),
                (&TokenKind::Punctuator, "="),
                (&TokenKind::Literal, "1"),
                (&TokenKind::Punctuator, ";"),
            ]
        );
    }

    #[test]
    fn pragma_line_is_one_token() {
        let toks = tokenize("#pragma acc kernels\nfor(;;)x;").unwrap();
        assert_eq!(toks[0].kind, TokenKind::PragmaLine);
        assert_eq!(toks[0].text, "#pragma acc kernels");
        assert!(toks[0].is_acc_pragma());
    }

    #[test]
    fn pragma_backslash_continuation() {
        let toks = tokenize("#pragma acc data \\\n  copy(a)\nint x;").unwrap();
        assert_eq!(toks[0].kind, TokenKind::PragmaLine);
        assert_eq!(toks[0].text, "#pragma acc data \\\n  copy(a)");
    }

    #[test]
    fn include_is_passthrough() {
        let toks = tokenize("#include <stdio.h>\nint x;").unwrap();
        assert_eq!(toks[0].kind, TokenKind::Comment);
        assert!(!toks[0].is_acc_pragma());
    }

    #[test]
    fn unterminated_string_is_e_lex() {
        let err = tokenize("\"abc").unwrap_err();
        assert_eq!(err.code, ErrorCode::ELex);
        assert_eq!(err.location.line, 1);
    }

    #[test]
    fn unterminated_block_comment_is_e_lex() {
        let err = tokenize("int a; /* no end").unwrap_err();
        assert_eq!(err.code, ErrorCode::ELex);
    }

    #[test]
    fn round_trip_exact() {
        let src = "int main() {\n  // note\n  float x = 1.5e-3f;\n  char* s = \"a\\\"b\";\n  return 0; /* done */\n}\n";
        let toks = tokenize(src).unwrap();
        let rebuilt: String = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(rebuilt, src);
    }

    #[test]
    fn define_substitution_resolves_integer_macros() {
        let src = "#define LEN 64\nfloat a[LEN*LEN];\nchar* s = \"LEN\"; // LEN\n";
        let out = substitute_defines(src);
        assert!(out.contains("float a[64*64];"));
        assert!(out.contains("\"LEN\""), "strings untouched");
        assert!(out.contains("// LEN"), "comments untouched");
        assert!(out.contains("#define LEN 64"), "define line retained");
    }

    #[test]
    fn define_substitution_applies_inside_acc_pragmas() {
        let src = "#define LEN 8\n#pragma acc data copy(a[0:LEN*LEN])\n{}\n";
        let out = substitute_defines(src);
        assert!(out.contains("copy(a[0:8*8])"));
    }

    #[test]
    fn function_like_macros_ignored() {
        let src = "#define SQ(x) ((x)*(x))\nint a = SQ(2);\n";
        assert_eq!(substitute_defines(src), src);
    }
}
