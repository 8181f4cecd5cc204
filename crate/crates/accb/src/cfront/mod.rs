//! C-subset frontend: lexing, source normalization, declaration parsing.

mod ast;
mod lexer;
mod normalize;

pub use ast::{
    parse_ast, Ast, BaseType, CType, Extent, FunctionDef, Item, LocalDecl, TypeDef, VarDecl,
};
pub use lexer::{substitute_defines, tokenize, Token, TokenKind};
pub use normalize::{normalize, statement_end, NormalizedSource, Provenance};

/// Half-open range of token indices into a token stream.
pub type TokSpan = (usize, usize);
