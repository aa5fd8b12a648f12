//! Indentation-aware lexer for a Python-like surface language, the block
//! tree ("syntax sketch") built from its tokens, and pre-order linearization.

mod lexer;
mod sketch;

pub use lexer::{lex, LexToken, TokenKind, TAB_WIDTH};
pub use sketch::{build_sketch, linearize, render, Block, Line, SyntaxSketch, DEDENT, INDENT, NEWLINE};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynparseError {
    #[error("line {line}: dedent does not match any outer indentation level")]
    DedentMismatch { line: usize },
    #[error("line {line}: unterminated string literal")]
    UnterminatedString { line: usize },
    #[error("line {line}: `:` is not followed by an indented block")]
    ColonWithoutBlock { line: usize },
    #[error("line {line}: unexpected indent")]
    UnexpectedIndent { line: usize },
    #[error("line {line}: unbalanced dedent")]
    UnbalancedDedent { line: usize },
}
