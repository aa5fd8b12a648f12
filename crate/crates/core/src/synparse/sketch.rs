use serde::{Deserialize, Serialize};

use super::{LexToken, SynparseError, TokenKind};

pub const NEWLINE: &str = "<NEWLINE>";
pub const INDENT: &str = "<INDENT>";
pub const DEDENT: &str = "<DEDENT>";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub lines: Vec<Line>,
}

/// One logical line; `child` holds the indented block owned by a line that
/// ends in `:`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Line {
    pub tokens: Vec<LexToken>,
    pub child: Option<Block>,
}

impl Line {
    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxSketch {
    pub root: Block,
}

impl SyntaxSketch {
    /// Number of block levels, counting the root as 1.
    pub fn depth(&self) -> usize {
        fn block_depth(b: &Block) -> usize {
            1 + b
                .lines
                .iter()
                .filter_map(|l| l.child.as_ref())
                .map(block_depth)
                .max()
                .unwrap_or(0)
        }
        block_depth(&self.root)
    }

    /// Token texts of every line in pre-order.
    pub fn line_texts(&self) -> Vec<Vec<String>> {
        fn walk(b: &Block, out: &mut Vec<Vec<String>>) {
            for line in &b.lines {
                out.push(line.tokens.iter().map(|t| t.text.clone()).collect());
                if let Some(child) = &line.child {
                    walk(child, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }
}

struct Builder<'a> {
    tokens: &'a [LexToken],
    pos: usize,
}

impl Builder<'_> {
    fn peek(&self) -> Option<&LexToken> {
        self.tokens.get(self.pos)
    }

    fn block(&mut self, nested: bool) -> Result<Block, SynparseError> {
        let mut block = Block::default();
        while let Some(tok) = self.peek() {
            match tok.kind {
                TokenKind::Dedent => {
                    if !nested {
                        return Err(SynparseError::UnbalancedDedent { line: tok.line });
                    }
                    self.pos += 1;
                    return Ok(block);
                }
                TokenKind::Indent => return Err(SynparseError::UnexpectedIndent { line: tok.line }),
                TokenKind::Newline => self.pos += 1,
                _ => block.lines.push(self.line()?),
            }
        }
        Ok(block)
    }

    fn line(&mut self) -> Result<Line, SynparseError> {
        let start = self.pos;
        while let Some(tok) = self.peek() {
            if tok.kind.is_structural() {
                break;
            }
            self.pos += 1;
        }
        let tokens = self.tokens[start..self.pos].to_vec();
        if self.peek().is_some_and(|t| t.kind == TokenKind::Newline) {
            self.pos += 1;
        }
        let last = tokens.last().expect("line has at least one token");
        let opens_block = last.kind == TokenKind::Op && last.text == ":";
        let child = if opens_block {
            match self.peek() {
                Some(t) if t.kind == TokenKind::Indent => {
                    self.pos += 1;
                    Some(self.block(true)?)
                }
                _ => return Err(SynparseError::ColonWithoutBlock { line: last.line }),
            }
        } else {
            None
        };
        Ok(Line { tokens, child })
    }
}

/// Groups lexer output into logical lines, nesting the indented region after
/// each `:`-terminated line under it.
pub fn build_sketch(tokens: &[LexToken]) -> Result<SyntaxSketch, SynparseError> {
    let mut b = Builder { tokens, pos: 0 };
    Ok(SyntaxSketch { root: b.block(false)? })
}

/// Pre-order token texts with `<NEWLINE>` after every line and child blocks
/// wrapped in `<INDENT>` ... `<DEDENT>`.
pub fn linearize(sketch: &SyntaxSketch) -> Vec<String> {
    fn walk(b: &Block, out: &mut Vec<String>) {
        for line in &b.lines {
            out.extend(line.tokens.iter().map(|t| t.text.clone()));
            out.push(NEWLINE.to_string());
            if let Some(child) = &line.child {
                out.push(INDENT.to_string());
                walk(child, out);
                out.push(DEDENT.to_string());
            }
        }
    }
    let mut out = Vec::new();
    walk(&sketch.root, &mut out);
    out
}

/// Source text for a sketch: tokens separated by single spaces, four spaces
/// of indentation per level. Lexing the result rebuilds the same line tree.
pub fn render(sketch: &SyntaxSketch) -> String {
    fn walk(b: &Block, depth: usize, out: &mut String) {
        for line in &b.lines {
            out.push_str(&"    ".repeat(depth));
            out.push_str(&line.texts().join(" "));
            out.push('\n');
            if let Some(child) = &line.child {
                walk(child, depth + 1, out);
            }
        }
    }
    let mut out = String::new();
    walk(&sketch.root, 0, &mut out);
    out
}
