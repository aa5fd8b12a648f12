use serde::{Deserialize, Serialize};

use super::SynparseError;

/// A tab advances the indentation column to the next multiple of this.
pub const TAB_WIDTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Ident,
    Number,
    String,
    Op,
    Newline,
    Indent,
    Dedent,
}

impl TokenKind {
    pub fn is_structural(self) -> bool {
        matches!(self, Self::Newline | Self::Indent | Self::Dedent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexToken {
    pub kind: TokenKind,
    /// Empty for newline, indent and dedent.
    pub text: String,
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub col: usize,
}

const TWO_CHAR_OPS: [&str; 9] = ["==", "!=", "<=", ">=", "->", "**", "//", "+=", "-="];

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    indents: Vec<usize>,
    bracket_depth: usize,
    at_line_start: bool,
    line_has_tokens: bool,
    tokens: Vec<LexToken>,
}

impl Lexer {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn push(&mut self, kind: TokenKind, text: String, line: usize, col: usize) {
        if !kind.is_structural() {
            self.line_has_tokens = true;
        }
        self.tokens.push(LexToken { kind, text, line, col });
    }

    fn skip_comment(&mut self) {
        while let Some(c) = self.peek() {
            if c == '\n' {
                break;
            }
            self.bump();
        }
    }

    /// Measures leading whitespace; returns `None` for blank or comment-only lines.
    fn indentation(&mut self) -> Option<usize> {
        let mut width = 0;
        loop {
            match self.peek() {
                Some(' ') => width += 1,
                Some('\t') => width = (width / TAB_WIDTH + 1) * TAB_WIDTH,
                Some('\r') | Some('\x0c') => {}
                _ => break,
            }
            self.bump();
        }
        match self.peek() {
            None => None,
            Some('\n') => {
                self.bump();
                None
            }
            Some('#') => {
                self.skip_comment();
                if self.peek().is_some() {
                    self.bump();
                }
                None
            }
            Some(_) => Some(width),
        }
    }

    fn apply_indentation(&mut self, width: usize) -> Result<(), SynparseError> {
        let (line, col) = (self.line, self.col);
        let top = *self.indents.last().unwrap();
        if width > top {
            self.indents.push(width);
            self.push(TokenKind::Indent, String::new(), line, col);
        } else if width < top {
            while *self.indents.last().unwrap() > width {
                self.indents.pop();
                self.push(TokenKind::Dedent, String::new(), line, col);
            }
            if *self.indents.last().unwrap() != width {
                return Err(SynparseError::DedentMismatch { line });
            }
        }
        Ok(())
    }

    fn ident(&mut self) {
        let (line, col) = (self.line, self.col);
        let mut text = String::new();
        while let Some(c) = self.peek() {
            if c == '_' || c.is_ascii_alphanumeric() {
                text.push(c);
                self.bump();
            } else {
                break;
            }
        }
        self.push(TokenKind::Ident, text, line, col);
    }

    fn digits(&mut self, text: &mut String) {
        while let Some(c) = self.peek().filter(char::is_ascii_digit) {
            text.push(c);
            self.bump();
        }
    }

    fn number(&mut self) {
        let (line, col) = (self.line, self.col);
        let mut text = String::new();
        self.digits(&mut text);
        if self.peek() == Some('.') {
            text.push('.');
            self.bump();
            self.digits(&mut text);
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let sign = matches!(self.peek_at(1), Some('+' | '-'));
            let digit_at = if sign { 2 } else { 1 };
            if self.peek_at(digit_at).is_some_and(|c| c.is_ascii_digit()) {
                for _ in 0..digit_at {
                    text.push(self.bump().unwrap());
                }
                self.digits(&mut text);
            }
        }
        self.push(TokenKind::Number, text, line, col);
    }

    fn string(&mut self) -> Result<(), SynparseError> {
        let (line, col) = (self.line, self.col);
        let quote = self.peek().unwrap();
        let triple = self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote);
        let mut text = String::new();
        let opening = if triple { 3 } else { 1 };
        for _ in 0..opening {
            text.push(self.bump().unwrap());
        }
        loop {
            match self.peek() {
                None => return Err(SynparseError::UnterminatedString { line }),
                Some('\n') if !triple => return Err(SynparseError::UnterminatedString { line }),
                Some('\\') => {
                    text.push(self.bump().unwrap());
                    match self.bump() {
                        Some(c) => text.push(c),
                        None => return Err(SynparseError::UnterminatedString { line }),
                    }
                }
                Some(c) if c == quote => {
                    if !triple {
                        text.push(self.bump().unwrap());
                        break;
                    }
                    if self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote) {
                        for _ in 0..3 {
                            text.push(self.bump().unwrap());
                        }
                        break;
                    }
                    text.push(self.bump().unwrap());
                }
                Some(_) => text.push(self.bump().unwrap()),
            }
        }
        self.push(TokenKind::String, text, line, col);
        Ok(())
    }

    fn operator(&mut self) {
        let (line, col) = (self.line, self.col);
        let c = self.peek().unwrap();
        if let Some(next) = self.peek_at(1) {
            let pair: String = [c, next].iter().collect();
            if TWO_CHAR_OPS.contains(&pair.as_str()) {
                self.bump();
                self.bump();
                self.push(TokenKind::Op, pair, line, col);
                return;
            }
        }
        match c {
            '(' | '[' | '{' => self.bracket_depth += 1,
            ')' | ']' | '}' => self.bracket_depth = self.bracket_depth.saturating_sub(1),
            _ => {}
        }
        // Characters outside the operator table still lex as one-char ops.
        self.bump();
        self.push(TokenKind::Op, c.to_string(), line, col);
    }

    fn end_logical_line(&mut self) {
        if self.line_has_tokens {
            let (line, col) = (self.line, self.col);
            self.push(TokenKind::Newline, String::new(), line, col);
            self.line_has_tokens = false;
        }
    }

    fn run(mut self) -> Result<Vec<LexToken>, SynparseError> {
        loop {
            if self.at_line_start && self.bracket_depth == 0 {
                match self.indentation() {
                    Some(width) => {
                        self.apply_indentation(width)?;
                        self.at_line_start = false;
                    }
                    None if self.peek().is_none() => break,
                    None => continue,
                }
            }
            let Some(c) = self.peek() else { break };
            match c {
                '\n' => {
                    if self.bracket_depth == 0 {
                        self.end_logical_line();
                        self.at_line_start = true;
                    }
                    self.bump();
                }
                '#' => self.skip_comment(),
                '\\' if self.peek_at(1) == Some('\n') => {
                    self.bump();
                    self.bump();
                }
                c if c.is_whitespace() => {
                    self.bump();
                }
                c if c == '_' || c.is_ascii_alphabetic() => self.ident(),
                c if c.is_ascii_digit() => self.number(),
                '.' if self.peek_at(1).is_some_and(|d| d.is_ascii_digit()) => self.number(),
                '"' | '\'' => self.string()?,
                _ => self.operator(),
            }
        }
        self.end_logical_line();
        let (line, col) = if self.col == 1 { (self.line, 1) } else { (self.line + 1, 1) };
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(TokenKind::Dedent, String::new(), line, col);
        }
        Ok(self.tokens)
    }
}

/// Tokenizes `source`. Newlines inside brackets (and after a trailing
/// backslash) join physical lines into one logical line.
pub fn lex(source: &str) -> Result<Vec<LexToken>, SynparseError> {
    Lexer {
        chars: source.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
        indents: vec![0],
        bracket_depth: 0,
        at_line_start: true,
        line_has_tokens: false,
        tokens: Vec::new(),
    }
    .run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use TokenKind::*;

    fn kinds_texts(src: &str) -> Vec<(TokenKind, std::string::String)> {
        lex(src).unwrap().into_iter().map(|t| (t.kind, t.text)).collect()
    }

    fn kt(items: &[(TokenKind, &str)]) -> Vec<(TokenKind, std::string::String)> {
        items.iter().map(|(k, t)| (*k, t.to_string())).collect()
    }

    #[test]
    fn flat_line() {
        assert_eq!(
            kinds_texts("x = 1"),
            kt(&[(Ident, "x"), (Op, "="), (Number, "1"), (Newline, "")])
        );
    }

    #[test]
    fn function_with_block() {
        assert_eq!(
            kinds_texts("def f():\n  return 1"),
            kt(&[
                (Ident, "def"),
                (Ident, "f"),
                (Op, "("),
                (Op, ")"),
                (Op, ":"),
                (Newline, ""),
                (Indent, ""),
                (Ident, "return"),
                (Number, "1"),
                (Newline, ""),
                (Dedent, ""),
            ])
        );
    }

    #[test]
    fn dedent_mismatch() {
        assert_eq!(
            lex("if x:\n    y\n  z"),
            Err(SynparseError::DedentMismatch { line: 3 })
        );
    }

    #[test]
    fn unterminated_strings() {
        assert_eq!(lex("s = 'abc"), Err(SynparseError::UnterminatedString { line: 1 }));
        assert_eq!(lex("x\ns = \"a\nb\""), Err(SynparseError::UnterminatedString { line: 2 }));
        assert_eq!(lex("s = '''abc"), Err(SynparseError::UnterminatedString { line: 1 }));
    }

    #[test]
    fn strings_with_escapes_and_triple_quotes() {
        assert_eq!(
            kinds_texts(r#"s = "a\"b" + 'c'"#),
            kt(&[
                (Ident, "s"),
                (Op, "="),
                (String, r#""a\"b""#),
                (Op, "+"),
                (String, "'c'"),
                (Newline, ""),
            ])
        );
        let toks = lex("def f():\n    \"\"\"Doc.\n    more\"\"\"\n    pass\n").unwrap();
        assert_eq!(toks[7].kind, String);
        assert_eq!(toks[7].text, "\"\"\"Doc.\n    more\"\"\"");
    }

    #[test]
    fn longest_match_operators() {
        let texts: Vec<_> = lex("a == b != c <= d >= e -> f ** g // h += i -= j")
            .unwrap()
            .into_iter()
            .filter(|t| t.kind == Op)
            .map(|t| t.text)
            .collect();
        assert_eq!(texts, ["==", "!=", "<=", ">=", "->", "**", "//", "+=", "-="]);
        assert_eq!(kinds_texts("a=-1")[1..3], kt(&[(Op, "="), (Op, "-")]));
    }

    #[test]
    fn numbers() {
        let texts: Vec<_> = lex("1 2.5 .5 3e10 4E-2 7.")
            .unwrap()
            .into_iter()
            .filter(|t| t.kind == Number)
            .map(|t| t.text)
            .collect();
        assert_eq!(texts, ["1", "2.5", ".5", "3e10", "4E-2", "7."]);
    }

    #[test]
    fn comments_and_blank_lines_emit_nothing() {
        assert_eq!(lex("# only a comment\n\n   \n").unwrap(), vec![]);
        assert_eq!(
            kinds_texts("x # trailing\n\n# c\ny"),
            kt(&[(Ident, "x"), (Newline, ""), (Ident, "y"), (Newline, "")])
        );
    }

    #[test]
    fn tabs_advance_to_multiple_of_eight() {
        // A tab and eight spaces are the same indentation level.
        let toks = lex("if a:\n\tb\n        c\n").unwrap();
        assert_eq!(toks.iter().filter(|t| t.kind == Indent).count(), 1);
        assert_eq!(toks.iter().filter(|t| t.kind == Dedent).count(), 1);
        // Two spaces then a tab also reaches column 8.
        assert!(lex("if a:\n  \tb\n        c\n").is_ok());
        assert_eq!(
            lex("if a:\n\tb\n    c\n"),
            Err(SynparseError::DedentMismatch { line: 3 })
        );
    }

    #[test]
    fn brackets_join_lines() {
        let toks = lex("f(a,\n      b)\nx").unwrap();
        assert_eq!(toks.iter().filter(|t| t.kind == Newline).count(), 2);
        assert!(toks.iter().all(|t| t.kind != Indent));
    }

    #[test]
    fn nested_blocks_close_at_eof() {
        let toks = lex("if a:\n  if b:\n    c").unwrap();
        let dedents: Vec<_> = toks.iter().filter(|t| t.kind == Dedent).collect();
        assert_eq!(dedents.len(), 2);
        assert!(dedents.iter().all(|t| t.line == 4 && t.col == 1));
    }

    #[test]
    fn positions() {
        let toks = lex("def f():\n  return 1").unwrap();
        let pos: Vec<_> = toks.iter().map(|t| (t.line, t.col)).collect();
        assert_eq!(
            pos,
            [(1, 1), (1, 5), (1, 6), (1, 7), (1, 8), (1, 9), (2, 3), (2, 3), (2, 10), (2, 11), (3, 1)]
        );
    }

    fn source_strategy() -> impl Strategy<Value = std::string::String> {
        let line = (0usize..3, "[a-z]{1,3}( [=+*(),:.]| [0-9]{1,2}| [a-z]{1,2}){0,4}( :)?");
        proptest::collection::vec(line, 1..10).prop_map(|lines| {
            lines
                .into_iter()
                .map(|(depth, body)| format!("{}{}", "    ".repeat(depth), body))
                .collect::<Vec<_>>()
                .join("\n")
        })
    }

    proptest! {
        #[test]
        fn indents_balance_and_positions_increase(src in source_strategy()) {
            if let Ok(toks) = lex(&src) {
                let mut depth = 0i64;
                for t in &toks {
                    match t.kind {
                        Indent => depth += 1,
                        Dedent => depth -= 1,
                        _ => {}
                    }
                    prop_assert!(depth >= 0);
                }
                prop_assert_eq!(depth, 0);
                for w in toks.windows(2) {
                    prop_assert!((w[0].line, w[0].col) <= (w[1].line, w[1].col));
                }
                let located: Vec<_> = toks.iter().filter(|t| !matches!(t.kind, Indent | Dedent)).collect();
                for w in located.windows(2) {
                    prop_assert!((w[0].line, w[0].col) < (w[1].line, w[1].col));
                }
            }
        }

        #[test]
        fn lex_is_total_on_plain_text(src in "[ a-z0-9=+()\n:#.,]{0,80}") {
            // Only the two declared error conditions may occur.
            match lex(&src) {
                Ok(_) | Err(SynparseError::DedentMismatch { .. }) => {}
                Err(e) => prop_assert!(false, "unexpected error {e:?}"),
            }
        }
    }
}
