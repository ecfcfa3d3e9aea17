//! Text form of genomes: `tree := atom | "(" opname tree+ ")"`.
//!
//! Atoms are the operand symbols `W W_I B F F+ F-` or decimal literals. In
//! `.fn` files each non-blank line holds one tree and lines starting with `#`
//! are comments.

use std::fmt;

use thiserror::Error;

use super::op::{Op, Operand};
use super::tree::{ExprTree, Node};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("unexpected end of input at byte {pos}")]
    UnexpectedEnd { pos: usize },
    #[error("unexpected {found:?} at byte {pos}")]
    Unexpected { pos: usize, found: String },
    #[error("unknown operator {name:?} at byte {pos}")]
    UnknownOperator { pos: usize, name: String },
    #[error("unknown operand {name:?} at byte {pos}")]
    UnknownOperand { pos: usize, name: String },
    #[error("{op} takes {expected} argument(s), got {found} (at byte {pos})")]
    Arity {
        pos: usize,
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("trailing input at byte {pos}")]
    Trailing { pos: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(s: &str) -> Vec<(usize, Tok<'_>)> {
    let mut out = Vec::new();
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => {
                out.push((i, Tok::Open));
                i += 1;
            }
            b')' => {
                out.push((i, Tok::Close));
                i += 1;
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len()
                    && !bytes[i].is_ascii_whitespace()
                    && bytes[i] != b'('
                    && bytes[i] != b')'
                {
                    i += 1;
                }
                out.push((start, Tok::Atom(&s[start..i])));
            }
        }
    }
    out
}

struct Parser<'a> {
    toks: Vec<(usize, Tok<'a>)>,
    at: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn next(&mut self) -> Result<(usize, Tok<'a>), ParseError> {
        let t = self
            .toks
            .get(self.at)
            .cloned()
            .ok_or(ParseError::UnexpectedEnd { pos: self.end })?;
        self.at += 1;
        Ok(t)
    }

    fn peek_close(&self) -> bool {
        matches!(self.toks.get(self.at), Some((_, Tok::Close)))
    }

    fn tree(&mut self) -> Result<Node, ParseError> {
        match self.next()? {
            (pos, Tok::Atom(a)) => atom(pos, a),
            (pos, Tok::Close) => Err(ParseError::Unexpected {
                pos,
                found: ")".into(),
            }),
            (pos, Tok::Open) => {
                let (npos, name) = match self.next()? {
                    (p, Tok::Atom(a)) => (p, a),
                    (p, t) => {
                        return Err(ParseError::Unexpected {
                            pos: p,
                            found: format!("{t:?}"),
                        })
                    }
                };
                let op = Op::from_name(name).ok_or_else(|| ParseError::UnknownOperator {
                    pos: npos,
                    name: name.to_string(),
                })?;
                let mut children = Vec::new();
                while !self.peek_close() {
                    if self.at >= self.toks.len() {
                        return Err(ParseError::UnexpectedEnd { pos: self.end });
                    }
                    children.push(self.tree()?);
                }
                self.next()?;
                if children.len() != op.arity() {
                    return Err(ParseError::Arity {
                        pos,
                        op: op.name(),
                        expected: op.arity(),
                        found: children.len(),
                    });
                }
                Ok(Node::Apply(op, children))
            }
        }
    }
}

fn atom(pos: usize, a: &str) -> Result<Node, ParseError> {
    if let Some(o) = Operand::from_symbol(a) {
        return Ok(Node::Leaf(o));
    }
    let numeric = a
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'));
    if numeric {
        if let Ok(v) = a.parse::<f64>() {
            if v.is_finite() {
                return Ok(Node::Const(v));
            }
        }
    }
    Err(ParseError::UnknownOperand {
        pos,
        name: a.to_string(),
    })
}

pub fn parse(text: &str) -> Result<ExprTree, ParseError> {
    let mut p = Parser {
        toks: tokenize(text),
        at: 0,
        end: text.len(),
    };
    let root = p.tree()?;
    if let Some((pos, _)) = p.toks.get(p.at) {
        return Err(ParseError::Trailing { pos: *pos });
    }
    Ok(ExprTree::new(root))
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Leaf(o) => f.write_str(o.symbol()),
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Apply(op, children) => {
                write!(f, "({}", op.name())?;
                for c in children {
                    write!(f, " {c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for ExprTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root().fmt(f)
    }
}

pub fn format(tree: &ExprTree) -> String {
    tree.to_string()
}

/// Parses a `.fn` document. Errors carry the 1-based line number.
pub fn parse_fn_file(text: &str) -> Result<Vec<ExprTree>, (usize, ParseError)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .map(|(i, l)| parse(l).map_err(|e| (i + 1, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Dim, Stat};

    #[test]
    fn parses_l1() {
        let t = parse("(sum_g (abs W_I))").unwrap();
        assert_eq!(
            t.root(),
            &Node::unary(
                Op::Stat(Stat::Sum, Dim::Global),
                Node::unary(Op::Abs, Node::leaf(Operand::WI))
            )
        );
    }

    #[test]
    fn canonical_formatting() {
        let t = parse("  ( div\n(var_g F+ )   (var_g F-))").unwrap();
        assert_eq!(format(&t), "(div (var_g F+) (var_g F-))");
        assert_eq!(parse(&format(&t)).unwrap(), t);
        let c = parse("(mul 0.5 (sum_g W))").unwrap();
        assert_eq!(format(&c), "(mul 0.5 (sum_g W))");
        assert_eq!(format(&parse("(add -2 F)").unwrap()), "(add -2.0 F)");
    }

    #[test]
    fn unknown_operator_is_named() {
        let e = parse("(bogus W)").unwrap_err();
        assert!(matches!(e, ParseError::UnknownOperator { ref name, pos: 1 } if name == "bogus"));
        assert!(e.to_string().contains("bogus"));
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(parse("(abs W W)"), Err(ParseError::Arity { .. })));
        assert!(matches!(
            parse("(abs W"),
            Err(ParseError::UnexpectedEnd { .. })
        ));
        assert!(matches!(parse("W B"), Err(ParseError::Trailing { pos: 2 })));
        assert!(matches!(parse("Q"), Err(ParseError::UnknownOperand { .. })));
        assert!(matches!(parse(")"), Err(ParseError::Unexpected { .. })));
        assert!(matches!(parse(""), Err(ParseError::UnexpectedEnd { .. })));
    }

    #[test]
    fn fn_file_skips_comments() {
        let doc = "# l1 norm\n(sum_g (abs W_I))\n\n# bn\n(abs (slice B))\n";
        let trees = parse_fn_file(doc).unwrap();
        assert_eq!(trees.len(), 2);
        let bad = parse_fn_file("(abs B)\n(nope F)\n").unwrap_err();
        assert_eq!(bad.0, 2);
    }
}
