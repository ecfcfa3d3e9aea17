use super::op::{Op, Operand};

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(Operand),
    /// Literal constant. Accepted from hand-written text, never generated.
    Const(f64),
    Apply(Op, Vec<Node>),
}

impl Node {
    pub fn leaf(o: Operand) -> Self {
        Node::Leaf(o)
    }

    pub fn unary(op: Op, a: Node) -> Self {
        Node::Apply(op, vec![a])
    }

    pub fn binary(op: Op, a: Node, b: Node) -> Self {
        Node::Apply(op, vec![a, b])
    }

    pub fn children(&self) -> &[Node] {
        match self {
            Node::Apply(_, c) => c,
            _ => &[],
        }
    }

    /// Levels on the longest root-to-leaf path; a lone leaf has height 1.
    pub fn height(&self) -> usize {
        1 + self.children().iter().map(Node::height).max().unwrap_or(0)
    }

    pub fn size(&self) -> usize {
        1 + self.children().iter().map(Node::size).sum::<usize>()
    }

    pub fn mentions(&self, pred: &impl Fn(Operand) -> bool) -> bool {
        match self {
            Node::Leaf(o) => pred(*o),
            Node::Const(_) => false,
            Node::Apply(_, c) => c.iter().any(|n| n.mentions(pred)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TreeKind {
    Labelless,
    /// Contains `F+`/`F-`; evaluated once per class and averaged.
    LabelAware,
}

/// A scoring-function genome.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprTree {
    root: Node,
    kind: TreeKind,
}

impl ExprTree {
    pub fn new(root: Node) -> Self {
        let kind = if root.mentions(&Operand::is_partition) {
            TreeKind::LabelAware
        } else {
            TreeKind::Labelless
        };
        Self { root, kind }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn into_root(self) -> Node {
        self.root
    }

    pub fn kind(&self) -> TreeKind {
        self.kind
    }

    pub fn is_label_aware(&self) -> bool {
        self.kind == TreeKind::LabelAware
    }

    pub fn depth(&self) -> usize {
        self.root.height()
    }

    pub fn size(&self) -> usize {
        self.root.size()
    }

    /// Node at pre-order position `index`.
    pub fn node(&self, index: usize) -> Option<&Node> {
        fn walk<'a>(n: &'a Node, index: &mut usize) -> Option<&'a Node> {
            if *index == 0 {
                return Some(n);
            }
            *index -= 1;
            for c in n.children() {
                if let Some(found) = walk(c, index) {
                    return Some(found);
                }
            }
            None
        }
        let mut i = index;
        walk(&self.root, &mut i)
    }

    /// Depth level (root = 0) of every node in pre-order.
    pub fn levels(&self) -> Vec<usize> {
        fn walk(n: &Node, level: usize, out: &mut Vec<usize>) {
            out.push(level);
            for c in n.children() {
                walk(c, level + 1, out);
            }
        }
        let mut out = Vec::with_capacity(self.size());
        walk(&self.root, 0, &mut out);
        out
    }

    /// A copy with the subtree at pre-order `index` replaced by `with`.
    pub fn replace(&self, index: usize, with: Node) -> ExprTree {
        fn walk(n: &Node, index: &mut usize, with: &mut Option<Node>) -> Node {
            if *index == 0 {
                *index = usize::MAX;
                return with.take().expect("replacement used once");
            }
            if *index != usize::MAX {
                *index -= 1;
            }
            match n {
                Node::Apply(op, c) => {
                    Node::Apply(*op, c.iter().map(|ch| walk(ch, index, with)).collect())
                }
                other => other.clone(),
            }
        }
        let mut i = index;
        let mut w = Some(with);
        ExprTree::new(walk(&self.root, &mut i, &mut w))
    }
}

impl From<Node> for ExprTree {
    fn from(n: Node) -> Self {
        ExprTree::new(n)
    }
}
