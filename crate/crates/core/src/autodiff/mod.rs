//! Reverse-mode automatic differentiation over a scalar tape.
//!
//! Every arithmetic operation on a [`Var`] appends one node holding its value
//! and the local partials with respect to its parents. Parents always have
//! smaller ids than their children, so a single reverse sweep over the node
//! list is a valid topological traversal.
//!
//! ```
//! use cotune::autodiff::Tape;
//!
//! let tape = Tape::new();
//! let x = tape.leaf(2.0).unwrap();
//! let y = tape.leaf(3.0).unwrap();
//! let f = x * y;
//! let g = tape.backward(f).unwrap();
//! assert_eq!(g.wrt(x), 3.0);
//! assert_eq!(g.wrt(y), 2.0);
//! ```

mod check;
mod scalar;
mod tape;

pub use check::{central_difference, close, grad_check, relative_error, ABS_FLOOR};
pub use scalar::{values, Scalar};
pub use tape::{Gradients, Node, Op, Tape, Var, ABS_SMOOTH_EPS};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("non-finite input value {0}")]
    NonFiniteInput(f64),
    #[error("primitive `{op}` produced a non-finite value at node {node}")]
    NonFinite { op: Op, node: usize },
    #[error("primitive `{op}` evaluated outside its domain (argument {value})")]
    Domain { op: Op, value: f64 },
    #[error("primitive `{op}` expects {expected} arguments, got {got}")]
    Arity { op: Op, expected: usize, got: usize },
    #[error("node {0} does not belong to this tape")]
    ForeignNode(usize),
}
