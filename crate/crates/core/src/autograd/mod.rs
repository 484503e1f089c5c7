//! Reverse-mode differentiation over dense f64 tensors.
//!
//! A [`Graph`] records every primitive together with its output. The backward
//! rule of each primitive is expressed with the same primitives, so a gradient
//! obtained through [`Graph::grad_with_graph`] is an ordinary node and can be
//! differentiated again. Unrolled inner optimisation loops rely on this.

mod graph;
mod params;
mod tensor;

pub use graph::{Graph, Var, SKIP};
pub use params::{ParamEntry, ParamLayout, ParamVector};
pub use tensor::Tensor;
