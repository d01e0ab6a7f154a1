//! Graph neural building blocks. Each layer owns named [`Parameter`]s and
//! exposes a `vars` method that claims its bound tape handles in registry
//! order, plus a stateless step/forward function over those handles.

mod dense;
mod evolve;
mod gcn;
mod gconv_lstm;
mod gru;
mod param;

pub use dense::{AffineVars, DenseLayer};
pub use evolve::{summarize, top_k_indices, EvolveGcnhLayer, EvolveVars};
pub use gcn::GcnLayer;
pub use gconv_lstm::{GConvLstmCell, GConvLstmVars, Propagation};
pub use gru::{GruCell, GruVars};
pub use param::{check_unique_names, Module, ParamCursor, Parameter};
