//! Small reverse-mode autodiff engine and the neural layers used by the
//! learned message-passing models.

pub mod adam;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;

pub use adam::{adam_step, Adam, AdamConfig};
pub use error::{NnError, Result};
pub use gradcheck::{gradcheck, relative_error, GradcheckConfig, GradcheckReport};
pub use layers::{gru, gru_cell, graph_norm, init_gru, init_mlp, mlp, mlp_forward, Activation, GruSpec, MlpSpec};
pub use params::{Bound, Param, ParamStore};
pub use tape::{Gradients, Tape, Var};
