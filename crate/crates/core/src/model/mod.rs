pub mod arch;
mod backward;
pub mod forward;
pub mod gradcheck;
pub mod input;
pub mod loss;
pub mod step;

pub use arch::{count_parameters, parameter_breakdown, Architecture, Layout, TensorSpec};
pub use forward::{Cache, HeadRows, Mode, Network, Outputs};
pub use input::{NetInput, Targets};
pub use loss::{joint_loss, LossConfig, LossOutput};
pub use step::{loss_and_gradients, loss_only};
