//! Differentiable co-tuning of simulator and controller parameters.
//!
//! A nominal controller designed on a parameterized model is transferred to
//! a black-box deployment system by alternating between single deployment
//! rollouts and gradient-based updates of both the model parameters β and
//! the controller parameters θ, computed by backpropagation through model
//! rollouts.
//!
//! Modules, bottom-up:
//!
//! * [`autodiff`]: scalar reverse-mode tape.
//! * [`dynamics`]: cart-pole and mass-spring-damper models, the deployment
//!   [`System`](dynamics::System).
//! * [`controllers`]: linear, PD and MLP policies; LQR and MLP synthesis.
//! * [`objectives`]: task and identification losses.
//! * [`tuner`]: Adam, the termination test, and the tuning strategies.
//! * [`harness`]: config-driven experiments, CSV output, strategy comparison.

pub mod autodiff;
pub mod controllers;
pub mod dynamics;
pub mod harness;
pub mod objectives;
pub mod tuner;
