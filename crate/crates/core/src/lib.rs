pub mod autodiff;
pub mod eval;
pub mod lbm;
pub mod lstm;
pub mod pipeline;
pub mod qcbm;
pub mod qgan;
pub mod qsim;
pub mod seed;
pub mod vqvae;
