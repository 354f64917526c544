pub mod build_train;
pub mod check;
pub mod eval_forecast;
pub mod eval_intrinsic;
pub mod generate;
