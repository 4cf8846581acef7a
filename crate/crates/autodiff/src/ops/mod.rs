pub(crate) mod broadcast;
mod conv;
mod elementwise;
mod matmul;
mod resample;
mod shape;
