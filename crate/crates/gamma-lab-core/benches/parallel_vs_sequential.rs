//! Placeholder bench target; filled in once the energy kernels settle.
fn main() {}
