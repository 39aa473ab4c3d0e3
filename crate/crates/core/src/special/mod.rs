//! Special functions used by the summary-statistics theory.

pub mod forces;
pub mod lambert;
pub mod quadrature;
pub mod table;

pub use forces::{
    epsilon_bias, f_high_temp, f_low_temp, force_f, force_g, force_g_prime, g_high_temp,
    g_low_temp, ForceParams,
};
pub use lambert::{lambert_w0, lambert_wm1};
pub use table::{ForceTable, Forces};

/// Error function, accurate to a few ulp.
#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}
