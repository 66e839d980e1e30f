use core::fmt::Debug;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

/// Floating-point element type of a [`super::Tensor`].
pub trait Real:
    Float + AddAssign + SubAssign + MulAssign + DivAssign + Debug + Default + Send + Sync + 'static
{
    const DTYPE: DType;

    fn of(x: f64) -> Self;

    fn as_f64(self) -> f64;

    // Routed through `libm` so results do not depend on whether some other
    // crate in the build enables `std` float math.
    fn libm_exp(self) -> Self;

    fn libm_ln(self) -> Self;

    fn libm_tanh(self) -> Self;
}

impl Real for f64 {
    const DTYPE: DType = DType::F64;

    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline]
    fn libm_exp(self) -> Self {
        libm::exp(self)
    }

    #[inline]
    fn libm_ln(self) -> Self {
        libm::log(self)
    }

    #[inline]
    fn libm_tanh(self) -> Self {
        libm::tanh(self)
    }
}

impl Real for f32 {
    const DTYPE: DType = DType::F32;

    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn libm_exp(self) -> Self {
        libm::expf(self)
    }

    #[inline]
    fn libm_ln(self) -> Self {
        libm::logf(self)
    }

    #[inline]
    fn libm_tanh(self) -> Self {
        libm::tanhf(self)
    }
}
