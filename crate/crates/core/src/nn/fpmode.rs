//! Flush-to-zero floating-point mode for training loops.

/// Sets flush-to-zero and denormals-are-zero on the current thread until dropped,
/// then restores the previous mode. A no-op off x86_64.
pub(crate) struct FlushDenormals {
    #[cfg(target_arch = "x86_64")]
    saved: u32,
}

#[cfg(target_arch = "x86_64")]
#[allow(deprecated)]
impl FlushDenormals {
    const FTZ_DAZ: u32 = 0x8040;

    pub(crate) fn enable() -> Self {
        use std::arch::x86_64::{_mm_getcsr, _mm_setcsr};
        // SAFETY: SSE is part of the x86_64 baseline; only the two flush bits change.
        let saved = unsafe { _mm_getcsr() };
        unsafe { _mm_setcsr(saved | Self::FTZ_DAZ) };
        Self { saved }
    }
}

#[cfg(target_arch = "x86_64")]
#[allow(deprecated)]
impl Drop for FlushDenormals {
    fn drop(&mut self) {
        // SAFETY: restores the value read in `enable`.
        unsafe { std::arch::x86_64::_mm_setcsr(self.saved) };
    }
}

#[cfg(not(target_arch = "x86_64"))]
impl FlushDenormals {
    pub(crate) fn enable() -> Self {
        Self {}
    }
}

#[cfg(all(test, target_arch = "x86_64"))]
mod tests {
    use super::*;
    use std::hint::black_box;

    #[test]
    fn flushes_while_held_and_restores_on_drop() {
        let tiny = f32::MIN_POSITIVE;
        {
            let _mode = FlushDenormals::enable();
            assert_eq!(black_box(tiny) / black_box(2.0), 0.0);
        }
        assert!((black_box(tiny) / black_box(2.0)).is_subnormal());
    }
}
