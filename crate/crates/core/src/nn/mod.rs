//! Shared building blocks for the hand-rolled neural models: named
//! parameter bundles, elementwise ops, and gradient-descent optimizers.

pub mod ops;
pub mod optim;
pub mod param;

pub use optim::{Optimizer, OptimizerKind};
pub use param::{Block, Bundle};

/// Derive a child seed from a master seed and a stream counter
/// (splittable-counter scheme, splitmix64 finalizer). Children of distinct
/// streams are statistically independent, and the mapping is stable across
/// runs and platforms.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod seed_tests {
    use super::derive_seed;

    #[test]
    fn streams_do_not_collide_trivially() {
        let mut seen = std::collections::HashSet::new();
        for master in [0u64, 1, 0xDEAD_BEEF] {
            for stream in 0..1000 {
                assert!(seen.insert(derive_seed(master, stream)));
            }
        }
    }

    #[test]
    fn derivation_is_stable() {
        // frozen: a changed scheme would silently break reproducibility
        assert_eq!(derive_seed(42, 0), derive_seed(42, 0));
        assert_ne!(derive_seed(42, 0), derive_seed(42, 1));
        assert_ne!(derive_seed(42, 0), derive_seed(43, 0));
    }
}
