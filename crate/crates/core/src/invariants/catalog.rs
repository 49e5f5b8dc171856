use std::sync::OnceLock;

use super::{build_invariant, InvariantDef};
use crate::algebra::{enumerate_shape_cores, CoreGraph};

/// The 24 default invariants: shape core edges and the power of `V(1,2,3)`.
pub const CATALOG_CORES: [(&[(usize, usize)], usize); 24] = [
    (&[(1, 2), (1, 2)], 2),
    (&[(1, 2), (1, 2), (1, 2), (1, 2)], 2),
    (&[(1, 2), (1, 3)], 2),
    (&[(1, 2), (1, 3), (1, 3), (1, 3)], 2),
    (&[(1, 2), (1, 2), (1, 3), (1, 3)], 2),
    (&[(1, 2), (1, 2), (1, 3), (1, 3), (2, 3), (2, 3)], 2),
    (&[(1, 2), (1, 2), (2, 3), (2, 3), (3, 4), (3, 4)], 2),
    (&[(1, 2), (2, 3), (3, 4), (1, 4)], 2),
    (&[(1, 2), (2, 3), (3, 4), (1, 4), (1, 4), (1, 4)], 2),
    (&[(1, 2), (2, 3), (2, 3), (2, 3), (3, 4), (1, 4), (1, 4), (1, 4)], 2),
    (&[(1, 2), (1, 2), (2, 3), (2, 3), (3, 4), (3, 4), (1, 4), (1, 4)], 2),
    (&[(1, 2), (1, 3), (1, 3)], 1),
    (&[(1, 2), (1, 3), (2, 3)], 1),
    (&[(1, 2), (1, 3), (2, 3), (2, 3), (2, 3)], 1),
    (&[(1, 2), (1, 2), (1, 3), (1, 3), (2, 3)], 1),
    (&[(1, 2), (1, 2), (2, 3), (3, 4), (3, 4)], 1),
    (&[(1, 2), (2, 3), (2, 3), (3, 4), (3, 4)], 1),
    (&[(1, 2), (2, 3), (2, 3), (3, 4), (1, 4), (1, 4), (1, 4)], 1),
    (&[(1, 2), (2, 3), (2, 3), (3, 4), (3, 4), (1, 4), (1, 4)], 1),
    (&[(1, 2), (1, 3), (1, 4), (1, 4), (2, 3)], 1),
    (&[(1, 2), (1, 3), (1, 4), (1, 4), (2, 3), (2, 3), (2, 3)], 1),
    (&[(1, 2), (2, 3), (3, 4), (1, 4), (1, 3)], 1),
    (&[(1, 2), (1, 2), (2, 3), (2, 3), (3, 4), (1, 4), (1, 3)], 1),
    (&[(1, 2), (2, 3), (3, 4), (3, 4), (1, 4), (1, 3), (2, 4)], 1),
];

/// The default 24-invariant descriptor, expanded once.
pub fn scami24_catalog() -> &'static [InvariantDef] {
    static CATALOG: OnceLock<Vec<InvariantDef>> = OnceLock::new();
    CATALOG.get_or_init(|| {
        CATALOG_CORES
            .iter()
            .map(|&(edges, power)| {
                let shape = CoreGraph::shape(edges).expect("catalog cores are valid");
                build_invariant(&shape, &CoreGraph::color_power(power))
            })
            .collect()
    })
}

/// The 100 candidates: every enumerated shape core on up to four points
/// with point degree at most four, paired with `V(1,2,3)^2` and then with
/// `V(1,2,3)`.
pub fn candidate_invariants() -> Vec<InvariantDef> {
    let cores = enumerate_shape_cores(4, 4);
    let mut out = Vec::with_capacity(2 * cores.len());
    for power in [2, 1] {
        let color = CoreGraph::color_power(power);
        out.extend(cores.iter().map(|s| build_invariant(s, &color)));
    }
    out
}
