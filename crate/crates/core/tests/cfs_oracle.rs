mod oracles;

use elastisim::cfs::allocate_period;
use oracles::{allocation_violations, build, oracle_allocate, random_hierarchy, root_shapes};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SHARES: [u64; 3] = [1024, 2048, 3072];

fn share_assignments(count: usize) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..count {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                SHARES.iter().map(move |&s| {
                    let mut next = prefix.clone();
                    next.push(s);
                    next
                })
            })
            .collect();
    }
    out
}

#[test]
fn matches_progressive_filling_on_small_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let shapes = root_shapes(4, 1);
    assert_eq!(shapes.len(), 54);
    let mut checked = 0usize;
    for shape in &shapes {
        let leaves = shape.leaves();
        let mut assignments = share_assignments(shape.weighted_nodes());
        // wide shapes: a fixed random subset of the share combinations
        while assignments.len() > 243 {
            let i = rng.random_range(0..assignments.len());
            assignments.swap_remove(i);
        }
        for shares in assignments {
            for _ in 0..3 {
                let demands: Vec<u64> = (0..leaves).map(|_| rng.random_range(0..=10)).collect();
                let tree = build(shape, &mut shares.iter().copied(), &mut demands.iter().copied());
                for capacity in 0..=10 {
                    let got = allocate_period(&tree, capacity).unwrap();
                    for (leaf, want) in oracle_allocate(&tree, capacity) {
                        assert_eq!(got.grant(&leaf), want, "{tree:?} capacity {capacity} leaf {leaf}");
                    }
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 10_000, "{checked}");
}

#[test]
fn flat_trees_match_exhaustively() {
    // every demand vector for up to three sibling leaves
    for leaves in 1..=3u32 {
        let shape = oracles::Shape::Group(vec![oracles::Shape::Leaf; leaves as usize]);
        for shares in share_assignments(leaves as usize) {
            for code in 0..11u64.pow(leaves) {
                let demands: Vec<u64> = (0..leaves).map(|i| code / 11u64.pow(i) % 11).collect();
                let tree = build(&shape, &mut shares.iter().copied(), &mut demands.iter().copied());
                for capacity in 0..=10 {
                    let got = allocate_period(&tree, capacity).unwrap();
                    for (leaf, want) in oracle_allocate(&tree, capacity) {
                        assert_eq!(got.grant(&leaf), want, "{demands:?} {shares:?} capacity {capacity}");
                    }
                }
            }
        }
    }
}

#[test]
fn random_hierarchies_keep_scheduling_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let period = 100_000;
        let tree = random_hierarchy(&mut rng, 8, period);
        let capacity = period * rng.random_range(1..=4);
        let result = allocate_period(&tree, capacity).unwrap();
        let problems = allocation_violations(&tree, capacity, &|leaf| result.grant(leaf));
        assert!(problems.is_empty(), "{problems:?}\n{tree:?}");
        assert_eq!(result.grants.values().sum::<u64>(), result.total_used_us);
    }
}
