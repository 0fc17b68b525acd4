use std::collections::BTreeSet;

use fixbn::rational::{self, int, ratio, Rational};
use fixbn::seqgen::{self, AffineReal, CeilSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn direct(t: &Rational, b: &Rational, n: usize) -> Vec<i32> {
    (1..=n as i64)
        .map(|i| rational::ceil_i64(&(int(i) * t - b)).unwrap() as i32)
        .collect()
}

/// Every sequence hit by a grid of `(t, b)` fine enough to meet every cell
/// of the arrangement of lines `i*t - b = m`.
fn grid_sequences(n: usize) -> BTreeSet<Vec<i32>> {
    let mut out = BTreeSet::new();
    let qmax = 2 * n as i64;
    for q in 1..=qmax {
        for p in 0..q {
            let t = ratio(p, q);
            let lo = &t - int(1);
            let mut cuts: BTreeSet<Rational> = BTreeSet::new();
            cuts.insert(lo.clone());
            for i in 1..=n as i64 {
                let it = int(i) * &t;
                for m in rational::floor_i64(&(&it - &t)).unwrap() - 1..=rational::ceil_i64(&(&it - &lo)).unwrap() + 1 {
                    let b = &it - int(m);
                    if b >= lo && b < t {
                        cuts.insert(b);
                    }
                }
            }
            let cuts: Vec<_> = cuts.into_iter().collect();
            for (idx, c) in cuts.iter().enumerate() {
                let next = cuts.get(idx + 1).cloned().unwrap_or_else(|| t.clone());
                for b in [c.clone(), (c + &next) / int(2)] {
                    out.insert(direct(&t, &b, n));
                }
            }
        }
    }
    out
}

#[test]
fn enumeration_matches_rational_grid() {
    for n in 1..=12 {
        let enumerated: BTreeSet<Vec<i32>> = seqgen::enumerate(n).iter().map(|s| s.values().to_vec()).collect();
        assert_eq!(enumerated, grid_sequences(n), "n = {n}");
    }
}

#[test]
fn known_counts() {
    let counts: Vec<usize> = (1..=7).map(|n| seqgen::enumerate(n).len()).collect();
    assert_eq!(counts, vec![1, 2, 4, 8, 14, 24, 36]);
    assert_eq!(seqgen::enumerate(15).len(), 346);
    assert_eq!(seqgen::count_realizable(20, u64::MAX), 816);
    assert_eq!(seqgen::count_realizable(20, 100), 101);
}

#[test]
fn prefix_closed_and_extendable() {
    for n in 1..=12 {
        let shorter: BTreeSet<Vec<i32>> = seqgen::enumerate(n).iter().map(|s| s.values().to_vec()).collect();
        let longer = seqgen::enumerate(n + 1);
        for s in &longer {
            assert!(shorter.contains(&s.values()[..n]), "prefix of {s} not realizable");
        }
        let heads: BTreeSet<Vec<i32>> = longer.iter().map(|s| s.values()[..n].to_vec()).collect();
        assert_eq!(heads, shorter, "some length-{n} sequence has no extension");
        let base: Vec<CeilSequence> = seqgen::enumerate(n);
        assert_eq!(seqgen::extend_sequences(&base), longer);
    }
}

#[test]
fn random_operators_land_in_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sets: Vec<BTreeSet<Vec<i32>>> = (0..=15)
        .map(|n| {
            seqgen::enumerate(n.max(1))
                .iter()
                .map(|s| s.values().to_vec())
                .collect()
        })
        .collect();
    for _ in 0..10_000 {
        let n = rng.random_range(1..=15);
        let t = ratio(rng.random_range(-5000..5000), rng.random_range(1..2000));
        if t == int(0) {
            continue;
        }
        let b = ratio(rng.random_range(-50_000..50_000), rng.random_range(1..2000));
        let na = seqgen::normalize_affine(&AffineReal::new(t, b).unwrap());
        let s = seqgen::make_sequence(&na, n);
        assert!(sets[n].contains(s.values()), "{s} missing at n={n}");
        assert!(seqgen::is_realizable(s.values()));
    }
}

#[test]
fn normalization_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let n = rng.random_range(1..=31);
        let mut t = ratio(rng.random_range(-100_000..100_000), rng.random_range(1..5000));
        if t == int(0) {
            t = ratio(1, 3);
        }
        let b = ratio(rng.random_range(-1_000_000..1_000_000), rng.random_range(1..5000));
        let a = AffineReal::new(t.clone(), b.clone()).unwrap();
        let na = seqgen::normalize_affine(&a);
        assert_eq!(na.reconstruct(), a);
        assert!(na.t >= int(0) && na.t < int(1));
        assert_eq!(rational::ceil_i64(&(&na.t - &na.b)).unwrap(), 1);
        let s = seqgen::make_sequence(&na, n);
        let (ts, bs) = if t < int(0) { (-t, -b) } else { (t, b) };
        let expected: Vec<_> = direct(&ts, &bs, n).into_iter().map(num_bigint::BigInt::from).collect();
        assert_eq!(na.denormalize_sequence(&s), expected);
    }
}

#[test]
fn dump_round_trip() {
    let seqs = seqgen::enumerate(9);
    let mut buf = Vec::new();
    seqgen::write_dump(&mut buf, &seqs).unwrap();
    let back = seqgen::read_dump(&buf[..]).unwrap();
    assert_eq!(back, seqs);
    assert!(seqgen::read_dump(&b"1,2,4\n"[..]).is_err());
}
