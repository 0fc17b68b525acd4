use fixbn::scale_search::{self, ScaleSearchConfig, DEFAULT_BUDGET};
use fixbn::seqgen::{self, CeilSequence};
use fixbn::Exec;

const KN_1_TO_20: [i64; 20] = [1, 1, 2, 3, 5, 7, 9, 11, 13, 22, 25, 29, 41, 46, 51, 67, 73, 79, 99, 106];

fn ceil_div(a: i64, b: i64) -> i64 {
    -((-a).div_euclid(b))
}

/// Any `(T, B)` reproducing `s` as `ceil((i*T - B)/K)`, by exhaustive search
/// over a box that is far larger than needed.
fn brute_admits(s: &CeilSequence, k: i64) -> bool {
    let n = s.len() as i64;
    let v = s.values();
    let t_max = k * (v[v.len() - 1] as i64 + 1);
    (-k..=t_max).any(|t| {
        (-(n + 2) * (k + t.abs())..=(n + 2) * (k + t.abs())).any(|b| {
            v.iter()
                .enumerate()
                .all(|(idx, &si)| ceil_div((idx as i64 + 1) * t - b, k) == si as i64)
        })
    })
}

#[test]
fn find_agrees_with_exhaustive_search() {
    for n in 1..=7 {
        for s in seqgen::enumerate(n) {
            for k in 1..=14 {
                assert_eq!(
                    scale_search::find_tb_for_k(&s, k).is_some(),
                    brute_admits(&s, k),
                    "{s} at K={k}"
                );
            }
        }
    }
}

#[test]
fn found_pairs_reproduce_the_sequence() {
    for n in [5, 9, 15] {
        for s in seqgen::enumerate(n) {
            for k in [51, 64, 85, 100] {
                if let Some((t, b)) = scale_search::find_tb_for_k(&s, k) {
                    let got: Vec<i32> = (1..=n as i64).map(|i| ceil_div(i * t - b, k) as i32).collect();
                    assert_eq!(got, s.values(), "K={k}");
                }
            }
        }
    }
}

#[test]
fn table_values_up_to_20() {
    for (idx, &kn) in KN_1_TO_20.iter().enumerate() {
        let n = idx + 1;
        let r = scale_search::search_kn(&ScaleSearchConfig::new(n)).unwrap();
        assert_eq!(r.kn, kn, "n = {n}");
        assert!(r.minimal_certified, "n = {n}");
        if kn > 1 {
            let w = r.minimality_witness.as_ref().unwrap();
            assert!(scale_search::find_tb_for_k(w, kn - 1).is_none());
        }
    }
}

#[test]
fn window_size_does_not_change_the_answer() {
    for n in 1..=20 {
        let small = scale_search::search_kn(&ScaleSearchConfig::new(n).with_window(1)).unwrap();
        let large = scale_search::search_kn(&ScaleSearchConfig::new(n).with_window(100_000)).unwrap();
        assert_eq!(small.kn, large.kn, "n = {n}");
        assert_eq!(small.sequence_count, large.sequence_count);
    }
}

#[test]
fn execution_modes_agree() {
    for n in [10, 15, 19] {
        let seq = scale_search::search_kn(&ScaleSearchConfig::new(n).with_exec(Exec::Sequential)).unwrap();
        let par = scale_search::search_kn(&ScaleSearchConfig::new(n).with_exec(Exec::Parallel)).unwrap();
        assert_eq!(seq.kn, par.kn);
        assert_eq!(seq.witness_counts, par.witness_counts);
        assert_eq!(
            scale_search::list_satisfied_k_with(n, 120, DEFAULT_BUDGET, Exec::Sequential).unwrap(),
            scale_search::list_satisfied_k_with(n, 120, DEFAULT_BUDGET, Exec::Parallel).unwrap()
        );
    }
}

#[test]
fn direct_minimal_scan_matches_search() {
    for n in 1..=14 {
        let seqs = seqgen::enumerate(n);
        let direct = (1..)
            .find(|&k| seqs.iter().all(|s| scale_search::find_tb_for_k(s, k).is_some()))
            .unwrap();
        let r = scale_search::search_kn(&ScaleSearchConfig::new(n).with_start(1)).unwrap();
        assert_eq!(r.kn, direct, "n = {n}");
    }
}

#[test]
fn every_scale_above_the_blanket_threshold_is_satisfied() {
    for n in 5..=15 {
        let blanket = scale_search::blanket_threshold(n);
        let listed = scale_search::list_satisfied_k_with(n, blanket + 1, DEFAULT_BUDGET, Exec::default()).unwrap();
        let seqs = seqgen::enumerate(n);
        for k in blanket + 1..=blanket + 40 {
            assert!(
                seqs.iter().all(|s| scale_search::find_tb_for_k(s, k).is_some()),
                "n={n} K={k}"
            );
        }
        assert_eq!(listed.last(), Some(&(blanket + 1)));
    }
}

#[test]
fn satisfied_list_for_15() {
    let l = scale_search::list_satisfied_k(15, 85).unwrap();
    let expected = vec![
        51, 61, 62, 63, 64, 67, 68, 69, 73, 74, 75, 76, 77, 78, 79, 80, 81, 82, 83, 85,
    ];
    assert_eq!(l, expected);
}

#[test]
fn growth_is_quadratic() {
    for (idx, &kn) in KN_1_TO_20.iter().enumerate().skip(14) {
        let m = idx as f64;
        let ratio = kn as f64 / (m * m);
        assert!(ratio > 0.25 && ratio < 0.5, "n={}: {ratio}", idx + 1);
        let b = scale_search::kn_bounds(idx + 1);
        assert!(b.lower <= kn && kn <= b.upper);
    }
}
