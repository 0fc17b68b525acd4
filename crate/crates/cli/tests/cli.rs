use std::fs;

use fixbn_cli::{run, EXIT_BUDGET, EXIT_CHECK_FAILED, EXIT_IO, EXIT_NO_SOLUTION, EXIT_OK, EXIT_SCHEMA, EXIT_USAGE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("fixbn").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn search_kn_prints_the_scale() {
    let (code, out, err) = cli(&["search-kn", "--n", "15"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("K_15 = 51 "), "{out}");
    assert!(err.contains("K=51"), "progress goes to stderr: {err}");
    let (_, out, err) = cli(&["search-kn", "--n", "15", "--quiet", "--json"]);
    assert!(err.is_empty());
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["kn"], 51);
    assert_eq!(v["minimal_certified"], true);
    assert_eq!(v["sequence_count"], 346);
}

#[test]
fn search_range_and_start() {
    let (code, out, _) = cli(&["search-kn", "--n", "3", "--to", "5", "-q", "--sequential"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().count(), 3);
    let (_, out, _) = cli(&["search-kn", "--n", "15", "--start", "60", "-q"]);
    assert!(out.contains("K_15 = 61") && out.contains("not certified"), "{out}");
}

#[test]
fn convert_worked_example() {
    let (code, out, _) = cli(&[
        "convert", "--t", "0.618", "--b", "0.198", "--k", "64", "--ymin", "0", "--ymax", "15", "--all",
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out, "T=39 B=6 K=64\nT=39 B=7 K=64\nT=39 B=8 K=64\n");
}

#[test]
fn convert_output_always_verifies() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..60 {
        let t = format!("{}/{}", rng.random_range(-3000..3000i64) | 1, rng.random_range(1..500));
        let b = format!("{}e-3", rng.random_range(-90_000..90_000));
        let ymin = rng.random_range(-8..=0i64);
        let ymax = ymin + [3, 7, 15][rng.random_range(0..3)];
        let (ymin, ymax) = (ymin.to_string(), ymax.to_string());
        let (code, out, err) = cli(&[
            "convert", "--t", &t, "--b", &b, "--ymin", &ymin, "--ymax", &ymax, "--json",
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
        let v: Value = serde_json::from_str(&out).unwrap();
        let Some(sols) = v["solutions"].as_array() else {
            assert!(v["sign"].is_object());
            continue;
        };
        let k = v["K"].to_string();
        for s in sols {
            let (tt, bb) = (s["T"].to_string(), s["B"].to_string());
            let (code, out, _) = cli(&[
                "verify", "--t", &t, "--b", &b, "--T", &tt, "--B", &bb, "--k", &k, "--ymin", &ymin, "--ymax", &ymax,
            ]);
            assert_eq!(code, EXIT_OK, "{t} {b} -> ({tt}, {bb}): {out}");
        }
    }
}

#[test]
fn verify_reports_first_failing_input() {
    let (code, out, _) = cli(&[
        "verify", "--t", "0.618", "--b", "0.198", "--T", "39", "--B", "12", "--k", "64", "--ymax", "15",
    ]);
    assert_eq!(code, EXIT_CHECK_FAILED);
    assert!(out.starts_with("mismatch at N=9"), "{out}");
    let (code, out, _) = cli(&[
        "verify", "--t", "0.618", "--b", "0.198", "--T", "39", "--B", "7", "--k", "64", "--ymax", "15",
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("certified"));
}

#[test]
fn negative_and_fractional_flags() {
    let (code, out, err) = cli(&[
        "convert", "--t", "-1/3", "--b", "-0.2", "--ymin", "-8", "--ymax", "7", "--k", "64",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.starts_with("T=-21"), "{out}");
    let (code, _, _) = cli(&[
        "verify", "--t", "-1/3", "--b", "-0.2", "--T", "-21", "--B", "-2", "--k", "64", "--ymin", "-8", "--ymax", "7",
    ]);
    assert_eq!(code, EXIT_OK);
}

#[test]
fn sign_threshold_output() {
    let (code, out, _) = cli(&["convert", "--t", "0.01", "--b", "-0.5", "--k", "4", "--ymax", "15"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("sign n0=0"), "{out}");
}

#[test]
fn no_solution_exit_code() {
    let (code, out, err) = cli(&[
        "convert", "--t", "1/11", "--b", "-10/11", "--k", "50", "--ymax", "15", "--json",
    ]);
    assert_eq!(code, EXIT_NO_SOLUTION);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["error"]["suggested_k"], 51);
    assert!(err.contains("1,2,2,2,2,2,2,2,2,2,2,2,3,3,3"), "{err}");
}

#[test]
fn list_and_bounds() {
    let (_, out, _) = cli(&["list-k", "--n", "15", "--max", "70"]);
    assert_eq!(out.trim(), "51 61 62 63 64 67 68 69");
    let (_, out, _) = cli(&["bounds", "--n", "15", "--json"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!((v["lower"].as_i64(), v["upper"].as_i64()), (Some(49), Some(85)));
}

#[test]
fn usage_errors() {
    assert_eq!(cli(&[]).0, EXIT_USAGE);
    assert_eq!(cli(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(
        cli(&["convert", "--t", "abc", "--b", "0", "--ymax", "15"]).0,
        EXIT_USAGE
    );
    assert_eq!(cli(&["convert", "--t", "0", "--b", "0", "--ymax", "15"]).0, EXIT_USAGE);
    assert_eq!(
        cli(&["convert", "--t", "1", "--b", "0", "--ymin", "3", "--ymax", "3"]).0,
        EXIT_USAGE
    );
    assert_eq!(cli(&["search-kn", "--n", "0"]).0, EXIT_USAGE);
    assert_eq!(cli(&["search-kn", "--n", "5", "--threads", "0"]).0, EXIT_USAGE);
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("search-kn"));
}

#[test]
fn budget_exit_code() {
    let (code, _, err) = cli(&["search-kn", "--n", "20", "--budget", "100", "-q"]);
    assert_eq!(code, EXIT_BUDGET);
    assert!(err.contains("budget"), "{err}");
}

#[test]
fn fold_and_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let folded = dir.path().join("f.json");
    fs::write(
        &model,
        r#"{"layers":[
            {"name":"a","mu":"0.5","sigma":"2","gamma":"1","beta":"0.25","c":"0","w":15,"a":15,"kernel":[3,3]},
            {"name":"b","mu":"-0.12","sigma":"0.7","gamma":"-1.3","beta":"0.4","c":"0.01","w":15,"a":15}],
          "metadata":{"arch":"tiny"}}"#,
    )
    .unwrap();
    let (m, f) = (model.to_str().unwrap(), folded.to_str().unwrap());
    let (code, out, _) = cli(&["fold", "--model", m, "--k", "64", "--out", f]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("2 certified"), "{out}");
    let text = fs::read_to_string(&folded).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["metadata"]["arch"], "tiny");
    assert_eq!(v["layers"][0]["source"]["kernel"], serde_json::json!([3, 3]));
    assert_eq!(v["layers"][0]["affine"]["t"], "30");
    assert_eq!(v["layers"][0]["certificate"]["mismatch_count"], 0);

    // stdout output is byte-identical to the file
    let (_, again, _) = cli(&["fold", "--model", m, "--k", "64"]);
    assert_eq!(again, text);

    let (code, out, _) = cli(&["compare", "--model", m, "--folded", f, "--samples", "500"]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.ends_with("2/2 layers agree everywhere\n"));

    // push B beyond its valid range
    let mut v = v;
    let b = v["layers"][0]["fixed"]["B"].as_i64().unwrap();
    v["layers"][0]["fixed"]["B"] = (b + 200).into();
    fs::write(&folded, serde_json::to_string(&v).unwrap()).unwrap();
    let (code, out, _) = cli(&["compare", "--model", m, "--folded", f, "--samples", "0"]);
    assert_eq!(code, EXIT_CHECK_FAILED);
    assert!(out.contains("first disagreement at N="), "{out}");
}

#[test]
fn fold_failures_and_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    fs::write(
        &model,
        r#"{"layers":[{"name":"hard","mu":"0","sigma":"1/165","gamma":"1","beta":"0","c":"-74/165","w":15,"a":15}]}"#,
    )
    .unwrap();
    let m = model.to_str().unwrap();
    let (code, out, err) = cli(&["fold", "--model", m, "--k", "50"]);
    assert_eq!(code, EXIT_NO_SOLUTION);
    assert!(err.contains("hard"));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["layers"][0]["error"]["suggested_k"], 51);
    assert_eq!(cli(&["fold", "--model", m, "--k", "51"]).0, EXIT_OK);

    fs::write(&model, r#"{"layers":[{"name":"x"}]}"#).unwrap();
    assert_eq!(cli(&["fold", "--model", m]).0, EXIT_SCHEMA);
    fs::write(
        &model,
        r#"{"layers":[{"name":"x","mu":"0","sigma":"0","gamma":"1","beta":"0","w":1,"a":15}]}"#,
    )
    .unwrap();
    assert_eq!(cli(&["fold", "--model", m]).0, EXIT_SCHEMA);
    let missing = dir.path().join("nope.json");
    assert_eq!(cli(&["fold", "--model", missing.to_str().unwrap()]).0, EXIT_IO);
}

#[test]
fn sequence_dump() {
    let (code, out, _) = cli(&["sequences", "--n", "15"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().count(), 346);
    assert_eq!(out.lines().next(), Some("1,1,1,1,1,1,1,1,1,1,1,1,1,1,1"));
}
