use fixbn::bnfold::{self, BnLayerParams};
use fixbn::model::{self, ModelFile};
use fixbn::oracle::{self, DEFAULT_MARGIN};
use fixbn::rational::ratio;
use fixbn::Exec;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = BnLayerParams> {
    (
        (-5000i64..5000, 1i64..500),
        (1i64..5000, 1i64..500),
        (1i64..5000, 1i64..500, any::<bool>()),
        (-5000i64..5000, 1i64..500),
        (-2000i64..2000, 1i64..500),
        1i64..16,
        prop::sample::select(vec![1i64, 3, 7, 15]),
        -2i64..=0,
        1i64..=2,
    )
        .prop_map(|(mu, sigma, gamma, beta, c, w, a, y_min, y_max)| BnLayerParams {
            mu: ratio(mu.0, mu.1),
            sigma: ratio(sigma.0, sigma.1),
            gamma: ratio(if gamma.2 { -gamma.0 } else { gamma.0 }, gamma.1),
            beta: ratio(beta.0, beta.1),
            c: ratio(c.0, c.1),
            w,
            a,
            y_min,
            y_max,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn fold_is_exact(p in params()) {
        let f = bnfold::fold_bn(&p).unwrap();
        let range = p.quant_range().unwrap();
        let (lo, hi) = oracle::transition_window(f.t(), f.b(), range, DEFAULT_MARGIN);
        prop_assume!(hi - lo < 200_000);
        for n in lo..=hi {
            prop_assert_eq!(bnfold::eval_two_affine(&p, n), oracle::eval_float_side(n, f.t(), f.b(), range), "N={}", n);
        }
    }

    #[test]
    fn spec_round_trip(p in params()) {
        let (back, notices) = BnLayerParams::from_spec(&p.to_spec("x")).unwrap();
        prop_assert_eq!(back, p);
        prop_assert!(notices.is_empty());
    }
}

#[test]
fn trivial_model_folds() {
    let model: ModelFile = serde_json::from_str(
        r#"{"layers":[{"name":"id","mu":"0","sigma":"1","gamma":"1","beta":"0","c":"0","w":1,"a":1,"y_min":0,"y_max":1}],
            "metadata":{"arch":"toy"}}"#,
    )
    .unwrap();
    let folded = bnfold::fold_model(&model, Some(1), Exec::default()).unwrap();
    let layer = &folded.layers[0];
    let fixed = layer.fixed.unwrap();
    assert_eq!((fixed.slope, fixed.offset, fixed.scale), (1, 0, 1));
    assert!(layer.certificate.as_ref().unwrap().certified());
    assert_eq!(folded.metadata["arch"], "toy");
    assert!(bnfold::simulate_compare(&model, &folded, 100, 0).unwrap().all_agree());
}

#[test]
fn float_inputs_are_flagged() {
    let model: ModelFile =
        serde_json::from_str(r#"{"layers":[{"name":"f","mu":0.1,"sigma":2,"gamma":1,"beta":0,"w":15,"a":15}]}"#)
            .unwrap();
    let folded = bnfold::fold_model(&model, Some(64), Exec::default()).unwrap();
    assert_eq!(folded.failures(), 0);
    assert!(folded.layers[0].notices.iter().any(|n| n.contains("mu")));
}

#[test]
fn invalid_parameters_abort() {
    let model: ModelFile =
        serde_json::from_str(r#"{"layers":[{"name":"bad","mu":"0","sigma":"-1","gamma":"1","beta":"0","w":1,"a":1}]}"#)
            .unwrap();
    assert!(matches!(
        bnfold::fold_model(&model, Some(64), Exec::default()),
        Err(bnfold::BnFoldError::InvalidParams { .. })
    ));
}

#[test]
fn unsatisfied_scale_is_reported_per_layer() {
    // t = 1/11 over 15 levels needs K >= 51; the second layer is fine
    let model: ModelFile = serde_json::from_str(
        r#"{"layers":[
            {"name":"hard","mu":"0","sigma":"1/165","gamma":"1","beta":"0","c":"-74/165","w":15,"a":15},
            {"name":"easy","mu":"0","sigma":"2","gamma":"1","beta":"0","w":15,"a":15}]}"#,
    )
    .unwrap();
    let p = BnLayerParams::from_spec(&model.layers[0]).unwrap().0;
    let f = bnfold::fold_bn(&p).unwrap();
    assert_eq!(f.t(), &ratio(1, 11));
    assert_eq!(f.b(), &ratio(-1110, 11));
    let folded = bnfold::fold_model(&model, Some(50), Exec::default()).unwrap();
    assert_eq!(folded.failures(), 1);
    let err = folded.layers[0].error.as_ref().unwrap();
    assert_eq!(err.kind, "no_solution");
    assert_eq!(err.suggested_k, Some(51));
    assert!(folded.layers[1].certificate.is_some());
}

#[test]
fn output_is_deterministic() {
    let model = bnfold::synthetic_model(16, 15, 15, 99);
    let a = model::to_json(&bnfold::fold_model(&model, Some(64), Exec::Parallel).unwrap());
    let b = model::to_json(&bnfold::fold_model(&model, Some(64), Exec::Sequential).unwrap());
    assert_eq!(a, b);
    let reparsed: model::FoldedModel = serde_json::from_str(&a).unwrap();
    assert_eq!(model::to_json(&reparsed), a);
}
