use autofeedback::request_codec::{parse_llm_output, parse_request, serialize_request, ApiRequest, ParseOutcome, Value};
use proptest::prelude::*;

fn ident() -> impl Strategy<Value = String> {
    "[a-zA-Z_][a-zA-Z0-9_]{0,12}"
}

fn value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        any::<String>().prop_map(Value::Str),
        any::<i64>().prop_map(Value::Int),
        any::<f64>().prop_filter("finite", |f| f.is_finite()).prop_map(Value::Float),
        any::<bool>().prop_map(Value::Bool),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::List),
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Tuple),
            prop::collection::btree_map(any::<String>(), inner, 0..4)
                .prop_map(|m| Value::Dict(m.into_iter().collect())),
        ]
    })
}

fn request() -> impl Strategy<Value = ApiRequest> {
    (ident(), prop::collection::btree_map(ident(), value(), 0..6))
        .prop_map(|(name, args)| ApiRequest { name, args: args.into_iter().collect() })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn serialize_then_parse_is_identity(r in request()) {
        let text = serialize_request(&r);
        prop_assert_eq!(parse_request(&text), ParseOutcome::Parsed(r.clone()));
        prop_assert_eq!(parse_llm_output(&format!("ok <<API>>{text}<</API>> done")), ParseOutcome::Parsed(r));
    }

    #[test]
    fn serialization_is_a_fixed_point(r in request()) {
        let once = serialize_request(&r);
        let again = match parse_request(&once) {
            ParseOutcome::Parsed(back) => serialize_request(&back),
            other => panic!("{other:?}"),
        };
        prop_assert_eq!(once, again);
    }
}
