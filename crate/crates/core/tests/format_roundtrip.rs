use decpomdp_em::builtin;
use decpomdp_em::format::{parse_model, parse_policy, serialize_model, serialize_policy};
use decpomdp_em::generate::{random_model, RandomShape};
use decpomdp_em::{init_policy, InitScheme};
use proptest::prelude::*;

#[test]
fn parse_serialize_parse_is_idempotent() {
    for name in builtin::NAMES {
        let m = builtin::load(name).unwrap();
        let text = serialize_model(&m);
        let back = parse_model(&text).unwrap();
        assert_eq!(back, m, "{name}");
        assert_eq!(serialize_model(&back), text);
    }
    for seed in 0..10 {
        let m = random_model(&RandomShape::uniform(3, 2, 2, 0.95), seed);
        let back = parse_model(&serialize_model(&m)).unwrap();
        assert_eq!(back, m);
    }
}

#[test]
fn dectiger_style_document_loads() {
    let text = "\
agents: 2
discount: 1
values: reward
states: tiger-left tiger-right
start:
uniform
actions:
listen open-left open-right
listen open-left open-right
observations:
hear-left hear-right
hear-left hear-right
T: * :
uniform
T: listen listen :
identity
O: * :
uniform
O: listen listen : tiger-left : hear-left hear-left : 0.7225
O: listen listen : tiger-left : hear-left hear-right : 0.1275
O: listen listen : tiger-left : hear-right hear-left : 0.1275
O: listen listen : tiger-left : hear-right hear-right : 0.0225
O: listen listen : tiger-right : hear-right hear-right : 0.7225
O: listen listen : tiger-right : hear-left hear-right : 0.1275
O: listen listen : tiger-right : hear-right hear-left : 0.1275
O: listen listen : tiger-right : hear-left hear-left : 0.0225
R: listen listen : * : * : * : -2
R: open-left open-left : tiger-left : * : * : -50
R: open-right open-right : tiger-right : * : * : -50
R: open-left open-left : tiger-right : * : * : 20
R: open-right open-right : tiger-left : * : * : 20
";
    assert!(parse_model(text).is_err());
    let m = decpomdp_em::format::parse_model_with_discount(text, Some(0.9)).unwrap();
    assert_eq!(m.action_space().len(), 9);
    assert_eq!(m.reward[0], -2.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,400}") {
        let _ = parse_model(&text);
        let _ = parse_policy(&text);
    }

    #[test]
    fn mutated_documents_never_panic(
        cut in 0usize..2000,
        insert in "[ :*#0-9a-z\n.-]{0,12}",
    ) {
        let base = builtin::source("toy2agent").unwrap();
        let at = base.char_indices().map(|(i, _)| i).nth(cut % base.len()).unwrap_or(0);
        let mut text = base.to_string();
        text.insert_str(at, &insert);
        let _ = parse_model(&text);
        let mut dropped = base.to_string();
        dropped.replace_range(at..(at + insert.len()).min(base.len()), "");
        let _ = parse_model(&dropped);
    }

    #[test]
    fn policy_round_trip(seed in any::<u64>(), mem in 1usize..4) {
        let m = builtin::toy2agent();
        let p = init_policy(&m, &[mem, 4 - mem], seed, InitScheme::Random).unwrap();
        prop_assert_eq!(parse_policy(&serialize_policy(&p)).unwrap(), p);
    }
}
