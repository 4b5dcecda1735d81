use dmguide_core::evalmetrics::{bleu, entity_overlap, rouge_l};
use dmguide_core::textfeat::{extract_entities, Gazetteer};
use proptest::prelude::*;

const NAMES: [&str; 6] = ["Gundren", "Phandalin", "Waterdeep", "Sildar", "Neverwinter", "Klarg"];

fn sentence(names: &[usize]) -> String {
    if names.is_empty() {
        return "We saw nobody at all.".into();
    }
    let parts: Vec<&str> = names.iter().map(|&i| NAMES[i]).collect();
    format!("We saw {} today.", parts.join(" and "))
}

proptest! {
    #[test]
    fn identity_scores_one(words in prop::collection::vec("[a-zA-Z]{1,7}", 1..15)) {
        let x = words.join(" ");
        prop_assert!((bleu(&x, &x, 4) - 1.0).abs() < 1e-12);
        prop_assert!((rouge_l(&x, &x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_in_unit_interval(a in "[a-z ]{0,40}", b in "[a-z ]{0,40}") {
        for v in [bleu(&a, &b, 4), rouge_l(&a, &b)] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "{}", v);
        }
    }

    #[test]
    fn removing_unsupported_entity_never_hurts(
        ctx in prop::collection::vec(0..NAMES.len(), 0..4),
        out in prop::collection::vec(0..NAMES.len(), 1..5),
    ) {
        let gaz = Gazetteer::new(NAMES);
        let context = sentence(&ctx);
        let before = entity_overlap(&context, &sentence(&out), &gaz);
        prop_assert!((0.0..=1.0).contains(&before));
        for &drop in out.iter().filter(|i| !ctx.contains(i)) {
            let kept: Vec<usize> = out.iter().copied().filter(|&i| i != drop).collect();
            let after = entity_overlap(&context, &sentence(&kept), &gaz);
            prop_assert!(after >= before, "{} < {}", after, before);
        }
    }

    #[test]
    fn larger_gazetteer_keeps_entities(
        base in prop::collection::vec(0..NAMES.len(), 0..6),
        extra in 0..NAMES.len(),
        text_names in prop::collection::vec(0..NAMES.len(), 0..5),
    ) {
        let text = format!("Then {} the party rests in the Yawning Portal.", sentence(&text_names));
        let small = Gazetteer::new(base.iter().map(|&i| NAMES[i]));
        let big = Gazetteer::new(base.iter().map(|&i| NAMES[i]).chain([NAMES[extra]]));
        let a = extract_entities(&text, &small);
        let b = extract_entities(&text, &big);
        prop_assert!(a.is_subset(&b), "{:?} vs {:?}", a, b);
    }
}

#[test]
fn table_text_entities() {
    let gaz = Gazetteer::new(["Gundren Rockseeker", "Phandalin"]);
    let text = "A dwarf named Gundren Rockseeker has hired you to transport a wagonload of provisions to the rough-and-tumble settlement of Phandalin.";
    let got: Vec<String> = extract_entities(text, &gaz).into_iter().collect();
    assert_eq!(got, ["Gundren Rockseeker", "Phandalin"]);
    assert!(extract_entities("The goblins attack.", &Gazetteer::default()).is_empty());
    assert!(extract_entities("", &gaz).is_empty());
}
