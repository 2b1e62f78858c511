//! Property tests over datasets, the visible split, prompts and DSL values.

use marco::domain::{CodeLanguage, IoPair, Problem, TaskKind};
use marco::dsl::{ListInput, ListValue};
use marco::harness::dataset::{dataset_to_string, parse_dataset};
use marco::harness::{split_visible, SplitError};
use marco::prompts::build_initial_prompt;
use proptest::prelude::*;

fn int_list() -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-1000i64..1000, 0..8)
}

fn induction_problem() -> impl Strategy<Value = Problem> {
    (
        "[a-z][a-z0-9-]{0,8}",
        prop::collection::vec((int_list(), int_list()), 2..9),
        prop::sample::select(vec![CodeLanguage::General, CodeLanguage::ListDsl]),
    )
        .prop_map(|(id, rows, language)| {
            let pairs = rows
                .into_iter()
                .map(|(i, o)| IoPair::new(format!("{i:?}"), format!("{o:?}")))
                .collect();
            Problem::induction(id, language, pairs)
        })
}

fn deduction_problem() -> impl Strategy<Value = Problem> {
    ("[a-z]{1,6}", -50i64..50, prop::bool::ANY).prop_map(|(id, x, abduce)| {
        let kind = if abduce {
            TaskKind::Abduction
        } else {
            TaskKind::Deduction
        };
        let mut pair = IoPair::new(x.to_string(), (x * 3).to_string());
        pair.visible = Some(true);
        Problem::with_function(
            id,
            kind,
            CodeLanguage::General,
            "def f(x):\n    return x * 3",
            pair,
        )
    })
}

proptest! {
    #[test]
    fn dataset_round_trips(mut problems in prop::collection::vec(prop_oneof![induction_problem(), deduction_problem()], 1..6)) {
        for (i, p) in problems.iter_mut().enumerate() {
            p.id = format!("{}-{i}", p.id);
        }
        let loaded = parse_dataset(&dataset_to_string(&problems), None).unwrap();
        let again = parse_dataset(&dataset_to_string(&loaded), None).unwrap();
        prop_assert_eq!(&loaded, &again);
        prop_assert_eq!(loaded.len(), problems.len());
        for (a, b) in loaded.iter().zip(&problems) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert_eq!(a.pairs.len(), b.pairs.len());
        }
    }

    #[test]
    fn split_is_ceiling_prefix_and_guarded(p in induction_problem()) {
        let s = split_visible(&p).unwrap();
        let n = p.pairs.len();
        let vis = s.visible_pairs().count();
        prop_assert_eq!(vis, n.div_ceil(2));
        prop_assert!(s.pairs.iter().take(vis).all(IoPair::is_visible));
        prop_assert!(s.pairs.iter().skip(vis).all(|q| q.visible == Some(false)));
        prop_assert_eq!(split_visible(&s), Err(SplitError::AlreadySplit(p.id.clone())));
        prop_assert_eq!(split_visible(&p).unwrap(), s);
    }

    #[test]
    fn prompts_never_show_hidden_examples(p in induction_problem()) {
        let s = split_visible(&p).unwrap();
        let msgs = build_initial_prompt(&s, "");
        // A hidden pair identical to a visible one is the only allowed overlap.
        let text: String = match msgs {
            Ok(m) => m.iter().map(|m| m.content.as_str()).collect(),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        for h in s.hidden_pairs() {
            let shown = format!("Input: {}\nOutput: {}\n", h.input, h.output);
            let duplicated = s.visible_pairs().any(|v| v.input == h.input && v.output == h.output);
            prop_assert!(duplicated || !text.contains(&shown));
        }
    }

    #[test]
    fn list_values_render_canonically(xs in int_list(), ys in prop::option::of(int_list())) {
        let input = ListInput { primary: xs.clone(), secondary: ys };
        prop_assert_eq!(ListInput::parse(&input.render()).unwrap(), input.clone());
        let v = ListValue::parse(&format!("{xs:?}")).unwrap();
        prop_assert_eq!(v.render(), format!("{xs:?}"));
    }
}
