//! The enumerator against an exhaustive search that tries every pipeline
//! in (size, catalogue order) with no pruning.

use marco::domain::IoPair;
use marco::dsl::enumerate::list_catalogue;
use marco::dsl::generate::{generate, GenConfig};
use marco::dsl::{
    enumerate_solve, DslFamily, ListInput, ListProgram, ListStage, ListValue, SearchLimits,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn consistent(program: &ListProgram, pairs: &[(ListInput, ListValue)]) -> bool {
    pairs.iter().all(|(i, o)| program.eval(i).as_ref() == Ok(o))
}

/// First consistent program by size, then lexicographic catalogue index.
fn brute_force(pairs: &[IoPair], max_stages: usize) -> Option<ListProgram> {
    let parsed: Vec<(ListInput, ListValue)> = pairs
        .iter()
        .map(|p| {
            (
                ListInput::parse(&p.input).unwrap(),
                ListValue::parse(&p.output).unwrap(),
            )
        })
        .collect();
    let catalogue: Vec<ListStage> = list_catalogue(&SearchLimits::default());
    let n = catalogue.len();
    for size in 1..=max_stages {
        // Counting in base n with the first stage as the most significant
        // digit walks the sequences in lexicographic order.
        for code in 0..n.pow(size as u32) {
            let stages = (0..size)
                .map(|pos| catalogue[code / n.pow((size - 1 - pos) as u32) % n])
                .collect();
            if let Ok(p) = ListProgram::new(stages) {
                if consistent(&p, &parsed) {
                    return Some(p);
                }
            }
        }
    }
    None
}

fn agree(pairs: &[IoPair], label: &str) {
    let want = brute_force(pairs, 2).map(|p| p.to_string());
    let got = enumerate_solve(DslFamily::List, pairs, &SearchLimits::new(2)).map(|p| p.to_string());
    assert_eq!(got, want, "{label}: {pairs:?}");
}

#[test]
fn matches_exhaustive_search_on_generated_problems() {
    for g in generate(&GenConfig::new(DslFamily::List, 30, 5)) {
        agree(&g.problem.pairs, &g.problem.id);
    }
}

#[test]
fn matches_exhaustive_search_on_random_programs() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let catalogue: Vec<ListStage> = list_catalogue(&SearchLimits::default())
        .into_iter()
        .filter(|s| s.name() != "ZipWith")
        .collect();
    let mut checked = 0;
    while checked < 60 {
        let size = rng.gen_range(1..=2);
        let stages = (0..size)
            .map(|_| catalogue[rng.gen_range(0..catalogue.len())])
            .collect();
        let Ok(program) = ListProgram::new(stages) else {
            continue;
        };
        let pairs: Option<Vec<IoPair>> = (0..3)
            .map(|_| {
                let xs: Vec<i64> = (0..rng.gen_range(0..6))
                    .map(|_| rng.gen_range(-6..7))
                    .collect();
                let input = ListInput {
                    primary: xs,
                    secondary: None,
                };
                let out = program.eval(&input).ok()?;
                Some(IoPair::new(input.render(), out.render()))
            })
            .collect();
        let Some(pairs) = pairs else { continue };
        agree(&pairs, &program.to_string());
        checked += 1;
    }
}

#[test]
fn no_program_means_none_for_both() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let pairs: Vec<IoPair> = (0..3)
            .map(|_| {
                let xs: Vec<i64> = (0..4).map(|_| rng.gen_range(-9..10)).collect();
                let ys: Vec<i64> = (0..3).map(|_| rng.gen_range(50..99)).collect();
                IoPair::new(format!("{xs:?}"), format!("{ys:?}"))
            })
            .collect();
        agree(&pairs, "noise");
    }
}

#[test]
fn string_results_fit_every_example() {
    for g in generate(&GenConfig::new(DslFamily::String, 15, 8)) {
        let found = enumerate_solve(DslFamily::String, &g.problem.pairs, &SearchLimits::new(2))
            .unwrap_or_else(|| panic!("{}: no program", g.problem.id));
        assert!(
            found.size() <= g.program.size(),
            "{}: {found} larger than {}",
            g.problem.id,
            g.program
        );
        for p in &g.problem.pairs {
            assert_eq!(
                found.run_text(&p.input).unwrap(),
                p.output,
                "{}: {found}",
                g.problem.id
            );
        }
    }
}
