//! Recover a program from input/output examples with the bottom-up
//! enumerator, and show how the stage cap and exclusions change the answer.

use marco::domain::IoPair;
use marco::dsl::enumerate::search;
use marco::dsl::{DslFamily, SearchLimits};

fn main() {
    let pairs = vec![
        IoPair::new("[1, -2, 3, -4]", "[2, 6]"),
        IoPair::new("[5, 0, -1]", "[10]"),
        IoPair::new("[-3, 7, 8]", "[14, 16]"),
    ];
    for depth in [1, 2] {
        let report = search(DslFamily::List, &pairs, &SearchLimits::new(depth));
        match &report.program {
            Some(p) => println!(
                "depth {depth}: {p}  ({} candidates, {:?})",
                report.evaluated, report.stop
            ),
            None => println!(
                "depth {depth}: nothing  ({} candidates, {:?})",
                report.evaluated, report.stop
            ),
        }
    }

    let limits = SearchLimits {
        excluded: vec!["Map".into()],
        ..SearchLimits::new(2)
    };
    let report = search(DslFamily::List, &pairs, &limits);
    println!(
        "without Map: {:?} ({:?})",
        report.program.map(|p| p.to_string()),
        report.stop
    );

    let names = vec![
        IoPair::new("\"ada lovelace\"", "\"Ada\""),
        IoPair::new("\"alan turing\"", "\"Alan\""),
    ];
    let report = search(DslFamily::String, &names, &SearchLimits::new(2));
    println!("string: {:?}", report.program.map(|p| p.to_string()));
}
