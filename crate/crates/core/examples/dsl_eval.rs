//! Parse and evaluate programs in both DSLs, including the error cases.

use marco::dsl::{
    eval_string_dsl, parse_list_dsl, parse_string_dsl, DslFamily, DslProgram, ListInput,
};

fn main() {
    let pipeline = parse_list_dsl("Filter(>0) | Map(*2) | Sort").expect("valid program");
    let input = ListInput::parse("[3, -1, 4, -1, 5]").expect("valid input");
    let out = pipeline.eval(&input).expect("runs");
    println!("{pipeline}  on  {}  =  {}", input.render(), out.render());

    // Two-list inputs are written as a pair of lists.
    let zip = DslProgram::parse(DslFamily::List, "ZipWith(+) | Sum").unwrap();
    println!(
        "{zip}  on  [[1, 2, 3], [10, 20]]  =  {}",
        zip.run_text("[[1, 2, 3], [10, 20]]").unwrap()
    );

    let initials =
        parse_string_dsl(r#"Concat(ToUpper(GetFirstChar), ConstStr(". "), GetToken(word, 2))"#)
            .unwrap();
    println!(
        "{initials}  on  \"grace hopper\"  =  {:?}",
        eval_string_dsl(&initials, "grace hopper").unwrap()
    );

    for bad in ["Sum | Map(*2)", "Map(*5)", "Shuffle"] {
        match parse_list_dsl(bad) {
            Ok(p) => println!("{bad}: unexpectedly parsed as {p}"),
            Err(e) => println!("{bad}: {} ({})", e, e.class()),
        }
    }
    let head = parse_list_dsl("Head").unwrap();
    match head.eval(&ListInput::parse("[]").unwrap()) {
        Ok(v) => println!("Head on []: {}", v.render()),
        Err(e) => println!("Head on []: {e}"),
    }
}
