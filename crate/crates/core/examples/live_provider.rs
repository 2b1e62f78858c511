//! Send one induction prompt to an OpenAI-compatible endpoint and check
//! the answer. Needs MARCO_BASE_URL, MARCO_MODEL and MARCO_API_KEY.

use marco::domain::{CodeLanguage, IoPair, Problem};
use marco::executor::{extract_code, Executor};
use marco::harness::split_visible;
use marco::prompts::build_initial_prompt;
use marco::providers::{ChatProvider, ChatSettings, HttpProvider};

fn main() {
    let (Ok(base), Ok(model)) = (
        std::env::var("MARCO_BASE_URL"),
        std::env::var("MARCO_MODEL"),
    ) else {
        eprintln!(
            "set MARCO_BASE_URL and MARCO_MODEL (and MARCO_API_KEY) to talk to a live endpoint"
        );
        return;
    };
    let provider = HttpProvider::from_env(base, None).expect("http client");
    let problem = split_visible(&Problem::induction(
        "sum-of-squares",
        CodeLanguage::General,
        vec![
            IoPair::new("[1, 2]", "5"),
            IoPair::new("[3]", "9"),
            IoPair::new("[]", "0"),
            IoPair::new("[-2, 2, 1]", "9"),
        ],
    ))
    .unwrap();
    let messages = build_initial_prompt(&problem, "").unwrap();
    let reply = match provider.chat(&messages, &ChatSettings::new(model, 0.2)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("request failed: {e}");
            std::process::exit(1);
        }
    };
    println!(
        "{}\n\n({:?}, {} attempt(s), {:?})",
        reply.text, reply.usage, reply.attempts, reply.latency
    );
    let Ok(code) = extract_code(&reply.text) else {
        println!("no code block in the reply");
        return;
    };
    let checks = Executor::new(Default::default())
        .check_all(&problem, &code)
        .expect("sandbox");
    let passed = checks.iter().filter(|c| c.passed()).count();
    println!(
        "{passed}/{} pairs correct (hidden ones included)",
        checks.len()
    );
}
