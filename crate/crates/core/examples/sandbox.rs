//! Run untrusted Python candidates in the sandbox: a value, an exception,
//! a runaway loop, a memory bomb, and a full induction check.

use marco::domain::{CodeLanguage, IoPair, SandboxLimits};
use marco::executor::{find_python, Executor, Target};

fn main() {
    if find_python().is_none() {
        eprintln!("python3 not found; set MARCO_PYTHON to run this example");
        return;
    }
    let exec = Executor::new(SandboxLimits {
        cpu_seconds: 1,
        wall_seconds: 3,
        ..SandboxLimits::default()
    });
    let cases = [
        (
            "value",
            "def f(x):\n    return sorted(set(x))",
            "f([3, 1, 3, 2])",
        ),
        ("exception", "def f(x):\n    return x[10]", "f([1])"),
        ("loop", "def f(x):\n    while True:\n        x += 1", "f(0)"),
        (
            "memory",
            "def f(n):\n    return len(bytearray(n))",
            "f(1 << 30)",
        ),
        (
            "network",
            "import socket\ndef f():\n    return socket.socket()",
            "f()",
        ),
    ];
    for (name, code, call) in cases {
        let out = exec
            .run_candidate(code, call, CodeLanguage::General)
            .expect("sandbox available");
        println!(
            "{name:>9}: {:?}  [{:.2}s wall]",
            out.outcome,
            out.wall.as_secs_f64()
        );
    }

    let pairs = [
        IoPair::new("[1, 2]", "[2, 1]"),
        IoPair::new("[3, 4, 5]", "[5, 4, 3]"),
    ];
    let checks = exec
        .check_induction(
            "def solve(xs):\n    return xs[::-1]",
            &pairs,
            Target::general("f"),
        )
        .unwrap();
    for c in &checks {
        println!(
            "pair {}: passed={} {:?}",
            c.record.index,
            c.passed(),
            c.record.message
        );
    }

    let eq = exec
        .values_equal("{1: 2, 3: 4}", "{3: 4, 1: 2}", CodeLanguage::General, None)
        .unwrap();
    println!("dict equality ignores order: {}", eq.equal);
}
