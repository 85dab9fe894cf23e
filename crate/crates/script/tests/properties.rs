use actscript::{format_number, parse, run, Limits, NullHost, RunError};
use proptest::prelude::*;
use serde_json::json;

fn quick() -> Limits {
    Limits {
        step_budget: 20_000,
        wall_timeout: Some(std::time::Duration::from_millis(500)),
        ..Limits::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn parser_never_panics(src in "\\PC{0,80}") {
        let _ = parse(&src);
    }

    #[test]
    fn runner_never_panics_on_token_soup(
        toks in prop::collection::vec(
            prop::sample::select(vec![
                "let", "x", "=", "1", ";", "(", ")", "{", "}", "[", "]", "=>", "+", "?.", "await",
                "async", "function", "return", "if", "else", "while", "for", "of", ",", "'s'", ".",
                "x.y", "null", "throw", "try", "catch", "new", "Promise", "console.log", "...",
            ]),
            0..30,
        )
    ) {
        let src = toks.join(" ");
        let mut host = NullHost::default();
        let _ = run(&src, &mut host, &quick());
    }

    #[test]
    fn numbers_print_and_parse_back(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let s = format_number(x);
        let back: f64 = s.parse().unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn engine_number_formatting_round_trips(x in -1e12f64..1e12) {
        let mut host = NullHost::default();
        let src = format!("Number(String({}))", format_number(x));
        let out = run(&src, &mut host, &quick()).result.unwrap().unwrap();
        prop_assert_eq!(out.as_f64().unwrap(), x);
    }

    #[test]
    fn integer_arithmetic_matches_rust(a in -100_000i64..100_000, b in -100_000i64..100_000) {
        let mut host = NullHost::default();
        let out = run(&format!("[{a} + {b}, {a} - {b}, {a} * {b}]"), &mut host, &quick()).result.unwrap();
        prop_assert_eq!(out, Some(json!([a + b, a - b, a * b])));
    }

    #[test]
    fn sort_agrees_with_std(xs in prop::collection::vec(-1000i32..1000, 0..50)) {
        let mut host = NullHost::default();
        let list = xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let out = run(&format!("[{list}].sort((a, b) => a - b)"), &mut host, &quick()).result.unwrap();
        let mut want = xs.clone();
        want.sort();
        prop_assert_eq!(out, Some(json!(want)));
    }

    #[test]
    fn step_budget_always_terminates(n in 1u64..5000) {
        let limits = Limits { step_budget: n, ..quick() };
        let mut host = NullHost::default();
        let out = run("while (true) {}", &mut host, &limits);
        prop_assert!(matches!(out.result, Err(RunError::Aborted(_))));
        prop_assert!(out.steps <= n + 1);
    }
}
