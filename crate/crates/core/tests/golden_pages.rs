//! Rendered pages pinned against files in `tests/golden`. Set
//! `UPDATE_GOLDEN=1` to rewrite them.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use shopsim_core::catalog::load_catalog;
use shopsim_core::env::{Environment, Observation, Session, SessionSpec, SEP};
use shopsim_core::reward::TargetSpec;
use shopsim_core::tasks::{Scenario, ScenarioConfig, Split, Task};

const YONEX_ID: &str = "724988974873";

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests")
}

fn session() -> Session {
    let catalog = load_catalog(&root().join("fixtures/badminton.jsonl")).unwrap();
    let p = catalog.get_product(YONEX_ID).unwrap().clone();
    let task = Task {
        task_id: "golden".into(),
        instruction: "I need a pair of wide-last YONEX badminton shoes in white and blue, size 40, under 550 yuan."
            .into(),
        target: TargetSpec {
            product_id: p.product_id.clone(),
            category: p.category.clone(),
            title: p.title.clone(),
            canonical_query: "yonex badminton shoes".into(),
            attributes: vec!["Cushioning".into()],
            options: IndexMap::from([
                ("Color Options".into(), "SHB510WCR White/Blue (Wide last)".into()),
                ("Size".into(), "40".into()),
            ]),
            price_cap: Some(550.0),
        },
        scenarios: vec![Scenario::SingleTurn],
        profile_ref: None,
        split: Split::Test,
        reveal_plan: Vec::new(),
    };
    let env = Environment::new(catalog).unwrap();
    Session::start(env, SessionSpec::new(task, ScenarioConfig::new(Scenario::SingleTurn), 0)).unwrap().0
}

fn check(name: &str, obs: &Observation) {
    let path = root().join("golden").join(format!("{name}.txt"));
    let actual = obs.display();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "golden mismatch for {name}");
    structure(obs);
}

/// Every clickable label is a segment of the page text, and segments are
/// never empty.
fn structure(obs: &Observation) {
    let body = obs.text.strip_prefix("Error: ").map(|t| t.split_once(SEP).unwrap().1).unwrap_or(&obs.text);
    let segments: Vec<String> = body.split(SEP).map(|s| s.to_lowercase()).collect();
    assert!(segments.iter().all(|s| !s.trim().is_empty()), "{body}");
    for c in &obs.clickable {
        assert!(segments.iter().any(|s| s == &c.to_lowercase()), "{c} not on page");
    }
}

#[test]
fn search_home() {
    let s = session();
    check("search_home", &s.render());
}

#[test]
fn results_pages() {
    let mut s = session();
    let r = s.step("search[badminton shoes]").unwrap();
    assert!(r.observation.text.contains("Page 1 (Total results: 150) [SEP] Next > [SEP] "));
    check("results_page_1", &r.observation);
    let r = s.step("click[next >]").unwrap();
    check("results_page_2", &r.observation);
    for _ in 0..6 {
        s.step("click[next >]").unwrap();
    }
    let last = s.render();
    assert!(last.text.contains("Page 8 (Total results: 150) [SEP] < Prev [SEP] "));
    assert!(!last.clickable.contains(&"next >".to_string()));
    assert_eq!(last.clickable.len(), 2 + 10);
}

#[test]
fn item_pages() {
    let mut s = session();
    s.step("Action: search[yonex badminton shoes]").unwrap();
    let r = s.step(&format!("click[{YONEX_ID}]")).unwrap();
    assert!(r.observation.text.contains("Price: 528.0 to 660.0"));
    check("item_initial", &r.observation);
    s.step("click[shb510wcr White/Blue (Wide last)]").unwrap();
    let r = s.step("click[40]").unwrap();
    assert!(r.observation.text.contains(" [SEP] Price: 528 [SEP] "));
    check("item_selected", &r.observation);
    let r = s.step("click[Reviews]").unwrap();
    check("item_reviews", &r.observation);
    let r = s.step("click[Size 40]").unwrap();
    check("item_error", &r.observation);
}
