mod support;

use std::collections::HashSet;

use shopsim_core::generate::{generate_catalog, GenerationSpec};
use shopsim_core::tasks::{check_conservation, generate_tasks, Scenario, TaskGenConfig};
use support::oracle;

#[test]
fn every_task_has_exactly_one_satisfying_product() {
    let catalog = generate_catalog(21, &GenerationSpec::desk()).unwrap();
    let set = generate_tasks(&catalog, 21, 520, &TaskGenConfig::default()).unwrap();
    assert_eq!(set.len(), 520);
    let ids: HashSet<&str> = set.tasks.iter().map(|t| t.task_id.as_str()).collect();
    assert_eq!(ids.len(), 520);
    for task in &set.tasks {
        let hits: Vec<&str> = catalog
            .products()
            .iter()
            .filter(|p| oracle::satisfiable(&task.target, p))
            .map(|p| p.product_id.as_str())
            .collect();
        assert_eq!(hits, [task.target.product_id.as_str()], "{}", task.task_id);
        check_conservation(task, set.profile_for(task).unwrap()).unwrap();
        let personalized = task.profile_ref.is_some();
        assert_eq!(task.supports(Scenario::SingleTurnPersonalized), personalized);
        assert_eq!(task.supports(Scenario::SingleTurn), !personalized);
    }
    assert!(set.tasks.iter().any(|t| t.profile_ref.is_some()));
}

#[test]
fn generation_is_seed_stable() {
    let catalog = generate_catalog(3, &GenerationSpec::new(1, 1, 2, 120)).unwrap();
    let a = generate_tasks(&catalog, 5, 20, &TaskGenConfig::default()).unwrap();
    let b = generate_tasks(&catalog, 5, 20, &TaskGenConfig::default()).unwrap();
    let c = generate_tasks(&catalog, 6, 20, &TaskGenConfig::default()).unwrap();
    assert_eq!(a.tasks_jsonl(), b.tasks_jsonl());
    assert_eq!(a.profiles_jsonl(), b.profiles_jsonl());
    assert_ne!(a.tasks_jsonl(), c.tasks_jsonl());
}
