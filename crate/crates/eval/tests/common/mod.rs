#![allow(dead_code)]

use shopsim_core::env::Environment;
use shopsim_core::generate::{generate_catalog, GenerationSpec, Vocabulary};
use shopsim_core::tasks::{generate_tasks, TaskGenConfig, TaskSet};

pub struct World {
    pub env: Environment,
    pub tasks: TaskSet,
    pub vocab: Vocabulary,
}

pub fn world(seed: u64, tasks: usize) -> World {
    let spec = GenerationSpec::desk();
    let catalog = generate_catalog(seed, &spec).expect("catalog");
    let set = generate_tasks(&catalog, seed, tasks, &TaskGenConfig::default()).expect("tasks");
    World { env: Environment::new(catalog).expect("index"), tasks: set, vocab: spec.vocabulary() }
}
