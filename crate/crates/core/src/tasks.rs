//! Shopping tasks, scenarios, deterministic task and profile generation,
//! and train/test splitting.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{format_compact_price, Catalog, CategoryPath, Product};
use crate::generate::Vocabulary;
use crate::profile::{
    AttributePreferences, BehavioralFeatures, BrandPreference, Demographics, InterestsAndPreferences, Location,
    PreferenceLevel, PriceRange, TransactionCharacteristics, UserProfile,
};
use crate::reward::{attribute_matches, fuzzy_match, TargetSpec};
use crate::text;

pub const SINGLE_TURN_STEP_LIMIT: usize = 30;
pub const MULTI_TURN_STEP_LIMIT: usize = 40;
const ATTEMPTS_PER_PRODUCT: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("task count must be at least 1")]
    ZeroCount,
    #[error("catalog has {available} products, cannot build {requested} distinct-target tasks")]
    CatalogTooSmall { requested: usize, available: usize },
    #[error("only {produced} of {requested} tasks could be made unambiguous")]
    Unsatisfiable { requested: usize, produced: usize },
    #[error("task {0} is already personalized")]
    NotPlain(String),
    #[error("task {task_id} has {found} movable constraints, personalization needs 2")]
    TooFewMovable { task_id: String, found: usize },
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    DegenerateRatio(f64),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("unknown profile {0}")]
    UnknownProfile(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("task {task_id}: {message}")]
    Invalid { task_id: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    SingleTurn,
    SingleTurnPersonalized,
    MultiTurn,
    MultiTurnPersonalized,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::SingleTurn,
        Scenario::SingleTurnPersonalized,
        Scenario::MultiTurn,
        Scenario::MultiTurnPersonalized,
    ];

    pub fn is_multi_turn(self) -> bool {
        matches!(self, Scenario::MultiTurn | Scenario::MultiTurnPersonalized)
    }

    pub fn is_personalized(self) -> bool {
        matches!(self, Scenario::SingleTurnPersonalized | Scenario::MultiTurnPersonalized)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::SingleTurn => "single_turn",
            Scenario::SingleTurnPersonalized => "single_turn_personalized",
            Scenario::MultiTurn => "multi_turn",
            Scenario::MultiTurnPersonalized => "multi_turn_personalized",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

/// Per-scenario runtime settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub step_limit: usize,
    #[serde(default = "default_backend")]
    pub shopper_backend: String,
    #[serde(default = "default_true")]
    pub inject_profile: bool,
}

fn default_backend() -> String {
    "scripted".into()
}

fn default_true() -> bool {
    true
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            step_limit: if scenario.is_multi_turn() { MULTI_TURN_STEP_LIMIT } else { SINGLE_TURN_STEP_LIMIT },
            shopper_backend: default_backend(),
            inject_profile: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Question topics the scripted shopper recognizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topic {
    Category,
    Brand,
    Material,
    Feature,
    Color,
    Size,
    Option,
    Budget,
}

/// A constrained part of the target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum Slot {
    Category,
    Attribute(String),
    Option(String),
    PriceCap,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Category => f.write_str("category"),
            Slot::Attribute(a) => write!(f, "attribute {a}"),
            Slot::Option(g) => write!(f, "option {g}"),
            Slot::PriceCap => f.write_str("budget"),
        }
    }
}

/// One entry of the disclosure plan. `cue` is the phrase used in the
/// instruction, `text` what the shopper says when asked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevealItem {
    pub slot: Slot,
    pub topic: Topic,
    pub value: String,
    pub cue: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub in_profile: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub task_id: String,
    pub instruction: String,
    pub target: TargetSpec,
    pub scenarios: Vec<Scenario>,
    pub profile_ref: Option<String>,
    pub split: Split,
    pub reveal_plan: Vec<RevealItem>,
}

impl Task {
    pub fn supports(&self, scenario: Scenario) -> bool {
        self.scenarios.contains(&scenario)
    }

    pub fn is_personalized(&self) -> bool {
        self.profile_ref.is_some()
    }

    pub fn target_product_id(&self) -> &str {
        &self.target.product_id
    }

    pub fn domain(&self) -> &str {
        &self.target.category.domain
    }

    /// Every slot the target constrains, in reveal order.
    pub fn constrained_slots(&self) -> Vec<Slot> {
        constrained_slots(&self.target)
    }
}

pub fn constrained_slots(target: &TargetSpec) -> Vec<Slot> {
    let mut slots = vec![Slot::Category];
    slots.extend(target.attributes.iter().cloned().map(Slot::Attribute));
    slots.extend(target.options.keys().cloned().map(Slot::Option));
    if target.price_cap.is_some() {
        slots.push(Slot::PriceCap);
    }
    slots
}

/// On-disk task line; field names follow the task example format.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaskRecord {
    task_id: String,
    instruction: String,
    target_product: String,
    target_product_id: String,
    target_category: CategoryPath,
    target_options: IndexMap<String, String>,
    target_attributes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    price_cap: Option<f64>,
    canonical_query: String,
    scenarios: Vec<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    profile_ref: Option<String>,
    split: Split,
    reveal_plan: Vec<RevealItem>,
}

impl From<&Task> for TaskRecord {
    fn from(t: &Task) -> Self {
        Self {
            task_id: t.task_id.clone(),
            instruction: t.instruction.clone(),
            target_product: t.target.title.clone(),
            target_product_id: t.target.product_id.clone(),
            target_category: t.target.category.clone(),
            target_options: t.target.options.clone(),
            target_attributes: t.target.attributes.clone(),
            price_cap: t.target.price_cap,
            canonical_query: t.target.canonical_query.clone(),
            scenarios: t.scenarios.clone(),
            profile_ref: t.profile_ref.clone(),
            split: t.split,
            reveal_plan: t.reveal_plan.clone(),
        }
    }
}

impl Serialize for Task {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TaskRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Task {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        TaskRecord::deserialize(d).map(Task::from)
    }
}

impl From<TaskRecord> for Task {
    fn from(r: TaskRecord) -> Self {
        Self {
            task_id: r.task_id,
            instruction: r.instruction,
            target: TargetSpec {
                product_id: r.target_product_id,
                category: r.target_category,
                title: r.target_product,
                canonical_query: r.canonical_query,
                attributes: r.target_attributes,
                options: r.target_options,
                price_cap: r.price_cap,
            },
            scenarios: r.scenarios,
            profile_ref: r.profile_ref,
            split: r.split,
            reveal_plan: r.reveal_plan,
        }
    }
}

/// Tasks plus the profiles they reference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskSet {
    pub tasks: Vec<Task>,
    pub profiles: IndexMap<String, UserProfile>,
}

impl TaskSet {
    pub fn get(&self, task_id: &str) -> Result<&Task, TaskError> {
        self.tasks
            .iter()
            .find(|t| t.task_id == task_id)
            .ok_or_else(|| TaskError::UnknownTask(task_id.to_string()))
    }

    pub fn profile_for(&self, task: &Task) -> Result<Option<&UserProfile>, TaskError> {
        match &task.profile_ref {
            None => Ok(None),
            Some(r) => self.profiles.get(r).map(Some).ok_or_else(|| TaskError::UnknownProfile(r.clone())),
        }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Tasks usable in `scenario`.
    pub fn for_scenario(&self, scenario: Scenario) -> impl Iterator<Item = &Task> {
        self.tasks.iter().filter(move |t| t.supports(scenario))
    }

    pub fn tasks_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.tasks {
            out.push_str(&serde_json::to_string(&TaskRecord::from(t)).expect("task serializes"));
            out.push('\n');
        }
        out
    }

    pub fn profiles_jsonl(&self) -> String {
        let mut out = String::new();
        for p in self.profiles.values() {
            out.push_str(&serde_json::to_string(p).expect("profile serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes `tasks_path` and, when there are profiles, the profile file
    /// returned by [`profiles_path`].
    pub fn save(&self, tasks_path: &Path) -> Result<(), TaskError> {
        write_file(tasks_path, &self.tasks_jsonl())?;
        let ppath = profiles_path(tasks_path);
        if !self.profiles.is_empty() {
            write_file(&ppath, &self.profiles_jsonl())?;
        }
        Ok(())
    }

    pub fn parse(tasks: &str, profiles: Option<&str>) -> Result<Self, TaskError> {
        let mut set = TaskSet::default();
        for (i, line) in tasks.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: TaskRecord = serde_json::from_str(line).map_err(|e| TaskError::Malformed {
                path: "tasks".into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            set.tasks.push(record.into());
        }
        for (i, line) in profiles.unwrap_or("").lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let profile: UserProfile = serde_json::from_str(line).map_err(|e| TaskError::Malformed {
                path: "profiles".into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            profile.validate().map_err(|m| TaskError::Malformed { path: "profiles".into(), line: i + 1, message: m })?;
            set.profiles.insert(profile.user_id.clone(), profile);
        }
        Ok(set)
    }

    /// Loads a task file and the profile file next to it, if any.
    pub fn load(tasks_path: &Path) -> Result<Self, TaskError> {
        let tasks = read_file(tasks_path)?;
        let ppath = profiles_path(tasks_path);
        let profiles = if ppath.exists() { Some(read_file(&ppath)?) } else { None };
        Self::parse(&tasks, profiles.as_deref())
    }
}

/// `tasks.jsonl` keeps its profiles in `tasks.profiles.jsonl`.
pub fn profiles_path(tasks_path: &Path) -> PathBuf {
    tasks_path.with_extension("profiles.jsonl")
}

fn read_file(path: &Path) -> Result<String, TaskError> {
    fs::read_to_string(path).map_err(|source| TaskError::Io { path: path.to_path_buf(), source })
}

fn write_file(path: &Path, contents: &str) -> Result<(), TaskError> {
    let io = |source| TaskError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::File::create(path).and_then(|mut f| f.write_all(contents.as_bytes())).map_err(io)
}

/// Cheapest price reachable on `p` while picking the required option
/// values.
fn cheapest_price(target: &TargetSpec, p: &Product) -> f64 {
    if !p.is_range_priced() {
        return p.pricing.min();
    }
    let surcharge: f64 = p
        .price_deltas
        .iter()
        .map(|(group, deltas)| {
            let required = target
                .options
                .iter()
                .find(|(g, _)| text::squash_whitespace(g) == text::squash_whitespace(group))
                .map(|(_, v)| v);
            deltas
                .iter()
                .filter(|(value, _)| required.is_none_or(|r| fuzzy_match(r, value)))
                .map(|(_, d)| *d)
                .fold(f64::INFINITY, f64::min)
        })
        .map(|d| if d.is_finite() { d } else { 0.0 })
        .sum();
    p.pricing.min() + surcharge
}

/// Whether `p` could be bought so that every constraint of `target` holds.
pub fn satisfies(target: &TargetSpec, p: &Product) -> bool {
    if p.category != target.category {
        return false;
    }
    if attribute_matches(&target.attributes, p).len() != target.attributes.len() {
        return false;
    }
    let options_ok = target.options.iter().all(|(group, wanted)| {
        p.find_group(group)
            .is_some_and(|(_, values)| values.iter().any(|v| fuzzy_match(wanted, v)))
    });
    if !options_ok {
        return false;
    }
    target.price_cap.is_none_or(|cap| cheapest_price(target, p) <= cap)
}

/// Exhaustive scan of the target's category for products meeting every
/// constraint. Products elsewhere fail the category check anyway.
pub fn satisfying_products<'a>(catalog: &'a Catalog, target: &TargetSpec) -> Vec<&'a Product> {
    catalog.products_in(&target.category).filter(|p| satisfies(target, p)).collect()
}

/// Knobs for [`generate_tasks`].
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGenConfig {
    /// Share of tasks turned into personalized tasks with a profile.
    pub personalized_fraction: f64,
    /// Used to tell brands and materials apart from other attributes.
    pub vocabulary: Vocabulary,
}

impl Default for TaskGenConfig {
    fn default() -> Self {
        Self { personalized_fraction: 0.5, vocabulary: Vocabulary::default() }
    }
}

fn contains_ci(pool: &[String], value: &str) -> bool {
    let v = text::normalize(value);
    pool.iter().any(|p| text::normalize(p) == v)
}

fn attribute_topic(vocab: &Vocabulary, attr: &str) -> Topic {
    if contains_ci(&vocab.brands, attr) {
        Topic::Brand
    } else if contains_ci(&vocab.materials, attr) {
        Topic::Material
    } else {
        Topic::Feature
    }
}

fn option_topic(group: &str) -> Topic {
    let g = group.to_lowercase();
    if g.contains("color") || g.contains("colour") {
        Topic::Color
    } else if g.contains("size") {
        Topic::Size
    } else {
        Topic::Option
    }
}

/// Indirect phrasings for the default feature pool.
fn feature_phrases(attr: &str) -> &'static [&'static str] {
    match text::normalize(attr).as_str() {
        "cushioning" => &["soft and well cushioned", "kind to the joints on landing"],
        "wear resistant" => &["hard-wearing", "built to survive heavy use"],
        "breathable" => &["airy so it does not get stuffy", "well ventilated"],
        "anti slip" => &["grippy on smooth floors", "non-slip"],
        "lightweight" => &["light to carry", "not heavy at all"],
        "waterproof" => &["fine in the rain", "able to keep water out"],
        "shock absorbing" => &["good at soaking up impact", "gentle on impact"],
        "quick dry" => &["fast drying", "dry again in no time"],
        "foldable" => &["able to fold away", "collapsible for storage"],
        "adjustable" => &["adjustable to fit", "easy to adjust"],
        "high rebound" => &["springy with lots of bounce", "bouncy"],
        "anti torsion" => &["resistant to twisting", "stable against twisting"],
        "ergonomic" => &["comfortable to hold for long", "ergonomically shaped"],
        "insulated" => &["warm and insulated", "good at keeping the heat in"],
        "reflective" => &["visible at night", "reflective in the dark"],
        "stable support" => &["supportive and stable", "steady support"],
        "unisex" => &["suitable for anyone regardless of gender", "a unisex style"],
        "authentic" => &["genuine", "guaranteed original"],
        "washable" => &["easy to wash", "machine washable"],
        "compact" => &["compact", "small enough to stash anywhere"],
        _ => &[],
    }
}

fn feature_cue<R: Rng>(rng: &mut R, attr: &str) -> String {
    feature_phrases(attr)
        .choose(rng)
        .map(|s| s.to_string())
        .unwrap_or_else(|| attr.to_lowercase())
}

fn nice_cap(price: f64) -> f64 {
    ((price / 50.0).ceil() * 50.0).max(price)
}

fn reveal_plan<R: Rng>(rng: &mut R, vocab: &Vocabulary, target: &TargetSpec) -> Vec<RevealItem> {
    let fine = target.category.fine_category.clone();
    let fine_lower = fine.to_lowercase();
    let mut plan = vec![RevealItem {
        slot: Slot::Category,
        topic: Topic::Category,
        value: fine.clone(),
        cue: fine_lower.clone(),
        text: format!("I'm looking for {fine_lower}."),
        in_profile: false,
    }];
    for attr in &target.attributes {
        let topic = attribute_topic(vocab, attr);
        let lower = attr.to_lowercase();
        let (cue, text) = match topic {
            Topic::Brand => (format!("from {attr}"), format!("I'd like the {attr} brand.")),
            Topic::Material => (format!("made of {lower}"), format!("The material should be {lower}.")),
            _ => (feature_cue(rng, attr), format!("It needs to be {lower}.")),
        };
        plan.push(RevealItem { slot: Slot::Attribute(attr.clone()), topic, value: attr.clone(), cue, text, in_profile: false });
    }
    for (group, value) in &target.options {
        let topic = option_topic(group);
        let (cue, text) = match topic {
            Topic::Color => (format!("in {value}"), format!("I want the {value} color.")),
            Topic::Size => (format!("size {value}"), format!("My size is {value}.")),
            _ => (
                format!("the {value} {}", group.to_lowercase()),
                format!("For {}, I need {value}.", group.to_lowercase()),
            ),
        };
        plan.push(RevealItem { slot: Slot::Option(group.clone()), topic, value: value.clone(), cue, text, in_profile: false });
    }
    if let Some(cap) = target.price_cap {
        let cap = format_compact_price(cap);
        plan.push(RevealItem {
            slot: Slot::PriceCap,
            topic: Topic::Budget,
            value: cap.clone(),
            cue: format!("within {cap} yuan"),
            text: format!("My budget is within {cap} yuan."),
            in_profile: false,
        });
    }
    plan
}

fn join_phrases(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Assembles the instruction from every cue not carried by the profile.
fn compose_instruction<R: Rng>(rng: &mut R, plan: &[RevealItem]) -> String {
    let visible: Vec<&RevealItem> = plan.iter().filter(|i| !i.in_profile).collect();
    let of = |topics: &[Topic]| -> Vec<String> {
        visible.iter().filter(|i| topics.contains(&i.topic)).map(|i| i.cue.clone()).collect()
    };
    let category = of(&[Topic::Category]).pop().unwrap_or_default();
    let brand = of(&[Topic::Brand]);
    let material = of(&[Topic::Material]);
    let features = of(&[Topic::Feature]);
    let options = of(&[Topic::Color, Topic::Size, Topic::Option]);
    let budget = of(&[Topic::Budget]);

    let mut head = match rng.gen_range(0..4) {
        0 => format!("I'm shopping for {category}"),
        1 => format!("Could you find me some {category}"),
        2 => format!("I need new {category}"),
        _ => format!("Help me pick out {category}"),
    };
    for extra in brand.iter().chain(material.iter()) {
        head.push(' ');
        head.push_str(extra);
    }
    head.push('.');
    let mut sentences = vec![head];
    if !features.is_empty() {
        let list = join_phrases(&features);
        sentences.push(match rng.gen_range(0..3) {
            0 => format!("They should be {list}."),
            1 => format!("Ideally they are {list}."),
            _ => format!("What matters to me: {list}."),
        });
    }
    if !options.is_empty() {
        sentences.push(format!("I'd like them {}.", join_phrases(&options)));
    }
    if let Some(b) = budget.first() {
        sentences.push(match rng.gen_range(0..2) {
            0 => format!("Please keep it {b}."),
            _ => format!("The budget is {b}."),
        });
    }
    sentences.join(" ")
}

fn canonical_query(vocab: &Vocabulary, p: &Product) -> String {
    let brand = p.attributes.iter().find(|a| contains_ci(&vocab.brands, a));
    match brand {
        Some(b) => format!("{b} {}", p.category.fine_category).to_lowercase(),
        None => p.category.fine_category.to_lowercase(),
    }
}

/// Tries to pin `p` down with a constraint set no other product meets.
fn build_target<R: Rng>(rng: &mut R, catalog: &Catalog, vocab: &Vocabulary, p: &Product) -> Option<TargetSpec> {
    for _ in 0..ATTEMPTS_PER_PRODUCT {
        let options: IndexMap<String, String> = p
            .options
            .iter()
            .map(|(g, vs)| (g.clone(), vs.choose(rng).expect("validated non-empty").clone()))
            .collect();
        let price = p.effective_price(&options);
        let mut target = TargetSpec {
            product_id: p.product_id.clone(),
            category: p.category.clone(),
            title: p.title.clone(),
            canonical_query: canonical_query(vocab, p),
            attributes: p.attributes.clone(),
            options,
            price_cap: Some(nice_cap(price)),
        };
        for tighten in [false, true] {
            if tighten {
                target.price_cap = Some(price);
            }
            let hits = satisfying_products(catalog, &target);
            if hits.len() == 1 && hits[0].product_id == p.product_id {
                return Some(target);
            }
        }
    }
    None
}

/// Builds `count` unambiguous tasks over distinct target products.
pub fn generate_tasks(
    catalog: &Catalog,
    seed: u64,
    count: usize,
    config: &TaskGenConfig,
) -> Result<TaskSet, TaskError> {
    if count == 0 {
        return Err(TaskError::ZeroCount);
    }
    if count > catalog.len() {
        return Err(TaskError::CatalogTooSmall { requested: count, available: catalog.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..catalog.len()).collect();
    order.shuffle(&mut rng);

    let mut set = TaskSet::default();
    for idx in order {
        if set.tasks.len() == count {
            break;
        }
        let product = &catalog.products()[idx];
        let Some(target) = build_target(&mut rng, catalog, &config.vocabulary, product) else {
            continue;
        };
        let plan = reveal_plan(&mut rng, &config.vocabulary, &target);
        let instruction = compose_instruction(&mut rng, &plan);
        let task = Task {
            task_id: format!("task-{:05}", set.tasks.len()),
            instruction,
            target,
            scenarios: vec![Scenario::SingleTurn, Scenario::MultiTurn],
            profile_ref: None,
            split: Split::Train,
            reveal_plan: plan,
        };
        let personalize_seed: u64 = rng.gen();
        if rng.gen_bool(config.personalized_fraction.clamp(0.0, 1.0)) {
            if let Ok((task, profile)) = personalize(&task, personalize_seed, &config.vocabulary) {
                set.profiles.insert(profile.user_id.clone(), profile);
                set.tasks.push(task);
                continue;
            }
        }
        set.tasks.push(task);
    }
    if set.tasks.len() < count {
        return Err(TaskError::Unsatisfiable { requested: count, produced: set.tasks.len() });
    }
    Ok(set)
}

fn movable(item: &RevealItem) -> bool {
    matches!(item.topic, Topic::Brand | Topic::Budget | Topic::Size)
}

const STYLES: &[&str] = &["Minimalist Sport", "Techwear", "Classic", "Streetwear", "Outdoor Rugged", "Business Casual"];
const CITIES: &[(&str, &str)] = &[
    ("Shenzhen", "Guangdong"),
    ("Hangzhou", "Zhejiang"),
    ("Chengdu", "Sichuan"),
    ("Wuhan", "Hubei"),
    ("Nanjing", "Jiangsu"),
];

/// Moves brand, budget and size constraints out of the instruction into a
/// generated profile padded with distractor preferences.
pub fn personalize(task: &Task, seed: u64, vocab: &Vocabulary) -> Result<(Task, UserProfile), TaskError> {
    if task.is_personalized() {
        return Err(TaskError::NotPlain(task.task_id.clone()));
    }
    let found = task.reveal_plan.iter().filter(|i| movable(i)).count();
    if found < 2 {
        return Err(TaskError::TooFewMovable { task_id: task.task_id.clone(), found });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = task.reveal_plan.clone();
    for item in plan.iter_mut().filter(|i| movable(i)) {
        item.in_profile = true;
    }

    let target_brand = plan.iter().find(|i| i.topic == Topic::Brand).map(|i| i.value.clone());
    let mut brands = Vec::new();
    if let Some(b) = &target_brand {
        brands.push(BrandPreference { level: PreferenceLevel::High, brand: b.clone() });
    }
    let distractor_brands: Vec<&String> = vocab
        .brands
        .iter()
        .filter(|b| target_brand.as_deref().is_none_or(|t| !text::normalize(t).eq(&text::normalize(b))))
        .collect::<Vec<_>>()
        .choose_multiple(&mut rng, 3)
        .cloned()
        .collect();
    for b in distractor_brands {
        let level = if rng.gen_bool(0.5) { PreferenceLevel::Medium } else { PreferenceLevel::Low };
        brands.push(BrandPreference { level, brand: b.clone() });
    }
    brands.shuffle(&mut rng);

    let price_range = plan.iter().find(|i| i.topic == Topic::Budget).map(|_| {
        let cap = task.target.price_cap.expect("budget slot implies cap");
        PriceRange { max: cap, min: ((cap * 0.4) / 10.0).floor() * 10.0 }
    });
    let mut sizes = IndexMap::new();
    for item in plan.iter().filter(|i| i.topic == Topic::Size) {
        if let Slot::Option(group) = &item.slot {
            sizes.insert(group.clone(), item.value.clone());
        }
    }
    let target_attrs: Vec<String> = task.target.attributes.iter().map(|a| text::normalize(a)).collect();
    let pick = |rng: &mut ChaCha8Rng, pool: &[String], n: usize| -> Vec<String> {
        pool.iter()
            .filter(|x| !target_attrs.contains(&text::normalize(x)))
            .collect::<Vec<_>>()
            .choose_multiple(rng, n)
            .map(|s| s.to_string())
            .collect()
    };
    let features = pick(&mut rng, &vocab.features, 2);
    let materials = pick(&mut rng, &vocab.materials, 1);
    let target_colors: Vec<String> = task.target.options.values().map(|v| text::normalize(v)).collect();
    let colors: Vec<String> = vocab
        .colors
        .iter()
        .filter(|c| !target_colors.contains(&text::normalize(c)))
        .collect::<Vec<_>>()
        .choose_multiple(&mut rng, 2)
        .map(|s| s.to_string())
        .collect();
    let styles: Vec<String> = STYLES.choose_multiple(&mut rng, 2).map(|s| s.to_string()).collect();

    let mut categories = IndexMap::new();
    categories.insert(task.target.category.domain.clone(), PreferenceLevel::High);
    for d in vocab.domains.choose_multiple(&mut rng, 3) {
        categories.entry(d.clone()).or_insert(if rng.gen_bool(0.5) { PreferenceLevel::Medium } else { PreferenceLevel::Low });
    }
    let (city, province) = *CITIES.choose(&mut rng).expect("non-empty");
    let user_id = format!("U{:08}", rng.gen_range(10_000_000u32..100_000_000));

    let profile = UserProfile {
        user_id: user_id.clone(),
        transactions: TransactionCharacteristics {
            coupon_usage_rate: rng.gen_range(0..100) as f64 / 100.0,
            repeat_purchase_rate: rng.gen_range(0..100) as f64 / 100.0,
            average_order_value: rng.gen_range(5_000..50_000) as f64 / 100.0,
            preferred_payment_method: ["Alipay", "WeChat Pay", "Credit Card"].choose(&mut rng).expect("non-empty").to_string(),
            promotion_sensitive: rng.gen_bool(0.4),
            orders_last_90_days: rng.gen_range(1..30),
        },
        demographics: Demographics {
            membership_level: ["Regular", "Silver Member", "Gold Member", "Platinum Member"].choose(&mut rng).expect("non-empty").to_string(),
            age_range: ["18-24", "25-34", "35-44", "45-54"].choose(&mut rng).expect("non-empty").to_string(),
            gender: ["Female", "Male"].choose(&mut rng).expect("non-empty").to_string(),
            spending_level: ["Low", "Medium", "High"].choose(&mut rng).expect("non-empty").to_string(),
        },
        preferences: InterestsAndPreferences {
            brands,
            attributes: AttributePreferences { price_range, features, sizes, materials, colors, styles },
            categories,
        },
        location: Location { city: city.into(), province: province.into() },
        tags: vec![
            format!("Frequent {} shopper", task.target.category.first_category.to_lowercase()),
            ["Brand oriented", "Function oriented", "Value seeker"].choose(&mut rng).expect("non-empty").to_string(),
        ],
        behavior: BehavioralFeatures {
            recent_search_keywords: vec![task.target.category.first_category.to_lowercase()],
            active_hours: {
                let mut h: Vec<u8> = (6..24).collect::<Vec<u8>>().choose_multiple(&mut rng, 3).cloned().collect();
                h.sort();
                h
            },
            visits_last_7_days: rng.gen_range(1..30),
        },
    };

    let instruction = compose_instruction(&mut rng, &plan);
    let revised = Task {
        task_id: task.task_id.clone(),
        instruction,
        target: task.target.clone(),
        scenarios: vec![Scenario::SingleTurnPersonalized, Scenario::MultiTurnPersonalized],
        profile_ref: Some(user_id),
        split: task.split,
        reveal_plan: plan,
    };
    Ok((revised, profile))
}

/// Checks that the instruction plus the profile still pin down every
/// constrained slot.
pub fn check_conservation(task: &Task, profile: Option<&UserProfile>) -> Result<(), String> {
    let expected = task.constrained_slots();
    let planned: Vec<Slot> = task.reveal_plan.iter().map(|i| i.slot.clone()).collect();
    if planned != expected {
        return Err(format!("reveal plan slots {planned:?} differ from constrained slots {expected:?}"));
    }
    for item in &task.reveal_plan {
        if !item.in_profile {
            if !task.instruction.contains(&item.cue) {
                return Err(format!("instruction lacks cue {:?} for {}", item.cue, item.slot));
            }
            continue;
        }
        let profile = profile.ok_or_else(|| format!("{} is carried by a missing profile", item.slot))?;
        let prefs = &profile.preferences.attributes;
        let ok = match item.topic {
            Topic::Brand => profile.top_brand().is_some_and(|b| text::normalize(b) == text::normalize(&item.value)),
            Topic::Budget => prefs
                .price_range
                .is_some_and(|r| Some(r.max) == task.target.price_cap),
            Topic::Size => prefs.sizes.values().any(|v| v == &item.value),
            _ => false,
        };
        if !ok {
            return Err(format!("profile does not imply {}", item.slot));
        }
    }
    Ok(())
}

/// Full consistency check of one task against the catalog.
pub fn validate_task(catalog: &Catalog, set: &TaskSet, task: &Task) -> Result<(), TaskError> {
    let invalid = |message: String| TaskError::Invalid { task_id: task.task_id.clone(), message };
    let product = catalog
        .get_product(&task.target.product_id)
        .map_err(|e| invalid(e.to_string()))?;
    if product.category != task.target.category {
        return Err(invalid("target category differs from the product's".into()));
    }
    if task.target.price_cap.is_some_and(|c| c < 0.0) {
        return Err(invalid("negative price cap".into()));
    }
    let hits = satisfying_products(catalog, &task.target);
    if hits.len() != 1 || hits[0].product_id != product.product_id {
        return Err(invalid(format!("{} products satisfy the constraints", hits.len())));
    }
    let profile = set.profile_for(task)?;
    for s in &task.scenarios {
        if s.is_personalized() != task.is_personalized() {
            return Err(invalid(format!("scenario {s} does not match profile presence")));
        }
    }
    check_conservation(task, profile).map_err(invalid)
}

/// Deterministic, domain-stratified split. Each domain contributes its
/// largest-remainder share of `round(ratio * n)` training tasks.
pub fn split_tasks(tasks: &[Task], ratio: f64, seed: u64) -> Result<(Vec<Task>, Vec<Task>), TaskError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(TaskError::DegenerateRatio(ratio));
    }
    let mut by_domain: BTreeMap<&str, Vec<&Task>> = BTreeMap::new();
    for t in tasks {
        by_domain.entry(t.domain()).or_default().push(t);
    }
    let total_train = (ratio * tasks.len() as f64).round() as usize;
    let mut quotas: Vec<(&str, usize, f64)> = by_domain
        .iter()
        .map(|(d, ts)| {
            let exact = ratio * ts.len() as f64;
            (*d, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(quotas[a].0.cmp(quotas[b].0)));
    for &i in order.iter().take(total_train.saturating_sub(assigned)) {
        quotas[i].1 += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (domain, quota, _) in quotas {
        let mut group = by_domain[domain].clone();
        group.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        group.shuffle(&mut rng);
        for (i, t) in group.into_iter().enumerate() {
            let mut t = t.clone();
            if i < quota {
                t.split = Split::Train;
                train.push(t);
            } else {
                t.split = Split::Test;
                test.push(t);
            }
        }
    }
    train.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    test.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate_catalog, GenerationSpec};

    fn block() -> Catalog {
        generate_catalog(1, &GenerationSpec::new(1, 1, 1, 120)).unwrap()
    }

    #[test]
    fn ten_unique_tasks() {
        let c = block();
        let set = generate_tasks(&c, 11, 10, &TaskGenConfig::default()).unwrap();
        assert_eq!(set.len(), 10);
        let mut targets: Vec<&str> = set.tasks.iter().map(|t| t.target_product_id()).collect();
        targets.sort();
        targets.dedup();
        assert_eq!(targets.len(), 10);
        for t in &set.tasks {
            let hits = satisfying_products(&c, &t.target);
            assert_eq!(hits.len(), 1);
            assert_eq!(hits[0].product_id, t.target.product_id);
            validate_task(&c, &set, t).unwrap();
        }
    }

    #[test]
    fn zero_and_oversized_counts() {
        let c = block();
        assert!(matches!(generate_tasks(&c, 1, 0, &TaskGenConfig::default()), Err(TaskError::ZeroCount)));
        assert!(matches!(
            generate_tasks(&c, 1, 500, &TaskGenConfig::default()),
            Err(TaskError::CatalogTooSmall { .. })
        ));
    }

    #[test]
    fn deterministic_generation() {
        let c = block();
        let a = generate_tasks(&c, 5, 8, &TaskGenConfig::default()).unwrap();
        let b = generate_tasks(&c, 5, 8, &TaskGenConfig::default()).unwrap();
        assert_eq!(a.tasks_jsonl(), b.tasks_jsonl());
        assert_eq!(a.profiles_jsonl(), b.profiles_jsonl());
    }

    #[test]
    fn file_round_trip() {
        let c = block();
        let set = generate_tasks(&c, 5, 8, &TaskGenConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.jsonl");
        set.save(&path).unwrap();
        let back = TaskSet::load(&path).unwrap();
        assert_eq!(back, set);
    }

    fn plain_task(c: &Catalog) -> Task {
        let cfg = TaskGenConfig { personalized_fraction: 0.0, ..Default::default() };
        generate_tasks(c, 3, 1, &cfg).unwrap().tasks.remove(0)
    }

    #[test]
    fn personalize_moves_budget_and_size() {
        let c = block();
        let task = plain_task(&c);
        let cap = format_compact_price(task.target.price_cap.unwrap());
        let size = task.target.options["Size"].clone();
        assert!(task.instruction.contains(&format!("within {cap} yuan")));
        let (revised, profile) = personalize(&task, 9, &Vocabulary::default()).unwrap();
        assert!(!revised.instruction.contains(&format!("within {cap} yuan")));
        assert!(!revised.instruction.contains(&format!("size {size}")));
        let prefs = &profile.preferences.attributes;
        assert!(prefs.price_range.unwrap().max >= task.target.price_cap.unwrap());
        assert_eq!(prefs.sizes["Size"], size);
        check_conservation(&revised, Some(&profile)).unwrap();
        // the target brand is the only top-level brand; the rest are distractors
        let distractors = profile
            .preferences
            .brands
            .iter()
            .filter(|b| !task.target.attributes.contains(&b.brand))
            .count();
        assert!(distractors >= 2);
    }

    #[test]
    fn personalize_is_deterministic_and_rejects_repeat() {
        let c = block();
        let task = plain_task(&c);
        let a = personalize(&task, 4, &Vocabulary::default()).unwrap();
        let b = personalize(&task, 4, &Vocabulary::default()).unwrap();
        assert_eq!(a, b);
        assert!(matches!(personalize(&a.0, 4, &Vocabulary::default()), Err(TaskError::NotPlain(_))));
    }

    #[test]
    fn personalize_needs_two_movable() {
        let c = block();
        let mut task = plain_task(&c);
        task.reveal_plan.retain(|i| !matches!(i.topic, Topic::Brand | Topic::Size));
        assert!(matches!(
            personalize(&task, 1, &Vocabulary::default()),
            Err(TaskError::TooFewMovable { found: 1, .. })
        ));
    }

    fn synthetic_tasks(n: usize, domains: &[&str]) -> Vec<Task> {
        let c = block();
        let base = plain_task(&c);
        (0..n)
            .map(|i| {
                let mut t = base.clone();
                t.task_id = format!("t{i:03}");
                t.target.category.domain = domains[i % domains.len()].to_string();
                t
            })
            .collect()
    }

    #[test]
    fn split_ninety_ten() {
        let tasks = synthetic_tasks(100, &["A"]);
        let (train, test) = split_tasks(&tasks, 0.9, 1).unwrap();
        assert_eq!((train.len(), test.len()), (90, 10));
        let ids: std::collections::HashSet<_> = train.iter().chain(&test).map(|t| t.task_id.clone()).collect();
        assert_eq!(ids.len(), 100);
        assert_eq!(split_tasks(&tasks, 0.9, 1).unwrap(), (train, test));
    }

    #[test]
    fn split_stratified() {
        let tasks = synthetic_tasks(103, &["A", "B", "C", "D"]);
        let ratio = 0.7;
        let (train, _) = split_tasks(&tasks, ratio, 2).unwrap();
        for d in ["A", "B", "C", "D"] {
            let n = tasks.iter().filter(|t| t.domain() == d).count() as f64;
            let k = train.iter().filter(|t| t.domain() == d).count() as f64;
            assert!((k - ratio * n).abs() <= 1.0, "{d}: {k} of {n}");
        }
    }

    #[test]
    fn degenerate_ratio() {
        let tasks = synthetic_tasks(4, &["A"]);
        assert!(matches!(split_tasks(&tasks, 0.0, 1), Err(TaskError::DegenerateRatio(_))));
        assert!(matches!(split_tasks(&tasks, 1.0, 1), Err(TaskError::DegenerateRatio(_))));
    }
}
