#![allow(dead_code)]

pub mod oracle;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::Rng;
use shopsim_core::catalog::Product;
use shopsim_core::reward::{PurchaseOutcome, TargetSpec};

const EXTRA_ATTRS: &[&str] = &["Waterproof", "waterproof ", "Cushionin", "防滑", "轻便 透气", "Wide last", "Pro"];
const NOISE_WORDS: &[&str] = &["Shoes", "Edition", "羽毛球鞋", "Classic", "x"];

fn mutate(rng: &mut impl Rng, s: &str) -> String {
    match rng.gen_range(0..5) {
        0 => s.to_uppercase(),
        1 => format!("  {}", s.replace(' ', "  ")),
        2 if s.chars().count() > 2 => {
            let mut c: Vec<char> = s.chars().collect();
            c.pop();
            c.into_iter().collect()
        }
        3 => format!("{s} {}", NOISE_WORDS.choose(rng).unwrap()),
        _ => s.to_string(),
    }
}

/// A target built from one product and a purchase of a (possibly
/// different) product, with perturbed selections, caps and queries.
pub fn random_pair(rng: &mut impl Rng, products: &[Product]) -> (TargetSpec, PurchaseOutcome) {
    let gold = products.choose(rng).unwrap();
    let bought = if rng.gen_bool(0.5) { gold.clone() } else { products.choose(rng).unwrap().clone() };
    let mut bought = bought;
    if rng.gen_bool(0.15) {
        bought.title = format!("{} {}", NOISE_WORDS.choose(rng).unwrap(), bought.title);
    }
    if rng.gen_bool(0.2) {
        bought.title = "完全 unrelated gadget".into();
    }

    let keep = rng.gen_range(0..=gold.attributes.len());
    let mut attributes: Vec<String> = gold.attributes.choose_multiple(rng, keep).cloned().collect();
    for _ in 0..rng.gen_range(0..3) {
        attributes.push(EXTRA_ATTRS.choose(rng).unwrap().to_string());
    }
    if rng.gen_bool(0.3) {
        for a in attributes.iter_mut() {
            *a = mutate(rng, a);
        }
    }

    let mut options = IndexMap::new();
    for (g, values) in &gold.options {
        if rng.gen_bool(0.8) {
            options.insert(g.clone(), values.choose(rng).unwrap().clone());
        }
    }
    let mut selected = IndexMap::new();
    for (g, values) in &bought.options {
        match rng.gen_range(0..6) {
            0 => {}
            1 => {
                selected.insert(g.clone(), values.choose(rng).unwrap().clone());
            }
            2 => {
                let wanted = options.get(g).cloned().unwrap_or_else(|| values[0].clone());
                selected.insert(mutate(rng, g), mutate(rng, &wanted));
            }
            _ => {
                let wanted = options.get(g).cloned().unwrap_or_else(|| values[0].clone());
                selected.insert(g.clone(), wanted);
            }
        }
    }

    let effective_price = bought.effective_price(&selected);
    let price_cap = match rng.gen_range(0..4) {
        0 => None,
        1 => Some(effective_price),
        2 => Some((effective_price - 1.0).max(0.0)),
        _ => Some(effective_price + rng.gen_range(0.0..200.0)),
    };
    let canonical_query = gold.title.split_whitespace().take(3).collect::<Vec<_>>().join(" ");
    let first_search_query = match rng.gen_range(0..3) {
        0 => None,
        1 => Some(canonical_query.clone()),
        _ => Some(format!("{canonical_query} cheap")),
    };
    let target = TargetSpec {
        product_id: gold.product_id.clone(),
        category: gold.category.clone(),
        title: gold.title.clone(),
        canonical_query,
        attributes,
        options,
        price_cap,
    };
    let outcome = PurchaseOutcome { product: bought, selected_options: selected, effective_price, first_search_query };
    (target, outcome)
}
