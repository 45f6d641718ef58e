//! Purchase scoring: category coefficient, attribute/option/price matching
//! and the loose (additive), strict (multiplicative) and success rewards.

use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::catalog::{CategoryPath, Product};
use crate::text;

/// Minimum normalized edit similarity for two strings to count as the same.
pub const FUZZY_THRESHOLD: f64 = 0.85;
/// Title overlap above this gives the full category coefficient.
pub const OVERLAP_FULL: f64 = 0.2;
/// Title overlap below this drops the coefficient to 0.1.
pub const OVERLAP_LOW: f64 = 0.1;

/// What the shopper wants: the gold product's category, attributes,
/// options and price cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub product_id: String,
    pub category: CategoryPath,
    pub title: String,
    pub canonical_query: String,
    pub attributes: Vec<String>,
    pub options: IndexMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_cap: Option<f64>,
}

/// What the agent bought.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurchaseOutcome {
    pub product: Product,
    pub selected_options: IndexMap<String, String>,
    pub effective_price: f64,
    #[serde(default)]
    pub first_search_query: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_finish: f64,
    pub r_cat: f64,
    pub r_att: f64,
    pub r_opt: f64,
    pub r_price: f64,
    pub r_loose: f64,
    pub r_strict: f64,
    pub r_succ: f64,
}

impl RewardBreakdown {
    pub fn is_success(&self) -> bool {
        self.r_succ == 1.0
    }

    pub fn field(&self, selector: RewardSelector) -> f64 {
        match selector {
            RewardSelector::Loose => self.r_loose,
            RewardSelector::Strict => self.r_strict,
            RewardSelector::Success => self.r_succ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSelector {
    Loose,
    Strict,
    Success,
}

impl std::str::FromStr for RewardSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "loose" | "r_loose" => Ok(Self::Loose),
            "strict" | "r_strict" => Ok(Self::Strict),
            "success" | "succ" | "r_succ" => Ok(Self::Success),
            other => Err(format!("unknown reward selector {other:?}")),
        }
    }
}

/// Normalized edit similarity in [0, 1] over the canonical forms.
pub fn similarity(a: &str, b: &str) -> f64 {
    strsim::normalized_levenshtein(&text::normalize(a), &text::normalize(b))
}

/// Edit similarity at or above [`FUZZY_THRESHOLD`], or whole-token
/// containment in either direction.
pub fn fuzzy_match(a: &str, b: &str) -> bool {
    let (na, nb) = (text::normalize(a), text::normalize(b));
    if na.is_empty() || nb.is_empty() {
        return false;
    }
    strsim::normalized_levenshtein(&na, &nb) >= FUZZY_THRESHOLD
        || text::contains_tokens(a, b)
        || text::contains_tokens(b, a)
}

/// Share of the target title's distinct tokens found in the other title.
pub fn title_overlap(target_title: &str, other_title: &str) -> f64 {
    let target: HashSet<String> = text::tokenize(target_title).into_iter().collect();
    if target.is_empty() {
        return 0.0;
    }
    let other: HashSet<String> = text::tokenize(other_title).into_iter().collect();
    target.intersection(&other).count() as f64 / target.len() as f64
}

pub fn category_coefficient(target: &TargetSpec, outcome: &PurchaseOutcome) -> f64 {
    let overlap = title_overlap(&target.title, &outcome.product.title);
    let same_query = outcome.first_search_query.as_deref() == Some(target.canonical_query.as_str());
    if same_query || target.category.shared_nodes(&outcome.product.category) >= 2 || overlap > OVERLAP_FULL {
        1.0
    } else if overlap == 0.0 {
        0.0
    } else if overlap < OVERLAP_LOW {
        0.1
    } else {
        0.5
    }
}

/// Target attributes found on the product: fuzzy against its attribute
/// list, else as a phrase in its title or description.
pub fn attribute_matches(target_attributes: &[String], product: &Product) -> Vec<String> {
    target_attributes
        .iter()
        .filter(|wanted| {
            product.attributes.iter().any(|have| fuzzy_match(wanted, have))
                || text::contains_tokens(&product.title, wanted)
                || text::contains_tokens(&product.description, wanted)
        })
        .cloned()
        .collect()
}

fn ratio(matched: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        matched as f64 / total as f64
    }
}

pub fn match_attributes(target_attributes: &[String], outcome: &PurchaseOutcome) -> (Vec<String>, f64) {
    let matched = attribute_matches(target_attributes, &outcome.product);
    let r = ratio(matched.len(), target_attributes.len());
    (matched, r)
}

/// Value selected for a group, looking the group up by normalized name.
pub fn selected_value<'a>(selected: &'a IndexMap<String, String>, group: &str) -> Option<&'a String> {
    let wanted = text::squash_whitespace(group);
    selected
        .iter()
        .find(|(g, _)| text::squash_whitespace(g) == wanted)
        .map(|(_, v)| v)
}

/// Required `(group, value)` pairs whose selected value fuzzy-matches.
pub fn match_options(
    target_options: &IndexMap<String, String>,
    selected: &IndexMap<String, String>,
) -> (Vec<(String, String)>, f64) {
    let matched: Vec<(String, String)> = target_options
        .iter()
        .filter(|(group, wanted)| selected_value(selected, group).is_some_and(|have| fuzzy_match(wanted, have)))
        .map(|(g, v)| (g.clone(), v.clone()))
        .collect();
    let r = ratio(matched.len(), target_options.len());
    (matched, r)
}

pub fn price_indicator(cap: Option<f64>, effective_price: f64) -> f64 {
    match cap {
        Some(cap) if effective_price > cap => 0.0,
        _ => 1.0,
    }
}

/// Every required option selected with exactly the required value.
pub fn options_exact(target_options: &IndexMap<String, String>, selected: &IndexMap<String, String>) -> bool {
    target_options.iter().all(|(group, wanted)| {
        selected_value(selected, group).is_some_and(|have| text::normalize(have) == text::normalize(wanted))
    })
}

pub fn score(target: &TargetSpec, outcome: Option<&PurchaseOutcome>) -> RewardBreakdown {
    let Some(outcome) = outcome else {
        return RewardBreakdown::default();
    };
    let r_cat = category_coefficient(target, outcome);
    let (att, r_att) = match_attributes(&target.attributes, outcome);
    let (opt, r_opt) = match_options(&target.options, &outcome.selected_options);
    let r_price = price_indicator(target.price_cap, outcome.effective_price);

    let denom = (target.attributes.len() + target.options.len() + 1) as f64;
    let r_loose = r_cat * (att.len() as f64 + opt.len() as f64 + r_price) / denom;
    let r_strict = r_cat * r_att * r_opt * r_price;
    let success = outcome.product.product_id == target.product_id
        && r_att == 1.0
        && options_exact(&target.options, &outcome.selected_options)
        && r_price == 1.0;

    RewardBreakdown {
        r_finish: 1.0,
        r_cat,
        r_att,
        r_opt,
        r_price,
        r_loose,
        r_strict,
        r_succ: if success { 1.0 } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Price;

    fn product(id: &str, title: &str, path: CategoryPath, attrs: &[&str]) -> Product {
        Product {
            product_id: id.into(),
            title: title.into(),
            shop_name: "shop".into(),
            category: path,
            options: IndexMap::from([
                ("Color".to_string(), vec!["White/Blue".to_string(), "Black".to_string()]),
                ("Size".to_string(), vec!["40".to_string(), "41".to_string()]),
            ]),
            pricing: Price::Fixed(528.0),
            attributes: attrs.iter().map(|s| s.to_string()).collect(),
            price_deltas: IndexMap::new(),
            description: String::new(),
            features: String::new(),
            reviews: String::new(),
        }
    }

    fn shoes() -> CategoryPath {
        CategoryPath::new("Apparel", "Athletic Shoes", "Badminton Shoes")
    }

    fn target() -> TargetSpec {
        TargetSpec {
            product_id: "p1".into(),
            category: shoes(),
            title: "Nimbus badminton shoes cushioning".into(),
            canonical_query: "nimbus badminton shoes".into(),
            attributes: vec!["Cushioning".into(), "Waterproof".into()],
            options: IndexMap::from([
                ("Color".to_string(), "White/Blue".to_string()),
                ("Size".to_string(), "40".to_string()),
            ]),
            price_cap: Some(550.0),
        }
    }

    fn bought(p: Product, sel: &[(&str, &str)]) -> PurchaseOutcome {
        let selected: IndexMap<String, String> =
            sel.iter().map(|(g, v)| (g.to_string(), v.to_string())).collect();
        let effective_price = p.effective_price(&selected);
        PurchaseOutcome { product: p, selected_options: selected, effective_price, first_search_query: None }
    }

    #[test]
    fn attributes_half_matched() {
        let p = product("p1", "Nimbus badminton shoes", shoes(), &["Cushioning"]);
        let (m, r) = match_attributes(&target().attributes, &bought(p, &[]));
        assert_eq!(m, vec!["Cushioning".to_string()]);
        assert_eq!(r, 0.5);
    }

    #[test]
    fn attribute_fallback_to_title() {
        let p = product("p1", "Nimbus waterproof badminton shoes", shoes(), &["Cushioning"]);
        let (_, r) = match_attributes(&target().attributes, &bought(p, &[]));
        assert_eq!(r, 1.0);
    }

    #[test]
    fn empty_constraints_neutral() {
        let p = product("p1", "x", shoes(), &[]);
        assert_eq!(match_attributes(&[], &bought(p.clone(), &[])).1, 1.0);
        assert_eq!(match_options(&IndexMap::new(), &IndexMap::new()).1, 1.0);
    }

    #[test]
    fn option_ratios() {
        let req = target().options;
        let full: IndexMap<String, String> =
            [("Color", "White/Blue"), ("Size", "40")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        assert_eq!(match_options(&req, &full).1, 1.0);
        let size_only: IndexMap<String, String> = [("Size".to_string(), "40".to_string())].into();
        assert_eq!(match_options(&req, &size_only).1, 0.5);
        let one = IndexMap::from([("Size".to_string(), "40".to_string())]);
        let wrong = IndexMap::from([("Size".to_string(), "41".to_string())]);
        assert_eq!(match_options(&one, &wrong).1, 0.0);
    }

    #[test]
    fn price_boundaries() {
        assert_eq!(price_indicator(Some(550.0), 528.0), 1.0);
        assert_eq!(price_indicator(Some(550.0), 550.0), 1.0);
        assert_eq!(price_indicator(Some(550.0), 551.0), 0.0);
        assert_eq!(price_indicator(None, 1e9), 1.0);
    }

    #[test]
    fn full_match_scores_one() {
        let mut t = target();
        t.attributes = vec!["Cushioning".into()];
        let p = product("p1", &t.title, shoes(), &["Cushioning"]);
        let b = score(&t, Some(&bought(p, &[("Color", "White/Blue"), ("Size", "40")])));
        assert_eq!((b.r_loose, b.r_strict, b.r_succ, b.r_finish), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn worked_example_half_loose_zero_strict() {
        // one of two attributes, zero of one option, price ok
        let mut t = target();
        t.options = IndexMap::from([("Size".to_string(), "40".to_string())]);
        let p = product("p2", "Nimbus badminton shoes", shoes(), &["Cushioning"]);
        let b = score(&t, Some(&bought(p, &[("Size", "41")])));
        assert_eq!(b.r_cat, 1.0);
        assert!((b.r_loose - 0.5).abs() < 1e-12);
        assert_eq!(b.r_strict, 0.0);
        assert_eq!(b.r_succ, 0.0);
    }

    #[test]
    fn no_purchase_all_zero() {
        assert_eq!(score(&target(), None), RewardBreakdown::default());
    }

    #[test]
    fn unrelated_product_zero_coefficient() {
        let p = product(
            "z",
            "Stainless frying pan",
            CategoryPath::new("Home", "Cookware", "Frying Pans"),
            &[],
        );
        assert_eq!(category_coefficient(&target(), &bought(p, &[])), 0.0);
    }

    #[test]
    fn target_itself_full_coefficient() {
        let p = product("p1", "anything", shoes(), &[]);
        assert_eq!(category_coefficient(&target(), &bought(p, &[])), 1.0);
    }

    #[test]
    fn fuzzy_rules() {
        assert!(fuzzy_match("Wear-resistant", "wear resistant"));
        assert!(fuzzy_match("White/Blue", "SHB510WCR White/Blue (Wide last)"));
        assert!(!fuzzy_match("40", "41"));
        assert!(!fuzzy_match("4", "40"));
        assert!(fuzzy_match("Cushionning", "Cushioning"));
        assert!(!fuzzy_match("", "x"));
    }
}
