//! `[SEP]`-joined page rendering.

use serde::{Deserialize, Serialize};

use super::{DetailTab, Page};
use crate::catalog::{format_compact_price, Catalog};
use crate::search::SearchIndex;

pub const SEP: &str = " [SEP] ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    pub search_available: bool,
    pub clickable: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shopper_utterance: Option<String>,
}

impl Observation {
    /// Text shown to LLM agents: the page, search availability and the
    /// clickable list.
    pub fn display(&self) -> String {
        let mut out = format!(
            "{}\nIs search available: {}\nClickable buttons: {}",
            self.text,
            if self.search_available { "True" } else { "False" },
            serde_json::to_string(&self.clickable).expect("strings serialize")
        );
        if let Some(u) = &self.shopper_utterance {
            out.push_str("\nShopper: ");
            out.push_str(u);
        }
        out
    }
}

/// Fixed per-session header content.
pub struct RenderContext<'a> {
    /// The instruction, or the shopper's opener in multi-turn scenarios.
    pub instruction: &'a str,
    pub profile_json: Option<&'a str>,
}

fn header(ctx: &RenderContext<'_>, segments: &mut Vec<String>) {
    segments.push("Instruction:".into());
    segments.push(ctx.instruction.to_string());
    if let Some(p) = ctx.profile_json {
        segments.push("Profile:".into());
        segments.push(p.to_string());
    }
}

/// Renders `page`. Pages stored in a session always refer to valid
/// products and result pages.
pub fn render(page: &Page, ctx: &RenderContext<'_>, catalog: &Catalog, index: &SearchIndex) -> Observation {
    let mut segs: Vec<String> = Vec::new();
    let mut clickable: Vec<String> = Vec::new();
    match page {
        Page::SearchHome => {
            segs.push("WebShop".into());
            header(ctx, &mut segs);
            segs.push("Search".into());
        }
        Page::Results { query, page } => {
            let results = index.search(query, *page).expect("stored results page is valid");
            header(ctx, &mut segs);
            segs.push("Back to Search".into());
            clickable.push("back to search".into());
            segs.push(format!("Page {} (Total results: {})", results.page_number, results.total_results));
            if results.page_number > 1 {
                segs.push("< Prev".into());
                clickable.push("< prev".into());
            }
            if results.page_number < results.total_pages() {
                segs.push("Next >".into());
                clickable.push("next >".into());
            }
            for entry in &results.entries {
                segs.push(entry.product_id.clone());
                segs.push(entry.title.clone());
                segs.push(entry.price.clone());
                clickable.push(entry.product_id.clone());
            }
        }
        Page::Item { product_id, selected, tab, .. } => {
            let product = catalog.get_product(product_id).expect("stored item page is valid");
            header(ctx, &mut segs);
            segs.push("Back to Search".into());
            segs.push("< Prev".into());
            clickable.extend(
                ["back to search", "< prev", "description", "features", "reviews", "buy now"].map(String::from),
            );
            for (group, values) in &product.options {
                segs.push(group.clone());
                for v in values {
                    segs.push(v.clone());
                    clickable.push(v.clone());
                }
            }
            segs.push(product.title.clone());
            let price = if product.price_settled(selected) {
                format_compact_price(product.effective_price(selected))
            } else {
                product.pricing.display()
            };
            segs.push(format!("Price: {price}"));
            segs.push(format!("Store: {}", product.shop_name));
            segs.extend(["Description", "Features", "Reviews", "Buy Now"].map(String::from));
            if let Some(tab) = tab {
                let body = match tab {
                    DetailTab::Description => &product.description,
                    DetailTab::Features => &product.features,
                    DetailTab::Reviews => &product.reviews,
                };
                segs.push(if body.trim().is_empty() { "None".to_string() } else { body.clone() });
            }
        }
    }
    Observation {
        text: segs.join(SEP),
        search_available: matches!(page, Page::SearchHome),
        clickable,
        shopper_utterance: None,
    }
}
