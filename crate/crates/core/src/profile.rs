//! Structured shopper profiles used by the personalized scenarios.
//!
//! Field names follow the profile file format so a profile serializes to
//! the same JSON shape agents see in their observations.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PreferenceLevel {
    None,
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionCharacteristics {
    #[serde(rename = "Coupon Usage Rate")]
    pub coupon_usage_rate: f64,
    #[serde(rename = "Repeat Purchase Rate")]
    pub repeat_purchase_rate: f64,
    #[serde(rename = "Average Order Value")]
    pub average_order_value: f64,
    #[serde(rename = "Preferred Payment Method")]
    pub preferred_payment_method: String,
    #[serde(rename = "Is Promotion-Sensitive")]
    pub promotion_sensitive: bool,
    #[serde(rename = "Orders in Last 90 Days")]
    pub orders_last_90_days: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    #[serde(rename = "Membership Level")]
    pub membership_level: String,
    #[serde(rename = "Age Range")]
    pub age_range: String,
    #[serde(rename = "Gender")]
    pub gender: String,
    #[serde(rename = "Spending Level")]
    pub spending_level: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrandPreference {
    #[serde(rename = "Preference Level")]
    pub level: PreferenceLevel,
    #[serde(rename = "Brand Name")]
    pub brand: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceRange {
    #[serde(rename = "Max")]
    pub max: f64,
    #[serde(rename = "Min")]
    pub min: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttributePreferences {
    #[serde(rename = "Price Range", default, skip_serializing_if = "Option::is_none")]
    pub price_range: Option<PriceRange>,
    #[serde(rename = "Features", default)]
    pub features: Vec<String>,
    #[serde(rename = "Size Preferences", default)]
    pub sizes: IndexMap<String, String>,
    #[serde(rename = "Materials", default)]
    pub materials: Vec<String>,
    #[serde(rename = "Colors", default)]
    pub colors: Vec<String>,
    #[serde(rename = "Styles", default)]
    pub styles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InterestsAndPreferences {
    #[serde(rename = "Brand Preferences", default)]
    pub brands: Vec<BrandPreference>,
    #[serde(rename = "Product Attribute Preferences", default)]
    pub attributes: AttributePreferences,
    #[serde(rename = "Category Preferences", default)]
    pub categories: IndexMap<String, PreferenceLevel>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BehavioralFeatures {
    #[serde(rename = "Search Keywords in Last 14 Days", default)]
    pub recent_search_keywords: Vec<String>,
    #[serde(rename = "Active Hours", default)]
    pub active_hours: Vec<u8>,
    #[serde(rename = "Visits in Last 7 Days", default)]
    pub visits_last_7_days: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Location {
    #[serde(rename = "City")]
    pub city: String,
    #[serde(rename = "Province")]
    pub province: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    #[serde(rename = "User ID")]
    pub user_id: String,
    #[serde(rename = "Transaction Characteristics")]
    pub transactions: TransactionCharacteristics,
    #[serde(rename = "Demographics")]
    pub demographics: Demographics,
    #[serde(rename = "Interests and Preferences")]
    pub preferences: InterestsAndPreferences,
    #[serde(rename = "Location Information")]
    pub location: Location,
    #[serde(rename = "User Tags", default)]
    pub tags: Vec<String>,
    #[serde(rename = "Behavioral Features")]
    pub behavior: BehavioralFeatures,
}

impl UserProfile {
    pub fn validate(&self) -> Result<(), String> {
        if let Some(range) = self.preferences.attributes.price_range {
            if range.min > range.max {
                return Err(format!(
                    "profile {}: price range min {} exceeds max {}",
                    self.user_id, range.min, range.max
                ));
            }
        }
        Ok(())
    }

    /// Brand ranked strictly highest, if exactly one brand holds the top
    /// level.
    pub fn top_brand(&self) -> Option<&str> {
        let top = self.preferences.brands.iter().map(|b| b.level).max()?;
        let mut at_top = self.preferences.brands.iter().filter(|b| b.level == top);
        let first = at_top.next()?;
        at_top.next().is_none().then_some(first.brand.as_str())
    }

    /// Compact JSON used in observations.
    pub fn to_compact_json(&self) -> String {
        serde_json::to_string(self).expect("profile serializes")
    }
}
