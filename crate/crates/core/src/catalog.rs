//! Product data model, category hierarchy and line-delimited catalog files.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::generate::GenerationSpec;
use crate::text;

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: invalid field `{field}`: {message}")]
    Malformed {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate product_id {id}")]
    DuplicateId { id: String, line: usize },
    #[error("unknown product id {0}")]
    NotFound(String),
    #[error("manifest inconsistent with catalog: {0}")]
    Manifest(String),
    #[error("catalog generation failed: {0}")]
    Generation(String),
}

/// Position in the three-level hierarchy: domain, first-level category,
/// fine category.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CategoryPath {
    pub domain: String,
    pub first_category: String,
    pub fine_category: String,
}

impl CategoryPath {
    pub fn new(
        domain: impl Into<String>,
        first_category: impl Into<String>,
        fine_category: impl Into<String>,
    ) -> Self {
        Self {
            domain: domain.into(),
            first_category: first_category.into(),
            fine_category: fine_category.into(),
        }
    }

    pub fn nodes(&self) -> [&str; 3] {
        [&self.domain, &self.first_category, &self.fine_category]
    }

    /// Number of levels at which the two paths agree.
    pub fn shared_nodes(&self, other: &CategoryPath) -> usize {
        self.nodes()
            .iter()
            .zip(other.nodes().iter())
            .filter(|(a, b)| a == b)
            .count()
    }
}

impl fmt::Display for CategoryPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} > {} > {}", self.domain, self.first_category, self.fine_category)
    }
}

/// Listing price: a point value or an inclusive range whose effective value
/// depends on the selected options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Price {
    Fixed(f64),
    Range([f64; 2]),
}

impl Price {
    pub fn min(&self) -> f64 {
        match *self {
            Price::Fixed(p) => p,
            Price::Range([lo, _]) => lo,
        }
    }

    pub fn max(&self) -> f64 {
        match *self {
            Price::Fixed(p) => p,
            Price::Range([_, hi]) => hi,
        }
    }

    /// Listing form: `528.0` or `528.0 to 660.0`.
    pub fn display(&self) -> String {
        match *self {
            Price::Fixed(p) => format_listing_price(p),
            Price::Range([lo, hi]) => {
                format!("{} to {}", format_listing_price(lo), format_listing_price(hi))
            }
        }
    }
}

/// Formats a price with at least one decimal place (`528.0`, `177.56`).
pub fn format_listing_price(value: f64) -> String {
    if value.fract() == 0.0 {
        format!("{value:.1}")
    } else {
        trim_decimals(value)
    }
}

/// Formats a settled price without a trailing `.0` (`528`, `177.56`).
pub fn format_compact_price(value: f64) -> String {
    if value.fract() == 0.0 {
        format!("{value:.0}")
    } else {
        trim_decimals(value)
    }
}

fn trim_decimals(value: f64) -> String {
    let s = format!("{value:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub product_id: String,
    pub title: String,
    pub shop_name: String,
    #[serde(flatten)]
    pub category: CategoryPath,
    pub options: IndexMap<String, Vec<String>>,
    pub pricing: Price,
    #[serde(rename = "attribute")]
    pub attributes: Vec<String>,
    /// Per option value surcharge over the minimum price, for range-priced
    /// products. Groups listed here are the price-bearing groups.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub price_deltas: IndexMap<String, IndexMap<String, f64>>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub features: String,
    #[serde(default)]
    pub reviews: String,
}

impl Product {
    /// Option group containing `value`, compared case-insensitively.
    pub fn group_of(&self, value: &str) -> Option<&str> {
        let wanted = text::squash_whitespace(value);
        self.options.iter().find_map(|(group, values)| {
            values
                .iter()
                .any(|v| text::squash_whitespace(v) == wanted)
                .then_some(group.as_str())
        })
    }

    /// Looks up an option group by name, ignoring case and spacing.
    pub fn find_group(&self, name: &str) -> Option<(&String, &Vec<String>)> {
        let wanted = text::squash_whitespace(name);
        self.options
            .iter()
            .find(|(g, _)| text::squash_whitespace(g) == wanted)
    }

    pub fn is_range_priced(&self) -> bool {
        matches!(self.pricing, Price::Range(_))
    }

    /// Price for a (possibly partial) option selection. Unselected
    /// price-bearing groups add nothing.
    pub fn effective_price(&self, selected: &IndexMap<String, String>) -> f64 {
        match self.pricing {
            Price::Fixed(p) => p,
            Price::Range([lo, _]) => {
                let surcharge: f64 = self
                    .price_deltas
                    .iter()
                    .filter_map(|(group, deltas)| {
                        selected.get(group).and_then(|v| deltas.get(v)).copied()
                    })
                    .sum();
                lo + surcharge
            }
        }
    }

    /// True once every price-bearing group has a selection.
    pub fn price_settled(&self, selected: &IndexMap<String, String>) -> bool {
        self.is_range_priced() && self.price_deltas.keys().all(|g| selected.contains_key(g))
    }

    /// Checks the record-level invariants, naming the offending field.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let bad = |field: &str, msg: String| Err((field.to_string(), msg));
        if self.product_id.trim().is_empty() {
            return bad("product_id", "must be non-empty".into());
        }
        for (field, value) in [
            ("domain", &self.category.domain),
            ("first_category", &self.category.first_category),
            ("fine_category", &self.category.fine_category),
        ] {
            if value.trim().is_empty() {
                return bad(field, "category component must be non-empty".into());
            }
        }
        for (group, values) in &self.options {
            if values.is_empty() {
                return bad("options", format!("group {group:?} has no values"));
            }
            let mut seen = std::collections::HashSet::new();
            for v in values {
                if !seen.insert(v) {
                    return bad("options", format!("group {group:?} repeats value {v:?}"));
                }
            }
        }
        match self.pricing {
            Price::Fixed(p) if !(p >= 0.0 && p.is_finite()) => {
                return bad("pricing", format!("price {p} must be a finite non-negative number"));
            }
            Price::Range([lo, hi]) => {
                if !(lo >= 0.0 && hi.is_finite()) {
                    return bad("pricing", format!("range {lo}..{hi} must be non-negative"));
                }
                if lo > hi {
                    return bad("pricing", format!("range min {lo} exceeds max {hi}"));
                }
            }
            _ => {}
        }
        for (group, deltas) in &self.price_deltas {
            let Some(values) = self.options.get(group) else {
                return bad("price_deltas", format!("unknown option group {group:?}"));
            };
            for (value, delta) in deltas {
                if !values.contains(value) {
                    return bad("price_deltas", format!("{value:?} is not an option of {group:?}"));
                }
                if !(*delta >= 0.0) {
                    return bad("price_deltas", format!("negative surcharge for {value:?}"));
                }
            }
        }
        Ok(())
    }
}

/// Three-level hierarchy with the products filed under each fine category.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryTree {
    fine: BTreeMap<CategoryPath, Vec<String>>,
}

impl CategoryTree {
    fn build(products: &[Product]) -> Self {
        let mut fine: BTreeMap<CategoryPath, Vec<String>> = BTreeMap::new();
        for p in products {
            fine.entry(p.category.clone()).or_default().push(p.product_id.clone());
        }
        Self { fine }
    }

    pub fn fine_categories(&self) -> impl Iterator<Item = &CategoryPath> {
        self.fine.keys()
    }

    pub fn products_in(&self, path: &CategoryPath) -> &[String] {
        self.fine.get(path).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn domains(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.fine.keys().map(|p| p.domain.as_str()).collect();
        out.dedup();
        out
    }

    pub fn first_categories(&self, domain: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .fine
            .keys()
            .filter(|p| p.domain == domain)
            .map(|p| p.first_category.as_str())
            .collect();
        out.dedup();
        out
    }

    pub fn len(&self) -> usize {
        self.fine.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fine.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogManifest {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub product_count: usize,
    pub per_domain_counts: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationSpec>,
}

impl CatalogManifest {
    fn describe(name: &str, products: &[Product]) -> Self {
        let mut per_domain_counts = BTreeMap::new();
        for p in products {
            *per_domain_counts.entry(p.category.domain.clone()).or_insert(0) += 1;
        }
        Self {
            name: name.to_string(),
            seed: None,
            product_count: products.len(),
            per_domain_counts,
            generation: None,
        }
    }
}

/// Immutable in-memory catalog.
#[derive(Debug, Clone)]
pub struct Catalog {
    products: Vec<Product>,
    by_id: HashMap<String, usize>,
    tree: CategoryTree,
    manifest: CatalogManifest,
}

impl Catalog {
    /// Builds a catalog from validated records; line numbers in errors are
    /// 1-based positions in `products`.
    pub fn from_products(name: &str, products: Vec<Product>) -> Result<Self, CatalogError> {
        let mut by_id = HashMap::with_capacity(products.len());
        for (i, p) in products.iter().enumerate() {
            if let Err((field, message)) = p.validate() {
                return Err(CatalogError::Malformed { line: i + 1, field, message });
            }
            if by_id.insert(p.product_id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateId { id: p.product_id.clone(), line: i + 1 });
            }
        }
        let tree = CategoryTree::build(&products);
        let manifest = CatalogManifest::describe(name, &products);
        Ok(Self { products, by_id, tree, manifest })
    }

    pub(crate) fn with_generation(mut self, seed: u64, spec: GenerationSpec) -> Self {
        self.manifest.seed = Some(seed);
        self.manifest.generation = Some(spec);
        self
    }

    pub fn products(&self) -> &[Product] {
        &self.products
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn tree(&self) -> &CategoryTree {
        &self.tree
    }

    pub fn manifest(&self) -> &CatalogManifest {
        &self.manifest
    }

    pub fn get_product(&self, product_id: &str) -> Result<&Product, CatalogError> {
        self.by_id
            .get(product_id)
            .map(|&i| &self.products[i])
            .ok_or_else(|| CatalogError::NotFound(product_id.to_string()))
    }

    pub fn contains(&self, product_id: &str) -> bool {
        self.by_id.contains_key(product_id)
    }

    pub fn products_in<'a>(&'a self, path: &CategoryPath) -> impl Iterator<Item = &'a Product> + 'a {
        let ids = self.tree.products_in(path).to_vec();
        ids.into_iter().map(move |id| &self.products[self.by_id[&id]])
    }

    /// One JSON object per line, in catalog order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.products {
            out.push_str(&serde_json::to_string(p).expect("product serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes the product file and its manifest next to it.
    pub fn save(&self, path: &Path) -> Result<(), CatalogError> {
        let io = |source| CatalogError::Io { path: path.to_path_buf(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(io)?;
        let manifest_path = manifest_path(path);
        let manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&manifest_path, manifest + "\n")
            .map_err(|source| CatalogError::Io { path: manifest_path, source })?;
        Ok(())
    }
}

/// `catalog.jsonl` keeps its manifest in `catalog.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("manifest.json")
}

/// Parses a catalog from line-delimited text. Blank lines are skipped but
/// still counted for error line numbers.
pub fn parse_catalog(name: &str, contents: &str) -> Result<Catalog, CatalogError> {
    let mut products = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(line);
        let product: Product = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            CatalogError::Malformed {
                line: i + 1,
                field: if field == "." { "<record>".into() } else { field },
                message: e.into_inner().to_string(),
            }
        })?;
        products.push(product);
        lines.push(i + 1);
    }
    Catalog::from_products(name, products).map_err(|e| match e {
        CatalogError::Malformed { line, field, message } => {
            CatalogError::Malformed { line: lines[line - 1], field, message }
        }
        CatalogError::DuplicateId { id, line } => {
            CatalogError::DuplicateId { id, line: lines[line - 1] }
        }
        other => other,
    })
}

/// Loads a catalog file; a manifest alongside it, when present, must agree
/// with the loaded products.
pub fn load_catalog(path: &Path) -> Result<Catalog, CatalogError> {
    let contents = fs::read_to_string(path)
        .map_err(|source| CatalogError::Io { path: path.to_path_buf(), source })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "catalog".into());
    let mut catalog = parse_catalog(&name, &contents)?;
    let mpath = manifest_path(path);
    if mpath.exists() {
        let raw = fs::read_to_string(&mpath)
            .map_err(|source| CatalogError::Io { path: mpath.clone(), source })?;
        let manifest: CatalogManifest = serde_json::from_str(&raw)
            .map_err(|e| CatalogError::Manifest(format!("{}: {e}", mpath.display())))?;
        if manifest.product_count != catalog.manifest.product_count {
            return Err(CatalogError::Manifest(format!(
                "manifest lists {} products, file has {}",
                manifest.product_count, catalog.manifest.product_count
            )));
        }
        if manifest.per_domain_counts != catalog.manifest.per_domain_counts {
            return Err(CatalogError::Manifest("per-domain counts differ".into()));
        }
        catalog.manifest = manifest;
    }
    Ok(catalog)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const YONEX_RECORD: &str = r#"{"product_id":"724988974873","title":"Authentic YONEX YY badminton shoes, men's cushioning and wear-resistant badminton-specific wide-last sports shoes, women's version","shop_name":"Miaojiang Sports & Outdoor Specialty Store","domain":"Clothing, Shoes, Accessories","first_category":"Athletic Shoes","fine_category":"Badminton Shoes","options":{"Color Options":["SHB510WCR Black/Red (Wide last)","SHB610WCR White/Navy (Wide last)","SHB510WCR White/Blue (Wide last)","SHB510WCR White (Wide last)","SHB510WCR Silver/Gray (Wide last)"],"Size":["43","42","44","36","38","39","37","41","40","45"]},"pricing":528.0,"attribute":["Cushioning","Wear-resistant","Authentic","Unisex"]}"#;

    #[test]
    fn single_record() {
        let c = parse_catalog("t", YONEX_RECORD).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.tree().len(), 1);
        let p = c.get_product("724988974873").unwrap();
        assert_eq!(p.options.len(), 2);
        assert_eq!(p.options["Color Options"].len(), 5);
        assert_eq!(p.options["Size"].len(), 10);
        assert_eq!(p.attributes.len(), 4);
        assert_eq!(p.pricing, Price::Fixed(528.0));
        assert_eq!(p.category.fine_category, "Badminton Shoes");
    }

    #[test]
    fn duplicate_id_names_the_id() {
        let text = format!("{YONEX_RECORD}\n{YONEX_RECORD}\n");
        match parse_catalog("t", &text) {
            Err(CatalogError::DuplicateId { id, line }) => {
                assert_eq!(id, "724988974873");
                assert_eq!(line, 2);
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_reports_line_and_field() {
        let good = YONEX_RECORD.replace("724988974873", "A");
        let bad = YONEX_RECORD.replace(r#""pricing":528.0"#, r#""pricing":"cheap""#);
        let text = format!("{good}\n\n{bad}\n");
        match parse_catalog("t", &text) {
            Err(CatalogError::Malformed { line, field, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(field, "pricing");
            }
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn missing_field_named() {
        let bad = YONEX_RECORD.replace(r#""shop_name":"Miaojiang Sports & Outdoor Specialty Store","#, "");
        let err = parse_catalog("t", &bad).unwrap_err();
        assert!(err.to_string().contains("shop_name"), "{err}");
    }

    #[test]
    fn invariant_violations_rejected() {
        let empty_group = YONEX_RECORD.replace(r#""Size":["43","42","44","36","38","39","37","41","40","45"]"#, r#""Size":[]"#);
        assert!(matches!(
            parse_catalog("t", &empty_group),
            Err(CatalogError::Malformed { ref field, .. }) if field == "options"
        ));
        let inverted = YONEX_RECORD.replace(r#""pricing":528.0"#, r#""pricing":[600.0,500.0]"#);
        assert!(matches!(
            parse_catalog("t", &inverted),
            Err(CatalogError::Malformed { ref field, .. }) if field == "pricing"
        ));
        let blank_cat = YONEX_RECORD.replace(r#""fine_category":"Badminton Shoes""#, r#""fine_category":" ""#);
        assert!(matches!(
            parse_catalog("t", &blank_cat),
            Err(CatalogError::Malformed { ref field, .. }) if field == "fine_category"
        ));
    }

    #[test]
    fn unknown_id_not_found() {
        let c = parse_catalog("t", YONEX_RECORD).unwrap();
        match c.get_product("nope") {
            Err(CatalogError::NotFound(id)) => assert_eq!(id, "nope"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn price_formats() {
        assert_eq!(Price::Range([528.0, 660.0]).display(), "528.0 to 660.0");
        assert_eq!(Price::Fixed(518.0).display(), "518.0");
        assert_eq!(format_compact_price(528.0), "528");
        assert_eq!(format_compact_price(177.56), "177.56");
        assert_eq!(format_listing_price(12.5), "12.5");
    }

    #[test]
    fn effective_price_uses_deltas() {
        let mut p: Product = serde_json::from_str(YONEX_RECORD).unwrap();
        p.pricing = Price::Range([528.0, 660.0]);
        let mut deltas = IndexMap::new();
        for (i, v) in p.options["Color Options"].iter().enumerate() {
            deltas.insert(v.clone(), i as f64 * 33.0);
        }
        p.price_deltas.insert("Color Options".into(), deltas);
        let mut sel = IndexMap::new();
        assert!(!p.price_settled(&sel));
        sel.insert("Color Options".to_string(), "SHB610WCR White/Navy (Wide last)".to_string());
        assert!(p.price_settled(&sel));
        assert_eq!(p.effective_price(&sel), 561.0);
    }

    #[test]
    fn save_and_load_round_trip() {
        let c = parse_catalog("yonex", YONEX_RECORD).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("yonex.jsonl");
        c.save(&path).unwrap();
        assert!(manifest_path(&path).exists());
        let back = load_catalog(&path).unwrap();
        assert_eq!(back.products(), c.products());
        assert_eq!(back.to_jsonl(), c.to_jsonl());
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_catalog(Path::new("/definitely/not/here.jsonl")),
            Err(CatalogError::Io { .. })
        ));
    }
}
