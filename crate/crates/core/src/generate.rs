//! Seeded synthetic catalog generation.
//!
//! Each fine category receives a block of deliberately similar products:
//! they share the category noun phrase in the title and draw from the same
//! small brand, feature, color and size pools, so telling them apart needs
//! the attributes, option values and price.

use std::collections::HashSet;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, CatalogError, CategoryPath, Price, Product};
use crate::text;

pub const DEFAULT_PRODUCTS_PER_FINE: usize = 120;

const BRANDS_PER_CATEGORY: usize = 6;
const FEATURES_PER_CATEGORY: usize = 8;
const COLORS_PER_CATEGORY: usize = 10;
const MAX_DISTINCT_ATTEMPTS: usize = 200;

/// Word pools the generator draws from. Any script works; the engine never
/// assumes Latin text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub domains: Vec<String>,
    pub first_categories: Vec<String>,
    pub fine_categories: Vec<String>,
    pub brands: Vec<String>,
    pub features: Vec<String>,
    pub materials: Vec<String>,
    pub colors: Vec<String>,
    pub sizes: Vec<String>,
    pub editions: Vec<String>,
    pub shop_suffixes: Vec<String>,
}

fn owned(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self {
            domains: owned(&[
                "Sports & Outdoors", "Apparel & Shoes", "Home & Kitchen", "Electronics",
                "Beauty & Personal Care", "Toys & Games", "Pet Supplies", "Office & Stationery",
                "Automotive", "Baby & Maternity", "Health & Wellness", "Garden & Tools",
            ]),
            first_categories: owned(&[
                "Athletic Shoes", "Racket Sports", "Camping Gear", "Cycling", "Fitness Equipment",
                "Outerwear", "Casual Footwear", "Bags & Luggage", "Cookware", "Bedding",
                "Storage", "Lighting", "Audio", "Phone Accessories", "Computer Peripherals",
                "Wearables", "Skincare Tools", "Hair Care", "Building Sets", "Outdoor Play",
                "Dog Gear", "Cat Gear", "Desk Organization", "Writing Instruments",
                "Car Interior", "Car Care", "Strollers", "Feeding", "Massage", "Sleep Aids",
                "Hand Tools", "Watering", "Yoga", "Swimming", "Winter Sports", "Running Gear",
            ]),
            fine_categories: owned(&[
                "Badminton Shoes", "Running Shoes", "Tennis Rackets", "Badminton Rackets",
                "Camping Tents", "Sleeping Bags", "Cycling Helmets", "Bike Lights",
                "Resistance Bands", "Dumbbells", "Rain Jackets", "Down Vests", "Canvas Sneakers",
                "Slip-on Loafers", "Hiking Backpacks", "Carry-on Suitcases", "Frying Pans",
                "Stock Pots", "Pillow Covers", "Duvet Inserts", "Storage Boxes", "Shoe Racks",
                "Desk Lamps", "String Lights", "Wireless Earbuds", "Bookshelf Speakers",
                "Phone Cases", "Charging Cables", "Mechanical Keyboards", "Wireless Mice",
                "Fitness Trackers", "Smart Watches", "Facial Rollers", "Makeup Brushes",
                "Hair Dryers", "Hair Straighteners", "Brick Kits", "Model Vehicles",
                "Kick Scooters", "Water Guns", "Dog Leashes", "Dog Beds", "Cat Trees",
                "Cat Litter Boxes", "Pen Holders", "Monitor Stands", "Fountain Pens",
                "Gel Pens", "Seat Cushions", "Steering Wheel Covers", "Car Wax", "Wash Mitts",
                "Travel Strollers", "Stroller Fans", "Baby Bottles", "Bibs", "Massage Guns",
                "Neck Massagers", "Eye Masks", "Ear Plugs", "Screwdriver Sets", "Tape Measures",
                "Garden Hoses", "Watering Cans", "Yoga Mats", "Yoga Blocks", "Swim Goggles",
                "Swim Caps", "Ski Gloves", "Ski Goggles", "Running Belts", "Compression Socks",
            ]),
            brands: owned(&[
                "Aerix", "Bolta", "Corvin", "Dynamo", "Evera", "Fennic", "Glint", "Halden",
                "Ionix", "Jettra", "Kestrel", "Lumen",
            ]),
            features: owned(&[
                "Cushioning", "Wear-resistant", "Breathable", "Anti-slip", "Lightweight",
                "Waterproof", "Shock-absorbing", "Quick-dry", "Foldable", "Adjustable",
                "High Rebound", "Anti-torsion", "Ergonomic", "Insulated", "Reflective",
                "Stable Support", "Unisex", "Authentic", "Washable", "Compact",
            ]),
            materials: owned(&[
                "Mesh", "Synthetic Leather", "Nylon", "Cotton", "Polyester", "Carbon Fiber",
                "Aluminum", "Rubber", "Suede", "Canvas",
            ]),
            colors: owned(&[
                "Black", "White", "Navy", "Crimson", "Silver", "Olive", "Teal", "Coral",
                "Ivory", "Charcoal", "Mint", "Amber", "Lilac", "Sand",
            ]),
            sizes: owned(&["36", "37", "38", "39", "40", "41", "42", "43", "44", "45", "46"]),
            editions: owned(&["Standard", "Wide", "Pro", "Lite", "Junior"]),
            shop_suffixes: owned(&[
                "Official Store", "Flagship Store", "Outlet", "Specialty Store", "Direct",
            ]),
        }
    }
}

/// Shape of a generated catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSpec {
    pub domains: usize,
    pub first_per_domain: usize,
    pub fine_per_first: usize,
    #[serde(default = "default_products_per_fine")]
    pub products_per_fine: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vocabulary>,
}

fn default_products_per_fine() -> usize {
    DEFAULT_PRODUCTS_PER_FINE
}

impl GenerationSpec {
    pub fn new(domains: usize, first_per_domain: usize, fine_per_first: usize, products_per_fine: usize) -> Self {
        Self { domains, first_per_domain, fine_per_first, products_per_fine, vocabulary: None }
    }

    /// Two domains, two first-level categories each, two fine categories
    /// each: eight blocks of 120.
    pub fn desk() -> Self {
        Self::new(2, 2, 2, DEFAULT_PRODUCTS_PER_FINE)
    }

    pub fn vocabulary(&self) -> Vocabulary {
        self.vocabulary.clone().unwrap_or_default()
    }

    fn check(&self, vocab: &Vocabulary) -> Result<(), CatalogError> {
        let fail = |m: String| Err(CatalogError::Generation(m));
        if self.domains == 0 || self.first_per_domain == 0 || self.fine_per_first == 0 || self.products_per_fine == 0 {
            return fail("all counts must be at least 1".into());
        }
        let firsts = self.domains * self.first_per_domain;
        let fines = firsts * self.fine_per_first;
        let needs: [(&str, usize, usize); 9] = [
            ("domains", vocab.domains.len(), self.domains),
            ("first_categories", vocab.first_categories.len(), firsts),
            ("fine_categories", vocab.fine_categories.len(), fines),
            ("brands", vocab.brands.len(), 2),
            ("features", vocab.features.len(), 4),
            ("materials", vocab.materials.len(), 1),
            ("colors", vocab.colors.len(), 3),
            ("sizes", vocab.sizes.len(), 4),
            ("shop_suffixes", vocab.shop_suffixes.len(), 1),
        ];
        for (pool, have, need) in needs {
            if distinct(pool_ref(vocab, pool)) < need || have < need {
                return fail(format!("vocabulary pool `{pool}` has {have} distinct values, needs {need}"));
            }
        }
        Ok(())
    }
}

fn pool_ref<'a>(vocab: &'a Vocabulary, name: &str) -> &'a [String] {
    match name {
        "domains" => &vocab.domains,
        "first_categories" => &vocab.first_categories,
        "fine_categories" => &vocab.fine_categories,
        "brands" => &vocab.brands,
        "features" => &vocab.features,
        "materials" => &vocab.materials,
        "colors" => &vocab.colors,
        "sizes" => &vocab.sizes,
        "editions" => &vocab.editions,
        _ => &vocab.shop_suffixes,
    }
}

fn distinct(pool: &[String]) -> usize {
    pool.iter().map(|s| text::normalize(s)).collect::<HashSet<_>>().len()
}

/// Generates a catalog; identical `(seed, spec)` always yields the same
/// products in the same order.
pub fn generate_catalog(seed: u64, spec: &GenerationSpec) -> Result<Catalog, CatalogError> {
    let vocab = spec.vocabulary();
    spec.check(&vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = HashSet::new();
    let mut products = Vec::new();
    let mut first_iter = vocab.first_categories.iter();
    let mut fine_iter = vocab.fine_categories.iter();
    for domain in vocab.domains.iter().take(spec.domains) {
        for _ in 0..spec.first_per_domain {
            let first = first_iter.next().expect("pool size checked");
            for _ in 0..spec.fine_per_first {
                let fine = fine_iter.next().expect("pool size checked");
                let path = CategoryPath::new(domain, first, fine);
                let block = generate_block(&mut rng, &vocab, &path, spec.products_per_fine, &mut ids)?;
                products.extend(block);
            }
        }
    }
    let name = format!("synthetic-{seed}");
    Ok(Catalog::from_products(&name, products)?.with_generation(seed, spec.clone()))
}

struct BlockPools<'a> {
    brands: Vec<&'a String>,
    features: Vec<&'a String>,
    colors: Vec<&'a String>,
    editions: Option<Vec<&'a String>>,
    price_floor: f64,
    price_span: f64,
}

fn generate_block(
    rng: &mut ChaCha8Rng,
    vocab: &Vocabulary,
    path: &CategoryPath,
    count: usize,
    ids: &mut HashSet<String>,
) -> Result<Vec<Product>, CatalogError> {
    let editions = if vocab.editions.len() >= 2 && rng.gen_bool(0.5) {
        Some(vocab.editions.iter().collect())
    } else {
        None
    };
    let pools = BlockPools {
        brands: sample(rng, &vocab.brands, BRANDS_PER_CATEGORY),
        features: sample(rng, &vocab.features, FEATURES_PER_CATEGORY),
        colors: sample(rng, &vocab.colors, COLORS_PER_CATEGORY),
        editions,
        price_floor: rng.gen_range(5..=60) as f64 * 10.0,
        price_span: rng.gen_range(20..=60) as f64 * 10.0,
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut attempts = 0;
        let product = loop {
            let candidate = generate_product(rng, vocab, &pools, path, ids);
            if seen.insert(distinguishing_key(&candidate)) {
                break candidate;
            }
            attempts += 1;
            if attempts >= MAX_DISTINCT_ATTEMPTS {
                return Err(CatalogError::Generation(format!(
                    "could not make {count} distinguishable products for {path}; enlarge the vocabulary"
                )));
            }
        };
        ids.insert(product.product_id.clone());
        out.push(product);
    }
    Ok(out)
}

/// The tuple that must differ between any two products of one fine
/// category: attribute set, full option table, price.
pub fn distinguishing_key(p: &Product) -> String {
    let mut attrs: Vec<String> = p.attributes.iter().map(|a| text::normalize(a)).collect();
    attrs.sort();
    let options: Vec<String> = p
        .options
        .iter()
        .map(|(g, vs)| format!("{}={}", text::normalize(g), vs.iter().map(|v| text::normalize(v)).collect::<Vec<_>>().join(",")))
        .collect();
    format!("{}|{}|{}", attrs.join(","), options.join(";"), p.pricing.display())
}

fn sample<'a, R: Rng>(rng: &mut R, pool: &'a [String], n: usize) -> Vec<&'a String> {
    pool.choose_multiple(rng, n.min(pool.len())).collect()
}

fn generate_product(
    rng: &mut ChaCha8Rng,
    vocab: &Vocabulary,
    pools: &BlockPools<'_>,
    path: &CategoryPath,
    ids: &HashSet<String>,
) -> Product {
    let product_id = loop {
        let id = format!("{:012}", rng.gen_range(100_000_000_000u64..1_000_000_000_000));
        if !ids.contains(&id) {
            break id;
        }
    };
    let brand = *pools.brands.choose(rng).expect("non-empty");
    let n_features = rng.gen_range(2..=4).min(pools.features.len());
    let mut features: Vec<&String> = pools.features.choose_multiple(rng, n_features).cloned().collect();
    // keep pool order so titles read consistently
    features.sort_by_key(|f| pools.features.iter().position(|x| x == f));
    let material = vocab.materials.choose(rng).expect("non-empty");
    let model = format!(
        "{}{}",
        brand.chars().filter(|c| c.is_alphanumeric()).take(2).collect::<String>().to_uppercase(),
        rng.gen_range(100..1000)
    );

    let mut attributes: Vec<String> = vec![brand.clone()];
    attributes.extend(features.iter().map(|f| f.to_string()));
    attributes.push(material.clone());

    let mut options = IndexMap::new();
    let n_colors = rng.gen_range(3..=6).min(pools.colors.len());
    let colors: Vec<String> = pools.colors.choose_multiple(rng, n_colors).map(|c| c.to_string()).collect();
    options.insert("Color Options".to_string(), colors.clone());
    let n_sizes = rng.gen_range(4..=8).min(vocab.sizes.len());
    let start = rng.gen_range(0..=vocab.sizes.len() - n_sizes);
    let mut sizes: Vec<String> = vocab.sizes[start..start + n_sizes].to_vec();
    sizes.shuffle(rng);
    options.insert("Size".to_string(), sizes);
    if let Some(editions) = &pools.editions {
        let n = rng.gen_range(2..=3).min(editions.len());
        let chosen: Vec<String> = editions.choose_multiple(rng, n).map(|e| e.to_string()).collect();
        options.insert("Edition".to_string(), chosen);
    }

    let base = (pools.price_floor + rng.gen_range(0.0..pools.price_span)).round();
    let mut price_deltas = IndexMap::new();
    let pricing = if rng.gen_bool(0.5) {
        let mut deltas = IndexMap::new();
        let mut max_delta = 0.0f64;
        for (i, c) in colors.iter().enumerate() {
            let d = if i == 0 { 0.0 } else { rng.gen_range(0..=12) as f64 * 10.0 };
            max_delta = max_delta.max(d);
            deltas.insert(c.clone(), d);
        }
        if max_delta == 0.0 {
            let last = colors.last().expect("at least three colors").clone();
            deltas.insert(last, 30.0);
            max_delta = 30.0;
        }
        price_deltas.insert("Color Options".to_string(), deltas);
        Price::Range([base, base + max_delta])
    } else {
        Price::Fixed(base)
    };

    let noun = &path.fine_category;
    let feature_list = features.iter().map(|f| f.to_lowercase()).collect::<Vec<_>>().join(", ");
    let title = match rng.gen_range(0..3) {
        0 => format!("{brand} {model} {noun}, {feature_list}, {} build", material.to_lowercase()),
        1 => format!("{brand} {noun} {model}, {} {feature_list}", material.to_lowercase()),
        _ => format!("{brand} {model} {} {noun}, {feature_list}", material.to_lowercase()),
    };
    let suffix = vocab.shop_suffixes.choose(rng).expect("non-empty");
    let shop_name = format!("{brand} {suffix}");
    let description = format!(
        "{title}. Made from {}. Highlights: {}.",
        material.to_lowercase(),
        feature_list
    );
    let features_text = format!(
        "Model {model}; {} colorways; sizes {}",
        colors.len(),
        options["Size"].join("/")
    );
    let reviews = format!(
        "Buyers rate the {} {} {:.1} out of 5.",
        brand,
        noun.to_lowercase(),
        rng.gen_range(35..=50) as f64 / 10.0
    );

    Product {
        product_id,
        title,
        shop_name,
        category: path.clone(),
        options,
        pricing,
        attributes,
        price_deltas,
        description,
        features: features_text,
        reviews,
    }
}
