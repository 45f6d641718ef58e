//! Field-weighted BM25 retrieval with deterministic paging.
//!
//! ```text
//! tf'(t, d)  = sum over fields f of  w_f * tf_f(t, d)
//! len'(d)    = sum over fields f of  w_f * len_f(d)
//! idf(t)     = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))
//! score(q,d) = sum over distinct t in q of
//!              idf(t) * tf' * (k1 + 1) / (tf' + k1 * (1 - b + b * len'(d) / avg len'))
//! ```
//!
//! Query terms are summed in sorted order so floating point results do not
//! depend on hash iteration. Ties break on ascending product id.

use std::collections::{BTreeSet, HashMap};

use crate::catalog::{Catalog, Product};
use crate::text::tokenize;

pub const PAGE_SIZE: usize = 20;
pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

/// Field weights: title, attributes, option values, category path, shop.
pub const WEIGHT_TITLE: f64 = 3.0;
pub const WEIGHT_ATTRIBUTES: f64 = 2.0;
pub const WEIGHT_OPTIONS: f64 = 1.0;
pub const WEIGHT_CATEGORY: f64 = 1.0;
pub const WEIGHT_SHOP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error("cannot index an empty catalog")]
    EmptyCatalog,
    #[error("query has no searchable terms")]
    EmptyQuery,
    #[error("page {page} out of range (last page is {last})")]
    PageOutOfRange { page: usize, last: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Posting {
    doc: u32,
    weighted_tf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultEntry {
    pub product_id: String,
    pub title: String,
    pub price: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultPage {
    pub query: String,
    pub page_number: usize,
    pub page_size: usize,
    pub total_results: usize,
    pub entries: Vec<ResultEntry>,
}

impl ResultPage {
    pub fn total_pages(&self) -> usize {
        total_pages(self.total_results, self.page_size)
    }
}

/// Pages needed to show `total` results; an empty result set still has
/// one (empty) page.
pub fn total_pages(total: usize, page_size: usize) -> usize {
    total.div_ceil(page_size).max(1)
}

/// Per-field tokens of one product, shared with test oracles.
pub fn field_tokens(p: &Product) -> [(f64, Vec<String>); 5] {
    let options: Vec<String> = p.options.values().flatten().flat_map(|v| tokenize(v)).collect();
    let category: Vec<String> = p.category.nodes().iter().flat_map(|n| tokenize(n)).collect();
    [
        (WEIGHT_TITLE, tokenize(&p.title)),
        (WEIGHT_ATTRIBUTES, p.attributes.iter().flat_map(|a| tokenize(a)).collect()),
        (WEIGHT_OPTIONS, options),
        (WEIGHT_CATEGORY, category),
        (WEIGHT_SHOP, tokenize(&p.shop_name)),
    ]
}

#[derive(Debug, Clone)]
pub struct SearchIndex {
    postings: HashMap<String, Vec<Posting>>,
    doc_len: Vec<f64>,
    avg_len: f64,
    docs: Vec<ResultEntry>,
}

impl SearchIndex {
    pub fn build(catalog: &Catalog) -> Result<Self, SearchError> {
        if catalog.is_empty() {
            return Err(SearchError::EmptyCatalog);
        }
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(catalog.len());
        let mut docs = Vec::with_capacity(catalog.len());
        for (i, p) in catalog.products().iter().enumerate() {
            let mut tf: HashMap<String, f64> = HashMap::new();
            let mut len = 0.0;
            for (weight, tokens) in field_tokens(p) {
                len += weight * tokens.len() as f64;
                for t in tokens {
                    *tf.entry(t).or_insert(0.0) += weight;
                }
            }
            for (term, weighted_tf) in tf {
                postings.entry(term).or_default().push(Posting { doc: i as u32, weighted_tf });
            }
            doc_len.push(len);
            docs.push(ResultEntry {
                product_id: p.product_id.clone(),
                title: p.title.clone(),
                price: p.pricing.display(),
            });
        }
        for list in postings.values_mut() {
            list.sort_by_key(|p| p.doc);
        }
        let avg_len = doc_len.iter().sum::<f64>() / doc_len.len() as f64;
        Ok(Self { postings, doc_len, avg_len, docs })
    }

    pub fn document_count(&self) -> usize {
        self.docs.len()
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.docs.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Every matching document with its score, best first.
    pub fn rank(&self, query: &str) -> Result<Vec<(String, f64)>, SearchError> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        if terms.is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else { continue };
            let idf = self.idf(list.len());
            for posting in list {
                let tf = posting.weighted_tf;
                let norm = 1.0 - B + B * self.doc_len[posting.doc as usize] / self.avg_len;
                *scores.entry(posting.doc).or_insert(0.0) += idf * tf * (K1 + 1.0) / (tf + K1 * norm);
            }
        }
        let mut ranked: Vec<(u32, f64)> = scores.into_iter().filter(|(_, s)| *s > 0.0).collect();
        ranked.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.docs[a.0 as usize].product_id.cmp(&self.docs[b.0 as usize].product_id))
        });
        Ok(ranked
            .into_iter()
            .map(|(d, s)| (self.docs[d as usize].product_id.clone(), s))
            .collect())
    }

    /// One page of results (1-based).
    pub fn search(&self, query: &str, page: usize) -> Result<ResultPage, SearchError> {
        let ranked = self.rank(query)?;
        let last = total_pages(ranked.len(), PAGE_SIZE);
        if page == 0 || page > last {
            return Err(SearchError::PageOutOfRange { page, last });
        }
        let by_id: HashMap<&str, &ResultEntry> =
            self.docs.iter().map(|d| (d.product_id.as_str(), d)).collect();
        let entries = ranked
            .iter()
            .skip((page - 1) * PAGE_SIZE)
            .take(PAGE_SIZE)
            .map(|(id, _)| (*by_id[id.as_str()]).clone())
            .collect();
        Ok(ResultPage {
            query: query.to_string(),
            page_number: page,
            page_size: PAGE_SIZE,
            total_results: ranked.len(),
            entries,
        })
    }
}
