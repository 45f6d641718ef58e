mod support;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shopsim_core::catalog::load_catalog;
use shopsim_core::generate::{generate_catalog, GenerationSpec};
use shopsim_core::search::{SearchError, SearchIndex, PAGE_SIZE};
use support::oracle;

fn fixture_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/badminton.jsonl")
}

fn queries(rng: &mut ChaCha8Rng, titles: &[String], n: usize) -> Vec<String> {
    (0..n)
        .map(|_| {
            let words: Vec<&str> = titles.choose(rng).unwrap().split_whitespace().collect();
            let k = 1 + (rand::Rng::gen_range(rng, 0..words.len().min(4)));
            words.choose_multiple(rng, k).copied().collect::<Vec<_>>().join(" ")
        })
        .collect()
}

#[test]
fn ranking_matches_brute_force() {
    let catalog = generate_catalog(4, &GenerationSpec::new(1, 1, 2, 60)).unwrap();
    let index = SearchIndex::build(&catalog).unwrap();
    let titles: Vec<String> = catalog.products().iter().map(|p| p.title.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for q in queries(&mut rng, &titles, 60) {
        let engine = index.rank(&q).unwrap();
        let expected = oracle::bm25_rank(catalog.products(), &q);
        assert_eq!(engine.len(), expected.len(), "{q}");
        for ((id_e, s_e), (_, s_o)) in engine.iter().zip(&expected) {
            assert!((s_e - s_o).abs() < 1e-9, "{q}: {id_e} {s_e} vs {s_o}");
        }
        assert_eq!(engine[0].0, expected[0].0, "{q}");
    }
}

#[test]
fn full_title_ranks_its_product_first() {
    let catalog = generate_catalog(1, &GenerationSpec::new(1, 1, 1, 120)).unwrap();
    let index = SearchIndex::build(&catalog).unwrap();
    for p in catalog.products().iter().step_by(7) {
        let expected = oracle::bm25_rank(catalog.products(), &p.title);
        assert_eq!(expected[0].0, p.product_id);
        assert_eq!(index.rank(&p.title).unwrap()[0].0, p.product_id);
    }
}

#[test]
fn rebuilt_index_ranks_identically() {
    let catalog = generate_catalog(2, &GenerationSpec::new(1, 2, 2, 30)).unwrap();
    let a = SearchIndex::build(&catalog).unwrap();
    let b = SearchIndex::build(&catalog).unwrap();
    let titles: Vec<String> = catalog.products().iter().map(|p| p.title.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for q in queries(&mut rng, &titles, 100) {
        assert_eq!(a.rank(&q).unwrap(), b.rank(&q).unwrap());
    }
}

#[test]
fn fixture_paginates_to_eight_pages() {
    let catalog = load_catalog(&fixture_path()).unwrap();
    let index = SearchIndex::build(&catalog).unwrap();
    let first = index.search("badminton shoes", 1).unwrap();
    assert_eq!(first.total_results, 150);
    let last_page = 150_usize.div_ceil(20);
    assert_eq!(first.total_pages(), last_page);
    assert_eq!(index.search("badminton shoes", last_page).unwrap().entries.len(), 150 - 7 * 20);
    assert_eq!(
        index.search("badminton shoes", last_page + 1).unwrap_err(),
        SearchError::PageOutOfRange { page: last_page + 1, last: last_page }
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pages_partition_the_ranking(seed in 0u64..1000, words in prop::collection::vec(0usize..40, 1..4)) {
        let catalog = generate_catalog(seed % 3, &GenerationSpec::new(1, 1, 2, 45)).unwrap();
        let index = SearchIndex::build(&catalog).unwrap();
        let pool: Vec<String> = catalog.products().iter().flat_map(|p| p.title.split_whitespace().map(String::from).collect::<Vec<_>>()).collect();
        let q = words.iter().map(|i| pool[i % pool.len()].clone()).collect::<Vec<_>>().join(" ");
        let Ok(ranked) = index.rank(&q) else { return Ok(()) };
        let first = index.search(&q, 1).unwrap();
        let mut seen = Vec::new();
        for page in 1..=first.total_pages() {
            let p = index.search(&q, page).unwrap();
            prop_assert!(p.entries.len() <= PAGE_SIZE);
            prop_assert!(page == first.total_pages() || p.entries.len() == PAGE_SIZE);
            seen.extend(p.entries.into_iter().map(|e| e.product_id));
        }
        let ids: Vec<String> = ranked.into_iter().map(|(id, _)| id).collect();
        prop_assert_eq!(seen, ids);
    }
}
