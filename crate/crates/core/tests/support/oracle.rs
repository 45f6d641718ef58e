//! Reference implementations written straight from the scoring and ranking
//! rules, sharing no code with the engine beyond its data types.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use shopsim_core::catalog::Product;
use shopsim_core::reward::{PurchaseOutcome, RewardBreakdown, TargetSpec};

fn cjk(c: char) -> bool {
    let u = c as u32;
    (0x3040..=0x30FF).contains(&u)
        || (0x3400..=0x4DBF).contains(&u)
        || (0x4E00..=0x9FFF).contains(&u)
        || (0xAC00..=0xD7AF).contains(&u)
        || (0xF900..=0xFAFF).contains(&u)
        || (0x20000..=0x2A6DF).contains(&u)
}

/// Word runs lowercased, CJK characters one by one.
pub fn words(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if cjk(c) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur).to_lowercase());
            }
            out.push(c.to_string());
        } else if c.is_alphanumeric() {
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur).to_lowercase());
        }
    }
    if !cur.is_empty() {
        out.push(cur.to_lowercase());
    }
    out
}

/// `words` plus a bigram for each adjacent pair of CJK characters.
pub fn search_terms(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if cjk(c) {
            out.push(c.to_string());
            if i + 1 < chars.len() && cjk(chars[i + 1]) {
                out.push(format!("{c}{}", chars[i + 1]));
            }
            i += 1;
        } else if c.is_alphanumeric() {
            let start = i;
            while i < chars.len() && chars[i].is_alphanumeric() && !cjk(chars[i]) {
                i += 1;
            }
            out.push(chars[start..i].iter().collect::<String>().to_lowercase());
        } else {
            i += 1;
        }
    }
    out
}

pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in table.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        table[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = table[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            table[i][j] = sub.min(table[i - 1][j] + 1).min(table[i][j - 1] + 1);
        }
    }
    table[a.len()][b.len()]
}

fn canon(s: &str) -> String {
    words(s).join(" ")
}

fn contains(hay: &str, needle: &str) -> bool {
    let (h, n) = (words(hay), words(needle));
    !n.is_empty() && h.windows(n.len()).any(|w| w == n.as_slice())
}

pub fn same(a: &str, b: &str) -> bool {
    let (x, y) = (canon(a), canon(b));
    if x.is_empty() || y.is_empty() {
        return false;
    }
    let longest = x.chars().count().max(y.chars().count());
    let sim = 1.0 - levenshtein(&x, &y) as f64 / longest as f64;
    sim >= 0.85 || contains(a, b) || contains(b, a)
}

pub fn overlap(target: &str, other: &str) -> f64 {
    let t: BTreeSet<String> = search_terms(target).into_iter().collect();
    let o: BTreeSet<String> = search_terms(other).into_iter().collect();
    if t.is_empty() {
        0.0
    } else {
        t.iter().filter(|x| o.contains(*x)).count() as f64 / t.len() as f64
    }
}

pub fn cat(target: &TargetSpec, outcome: &PurchaseOutcome) -> f64 {
    let a = &target.category;
    let b = &outcome.product.category;
    let shared = [a.domain == b.domain, a.first_category == b.first_category, a.fine_category == b.fine_category]
        .iter()
        .filter(|x| **x)
        .count();
    let ov = overlap(&target.title, &outcome.product.title);
    if outcome.first_search_query.as_deref() == Some(target.canonical_query.as_str()) || shared >= 2 || ov > 0.2 {
        1.0
    } else if ov == 0.0 {
        0.0
    } else if ov < 0.1 {
        0.1
    } else {
        0.5
    }
}

fn lookup<'a>(selected: &'a IndexMap<String, String>, group: &str) -> Option<&'a String> {
    let key = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    selected.iter().find(|(g, _)| key(g) == key(group)).map(|(_, v)| v)
}

fn attr_hit(wanted: &str, p: &Product) -> bool {
    p.attributes.iter().any(|a| same(wanted, a)) || contains(&p.title, wanted) || contains(&p.description, wanted)
}

pub fn reward(target: &TargetSpec, outcome: Option<&PurchaseOutcome>) -> RewardBreakdown {
    let Some(o) = outcome else { return RewardBreakdown::default() };
    let r_cat = cat(target, o);
    let att = target.attributes.iter().filter(|w| attr_hit(w, &o.product)).count();
    let opt = target
        .options
        .iter()
        .filter(|(g, v)| lookup(&o.selected_options, g).is_some_and(|s| same(v, s)))
        .count();
    let r_price = match target.price_cap {
        Some(cap) if o.effective_price > cap => 0.0,
        _ => 1.0,
    };
    let frac = |m: usize, n: usize| if n == 0 { 1.0 } else { m as f64 / n as f64 };
    let r_att = frac(att, target.attributes.len());
    let r_opt = frac(opt, target.options.len());
    let n = (target.attributes.len() + target.options.len() + 1) as f64;
    let exact = target
        .options
        .iter()
        .all(|(g, v)| lookup(&o.selected_options, g).is_some_and(|s| canon(s) == canon(v)));
    let succ = o.product.product_id == target.product_id && r_att == 1.0 && exact && r_price == 1.0;
    RewardBreakdown {
        r_finish: 1.0,
        r_cat,
        r_att,
        r_opt,
        r_price,
        r_loose: r_cat * (att as f64 + opt as f64 + r_price) / n,
        r_strict: r_cat * r_att * r_opt * r_price,
        r_succ: if succ { 1.0 } else { 0.0 },
    }
}

/// Field-weighted BM25 over every product, best first, ties by id.
pub fn bm25_rank(products: &[Product], query: &str) -> Vec<(String, f64)> {
    const K1: f64 = 1.2;
    const B: f64 = 0.75;
    let docs: Vec<(BTreeMap<String, f64>, f64)> = products
        .iter()
        .map(|p| {
            let mut opts = String::new();
            for values in p.options.values() {
                for v in values {
                    opts.push_str(v);
                    opts.push(' ');
                }
            }
            let c = &p.category;
            let fields = [
                (3.0, p.title.clone()),
                (2.0, p.attributes.join(" ; ")),
                (1.0, opts),
                (1.0, format!("{} ; {} ; {}", c.domain, c.first_category, c.fine_category)),
                (0.5, p.shop_name.clone()),
            ];
            let mut tf = BTreeMap::new();
            let mut len = 0.0;
            for (w, text) in fields {
                for t in search_terms(&text) {
                    *tf.entry(t).or_insert(0.0) += w;
                    len += w;
                }
            }
            (tf, len)
        })
        .collect();
    let n = docs.len() as f64;
    let avg = docs.iter().map(|d| d.1).sum::<f64>() / n;
    let terms: BTreeSet<String> = search_terms(query).into_iter().collect();
    let mut out = Vec::new();
    for (p, (tf, len)) in products.iter().zip(&docs) {
        let mut score = 0.0;
        for t in &terms {
            let Some(f) = tf.get(t) else { continue };
            let df = docs.iter().filter(|d| d.0.contains_key(t)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            score += idf * f * (K1 + 1.0) / (f + K1 * (1.0 - B + B * len / avg));
        }
        if score > 0.0 {
            out.push((p.product_id.clone(), score));
        }
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    out
}

/// Brute force over every full option selection of `p`.
pub fn satisfiable(target: &TargetSpec, p: &Product) -> bool {
    if p.category != target.category || !target.attributes.iter().all(|a| attr_hit(a, p)) {
        return false;
    }
    let groups: Vec<(&String, &Vec<String>)> = p.options.iter().collect();
    let mut best = f64::INFINITY;
    let mut pick = vec![0usize; groups.len()];
    'outer: loop {
        let selected: IndexMap<String, String> =
            groups.iter().zip(&pick).map(|((g, vs), i)| ((*g).clone(), vs[*i].clone())).collect();
        let required_ok = target.options.iter().all(|(g, want)| lookup(&selected, g).is_some_and(|v| same(want, v)));
        if required_ok {
            best = best.min(p.effective_price(&selected));
        }
        for k in 0..pick.len() {
            pick[k] += 1;
            if pick[k] < groups[k].1.len() {
                continue 'outer;
            }
            pick[k] = 0;
        }
        break;
    }
    best.is_finite() && target.price_cap.is_none_or(|cap| best <= cap)
}
