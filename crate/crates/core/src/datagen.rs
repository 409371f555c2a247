//! Seeded synthetic catalog and session generator.
//!
//! Each category owns a head term and a vocabulary of pseudo-words; titles
//! are the head term plus words from the category (and occasionally from a
//! shared generic pool). A session carries a small basket of intent
//! categories and walks between them: every event (query or click) is
//! followed by a switch with a fixed probability, applied before the next
//! query. Queries carry the current intent's head term, at
//! times with one of its words and a generic word. Candidate lists mix current-intent items,
//! items of the previous intent after a switch, and random catalog items.
//!
//! Engagement of an item uses a fresh per-item relevance draw `q` and the
//! intent match `m`: `P(engaged) = sigmoid(bias + q + beta * m)`, and an
//! engaged item is a sale with probability `sale_rate`. Base features are
//! noisy views of `q` only, so with `beta = 0` labels carry no information
//! about the click context. Engaged items become clicks that later queries
//! of the session see as context.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{
    ClickContext, ClickEvent, EngagementLabel, Event, Item, Query, SerpImpression, SerpItem, Session, BASE_DIM,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub catalog_size: usize,
    pub categories: usize,
    pub vocab_per_category: usize,
    pub generic_words: usize,
    pub title_words_min: usize,
    pub title_words_max: usize,
    /// Chance that a title word comes from the generic pool instead of the category.
    pub title_generic_prob: f64,
    pub sessions: usize,
    pub epochs: u32,
    /// Queries per session, inclusive range.
    pub queries_min: usize,
    pub queries_max: usize,
    /// Distinct intents a session may visit.
    pub basket_size: usize,
    pub switch_prob: f64,
    pub beta: f64,
    /// Spread of the per-item relevance draw behind engagement and base features.
    pub relevance_sd: f64,
    /// Logit offset of engagement; sets how many items get engaged.
    pub engage_bias: f64,
    /// Fraction of engagements that are sales.
    pub sale_rate: f64,
    pub list_min: usize,
    pub list_max: usize,
    /// Share of a candidate list drawn from the current intent.
    pub intent_share: f64,
    /// Share drawn from the most recent earlier intent once the session has switched.
    pub previous_share: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            catalog_size: 3000,
            categories: 30,
            vocab_per_category: 24,
            generic_words: 40,
            title_words_min: 3,
            title_words_max: 8,
            title_generic_prob: 0.05,
            sessions: 2400,
            epochs: 14,
            queries_min: 4,
            queries_max: 16,
            basket_size: 3,
            switch_prob: 0.1,
            beta: 2.0,
            relevance_sd: 1.0,
            engage_bias: -3.0,
            sale_rate: 0.35,
            list_min: 8,
            list_max: 16,
            intent_share: 0.5,
            previous_share: 0.3,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        for (name, p) in [
            ("title_generic_prob", self.title_generic_prob),
            ("switch_prob", self.switch_prob),
            ("sale_rate", self.sale_rate),
            ("intent_share", self.intent_share),
            ("previous_share", self.previous_share),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if self.intent_share + self.previous_share > 1.0 {
            return bad("intent_share + previous_share must not exceed 1");
        }
        if !(self.relevance_sd >= 0.0 && self.relevance_sd.is_finite()) {
            return bad("relevance_sd must be finite and non-negative");
        }
        if !(self.beta >= 0.0) || !self.engage_bias.is_finite() {
            return bad("beta must be non-negative and engage_bias finite");
        }
        if self.categories == 0 || self.catalog_size < self.categories || self.sessions == 0 || self.epochs == 0 {
            return bad("counts must be positive and catalog_size >= categories");
        }
        if self.title_words_min == 0 || self.title_words_min > self.title_words_max {
            return bad("title word range is empty");
        }
        if self.vocab_per_category + 1 < self.title_words_max {
            return bad("vocab_per_category is smaller than the longest title");
        }
        if self.queries_min == 0 || self.queries_min > self.queries_max {
            return bad("query range is empty");
        }
        if self.list_min < 2 || self.list_min > self.list_max || self.list_max > 100 {
            return bad("list length range must lie within 2..=100");
        }
        if self.list_max > self.catalog_size {
            return bad("lists cannot be longer than the catalog");
        }
        if self.basket_size == 0 || self.basket_size > self.categories {
            return bad("basket_size must lie in 1..=categories");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogItem {
    pub item: Item,
    pub category: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub items: Vec<CatalogItem>,
    /// Item indices per category.
    pub by_category: Vec<Vec<usize>>,
    pub head_terms: Vec<String>,
    pub vocab: Vec<Vec<String>>,
    pub generic: Vec<String>,
}

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "br", "cl", "dr",
    "gr", "pl", "st", "tr", "sh", "ch",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou", "ea"];

fn pseudo_word(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    loop {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(VOWELS.choose(rng).unwrap());
        }
        if rng.random_bool(0.5) {
            w.push_str(["n", "r", "s", "x", "l"].choose(rng).unwrap());
        }
        if used.insert(w.clone()) {
            return w;
        }
    }
}

pub fn generate_catalog(config: &GeneratorConfig) -> Result<Catalog> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xca7a_1096);
    let mut used = HashSet::new();
    let generic: Vec<String> = (0..config.generic_words).map(|_| pseudo_word(&mut rng, &mut used)).collect();
    let head_terms: Vec<String> = (0..config.categories).map(|_| pseudo_word(&mut rng, &mut used)).collect();
    let vocab: Vec<Vec<String>> = (0..config.categories)
        .map(|_| {
            (0..config.vocab_per_category)
                .map(|_| pseudo_word(&mut rng, &mut used))
                .collect()
        })
        .collect();
    let mut items = Vec::with_capacity(config.catalog_size);
    let mut by_category = vec![Vec::new(); config.categories];
    for idx in 0..config.catalog_size {
        let category = idx % config.categories;
        let words = rng.random_range(config.title_words_min..=config.title_words_max);
        let mut title = vec![head_terms[category].as_str()];
        let mut picks: Vec<&str> = vocab[category]
            .choose_multiple(&mut rng, words - 1)
            .map(String::as_str)
            .collect();
        for w in picks.iter_mut() {
            if !generic.is_empty() && rng.random_bool(config.title_generic_prob) {
                *w = generic.choose(&mut rng).unwrap();
            }
        }
        title.extend(picks);
        title.shuffle(&mut rng);
        let item = Item::new(format!("i{idx:05}"), title.join(" "))?;
        by_category[category].push(items.len());
        items.push(CatalogItem { item, category });
    }
    Ok(Catalog {
        items,
        by_category,
        head_terms,
        vocab,
        generic,
    })
}

/// A generated session plus the latent intent behind each of its queries.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedSession {
    pub session: Session,
    pub intents: Vec<usize>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn base_features(rng: &mut ChaCha8Rng, q: f64) -> Vec<f64> {
    let mut n = || -> f64 { rng.sample(StandardNormal) };
    let mut f = vec![q + 0.7 * n(), q + n(), 0.5 * q + n()];
    while f.len() < BASE_DIM {
        f.push(n());
    }
    f.into_iter().map(round4).collect()
}

fn candidate_list(
    rng: &mut ChaCha8Rng,
    config: &GeneratorConfig,
    catalog: &Catalog,
    intent: usize,
    previous: Option<usize>,
) -> Vec<usize> {
    let len = rng.random_range(config.list_min..=config.list_max);
    let mut chosen: Vec<usize> = Vec::with_capacity(len);
    let mut seen = HashSet::new();
    let mut take_from = |pool: &[usize], k: usize, chosen: &mut Vec<usize>, rng: &mut ChaCha8Rng| {
        for &i in pool.choose_multiple(rng, k) {
            if seen.insert(i) {
                chosen.push(i);
            }
        }
    };
    let n_intent = (config.intent_share * len as f64).round() as usize;
    take_from(&catalog.by_category[intent], n_intent, &mut chosen, rng);
    if let Some(p) = previous {
        let n_prev = (config.previous_share * len as f64).round() as usize;
        take_from(&catalog.by_category[p], n_prev, &mut chosen, rng);
    }
    while chosen.len() < len {
        let i = rng.random_range(0..catalog.items.len());
        if seen.insert(i) {
            chosen.push(i);
        }
    }
    chosen.shuffle(rng);
    chosen
}

pub fn generate_sessions_traced(config: &GeneratorConfig, catalog: &Catalog) -> Result<Vec<TracedSession>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5e55_1015);
    let categories: Vec<usize> = (0..config.categories).collect();
    let mut out = Vec::with_capacity(config.sessions);
    for s in 0..config.sessions {
        let id = format!("s{s:06}");
        let epoch = (s as u64 * config.epochs as u64 / config.sessions as u64) as u32;
        let basket: Vec<usize> = categories
            .choose_multiple(&mut rng, config.basket_size)
            .copied()
            .collect();
        let mut intent = basket[0];
        let mut previous: Option<usize> = None;
        let mut history: Vec<ClickEvent> = Vec::new();
        let mut events = Vec::new();
        let mut intents = Vec::new();
        let mut ordinal = 0u64;
        let queries = rng.random_range(config.queries_min..=config.queries_max);
        // events since the previous query, each a chance to switch intent
        let mut pending = 0usize;
        for _ in 0..queries {
            for _ in 0..pending {
                if basket.len() > 1 && rng.random_bool(config.switch_prob) {
                    let others: Vec<usize> = basket.iter().copied().filter(|&c| c != intent).collect();
                    previous = Some(intent);
                    intent = *others.choose(&mut rng).unwrap();
                }
            }
            intents.push(intent);
            let mut words = Vec::with_capacity(3);
            if let Some(g) = catalog.generic.choose(&mut rng).filter(|_| rng.random_bool(0.5)) {
                words.push(g.clone());
            }
            words.push(catalog.head_terms[intent].clone());
            if rng.random_bool(0.5) {
                words.push(catalog.vocab[intent].choose(&mut rng).unwrap().clone());
            }
            let text = words.join(" ");
            let list = candidate_list(&mut rng, config, catalog, intent, previous);
            let mut items = Vec::with_capacity(list.len());
            for &i in &list {
                let ci = &catalog.items[i];
                let q = config.relevance_sd * rng.sample::<f64, _>(StandardNormal);
                let m = if ci.category == intent { 1.0 } else { 0.0 };
                let engaged = rng.random_bool(sigmoid(config.engage_bias + q + config.beta * m));
                let label = match (engaged, rng.random_bool(config.sale_rate)) {
                    (false, _) => EngagementLabel::None,
                    (true, true) => EngagementLabel::Sale,
                    (true, false) => EngagementLabel::Click,
                };
                items.push(SerpItem {
                    item: ci.item.clone(),
                    base_features: base_features(&mut rng, q),
                    label,
                });
            }
            let query_ordinal = ordinal;
            ordinal += 1;
            let clicked: Vec<Item> = items
                .iter()
                .filter(|it| it.label.is_engaged())
                .map(|it| it.item.clone())
                .collect();
            events.push(Event::Impression(SerpImpression {
                session_id: id.clone(),
                epoch,
                query: Query {
                    text,
                    session: id.clone(),
                    ordinal: query_ordinal,
                },
                items,
                context: ClickContext::from_history(&history),
            }));
            pending = 1 + clicked.len();
            for item in clicked {
                let c = ClickEvent { ordinal, item };
                ordinal += 1;
                history.push(c.clone());
                events.push(Event::Click(c));
            }
        }
        out.push(TracedSession {
            session: Session { id, epoch, events },
            intents,
        });
    }
    Ok(out)
}

pub fn generate_sessions(config: &GeneratorConfig, catalog: &Catalog) -> Result<Vec<Session>> {
    Ok(generate_sessions_traced(config, catalog)?
        .into_iter()
        .map(|t| t.session)
        .collect())
}
