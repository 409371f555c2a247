//! Query-aligned reference click: the context click closest to the current
//! query (smallest NCD, or largest embedding cosine) becomes the single
//! anchor that items are scored against. Ties go to the most recent click.

use crate::data::ClickContext;
use crate::embed::{cosine_similarity, Vector};
use crate::error::Result;
use crate::ncd::{NcdCache, NcdScore};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMode {
    Textual,
    Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSelection {
    /// 1-based recency index (`1` = most recent click); `None` without context.
    pub index: Option<usize>,
    pub mode: ReferenceMode,
    /// NCD of the winner (textual) or its cosine (embedding).
    pub score: Option<f64>,
}

impl ReferenceSelection {
    fn none(mode: ReferenceMode) -> Self {
        ReferenceSelection {
            index: None,
            mode,
            score: None,
        }
    }

    /// 0-based position in the most-recent-first context.
    pub fn slot(&self) -> Option<usize> {
        self.index.map(|i| i - 1)
    }
}

pub fn select_reference_textual(query: &str, context: &ClickContext) -> ReferenceSelection {
    select_reference_textual_cached(&mut NcdCache::new(), query, context)
}

pub(crate) fn select_reference_textual_cached(
    cache: &mut NcdCache,
    query: &str,
    context: &ClickContext,
) -> ReferenceSelection {
    let mut best: Option<(usize, f64)> = None;
    for (j, click) in context.clicks().iter().enumerate() {
        let Ok(d) = cache.ncd(query, &click.item.title) else {
            continue;
        };
        if best.is_none_or(|(_, b)| d.value() < b) {
            best = Some((j, d.value()));
        }
    }
    match best {
        Some((j, d)) => ReferenceSelection {
            index: Some(j + 1),
            mode: ReferenceMode::Textual,
            score: Some(d),
        },
        None => ReferenceSelection::none(ReferenceMode::Textual),
    }
}

/// `context_embs` aligned with the context, most recent first.
pub fn select_reference_embedding<T: Scalar>(
    query_emb: &Vector<T>,
    context_embs: &[Vector<T>],
) -> Result<ReferenceSelection> {
    let mut best: Option<(usize, T)> = None;
    for (j, c) in context_embs.iter().enumerate() {
        let s = cosine_similarity(query_emb, c)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    Ok(match best {
        Some((j, s)) => ReferenceSelection {
            index: Some(j + 1),
            mode: ReferenceMode::Embedding,
            score: Some(s.as_f64()),
        },
        None => ReferenceSelection::none(ReferenceMode::Embedding),
    })
}

pub fn intent_textual_feature(item_title: &str, reference: &ReferenceSelection, context: &ClickContext) -> Option<NcdScore> {
    intent_textual_feature_cached(&mut NcdCache::new(), item_title, reference, context)
}

pub(crate) fn intent_textual_feature_cached(
    cache: &mut NcdCache,
    item_title: &str,
    reference: &ReferenceSelection,
    context: &ClickContext,
) -> Option<NcdScore> {
    let click = context.clicks().get(reference.slot()?)?;
    cache.ncd(item_title, &click.item.title).ok()
}

pub fn intent_embedding_feature<T: Scalar>(
    item_emb: &Vector<T>,
    reference: &ReferenceSelection,
    context_embs: &[Vector<T>],
) -> Result<Option<T>> {
    reference
        .slot()
        .and_then(|s| context_embs.get(s))
        .map(|c| cosine_similarity(item_emb, c))
        .transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClickEvent, Item};
    use crate::embed::HashEmbedder;
    use crate::features::heuristic::{cossim_last_click, ncd_last_click};
    use crate::ncd::ncd;

    fn ctx(titles: &[&str]) -> ClickContext {
        let n = titles.len() as u64;
        let clicks = titles
            .iter()
            .enumerate()
            .map(|(i, t)| ClickEvent {
                ordinal: n - i as u64,
                item: Item::new(format!("c{i}"), *t).unwrap(),
            })
            .collect();
        ClickContext::new(clicks).unwrap()
    }

    fn embs(titles: &[&str]) -> Vec<Vector<f64>> {
        titles
            .iter()
            .map(|t| HashEmbedder::default().embed_text(t).unwrap())
            .collect()
    }

    #[test]
    fn empty_context_selects_nothing() {
        let r = select_reference_textual("shoe", &ctx(&[]));
        assert_eq!(r.index, None);
        assert_eq!(intent_textual_feature("x", &r, &ctx(&[])), None);
        let q = embs(&["shoe"]).pop().unwrap();
        let r = select_reference_embedding(&q, &[]).unwrap();
        assert_eq!(r.index, None);
        assert_eq!(intent_embedding_feature(&q, &r, &[]).unwrap(), None);
    }

    #[test]
    fn matching_title_is_selected() {
        let titles = ["garden hose reel", "running shoes women", "coffee grinder burr"];
        let r = select_reference_textual("running shoes women", &ctx(&titles));
        assert_eq!(r.index, Some(2));
        let e = embs(&titles);
        let r = select_reference_embedding(&e[1], &e).unwrap();
        assert_eq!(r.index, Some(2));
        assert!((r.score.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_most_recent() {
        let titles = ["wool socks"; 4];
        assert_eq!(select_reference_textual("socks", &ctx(&titles)).index, Some(1));
        let e = embs(&titles);
        let q = embs(&["socks"]).pop().unwrap();
        assert_eq!(select_reference_embedding(&q, &e).unwrap().index, Some(1));
    }

    #[test]
    fn feature_uses_the_selected_click() {
        let titles = ["garden hose reel", "running shoes women", "coffee grinder burr"];
        let c = ctx(&titles);
        let r = select_reference_textual("shoes", &c);
        let j = r.slot().unwrap();
        assert_eq!(
            intent_textual_feature("trail shoes", &r, &c),
            Some(ncd("trail shoes", titles[j]).unwrap())
        );
    }

    #[test]
    fn single_click_matches_last_click_features() {
        let c = ctx(&["leather wallet"]);
        let e = embs(&["leather wallet"]);
        let item = embs(&["card holder"]).pop().unwrap();
        let q = embs(&["anything"]).pop().unwrap();
        let rt = select_reference_textual("anything", &c);
        let re = select_reference_embedding(&q, &e).unwrap();
        assert_eq!(intent_textual_feature("card holder", &rt, &c), ncd_last_click("card holder", &c));
        assert_eq!(
            intent_embedding_feature(&item, &re, &e).unwrap(),
            cossim_last_click(&item, &e).unwrap()
        );
    }
}
