//! Item-vs-recent-clicks features: compression distance and embedding
//! cosine against the last click and against the last five clicks.
//!
//! All four are missing exactly when the click context is empty. Context
//! embeddings are passed aligned with the context, most recent first.

use crate::data::ClickContext;
use crate::embed::{cosine_similarity, Vector};
use crate::error::Result;
use crate::ncd::{NcdCache, NcdScore};
use crate::scalar::Scalar;

/// Titles of the available context clicks, oldest to newest, space-joined.
pub fn concat_context_titles(context: &ClickContext) -> String {
    context.titles_chronological().collect::<Vec<_>>().join(" ")
}

pub fn ncd_last_click(item_title: &str, context: &ClickContext) -> Option<NcdScore> {
    ncd_last_click_cached(&mut NcdCache::new(), item_title, context)
}

pub fn ncd_last5(item_title: &str, context: &ClickContext) -> Option<NcdScore> {
    ncd_last5_cached(&mut NcdCache::new(), item_title, context)
}

pub(crate) fn ncd_last_click_cached(cache: &mut NcdCache, item_title: &str, context: &ClickContext) -> Option<NcdScore> {
    let last = context.last()?;
    cache.ncd(item_title, &last.item.title).ok()
}

pub(crate) fn ncd_last5_cached(cache: &mut NcdCache, item_title: &str, context: &ClickContext) -> Option<NcdScore> {
    if context.is_empty() {
        return None;
    }
    cache.ncd(item_title, &concat_context_titles(context)).ok()
}

pub fn cossim_last_click<T: Scalar>(item_emb: &Vector<T>, context_embs: &[Vector<T>]) -> Result<Option<T>> {
    context_embs
        .first()
        .map(|c| cosine_similarity(item_emb, c))
        .transpose()
}

/// Mean cosine over the available clicks.
pub fn cossim_last5<T: Scalar>(item_emb: &Vector<T>, context_embs: &[Vector<T>]) -> Result<Option<T>> {
    if context_embs.is_empty() {
        return Ok(None);
    }
    let mut sum = T::zero();
    for c in context_embs {
        sum += cosine_similarity(item_emb, c)?;
    }
    Ok(Some(sum / T::of_usize(context_embs.len())))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeuristicFeatureSet<T> {
    pub ncd_lc: Option<NcdScore>,
    pub cossim_lc: Option<T>,
    pub ncd_l5c: Option<NcdScore>,
    pub cossim_l5c: Option<T>,
}

impl<T: Scalar> HeuristicFeatureSet<T> {
    pub fn compute(
        item_title: &str,
        item_emb: &Vector<T>,
        context: &ClickContext,
        context_embs: &[Vector<T>],
    ) -> Result<Self> {
        Self::compute_cached(&mut NcdCache::new(), item_title, item_emb, context, context_embs)
    }

    pub(crate) fn compute_cached(
        cache: &mut NcdCache,
        item_title: &str,
        item_emb: &Vector<T>,
        context: &ClickContext,
        context_embs: &[Vector<T>],
    ) -> Result<Self> {
        Ok(HeuristicFeatureSet {
            ncd_lc: ncd_last_click_cached(cache, item_title, context),
            cossim_lc: cossim_last_click(item_emb, context_embs)?,
            ncd_l5c: ncd_last5_cached(cache, item_title, context),
            cossim_l5c: cossim_last5(item_emb, context_embs)?,
        })
    }
}
