//! Per-item contextual features and the featurized record format consumed
//! by the ranker.
//!
//! Every contextual feature becomes two ranker columns, `<name>` and
//! `<name>_flag`; a missing value is encoded as `(0, 0)`. The full column
//! order is the base features `base0..base7` followed by the pairs in
//! [`ContextFeature::ALL`] order (sequence features only when encoders are
//! attached).

pub mod heuristic;
pub mod intent;

use std::collections::HashMap;
use std::fmt::Write as _;

pub use heuristic::{
    concat_context_titles, cossim_last5, cossim_last_click, ncd_last5, ncd_last_click,
    HeuristicFeatureSet,
};
pub use intent::{
    intent_embedding_feature, intent_textual_feature, select_reference_embedding,
    select_reference_textual, ReferenceMode, ReferenceSelection,
};

use crate::data::{EngagementLabel, SerpImpression, Session, BASE_DIM};
use crate::embed::{TextEmbedder, Vector};
use crate::error::{Error, Result};
use crate::ltr::{FeatureLayout, RankGroup};
use crate::ncd::NcdCache;
use crate::seq::{seq_context_feature, EncoderMode, EncoderWeights, SeqExample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ContextFeature {
    NcdLc,
    CossimLc,
    NcdL5c,
    CossimL5c,
    NcdRefTxt,
    CossimRefEmb,
    CossimSeqTrans,
    CossimSeqPerc,
}

impl ContextFeature {
    pub const ALL: [ContextFeature; 8] = [
        ContextFeature::NcdLc,
        ContextFeature::CossimLc,
        ContextFeature::NcdL5c,
        ContextFeature::CossimL5c,
        ContextFeature::NcdRefTxt,
        ContextFeature::CossimRefEmb,
        ContextFeature::CossimSeqTrans,
        ContextFeature::CossimSeqPerc,
    ];
    pub const HEURISTIC: [ContextFeature; 4] = [
        ContextFeature::NcdLc,
        ContextFeature::CossimLc,
        ContextFeature::NcdL5c,
        ContextFeature::CossimL5c,
    ];
    pub const INTENT: [ContextFeature; 2] = [ContextFeature::NcdRefTxt, ContextFeature::CossimRefEmb];
    pub const SEQ: [ContextFeature; 2] = [ContextFeature::CossimSeqTrans, ContextFeature::CossimSeqPerc];

    pub fn name(self) -> &'static str {
        match self {
            ContextFeature::NcdLc => "ncd_lc",
            ContextFeature::CossimLc => "cossim_lc",
            ContextFeature::NcdL5c => "ncd_l5c",
            ContextFeature::CossimL5c => "cossim_l5c",
            ContextFeature::NcdRefTxt => "ncd_ref_txt",
            ContextFeature::CossimRefEmb => "cossim_ref_emb",
            ContextFeature::CossimSeqTrans => "cossim_seq_trans",
            ContextFeature::CossimSeqPerc => "cossim_seq_perc",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn flag_column(self) -> String {
        format!("{}_flag", self.name())
    }
}

pub fn base_column(i: usize) -> String {
    format!("base{i}")
}

/// Base columns followed by a value/flag pair per feature.
pub fn layout_for(features: &[ContextFeature]) -> FeatureLayout {
    let mut cols: Vec<String> = (0..BASE_DIM).map(base_column).collect();
    for f in features {
        cols.push(f.name().to_owned());
        cols.push(f.flag_column());
    }
    FeatureLayout::new(cols).expect("feature names are distinct")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedImpression {
    pub session: String,
    pub epoch: u32,
    pub ordinal: u64,
    pub labels: Vec<EngagementLabel>,
    /// One row per item in [`FeaturizedSet::layout`] order.
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedSet {
    pub features: Vec<ContextFeature>,
    pub layout: FeatureLayout,
    pub impressions: Vec<FeaturizedImpression>,
}

impl FeaturizedSet {
    pub fn new(features: Vec<ContextFeature>) -> Self {
        let layout = layout_for(&features);
        FeaturizedSet {
            features,
            layout,
            impressions: Vec::new(),
        }
    }

    /// Ranker input for a variant, columns selected by name.
    pub fn to_groups(&self, layout: &FeatureLayout) -> Result<Vec<RankGroup<f64>>> {
        let idx = layout.project_from(&self.layout)?;
        Ok(self
            .impressions
            .iter()
            .map(|imp| RankGroup {
                session: imp.session.clone(),
                ordinal: imp.ordinal,
                rows: imp
                    .rows
                    .iter()
                    .map(|r| idx.iter().map(|&i| r[i]).collect())
                    .collect(),
                labels: imp.labels.clone(),
            })
            .collect())
    }

    /// Record format: a `#features=` header, then one line per item:
    /// `session epoch ordinal label base0..base7 value:flag...`, tab separated.
    pub fn to_text(&self) -> String {
        let names: Vec<&str> = self.features.iter().map(|f| f.name()).collect();
        let mut out = format!("#features={}\n", names.join(","));
        for imp in &self.impressions {
            for (row, label) in imp.rows.iter().zip(&imp.labels) {
                write!(out, "{}\t{}\t{}\t{}", imp.session, imp.epoch, imp.ordinal, label.grade()).unwrap();
                for v in &row[..BASE_DIM] {
                    write!(out, "\t{v}").unwrap();
                }
                for pair in row[BASE_DIM..].chunks(2) {
                    write!(out, "\t{}:{}", pair[0], pair[1]).unwrap();
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut set: Option<FeaturizedSet> = None;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if let Some(meta) = line.strip_prefix('#') {
                if let Some(list) = meta.strip_prefix("features=") {
                    let features = if list.is_empty() {
                        Vec::new()
                    } else {
                        list.split(',')
                            .map(|n| {
                                ContextFeature::parse(n)
                                    .ok_or_else(|| Error::parse(line_no, format!("unknown feature {n}")))
                            })
                            .collect::<Result<_>>()?
                    };
                    set = Some(FeaturizedSet::new(features));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let set = set
                .as_mut()
                .ok_or_else(|| Error::parse(line_no, "record before #features header"))?;
            let fields: Vec<&str> = line.split('\t').collect();
            let expected = 4 + BASE_DIM + set.features.len();
            if fields.len() != expected {
                return Err(Error::parse(
                    line_no,
                    format!("expected {expected} fields, found {}", fields.len()),
                ));
            }
            let bad = |what: &str| Error::parse(line_no, format!("bad {what}"));
            let session = fields[0].to_owned();
            let epoch: u32 = fields[1].parse().map_err(|_| bad("epoch"))?;
            let ordinal: u64 = fields[2].parse().map_err(|_| bad("ordinal"))?;
            let label = fields[3]
                .parse()
                .ok()
                .and_then(EngagementLabel::from_grade)
                .ok_or_else(|| bad("label"))?;
            let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad("value"));
            let mut row = Vec::with_capacity(set.layout.len());
            for f in &fields[4..4 + BASE_DIM] {
                row.push(num(f)?);
            }
            for f in &fields[4 + BASE_DIM..] {
                let (v, flag) = f.split_once(':').ok_or_else(|| bad("value:flag pair"))?;
                row.push(num(v)?);
                row.push(num(flag)?);
            }
            let same = set
                .impressions
                .last()
                .is_some_and(|l| l.session == session && l.ordinal == ordinal);
            if !same {
                set.impressions.push(FeaturizedImpression {
                    session,
                    epoch,
                    ordinal,
                    labels: Vec::new(),
                    rows: Vec::new(),
                });
            }
            let imp = set.impressions.last_mut().unwrap();
            imp.labels.push(label);
            imp.rows.push(row);
        }
        set.ok_or_else(|| Error::parse(0, "missing #features header"))
    }
}

fn push_pair(row: &mut Vec<f64>, v: Option<f64>) {
    match v {
        Some(v) => {
            row.push(v);
            row.push(1.0);
        }
        None => {
            row.push(0.0);
            row.push(0.0);
        }
    }
}

/// Computes contextual features with memoized embeddings and compressed sizes.
pub struct Featurizer<'a> {
    embedder: &'a dyn TextEmbedder<f64>,
    ncd: NcdCache,
    embeddings: HashMap<String, Vector<f64>>,
    trans: Option<&'a EncoderWeights<f64>>,
    perc: Option<&'a EncoderWeights<f64>>,
}

impl<'a> Featurizer<'a> {
    pub fn new(embedder: &'a dyn TextEmbedder<f64>) -> Self {
        Featurizer {
            embedder,
            ncd: NcdCache::new(),
            embeddings: HashMap::new(),
            trans: None,
            perc: None,
        }
    }

    /// Attaches sequence encoders. Each must record the last epoch it was
    /// trained on, and that epoch must precede `boundary`, the first epoch
    /// of ranker data.
    pub fn with_encoders(
        mut self,
        trans: &'a EncoderWeights<f64>,
        perc: &'a EncoderWeights<f64>,
        boundary: u32,
    ) -> Result<Self> {
        for (w, mode) in [(trans, EncoderMode::Trans), (perc, EncoderMode::Perc)] {
            if w.config.mode != mode {
                return Err(Error::InvalidArgument(format!(
                    "expected a {} encoder, got {}",
                    mode.as_str(),
                    w.config.mode.as_str()
                )));
            }
            if w.config.dim != self.embedder.dim() {
                return Err(Error::DimMismatch {
                    expected: self.embedder.dim(),
                    found: w.config.dim,
                });
            }
            match w.provenance.max_train_epoch {
                None => {
                    return Err(Error::Leakage(format!(
                        "{} encoder does not record its training epochs",
                        mode.as_str()
                    )))
                }
                Some(e) if e >= boundary => {
                    return Err(Error::Leakage(format!(
                        "{} encoder saw epoch {e}, ranker data starts at epoch {boundary}",
                        mode.as_str()
                    )))
                }
                Some(_) => {}
            }
        }
        self.trans = Some(trans);
        self.perc = Some(perc);
        Ok(self)
    }

    pub fn features(&self) -> Vec<ContextFeature> {
        let n = if self.trans.is_some() { 8 } else { 6 };
        ContextFeature::ALL[..n].to_vec()
    }

    pub fn embed(&mut self, text: &str) -> Result<Vector<f64>> {
        if let Some(v) = self.embeddings.get(text) {
            return Ok(v.clone());
        }
        let v = self.embedder.embed(text)?;
        self.embeddings.insert(text.to_owned(), v.clone());
        Ok(v)
    }

    fn context_embeddings(&mut self, imp: &SerpImpression) -> Result<Vec<Vector<f64>>> {
        imp.context
            .clicks()
            .iter()
            .map(|c| self.embed(&c.item.title))
            .collect()
    }

    pub fn featurize_impression(&mut self, imp: &SerpImpression) -> Result<FeaturizedImpression> {
        for w in [self.trans, self.perc].into_iter().flatten() {
            if let Some(e) = w.provenance.max_train_epoch {
                if imp.epoch <= e {
                    return Err(Error::Leakage(format!(
                        "impression {}:{} is from epoch {}, encoder trained through epoch {e}",
                        imp.session_id, imp.query.ordinal, imp.epoch
                    )));
                }
            }
        }
        let ctx = &imp.context;
        let ctx_embs = self.context_embeddings(imp)?;
        let query_emb = self.embed(&imp.query.text)?;
        let ref_txt = intent::select_reference_textual_cached(&mut self.ncd, &imp.query.text, ctx);
        let ref_emb = select_reference_embedding(&query_emb, &ctx_embs)?;
        let seq = if ctx_embs.is_empty() {
            None
        } else {
            match (self.trans, self.perc) {
                (Some(t), Some(p)) => Some((t.encode(None, &ctx_embs)?, p.encode(Some(&query_emb), &ctx_embs)?)),
                _ => None,
            }
        };
        let width = BASE_DIM + 2 * self.features().len();
        let mut rows = Vec::with_capacity(imp.items.len());
        for item in &imp.items {
            let title = &item.item.title;
            let emb = self.embed(title)?;
            let h = HeuristicFeatureSet::compute_cached(&mut self.ncd, title, &emb, ctx, &ctx_embs)?;
            let mut row = Vec::with_capacity(width);
            row.extend_from_slice(&item.base_features);
            push_pair(&mut row, h.ncd_lc.map(|v| v.value()));
            push_pair(&mut row, h.cossim_lc);
            push_pair(&mut row, h.ncd_l5c.map(|v| v.value()));
            push_pair(&mut row, h.cossim_l5c);
            push_pair(
                &mut row,
                intent::intent_textual_feature_cached(&mut self.ncd, title, &ref_txt, ctx).map(|v| v.value()),
            );
            push_pair(&mut row, intent_embedding_feature(&emb, &ref_emb, &ctx_embs)?);
            if self.trans.is_some() {
                let (t, p) = match &seq {
                    Some((t, p)) => (Some(t), Some(p)),
                    None => (None, None),
                };
                push_pair(&mut row, seq_context_feature(&emb, t)?);
                push_pair(&mut row, seq_context_feature(&emb, p)?);
            }
            rows.push(row);
        }
        Ok(FeaturizedImpression {
            session: imp.session_id.clone(),
            epoch: imp.epoch,
            ordinal: imp.query.ordinal,
            labels: imp.labels(),
            rows,
        })
    }

    pub fn featurize_sessions(&mut self, sessions: &[Session]) -> Result<FeaturizedSet> {
        let mut set = FeaturizedSet::new(self.features());
        for s in sessions {
            for imp in s.impressions() {
                set.impressions.push(self.featurize_impression(imp)?);
            }
        }
        Ok(set)
    }

    /// Encoder training examples: impressions with context and at least one
    /// engaged item.
    pub fn seq_examples(&mut self, sessions: &[Session]) -> Result<Vec<SeqExample<f64>>> {
        let mut out = Vec::new();
        for s in sessions {
            for imp in s.impressions() {
                if imp.context.is_empty() || !imp.items.iter().any(|i| i.label.is_engaged()) {
                    continue;
                }
                let context = self.context_embeddings(imp)?;
                let items = imp
                    .items
                    .iter()
                    .map(|i| self.embed(&i.item.title))
                    .collect::<Result<_>>()?;
                out.push(SeqExample {
                    query: self.embed(&imp.query.text)?,
                    context,
                    items,
                    labels: imp.labels(),
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_session_log;
    use crate::embed::HashEmbedder;

    fn log() -> String {
        let f = vec!["0.25"; BASE_DIM].join(",");
        format!(
            "CLICK\ts1\t3\t1\ta\tred running shoe\n\
             IMPR\ts1\t3\t2\tshoe\tx|green shoe|2|{f};y|hat|0|{f}\n\
             IMPR\ts2\t3\t0\that\tx|green shoe|0|{f};y|wool hat|1|{f}\n"
        )
    }

    #[test]
    fn rows_follow_layout_and_missing_is_zero_zero() {
        let sessions = parse_session_log(&log()).unwrap();
        let emb = HashEmbedder::default();
        let set = Featurizer::new(&emb).featurize_sessions(&sessions).unwrap();
        assert_eq!(set.layout.len(), BASE_DIM + 12);
        let with_ctx = &set.impressions[0];
        let without = &set.impressions[1];
        assert!(with_ctx.rows[0][BASE_DIM..].chunks(2).all(|p| p[1] == 1.0));
        assert!(without.rows[0][BASE_DIM..].iter().all(|&v| v == 0.0));
        // one click: every ncd column agrees, every cosine column agrees
        let r = &with_ctx.rows[0];
        let ncd_cols = [BASE_DIM, BASE_DIM + 4, BASE_DIM + 8];
        assert!(ncd_cols.iter().all(|&c| r[c] == r[BASE_DIM]));
        let cos_cols = [BASE_DIM + 2, BASE_DIM + 6, BASE_DIM + 10];
        assert!(cos_cols.iter().all(|&c| r[c] == r[BASE_DIM + 2]));
    }

    #[test]
    fn record_text_round_trips_and_projects() {
        let sessions = parse_session_log(&log()).unwrap();
        let emb = HashEmbedder::default();
        let set = Featurizer::new(&emb).featurize_sessions(&sessions).unwrap();
        let back = FeaturizedSet::from_text(&set.to_text()).unwrap();
        assert_eq!(back, set);
        let p1 = layout_for(&ContextFeature::HEURISTIC);
        let groups = set.to_groups(&p1).unwrap();
        assert_eq!(groups[0].rows[0].len(), BASE_DIM + 8);
        let err = set.to_groups(&layout_for(&[ContextFeature::CossimSeqPerc])).unwrap_err();
        assert!(err.to_string().contains("cossim_seq_perc"), "{err}");
    }

    #[test]
    fn encoders_trained_on_ranker_epochs_are_rejected() {
        use crate::seq::{EncoderConfig, EncoderProvenance};
        let emb = HashEmbedder::default();
        let mk = |mode, epoch: Option<u32>| {
            let mut w = EncoderWeights::<f64>::init(EncoderConfig::new(mode, 64, 1)).unwrap();
            w.provenance = EncoderProvenance {
                max_train_epoch: epoch,
                config_hash: None,
            };
            w
        };
        let t = mk(EncoderMode::Trans, Some(9));
        let p = mk(EncoderMode::Perc, Some(2));
        assert!(matches!(Featurizer::new(&emb).with_encoders(&t, &p, 5), Err(Error::Leakage(_))));
        let unknown = mk(EncoderMode::Trans, None);
        assert!(matches!(Featurizer::new(&emb).with_encoders(&unknown, &p, 5), Err(Error::Leakage(_))));
        let t_ok = mk(EncoderMode::Trans, Some(2));
        let mut f = Featurizer::new(&emb).with_encoders(&t_ok, &p, 3).unwrap();
        let sessions = parse_session_log(&log()).unwrap();
        let set = f.featurize_sessions(&sessions).unwrap();
        assert_eq!(set.layout.len(), BASE_DIM + 16);
        let mut f = Featurizer::new(&emb).with_encoders(&t_ok, &p, 2 + 1).unwrap();
        let mut early = sessions.clone();
        early[0].epoch = 1;
        for e in &mut early[0].events {
            if let crate::data::Event::Impression(i) = e {
                i.epoch = 1;
            }
        }
        assert!(matches!(f.featurize_sessions(&early), Err(Error::Leakage(_))));
    }
}
