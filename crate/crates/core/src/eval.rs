//! MRR of sale, lift between variants, and the progressive variant ladder.
//!
//! The ladder trains a base-features ranker (`MLR`), adds each last-click /
//! last-five feature to it, fixes `P1` (all four), adds each query-aligned
//! reference feature, fixes `P2` (both), and adds each sequence-encoder
//! feature. Every comparison is evaluated on one held-out set of sessions.

use std::fmt::Write as _;
use std::hash::Hasher;

use fnv::FnvHasher;

use crate::data::EngagementLabel;
use crate::error::{Error, Result};
use crate::features::{layout_for, ContextFeature, FeaturizedSet};
use crate::ltr::{score_order, train_ranker, RankerHyperParams, RankerModel};

/// An impression's labels in descending model-score order (stable ties).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedImpression {
    pub labels: Vec<EngagementLabel>,
}

impl RankedImpression {
    pub fn from_scores(labels: &[EngagementLabel], scores: &[f64]) -> Result<Self> {
        if labels.len() != scores.len() {
            return Err(Error::InvalidArgument(format!(
                "{} scores for {} items",
                scores.len(),
                labels.len()
            )));
        }
        Ok(RankedImpression {
            labels: score_order(scores).into_iter().map(|i| labels[i]).collect(),
        })
    }

    /// 1-based rank of the first sale.
    pub fn first_sale_rank(&self) -> Option<usize> {
        self.labels
            .iter()
            .position(|&l| l == EngagementLabel::Sale)
            .map(|p| p + 1)
    }

    pub fn reciprocal_rank(&self) -> Option<f64> {
        self.first_sale_rank().map(|r| 1.0 / r as f64)
    }
}

/// Mean reciprocal rank of the first sale over impressions that have one.
pub fn mrr_sale(ranked: &[RankedImpression]) -> Result<f64> {
    if ranked.is_empty() {
        return Err(Error::InvalidArgument("no impressions to evaluate".into()));
    }
    // sum per rank so the result does not depend on impression order and
    // carries one rounding per distinct rank instead of one per impression
    let mut by_rank = std::collections::BTreeMap::<usize, u64>::new();
    for r in ranked.iter().filter_map(RankedImpression::first_sale_rank) {
        *by_rank.entry(r).or_default() += 1;
    }
    let n: u64 = by_rank.values().sum();
    if n == 0 {
        return Err(Error::NoSales);
    }
    let total: f64 = by_rank.iter().map(|(&r, &c)| c as f64 / r as f64).sum();
    Ok(total / n as f64)
}

/// Percent change of `variant` over `baseline`.
pub fn lift(variant_mrr: f64, baseline_mrr: f64) -> Result<f64> {
    if !(baseline_mrr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "baseline MRR must be positive, got {baseline_mrr}"
        )));
    }
    Ok((variant_mrr - baseline_mrr) / baseline_mrr * 100.0)
}

/// Delta-method standard error of the lift from paired per-impression
/// reciprocal ranks.
pub fn paired_lift_se(variant_rr: &[f64], baseline_rr: &[f64]) -> f64 {
    let n = variant_rr.len().min(baseline_rr.len());
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mv = variant_rr.iter().sum::<f64>() / nf;
    let mb = baseline_rr.iter().sum::<f64>() / nf;
    let (mut vv, mut vb, mut cov) = (0.0, 0.0, 0.0);
    for (&v, &b) in variant_rr.iter().zip(baseline_rr) {
        vv += (v - mv) * (v - mv);
        vb += (b - mb) * (b - mb);
        cov += (v - mv) * (b - mb);
    }
    let d = nf - 1.0;
    let (vv, vb, cov) = (vv / d, vb / d, cov / d);
    let var_ratio = vv / (mb * mb) + mv * mv * vb / mb.powi(4) - 2.0 * mv * cov / mb.powi(3);
    100.0 * (var_ratio.max(0.0) / nf).sqrt()
}

/// A ranker input layout in the ladder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variant {
    pub name: String,
    pub features: Vec<ContextFeature>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub variant: String,
    pub baseline: String,
}

impl Comparison {
    pub fn label(&self) -> String {
        format!("{} vs {}", self.variant, self.baseline)
    }
}

pub fn feature_display_name(f: ContextFeature) -> &'static str {
    match f {
        ContextFeature::NcdLc => "NCD_lc",
        ContextFeature::CossimLc => "CosSim_lc",
        ContextFeature::NcdL5c => "NCD_l5c",
        ContextFeature::CossimL5c => "CosSim_l5c",
        ContextFeature::NcdRefTxt => "NCD_Ref_txt",
        ContextFeature::CossimRefEmb => "CosSim_Ref_emb",
        ContextFeature::CossimSeqTrans => "CosSim_seq:trans",
        ContextFeature::CossimSeqPerc => "CosSim_seq:perc",
    }
}

/// Variants to train and the comparisons to report, in report order.
/// Without sequence features the last two comparisons are omitted.
pub fn ladder(with_seq: bool) -> (Vec<Variant>, Vec<Comparison>) {
    let mut variants = vec![Variant {
        name: "MLR".into(),
        features: Vec::new(),
    }];
    let mut comparisons = Vec::new();
    let mut stage = |base: &str, base_feats: Vec<ContextFeature>, extra: &[ContextFeature]| {
        for &f in extra {
            let name = format!("{base} + {}", feature_display_name(f));
            let mut features = base_feats.clone();
            features.push(f);
            variants.push(Variant {
                name: name.clone(),
                features,
            });
            comparisons.push(Comparison {
                variant: name,
                baseline: base.into(),
            });
        }
    };
    stage("MLR", Vec::new(), &ContextFeature::HEURISTIC);
    let p1 = ContextFeature::HEURISTIC.to_vec();
    let mut p2 = p1.clone();
    p2.extend(ContextFeature::INTENT);
    stage("P1", p1.clone(), &ContextFeature::INTENT);
    if with_seq {
        stage("P2", p2.clone(), &ContextFeature::SEQ);
    }
    variants.push(Variant {
        name: "P1".into(),
        features: p1,
    });
    variants.push(Variant {
        name: "P2".into(),
        features: p2,
    });
    (variants, comparisons)
}

/// Deterministic session holdout for evaluation, keyed by `salt`.
pub fn is_eval_session(session: &str, salt: u64, fraction: f64) -> bool {
    let mut h = FnvHasher::with_key(salt.rotate_left(17) ^ 0xe7a1_0000_0000_0001);
    h.write(session.as_bytes());
    (h.finish() % 10_000) as f64 / 10_000.0 < fraction
}

/// Splits featurized impressions into `(train, eval)` by session.
pub fn split_for_eval(set: &FeaturizedSet, salt: u64, fraction: f64) -> (FeaturizedSet, FeaturizedSet) {
    let mut train = FeaturizedSet::new(set.features.clone());
    let mut test = FeaturizedSet::new(set.features.clone());
    for imp in &set.impressions {
        if is_eval_session(&imp.session, salt, fraction) {
            test.impressions.push(imp.clone());
        } else {
            train.impressions.push(imp.clone());
        }
    }
    (train, test)
}

/// Trains every ladder variant on `train`; failures name the variant.
pub fn train_variants(
    train: &FeaturizedSet,
    variants: &[Variant],
    hp: &RankerHyperParams,
) -> Result<Vec<RankerModel<f64>>> {
    variants
        .iter()
        .map(|v| {
            let layout = layout_for(&v.features);
            train
                .to_groups(&layout)
                .and_then(|groups| train_ranker(&v.name, layout, &groups, hp))
                .map_err(|e| Error::Variant {
                    variant: v.name.clone(),
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Ranks every eval impression with `model`.
pub fn rank_with(model: &RankerModel<f64>, test: &FeaturizedSet) -> Result<Vec<RankedImpression>> {
    let idx = model.layout.project_from(&test.layout)?;
    let mut picked = Vec::with_capacity(idx.len());
    test.impressions
        .iter()
        .map(|imp| {
            let scores = imp
                .rows
                .iter()
                .map(|r| {
                    picked.clear();
                    picked.extend(idx.iter().map(|&i| r[i]));
                    model.score(&picked)
                })
                .collect::<Result<Vec<f64>>>()?;
            RankedImpression::from_scores(&imp.labels, &scores)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftRow {
    pub comparison: String,
    pub variant: String,
    pub baseline: String,
    pub baseline_mrr: f64,
    pub variant_mrr: f64,
    pub lift_pct: f64,
    pub lift_se_pct: f64,
    /// Eval impressions containing a sale.
    pub impressions: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LiftReport {
    /// `key=value` metadata written as `#` lines.
    pub meta: Vec<(String, String)>,
    pub rows: Vec<LiftRow>,
}

pub const REPORT_HEADER: &str =
    "comparison\tvariant\tbaseline\tbaseline_mrr\tvariant_mrr\tlift_pct\tlift_se_pct\timpressions\tseed";

impl LiftReport {
    pub fn row(&self, comparison: &str) -> Option<&LiftRow> {
        self.rows.iter().find(|r| r.comparison == comparison)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            writeln!(out, "#{k}={v}").unwrap();
        }
        out.push_str(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.comparison,
                r.variant,
                r.baseline,
                r.baseline_mrr,
                r.variant_mrr,
                r.lift_pct,
                r.lift_se_pct,
                r.impressions,
                r.seed
            )
            .unwrap();
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut report = LiftReport::default();
        let mut saw_header = false;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.split_once('=') {
                    report.meta.push((k.to_owned(), v.to_owned()));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            if !saw_header {
                if line != REPORT_HEADER {
                    return Err(Error::parse(line_no, "unexpected report header"));
                }
                saw_header = true;
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 9 {
                return Err(Error::parse(line_no, format!("expected 9 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::parse(line_no, format!("bad number {s:?}")));
            report.rows.push(LiftRow {
                comparison: f[0].to_owned(),
                variant: f[1].to_owned(),
                baseline: f[2].to_owned(),
                baseline_mrr: num(f[3])?,
                variant_mrr: num(f[4])?,
                lift_pct: num(f[5])?,
                lift_se_pct: num(f[6])?,
                impressions: f[7].parse().map_err(|_| Error::parse(line_no, "bad impression count"))?,
                seed: f[8].parse().map_err(|_| Error::parse(line_no, "bad seed"))?,
            });
        }
        if !saw_header {
            return Err(Error::parse(0, "missing report header"));
        }
        Ok(report)
    }

    /// Fixed-width table for terminals.
    pub fn render(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.comparison.len())
            .max()
            .unwrap_or(0)
            .max("Variant".len());
        let mut out = String::new();
        for (k, v) in &self.meta {
            writeln!(out, "{k}: {v}").unwrap();
        }
        writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>8}  {:>7}",
            "Variant", "base MRR", "var MRR", "lift %", "SE %", "n"
        )
        .unwrap();
        writeln!(out, "{}", "-".repeat(width + 52)).unwrap();
        for r in &self.rows {
            writeln!(
                out,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>+9.2}  {:>8.2}  {:>7}",
                r.comparison, r.baseline_mrr, r.variant_mrr, r.lift_pct, r.lift_se_pct, r.impressions
            )
            .unwrap();
        }
        out
    }
}

/// Evaluates trained models on `test` and assembles one row per comparison.
pub fn build_report(
    models: &[RankerModel<f64>],
    comparisons: &[Comparison],
    test: &FeaturizedSet,
    seed: u64,
) -> Result<LiftReport> {
    let mut per_variant: Vec<(&str, Vec<Option<f64>>, f64)> = Vec::with_capacity(models.len());
    for m in models {
        let ranked = rank_with(m, test).map_err(|e| Error::Variant {
            variant: m.variant.clone(),
            source: Box::new(e),
        })?;
        let mrr = mrr_sale(&ranked)?;
        per_variant.push((&m.variant, ranked.iter().map(RankedImpression::reciprocal_rank).collect(), mrr));
    }
    let find = |name: &str| {
        per_variant
            .iter()
            .find(|(n, _, _)| *n == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no trained model for variant {name}")))
    };
    let mut rows = Vec::with_capacity(comparisons.len());
    for c in comparisons {
        let (_, rr_v, mrr_v) = find(&c.variant)?;
        let (_, rr_b, mrr_b) = find(&c.baseline)?;
        let (pv, pb): (Vec<f64>, Vec<f64>) = rr_v
            .iter()
            .zip(rr_b)
            .filter_map(|(v, b)| Some(((*v)?, (*b)?)))
            .unzip();
        rows.push(LiftRow {
            comparison: c.label(),
            variant: c.variant.clone(),
            baseline: c.baseline.clone(),
            baseline_mrr: *mrr_b,
            variant_mrr: *mrr_v,
            lift_pct: lift(*mrr_v, *mrr_b)?,
            lift_se_pct: paired_lift_se(&pv, &pb),
            impressions: pv.len(),
            seed,
        });
    }
    Ok(LiftReport {
        meta: Vec::new(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressionConfig {
    pub ranker: RankerHyperParams,
    /// Fraction of sessions held out for evaluation.
    pub eval_fraction: f64,
    pub seed: u64,
}

/// Splits, trains the whole ladder on one split, and reports every comparison.
pub fn run_progression(data: &FeaturizedSet, cfg: &ProgressionConfig) -> Result<(LiftReport, Vec<RankerModel<f64>>)> {
    let with_seq = data.features.contains(&ContextFeature::CossimSeqTrans);
    let (variants, comparisons) = ladder(with_seq);
    let (train, test) = split_for_eval(data, cfg.seed, cfg.eval_fraction);
    let hp = RankerHyperParams {
        seed: cfg.seed,
        ..cfg.ranker
    };
    let models = train_variants(&train, &variants, &hp)?;
    let report = build_report(&models, &comparisons, &test, cfg.seed)?;
    Ok((report, models))
}

/// Per-comparison summary of one lift across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub comparison: String,
    pub mean_lift_pct: f64,
    /// Standard error of the mean lift across seeds.
    pub se_pct: f64,
    pub seeds: usize,
    pub positive: usize,
}

pub fn summarize_seeds(reports: &[LiftReport]) -> Vec<SeedSummary> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    first
        .rows
        .iter()
        .map(|row| {
            let lifts: Vec<f64> = reports
                .iter()
                .filter_map(|r| r.row(&row.comparison))
                .map(|r| r.lift_pct)
                .collect();
            let n = lifts.len() as f64;
            let mean = lifts.iter().sum::<f64>() / n;
            let var = if lifts.len() > 1 {
                lifts.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            SeedSummary {
                comparison: row.comparison.clone(),
                mean_lift_pct: mean,
                se_pct: (var / n).sqrt(),
                seeds: lifts.len(),
                positive: lifts.iter().filter(|&&l| l > 0.0).count(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use EngagementLabel::{Click, None as Nil, Sale};

    #[test]
    fn reciprocal_rank_of_first_sale() {
        let r = RankedImpression::from_scores(&[Nil, Sale, Click], &[0.9, 0.1, 0.5]).unwrap();
        assert_eq!(r.first_sale_rank(), Some(3));
        assert_eq!(mrr_sale(&[r]).unwrap(), 1.0 / 3.0);
        let top = RankedImpression { labels: vec![Sale, Nil] };
        let second = RankedImpression { labels: vec![Nil, Sale] };
        assert_eq!(mrr_sale(&[top.clone()]).unwrap(), 1.0);
        assert_eq!(mrr_sale(&[second.clone()]).unwrap(), 0.5);
        assert_eq!(mrr_sale(&[top, second]).unwrap(), 0.75);
    }

    #[test]
    fn ties_keep_original_order() {
        let r = RankedImpression::from_scores(&[Nil, Sale], &[0.0, 0.0]).unwrap();
        assert_eq!(r.labels, vec![Nil, Sale]);
    }

    #[test]
    fn undefined_mrr_is_an_error() {
        assert!(matches!(mrr_sale(&[]), Err(Error::InvalidArgument(_))));
        let none = RankedImpression { labels: vec![Click, Nil] };
        assert!(matches!(mrr_sale(&[none]), Err(Error::NoSales)));
    }

    #[test]
    fn lift_arithmetic() {
        assert_eq!(lift(0.5, 0.5).unwrap(), 0.0);
        assert!((lift(0.55, 0.50).unwrap() - 10.0).abs() < 1e-12);
        assert!(lift(0.5, 0.0).is_err());
    }

    #[test]
    fn ladder_has_eight_comparisons() {
        let (variants, comps) = ladder(true);
        let labels: Vec<String> = comps.iter().map(Comparison::label).collect();
        assert_eq!(
            labels,
            [
                "MLR + NCD_lc vs MLR",
                "MLR + CosSim_lc vs MLR",
                "MLR + NCD_l5c vs MLR",
                "MLR + CosSim_l5c vs MLR",
                "P1 + NCD_Ref_txt vs P1",
                "P1 + CosSim_Ref_emb vs P1",
                "P2 + CosSim_seq:trans vs P2",
                "P2 + CosSim_seq:perc vs P2",
            ]
        );
        assert_eq!(variants.len(), 11);
        assert_eq!(ladder(false).1.len(), 6);
    }

    #[test]
    fn identical_rankings_have_zero_lift_and_se() {
        let rr = [1.0, 0.5, 0.25, 1.0];
        assert_eq!(paired_lift_se(&rr, &rr), 0.0);
    }

    #[test]
    fn report_tsv_round_trips() {
        let report = LiftReport {
            meta: vec![("config_hash".into(), "abc".into())],
            rows: vec![LiftRow {
                comparison: "MLR + NCD_lc vs MLR".into(),
                variant: "MLR + NCD_lc".into(),
                baseline: "MLR".into(),
                baseline_mrr: 0.41234567891,
                variant_mrr: 0.4212,
                lift_pct: lift(0.4212, 0.41234567891).unwrap(),
                lift_se_pct: 0.3,
                impressions: 1200,
                seed: 7,
            }],
        };
        let back = LiftReport::from_tsv(&report.to_tsv()).unwrap();
        assert_eq!(back, report);
        let r = &back.rows[0];
        assert_eq!(lift(r.variant_mrr, r.baseline_mrr).unwrap(), r.lift_pct);
        assert!(report.render().contains("MLR + NCD_lc vs MLR"));
    }
}
