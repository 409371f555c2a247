//! Domain types, session-log ingestion and the epoch split that keeps
//! sequence-encoder training data apart from ranker data.
//!
//! Log format, one record per line, tab separated:
//!
//! ```text
//! CLICK <session> <epoch> <ordinal> <item_id> <title>
//! IMPR  <session> <epoch> <ordinal> <query> <id|title|label|f1,...,f8;id|title|label|...>
//! ```
//!
//! Text fields escape `\` `TAB` `LF` `|` `;` as `\\` `\t` `\n` `\p` `\s`.
//! Labels are grades `0` (none), `1` (click), `2` (sale). Lines starting with
//! `#` carry metadata and are ignored by the parser.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Number of most recent clicks kept as context for an impression.
pub const CONTEXT_WINDOW: usize = 5;
/// Dimension of the synthetic base feature vector of a SERP item.
pub const BASE_DIM: usize = 8;
/// Longest accepted item title, in characters.
pub const MAX_TITLE_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Item {
    pub id: String,
    pub title: String,
}

impl Item {
    pub fn new(id: impl Into<String>, title: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let title = title.into();
        if title.trim().is_empty() {
            return Err(Error::InvalidArgument(format!("item {id}: empty title")));
        }
        if title.chars().count() > MAX_TITLE_CHARS {
            return Err(Error::InvalidArgument(format!(
                "item {id}: title longer than {MAX_TITLE_CHARS} characters"
            )));
        }
        Ok(Item { id, title })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickEvent {
    pub ordinal: u64,
    pub item: Item,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub text: String,
    pub session: String,
    pub ordinal: u64,
}

/// Graded engagement of a SERP item: sale > click > none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EngagementLabel {
    None = 0,
    Click = 1,
    Sale = 2,
}

impl EngagementLabel {
    pub fn grade(self) -> u8 {
        self as u8
    }

    pub fn from_grade(grade: u8) -> Option<Self> {
        match grade {
            0 => Some(EngagementLabel::None),
            1 => Some(EngagementLabel::Click),
            2 => Some(EngagementLabel::Sale),
            _ => None,
        }
    }

    /// Graded NDCG gain `2^grade - 1`.
    pub fn gain(self) -> f64 {
        ((1u32 << self.grade()) - 1) as f64
    }

    pub fn is_engaged(self) -> bool {
        self != EngagementLabel::None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerpItem {
    pub item: Item,
    pub base_features: Vec<f64>,
    pub label: EngagementLabel,
}

/// Up to [`CONTEXT_WINDOW`] prior clicks, most recent first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClickContext {
    clicks: Vec<ClickEvent>,
}

impl ClickContext {
    pub fn new(clicks: Vec<ClickEvent>) -> Result<Self> {
        if clicks.len() > CONTEXT_WINDOW {
            return Err(Error::InvalidArgument(format!(
                "click context holds {} clicks, at most {CONTEXT_WINDOW} allowed",
                clicks.len()
            )));
        }
        if clicks.windows(2).any(|w| w[0].ordinal <= w[1].ordinal) {
            return Err(Error::InvalidArgument(
                "click context must be ordered most-recent-first".into(),
            ));
        }
        Ok(ClickContext { clicks })
    }

    /// Builds the context from a chronologically ordered click history:
    /// the `CONTEXT_WINDOW` highest ordinals, most recent first.
    pub fn from_history(history: &[ClickEvent]) -> Self {
        let clicks = history
            .iter()
            .rev()
            .take(CONTEXT_WINDOW)
            .cloned()
            .collect();
        ClickContext { clicks }
    }

    pub fn clicks(&self) -> &[ClickEvent] {
        &self.clicks
    }

    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    /// Most recent click (`index 0`).
    pub fn last(&self) -> Option<&ClickEvent> {
        self.clicks.first()
    }

    /// Titles oldest to newest.
    pub fn titles_chronological(&self) -> impl Iterator<Item = &str> {
        self.clicks.iter().rev().map(|c| c.item.title.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerpImpression {
    pub session_id: String,
    pub epoch: u32,
    pub query: Query,
    pub items: Vec<SerpItem>,
    pub context: ClickContext,
}

impl SerpImpression {
    pub fn has_sale(&self) -> bool {
        self.items.iter().any(|i| i.label == EngagementLabel::Sale)
    }

    pub fn labels(&self) -> Vec<EngagementLabel> {
        self.items.iter().map(|i| i.label).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Click(ClickEvent),
    Impression(SerpImpression),
}

impl Event {
    pub fn ordinal(&self) -> u64 {
        match self {
            Event::Click(c) => c.ordinal,
            Event::Impression(i) => i.query.ordinal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub epoch: u32,
    pub events: Vec<Event>,
}

impl Session {
    pub fn impressions(&self) -> impl Iterator<Item = &SerpImpression> {
        self.events.iter().filter_map(|e| match e {
            Event::Impression(i) => Some(i),
            Event::Click(_) => None,
        })
    }

    pub fn clicks(&self) -> impl Iterator<Item = &ClickEvent> {
        self.events.iter().filter_map(|e| match e {
            Event::Click(c) => Some(c),
            Event::Impression(_) => None,
        })
    }

    /// Recomputes every impression's click context from the session's own
    /// click history. Events must already be sorted by ordinal.
    pub fn rebuild_contexts(&mut self) {
        let mut history: Vec<ClickEvent> = Vec::new();
        for event in &mut self.events {
            match event {
                Event::Click(c) => history.push(c.clone()),
                Event::Impression(imp) => imp.context = ClickContext::from_history(&history),
            }
        }
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '|' => out.push_str("\\p"),
            ';' => out.push_str("\\s"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(text: &str, line: usize) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('p') => out.push('|'),
            Some('s') => out.push(';'),
            other => {
                return Err(Error::parse(
                    line,
                    format!("bad escape sequence \\{}", other.map(String::from).unwrap_or_default()),
                ))
            }
        }
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(field: &str, what: &str, line: usize) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} {field:?}")))
}

fn parse_serp_item(raw: &str, line: usize) -> Result<SerpItem> {
    let parts: Vec<&str> = raw.split('|').collect();
    if parts.len() != 4 {
        return Err(Error::parse(
            line,
            format!("SERP item needs 4 '|' fields, found {}", parts.len()),
        ));
    }
    let id = unescape(parts[0], line)?;
    let title = unescape(parts[1], line)?;
    let item = Item::new(id, title).map_err(|e| Error::parse(line, e.to_string()))?;
    let grade: u8 = parse_num(parts[2], "label", line)?;
    let label = EngagementLabel::from_grade(grade)
        .ok_or_else(|| Error::parse(line, format!("label grade {grade} out of range")))?;
    let base_features = parts[3]
        .split(',')
        .map(|v| parse_num::<f64>(v, "base feature", line))
        .collect::<Result<Vec<_>>>()?;
    if base_features.iter().any(|v| !v.is_finite()) {
        return Err(Error::parse(line, "non-finite base feature"));
    }
    Ok(SerpItem {
        item,
        base_features,
        label,
    })
}

/// Parses a session log, groups records by session id (first appearance
/// order), sorts events by ordinal and rebuilds every click context.
pub fn parse_session_log(input: &str) -> Result<Vec<Session>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, (u32, Vec<(usize, Event)>)> = HashMap::new();

    for (idx, raw) in input.lines().enumerate() {
        let line = idx + 1;
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                line,
                format!("expected 6 tab-separated fields, found {}", fields.len()),
            ));
        }
        let session_id = unescape(fields[1], line)?;
        let epoch: u32 = parse_num(fields[2], "epoch", line)?;
        let ordinal: u64 = parse_num(fields[3], "ordinal", line)?;
        let event = match fields[0] {
            "CLICK" => {
                let id = unescape(fields[4], line)?;
                let title = unescape(fields[5], line)?;
                let item = Item::new(id, title).map_err(|e| Error::parse(line, e.to_string()))?;
                Event::Click(ClickEvent { ordinal, item })
            }
            "IMPR" => {
                let text = unescape(fields[4], line)?;
                if text.trim().is_empty() {
                    return Err(Error::parse(line, "empty query text"));
                }
                let items = fields[5]
                    .split(';')
                    .map(|raw| parse_serp_item(raw, line))
                    .collect::<Result<Vec<_>>>()?;
                if items.len() < 2 {
                    return Err(Error::parse(line, "impression needs at least 2 items"));
                }
                let dim = items[0].base_features.len();
                if items.iter().any(|i| i.base_features.len() != dim) {
                    return Err(Error::parse(line, "base feature dimension differs within impression"));
                }
                Event::Impression(SerpImpression {
                    session_id: session_id.clone(),
                    epoch,
                    query: Query {
                        text,
                        session: session_id.clone(),
                        ordinal,
                    },
                    items,
                    context: ClickContext::default(),
                })
            }
            other => return Err(Error::parse(line, format!("unknown record kind {other:?}"))),
        };

        let entry = by_id.entry(session_id.clone()).or_insert_with(|| {
            order.push(session_id.clone());
            (epoch, Vec::new())
        });
        if entry.0 != epoch {
            return Err(Error::parse(
                line,
                format!("session {session_id} changes epoch from {} to {epoch}", entry.0),
            ));
        }
        entry.1.push((line, event));
    }

    let mut sessions = Vec::with_capacity(order.len());
    for id in order {
        let (epoch, mut events) = by_id.remove(&id).expect("grouped above");
        events.sort_by_key(|(_, e)| e.ordinal());
        if let Some(w) = events.windows(2).find(|w| w[0].1.ordinal() == w[1].1.ordinal()) {
            return Err(Error::DuplicateEvent {
                session: id,
                ordinal: w[0].1.ordinal(),
            });
        }
        let mut session = Session {
            id,
            epoch,
            events: events.into_iter().map(|(_, e)| e).collect(),
        };
        session.rebuild_contexts();
        sessions.push(session);
    }
    Ok(sessions)
}

struct Fmt<'a>(&'a [Session]);

impl fmt::Display for Fmt<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for session in self.0 {
            let sid = escape(&session.id);
            for event in &session.events {
                match event {
                    Event::Click(c) => writeln!(
                        f,
                        "CLICK\t{sid}\t{}\t{}\t{}\t{}",
                        session.epoch,
                        c.ordinal,
                        escape(&c.item.id),
                        escape(&c.item.title)
                    )?,
                    Event::Impression(imp) => {
                        write!(
                            f,
                            "IMPR\t{sid}\t{}\t{}\t{}\t",
                            session.epoch,
                            imp.query.ordinal,
                            escape(&imp.query.text)
                        )?;
                        for (i, it) in imp.items.iter().enumerate() {
                            if i > 0 {
                                f.write_str(";")?;
                            }
                            write!(
                                f,
                                "{}|{}|{}|",
                                escape(&it.item.id),
                                escape(&it.item.title),
                                it.label.grade()
                            )?;
                            for (k, v) in it.base_features.iter().enumerate() {
                                if k > 0 {
                                    f.write_str(",")?;
                                }
                                write!(f, "{v}")?;
                            }
                        }
                        f.write_str("\n")?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Serializes sessions in the log format; `parse_session_log` inverts it.
pub fn write_session_log(sessions: &[Session]) -> String {
    Fmt(sessions).to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitWarning {
    EmptyEncoderSide,
    EmptyRankerSide,
}

#[derive(Debug, Clone)]
pub struct EpochSplit {
    /// Sessions with `epoch < boundary`.
    pub encoder_train: Vec<Session>,
    /// Sessions with `epoch >= boundary`.
    pub ranker_data: Vec<Session>,
    pub warning: Option<SplitWarning>,
}

/// Partitions sessions by time bucket so sequence encoders never see the
/// epochs the ranker is trained and evaluated on.
pub fn split_by_epoch(sessions: Vec<Session>, boundary: u32) -> EpochSplit {
    let (encoder_train, ranker_data): (Vec<_>, Vec<_>) =
        sessions.into_iter().partition(|s| s.epoch < boundary);
    let warning = if encoder_train.is_empty() {
        Some(SplitWarning::EmptyEncoderSide)
    } else if ranker_data.is_empty() {
        Some(SplitWarning::EmptyRankerSide)
    } else {
        None
    };
    EpochSplit {
        encoder_train,
        ranker_data,
        warning,
    }
}
