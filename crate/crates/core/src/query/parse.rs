//! Keyword extraction and constraint parsing.
//!
//! A message is segmented by greedy longest match against the [`Lexicon`].
//! Numeric thresholds ("under 300 calories", "sodium below 500 mg") are read
//! first; the remaining mentions take their polarity from the nearest cue word
//! before them ("no", "reduce", "more", ...). A cue also carries across a
//! conjunction chain, so "reduce protein and salt" bounds both.

use serde::{Deserialize, Serialize};

use super::constraint::{
    Clarification, ClarificationKind, Comparator, Constraint, ConstraintBody, ConstraintSet, ConstraintStatus,
    EntityRef, Origin, Substitution,
};
use super::intent::is_bare_search;
use super::lexicon::{Cue, Lexicon, Sym, SUBJECTIVE_READINGS};
use super::text::{tokenize, Token};
use super::QueryError;
use crate::kg::{GraphSnapshot, NodeId, NodeKind, Unit};

/// Unknown words a cue may skip over while looking for its target.
const CUE_WINDOW: usize = 3;
/// Longest run of unknown words kept as one unresolved mention.
const MAX_UNKNOWN_RUN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalDirection {
    Reduce,
    Increase,
}

/// Bound used when a message names a direction but no number ("reduce salt").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NutrientDefault {
    pub nutrient: String,
    pub direction: GoalDirection,
    pub comparator: Comparator,
    pub value: f64,
    pub unit: Unit,
}

pub fn default_nutrient_defaults() -> Vec<NutrientDefault> {
    use Comparator::*;
    use GoalDirection::*;
    let d = |nutrient: &str, direction, comparator, value, unit| NutrientDefault {
        nutrient: nutrient.to_string(),
        direction,
        comparator,
        value,
        unit,
    };
    vec![
        d("protein", Reduce, Lt, 15.0, Unit::G),
        d("sodium", Reduce, Lt, 500.0, Unit::Mg),
        d("calories", Reduce, Lt, 500.0, Unit::Kcal),
        d("sugar", Reduce, Lt, 10.0, Unit::G),
        d("carbs", Reduce, Lt, 45.0, Unit::G),
        d("fat", Reduce, Lt, 15.0, Unit::G),
        d("protein", Increase, Ge, 20.0, Unit::G),
        d("fiber", Increase, Ge, 5.0, Unit::G),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub nutrient: Option<String>,
    pub cmp: Comparator,
    pub value: f64,
    pub unit: Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MentionKind {
    Entity { node: NodeId },
    Synonym { canonical: String, node: NodeId },
    Nutrient { attr: String },
    Flag { name: String },
    Class { name: String },
    Method { name: String },
    Subjective,
    Threshold { threshold: Threshold },
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub text: String,
    /// Byte offsets into the message.
    pub span: (usize, usize),
    #[serde(flatten)]
    pub kind: MentionKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Parsed {
    pub set: ConstraintSet,
    pub mentions: Vec<Mention>,
    /// Things noticed but not turned into constraints.
    pub notes: Vec<String>,
}

pub struct ParseContext<'a> {
    pub graph: &'a GraphSnapshot,
    pub lexicon: &'a Lexicon,
    pub defaults: &'a [NutrientDefault],
}

#[derive(Debug, Clone)]
enum SegKind {
    Sym(Sym),
    Number(f64),
    Unknown,
}

#[derive(Debug, Clone)]
struct Seg {
    first: usize,
    last: usize,
    kind: SegKind,
}

fn segment(tokens: &[Token], lexicon: &Lexicon) -> Vec<Seg> {
    let mut segs = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if let Some(v) = tokens[i].number {
            segs.push(Seg { first: i, last: i, kind: SegKind::Number(v) });
            i += 1;
            continue;
        }
        match lexicon.lookup(tokens, i) {
            Some((len, sym)) => {
                segs.push(Seg { first: i, last: i + len - 1, kind: SegKind::Sym(sym) });
                i += len;
            }
            None => {
                segs.push(Seg { first: i, last: i, kind: SegKind::Unknown });
                i += 1;
            }
        }
    }
    segs
}

fn span_of(tokens: &[Token], first: usize, last: usize) -> (usize, usize) {
    (tokens[first].span.0, tokens[last].span.1)
}

fn is_skippable(seg: &Seg) -> bool {
    matches!(seg.kind, SegKind::Sym(Sym::Stop) | SegKind::Sym(Sym::Of))
}

/// Reads `Comparator Number [Unit] [of] [Nutrient]`, falling back to a nutrient
/// just before the comparator. Returns the threshold and the consumed segment
/// range.
fn read_threshold(segs: &[Seg], j: usize) -> Option<(Threshold, usize, usize)> {
    let SegKind::Sym(Sym::Comparator(cmp)) = segs[j].kind else {
        return None;
    };
    let SegKind::Number(value) = segs.get(j + 1)?.kind else {
        return None;
    };
    let mut k = j + 2;
    let mut unit = None;
    let mut nutrient: Option<String> = None;
    match segs.get(k).map(|s| &s.kind) {
        Some(SegKind::Sym(Sym::Unit(u))) => {
            unit = Some(*u);
            k += 1;
        }
        Some(SegKind::Sym(Sym::Nutrient("calories"))) => {
            unit = Some(Unit::Kcal);
            nutrient = Some("calories".into());
            k += 1;
        }
        _ => {}
    }
    if nutrient.is_none() {
        let mut m = k;
        while segs.get(m).is_some_and(|s| matches!(s.kind, SegKind::Sym(Sym::Of))) {
            m += 1;
        }
        if let Some(SegKind::Sym(Sym::Nutrient(n))) = segs.get(m).map(|s| &s.kind) {
            nutrient = Some(n.to_string());
            k = m + 1;
        }
    }
    let mut first = j;
    if nutrient.is_none() {
        let mut b = j;
        while b > 0 && is_skippable(&segs[b - 1]) {
            b -= 1;
        }
        if b > 0 {
            if let SegKind::Sym(Sym::Nutrient(n)) = segs[b - 1].kind {
                nutrient = Some(n.to_string());
                first = b - 1;
            }
        }
    }
    if nutrient.is_none() && unit == Some(Unit::Kcal) {
        nutrient = Some("calories".into());
    }
    let unit = unit.unwrap_or(Unit::None);
    Some((Threshold { nutrient, cmp, value, unit }, first, k - 1))
}

/// Checks a threshold's unit against its nutrient, filling in the default unit.
fn bound_from_threshold(t: &Threshold) -> Result<ConstraintBody, String> {
    let Some(attr) = &t.nutrient else {
        return Err(format!(
            "threshold {} {} has no nutrient",
            t.cmp.symbol(),
            crate::kg::format_number(t.value)
        ));
    };
    let unit = match (attr.as_str(), t.unit) {
        ("calories", Unit::None | Unit::Kcal) => Unit::Kcal,
        ("calories", u) => return Err(format!("calories cannot be measured in {u}")),
        (_, Unit::None) => Unit::G,
        (a, Unit::Kcal) => return Err(format!("{a} cannot be measured in kcal")),
        (_, u) => u,
    };
    if !t.value.is_finite() || t.value < 0.0 {
        return Err(format!("threshold value {} out of range", t.value));
    }
    Ok(ConstraintBody::Bound {
        attr: attr.clone(),
        cmp: t.cmp,
        value: t.value,
        unit,
    })
}

/// Entity mentions and numeric thresholds in `message`, in order. Unknown
/// words yield nothing.
pub fn extract_keywords(message: &str, lexicon: &Lexicon) -> Vec<Mention> {
    let tokens = tokenize(message);
    let segs = segment(&tokens, lexicon);
    let (thresholds, consumed) = thresholds(&segs);
    let mut out = Vec::new();
    for (t, first, last) in thresholds {
        let span = span_of(&tokens, segs[first].first, segs[last].last);
        out.push(Mention {
            text: message[span.0..span.1].to_string(),
            span,
            kind: MentionKind::Threshold { threshold: t },
        });
    }
    for (idx, seg) in segs.iter().enumerate() {
        if consumed[idx] {
            continue;
        }
        if let Some(kind) = target_kind(seg) {
            let span = span_of(&tokens, seg.first, seg.last);
            out.push(Mention {
                text: message[span.0..span.1].to_string(),
                span,
                kind,
            });
        }
    }
    out.sort_by_key(|m| m.span);
    out
}

type FoundThreshold = (Threshold, usize, usize);

fn thresholds(segs: &[Seg]) -> (Vec<FoundThreshold>, Vec<bool>) {
    let mut consumed = vec![false; segs.len()];
    let mut found = Vec::new();
    let mut j = 0;
    while j < segs.len() {
        if let Some((t, first, last)) = read_threshold(segs, j) {
            if (first..=last).all(|x| !consumed[x] || x >= j) {
                for c in consumed.iter_mut().take(last + 1).skip(first) {
                    *c = true;
                }
                found.push((t, first, last));
                j = last + 1;
                continue;
            }
        }
        j += 1;
    }
    (found, consumed)
}

fn target_kind(seg: &Seg) -> Option<MentionKind> {
    let SegKind::Sym(sym) = &seg.kind else {
        return None;
    };
    Some(match sym {
        Sym::Entity(id) => MentionKind::Entity { node: id.clone() },
        Sym::Alias { canonical, node } => MentionKind::Synonym {
            canonical: canonical.clone(),
            node: node.clone(),
        },
        Sym::Nutrient(n) => MentionKind::Nutrient { attr: n.to_string() },
        Sym::Flag(f) => MentionKind::Flag { name: f.to_string() },
        Sym::Class(c) => MentionKind::Class { name: c.to_string() },
        Sym::Method(m) => MentionKind::Method { name: m.to_string() },
        Sym::Subjective => MentionKind::Subjective,
        _ => return None,
    })
}

struct Builder<'a> {
    ctx: &'a ParseContext<'a>,
    turn: u32,
    out: Parsed,
}

impl Builder<'_> {
    fn push(&mut self, body: ConstraintBody, source: &str, status: ConstraintStatus) {
        let sig = body.signature();
        if self.out.set.constraints.iter().any(|c| c.signature() == sig) {
            return;
        }
        self.out.set.constraints.push(
            Constraint::new(body, Origin::Text, self.turn)
                .with_source(source)
                .with_status(status),
        );
    }

    fn clarify(&mut self, term: &str, kind: ClarificationKind, candidates: Vec<String>) {
        if self.out.set.pending_clarifications.iter().any(|c| c.term == term) {
            return;
        }
        self.out.set.pending_clarifications.push(Clarification {
            term: term.to_string(),
            kind,
            candidates,
        });
    }

    fn nutrient_goal(&mut self, attr: &str, direction: GoalDirection, source: &str) {
        let found = self
            .ctx
            .defaults
            .iter()
            .find(|d| d.nutrient == attr && d.direction == direction)
            .cloned();
        match found {
            Some(d) => self.push(
                ConstraintBody::Bound {
                    attr: d.nutrient,
                    cmp: d.comparator,
                    value: d.value,
                    unit: d.unit,
                },
                source,
                ConstraintStatus::Active,
            ),
            None => self.out.notes.push(format!(
                "no default {} bound configured for {attr}",
                match direction {
                    GoalDirection::Reduce => "reduce",
                    GoalDirection::Increase => "increase",
                }
            )),
        }
    }

    /// Applies `cue` (or no cue) to one target mention.
    fn apply(&mut self, sym: &Sym, cue: Option<Cue>, source: &str) {
        let negative = matches!(cue, Some(Cue::Negative) | Some(Cue::Reduce));
        match sym {
            Sym::Entity(id) | Sym::Alias { node: id, .. } => {
                if let Sym::Alias { canonical, node } = sym {
                    let sub = Substitution {
                        alias: source.to_ascii_lowercase(),
                        canonical: canonical.clone(),
                        node: node.clone(),
                    };
                    if !self.out.set.substitutions.contains(&sub) {
                        self.out.set.substitutions.push(sub);
                    }
                }
                let is_recipe = self.ctx.graph.node(id.as_str()).is_some_and(|n| n.kind == NodeKind::Recipe);
                let entity = EntityRef::node(id.clone());
                if negative {
                    self.push(ConstraintBody::ExcludeEntity { entity }, source, ConstraintStatus::Active);
                } else if !is_recipe {
                    self.push(ConstraintBody::IncludeEntity { entity }, source, ConstraintStatus::Active);
                }
            }
            Sym::Nutrient(attr) => match cue {
                Some(Cue::Negative) | Some(Cue::Reduce) => self.nutrient_goal(attr, GoalDirection::Reduce, source),
                Some(Cue::Positive) | Some(Cue::Increase) => {
                    self.nutrient_goal(attr, GoalDirection::Increase, source)
                }
                None => {}
            },
            Sym::Flag(name) => self.push(
                ConstraintBody::Flag {
                    name: name.to_string(),
                    value: cue != Some(Cue::Negative),
                },
                source,
                ConstraintStatus::Active,
            ),
            Sym::Class(name) => {
                let entity = EntityRef::class(*name);
                let body = if negative {
                    ConstraintBody::ExcludeEntity { entity }
                } else {
                    ConstraintBody::IncludeEntity { entity }
                };
                self.push(body, source, ConstraintStatus::Active);
            }
            Sym::Method(name) => self.push(
                ConstraintBody::MethodFlag {
                    name: name.to_string(),
                    value: cue != Some(Cue::Negative),
                },
                source,
                ConstraintStatus::Active,
            ),
            Sym::Subjective => {
                let term = source.to_ascii_lowercase();
                self.push(
                    ConstraintBody::Subjective { term: term.clone() },
                    source,
                    ConstraintStatus::Pending,
                );
                self.clarify(
                    &term,
                    ClarificationKind::Subjective,
                    SUBJECTIVE_READINGS.iter().map(|s| s.to_string()).collect(),
                );
            }
            _ => {}
        }
    }

    fn unresolved(&mut self, text: &str, span: (usize, usize), cue: Cue) {
        let entity = EntityRef::Unresolved {
            text: text.to_ascii_lowercase(),
        };
        let body = match cue {
            Cue::Negative | Cue::Reduce => ConstraintBody::ExcludeEntity { entity },
            Cue::Positive | Cue::Increase => ConstraintBody::IncludeEntity { entity },
        };
        self.push(body, text, ConstraintStatus::Pending);
        self.clarify(&text.to_ascii_lowercase(), ClarificationKind::Synonym, Vec::new());
        self.out.mentions.push(Mention {
            text: text.to_string(),
            span,
            kind: MentionKind::Unknown,
        });
        self.out.mentions.sort_by_key(|m| m.span);
    }
}

/// Parses a constraint-bearing message into a constraint set. Constraints get
/// `turn` and origin `text`; unknown mentions under a cue become pending
/// constraints with a clarification entry.
pub fn parse_constraints(message: &str, ctx: &ParseContext<'_>, turn: u32) -> Result<Parsed, QueryError> {
    if message.trim().is_empty() {
        return Err(QueryError::EmptyMessage);
    }
    let tokens = tokenize(message);
    let segs = segment(&tokens, ctx.lexicon);
    let (found, consumed) = thresholds(&segs);
    let mut b = Builder {
        ctx,
        turn,
        out: Parsed::default(),
    };
    b.out.mentions = extract_keywords(message, ctx.lexicon);

    for (t, first, last) in &found {
        let span = span_of(&tokens, segs[*first].first, segs[*last].last);
        match bound_from_threshold(t) {
            Ok(body) => b.push(body, &message[span.0..span.1], ConstraintStatus::Active),
            Err(note) => b.out.notes.push(note),
        }
    }

    let text_of = |seg: &Seg| {
        let s = span_of(&tokens, seg.first, seg.last);
        &message[s.0..s.1]
    };

    // cue state: the cue waiting for a target, how many unknown words it has
    // skipped, and the first run of unknown words seen under it
    let mut cue: Option<Cue> = None;
    let mut skipped = 0usize;
    let mut run: Vec<usize> = Vec::new();
    let mut run_closed = false;
    // cue of the last target, reused after a conjunction
    let mut last_cue: Option<Cue> = None;

    let flush = |b: &mut Builder, cue: &mut Option<Cue>, run: &mut Vec<usize>, run_closed: &mut bool| {
        if let (Some(c), false) = (*cue, run.is_empty()) {
            let s = span_of(&tokens, segs[run[0]].first, segs[*run.last().unwrap()].last);
            b.unresolved(&message[s.0..s.1], s, c);
        }
        *cue = None;
        run.clear();
        *run_closed = false;
    };

    for (idx, seg) in segs.iter().enumerate() {
        if consumed[idx] {
            flush(&mut b, &mut cue, &mut run, &mut run_closed);
            last_cue = None;
            continue;
        }
        match &seg.kind {
            SegKind::Sym(Sym::Cue(c)) => {
                // "do not want": a negation absorbs the verb that follows it
                if cue == Some(Cue::Negative) && *c == Cue::Positive && run.is_empty() {
                    continue;
                }
                flush(&mut b, &mut cue, &mut run, &mut run_closed);
                cue = Some(*c);
                skipped = 0;
                last_cue = None;
            }
            SegKind::Sym(Sym::Conj) => {
                if cue.is_none() && last_cue.is_some() {
                    cue = last_cue;
                    skipped = 0;
                } else if !run.is_empty() {
                    run_closed = true;
                }
            }
            SegKind::Sym(Sym::Stop) | SegKind::Sym(Sym::Of) => {
                if !run.is_empty() {
                    run_closed = true;
                }
            }
            SegKind::Sym(Sym::Subjective) => {
                b.apply(&Sym::Subjective, None, text_of(seg));
            }
            SegKind::Sym(
                sym @ (Sym::Entity(_)
                | Sym::Alias { .. }
                | Sym::Nutrient(_)
                | Sym::Flag(_)
                | Sym::Class(_)
                | Sym::Method(_)),
            ) => {
                let applied = cue;
                b.apply(sym, applied, text_of(seg));
                run.clear();
                run_closed = false;
                cue = None;
                last_cue = applied;
            }
            SegKind::Unknown => {
                if cue.is_some() {
                    if run.is_empty() || (!run_closed && run.len() < MAX_UNKNOWN_RUN) {
                        run.push(idx);
                    } else {
                        run_closed = true;
                    }
                    skipped += 1;
                    if skipped > CUE_WINDOW {
                        flush(&mut b, &mut cue, &mut run, &mut run_closed);
                    }
                }
                last_cue = None;
            }
            _ => {
                flush(&mut b, &mut cue, &mut run, &mut run_closed);
                last_cue = None;
            }
        }
    }
    flush(&mut b, &mut cue, &mut run, &mut run_closed);

    let out = b.out;
    if out.set.constraints.is_empty()
        && out.set.pending_clarifications.is_empty()
        && out.mentions.is_empty()
        && !is_bare_search(message)
    {
        return Err(QueryError::NoParsableContent);
    }
    Ok(out)
}
