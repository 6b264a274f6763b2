//! Tokenization and fixed-size (left, center, right) context windows.
//!
//! Every keyphrase is represented by the `left` tokens preceding it, the
//! first `center` tokens of the phrase itself and the `right` tokens
//! following it. Contexts shorter than their budget are filled with the
//! reserved [`Slot::Pad`] marker: at the outer edge of the left context and
//! at the tail of the center and right contexts, so padding never sits
//! between two real tokens.

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, KeyphraseInstance};

/// A token with its code-point offsets in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// One window slot: a real token or the padding marker.
///
/// Serializes as the token string, with `null` standing for padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Option<String>", into = "Option<String>")]
pub enum Slot {
    Pad,
    Word(String),
}

impl Slot {
    pub fn word(s: impl Into<String>) -> Slot {
        Slot::Word(s.into())
    }

    pub fn is_pad(&self) -> bool {
        matches!(self, Slot::Pad)
    }

    pub fn as_word(&self) -> Option<&str> {
        match self {
            Slot::Pad => None,
            Slot::Word(w) => Some(w),
        }
    }
}

impl From<Option<String>> for Slot {
    fn from(v: Option<String>) -> Slot {
        match v {
            None => Slot::Pad,
            Some(w) => Slot::Word(w),
        }
    }
}

impl From<Slot> for Option<String> {
    fn from(s: Slot) -> Option<String> {
        match s {
            Slot::Pad => None,
            Slot::Word(w) => Some(w),
        }
    }
}

/// Fixed-size token triple around one keyphrase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub left: Vec<Slot>,
    pub center: Vec<Slot>,
    pub right: Vec<Slot>,
}

impl ContextWindow {
    pub fn new(left: Vec<Slot>, center: Vec<Slot>, right: Vec<Slot>) -> Self {
        ContextWindow {
            left,
            center,
            right,
        }
    }

    /// (ℓ, c, r) slot counts.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.left.len(), self.center.len(), self.right.len())
    }

    pub fn len(&self) -> usize {
        self.left.len() + self.center.len() + self.right.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All slots in layout order: left, center, right.
    pub fn slots(&self) -> impl Iterator<Item = &Slot> {
        self.left
            .iter()
            .chain(self.center.iter())
            .chain(self.right.iter())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WindowError {
    #[error("instance {instance_id:?} does not belong to document {doc_id:?}")]
    InstanceNotInDocument {
        doc_id: String,
        instance_id: String,
    },
}

fn is_detachable(c: char) -> bool {
    c.is_ascii_punctuation()
}

/// Split on whitespace, then detach leading and trailing ASCII punctuation
/// characters as separate tokens. Internal punctuation stays attached, so
/// `copper-zinc` and `e.g` remain single tokens. Offsets are code points.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        push_chunk_tokens(&chars, start, i, &mut tokens);
    }
    tokens
}

fn push_chunk_tokens(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    let mut core_start = start;
    while core_start < end && is_detachable(chars[core_start]) {
        core_start += 1;
    }
    if core_start == end {
        // chunk is punctuation only: one token per character
        for p in start..end {
            out.push(tok(chars, p, p + 1));
        }
        return;
    }
    let mut core_end = end;
    while core_end > core_start && is_detachable(chars[core_end - 1]) {
        core_end -= 1;
    }
    for p in start..core_start {
        out.push(tok(chars, p, p + 1));
    }
    out.push(tok(chars, core_start, core_end));
    for p in core_end..end {
        out.push(tok(chars, p, p + 1));
    }
}

fn tok(chars: &[char], start: usize, end: usize) -> Token {
    Token {
        text: chars[start..end].iter().collect(),
        start,
        end,
    }
}

/// Extract the (ℓ, c, r) window around `inst` in `doc`.
///
/// A token belongs to the center when its character interval intersects the
/// instance span `[start, end)`; this covers spans that begin mid-token.
/// Keyphrases longer than `c` tokens are truncated to their first `c`.
pub fn extract_window(
    doc: &Document,
    inst: &KeyphraseInstance,
    left: usize,
    center: usize,
    right: usize,
) -> Result<ContextWindow, WindowError> {
    assert!(
        left >= 1 && center >= 1 && right >= 1,
        "window sizes must be at least 1"
    );
    let belongs = doc
        .instances
        .iter()
        .any(|k| k.id == inst.id && k.start == inst.start && k.end == inst.end);
    if !belongs {
        return Err(WindowError::InstanceNotInDocument {
            doc_id: doc.doc_id.clone(),
            instance_id: inst.id.clone(),
        });
    }

    let tokens = tokenize(&doc.text);
    let overlaps =
        |t: &Token| t.start < inst.end && t.end > inst.start;
    let first = tokens.iter().position(overlaps);

    let (before, within, after): (&[Token], &[Token], &[Token]) = match first {
        Some(first) => {
            let last = tokens.iter().rposition(overlaps).unwrap();
            (&tokens[..first], &tokens[first..=last], &tokens[last + 1..])
        }
        None => {
            // Span covers no token (e.g. pure whitespace): split at the span.
            let split = tokens.iter().position(|t| t.end > inst.start).unwrap_or(tokens.len());
            (&tokens[..split], &tokens[..0], &tokens[split..])
        }
    };

    let mut left_slots = vec![Slot::Pad; left];
    let take = before.len().min(left);
    for (slot, t) in left_slots[left - take..]
        .iter_mut()
        .zip(&before[before.len() - take..])
    {
        *slot = Slot::word(&t.text);
    }

    let mut center_slots = vec![Slot::Pad; center];
    for (slot, t) in center_slots.iter_mut().zip(within.iter().take(center)) {
        *slot = Slot::word(&t.text);
    }

    let mut right_slots = vec![Slot::Pad; right];
    for (slot, t) in right_slots.iter_mut().zip(after.iter().take(right)) {
        *slot = Slot::word(&t.text);
    }

    Ok(ContextWindow::new(left_slots, center_slots, right_slots))
}
