//! Word-level vocabulary, dialogue-act serialization and the rendering of
//! examples into decoder and classifier token sequences.

use std::collections::HashMap;
use std::path::Path;

use crate::corpus::{Dialogue, DialogueAct, DialogueTurn, GenerationMode, LmExample, Speaker};
use crate::corpus::{DialogueMode, TurnKind};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const USER: usize = 2;
pub const SYSTEM: usize = 3;
pub const END: usize = 4;
pub const CHIT_CHAT: usize = 5;
pub const TASK_ORIENTED: usize = 6;
pub const TRANSITION_TURN: usize = 7;
pub const NORMAL_TURN: usize = 8;
pub const TRANSITION: usize = 9;
pub const CLS: usize = 10;
pub const SEP: usize = 11;

pub const SPECIALS: [&str; 12] = [
    "[PAD]",
    "[UNK]",
    "[USER]",
    "[SYSTEM]",
    "[END]",
    "[CHIT-CHAT]",
    "[TASK-ORIENTED]",
    "[TRANSITION-TURN]",
    "[NORMAL-TURN]",
    "[TRANSITION]",
    "[CLS]",
    "[SEP]",
];

/// The tokens introduced for prompt control, re-initialized when the
/// discrete stage starts.
pub const PROMPT_TOKENS: [usize; 5] = [CHIT_CHAT, TASK_ORIENTED, TRANSITION_TURN, NORMAL_TURN, TRANSITION];

/// Longest classifier input, `[CLS]` included.
pub const CLASSIFIER_MAX_LEN: usize = 256;

pub fn ccto_token(mode: DialogueMode) -> usize {
    match mode {
        DialogueMode::Chitchat => CHIT_CHAT,
        DialogueMode::Taskoriented => TASK_ORIENTED,
    }
}

pub fn ttnt_token(kind: TurnKind) -> usize {
    match kind {
        TurnKind::Transition => TRANSITION_TURN,
        TurnKind::Normal => NORMAL_TURN,
    }
}

pub fn prompt_tokens(mode: GenerationMode) -> [usize; 2] {
    [ccto_token(mode.ccto), ttnt_token(mode.ttnt)]
}

pub fn is_control(id: usize) -> bool {
    id < SPECIALS.len()
}

/// Lowercases, splits on whitespace and makes every punctuation character
/// its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else if c.is_alphanumeric() {
            cur.push(c);
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(c.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Vocab(format!("duplicate token `{t}`")));
            }
        }
        for (i, s) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(Error::Vocab(format!("special token {s} must have id {i}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or("[UNK]")
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    /// Whitespace join of the token strings.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// JSON object `{token: id}` written in id order.
    pub fn to_json(&self) -> String {
        let mut s = String::from("{");
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&serde_json::to_string(t).expect("string serializes"));
            s.push(':');
            s.push_str(&i.to_string());
        }
        s.push('}');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: HashMap<String, usize> =
            serde_json::from_str(text).map_err(|e| Error::Vocab(e.to_string()))?;
        let mut tokens = vec![None; map.len()];
        for (t, i) in map {
            match tokens.get_mut(i) {
                Some(slot @ None) => *slot = Some(t),
                _ => return Err(Error::Vocab(format!("id {i} is out of range or repeated"))),
            }
        }
        Self::from_tokens(tokens.into_iter().map(|t| t.expect("every id filled")).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Counts words over utterances, transition sentences and serialized acts.
pub fn build_vocab(ds: &[Dialogue], min_freq: usize) -> Result<Vocab> {
    if min_freq == 0 {
        return Err(Error::InvalidArgument("min_freq must be at least 1".into()));
    }
    if ds.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut add = |text: &str| {
        for t in tokenize(text) {
            *counts.entry(t).or_default() += 1;
        }
    };
    for d in ds {
        for t in &d.turns {
            add(&t.text);
            add(&serialize_acts(&t.acts));
            if let Some(s) = &t.transition_sentence {
                add(s);
            }
        }
    }
    let mut words: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(w, c)| *c >= min_freq && !SPECIALS.contains(&w.as_str()))
        .collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let tokens = SPECIALS
        .iter()
        .map(|s| s.to_string())
        .chain(words.into_iter().map(|(w, _)| w))
        .collect();
    Vocab::from_tokens(tokens)
}

/// `domain{act(name=value, name=value)}`, acts joined by single spaces.
pub fn serialize_acts(acts: &[DialogueAct]) -> String {
    acts.iter()
        .map(|a| {
            let slots = a
                .slots
                .iter()
                .map(|(n, v)| format!("{n}={v}"))
                .collect::<Vec<_>>()
                .join(", ");
            format!("{}{{{}({})}}", a.domain, a.act, slots)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_acts(text: &str) -> Result<Vec<DialogueAct>> {
    let bad = |why: &str| Error::ActParse(format!("{why} in `{text}`"));
    let mut out = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        let open = rest.find('{').ok_or_else(|| bad("missing `{`"))?;
        let domain = &rest[..open];
        let after = &rest[open + 1..];
        let paren = after.find('(').ok_or_else(|| bad("missing `(`"))?;
        let act = &after[..paren];
        let close = after.find(")}").ok_or_else(|| bad("missing `)}`"))?;
        if close < paren {
            return Err(bad("misplaced `)}`"));
        }
        let body = &after[paren + 1..close];
        let mut slots = Vec::new();
        if !body.is_empty() {
            for pair in body.split(", ") {
                let (n, v) = pair.split_once('=').ok_or_else(|| bad("slot without `=`"))?;
                slots.push((n.to_string(), v.to_string()));
            }
        }
        if domain.is_empty() || act.is_empty() || domain.contains(char::is_whitespace) {
            return Err(bad("empty or malformed domain/act"));
        }
        out.push(DialogueAct {
            domain: domain.to_string(),
            act: act.to_string(),
            slots,
        });
        rest = after[close + 2..].trim_start();
    }
    Ok(out)
}

fn render_turn(turn: &DialogueTurn, vocab: &Vocab, out: &mut Vec<usize>) {
    out.push(match turn.speaker {
        Speaker::User => USER,
        Speaker::System => SYSTEM,
    });
    out.extend(vocab.encode(&turn.text));
    if !turn.acts.is_empty() {
        out.extend(vocab.encode(&serialize_acts(&turn.acts)));
    }
}

/// Renders a generation context: optional prompt pair, the context turns
/// and a closing `[SYSTEM]`. The oldest context tokens are dropped until the
/// sequence fits in `budget`; prompts and the closing tag are kept.
pub fn render_context(
    context: &[DialogueTurn],
    prompts: Option<GenerationMode>,
    vocab: &Vocab,
    budget: usize,
) -> Result<Vec<usize>> {
    let head: Vec<usize> = prompts.map(|m| prompt_tokens(m).to_vec()).unwrap_or_default();
    let mut body = Vec::new();
    for t in context {
        render_turn(t, vocab, &mut body);
    }
    let fixed = head.len() + 1;
    if fixed > budget {
        return Err(Error::Overlength {
            len: fixed,
            max: budget,
        });
    }
    let keep = body.len().min(budget - fixed);
    let mut out = head;
    out.extend_from_slice(&body[body.len() - keep..]);
    out.push(SYSTEM);
    Ok(out)
}

/// Response tokens, then `[TRANSITION]` plus the transition sentence when the
/// mode asks for one, then `[END]`.
pub fn render_target(turn: &DialogueTurn, ttnt: TurnKind, vocab: &Vocab) -> Vec<usize> {
    let mut out = vocab.encode(&turn.text);
    if ttnt == TurnKind::Transition {
        out.push(TRANSITION);
        if let Some(s) = &turn.transition_sentence {
            out.extend(vocab.encode(s));
        }
    }
    out.push(END);
    out
}

pub fn render_lm_input(
    ex: &LmExample,
    vocab: &Vocab,
    discrete_prompts: bool,
    max_len: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let target = render_target(&ex.target_turn, ex.generation_mode.ttnt, vocab);
    let budget = max_len.checked_sub(target.len()).ok_or(Error::Overlength {
        len: target.len(),
        max: max_len,
    })?;
    let prompts = discrete_prompts.then_some(ex.generation_mode);
    let input = render_context(&ex.context_turns, prompts, vocab, budget).map_err(|_| {
        Error::Overlength {
            len: target.len() + 1 + if discrete_prompts { 2 } else { 0 },
            max: max_len,
        }
    })?;
    Ok((input, target))
}

/// `[CLS]` then turn texts joined by `[SEP]`, front-truncated to
/// [`CLASSIFIER_MAX_LEN`] with `[CLS]` kept at position 0.
pub fn render_classifier_input(history: &[DialogueTurn], vocab: &Vocab) -> Vec<usize> {
    let mut body = Vec::new();
    for (i, t) in history.iter().enumerate() {
        if i > 0 {
            body.push(SEP);
        }
        body.extend(vocab.encode(&t.text));
    }
    let keep = body.len().min(CLASSIFIER_MAX_LEN - 1);
    let mut out = Vec::with_capacity(keep + 1);
    out.push(CLS);
    out.extend_from_slice(&body[body.len() - keep..]);
    out
}
