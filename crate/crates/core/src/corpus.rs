//! Dialogue data model, JSON-lines ingestion, augmentation checks,
//! statistics and training-example construction.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    System,
}

/// Chit-chat vs task-oriented; also the first (CCTO) control dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DialogueMode {
    Chitchat,
    Taskoriented,
}

impl DialogueMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DialogueMode::Chitchat => "chitchat",
            DialogueMode::Taskoriented => "taskoriented",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            DialogueMode::Chitchat
        } else {
            DialogueMode::Taskoriented
        }
    }
}

impl std::str::FromStr for DialogueMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chitchat" | "chit-chat" | "cc" => Ok(DialogueMode::Chitchat),
            "taskoriented" | "task-oriented" | "to" => Ok(DialogueMode::Taskoriented),
            other => Err(Error::InvalidArgument(format!("unknown dialogue mode `{other}`"))),
        }
    }
}

/// Transition turn vs normal turn; the second (TTNT) control dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnKind {
    Transition,
    Normal,
}

impl TurnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TurnKind::Transition => "transition",
            TurnKind::Normal => "normal",
        }
    }

    /// Class index used by the classifier head: normal = 0, transition = 1.
    pub fn index(self) -> usize {
        match self {
            TurnKind::Normal => 0,
            TurnKind::Transition => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 1 {
            TurnKind::Transition
        } else {
            TurnKind::Normal
        }
    }
}

impl std::str::FromStr for TurnKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transition" | "transition-turn" => Ok(TurnKind::Transition),
            "normal" | "normal-turn" => Ok(TurnKind::Normal),
            other => Err(Error::InvalidArgument(format!("unknown turn kind `{other}`"))),
        }
    }
}

/// The (CCTO, TTNT) control pair. All four combinations are meaningful.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GenerationMode {
    pub ccto: DialogueMode,
    pub ttnt: TurnKind,
}

impl GenerationMode {
    pub const ALL: [GenerationMode; 4] = [
        GenerationMode::new(DialogueMode::Chitchat, TurnKind::Transition),
        GenerationMode::new(DialogueMode::Chitchat, TurnKind::Normal),
        GenerationMode::new(DialogueMode::Taskoriented, TurnKind::Transition),
        GenerationMode::new(DialogueMode::Taskoriented, TurnKind::Normal),
    ];

    pub const fn new(ccto: DialogueMode, ttnt: TurnKind) -> Self {
        Self { ccto, ttnt }
    }
}

impl fmt::Display for GenerationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.ccto.as_str(), self.ttnt.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DialogueKind {
    Prepended,
    Appended,
    Plain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Valid,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Valid => "valid",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "valid" => Ok(Split::Valid),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueAct {
    pub domain: String,
    pub act: String,
    pub slots: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueTurn {
    pub speaker: Speaker,
    pub text: String,
    pub mode: DialogueMode,
    pub acts: Vec<DialogueAct>,
    pub is_transition_turn: bool,
    pub transition_sentence: Option<String>,
}

impl DialogueTurn {
    pub fn user(text: impl Into<String>, mode: DialogueMode) -> Self {
        Self {
            speaker: Speaker::User,
            text: text.into(),
            mode,
            acts: Vec::new(),
            is_transition_turn: false,
            transition_sentence: None,
        }
    }

    pub fn system(text: impl Into<String>, mode: DialogueMode) -> Self {
        Self {
            speaker: Speaker::System,
            ..Self::user(text, mode)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dialogue {
    pub id: String,
    pub kind: DialogueKind,
    pub split: Split,
    pub domains: BTreeSet<String>,
    pub turns: Vec<DialogueTurn>,
}

impl Dialogue {
    pub fn transition_turn(&self) -> Option<usize> {
        self.turns.iter().position(|t| t.is_transition_turn)
    }

    pub fn leading_mode(&self) -> Option<DialogueMode> {
        self.turns.first().map(|t| t.mode)
    }

    /// Index of the last system turn that still carries the leading mode.
    pub fn last_leading_system_turn(&self) -> Option<usize> {
        let lead = self.leading_mode()?;
        let switch = self
            .turns
            .iter()
            .position(|t| t.mode != lead)
            .unwrap_or(self.turns.len());
        self.turns[..switch]
            .iter()
            .rposition(|t| t.speaker == Speaker::System)
    }

    /// Checks every structural invariant of the data model.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |field: &str, reason: String| Error::Schema {
            dialogue: self.id.clone(),
            field: field.to_string(),
            reason,
        };
        if self.id.is_empty() {
            return Err(fail("id", "empty id".into()));
        }
        if self.turns.is_empty() {
            return Err(fail("turns", "dialogue has no turns".into()));
        }
        for (i, t) in self.turns.iter().enumerate() {
            let want = if i % 2 == 0 { Speaker::User } else { Speaker::System };
            if t.speaker != want {
                return Err(fail(
                    &format!("turns[{i}].speaker"),
                    "turns must alternate user/system starting with user".into(),
                ));
            }
            if t.text.trim().is_empty() {
                return Err(fail(&format!("turns[{i}].text"), "empty utterance".into()));
            }
            if t.mode == DialogueMode::Chitchat && !t.acts.is_empty() {
                return Err(fail(
                    &format!("turns[{i}].acts"),
                    "chit-chat turns carry no dialogue acts".into(),
                ));
            }
            for (j, a) in t.acts.iter().enumerate() {
                if a.domain.is_empty() || a.act.is_empty() {
                    return Err(fail(
                        &format!("turns[{i}].acts[{j}]"),
                        "domain and act must be non-empty".into(),
                    ));
                }
                let mut seen = HashSet::new();
                for (name, _) in &a.slots {
                    if !seen.insert(name) {
                        return Err(fail(
                            &format!("turns[{i}].acts[{j}].slots"),
                            format!("duplicate slot name `{name}`"),
                        ));
                    }
                }
            }
            if t.is_transition_turn && t.speaker != Speaker::System {
                return Err(fail(
                    &format!("turns[{i}].is_transition_turn"),
                    "only system turns can be transition turns".into(),
                ));
            }
            if t.is_transition_turn != t.transition_sentence.is_some() {
                return Err(fail(
                    &format!("turns[{i}].transition_sentence"),
                    "present iff the turn is a system transition turn".into(),
                ));
            }
        }
        let switches = self
            .turns
            .windows(2)
            .filter(|w| w[0].mode != w[1].mode)
            .count();
        if switches > 1 {
            return Err(fail(
                "turns.mode",
                format!("dialogue mode switches {switches} times; at most once is allowed"),
            ));
        }
        let first = self.turns[0].mode;
        let last = self.turns[self.turns.len() - 1].mode;
        let ok = match self.kind {
            DialogueKind::Prepended => {
                first == DialogueMode::Chitchat && last == DialogueMode::Taskoriented
            }
            DialogueKind::Appended => {
                first == DialogueMode::Taskoriented && last == DialogueMode::Chitchat
            }
            DialogueKind::Plain => switches == 0,
        };
        if !ok {
            return Err(fail(
                "kind",
                format!("mode sequence does not match kind {:?}", self.kind),
            ));
        }
        let transitions = self.turns.iter().filter(|t| t.is_transition_turn).count();
        if transitions > 1 {
            return Err(fail(
                "turns.is_transition_turn",
                format!("{transitions} transition turns; at most one is allowed"),
            ));
        }
        Ok(())
    }
}

/// Parses a JSON-lines corpus and checks every invariant.
pub fn parse_corpus(text: &str) -> Result<Vec<Dialogue>> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: Dialogue =
            serde_json::from_str(line).map_err(|source| Error::Json { line: i + 1, source })?;
        d.check_invariants()?;
        if !ids.insert(d.id.clone()) {
            return Err(Error::Schema {
                dialogue: d.id,
                field: "id".into(),
                reason: "duplicate dialogue id".into(),
            });
        }
        out.push(d);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Dialogue>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text)
}

pub fn corpus_to_string(ds: &[Dialogue]) -> String {
    let mut out = String::new();
    for d in ds {
        out.push_str(&serde_json::to_string(d).expect("dialogue serializes"));
        out.push('\n');
    }
    out
}

pub fn save_corpus(path: impl AsRef<Path>, ds: &[Dialogue]) -> Result<()> {
    let path = path.as_ref();
    let io = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(corpus_to_string(ds).as_bytes()).map_err(io)?;
    Ok(())
}

pub const DEFAULT_BLOCKLIST: [&str; 3] = [
    "anything else",
    "what else can i do",
    "do you need some recommendations",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    /// An augmented dialogue without its transition turn.
    MissingTransition { dialogue: String },
    /// The transition turn is not the last system turn of the leading mode.
    MisplacedTransition {
        dialogue: String,
        found: usize,
        expected: Option<usize>,
    },
    EmptyTransitionSentence { dialogue: String, turn: usize },
    GenericTransitionSentence {
        dialogue: String,
        turn: usize,
        phrase: String,
    },
    /// No slot value of the first task-oriented user turn shows up in the
    /// prepended chit-chat.
    NoSlotOverlap { dialogue: String },
}

pub fn validate_augmentation(d: &Dialogue) -> Vec<Violation> {
    validate_augmentation_with(d, &DEFAULT_BLOCKLIST)
}

pub fn validate_augmentation_with<S: AsRef<str>>(d: &Dialogue, blocklist: &[S]) -> Vec<Violation> {
    let mut out = Vec::new();
    let id = || d.id.clone();
    if d.kind != DialogueKind::Plain {
        match d.transition_turn() {
            None => out.push(Violation::MissingTransition { dialogue: id() }),
            Some(found) => {
                let expected = d.last_leading_system_turn();
                if expected != Some(found) {
                    out.push(Violation::MisplacedTransition {
                        dialogue: id(),
                        found,
                        expected,
                    });
                }
            }
        }
    }
    for (i, t) in d.turns.iter().enumerate() {
        let Some(sentence) = &t.transition_sentence else {
            continue;
        };
        if sentence.trim().is_empty() {
            out.push(Violation::EmptyTransitionSentence {
                dialogue: id(),
                turn: i,
            });
            continue;
        }
        let lower = sentence.to_lowercase();
        if let Some(p) = blocklist
            .iter()
            .map(AsRef::as_ref)
            .find(|p| lower.contains(&p.to_lowercase()))
        {
            out.push(Violation::GenericTransitionSentence {
                dialogue: id(),
                turn: i,
                phrase: p.to_string(),
            });
        }
    }
    if d.kind == DialogueKind::Prepended {
        let first_to_user = d
            .turns
            .iter()
            .find(|t| t.mode == DialogueMode::Taskoriented && t.speaker == Speaker::User);
        let values: Vec<String> = first_to_user
            .map(|t| {
                t.acts
                    .iter()
                    .flat_map(|a| a.slots.iter().map(|(_, v)| v.to_lowercase()))
                    .filter(|v| !v.is_empty())
                    .collect()
            })
            .unwrap_or_default();
        let chit: Vec<String> = d
            .turns
            .iter()
            .filter(|t| t.mode == DialogueMode::Chitchat)
            .map(|t| t.text.to_lowercase())
            .collect();
        let overlap = values.iter().any(|v| chit.iter().any(|c| c.contains(v)));
        if !overlap {
            out.push(Violation::NoSlotOverlap { dialogue: id() });
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub splits: BTreeMap<String, usize>,
    pub kinds: BTreeMap<String, usize>,
    pub domains: BTreeMap<String, usize>,
    /// Task-oriented system turns in the training split.
    pub task_samples: usize,
    /// Chit-chat system turns in the training split.
    pub chitchat_samples: usize,
    /// Classifier examples in the training split.
    pub classifier_samples: usize,
}

pub fn corpus_stats(ds: &[Dialogue]) -> CorpusStats {
    let mut s = CorpusStats {
        total: ds.len(),
        ..Default::default()
    };
    for split in ["train", "test", "valid"] {
        s.splits.insert(split.to_string(), 0);
    }
    for kind in ["prepended", "appended", "plain"] {
        s.kinds.insert(kind.to_string(), 0);
    }
    for d in ds {
        *s.splits.entry(d.split.as_str().to_string()).or_default() += 1;
        let kind = match d.kind {
            DialogueKind::Prepended => "prepended",
            DialogueKind::Appended => "appended",
            DialogueKind::Plain => "plain",
        };
        *s.kinds.entry(kind.to_string()).or_default() += 1;
        for dom in &d.domains {
            *s.domains.entry(dom.clone()).or_default() += 1;
        }
        if d.split == Split::Train {
            for t in d.turns.iter().filter(|t| t.speaker == Speaker::System) {
                match t.mode {
                    DialogueMode::Taskoriented => s.task_samples += 1,
                    DialogueMode::Chitchat => s.chitchat_samples += 1,
                }
                s.classifier_samples += 1;
            }
        }
    }
    s
}

/// Which training set an [`LmExample`] belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// One preceding user utterance, every system turn, no transitions.
    Unified,
    /// Transition turns only, each emitted with both TTNT values.
    Prompted,
    /// Every system turn of augmented dialogues with its gold mode.
    Bridge,
}

/// Maximum number of context turns in the prompted and bridge stages.
pub const PROMPT_WINDOW: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LmExample {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub context_turns: Vec<DialogueTurn>,
    pub target_turn: DialogueTurn,
    pub generation_mode: GenerationMode,
    pub stage: Stage,
}

fn window(turns: &[DialogueTurn], end: usize, size: usize) -> Vec<DialogueTurn> {
    turns[end.saturating_sub(size)..end].to_vec()
}

pub fn make_lm_examples(ds: &[Dialogue], stage: Stage) -> Result<Vec<LmExample>> {
    let mut out = Vec::new();
    for d in ds {
        for (i, t) in d.turns.iter().enumerate() {
            if t.speaker != Speaker::System {
                continue;
            }
            let base = |context, ttnt, stage| LmExample {
                dialogue_id: d.id.clone(),
                turn_index: i,
                context_turns: context,
                target_turn: t.clone(),
                generation_mode: GenerationMode::new(t.mode, ttnt),
                stage,
            };
            match stage {
                Stage::Unified => {
                    out.push(base(window(&d.turns, i, 1), TurnKind::Normal, stage));
                }
                Stage::Prompted if t.is_transition_turn => {
                    let ctx = window(&d.turns, i, PROMPT_WINDOW);
                    out.push(base(ctx.clone(), TurnKind::Transition, stage));
                    out.push(base(ctx, TurnKind::Normal, stage));
                }
                Stage::Prompted => {}
                Stage::Bridge if d.kind != DialogueKind::Plain => {
                    let ttnt = if t.is_transition_turn {
                        TurnKind::Transition
                    } else {
                        TurnKind::Normal
                    };
                    out.push(base(window(&d.turns, i, PROMPT_WINDOW), ttnt, stage));
                }
                Stage::Bridge => {}
            }
        }
    }
    if stage == Stage::Prompted && out.is_empty() {
        return Err(Error::NoTransitionTurns);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassifierExample {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub history: Vec<DialogueTurn>,
    pub ccto: DialogueMode,
    pub ttnt: TurnKind,
}

pub fn make_classifier_examples(ds: &[Dialogue]) -> Vec<ClassifierExample> {
    let mut out = Vec::new();
    for d in ds {
        for (i, t) in d.turns.iter().enumerate() {
            if t.speaker == Speaker::System {
                out.push(ClassifierExample {
                    dialogue_id: d.id.clone(),
                    turn_index: i,
                    history: d.turns[..i].to_vec(),
                    ccto: t.mode,
                    ttnt: if t.is_transition_turn {
                        TurnKind::Transition
                    } else {
                        TurnKind::Normal
                    },
                });
            }
        }
    }
    out
}

pub fn split_of(ds: &[Dialogue], split: Split) -> Vec<Dialogue> {
    ds.iter().filter(|d| d.split == split).cloned().collect()
}
