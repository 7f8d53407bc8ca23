mod common;

use initiative_cli::engine::{ModelKind, Models};
use initiative_cli::repl::run_repl;
use initiative_core::corpus::{DialogueMode, Speaker, TurnKind};

fn chat(model: ModelKind, script: &str) -> (String, initiative_cli::engine::Session) {
    let cfg = common::trained();
    let models = Models::load(cfg, &[model]).unwrap();
    let mut out = Vec::new();
    let s = run_repl(&models, model, 3, script.as_bytes(), &mut out).unwrap();
    (String::from_utf8(out).unwrap(), s)
}

#[test]
fn empty_lines_reprompt_without_generating() {
    let (out, s) = chat(ModelKind::Unified, "\n   \n\n:quit\n");
    assert!(s.history.is_empty());
    assert_eq!(out.matches("> ").count(), 4);
    assert!(!out.contains("system"));
}

#[test]
fn each_utterance_appends_a_user_and_system_turn() {
    let (out, s) = chat(ModelKind::Unified, "hello there\ni need a train\n");
    assert_eq!(s.history.len(), 4);
    assert_eq!(s.history[0].speaker, Speaker::User);
    assert_eq!(s.history[1].speaker, Speaker::System);
    assert_eq!(s.history[2].text, "i need a train");
    assert_eq!(out.matches("system: ").count(), 2);
}

#[test]
fn discrete_mode_commands_set_the_prompt_pair() {
    let (out, s) = chat(ModelKind::Discrete, ":mode to\n:turn transition\nwhere is the police station ?\n:quit\nnever read\n");
    assert_eq!(s.manual.ccto, DialogueMode::Taskoriented);
    assert_eq!(s.manual.ttnt, TurnKind::Transition);
    assert!(out.contains("system [taskoriented, transition]: "), "{out}");
    assert_eq!(s.history.len(), 2);
    assert_eq!(s.history[1].mode, DialogueMode::Taskoriented);
}

#[test]
fn bad_commands_report_and_continue() {
    let (out, s) = chat(ModelKind::Unified, ":mode cc\n:what\nhello\n");
    assert!(out.contains("error: :mode applies to the discrete model"));
    assert!(out.contains("error: unknown command"));
    assert_eq!(s.history.len(), 2);
    let (out, _) = chat(ModelKind::Discrete, ":mode maybe\n:turn sideways\n");
    assert_eq!(out.matches("error: usage").count(), 2);
}

#[test]
fn continuous_mode_shows_the_prediction() {
    let (out, s) = chat(ModelKind::Continuous, "hi\ni am looking for a hotel\n");
    assert_eq!(out.matches("system [predicted ").count(), 2, "{out}");
    assert_eq!(s.history.len(), 4);
}

#[test]
fn missing_model_is_refused() {
    let cfg = common::trained();
    let models = Models::load(cfg, &[ModelKind::Unified]).unwrap();
    assert!(run_repl(&models, ModelKind::Discrete, 0, "".as_bytes(), Vec::new()).is_err());
}
