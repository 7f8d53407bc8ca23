//! Terminal chat over any reader/writer pair.

use std::io::{BufRead, Write};

use initiative_core::corpus::{DialogueMode, TurnKind};

use crate::engine::{ModelKind, Models, Reply, Session};
use crate::error::{CliError, CliResult};

pub const HELP: &str = ":mode cc|to  :turn transition|normal  :history  :quit";

fn io(e: std::io::Error) -> CliError {
    CliError::Io {
        path: "<terminal>".into(),
        source: e,
    }
}

fn render(reply: &Reply) -> String {
    let mut s = String::from("system");
    if let Some(m) = reply.mode {
        let label = if reply.model == ModelKind::Continuous { "predicted " } else { "" };
        s.push_str(&format!(" [{label}{}, {}]", m.ccto.as_str(), m.ttnt.as_str()));
    }
    s.push_str(": ");
    s.push_str(reply.response());
    if let Some(t) = reply.transition_sentence() {
        s.push_str(&format!("\n  >> transition: {t}"));
    }
    if reply.generated.truncated {
        s.push_str("\n  (truncated)");
    }
    s
}

fn command(session: &mut Session, line: &str) -> Result<Option<String>, String> {
    let mut parts = line.split_whitespace();
    let name = parts.next().unwrap_or_default();
    let arg = parts.next().unwrap_or_default();
    let discrete_only = || {
        if session.model == ModelKind::Discrete {
            Ok(())
        } else {
            Err(format!("{name} applies to the discrete model, this session uses {}", session.model))
        }
    };
    match name {
        ":mode" => {
            discrete_only()?;
            session.manual.ccto = match arg {
                "cc" | "chitchat" => DialogueMode::Chitchat,
                "to" | "taskoriented" => DialogueMode::Taskoriented,
                _ => return Err("usage: :mode cc|to".into()),
            };
            Ok(Some(format!("mode set to {}", session.manual)))
        }
        ":turn" => {
            discrete_only()?;
            session.manual.ttnt = arg.parse::<TurnKind>().map_err(|_| "usage: :turn transition|normal".to_string())?;
            Ok(Some(format!("mode set to {}", session.manual)))
        }
        ":history" => Ok(Some(
            session
                .history
                .iter()
                .map(|t| format!("{:?}: {}", t.speaker, t.text))
                .collect::<Vec<_>>()
                .join("\n"),
        )),
        ":help" => Ok(Some(HELP.into())),
        _ => Err(format!("unknown command `{name}`; {HELP}")),
    }
}

/// Reads utterances until `:quit` or end of input. Generation errors are
/// printed and the session continues.
pub fn run_repl<R: BufRead, W: Write>(models: &Models, model: ModelKind, seed: u64, input: R, mut out: W) -> CliResult<Session> {
    if !models.has(model) {
        return Err(CliError::ModelUnavailable(model.to_string()));
    }
    let mut session = Session::new("repl", model, seed);
    writeln!(out, "chatting with the {model} model; {HELP}").map_err(io)?;
    let mut lines = input.lines();
    loop {
        write!(out, "> ").map_err(io)?;
        out.flush().map_err(io)?;
        let Some(line) = lines.next() else { break };
        let line = line.map_err(io)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == ":quit" {
            break;
        }
        let text = if line.starts_with(':') {
            match command(&mut session, line) {
                Ok(msg) => msg.unwrap_or_default(),
                Err(e) => format!("error: {e}"),
            }
        } else {
            match session.respond(models, line, None, None) {
                Ok((reply, turns)) => {
                    session.commit(turns, None);
                    render(&reply)
                }
                Err(e) => format!("error: {e}"),
            }
        };
        writeln!(out, "{text}").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    Ok(session)
}
