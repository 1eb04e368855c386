use super::{Command, CommandKind, Program};

/// Shortest decimal text that parses back to `v`; `-0` prints as `0`.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    format!("{v}")
}

/// Canonical text for one command, without a line terminator.
pub fn serialize_command(c: &Command) -> String {
    match c.kind {
        CommandKind::Unknown => c.raw.clone().unwrap_or_default(),
        CommandKind::Comment => match c.comment.as_deref() {
            Some("") | None => ";".to_string(),
            Some(text) => format!("; {text}"),
        },
        kind => {
            let mut s = kind.code().unwrap_or_default().to_string();
            for (p, v) in &c.params {
                s.push(' ');
                s.push(p.letter());
                if !(kind.takes_flags() && *v == 0.0) {
                    s.push_str(&format_number(*v));
                }
            }
            match c.comment.as_deref() {
                Some("") => s.push_str(" ;"),
                Some(text) => {
                    s.push_str(" ; ");
                    s.push_str(text);
                }
                None => {}
            }
            s
        }
    }
}

/// One line per command, each terminated by `\n`.
pub fn serialize(program: &Program) -> String {
    let mut out = String::new();
    for c in &program.commands {
        out.push_str(&serialize_command(c));
        out.push('\n');
    }
    out
}
