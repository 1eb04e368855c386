use super::{Command, CommandKind, Diagnostic, Modes, Param, Params, Program};

struct Word {
    letter: char,
    value: Option<String>,
}

/// Splits a code section into letter/number words. Returns `Err` with a
/// reason when a character cannot start a word.
fn words(code: &str) -> Result<Vec<Word>, String> {
    let mut out = Vec::new();
    let mut chars = code.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_ascii_whitespace() {
            chars.next();
            continue;
        }
        if !c.is_ascii_alphabetic() {
            return Err(format!("unexpected character {c:?}"));
        }
        chars.next();
        let mut num = String::new();
        while let Some(&d) = chars.peek() {
            if d.is_ascii_digit() || d == '.' || d == '-' || d == '+' {
                num.push(d);
                chars.next();
            } else {
                break;
            }
        }
        out.push(Word {
            letter: c.to_ascii_uppercase(),
            value: if num.is_empty() { None } else { Some(num) },
        });
    }
    Ok(out)
}

fn unknown(raw: &str, line_no: usize, malformed: bool) -> Command {
    let mut c = Command::new(CommandKind::Unknown);
    c.raw = Some(raw.to_string());
    c.malformed = malformed;
    c.source_line = line_no;
    c
}

fn parse_value(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses one physical line. Never fails: unsupported codes come back as
/// [`CommandKind::Unknown`], and malformed fields additionally set
/// [`Command::malformed`].
///
/// A blank line yields a `Comment` with no text; [`parse_program`] drops
/// those.
pub fn parse_line(text: &str, line_no: usize) -> Command {
    parse_line_diag(text, line_no).0
}

fn parse_line_diag(text: &str, line_no: usize) -> (Command, Option<String>) {
    let raw = text.trim();
    let (code, comment) = match raw.find(';') {
        Some(i) => (&raw[..i], Some(raw[i + 1..].trim().to_string())),
        None => (raw, None),
    };
    // Host checksum suffix.
    let code = match code.find('*') {
        Some(i) => &code[..i],
        None => code,
    };
    let code = code.trim();

    if code.is_empty() {
        if raw.is_empty() || comment.is_some() {
            let mut c = Command::new(CommandKind::Comment);
            c.comment = comment;
            c.source_line = line_no;
            return (c, None);
        }
        return (unknown(raw, line_no, false), None);
    }

    let mut ws = match words(code) {
        Ok(ws) => ws,
        Err(why) => return (unknown(raw, line_no, true), Some(why)),
    };
    // Host line number.
    if ws.first().is_some_and(|w| w.letter == 'N') {
        ws.remove(0);
    }
    let Some(first) = ws.first() else {
        return (unknown(raw, line_no, false), None);
    };
    if first.letter != 'G' && first.letter != 'M' {
        return (unknown(raw, line_no, false), None);
    }
    let number = match first.value.as_deref().map(str::parse::<u32>) {
        Some(Ok(n)) => n,
        _ => {
            return (
                unknown(raw, line_no, true),
                Some(format!("bad code number on {}", first.letter)),
            )
        }
    };
    let Some(kind) = CommandKind::from_code(first.letter, number) else {
        return (unknown(raw, line_no, false), None);
    };

    let mut params = Params::new();
    for w in &ws[1..] {
        let Some(p) = Param::from_letter(w.letter).filter(|&p| kind.accepts(p)) else {
            let why = format!(
                "parameter {} not valid for {}",
                w.letter,
                kind.code().unwrap_or("?")
            );
            return (unknown(raw, line_no, true), Some(why));
        };
        let v = match &w.value {
            Some(s) => match parse_value(s) {
                Some(v) => v,
                None => {
                    let why = format!("malformed number {s:?} for {}", w.letter);
                    return (unknown(raw, line_no, true), Some(why));
                }
            },
            None if kind.takes_flags() => 0.0,
            None => {
                let why = format!("missing value for {}", w.letter);
                return (unknown(raw, line_no, true), Some(why));
            }
        };
        if params.insert(p, v).is_some() {
            let why = format!("duplicate parameter {}", w.letter);
            return (unknown(raw, line_no, true), Some(why));
        }
    }

    let mut c = Command::new(kind);
    c.params = params;
    c.comment = comment;
    c.source_line = line_no;
    (c, None)
}

/// Parses a whole file. Accepts `\n` and `\r\n` line endings; blank lines are
/// skipped but still count toward `source_line`.
pub fn parse_program(text: &str) -> Program {
    let mut commands = Vec::new();
    let mut diagnostics = Vec::new();
    let mut positioning = Modes::default();
    if text.is_empty() {
        return Program::default();
    }
    for (i, line) in text.split('\n').enumerate() {
        let line_no = i + 1;
        let (cmd, diag) = parse_line_diag(line, line_no);
        if let Some(message) = diag {
            diagnostics.push(Diagnostic {
                line: line_no,
                message,
            });
        }
        if cmd.kind == CommandKind::Comment && cmd.comment.is_none() {
            continue;
        }
        positioning.update(cmd.kind);
        commands.push(cmd);
    }
    Program {
        commands,
        positioning,
        diagnostics,
    }
}

/// Like [`parse_program`] for arbitrary bytes; invalid UTF-8 is replaced.
pub fn parse_bytes(bytes: &[u8]) -> Program {
    parse_program(&String::from_utf8_lossy(bytes))
}
