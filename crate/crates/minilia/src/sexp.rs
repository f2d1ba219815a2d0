//! Minimal streaming s-expression reader. Reads one toplevel form at a
//! time so `(check-sat)` can be answered before the next command arrives.

use std::fmt;
use std::io::Read;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Sym(String),
    Num(i128),
    List(Vec<Sexp>),
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Sym(s) => write!(f, "{s}"),
            Sexp::Num(n) => write!(f, "{n}"),
            Sexp::List(items) => {
                write!(f, "(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Incremental reader over a byte stream.
pub struct Reader<R: Read> {
    input: std::io::Bytes<R>,
    pending: Option<u8>,
}

#[derive(Debug)]
pub enum ReadOutcome {
    Form(Sexp),
    Eof,
    Error(String),
}

impl<R: Read> Reader<R> {
    pub fn new(input: R) -> Self {
        Reader { input: input.bytes(), pending: None }
    }

    fn next_byte(&mut self) -> Option<u8> {
        if let Some(b) = self.pending.take() {
            return Some(b);
        }
        self.input.next().and_then(|r| r.ok())
    }

    fn unread(&mut self, b: u8) {
        self.pending = Some(b);
    }

    fn skip_trivia(&mut self) -> Option<u8> {
        loop {
            let b = self.next_byte()?;
            match b {
                b' ' | b'\t' | b'\r' | b'\n' => continue,
                b';' => {
                    // Comment to end of line.
                    loop {
                        match self.next_byte() {
                            Some(b'\n') | None => break,
                            _ => continue,
                        }
                    }
                }
                other => return Some(other),
            }
        }
    }

    /// Read the next toplevel form.
    pub fn read(&mut self) -> ReadOutcome {
        let Some(first) = self.skip_trivia() else {
            return ReadOutcome::Eof;
        };
        match self.read_form(first) {
            Ok(form) => ReadOutcome::Form(form),
            Err(e) => ReadOutcome::Error(e),
        }
    }

    fn read_form(&mut self, first: u8) -> Result<Sexp, String> {
        match first {
            b'(' => {
                let mut items = Vec::new();
                loop {
                    let Some(b) = self.skip_trivia() else {
                        return Err("unexpected end of input in list".into());
                    };
                    if b == b')' {
                        return Ok(Sexp::List(items));
                    }
                    items.push(self.read_form(b)?);
                }
            }
            b')' => Err("unexpected `)`".into()),
            b'|' => {
                // Quoted symbol.
                let mut name = Vec::new();
                loop {
                    match self.next_byte() {
                        Some(b'|') => break,
                        Some(b) => name.push(b),
                        None => return Err("unterminated quoted symbol".into()),
                    }
                }
                Ok(Sexp::Sym(String::from_utf8_lossy(&name).into_owned()))
            }
            b'"' => {
                // String literal; kept as a symbol since only set-info uses them.
                let mut text = Vec::new();
                loop {
                    match self.next_byte() {
                        Some(b'"') => break,
                        Some(b) => text.push(b),
                        None => return Err("unterminated string".into()),
                    }
                }
                Ok(Sexp::Sym(String::from_utf8_lossy(&text).into_owned()))
            }
            b => {
                let mut token = vec![b];
                loop {
                    match self.next_byte() {
                        Some(c) if c.is_ascii_whitespace() => break,
                        Some(c @ (b'(' | b')' | b';')) => {
                            self.unread(c);
                            break;
                        }
                        Some(c) => token.push(c),
                        None => break,
                    }
                }
                let text = String::from_utf8_lossy(&token).into_owned();
                if text.bytes().all(|c| c.is_ascii_digit()) {
                    text.parse::<i128>()
                        .map(Sexp::Num)
                        .map_err(|_| format!("numeral out of range: {text}"))
                } else {
                    Ok(Sexp::Sym(text))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read_all(text: &str) -> Vec<Sexp> {
        let mut reader = Reader::new(text.as_bytes());
        let mut out = Vec::new();
        loop {
            match reader.read() {
                ReadOutcome::Form(f) => out.push(f),
                ReadOutcome::Eof => return out,
                ReadOutcome::Error(e) => panic!("read error: {e}"),
            }
        }
    }

    #[test]
    fn reads_nested_lists() {
        let forms = read_all("(assert (and (> x 1) (< y (- 2))))\n(check-sat)");
        assert_eq!(forms.len(), 2);
        assert_eq!(forms[1], Sexp::List(vec![Sexp::Sym("check-sat".into())]));
    }

    #[test]
    fn comments_and_whitespace_are_skipped() {
        let forms = read_all("; header\n  (exit) ; trailing\n");
        assert_eq!(forms, vec![Sexp::List(vec![Sexp::Sym("exit".into())])]);
    }

    #[test]
    fn numerals_parse() {
        assert_eq!(read_all("42"), vec![Sexp::Num(42)]);
    }
}
