use minilia::{ReadOutcome, Reader, Session, Step};
use std::io::Write;

fn main() {
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    let mut reader = Reader::new(stdin.lock());
    let mut session = Session::new();
    loop {
        match reader.read() {
            ReadOutcome::Form(form) => match session.command(&form) {
                Step::Reply(reply) => {
                    let _ = writeln!(stdout, "{reply}");
                    let _ = stdout.flush();
                }
                Step::Quiet => {}
                Step::Exit => break,
            },
            ReadOutcome::Eof => break,
            ReadOutcome::Error(message) => {
                let _ = writeln!(stdout, "(error \"{message}\")");
                let _ = stdout.flush();
                break;
            }
        }
    }
}
