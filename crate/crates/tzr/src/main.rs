use clap::Parser;

/// Error chain without causes already spelled out by the message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if last.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
        last = text;
    }
    out
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = tzr::cli::run(tzr::cli::Cli::parse()) {
        eprintln!("error: {}", describe(&e));
        std::process::exit(1);
    }
}
