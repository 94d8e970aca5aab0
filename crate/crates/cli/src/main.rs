use clap::Parser;

fn main() {
    let cli = mrmod_cli::Cli::parse();
    if let Err(e) = mrmod_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
