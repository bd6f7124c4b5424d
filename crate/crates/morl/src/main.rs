use clap::Parser;

fn main() {
    let cli = morl::cli::Cli::parse();
    if let Err(e) = morl::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
