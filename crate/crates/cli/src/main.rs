use clap::Parser;

fn main() {
    let cli = aggrex::Cli::parse();
    if let Err(e) = aggrex::run(&cli) {
        eprintln!("aggrex: {e}");
        std::process::exit(e.exit_code());
    }
}
