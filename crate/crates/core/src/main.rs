use clap::Parser;

fn main() {
    let cli = mttv::cli::Cli::parse();
    if let Err(e) = mttv::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
