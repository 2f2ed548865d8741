use clap::Parser;

fn main() {
    let cli = hyperconv_kit::cli::Cli::parse();
    if let Err(e) = hyperconv_kit::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
