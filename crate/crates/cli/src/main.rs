use clap::Parser;

fn main() {
    let cli = heatbath_cli::Cli::parse();
    std::process::exit(heatbath_cli::run(&cli));
}
