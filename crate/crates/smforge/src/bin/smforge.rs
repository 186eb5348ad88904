use clap::Parser;

fn main() {
    let cli = smforge::cli::Cli::parse();
    std::process::exit(smforge::cli::run(cli));
}
