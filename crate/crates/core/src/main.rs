use clap::Parser;

fn main() {
    let cli = dcc_consensus::cli::Cli::parse();
    std::process::exit(dcc_consensus::cli::run(cli));
}
