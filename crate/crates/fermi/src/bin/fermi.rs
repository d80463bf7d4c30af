use clap::Parser;

fn main() {
    let cli = fermi::cli::Cli::parse();
    std::process::exit(fermi::cli::run(&cli));
}
