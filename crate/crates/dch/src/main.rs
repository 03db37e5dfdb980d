use clap::Parser;

fn main() -> anyhow::Result<()> {
    dch::cli::run(dch::cli::Cli::parse())
}
