use clap::Parser;

fn main() {
    let cli = dielq_cli::Cli::parse();
    let code = dielq_cli::run(cli, &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}
