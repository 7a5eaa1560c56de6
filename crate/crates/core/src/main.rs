fn main() {
    let code = contract_forge::cli::run(std::env::args().collect());
    std::process::exit(code);
}
