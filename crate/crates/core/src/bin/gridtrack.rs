fn main() {
    std::process::exit(gridtrack::cli::main());
}
