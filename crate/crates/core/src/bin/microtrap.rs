fn main() {
    std::process::exit(microtrap::cli::main());
}
