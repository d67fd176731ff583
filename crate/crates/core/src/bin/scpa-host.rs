fn main() {
    std::process::exit(scpa_host::cli::main());
}
