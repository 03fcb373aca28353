fn main() {
    std::process::exit(privcurate::cli::main());
}
