fn main() {
    std::process::exit(tubelab::cli::run());
}
