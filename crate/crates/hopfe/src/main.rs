fn main() {
    std::process::exit(hopfe::cli::run());
}
