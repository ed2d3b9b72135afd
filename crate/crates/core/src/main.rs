fn main() {
    std::process::exit(drfcuc::cli::run());
}
