fn main() {
    std::process::exit(latdens::cli::run());
}
