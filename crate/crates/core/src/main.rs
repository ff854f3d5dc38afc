fn main() {
    std::process::exit(protoglyph::cli::run(std::env::args_os()))
}
