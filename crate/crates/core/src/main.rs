fn main() {
    std::process::exit(tripspan::cli::run());
}
