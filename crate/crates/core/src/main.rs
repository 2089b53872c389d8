fn main() {
    std::process::exit(moreaugrad::cli::main());
}
