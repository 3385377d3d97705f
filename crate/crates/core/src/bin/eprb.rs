fn main() {
    std::process::exit(eprb_lab::cli::main());
}
