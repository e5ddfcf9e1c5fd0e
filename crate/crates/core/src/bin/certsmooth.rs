fn main() {
    std::process::exit(certsmooth::cli::main());
}
