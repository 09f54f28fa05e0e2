fn main() {
    std::process::exit(cdfilter::cli::main());
}
