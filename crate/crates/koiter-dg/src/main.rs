fn main() {
    std::process::exit(koiter_dg::experiments::cli_main());
}
