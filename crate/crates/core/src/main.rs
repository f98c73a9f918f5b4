fn main() {
    std::process::exit(sbm_twosample::cli::run(std::env::args_os()));
}
