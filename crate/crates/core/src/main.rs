fn main() {
    std::process::exit(cmsurrogate::cli::run(std::env::args_os()));
}
