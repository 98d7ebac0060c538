fn main() {
    std::process::exit(dynvertex::cli::dispatch(std::env::args_os()));
}
