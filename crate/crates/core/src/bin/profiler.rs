fn main() {
    std::process::exit(spreader_profiler::cli::run(std::env::args_os()));
}
