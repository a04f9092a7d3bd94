fn main() {
    cvvnet_train::tune_allocator();
    std::process::exit(cvvnet_cli::run(std::env::args_os()));
}
