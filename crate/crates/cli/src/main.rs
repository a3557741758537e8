fn main() {
    std::process::exit(sprite_decomp_cli::run(std::env::args_os()));
}
