fn main() {
    std::process::exit(recipekg::cli::run(std::env::args_os()));
}
