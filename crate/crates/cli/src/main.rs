fn main() {
    let args = std::env::args_os().map(|a| a.to_string_lossy().into_owned());
    std::process::exit(facetrank_cli::run(args));
}
