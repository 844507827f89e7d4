fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(deep_prior_lab::run(&args));
}
