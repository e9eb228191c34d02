fn main() {
    std::process::exit(profile_gpr::cli::run_from_args());
}
