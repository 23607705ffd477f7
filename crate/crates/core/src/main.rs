fn main() {
    std::process::exit(joint_nlme::cli::run(std::env::args_os()));
}
