fn main() {
    std::process::exit(polymer_lab::run(std::env::args_os()));
}
