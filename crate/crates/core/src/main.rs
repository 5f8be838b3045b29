fn main() {
    std::process::exit(prompt_adherence::cli::main());
}
