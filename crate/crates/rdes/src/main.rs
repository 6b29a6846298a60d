fn main() {
    std::process::exit(rdes::run());
}
