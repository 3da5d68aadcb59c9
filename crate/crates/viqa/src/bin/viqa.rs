fn main() {
    eprintln!("viqa: not yet wired up");
    std::process::exit(2);
}
