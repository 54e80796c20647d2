fn main() {
    eprintln!("freecone CLI: not yet wired");
    std::process::exit(2);
}
