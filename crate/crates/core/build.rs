fn main() {
    println!("cargo:rerun-if-changed=suites");
    println!("cargo:rerun-if-changed=fixtures");
}
