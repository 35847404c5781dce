fn main() {
    // LAPACK routines come from the system OpenBLAS
    println!("cargo:rustc-link-lib=openblas");
}
