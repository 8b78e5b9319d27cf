fn main() {
    // Die quietly on a closed pipe (`mdsum ... | head`) like other CLI tools
    // instead of panicking; Rust masks SIGPIPE by default.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(mdsum_cli::run(std::env::args_os()));
}
