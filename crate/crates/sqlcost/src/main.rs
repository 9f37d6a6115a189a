fn main() {
    // die quietly when stdout is a closed pipe (e.g. `... | head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(sqlcost::cli::run());
}
