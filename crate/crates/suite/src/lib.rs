//! Holds the `acceptance` test target; run it last with `cargo test -p txcache-suite`.
